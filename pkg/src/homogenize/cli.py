"""Batch front-end: ``homogenize run|check <config.json>``."""

from __future__ import annotations

import argparse
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import replace
import hashlib
import json
import logging
import os
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__
from .assembly import dirichlet_eigenpairs
from .config import TASKS, ExperimentConfig, validate_config
from .effective import Dispersion, bands_from_roots, limiting_spectrum, series_dispersion
from .errors import ConfigError, HomogenizeError
from .identities import identity_suite
from .mesh import CellGeometry, build_cell
from .problem import CellProblem, conjugate_classes, tau_grid
from .validation import CONVERGENCE_COLUMNS, convergence_study

log = logging.getLogger("homogenize")

IDENTITY_TAU_GRID = 3


def _setup_logging():
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("HOMOGENIZE_LOG", "quiet").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _fmt(x):
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Runner:
    def __init__(self, cfg: ExperimentConfig, out: Path, threads: int):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        g = cfg.geometry
        mesh = build_cell(CellGeometry(g.model, tuple(g.center), g.radius), cfg.mesh.h)
        self.problem = CellProblem(mesh)
        self.taus = tau_grid(cfg.sweep.tau_grid)
        self.files = []
        self.checks = {}
        self.results = {}

    @property
    def model(self):
        return self.cfg.geometry.model

    def _csv(self, name, header, rows):
        path = self.out / name
        _write_csv(path, header, rows)
        self.files.append(name)

    # tasks ---------------------------------------------------------------

    def steklov(self):
        data = _map(self.problem.steklov, self.taus, self.threads)
        rows = [(float(t[0]), float(t[1]), d.mu, d.gap) for t, d in zip(self.taus, data)]
        self._csv("steklov.csv", ("tau1", "tau2", "mu", "gap"), rows)
        res = {"mu_0": self.problem.steklov((0.0, 0.0)).mu}
        if self.model == "I":
            et = self.problem.tensor
            res["mu_star"] = et.mu_star.tolist()
            res["fit_residual"] = et.fit_residual
        self.results["steklov"] = res

    def dispersion(self):
        eps = min(self.cfg.sweep.eps)

        def one(t):
            hom = self.problem.hom(t, eps, self.cfg.sweep.variant)
            if self.model == "I":
                eig = dirichlet_eigenpairs(hom.soft, min(self.cfg.J, hom.soft.n_int),
                                           seed=self.cfg.seed)
                sd = series_dispersion(hom, eig)
                return [(sd(z), sd.tail_bound(z)) for z in self.cfg.zs]
            disp = Dispersion(hom)
            return [(disp(z), 0.0) for z in self.cfg.zs]

        vals = _map(one, self.taus, self.threads)
        rows = []
        for t, per_z in zip(self.taus, vals):
            for z, (K, tail) in zip(self.cfg.zs, per_z):
                rows.append((self.model, float(t[0]), float(t[1]), z.real, z.imag,
                             complex(K).real, complex(K).imag, float(tail)))
        self._csv("dispersion.csv", ("model", "tau1", "tau2", "re_z", "im_z", "re_K", "im_K",
                                     "tail_bound"), rows)
        self.results["dispersion"] = {"eps": eps}

    def bands(self):
        eps = min(self.cfg.sweep.eps)
        window = self.cfg.sweep.window
        # fibres at tau and -tau share their spectrum; solve one of each pair
        rep = conjugate_classes(self.taus)
        reps = [int(i) for i in np.unique(rep)]

        def one(i):
            hom = self.problem.hom(self.taus[i], eps, self.cfg.sweep.variant)
            return limiting_spectrum([hom], window, seed=self.cfg.seed).roots[0]

        solved = dict(zip(reps, _map(one, reps, self.threads)))
        bs = bands_from_roots(self.taus, [solved[int(r)] for r in rep], window)
        rows = []
        for k, lo, hi, tlo, thi in bs.bands:
            ext = f"{tlo[0]:.12g} {tlo[1]:.12g}|{thi[0]:.12g} {thi[1]:.12g}"
            rows.append((k, lo, hi, ext))
        self._csv("bands.csv", ("band_index", "lower", "upper", "extremal_tau"), rows)
        self.results["bands"] = {"eps": eps, "intervals": [list(iv) for iv in bs.intervals],
                                 "gaps": [list(g) for g in bs.gaps]}

    def convergence(self):
        fine = None if self.cfg.mesh.refinements >= 1 else False
        rep = convergence_study(self.problem, self.cfg.sweep.eps, self.taus, self.cfg.zs,
                                variant=self.cfg.sweep.variant, fine=fine, seed=self.cfg.seed)
        self._csv("convergence.csv", CONVERGENCE_COLUMNS, rep.rows())
        self.results["convergence"] = {
            "variant": rep.variant,
            "sup_slopes": rep.sup_slopes.tolist(),
            "sup_r2": rep.sup_r2.tolist(),
            "min_slope": float(rep.slopes.min()),
            "floor_ok": rep.floor_ok,
            "flags": list(rep.flags),
        }

    def identities(self):
        pts = [(t, e) for t in tau_grid(IDENTITY_TAU_GRID) for e in self.cfg.sweep.eps]

        def one(p):
            t, e = p
            return identity_suite(self.problem.fibre(t, e), seed=self.cfg.seed)

        checks = [c for batch in _map(one, pts, self.threads) for c in batch]
        rows = [(c.name, c.tau[0], c.tau[1], c.eps, c.z.real, c.z.imag, c.value, c.tol,
                 "pass" if c.passed else "fail") for c in checks]
        self._csv("identities.csv", ("check", "tau1", "tau2", "eps", "re_z", "im_z", "value",
                                     "tol", "status"), rows)
        failed = [f"{c.name} tau={c.tau} eps={c.eps} z={c.z}: {c.value:.3e}"
                  for c in checks if not c.passed]
        self.checks["identities"] = {"passed": len(checks) - len(failed), "failed": failed}


def run_experiment(cfg: ExperimentConfig, out=None, threads=None, tasks=None) -> dict:
    """Run the configured tasks in dependency order and write the manifest.

    Returns the manifest dict; ``manifest["exit_code"]`` follows the CLI
    contract (0 pass, 2 identity failures, 1 task errors).
    """
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    threads = threads or cfg.threads
    tasks = [t for t in cfg.tasks if tasks is None or t in tasks]
    timing, errors = {}, {}
    t0 = time.perf_counter()
    runner = Runner(cfg, out, threads)
    timing["mesh"] = time.perf_counter() - t0
    for name in tasks:
        log.info("task %s", name)
        t1 = time.perf_counter()
        try:
            getattr(runner, name)()
        except HomogenizeError as exc:
            log.error("task %s failed: %s", name, exc)
            errors[name] = f"{type(exc).__name__}: {exc}"
        timing[name] = time.perf_counter() - t1
    failed = any(c["failed"] for c in runner.checks.values())
    exit_code = 1 if errors else (2 if failed else 0)
    manifest = {
        "config": cfg.to_dict(),
        "version": __version__,
        "mesh": {"n_dofs": runner.problem.mesh.n_dofs, "h": runner.problem.mesh.h,
                 "n_gamma": len(runner.problem.mesh.gamma)},
        "tasks": tasks,
        "results": runner.results,
        "checks": runner.checks,
        "errors": errors,
        "files": [{"name": f, "sha256": _sha256(out / f)} for f in runner.files],
        "exit_code": exit_code,
    }
    manifest["fingerprint"] = hashlib.sha256(
        json.dumps(manifest, sort_keys=True).encode()).hexdigest()
    manifest["timing"] = timing
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def main(argv=None) -> int:
    _setup_logging()
    ap = argparse.ArgumentParser(prog="homogenize", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the configured tasks")
    run.add_argument("config")
    run.add_argument("--out")
    run.add_argument("--threads", type=int)
    run.add_argument("--tasks", help="comma-separated subset of tasks")
    chk = sub.add_parser("check", help="run only the identity suite")
    chk.add_argument("config")
    chk.add_argument("--out")
    args = ap.parse_args(argv)
    try:
        cfg = validate_config(Path(args.config).read_text())
        if args.command == "check":
            manifest = run_experiment(replace(cfg, tasks=("identities",)), args.out)
        else:
            tasks = None
            if args.tasks:
                tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
                unknown = sorted(set(tasks) - set(TASKS))
                if unknown or not tasks:
                    raise ConfigError("--tasks", f"unknown task {unknown[0]!r}" if unknown
                                      else "empty task list")
                cfg = replace(cfg, tasks=tuple(t for t in TASKS if t in tasks))
            if args.threads is not None and args.threads < 1:
                raise ConfigError("--threads", "must be at least 1")
            manifest = run_experiment(cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    for name, err in manifest["errors"].items():
        print(f"{name}: {err}", file=sys.stderr)
    for name, c in manifest["checks"].items():
        print(f"{name}: {c['passed']} passed, {len(c['failed'])} failed")
        for line in c["failed"]:
            print(f"  FAIL {line}")
    return manifest["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
