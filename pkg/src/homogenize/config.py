"""Experiment configuration: JSON in, validated dataclass out."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import json
import math

from .errors import ConfigError

TASKS = ("steklov", "dispersion", "bands", "convergence", "identities")


@dataclass(frozen=True)
class GeometryConfig:
    model: str = "I"
    center: tuple = (0.5, 0.5)
    radius: float = 0.25


@dataclass(frozen=True)
class MeshConfig:
    h: float = 0.02
    refinements: int = 1      # meshes used by the floor gate beyond the base mesh


@dataclass(frozen=True)
class SweepConfig:
    eps: tuple = (0.4, 0.2, 0.1, 0.05)
    tau_grid: int = 5
    z: tuple = ((1.0, 1.0),)  # (Re, Im) pairs
    window: tuple = (0.0, 150.0)
    variant: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    J: int = 80
    tasks: tuple = TASKS
    output: str = "out"
    seed: int = 0
    threads: int = 1

    @property
    def zs(self):
        return tuple(complex(a, b) for a, b in self.sweep.z)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


def _num(raw, path, lo=-math.inf, hi=math.inf, integer=False, open_lo=False, open_hi=False):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(path, "expected a number")
    if integer and int(raw) != raw:
        raise ConfigError(path, "expected an integer")
    x = int(raw) if integer else float(raw)
    if not math.isfinite(x):
        raise ConfigError(path, "must be finite")
    bad_lo = x <= lo if open_lo else x < lo
    bad_hi = x >= hi if open_hi else x > hi
    if bad_lo or bad_hi:
        lb = "(" if open_lo else "["
        rb = ")" if open_hi else "]"
        raise ConfigError(path, f"{x} outside {lb}{lo}, {hi}{rb}")
    return x


def _pick(raw: dict, path: str, allowed):
    if not isinstance(raw, dict):
        raise ConfigError(path or "<root>", "expected an object")
    extra = sorted(set(raw) - set(allowed))
    if extra:
        raise ConfigError(f"{path}{'.' if path else ''}{extra[0]}", "unknown key")
    return raw


def _z_list(raw, path):
    if not isinstance(raw, list) or not raw:
        raise ConfigError(path, "expected a non-empty list")
    out = []
    for i, item in enumerate(raw):
        p = f"{path}[{i}]"
        if isinstance(item, (int, float)) and not isinstance(item, bool):
            out.append((_num(item, p), 0.0))
        elif isinstance(item, list) and len(item) == 2:
            out.append((_num(item[0], p + "[0]"), _num(item[1], p + "[1]")))
        elif isinstance(item, dict) and set(item) <= {"re", "im"}:
            out.append((_num(item.get("re", 0.0), p + ".re"), _num(item.get("im", 0.0), p + ".im")))
        else:
            raise ConfigError(p, "expected a number, [re, im] or {re, im}")
    return tuple(out)


def validate_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config, filling defaults.

    Geometry keys may sit at the top level (``{"model": "II", "radius": 0.25}``)
    or under ``geometry``.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"malformed JSON: {exc.msg}") from exc
    top = ("geometry", "mesh", "sweep", "J", "tasks", "output", "seed", "threads",
           "model", "center", "radius")
    _pick(raw, "", top)

    g = dict(raw.get("geometry", {}))
    _pick(g, "geometry", ("model", "center", "radius"))
    for k in ("model", "center", "radius"):
        if k in raw:
            if k in g:
                raise ConfigError(k, "given both at top level and under geometry")
            g[k] = raw[k]
    model = str(g.get("model", "I")).upper()
    if model not in ("I", "II"):
        raise ConfigError("geometry.model", "must be 'I' or 'II'")
    center = g.get("center", [0.5, 0.5])
    if not isinstance(center, list) or len(center) != 2:
        raise ConfigError("geometry.center", "expected [x, y]")
    center = tuple(_num(c, f"geometry.center[{i}]", 0.0, 1.0) for i, c in enumerate(center))
    radius = _num(g.get("radius", 0.25), "geometry.radius", 0.0, math.inf, open_lo=True)
    margin = min(center[0], center[1], 1 - center[0], 1 - center[1]) - radius
    if margin <= 0:
        raise ConfigError("geometry.radius", "inclusion exits cell")
    geometry = GeometryConfig(model, center, radius)

    m = _pick(raw.get("mesh", {}), "mesh", ("h", "refinements"))
    h = _num(m.get("h", 0.02), "mesh.h", 0.0, radius / 4, open_lo=True)
    if h >= margin:
        raise ConfigError("mesh.h", "mesh size exceeds the inclusion margin")
    refinements = _num(m.get("refinements", 1), "mesh.refinements", 0, 3, integer=True)
    mesh = MeshConfig(h, refinements)

    s = _pick(raw.get("sweep", {}), "sweep", ("eps", "tau_grid", "z", "window", "variant"))
    eps = s.get("eps", [0.4, 0.2, 0.1, 0.05])
    if not isinstance(eps, list) or not eps:
        raise ConfigError("sweep.eps", "expected a non-empty list")
    eps = tuple(_num(e, f"sweep.eps[{i}]", 0.0, 1.0, open_lo=True, open_hi=True)
                for i, e in enumerate(eps))
    if len(set(eps)) != len(eps):
        raise ConfigError("sweep.eps", "duplicate ε")
    n_tau = _num(s.get("tau_grid", 5), "sweep.tau_grid", 1, 65, integer=True)
    zs = _z_list(s.get("z", [[1.0, 1.0]]), "sweep.z")
    window = s.get("window", [0.0, 150.0])
    if not isinstance(window, list) or len(window) != 2:
        raise ConfigError("sweep.window", "expected [lower, upper]")
    window = (_num(window[0], "sweep.window[0]", 0.0), _num(window[1], "sweep.window[1]", 0.0))
    if window[1] <= window[0]:
        raise ConfigError("sweep.window", "upper must exceed lower")
    variant = s.get("variant")
    if variant not in (None, "asymptotic", "exact"):
        raise ConfigError("sweep.variant", "must be 'asymptotic' or 'exact'")
    sweep = SweepConfig(tuple(sorted(eps, reverse=True)), n_tau, zs, window, variant)

    J = _num(raw.get("J", 80), "J", 1, math.inf, integer=True)
    tasks = raw.get("tasks", list(TASKS))
    if not isinstance(tasks, list) or not tasks:
        raise ConfigError("tasks", "must be a non-empty list")
    for i, t in enumerate(tasks):
        if t not in TASKS:
            raise ConfigError(f"tasks[{i}]", f"unknown task {t!r}")
    tasks = tuple(t for t in TASKS if t in tasks)
    output = raw.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ConfigError("output", "expected a non-empty path")
    seed = _num(raw.get("seed", 0), "seed", 0, 2 ** 32 - 1, integer=True)
    threads = _num(raw.get("threads", 1), "threads", 1, 256, integer=True)
    return ExperimentConfig(geometry, mesh, sweep, J, tasks, output, seed, threads)
