"""Periodic unit-cell triangulations with a circular inclusion.

The cell Q = [0,1)^2 is meshed by nested closed layers around the disk
centre: concentric rings inside the disk (the last ring is the interface
polygon) and star-shaped layers that interpolate between the circle and
the square outside it.  Consecutive layers are stitched by a zipper
triangulation.  For a centred disk only one quarter of the cell is
triangulated and the rest is produced by exact 90 degree rotations, so
the mesh (and every matrix built on it) is invariant under the rotation
group of the square.

Periodicity is handled by a vertex -> dof map: vertices on x = 1 or
y = 1 are copies of the matching vertices on x = 0 / y = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import GeometryError, MeshError

SOFT = 0
STIFF = 1
TAG_NAMES = {SOFT: "soft", STIFF: "stiff"}

_KEY_SCALE = 10**10


def normalize_model(model) -> str:
    text = str(model).strip().upper().replace("MODEL", "").replace("_", "").strip()
    if text in ("I", "1"):
        return "I"
    if text in ("II", "2"):
        return "II"
    raise GeometryError(f"unknown model {model!r}")


@dataclass(frozen=True)
class CellGeometry:
    """Disk inclusion in the unit torus.

    Model I: the disk is the soft phase.  Model II: the disk is stiff.
    """

    model: str
    center: tuple = (0.5, 0.5)
    radius: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "model", normalize_model(self.model))
        cx, cy = (float(v) for v in self.center)
        object.__setattr__(self, "center", (cx, cy))
        r = float(self.radius)
        object.__setattr__(self, "radius", r)
        if not r > 0:
            raise GeometryError("radius must be positive")
        for c in (cx, cy):
            if not (0.0 < c - r and c + r < 1.0):
                raise GeometryError("inclusion exits cell")

    @property
    def disk_tag(self) -> int:
        return SOFT if self.model == "I" else STIFF

    @property
    def outer_tag(self) -> int:
        return STIFF if self.model == "I" else SOFT

    @property
    def margin(self) -> float:
        cx, cy = self.center
        r = self.radius
        return min(cx - r, 1 - cx - r, cy - r, 1 - cy - r)

    @property
    def centred(self) -> bool:
        return self.center == (0.5, 0.5)


@dataclass(frozen=True)
class CellMesh:
    geometry: CellGeometry
    vertices: np.ndarray        # (N, 2) coordinates, ghosts included
    triangles: np.ndarray       # (M, 3) vertex indices, counter-clockwise
    region_tag: np.ndarray      # (M,) SOFT or STIFF
    gamma: np.ndarray           # interface loop as vertex indices, counter-clockwise
    dof: np.ndarray             # (N,) vertex -> periodic dof
    n_dofs: int
    h: float
    normals: np.ndarray = field(repr=False)  # unit normals at gamma vertices, out of the soft phase

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def gamma_dofs(self) -> np.ndarray:
        return self.dof[self.gamma]

    @property
    def torus_map(self) -> np.ndarray:
        """Vertex -> representative vertex (the first vertex carrying the same dof)."""
        rep = np.full(self.n_dofs, -1, dtype=np.int64)
        for v in range(self.n_vertices - 1, -1, -1):
            rep[self.dof[v]] = v
        return rep[self.dof]

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def region_area(self, tag: int) -> float:
        return float(self.triangle_areas()[self.region_tag == tag].sum())

    @property
    def gamma_length(self) -> float:
        p = self.vertices[self.gamma]
        return float(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1).sum())

    def to_text(self) -> str:
        lines = [f"vertices {self.n_vertices}", f"triangles {self.n_triangles}"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines += [f"{i} {j} {k} {TAG_NAMES[int(t)]}"
                  for (i, j, k), t in zip(self.triangles, self.region_tag)]
        return "\n".join(lines) + "\n"


def mesh_from_text(text: str, geometry: CellGeometry) -> CellMesh:
    """Inverse of CellMesh.to_text; the interface loop is recovered from the tags."""
    rows = [r for r in text.splitlines() if r.strip()]
    try:
        nv = int(rows[0].split()[1])
        nt = int(rows[1].split()[1])
        verts = np.array([[float(s) for s in r.split()] for r in rows[2:2 + nv]])
        tris, tags = [], []
        names = {v: k for k, v in TAG_NAMES.items()}
        for r in rows[2 + nv:2 + nv + nt]:
            i, j, k, t = r.split()
            tris.append((int(i), int(j), int(k)))
            tags.append(names[t])
    except (IndexError, ValueError, KeyError) as exc:
        raise MeshError(f"malformed mesh text: {exc}") from exc
    tris = np.array(tris, dtype=np.int64)
    tags = np.array(tags, dtype=np.int8)
    gamma = _interface_loop(tris, tags, verts, geometry)
    return _finish(geometry, verts, tris, tags, gamma)


# ---------------------------------------------------------------------------
# construction

def build_cell(geometry: CellGeometry, h_target: float) -> CellMesh:
    """Mesh the torus cell with maximum edge length at most ``h_target``."""
    r = geometry.radius
    if not (0 < h_target <= r / 4 + 1e-15):
        raise GeometryError(f"h_target must lie in (0, radius/4], got {h_target}")
    if geometry.margin < h_target:
        raise GeometryError("inclusion touches the cell boundary within one mesh layer")
    spacing = 0.72 * h_target
    for _ in range(15):
        mesh = _layered_mesh(geometry, spacing)
        if mesh.h <= h_target:
            return mesh
        spacing *= 0.92
    raise MeshError(f"could not reach h <= {h_target}")


def _rot90(v: np.ndarray, k: int) -> np.ndarray:
    out = v.copy()
    for _ in range(k % 4):
        out = np.stack([-out[:, 1], out[:, 0]], axis=1)
    return out


class _Layer:
    def __init__(self, sectors):
        self.sectors = sectors  # list of (n_k, 2) arrays, relative to centre
        self.counts = [len(s) for s in sectors]
        self.offsets = np.concatenate([[0], np.cumsum(self.counts)])[:-1]
        self.total = int(sum(self.counts))
        self.base = 0

    def segment(self, k):
        """Global indices of sector k, including the first point of sector k+1."""
        start = self.offsets[k]
        local = (start + np.arange(self.counts[k] + 1)) % self.total
        return self.base + local


def _layered_mesh(geo: CellGeometry, a: float) -> CellMesh:
    c = np.array(geo.center)
    r = geo.radius
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    rel = corners - c
    th = [math.atan2(v[1], v[0]) for v in rel]
    for k in range(1, 4):
        while th[k] <= th[k - 1]:
            th[k] += 2 * math.pi
    th.append(th[0] + 2 * math.pi)
    sym = geo.centred
    nsec = 1 if sym else 4

    def boundary_distance(theta):
        cs, sn = np.cos(theta), np.sin(theta)
        d = np.full(np.shape(theta), np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            for comp, lo, hi in ((cs, -c[0], 1 - c[0]), (sn, -c[1], 1 - c[1])):
                cand = np.where(comp > 0, hi / comp, np.where(comp < 0, lo / comp, np.inf))
                d = np.minimum(d, cand)
        return d

    def side_angle(k, u):
        v0 = rel[k]
        p = rel[k] + np.outer(u, rel[(k + 1) % 4] - rel[k])
        cross = v0[0] * p[:, 1] - v0[1] * p[:, 0]
        dot = v0[0] * p[:, 0] + v0[1] * p[:, 1]
        return th[k] + np.arctan2(cross, dot)

    def ring(rho, k):
        dth = th[k + 1] - th[k]
        n = max(1, math.ceil(rho * dth / a))
        ang = th[k] + dth * np.arange(n) / n
        return rho * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def outer(t, k):
        dth = th[k + 1] - th[k]

        def pts(u):
            ang = (1 - t) * (th[k] + dth * u) + t * side_angle(k, u)
            rho = r + t * (boundary_distance(ang) - r)
            return rho[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)

        fine = pts(np.linspace(0, 1, 257))
        length = np.linalg.norm(np.diff(fine, axis=0), axis=1).sum()
        n = max(1, math.ceil(length / a))
        return pts(np.arange(n) / n)

    def side(k):
        n = math.ceil(1.0 / a)
        u = np.arange(n) / n
        return rel[k] + np.outer(u, rel[(k + 1) % 4] - rel[k])

    def make_layer(fn):
        secs = [fn(k) for k in range(nsec)]
        if sym:
            secs = [_rot90(secs[0], k) for k in range(4)]
        return _Layer(secs)

    k_in = max(2, math.ceil(r / a))
    layers = [make_layer(lambda k, rho=r * l / k_in: ring(rho, k)) for l in range(1, k_in + 1)]
    gamma_layer = len(layers) - 1
    far = max(np.linalg.norm(v) for v in rel) - r
    n_out = max(1, math.ceil(far / a))
    for l in range(1, n_out):
        layers.append(make_layer(lambda k, t=l / n_out: outer(t, k)))
    layers.append(make_layer(side))

    rel_pts = [np.zeros((1, 2))]
    base = 1
    for lay in layers:
        lay.base = base
        base += lay.total
        rel_pts.extend(lay.sectors)
    rel_all = np.concatenate(rel_pts)
    verts = rel_all + c
    # snap the Γ ring exactly and the square sides exactly
    g = layers[gamma_layer]
    outer_layer = layers[-1]
    verts[outer_layer.base:outer_layer.base + outer_layer.total] = np.concatenate(
        [corners[k] + np.outer(np.arange(len(s)) / len(s), corners[(k + 1) % 4] - corners[k])
         for k, s in enumerate(outer_layer.sectors)])

    tris, tags = [], []
    disk, matrix = geo.disk_tag, geo.outer_tag
    first = layers[0]
    for k in range(4):
        seg = first.segment(k)
        for j in range(len(seg) - 1):
            tris.append((0, seg[j], seg[j + 1]))
            tags.append(disk)
    for li in range(len(layers) - 1):
        A, B = layers[li], layers[li + 1]
        tag = disk if li < gamma_layer else matrix
        moves0 = None
        for k in range(4):
            sa, sb = A.segment(k), B.segment(k)
            if sym and moves0 is not None:
                moves = moves0
            else:
                moves = _zipper_moves(rel_all[sa], rel_all[sb])
                if k == 0:
                    moves0 = moves
            i = j = 0
            for mv in moves:
                if mv:
                    tris.append((sa[i], sb[j], sb[j + 1]))
                    j += 1
                else:
                    tris.append((sa[i], sb[j], sa[i + 1]))
                    i += 1
                tags.append(tag)
    tris = np.array(tris, dtype=np.int64)
    tags = np.array(tags, dtype=np.int8)
    gamma = g.base + np.arange(g.total)
    return _finish(geo, verts, tris, tags, gamma)


def _zipper_moves(pa: np.ndarray, pb: np.ndarray) -> list:
    """Stitch two angle-ordered polylines; True = advance on the outer one."""
    na, nb = len(pa) - 1, len(pb) - 1
    i = j = 0
    moves = []
    scale = max(np.ptp(pb[:, 0]), np.ptp(pb[:, 1]), 1e-300)
    while i < na or j < nb:
        if i == na:
            adv_b = True
        elif j == nb:
            adv_b = False
        else:
            d_b = np.linalg.norm(pa[i] - pb[j + 1])
            d_a = np.linalg.norm(pa[i + 1] - pb[j])
            adv_b = d_b < d_a - 1e-12 * scale
        moves.append(adv_b)
        if adv_b:
            j += 1
        else:
            i += 1
    return moves


def _periodic_dofs(verts: np.ndarray):
    keys = np.mod(np.rint(verts * _KEY_SCALE).astype(np.int64), _KEY_SCALE)
    dof = np.empty(len(verts), dtype=np.int64)
    seen = {}
    for v, (kx, ky) in enumerate(keys):
        key = (int(kx), int(ky))
        if key not in seen:
            seen[key] = len(seen)
        dof[v] = seen[key]
    return dof, len(seen)


def _finish(geo, verts, tris, tags, gamma) -> CellMesh:
    dof, n_dofs = _periodic_dofs(verts)
    p = verts[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(area <= 0):
        raise MeshError(f"{int(np.sum(area <= 0))} inverted or degenerate triangles")
    if abs(area.sum() - 1.0) > 1e-10:
        raise MeshError(f"cell area {area.sum()!r} differs from 1")
    e = np.sort(dof[np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])], axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts != 2):
        raise MeshError("periodic triangulation is not a closed manifold")
    edges = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
    h = float(np.linalg.norm(edges, axis=1).max())
    c = np.array(geo.center)
    radial = (verts[gamma] - c) / np.linalg.norm(verts[gamma] - c, axis=1)[:, None]
    normals = radial if geo.model == "I" else -radial
    for arr in (verts, tris, tags, gamma, dof, normals):
        arr.flags.writeable = False
    return CellMesh(geo, verts, tris, tags, gamma, dof, n_dofs, h, normals)


def _interface_loop(tris, tags, verts, geo):
    owner = {}
    for t, tri in enumerate(tris):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            owner.setdefault(key, []).append(t)
    nxt = {}
    for (u, v), ts in owner.items():
        if len(ts) == 2 and tags[ts[0]] != tags[ts[1]]:
            # orient the edge counter-clockwise as seen from the disk side
            t_disk = ts[0] if tags[ts[0]] == geo.disk_tag else ts[1]
            tri = list(tris[t_disk])
            iu = tri.index(u)
            if tri[(iu + 1) % 3] == v:
                nxt[u] = v
            else:
                nxt[v] = u
    if not nxt:
        raise MeshError("no interface edges found")
    start = min(nxt)
    loop = [start]
    while True:
        n = nxt.get(loop[-1])
        if n is None:
            raise MeshError("interface is not a closed loop")
        if n == start:
            break
        loop.append(n)
        if len(loop) > len(nxt):
            raise MeshError("interface is not a single loop")
    if len(loop) != len(nxt):
        raise MeshError("interface is not a single loop")
    return np.array(loop, dtype=np.int64)


def refine(mesh: CellMesh) -> CellMesh:
    """Split every triangle into four; new interface vertices go onto the circle."""
    tris = mesh.triangles
    nv = mesh.n_vertices
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    keys = np.sort(e, axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(3, -1)
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    g = mesh.gamma
    gkeys = np.sort(np.stack([g, np.roll(g, -1)], axis=1), axis=1)
    lookup = {(int(u), int(v)): i for i, (u, v) in enumerate(uniq)}
    gmid = np.array([lookup[(int(u), int(v))] for u, v in gkeys])
    c = np.array(mesh.geometry.center)
    d = mids[gmid] - c
    mids[gmid] = c + mesh.geometry.radius * d / np.linalg.norm(d, axis=1)[:, None]
    verts = np.concatenate([mesh.vertices, mids])
    m01, m12, m20 = nv + inv[0], nv + inv[1], nv + inv[2]
    a, b, cc = tris[:, 0], tris[:, 1], tris[:, 2]
    new = np.concatenate([
        np.stack([a, m01, m20], axis=1),
        np.stack([m01, b, m12], axis=1),
        np.stack([m20, m12, cc], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    tags = np.tile(mesh.region_tag, 4)
    gamma = np.stack([g, nv + gmid], axis=1).ravel()
    return _finish(mesh.geometry, verts, new, tags.astype(np.int8), gamma)
