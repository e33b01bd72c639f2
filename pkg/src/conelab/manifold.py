"""Finite metric measure graphs standing in for model manifolds.

A :class:`DiscreteManifold` carries a vertex measure, symmetric edge
conductances (which drive the operators) and symmetric edge lengths (which
drive the path metric).  Balls are closed: ``B(x, r) = {y : d(x, y) <= r}``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .errors import InvalidManifoldError
from .reports import FitReport

# relative slack used for every "d(x, y) <= r" comparison
RADIUS_RTOL = 1e-12


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteManifold:
    """Connected weighted graph with vertex measure and path metric.

    Edges are stored once, oriented from the lower to the higher index.
    """

    mu: np.ndarray
    edges: np.ndarray
    edge_w: np.ndarray
    edge_len: np.ndarray
    dist: np.ndarray
    name: str = ""

    @classmethod
    def from_edges(cls, n, edges, w=1.0, length=1.0, mu=1.0, name=""):
        n = int(n)
        if n < 1:
            raise InvalidManifoldError("a manifold needs at least one vertex")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        m = len(edges)
        w = np.broadcast_to(np.asarray(w, dtype=float), (m,)).copy()
        length = np.broadcast_to(np.asarray(length, dtype=float), (m,)).copy()
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (n,)).copy()

        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise InvalidManifoldError("vertex measure must be positive and finite")
        if m:
            if edges.min() < 0 or edges.max() >= n:
                raise InvalidManifoldError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise InvalidManifoldError("self loops are not allowed")
            if np.any(~np.isfinite(length)) or np.any(length <= 0):
                raise InvalidManifoldError("edge lengths must be positive")
            if np.any(~np.isfinite(w)) or np.any(w < 0):
                raise InvalidManifoldError("conductances must be nonnegative")
        edges = np.sort(edges, axis=1)
        if m and len(np.unique(edges, axis=0)) != m:
            raise InvalidManifoldError("duplicate edge")
        order = np.lexsort((edges[:, 1], edges[:, 0])) if m else np.arange(0)
        edges, w, length = edges[order], w[order], length[order]

        if m:
            g = sp.coo_matrix((length, (edges[:, 0], edges[:, 1])), shape=(n, n)).tocsr()
            dist = shortest_path(g, method="D", directed=False)
        else:
            dist = np.zeros((n, n))
            if n > 1:
                dist[~np.eye(n, dtype=bool)] = np.inf
        if not np.all(np.isfinite(dist)):
            raise InvalidManifoldError("graph is disconnected")
        dist = 0.5 * (dist + dist.T)
        return cls(
            mu=_readonly(mu),
            edges=_readonly(edges),
            edge_w=_readonly(w),
            edge_len=_readonly(length),
            dist=_readonly(dist),
            name=name,
        )

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def total_measure(self) -> float:
        return float(self.mu.sum())

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    @cached_property
    def cond(self) -> sp.csr_matrix:
        """Symmetric conductance matrix ``w(x, y)``."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        vals = np.concatenate([self.edge_w, self.edge_w])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Exterior derivative on vertex fields, ``(df)_e = f(v) - f(u)`` for ``e = (u, v)``."""
        m = self.n_edges
        rows = np.repeat(np.arange(m), 2)
        cols = self.edges.ravel()
        vals = np.tile([-1.0, 1.0], m)
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n))

    @cached_property
    def edge_to_vertex(self) -> sp.csr_matrix:
        """``S[y, e] = w_e / (2 mu(y))`` for ``y`` an endpoint of ``e``.

        ``S @ (d f)**2`` is the squared gradient modulus at each vertex.
        """
        m = self.n_edges
        rows = self.edges.ravel()
        cols = np.repeat(np.arange(m), 2)
        vals = np.repeat(self.edge_w, 2) / (2.0 * self.mu[rows])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, m))

    @cached_property
    def levels(self) -> np.ndarray:
        """Sorted distinct values of the metric, including 0."""
        d = np.sort(self.dist.ravel())
        keep = np.concatenate([[True], np.diff(d) > RADIUS_RTOL * np.maximum(1.0, d[1:])])
        return _readonly(d[keep])

    def edge_index(self, u: int, v: int) -> int:
        """Row of the edge ``{u, v}`` in ``edges``."""
        a, b = min(u, v), max(u, v)
        i = int(np.searchsorted(self.edges[:, 0] * self.n + self.edges[:, 1], a * self.n + b))
        if i >= self.n_edges or tuple(self.edges[i]) != (a, b):
            raise KeyError(f"no edge between {u} and {v}")
        return i

    def within(self, r: float) -> np.ndarray:
        """Boolean matrix ``d(x, y) <= r``."""
        return self.dist <= r + RADIUS_RTOL * max(1.0, abs(r))

    def volumes(self, r: float) -> np.ndarray:
        """``Vol(x, r)`` for every center ``x``."""
        return self.within(r) @ self.mu

    def volume(self, x: int, r: float) -> float:
        row = self.dist[x] <= r + RADIUS_RTOL * max(1.0, abs(r))
        return float(self.mu[row].sum())

    def check_invariants(self) -> None:
        """Exhaustive metric and ball-symmetry check (quadratic/cubic in n)."""
        d = self.dist
        if not np.allclose(d, d.T, rtol=0, atol=1e-12):
            raise InvalidManifoldError("metric not symmetric")
        if np.any(np.abs(np.diag(d)) > 0):
            raise InvalidManifoldError("d(x, x) != 0")
        tol = 1e-9 * max(1.0, self.diameter)
        for k in range(self.n):
            if np.any(d > d[:, [k]] + d[[k], :] + tol):
                raise InvalidManifoldError("triangle inequality violated")
        for r in self.levels:
            b = self.within(r)
            if not np.array_equal(b, b.T):
                raise InvalidManifoldError("ball membership not symmetric")


@dataclass(frozen=True)
class BallSpec:
    center: int
    radius: float
    members: np.ndarray
    volume: float


@dataclass(frozen=True)
class Annulus:
    base: BallSpec
    j: int
    members: np.ndarray


def ball(M: DiscreteManifold, x: int, r: float) -> BallSpec:
    if r < 0:
        raise ValueError("radius must be nonnegative")
    members = np.flatnonzero(M.dist[x] <= r + RADIUS_RTOL * max(1.0, r))
    return BallSpec(int(x), float(r), members, float(M.mu[members].sum()))


def annulus(M: DiscreteManifold, B: BallSpec, j: int) -> Annulus:
    """``C_j = B(x, 2^{j+1} r) \\ B(x, 2^j r)`` for ``j >= 1`` and ``C_0 = B(x, 2r)``.

    Taking the doubled ball as ``C_0`` makes the annuli a partition of ``M``
    once ``2^{j+1} r`` exceeds the diameter.
    """
    if j < 0:
        raise ValueError("annulus index must be >= 0")
    if j == 0:
        return Annulus(B, 0, ball(M, B.center, 2.0 * B.radius).members)
    outer = ball(M, B.center, 2.0 ** (j + 1) * B.radius).members
    inner = ball(M, B.center, 2.0**j * B.radius).members
    return Annulus(B, j, np.setdiff1d(outer, inner))


# ---------------------------------------------------------------- model spaces


def _grid_edges(d: int, side: int):
    shape = (side,) * d
    idx = np.arange(side**d).reshape(shape)
    edges = []
    for axis in range(d):
        a = np.take(idx, np.arange(side - 1), axis=axis).ravel()
        b = np.take(idx, np.arange(1, side), axis=axis).ravel()
        edges.append(np.stack([a, b], axis=1))
    if not edges:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(edges)


def _tree_edges(depth: int):
    n = 2 ** (depth + 1) - 1
    child = np.arange(1, n)
    return np.stack([(child - 1) // 2, child], axis=1)


def build_model(kind: str, *, mu=1.0, w=1.0, length=1.0, **params) -> DiscreteManifold:
    """Construct a model manifold.

    ``grid(d, side)`` is the ``side**d`` lattice; ``dumbbell(d, side)`` is two such
    grids identified at their central vertices; ``binary_tree(depth)`` has
    ``2**(depth+1) - 1`` vertices; ``from_file(path)`` reads the JSON format of
    :func:`load_manifold`.
    """
    if kind == "from_file":
        return load_manifold(params["path"])
    if kind == "grid":
        d, side = int(params["d"]), int(params["side"])
        if d < 1 or side < 1:
            raise InvalidManifoldError("grid needs d >= 1 and side >= 1")
        return DiscreteManifold.from_edges(
            side**d, _grid_edges(d, side), w=w, length=length, mu=mu, name=f"grid({d},{side})"
        )
    if kind == "dumbbell":
        d, side = int(params["d"]), int(params["side"])
        if d < 1 or side < 1:
            raise InvalidManifoldError("dumbbell needs d >= 1 and side >= 1")
        k = side**d
        e = _grid_edges(d, side)
        center = int(np.ravel_multi_index((side // 2,) * d, (side,) * d))
        # second copy: relabel so its center becomes the first copy's center
        relabel = np.empty(k, dtype=np.int64)
        others = [i for i in range(k) if i != center]
        relabel[others] = np.arange(k, 2 * k - 1)
        relabel[center] = center
        edges = np.concatenate([e, relabel[e]])
        return DiscreteManifold.from_edges(
            2 * k - 1, edges, w=w, length=length, mu=mu, name=f"dumbbell({d},{side})"
        )
    if kind == "binary_tree":
        depth = int(params["depth"])
        if depth < 0:
            raise InvalidManifoldError("depth must be >= 0")
        return DiscreteManifold.from_edges(
            2 ** (depth + 1) - 1, _tree_edges(depth), w=w, length=length, mu=mu,
            name=f"binary_tree({depth})",
        )
    raise InvalidManifoldError(f"unknown model kind {kind!r}")


def dumbbell_glue_vertex(d: int, side: int) -> int:
    return int(np.ravel_multi_index((side // 2,) * d, (side,) * d))


# ------------------------------------------------------------------ file format


def manifold_to_dict(M: DiscreteManifold, vplus=None, vminus=None) -> dict:
    out = {
        "vertices": [{"id": i, "mu": float(m)} for i, m in enumerate(M.mu)],
        "edges": [
            {"u": int(u), "v": int(v), "w": float(w), "len": float(l)}
            for (u, v), w, l in zip(M.edges, M.edge_w, M.edge_len)
        ],
    }
    if vplus is not None or vminus is not None:
        zero = [0.0] * M.n
        out["potential"] = {
            "vplus": [float(x) for x in (vplus if vplus is not None else zero)],
            "vminus": [float(x) for x in (vminus if vminus is not None else zero)],
        }
    return out


def save_manifold(M: DiscreteManifold, path, vplus=None, vminus=None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifold_to_dict(M, vplus, vminus), indent=1))
    return path


def _parse(doc: dict) -> tuple[DiscreteManifold, dict | None]:
    try:
        verts = doc["vertices"]
        edges = doc.get("edges", [])
    except (KeyError, TypeError) as exc:
        raise InvalidManifoldError("manifold file needs 'vertices' and 'edges'") from exc
    n = len(verts)
    ids = [int(v["id"]) for v in verts]
    if sorted(ids) != list(range(n)):
        raise InvalidManifoldError("vertex ids must be dense 0-based integers")
    mu = np.empty(n)
    for v in verts:
        mu[int(v["id"])] = float(v.get("mu", 1.0))
    e = np.array([[int(x["u"]), int(x["v"])] for x in edges], dtype=np.int64).reshape(-1, 2)
    w = np.array([float(x.get("w", 1.0)) for x in edges])
    ln = np.array([float(x.get("len", 1.0)) for x in edges])
    M = DiscreteManifold.from_edges(n, e, w=w, length=ln, mu=mu, name=doc.get("name", "file"))
    return M, doc.get("potential")


def load_manifold(path) -> DiscreteManifold:
    """Read the JSON manifold format ``{vertices: [{id, mu}], edges: [{u, v, w, len}]}``."""
    doc = json.loads(Path(path).read_text())
    return _parse(doc)[0]


def load_manifold_with_potential(path):
    doc = json.loads(Path(path).read_text())
    return _parse(doc)


# --------------------------------------------------------------------- doubling


def doubling_fit(
    M: DiscreteManifold,
    r_min: float,
    r_max: float,
    h: float | None = None,
    radius_offset: float | None = None,
) -> FitReport:
    """Window-local volume growth exponent and doubling diagnostics.

    ``N`` is the ordinary least squares slope of ``log Vol(x, r)`` against
    ``log(r + o)`` pooled over all centers and all metric levels ``r`` in
    ``[r_min, r_max]``.  The offset ``o`` defaults to half the smallest edge
    length: a closed lattice ball of radius ``r`` fills the cells out to
    ``r + h/2``, and without the offset the ``2r^2 + 2r + 1`` ball counts of
    ``Z^2`` bias the slope well below 2 at small radii.

    ``C`` is the smallest constant making ``Vol(x, s) <= C ((s+o)/(r+o))^N Vol(x, r)``
    hold for every center and every pair ``r < s`` of window radii.
    """
    if M.n == 1:
        return FitReport(
            "doubling", {"N": 0.0, "C": 1.0, "doubling_ratio": 1.0, "increment": 0.0},
            0.0, [], [], {"radii": []},
        )
    if not (0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    lv = M.levels
    radii = lv[(lv >= r_min * (1 - RADIUS_RTOL)) & (lv <= r_max * (1 + RADIUS_RTOL))]
    if len(radii) < 2:
        raise ValueError("degenerate window: fewer than 2 distinct radii")
    flags = []
    if len(radii) < 3:
        flags.append("short window")

    if h is None:
        h = float(M.edge_len.min()) if M.n_edges else 1.0
    if radius_offset is None:
        radius_offset = 0.5 * h
    reff = radii + radius_offset

    vols = np.stack([M.volumes(r) for r in radii], axis=1)  # (n, R)
    logr = np.broadcast_to(np.log(reff), vols.shape).ravel()
    logv = np.log(vols).ravel()
    N, a = np.polyfit(logr, logv, 1)
    resid = logv - (a + N * logr)

    # smallest C with Vol(x, s) <= C (s/r)^N Vol(x, r) over window pairs
    C = 1.0
    for i, j in itertools.combinations(range(len(radii)), 2):
        ratio = vols[:, j] / vols[:, i] / (reff[j] / reff[i]) ** N
        C = max(C, float(ratio.max()))

    table = []
    dratios = []
    for k, r in enumerate(radii):
        v2 = M.volumes(2 * r)
        dr = float((v2 / vols[:, k]).max())
        dratios.append(dr)
        table.append({"r": float(r), "mean_log_vol": float(np.log(vols[:, k]).mean()),
                      "doubling_ratio": dr})
    dratios = np.array(dratios)
    if dratios.max() > 2 * dratios.min():
        flags.append("doubling suspect")

    incr = 0.0
    for k, r in enumerate(radii):
        vh = M.volumes(r + h)
        incr = max(incr, float((r * (vh - vols[:, k]) / (h * vols[:, k])).max()))

    return FitReport(
        name="doubling",
        constants={
            "N": float(N),
            "C": C,
            "doubling_ratio": float(dratios.max()),
            "increment": incr,
        },
        max_violation=0.0,
        table=table,
        flags=flags,
        notes={"radii": radii.tolist(), "radius_offset": radius_offset, "rms_residual": float(np.sqrt(np.mean(resid**2)))},
    )
