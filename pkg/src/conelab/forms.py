"""Edge fields, d and d*, the Hodge Laplacian d d*, form-valued cone functionals
and Riesz transforms.

Each undirected edge ``(u, v)`` with ``u < v`` is stored once; ``ω(u, v)`` is
the stored value and ``ω(v, u) = -ω(u, v)``.  The edge inner product is
``<ω, η> = Σ_e w(e) ω(e) η(e)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cones import Channel, Profile, SquareFunctional, _exp_rate, _lin_gain, _sqrt_gain, \
    _sqrt_rate
from .manifold import DiscreteManifold
from .reports import write_csv
from .spectral import SpectralOperator, _decompose, calculus, laplacian_apply


@dataclass(frozen=True)
class EdgeField:
    manifold: DiscreteManifold
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.manifold.n_edges,):
            raise ValueError("edge field needs one value per edge")
        if not np.all(np.isfinite(v)):
            raise ValueError("edge field values must be finite")
        object.__setattr__(self, "values", v)

    def at(self, x: int, y: int) -> float:
        """Value on the oriented edge ``x -> y``."""
        e = self.manifold.edge_index(min(x, y), max(x, y))
        return float(self.values[e] if x < y else -self.values[e])

    def norm(self) -> float:
        return edge_norm(self.manifold, self.values)

    def to_rows(self) -> list[dict]:
        E = self.manifold.edges
        return [{"u": int(u), "v": int(v), "value": float(w)} for (u, v), w in zip(E, self.values)]

    def to_csv(self, path):
        return write_csv(path, self.to_rows(), ["u", "v", "value"])


def edge_inner(M: DiscreteManifold, a, b) -> float:
    return float(np.sum(M.edge_w * np.asarray(a) * np.asarray(b)))


def edge_norm(M: DiscreteManifold, a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.sqrt(np.sum(M.edge_w * a * a)))


def d_op(M: DiscreteManifold, f) -> np.ndarray:
    """``(df)(u, v) = f(v) - f(u)`` on canonical orientations."""
    return M.incidence @ np.asarray(f, dtype=float)


def dstar_matrix(M: DiscreteManifold) -> sp.csr_matrix:
    """``d* = μ^{-1} dᵀ W``, the adjoint of ``d`` for the two inner products."""
    return (sp.diags(1.0 / M.mu) @ M.incidence.T @ sp.diags(M.edge_w)).tocsr()


def dstar_op(M: DiscreteManifold, omega) -> np.ndarray:
    """``(d*ω)(x) = -(1/μ(x)) Σ_y w(x,y) ω(x,y)``."""
    return dstar_matrix(M) @ np.asarray(omega, dtype=float)


def hodge_apply(M: DiscreteManifold, omega) -> np.ndarray:
    """``d d* ω`` by the direct sparse route."""
    return d_op(M, dstar_op(M, omega))


def hodge_assemble(M: DiscreteManifold) -> SpectralOperator:
    """Eigendecomposition of ``d d*`` on edge fields in the edge inner product."""
    if M.n_edges == 0:
        raise ValueError("manifold has no edges")
    if np.any(M.edge_w <= 0):
        raise ValueError("edge inner product needs positive conductances")
    d = M.incidence.toarray()
    w = np.asarray(M.edge_w, dtype=float)
    sw = np.sqrt(w)
    core = d @ (d.T / M.mu[:, None])  # d μ^{-1} dᵀ
    sym = sw[:, None] * core * sw[None, :]
    sym = 0.5 * (sym + sym.T)
    matrix = core * w[None, :]
    return _decompose("form", sym, w, matrix, M, None)


def _require_form(opf):
    if opf.kind != "form":
        raise ValueError("expected a form operator from hodge_assemble")


def _edge_modulus_channel(M, gain, name):
    return Channel(name, sp.identity(M.n_edges, format="csr"), M.edge_to_vertex, gain)


def conical_forms_functional(opf: SpectralOperator) -> SquareFunctional:
    _require_form(opf)
    M = opf.manifold
    ch = Channel("dstar", dstar_matrix(M), sp.identity(M.n, format="csr"))
    return SquareFunctional(opf, [ch], Profile(rate=_exp_rate), "sqrt", "G_forms")


def poisson_forms_functional(opf: SpectralOperator, part: str = "full") -> SquareFunctional:
    """Poisson cone functional on edge fields; the ``d`` part is identically zero."""
    _require_form(opf)
    M = opf.manifold
    chans = []
    if part in ("full", "time"):
        chans.append(_edge_modulus_channel(M, _sqrt_gain, "time"))
    if part in ("full", "dstar"):
        chans.append(Channel("dstar", dstar_matrix(M), sp.identity(M.n, format="csr")))
    if part == "d":
        # no 2-cells: d on edge fields vanishes, keep a zero channel for shape
        chans.append(Channel("d", sp.csr_matrix((M.n, M.n_edges)), sp.identity(M.n, format="csr")))
    if not chans:
        raise ValueError(f"unknown Poisson part {part!r}")
    return SquareFunctional(opf, chans, Profile(power=1, rate=_sqrt_rate), "linear",
                            f"P_forms[{part}]")


def conical_g_forms(opf, omega, engine: str = "exact"):
    return conical_forms_functional(opf).evaluate(omega, engine)


def poisson_forms(opf, omega, part: str = "full", engine: str = "exact"):
    return poisson_forms_functional(opf, part).evaluate(omega, engine)


def intertwined_scalar_functional(op: SpectralOperator) -> SquareFunctional:
    """Scalar cone functional with integrand ``|L e^{-tL} f|^2`` (no time weight).

    Equals the form functional evaluated on ``df`` because ``d* e^{-tΔ⃗} d = Δ e^{-tΔ}``.
    """
    n = op.manifold.n
    eye = sp.identity(n, format="csr")
    return SquareFunctional(op, [Channel("value", eye, eye, _lin_gain)], Profile(rate=_exp_rate),
                            "sqrt", "S_intertwined")


# --------------------------------------------------------------------- Riesz


@dataclass(frozen=True)
class RieszResult:
    values: np.ndarray
    removed_mass: float


def _inv_sqrt(lam):
    return 1.0 / np.sqrt(lam)


def _riesz(op, x, weights):
    x = np.asarray(x, dtype=float)
    c = op.coeffs(x)
    km = op.kernel_mask
    removed = float(np.sum(c[km] ** 2))
    total = float(np.sum(weights * x * x))
    if total > 0 and removed >= total * (1 - 1e-12):
        warnings.warn("input lies entirely in the kernel; Riesz transform is zero", stacklevel=3)
    return calculus(op, _inv_sqrt, x, kernel="project"), removed


def riesz_scalar(op: SpectralOperator, f) -> RieszResult:
    """``d Δ^{-1/2} f`` with the kernel projected out."""
    if op.kind != "scalar":
        raise ValueError("expected a scalar operator")
    g, removed = _riesz(op, f, op.manifold.mu)
    return RieszResult(d_op(op.manifold, g), removed)


def riesz_forms(opf: SpectralOperator, omega) -> RieszResult:
    """``d* Δ⃗^{-1/2} ω`` with harmonic components projected out."""
    _require_form(opf)
    eta, removed = _riesz(opf, omega, opf.manifold.edge_w)
    return RieszResult(dstar_op(opf.manifold, eta), removed)


# ------------------------------------------------------------ exact identities


def commutation_check(M: DiscreteManifold, n_fields: int = 100, seed: int = 0,
                      fields=None) -> dict:
    """Max of ``‖d(Δf) - Δ⃗(df)‖ / ‖df‖`` over a random battery.

    ``d(Δf)`` uses the direct Laplacian; ``Δ⃗`` is the assembled dense Hodge matrix.
    """
    rng = np.random.default_rng(seed)
    if fields is None:
        fields = rng.standard_normal((M.n, n_fields))
    fields = np.asarray(fields, dtype=float).reshape(M.n, -1)
    d = M.incidence
    H = d.toarray() @ (d.T.toarray() / M.mu[:, None]) * M.edge_w[None, :]
    worst = 0.0
    for k in range(fields.shape[1]):
        f = fields[:, k]
        df = d @ f
        lhs = d @ laplacian_apply(M, f)
        rhs = H @ df
        den = edge_norm(M, df)
        num = edge_norm(M, lhs - rhs)
        res = 0.0 if num == 0 else (num / den if den > 0 else np.inf)
        worst = max(worst, res)
    return {"max_residual": worst, "n_fields": int(fields.shape[1])}


def intertwining_check(op: SpectralOperator, opf: SpectralOperator, ts=(0.1, 1.0, 10.0),
                       n_fields: int = 20, seed: int = 0) -> float:
    """Max relative ``‖d e^{-tΔ} f - e^{-tΔ⃗} df‖`` over random fields and times."""
    M = op.manifold
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((M.n, n_fields))
    worst = 0.0
    for t in ts:
        lhs = d_op(M, calculus(op, lambda lam: np.exp(-t * lam), F))
        rhs = calculus(opf, lambda lam: np.exp(-t * lam), d_op(M, F))
        for k in range(n_fields):
            den = edge_norm(M, lhs[:, k])
            if den > 0:
                worst = max(worst, edge_norm(M, lhs[:, k] - rhs[:, k]) / den)
    return worst


def hodge_projectors(op: SpectralOperator):
    """Dense projectors onto exact forms (image of d) and onto ker d*."""
    M = op.manifold
    d = M.incidence.toarray()
    # pseudo-inverse of Δ through the spectrum
    lam = op.lambdas
    inv = np.where(op.kernel_mask, 0.0, 1.0 / np.where(op.kernel_mask, 1.0, lam))
    Lplus = (op.modes * inv) @ op.modes.T  # acts on μ-weighted fields
    ds = dstar_matrix(M).toarray()
    P_exact = d @ (Lplus @ (M.mu[:, None] * ds))
    P_harm = np.eye(M.n_edges) - P_exact
    return P_exact, P_harm


def hodge_decompose(op: SpectralOperator, omega) -> tuple[np.ndarray, np.ndarray, dict]:
    """Split ``ω`` into exact and co-closed parts with residual diagnostics."""
    M = op.manifold
    P_ex, P_h = hodge_projectors(op)
    w = np.asarray(omega, dtype=float)
    ex, h = P_ex @ w, P_h @ w
    scale = max(edge_norm(M, w), 1e-300)
    diag = {
        "orthogonality": abs(edge_inner(M, ex, h)) / scale**2,
        "dstar_residual": float(np.sqrt(np.sum(M.mu * dstar_op(M, h) ** 2))) / scale,
        "idempotence": float(np.max(np.abs(P_ex @ P_ex - P_ex))),
    }
    return ex, h, diag
