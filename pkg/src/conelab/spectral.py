"""Schrödinger operators on graphs and exact spectral calculus.

Every semigroup, Poisson semigroup and functional-calculus application in the
package goes through a full dense eigendecomposition held by
:class:`SpectralOperator`.  Modes are orthonormal in the weighted inner product
``<f, g> = sum_x weights(x) f(x) g(x)`` (vertex measure for functions, edge
conductances for edge fields).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import CalculusError, IndefiniteOperatorError
from .manifold import DiscreteManifold

KERNEL_RTOL = 1e-10
NEGATIVE_RTOL = 1e-8


@dataclass(frozen=True)
class PotentialSplit:
    vplus: np.ndarray
    vminus: np.ndarray

    def __post_init__(self):
        vp = np.asarray(self.vplus, dtype=float)
        vm = np.asarray(self.vminus, dtype=float)
        if vp.shape != vm.shape or vp.ndim != 1:
            raise ValueError("vplus and vminus must be 1-d arrays of equal length")
        if np.any(vp < 0) or np.any(vm < 0):
            raise ValueError("vplus and vminus must be pointwise nonnegative")
        if not (np.all(np.isfinite(vp)) and np.all(np.isfinite(vm))):
            raise ValueError("potential must be finite")
        object.__setattr__(self, "vplus", vp)
        object.__setattr__(self, "vminus", vm)

    @classmethod
    def zero(cls, n: int) -> "PotentialSplit":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_signed(cls, v) -> "PotentialSplit":
        v = np.asarray(v, dtype=float)
        return cls(np.maximum(v, 0.0), np.maximum(-v, 0.0))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, scale: float = 1.0) -> "PotentialSplit":
        return cls(scale * rng.random(n), np.zeros(n))

    @property
    def signed(self) -> np.ndarray:
        return self.vplus - self.vminus

    @property
    def absolute(self) -> np.ndarray:
        return self.vplus + self.vminus

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.vplus) or np.any(self.vminus))

    def weight_field(self, choice: str = "abs") -> np.ndarray:
        """Nonnegative field multiplying ``|u|^2`` in the square functionals."""
        if choice == "abs":
            return self.absolute
        if choice == "plus":
            return self.vplus
        raise ValueError(f"unknown potential weight choice {choice!r}")


def _as_field(M: DiscreteManifold, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[0] != M.n:
        raise ValueError(f"field has length {f.shape[0]}, manifold has {M.n} vertices")
    return f


def laplacian_apply(M: DiscreteManifold, f) -> np.ndarray:
    """``(Δf)(x) = (1/μ(x)) Σ_y w(x,y) (f(x) - f(y))``; accepts ``(n,)`` or ``(n, k)``."""
    f = _as_field(M, f)
    W = M.cond
    deg = np.asarray(W.sum(axis=1)).ravel()
    out = (deg * f.T).T - W @ f
    return (out.T / M.mu).T


def gradient_sq(M: DiscreteManifold, f) -> np.ndarray:
    """``|∇f|^2(x) = (1/(2μ(x))) Σ_y w(x,y) (f(y) - f(x))^2``."""
    f = _as_field(M, f)
    df = M.incidence @ f
    return M.edge_to_vertex @ (df * df)


def gradient_modulus(M: DiscreteManifold, f) -> np.ndarray:
    return np.sqrt(gradient_sq(M, f))


def inner(weights, f, g) -> float:
    return float(np.sum(weights * f * g))


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Full eigendecomposition of a self-adjoint nonnegative operator.

    ``modes[:, k]`` is the k-th eigenvector, orthonormal for ``weights``;
    eigenvalues are ascending.  ``kind`` is ``"scalar"`` for ``Δ + V`` on
    vertex fields and ``"form"`` for the Hodge Laplacian on edge fields.
    """

    kind: str
    lambdas: np.ndarray
    modes: np.ndarray
    weights: np.ndarray
    manifold: DiscreteManifold
    potential: PotentialSplit | None
    matrix: np.ndarray = field(repr=False)
    kernel_tol: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.lambdas)

    @property
    def kernel_mask(self) -> np.ndarray:
        return self.lambdas <= self.kernel_tol

    @property
    def kernel_dim(self) -> int:
        return int(self.kernel_mask.sum())

    @property
    def spectral_gap(self) -> float:
        """Smallest eigenvalue outside the kernel."""
        nz = self.lambdas[~self.kernel_mask]
        return float(nz[0]) if len(nz) else 0.0

    @property
    def lambda_max(self) -> float:
        return float(self.lambdas[-1])

    @property
    def sqrt_lambdas(self) -> np.ndarray:
        return np.sqrt(np.clip(self.lambdas, 0.0, None))

    def coeffs(self, f) -> np.ndarray:
        """``c_k = <f, φ_k>`` for a field or a batch of fields (columns)."""
        f = np.asarray(f, dtype=float)
        return self.modes.T @ (self.weights * f.T).T

    def synth(self, c) -> np.ndarray:
        return self.modes @ c

    def apply(self, f) -> np.ndarray:
        """Apply the operator matrix directly (no spectral route)."""
        return self.matrix @ np.asarray(f, dtype=float)

    def norm(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return float(np.sqrt(np.sum(self.weights * f * f)))

    def residuals(self) -> tuple[float, float]:
        """Max scaled eigen-residual and max orthonormality defect."""
        A = self.matrix @ self.modes - self.modes * self.lambdas
        res = np.sqrt(np.sum(self.weights[:, None] * A * A, axis=0))
        eig_res = float(np.max(res / np.maximum(1.0, np.abs(self.lambdas))))
        G = self.modes.T @ (self.weights[:, None] * self.modes)
        ortho = float(np.max(np.abs(G - np.eye(self.dim))))
        return eig_res, ortho


def _decompose(kind, sym: np.ndarray, weights, matrix, manifold, potential) -> SpectralOperator:
    lam, psi = sla.eigh(sym)
    scale = max(1.0, float(np.max(np.abs(lam)))) if len(lam) else 1.0
    if len(lam) and lam[0] < -NEGATIVE_RTOL * scale:
        raise IndefiniteOperatorError(float(lam[0]), scale)
    modes = psi / np.sqrt(weights)[:, None]
    lam_max = float(lam[-1]) if len(lam) else 0.0
    ktol = KERNEL_RTOL * lam_max if lam_max > 0 else KERNEL_RTOL
    for a in (lam, modes):
        a.setflags(write=False)
    return SpectralOperator(kind, lam, modes, np.asarray(weights, float), manifold, potential,
                            matrix, ktol)


def assemble(M: DiscreteManifold, V: PotentialSplit | None = None) -> SpectralOperator:
    """Eigendecomposition of ``f ↦ Δf + Vf`` in ``L^2(μ)``.

    Solves the symmetric problem ``μ^{-1/2} (Lap + μV) μ^{-1/2}`` and maps the
    eigenvectors back.  Raises :class:`IndefiniteOperatorError` if the lowest
    eigenvalue is below ``-1e-8`` times the spectral scale.
    """
    if V is None:
        V = PotentialSplit.zero(M.n)
    if len(V.vplus) != M.n:
        raise ValueError("potential length does not match the manifold")
    W = M.cond.toarray()
    lap = np.diag(W.sum(axis=1)) - W
    v = V.signed
    s = 1.0 / np.sqrt(M.mu)
    sym = s[:, None] * lap * s[None, :] + np.diag(v)
    sym = 0.5 * (sym + sym.T)
    matrix = lap / M.mu[:, None] + np.diag(v)
    return _decompose("scalar", sym, M.mu, matrix, M, V)


def multiplier(op: SpectralOperator, phi: Callable, kernel: str = "error") -> np.ndarray:
    """Evaluate ``phi`` on the spectrum.

    ``kernel="project"`` zeroes kernel eigenvalues instead of evaluating ``phi``
    there (used by the Riesz operators).
    """
    lam = op.lambdas.copy()
    km = op.kernel_mask
    if kernel == "project":
        lam_eval = np.where(km, 1.0, np.clip(lam, 0.0, None))
    elif kernel == "error":
        # kernel eigenvalues are zero up to roundoff; evaluate there exactly
        lam_eval = np.where(km, 0.0, np.clip(lam, 0.0, None))
    else:
        raise ValueError(f"unknown kernel semantics {kernel!r}")
    with np.errstate(all="ignore"):
        vals = np.asarray(phi(lam_eval), dtype=float)
    vals = np.broadcast_to(vals, lam.shape).copy()
    if kernel == "project":
        vals[km] = 0.0
    bad = ~np.isfinite(vals)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise CalculusError(f"multiplier undefined at eigenvalue {op.lambdas[k]:.3e}")
    return vals


def calculus(op: SpectralOperator, phi: Callable, f, kernel: str = "error") -> np.ndarray:
    """``Σ_k φ(λ_k) <f, φ_k> φ_k``."""
    m = multiplier(op, phi, kernel)
    c = op.coeffs(f)
    return op.synth((m * c.T).T)


def heat_kernel(op: SpectralOperator, t: float) -> np.ndarray:
    """Kernel ``p_t(x, y)`` of ``e^{-tL}`` with respect to the measure (``e^{-tL}f = p_t @ (μ f)``)."""
    if t <= 0:
        raise ValueError("t must be positive")
    e = np.exp(-t * op.lambdas)
    p = (op.modes * e) @ op.modes.T
    return 0.5 * (p + p.T)


def heat_apply(op: SpectralOperator, t: float, f) -> np.ndarray:
    return calculus(op, lambda lam: np.exp(-t * lam), f)


def poisson_apply(op: SpectralOperator, t: float, f) -> np.ndarray:
    """``e^{-t √L} f``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return calculus(op, lambda lam: np.exp(-t * np.sqrt(lam)), f)


def load_potential(doc: dict | None, n: int) -> PotentialSplit:
    if not doc:
        return PotentialSplit.zero(n)
    vp = np.asarray(doc.get("vplus", np.zeros(n)), dtype=float)
    vm = np.asarray(doc.get("vminus", np.zeros(n)), dtype=float)
    if len(vp) != n or len(vm) != n:
        raise ValueError("potential arrays must have one entry per vertex")
    return PotentialSplit(vp, vm)
