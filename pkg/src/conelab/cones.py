"""Conical, vertical, horizontal, generalized and Poisson square functionals.

Every functional here has the shape

    Q(f)(x)^2 = ∫_0^∞ Σ_y K_t(x, y) D_t(f)(y) t^power dt

where ``K_t(x, y) = χ(d(x,y) <= ρ(t)) μ(y) / Vol(y, ρ(t))`` is the cone
averaging kernel (``ρ(t) = √t`` for heat cones, ``ρ(t) = t`` for Poisson
cones, ``K_t = I`` for vertical functionals) and ``D_t(f)`` is a nonnegative
energy density built from ``u_t = Σ_k gain(λ_k) shape(t, λ_k) <f, φ_k> φ_k``.

Two engines evaluate the time integral:

* ``exact``: ``K_t`` is piecewise constant with breakpoints at the metric
  levels, and for exponential shapes the density is a finite exponential sum,
  so every segment integral is closed form.  Cost grows like ``rows * n^2`` per
  segment; intended for ``n <= 64``.
* ``quadrature``: evaluates ``u_t`` through :func:`~conelab.spectral.calculus`
  at quadrature nodes in physical space, on a composite rule whose nodes
  include the breakpoints and a log-spaced grid, with an estimated truncation
  error for the tail beyond ``t_max``.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad_vec
from scipy.special import comb, gammainc

from .errors import DivergentIntegralError, QuadratureError
from .manifold import RADIUS_RTOL, DiscreteManifold
from .reports import write_csv
from .spectral import SpectralOperator, calculus

DIVERGENCE_TOL = 1e-10


def _ones(lam):
    return np.ones_like(lam)


# ------------------------------------------------------------------ profiles


@dataclass(frozen=True)
class Channel:
    """One energy term: density ``agg @ (rows @ u)**2`` with spectral gain."""

    name: str
    rows: object
    agg: object
    gain: Callable = _ones


@dataclass(frozen=True)
class Profile:
    """Time dependence shared by all channels.

    Mode ``k`` enters as ``gain_k * shape(t, λ_k)``; with ``rate`` set the shape
    is ``t**tpow * exp(-rate(λ) t)`` and segment integrals are closed form.
    """

    power: int = 0
    rate: Callable | None = None
    tpow: float = 0.0
    shape: Callable | None = None
    decay_delta: float | None = None

    @property
    def exponential(self) -> bool:
        return self.rate is not None

    def values(self, t, lam):
        t = np.asarray(t, dtype=float)
        if self.exponential:
            r = self.rate(lam)
            tt = t[..., None]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = np.exp(-tt * r)
                if self.tpow:
                    out = out * tt**self.tpow
            return out
        return self.shape(t[..., None], lam)

    def poly_degree(self) -> int:
        P = 2 * self.tpow + self.power
        if abs(P - round(P)) > 1e-12 or P < 0:
            raise ValueError("closed-form segments need a nonnegative integer total power")
        return int(round(P))


# ------------------------------------------------------------------- kernels

_KERNEL_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


@dataclass(frozen=True)
class ConeKernels:
    """Piecewise-constant cone kernel of a manifold for one scaling."""

    starts: np.ndarray  # segment start times, starts[0] = 0
    radii: np.ndarray  # ball radius used on each segment
    member: np.ndarray  # (S, n, n) bool, d(x, y) <= radius
    inv_vol: np.ndarray  # (S, n) 1 / Vol(y, radius)
    mu: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.starts)

    def ends(self) -> np.ndarray:
        return np.concatenate([self.starts[1:], [np.inf]])

    def segment_of(self, t: float) -> int:
        return int(np.searchsorted(self.starts, t, side="right") - 1)

    def apply(self, s: int, dens: np.ndarray) -> np.ndarray:
        """``Σ_y K_s(x, y) dens(y)``; ``dens`` is ``(n,)`` or ``(n, B)``."""
        w = (self.mu * self.inv_vol[s])
        if dens.ndim == 2:
            return self.member[s] @ (w[:, None] * dens)
        return self.member[s] @ (w * dens)


def cone_kernels(M: DiscreteManifold, scaling: str, factor: float = 1.0) -> ConeKernels:
    """Segments of the cone kernel; balls have radius ``factor * ρ(t)``, volumes use ``ρ(t)``."""
    cache = _KERNEL_CACHE.setdefault(M, {})
    key = (scaling, float(factor))
    if key in cache:
        return cache[key]
    lv = np.asarray(M.levels)
    rho = lv if factor == 1.0 else np.unique(np.concatenate([lv, lv / factor]))
    if scaling == "sqrt":
        starts = rho**2
    elif scaling == "linear":
        starts = rho.copy()
    else:
        raise ValueError(f"unknown cone scaling {scaling!r}")
    member = np.stack([M.within(factor * r) for r in rho])
    vol = np.stack([M.within(r) for r in rho]).astype(float) @ M.mu if factor != 1.0 \
        else member.astype(float) @ M.mu
    kern = ConeKernels(starts, rho, member, 1.0 / vol, np.asarray(M.mu))
    cache[key] = kern
    return kern


# --------------------------------------------------------- segment integrals


def segment_integral(s, P: int, a: float, b: float):
    """``∫_a^b t^P e^{-s t} dt`` for ``s > 0`` (elementwise, ``b`` may be inf)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    span = b - a
    for i in range(P + 1):
        if np.isinf(span):
            g = 1.0
        else:
            g = gammainc(i + 1, s * span)
        coef = comb(P, i) * (a ** (P - i) if P - i else 1.0) * math.factorial(i)
        out = out + coef * g / s ** (i + 1)
    if a > 0:
        out = out * np.exp(-s * a)
    return out


# ------------------------------------------------------------------- results


@dataclass
class FunctionalResult:
    """Pointwise values of a square functional (nonnegative) plus diagnostics."""

    values: np.ndarray
    engine: str
    name: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def squared(self) -> np.ndarray:
        return self.values**2

    def l2_sq(self, mu) -> float:
        return float(np.sum(mu * self.values**2))

    def to_rows(self) -> list[dict]:
        trunc = self.diagnostics.get("truncation", 0.0)
        return [
            {"vertex": i, "value": float(v), "engine": self.engine, "truncation": float(trunc)}
            for i, v in enumerate(np.atleast_1d(self.values))
        ]

    def to_csv(self, path):
        return write_csv(path, self.to_rows(), ["vertex", "value", "engine", "truncation"])


# ----------------------------------------------------------------- functional


@dataclass(eq=False)
class SquareFunctional:
    """A cone (or vertical, if ``scaling`` is None) square functional of ``op``."""

    op: SpectralOperator
    channels: list[Channel]
    profile: Profile
    scaling: str | None
    name: str = ""
    quad_points: int = 200
    cone_factor: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def manifold(self) -> DiscreteManifold:
        return self.op.manifold

    # -- shared pieces -------------------------------------------------------

    def _dense_rows(self, ch: Channel) -> np.ndarray:
        key = ("B", ch.name)
        if key not in self._cache:
            R = ch.rows
            B = R @ self.op.modes
            self._cache[key] = np.asarray(B.toarray() if sp.issparse(B) else B)
        return self._cache[key]

    def _kernel_split(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Zero kernel coefficients; raise if they would make the integral diverge."""
        km = self.op.kernel_mask
        removed = np.sum(c[km] ** 2, axis=0) if km.any() else np.zeros(c.shape[1:])
        if not km.any():
            return c, removed
        lam_k = self.op.lambdas[km]
        scale = max(1e-300, float(np.sqrt(np.max(np.sum(c**2, axis=0)))))
        ck = c[km]
        for ch in self.channels:
            shape0 = np.abs(self.profile.values(1.0, np.zeros_like(lam_k)))
            g = np.abs(ch.gain(np.zeros_like(lam_k))) * shape0
            Bk = self._dense_rows(ch)[:, km]
            energy = np.asarray(np.abs(ch.agg) @ (Bk**2)).max(axis=0) if Bk.size else np.zeros(km.sum())
            live = (g > DIVERGENCE_TOL) & (energy > DIVERGENCE_TOL)
            if ck.ndim == 1:
                hit = live & (np.abs(ck) > DIVERGENCE_TOL * scale)
            else:
                hit = live & (np.abs(ck).max(axis=1) > DIVERGENCE_TOL * scale)
            if np.any(hit):
                raise DivergentIntegralError(
                    f"divergent time integral in {self.name or 'functional'}: "
                    f"kernel mode with nonzero {ch.name} energy"
                )
        c = c.copy()
        c[km] = 0.0
        return c, removed

    def _segments(self):
        if self.scaling is None:
            return None
        return cone_kernels(self.manifold, self.scaling, self.cone_factor)

    def _min_rate(self) -> float:
        lam = self.op.lambdas[~self.op.kernel_mask]
        if not len(lam):
            return 1.0
        if self.profile.exponential:
            return float(np.min(self.profile.rate(lam)))
        return float(lam[0])

    def t_max(self) -> float:
        r = self._min_rate()
        if self.profile.exponential or self.profile.decay_delta is None:
            return 1e3 / r
        # |shape|^2 t^power ~ t^{power-2δ}: relative tail (λ t_max)^{1+power-2δ} <= 1e-12
        expo = 12.0 / max(2 * self.profile.decay_delta - 1 - self.profile.power, 0.25)
        return 10.0**expo / r

    # -- public evaluation ---------------------------------------------------

    def squared(self, f, engine: str = "exact", **kw):
        """Squared pointwise values and diagnostics; ``f`` is ``(dim,)`` or ``(dim, B)``."""
        f = np.asarray(f, dtype=float)
        if engine == "exact":
            return self._exact(f)
        if engine == "quadrature":
            return self._quadrature(f, **kw)
        raise ValueError(f"unknown engine {engine!r}")

    def evaluate(self, f, engine: str = "exact", **kw) -> FunctionalResult:
        sq, diag = self.squared(f, engine, **kw)
        vals = np.sqrt(np.clip(sq, 0.0, None))
        return FunctionalResult(vals, engine, self.name, diag)

    def __call__(self, f, engine: str | None = None):
        if engine is None:
            engine = "exact" if self.op.dim <= 64 else "quadrature"
        if engine == "quadrature":
            sq, _ = self._quadrature(np.asarray(f, dtype=float), adaptive=False)
        else:
            sq, _ = self.squared(f, engine)
        return np.sqrt(np.clip(sq, 0.0, None))

    # -- exact engine --------------------------------------------------------

    def _pair_matrices(self, keep: np.ndarray):
        """Segment integrals ``E_s[j, k] = ∫_seg shape_j shape_k t^power dt``."""
        key = ("E", keep.tobytes())
        if key in self._cache:
            return self._cache[key]
        lam = self.op.lambdas[keep]
        kern = self._segments()
        if kern is None:
            bounds = [(0.0, np.inf)]
        else:
            bounds = list(zip(kern.starts, kern.ends()))
        mats = []
        if self.profile.exponential:
            r = self.profile.rate(lam)
            S = r[:, None] + r[None, :]
            P = self.profile.poly_degree()
            for a, b in bounds:
                mats.append(segment_integral(S, P, float(a), float(b)))
        else:
            iu = np.triu_indices(len(lam))
            power = self.profile.power

            def integrand(t):
                v = self.profile.values(t, lam)
                return (v[iu[0]] * v[iu[1]]) * t**power

            for a, b in bounds:
                val, _ = quad_vec(integrand, float(a), float(b), epsabs=1e-300, epsrel=1e-13,
                                  limit=20000)
                E = np.zeros((len(lam), len(lam)))
                E[iu] = val
                E = E + np.triu(E, 1).T
                mats.append(E)
        mats = np.stack(mats)
        self._cache[key] = mats
        return mats

    def _exact(self, f):
        single = f.ndim == 1
        F = f[:, None] if single else f
        c = self.op.coeffs(F)
        c, removed = self._kernel_split(c)
        keep = ~self.op.kernel_mask
        lam = self.op.lambdas[keep]
        E = self._pair_matrices(keep)
        kern = self._segments()
        n = self.manifold.n
        out = np.zeros((n, F.shape[1]))
        for b in range(F.shape[1]):
            dens = np.zeros((E.shape[0], n))
            for ch in self.channels:
                a = c[keep, b] * ch.gain(lam)
                Bc = self._dense_rows(ch)[:, keep] * a[None, :]
                J = np.einsum("rj,sjk,rk->sr", Bc, E, Bc, optimize=True)
                dens += np.asarray((ch.agg @ J.T).T)
            if kern is None:
                out[:, b] = dens[0]
            else:
                for s in range(E.shape[0]):
                    out[:, b] += kern.apply(s, dens[s])
        out = np.clip(out, 0.0, None)
        diag = {"removed_kernel_mass": removed.tolist() if not single else float(removed[0]),
                "truncation": 0.0}
        return (out[:, 0] if single else out), diag

    # -- quadrature engine ---------------------------------------------------

    def _density(self, t, c):
        """Physical-space density at time ``t`` for coefficient batch ``c``."""
        lam = self.op.lambdas
        shape = self.profile.values(t, lam)
        n = self.manifold.n
        dens = np.zeros((n, c.shape[1]))
        for ch in self.channels:
            coeff = (ch.gain(np.clip(lam, 0.0, None)) * shape)[:, None] * c
            u = self.op.synth(coeff)
            ru = ch.rows @ u
            dens += np.asarray(ch.agg @ (ru * ru))
        return dens * (t**self.profile.power if self.profile.power else 1.0)

    def _points(self, t_max):
        r = self._min_rate()
        grid = np.geomspace(1e-4 / r, t_max, self.quad_points)
        pts = [grid]
        kern = self._segments()
        if kern is not None:
            pts.append(kern.starts[(kern.starts > 0) & (kern.starts < t_max)])
        pts = np.unique(np.concatenate(pts))
        return pts[(pts > 0) & (pts < t_max)]

    def _apply_cone(self, t, dens):
        kern = self._segments()
        if kern is None:
            return dens
        return kern.apply(kern.segment_of(t), dens)

    def _tail(self, t_max, val_at_tmax):
        r = self._min_rate()
        if self.profile.exponential:
            P = max(self.profile.poly_degree(), 0)
            return val_at_tmax / (2 * r) * (1 + P / (2 * r * t_max))
        delta = self.profile.decay_delta or 1.0
        return val_at_tmax * t_max / max(2 * delta - 1 + self.profile.power, 0.25)

    def _quadrature(self, f, adaptive: bool = True, tol: float = 1e-9, order: int = 6):
        single = f.ndim == 1
        F = f[:, None] if single else f
        # coefficients only to project the kernel; the time evolution itself
        # goes through spectral.calculus
        c0 = self.op.coeffs(F)
        _, removed = self._kernel_split(c0)
        Fp = F - calculus(self.op, lambda lam: np.ones_like(lam), F) + \
            calculus(self.op, lambda lam: np.ones_like(lam), F, kernel="project")
        c = self.op.coeffs(Fp)
        t_max = self.t_max()
        pts = self._points(t_max)
        n = self.manifold.n

        if adaptive:
            def integrand(t):
                return self._apply_cone(t, self._density(t, c)).ravel()

            val, err = quad_vec(integrand, 0.0, t_max, epsabs=1e-300, epsrel=1e-11,
                                points=pts, limit=200000)
            out = val.reshape(n, -1)
        else:
            out, err = self._fixed_rule(c, pts, t_max, order)
        end = self._apply_cone(t_max, self._density(t_max, c))
        tail = self._tail(t_max, end)
        total = np.sum(self.manifold.mu[:, None] * np.abs(out), axis=0)
        tail_total = np.sum(self.manifold.mu[:, None] * np.abs(tail), axis=0)
        rel = float(np.max(tail_total / np.maximum(total, 1e-300)))
        if rel > tol and np.max(total) > 0:
            raise QuadratureError(f"tail truncation estimate {rel:.2e} exceeds tolerance {tol:.1e}")
        out = np.clip(out, 0.0, None)
        diag = {
            "removed_kernel_mass": float(removed[0]) if single else removed.tolist(),
            "truncation": rel,
            "quad_error": float(np.max(np.abs(err))) if np.size(err) else 0.0,
            "t_max": t_max,
        }
        return (out[:, 0] if single else out), diag

    def fixed_rule(self, order: int = 6, points: int | None = None):
        """Nodes, weights and segment index of the composite Gauss-Legendre rule."""
        key = ("rule", order, points)
        if key in self._cache:
            return self._cache[key]
        t_max = self.t_max()
        if points is not None:
            saved, self.quad_points = self.quad_points, points
            pts = self._points(t_max)
            self.quad_points = saved
        else:
            pts = self._points(t_max)
        edges = np.concatenate([[0.0], pts, [t_max]])
        x, w = np.polynomial.legendre.leggauss(order)
        a, b = edges[:-1], edges[1:]
        nodes = (0.5 * (b - a)[:, None] * (x[None, :] + 1) + a[:, None]).ravel()
        weights = (0.5 * (b - a)[:, None] * w[None, :]).ravel()
        kern = self._segments()
        seg = np.zeros(len(nodes), dtype=int) if kern is None else \
            np.searchsorted(kern.starts, nodes, side="right") - 1
        rule = (nodes, weights, seg)
        self._cache[key] = rule
        return rule

    def _fixed_rule(self, c, pts, t_max, order):
        nodes, weights, seg = self.fixed_rule(order)
        out = self.rule_squared_from_coeffs(c, (nodes, weights, seg))
        return out, np.zeros(1)

    def rule_squared_from_coeffs(self, c, rule):
        """Batched evaluation on a fixed rule; ``c`` holds kernel-free coefficients."""
        nodes, weights, seg = rule
        lam = self.op.lambdas
        n = self.manifold.n
        B = c.shape[1]
        shape = self.profile.values(nodes, lam)  # (Q, K)
        tw = weights * (nodes**self.profile.power if self.profile.power else 1.0)
        kern = self._segments()
        nseg = 1 if kern is None else kern.n_segments
        acc = np.zeros((nseg, n, B))
        for ch in self.channels:
            g = ch.gain(np.clip(lam, 0.0, None))
            coeff = (g * shape)[:, :, None] * c[None, :, :]  # (Q, K, B)
            U = np.einsum("xk,qkb->xqb", self.op.modes, coeff, optimize=True)
            Q = len(nodes)
            RU = ch.rows @ U.reshape(U.shape[0], Q * B)
            D = np.asarray(ch.agg @ (RU * RU)).reshape(n, Q, B) * tw[None, :, None]
            np.add.at(acc, seg, np.moveaxis(D, 1, 0))
        if kern is None:
            return acc[0]
        out = np.zeros((n, B))
        for s in np.unique(seg):
            out += kern.apply(s, acc[s])
        return out

    def batch_evaluator(self, order: int = 4, points: int = 60):
        """Fast vectorised ``f -> values`` on a fixed composite rule (for searches)."""
        rule = self.fixed_rule(order, points)
        km = self.op.kernel_mask

        def evaluate(F):
            F = np.asarray(F, dtype=float)
            single = F.ndim == 1
            Fb = F[:, None] if single else F
            c = self.op.coeffs(Fb)
            c, _ = self._kernel_split(c)
            c[km] = 0.0
            sq = self.rule_squared_from_coeffs(c, rule)
            v = np.sqrt(np.clip(sq, 0.0, None))
            return v[:, 0] if single else v

        return evaluate


# --------------------------------------------------------------- constructors


def _potential_field(op: SpectralOperator, choice: str) -> np.ndarray:
    if op.potential is None:
        return np.zeros(op.manifold.n)
    return op.potential.weight_field(choice)


def scalar_channels(op: SpectralOperator, potential: str = "abs", gain: Callable = _ones):
    M = op.manifold
    chans = [Channel("gradient", M.incidence, M.edge_to_vertex, gain)]
    V = _potential_field(op, potential)
    if np.any(V):
        chans.append(Channel("potential", sp.identity(M.n, format="csr"),
                             sp.diags(V, format="csr"), gain))
    return chans


def value_channel(op: SpectralOperator, gain: Callable = _ones, name: str = "value"):
    n = op.manifold.n
    eye = sp.identity(n, format="csr")
    return Channel(name, eye, eye, gain)


def _exp_rate(lam):
    return lam


def _sqrt_rate(lam):
    return np.sqrt(np.clip(lam, 0.0, None))


def _sqrt_gain(lam):
    return np.sqrt(np.clip(lam, 0.0, None))


def _lin_gain(lam):
    return lam


def _require_scalar(op):
    if op.kind != "scalar":
        raise ValueError("this functional acts on scalar operators")


def vertical_functional(op, potential: str = "abs") -> SquareFunctional:
    _require_scalar(op)
    return SquareFunctional(op, scalar_channels(op, potential), Profile(rate=_exp_rate), None,
                            "H_L")


def conical_functional(op, potential: str = "abs") -> SquareFunctional:
    _require_scalar(op)
    return SquareFunctional(op, scalar_channels(op, potential), Profile(rate=_exp_rate), "sqrt",
                            "G_L")


def horizontal_functional(op) -> SquareFunctional:
    _require_scalar(op)
    return SquareFunctional(op, [value_channel(op, _lin_gain)], Profile(power=1, rate=_exp_rate),
                            "sqrt", "S_L")


# ------------------------------------------------------------- decay classes


@dataclass(frozen=True)
class DecayClass:
    """A function ``F`` with ``|F(z)| <= C z^τ / (1 + z^{τ+δ})`` on ``z > 0``.

    ``rate``/``tpow``/``gain`` describe an exponential closed form
    ``F(z) = gain * z^tpow * e^{-rate z}`` when one exists.
    """

    func: Callable
    tau: float
    delta: float
    cbound: float = 1.0
    name: str = "F"
    closed_form: tuple | None = None  # (gain_power, tpow, rate) with F(tλ) = λ^gp t^tpow e^{-rate tλ}

    def __post_init__(self):
        if self.tau <= 0 or self.delta <= 0 or self.cbound <= 0:
            raise ValueError("decay class needs tau, delta, C > 0")

    def bound(self, z):
        z = np.asarray(z, dtype=float)
        return self.cbound * z**self.tau / (1.0 + z ** (self.tau + self.delta))

    def admissible(self, npts: int = 2001) -> bool:
        z = np.geomspace(1e-6, 1e6, npts)
        return bool(np.all(np.abs(self.func(z)) <= self.bound(z) * (1 + 1e-12)))


def _phi0(z):
    return np.sqrt(np.clip(z, 0.0, None)) * np.exp(-z)


def _zexp(z):
    return z * np.exp(-z)


def _rational(z):
    return z / (1.0 + z * z)


PHI0 = DecayClass(_phi0, tau=0.5, delta=1.0, cbound=1.0, name="phi0", closed_form=(0.5, 0.5, 1.0))
ZEXP = DecayClass(_zexp, tau=1.0, delta=1.0, cbound=1.0, name="z_exp", closed_form=(1.0, 1.0, 1.0))
RATIONAL = DecayClass(_rational, tau=1.0, delta=1.0, cbound=1.0, name="rational")
BUILTINS = {"phi0": PHI0, "z_exp": ZEXP, "rational": RATIONAL}


def _profile_for(F, power: int) -> tuple[Profile, Callable]:
    """Profile and per-mode gain realising ``F(tλ)`` (times ``t^power`` weight)."""
    if isinstance(F, str) and F == "exp":
        return Profile(power=power, rate=_exp_rate), _ones
    if isinstance(F, str):
        F = BUILTINS[F]
    if isinstance(F, DecayClass) and F.closed_form is not None:
        gp, tpow, rate = F.closed_form

        def gain(lam, gp=gp):
            return np.clip(lam, 0.0, None) ** gp

        def rate_fn(lam, rate=rate):
            return rate * lam

        return Profile(power=power, rate=rate_fn, tpow=tpow), gain
    func = F.func if isinstance(F, DecayClass) else F
    delta = F.delta if isinstance(F, DecayClass) else None

    def shape(t, lam, func=func):
        return func(t * np.clip(lam, 0.0, None))

    return Profile(power=power, shape=shape, decay_delta=delta), _ones


def s_phi_functional(op, phi="phi0") -> SquareFunctional:
    """``S_φ`` with cone integrand ``|φ(tL) f|^2 / t``."""
    _require_scalar(op)
    prof, gain = _profile_for(phi, power=-1)
    if isinstance(phi, DecayClass) and not phi.admissible():
        raise ValueError(f"{phi.name} violates its declared decay class")
    name = phi if isinstance(phi, str) else getattr(phi, "name", "phi")
    return SquareFunctional(op, [value_channel(op, gain)], prof, "sqrt", f"S_{name}")


def generalized_functional(op, F="exp", potential: str = "abs") -> SquareFunctional:
    """``G^F_L``; ``F="exp"`` is the heat case and coincides with :func:`conical_functional`."""
    _require_scalar(op)
    if isinstance(F, DecayClass) and not F.admissible():
        raise ValueError(f"{F.name} violates its declared decay class")
    prof, gain = _profile_for(F, power=0)
    name = F if isinstance(F, str) else getattr(F, "name", "F")
    return SquareFunctional(op, scalar_channels(op, potential, gain), prof, "sqrt", f"G^{name}_L")


def poisson_functional(op, part: str = "full", potential: str = "abs") -> SquareFunctional:
    """``P_L`` (``part="full"``), ``P_{L,t}`` (``"time"``) or ``P_{L,x}`` (``"space"``)."""
    _require_scalar(op)
    chans = []
    if part in ("full", "time"):
        chans.append(value_channel(op, _sqrt_gain, "time"))
    if part in ("full", "space"):
        chans.extend(scalar_channels(op, potential))
    if not chans:
        raise ValueError(f"unknown Poisson part {part!r}")
    return SquareFunctional(op, chans, Profile(power=1, rate=_sqrt_rate), "linear", f"P_L[{part}]")


# ------------------------------------------------------------ operation API


def vertical_h(op, f, engine: str = "exact", potential: str = "abs") -> FunctionalResult:
    return vertical_functional(op, potential).evaluate(f, engine)


def conical_g(op, f, engine: str = "exact", potential: str = "abs") -> FunctionalResult:
    return conical_functional(op, potential).evaluate(f, engine)


def horizontal_s(op, f, engine: str = "exact") -> FunctionalResult:
    return horizontal_functional(op).evaluate(f, engine)


def s_phi(op, phi, f, engine: str = "exact") -> FunctionalResult:
    return s_phi_functional(op, phi).evaluate(f, engine)


def generalized_g(op, F, f, engine: str = "exact", potential: str = "abs") -> FunctionalResult:
    return generalized_functional(op, F, potential).evaluate(f, engine)


def poisson_p(op, f, part: str = "full", engine: str = "exact", potential: str = "abs"):
    return poisson_functional(op, part, potential).evaluate(f, engine)


# ------------------------------------------------------ cone functions / tents


@dataclass(frozen=True)
class ConeFunction:
    """Samples ``F(y, t_i)`` on a strictly increasing time grid."""

    samples: np.ndarray
    t: np.ndarray
    scaling: str = "linear"

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.samples, dtype=float)
        if t.ndim != 1 or s.ndim != 2 or s.shape[1] != len(t):
            raise ValueError("samples must be (n, m) with m time nodes")
        if np.any(np.diff(t) <= 0) or t[0] <= 0:
            raise ValueError("time grid must be positive and strictly increasing")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if self.scaling not in ("linear", "sqrt"):
            raise ValueError("scaling must be 'linear' or 'sqrt'")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "samples", s)

    @property
    def t_min(self) -> float:
        return float(self.t[0])

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    def log_weights(self) -> np.ndarray:
        """Trapezoid weights for ``dt/t`` on the grid."""
        lt = np.log(self.t)
        w = np.zeros_like(lt)
        d = np.diff(lt)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        return w

    def radius(self, t):
        return np.sqrt(t) if self.scaling == "sqrt" else np.asarray(t)


def _check_grid(F: ConeFunction):
    if len(F.t) < 8:
        raise ValueError("cone function grid too coarse: need at least 8 time nodes")


def area_A(M: DiscreteManifold, F: ConeFunction) -> np.ndarray:
    """``A(F)(x) = (Σ_i w_i Σ_{y ∈ B(x, ρ(t_i))} |F(y,t_i)|^2 μ(y)/Vol(y, ρ(t_i)))^{1/2}``."""
    _check_grid(F)
    w = F.log_weights()
    out = np.zeros(M.n)
    sq = F.samples**2
    for i, ti in enumerate(F.t):
        r = float(F.radius(ti))
        memb = M.within(r)
        vol = memb @ M.mu
        out += w[i] * (memb @ (sq[:, i] * M.mu / vol))
    return np.sqrt(out)


def vertical_V(F: ConeFunction) -> np.ndarray:
    """``Ṽ(F)(x) = (Σ_i w_i |F(x, t_i)|^2)^{1/2}`` on the same log-trapezoid weights."""
    _check_grid(F)
    return np.sqrt((F.samples**2) @ F.log_weights())


def tent_norm(M: DiscreteManifold, F: ConeFunction, p: float) -> float:
    """``T_2^p`` norm; ``p = inf`` is the Carleson supremum over all balls."""
    from .probes import lp_norm

    if p < 1:
        raise ValueError("p must be >= 1")
    if not np.isinf(p):
        return lp_norm(M, area_A(M, F), p)
    _check_grid(F)
    w = F.log_weights()
    sq = F.samples**2
    # ball radii at which either membership or the time cutoff changes
    cut_r = F.radius(F.t)
    radii = np.unique(np.concatenate([np.asarray(M.levels), np.atleast_1d(cut_r)]))
    best = 0.0
    mu = M.mu
    for r in radii:
        tcut = r**2 if F.scaling == "sqrt" else r
        idx = F.t <= tcut * (1 + RADIUS_RTOL)
        if not idx.any():
            continue
        inner = sq[:, idx] @ w[idx]  # ∫_0^{r_B} |F(y,t)|^2 dt/t for each y
        memb = M.within(r)
        val = (memb @ (mu * inner)) / (memb @ mu)
        best = max(best, float(val.max()))
    return math.sqrt(best)
