"""Empirical probes: norms, operator-norm lower bounds, off-diagonal and Gaussian
fits, subcriticality and the critical exponent, R-bound averages.

All fits are feasibility fits: the reported constants satisfy the fitted
inequality at every sampled point, so ``max_violation <= 0`` by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .cones import Channel, Profile, SquareFunctional, scalar_channels, value_channel
from .errors import ConelabError
from .manifold import DiscreteManifold, annulus
from .reports import FitReport, write_csv
from .spectral import PotentialSplit, SpectralOperator, heat_kernel

FIT_CAP = 2.0


# --------------------------------------------------------------------- norms


def lp_norm(M: DiscreteManifold, f, p: float) -> float:
    f = np.abs(np.asarray(f, dtype=float))
    if p < 1:
        raise ValueError("p must be >= 1")
    if np.isinf(p):
        return float(f.max()) if f.size else 0.0
    return float(np.sum(M.mu * f**p) ** (1.0 / p))


def lp_norms(mu, F, p: float) -> np.ndarray:
    """Column-wise ``L^p(μ)`` norms of a batch."""
    A = np.abs(np.asarray(F, dtype=float))
    if np.isinf(p):
        return A.max(axis=0)
    return np.sum(mu[:, None] * A**p, axis=0) ** (1.0 / p)


def weak_lp(M: DiscreteManifold, f, p: float) -> float:
    """``sup_λ λ μ{|f| > λ}^{1/p}``, attained as λ ↑ a sample value of ``|f|``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.abs(np.asarray(f, dtype=float))
    order = np.argsort(-a, kind="stable")
    vals = a[order]
    if np.isinf(p):
        return float(vals[0]) if len(vals) else 0.0
    cum = np.cumsum(M.mu[order])
    # for λ just below vals[i], the level set contains every sample >= vals[i]
    last = np.concatenate([vals[1:] != vals[:-1], [True]])
    cand = vals[last] * cum[last] ** (1.0 / p)
    return float(cand.max()) if len(cand) else 0.0


# ------------------------------------------------------------- ratio search


@dataclass
class SearchConfig:
    restarts: int = 32
    steps: int = 50
    step: float = 0.5
    fd_rel: float = 1e-5
    seed: int = 42
    fd_full_max: int = 64
    fd_dirs: int = 16
    n_indicators: int = 32
    n_modes: int = 4
    batched: bool = False


@dataclass
class NormEstimate:
    p: float
    ratio: float
    witness: np.ndarray
    restarts: int
    iterations: int
    history: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    start_kind: str = ""

    def to_rows(self) -> list[dict]:
        return [{"vertex": i, "value": float(v)} for i, v in enumerate(self.witness)]

    def to_csv(self, path):
        return write_csv(path, self.to_rows(), ["vertex", "value"])


class _Evaluator:
    def __init__(self, functional, mu, p, batched):
        self.functional = functional
        self.mu = mu
        self.p = p
        self.batched = batched
        self.calls = 0

    def values(self, F):
        self.calls += F.shape[1]
        if self.batched:
            return np.asarray(self.functional(F), dtype=float).reshape(-1, F.shape[1])
        return np.column_stack([np.asarray(self.functional(F[:, k]), dtype=float)
                                for k in range(F.shape[1])])

    def ratios(self, F):
        den = lp_norms(self.mu, F, self.p)
        num = lp_norms(self.mu, self.values(F), self.p)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(den > 0, num / den, 0.0)
        return r


def _normalize(mu, F, p):
    nrm = lp_norms(mu, F, p)
    return F / np.where(nrm > 0, nrm, 1.0)


def check_homogeneous(functional, n: int, rng, batched: bool = False, rtol: float = 1e-8):
    f = rng.standard_normal(n)
    if batched:
        ev = lambda x: np.asarray(functional(x[:, None]))[:, 0]  # noqa: E731
    else:
        ev = functional
    base = np.abs(np.asarray(ev(f), dtype=float))
    scale = max(float(np.max(base)), 1e-300)
    for c in (2.0, -0.5):
        other = np.abs(np.asarray(ev(c * f), dtype=float))
        if np.max(np.abs(other - abs(c) * base)) > rtol * abs(c) * scale + 1e-300:
            raise ValueError("functional is not positively homogeneous")


def _ascent(ev: _Evaluator, f0, cfg: SearchConfig, rng):
    mu, p = ev.mu, ev.p
    n = len(f0)
    f = _normalize(mu, f0[:, None], p)[:, 0]
    R = float(ev.ratios(f[:, None])[0])
    hist = [R]
    step = cfg.step
    stall = 0
    converged = False
    it = 0
    for it in range(1, cfg.steps + 1):
        if n <= cfg.fd_full_max:
            dirs = np.eye(n)
        else:
            dirs, _ = np.linalg.qr(rng.standard_normal((n, cfg.fd_dirs)))
        fn = float(np.linalg.norm(f))
        h = cfg.fd_rel * fn
        g = (ev.ratios(f[:, None] + h * dirs) - R) / h
        grad = dirs @ g
        gn = float(np.linalg.norm(grad))
        if gn == 0.0 or not np.isfinite(gn):
            converged = True
            break
        d = grad / gn * fn
        sizes = step * np.array([2.0, 1.0, 0.5, 0.25, 0.125, 0.0625])
        cands = _normalize(mu, f[:, None] + d[:, None] * sizes[None, :], p)
        Rc = ev.ratios(cands)
        j = int(np.argmax(Rc))
        if Rc[j] > R * (1 + 1e-13):
            gain = Rc[j] - R
            f, R = cands[:, j], float(Rc[j])
            step = float(sizes[j]) * 1.5
            stall = 0
            if gain < 1e-12 * max(R, 1e-300):
                converged = True
                hist.append(R)
                break
        else:
            step = float(sizes[-1]) / 4
            stall += 1
            if stall >= 3:
                converged = True
                hist.append(R)
                break
        hist.append(R)
    return f, R, hist, it, converged


def ratio_search(functional: Callable, M: DiscreteManifold, p: float,
                 cfg: SearchConfig | None = None, op: SpectralOperator | None = None,
                 extra_starts=None) -> NormEstimate:
    """Lower bound on ``sup ‖Gf‖_p / ‖f‖_p`` by projected finite-difference ascent.

    Every random restart is ascended with its own seeded generator, so more
    restarts never lower the result.  Structured starts (vertex indicators and
    extreme eigenmodes of ``op``) are evaluated and the best one is ascended.
    """
    cfg = cfg or SearchConfig()
    n = M.n
    mu = M.mu
    ev = _Evaluator(functional, mu, p, cfg.batched)
    check_homogeneous(functional, n, np.random.default_rng([cfg.seed, 7919]), cfg.batched)

    struct, kinds = [], []
    srng = np.random.default_rng([cfg.seed, 104729])
    verts = np.arange(n) if n <= cfg.n_indicators else \
        np.sort(srng.choice(n, cfg.n_indicators, replace=False))
    for v in verts:
        e = np.zeros(n)
        e[v] = 1.0
        struct.append(e)
        kinds.append(f"indicator:{v}")
    if op is not None and op.kind == "scalar":
        nz = np.flatnonzero(~op.kernel_mask)
        pick = list(nz[: cfg.n_modes]) + list(nz[-cfg.n_modes:]) if len(nz) else []
        for k in dict.fromkeys(int(k) for k in pick):
            struct.append(np.asarray(op.modes[:, k]))
            kinds.append(f"mode:{k}")
    for i, e in enumerate(extra_starts or []):
        struct.append(np.asarray(e, dtype=float))
        kinds.append(f"extra:{i}")

    best_R, best_f, best_kind = -1.0, None, ""
    history, iters, flags = [], 0, []
    if struct:
        S = _normalize(mu, np.column_stack(struct), p)
        Rs = ev.ratios(S)
        j = int(np.argmax(Rs))
        best_R, best_f, best_kind = float(Rs[j]), S[:, j], kinds[j]
        f, R, hist, it, conv = _ascent(ev, S[:, j], cfg, np.random.default_rng([cfg.seed, 1]))
        iters += it
        history.append(hist)
        if R > best_R:
            best_R, best_f, best_kind = R, f, kinds[j] + "+ascent"
    any_unconverged = False
    for i in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, 2, i])
        f0 = rng.standard_normal(n)
        f, R, hist, it, conv = _ascent(ev, f0, cfg, rng)
        iters += it
        history.append(hist)
        if R > best_R:
            best_R, best_f, best_kind = R, f, f"random:{i}+ascent"
            any_unconverged = not conv
    if best_f is None:
        raise ValueError("empty search battery")
    if any_unconverged:
        flags.append("budget-exhausted")
    best_R = float(ev.ratios(best_f[:, None])[0])
    return NormEstimate(p, best_R, best_f, cfg.restarts, iters, history, flags, best_kind)


# ---------------------------------------------------------- operator families


@dataclass(eq=False)
class OperatorFamily:
    """``T_t = Σ_k m(t, λ_k) <·, φ_k> φ_k`` read through channels.

    The output modulus at a vertex is ``(Σ_ch agg @ (rows @ T_t f)^2)^{1/2}``.
    """

    op: SpectralOperator
    channels: list[Channel]
    multiplier: Callable
    name: str = ""

    @property
    def in_weights(self) -> np.ndarray:
        return self.op.weights

    def in_mask(self, E_vertices: np.ndarray) -> np.ndarray:
        """Input coordinates supported in the vertex set ``E``."""
        if self.op.kind == "scalar":
            return np.asarray(E_vertices, dtype=bool)
        e = self.op.manifold.edges
        return E_vertices[e[:, 0]] & E_vertices[e[:, 1]]

    def evolve(self, t: float, F):
        m = self.multiplier(t, np.clip(self.op.lambdas, 0.0, None))
        c = self.op.coeffs(F)
        return self.op.synth((m * c.T).T)

    def modulus(self, t: float, F) -> np.ndarray:
        U = self.evolve(t, np.asarray(F, dtype=float))
        out = 0.0
        for ch in self.channels:
            R = ch.rows @ U
            out = out + ch.agg @ (R * R)
        return np.sqrt(np.asarray(out))

    def restricted_matrix(self, t: float, E: np.ndarray, Fset: np.ndarray) -> np.ndarray:
        """Matrix whose spectral norm is ``sup ‖T_t(fχ_E)‖_{L²(F)} / ‖f‖_{L²(E)}``."""
        M = self.op.manifold
        m = self.multiplier(t, np.clip(self.op.lambdas, 0.0, None))
        T = (self.op.modes * m) @ (self.op.modes.T * self.op.weights[None, :])
        cols = np.flatnonzero(self.in_mask(E))
        T = T[:, cols] / np.sqrt(self.op.weights[cols])[None, :]
        blocks = []
        for ch in self.channels:
            a = np.asarray(ch.agg.T @ (M.mu * Fset)).ravel()
            keep = a > 0
            R = ch.rows @ T
            R = np.asarray(R.toarray() if sp.issparse(R) else R)
            blocks.append(np.sqrt(a[keep])[:, None] * R[keep])
        return np.vstack(blocks) if blocks else np.zeros((0, len(cols)))


def semigroup_family(op) -> OperatorFamily:
    return OperatorFamily(op, [value_channel(op)], lambda t, lam: np.exp(-t * lam), "e^{-tL}")


def identity_family(op) -> OperatorFamily:
    return OperatorFamily(op, [value_channel(op)], lambda t, lam: np.ones_like(lam), "identity")


def gradient_family(op, F=None) -> OperatorFamily:
    """``√t ∇ F(tL)`` (heat semigroup when ``F`` is None)."""
    M = op.manifold
    ch = [Channel("gradient", M.incidence, M.edge_to_vertex)]
    if F is None:
        return OperatorFamily(op, ch, lambda t, lam: np.sqrt(t) * np.exp(-t * lam),
                              "sqrt(t) grad e^{-tL}")
    func = getattr(F, "func", F)
    return OperatorFamily(op, ch, lambda t, lam: np.sqrt(t) * func(t * lam),
                          "sqrt(t) grad F(tL)")


def potential_family(op, F=None) -> OperatorFamily:
    """``√t √V F(tL)`` with ``|V|`` as the potential weight."""
    chans = [c for c in scalar_channels(op) if c.name == "potential"]
    func = (lambda z: np.exp(-z)) if F is None else getattr(F, "func", F)
    return OperatorFamily(op, chans, lambda t, lam: np.sqrt(t) * func(t * lam),
                          "sqrt(t) sqrt(V) F(tL)")


def forms_dstar_family(opf) -> OperatorFamily:
    from .forms import dstar_matrix

    M = opf.manifold
    ch = [Channel("dstar", dstar_matrix(M), sp.identity(M.n, format="csr"))]
    return OperatorFamily(opf, ch, lambda t, lam: np.sqrt(t) * np.exp(-t * lam),
                          "sqrt(t) d* e^{-t hodge}")


# ---------------------------------------------------------------- fit helpers


def _feasible_rate(y, x, cap: float = FIT_CAP):
    """``C = cap * max e^y`` and the largest ``c`` with ``y <= log C - c x`` (x > 0)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    finite = np.isfinite(y)
    logC = math.log(cap) + float(np.max(y[finite]))
    pos = finite & (x > 0)
    c = float(np.min((logC - y[pos]) / x[pos])) if pos.any() else float("inf")
    slack = logC - c * x - y
    viol = float(np.max(-slack[finite])) if finite.any() else 0.0
    return math.exp(logC), c, viol, slack


def _disjoint_sets(M, E, F):
    E = np.asarray(E)
    F = np.asarray(F)
    if E.dtype != bool:
        m = np.zeros(M.n, dtype=bool)
        m[E] = True
        E = m
    if F.dtype != bool:
        m = np.zeros(M.n, dtype=bool)
        m[F] = True
        F = m
    if not E.any() or not F.any():
        raise ValueError("E and F must be nonempty")
    if np.any(E & F):
        raise ValueError("E and F must be disjoint")
    return E, F


def davies_gaffney(family: OperatorFamily, E, F, t_grid, cap: float = FIT_CAP) -> FitReport:
    """Measure ``sup_f ‖T_t(fχ_E)‖_{L²(F)}/‖f‖_{L²(E)}`` (exactly, by SVD) and fit
    ``C e^{-c d(E,F)^2/t}`` feasibly."""
    M = family.op.manifold
    E, Fs = _disjoint_sets(M, E, F)
    if not family.in_mask(E).any():
        raise ValueError("no input coordinates supported in E")
    D = float(M.dist[np.ix_(E, Fs)].min())
    rows = []
    for t in np.asarray(t_grid, dtype=float):
        A = family.restricted_matrix(float(t), E, Fs)
        lhs = float(sla.svdvals(A)[0]) if A.size else 0.0
        rows.append({"t": float(t), "dist": D, "x": D * D / t, "lhs": lhs})
    lhs = np.array([r["lhs"] for r in rows])
    x = np.array([r["x"] for r in rows])
    with np.errstate(divide="ignore"):
        y = np.log(lhs)
    C, c, viol, slack = _feasible_rate(y, x, cap)
    for r, s in zip(rows, slack):
        r["rhs"] = C * math.exp(-c * r["x"])
        r["slack"] = float(s)
    return FitReport("davies_gaffney", {"C": C, "c": c, "dist": D}, viol, rows,
                     notes={"family": family.name})


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    ok = np.isfinite(lx) & np.isfinite(ly)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(lx[ok], ly[ok], 1)[0])


def offdiag_lp_l2(family: OperatorFamily, B, js, t_grid, p: float, samples: int = 64,
                  seed: int = 0, betas=None, cap: float = FIT_CAP) -> FitReport:
    """``L^p(B) -> L^2(C_j(B))`` off-diagonal measurement with a feasible ``(C, c, β)`` fit."""
    M = family.op.manifold
    if family.op.kind != "scalar":
        raise ValueError("offdiag_lp_l2 takes scalar families")
    rng = np.random.default_rng(seed)
    inB = np.zeros(M.n, dtype=bool)
    inB[list(B.members)] = True
    idx = np.flatnonzero(inB)
    # battery: Gaussian fields, indicators of B's points, and B's normalized indicator
    G = np.zeros((M.n, samples + len(idx) + 1))
    G[idx, :samples] = rng.standard_normal((len(idx), samples))
    G[idx, samples + np.arange(len(idx))] = 1.0
    G[idx, -1] = 1.0
    G = G / lp_norms(M.mu, G, p)[None, :]
    rows, skipped = [], []
    r = float(B.radius)
    for j in js:
        C_j = annulus(M, B, j)
        if not len(C_j.members):
            skipped.append(int(j))
            continue
        inC = np.zeros(M.n, dtype=bool)
        inC[list(C_j.members)] = True
        for t in np.asarray(t_grid, dtype=float):
            mod = family.modulus(float(t), G)
            lhs = float(np.max(np.sqrt(np.sum((M.mu * inC)[:, None] * mod**2, axis=0))))
            rows.append({"j": int(j), "t": float(t), "lhs": lhs,
                         "s": max(2**j * r / math.sqrt(t), math.sqrt(t) / (2**j * r)),
                         "x": 4**j * r * r / t})
    if not rows:
        return FitReport("offdiag_lp_l2", {}, 0.0, [], notes={"skipped_j": skipped})
    volB = float(B.volume)
    lhs = np.array([q["lhs"] for q in rows])
    s = np.array([q["s"] for q in rows])
    x = np.array([q["x"] for q in rows])
    base = np.log(lhs) + (1.0 / p - 0.5) * math.log(volB)
    betas = np.arange(0.0, 4.01, 0.25) if betas is None else np.asarray(betas, float)
    best = None
    for beta in betas:
        C, c, viol, slack = _feasible_rate(base - beta * np.log(s), x, cap)
        if best is None or c > best[1]:
            best = (C, c, viol, slack, float(beta))
    C, c, viol, slack, beta = best
    for q, sl in zip(rows, slack):
        q["rhs"] = C / volB ** (1.0 / p - 0.5) * q["s"] ** beta * math.exp(-c * q["x"])
        q["slack"] = float(sl)
    return FitReport("offdiag_lp_l2", {"C": C, "c": c, "beta": beta, "p": p}, viol, rows,
                     notes={"skipped_j": skipped, "family": family.name})


def gaussian_fit(op: SpectralOperator, t_grid, t_min: float = 1.0,
                 cap: float = FIT_CAP) -> FitReport:
    """Feasible ``(C, c)`` in ``p_t(x,y) Vol(y,√t) <= C e^{-c d²/t}`` over ``t >= t_min``."""
    if op.kind != "scalar" or (op.potential is not None and not op.potential.is_zero):
        raise ValueError("gaussian_fit needs the free Laplacian (V = 0)")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < t_min):
        raise ValueError("t-grid leaves the declared regime t >= t_min")
    M = op.manifold
    D2 = M.dist**2
    ys, xs, rows = [], [], []
    for t in t_grid:
        P = heat_kernel(op, float(t))
        if P.min() < -1e-12:
            raise ConelabError(f"heat kernel negative ({P.min():.3e}) at t={t}")
        vol = M.volumes(math.sqrt(t))
        Z = np.clip(P, 0.0, None) * vol[None, :]
        with np.errstate(divide="ignore"):
            y = np.log(Z)
        ys.append(y.ravel())
        xs.append((D2 / t).ravel())
        diag = float(np.max(np.diag(Z)))
        rows.append({"t": float(t), "max_scaled_kernel": float(Z.max()), "max_diagonal": diag})
    y = np.concatenate(ys)
    x = np.concatenate(xs)
    C, c, viol, slack = _feasible_rate(y, x, cap)
    fin = np.isfinite(slack)
    k = 0
    for r in rows:
        m = M.n * M.n
        sl = slack[k:k + m]
        r["min_log_slack"] = float(np.min(sl[np.isfinite(sl)]))
        k += m
    return FitReport("gaussian_fit", {"C": C, "c": c, "t_min": t_min}, viol, rows,
                     notes={"in_regime_samples": int(fin.sum())})


# ------------------------------------------------------------ subcriticality


@dataclass(frozen=True)
class Subcriticality:
    alpha: float
    supercritical: bool
    reason: str = ""


def subcriticality_alpha(M: DiscreteManifold, V: PotentialSplit, tol: float = 1e-10):
    """Best ``α`` in ``Σ μV⁻f² <= α (Σ μV⁺f² + Σ μ|∇f|²)``."""
    if not np.any(V.vminus):
        return Subcriticality(0.0, False, "no negative part")
    W = M.cond.toarray()
    A = np.diag(W.sum(axis=1)) - W + np.diag(M.mu * V.vplus)
    Bm = np.diag(M.mu * V.vminus)
    lam, U = sla.eigh(A)
    scale = max(1.0, float(np.max(np.abs(lam))))
    ker = lam <= tol * scale
    if ker.any():
        Uk = U[:, ker]
        charge = float(np.max(np.abs(Uk.T @ Bm @ Uk)))
        if charge > tol * max(1.0, float(Bm.max())):
            return Subcriticality(float("inf"), True, "negative part charges the null space")
    Ur = U[:, ~ker]
    s = 1.0 / np.sqrt(lam[~ker])
    Kr = (s[:, None] * (Ur.T @ Bm @ Ur)) * s[None, :]
    alpha = float(sla.eigvalsh(0.5 * (Kr + Kr.T))[-1]) if Kr.size else 0.0
    alpha = max(alpha, 0.0)
    if alpha >= 1.0:
        return Subcriticality(alpha, True, "alpha >= 1")
    return Subcriticality(alpha, False, "")


def compute_p0(alpha: float, N: float) -> tuple[float, float]:
    """``(p0, p0')`` with ``p0' = 2/(1-√(1-α)) · N/(N-2)``; full range if ``N <= 2``."""
    if not (0.0 <= alpha < 1.0):
        raise ValueError("alpha must lie in [0, 1)")
    if N <= 2 or alpha == 0.0:
        return 1.0, float("inf")
    p0p = 2.0 / (1.0 - math.sqrt(1.0 - alpha)) * N / (N - 2.0)
    return p0p / (p0p - 1.0), p0p


# ---------------------------------------------------------------- R-bounds


def rbound_probe(family: OperatorFamily, p: float, n: int, trials: int = 50,
                 t_range=(0.1, 10.0), seed: int = 0) -> float:
    """Max observed ``‖(Σ|T_{t_i}f_i|²)^{1/2}‖_p / ‖(Σ|f_i|²)^{1/2}‖_p``."""
    if n < 1:
        raise ValueError("family size must be >= 1")
    M = family.op.manifold
    rng = np.random.default_rng(seed)
    lo, hi = np.log(t_range[0]), np.log(t_range[1])
    best = 0.0
    for _ in range(trials):
        ts = np.exp(rng.uniform(lo, hi, n))
        Fs = rng.standard_normal((family.op.dim, n))
        num = np.zeros(M.n)
        for i in range(n):
            num += family.modulus(float(ts[i]), Fs[:, i]) ** 2
        if family.op.kind == "scalar":
            den = np.sum(Fs**2, axis=1)
        else:
            den = M.edge_to_vertex @ np.sum(Fs**2, axis=1)
        r = lp_norm(M, np.sqrt(num), p) / lp_norm(M, np.sqrt(den), p)
        best = max(best, r)
    return best


# ------------------------------------------------------- comparison probes


def duality_pairing(M: DiscreteManifold, functional, f, g, p: float, const: float = 1.0):
    """``(|<f, g>_μ|, const · ‖Qf‖_p ‖Qg‖_{p'})``."""
    q = p / (p - 1.0) if p > 1 else float("inf")
    lhs = abs(float(np.sum(M.mu * f * g)))
    rhs = const * lp_norm(M, functional(f), p) * lp_norm(M, functional(g), q)
    return lhs, rhs


def area_constant(M: DiscreteManifold, cone_functions, p: float) -> float:
    """Max over draws of ``‖A(F)‖_p / ‖Ṽ(F)‖_p``."""
    from .cones import area_A, vertical_V

    worst = 0.0
    for F in cone_functions:
        a = lp_norm(M, area_A(M, F), p)
        v = lp_norm(M, vertical_V(F), p)
        if v > 0:
            worst = max(worst, a / v)
    return worst


def poisson_comparison_probe(op: SpectralOperator, fields) -> FitReport:
    """Smallest ``C`` with ``P_L f <= C (T1 f + T2 f)`` pointwise on the given fields.

    ``T1`` integrates ``|(e^{-t²L} - e^{-t√L})f|² / t`` and ``T2`` integrates
    ``t (|∂_t v|² + |∇v|² + V v²)`` for ``v = e^{-t²L} f``, both over cones of
    radius ``2t`` normalised by ``Vol(y, t)``.
    """
    from .cones import poisson_functional

    M = op.manifold
    P = poisson_functional(op)
    eye = sp.identity(M.n, format="csr")

    def diff_shape(t, lam):
        return np.exp(-(t**2) * lam) - np.exp(-t * np.sqrt(lam))

    def gauss(t, lam):
        return np.exp(-(t**2) * lam)

    def dt_gauss(t, lam):
        return 2.0 * t * lam * np.exp(-(t**2) * lam)

    T1 = SquareFunctional(op, [Channel("value", eye, eye)], Profile(power=-1, shape=diff_shape),
                          "linear", "T1", cone_factor=2.0)
    T2t = SquareFunctional(op, [Channel("time", eye, eye)], Profile(power=1, shape=dt_gauss),
                           "linear", "T2t", cone_factor=2.0)
    T2x = SquareFunctional(op, scalar_channels(op), Profile(power=1, shape=gauss),
                           "linear", "T2x", cone_factor=2.0)
    rows = []
    worst = 0.0
    F = np.asarray(fields, dtype=float).reshape(M.n, -1)
    for k in range(F.shape[1]):
        f = F[:, k]
        pl = P(f, "exact")
        t1 = T1(f, "exact")
        t2 = np.sqrt(T2t.squared(f)[0] + T2x.squared(f)[0])
        rhs = t1 + t2
        ratio = np.where(rhs > 0, pl / np.where(rhs > 0, rhs, 1.0), 0.0)
        worst = max(worst, float(ratio.max()))
        rows.append({"field": k, "max_ratio": float(ratio.max()), "mean_ratio": float(ratio.mean())})
    return FitReport("poisson_comparison", {"C": worst}, 0.0, rows)
