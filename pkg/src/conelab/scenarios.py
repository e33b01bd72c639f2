"""Registered experiment scenarios.

Each scenario takes an :class:`ExperimentConfig` and returns a list of
criterion records plus named tables.  A criterion record is
``{name, paper_anchor, measured, threshold, pass, hard}``; ``paper_anchor``
names the statement being checked.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cones, czd, forms, probes
from .manifold import DiscreteManifold, ball, build_model, doubling_fit, load_manifold_with_potential
from .spectral import PotentialSplit, assemble, calculus


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str
    manifold: dict = field(default_factory=lambda: {"kind": "grid", "d": 2, "side": 5})
    potential: dict = field(default_factory=lambda: {"kind": "zero"})
    functionals: list = field(default_factory=list)
    p_list: list = field(default_factory=lambda: [2.0])
    engine: str = "exact"
    budget: dict = field(default_factory=dict)
    seed: int = 42
    output: str = ""
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "scenario" not in doc:
            raise ConfigError("config needs a 'scenario'")
        cfg = cls(**doc)
        if cfg.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {cfg.scenario!r}")
        if cfg.engine not in ("exact", "quadrature"):
            raise ConfigError(f"unknown engine {cfg.engine!r}")
        if not isinstance(cfg.seed, int):
            raise ConfigError("seed must be an integer")
        try:
            cfg.p_list = [float(p) for p in cfg.p_list]
        except (TypeError, ValueError) as exc:
            raise ConfigError("p_list must hold numbers") from exc
        if any(p < 1 for p in cfg.p_list):
            raise ConfigError("every p must be >= 1")
        return cfg

    def search_config(self, **defaults) -> probes.SearchConfig:
        kw = dict(defaults)
        kw.update(self.budget)
        kw.setdefault("seed", self.seed)
        try:
            return probes.SearchConfig(**kw)
        except TypeError as exc:
            raise ConfigError(f"bad budget: {exc}") from exc


def make_manifold(desc: dict) -> tuple[DiscreteManifold, dict | None]:
    desc = dict(desc)
    kind = desc.pop("kind", None)
    if kind is None:
        raise ConfigError("manifold description needs a 'kind'")
    if kind == "from_file":
        return load_manifold_with_potential(desc["path"])
    try:
        return build_model(kind, **desc), None
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad manifold parameters: {exc}") from exc


def make_potential(desc: dict, M: DiscreteManifold, rng, file_pot=None) -> PotentialSplit:
    desc = dict(desc or {})
    kind = desc.get("kind", "zero")
    if kind == "zero":
        return PotentialSplit.zero(M.n)
    if kind == "random":
        return PotentialSplit.random(M.n, rng, float(desc.get("scale", 1.0)))
    if kind == "file":
        if file_pot is None:
            raise ConfigError("potential kind 'file' needs a manifold file with a potential")
        return file_pot
    if kind == "arrays":
        return PotentialSplit(np.asarray(desc["vplus"], float), np.asarray(desc["vminus"], float))
    raise ConfigError(f"unknown potential kind {kind!r}")


def criterion(name, anchor, measured, threshold, passed, hard=True) -> dict:
    return {"name": name, "paper_anchor": anchor, "measured": measured, "threshold": threshold,
            "pass": bool(passed), "hard": bool(hard)}


def _setup(cfg: ExperimentConfig, default_manifold=None, default_potential=None):
    rng = np.random.default_rng(cfg.seed)
    mspec = cfg.manifold if cfg.manifold else default_manifold
    M, fpot = make_manifold(mspec)
    V = make_potential(cfg.potential if cfg.potential else default_potential, M, rng, fpot)
    return M, V, rng


def _perp(op, F):
    """Project columns of ``F`` off the kernel of ``op``."""
    c = op.coeffs(F)
    c[op.kernel_mask] = 0.0
    return op.synth(c)


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# ----------------------------------------------------------------- scenarios


def run_l2_identities(cfg):
    M, V, rng = _setup(cfg)
    op = assemble(M, V)
    n_fields = int(cfg.params.get("fields", 5))
    n_engine = int(cfg.params.get("engine_fields", 20))
    F = _perp(op, rng.standard_normal((M.n, n_fields)))
    targets = {
        "G_L": (cones.conical_functional(op), 0.5),
        "H_L": (cones.vertical_functional(op), 0.5),
        "S_L": (cones.horizontal_functional(op), 0.25),
        "S_phi0": (cones.s_phi_functional(op, "phi0"), 0.5),
        "P_L": (cones.poisson_functional(op, "full"), 0.5),
        "P_L_time": (cones.poisson_functional(op, "time"), 0.25),
        "P_L_space": (cones.poisson_functional(op, "space"), 0.25),
    }
    rows, crit = [], []
    for name, (fn, target) in targets.items():
        worst = 0.0
        for k in range(n_fields):
            f = F[:, k]
            sq, _ = fn.squared(f)
            ratio = float(np.sum(M.mu * sq) / np.sum(M.mu * f * f))
            worst = max(worst, _rel(ratio, target))
            rows.append({"functional": name, "field": k, "ratio": ratio, "target": target})
        crit.append(criterion(f"l2_identity_{name}", f"exact L2 identity for {name}", worst,
                              1e-8, worst <= 1e-8))
    erows = []
    if n_engine:
        G = rng.standard_normal((M.n, n_engine))
        for name, fn in (("G_L", targets["G_L"][0]), ("S_L", targets["S_L"][0])):
            worst = 0.0
            for k in range(n_engine):
                a = fn.evaluate(G[:, k], "exact").values
                b = fn.evaluate(G[:, k], "quadrature").values
                rel = float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))
                worst = max(worst, rel)
                erows.append({"functional": name, "field": k, "rel_diff": rel})
            crit.append(criterion(f"engine_agreement_{name}", "exact and quadrature time integrals "
                                  "agree", worst, 1e-6, worst <= 1e-6))
    return crit, {"l2_ratios": rows, "engine_agreement": erows}


def _random_cone_functions(M, rng, count, m=16, scaling="linear"):
    t = np.geomspace(0.25, 16.0, m)
    out = []
    for _ in range(count):
        amp = rng.standard_normal((M.n, m))
        mask = rng.random((M.n, 1)) < rng.uniform(0.1, 1.0)
        out.append(cones.ConeFunction(amp * mask, t, scaling))
    return out


def run_compare_A_V(cfg):
    M, _, rng = _setup(cfg)
    n_fubini = int(cfg.params.get("fubini_draws", 50))
    n_const = int(cfg.params.get("constant_draws", 100))
    Fs = _random_cone_functions(M, rng, n_fubini)
    worst = 0.0
    rows = []
    for k, F in enumerate(Fs):
        a = probes.lp_norm(M, cones.area_A(M, F), 2)
        v = probes.lp_norm(M, cones.vertical_V(F), 2)
        worst = max(worst, _rel(a, v))
        rows.append({"draw": k, "A_l2": a, "V_l2": v})
    crit = [criterion("fubini_A_equals_V", "area and vertical tent functionals coincide in L2",
                      worst, 1e-10, worst <= 1e-10)]
    Gs = _random_cone_functions(M, rng, n_const)
    crows = []
    for p in cfg.p_list:
        C = probes.area_constant(M, Gs, p)
        crows.append({"x": p, "y": C, "series": "A_over_V"})
        crit.append(criterion(f"area_constant_p{p:g}", "area functional bounded by vertical "
                              "functional in Lp", C, "finite", math.isfinite(C), hard=True))
    return crit, {"fubini": rows, "area_constant": crows}


def run_duality(cfg):
    M, V, rng = _setup(cfg, default_potential={"kind": "random"})
    op = assemble(M, V)
    n_pairs = int(cfg.params.get("pairs", 100))
    S = cones.s_phi_functional(op, "phi0")
    G = cones.conical_functional(op)
    F = _perp(op, rng.standard_normal((M.n, n_pairs)))
    Gm = _perp(op, rng.standard_normal((M.n, n_pairs)))
    crit, rows = [], []
    s_f = np.column_stack([S(F[:, k]) for k in range(n_pairs)])
    s_g = np.column_stack([S(Gm[:, k]) for k in range(n_pairs)])
    g_f = np.column_stack([G(F[:, k]) for k in range(n_pairs)])
    g_g = np.column_stack([G(Gm[:, k]) for k in range(n_pairs)])
    for p in cfg.p_list:
        q = p / (p - 1.0) if p > 1 else float("inf")
        viol_s = viol_g = 0
        worst_s = worst_g = 0.0
        for k in range(n_pairs):
            lhs = abs(float(np.sum(M.mu * F[:, k] * Gm[:, k])))
            rs = 2.0 * probes.lp_norm(M, s_f[:, k], p) * probes.lp_norm(M, s_g[:, k], q)
            rg = probes.lp_norm(M, g_f[:, k], p) * probes.lp_norm(M, g_g[:, k], q)
            viol_s += lhs > rs
            viol_g += 0.5 * lhs > rg
            worst_s = max(worst_s, lhs / rs)
            worst_g = max(worst_g, 0.5 * lhs / rg)
            rows.append({"p": p, "pair": k, "pairing": lhs, "bound_S_phi0": rs, "bound_G_L": rg})
        crit.append(criterion(f"duality_S_phi0_p{p:g}", "pairing controlled by S_phi0 norms",
                              int(viol_s), 0, viol_s == 0))
        crit.append(criterion(f"duality_G_L_p{p:g}", "pairing controlled by conical G_L norms",
                              int(viol_g), 0, viol_g == 0))
        crit.append(criterion(f"duality_worst_ratio_p{p:g}", "pairing controlled by S_phi0 norms",
                              max(worst_s, worst_g), 1.0, max(worst_s, worst_g) <= 1.0, hard=False))
    return crit, {"pairings": rows}


def run_p_norm_sweep(cfg):
    M, V, rng = _setup(cfg)
    op = assemble(M, V)
    scfg = cfg.search_config(restarts=4, steps=20)
    rows, crit = [], []
    sel = cfg.functionals or ["G_L", "H_L"]
    builders = {"G_L": cones.conical_functional, "H_L": cones.vertical_functional,
                "S_L": cones.horizontal_functional}
    for name in sel:
        if name not in builders:
            raise ConfigError(f"unknown functional {name!r}")
        fn = builders[name](op)
        for p in cfg.p_list:
            est = probes.ratio_search(lambda f, fn=fn: fn(f, cfg.engine if M.n <= 64 else None), M,
                                      p, scfg, op=op)
            rows.append({"x": p, "y": est.ratio, "series": name})
            if name == "G_L" and p == 2.0:
                err = abs(est.ratio - 1 / math.sqrt(2))
                crit.append(criterion("G_L_p2_ratio", "L2 norm of conical G_L equals 1/sqrt(2)", err,
                                      1e-4, err <= 1e-4))
    t = float(cfg.params.get("t", 0.7))
    lin = probes.ratio_search(lambda f: calculus(op, lambda lam: np.exp(-t * lam), f), M, 2.0,
                              scfg, op=op)
    top = float(np.exp(-t * op.lambdas[0]))
    crit.append(criterion("linear_map_ratio", "norm estimator on the heat semigroup",
                          _rel(lin.ratio, top), 0.01, _rel(lin.ratio, top) <= 0.01))
    return crit, {"p_sweep": rows}


def run_dumbbell(cfg):
    sizes = [int(s) for s in cfg.params.get("sizes", [5, 9, 13, 17])]
    d = int(cfg.params.get("d", 2))
    p = float(cfg.p_list[0]) if cfg.p_list else 8.0
    scfg = cfg.search_config(restarts=4, steps=15, fd_dirs=12, n_indicators=16, batched=True)
    order, points = int(cfg.params.get("rule_order", 4)), int(cfg.params.get("rule_points", 60))
    rows = []
    ratios = {"H": [], "G": []}
    for s in sizes:
        M = build_model("dumbbell", d=d, side=s)
        op = assemble(M)
        for name, fn in (("H", cones.vertical_functional(op)), ("G", cones.conical_functional(op))):
            est = probes.ratio_search(fn.batch_evaluator(order, points), M, p, scfg, op=op)
            ratios[name].append(est.ratio)
            rows.append({"x": s, "y": est.ratio, "series": f"{name}_Delta", "witness": est.start_kind,
                         "flags": ";".join(est.flags)})
    H, G = np.array(ratios["H"]), np.array(ratios["G"])
    mono = bool(np.all(np.diff(H) >= -1e-12))
    growth = float(H[-1] / H[0])
    spread = float(G.max() / G.min())
    crit = [
        criterion("H_Delta_nondecreasing", "vertical functional grows across the dumbbell family",
                  [float(h) for h in H], "nondecreasing", mono),
        criterion("H_Delta_growth", "vertical functional grows across the dumbbell family", growth,
                  1.5, growth >= 1.5),
        criterion("G_Delta_spread", "conical functional stays bounded across the dumbbell family",
                  spread, 2.0, spread < 2.0),
    ]
    return crit, {"dumbbell": rows}


def run_gaussian_fit(cfg):
    M, _, _ = _setup(cfg)
    op = assemble(M)
    ts = np.geomspace(float(cfg.params.get("t_lo", 1.0)), float(cfg.params.get("t_hi", 50.0)),
                      int(cfg.params.get("t_count", 12)))
    rep = probes.gaussian_fit(op, ts, float(cfg.params.get("t_min", 1.0)))
    crit = [
        criterion("gaussian_feasible", "Gaussian upper bound for the heat kernel",
                  rep.max_violation, 0.0, rep.max_violation <= 1e-12),
        criterion("gaussian_rate_positive", "Gaussian upper bound for the heat kernel",
                  rep.constants["c"], 0.0, rep.constants["c"] > 0),
    ]
    tables = {"gaussian": rep.table, "gaussian_summary": [rep.summary_row()]}
    cmp_desc = cfg.params.get("compare")
    if cmp_desc:
        Mc, _ = make_manifold(cmp_desc)
        rc = probes.gaussian_fit(assemble(Mc), ts)
        ratio = rc.constants["C"] / rep.constants["C"]
        crit.append(criterion("comparison_C_ratio", "Gaussian bound degrades without doubling",
                              ratio, 10.0, ratio >= 10.0, hard=False))
        tables["comparison_summary"] = [rc.summary_row()]
    return crit, tables


def _halves(M: DiscreteManifold, gap: float, core: float = 1.0):
    """``E = B(x0, core)`` and ``F = {d(x0, .) >= core + gap}``."""
    d0 = M.dist[0]
    E = d0 <= core + 1e-12
    F = d0 >= core + gap - 1e-12
    if not F.any():
        raise ConfigError("gap larger than the model")
    return E, F


def run_offdiag(cfg):
    M, V, rng = _setup(cfg, default_potential={"kind": "random"})
    op = assemble(M, V)
    p = float(cfg.p_list[0]) if cfg.p_list else 1.0
    center = int(cfg.params.get("center", M.n // 2))
    B = ball(M, center, float(cfg.params.get("radius", 1.0)))
    ts = np.geomspace(0.1, 30.0, int(cfg.params.get("t_count", 10)))
    rep = probes.offdiag_lp_l2(probes.gradient_family(op), B, range(1, 5), ts, p,
                               seed=cfg.seed)
    crit = [criterion("offdiag_feasible", "Lp-L2 off-diagonal estimates for sqrt(t) grad e^{-tL}",
                      rep.max_violation, 0.0, rep.max_violation <= 1e-12),
            criterion("offdiag_rate_positive", "Lp-L2 off-diagonal estimates for sqrt(t) grad e^{-tL}",
                      rep.constants["c"], 0.0, rep.constants["c"] > 0)]
    E, G = _halves(M, int(cfg.params.get("gap", 5)))
    D = float(M.dist[np.ix_(E, G)].min())
    ts2 = D * D * np.geomspace(1e-3, 1e-1, 9)
    F = cones.RATIONAL
    dg = probes.davies_gaffney(probes.gradient_family(op, F), E, G, ts2)
    slope = probes.loglog_slope(ts2 / D**2, [r["lhs"] for r in dg.table])
    thr = F.tau + 0.5 - 0.2
    crit.append(criterion("gammaF_decay_slope", "off-diagonal decay of sqrt(t) grad F(tL)", slope,
                          thr, slope >= thr))
    return crit, {"offdiag": rep.table, "gammaF_decay": dg.table}


def run_davies_gaffney(cfg):
    M, _, _ = _setup(cfg)
    op = assemble(M)
    E, F = _halves(M, int(cfg.params.get("gap", 5)))
    D = float(M.dist[np.ix_(E, F)].min())
    ts = np.geomspace(D * D / 50, float(cfg.params.get("t_hi", 50.0)), 12)
    rg = probes.davies_gaffney(probes.gradient_family(op), E, F, ts)
    opf = forms.hodge_assemble(M)
    rf = probes.davies_gaffney(probes.forms_dstar_family(opf), E, F, ts)
    small = rg.table[0]["lhs"]
    crit = [
        criterion("dg_gradient_rate", "Davies-Gaffney estimates for sqrt(t) grad e^{-tL}",
                  rg.constants["c"], 0.0, rg.constants["c"] > 0),
        criterion("dg_forms_rate", "Davies-Gaffney estimates for sqrt(t) d* e^{-t Hodge}",
                  rf.constants["c"], 0.0, rf.constants["c"] > 0),
        criterion("dg_small_t_ratio", "Davies-Gaffney estimates for sqrt(t) grad e^{-tL}", small,
                  1e-6, small < 1e-6, hard=False),
    ]
    return crit, {"dg_gradient": rg.table, "dg_forms": rf.table}


def run_doubling(cfg):
    M, _, _ = _setup(cfg)
    lo, hi = float(cfg.params.get("r_min", 2.0)), float(cfg.params.get("r_max", 8.0))
    rep = doubling_fit(M, lo, hi)
    N = rep.constants["N"]
    nlo, nhi = cfg.params.get("N_range", [1.7, 2.3])
    crit = [criterion("doubling_exponent", "volume doubling with exponent N", N, [nlo, nhi],
                      nlo <= N <= nhi)]
    tables = {"doubling": rep.table, "doubling_summary": [rep.summary_row()]}
    cmp_desc = cfg.params.get("compare")
    if cmp_desc:
        Mc, _ = make_manifold(cmp_desc)
        rc = doubling_fit(Mc, *cfg.params.get("compare_window", [2.0, 6.0]))
        crit.append(criterion("comparison_flagged", "volume doubling with exponent N",
                              ";".join(rc.flags), "doubling suspect", "doubling suspect" in rc.flags,
                              hard=False))
        tables["comparison_summary"] = [rc.summary_row()]
    return crit, tables


def cz_sweep(M, f, p, decades=1.0, count=8):
    """Property constants over a λ-sweep starting just above the minimal level."""
    mp = czd.maximal_p(M, f, p)
    lo = float(mp.min()) * 1.05
    lams = np.geomspace(lo, lo * 10**decades, count)
    out = []
    for lam in lams:
        dec = czd.cz_decompose(M, f, float(lam), p)
        row = {"p": p, "lambda": float(lam), "reconstruction": dec.reconstruction_error(f)}
        row.update(dec.report)
        out.append(row)
    return out


CZ_PROPS = ("good_sup_over_lambda", "bad_mean_lambda_p", "measure_sum")


def cz_stability(rows) -> dict:
    """Max over the sweep of each property constant and its max/min variation."""
    out = {}
    for k in ("overlap",) + CZ_PROPS:
        v = np.array([r[k] for r in rows], dtype=float)
        nz = v[v > 0]
        out[k] = {"max": float(v.max()),
                  "variation": float(nz.max() / nz.min()) if len(nz) else 1.0,
                  "finite": bool(np.all(np.isfinite(v)))}
    return out


def run_czd(cfg):
    M, _, rng = _setup(cfg)
    op = assemble(M)
    budget = float(cfg.params.get("budget", 8.0))
    center = int(cfg.params.get("center", M.n // 2))
    f = np.zeros(M.n)
    f[center] = 1.0 / M.mu[center]
    rows, crit = [], []
    for p in cfg.p_list:
        sw = cz_sweep(M, f, p)
        rows += sw
        st = cz_stability(sw)
        rec = max(r["reconstruction"] for r in sw)
        crit.append(criterion(f"cz_reconstruction_p{p:g}", "decomposition f = g + sum b_i", rec,
                              1e-12, rec <= 1e-12))
        crit.append(criterion(f"cz_overlap_finite_p{p:g}", "bounded overlap of dilated balls",
                              st["overlap"]["max"], "finite", st["overlap"]["finite"]))
        for k in CZ_PROPS:
            crit.append(criterion(f"cz_{k}_p{p:g}", "decomposition constants independent of level",
                                  st[k]["max"], budget, st[k]["finite"] and st[k]["max"] <= budget))
            crit.append(criterion(f"cz_{k}_variation_p{p:g}", "decomposition constants independent "
                                  "of level", st[k]["variation"], budget,
                                  st[k]["variation"] <= budget, hard=False))
    g = rng.standard_normal(M.n)
    dec = czd.cz_decompose(M, g, float(np.median(czd.maximal(M, g))), 1.0)
    rrows, slopes = [], []
    for K in cfg.params.get("K_list", [1, 2]):
        rep = czd.cz_remainder(op, dec, int(K), range(0, 6))
        slopes.append(rep.constants["decay_slope"])
        rrows += [dict(r, K=K) for r in rep.table]
    crit.append(criterion("cz_remainder_slope_increases", "annular decay of the remainder terms",
                          slopes, "increasing", bool(np.all(np.diff(slopes) > 0))))
    crit.append(criterion("cz_random_reconstruction", "decomposition f = g + sum b_i",
                          dec.reconstruction_error(g), 1e-12, dec.reconstruction_error(g) <= 1e-12))
    return crit, {"cz_sweep": rows, "cz_remainder": rrows}


def run_subcritical(cfg):
    from .manifold import DiscreteManifold as DM

    crit = []
    one = DM.from_edges(1, [])
    s = probes.subcriticality_alpha(one, PotentialSplit(np.array([4.0]), np.array([1.0])))
    crit.append(criterion("alpha_single_vertex", "subcriticality of the negative part", s.alpha,
                          0.25, abs(s.alpha - 0.25) <= 1e-12))
    M, V, rng = _setup(cfg)
    s2 = probes.subcriticality_alpha(M, PotentialSplit(np.zeros(M.n), rng.random(M.n)))
    crit.append(criterion("supercritical_forced", "subcriticality of the negative part",
                          s2.supercritical, True, s2.supercritical))
    p0, p0p = probes.compute_p0(0.75, 4.0)
    crit.append(criterion("p0_formula", "critical exponent from alpha and N", [p0, p0p],
                          [8 / 7, 8.0], abs(p0 - 8 / 7) <= 1e-12 and abs(p0p - 8) <= 1e-12))
    rows = []
    for scale in cfg.params.get("scales", [0.05, 0.1, 0.2, 0.4]):
        Vt = PotentialSplit(np.ones(M.n), scale * rng.random(M.n))
        r = probes.subcriticality_alpha(M, Vt)
        N = float(cfg.params.get("N", 2.0))
        p0, p0p = probes.compute_p0(r.alpha, N) if not r.supercritical else (math.nan, math.nan)
        rows.append({"x": scale, "y": r.alpha, "series": "alpha", "p0": p0, "p0_prime": p0p})
    return crit, {"alpha_sweep": rows}


def run_forms_suite(cfg):
    crit, tables = [], {}
    M, _, rng = _setup(cfg)
    n_fields = int(cfg.params.get("fields", 100))
    worst = 0.0
    rows = []
    for desc in cfg.params.get("models", [{"kind": "grid", "d": 2, "side": 5},
                                          {"kind": "dumbbell", "d": 2, "side": 4}]):
        Mm, _ = make_manifold(desc)
        r = forms.commutation_check(Mm, n_fields, cfg.seed)
        worst = max(worst, r["max_residual"])
        rows.append(dict(desc=str(desc), **r))
    crit.append(criterion("commutation", "d Delta = Hodge d", worst, 1e-12, worst <= 1e-12))
    op = assemble(M)
    opf = forms.hodge_assemble(M)
    tw = forms.intertwining_check(op, opf, seed=cfg.seed)
    crit.append(criterion("intertwining", "d e^{-t Delta} = e^{-t Hodge} d", tw, 1e-9, tw <= 1e-9))
    G = forms.conical_forms_functional(opf)
    n_eng = int(cfg.params.get("engine_fields", 20))
    W = rng.standard_normal((M.n_edges, n_eng))
    ew = 0.0
    for k in range(n_eng):
        a = G.evaluate(W[:, k], "exact").values
        b = G.evaluate(W[:, k], "quadrature").values
        ew = max(ew, float(np.max(np.abs(a - b)) / max(a.max(), 1e-300)))
    crit.append(criterion("engine_agreement_G_forms", "exact and quadrature time integrals agree",
                          ew, 1e-6, ew <= 1e-6))
    Wp = _perp(opf, W[:, :5])
    ratios = [G.evaluate(Wp[:, k]).l2_sq(M.mu) / forms.edge_norm(M, Wp[:, k]) ** 2 for k in range(5)]
    e1 = max(_rel(r, 0.5) for r in ratios)
    crit.append(criterion("l2_identity_G_forms", "form conical functional bounded on L2", e1, 1e-8,
                          e1 <= 1e-8))
    P = forms.poisson_forms_functional(opf)
    pr = [P.evaluate(Wp[:, k]).l2_sq(M.mu) / forms.edge_norm(M, Wp[:, k]) ** 2 for k in range(5)]
    e2 = max(_rel(r, 0.5) for r in pr)
    crit.append(criterion("l2_identity_P_forms", "Poisson form functional bounded on L2", e2, 1e-8,
                          e2 <= 1e-8))
    ex, h, diag = forms.hodge_decompose(op, W[:, 0])
    hr = max(diag.values())
    crit.append(criterion("hodge_projectors", "exact forms orthogonal to co-closed forms", hr,
                          1e-10, hr <= 1e-10))
    f = _perp(op, rng.standard_normal(M.n))
    a = G.evaluate(forms.d_op(M, f)).values
    b = forms.intertwined_scalar_functional(op).evaluate(f).values
    e3 = float(np.max(np.abs(a - b)) / max(b.max(), 1e-300))
    crit.append(criterion("forms_scalar_intertwining", "form functional of df matches scalar "
                          "functional", e3, 1e-8, e3 <= 1e-8))
    tables["commutation"] = rows
    return crit, tables


def run_poisson_suite(cfg):
    M, V, rng = _setup(cfg, default_potential={"kind": "random"})
    op = assemble(M, V)
    F = _perp(op, rng.standard_normal((M.n, int(cfg.params.get("fields", 5)))))
    full, t, x = (cones.poisson_functional(op, part) for part in ("full", "time", "space"))
    rows, worst = [], {"full": 0.0, "time": 0.0, "space": 0.0, "pyth": 0.0}
    for k in range(F.shape[1]):
        f = F[:, k]
        n2 = float(np.sum(M.mu * f * f))
        a, b, c = full.squared(f)[0], t.squared(f)[0], x.squared(f)[0]
        worst["full"] = max(worst["full"], _rel(float(np.sum(M.mu * a)) / n2, 0.5))
        worst["time"] = max(worst["time"], _rel(float(np.sum(M.mu * b)) / n2, 0.25))
        worst["space"] = max(worst["space"], _rel(float(np.sum(M.mu * c)) / n2, 0.25))
        worst["pyth"] = max(worst["pyth"], float(np.max(np.abs(a - b - c)) / max(a.max(), 1e-300)))
        rows.append({"field": k, "full": float(np.sum(M.mu * a)) / n2,
                     "time": float(np.sum(M.mu * b)) / n2, "space": float(np.sum(M.mu * c)) / n2})
    crit = [criterion(f"poisson_{k}", "Poisson cone functional identity on L2", v, 1e-8, v <= 1e-8)
            for k, v in worst.items()]
    g = rng.standard_normal(M.n)
    ea = full.evaluate(g, "exact").values
    eb = full.evaluate(g, "quadrature").values
    ed = float(np.max(np.abs(ea - eb)) / ea.max())
    crit.append(criterion("engine_agreement_P_L", "exact and quadrature time integrals agree", ed,
                          1e-6, ed <= 1e-6))
    rep = probes.poisson_comparison_probe(op, rng.standard_normal((M.n, int(cfg.params.get(
        "comparison_fields", 3)))))
    crit.append(criterion("poisson_comparison_C", "pointwise comparison of P_L with heat-type cones",
                          rep.constants["C"], "finite", math.isfinite(rep.constants["C"]),
                          hard=False))
    return crit, {"poisson_l2": rows, "poisson_comparison": rep.table}


def run_riesz(cfg):
    M, _, rng = _setup(cfg)
    op = assemble(M)
    opf = forms.hodge_assemble(M)
    n = int(cfg.params.get("pairs", 20))
    iso, adj = 0.0, 0.0
    rows = []
    for k in range(n):
        f = _perp(op, rng.standard_normal(M.n))
        r = forms.riesz_scalar(op, f)
        e = _rel(forms.edge_norm(M, r.values), math.sqrt(float(np.sum(M.mu * f * f))))
        iso = max(iso, e)
        g = rng.standard_normal(M.n)
        w = rng.standard_normal(M.n_edges)
        lhs = forms.edge_inner(M, forms.riesz_scalar(op, g).values, w)
        rhs = float(np.sum(M.mu * g * forms.riesz_forms(opf, w).values))
        a = abs(lhs - rhs) / max(1.0, abs(lhs))
        adj = max(adj, a)
        rows.append({"pair": k, "isometry_err": e, "adjoint_err": a})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        zero = float(np.max(np.abs(forms.riesz_scalar(op, np.ones(M.n)).values)))
    crit = [
        criterion("riesz_isometry", "Riesz transform d Delta^{-1/2} is an isometry on the kernel "
                  "complement", iso, 1e-10, iso <= 1e-10),
        criterion("riesz_adjoint", "scalar and form Riesz transforms are adjoint", adj, 1e-10,
                  adj <= 1e-10),
        criterion("riesz_constant_zero", "Riesz transform kills constants", zero, 1e-12,
                  zero <= 1e-12),
    ]
    return crit, {"riesz": rows}


SCENARIOS: dict[str, Callable[[ExperimentConfig], tuple[list, dict]]] = {
    "l2-identities": run_l2_identities,
    "compare-A-V": run_compare_A_V,
    "duality-lower-bound": run_duality,
    "p-norm-sweep": run_p_norm_sweep,
    "dumbbell-divergence": run_dumbbell,
    "gaussian-fit": run_gaussian_fit,
    "offdiag-probe": run_offdiag,
    "davies-gaffney": run_davies_gaffney,
    "doubling-fit": run_doubling,
    "czd-check": run_czd,
    "subcritical": run_subcritical,
    "forms-suite": run_forms_suite,
    "poisson-suite": run_poisson_suite,
    "riesz-compare": run_riesz,
}


# table name -> (x column, y columns, grouping column or None)
PLOT_TABLES = {
    "gaussian": ("t", ["max_scaled_kernel"], None),
    "offdiag": ("t", ["lhs"], "j"),
    "gammaF_decay": ("t", ["lhs"], None),
    "dg_gradient": ("t", ["lhs"], None),
    "dg_forms": ("t", ["lhs"], None),
    "doubling": ("r", ["mean_log_vol", "doubling_ratio"], None),
    "cz_sweep": ("lambda", ["good_sup_over_lambda", "bad_mean_lambda_p", "measure_sum", "overlap"],
                 "p"),
    "cz_remainder": ("j", ["I"], "K"),
}


def plot_rows(rows, x, ys, group=None) -> list[dict]:
    """Long-format ``(x, y, series)`` rows from a wide sweep table."""
    out = []
    for r in rows:
        for y in ys:
            series = y if group is None else f"{y}[{group}={r[group]}]"
            out.append({"x": r[x], "y": r[y], "series": series})
    return out


def run_scenario(cfg: ExperimentConfig) -> tuple[list, dict]:
    crit, tables = SCENARIOS[cfg.scenario](cfg)
    for name, (x, ys, group) in PLOT_TABLES.items():
        if name in tables and tables[name]:
            tables[f"{name}_plot"] = plot_rows(tables[name], x, ys, group)
    return crit, tables
