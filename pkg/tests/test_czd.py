import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conelab import czd
from conelab.errors import LevelTooSmallError
from conelab.manifold import build_model
from conelab.scenarios import cz_stability, cz_sweep
from conelab.spectral import assemble


@pytest.fixture(scope="module")
def grid9():
    return build_model("grid", d=2, side=9)


def test_maximal_examples(path3, grid5, rng):
    assert np.allclose(czd.maximal(grid5, np.full(grid5.n, -2.5)), 2.5)
    f = rng.standard_normal(grid5.n)
    assert np.all(czd.maximal(grid5, f) >= np.abs(f) - 1e-15)
    f3 = np.array([0.0, 0.0, 3.0])
    assert np.allclose(czd.maximal(path3, f3, centered=False), [1.0, 1.5, 3.0])
    assert np.allclose(czd.maximal(path3, f3), [1.0, 1.0, 3.0])


def test_uncentered_dominates(grid5, rng):
    f = rng.standard_normal(grid5.n)
    assert np.all(czd.maximal(grid5, f, centered=False) >= czd.maximal(grid5, f) - 1e-14)


def test_empty_exceptional_set(grid5, rng):
    f = rng.standard_normal(grid5.n)
    lam = 1.01 * czd.maximal_p(grid5, f, 1.0).max()
    dec = czd.cz_decompose(grid5, f, lam, 1.0)
    assert dec.bad == [] and np.array_equal(dec.good, f)


def test_level_too_small(grid5):
    f = np.ones(grid5.n)
    with pytest.raises(LevelTooSmallError):
        czd.cz_decompose(grid5, f, 0.5, 1.0)
    with pytest.raises(ValueError):
        czd.cz_decompose(grid5, f, 2.0, 2.0)


def test_reconstruction(rng):
    M = build_model("grid", d=2, side=7)
    f = rng.standard_normal(M.n)
    dec = czd.cz_decompose(M, f, float(np.median(czd.maximal(M, f))), 1.0)
    assert dec.reconstruction_error(f) <= 1e-12
    assert dec.report["n_balls"] > 0
    for b, B in dec.bad:
        outside = np.setdiff1d(np.arange(M.n), B.members)
        assert np.all(b[outside] == 0.0)
        w = M.mu
        assert abs(np.sum(w * b)) <= 1e-12 * max(1.0, np.sum(w * np.abs(b)))


def test_dirac_sweep(grid9):
    f = np.zeros(grid9.n)
    f[40] = 1.0
    for p in (1.0, 1.5):
        st_ = cz_stability(cz_sweep(grid9, f, p))
        for k in ("good_sup_over_lambda", "bad_mean_lambda_p", "measure_sum"):
            assert st_[k]["finite"] and st_[k]["max"] <= 8.0
        assert st_["overlap"]["finite"]


def test_remainder(grid9, rng):
    op = assemble(grid9)
    f = rng.standard_normal(grid9.n)
    dec = czd.cz_decompose(grid9, f, float(np.median(czd.maximal(grid9, f))), 1.0)
    r1 = czd.cz_remainder(op, dec, 1, range(0, 6))
    r2 = czd.cz_remainder(op, dec, 2, range(0, 6))
    assert r2.constants["decay_slope"] > r1.constants["decay_slope"]
    # annuli beyond the diameter are empty and contribute nothing
    far = czd.cz_remainder(op, dec, 1, [12])
    assert far.table == []


def test_remainder_zero_bad_part(grid9):
    op = assemble(grid9)
    f = np.zeros(grid9.n)
    f[0] = 1.0
    dec = czd.cz_decompose(grid9, f, 0.5, 1.0)
    dec.bad[:] = [(np.zeros(grid9.n), B) for _, B in dec.bad]
    rep = czd.cz_remainder(op, dec, 1, range(0, 4))
    assert all(r["I"] == 0.0 for r in rep.table)


def test_csv(tmp_path, grid5, rng):
    f = rng.standard_normal(grid5.n)
    dec = czd.cz_decompose(grid5, f, float(np.median(czd.maximal(grid5, f))), 1.0)
    text = dec.to_csv(tmp_path / "cz.csv").read_text()
    assert text.startswith("center,radius,measure") and "overlap" in text


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.0, 1.9), st.floats(0.05, 0.95))
def test_decomposition_properties(seed, p, q):
    M = build_model("grid", d=2, side=5)
    f = np.random.default_rng(seed).standard_normal(M.n)
    mp = czd.maximal_p(M, f, p)
    lam = float(np.quantile(mp, q))
    if lam <= mp.min():
        lam = float(mp.min()) * 1.01
    dec = czd.cz_decompose(M, f, lam, p)
    assert dec.reconstruction_error(f) <= 1e-12
    # balls cover the exceptional set
    covered = np.zeros(M.n, bool)
    for B in dec.balls:
        covered[B.members] = True
    assert np.all(covered[dec.omega])
    # the good part is controlled off the exceptional set
    assert np.all(np.abs(dec.good[~dec.omega]) <= lam * (1 + 1e-12))
