import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from minorlab.ensemble import EnsembleSpec, SeedContext, materialize_wigner
from minorlab.minor_engine import (TrajectoryRecord, initial_state,
                                   run_top_trajectory, xi_coefficients)
from minorlab.stats_lab import (chi_square_gof, classify_tail_events,
                                decorrelation_from_counts, decorrelation_ratio,
                                dyson_density, estimate_tail_curve,
                                extension_event_tally, extrema_trace,
                                fit_tail_counts, lfl_constants, m_sc,
                                partial_sums, rigidity_residuals, scale_top,
                                semicircle_quantiles, smoothed_edge_count,
                                solve_dyson, subsequence_Nk, tail_target,
                                write_decorrelation, write_extrema_trace,
                                write_tail_fits)
from oracles import semicircle_cdf, tw_moments


def _record(n, lam, xi=None):
    n = np.asarray(n)
    z = np.zeros(n.size)
    return TrajectoryRecord(n=n, lambda_raw=z, lambda_scaled=np.asarray(lam, float),
                            xi1_sq=np.ones(n.size) if xi is None else xi,
                            h_nn=z, corner_mass=z)


# ------------------------------------------------------ scaling, events

def test_scale_top_examples():
    assert scale_top(2.0, 50) == 0
    assert scale_top(2 + 50 ** (-2 / 3), 50) == pytest.approx(1, abs=1e-12)
    assert scale_top(2 - 2 * 1000 ** (-2 / 3), 1000) == pytest.approx(-2, abs=1e-12)
    with pytest.raises(ValueError):
        scale_top(2.0, 0)


def test_tail_event_boundaries():
    N, x = 100, 0.7
    L = np.log(N)
    F, E = classify_tail_events(x * L ** (2 / 3), N, x)
    assert F and not E
    F, E = classify_tail_events(0.0, N, x)
    assert not F and not E
    F, E = classify_tail_events(-x * L ** (1 / 3), N, x)
    assert E and not F
    with pytest.raises(ValueError):
        classify_tail_events(0.0, 2, x)


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(-20, 20), N=st.integers(3, 10 ** 6),
       x1=st.floats(0.01, 5), dx=st.floats(0, 5))
def test_tail_events_monotone_in_level(lam, N, x1, dx):
    F1, E1 = classify_tail_events(lam, N, x1)
    F2, E2 = classify_tail_events(lam, N, x1 + dx)
    assert F1 or not F2
    assert E1 or not E2


def test_tail_targets():
    assert tail_target("right", 2) == pytest.approx(4 / 3)
    assert tail_target("left", 1) == pytest.approx(1 / 24)
    with pytest.raises(ValueError):
        tail_target("middle", 1)


@pytest.mark.parametrize("c", [4 / 3, 0.5, 2.0])
def test_synthetic_right_tail_recovered(c):
    # exact survival exp(-c x^(3/2)) on x >= 0
    rng = np.random.default_rng(0)
    s = (rng.exponential(size=200_000) / c) ** (2 / 3)
    levels = np.arange(1.0, 2.01, 0.2)
    fit = estimate_tail_curve(s, "right", levels, beta=2)
    assert abs(fit.coefficient / c - 1) < 0.05
    assert abs(fit.intercept) < 0.1
    assert np.all(np.diff(fit.survival) <= 0)


def test_synthetic_left_tail_and_dropping():
    rng = np.random.default_rng(1)
    c = 1 / 24
    s = -(rng.exponential(size=100_000) / c) ** (1 / 3)
    fit = estimate_tail_curve(s, "left", np.arange(2.0, 9.01, 0.5), beta=1)
    assert abs(fit.coefficient / c - 1) < 0.05
    # a level far out with no hits is dropped, not fitted
    fit2 = estimate_tail_curve(s, "left", np.r_[np.arange(2.0, 9.01, 0.5), 40.0])
    assert 40.0 in fit2.dropped and fit2.coefficient == pytest.approx(fit.coefficient)
    with pytest.raises(ValueError):
        estimate_tail_curve(s[:500], "left", [2.0, 3.0])


def test_fit_from_counts_matches_samples(tmp_path):
    rng = np.random.default_rng(2)
    s = rng.standard_normal(5000)
    lv = np.array([1.0, 1.5, 2.0, 2.5])
    a = estimate_tail_curve(s, "right", lv, beta=1, N=10)
    b = fit_tail_counts("right", lv, [(s >= x).sum() for x in lv], 5000, beta=1, N=10)
    assert a.coefficient == b.coefficient and a.halfwidth == b.halfwidth
    write_tail_fits([a], tmp_path / "t.csv", tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["side", "beta", "x", "emp_logsurv", "stderr"]
    assert len(rows) == 5


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0.3, 3.0), seed=st.integers(0, 2**32 - 1))
def test_tail_fit_self_test_property(c, seed):
    rng = np.random.default_rng(seed)
    s = (rng.exponential(size=100_000) / c) ** (2 / 3)
    # levels spanning survival from e^-c down to about e^-5
    hi = (5.0 / c) ** (2 / 3)
    levels = np.linspace(1.0, max(hi, 1.5), 6)
    fit = estimate_tail_curve(s, "right", levels)
    assert abs(fit.coefficient / c - 1) < 0.05


# --------------------------------------------------------- decorrelation

def test_decorrelation_independent_pairs():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(20000), rng.standard_normal(20000)
    r = decorrelation_ratio(a, b, 0.2, 0.2, 100, 200)
    assert abs(r.ratio - 1) < 3 * r.ratio_err
    assert 0 <= r.p12 <= min(r.p1, r.p2) <= 1
    assert r.regime == "separated"


def test_decorrelation_identical_minors():
    rng = np.random.default_rng(4)
    a = rng.standard_normal(5000)
    r = decorrelation_ratio(a, a, 0.3, 0.3, 50, 50)
    assert r.ratio == pytest.approx(1 / r.p1)
    assert r.ratio >= 1 and r.regime == "correlated"


def test_decorrelation_undefined_and_csv(tmp_path):
    r = decorrelation_from_counts(10, 20, 1.0, 1.0, 100,
                                  dict(F1=0, F2=3, F12=0, E1=5, E2=5, E12=1))
    assert not r.defined and np.isnan(r.ratio)
    assert r.ratio_left == pytest.approx(0.01 / 0.0025)
    write_decorrelation([r], tmp_path / "d.csv")
    assert next(csv.reader(open(tmp_path / "d.csv"))) == [
        "N1", "N2", "M_over_N23", "x1", "x2", "p1", "p2", "p12", "ratio", "ratio_err"]


def test_decorrelation_error_calibration():
    # z-scores of independent-pair ratios are roughly standard normal
    rng = np.random.default_rng(5)
    z = []
    for _ in range(300):
        a, b = rng.standard_normal(4000), rng.standard_normal(4000)
        r = decorrelation_ratio(a, b, 0.3, 0.3, 100, 200)
        z.append((r.ratio - 1) / r.ratio_err)
    z = np.array(z)
    assert abs(z.mean()) < 0.25 and 0.8 < z.std() < 1.2


# ----------------------------------------------------------- bookkeeping

def test_subsequence_examples():
    assert subsequence_Nk(3, 2) == 8
    assert subsequence_Nk(3, 1) == 1
    assert subsequence_Nk(2.5, 3) == 16
    with pytest.raises(OverflowError):
        subsequence_Nk(50.5, 10 ** 6)
    with pytest.raises(ValueError):
        subsequence_Nk(0, 3)


def test_partial_sums_examples():
    assert partial_sums(np.zeros(100), 100, 0.5) == (0, 0)
    assert partial_sums(np.ones(100), 100, 0.5) == (100, 11)
    ind = np.random.default_rng(0).integers(0, 2, 50)
    assert partial_sums(ind, 50, 0.0) == (ind.sum(), ind.sum())
    with pytest.raises(ValueError):
        partial_sums(np.ones(5), 10, 0.5)


def test_lfl_markers():
    up, lo = lfl_constants(1)
    assert round(up, 4) == 0.6300 and lo == pytest.approx(-2)
    up, lo = lfl_constants(2)
    assert round(up, 4) == 0.3969 and round(lo, 4) == -1.5874


def test_extrema_trace(tmp_path):
    tr = extrema_trace(_record(np.arange(3, 40), np.zeros(37)), 1)
    assert np.all(tr.runmax == 0) and np.all(tr.runmin == 0)
    real = run_top_trajectory(3, 150, EnsembleSpec(1), SeedContext(2))
    tr = extrema_trace(real, 1)
    assert np.all(np.diff(tr.runmax) >= 0) and np.all(np.diff(tr.runmin) <= 0)
    assert tr.hist23[0].sum() == len(real)
    write_extrema_trace(tr, tmp_path / "e.csv")
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["N", "norm23", "norm13", "runmax", "runmin"]
    assert len(rows) == len(real) + 1


def test_extension_tally_trivial_cases():
    n = np.arange(2, 400)
    inc = np.linspace(-1, 3, n.size)
    t = extension_event_tally(_record(n, inc), 2.8, 0.6, 0.2)
    assert t.count == 0 and len(t.windows) > 0
    wild = np.random.default_rng(0).standard_normal(n.size) * 3
    assert extension_event_tally(_record(n, wild), 2.8, 0.6, 1e6).count == 0
    with pytest.raises(ValueError):
        extension_event_tally(_record(n, inc), 2.8, 0.6, 0.2, k_range=(2, 20))


def test_extension_tally_detects_event():
    n = np.arange(2, 100)
    lam = np.zeros(n.size)
    lam[30] = 10.0  # n = 32 lies in the window (22, 49]
    t = extension_event_tally(_record(n, lam), 2.8, 0.6, 0.2)
    assert t.count == 1
    lo, hi = t.windows[int(np.flatnonzero(t.events)[0])]
    assert lo <= 32 <= hi


@pytest.mark.slow
def test_extension_events_rare():
    # reduced scale: windows up to N = 339, 200 trajectories
    root, spec, events, windows = SeedContext(7), EnsembleSpec(2), 0, 0
    for i in range(200):
        tr = run_top_trajectory(2, 339, spec, root.trajectory(i), dtype=np.float32)
        ta = extension_event_tally(tr, 2.8, 0.6, 0.2)
        events += ta.count
        windows += len(ta.windows)
    assert events / windows < 0.01


# --------------------------------------------------- semicircle helpers

def test_m_sc_identity_and_symmetry():
    rng = np.random.default_rng(0)
    z = rng.uniform(-5, 5, 1000) + 1j * rng.choice([-1, 1], 1000) * 10 ** rng.uniform(-6, 1, 1000)
    m = m_sc(z)
    assert np.abs(m * m + z * m + 1).max() < 1e-14 * np.maximum(1, np.abs(z)).max()
    assert np.all(m.imag * z.imag > 0)
    assert np.allclose(m_sc(-z.conj()), -m.conj(), rtol=1e-14, atol=1e-15)


def test_m_sc_special_values():
    assert abs(m_sc(2 + 1e-14j) + 1) < 1e-6
    assert abs(m_sc(1e-14j) - 1j) < 1e-12
    assert m_sc(-1e-14j) == pytest.approx(-1j, abs=1e-12)


def test_semicircle_quantiles_and_rigidity():
    assert semicircle_quantiles(2)[0] == pytest.approx(0, abs=1e-15)
    g = semicircle_quantiles(300)
    assert np.allclose(1 - semicircle_cdf(g), np.arange(1, 301) / 300, atol=1e-13)
    rep = rigidity_residuals(g)
    assert rep.max < 1e-9
    with pytest.raises(ValueError):
        rigidity_residuals(g, N=10)


def test_rigidity_on_goe():
    root = SeedContext(9)
    mx = [rigidity_residuals(np.linalg.eigvalsh(
        materialize_wigner(512, EnsembleSpec(1), root.trajectory(i)))).max
        for i in range(100)]
    assert np.percentile(mx, 99) < 10


def test_smoothed_edge_count_limits():
    assert smoothed_edge_count([0.0], 0.0, 1.0, 1e-8) == pytest.approx(0.5, abs=1e-7)
    assert smoothed_edge_count([0.5], 0.0, 1.0, 1e-8) == pytest.approx(1.0, abs=1e-7)
    with pytest.raises(ValueError):
        smoothed_edge_count([0.0], 1.0, 0.0, 0.1)


def test_smoothed_edge_count_vs_quadrature():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = rng.integers(2, 65)
        lam = rng.uniform(-2.5, 2.5, n)
        E, EL, eta = -0.3, 1.1, 0.05

        def integrand(y):
            # (N / pi) Im <G(y + i eta)>
            return np.sum(eta / ((lam - y) ** 2 + eta ** 2)) / np.pi

        inside = np.sort(lam[(lam > E) & (lam < EL)])
        val, _ = integrate.quad(integrand, E, EL, points=inside, limit=2000,
                                epsabs=1e-12, epsrel=1e-12)
        assert abs(smoothed_edge_count(lam, E, EL, eta) - val) < 1e-8


# ------------------------------------------------------- Dyson equation

def test_dyson_reductions():
    rng = np.random.default_rng(2)
    for z in rng.uniform(-3, 3, 20) + 1j * 10 ** rng.uniform(-3, 0, 20):
        sol = solve_dyson(z, np.zeros(10))
        assert np.allclose(sol.M, m_sc(z), atol=1e-9)
        sol = solve_dyson(z, np.full(7, 0.4))
        assert np.allclose(sol.M, m_sc(z - 0.4), atol=1e-9)
        assert sol.residual < 1e-10 and np.all(sol.M.imag > 0)
    with pytest.raises(ValueError):
        solve_dyson(1.0 - 0.1j, np.zeros(3))


def test_dyson_two_band_density():
    a = np.tile([1.0, -1.0], 50)
    E = np.linspace(-3, 3, 1201)
    rho = dyson_density(E, a, s=0.4)
    assert abs(rho.sum() * (E[1] - E[0]) - 1) < 0.01
    assert rho[np.abs(E) < 0.2].max() < 1e-3
    assert rho[np.argmin(np.abs(E - 1))] > 0.3


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-4, 4), y=st.floats(1e-3, 2), s=st.floats(0.1, 2),
       seed=st.integers(0, 2**32 - 1))
def test_dyson_solution_property(x, y, s, seed):
    a = np.random.default_rng(seed).uniform(-1.5, 1.5, 12)
    sol = solve_dyson(complex(x, y), a, s)
    assert sol.residual < 1e-10 and np.all(sol.M.imag > 0)


# ------------------------------------------------------ goodness of fit

def test_gof_null_calibration():
    rng = np.random.default_rng(3)
    p = [chi_square_gof(rng.chisquare(1, 1000), 1).pvalue for _ in range(300)]
    assert stats.kstest(p, "uniform").pvalue > 1e-3
    with pytest.raises(ValueError):
        chi_square_gof([1.0], 4)


@pytest.mark.parametrize("beta", [1, 2])
def test_gof_border_projections(beta):
    # all projections of independent gaussian borders onto a fixed basis
    # are independent with the target law; 20 matrices of size 511
    root, spec, n = SeedContext(4), EnsembleSpec(beta), 512
    xs = []
    for i in range(20):
        ctx = root.trajectory(i)
        st_ = initial_state(n - 1, spec, ctx)
        H = materialize_wigner(n, spec, ctx)
        xs.append(np.abs(xi_coefficients(st_.basis, H[:n - 1, n - 1], n)) ** 2)
    g = chi_square_gof(np.concatenate(xs), beta)
    assert g.statistic < 0.03
    if beta == 1:
        assert abs(g.mean - 1) < 0.05 and abs(g.var - 2) < 0.2


# --------------------------------------------------------------- oracle

def test_tracy_widom_oracle_frozen():
    m2, v2 = tw_moments(2)
    m1, v1 = tw_moments(1)
    assert m2 == pytest.approx(-1.7710868, abs=1e-5)
    assert v2 == pytest.approx(0.8132031, abs=1e-5)
    assert m1 == pytest.approx(-1.2065464, abs=1e-5)
    assert v1 == pytest.approx(1.6076823, abs=1e-5)
