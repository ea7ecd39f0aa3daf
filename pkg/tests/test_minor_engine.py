import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minorlab.ensemble import (AlternatingDeformation, ConstantProfile,
                               EnsembleSpec, SeedContext, materialize,
                               materialize_wigner)
from minorlab.minor_engine import (ArrowheadSystem, MinorState,
                                   TrajectoryRecord, advance, arrowhead_eigen,
                                   build_arrowhead, initial_state, lanczos_top,
                                   martingale_series, run_top_trajectory,
                                   run_trajectory, solve_secular_top,
                                   xi_coefficients)


def random_system(rng, m, cplx=False, ties=False, zeros=False):
    d = np.sort(rng.standard_normal(m))[::-1]
    if ties and m > 2:
        d[1] = d[0]
        d[-1] = d[-2] + 1e-15
    b = rng.standard_normal(m)
    if cplx:
        b = b + 1j * rng.standard_normal(m)
    if zeros and m > 1:
        b[rng.integers(0, m, size=max(1, m // 4))] = 0.0
    return ArrowheadSystem(d=np.sort(d)[::-1], b=b, c=rng.standard_normal())


# --------------------------------------------------------------- xi

def test_xi_identity_basis():
    n = 6
    a = np.zeros(n - 1)
    a[0] = 0.3
    xi = xi_coefficients(np.eye(n - 1), a, n)
    assert np.allclose(xi, np.r_[np.sqrt(n) * 0.3, np.zeros(n - 2)])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 20))
def test_xi_unitary_invariance(seed, m):
    rng = np.random.default_rng(seed)
    W, _ = np.linalg.qr(rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)))
    U, _ = np.linalg.qr(rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)))
    a = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    assert np.allclose(xi_coefficients(U @ W, U @ a, m + 1),
                       xi_coefficients(W, a, m + 1), atol=1e-12)


def test_xi_dimension_mismatch():
    with pytest.raises(ValueError):
        xi_coefficients(np.eye(3), np.zeros(4), 4)


def test_xi_second_moment_complex():
    # |xi|^2 is chi^2(2)/2 with unit mean for complex gaussian borders
    root, spec, n = SeedContext(3), EnsembleSpec(2), 200
    top, pooled = [], []
    for i in range(500):
        st_ = initial_state(n - 1, spec, root.trajectory(i))
        H = materialize_wigner(n, spec, root.trajectory(i))
        xi = np.abs(xi_coefficients(st_.basis, H[:n - 1, n - 1], n)) ** 2
        top.append(xi[0])
        pooled.append(xi)
    pooled = np.concatenate(pooled)
    assert abs(pooled.mean() - 1) < 0.02
    assert abs(np.mean(top) - 1) < 4 * np.std(top) / np.sqrt(len(top))


# ---------------------------------------------------------- arrowhead

def test_build_arrowhead_small():
    spec, ctx = EnsembleSpec(1), SeedContext(1)
    H2 = materialize_wigner(2, spec, ctx)
    st1 = initial_state(1, spec, ctx)
    sys = build_arrowhead(st1, H2[:1, 1], H2[1, 1])
    assert np.isclose(sys.d[0], st1.lambdas[0] / np.sqrt(2))
    assert np.allclose(np.linalg.eigvalsh(sys.dense()), np.linalg.eigvalsh(H2))


@pytest.mark.parametrize("beta", [1, 2])
def test_arrowhead_similarity(beta):
    root = SeedContext(5)
    for inst in range(50):
        n = 2 + inst % 63
        spec, ctx = EnsembleSpec(beta), root.trajectory(inst)
        H = materialize_wigner(n, spec, ctx)
        sys = build_arrowhead(initial_state(n - 1, spec, ctx), H[:n - 1, n - 1],
                              H[n - 1, n - 1].real)
        ref = np.linalg.eigvalsh(H)
        assert np.allclose(np.linalg.eigvalsh(sys.dense()), ref,
                           atol=1e-9 * np.abs(ref).max())


def test_decoupled_border():
    d = np.array([1.5, 0.2, -0.7])
    st_ = MinorState(n=3, lambdas=d * np.sqrt(4 / 3), basis=np.eye(3))
    sys = build_arrowhead(st_, np.zeros(3), 0.0)
    mu, V = arrowhead_eigen(sys)
    assert np.allclose(mu, [1.5, 0.2, 0.0, -0.7])
    assert np.allclose(np.abs(V), np.eye(4)[:, [0, 1, 3, 2]])


def test_secular_top_closed_forms():
    s = ArrowheadSystem(d=[1.0, -1.0], b=np.sqrt([0.5, 0.5]), c=0.0)
    assert abs(solve_secular_top(s) - np.sqrt(2)) < 1e-15
    mu, V = arrowhead_eigen(s)
    assert np.allclose(mu, [np.sqrt(2), 0.0, -np.sqrt(2)], atol=1e-15)
    assert solve_secular_top(ArrowheadSystem(d=[0.0], b=[1.0], c=0.0)) == pytest.approx(1.0, abs=1e-15)
    assert solve_secular_top(ArrowheadSystem(d=[0.4, -2.0], b=[0.0, 0.0], c=0.9)) == 0.9
    assert solve_secular_top(ArrowheadSystem(d=[0.4, -2.0], b=[0.0, 0.0], c=-3.0)) == 0.4


def test_secular_rejects_nan():
    with pytest.raises(ValueError):
        solve_secular_top(ArrowheadSystem(d=[np.nan], b=[1.0], c=0.0))
    with pytest.raises(ValueError):
        arrowhead_eigen(ArrowheadSystem(d=[0.0], b=[np.nan], c=0.0))


def _subspace_angle(V1, V2):
    s = np.linalg.svd(V1.conj().T @ V2, compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1, 1)))


@pytest.mark.parametrize("cplx", [False, True])
def test_arrowhead_eigen_vs_dense(cplx):
    rng = np.random.default_rng(7)
    for k in range(100):
        m = 1 + k % 128
        sys = random_system(rng, m, cplx)
        mu, V = arrowhead_eigen(sys)
        ref, R = np.linalg.eigh(sys.dense())
        ref, R = ref[::-1], R[:, ::-1]
        scale = np.abs(ref).max()
        assert np.abs(mu - ref).max() <= 1e-9 * scale
        assert np.abs(V.conj().T @ V - np.eye(m + 1)).max() <= 1e-10
        # eigenvectors of well separated roots agree up to phase
        gaps = np.minimum(np.r_[np.inf, -np.diff(ref)], np.r_[-np.diff(ref), np.inf])
        for j in np.flatnonzero(gaps > 1e-6 * scale):
            assert _subspace_angle(V[:, [j]], R[:, [j]]) < 1e-7


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 40),
       cplx=st.booleans(), ties=st.booleans(), zeros=st.booleans())
def test_arrowhead_property(seed, m, cplx, ties, zeros):
    sys = random_system(np.random.default_rng(seed), m, cplx, ties, zeros)
    mu, V = arrowhead_eigen(sys)
    A = sys.dense()
    ref = np.linalg.eigvalsh(A)[::-1]
    scale = max(np.abs(ref).max(), 1e-300)
    assert np.all(np.diff(mu) <= 0)
    assert np.abs(mu - ref).max() <= 1e-9 * scale
    assert np.abs(V.conj().T @ V - np.eye(m + 1)).max() <= 1e-10
    assert np.abs(A @ V - V * mu).max() <= 1e-9 * scale
    top = solve_secular_top(sys)
    assert abs(top - mu[0]) <= 1e-12 * scale
    assert top >= sys.d.max() - 1e-15 * scale


def test_secular_energy_identity():
    rng = np.random.default_rng(2)
    for _ in range(20):
        sys = random_system(rng, 30)
        x = solve_secular_top(sys)
        f = x - sys.c - np.sum(sys.w / (x - sys.d))
        assert abs(f) <= 1e-10 * (1 + abs(x))


# ------------------------------------------------------------- advance

@pytest.mark.parametrize("spec", [EnsembleSpec(1), EnsembleSpec(2, "uniform"),
                                  EnsembleSpec(1, "rademacher"),
                                  EnsembleSpec(2, profile=ConstantProfile(0.7))])
def test_advance_invariants(spec):
    ctx = SeedContext(4)
    st_ = initial_state(2, spec, ctx)
    for _ in range(70):
        nxt = advance(st_, spec, ctx, refresh_every=32)
        d = np.sqrt(st_.n / nxt.n) * st_.lambdas
        assert np.all(nxt.lambdas[1:] <= d + 1e-10)
        assert np.all(d <= nxt.lambdas[:-1] + 1e-10)
        assert abs(nxt.lambdas.sum() - d.sum() - nxt.h_nn) <= 1e-10
        drift = np.abs(nxt.basis.conj().T @ nxt.basis - np.eye(nxt.n)).max()
        assert drift <= (1e-12 if nxt.steps_since_refresh == 0 else 1e-8)
        st_ = nxt
    H = materialize(st_.n, spec, ctx)
    assert np.allclose(st_.lambdas, np.linalg.eigvalsh(H)[::-1], atol=1e-10)
    assert st_.forced_refreshes == 0


def test_advance_chain_matches_dense():
    spec, ctx = EnsembleSpec(1), SeedContext(8)
    st_ = initial_state(8, spec, ctx)
    while st_.n < 64:
        st_ = advance(st_, spec, ctx, refresh_every=0)
    top = np.linalg.eigvalsh(materialize_wigner(64, spec, ctx))[-1]
    assert abs(st_.lambdas[0] - top) < 1e-8


def test_engine_rejects_deformation():
    spec = EnsembleSpec(1, deformation=AlternatingDeformation(1.0))
    with pytest.raises(ValueError, match="deformation"):
        initial_state(4, spec, SeedContext(0))


# ---------------------------------------------------------- trajectories

def test_single_record_trajectory():
    tr = run_trajectory(10, 10, EnsembleSpec(1), SeedContext(0))
    assert len(tr) == 1 and tr.n[0] == 10


def test_trajectory_record_columns(tmp_path):
    tr = run_trajectory(5, 40, EnsembleSpec(2), SeedContext(6), refresh_every=16)
    assert np.allclose(tr.lambda_scaled, tr.n ** (2 / 3) * (tr.lambda_raw - 2), rtol=1e-14, atol=1e-13)
    assert np.all((tr.corner_mass >= 0) & (tr.corner_mass <= 1))
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    with open(path) as fh:
        assert fh.readline().strip() == "n,lambda_raw,lambda_scaled,xi1_sq,h_nn,corner_mass"
    back = TrajectoryRecord.from_csv(path)
    for name in ("n", "lambda_raw", "lambda_scaled", "xi1_sq", "h_nn", "corner_mass"):
        assert np.array_equal(getattr(back, name), getattr(tr, name))


@pytest.mark.parametrize("beta", [1, 2])
def test_top_tracker_matches_full_engine(beta):
    spec, ctx = EnsembleSpec(beta), SeedContext(10)
    full = run_trajectory(40, 120, spec, ctx)
    top = run_top_trajectory(40, 120, spec, ctx, tol=1e-10)
    assert np.allclose(top.lambda_raw, full.lambda_raw, atol=1e-12)
    assert np.allclose(top.xi1_sq, full.xi1_sq, rtol=1e-6, atol=1e-9)
    assert np.allclose(top.h_nn, full.h_nn, atol=1e-15)
    f32 = run_top_trajectory(40, 120, spec, ctx, dtype=np.float32)
    assert np.allclose(f32.lambda_raw, full.lambda_raw, atol=1e-5)


def test_lanczos_top_matches_eigh():
    rng = np.random.default_rng(3)
    for n in (10, 50, 300):
        A = rng.standard_normal((n, n))
        A = (A + A.T) / np.sqrt(2 * n)
        theta, x, _ = lanczos_top(A, rng.standard_normal(n), tol=1e-12)
        assert abs(theta - np.linalg.eigvalsh(A)[-1]) < 1e-10
        assert np.linalg.norm(A @ x - theta * x) < 1e-9


# ------------------------------------------------------------ martingale

def _fake(xi, lam):
    n = np.arange(100, 100 + len(xi))
    z = np.zeros(len(xi))
    return TrajectoryRecord(n=n, lambda_raw=z, lambda_scaled=np.asarray(lam, float),
                            xi1_sq=np.asarray(xi, float), h_nn=z, corner_mass=z)


def test_martingale_zero_for_unit_xi():
    ms = martingale_series(_fake(np.ones(20), np.zeros(20)), (100, 119))
    assert np.all(ms.values == 0)
    assert ms.values[0] == 0


def test_martingale_increments_and_defect():
    rng = np.random.default_rng(0)
    xi, lam = rng.exponential(size=30), rng.standard_normal(30)
    ms = martingale_series(_fake(xi, lam), (105, 120))
    n = np.arange(106, 121)
    assert np.allclose(ms.increments, 120 ** (2 / 3) * (xi[6:21] - 1) / n)
    assert np.allclose(ms.defect, (lam[20] - lam[5:21]) - (ms.values[-1] - ms.values))
    with pytest.raises(ValueError):
        martingale_series(_fake(xi, lam), (90, 120))


def test_xi_has_unit_conditional_mean():
    # over trajectories: mean of |xi_1|^2 at each n is 1 and
    # consecutive (|xi|^2 - 1) are uncorrelated
    root, spec = SeedContext(12), EnsembleSpec(1)
    xs = np.array([run_top_trajectory(60, 80, spec, root.trajectory(i)).xi1_sq
                   for i in range(400)])
    se = xs.std(axis=0) / np.sqrt(xs.shape[0])
    assert np.all(np.abs(xs.mean(axis=0) - 1) < 4 * se)
    y = xs - 1
    prod = (y[:, 1:] * y[:, :-1]).ravel()
    assert abs(prod.mean()) < 4 * prod.std() / np.sqrt(prod.size)
