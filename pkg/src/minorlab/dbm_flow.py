"""
Ornstein-Uhlenbeck flow on the shared array and Dyson Brownian motion.

Matrix mode evolves the entry array ``X`` by

    X <- X (1 - dt/2) + sqrt(dt) G,

with ``G`` a fresh Gaussian array of the same symmetry class.  The
noise of step ``k`` comes from the stream ``('ou', k)`` and is column
addressed like the array itself, so the ``N1`` block of an ``N2`` flow
is bit-for-bit the ``N1`` flow.

DBM mode evolves eigenvalues of ``H = X / sqrt(N)`` directly,

    d lambda_i = sqrt(2 / (beta N)) db_i
                 + (1/N) sum_{j != i} dt / (lambda_i - lambda_j)
                 - lambda_i dt / 2,

which is the eigenvalue process induced by the matrix flow.  The drift
is taken implicitly,

    x = lambda + sqrt(2 / (beta N)) dW + dt * drift(x),

whose solution minimizes a strictly convex function on the ordered
chamber and therefore keeps every gap at least ``sqrt(2 dt / N)``.  An
explicit step cannot do this: near a collision the gap is diffusive on
every time scale and can be pushed arbitrarily close to zero.  Paths
whose Newton solve fails are halved, splitting the Brownian increment
with a bridge draw.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .ensemble import EnsembleSpec, SeedContext, materialize_array
from .minor_engine import lanczos_top

__all__ = [
    "FlowState",
    "OverlapReport",
    "SubstepLimitError",
    "matrix_state",
    "dbm_state",
    "ou_matrix_step",
    "dbm_drift",
    "dbm_noise_scale",
    "dbm_step",
    "run_matrix_flow",
    "run_dbm",
    "overlap_matrix",
    "run_coupled_minor_flow",
    "write_overlap_reports",
]


class SubstepLimitError(ArithmeticError):
    """Adaptive halving reached its depth limit."""

    def __init__(self, msg, min_gap=np.nan):
        super().__init__(msg)
        self.min_gap = min_gap


@dataclass(frozen=True)
class FlowState:
    """
    State of a flow.

    Attributes
    ----------
    t : float
    mode : {'matrix', 'dbm'}
    payload : ndarray
        Unscaled array ``X_t`` (matrix mode) or eigenvalues, descending
        along the last axis (dbm mode; a 2-D payload holds a batch of
        independent paths).
    beta : int
    step : int
        Number of accepted steps; indexes the noise stream.
    dt_last : float
    """

    t: float
    mode: str
    payload: np.ndarray
    beta: int
    step: int = 0
    dt_last: float = 0.0

    @property
    def N(self):
        return self.payload.shape[-1]


def matrix_state(N, spec: EnsembleSpec, ctx: SeedContext) -> FlowState:
    """Matrix-mode state started from the shared array ``X^(N)``."""
    return FlowState(t=0.0, mode="matrix",
                     payload=materialize_array(N, spec, ctx), beta=spec.beta)


def dbm_state(lambdas, beta) -> FlowState:
    lam = np.asarray(lambdas, dtype=float)
    lam = -np.sort(-lam, axis=-1)
    if lam.shape[-1] > 1 and np.any(np.diff(lam, axis=-1) >= 0):
        raise ValueError("eigenvalues must be strictly ordered")
    return FlowState(t=0.0, mode="dbm", payload=lam, beta=beta)


def ou_matrix_step(state: FlowState, dt, spec: EnsembleSpec,
                   ctx: SeedContext) -> FlowState:
    """
    One Euler-Maruyama step of the OU flow on the entry array.

    The noise array is always Gaussian with the second moments of the
    entries of ``spec``'s symmetry class.
    """
    if state.mode != "matrix":
        raise ValueError("ou_matrix_step needs a matrix-mode state")
    if dt < 0 or not np.isfinite(dt):
        raise ValueError("dt must be a non-negative finite number")
    if dt == 0:
        return state
    X = state.payload
    noise_spec = EnsembleSpec(beta=state.beta, entry_dist="gaussian")
    G = materialize_array(X.shape[0], noise_spec, ctx.child("ou", state.step))
    X = X * (1.0 - 0.5 * dt) + np.sqrt(dt) * G
    return replace(state, t=state.t + dt, payload=X, step=state.step + 1,
                   dt_last=dt)


def dbm_noise_scale(beta, N):
    """Diffusion coefficient ``sqrt(2 / (beta N))`` of each eigenvalue."""
    return np.sqrt(2.0 / (beta * N))


def dbm_drift(lam, N):
    """
    Drift ``(1/N) sum_{j != i} 1/(lambda_i - lambda_j) - lambda_i / 2``.

    ``lam`` may be 1-D or a batch along the first axis.
    """
    lam = np.asarray(lam, dtype=float)
    diff = lam[..., :, None] - lam[..., None, :]
    n = lam.shape[-1]
    idx = np.arange(n)
    diff[..., idx, idx] = np.inf
    return (1.0 / diff).sum(axis=-1) / N - 0.5 * lam


def _local_gap(lam):
    n = lam.shape[-1]
    gaps = np.full(lam.shape, np.inf)
    if n > 1:
        g = lam[..., :-1] - lam[..., 1:]
        gaps[..., :-1] = g
        gaps[..., 1:] = np.minimum(gaps[..., 1:], g)
    return gaps


def _potential(x, y, dt, N):
    # dt * V(x) + |x - y|^2 / 2 with V = -(1/N) sum_{i<j} log(x_i - x_j) + |x|^2 / 4
    n = x.shape[-1]
    iu = np.triu_indices(n, 1)
    gaps = (x[..., :, None] - x[..., None, :])[..., iu[0], iu[1]]
    with np.errstate(invalid="ignore", divide="ignore"):
        logs = np.where(gaps > 0, np.log(np.where(gaps > 0, gaps, 1.0)), -np.inf)
    V = -logs.sum(axis=-1) / N + 0.25 * (x * x).sum(axis=-1)
    return dt * V + 0.5 * ((x - y) ** 2).sum(axis=-1)


def _ordered(x):
    if x.shape[-1] < 2:
        return np.ones(x.shape[:-1], dtype=bool)
    return np.all(np.diff(x, axis=-1) < 0, axis=-1)


def _implicit_solve(lam, y, dt, N, maxiter=50):
    """
    Solve ``x = y + dt * drift(x)`` for ordered ``x``, path by path.

    The solution minimizes a strictly convex function on the ordered
    chamber, so damped Newton started inside the chamber converges.
    Returns ``(x, converged)``.
    """
    n = lam.shape[-1]
    x = np.where(_ordered(y)[:, None], y, lam)
    eye = np.eye(n)
    done = np.zeros(x.shape[0], dtype=bool)
    for _ in range(maxiter):
        F = x - y - dt * dbm_drift(x, N)
        scale = 1.0 + np.abs(x).max(axis=-1)
        done = np.abs(F).max(axis=-1) <= 1e-13 * scale
        if done.all():
            break
        act = ~done
        xa, Fa = x[act], F[act]
        diff = xa[:, :, None] - xa[:, None, :]
        diff[:, np.arange(n), np.arange(n)] = np.inf
        w = 1.0 / diff ** 2
        # graph Laplacian of the pair weights, plus the confinement
        J = (dt / N) * (w.sum(axis=-1)[:, :, None] * eye - w) + (1.0 + 0.5 * dt) * eye
        step = -np.linalg.solve(J, Fa[:, :, None])[:, :, 0]
        ya = y[act]
        phi0 = _potential(xa, ya, dt, N)
        alpha = np.ones(xa.shape[0])
        for _ in range(60):
            cand = xa + alpha[:, None] * step
            good = _ordered(cand) & (_potential(cand, ya, dt, N)
                                     <= phi0 + 1e-14 * np.abs(phi0))
            if good.all():
                break
            alpha = np.where(good, alpha, 0.5 * alpha)
        x = x.copy()
        x[act] = np.where(good[:, None], cand, xa)
    return x, done


def _dbm_move(lam, dt, dW, N, sigma, rng, depth, max_depth):
    # lam, dW: (paths, n); a path whose implicit solve fails is halved
    prop, ok = _implicit_solve(lam, lam + sigma * dW, dt, N)
    ok &= _ordered(prop) & np.all(np.isfinite(prop), axis=-1)
    if ok.all():
        return prop, 0
    bad = ~ok
    if depth >= max_depth:
        raise SubstepLimitError(
            f"substep limit {max_depth} reached",
            min_gap=float(_local_gap(lam[bad]).min()))
    sub, w = lam[bad], dW[bad]
    # Brownian bridge: split the increment without discarding it
    w1 = 0.5 * w + np.sqrt(0.25 * dt) * rng.standard_normal(w.shape)
    mid, d1 = _dbm_move(sub, 0.5 * dt, w1, N, sigma, rng, depth + 1, max_depth)
    end, d2 = _dbm_move(mid, 0.5 * dt, w - w1, N, sigma, rng, depth + 1,
                        max_depth)
    prop[bad] = end
    return prop, max(d1, d2) + 1


def dbm_step(state: FlowState, dt, beta, N, ctx: SeedContext,
             max_depth: int = 30) -> FlowState:
    """
    One adaptive Euler-Maruyama step of Dyson Brownian motion.

    Parameters
    ----------
    state : FlowState
        DBM-mode state; a 2-D payload advances a batch of paths with
        independent noise (each path is halved on its own).
    dt : float
    beta : {1, 2}
    N : int
        Matrix size setting the ``1/N`` interaction and noise scale.
    ctx : SeedContext
        Noise of step ``k`` is drawn from the stream ``('dbm', k)``.
    max_depth : int
        Maximum number of halvings.
    """
    if state.mode != "dbm":
        raise ValueError("dbm_step needs a dbm-mode state")
    if not dt > 0:
        raise ValueError("dt must be positive")
    lam = state.payload
    rng = ctx.child("dbm", state.step).generator("noise")
    dW = np.sqrt(dt) * rng.standard_normal(lam.shape)
    new, _ = _dbm_move(np.atleast_2d(lam), dt, np.atleast_2d(dW), N,
                       dbm_noise_scale(beta, N), rng, 0, max_depth)
    new = new.reshape(lam.shape)
    if new.shape[-1] > 1 and not np.all(np.diff(new, axis=-1) < 0):
        raise AssertionError("DBM state lost strict ordering")
    return replace(state, t=state.t + dt, payload=new, step=state.step + 1,
                   dt_last=dt)


def run_matrix_flow(state, t_end, dt, spec, ctx):
    """Advance a matrix-mode state to ``t_end`` in steps of ``dt``."""
    nsteps = int(round((t_end - state.t) / dt))
    for _ in range(nsteps):
        state = ou_matrix_step(state, dt, spec, ctx)
    return state


def run_dbm(state, t_end, dt, N, ctx):
    """Advance a DBM-mode state to ``t_end`` in steps of ``dt``."""
    nsteps = int(round((t_end - state.t) / dt))
    for _ in range(nsteps):
        state = dbm_step(state, dt, state.beta, N, ctx)
    return state


def overlap_matrix(W1, W2, i_max):
    """
    Absolute overlaps ``|<pad(w_i), v_j>|`` for ``i, j < i_max``.

    Parameters
    ----------
    W1 : ndarray, shape (N1, k1)
        Unit columns; zero-padded to length ``N2``.
    W2 : ndarray, shape (N2, k2)
    i_max : int
    """
    W1 = np.asarray(W1)
    W2 = np.asarray(W2)
    N1, N2 = W1.shape[0], W2.shape[0]
    if N1 > N2:
        raise ValueError("W1 must not be longer than W2")
    if i_max > W1.shape[1] or i_max > W2.shape[1]:
        raise ValueError("i_max exceeds the available eigenvectors")
    return np.abs(W1[:, :i_max].conj().T @ W2[:N1, :i_max])


@dataclass
class OverlapReport:
    """Overlaps between eigenvectors of two nested minors at time ``t``."""

    t: float
    N1: int
    N2: int
    overlaps: np.ndarray
    top_gap: float
    lambda1: tuple = ()

    @property
    def top_overlap(self):
        return float(self.overlaps[0, 0])


def _top_vectors(H, k, dense):
    if dense or k > 1:
        lam, W = np.linalg.eigh(H)
        return lam[::-1][:k], W[:, ::-1][:, :k]
    q0 = np.cos(np.arange(1, H.shape[0] + 1) * 0.37).astype(H.dtype)
    theta, x, _ = lanczos_top(H, q0, tol=1e-10)
    return np.array([theta]), x[:, None]


def run_coupled_minor_flow(N1, N2, spec: EnsembleSpec, ctx: SeedContext,
                           t_end: float, checkpoints: Sequence[float],
                           dt: float = 0.01, i_max: int = 1,
                           dense: bool = False) -> list:
    """
    Evolve the shared array and compare the two nested minors.

    At each checkpoint both ``H^(N1)`` and ``H^(N2)`` are diagonalized
    and an :class:`OverlapReport` is recorded.

    Parameters
    ----------
    N1, N2 : int
        ``N1 <= N2``.
    t_end : float
    checkpoints : sequence of float
        Times in ``[0, t_end]``, rounded to the step grid.
    dt : float
    i_max : int
        Number of top eigenvectors compared.
    dense : bool
        Use a full dense eigensolver even for ``i_max = 1``.
    """
    if N1 > N2:
        raise ValueError("need N1 <= N2")
    cps = sorted(float(c) for c in checkpoints)
    if cps and (cps[0] < 0 or cps[-1] > t_end + 1e-12):
        raise ValueError("checkpoints must lie in [0, t_end]")
    steps = [int(round(c / dt)) for c in cps]
    state = matrix_state(N2, spec, ctx)
    reports = []
    k = 0
    for target, c in zip(steps, cps):
        while k < target:
            state = ou_matrix_step(state, dt, spec, ctx)
            k += 1
        X = state.payload
        l1, W1 = _top_vectors(X[:N1, :N1] / np.sqrt(N1), i_max, dense)
        l2, W2 = _top_vectors(X / np.sqrt(N2), i_max, dense)
        reports.append(OverlapReport(
            t=k * dt, N1=N1, N2=N2, overlaps=overlap_matrix(W1, W2, i_max),
            top_gap=float(abs(l1[0] - l2[0])), lambda1=(float(l1[0]), float(l2[0]))))
    return reports


def write_overlap_reports(reports, path, summary_path: Optional[str] = None):
    """Write ``t,N1,N2,i,j,overlap`` rows and the ``t,N1,N2,top_gap`` summary."""
    rows = []
    for r in reports:
        m = r.overlaps.shape[0]
        for i in range(m):
            for j in range(m):
                rows.append((r.t, r.N1, r.N2, i + 1, j + 1, r.overlaps[i, j]))
    rows.sort(key=lambda x: x[:5])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "N1", "N2", "i", "j", "overlap"])
        for t, a, b, i, j, v in rows:
            wr.writerow([format(t, ".17g"), a, b, i, j, format(v, ".17g")])
    if summary_path is not None:
        srows = sorted((r.t, r.N1, r.N2, r.top_gap) for r in reports)
        with open(summary_path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "N1", "N2", "top_gap"])
            for t, a, b, g in srows:
                wr.writerow([format(t, ".17g"), a, b, format(g, ".17g")])
