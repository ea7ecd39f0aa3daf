"""
Incremental eigen-updates along the minor process.

Growing ``H^(n-1)`` to ``H^(n)`` adds one border column.  In the basis
of the eigenvectors of ``H^(n-1)`` (padded by a zero) plus ``e_n`` the
new matrix is the arrowhead

    [ diag(d)  b ]
    [   b*     c ]

with ``d = sqrt((n-1)/n) * lambda^(n-1)``, ``b = W^* a`` and ``c = h_nn``.
Its eigenvalues are the roots of the secular function

    f(x) = x - c - sum_a |b_a|^2 / (x - d_a),

which is strictly increasing between consecutive poles.  Roots are
found relative to the nearest pole so that ``x - d_a`` keeps full
relative accuracy, and the border weights are recomputed from the
computed roots (Loewner formula) so that the eigenvectors come out
numerically orthogonal.

For long trajectories where only the top of the spectrum matters,
:func:`run_top_trajectory` tracks the top eigenpair alone with a
warm-started Lanczos iteration.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .ensemble import (EnsembleSpec, SeedContext, materialize,
                       materialize_array, sample_border)

__all__ = [
    "SecularConvergenceError",
    "MinorState",
    "ArrowheadSystem",
    "TrajectoryRecord",
    "MartingaleSeries",
    "xi_coefficients",
    "build_arrowhead",
    "solve_secular_top",
    "arrowhead_eigen",
    "initial_state",
    "refresh_state",
    "advance",
    "run_trajectory",
    "lanczos_top",
    "run_top_trajectory",
    "martingale_series",
    "spec_digest",
]

DEFLATION_TOL = 1e-12
MERGE_TOL = 1e-12
_EPS = np.finfo(float).eps


class SecularConvergenceError(ArithmeticError):
    """Root iteration hit its cap; ``residual`` holds the last |f|."""

    def __init__(self, msg, residual=np.nan):
        super().__init__(msg)
        self.residual = residual


@dataclass
class MinorState:
    """
    Eigendecomposition of ``H^(n)``.

    Attributes
    ----------
    n : int
    lambdas : ndarray, shape (n,)
        Eigenvalues, descending.
    basis : ndarray, shape (n, n)
        Orthonormal eigenvectors as columns, same order as ``lambdas``.
    steps_since_refresh : int
    xi_sq : ndarray or None
        ``|xi_a^(n)|^2`` of the step that produced this state.
    h_nn : float or None
        Corner entry of that step.
    forced_refreshes : int
        Refreshes triggered by a failed orthonormality or residual check.
    """

    n: int
    lambdas: np.ndarray
    basis: np.ndarray
    steps_since_refresh: int = 0
    xi_sq: Optional[np.ndarray] = None
    h_nn: Optional[float] = None
    forced_refreshes: int = 0


@dataclass
class ArrowheadSystem:
    """
    Arrowhead ``[diag(d), b; b*, c]``.

    ``w`` holds ``|b|^2``; ``d`` is descending.
    """

    d: np.ndarray
    b: np.ndarray
    c: float
    w: np.ndarray = field(default=None)

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.b = np.asarray(self.b)
        if self.d.shape != self.b.shape or self.d.ndim != 1:
            raise ValueError("d and b must be vectors of equal length")
        if self.w is None:
            self.w = np.abs(self.b) ** 2
        self.c = float(self.c)

    @property
    def size(self):
        return self.d.size + 1

    def dense(self):
        """The arrowhead as a dense Hermitian matrix."""
        m = self.d.size
        dtype = np.complex128 if np.iscomplexobj(self.b) else np.float64
        A = np.zeros((m + 1, m + 1), dtype=dtype)
        A[np.arange(m), np.arange(m)] = self.d
        A[:m, m] = self.b
        A[m, :m] = np.conj(self.b)
        A[m, m] = self.c
        return A


def xi_coefficients(basis, a, n):
    """
    Eigenbasis projections ``xi_a = sqrt(n) <w_a, a>`` of a new border.

    Parameters
    ----------
    basis : ndarray, shape (n-1, n-1)
        Orthonormal eigenvectors of ``H^(n-1)`` as columns.
    a : ndarray, shape (n-1,)
        Border column of ``H^(n)`` (already scaled by ``n**-0.5``).
    n : int
        New size.
    """
    basis = np.asarray(basis)
    a = np.asarray(a)
    if basis.ndim != 2 or basis.shape[0] != a.shape[0] or a.shape[0] != n - 1:
        raise ValueError("dimension mismatch between basis, border and n")
    return np.sqrt(n) * (basis.conj().T @ a)


def build_arrowhead(state: MinorState, a, h_nn) -> ArrowheadSystem:
    """
    Arrowhead form of ``H^(n+1)`` in the eigenbasis of ``H^(n)``.

    ``a`` is the H-scale border column and ``h_nn`` the new corner.
    """
    n = state.n + 1
    a = np.asarray(a)
    if a.shape != (state.n,):
        raise ValueError(f"border has shape {a.shape}, expected ({state.n},)")
    d = np.sqrt((n - 1) / n) * state.lambdas
    b = xi_coefficients(state.basis, a, n) / np.sqrt(n)
    return ArrowheadSystem(d=d, b=b, c=h_nn)


def _split(d, z, c):
    """
    Deflate negligible weights and merge near-equal poles.

    Returns the deflated diagonal (possibly with merged values), the
    reduced real weights, the active index set and the Givens
    rotations applied, as ``(p, q, cs, sn)`` tuples.
    """
    d = d.copy()
    z = z.copy()
    m = d.size
    scale = np.sqrt(z @ z) + abs(c) + (np.abs(d).max() if m else 0.0)
    z[z <= DEFLATION_TOL * scale] = 0.0
    dmax = np.abs(d).max() if m else 0.0
    rotations = []
    last = -1
    for q in range(m):
        if z[q] == 0.0:
            continue
        if last >= 0 and d[last] - d[q] <= MERGE_TOL * dmax:
            p = last
            r = np.hypot(z[p], z[q])
            cs, sn = z[p] / r, z[q] / r
            dp, dq = d[p], d[q]
            d[p] = sn * sn * dp + cs * cs * dq
            d[q] = cs * cs * dp + sn * sn * dq
            z[p], z[q] = 0.0, r
            rotations.append((p, q, cs, sn))
        last = q
    active = np.flatnonzero(z > 0.0)
    return d, z, active, rotations


def _secular_roots(p, z2, c, which="all", maxiter=200):
    """
    Roots of ``x - c - sum z2 / (x - p)`` for strictly descending poles.

    Returns ``(origin, tau)`` with root ``= p[origin] + tau`` and the
    matrix ``D = root - p`` evaluated in shifted form.  ``which='top'``
    returns only the largest root.
    """
    k = p.size
    rho = np.sqrt(z2.sum())
    if which == "top":
        nroot = 1
    else:
        nroot = k + 1
    origin = np.empty(nroot, dtype=np.intp)
    lo = np.empty(nroot)
    hi = np.empty(nroot)

    origin[0] = 0
    lo[0] = 0.0
    hi[0] = max(p[0], c) + rho - p[0]
    if nroot > 1:
        origin[k] = k - 1
        lo[k] = min(p[k - 1], c) - rho - p[k - 1]
        hi[k] = 0.0
        if k > 1:
            j = np.arange(1, k)
            g = p[j - 1] - p[j]
            mid = p[j] + 0.5 * g
            # sign of f at the midpoint picks the closer pole
            fmid = mid - c - ((z2[None, :] / (mid[:, None] - p[None, :])).sum(axis=1))
            lower = fmid >= 0
            origin[j] = np.where(lower, j, j - 1)
            lo[j] = np.where(lower, 0.0, -0.5 * g)
            hi[j] = np.where(lower, 0.5 * g, 0.0)

    delta = p[None, :] - p[origin][:, None]
    base = p[origin] - c
    tau = 0.5 * (lo + hi)
    todo = np.arange(nroot)
    resid = np.zeros(nroot)
    for _ in range(maxiter):
        if todo.size == 0:
            break
        t = tau[todo]
        D = t[:, None] - delta[todo]
        Q = z2[None, :] / D
        f = base[todo] + t - Q.sum(axis=1)
        fp = 1.0 + (Q / D).sum(axis=1)
        resid[todo] = f
        # keep the bracket: f is increasing in tau
        neg = f < 0
        lo[todo] = np.where(neg, t, lo[todo])
        hi[todo] = np.where(neg, hi[todo], t)
        # Newton on tau * f removes the pole at the origin
        F = t * f
        Fp = f + t * fp
        with np.errstate(divide="ignore", invalid="ignore"):
            step = F / Fp
        new = t - step
        l, h = lo[todo], hi[todo]
        bad = ~((new > l) & (new < h)) | ~np.isfinite(new)
        new = np.where(bad, 0.5 * (l + h), new)
        width = h - l
        done = ((np.abs(new - t) <= 4 * _EPS * np.abs(new))
                | (width <= 4 * _EPS * np.maximum(np.abs(l), np.abs(h)))
                | (f == 0.0))
        tau[todo] = np.where(f == 0.0, t, new)
        todo = todo[~done]
    if todo.size:
        raise SecularConvergenceError(
            f"secular iteration did not converge for {todo.size} root(s)",
            residual=float(np.abs(resid[todo]).max()))
    D = tau[:, None] - delta
    return origin, tau, D


def solve_secular_top(sys: ArrowheadSystem, tol: float = 1e-14) -> float:
    """
    Largest eigenvalue of an arrowhead system.

    Parameters
    ----------
    sys : ArrowheadSystem
    tol : float
        Relative tolerance for the secular residual,
        ``|f(x)| <= tol * (1 + |x|)`` up to the conditioning of ``f``
        at the returned floating point root.

    Returns
    -------
    float
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    d, w, c = sys.d, sys.w, sys.c
    if np.isnan(d).any() or np.isnan(w).any() or np.isnan(c):
        raise ValueError("NaN in arrowhead system")
    if d.size == 0:
        return c
    dd, z, active, _ = _split(d, np.sqrt(w), c)
    if active.size == 0:
        return float(max(dd.max(), c))
    origin, tau, _ = _secular_roots(dd[active], z[active] ** 2, c, which="top")
    root = dd[active][0] + tau[0]
    inactive = np.setdiff1d(np.arange(d.size), active)
    if inactive.size:
        root = max(root, dd[inactive].max())
    return float(root)


def _dense_fallback(sys):
    mu, V = np.linalg.eigh(sys.dense())
    return mu[::-1], V[:, ::-1]


def arrowhead_eigen(sys: ArrowheadSystem, tol: float = 1e-14):
    """
    All eigenpairs of an arrowhead system.

    Returns
    -------
    mu : ndarray, shape (m+1,)
        Eigenvalues, descending.
    V : ndarray, shape (m+1, m+1)
        Orthonormal eigenvectors in the arrowhead basis; the last
        coordinate is the corner.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    d, b, c = sys.d, sys.b, sys.c
    m = d.size
    if np.isnan(d).any() or np.isnan(b).any() or np.isnan(c):
        raise ValueError("NaN in arrowhead system")
    if m == 0:
        return np.array([c]), np.ones((1, 1), dtype=b.dtype if b.size else float)
    if np.any(np.diff(d) > 0):
        raise ValueError("d must be descending")
    zabs = np.abs(b)
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = np.where(zabs > 0, b / np.where(zabs > 0, zabs, 1), 1)
    dd, z, active, rotations = _split(d, zabs, c)

    cplx = np.iscomplexobj(b)
    V = np.zeros((m + 1, m + 1), dtype=np.complex128 if cplx else np.float64)
    mu = np.empty(m + 1)
    inactive = np.setdiff1d(np.arange(m), active)
    # decoupled coordinates are eigenvectors on their own
    V[inactive, np.arange(inactive.size)] = 1.0
    mu[:inactive.size] = dd[inactive]
    col = inactive.size
    if active.size == 0:
        V[m, col] = 1.0
        mu[col] = c
    else:
        pa = dd[active]
        z2 = z[active] ** 2
        try:
            origin, tau, D = _secular_roots(pa, z2, c)
        except SecularConvergenceError:
            return _dense_fallback(sys)
        roots = pa[origin] + tau
        # Loewner weights from the computed roots
        k = pa.size
        logabs = np.log(np.abs(D)).sum(axis=0)
        pd = pa[None, :] - pa[:, None]
        pd[np.arange(k), np.arange(k)] = 1.0
        logabs -= np.log(np.abs(pd)).sum(axis=0)
        zhat = np.exp(0.5 * logabs)
        X = zhat[None, :] / D
        norms = np.sqrt((X * X).sum(axis=1) + 1.0)
        V[active, col:] = (X / norms[:, None]).T
        V[m, col:] = 1.0 / norms
        mu[col:] = roots
    for p, q, cs, sn in reversed(rotations):
        rp = V[p].copy()
        rq = V[q].copy()
        V[p] = sn * rp + cs * rq
        V[q] = -cs * rp + sn * rq
    V[:m] *= phase[:, None]
    order = np.argsort(-mu, kind="stable")
    mu = mu[order]
    V = V[:, order]
    # cheap orthonormality probe
    r = np.cos(np.arange(1, m + 2) * 0.7071)
    r /= np.linalg.norm(r)
    if np.linalg.norm(V.conj().T @ (V @ r) - r) > 1e-10:
        return _dense_fallback(sys)
    return mu, V


def _border(n, spec, ctx):
    """H-scale border column and corner of ``H^(n)``."""
    a, x_nn = sample_border(n, spec, ctx)
    if spec.profile is not None:
        i = np.arange(1, n)
        a = a * spec.profile(i, np.full(n - 1, n))
        x_nn = x_nn * float(spec.profile(np.array(n), np.array(n)))
    s = 1.0 / np.sqrt(n)
    return a * s, x_nn * s


def _check_spec(spec):
    if spec.deformation is not None:
        raise ValueError("the bordered recursion needs an undeformed "
                         "ensemble (deformation must be None)")


def refresh_state(n, spec, ctx, forced_refreshes=0) -> MinorState:
    """Dense eigendecomposition of ``H^(n)``."""
    H = materialize(n, spec, ctx)
    lam, W = np.linalg.eigh(H)
    return MinorState(n=n, lambdas=lam[::-1].copy(),
                      basis=np.ascontiguousarray(W[:, ::-1]),
                      forced_refreshes=forced_refreshes)


def initial_state(n, spec: EnsembleSpec, ctx: SeedContext) -> MinorState:
    """Starting state at size ``n`` from a dense solve."""
    _check_spec(spec)
    if n < 1:
        raise ValueError("n must be >= 1")
    return refresh_state(n, spec, ctx)


def advance(state: MinorState, spec: EnsembleSpec, ctx: SeedContext,
            refresh_every: int = 64) -> MinorState:
    """
    Grow the decomposition from size ``n`` to ``n + 1``.

    Every ``refresh_every`` steps, or when the orthonormality probe
    fails, the basis is replaced by a dense eigendecomposition.
    """
    _check_spec(spec)
    n = state.n + 1
    a, h = _border(n, spec, ctx)
    sys = build_arrowhead(state, a, h)
    mu, V = arrowhead_eigen(sys)
    W = np.empty((n, n), dtype=np.result_type(state.basis, V))
    W[:-1] = state.basis @ V[:-1]
    W[-1] = V[-1]
    xi_sq = n * sys.w
    steps = state.steps_since_refresh + 1
    new = MinorState(n=n, lambdas=mu, basis=W, steps_since_refresh=steps,
                     xi_sq=xi_sq, h_nn=h, forced_refreshes=state.forced_refreshes)
    r = np.cos(np.arange(1, n + 1) * 0.5)
    r /= np.linalg.norm(r)
    drift = np.linalg.norm(W.conj().T @ (W @ r) - r)
    if drift > 1e-8 or (refresh_every and steps >= refresh_every):
        forced = new.forced_refreshes + int(drift > 1e-8)
        if drift <= 1e-8:
            # residual check of the incremental basis before replacing it
            H = materialize(n, spec, ctx)
            res = np.linalg.norm(H @ W - W * mu[None, :], axis=0).max()
            forced += int(res > 1e-8)
        fresh = refresh_state(n, spec, ctx, forced_refreshes=forced)
        fresh.xi_sq = xi_sq
        fresh.h_nn = h
        new = fresh
    return new


def spec_digest(spec: EnsembleSpec) -> str:
    payload = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


_TRAJ_FIELDS = ("n", "lambda_raw", "lambda_scaled", "xi1_sq", "h_nn",
                "corner_mass")


@dataclass
class TrajectoryRecord:
    """
    Per-step record of the top of the spectrum along a minor chain.

    Columns are parallel arrays; ``lambda_scaled`` is
    ``n**(2/3) * (lambda_raw - 2)``.
    """

    n: np.ndarray
    lambda_raw: np.ndarray
    lambda_scaled: np.ndarray
    xi1_sq: np.ndarray
    h_nn: np.ndarray
    corner_mass: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.n)

    @classmethod
    def from_rows(cls, rows, meta=None):
        cols = list(zip(*rows)) if rows else [[] for _ in _TRAJ_FIELDS]
        arrs = [np.asarray(c, dtype=float) for c in cols]
        arrs[0] = arrs[0].astype(np.int64)
        return cls(*arrs, meta=dict(meta or {}))

    def rows(self):
        for i in range(len(self.n)):
            yield (int(self.n[i]),) + tuple(
                float(getattr(self, f)[i]) for f in _TRAJ_FIELDS[1:])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(_TRAJ_FIELDS)
            for r in self.rows():
                wr.writerow([r[0]] + [format(x, ".17g") for x in r[1:]])

    @classmethod
    def from_csv(cls, path, meta=None):
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if tuple(header) != _TRAJ_FIELDS:
                raise ValueError(f"unexpected header {header}")
            rows = [(int(r[0]),) + tuple(float(x) for x in r[1:]) for r in rd]
        return cls.from_rows(rows, meta)

    def at(self, n):
        """Row index of size ``n``."""
        i = int(n) - int(self.n[0])
        if i < 0 or i >= len(self.n) or self.n[i] != n:
            raise KeyError(n)
        return i


def _record(n, lam, xi_sq, h, corner):
    return (n, lam, n ** (2.0 / 3.0) * (lam - 2.0), xi_sq, h, corner)


def run_trajectory(n_start, n_end, spec: EnsembleSpec, ctx: SeedContext,
                   refresh_every: int = 64) -> TrajectoryRecord:
    """
    Run the full arrowhead engine from ``n_start`` to ``n_end``.

    The chain starts from a dense solve at ``n_start - 1`` so that the
    first record already carries its ``xi_1``.
    """
    if n_start < 2 or n_end < n_start:
        raise ValueError("need 2 <= n_start <= n_end")
    state = initial_state(n_start - 1, spec, ctx)
    rows = []
    for n in range(n_start, n_end + 1):
        try:
            state = advance(state, spec, ctx, refresh_every)
        except Exception as exc:
            raise type(exc)(f"step n={n}: {exc}") from exc
        rows.append(_record(n, float(state.lambdas[0]), float(state.xi_sq[0]),
                            float(state.h_nn), float(abs(state.basis[-1, 0]) ** 2)))
    meta = {"spec_digest": spec_digest(spec), "master_seed": ctx.master_seed,
            "lineage": list(ctx.lineage), "refresh_every": refresh_every,
            "forced_refreshes": state.forced_refreshes, "engine": "arrowhead"}
    return TrajectoryRecord.from_rows(rows, meta)


def lanczos_top(A, q0, tol=1e-8, maxiter=400, check_every=4):
    """
    Top eigenpair of a Hermitian matrix by Lanczos with full
    reorthogonalization.

    Parameters
    ----------
    A : ndarray, shape (n, n)
        Hermitian; its dtype sets the working precision.
    q0 : ndarray, shape (n,)
        Start vector, e.g. a previous eigenvector.
    tol : float
        Stop when the residual norm ``||A x - theta x||`` falls below
        ``tol * |theta|``.
    maxiter : int

    Returns
    -------
    theta : float
    x : ndarray
        Unit eigenvector in the precision of ``A``.
    iterations : int
    """
    n = A.shape[0]
    if n <= 32:
        w, V = np.linalg.eigh(A.astype(np.result_type(A, np.float64)))
        return float(w[-1]), V[:, -1].astype(A.dtype), 0
    kmax = min(maxiter, n)
    Q = np.empty((kmax + 1, n), dtype=A.dtype)
    q = np.asarray(q0, dtype=A.dtype)
    nrm = np.linalg.norm(q)
    if not nrm > 0:
        raise ValueError("zero start vector")
    Q[0] = q / nrm
    alpha = np.empty(kmax)
    beta = np.empty(kmax)
    for k in range(kmax):
        w = A @ Q[k]
        a = float(np.vdot(Q[k], w).real)
        w -= a * Q[k]
        if k:
            w -= beta[k - 1] * Q[k - 1]
        w -= Q[:k + 1].T @ (Q[:k + 1].conj() @ w)
        bk = float(np.linalg.norm(w))
        alpha[k] = a
        beta[k] = bk
        last = k == kmax - 1
        tiny = bk <= 1e-12 * max(abs(a), 1.0)
        if k % check_every == check_every - 1 or last or tiny:
            th, S = sla.eigh_tridiagonal(alpha[:k + 1], beta[:k],
                                         select="i", select_range=(k, k))
            s = S[:, 0]
            if abs(bk * s[-1]) <= tol * abs(th[0]) or last or tiny:
                x = s.astype(A.dtype) @ Q[:k + 1]
                x /= np.linalg.norm(x)
                return float(th[0]), x, k + 1
        Q[k + 1] = w / bk
    raise SecularConvergenceError("Lanczos did not converge")


def run_top_trajectory(n_start, n_end, spec: EnsembleSpec, ctx: SeedContext,
                       dtype=np.float64, tol=1e-6) -> TrajectoryRecord:
    """
    Track only the top eigenpair from ``n_start`` to ``n_end``.

    Each step runs Lanczos on ``X^(n)`` started from the previous top
    eigenvector padded by a zero.  The border projection
    ``xi_1 = <v, x_col>`` uses that previous eigenvector, so the record
    has the same columns as :func:`run_trajectory`.

    Parameters
    ----------
    dtype : dtype
        Working precision of the matrix (``float32`` halves memory
        traffic; eigenvalue errors stay around ``1e-7`` relative).
    tol : float
        Lanczos residual tolerance relative to the top eigenvalue.
    """
    _check_spec(spec)
    if n_start < 2 or n_end < n_start:
        raise ValueError("need 2 <= n_start <= n_end")
    X = materialize_array(n_end, spec, ctx)
    if spec.profile is not None:
        idx = np.arange(1, n_end + 1)
        X = X * spec.profile(idx[:, None], idx[None, :])
    if spec.beta == 2:
        wdtype = np.complex64 if np.dtype(dtype) == np.float32 else np.complex128
    else:
        wdtype = dtype
    Xw = X.astype(wdtype)
    m = n_start - 1
    q0 = ctx.generator("lanczos").standard_normal(m).astype(wdtype)
    _, v, _ = lanczos_top(Xw[:m, :m], q0, tol=tol)
    rows = []
    for n in range(n_start, n_end + 1):
        col = X[:n - 1, n - 1]
        xi_sq = float(abs(np.vdot(v.astype(X.dtype), col)) ** 2)
        h = float(X[n - 1, n - 1].real) / np.sqrt(n)
        q0 = np.zeros(n, dtype=wdtype)
        q0[:-1] = v
        theta, v, _ = lanczos_top(Xw[:n, :n], q0, tol=tol)
        lam = theta / np.sqrt(n)
        rows.append(_record(n, lam, xi_sq, h, float(abs(v[-1]) ** 2)))
    meta = {"spec_digest": spec_digest(spec), "master_seed": ctx.master_seed,
            "lineage": list(ctx.lineage), "engine": "lanczos",
            "dtype": np.dtype(dtype).name, "tol": tol}
    return TrajectoryRecord.from_rows(rows, meta)


@dataclass
class MartingaleSeries:
    """
    Martingale ``X_{k,n}`` over one window ``(N_{k-1}, N_k]``.

    ``n`` runs from ``N_{k-1}`` to ``N_k``; ``values[0] = 0``.
    ``defect[i]`` is ``(lambda_1^(N_k) - lambda_1^(n)) - (X_{k,N_k} - X_{k,n})``.
    """

    window: tuple
    n: np.ndarray
    values: np.ndarray
    increments: np.ndarray
    defect: np.ndarray


def martingale_series(traj: TrajectoryRecord, window) -> MartingaleSeries:
    """
    Build ``X_{k,n} = N_k^{2/3} sum_{l=N_{k-1}+1}^{n} (|xi_1^(l)|^2 - 1) / l``.

    Parameters
    ----------
    traj : TrajectoryRecord
        Must contain every size in ``[N_{k-1}, N_k]``.
    window : (int, int)
        ``(N_{k-1}, N_k)``.
    """
    lo, hi = int(window[0]), int(window[1])
    if hi <= lo:
        raise ValueError("window must satisfy N_{k-1} < N_k")
    try:
        i0, i1 = traj.at(lo), traj.at(hi)
    except KeyError as exc:
        raise ValueError(f"window {window} outside trajectory range "
                         f"[{traj.n[0]}, {traj.n[-1]}]") from exc
    n = traj.n[i0:i1 + 1]
    xi = traj.xi1_sq[i0 + 1:i1 + 1]
    inc = hi ** (2.0 / 3.0) * (xi - 1.0) / n[1:]
    values = np.concatenate([[0.0], np.cumsum(inc)])
    lam = traj.lambda_scaled[i0:i1 + 1]
    defect = (lam[-1] - lam) - (values[-1] - values)
    return MartingaleSeries(window=(lo, hi), n=n, values=values,
                            increments=inc, defect=defect)
