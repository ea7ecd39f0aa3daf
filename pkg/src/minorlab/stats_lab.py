"""
Estimators and analytic helpers for the top of the spectrum.

Covers scaling and tail events, tail exponent fits, decorrelation
ratios between nested minors, bookkeeping for extreme-value traces
along a trajectory, the semicircle Stieltjes transform, rigidity
residuals, smoothed eigenvalue counts, the Dyson equation for a
diagonally deformed flat-variance ensemble, and a goodness-of-fit test
for border projections.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .minor_engine import TrajectoryRecord

__all__ = [
    "scale_top",
    "classify_tail_events",
    "TailFit",
    "tail_target",
    "estimate_tail_curve",
    "fit_tail_counts",
    "tail_grid",
    "DecorrelationReport",
    "decorrelation_ratio",
    "decorrelation_from_counts",
    "subsequence_Nk",
    "partial_sums",
    "lfl_constants",
    "ExtremaTrace",
    "extrema_trace",
    "ExtensionTally",
    "extension_event_tally",
    "m_sc",
    "semicircle_cdf",
    "semicircle_quantiles",
    "RigidityReport",
    "rigidity_residuals",
    "smoothed_edge_count",
    "DysonSolution",
    "DysonDivergenceError",
    "solve_dyson",
    "dyson_density",
    "GofResult",
    "chi_square_gof",
    "write_tail_fits",
    "write_decorrelation",
    "write_extrema_trace",
]


def _g17(x):
    return format(float(x), ".17g")


# ---------------------------------------------------------------- tails

def scale_top(lambda_raw, N):
    """Edge scaling ``N**(2/3) * (lambda_raw - 2)``."""
    if np.any(np.asarray(N) < 1):
        raise ValueError("N must be >= 1")
    return np.asarray(N, dtype=float) ** (2.0 / 3.0) * (np.asarray(lambda_raw) - 2.0)


def classify_tail_events(lam1, N, x):
    """
    Indicators of ``F = {lambda_1 >= x (log N)^(2/3)}`` and
    ``E = {lambda_1 <= -x (log N)^(1/3)}``.

    Boundary values count as inside the event.
    """
    if np.any(np.asarray(x) <= 0):
        raise ValueError("x must be positive")
    if np.any(np.asarray(N) < 3):
        raise ValueError("N must be >= 3")
    L = np.log(np.asarray(N, dtype=float))
    lam1 = np.asarray(lam1, dtype=float)
    F = lam1 >= x * L ** (2.0 / 3.0)
    E = lam1 <= -x * L ** (1.0 / 3.0)
    return F, E


def tail_target(side, beta):
    """Exponent coefficient: ``2 beta / 3`` (right) or ``beta / 24`` (left)."""
    if side == "right":
        return 2.0 * beta / 3.0
    if side == "left":
        return beta / 24.0
    raise ValueError("side must be 'right' or 'left'")


@dataclass
class TailFit:
    """
    Empirical tail curve and fitted exponent.

    ``coefficient`` estimates ``c`` in ``P ~ C exp(-c t)`` with
    ``t = x**1.5`` (right) or ``x**3`` (left); ``halfwidth`` is a 95%
    confidence half-width.
    """

    side: str
    beta: Optional[int]
    levels: np.ndarray
    survival: np.ndarray
    hits: np.ndarray
    stderr: np.ndarray
    coefficient: float
    intercept: float
    halfwidth: float
    target: Optional[float]
    n_samples: int
    dropped: np.ndarray = field(default_factory=lambda: np.empty(0))
    N: Optional[int] = None

    @property
    def emp_logsurv(self):
        return np.log(self.survival)

    @property
    def se(self):
        return self.halfwidth / 1.959963984540054

    @property
    def relative_error(self):
        return abs(self.coefficient - self.target) / self.target


def tail_grid(samples, side, start, step=0.2, min_hits=10, stop=None):
    """
    Levels ``start, start + step, ...`` up to the last one that still
    has at least ``min_hits`` samples in the tail.
    """
    s = np.asarray(samples, dtype=float)
    v = s if side == "right" else -s
    top = np.sort(v)[-min_hits] if v.size >= min_hits else -np.inf
    if stop is not None:
        top = min(top, stop)
    if top < start:
        return np.empty(0)
    k = int(np.floor((top - start) / step + 1e-9))
    return start + step * np.arange(k + 1)


def estimate_tail_curve(samples, side, levels, beta=None, N=None,
                        min_hits=5) -> TailFit:
    """
    Fit the tail exponent of a sample of scaled top eigenvalues.

    For each level ``x`` the survival ``P[lambda_1 >= x]`` (right) or
    ``P[lambda_1 <= -x]`` (left) is estimated.  ``-log P`` is regressed
    on ``[1, t]`` by weighted least squares with binomial weights, and
    the slope's standard error accounts for the correlation between
    nested tail events.

    Parameters
    ----------
    samples : array_like
        Scaled top eigenvalues at a fixed ``N``.
    side : {'right', 'left'}
    levels : array_like
        Positive, increasing levels.
    beta : int, optional
        Sets the reported target coefficient.
    N : int, optional
        Recorded with the fit.
    min_hits : int
        Levels with fewer tail samples are dropped.
    """
    s = np.asarray(samples, dtype=float)
    n = s.size
    if n < 1000:
        raise ValueError("need at least 1000 samples")
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    x = np.asarray(levels, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise ValueError("levels must be increasing")
    if side == "right":
        hits = (s[None, :] >= x[:, None]).sum(axis=1)
    else:
        hits = (s[None, :] <= -x[:, None]).sum(axis=1)
    return fit_tail_counts(side, x, hits, n, beta=beta, N=N, min_hits=min_hits)


def fit_tail_counts(side, levels, hits, n, beta=None, N=None,
                    min_hits=5) -> TailFit:
    """
    Tail fit from hit counts ``hits[i] = #{samples beyond levels[i]}``
    out of ``n`` samples.  See :func:`estimate_tail_curve`.
    """
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    x = np.asarray(levels, dtype=float)
    hits = np.asarray(hits, dtype=np.int64)
    if np.any(np.diff(x) <= 0):
        raise ValueError("levels must be increasing")
    t = x ** 1.5 if side == "right" else x ** 3
    keep = hits >= min_hits
    dropped = x[~keep]
    x, t, hits = x[keep], t[keep], hits[keep]
    if x.size < 2:
        raise ValueError("fewer than two levels with enough tail hits")
    S = hits / n
    var = (1.0 - S) / (n * S)
    # nested events: Cov(log S_i, log S_j) = (1 - S_big) / (n S_big)
    Sbig = np.maximum(S[:, None], S[None, :])
    cov = (1.0 - Sbig) / (n * Sbig)
    y = -np.log(S)
    A = np.column_stack([np.ones_like(t), t])
    wts = 1.0 / np.maximum(var, 1e-300)
    AtW = A.T * wts
    Minv = np.linalg.inv(AtW @ A)
    B = Minv @ AtW
    coef = B @ y
    covb = B @ cov @ B.T
    se = float(np.sqrt(max(covb[1, 1], 0.0)))
    return TailFit(side=side, beta=beta, levels=x, survival=S, hits=hits,
                   stderr=np.sqrt(var), coefficient=float(coef[1]),
                   intercept=float(-coef[0]), halfwidth=1.959963984540054 * se,
                   target=None if beta is None else tail_target(side, beta),
                   n_samples=int(n), dropped=dropped, N=N)


def write_tail_fits(fits, path, summary_path=None):
    """``side,beta,x,emp_logsurv,stderr`` rows plus an optional summary."""
    rows = []
    for f in fits:
        for x, ls, se in zip(f.levels, f.emp_logsurv, f.stderr):
            rows.append((f.side, f.beta, float(x), float(ls), float(se)))
    rows.sort(key=lambda r: (r[0], r[1] or 0, r[2]))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["side", "beta", "x", "emp_logsurv", "stderr"])
        for side, beta, x, ls, se in rows:
            wr.writerow([side, beta, _g17(x), _g17(ls), _g17(se)])
    if summary_path is not None:
        with open(summary_path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["side", "beta", "N", "samples", "coefficient",
                         "halfwidth", "target"])
            for f in sorted(fits, key=lambda f: (f.side, f.beta or 0)):
                wr.writerow([f.side, f.beta, f.N, f.n_samples,
                             _g17(f.coefficient), _g17(f.halfwidth),
                             "" if f.target is None else _g17(f.target)])


# ------------------------------------------------------- decorrelation

@dataclass
class DecorrelationReport:
    """
    Joint tail statistics of top eigenvalues of two nested minors.

    ``ratio`` is ``P[F1 & F2] / (P[F1] P[F2])`` for the right-tail
    events; ``ratio_left`` is the same for the left-tail events.
    """

    N1: int
    N2: int
    x1: float
    x2: float
    n: int
    counts: dict
    p1: float
    p2: float
    p12: float
    ratio: float
    ratio_err: float
    ratio_left: float
    ratio_left_err: float
    pl1: float
    pl2: float
    pl12: float

    @property
    def M_over_N23(self):
        return (self.N2 - self.N1) / self.N2 ** (2.0 / 3.0)

    @property
    def regime(self):
        return "correlated" if self.M_over_N23 < 1.0 else "separated"

    @property
    def defined(self):
        return bool(np.isfinite(self.ratio))


def _ratio(na, nb, nab, n):
    pa, pb, pab = na / n, nb / n, nab / n
    if na == 0 or nb == 0:
        return pa, pb, pab, np.nan, np.nan
    r = pab / (pa * pb)
    if nab == 0:
        return pa, pb, pab, 0.0, np.nan
    # delta method for log r = log p12 - log p1 - log p2 (multinomial)
    var = ((1 - pab) / pab - (1 - pa) / pa - (1 - pb) / pb
           + 2 * (pab - pa * pb) / (pa * pb)) / n
    return pa, pb, pab, r, r * np.sqrt(max(var, 0.0))


def decorrelation_from_counts(N1, N2, x1, x2, n, counts) -> DecorrelationReport:
    """
    Build a report from event counts.

    ``counts`` has integer entries ``F1, F2, F12`` (right-tail events and
    their intersection) and ``E1, E2, E12`` (left-tail events).
    """
    c = {k: int(counts[k]) for k in ("F1", "F2", "F12", "E1", "E2", "E12")}
    f = _ratio(c["F1"], c["F2"], c["F12"], n)
    e = _ratio(c["E1"], c["E2"], c["E12"], n)
    return DecorrelationReport(N1=N1, N2=N2, x1=x1, x2=x2, n=int(n), counts=c,
                               p1=f[0], p2=f[1], p12=f[2], ratio=f[3],
                               ratio_err=f[4], ratio_left=e[3],
                               ratio_left_err=e[4], pl1=e[0], pl2=e[1],
                               pl12=e[2])


def decorrelation_ratio(lam_N1, lam_N2, x1, x2, N1, N2) -> DecorrelationReport:
    """
    Factorization ratio of the tail events of two nested minors.

    Parameters
    ----------
    lam_N1, lam_N2 : array_like
        Paired scaled top eigenvalues of ``H^(N1)`` and ``H^(N2)``.
    x1, x2 : float
        Event levels.
    N1, N2 : int
        ``N1 <= N2``.
    """
    l1 = np.asarray(lam_N1, dtype=float)
    l2 = np.asarray(lam_N2, dtype=float)
    if l1.shape != l2.shape or l1.ndim != 1:
        raise ValueError("need paired 1-D samples")
    if N2 < N1:
        raise ValueError("need N1 <= N2")
    F1, E1 = classify_tail_events(l1, N1, x1)
    F2, E2 = classify_tail_events(l2, N2, x2)
    counts = {"F1": F1.sum(), "F2": F2.sum(), "F12": (F1 & F2).sum(),
              "E1": E1.sum(), "E2": E2.sum(), "E12": (E1 & E2).sum()}
    return decorrelation_from_counts(N1, N2, x1, x2, l1.size, counts)


def write_decorrelation(reports, path):
    """``N1,N2,M_over_N23,x1,x2,p1,p2,p12,ratio,ratio_err`` rows."""
    rows = sorted(reports, key=lambda r: (r.N1, r.N2, r.x1, r.x2))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["N1", "N2", "M_over_N23", "x1", "x2", "p1", "p2", "p12",
                     "ratio", "ratio_err"])
        for r in rows:
            wr.writerow([r.N1, r.N2, _g17(r.M_over_N23), _g17(r.x1),
                         _g17(r.x2), _g17(r.p1), _g17(r.p2), _g17(r.p12),
                         _g17(r.ratio), _g17(r.ratio_err)])


# ------------------------------------------- subsequences and LFL traces

def subsequence_Nk(alpha, k):
    """``N_k = ceil(k**alpha)`` in exact integer arithmetic when possible."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    if float(alpha).is_integer():
        v = k ** int(alpha)
    else:
        f = k ** float(alpha)
        if not np.isfinite(f) or f >= 2.0**62:
            raise OverflowError(f"k**alpha too large for k={k}, alpha={alpha}")
        v = math.ceil(f)
    if v >= 2**62:
        raise OverflowError(f"k**alpha too large for k={k}, alpha={alpha}")
    return int(v)


def partial_sums(indicators, M, delta):
    """
    ``S_M`` and the tail window sum ``S_{M, delta}``.

    ``indicators[k-1]`` is the event at index ``k``; ``S_{M, delta}``
    sums ``k`` from ``ceil(M - M**(1 - delta))`` (at least 1) to ``M``.
    """
    ind = np.asarray(indicators).astype(np.int64)
    M = int(M)
    if ind.size < M:
        raise ValueError("indicators do not cover k <= M")
    lower = max(1, math.ceil(M - M ** (1.0 - delta) - 1e-9))
    return int(ind[:M].sum()), int(ind[lower - 1:M].sum())


def lfl_constants(beta):
    """``((1/(2 beta))**(2/3), -(8/beta)**(1/3))``: limsup and liminf markers."""
    return (1.0 / (2.0 * beta)) ** (2.0 / 3.0), -(8.0 / beta) ** (1.0 / 3.0)


@dataclass
class ExtremaTrace:
    """Normalized top-eigenvalue sequences with running extrema."""

    N: np.ndarray
    norm23: np.ndarray
    norm13: np.ndarray
    runmax: np.ndarray
    runmin: np.ndarray
    hist23: tuple
    hist13: tuple
    markers: dict


def extrema_trace(traj: TrajectoryRecord, beta: int,
                  bins=np.linspace(-4.0, 4.0, 161)) -> ExtremaTrace:
    """
    ``lambda_1 / (log N)^(2/3)`` with its running max and
    ``lambda_1 / (log N)^(1/3)`` with its running min.
    """
    N = np.asarray(traj.n)
    if np.any(N < 2):
        raise ValueError("trajectory must start at N >= 2")
    L = np.log(N.astype(float))
    lam = np.asarray(traj.lambda_scaled, dtype=float)
    n23 = lam / L ** (2.0 / 3.0)
    n13 = lam / L ** (1.0 / 3.0)
    up, lo = lfl_constants(beta)
    return ExtremaTrace(N=N, norm23=n23, norm13=n13,
                        runmax=np.maximum.accumulate(n23),
                        runmin=np.minimum.accumulate(n13),
                        hist23=np.histogram(n23, bins=bins),
                        hist13=np.histogram(n13, bins=bins),
                        markers={"limsup": up, "liminf": lo})


def write_extrema_trace(tr: ExtremaTrace, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["N", "norm23", "norm13", "runmax", "runmin"])
        for row in zip(tr.N, tr.norm23, tr.norm13, tr.runmax, tr.runmin):
            wr.writerow([int(row[0])] + [_g17(v) for v in row[1:]])


@dataclass
class ExtensionTally:
    """Per-window extension events along one trajectory."""

    k: np.ndarray
    windows: list
    events: np.ndarray
    max_abs_martingale: np.ndarray

    @property
    def count(self):
        return int(self.events.sum())


def extension_event_tally(traj: TrajectoryRecord, alpha, c, delta,
                          k_range=None) -> ExtensionTally:
    """
    Count windows ``[N_{k-1}+1, N_k]`` where the normalized top
    eigenvalue exceeds ``c + delta`` inside while the endpoint stays at
    or below ``c``.

    Parameters
    ----------
    traj : TrajectoryRecord
    alpha : float
        Subsequence exponent, ``N_k = ceil(k**alpha)``.
    c, delta : float
    k_range : (int, int), optional
        Inclusive range of ``k``.  By default every ``k >= 2`` whose
        window lies inside the trajectory.
    """
    n0, n1 = int(traj.n[0]), int(traj.n[-1])
    if k_range is None:
        ks = []
        k = 2
        while True:
            lo, hi = subsequence_Nk(alpha, k - 1) + 1, subsequence_Nk(alpha, k)
            if hi > n1:
                break
            if lo >= n0 and hi >= lo:
                ks.append(k)
            k += 1
    else:
        ks = list(range(int(k_range[0]), int(k_range[1]) + 1))
    if not ks:
        raise ValueError("trajectory covers no complete window")
    windows, events, mx = [], [], []
    lam = np.asarray(traj.lambda_scaled, dtype=float)
    for k in ks:
        lo, hi = subsequence_Nk(alpha, k - 1) + 1, subsequence_Nk(alpha, k)
        if lo < n0 or hi > n1:
            raise ValueError(f"window k={k} [{lo}, {hi}] not covered by "
                             f"trajectory [{n0}, {n1}]")
        sl = slice(lo - n0, hi - n0 + 1)
        n = np.arange(lo, hi + 1)
        inside = np.any(lam[sl] >= (c + delta) * np.log(n) ** (2.0 / 3.0))
        end = lam[hi - n0] <= c * np.log(hi) ** (2.0 / 3.0)
        X = hi ** (2.0 / 3.0) * np.cumsum((traj.xi1_sq[sl] - 1.0) / n)
        windows.append((lo, hi))
        events.append(bool(inside and end))
        mx.append(float(np.abs(X).max()))
    return ExtensionTally(k=np.array(ks), windows=windows,
                          events=np.array(events), max_abs_martingale=np.array(mx))


# ------------------------------------------------- semicircle utilities

def m_sc(z):
    """
    Stieltjes transform of the semicircle law.

    The root of ``m**2 + z m + 1 = 0`` with ``Im m * Im z > 0``,
    evaluated as ``-2 / (z + sqrt(z - 2) sqrt(z + 2))`` to avoid
    cancellation at large ``|z|``.
    """
    z = np.asarray(z, dtype=complex)
    s = np.sqrt(z - 2.0) * np.sqrt(z + 2.0)
    return -2.0 / (z + s)


def semicircle_cdf(x):
    x = np.clip(np.asarray(x, dtype=float), -2.0, 2.0)
    return 0.5 + (x * np.sqrt(4.0 - x * x) / 4.0 + np.arcsin(x / 2.0)) / np.pi


def semicircle_quantiles(N, maxiter=100):
    """
    Classical locations ``gamma_i``, ``i = 1..N``, defined by
    ``int_{gamma_i}^2 rho_sc = i / N`` (descending).
    """
    q = 1.0 - np.arange(1, N + 1) / N
    lo = np.full(N, -2.0)
    hi = np.full(N, 2.0)
    x = np.clip(4 * q - 2, -2, 2)
    for _ in range(maxiter):
        F = semicircle_cdf(x) - q
        lo = np.where(F < 0, x, lo)
        hi = np.where(F < 0, hi, x)
        rho = np.sqrt(np.maximum(4.0 - x * x, 0.0)) / (2.0 * np.pi)
        with np.errstate(divide="ignore", invalid="ignore"):
            nx = x - F / rho
        bad = ~((nx > lo) & (nx < hi))
        nx = np.where(bad, 0.5 * (lo + hi), nx)
        if np.all(np.abs(nx - x) <= 1e-15 * (1 + np.abs(x))):
            return nx
        x = nx
    if np.max(hi - lo) > 1e-12:
        raise ArithmeticError("semicircle quantile iteration did not converge")
    return x


@dataclass
class RigidityReport:
    residuals: np.ndarray
    gamma: np.ndarray
    threshold: float

    @property
    def max(self):
        return float(self.residuals.max())

    @property
    def exceed_fraction(self):
        return float((self.residuals > self.threshold).mean())


def rigidity_residuals(spectrum, N=None, epsilon=0.1) -> RigidityReport:
    """
    ``|lambda_i - gamma_i| N**(2/3) min(i, N + 1 - i)**(1/3)``.

    ``threshold`` is ``N**epsilon``, for diagnostics only.
    """
    lam = -np.sort(-np.asarray(spectrum, dtype=float))
    if N is None:
        N = lam.size
    if lam.size != N:
        raise ValueError("spectrum length must equal N")
    gamma = semicircle_quantiles(N)
    i = np.arange(1, N + 1)
    res = np.abs(lam - gamma) * N ** (2.0 / 3.0) * np.minimum(i, N + 1 - i) ** (1.0 / 3.0)
    return RigidityReport(residuals=res, gamma=gamma, threshold=N ** epsilon)


def smoothed_edge_count(spectrum, E, E_L, eta):
    """
    Cauchy-mollified number of eigenvalues in ``[E, E_L]``,
    ``sum_i [arctan((E_L - l_i)/eta) - arctan((E - l_i)/eta)] / pi``.
    """
    if not E < E_L:
        raise ValueError("need E < E_L")
    if not eta > 0:
        raise ValueError("eta must be positive")
    lam = np.asarray(spectrum, dtype=float)
    return float((np.arctan((E_L - lam) / eta)
                  - np.arctan((E - lam) / eta)).sum() / np.pi)


# ------------------------------------------------------ Dyson equation

class DysonDivergenceError(ArithmeticError):
    def __init__(self, msg, residual=np.nan):
        super().__init__(msg)
        self.residual = residual


@dataclass
class DysonSolution:
    """Solution of ``-1/M_i = z - a_i + s**2 <M>``."""

    z: complex
    M: np.ndarray
    residual: float
    iterations: int

    @property
    def mean(self):
        return complex(self.M.mean())

    @property
    def density(self):
        return float(self.M.mean().imag / np.pi)


def solve_dyson(z, a, s=1.0, tol=1e-10, maxiter=10000, m0=None) -> DysonSolution:
    """
    Solve the Dyson equation for a diagonal deformation and flat
    variance ``s**2``.

    The equation reduces to a scalar one for ``m = <M>``; it is
    iterated with damping from ``m_sc(z/s)/s`` (or ``m0``) and polished
    by Newton steps, keeping ``Im m > 0``.

    Parameters
    ----------
    z : complex
        ``Im z > 0``.
    a : array_like
        Real deformation.
    s : float
        Standard deviation level of the flat profile.
    """
    z = complex(z)
    if not z.imag > 0:
        raise ValueError("need Im z > 0")
    a = np.asarray(a, dtype=float)
    vals, cnt = np.unique(a, return_counts=True)
    wts = cnt / a.size
    s2 = float(s) ** 2

    def F(m):
        return -(wts / (z - vals + s2 * m)).sum()

    m = complex(m_sc(z / s) / s) if m0 is None else complex(m0)
    theta = 0.5
    res = abs(F(m) - m)
    it = 0
    for it in range(1, maxiter + 1):
        if res < 1e-3:
            # Newton on g(m) = m - F(m)
            den = z - vals + s2 * m
            gp = 1.0 - (wts * s2 / den ** 2).sum()
            new = m - (m - F(m)) / gp
        else:
            new = (1 - theta) * m + theta * F(m)
        if new.imag <= 0 or not np.isfinite(new):
            theta *= 0.5
            new = (1 - theta) * m + theta * F(m)
            if new.imag <= 0:
                new = complex(new.real, abs(m.imag) * 0.5)
        nres = abs(F(new) - new)
        m = new
        res = nres
        if res < tol * 1e-2:
            break
    M = -1.0 / (z - a + s2 * m)
    resid = float(np.abs(-1.0 / M - (z - a + s2 * M.mean())).max())
    if not resid < tol or np.any(M.imag <= 0):
        raise DysonDivergenceError("Dyson iteration did not converge", resid)
    return DysonSolution(z=z, M=M, residual=resid, iterations=it)


def dyson_density(E, a, s=1.0, eta=1e-3):
    """Self-consistent density ``Im <M(E + i eta)> / pi`` on a grid."""
    E = np.atleast_1d(np.asarray(E, dtype=float))
    out = np.empty(E.size)
    m0 = None
    for i, e in enumerate(E):
        try:
            sol = solve_dyson(e + 1j * eta, a, s, m0=m0)
        except DysonDivergenceError:
            sol = solve_dyson(e + 1j * eta, a, s)
        out[i] = sol.density
        m0 = sol.mean
    return out


# ------------------------------------------------------ goodness of fit

@dataclass
class GofResult:
    statistic: float
    pvalue: float
    mean: float
    var: float
    n: int


def chi_square_gof(samples, beta) -> GofResult:
    """
    Kolmogorov-Smirnov test of ``|xi|^2`` against ``chi2(1)`` (beta=1)
    or ``chi2(2)/2`` (beta=2).
    """
    x = np.asarray(samples, dtype=float)
    if beta == 1:
        dist = stats.chi2(1)
    elif beta == 2:
        dist = stats.expon()
    else:
        raise ValueError("beta must be 1 or 2")
    ks = stats.kstest(x, dist.cdf)
    return GofResult(statistic=float(ks.statistic), pvalue=float(ks.pvalue),
                     mean=float(x.mean()), var=float(x.var(ddof=1)), n=x.size)
