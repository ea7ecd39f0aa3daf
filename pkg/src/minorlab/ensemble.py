"""
Wigner ensembles built on one shared infinite entry array.

Every entry ``x_ij`` of the array is a deterministic function of the
master seed, the stream lineage and the address ``(i, j)``.  Minors of
any size, rows sampled out of order and parallel workers therefore all
see the same array.

Addressing
----------
Entries are stored column by column of the upper triangle.  Column
``j`` (0-based) holds ``x_0j, ..., x_jj``, which is exactly the border
that turns ``H^(j)`` into ``H^(j+1)``.  Each column consumes a fixed
number of uniforms from a Philox stream (``j + 1`` for real entries,
``2j + 1`` for complex ones), so the column starts at a closed-form
counter offset and can be generated on its own.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri

__all__ = [
    "ENTRY_DISTS",
    "SeedContext",
    "EnsembleSpec",
    "ConstantProfile",
    "ConstantDeformation",
    "AlternatingDeformation",
    "profile_from_dict",
    "deformation_from_dict",
    "sample_border",
    "materialize_array",
    "materialize_wigner",
    "materialize",
    "apply_deformation",
    "entry_targets",
    "sample_top_gaussian",
]

ENTRY_DISTS = ("gaussian", "rademacher", "uniform")

_SQRT3 = np.sqrt(3.0)


def _label_code(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    return zlib.crc32(str(label).encode("utf8"))


@dataclass(frozen=True)
class SeedContext:
    """
    Deterministic seed lineage.

    A context is a master seed plus a path of ``(label, index)`` pairs.
    Each context owns independent Philox streams, one per stream label.

    Parameters
    ----------
    master_seed : int
        Non-negative 64-bit seed.
    lineage : tuple of (str, int)
        Path from the root context.

    Examples
    --------
    >>> ctx = SeedContext(7)
    >>> ctx.child("trajectory", 3).lineage
    (('trajectory', 3),)
    """

    master_seed: int
    lineage: tuple = ()
    _keys: dict = field(default_factory=dict, init=False, repr=False,
                        compare=False, hash=False)

    def __post_init__(self):
        if int(self.master_seed) < 0 or int(self.master_seed) >= 2**64:
            raise ValueError("master_seed must be in [0, 2**64)")

    def child(self, label: str, index: int = 0) -> "SeedContext":
        return SeedContext(self.master_seed,
                           self.lineage + ((str(label), int(index)),))

    def trajectory(self, index: int) -> "SeedContext":
        """Context of the ``index``-th independent trajectory."""
        return self.child("trajectory", index)

    def stream_key(self, label: str = "entries") -> np.ndarray:
        """128-bit Philox key of the stream ``label``."""
        key = self._keys.get(label)
        if key is None:
            path = [_label_code(x) for pair in self.lineage for x in pair]
            path.append(_label_code(label))
            ss = np.random.SeedSequence(int(self.master_seed), spawn_key=path)
            key = ss.generate_state(2, np.uint64)
            self._keys[label] = key
        return key

    def bit_generator(self, label: str = "entries") -> np.random.Philox:
        return np.random.Philox(key=self.stream_key(label))

    def generator(self, label: str = "draws") -> np.random.Generator:
        """Sequential generator for draws that need no addressing."""
        return np.random.Generator(self.bit_generator(label))

    def uniforms(self, start: int, count: int,
                 label: str = "entries") -> np.ndarray:
        """
        Uniforms number ``start, ..., start + count - 1`` of a stream.

        Values lie strictly inside (0, 1) on a grid of spacing 2**-52.
        """
        bg = self.bit_generator(label)
        # one Philox counter step yields four 64-bit words
        bg.advance(start // 4)
        if start % 4:
            bg.random_raw(start % 4)
        raw = bg.random_raw(count)
        return ((raw >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


def _standardize(u: np.ndarray, dist: str) -> np.ndarray:
    """Map uniforms to a mean zero, unit variance law."""
    if dist == "gaussian":
        return ndtri(u)
    if dist == "rademacher":
        return np.where(u < 0.5, -1.0, 1.0)
    if dist == "uniform":
        return _SQRT3 * (2.0 * u - 1.0)
    raise ValueError(f"unknown entry distribution {dist!r}")


@dataclass(frozen=True)
class ConstantProfile:
    """Flat variance profile ``Sigma_ij = value``."""

    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("profile value must be positive")

    def __call__(self, i, j):
        return np.full(np.broadcast(i, j).shape, float(self.value))

    def to_dict(self):
        return {"kind": "constant", "value": float(self.value)}


@dataclass(frozen=True)
class ConstantDeformation:
    """Diagonal shift ``a_i = value``."""

    value: float

    def __call__(self, i):
        return np.full(np.shape(i), float(self.value))

    def to_dict(self):
        return {"kind": "constant", "value": float(self.value)}


@dataclass(frozen=True)
class AlternatingDeformation:
    """Diagonal deformation ``a = amplitude * (1, -1, 1, -1, ...)``."""

    amplitude: float = 1.0

    def __call__(self, i):
        i = np.asarray(i)
        return np.where(i % 2 == 1, 1.0, -1.0) * self.amplitude

    def to_dict(self):
        return {"kind": "alternating", "amplitude": float(self.amplitude)}


def _check_keys(d, allowed):
    extra = set(d) - set(allowed) - {"kind"}
    if extra:
        raise ValueError(f"unknown keys {sorted(extra)} for {d.get('kind')!r}")


def profile_from_dict(d):
    if d is None:
        return None
    if d.get("kind") == "constant":
        _check_keys(d, ["value"])
        return ConstantProfile(float(d["value"]))
    raise ValueError(f"unknown profile kind {d.get('kind')!r}")


def deformation_from_dict(d):
    if d is None:
        return None
    kind = d.get("kind")
    if kind == "constant":
        _check_keys(d, ["value"])
        return ConstantDeformation(float(d["value"]))
    if kind == "alternating":
        _check_keys(d, ["amplitude"])
        return AlternatingDeformation(float(d.get("amplitude", 1.0)))
    raise ValueError(f"unknown deformation kind {kind!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    """
    Description of a Wigner-type ensemble.

    Parameters
    ----------
    beta : {1, 2}
        1 for real symmetric, 2 for complex Hermitian entries.
    entry_dist : {'gaussian', 'rademacher', 'uniform'}
        Law of the standardized entries.
    profile : callable, optional
        Variance profile ``Sigma(i, j)`` (1-based, vectorized).  The
        noise part becomes ``N**-0.5 * (Sigma * X)``.
    deformation : callable, optional
        Diagonal deformation ``a(i)`` (1-based, vectorized).
    master_seed : int
        Seed of the root :class:`SeedContext`.
    """

    beta: int = 1
    entry_dist: str = "gaussian"
    profile: Optional[Callable] = None
    deformation: Optional[Callable] = None
    master_seed: int = 0

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise ValueError(f"beta must be 1 or 2, got {self.beta!r}")
        if self.entry_dist not in ENTRY_DISTS:
            raise ValueError(f"entry_dist must be one of {ENTRY_DISTS}, "
                             f"got {self.entry_dist!r}")
        if int(self.master_seed) < 0:
            raise ValueError("master_seed must be non-negative")

    @property
    def dtype(self):
        return np.float64 if self.beta == 1 else np.complex128

    @property
    def is_plain(self) -> bool:
        """True when neither profile nor deformation is set."""
        return self.profile is None and self.deformation is None

    def context(self) -> SeedContext:
        return SeedContext(int(self.master_seed))

    def to_dict(self):
        return {
            "beta": self.beta,
            "entry_dist": self.entry_dist,
            "profile": None if self.profile is None else self.profile.to_dict(),
            "deformation": (None if self.deformation is None
                            else self.deformation.to_dict()),
            "master_seed": int(self.master_seed),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(beta=int(d.get("beta", 1)),
                   entry_dist=d.get("entry_dist", "gaussian"),
                   profile=profile_from_dict(d.get("profile")),
                   deformation=deformation_from_dict(d.get("deformation")),
                   master_seed=int(d.get("master_seed", 0)))


def entry_targets(beta: int) -> dict:
    """Second moments of the array entries for symmetry class ``beta``."""
    if beta == 1:
        return {"offdiag_var": 1.0, "diag_var": 2.0}
    return {"offdiag_var": 1.0, "offdiag_re_var": 0.5, "offdiag_im_var": 0.5,
            "offdiag_pseudo": 0.0, "diag_var": 1.0}


def _column_offset(j, beta):
    return j * (j + 1) // 2 if beta == 1 else j * j


def _column_values(v, j, beta):
    """Split the raw draws of column ``j`` into border and diagonal."""
    if beta == 1:
        return v[:j], np.sqrt(2.0) * v[j]
    s = np.sqrt(0.5)
    a = s * (v[0:2 * j:2] + 1j * v[1:2 * j:2])
    return a, float(v[2 * j].real)


def sample_border(n: int, spec: EnsembleSpec, ctx: SeedContext):
    """
    Raw entries of the ``n``-th column of the shared array.

    Parameters
    ----------
    n : int
        1-based column index.
    spec : EnsembleSpec
    ctx : SeedContext

    Returns
    -------
    a : ndarray
        ``(x_1n, ..., x_{n-1,n})``, real or complex.
    d : float
        Diagonal entry ``x_nn``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    j = n - 1
    count = j + 1 if spec.beta == 1 else 2 * j + 1
    u = ctx.uniforms(_column_offset(j, spec.beta), count)
    return _column_values(_standardize(u, spec.entry_dist), j, spec.beta)


def materialize_array(N: int, spec: EnsembleSpec, ctx: SeedContext,
                      dtype=None) -> np.ndarray:
    """
    The top-left ``N x N`` block ``X^(N)`` of the shared array.

    Parameters
    ----------
    dtype : dtype, optional
        Output precision (e.g. ``np.float32``); values are generated in
        double precision and rounded.

    Returns
    -------
    X : ndarray, shape (N, N)
        Symmetric (beta=1) or Hermitian (beta=2), unscaled.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    beta = spec.beta
    total = _column_offset(N, beta)
    v = _standardize(ctx.uniforms(0, total), spec.entry_dist)
    if dtype is None:
        dtype = spec.dtype
    X = np.zeros((N, N), dtype=dtype)
    if beta == 1:
        # row j of the lower triangle is column j of the upper one
        off = 0
        for j in range(N):
            X[j, :j + 1] = v[off:off + j + 1]
            off += j + 1
        dg = np.diag_indices(N)
        X[dg] *= np.sqrt(2.0)
        X += np.tril(X, -1).T
    else:
        s = np.sqrt(0.5)
        for j in range(N):
            off = j * j
            # lower entry x_{j,i} is the conjugate of x_{i,j}
            X[j, :j] = s * (v[off:off + 2 * j:2] - 1j * v[off + 1:off + 2 * j:2])
            X[j, j] = v[off + 2 * j]
        X += np.tril(X, -1).conj().T
    return X


def materialize_wigner(N: int, spec: EnsembleSpec,
                       ctx: SeedContext) -> np.ndarray:
    """``H^(N) = N**-0.5 X^(N)`` without profile or deformation."""
    return materialize_array(N, spec, ctx) / np.sqrt(N)


def apply_deformation(H: np.ndarray, profile=None, deformation=None):
    """
    Return ``Sigma * H + diag(a)``.

    Parameters
    ----------
    H : ndarray
        Hermitian ``N**-0.5 X``.
    profile : ndarray or callable, optional
        Entrywise standard-deviation profile; positive and symmetric.
    deformation : ndarray or callable, optional
        Real diagonal shifts ``a_i``.
    """
    H = np.asarray(H)
    N = H.shape[0]
    if H.ndim != 2 or H.shape[1] != N:
        raise ValueError("H must be square")
    if not np.allclose(H, H.conj().T, rtol=0, atol=1e-12 * (1 + np.abs(H).max())):
        raise ValueError("H is not Hermitian")
    out = H
    if profile is not None:
        if callable(profile):
            idx = np.arange(1, N + 1)
            S = profile(idx[:, None], idx[None, :])
        else:
            S = np.asarray(profile, dtype=float)
            if S.ndim == 0:
                S = np.full((N, N), float(S))
        if S.shape != (N, N):
            raise ValueError("profile shape does not match H")
        if np.any(S <= 0):
            raise ValueError("profile entries must be positive")
        if not np.array_equal(S, S.T):
            raise ValueError("profile must be symmetric")
        out = S * out
    if deformation is not None:
        if callable(deformation):
            a = deformation(np.arange(1, N + 1))
        else:
            a = np.asarray(deformation, dtype=float)
        a = np.broadcast_to(np.asarray(a, dtype=float), (N,))
        out = out + np.diag(a)
    elif out is H:
        out = H.copy()
    return out


def materialize(N: int, spec: EnsembleSpec, ctx: SeedContext) -> np.ndarray:
    """``H^(N)`` including the spec's profile and deformation."""
    return apply_deformation(materialize_wigner(N, spec, ctx),
                             spec.profile, spec.deformation)


def sample_top_gaussian(N: int, beta: int, size: int,
                        rng: np.random.Generator,
                        batch: int = 20000) -> np.ndarray:
    """
    Top eigenvalues of ``H^(N)`` for Gaussian entries, by sampling the
    tridiagonal beta-Hermite model.

    The eigenvalues of a Gaussian Wigner matrix have the same law as
    those of a symmetric tridiagonal matrix with ``N(0, 1)`` diagonal
    and ``chi_{beta k} / sqrt(2)`` off-diagonal (``k = N-1, ..., 1``),
    scaled by ``sqrt(2 / beta) / sqrt(N)`` in this normalization.  The
    top eigenvalue is located by bisection on Sturm counts, vectorized
    over samples.  Draws are independent; there is no shared array.

    Parameters
    ----------
    N : int
    beta : {1, 2}
    size : int
        Number of samples.
    rng : numpy.random.Generator
    batch : int
        Samples processed together (memory is ``~16 N batch`` bytes).

    Returns
    -------
    ndarray, shape (size,)
        Unscaled top eigenvalues ``lambda~_1``.
    """
    if beta not in (1, 2):
        raise ValueError("beta must be 1 or 2")
    out = np.empty(size)
    dof = beta * np.arange(N - 1, 0, -1, dtype=float)
    scale = np.sqrt(2.0 / beta) / np.sqrt(N)
    done = 0
    while done < size:
        B = min(batch, size - done)
        d = rng.standard_normal((N, B))
        e2 = rng.chisquare(dof[:, None], size=(N - 1, B)) / 2.0
        e = np.sqrt(e2)
        radius = np.zeros((N, B))
        radius[:-1] += e
        radius[1:] += e
        lo = d.max(axis=0)
        hi = (d + radius).max(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            for _ in range(48):
                x = 0.5 * (lo + hi)
                q = d[0] - x
                above = (q > 0).astype(np.int32)
                for i in range(1, N):
                    q = d[i] - x - e2[i - 1] / q
                    above += q > 0
                has = above > 0
                lo = np.where(has, x, lo)
                hi = np.where(has, hi, x)
        out[done:done + B] = 0.5 * (lo + hi) * scale
        done += B
    return out
