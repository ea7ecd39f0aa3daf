"""
Reproducible experiment runner.

An experiment is described by a JSON config with a schema version.
Work is split into fixed cells whose seeds derive from
``(master_seed, cell index)``, so outputs do not depend on how many
worker processes run the cells.  Partial results are additive
:class:`AggregateStats` merged in cell order.  Outputs are staged in a
temporary directory and moved into place before the manifest is
written, so an interrupted run never leaves a manifest behind.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import __version__
from .ensemble import (EnsembleSpec, materialize, materialize_array,
                       sample_top_gaussian)
from .minor_engine import (advance, arrowhead_eigen, build_arrowhead,
                           initial_state, lanczos_top, martingale_series,
                           run_top_trajectory, run_trajectory,
                           solve_secular_top)
from . import dbm_flow, stats_lab

__all__ = [
    "SCHEMA_VERSION",
    "KINDS",
    "ConfigError",
    "InvariantViolation",
    "ExperimentConfig",
    "AggregateStats",
    "merge_stats",
    "run_experiment",
    "resolve_workers",
]

SCHEMA_VERSION = 1
KINDS = ("trajectories", "tails", "decorrelate", "coupled-flow", "lfl-trace",
         "oracle-check", "dyson")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvariantViolation(RuntimeError):
    """An oracle or invariant check failed."""


_DEFAULTS = {
    "trajectories": {"n_start": 64, "n_end": 128, "trajectories": 16,
                     "engine": "lanczos", "refresh_every": 64,
                     "dtype": "float64", "windows": [],
                     "write_trajectories": True},
    "tails": {"N": 256, "samples": 20000, "sides": ["right", "left"],
              "levels": {"right": [1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2],
                         "left": [2.0, 2.4, 2.8, 3.2, 3.6]},
              "method": "auto", "dtype": "float32", "cell_size": 1000},
    "decorrelate": {"N1": 100, "M": [4, 21], "pairs": 2000, "x1": 0.5,
                    "x2": 0.5, "dtype": "float64", "cell_size": 250},
    "coupled-flow": {"N1": 50, "N2": 80, "runs": 4, "t_end": 0.1,
                     "checkpoints": [0.0, 0.05, 0.1], "dt": 0.01,
                     "i_max": 3},
    "lfl-trace": {"n_start": 2, "n_end": 400, "trajectories": 2,
                  "dtype": "float64"},
    "oracle-check": {"sizes": [8, 16, 32, 64], "instances": 5,
                     "betas": [1, 2], "chain_steps": 8},
    "dyson": {"N": 512, "E_min": -3.0, "E_max": 3.0, "points": 121,
              "eta": 1e-3, "s": 1.0, "mc_samples": 0},
}


def resolve_workers(cli_value=None, config_value=None):
    """CLI flag, then ``MINORLAB_WORKERS``, then the config, then 1."""
    for v, name in ((cli_value, "--workers"),
                    (os.environ.get("MINORLAB_WORKERS"), "MINORLAB_WORKERS"),
                    (config_value, "workers")):
        if v is None or v == "":
            continue
        try:
            w = int(v)
        except (TypeError, ValueError):
            raise ConfigError(name, f"not an integer: {v!r}") from None
        if w < 1:
            raise ConfigError(name, "must be >= 1")
        return w
    return 1


@dataclass
class ExperimentConfig:
    """
    Resolved experiment description.

    Attributes
    ----------
    kind : str
        One of :data:`KINDS`.
    ensemble : EnsembleSpec
        Ensemble; its ``master_seed`` is the run's master seed.
    params : dict
        Kind-specific parameters merged over defaults.
    workers : int
    output_dir : str
    """

    kind: str
    ensemble: EnsembleSpec
    params: dict
    workers: int = 1
    output_dir: str = "out"

    @property
    def master_seed(self):
        return int(self.ensemble.master_seed)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, Mapping):
            raise ConfigError("<root>", "config must be a JSON object")
        ver = d.get("schema_version")
        if ver != SCHEMA_VERSION:
            raise ConfigError("schema_version",
                              f"expected {SCHEMA_VERSION}, got {ver!r}")
        kind = d.get("kind")
        if kind not in KINDS:
            raise ConfigError("kind", f"must be one of {KINDS}, got {kind!r}")
        ens = dict(d.get("ensemble", {}))
        seed = d.get("master_seed", ens.get("master_seed", 0))
        if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
            raise ConfigError("master_seed", "must be an integer in [0, 2**64)")
        ens["master_seed"] = seed
        try:
            spec = EnsembleSpec.from_dict(ens)
        except (ValueError, TypeError) as exc:
            raise ConfigError("ensemble", str(exc)) from None
        params = copy.deepcopy(_DEFAULTS[kind])
        given = d.get("params", {})
        if not isinstance(given, Mapping):
            raise ConfigError("params", "must be an object")
        for k, v in given.items():
            if k not in params:
                raise ConfigError(f"params.{k}", f"unknown parameter for {kind}")
            params[k] = v
        cfg = cls(kind=kind, ensemble=spec, params=params,
                  workers=d.get("workers", 1),
                  output_dir=str(d.get("output_dir", "out")))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        return cls.from_dict(d)

    def to_dict(self):
        ens = self.ensemble.to_dict()
        seed = ens.pop("master_seed")
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind,
                "master_seed": seed, "ensemble": ens,
                "params": copy.deepcopy(self.params), "workers": self.workers,
                "output_dir": self.output_dir}

    def validate(self):
        p = self.params

        def pos_int(name, minimum=1):
            v = p[name]
            if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
                raise ConfigError(f"params.{name}", f"must be an integer >= {minimum}")

        def pos_float(name):
            v = p[name]
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"params.{name}", "must be a positive number")

        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers", "must be an integer >= 1")
        k = self.kind
        if k in ("trajectories", "lfl-trace"):
            pos_int("n_start", 2)
            pos_int("n_end", 2)
            pos_int("trajectories")
            if p["n_end"] < p["n_start"]:
                raise ConfigError("params.n_end", "must be >= n_start")
            if p["dtype"] not in ("float32", "float64"):
                raise ConfigError("params.dtype", "must be float32 or float64")
        if k == "trajectories":
            if p["engine"] not in ("arrowhead", "lanczos"):
                raise ConfigError("params.engine", "must be arrowhead or lanczos")
            pos_int("refresh_every", 0)
            for w in p["windows"]:
                if (not isinstance(w, (list, tuple)) or len(w) != 2
                        or not p["n_start"] <= w[0] < w[1] <= p["n_end"]):
                    raise ConfigError("params.windows",
                                      f"window {w!r} not inside [n_start, n_end]")
        if k in ("trajectories", "lfl-trace", "decorrelate", "coupled-flow") \
                and self.ensemble.deformation is not None:
            raise ConfigError("ensemble.deformation",
                              f"not supported for kind {k}")
        if k == "tails":
            pos_int("N", 3)
            pos_int("samples", 1000)
            pos_int("cell_size")
            for side in p["sides"]:
                if side not in ("right", "left"):
                    raise ConfigError("params.sides", f"unknown side {side!r}")
                lv = p["levels"].get(side) if isinstance(p["levels"], Mapping) else None
                if not lv or any(not x > 0 for x in lv) or np.any(np.diff(lv) <= 0):
                    raise ConfigError(f"params.levels.{side}",
                                      "need increasing positive levels")
            if p["method"] not in ("auto", "tridiagonal", "lanczos", "dense"):
                raise ConfigError("params.method", "unknown method")
            if p["method"] == "tridiagonal" and (
                    self.ensemble.entry_dist != "gaussian" or not self.ensemble.is_plain):
                raise ConfigError("params.method",
                                  "tridiagonal sampling needs plain gaussian entries")
            if p["dtype"] not in ("float32", "float64"):
                raise ConfigError("params.dtype", "must be float32 or float64")
        if k == "decorrelate":
            pos_int("N1", 3)
            pos_int("pairs")
            pos_int("cell_size")
            pos_float("x1")
            pos_float("x2")
            if not p["M"] or any(not isinstance(m, int) or m < 0 for m in p["M"]):
                raise ConfigError("params.M", "need non-negative integer gaps")
        if k == "coupled-flow":
            pos_int("N1")
            pos_int("N2")
            pos_int("runs")
            pos_int("i_max")
            pos_float("dt")
            if p["N2"] < p["N1"]:
                raise ConfigError("params.N2", "must be >= N1")
            if p["i_max"] > p["N1"]:
                raise ConfigError("params.i_max", "must be <= N1")
            cps = p["checkpoints"]
            if any(c < 0 or c > p["t_end"] for c in cps):
                raise ConfigError("params.checkpoints", "must lie in [0, t_end]")
        if k == "oracle-check":
            if not p["sizes"] or any(not isinstance(n, int) or n < 2 for n in p["sizes"]):
                raise ConfigError("params.sizes", "need integers >= 2")
            pos_int("instances")
            pos_int("chain_steps", 0)
            if any(b not in (1, 2) for b in p["betas"]):
                raise ConfigError("params.betas", "must be 1 or 2")
        if k == "dyson":
            pos_int("N")
            pos_int("points", 2)
            pos_float("eta")
            pos_float("s")
            pos_int("mc_samples", 0)
            if not p["E_min"] < p["E_max"]:
                raise ConfigError("params.E_max", "must exceed E_min")


@dataclass(frozen=True)
class AggregateStats:
    """
    Additive partial results keyed by experiment cell.

    ``cells[key][name]`` is a numpy array (or scalar); merging adds
    matching fields.  The empty aggregate is the identity.
    """

    cells: Mapping = field(default_factory=dict)

    @classmethod
    def single(cls, key, **fields):
        return cls({key: {k: np.asarray(v) for k, v in fields.items()}})

    def merge(self, other: "AggregateStats") -> "AggregateStats":
        out = {k: dict(v) for k, v in self.cells.items()}
        for key, fields in other.cells.items():
            if key not in out:
                out[key] = dict(fields)
                continue
            mine = out[key]
            if set(mine) != set(fields):
                raise ValueError(f"schema mismatch in cell {key!r}: "
                                 f"{sorted(mine)} vs {sorted(fields)}")
            for name, val in fields.items():
                if np.shape(mine[name]) != np.shape(val):
                    raise ValueError(f"shape mismatch for {key!r}.{name}")
                mine[name] = mine[name] + val
        return AggregateStats(out)

    def __getitem__(self, key):
        return self.cells[key]

    def keys(self):
        return sorted(self.cells)


def merge_stats(parts) -> AggregateStats:
    """Fold a sequence of aggregates (in the given order)."""
    acc = AggregateStats()
    for p in parts:
        acc = acc.merge(p)
    return acc


def moments(x):
    """Count, sum and sum of squares of a sample, as additive fields."""
    x = np.asarray(x, dtype=float)
    return {"count": np.array(x.shape[0]), "sum": x.sum(axis=0),
            "sumsq": (x * x).sum(axis=0)}


# ------------------------------------------------------------- cells

def _cells(total, size):
    return [(i, min(size, total - i)) for i in range(0, total, size)]


def _spec(cfg_dict):
    ens = dict(cfg_dict["ensemble"])
    ens["master_seed"] = cfg_dict["master_seed"]
    return EnsembleSpec.from_dict(ens)


def _tails_cell(cfg_dict, start, count):
    p = cfg_dict["params"]
    spec = _spec(cfg_dict)
    root = spec.context()
    N = p["N"]
    method = p["method"]
    if method == "auto":
        method = ("tridiagonal" if spec.entry_dist == "gaussian" and spec.is_plain
                  else "lanczos")
    if method == "tridiagonal":
        rng = root.child("tails-cell", start).generator("tridiagonal")
        lam = sample_top_gaussian(N, spec.beta, count, rng)
    else:
        lam = np.empty(count)
        for i in range(count):
            ctx = root.trajectory(start + i)
            H = materialize(N, spec, ctx)
            if method == "dense":
                lam[i] = np.linalg.eigvalsh(H)[-1]
            else:
                dt = np.float32 if p["dtype"] == "float32" else np.float64
                if spec.beta == 2:
                    dt = np.complex64 if dt == np.float32 else np.complex128
                q0 = ctx.generator("lanczos").standard_normal(N)
                lam[i] = lanczos_top(H.astype(dt), q0, tol=1e-6)[0]
    s = stats_lab.scale_top(lam, N)
    out = {}
    for side in p["sides"]:
        lv = np.asarray(p["levels"][side], dtype=float)
        hits = (s[None, :] >= lv[:, None]) if side == "right" else (s[None, :] <= -lv[:, None])
        out[f"tail-{side}"] = {"hits": hits.sum(axis=1), "n": np.array(count)}
    out["moments"] = moments(s)
    return AggregateStats(out)


def _top_lanczos(A, q0):
    return lanczos_top(A, q0, tol=1e-8)[0]


def _decorrelate_cell(cfg_dict, start, count):
    p = cfg_dict["params"]
    spec = _spec(cfg_dict)
    root = spec.context()
    N1 = p["N1"]
    Ms = p["M"]
    N2max = N1 + max(Ms)
    dt = np.float32 if p["dtype"] == "float32" else np.float64
    if spec.beta == 2:
        dt = np.complex64 if dt == np.float32 else np.complex128
    out = AggregateStats()
    l1 = np.empty(count)
    l2 = np.empty((len(Ms), count))
    for i in range(count):
        ctx = root.trajectory(start + i)
        X = materialize_array(N2max, spec, ctx).astype(dt)
        q0 = ctx.generator("lanczos").standard_normal(N2max).astype(dt)
        l1[i] = _top_lanczos(X[:N1, :N1], q0[:N1]) / np.sqrt(N1)
        for j, M in enumerate(Ms):
            N2 = N1 + M
            l2[j, i] = _top_lanczos(X[:N2, :N2], q0[:N2]) / np.sqrt(N2)
    s1 = stats_lab.scale_top(l1, N1)
    F1, E1 = stats_lab.classify_tail_events(s1, N1, p["x1"])
    for j, M in enumerate(Ms):
        N2 = N1 + M
        s2 = stats_lab.scale_top(l2[j], N2)
        F2, E2 = stats_lab.classify_tail_events(s2, N2, p["x2"])
        out = out.merge(AggregateStats.single(
            f"M={M:06d}", n=count, F1=F1.sum(), F2=F2.sum(), F12=(F1 & F2).sum(),
            E1=E1.sum(), E2=E2.sum(), E12=(E1 & E2).sum(),
            sx=s1.sum(), sy=s2.sum(), sxx=(s1 * s1).sum(), syy=(s2 * s2).sum(),
            sxy=(s1 * s2).sum()))
    return out


def _trajectory_cell(cfg_dict, start, count):
    p = cfg_dict["params"]
    spec = _spec(cfg_dict)
    root = spec.context()
    recs = []
    for i in range(start, start + count):
        ctx = root.trajectory(i)
        if p["engine"] == "arrowhead":
            tr = run_trajectory(p["n_start"], p["n_end"], spec, ctx,
                                p["refresh_every"])
        else:
            tr = run_top_trajectory(p["n_start"], p["n_end"], spec, ctx,
                                    dtype=np.dtype(p["dtype"]).type)
        recs.append((i, tr))
    return recs


def _run_cells(fn, cfg_dict, cells, workers):
    if workers <= 1 or len(cells) <= 1:
        return [fn(cfg_dict, s, c) for s, c in cells]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, cfg_dict, s, c) for s, c in cells]
        return [f.result() for f in futs]


# ------------------------------------------------------------ writers

def _g17(x):
    return format(float(x), ".17g")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_g17(v) if isinstance(v, (float, np.floating)) else v
                         for v in r])


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ----------------------------------------------------------- runners

def _run_trajectories(cfg, d, stage):
    p = cfg.params
    cells = _cells(p["trajectories"], 8)
    parts = _run_cells(_trajectory_cell, d, cells, cfg.workers)
    recs = [r for part in parts for r in part]
    if p["write_trajectories"]:
        os.makedirs(os.path.join(stage, "trajectories"))
        for i, tr in recs:
            tr.to_csv(os.path.join(stage, "trajectories", f"traj_{i:06d}.csv"))
    lam = np.array([tr.lambda_scaled for _, tr in recs])
    xi = np.array([tr.xi1_sq for _, tr in recs])
    n = recs[0][1].n
    rows = [(int(n[j]), len(recs), float(lam[:, j].mean()),
             float(lam[:, j].var(ddof=1)) if len(recs) > 1 else 0.0,
             float(xi[:, j].mean())) for j in range(len(n))]
    _write_rows(os.path.join(stage, "summary.csv"),
                ["n", "count", "mean_lambda", "var_lambda", "mean_xi1_sq"], rows)
    if p["windows"]:
        mrows = []
        for lo, hi in p["windows"]:
            for i, tr in recs:
                ms = martingale_series(tr, (lo, hi))
                for nn, x, dfc in zip(ms.n, ms.values, ms.defect):
                    mrows.append((lo, hi, i, int(nn), float(x), float(dfc)))
        mrows.sort(key=lambda r: r[:4])
        _write_rows(os.path.join(stage, "martingale.csv"),
                    ["N_lo", "N_hi", "trajectory", "n", "X", "defect"], mrows)
    return {}


def _run_tails(cfg, d, stage):
    p = cfg.params
    cells = _cells(p["samples"], p["cell_size"])
    agg = merge_stats(_run_cells(_tails_cell, d, cells, cfg.workers))
    fits = []
    info = {}
    n = p["samples"]
    beta = cfg.ensemble.beta
    for side in p["sides"]:
        lv = np.asarray(p["levels"][side], dtype=float)
        hits = agg[f"tail-{side}"]["hits"]
        keep = hits >= 5
        if keep.sum() < 2:
            info[f"{side}_fit"] = "insufficient tail hits"
            continue
        fit = stats_lab.fit_tail_counts(side, lv, hits, n, beta=beta, N=p["N"])
        fits.append(fit)
        info[f"{side}_coefficient"] = fit.coefficient
        info[f"{side}_halfwidth"] = fit.halfwidth
        info[f"{side}_target"] = fit.target
        info[f"{side}_dropped_levels"] = [float(x) for x in fit.dropped]
    m = agg["moments"]
    mean = float(m["sum"] / m["count"])
    info["mean"] = mean
    info["var"] = float(m["sumsq"] / m["count"] - mean ** 2)
    stats_lab.write_tail_fits(fits, os.path.join(stage, "tail_fit.csv"),
                              os.path.join(stage, "tail_fit_summary.csv"))
    return info


def _run_decorrelate(cfg, d, stage):
    p = cfg.params
    cells = _cells(p["pairs"], p["cell_size"])
    agg = merge_stats(_run_cells(_decorrelate_cell, d, cells, cfg.workers))
    N1 = p["N1"]
    reports, crow = [], []
    info = {}
    for M in sorted(p["M"]):
        c = agg[f"M={M:06d}"]
        n = int(c["n"])
        N2 = N1 + M
        rep = stats_lab.decorrelation_from_counts(N1, N2, p["x1"], p["x2"], n, c)
        reports.append(rep)
        mx, my = c["sx"] / n, c["sy"] / n
        cov = c["sxy"] / n - mx * my
        r = float(cov / np.sqrt((c["sxx"] / n - mx ** 2) * (c["syy"] / n - my ** 2)))
        crow.append((N1, N2, M, n, r))
        info[f"M={M}"] = {"ratio": rep.ratio, "ratio_err": rep.ratio_err,
                          "pearson": r, "regime": rep.regime}
    stats_lab.write_decorrelation(reports, os.path.join(stage, "decorrelation.csv"))
    _write_rows(os.path.join(stage, "correlation.csv"),
                ["N1", "N2", "M", "pairs", "pearson"], crow)
    return info


def _flow_cell(cfg_dict, start, count):
    p = cfg_dict["params"]
    spec = _spec(cfg_dict)
    root = spec.context()
    out = []
    for r in range(start, start + count):
        reps = dbm_flow.run_coupled_minor_flow(
            p["N1"], p["N2"], spec, root.trajectory(r), p["t_end"],
            p["checkpoints"], dt=p["dt"], i_max=p["i_max"], dense=True)
        out.append((r, reps))
    return out


def _run_flow(cfg, d, stage):
    p = cfg.params
    parts = _run_cells(_flow_cell, d, _cells(p["runs"], 1), cfg.workers)
    runs = [x for part in parts for x in part]
    by_t = {}
    trow = []
    for r, reps in runs:
        for rep in reps:
            by_t.setdefault(rep.t, []).append(rep)
            trow.append((r, rep.t, rep.top_overlap, rep.top_gap))
    mean_reps = []
    for t in sorted(by_t):
        reps = by_t[t]
        mean_reps.append(dbm_flow.OverlapReport(
            t=t, N1=p["N1"], N2=p["N2"],
            overlaps=np.mean([x.overlaps for x in reps], axis=0),
            top_gap=float(np.mean([x.top_gap for x in reps]))))
    dbm_flow.write_overlap_reports(mean_reps, os.path.join(stage, "overlaps.csv"),
                                   os.path.join(stage, "overlap_summary.csv"))
    trow.sort()
    _write_rows(os.path.join(stage, "top_overlaps.csv"),
                ["run", "t", "top_overlap", "top_gap"], trow)
    return {"mean_top_overlap": {str(t): float(np.mean([x.top_overlap for x in v]))
                                 for t, v in sorted(by_t.items())}}


def _run_lfl(cfg, d, stage):
    p = cfg.params
    spec = cfg.ensemble
    root = spec.context()
    beta = spec.beta
    info = {"markers": dict(zip(("limsup", "liminf"), stats_lab.lfl_constants(beta)))}
    hrows = []
    for i in range(p["trajectories"]):
        tr = run_top_trajectory(p["n_start"], p["n_end"], spec, root.trajectory(i),
                                dtype=np.dtype(p["dtype"]).type)
        et = stats_lab.extrema_trace(tr, beta)
        stats_lab.write_extrema_trace(et, os.path.join(stage, f"extrema_{i:04d}.csv"))
        for which, (cnt, edges) in (("norm23", et.hist23), ("norm13", et.hist13)):
            for c, lo, hi in zip(cnt, edges[:-1], edges[1:]):
                if c:
                    hrows.append((i, which, float(lo), float(hi), int(c)))
        info[f"trajectory_{i}"] = {"final_runmax": float(et.runmax[-1]),
                                   "final_runmin": float(et.runmin[-1])}
    _write_rows(os.path.join(stage, "occupancy.csv"),
                ["trajectory", "series", "bin_lo", "bin_hi", "count"], hrows)
    return info


def _run_dyson(cfg, d, stage):
    p = cfg.params
    spec = cfg.ensemble
    N = p["N"]
    idx = np.arange(1, N + 1)
    a = spec.deformation(idx) if spec.deformation is not None else np.zeros(N)
    s = p["s"]
    if spec.profile is not None:
        s = float(spec.profile(np.array(1), np.array(1)))
    E = np.linspace(p["E_min"], p["E_max"], p["points"])
    rho = stats_lab.dyson_density(E, a, s, p["eta"])
    _write_rows(os.path.join(stage, "dyson.csv"), ["E", "density"],
                [(float(e), float(r)) for e, r in zip(E, rho)])
    info = {"s": s}
    if p["mc_samples"]:
        from scipy import stats as sps
        root = spec.context()
        ev = np.concatenate([np.linalg.eigvalsh(materialize(N, spec, root.trajectory(i)))
                             for i in range(p["mc_samples"])])
        grid = np.linspace(min(p["E_min"], ev.min()), max(p["E_max"], ev.max()), 4001)
        dens = stats_lab.dyson_density(grid, a, s, p["eta"])
        cdf = np.concatenate([[0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        cdf /= cdf[-1]
        ks = sps.kstest(ev, lambda x: np.interp(x, grid, cdf)).statistic
        info["ks_vs_monte_carlo"] = float(ks)
    return info


def _oracle_check(cfg, d, stage):
    p = cfg.params
    root = cfg.ensemble.context()
    rows = []
    bad = []
    for beta in p["betas"]:
        spec = EnsembleSpec(beta=beta, entry_dist=cfg.ensemble.entry_dist,
                            profile=cfg.ensemble.profile,
                            master_seed=cfg.master_seed)
        for n in p["sizes"]:
            e_spec = e_top = e_vec = e_il = e_tr = 0.0
            for inst in range(p["instances"]):
                ctx = root.child("oracle", beta).trajectory(n * 1000 + inst)
                st = initial_state(n - 1, spec, ctx)
                a = materialize(n, spec, ctx)
                sys = build_arrowhead(st, a[:n - 1, n - 1], a[n - 1, n - 1].real)
                mu, V = arrowhead_eigen(sys)
                ref = np.linalg.eigvalsh(a)[::-1]
                scale = np.abs(ref).max()
                e_spec = max(e_spec, np.abs(mu - ref).max() / scale)
                e_top = max(e_top, abs(solve_secular_top(sys) - ref[0]) / scale)
                e_vec = max(e_vec, np.abs(V.conj().T @ V - np.eye(n)).max())
                chain = st
                for _ in range(p["chain_steps"]):
                    nxt = advance(chain, spec, ctx)
                    dd = np.sqrt(chain.n / nxt.n) * chain.lambdas
                    e_il = max(e_il, max(0.0, (nxt.lambdas[1:] - dd).max(),
                                         (dd - nxt.lambdas[:-1]).max()))
                    e_tr = max(e_tr, abs(nxt.lambdas.sum() - dd.sum() - nxt.h_nn))
                    chain = nxt
            for name, err, tol in (("spectrum", e_spec, 1e-9), ("top", e_top, 1e-10),
                                   ("orthonormality", e_vec, 1e-8),
                                   ("interlacing", e_il, 1e-10), ("trace", e_tr, 1e-10)):
                ok = err <= tol
                rows.append((name, beta, n, float(err), float(tol), int(ok)))
                if not ok:
                    bad.append(f"{name} beta={beta} n={n}: {err:.3g} > {tol:.0e}")
    rows.sort(key=lambda r: r[:3])
    _write_rows(os.path.join(stage, "oracle_check.csv"),
                ["check", "beta", "n", "max_error", "tolerance", "passed"], rows)
    return {"violations": bad}


_RUNNERS = {
    "trajectories": _run_trajectories,
    "tails": _run_tails,
    "decorrelate": _run_decorrelate,
    "coupled-flow": _run_flow,
    "lfl-trace": _run_lfl,
    "dyson": _run_dyson,
    "oracle-check": _oracle_check,
}


def _walk(root):
    for dirpath, _, files in os.walk(root):
        for f in files:
            full = os.path.join(dirpath, f)
            yield os.path.relpath(full, root).replace(os.sep, "/"), full


def run_experiment(config: ExperimentConfig) -> dict:
    """
    Run an experiment and write its outputs plus ``manifest.json``.

    Returns the manifest.  Raises :class:`InvariantViolation` (after
    writing outputs and manifest) when an oracle check fails.
    """
    config.validate()
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    d = config.to_dict()
    manifest_path = os.path.join(out, "manifest.json")
    if os.path.exists(manifest_path):
        os.remove(manifest_path)
    stage = tempfile.mkdtemp(prefix=".partial-", dir=out)
    try:
        info = _RUNNERS[config.kind](config, d, stage)
        files = {}
        for rel, full in sorted(_walk(stage)):
            files[rel] = _sha256(full)
        for rel, full in sorted(_walk(stage)):
            dest = os.path.join(out, rel)
            os.makedirs(os.path.dirname(dest) or out, exist_ok=True)
            os.replace(full, dest)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    digest = hashlib.sha256(
        "".join(f"{k}\0{v}\n" for k, v in sorted(files.items())).encode()).hexdigest()
    resolved = copy.deepcopy(d)
    resolved.pop("workers")
    resolved.pop("output_dir")
    manifest = {"schema_version": SCHEMA_VERSION, "package_version": __version__,
                "config": resolved, "outputs": files, "digest": digest,
                "results": _jsonable(info)}
    tmp = manifest_path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, manifest_path)
    if config.kind == "oracle-check" and info["violations"]:
        raise InvariantViolation("; ".join(info["violations"]))
    return manifest


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return None if not np.isfinite(x) else float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x
