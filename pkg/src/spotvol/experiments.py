"""Monte Carlo studies: Psi slopes, Table-2 style summaries, curves, coverage.

Experiment files are INI-style (``key = value`` under ``[sections]``); see
``data/default.spec`` for the full schema with the default values.
Iteration ``i`` of every study draws from its own stream ``(seed, i)``, and
partial results are combined in iteration order, so outputs do not depend on
the number of worker threads.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import rng as _rng
from .blocks import BOUNDARIES, BlockPartition, block_minima, partition
from .estimators import (
    ASYMPTOTIC_VARIANCE,
    EstimatorConfig,
    ci_half_width,
    make_inverse,
    rate_warnings,
    sample_at_centers,
    truncation_threshold,
    window_bounds,
    window_estimates,
)
from .market import JumpConfig, NoiseConfig, SvModelConfig, draw_jumps, jump_increment, simulate_path
from .psi import PsiConfig, PsiTable, build_psi_table, default_grid, psi_at
from scipy.special import ndtri

log = logging.getLogger(__name__)

SCENARIOS = ("table1", "table2_grid", "curve_demo", "coverage", "custom")
CHUNK = 50
REPORT_SCALE = 1e6


class SpecError(ValueError):
    """Invalid experiment specification."""


class MissingArtifactError(RuntimeError):
    """A study needs the output of an earlier one."""


@dataclass(frozen=True)
class PsiGridSpec:
    target_var: float = 1e-4
    low: float = 0.5
    high: float = 1.5
    points: int = 64
    spacing: str = "linear"
    iterations: int = 20_000

    def grid(self, target_var: Optional[float] = None) -> tuple:
        return default_grid(target_var or self.target_var, self.low, self.high,
                            self.points, self.spacing)


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str = "custom"
    model: SvModelConfig = field(default_factory=SvModelConfig)
    constant_var: Optional[float] = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    jumps: Optional[JumpConfig] = None
    n: int = 23_400
    nh: tuple = (15,)
    K_n: tuple = (180,)
    iterations: int = 1000
    seed: int = 0
    out: Path = Path("results")
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    q: tuple = (0.1,)
    taus: tuple = (0.5,)
    correction: str = "slope"
    psi: PsiGridSpec = field(default_factory=PsiGridSpec)
    slopes_file: Optional[Path] = None
    blocks: str = "left"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise SpecError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.n < 2:
            raise SpecError("n must be at least 2")
        if self.iterations < 1:
            raise SpecError("iterations must be at least 1")
        if self.seed < 0:
            raise SpecError("seed must be non-negative")
        if not self.nh or not self.K_n:
            raise SpecError("nh and K_n lists must be non-empty")
        for nh in self.nh:
            if nh < 1 or self.n // nh < 2:
                raise SpecError(f"nh = {nh} leaves fewer than 2 blocks (n = {self.n})")
            if self.n // (self.n // nh) < 2:
                raise SpecError(f"nh = {nh} gives blocks with fewer than 2 observations")
        for k in self.K_n:
            if k < 1:
                raise SpecError("K_n values must be positive")
        for q in self.q:
            if not 0 < q <= 0.5:
                raise SpecError("q values must lie in (0, 1/2]")
        for t in self.taus:
            if not 0 < t <= 1:
                raise SpecError("taus must lie in (0, 1]")
        if self.correction not in ("none", "slope", "psi"):
            raise SpecError("correction must be none, slope or psi")
        if self.constant_var is not None and not self.constant_var > 0:
            raise SpecError("constant_var must be positive")
        if self.blocks not in BOUNDARIES:
            raise SpecError(f"blocks must be one of {BOUNDARIES}")

    def inv_h(self, nh: int) -> int:
        return self.n // nh

    def partition(self, nh: int) -> BlockPartition:
        return partition(self.n, self.inv_h(nh), self.blocks)


# ---------------------------------------------------------------- spec files

def _floats(s: str) -> tuple:
    return tuple(float(v) for v in s.replace(",", " ").split())


def _ints(s: str) -> tuple:
    return tuple(int(v) for v in s.replace(",", " ").split())


def default_spec_text() -> str:
    return resources.files("spotvol").joinpath("data/default.spec").read_text()


def parse_spec(text: str, base_dir: Optional[Path] = None) -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
        return _spec_from_parser(cp, base_dir or Path("."))
    except SpecError:
        raise
    except (configparser.Error, ValueError, TypeError, KeyError) as exc:
        raise SpecError(str(exc)) from exc


def load_spec(fname) -> ExperimentSpec:
    fname = Path(fname)
    try:
        text = fname.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {fname}: {exc}") from exc
    return parse_spec(text, fname.parent)


# configparser lowercases keys
_KEYS = {
    "experiment": {"scenario", "n", "nh", "k_n", "iterations", "seed", "out"},
    "model": {"mean_reversion_speed", "mean_level", "vol_of_vol", "leverage_corr",
              "seasonal_level", "seasonal_amplitude", "seasonal_frequency", "seasonal_scale",
              "initial_var", "constant_var"},
    "noise": {"family", "level_eta", "pareto_shape"},
    "jumps": {"intensity", "size_law", "size"},
    "estimator": {"window_mode", "truncate", "truncation_kappa", "truncation_scale",
                  "alpha_hint", "q", "correction", "blocks"},
    "psi": {"target_var", "grid_low", "grid_high", "grid_points", "grid_spacing",
            "iterations"},
    "table2": {"slopes"},
    "coverage": {"q", "taus"},
}


def _spec_from_parser(cp: configparser.ConfigParser, base_dir: Path) -> ExperimentSpec:
    unknown = set(cp.sections()) - set(_KEYS)
    if unknown:
        raise SpecError(f"unknown sections: {sorted(unknown)}")
    for name in cp.sections():
        bad = set(cp[name]) - _KEYS[name]
        if bad:
            raise SpecError(f"unknown [{name}] keys: {sorted(bad)}")

    def sect(name):
        return cp[name] if cp.has_section(name) else {}

    ex = sect("experiment")
    kw = {}
    if "scenario" in ex:
        kw["scenario"] = ex["scenario"].strip()
    if "n" in ex:
        kw["n"] = int(ex["n"])
    if "nh" in ex:
        kw["nh"] = _ints(ex["nh"])
    if "k_n" in ex:
        kw["K_n"] = _ints(ex["k_n"])
    if "iterations" in ex:
        kw["iterations"] = int(ex["iterations"])
    if "seed" in ex:
        kw["seed"] = int(ex["seed"])
    if "out" in ex:
        kw["out"] = Path(ex["out"])

    m = dict(sect("model"))
    if "constant_var" in m:
        kw["constant_var"] = float(m.pop("constant_var"))
    kw["model"] = SvModelConfig(**{k: float(v) for k, v in m.items()})

    nz = dict(sect("noise"))
    kw["noise"] = NoiseConfig(family=nz.get("family", "exponential").strip(),
                              level_eta=float(nz.get("level_eta", 10_000.0)),
                              pareto_shape=float(nz.get("pareto_shape", 3.0)))

    jp = dict(sect("jumps"))
    if jp and float(jp.get("intensity", 0.0)) > 0:
        kw["jumps"] = JumpConfig(intensity=float(jp["intensity"]),
                                 size_law=jp.get("size_law", "plusminus").strip(),
                                 size=float(jp.get("size", 0.005)))

    es = sect("estimator")
    if es:
        tr = es.get("truncate", "no").strip().lower() in ("1", "yes", "true", "on")
        kappa = es.get("truncation_kappa", "").strip()
        scale = es.get("truncation_scale", "auto").strip()
        kw["estimator"] = EstimatorConfig(
            K_n=(kw.get("K_n") or (180,))[0],
            window_mode=es.get("window_mode", "centered").strip(),
            truncate=tr,
            truncation_kappa=float(kappa) if (kappa and tr) else None,
            truncation_scale=scale if scale == "auto" else float(scale),
            alpha_hint=float(es["alpha_hint"]) if es.get("alpha_hint", "").strip() else None,
        )
        if "q" in es:
            kw["q"] = _floats(es["q"])
        if "correction" in es:
            kw["correction"] = es["correction"].strip()
        if "blocks" in es:
            kw["blocks"] = es["blocks"].strip()

    ps = sect("psi")
    if ps:
        kw["psi"] = PsiGridSpec(
            target_var=float(ps.get("target_var", 1e-4)),
            low=float(ps.get("grid_low", 0.5)),
            high=float(ps.get("grid_high", 1.5)),
            points=int(ps.get("grid_points", 64)),
            spacing=ps.get("grid_spacing", "linear").strip(),
            iterations=int(ps.get("iterations", 20_000)),
        )

    t2 = sect("table2")
    if "slopes" in t2:
        p = Path(t2["slopes"])
        kw["slopes_file"] = p if p.is_absolute() else base_dir / p

    cv = sect("coverage")
    if "q" in cv:
        kw["q"] = _floats(cv["q"])
    if "taus" in cv:
        kw["taus"] = _floats(cv["taus"])
    return ExperimentSpec(**kw)


# ---------------------------------------------------------------- simulation

def base_spot_var(spec: ExperimentSpec) -> np.ndarray:
    """The volatility path held fixed across iterations (or a constant)."""
    if spec.constant_var is not None:
        return np.full(spec.n + 1, spec.constant_var)
    return simulate_path(spec.model, spec.n, spec.seed).spot_var


def iteration_prices(spot_var: np.ndarray, noise: NoiseConfig, jumps: Optional[JumpConfig],
                     seed: int, iteration: int) -> np.ndarray:
    """Noisy prices of one Monte Carlo day on a fixed spot-variance path."""
    n = len(spot_var) - 1
    gen = _rng.stream(seed, _rng.ITERATION, iteration)
    x = np.empty(n + 1)
    x[0] = 0.0
    np.cumsum(np.sqrt(spot_var[:-1] / n) * gen.standard_normal(n), out=x[1:])
    if jumps is not None:
        x += jump_increment(n, draw_jumps(jumps, gen))
    return x + noise.sample(gen, n + 1)


def _chunks(total: int):
    return [range(a, min(a + CHUNK, total)) for a in range(0, total, CHUNK)]


def _map_chunks(fn, total: int, threads: int):
    chunks = _chunks(total)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, chunks))
    return [fn(c) for c in chunks]


@dataclass
class _Moments:
    """Per-block count, mean and centered sum of squares (Chan et al. merge)."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, values: np.ndarray) -> "_Moments":
        mean = values.mean(axis=0)
        return cls(values.shape[0], mean, ((values - mean) ** 2).sum(axis=0))

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta ** 2 * self.count * other.count / n
        return _Moments(n, mean, m2)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.m2 / (self.count - 1))


def _merge_all(parts):
    acc = parts[0]
    for p in parts[1:]:
        acc = acc.merge(p)
    return acc


# ---------------------------------------------------------------- psi tables

def psi_config_for(spec: ExperimentSpec, nh: int, target_var: Optional[float] = None) -> PsiConfig:
    return PsiConfig(n=spec.n, nh=nh, noise=spec.noise, grid=spec.psi.grid(target_var),
                     iterations_per_point=spec.psi.iterations, seed=spec.seed)


def psi_table_for(spec: ExperimentSpec, nh: int, threads: int = 1,
                  target_var: Optional[float] = None) -> PsiTable:
    return build_psi_table(psi_config_for(spec, nh, target_var), threads=threads)


def _correction_for(spec: ExperimentSpec, nh: int, threads: int, target_var=None):
    """``(correction, table)`` for the spec's correction mode."""
    if spec.correction == "none":
        return None, None
    table = psi_table_for(spec, nh, threads, target_var)
    return (table.fitted_slope if spec.correction == "slope" else table), table


def _warn(spec: ExperimentSpec, nh: int, cfg: Optional[EstimatorConfig] = None) -> None:
    for msg in rate_warnings(spec.n, spec.inv_h(nh), cfg):
        log.warning("nh=%d: %s", nh, msg)


def _ensure_out(spec: ExperimentSpec) -> Path:
    os.makedirs(spec.out, exist_ok=True)
    return Path(spec.out)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_rows(fname: Path, header, rows) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# ---------------------------------------------------------------- studies

def run_table1(spec: ExperimentSpec, threads: int = 1, write: bool = True) -> list:
    """Psi slopes per block size; rows ``(nh, inv_h, h*n^(2/3), slope)``.

    Uses ``spec.psi.iterations`` draws per grid point.
    """
    rows = []
    out = _ensure_out(spec) if write else None
    for nh in spec.nh:
        _warn(spec, nh)
        table = psi_table_for(spec, nh, threads)
        if write:
            table.write_csv(out / f"psi_nh{nh}.csv")
        rows.append((nh, spec.inv_h(nh), nh / spec.n * spec.n ** (2.0 / 3.0), table.fitted_slope))
        log.info("nh=%d slope=%.4f", nh, table.fitted_slope)
    if write:
        _write_rows(out / "table1.csv", ["nh", "inv_h", "h_n23", "slope"], rows)
    return rows


def read_slopes(fname) -> dict:
    fname = Path(fname) if fname is not None else None
    if fname is None or not fname.exists():
        raise MissingArtifactError(
            f"slope file {fname} not found; run the table1 study first and point "
            "[table2] slopes at its table1.csv")
    with open(fname, newline="") as fh:
        return {int(r["nh"]): float(r["slope"]) for r in csv.DictReader(fh)}


@dataclass(frozen=True)
class SummaryRow:
    nh: int
    K_n: int
    msd: float
    mab: float
    mabc: float


def run_table2(spec: ExperimentSpec, threads: int = 1, slopes: Optional[dict] = None,
               write: bool = True) -> list:
    """MSD, MAB and MABC (scaled by 1e6) per ``(nh, K_n)`` cell.

    One volatility path is fixed from the master seed; each iteration redraws
    the price and the noise.  All cells share the iteration's prices.
    Statistics are over iterations per block, then averaged over all blocks.
    """
    if slopes is None:
        slopes = read_slopes(spec.slopes_file)
    missing = [nh for nh in spec.nh if nh not in slopes]
    if missing:
        raise MissingArtifactError(f"no slope for nh={missing} in the table1 output")
    spot_var = base_spot_var(spec)
    parts = {nh: spec.partition(nh) for nh in spec.nh}
    for nh in spec.nh:
        _warn(spec, nh)

    def chunk(its):
        y = np.stack([iteration_prices(spot_var, spec.noise, spec.jumps, spec.seed, i) for i in its])
        res = {}
        for nh, part in parts.items():
            d = np.diff(block_minima(y, part), axis=-1)
            u = truncation_threshold(d, part.h, spec.estimator) if spec.estimator.truncating \
                else math.inf
            b = np.arange(part.inv_h)
            for K in spec.K_n:
                lo, hi = window_bounds(b, part.inv_h, K, "centered")
                raw, _, _ = window_estimates(d, part.h, lo, hi, u)
                res[nh, K] = _Moments.of(raw)
        return res

    results = _map_chunks(chunk, spec.iterations, threads)
    rows = []
    for nh, part in parts.items():
        truth = sample_at_centers(spot_var, part.inv_h)
        for K in spec.K_n:
            mom = _merge_all([r[nh, K] for r in results])
            std = mom.std if mom.count > 1 else np.zeros_like(mom.mean)
            rows.append(SummaryRow(
                nh=nh, K_n=K,
                msd=float(np.mean(std)) * REPORT_SCALE,
                mab=float(np.mean(np.abs(mom.mean - truth))) * REPORT_SCALE,
                mabc=float(np.mean(np.abs(mom.mean / slopes[nh] - truth))) * REPORT_SCALE))
    if write:
        _write_rows(_ensure_out(spec) / "table2.csv", ["nh", "K_n", "MSD", "MAB", "MABC"],
                    [(r.nh, r.K_n, r.msd, r.mab, r.mabc) for r in rows])
    return rows


def _raw_curves(spec, spot_var, part, K, its):
    y = np.stack([iteration_prices(spot_var, spec.noise, spec.jumps, spec.seed, i) for i in its])
    d = np.diff(block_minima(y, part), axis=-1)
    u = truncation_threshold(d, part.h, spec.estimator) if spec.estimator.truncating else math.inf
    lo, hi = window_bounds(np.arange(part.inv_h), part.inv_h, K, "centered")
    return window_estimates(d, part.h, lo, hi, u)


@dataclass
class CurveDemo:
    curve_rows: list
    band_rows: Optional[list]


def run_curve_demo(spec: ExperimentSpec, threads: int = 1, write: bool = True) -> CurveDemo:
    """Curve of the first day plus Monte Carlo and CLT bands over iterations.

    ``curve.csv`` has the day-0 estimates with their feasible CIs.  With more
    than one iteration, ``bands.csv`` adds pointwise empirical ``q``/``1-q``
    quantiles of the corrected estimates and the matching quantiles of the
    limiting normal law, mapped through the same correction.
    """
    nh, K = spec.nh[0], spec.K_n[0]
    q = spec.q[0]
    part = spec.partition(nh)
    cfg = replace(spec.estimator, K_n=K)
    _warn(spec, nh, cfg)
    spot_var = base_spot_var(spec)
    truth = sample_at_centers(spot_var, part.inv_h)
    correction, table = _correction_for(spec, nh, threads, float(np.mean(truth)))
    inv = make_inverse(correction)

    results = _map_chunks(lambda its: _raw_curves(spec, spot_var, part, K, its),
                          spec.iterations, threads)
    raw = np.concatenate([r[0] for r in results])
    quart = np.concatenate([r[1] for r in results])
    k_eff = results[0][2]
    t_center = (np.arange(part.inv_h) + 0.5) / part.inv_h

    hw0 = np.where(quart[0] > 0, ci_half_width(np.maximum(quart[0], 1e-300), k_eff, q), 0.0)
    curve_rows = [(k, t_center[k], raw[0, k], float(inv(raw[0, k])), quart[0, k],
                   float(inv(raw[0, k] - hw0[k])), float(inv(raw[0, k] + hw0[k])), truth[k])
                  for k in range(part.inv_h)]
    band_rows = None
    if spec.iterations > 1:
        corr = np.asarray(inv(raw))
        emp_lo, emp_hi = np.quantile(corr, [q, 1 - q], axis=0)
        centre = truth if table is None else (
            truth * table.fitted_slope if spec.correction == "slope" else psi_at(table, truth))
        sd = np.sqrt(ASYMPTOTIC_VARIANCE / k_eff) * truth
        z = ndtri(1 - q)
        clt_lo, clt_hi = np.asarray(inv(centre - z * sd)), np.asarray(inv(centre + z * sd))
        b = np.arange(part.inv_h)
        interior = (b > K / 2) & (b < part.inv_h - 1 - K / 2)
        band_rows = [(k, t_center[k], truth[k], raw[:, k].mean(), corr[:, k].mean(),
                      emp_lo[k], emp_hi[k], clt_lo[k], clt_hi[k], int(interior[k]))
                     for k in range(part.inv_h)]
    if write:
        out = _ensure_out(spec)
        _write_rows(out / "curve.csv",
                    ["k", "t_center", "raw", "corrected", "quarticity", "ci_lower", "ci_upper",
                     "true_spot_var"], curve_rows)
        if band_rows is not None:
            _write_rows(out / "bands.csv",
                        ["k", "t_center", "true_spot_var", "mean_raw", "mean_corrected",
                         "emp_lower", "emp_upper", "clt_lower", "clt_upper", "interior"],
                        band_rows)
    return CurveDemo(curve_rows, band_rows)


@dataclass(frozen=True)
class CoverageRow:
    q: float
    nominal: float
    coverage: float
    hits: int
    trials: int


def run_coverage(spec: ExperimentSpec, threads: int = 1, correction="spec",
                 write: bool = True) -> list:
    """Empirical coverage of the ``1 - 2q`` intervals at each ``tau``.

    Uses ``spec.estimator.window_mode`` and ``nh[0]``, ``K_n[0]``.  The true
    value at ``tau`` is the spot variance at the nearest grid point.
    ``correction="spec"`` builds the correction from the spec's Psi settings;
    pass a number or a table to reuse one.
    """
    nh, K = spec.nh[0], spec.K_n[0]
    part = spec.partition(nh)
    cfg = replace(spec.estimator, K_n=K)
    _warn(spec, nh, cfg)
    spot_var = base_spot_var(spec)
    if isinstance(correction, str) and correction == "spec":
        correction, _ = _correction_for(spec, nh, threads, float(np.mean(spot_var)))
    inv = make_inverse(correction)
    blocks = np.array([part.block_of(t) for t in spec.taus])
    lo, hi = window_bounds(blocks, part.inv_h, K, cfg.window_mode)
    if np.any(hi < lo):
        raise SpecError(f"empty {cfg.window_mode} window at one of taus={spec.taus}")
    truth = spot_var[np.rint(np.asarray(spec.taus) * spec.n).astype(np.int64)]

    def chunk(its):
        y = np.stack([iteration_prices(spot_var, spec.noise, spec.jumps, spec.seed, i) for i in its])
        d = np.diff(block_minima(y, part), axis=-1)
        u = truncation_threshold(d, part.h, cfg) if cfg.truncating else math.inf
        raw, quart, k_eff = window_estimates(d, part.h, lo, hi, u)
        hits = []
        for q in spec.q:
            hw = np.where(quart > 0, ci_half_width(np.maximum(quart, 1e-300), k_eff, q), 0.0)
            inside = (inv(raw - hw) <= truth) & (truth <= inv(raw + hw))
            hits.append(int(np.sum(inside)))
        return hits

    results = _map_chunks(chunk, spec.iterations, threads)
    trials = spec.iterations * len(spec.taus)
    rows = []
    for j, q in enumerate(spec.q):
        h = sum(r[j] for r in results)
        rows.append(CoverageRow(q=q, nominal=1 - 2 * q, coverage=h / trials, hits=h, trials=trials))
    if write:
        _write_rows(_ensure_out(spec) / "coverage.csv",
                    ["q", "nominal", "coverage", "hits", "trials"],
                    [(r.q, r.nominal, r.coverage, r.hits, r.trials) for r in rows])
    return rows
