"""Monte Carlo evaluation and inversion of the bias function Psi_n.

``Psi_n(sigma^2)`` is the rescaled mean squared difference of two independent
local minima of a noisy Gaussian random walk,

    Psi_n(s2) = pi / (2 (pi - 2)) * h^-1 * E[(M0 - M1)^2],   h = nh / n,

with ``M0 = min_{k=0..nh-1}(W_k + eps_k)`` (walk started at 0) and
``M1 = min_{k=1..nh}(W_k + eps_k)``, where ``W_k`` has Gaussian steps of
standard deviation ``sigma / sqrt(n)``.

The minima are drawn with a backward recursion that keeps only one state per
sample: start from ``eps + s Z`` at the far end, then repeatedly take the
minimum with a fresh noise draw and add a fresh Gaussian step.  ``M0`` drops
the Gaussian step at the last stage.  Memory is O(size) instead of
O(size * nh).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from . import rng as _rng
from .blocks import HALF_NORMAL_FACTOR
from .market import NoiseConfig

VARIANTS = ("M0", "M1")


def _check(nh: int, variant: str) -> None:
    if nh < 1:
        raise ValueError(f"nh must be at least 1, got {nh}")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be 'M0' or 'M1', got {variant!r}")


def _dp_minima(gen, step: float, nh: int, noise: NoiseConfig, variant: str, size: int):
    u = noise.sample(gen, size)
    if variant == "M0" and nh == 1:
        return u
    u += step * gen.standard_normal(size)
    # M1 uses nh Gaussian steps; M0 has Z_0 = 0 and so one fewer
    inner = nh - 1 if variant == "M1" else nh - 2
    for _ in range(inner):
        np.minimum(u, noise.sample(gen, size), out=u)
        u += step * gen.standard_normal(size)
    if variant == "M0":
        np.minimum(u, noise.sample(gen, size), out=u)
    return u


def sample_min_dp(sigma: float, n: int, nh: int, noise: NoiseConfig, variant: str,
                  seed=0, size=None):
    """Draw local minima ``M1^{nh}`` or ``M0^{nh-1}`` by backward recursion.

    Returns a float when ``size`` is None, else an array of ``size`` draws.
    ``seed`` may be an int or a :class:`numpy.random.Generator`.
    """
    _check(nh, variant)
    gen = _rng.as_generator(seed, _rng.PSI)
    out = _dp_minima(gen, sigma / math.sqrt(n), nh, noise, variant, 1 if size is None else size)
    return float(out[0]) if size is None else out


def sample_min_bruteforce(sigma: float, n: int, nh: int, noise: NoiseConfig, variant: str,
                          seed=0, size=None):
    """Reference sampler: simulate the whole walk, add noise, take the minimum."""
    _check(nh, variant)
    gen = _rng.as_generator(seed, _rng.ORACLE)
    m = 1 if size is None else size
    steps = sigma / math.sqrt(n) * gen.standard_normal((m, nh))
    walk = np.cumsum(steps, axis=1)
    if variant == "M0":
        # indices 0..nh-1 with W_0 = 0
        walk = np.concatenate([np.zeros((m, 1)), walk[:, :-1]], axis=1)
    out = np.min(walk + noise.sample(gen, (m, nh)), axis=1)
    return float(out[0]) if size is None else out


@dataclass(frozen=True)
class PsiConfig:
    n: int = 23_400
    nh: int = 15
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    grid: tuple = ()
    iterations_per_point: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if self.nh < 1:
            raise ValueError("nh must be at least 1")
        if self.n < self.nh:
            raise ValueError("nh cannot exceed n")
        if self.iterations_per_point < 1:
            raise ValueError("iterations_per_point must be at least 1")
        g = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", tuple(float(v) for v in g))
        if len(g) and (np.any(g <= 0) or np.any(np.diff(g) <= 0)):
            raise ValueError("grid must be positive and strictly increasing")

    @property
    def h(self) -> float:
        return self.nh / self.n


def default_grid(target_var: float = 1e-4, low: float = 0.5, high: float = 1.5,
                 points: int = 64, spacing: str = "linear") -> tuple:
    """Grid of squared volatilities around ``target_var``."""
    if not 0 < low < high:
        raise ValueError("need 0 < low < high")
    if spacing == "linear":
        g = np.linspace(low * target_var, high * target_var, points)
    elif spacing == "geometric":
        g = np.geomspace(low * target_var, high * target_var, points)
    else:
        raise ValueError(f"unknown grid spacing {spacing!r}")
    return tuple(float(v) for v in g)


def estimate_psi_point(sigma_sq: float, cfg: PsiConfig, point: int = 0):
    """Monte Carlo ``(Psi_hat, stderr)`` at ``sigma_sq``.

    ``M0`` and ``M1`` come from separate streams keyed by ``(seed, point)``.
    """
    if sigma_sq < 0:
        raise ValueError("sigma_sq must be non-negative")
    N = cfg.iterations_per_point
    sigma = math.sqrt(sigma_sq)
    m0 = _dp_minima(_rng.stream(cfg.seed, _rng.PSI, point, 0), sigma / math.sqrt(cfg.n),
                    cfg.nh, cfg.noise, "M0", N)
    m1 = _dp_minima(_rng.stream(cfg.seed, _rng.PSI, point, 1), sigma / math.sqrt(cfg.n),
                    cfg.nh, cfg.noise, "M1", N)
    vals = HALF_NORMAL_FACTOR / cfg.h * (m0 - m1) ** 2
    se = float(np.std(vals, ddof=1) / math.sqrt(N)) if N > 1 else math.nan
    return float(np.mean(vals)), se


@dataclass(frozen=True)
class PsiTable:
    grid: np.ndarray
    psi_hat: np.ndarray
    stderr: np.ndarray
    monotone_values: np.ndarray
    fitted_slope: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.grid)

    def write_csv(self, fname) -> None:
        """Write the table and a ``.json`` sidecar with its metadata."""
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sigma_sq", "psi_hat", "stderr", "psi_isotonic"])
            for row in zip(self.grid, self.psi_hat, self.stderr, self.monotone_values):
                w.writerow([repr(float(v)) for v in row])
        with open(_sidecar(fname), "w") as fh:
            json.dump({**self.meta, "fitted_slope": self.fitted_slope}, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read_csv(cls, fname) -> "PsiTable":
        with open(fname, newline="") as fh:
            rows = list(csv.DictReader(fh))
        cols = {k: np.array([float(r[k]) for r in rows])
                for k in ("sigma_sq", "psi_hat", "stderr", "psi_isotonic")}
        try:
            with open(_sidecar(fname)) as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            meta = {}
        slope = meta.pop("fitted_slope", None)
        table = cls(grid=cols["sigma_sq"], psi_hat=cols["psi_hat"], stderr=cols["stderr"],
                    monotone_values=cols["psi_isotonic"], fitted_slope=math.nan, meta=meta)
        return _with_slope(table) if slope is None else _replace_slope(table, slope)


def _sidecar(fname) -> str:
    s = str(fname)
    return (s[:-4] if s.endswith(".csv") else s) + ".json"


def _replace_slope(table: PsiTable, slope: float) -> PsiTable:
    return PsiTable(table.grid, table.psi_hat, table.stderr, table.monotone_values,
                    float(slope), table.meta)


def _with_slope(table: PsiTable) -> PsiTable:
    return _replace_slope(table, fit_slope(table))


def monotone_fit(values, stderr=None) -> np.ndarray:
    """Weighted isotonic (non-decreasing) fit, weights ``1/stderr^2``."""
    values = np.asarray(values, dtype=float)
    weights = None
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)
        if np.all(np.isfinite(se)) and np.all(se > 0):
            weights = 1.0 / se ** 2
    return isotonic_regression(values, weights=weights, increasing=True).x


def fit_slope(table: PsiTable) -> float:
    """Least-squares slope through the origin of ``psi_hat`` on ``sigma^2``."""
    x = np.asarray(table.grid, dtype=float)
    if len(x) < 1:
        raise ValueError("table is empty")
    return float(np.dot(x, table.psi_hat) / np.dot(x, x))


def build_psi_table(cfg: PsiConfig, threads: int = 1) -> PsiTable:
    """Estimate Psi on ``cfg.grid``, isotonize, and fit the slope.

    Grid point ``j`` always uses stream ``(seed, j)``, so the table does not
    depend on ``threads``.
    """
    if not cfg.grid:
        raise ValueError("PsiConfig.grid is empty")
    grid = np.asarray(cfg.grid)

    def point(j):
        return estimate_psi_point(grid[j], cfg, point=j)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            res = list(pool.map(point, range(len(grid))))
    else:
        res = [point(j) for j in range(len(grid))]
    psi_hat = np.array([r[0] for r in res])
    stderr = np.array([r[1] for r in res])
    meta = {"n": cfg.n, "nh": cfg.nh, "eta": cfg.noise.level_eta, "family": cfg.noise.family,
            "N": cfg.iterations_per_point, "seed": cfg.seed}
    table = PsiTable(grid=grid, psi_hat=psi_hat, stderr=stderr,
                     monotone_values=monotone_fit(psi_hat, stderr), fitted_slope=math.nan,
                     meta=meta)
    return _with_slope(table)


def _inverse_knots(table: PsiTable):
    """Strictly increasing knots of the inverse; tied runs collapse to their mean."""
    y = np.asarray(table.monotone_values, dtype=float)
    x = np.asarray(table.grid, dtype=float)
    uy, start, counts = np.unique(y, return_index=True, return_counts=True)
    order = np.argsort(start)
    uy, start, counts = uy[order], start[order], counts[order]
    ux = np.add.reduceat(x, start) / counts
    return uy, ux


def invert_psi(table: PsiTable, y):
    """Piecewise-linear inverse of the isotonic Psi fit.

    Outside the tabulated range the inverse continues linearly with slope
    ``1 / fitted_slope`` from the nearest end point.
    """
    ky, kx = _inverse_knots(table)
    y_arr = np.asarray(y, dtype=float)
    if len(ky) == 1:
        out = kx[0] + (y_arr - ky[0]) / table.fitted_slope
    else:
        out = np.interp(y_arr, ky, kx)
        out = np.where(y_arr < ky[0], kx[0] + (y_arr - ky[0]) / table.fitted_slope, out)
        out = np.where(y_arr > ky[-1], kx[-1] + (y_arr - ky[-1]) / table.fitted_slope, out)
    return float(out) if np.ndim(out) == 0 else out


def psi_at(table: PsiTable, sigma_sq):
    """Isotonic Psi interpolated at ``sigma_sq`` (linear extrapolation by slope)."""
    x = np.asarray(table.grid)
    y = np.asarray(table.monotone_values)
    s = np.asarray(sigma_sq, dtype=float)
    out = np.interp(s, x, y)
    out = np.where(s < x[0], y[0] + (s - x[0]) * table.fitted_slope, out)
    out = np.where(s > x[-1], y[-1] + (s - x[-1]) * table.fitted_slope, out)
    return float(out) if np.ndim(out) == 0 else out


def zero_vol_psi(n: int, nh: int, eta: float) -> float:
    """Closed form of Psi(0) for exponential noise.

    Both minima are then Exp(nh * eta); their difference has mean zero and
    second moment ``2 / (nh eta)^2``.
    """
    return math.pi / (math.pi - 2.0) * (n / nh) / (nh * eta) ** 2
