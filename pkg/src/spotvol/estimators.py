"""Spot volatility, quarticity and confidence intervals from block minima."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import ndtri

from .blocks import HALF_NORMAL_FACTOR, LocalMinima

QUARTICITY_FACTOR = math.pi / (4.0 * (3.0 * math.pi - 8.0))
# 7 pi^2/4 - 2 pi/3 - 12 and its ratio to (pi - 2)^2, the CLT variance constant
VARIANCE_NUMERATOR = 7.0 * math.pi ** 2 / 4.0 - 2.0 * math.pi / 3.0 - 12.0
ASYMPTOTIC_VARIANCE = VARIANCE_NUMERATOR / (math.pi - 2.0) ** 2

DEFAULT_KAPPA = 0.4
AUTO_SCALE_MULTIPLIER = 4.0
# median of a chi-square(1) variable
_CHI2_1_MEDIAN = 0.45493642311957283

WINDOW_MODES = ("pre", "post", "centered")


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning of the block-minima estimators.

    Truncation is on when ``truncate`` is set or ``truncation_kappa`` is
    given; the threshold is ``truncation_scale * h**kappa``.  A numeric scale
    of 1 is the bare ``h**kappa`` rule, which presumes volatility of order one
    in the units of the data.  ``truncation_scale="auto"`` multiplies
    ``h**kappa`` by four times a robust pilot volatility (median of squared
    minima differences), which makes the rule scale-free.
    """

    K_n: int = 180
    window_mode: str = "pre"
    truncate: bool = False
    truncation_kappa: Optional[float] = None
    truncation_scale: Union[float, str] = 1.0
    alpha_hint: Optional[float] = None

    def __post_init__(self):
        if self.K_n < 1:
            raise ValueError("K_n must be at least 1")
        if self.window_mode not in WINDOW_MODES:
            raise ValueError(f"window_mode must be one of {WINDOW_MODES}")
        if self.truncation_kappa is not None and not 0.0 < self.truncation_kappa < 0.5:
            raise ValueError("truncation_kappa must lie in (0, 1/2)")
        if isinstance(self.truncation_scale, str):
            if self.truncation_scale != "auto":
                raise ValueError("truncation_scale must be positive or 'auto'")
        elif not self.truncation_scale > 0:
            raise ValueError("truncation_scale must be positive or 'auto'")
        if self.alpha_hint is not None and not self.alpha_hint > 0:
            raise ValueError("alpha_hint must be positive")

    @property
    def truncating(self) -> bool:
        return self.truncate or self.truncation_kappa is not None

    @property
    def kappa(self) -> Optional[float]:
        if not self.truncating:
            return None
        return DEFAULT_KAPPA if self.truncation_kappa is None else self.truncation_kappa


@dataclass(frozen=True)
class SpotEstimate:
    tau: float
    raw_value: float
    quarticity: float
    blocks_used: int
    corrected_value: Optional[float] = None
    ci_lower: Optional[float] = None
    ci_upper: Optional[float] = None


def pilot_volatility(diffs, h: float) -> float:
    """Robust volatility scale from minima differences (median based)."""
    d2 = np.asarray(diffs, dtype=float) ** 2
    med = float(np.median(d2, axis=-1)) if d2.ndim == 1 else np.median(d2, axis=-1)
    return np.sqrt(HALF_NORMAL_FACTOR * med / (h * _CHI2_1_MEDIAN))


def truncation_threshold(diffs, h: float, cfg: EstimatorConfig):
    """``u_n`` for the configuration, or ``inf`` when truncation is off."""
    if not cfg.truncating:
        return math.inf
    scale = cfg.truncation_scale
    if scale == "auto":
        scale = AUTO_SCALE_MULTIPLIER * pilot_volatility(diffs, h)
    return scale * h ** cfg.kappa


def window_bounds(b, inv_h: int, K: int, mode: str):
    """Inclusive range ``[lo, hi]`` of difference indices for block ``b``.

    Difference ``D_k`` exists for ``k = 1..inv_h-1``; windows are clamped to
    that range.  ``pre`` covers ``b-K..b-1``, ``post`` covers ``b+1..b+K``,
    ``centered`` takes ``ceil(K/2)`` differences up to ``D_b`` and
    ``floor(K/2)`` after it.
    """
    b = np.asarray(b)
    if mode == "pre":
        lo, hi = b - K, b - 1
    elif mode == "post":
        lo, hi = b + 1, b + K
    elif mode == "centered":
        lo, hi = b - (K + 1) // 2 + 1, b + K // 2
    else:
        raise ValueError(f"unknown window mode {mode!r}")
    return np.maximum(lo, 1), np.minimum(hi, inv_h - 1)


# window sums below this fraction of the running total are summed directly
_CANCELLATION_RATIO = 1e-4


def window_sums(terms, lo, hi):
    """Sums of ``terms[..., k-1]`` over ``k = lo..hi``.

    ``terms`` may carry leading batch axes; the bounds (scalars or 1-D
    arrays) are shared by every batch row.

    Differences of running totals are O(1) per window but lose digits when a
    window is small next to the terms before it (a jump followed by a quiet
    stretch); such batches are summed window by window instead.
    """
    terms = np.asarray(terms, dtype=float)
    zero = np.zeros(terms.shape[:-1] + (1,))
    c = np.concatenate([zero, np.cumsum(terms, axis=-1)], axis=-1)
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    if lo.ndim > 1 or hi.ndim > 1:
        raise ValueError("window bounds must be scalars or 1-D arrays")
    empty = hi < lo
    hi_ = np.where(empty, 0, hi)
    lo_ = np.where(empty, 1, lo)
    out = np.take(c, hi_, axis=-1) - np.take(c, lo_ - 1, axis=-1)
    scale = np.take(np.concatenate([zero, np.cumsum(np.abs(terms), axis=-1)], axis=-1), hi_,
                    axis=-1)
    if np.any(~empty & (np.abs(out) < _CANCELLATION_RATIO * scale)):
        out = _direct_window_sums(terms, lo_, hi_)
    return np.where(empty, 0.0, out)


def _direct_window_sums(terms, lo, hi):
    padded = np.concatenate([terms, np.zeros(terms.shape[:-1] + (1,))], axis=-1)
    idx = np.empty(2 * lo.size, dtype=np.int64)
    idx[0::2] = lo.ravel() - 1
    idx[1::2] = hi.ravel()
    out = np.add.reduceat(padded, idx, axis=-1)[..., 0::2]
    return out.reshape(terms.shape[:-1] + lo.shape)


def window_estimates(diffs, h: float, lo, hi, threshold=math.inf):
    """Raw spot variance, quarticity and term count over windows ``[lo, hi]``.

    ``diffs`` may carry leading batch axes; ``threshold`` may be a scalar or
    broadcast against those axes.
    """
    diffs = np.asarray(diffs, dtype=float)
    keep = np.abs(diffs) <= np.asarray(threshold)[..., None] if np.ndim(threshold) else (
        np.abs(diffs) <= threshold)
    d2 = np.where(keep, diffs ** 2, 0.0)
    k_eff = np.maximum(np.asarray(hi) - np.asarray(lo) + 1, 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        raw = HALF_NORMAL_FACTOR / h * window_sums(d2, lo, hi) / k_eff
        quart = QUARTICITY_FACTOR / h ** 2 * window_sums(d2 ** 2, lo, hi) / k_eff
    return raw, quart, k_eff


def _check_tau(tau: float) -> None:
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")


def _windowed(lm: LocalMinima, tau: float, cfg: EstimatorConfig, mode: str):
    _check_tau(tau)
    b = lm.partition.block_of(tau)
    lo, hi = window_bounds(b, lm.inv_h, cfg.K_n, mode)
    if hi < lo:
        raise ValueError(f"empty {mode} window at tau={tau} (block {b}, {lm.inv_h} blocks)")
    u = truncation_threshold(lm.diffs, lm.h, cfg)
    raw, quart, k_eff = window_estimates(lm.diffs, lm.h, lo, hi, u)
    return float(raw), float(quart), int(k_eff)


def spot_vol_pre(lm: LocalMinima, tau: float, cfg: EstimatorConfig) -> float:
    """Spot variance from the ``K_n`` minima differences before ``tau``."""
    return _windowed(lm, tau, cfg, "pre")[0]


def spot_vol_post(lm: LocalMinima, tau: float, cfg: EstimatorConfig) -> float:
    """Spot variance from the ``K_n`` minima differences after ``tau``."""
    return _windowed(lm, tau, cfg, "post")[0]


def spot_vol_centered(lm: LocalMinima, tau: float, cfg: EstimatorConfig) -> float:
    return _windowed(lm, tau, cfg, "centered")[0]


def spot_quarticity(lm: LocalMinima, tau: float, cfg: EstimatorConfig) -> float:
    """Spot quarticity over the window selected by ``cfg.window_mode``."""
    return _windowed(lm, tau, cfg, cfg.window_mode)[1]


def confidence_interval(raw, quart, k_eff, q: float,
                        inverse: Optional[Callable] = None):
    """Two-sided interval of level ``1 - 2q`` from the feasible CLT.

    The half-width is ``z_{1-q} sqrt(quart * V) / ((pi - 2) sqrt(k_eff))`` with
    ``V = 7 pi^2/4 - 2 pi/3 - 12``; ``inverse`` (non-decreasing, e.g. the
    inverse of Psi) is applied to both endpoints.
    """
    if not 0.0 < q <= 0.5:
        raise ValueError(f"q must lie in (0, 1/2], got {q}")
    quart = np.asarray(quart, dtype=float)
    if np.any(quart <= 0):
        raise ValueError("quarticity must be positive")
    hw = ci_half_width(quart, k_eff, q)
    inv = inverse or (lambda v: v)
    lower, upper = inv(raw - hw), inv(raw + hw)
    if np.ndim(lower) == 0:
        return float(lower), float(upper)
    return lower, upper


def ci_half_width(quart, k_eff, q: float):
    z = ndtri(1.0 - q)
    return z * np.sqrt(np.asarray(quart) * VARIANCE_NUMERATOR) / (
        (math.pi - 2.0) * np.sqrt(np.asarray(k_eff, dtype=float)))


def vol_jump_statistic(lm: LocalMinima, tau: float, cfg: EstimatorConfig) -> float:
    """Post-window minus pre-window spot variance at ``tau`` (unstandardized)."""
    return spot_vol_post(lm, tau, cfg) - spot_vol_pre(lm, tau, cfg)


def make_inverse(correction) -> Callable:
    """Map a bias-correction choice to a non-decreasing function.

    ``None`` gives the identity, a number divides by that slope, and a
    :class:`~spotvol.psi.PsiTable` inverts the tabulated Psi.
    """
    from .psi import PsiTable, invert_psi

    if correction is None:
        return lambda v: v
    if isinstance(correction, PsiTable):
        return lambda v: invert_psi(correction, v)
    slope = float(correction)
    if not slope > 0:
        raise ValueError("correction slope must be positive")
    return lambda v: np.asarray(v) / slope


def spot_estimate(lm: LocalMinima, tau: float, cfg: EstimatorConfig, q: float = 0.1,
                  correction=None) -> SpotEstimate:
    """Point estimate, quarticity and CI at ``tau`` with ``cfg.window_mode``."""
    raw, quart, k_eff = _windowed(lm, tau, cfg, cfg.window_mode)
    inv = make_inverse(correction)
    lo = hi = None
    if quart > 0:
        lo, hi = confidence_interval(raw, quart, k_eff, q, inv)
    return SpotEstimate(tau=tau, raw_value=raw, quarticity=quart, blocks_used=k_eff,
                        corrected_value=float(inv(raw)), ci_lower=lo, ci_upper=hi)


@dataclass(frozen=True)
class VolatilityCurve:
    """Centered estimates at every block center ``(k + 1/2) h``."""

    t_center: np.ndarray
    raw: np.ndarray
    corrected: np.ndarray
    quarticity: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    blocks_used: np.ndarray
    cfg: EstimatorConfig
    q: float
    true_spot_var: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.raw)

    def write_csv(self, fname) -> None:
        cols = ["k", "t_center", "raw", "corrected", "quarticity", "ci_lower", "ci_upper"]
        if self.true_spot_var is not None:
            cols.append("true_spot_var")
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for k in range(len(self)):
                row = [k, repr(float(self.t_center[k])), repr(float(self.raw[k])),
                       repr(float(self.corrected[k])), repr(float(self.quarticity[k])),
                       repr(float(self.ci_lower[k])), repr(float(self.ci_upper[k]))]
                if self.true_spot_var is not None:
                    row.append(repr(float(self.true_spot_var[k])))
                w.writerow(row)


def block_centers(inv_h: int) -> np.ndarray:
    return (np.arange(inv_h) + 0.5) / inv_h


def volatility_curve(lm: LocalMinima, cfg: EstimatorConfig, correction=None, q: float = 0.1,
                     true_spot_var=None) -> VolatilityCurve:
    """Centered estimates with pointwise CIs on every block.

    Windows are clamped at the edges of the day, so boundary blocks use fewer
    differences and get wider intervals.  ``true_spot_var`` (length ``n+1``)
    is sampled at the block centers when given.
    """
    inv_h = lm.inv_h
    b = np.arange(inv_h)
    lo, hi = window_bounds(b, inv_h, cfg.K_n, "centered")
    u = truncation_threshold(lm.diffs, lm.h, cfg)
    raw, quart, k_eff = window_estimates(lm.diffs, lm.h, lo, hi, u)
    inv = make_inverse(correction)
    hw = np.zeros(inv_h)
    pos = quart > 0
    hw[pos] = ci_half_width(quart[pos], k_eff[pos], q)
    truth = None
    if true_spot_var is not None:
        truth = sample_at_centers(true_spot_var, inv_h)
    return VolatilityCurve(t_center=block_centers(inv_h), raw=raw,
                           corrected=np.asarray(inv(raw), dtype=float),
                           quarticity=quart, ci_lower=np.asarray(inv(raw - hw), dtype=float),
                           ci_upper=np.asarray(inv(raw + hw), dtype=float),
                           blocks_used=k_eff, cfg=cfg, q=q, true_spot_var=truth)


def sample_at_centers(values, inv_h: int) -> np.ndarray:
    """Grid values (length ``n+1``) at the observation nearest each block center."""
    values = np.asarray(values, dtype=float)
    n = len(values) - 1
    idx = np.rint(block_centers(inv_h) * n).astype(np.int64)
    return values[idx]


def rate_warnings(n: int, inv_h: int, cfg: Optional[EstimatorConfig] = None,
                  r: float = 0.0) -> list:
    """Diagnostics on tuning parameters; advisory, never fatal."""
    msgs = []
    h = 1.0 / inv_h
    diag = h * n ** (2.0 / 3.0)
    if diag < 1.0:
        msgs.append(f"h*n^(2/3) = {diag:.3f} < 1: blocks are short relative to the noise, "
                    "the raw estimator is biased and needs the Psi correction")
    if cfg is not None and cfg.alpha_hint is not None:
        alpha = cfg.alpha_hint
        if cfg.kappa is not None:
            low = alpha / ((2.0 - r) * (2.0 * alpha + 1.0))
            if cfg.kappa <= low:
                msgs.append(f"kappa = {cfg.kappa} is below the lower bound {low:.4f} "
                            f"for alpha = {alpha}, r = {r}")
        if r >= (2.0 + 2.0 * alpha) / (1.0 + 2.0 * alpha):
            msgs.append(f"jump activity r = {r} too high for alpha = {alpha}")
        # K_n should grow slower than h^(-2 alpha/(1 + 2 alpha))
        k_max = h ** (-2.0 * alpha / (1.0 + 2.0 * alpha))
        if cfg.K_n > k_max:
            msgs.append(f"K_n = {cfg.K_n} exceeds h^(-2a/(1+2a)) = {k_max:.1f}; "
                        "smoothing bias may dominate")
    return msgs


def warn_rates(n: int, inv_h: int, cfg: Optional[EstimatorConfig] = None, r: float = 0.0) -> None:
    for msg in rate_warnings(n, inv_h, cfg, r):
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
