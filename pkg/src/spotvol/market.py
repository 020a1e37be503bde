"""Synthetic order-price markets.

A stochastic-volatility efficient log-price with a U-shaped intraday factor,
optional compound-Poisson price jumps, and one-sided (non-negative) additive
noise on the observed prices.  The default parameters reproduce the
one-trading-day design with one observation per second (n = 23,400).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numba
import numpy as np

from . import rng as _rng

NOISE_FAMILIES = ("exponential", "uniform", "pareto", "none")
JUMP_SIZE_LAWS = ("plusminus", "normal")


@dataclass(frozen=True)
class SvModelConfig:
    """Square-root stochastic variance with leverage and a seasonal factor.

    The log-price follows ``dX = a(t) dt + nu(t) sigma_t dW`` with
    ``d sigma^2 = speed (level - sigma^2) dt + vol_of_vol sigma dB`` and
    ``d[W, B] = leverage_corr dt``.  The seasonal factor is
    ``nu(t) = (seasonal_level - seasonal_amplitude sin(seasonal_frequency t)) * seasonal_scale``.
    """

    mean_reversion_speed: float = 0.0162
    mean_level: float = 0.8465
    vol_of_vol: float = 0.117
    leverage_corr: float = 0.2
    seasonal_level: float = 6.0
    seasonal_amplitude: float = 1.0
    seasonal_frequency: float = 3.0 * math.pi / 4.0
    seasonal_scale: float = 0.002
    initial_var: Optional[float] = None
    drift: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not self.mean_reversion_speed > 0:
            raise ValueError("mean_reversion_speed must be positive")
        if not self.mean_level > 0:
            raise ValueError("mean_level must be positive")
        if self.vol_of_vol < 0:
            raise ValueError("vol_of_vol must be non-negative")
        if not -1.0 <= self.leverage_corr <= 1.0:
            raise ValueError("leverage_corr must lie in [-1, 1]")
        if self.initial_var is not None and not self.initial_var > 0:
            raise ValueError("initial_var must be positive")
        t = np.linspace(0.0, 1.0, 4097)
        if np.min(self.seasonal(t)) <= 0:
            raise ValueError("seasonal factor nu(t) must stay positive on [0, 1]")

    @property
    def start_var(self) -> float:
        return self.mean_level if self.initial_var is None else self.initial_var

    def seasonal(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (self.seasonal_level
                - self.seasonal_amplitude * np.sin(self.seasonal_frequency * t)) * self.seasonal_scale

    @classmethod
    def constant(cls, spot_var: float) -> "SvModelConfig":
        """Diffusionless configuration whose effective spot variance is ``spot_var``."""
        return cls(vol_of_vol=0.0, leverage_corr=0.0, seasonal_level=1.0,
                   seasonal_amplitude=0.0, seasonal_scale=1.0, mean_level=spot_var)


@dataclass(frozen=True)
class JumpConfig:
    """Compound-Poisson price jumps.

    ``size_law="plusminus"`` draws sizes ``+size`` or ``-size`` with equal
    probability; ``"normal"`` draws ``N(0, size^2)``.  A non-empty ``schedule``
    of ``(time, size)`` pairs replaces the random mechanism entirely.
    """

    intensity: float = 0.0
    size_law: str = "plusminus"
    size: float = 0.005
    activity_index_r: float = 0.0
    schedule: tuple = ()

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError("jump intensity must be non-negative")
        if self.size_law not in JUMP_SIZE_LAWS:
            raise ValueError(f"unknown jump size law {self.size_law!r}")
        if not 0.0 <= self.activity_index_r <= 2.0:
            raise ValueError("activity_index_r must lie in [0, 2]")
        if self.activity_index_r != 0.0:
            raise ValueError("only finite-activity (compound Poisson, r = 0) jumps are generated")
        for t, _ in self.schedule:
            if not 0.0 <= t <= 1.0:
                raise ValueError("scheduled jump times must lie in [0, 1]")

    @classmethod
    def deterministic(cls, jumps: Sequence[tuple]) -> "JumpConfig":
        return cls(schedule=tuple((float(t), float(s)) for t, s in jumps))


@dataclass(frozen=True)
class NoiseConfig:
    """One-sided noise whose density at the boundary 0+ equals ``level_eta``.

    * exponential: rate ``eta``
    * uniform: on ``[0, 1/eta]``
    * pareto: Lomax with shape ``pareto_shape`` and scale ``pareto_shape/eta``
    * none: identically zero
    """

    family: str = "exponential"
    level_eta: float = 10_000.0
    pareto_shape: float = 3.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if not self.level_eta > 0:
            raise ValueError("level_eta must be positive")
        if not self.pareto_shape > 0:
            raise ValueError("pareto_shape must be positive")

    def sample(self, gen: np.random.Generator, size) -> np.ndarray:
        eta = self.level_eta
        if self.family == "exponential":
            return gen.standard_exponential(size) / eta
        if self.family == "uniform":
            return gen.random(size) / eta
        if self.family == "pareto":
            return gen.pareto(self.pareto_shape, size) * (self.pareto_shape / eta)
        return np.zeros(size)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PathBundle:
    """Efficient log-price on the grid ``i/n`` with its effective spot variance."""

    n: int
    x: np.ndarray
    spot_var: np.ndarray
    jumps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "spot_var", _frozen(self.spot_var))
        if self.x.shape != (self.n + 1,) or self.spot_var.shape != (self.n + 1,):
            raise ValueError("x and spot_var must both have n + 1 entries")

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    def __eq__(self, other):
        if not isinstance(other, PathBundle):
            return NotImplemented
        return (self.n == other.n and self.jumps == other.jumps
                and np.array_equal(self.x, other.x)
                and np.array_equal(self.spot_var, other.spot_var))

    __hash__ = None


@dataclass(frozen=True)
class ObservationSeries:
    """Noisy prices ``y_i = x_i + eps_i`` for ``i = 0..n``."""

    n: int
    y: np.ndarray
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(self.y))
        if self.y.shape != (self.n + 1,):
            raise ValueError("y must have n + 1 entries")
        if self.n < 1:
            raise ValueError("need at least one increment")

    @classmethod
    def from_prices(cls, y, noise: Optional[NoiseConfig] = None) -> "ObservationSeries":
        y = np.asarray(y, dtype=float)
        return cls(n=len(y) - 1, y=y, noise=noise if noise is not None else NoiseConfig())

    def __eq__(self, other):
        if not isinstance(other, ObservationSeries):
            return NotImplemented
        return self.n == other.n and self.noise == other.noise and np.array_equal(self.y, other.y)

    __hash__ = None


@numba.njit(cache=True)
def _euler_sv(z_w, z_b, dt, speed, level, vol_of_vol, rho, v0, nu, drift):
    n = z_w.shape[0]
    x = np.empty(n + 1)
    v = np.empty(n + 1)
    x[0] = 0.0
    v[0] = v0
    sq_dt = math.sqrt(dt)
    rho_c = math.sqrt(1.0 - rho * rho)
    for i in range(n):
        vp = max(v[i], 0.0)
        sd = math.sqrt(vp)
        dw = sq_dt * z_w[i]
        db = sq_dt * (rho * z_w[i] + rho_c * z_b[i])
        x[i + 1] = x[i] + drift[i] * dt + nu[i] * sd * dw
        v[i + 1] = v[i] + speed * (level - vp) * dt + vol_of_vol * sd * db
    return x, v


def simulate_path(config: SvModelConfig, n: int, seed: int) -> PathBundle:
    """Euler-Maruyama path of the stochastic-volatility model at step ``1/n``.

    The variance is fully truncated (``max(sigma^2, 0)`` inside drift and
    diffusion).  ``spot_var`` stores ``nu(t)^2 max(sigma_t^2, 0)``, the
    effective squared spot volatility of ``X``.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    gen = _rng.stream(seed, _rng.PATH)
    z = gen.standard_normal((2, n))
    t = np.arange(n + 1) / n
    nu = config.seasonal(t)
    drift = np.zeros(n + 1) if config.drift is None else np.broadcast_to(
        np.asarray(config.drift(t), dtype=float), (n + 1,)).copy()
    x, v = _euler_sv(z[0], z[1], 1.0 / n, config.mean_reversion_speed, config.mean_level,
                     config.vol_of_vol, config.leverage_corr, config.start_var, nu, drift)
    return PathBundle(n=n, x=x, spot_var=nu ** 2 * np.maximum(v, 0.0))


def path_from_spot_var(spot_var, seed: int, drift=None) -> PathBundle:
    """Log-price driven by a given (fixed) effective spot-variance path.

    Used to hold one volatility path fixed across Monte Carlo iterations while
    the price and noise are redrawn.
    """
    spot_var = np.asarray(spot_var, dtype=float)
    n = len(spot_var) - 1
    if n < 2:
        raise ValueError("spot_var must have at least 3 entries")
    if np.any(spot_var < 0):
        raise ValueError("spot_var must be non-negative")
    gen = _rng.as_generator(seed, _rng.PATH)
    incr = np.sqrt(spot_var[:-1] / n) * gen.standard_normal(n)
    if drift is not None:
        incr = incr + np.asarray(drift, dtype=float)[:-1] / n
    x = np.concatenate(([0.0], np.cumsum(incr)))
    return PathBundle(n=n, x=x, spot_var=spot_var)


def draw_jumps(jumps: JumpConfig, gen: np.random.Generator) -> list:
    if jumps.schedule:
        return sorted(jumps.schedule)
    count = gen.poisson(jumps.intensity)
    times = np.sort(gen.random(count))
    if jumps.size_law == "plusminus":
        sizes = jumps.size * np.where(gen.random(count) < 0.5, -1.0, 1.0)
    else:
        sizes = jumps.size * gen.standard_normal(count)
    return [(float(t), float(s)) for t, s in zip(times, sizes)]


def jump_increment(n: int, marks) -> np.ndarray:
    """Cumulative jump process on the grid ``i/n`` (right-continuous)."""
    out = np.zeros(n + 1)
    for t, s in marks:
        first = math.ceil(t * n)
        while first > 0 and (first - 1) / n >= t:
            first -= 1
        while first <= n and first / n < t:
            first += 1
        out[first:] += s
    return out


def add_jumps(path: PathBundle, jumps: JumpConfig, seed) -> PathBundle:
    """Add compound-Poisson jumps; ``x_i`` moves by each jump with ``i/n >= t``."""
    gen = _rng.as_generator(seed, _rng.JUMPS)
    marks = draw_jumps(jumps, gen)
    if not marks:
        return path
    x = path.x + jump_increment(path.n, marks)
    return replace(path, x=x, jumps=path.jumps + tuple(marks))


def synthesize_observations(path: PathBundle, noise: NoiseConfig, seed) -> ObservationSeries:
    gen = _rng.as_generator(seed, _rng.NOISE)
    eps = noise.sample(gen, path.n + 1)
    return ObservationSeries(n=path.n, y=path.x + eps, noise=noise)


def write_csv(fname, path: PathBundle, obs: Optional[ObservationSeries] = None) -> None:
    """Write columns ``i, t, x, spot_var, y`` (``y`` empty without observations)."""
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "t", "x", "spot_var", "y"])
        for i in range(path.n + 1):
            y = repr(float(obs.y[i])) if obs is not None else ""
            w.writerow([i, repr(i / path.n), repr(float(path.x[i])),
                        repr(float(path.spot_var[i])), y])


def read_csv(fname):
    """Read a file written by :func:`write_csv`.

    Returns ``(path, y)`` where ``path`` is None when the file carries no
    ``x``/``spot_var`` columns and ``y`` is None when it has no ``y`` column.
    Files with only ``y`` (or ``i, y``) are accepted for real data.
    """
    with open(fname, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{fname}: no data rows")
    cols = rows[0].keys()

    def column(name):
        if name not in cols or any(r[name] in ("", None) for r in rows):
            return None
        return np.array([float(r[name]) for r in rows])

    x, v, y = column("x"), column("spot_var"), column("y")
    path = PathBundle(n=len(rows) - 1, x=x, spot_var=v) if x is not None and v is not None else None
    return path, y
