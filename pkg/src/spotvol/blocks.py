"""Block partition, block-wise minima and the noise-level estimate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .market import ObservationSeries

HALF_NORMAL_FACTOR = math.pi / (2.0 * (math.pi - 2.0))


BOUNDARIES = ("open", "left")


@dataclass(frozen=True)
class BlockPartition:
    """``inv_h`` equispaced blocks of ``[0, 1]``.

    With ``boundary="open"`` observation ``i`` (time ``i/n``) belongs to block
    ``k`` iff ``k/inv_h < i/n < (k+1)/inv_h``; observations on a block edge
    belong to no block.  With ``boundary="left"`` the blocks are
    ``[k/inv_h, (k+1)/inv_h)``, so an edge observation opens the next block
    and only ``i = n`` is left out.  When ``inv_h`` divides ``n`` the left
    convention gives exactly ``n/inv_h`` observations per block, which is the
    block layout the Psi function describes.  Each index set is the contiguous
    range ``starts[k] .. stops[k] - 1``.
    """

    n: int
    inv_h: int
    starts: np.ndarray
    stops: np.ndarray
    boundary: str = "open"

    @property
    def h(self) -> float:
        return 1.0 / self.inv_h

    @property
    def sizes(self) -> np.ndarray:
        return self.stops - self.starts

    @property
    def index_sets(self) -> list:
        return [range(int(a), int(b)) for a, b in zip(self.starts, self.stops)]

    def block_of(self, tau: float) -> int:
        return int(math.floor(self.inv_h * tau))


def partition(n: int, inv_h: int, boundary: str = "open") -> BlockPartition:
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    if inv_h < 2:
        raise ValueError(f"need at least 2 blocks, got inv_h={inv_h}")
    if n // inv_h < 2:
        raise ValueError(f"n={n} leaves fewer than 2 observations per block for inv_h={inv_h}")
    k = np.arange(inv_h, dtype=np.int64)
    # exact integer arithmetic on k n < i inv_h < (k+1) n (open) or
    # k n <= i inv_h < (k+1) n (left)
    if boundary == "open":
        starts = (k * n) // inv_h + 1
    else:
        starts = -((-k * n) // inv_h)
    stops = -((-(k + 1) * n) // inv_h)
    if np.any(stops <= starts):
        raise ValueError(f"inv_h={inv_h} leaves an empty block for n={n}")
    return BlockPartition(n=n, inv_h=inv_h, starts=starts, stops=stops, boundary=boundary)


def block_minima(y: np.ndarray, part: BlockPartition) -> np.ndarray:
    """Minima of ``y`` over each block along the last axis (batched)."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != part.n + 1:
        raise ValueError(f"expected {part.n + 1} observations, got {y.shape[-1]}")
    bounds = np.empty(2 * part.inv_h, dtype=np.int64)
    bounds[0::2] = part.starts
    bounds[1::2] = part.stops
    if bounds[-1] == y.shape[-1]:
        return np.minimum.reduceat(y, bounds[:-1], axis=-1)[..., 0::2]
    return np.minimum.reduceat(y, bounds, axis=-1)[..., 0::2]


@dataclass(frozen=True)
class LocalMinima:
    """Block minima ``m`` and their differences.

    ``diffs[k - 1]`` holds ``D_k = m[k] - m[k - 1]`` for ``k = 1..inv_h-1``.
    """

    partition: BlockPartition
    m: np.ndarray
    diffs: np.ndarray

    @property
    def h(self) -> float:
        return self.partition.h

    @property
    def inv_h(self) -> int:
        return self.partition.inv_h

    def write_csv(self, fname) -> None:
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "block_start_t", "m_k", "diff_k"])
            for k in range(self.inv_h):
                d = repr(float(self.diffs[k - 1])) if k > 0 else ""
                w.writerow([k, repr(k / self.inv_h), repr(float(self.m[k])), d])


def local_minima(obs, part: BlockPartition) -> LocalMinima:
    y = obs.y if isinstance(obs, ObservationSeries) else np.asarray(obs, dtype=float)
    if len(y) - 1 != part.n:
        raise ValueError(f"observation count n={len(y) - 1} does not match partition n={part.n}")
    m = block_minima(y, part)
    return LocalMinima(partition=part, m=m, diffs=np.diff(m))


def estimate_noise_level(obs, debias: bool = False, debias_block: int | None = None) -> float:
    """Noise level from squared increments, ``(sum (dY)^2 / (2n))^(-1/2)``.

    For exponential noise the increments of the noise alone have mean square
    ``2/eta^2``.  The efficient price adds its realized variance, an
    ``O(1/n)`` term which is not negligible when the daily variance is
    comparable to ``2n/eta^2``.

    Parameters
    ----------
    obs : ObservationSeries or array_like
        Prices ``Y_0..Y_n``.
    debias : bool
        Subtract an estimate of the price contribution.  The integrated
        variance is estimated from squared differences of block minima with
        blocks of about ``n^(1/3)`` observations, where the noise effect on
        minima is small.
    debias_block : int, optional
        Observations per block for the debiasing step.
    """
    y = obs.y if isinstance(obs, ObservationSeries) else np.asarray(obs, dtype=float)
    n = len(y) - 1
    if n < 1:
        raise ValueError("need at least one increment")
    ss = float(np.sum(np.diff(y) ** 2))
    if ss == 0.0:
        raise ValueError("all increments are zero; noise level undefined")
    if debias:
        nh = debias_block or max(2, round(n ** (1.0 / 3.0)))
        part = partition(n, max(2, n // nh))
        lm = local_minima(y, part)
        iv = HALF_NORMAL_FACTOR * float(np.sum(lm.diffs ** 2))
        if iv >= ss:
            raise ValueError("price variation dominates the increments; cannot debias")
        ss -= iv
    return (ss / (2.0 * n)) ** -0.5
