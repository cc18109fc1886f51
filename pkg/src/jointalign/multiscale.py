"""Multiscale DTW: coarse alignment, band projection, banded refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _dp
from ._cost import PairCostSource
from .features import (
    DEFAULT_SILENCE_THRESHOLD,
    CostConfig,
    FeatureSequence,
    normalize_chroma_rows,
)
from .pairwise import AlignmentPath, align_pair, dtw

# Coarse levels that would leave fewer frames than this are skipped so a
# degenerate alignment cannot dominate the projection.
MIN_COARSE_FRAMES = 10


@dataclass(frozen=True)
class MultiscaleConfig:
    """Resolution ladder and band width for multiscale refinement.

    ``factors`` lists downsampling factors coarse-to-fine; each must divide
    its predecessor and the ladder must end at 1. ``band_radius`` dilates
    the projected path, in frames at the finer level of each refinement.
    """

    factors: tuple[int, ...] = (8, 4, 2, 1)
    band_radius: int = 25
    enabled: bool = False

    def __post_init__(self):
        factors = tuple(int(f) for f in self.factors)
        if not factors or factors[-1] != 1:
            raise ValueError("factors must end with 1 (the full resolution)")
        if any(f < 1 for f in factors):
            raise ValueError("factors must be positive integers")
        for prev, cur in zip(factors, factors[1:]):
            if cur >= prev:
                raise ValueError("factors must be strictly decreasing")
            if prev % cur != 0:
                raise ValueError(f"factor {prev} is not divisible by its successor {cur}")
        object.__setattr__(self, "factors", factors)
        if self.band_radius < 0:
            raise ValueError("band_radius must be non-negative")


@dataclass(frozen=True)
class BandMask:
    """Per-row admissible column interval over an N x M grid, 0-based."""

    lo: np.ndarray
    hi: np.ndarray
    n_cols: int

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.int64)
        hi = np.asarray(self.hi, dtype=np.int64)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.shape[0] < 1:
            raise ValueError("band bounds must be matching 1-D arrays")
        for arr in (lo, hi):
            arr.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if (lo > hi).any():
            raise ValueError("band has an empty row interval")
        if lo.min() < 0 or hi.max() >= self.n_cols:
            raise ValueError("band interval outside the grid")
        if lo[0] != 0 or hi[-1] != self.n_cols - 1:
            raise ValueError("band must admit the (1,1) and (N,M) corners")
        if (lo[1:] > hi[:-1] + 1).any():
            raise ValueError("band rows do not overlap; no connected path exists")

    @property
    def n_rows(self) -> int:
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo + 1

    @property
    def cell_count(self) -> int:
        return int(self.widths.sum())

    def admits(self, n: int, m: int) -> bool:
        """Whether 0-based cell (n, m) lies inside the band."""
        return bool(self.lo[n] <= m <= self.hi[n])

    @classmethod
    def full(cls, n_rows: int, n_cols: int) -> "BandMask":
        return cls(
            lo=np.zeros(n_rows, dtype=np.int64),
            hi=np.full(n_rows, n_cols - 1, dtype=np.int64),
            n_cols=n_cols,
        )


def downsample(
    seq: FeatureSequence,
    factor: int,
    silence_threshold: float = DEFAULT_SILENCE_THRESHOLD,
) -> FeatureSequence:
    """Average consecutive groups of ``factor`` frames.

    Chroma frames are renormalized to unit norm after averaging; onset
    frames are averaged without renormalization. A trailing partial group
    is averaged over its actual size. The hop duration grows by ``factor``.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be at least 1")
    if factor == 1:
        return seq
    chroma = normalize_chroma_rows(_group_mean(seq.chroma, factor), silence_threshold)
    onsets = None if seq.onsets is None else _group_mean(seq.onsets, factor)
    return FeatureSequence(
        chroma=chroma,
        hop_duration=seq.hop_duration * factor,
        onsets=onsets,
        label=seq.label,
    )


def _group_mean(arr: np.ndarray, factor: int) -> np.ndarray:
    n = arr.shape[0]
    n_groups = math.ceil(n / factor)
    sums = np.add.reduceat(arr, np.arange(0, n, factor), axis=0)
    sizes = np.full(n_groups, factor, dtype=np.float64)
    if n % factor:
        sizes[-1] = n % factor
    return sums / sizes[:, None]


def project_path(
    path: AlignmentPath,
    factor: int,
    n_fine: int,
    m_fine: int,
    radius: int = 0,
) -> BandMask:
    """Expand a coarse path into a fine-level band.

    Each coarse cell (n, m) covers the fine block of ``factor`` rows and
    columns that were averaged into it, clipped to the fine grid; the
    union of blocks is dilated by ``radius`` columns on each side. Per-row
    unions are contiguous because the coarse path is connected.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be at least 1")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    n_coarse = path.end[0]
    if n_coarse * factor < n_fine:
        raise ValueError(
            f"coarse path with {n_coarse} rows cannot cover {n_fine} fine rows at factor {factor}"
        )
    firsts = path.pairs[:, 0]
    # First and last matched coarse column per coarse row.
    left = np.searchsorted(firsts, np.arange(1, n_coarse + 1), side="left")
    right = np.searchsorted(firsts, np.arange(1, n_coarse + 1), side="right") - 1
    m_first = path.pairs[left, 1]
    m_last = path.pairs[right, 1]

    rows = np.arange(n_fine, dtype=np.int64)
    coarse_row = rows // factor
    lo = (m_first[coarse_row] - 1) * factor - radius
    hi = m_last[coarse_row] * factor - 1 + radius
    np.clip(lo, 0, m_fine - 1, out=lo)
    np.clip(hi, 0, m_fine - 1, out=hi)
    return BandMask(lo=lo, hi=hi, n_cols=m_fine)


@dataclass(frozen=True)
class LevelStats:
    """Instrumentation for one resolution level of a multiscale run."""

    factor: int
    n_rows: int
    n_cols: int
    band_cells: int
    evaluated_cells: int
    band: BandMask | None = None


@dataclass(frozen=True)
class MultiscaleStats:
    levels: tuple[LevelStats, ...] = field(default_factory=tuple)

    @property
    def finest(self) -> LevelStats:
        return self.levels[-1]


def msdtw(
    x: FeatureSequence,
    y: FeatureSequence,
    cfg: CostConfig,
    ms: MultiscaleConfig | None = None,
) -> AlignmentPath:
    """Multiscale DTW between two sequences.

    Runs full DTW at the coarsest usable resolution, then repeatedly
    projects the path one level finer and refines it inside the projected
    band; cells outside the band are treated as unreachable and cost
    entries are only evaluated inside it.
    """
    path, _ = msdtw_detailed(x, y, cfg, ms)
    return path


def msdtw_detailed(
    x: FeatureSequence,
    y: FeatureSequence,
    cfg: CostConfig,
    ms: MultiscaleConfig | None = None,
) -> tuple[AlignmentPath, MultiscaleStats]:
    """Like :func:`msdtw` but also returns per-level instrumentation."""
    if ms is None:
        ms = MultiscaleConfig(enabled=True)
    return run_multiscale(PairCostSource(x, y, cfg), cfg.weights, ms)


def usable_factors(factors: tuple[int, ...], n: int, m: int) -> list[int]:
    """Drop coarse levels that would fall below MIN_COARSE_FRAMES."""
    kept = [
        f
        for f in factors
        if f == 1 or (math.ceil(n / f) >= MIN_COARSE_FRAMES and math.ceil(m / f) >= MIN_COARSE_FRAMES)
    ]
    return kept


def run_multiscale(source, weights, ms: MultiscaleConfig) -> tuple[AlignmentPath, MultiscaleStats]:
    """Multiscale driver over any cost source (sequence pair or template).

    The source must expose ``shape``, ``full()``, ``row_segment(n, lo, hi)``
    and ``downsample(factor)``.
    """
    n, m = source.shape
    levels = usable_factors(ms.factors, n, m)
    stats: list[LevelStats] = []

    coarse = source if levels[0] == 1 else source.downsample(levels[0])
    cn, cm = coarse.shape
    path = dtw(coarse.full(), weights)
    stats.append(LevelStats(levels[0], cn, cm, cn * cm, cn * cm, BandMask.full(cn, cm)))

    for prev_factor, factor in zip(levels, levels[1:]):
        fine = source if factor == 1 else source.downsample(factor)
        fn, fm = fine.shape
        band = project_path(path, prev_factor // factor, fn, fm, ms.band_radius)
        path, evaluated = banded_path(fine, band, weights)
        stats.append(LevelStats(factor, fn, fm, band.cell_count, evaluated, band))

    return path, MultiscaleStats(levels=tuple(stats))


def banded_path(source, band: BandMask, weights) -> tuple[AlignmentPath, int]:
    """DTW restricted to a band, evaluating costs only inside it.

    Returns the path and the number of cost cells evaluated.
    """
    n, m = source.shape
    if band.n_rows != n or band.n_cols != m:
        raise ValueError(f"band shape ({band.n_rows}, {band.n_cols}) does not match grid ({n}, {m})")
    widths = band.widths
    offsets = np.zeros(n, dtype=np.int64)
    np.cumsum(widths[:-1], out=offsets[1:])
    flat_cost = np.empty(int(widths.sum()), dtype=np.float64)
    for i in range(n):
        flat_cost[offsets[i] : offsets[i] + widths[i]] = source.row_segment(
            i, int(band.lo[i]), int(band.hi[i])
        )
    w1, w2, w3 = weights
    acc, steps = _dp.banded_table(flat_cost, band.lo, band.hi, offsets, float(w1), float(w2), float(w3))
    total = float(acc[-1])
    if not np.isfinite(total):
        raise RuntimeError("band admits no connected path (degenerate band)")
    pairs = _dp.backtrack_banded(steps, band.lo, band.hi, offsets) + 1
    return AlignmentPath(pairs=pairs, total_cost=total), int(flat_cost.shape[0])


def align_sequences(
    x: FeatureSequence,
    y: FeatureSequence,
    cfg: CostConfig,
    ms: MultiscaleConfig | None = None,
) -> AlignmentPath:
    """Dispatch between full-resolution and multiscale DTW."""
    if ms is not None and ms.enabled:
        return msdtw(x, y, cfg, ms)
    return align_pair(x, y, cfg)
