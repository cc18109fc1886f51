"""Weighted DTW between two feature sequences: cost matrix, recursion,
backtracking, and path utilities."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _dp
from ._cost import PairCostSource
from .features import CostConfig, FeatureSequence

_STEPS = {(1, 1), (1, 0), (0, 1)}


@dataclass(frozen=True)
class AlignmentPath:
    """A monotone sequence of 1-based index pairs from (1,1) to (N,M).

    Consecutive pairs differ by (1,1), (1,0), or (0,1); ``total_cost`` is
    the accumulated weighted cost of the alignment.
    """

    pairs: np.ndarray
    total_cost: float

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64)
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] < 1:
            raise ValueError(f"path must be an (L, 2) array, got shape {pairs.shape}")
        if tuple(pairs[0]) != (1, 1):
            raise ValueError(f"path must start at (1, 1), got {tuple(pairs[0])}")
        if len(pairs) > 1:
            deltas = np.diff(pairs, axis=0)
            valid = ((deltas >= 0) & (deltas <= 1)).all(axis=1) & (deltas.sum(axis=1) >= 1)
            if not valid.all():
                bad = int(np.flatnonzero(~valid)[0])
                raise ValueError(f"invalid step at position {bad}: {tuple(deltas[bad])}")
        if not (np.isfinite(self.total_cost) and self.total_cost >= 0):
            raise ValueError(f"total_cost must be finite and non-negative, got {self.total_cost}")
        pairs.flags.writeable = False
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    @property
    def end(self) -> tuple[int, int]:
        return int(self.pairs[-1, 0]), int(self.pairs[-1, 1])

    def transpose(self) -> "AlignmentPath":
        """The same alignment read in the other direction."""
        return AlignmentPath(self.pairs[:, ::-1].copy(), self.total_cost)


@dataclass(frozen=True)
class CostMatrix:
    """N x M grid of non-negative local costs between two sequences."""

    entries: np.ndarray
    row_label: str = ""
    col_label: str = ""

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] < 1 or entries.shape[1] < 1:
            raise ValueError(f"cost matrix must be 2-D and nonempty, got shape {entries.shape}")
        if not np.isfinite(entries).all():
            raise ValueError("cost matrix contains non-finite entries")
        if (entries < 0).any():
            raise ValueError("cost matrix contains negative entries")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def cost_matrix(x: FeatureSequence, y: FeatureSequence, cfg: CostConfig) -> CostMatrix:
    """Local cost of every frame pair under the configured measure."""
    source = PairCostSource(x, y, cfg)
    return CostMatrix(entries=source.full(), row_label=x.label, col_label=y.label)


def _coerce_cost(cost) -> np.ndarray:
    if isinstance(cost, CostMatrix):
        return cost.entries
    return CostMatrix(entries=cost).entries


def dtw(cost, weights: tuple[float, float, float]) -> AlignmentPath:
    """Optimal alignment through a cost matrix under weighted steps.

    The recursion takes the minimum of the diagonal (weight w1), row
    advance (w2), and column advance (w3) predecessors; the first row and
    column reduce to weighted cumulative sums seeded with the origin cell.
    Ties prefer diagonal, then (1,0), then (0,1), so the result is
    deterministic. The optimal path is recovered by backtracking from
    (N, M) to (1, 1).
    """
    entries = _coerce_cost(cost)
    w1, w2, w3 = _check_weights(weights)
    acc, steps = _dp.dense_table(entries, w1, w2, w3)
    pairs = _dp.backtrack_dense(steps) + 1
    return AlignmentPath(pairs=pairs, total_cost=float(acc[-1, -1]))


def _check_weights(weights) -> tuple[float, float, float]:
    w = tuple(float(v) for v in weights)
    if len(w) != 3 or any(not (v > 0 and np.isfinite(v)) for v in w):
        raise ValueError(f"weights must be three positive reals, got {weights}")
    return w


def align_pair(x: FeatureSequence, y: FeatureSequence, cfg: CostConfig) -> AlignmentPath:
    """Full-resolution DTW between two sequences."""
    return dtw(cost_matrix(x, y, cfg), cfg.weights)


def average_cost(path: AlignmentPath) -> float:
    """Total cost divided by path length."""
    return path.total_cost / len(path)


def map_position(path: AlignmentPath, n: int) -> int:
    """Position in the second sequence matched to frame ``n`` of the first.

    Among all path pairs with first coordinate ``n``, returns the median
    second coordinate (the lower one for an even count).
    """
    last = path.end[0]
    if not 1 <= n <= last:
        raise IndexError(f"position {n} outside [1, {last}]")
    return int(map_positions(path, np.asarray([n]))[0])


def map_positions(path: AlignmentPath, ns: np.ndarray) -> np.ndarray:
    """Vectorized :func:`map_position` over an array of 1-based positions."""
    firsts = path.pairs[:, 0]
    ns = np.asarray(ns, dtype=np.int64)
    if (ns < 1).any() or (ns > firsts[-1]).any():
        raise IndexError(f"positions outside [1, {int(firsts[-1])}]")
    left = np.searchsorted(firsts, ns, side="left")
    right = np.searchsorted(firsts, ns, side="right")
    median = left + (right - left - 1) // 2
    return path.pairs[median, 1]


def _round_half_up(values):
    """Round to nearest with halves up; equals round-half-away-from-zero
    for the non-negative frame positions used here."""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


@dataclass(frozen=True)
class Correspondence:
    """Frame correspondences between two versions, with interpolation.

    ``pairs`` holds 1-based (frame_a, frame_b) anchors whose first
    coordinates strictly increase; queries between anchors interpolate
    linearly, round half up, and clamp to the valid frame range.
    """

    pairs: np.ndarray
    size_a: int
    size_b: int

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64)
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] < 1:
            raise ValueError(f"correspondence must be a nonempty (P, 2) array, got {pairs.shape}")
        if (np.diff(pairs[:, 0]) <= 0).any():
            raise ValueError("first coordinates must strictly increase")
        if (np.diff(pairs[:, 1]) < 0).any():
            raise ValueError("second coordinates must not decrease")
        if pairs[0, 0] < 1 or pairs[-1, 0] > self.size_a:
            raise ValueError("first coordinates outside the valid frame range")
        if pairs[:, 1].min() < 1 or pairs[:, 1].max() > self.size_b:
            raise ValueError("second coordinates outside the valid frame range")
        pairs.flags.writeable = False
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def from_path(cls, path: AlignmentPath) -> "Correspondence":
        """Anchor every first-sequence frame at its median path match."""
        size_a, size_b = path.end
        ns = np.arange(1, size_a + 1, dtype=np.int64)
        ms = map_positions(path, ns)
        return cls(pairs=np.column_stack([ns, ms]), size_a=size_a, size_b=size_b)

    def reverse(self) -> "Correspondence":
        """Swap the two sides; requires strictly increasing second coordinates."""
        if (np.diff(self.pairs[:, 1]) <= 0).any():
            raise ValueError("cannot reverse: second coordinates are not strictly increasing")
        return Correspondence(
            pairs=self.pairs[:, ::-1].copy(), size_a=self.size_b, size_b=self.size_a
        )

    def map_frames(self, ns) -> np.ndarray:
        """Map 1-based frames of side A to side B (interpolated, clamped)."""
        ns = np.asarray(ns, dtype=np.float64)
        mapped = np.interp(ns, self.pairs[:, 0], self.pairs[:, 1].astype(np.float64))
        return np.clip(_round_half_up(mapped), 1, self.size_b).astype(np.int64)

    def map_frame(self, n: int) -> int:
        return int(self.map_frames(np.asarray([n]))[0])


# ---------------------------------------------------------------------------
# Alignment file format
# ---------------------------------------------------------------------------


def save_alignment(path: AlignmentPath, file) -> None:
    """Write ``n,m`` pairs one per line plus a total-cost comment line."""
    file = Path(file)
    lines = [f"{int(n)},{int(m)}" for n, m in path.pairs]
    lines.append(f"# total_cost={path.total_cost!r}")
    file.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_alignment(file) -> AlignmentPath:
    """Parse a file written by :func:`save_alignment` and validate it."""
    file = Path(file)
    pairs: list[tuple[int, int]] = []
    total_cost: float | None = None
    for lineno, line in enumerate(file.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "total_cost=" in line:
                total_cost = float(line.split("total_cost=", 1)[1])
            continue
        try:
            a, b = line.split(",")
            pairs.append((int(a), int(b)))
        except ValueError:
            raise ValueError(f"{file}: line {lineno}: expected 'n,m'") from None
    if total_cost is None:
        raise ValueError(f"{file}: missing total_cost comment line")
    return AlignmentPath(pairs=np.asarray(pairs, dtype=np.int64), total_cost=total_cost)
