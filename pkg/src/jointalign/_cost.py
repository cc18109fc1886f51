"""Local-cost evaluation shared by the dense, banded, and template aligners."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .features import MEASURE_COMBINED, CostConfig, FeatureSequence


def measure_matrix(a_chroma, a_onsets, b_chroma, b_onsets, measure: str) -> np.ndarray:
    """Pairwise local costs between two frame stacks under a measure.

    The chroma part is the cosine distance ``1 - <a, b>`` (frames are
    expected unit-norm), clipped at zero; the combined measure adds the
    Euclidean distance of the onset frames.
    """
    out = 1.0 - a_chroma @ b_chroma.T
    np.maximum(out, 0.0, out=out)
    if measure == MEASURE_COMBINED:
        out += cdist(a_onsets, b_onsets, metric="euclidean")
    return out


def require_onsets(cfg: CostConfig, *seqs: FeatureSequence) -> None:
    if cfg.measure != MEASURE_COMBINED:
        return
    missing = [s.label or "<unlabeled>" for s in seqs if s.onsets is None]
    if missing:
        raise ValueError(
            f"cost measure {cfg.measure!r} needs onset streams; "
            f"missing for: {', '.join(missing)}"
        )


def check_dims(x: FeatureSequence, y: FeatureSequence) -> None:
    if x.dim != y.dim:
        raise ValueError(f"chroma dimension mismatch: {x.dim} vs {y.dim}")
    if x.onsets is not None and y.onsets is not None and x.onset_dim != y.onset_dim:
        raise ValueError(f"onset dimension mismatch: {x.onset_dim} vs {y.onset_dim}")


class PairCostSource:
    """On-demand local costs between two feature sequences.

    Exposes the interface the multiscale driver needs: ``shape``,
    ``full()``, ``row_segment()``, and ``downsample()``.
    """

    def __init__(self, x: FeatureSequence, y: FeatureSequence, cfg: CostConfig):
        require_onsets(cfg, x, y)
        check_dims(x, y)
        self.x = x
        self.y = y
        self.cfg = cfg

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.x), len(self.y)

    def full(self) -> np.ndarray:
        return measure_matrix(
            self.x.chroma, self.x.onsets, self.y.chroma, self.y.onsets, self.cfg.measure
        )

    def row_segment(self, n: int, lo: int, hi: int) -> np.ndarray:
        """Costs of grid row ``n`` against columns ``lo..hi`` inclusive."""
        chroma = self.y.chroma[lo : hi + 1] @ self.x.chroma[n]
        out = 1.0 - chroma
        np.maximum(out, 0.0, out=out)
        if self.cfg.measure == MEASURE_COMBINED:
            out += cdist(self.x.onsets[n : n + 1], self.y.onsets[lo : hi + 1])[0]
        return out

    def downsample(self, factor: int) -> "PairCostSource":
        from .multiscale import downsample

        return PairCostSource(
            downsample(self.x, factor), downsample(self.y, factor), self.cfg
        )
