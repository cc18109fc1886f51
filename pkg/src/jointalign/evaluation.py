"""Beat-deviation evaluation of alignments and the experiment matrix of
alignment variants A..G."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._parallel import parallel_map
from .features import (
    BEATS_SUFFIX,
    CHROMA_SUFFIX,
    DEFAULT_HOP,
    DEFAULT_SILENCE_THRESHOLD,
    GAP_MODE_COPY,
    MEASURE_CHROMA,
    MEASURE_COMBINED,
    CostConfig,
    FeatureParseError,
    FeatureSequence,
    SyntheticCorpus,
    label_from_path,
    load_feature_sequence,
    normalize_chroma,
)
from .multiscale import MultiscaleConfig, align_sequences
from .ordering import OrderPlan, dtw_cost_order, length_order
from .pairwise import Correspondence, _round_half_up
from .progressive import (
    AlignmentStep,
    iterative_align,
    pairwise_from_template,
    progressive_align,
)


@dataclass(frozen=True)
class BeatAnnotation:
    """Ground-truth beat times of one version, in seconds."""

    times: np.ndarray
    label: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or times.shape[0] < 1:
            raise ValueError("beat annotation must be a nonempty 1-D array")
        if not np.isfinite(times).all() or (times < 0).any():
            raise ValueError("beat times must be finite and non-negative")
        if (np.diff(times) <= 0).any():
            raise ValueError("beat times must strictly increase")
        times.flags.writeable = False
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return self.times.shape[0]


def load_beat_annotation(path, label: str | None = None) -> BeatAnnotation:
    """Read one beat time in seconds per line."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"beat annotation not found: {path}")
    times = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                times.append(float(line))
            except ValueError:
                raise FeatureParseError(f"{path}: row {lineno}: non-numeric beat time") from None
    if not times:
        raise FeatureParseError(f"{path}: file contains no beat times")
    return BeatAnnotation(times=np.asarray(times), label=label or label_from_path(path))


def save_beat_annotation(annotation: BeatAnnotation, path) -> None:
    np.savetxt(Path(path), annotation.times, fmt="%.17g")


@dataclass(frozen=True)
class Corpus:
    """Feature sequences of all versions plus optional beat annotations."""

    versions: list[FeatureSequence]
    beats: list[BeatAnnotation] | None = None

    def __post_init__(self):
        if not self.versions:
            raise ValueError("corpus contains no versions")
        labels = [v.label for v in self.versions]
        if len(set(labels)) != len(labels):
            raise ValueError("corpus labels must be unique")
        if self.beats is not None:
            if len(self.beats) != len(self.versions):
                raise ValueError("beat annotations do not match the versions")
            counts = {len(b) for b in self.beats}
            if len(counts) != 1:
                raise ValueError(
                    f"versions disagree on beat count: {sorted(counts)} "
                    "(annotations must enumerate the same musical beats)"
                )

    @property
    def labels(self) -> list[str]:
        return [v.label for v in self.versions]

    @property
    def hop_duration(self) -> float:
        return self.versions[0].hop_duration

    @property
    def has_onsets(self) -> bool:
        return all(v.has_onsets for v in self.versions)

    def __len__(self) -> int:
        return len(self.versions)


def load_corpus(
    directory,
    hop_duration: float = DEFAULT_HOP,
    require_beats: bool = True,
    normalize: bool = True,
    silence_threshold: float | None = None,
) -> Corpus:
    """Load every ``<label>.chroma.csv`` under a directory as one corpus.

    Onset and beat files are associated by label. Versions must either
    all have onset streams or none; with ``require_beats`` every version
    needs a ``<label>.beats.csv``.
    """
    directory = Path(directory)
    chroma_files = sorted(directory.glob("*" + CHROMA_SUFFIX))
    if not chroma_files:
        raise FileNotFoundError(f"no *{CHROMA_SUFFIX} files in {directory}")
    versions = [load_feature_sequence(f, hop_duration) for f in chroma_files]
    if normalize:
        threshold = DEFAULT_SILENCE_THRESHOLD if silence_threshold is None else silence_threshold
        versions = [normalize_chroma(v, threshold) for v in versions]
    with_onsets = [v.label for v in versions if v.has_onsets]
    if with_onsets and len(with_onsets) != len(versions):
        missing = sorted(set(v.label for v in versions) - set(with_onsets))
        raise ValueError(f"onset streams present for some versions but missing for: {', '.join(missing)}")
    beats = None
    if require_beats:
        missing = [v.label for v in versions if not (directory / (v.label + BEATS_SUFFIX)).exists()]
        if missing:
            raise FileNotFoundError(
                f"missing beat annotations in {directory} for: {', '.join(missing)}"
            )
        beats = [
            load_beat_annotation(directory / (v.label + BEATS_SUFFIX), v.label) for v in versions
        ]
    return Corpus(versions=versions, beats=beats)


def corpus_from_synthetic(synth: SyntheticCorpus) -> Corpus:
    beats = [
        BeatAnnotation(times=times, label=seq.label)
        for seq, times in zip(synth.versions, synth.beat_times)
    ]
    return Corpus(versions=list(synth.versions), beats=beats)


def ground_truth_correspondence(synth: SyntheticCorpus, i: int, j: int) -> Correspondence:
    """Exact frame correspondence between two synthetic versions, derived
    from the generating warps rather than from any alignment."""
    bounds_a = synth.warps[i]
    bounds_b = synth.warps[j]
    size_a = len(synth.versions[i])
    size_b = len(synth.versions[j])
    frames = np.arange(1, size_a + 1, dtype=np.float64)
    t = np.clip(np.searchsorted(bounds_a, frames, side="left"), 1, len(bounds_a) - 1)
    u = (frames - bounds_a[t - 1]) / (bounds_a[t] - bounds_a[t - 1])
    positions = bounds_b[t - 1] + u * (bounds_b[t] - bounds_b[t - 1])
    mapped = np.clip(_round_half_up(positions), 1, size_b).astype(np.int64)
    pairs = np.column_stack([frames.astype(np.int64), mapped])
    return Correspondence(pairs=pairs, size_a=size_a, size_b=size_b)


# ---------------------------------------------------------------------------
# Average beat deviation
# ---------------------------------------------------------------------------


def average_beat_deviation(
    corr: Correspondence,
    beats_a: BeatAnnotation,
    beats_b: BeatAnnotation,
    hop_duration: float,
) -> float:
    """Mean absolute deviation, in milliseconds, of mapped beat positions.

    Each beat time of version A is quantized to a frame (round half away
    from zero, clamped), mapped through the correspondence, converted
    back to seconds, and compared against version B's annotated time of
    the same beat index.
    """
    if len(beats_a) != len(beats_b):
        raise ValueError(f"beat count mismatch: {len(beats_a)} vs {len(beats_b)}")
    frames = np.clip(_round_half_up(beats_a.times / hop_duration), 1, corr.size_a)
    mapped = corr.map_frames(frames.astype(np.int64))
    return float(np.mean(np.abs(mapped * hop_duration - beats_b.times)) * 1000.0)


@dataclass(frozen=True)
class PairDeviation:
    """Both directions of a pair's beat deviation; ``mean_ms`` is their mean."""

    mean_ms: float
    forward_ms: float
    backward_ms: float


def pair_deviation(
    forward: Correspondence,
    backward: Correspondence,
    beats_a: BeatAnnotation,
    beats_b: BeatAnnotation,
    hop_duration: float,
) -> PairDeviation:
    f = average_beat_deviation(forward, beats_a, beats_b, hop_duration)
    b = average_beat_deviation(backward, beats_b, beats_a, hop_duration)
    return PairDeviation(mean_ms=(f + b) / 2.0, forward_ms=f, backward_ms=b)


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValueStats:
    """Summary and boxplot statistics over a set of deviation values.

    ``std`` is the population standard deviation; whiskers follow
    p25 - 1.5 IQR and p75 + 1.5 IQR, and values outside them are listed
    as outliers.
    """

    minimum: float
    mean: float
    maximum: float
    std: float
    median: float
    p25: float
    p75: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "stats": {
                "min": self.minimum,
                "mean": self.mean,
                "max": self.maximum,
                "std": self.std,
            },
            "boxplot": {
                "median": self.median,
                "p25": self.p25,
                "p75": self.p75,
                "whisker_low": self.whisker_low,
                "whisker_high": self.whisker_high,
                "outliers": list(self.outliers),
            },
        }


def corpus_stats(values) -> ValueStats:
    """Summary statistics over per-pair deviation values."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size < 1:
        raise ValueError("no values to summarize")
    p25, median, p75 = (float(np.percentile(arr, q)) for q in (25, 50, 75))
    iqr = p75 - p25
    whisker_low = p25 - 1.5 * iqr
    whisker_high = p75 + 1.5 * iqr
    outliers = tuple(float(v) for v in np.sort(arr[(arr < whisker_low) | (arr > whisker_high)]))
    return ValueStats(
        minimum=float(arr.min()),
        mean=float(arr.mean()),
        maximum=float(arr.max()),
        std=float(arr.std()),
        median=median,
        p25=p25,
        p75=p75,
        whisker_low=whisker_low,
        whisker_high=whisker_high,
        outliers=outliers,
    )


@dataclass(frozen=True)
class DeviationReport:
    """Per-pair beat deviations plus corpus statistics for one variant."""

    per_pair: dict[str, PairDeviation]
    summary: ValueStats

    @staticmethod
    def pair_key(label_a: str, label_b: str) -> str:
        return f"{label_a}|{label_b}"

    @classmethod
    def from_pairs(cls, per_pair: dict[str, PairDeviation]) -> "DeviationReport":
        return cls(
            per_pair=per_pair,
            summary=corpus_stats([d.mean_ms for d in per_pair.values()]),
        )

    def to_json_dict(self) -> dict:
        out = self.summary.to_json_dict()
        out["per_pair"] = {
            key: {
                "mean_ms": d.mean_ms,
                "forward_ms": d.forward_ms,
                "backward_ms": d.backward_ms,
            }
            for key, d in sorted(self.per_pair.items())
        }
        return out


# ---------------------------------------------------------------------------
# Experiment matrix
# ---------------------------------------------------------------------------

VARIANT_CODES = ("A", "B", "C", "D", "E", "F", "G")

VARIANT_DESCRIPTIONS = {
    "A": "pairwise alignment, combined cost",
    "B": "progressive alignment, insert-gaps, length-ascending order, combined cost",
    "C": "progressive alignment without gap symbols (copy-features)",
    "D": "progressive alignment with DTW-cost-based order",
    "E": "progressive alignment with a second, iterative pass",
    "F": "progressive alignment on chroma features only",
    "G": "pairwise alignment on chroma features only",
}


@dataclass(frozen=True)
class VariantOutcome:
    code: str
    report: DeviationReport
    measure: str = MEASURE_COMBINED
    gap_penalty: float = 0.0
    order_plan: OrderPlan | None = None
    steps: tuple[AlignmentStep, ...] = ()
    elapsed_seconds: float = 0.0


@dataclass(frozen=True)
class ExperimentReport:
    variants: dict[str, VariantOutcome]
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out: dict = {"config": self.config, "variants": {}}
        elapsed: dict[str, float] = {}
        for code, outcome in sorted(self.variants.items()):
            block = outcome.report.to_json_dict()
            block["description"] = VARIANT_DESCRIPTIONS[code]
            block["measure"] = outcome.measure
            block["gap_penalty"] = outcome.gap_penalty
            if outcome.order_plan is not None:
                block["order"] = {
                    "strategy": outcome.order_plan.strategy,
                    "permutation": list(outcome.order_plan.permutation),
                }
                if outcome.order_plan.pairwise_avg_costs is not None:
                    block["order"]["pairwise_avg_costs"] = [
                        [float(v) for v in row] for row in outcome.order_plan.pairwise_avg_costs
                    ]
            if outcome.steps:
                block["steps"] = [
                    {
                        "iteration": s.iteration,
                        "label": s.label,
                        "path_length": s.path_length,
                        "total_cost": s.total_cost,
                        "average_cost": s.average_cost,
                    }
                    for s in outcome.steps
                ]
            out["variants"][code] = block
            elapsed[code] = outcome.elapsed_seconds
        out["elapsed_seconds"] = elapsed
        return out


def _variant_cfg(code: str, base: CostConfig) -> CostConfig:
    measure = MEASURE_CHROMA if code in ("F", "G") else MEASURE_COMBINED
    gap_mode = GAP_MODE_COPY if code == "C" else base.gap_mode
    return replace(base, measure=measure, gap_mode=gap_mode)


def run_variant(
    corpus: Corpus,
    code: str,
    cfg: CostConfig,
    ms: MultiscaleConfig | None = None,
    jobs: int = 1,
) -> VariantOutcome:
    """Execute one alignment variant over a corpus and evaluate every pair."""
    if code not in VARIANT_CODES:
        raise ValueError(f"unknown variant {code!r}; expected one of {', '.join(VARIANT_CODES)}")
    if corpus.beats is None:
        raise ValueError("corpus carries no beat annotations")
    if len(corpus) < 2:
        raise ValueError("evaluation needs at least two versions")
    started = time.perf_counter()
    vcfg = _variant_cfg(code, cfg)
    if vcfg.measure == MEASURE_COMBINED and not corpus.has_onsets:
        raise ValueError(f"variant {code} needs onset streams, corpus has none")
    hop = corpus.hop_duration
    k = len(corpus)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]

    order_plan: OrderPlan | None = None
    steps: list[AlignmentStep] = []
    if code in ("A", "G"):

        def one(pair):
            i, j = pair
            path = align_sequences(corpus.versions[i], corpus.versions[j], vcfg, ms)
            forward = Correspondence.from_path(path)
            backward = Correspondence.from_path(path.transpose())
            return pair_deviation(forward, backward, corpus.beats[i], corpus.beats[j], hop)

        deviations = parallel_map(one, pairs, jobs)
    else:
        if code == "D":
            order_plan = dtw_cost_order(corpus.versions, vcfg, jobs=jobs)
        else:
            order_plan = length_order(corpus.versions)
        if code == "E":
            template = iterative_align(
                corpus.versions, order_plan.permutation, 2, vcfg, ms, steps_out=steps
            )
        else:
            template = progressive_align(
                corpus.versions, order_plan.permutation, vcfg, ms, steps_out=steps
            )
        deviations = _template_pair_deviations(template, corpus, order_plan, pairs, jobs)

    per_pair = {
        DeviationReport.pair_key(corpus.labels[i], corpus.labels[j]): dev
        for (i, j), dev in zip(pairs, deviations)
    }
    return VariantOutcome(
        code=code,
        report=DeviationReport.from_pairs(per_pair),
        measure=vcfg.measure,
        gap_penalty=vcfg.effective_gap_penalty,
        order_plan=order_plan,
        steps=tuple(steps),
        elapsed_seconds=time.perf_counter() - started,
    )


def _template_pair_deviations(template, corpus, order_plan, pairs, jobs):
    hop = corpus.hop_duration
    # Rows sit in alignment order; an iterative pass re-appends every
    # version exactly once, which restores that same order.
    row_of = {version: pos for pos, version in enumerate(order_plan.permutation)}

    def one(pair):
        i, j = pair
        corr = pairwise_from_template(template, row_of[i], row_of[j])
        return pair_deviation(corr, corr.reverse(), corpus.beats[i], corpus.beats[j], hop)

    return parallel_map(one, pairs, jobs)


def run_experiment_matrix(
    corpus: Corpus,
    variants,
    cfg: CostConfig | None = None,
    ms: MultiscaleConfig | None = None,
    jobs: int = 1,
) -> ExperimentReport:
    """Run the requested alignment variants and collect their reports."""
    codes = list(variants)
    unknown = [c for c in codes if c not in VARIANT_CODES]
    if unknown:
        raise ValueError(f"unknown variants: {', '.join(unknown)}")
    if cfg is None:
        cfg = CostConfig()
    outcomes = {code: run_variant(corpus, code, cfg, ms, jobs) for code in codes}
    config = {
        "weights": list(cfg.weights),
        # None means the default rule (the measure's highest value); each
        # variant block carries its resolved penalty.
        "gap_penalty": cfg.gap_penalty,
        "gap_mode": cfg.gap_mode,
        "onset_cost_cap": cfg.onset_cost_cap,
        "hop_duration": corpus.hop_duration,
        "multiscale": None
        if ms is None or not ms.enabled
        else {"factors": list(ms.factors), "band_radius": ms.band_radius},
        "num_versions": len(corpus),
        "std_convention": "population",
    }
    return ExperimentReport(variants=outcomes, config=config)
