"""Chroma/onset feature sequences: ingestion, validation, local cost
measures, and synthetic corpora with known ground-truth warps."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

CHROMA_DIM = 12
DEFAULT_HOP = 0.020
DEFAULT_SILENCE_THRESHOLD = 1e-6
DEFAULT_ONSET_COST_CAP = math.sqrt(2.0)
DEFAULT_WEIGHTS = (2.0, 1.5, 1.5)

MEASURE_CHROMA = "chroma-cosine"
MEASURE_COMBINED = "chroma-cosine-plus-onset-euclidean"
MEASURES = (MEASURE_CHROMA, MEASURE_COMBINED)

GAP_MODE_INSERT = "insert-gaps"
GAP_MODE_COPY = "copy-features"
GAP_MODES = (GAP_MODE_INSERT, GAP_MODE_COPY)


class FeatureParseError(ValueError):
    """Raised when a feature or annotation CSV file is malformed."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FeatureSequence:
    """A time-ordered stack of feature frames at a fixed hop duration.

    ``chroma`` is a (T, D) array of non-negative values, one frame per row.
    ``onsets``, when present, is a parallel (T, D_onset) array carrying
    per-frame onset-indicator features that are compared by Euclidean
    distance. Arrays are copied and frozen so sequences can be shared
    across threads.
    """

    chroma: np.ndarray
    hop_duration: float
    onsets: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "chroma", _feature_array(self.chroma, "chroma"))
        if self.onsets is not None:
            onsets = _feature_array(self.onsets, "onsets")
            if onsets.shape[0] != self.chroma.shape[0]:
                raise ValueError(
                    f"onset stream length {onsets.shape[0]} does not match "
                    f"chroma length {self.chroma.shape[0]}"
                )
            object.__setattr__(self, "onsets", onsets)
        if not (np.isfinite(self.hop_duration) and self.hop_duration > 0):
            raise ValueError(f"hop_duration must be positive, got {self.hop_duration}")

    def __len__(self) -> int:
        return self.chroma.shape[0]

    @property
    def dim(self) -> int:
        return self.chroma.shape[1]

    @property
    def onset_dim(self) -> int | None:
        return None if self.onsets is None else self.onsets.shape[1]

    @property
    def has_onsets(self) -> bool:
        return self.onsets is not None

    @property
    def duration(self) -> float:
        """Total covered time in seconds."""
        return len(self) * self.hop_duration


def _feature_array(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {out.shape}")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError(f"{name} must contain at least one frame and one dimension")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains non-finite entries")
    if (out < 0).any():
        raise ValueError(f"{name} contains negative entries")
    return _readonly(out)


@dataclass(frozen=True)
class CostConfig:
    """Local cost measure selection plus DTW step weights and gap handling.

    ``gap_penalty`` of None selects the default for the measure: the highest
    value the local cost can assume, which is 1.0 for the chroma cosine
    distance and ``1.0 + onset_cost_cap`` for the combined measure (the
    onset Euclidean distance is unbounded in general, so its contribution
    is capped by convention at ``onset_cost_cap``).
    """

    measure: str = MEASURE_CHROMA
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    gap_penalty: float | None = None
    gap_mode: str = GAP_MODE_INSERT
    onset_cost_cap: float = DEFAULT_ONSET_COST_CAP

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ValueError(f"unknown cost measure {self.measure!r}")
        if self.gap_mode not in GAP_MODES:
            raise ValueError(f"unknown gap mode {self.gap_mode!r}")
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != 3 or any(not (w > 0 and np.isfinite(w)) for w in weights):
            raise ValueError(f"weights must be three positive reals, got {self.weights}")
        object.__setattr__(self, "weights", weights)
        if self.gap_penalty is not None and not self.gap_penalty > 0:
            raise ValueError(f"gap_penalty must be positive, got {self.gap_penalty}")
        if not self.onset_cost_cap > 0:
            raise ValueError("onset_cost_cap must be positive")

    @property
    def uses_onsets(self) -> bool:
        return self.measure == MEASURE_COMBINED

    @property
    def effective_gap_penalty(self) -> float:
        if self.gap_penalty is not None:
            return self.gap_penalty
        return default_gap_penalty(self.measure, self.onset_cost_cap)


def default_gap_penalty(measure: str, onset_cost_cap: float = DEFAULT_ONSET_COST_CAP) -> float:
    """Highest value the selected cost measure can assume."""
    if measure == MEASURE_CHROMA:
        return 1.0
    if measure == MEASURE_COMBINED:
        return 1.0 + onset_cost_cap
    raise ValueError(f"unknown cost measure {measure!r}")


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

CHROMA_SUFFIX = ".chroma.csv"
ONSET_SUFFIX = ".onset.csv"
BEATS_SUFFIX = ".beats.csv"


def label_from_path(path) -> str:
    """Version label for a feature file: the name minus known suffixes."""
    name = Path(path).name
    for suffix in (CHROMA_SUFFIX, ONSET_SUFFIX, BEATS_SUFFIX):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


def read_csv_matrix(path, min_value: float | None = 0.0) -> np.ndarray:
    """Read a headerless CSV of decimal numbers into a (rows, cols) array.

    Raises FeatureParseError naming the offending 1-based row for an empty
    file, an inconsistent column count, a non-numeric cell, or (when
    ``min_value`` is given) an out-of-range value.
    """
    path = Path(path)
    rows: list[list[float]] = []
    width: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise FeatureParseError(
                    f"{path}: row {lineno}: expected {width} columns, found {len(cells)}"
                )
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise FeatureParseError(f"{path}: row {lineno}: non-numeric cell") from None
            if any(not math.isfinite(v) for v in values):
                raise FeatureParseError(f"{path}: row {lineno}: non-finite value")
            if min_value is not None and any(v < min_value for v in values):
                raise FeatureParseError(f"{path}: row {lineno}: value below {min_value}")
            rows.append(values)
    if not rows:
        raise FeatureParseError(f"{path}: file contains no data rows")
    return np.asarray(rows, dtype=np.float64)


def load_feature_sequence(
    path,
    hop_duration: float = DEFAULT_HOP,
    label: str | None = None,
    onset_path=None,
) -> FeatureSequence:
    """Load a feature sequence from a chroma CSV file.

    The file holds one frame per line as D comma-separated non-negative
    decimals with no header. When ``path`` ends in ``.chroma.csv`` and no
    explicit ``onset_path`` is given, a sibling ``<label>.onset.csv`` file
    is loaded as the onset stream if it exists.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"feature file not found: {path}")
    chroma = read_csv_matrix(path)
    if label is None:
        label = label_from_path(path)
    if onset_path is None and path.name.endswith(CHROMA_SUFFIX):
        candidate = path.with_name(label + ONSET_SUFFIX)
        if candidate.exists():
            onset_path = candidate
    onsets = None
    if onset_path is not None:
        onset_path = Path(onset_path)
        if not onset_path.exists():
            raise FileNotFoundError(f"onset file not found: {onset_path}")
        onsets = read_csv_matrix(onset_path)
        if onsets.shape[0] != chroma.shape[0]:
            raise FeatureParseError(
                f"{onset_path}: {onsets.shape[0]} rows, expected {chroma.shape[0]} "
                f"to match {path.name}"
            )
    return FeatureSequence(chroma=chroma, hop_duration=hop_duration, onsets=onsets, label=label)


def save_feature_sequence(seq: FeatureSequence, path, onset_path=None) -> None:
    """Write a sequence as chroma CSV (plus onset CSV when present).

    With a ``.chroma.csv`` path and no explicit ``onset_path``, the onset
    stream goes to the sibling ``<label>.onset.csv``. Values round-trip
    through :func:`load_feature_sequence` exactly.
    """
    path = Path(path)
    np.savetxt(path, seq.chroma, delimiter=",", fmt="%.17g")
    if seq.onsets is None:
        return
    if onset_path is None:
        if not path.name.endswith(CHROMA_SUFFIX):
            raise ValueError(
                "onset stream present: pass onset_path or use a .chroma.csv filename"
            )
        onset_path = path.with_name(label_from_path(path) + ONSET_SUFFIX)
    np.savetxt(onset_path, seq.onsets, delimiter=",", fmt="%.17g")


# ---------------------------------------------------------------------------
# Normalization and local cost measures
# ---------------------------------------------------------------------------


def normalize_chroma_rows(arr: np.ndarray, silence_threshold: float = DEFAULT_SILENCE_THRESHOLD) -> np.ndarray:
    """Scale each row to unit Euclidean norm; rows below the silence
    threshold become the uniform unit vector (every entry 1/sqrt(D))."""
    arr = np.asarray(arr, dtype=np.float64)
    if (arr < 0).any():
        raise ValueError("negative entries cannot be normalized (gap symbols?)")
    norms = np.linalg.norm(arr, axis=1)
    silent = norms < silence_threshold
    safe = np.where(silent, 1.0, norms)
    out = arr / safe[:, None]
    out[silent] = 1.0 / math.sqrt(arr.shape[1])
    return out


def normalize_chroma(seq: FeatureSequence, silence_threshold: float = DEFAULT_SILENCE_THRESHOLD) -> FeatureSequence:
    """Return a copy of ``seq`` with every chroma frame at unit norm.

    Frames whose norm falls below ``silence_threshold`` are treated as
    silence and replaced by the uniform unit vector. Onset streams are
    left untouched. Idempotent.
    """
    return replace(seq, chroma=normalize_chroma_rows(seq.chroma, silence_threshold))


def cosine_cost(x, y) -> float:
    """Cosine distance ``1 - <x, y>`` between two unit-norm, non-negative
    frames; clipped at zero against rounding noise."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"frame dimension mismatch: {x.shape} vs {y.shape}")
    return max(0.0, 1.0 - float(np.dot(x, y)))


def euclidean_cost(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"frame dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.linalg.norm(x - y))


def combined_cost(x_chroma, x_onset, y_chroma, y_onset) -> float:
    """Cosine distance of the chroma parts plus Euclidean distance of the
    onset parts."""
    if x_onset is None or y_onset is None:
        raise ValueError("combined cost requires onset streams on both sides")
    return cosine_cost(x_chroma, y_chroma) + euclidean_cost(x_onset, y_onset)


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """Parameters for a synthetic multi-version corpus.

    ``warp_strength`` bounds per-frame tempo deviation, ``noise_level``
    the additive non-negative noise, and ``articulation_perturbation``
    the per-version energy-balance changes (per-dimension gains plus
    note-release silence in the tail of note segments). ``beat_every``
    spaces the ground-truth beats on the base timeline.
    """

    base_length: int = 400
    num_versions: int = 2
    warp_strength: float = 0.3
    noise_level: float = 0.02
    articulation_perturbation: float = 0.0
    beat_every: int = 10
    seed: int = 0
    hop_duration: float = DEFAULT_HOP
    with_onsets: bool = True

    def __post_init__(self):
        if self.base_length < 2:
            raise ValueError("base_length must be at least 2")
        if self.num_versions < 2:
            raise ValueError("num_versions must be at least 2")
        if self.beat_every < 1:
            raise ValueError("beat_every must be at least 1")
        if not 0.0 <= self.warp_strength <= 1.0:
            raise ValueError("warp_strength must lie in [0, 1]")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        if self.articulation_perturbation < 0:
            raise ValueError("articulation_perturbation must be non-negative")
        if not self.hop_duration > 0:
            raise ValueError("hop_duration must be positive")


@dataclass(frozen=True)
class SyntheticCorpus:
    """Generated versions plus the ground truth that produced them.

    ``warps[v]`` holds the base-frame boundary positions of version ``v``
    in version-frame units: entry ``t`` is where base frame ``t`` (1-based)
    ends, with a leading 0. ``beat_times[v]`` are the base beats mapped
    through that warp, in seconds.
    """

    versions: list[FeatureSequence]
    beat_times: list[np.ndarray]
    warps: list[np.ndarray]
    beat_frames: np.ndarray
    spec: SyntheticCorpusSpec

    @property
    def labels(self) -> list[str]:
        return [v.label for v in self.versions]


def generate_synthetic_corpus(spec: SyntheticCorpusSpec) -> SyntheticCorpus:
    """Generate a deterministic pseudo-chroma corpus with known warps.

    The base signal is piecewise stationary: note segments of 5 to 40
    frames, each dominated by one pitch class with harmonic support and a
    small smooth modulation. Every version samples the base through a
    random strictly monotone time warp, applies per-dimension balance
    gains, adds non-negative noise, silences segment tails according to
    the articulation setting, and is chroma-normalized. Onset streams,
    when enabled, carry decaying impulses at the warped segment starts.

    Equal seeds give bit-identical corpora.
    """
    rng = np.random.default_rng(spec.seed)
    base_chroma, seg_starts, seg_doms = _synthesize_base(rng, spec.base_length)
    beat_frames = np.arange(1, spec.base_length + 1, spec.beat_every, dtype=np.int64)
    width = max(2, len(str(spec.num_versions - 1)))

    versions: list[FeatureSequence] = []
    beat_times: list[np.ndarray] = []
    warps: list[np.ndarray] = []
    for v in range(spec.num_versions):
        label = f"v{v:0{width}d}"
        seq, bounds = _synthesize_version(rng, spec, base_chroma, seg_starts, seg_doms, label)
        versions.append(seq)
        warps.append(bounds)
        beat_times.append(bounds[beat_frames] * spec.hop_duration)
    return SyntheticCorpus(
        versions=versions,
        beat_times=beat_times,
        warps=warps,
        beat_frames=beat_frames,
        spec=spec,
    )


def _note_profile(rng: np.random.Generator, dom: int) -> np.ndarray:
    profile = np.full(CHROMA_DIM, 0.03) + rng.uniform(0.0, 0.02, CHROMA_DIM)
    profile[dom] += 1.0
    profile[(dom + 7) % CHROMA_DIM] += 0.35
    profile[(dom + 4) % CHROMA_DIM] += 0.15
    return profile


def _synthesize_base(rng: np.random.Generator, n: int):
    """Piecewise-stationary pseudo-chroma base signal.

    A short chord motif repeats with jittered segment lengths, so the
    base is locally self-similar the way real music is; occasional
    segments break the pattern.
    """
    period = int(rng.integers(3, 6))
    motif_doms = rng.permutation(CHROMA_DIM)[:period]
    motif_lengths = rng.integers(8, 31, period)
    motif_profiles = [_note_profile(rng, int(d)) for d in motif_doms]

    chroma = np.zeros((n, CHROMA_DIM))
    starts: list[int] = []
    doms: list[int] = []
    t = 0
    pos = 0
    while t < n:
        slot = pos % period
        if rng.uniform() < 0.1:
            dom = int(rng.integers(CHROMA_DIM))
            profile = _note_profile(rng, dom)
        else:
            dom = int(motif_doms[slot])
            profile = motif_profiles[slot]
        seg = int(np.clip(round(motif_lengths[slot] * rng.uniform(0.7, 1.3)), 5, 40))
        seg = min(seg, n - t)
        starts.append(t)
        doms.append(dom)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wobble = 1.0 + 0.08 * np.sin(2.0 * np.pi * np.arange(seg) / 24.0 + phase)
        block = np.tile(profile, (seg, 1))
        block[:, dom] *= wobble
        chroma[t : t + seg] = block
        t += seg
        pos += 1
    return chroma, np.asarray(starts, dtype=np.int64), np.asarray(doms, dtype=np.int64)


def _synthesize_version(rng, spec, base_chroma, seg_starts, seg_doms, label):
    n = spec.base_length
    # Versions differ in how extreme their rendition is: the U-shaped
    # severity makes some versions plain and others heavily articulated,
    # so specific version pairs are much harder to align than others.
    severity = float(rng.beta(0.4, 0.4))
    art = spec.articulation_perturbation * severity
    steps = rng.uniform(1.0 - spec.warp_strength, 1.0 + spec.warp_strength, n)
    steps = np.maximum(steps, 1e-3)
    cum = np.cumsum(steps)
    # Expressive (high-severity) renditions run slower: the output length
    # correlates with severity, so shorter versions are easier to align.
    tempo = 1.0 + 0.3 * (severity - 0.5) * min(1.0, spec.articulation_perturbation)
    t_out = max(2, int(round(cum[-1] * tempo)))
    bounds = np.concatenate(([0.0], cum * (t_out / cum[-1])))
    bounds[-1] = float(t_out)

    # Sample the base at the warped frame centers.
    centers = np.arange(t_out) + 0.5
    src = np.clip(np.searchsorted(bounds[1:], centers, side="left"), 0, n - 1)
    chroma = base_chroma[src].copy()

    # Slowly varying per-dimension balance field, a different draw per
    # version, so specific version pairs disagree in specific regions.
    n_ctrl = max(2, t_out // 40 + 1)
    control = rng.normal(size=(n_ctrl, CHROMA_DIM))
    xs = np.linspace(0.0, t_out - 1.0, n_ctrl)
    ts = np.arange(t_out, dtype=np.float64)
    field = np.column_stack([np.interp(ts, xs, control[:, d]) for d in range(CHROMA_DIM)])
    chroma *= np.exp(art * field)
    chroma += rng.uniform(0.0, spec.noise_level, chroma.shape)

    # Articulation: silence the tail of some note segments, a different
    # selection per version, so versions disagree about note releases.
    seg_out = np.append(np.searchsorted(src, seg_starts, side="left"), t_out)
    n_segs = len(seg_starts)
    do_cut = rng.uniform(size=n_segs) < min(0.6, 0.35 * art)
    fracs = rng.uniform(0.15, 0.55, n_segs) * min(1.0, art)
    for i in range(n_segs):
        if not do_cut[i]:
            continue
        lo, hi = int(seg_out[i]), int(seg_out[i + 1])
        cut = int(math.floor(fracs[i] * (hi - lo)))
        if cut > 0:
            chroma[hi - cut : hi] = 0.0

    onsets = None
    if spec.with_onsets:
        # Onset corruption saturates at a moderate level: onset streams
        # stay informative even for heavily articulated versions, the way
        # detected onsets degrade gracefully on real recordings.
        onsets = np.zeros((t_out, CHROMA_DIM))
        decay = (1.0, 0.66, 0.33)
        for start, dom in zip(seg_out[:-1], seg_doms):
            # Soft attacks leave no visible onset in this version; strong
            # ones vary in strength with the articulation setting. Values
            # stay within [0, 1] so the combined cost keeps its cap.
            if rng.uniform() < min(0.25, 0.4 * art):
                continue
            amp = float(np.clip(np.exp(0.5 * min(art, 1.0) * rng.normal()), 0.2, 1.0))
            for offset, fade in enumerate(decay):
                j = int(start) + offset
                if j < t_out:
                    onsets[j, dom] = max(onsets[j, dom], amp * fade)
        # Ornamental ghost onsets unique to this version.
        for _ in range(int(rng.poisson(0.08 * min(art, 1.2) * n_segs))):
            j = int(rng.integers(t_out))
            dom = int(rng.integers(CHROMA_DIM))
            for offset, fade in enumerate(decay):
                if j + offset < t_out:
                    onsets[j + offset, dom] = max(onsets[j + offset, dom], fade)

    chroma = normalize_chroma_rows(chroma)
    seq = FeatureSequence(
        chroma=chroma, hop_duration=spec.hop_duration, onsets=onsets, label=label
    )
    return seq, bounds
