"""Progressive joint alignment: build a multi-version template with gap
symbols, align new sequences against it with the template-aware cost, and
support iterative realignment."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._cost import measure_matrix, require_onsets
from .features import (
    DEFAULT_SILENCE_THRESHOLD,
    GAP_MODE_COPY,
    GAP_MODE_INSERT,
    MEASURE_COMBINED,
    CostConfig,
    FeatureSequence,
    combined_cost,
    cosine_cost,
    normalize_chroma_rows,
)
from .multiscale import MultiscaleConfig, run_multiscale
from .pairwise import AlignmentPath, Correspondence, dtw

GAP_VALUE = -1.0


def is_gap(frame) -> bool:
    """Whether a frame is the reserved gap pseudo-feature (all entries < 0)."""
    return bool((np.asarray(frame) < 0).all())


@dataclass(frozen=True)
class Template:
    """k aligned rows of length L whose entries are features or gaps.

    ``gap_mask[r, n]`` is the source of truth for gaps; the corresponding
    ``chroma``/``onsets`` entries hold the all-(-1) pseudo-frame only so
    that templates serialize naturally. Reading the non-gap entries of a
    row left to right reproduces that version's original frame sequence.
    Every column contains at least one non-gap entry.
    """

    chroma: np.ndarray
    gap_mask: np.ndarray
    row_labels: tuple[str, ...]
    hop_duration: float
    onsets: np.ndarray | None = None

    def __post_init__(self):
        chroma = np.asarray(self.chroma, dtype=np.float64)
        mask = np.asarray(self.gap_mask, dtype=bool)
        if chroma.ndim != 3:
            raise ValueError(f"template chroma must be (k, L, D), got shape {chroma.shape}")
        k, length, _ = chroma.shape
        if k < 1 or length < 1:
            raise ValueError("template must have at least one row and one column")
        if mask.shape != (k, length):
            raise ValueError(f"gap mask shape {mask.shape} does not match ({k}, {length})")
        if mask.all(axis=0).any():
            raise ValueError("template contains an all-gap column")
        if len(self.row_labels) != k:
            raise ValueError(f"expected {k} row labels, got {len(self.row_labels)}")
        if not self.hop_duration > 0:
            raise ValueError("hop_duration must be positive")
        if self.onsets is not None:
            onsets = np.asarray(self.onsets, dtype=np.float64)
            if onsets.ndim != 3 or onsets.shape[:2] != (k, length):
                raise ValueError(f"onsets shape {onsets.shape} does not match ({k}, {length})")
            onsets.flags.writeable = False
            object.__setattr__(self, "onsets", onsets)
        chroma.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "chroma", chroma)
        object.__setattr__(self, "gap_mask", mask)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))

    @property
    def k(self) -> int:
        return self.chroma.shape[0]

    @property
    def length(self) -> int:
        return self.chroma.shape[1]

    @property
    def dim(self) -> int:
        return self.chroma.shape[2]

    @property
    def onset_dim(self) -> int | None:
        return None if self.onsets is None else self.onsets.shape[2]

    @property
    def has_onsets(self) -> bool:
        return self.onsets is not None

    @property
    def gap_count(self) -> int:
        return int(self.gap_mask.sum())

    def row_gap_count(self, r: int) -> int:
        return int(self.gap_mask[r].sum())

    def row_sequence(self, r: int) -> FeatureSequence:
        """The original feature sequence stored in row ``r`` (gaps removed)."""
        keep = ~self.gap_mask[r]
        return FeatureSequence(
            chroma=self.chroma[r, keep],
            hop_duration=self.hop_duration,
            onsets=None if self.onsets is None else self.onsets[r, keep],
            label=self.row_labels[r],
        )


def template_init(x: FeatureSequence) -> Template:
    """A single-row template holding one sequence, without gaps."""
    onsets = None if x.onsets is None else x.onsets[None]
    return Template(
        chroma=x.chroma[None],
        gap_mask=np.zeros((1, len(x)), dtype=bool),
        row_labels=(x.label,),
        hop_duration=x.hop_duration,
        onsets=onsets,
    )


def template_cost(
    template: Template,
    col: int,
    x_chroma,
    x_onset=None,
    cfg: CostConfig | None = None,
) -> float:
    """Template-aware local cost of one column against one feature bundle.

    Sums over the template rows: the plain local cost for non-gap entries
    and the gap penalty for gap entries.
    """
    if cfg is None:
        cfg = CostConfig()
    x_chroma = np.asarray(x_chroma, dtype=np.float64)
    if is_gap(x_chroma):
        raise ValueError("the incoming frame must be a real feature, not a gap")
    gap_penalty = cfg.effective_gap_penalty
    total = 0.0
    for r in range(template.k):
        if template.gap_mask[r, col]:
            total += gap_penalty
        elif cfg.measure == MEASURE_COMBINED:
            total += combined_cost(
                template.chroma[r, col], template.onsets[r, col], x_chroma, x_onset
            )
        else:
            total += cosine_cost(template.chroma[r, col], x_chroma)
    return total


class TemplateCostSource:
    """On-demand template-aware costs on the (template columns) x (frames) grid."""

    def __init__(self, template: Template, x: FeatureSequence, cfg: CostConfig):
        _check_template_compat(template, x, cfg)
        self.template = template
        self.x = x
        self.cfg = cfg

    @property
    def shape(self) -> tuple[int, int]:
        return self.template.length, len(self.x)

    def full(self) -> np.ndarray:
        t, x, cfg = self.template, self.x, self.cfg
        gap_penalty = cfg.effective_gap_penalty
        total = np.zeros((t.length, len(x)), dtype=np.float64)
        for r in range(t.k):
            row_onsets = None if t.onsets is None else t.onsets[r]
            row_cost = measure_matrix(t.chroma[r], row_onsets, x.chroma, x.onsets, cfg.measure)
            row_cost[t.gap_mask[r]] = gap_penalty
            total += row_cost
        return total

    def row_segment(self, n: int, lo: int, hi: int) -> np.ndarray:
        t, x, cfg = self.template, self.x, self.cfg
        gap_penalty = cfg.effective_gap_penalty
        out = np.zeros(hi - lo + 1, dtype=np.float64)
        for r in range(t.k):
            if t.gap_mask[r, n]:
                out += gap_penalty
                continue
            part = 1.0 - x.chroma[lo : hi + 1] @ t.chroma[r, n]
            np.maximum(part, 0.0, out=part)
            if cfg.measure == MEASURE_COMBINED:
                part += np.linalg.norm(x.onsets[lo : hi + 1] - t.onsets[r, n], axis=1)
            out += part
        return out

    def downsample(self, factor: int) -> "TemplateCostSource":
        from .multiscale import downsample

        return TemplateCostSource(
            downsample_template(self.template, factor), downsample(self.x, factor), self.cfg
        )


def _check_template_compat(template: Template, x: FeatureSequence, cfg: CostConfig) -> None:
    if template.dim != x.dim:
        raise ValueError(f"feature dimension mismatch: template {template.dim}, sequence {x.dim}")
    if cfg.measure == MEASURE_COMBINED:
        require_onsets(cfg, x)
        if not template.has_onsets:
            raise ValueError(
                f"cost measure {cfg.measure!r} needs onset streams; template has none"
            )
    if template.has_onsets and x.has_onsets and template.onset_dim != x.onset_dim:
        raise ValueError(
            f"onset dimension mismatch: template {template.onset_dim}, sequence {x.onset_dim}"
        )


def align_to_template(
    template: Template,
    x: FeatureSequence,
    cfg: CostConfig,
    ms: MultiscaleConfig | None = None,
) -> AlignmentPath:
    """DTW of a sequence against a template under the template-aware cost."""
    source = TemplateCostSource(template, x, cfg)
    if ms is not None and ms.enabled:
        path, _ = run_multiscale(source, cfg.weights, ms)
        return path
    return dtw(source.full(), cfg.weights)


def template_extend(
    template: Template,
    x: FeatureSequence,
    path: AlignmentPath,
    gap_mode: str = GAP_MODE_INSERT,
) -> Template:
    """Merge a newly aligned sequence into the template as row k.

    In insert-gaps mode a (1,0) step stores a gap in the new row and a
    (0,1) step stores gaps in all old rows; in copy-features mode the
    matched template column and frame are stored as-is, duplicating
    features instead of inserting gaps. The result has one column per
    path element.
    """
    if gap_mode not in (GAP_MODE_INSERT, GAP_MODE_COPY):
        raise ValueError(f"unknown gap mode {gap_mode!r}")
    if path.end != (template.length, len(x)):
        raise ValueError(
            f"path ends at {path.end}, expected ({template.length}, {len(x)})"
        )
    if template.dim != x.dim:
        raise ValueError(f"feature dimension mismatch: template {template.dim}, sequence {x.dim}")
    if template.has_onsets != x.has_onsets:
        raise ValueError("template and sequence must both carry onset streams, or neither")

    k = template.k
    length = len(path)
    n_idx = path.pairs[:, 0] - 1
    m_idx = path.pairs[:, 1] - 1

    new_chroma = np.empty((k + 1, length, template.dim), dtype=np.float64)
    new_mask = np.zeros((k + 1, length), dtype=bool)
    new_chroma[:k] = template.chroma[:, n_idx, :]
    new_mask[:k] = template.gap_mask[:, n_idx]
    new_chroma[k] = x.chroma[m_idx]

    new_onsets = None
    if template.has_onsets:
        new_onsets = np.empty((k + 1, length, template.onset_dim), dtype=np.float64)
        new_onsets[:k] = template.onsets[:, n_idx, :]
        new_onsets[k] = x.onsets[m_idx]

    if gap_mode == GAP_MODE_INSERT and length > 1:
        deltas = np.diff(path.pairs, axis=0)
        col_step = np.zeros(length, dtype=bool)
        row_step = np.zeros(length, dtype=bool)
        col_step[1:] = (deltas[:, 0] == 0) & (deltas[:, 1] == 1)
        row_step[1:] = (deltas[:, 0] == 1) & (deltas[:, 1] == 0)
        new_chroma[:k, col_step, :] = GAP_VALUE
        new_mask[:k, col_step] = True
        new_chroma[k, row_step] = GAP_VALUE
        new_mask[k, row_step] = True
        if new_onsets is not None:
            new_onsets[:k, col_step, :] = GAP_VALUE
            new_onsets[k, row_step] = GAP_VALUE

    return Template(
        chroma=new_chroma,
        gap_mask=new_mask,
        row_labels=template.row_labels + (x.label,),
        hop_duration=template.hop_duration,
        onsets=new_onsets,
    )


def remove_from_template(template: Template, r: int) -> tuple[Template, FeatureSequence]:
    """Delete row ``r``, dropping columns that become all-gap.

    Returns the reduced template and the removed version's original
    sequence, reconstructed from the row's non-gap entries.
    """
    if template.k < 2:
        raise ValueError("cannot remove the last row of a template")
    if not 0 <= r < template.k:
        raise IndexError(f"row {r} outside [0, {template.k - 1}]")
    extracted = template.row_sequence(r)
    keep_rows = np.arange(template.k) != r
    mask = template.gap_mask[keep_rows]
    keep_cols = ~mask.all(axis=0)
    reduced = Template(
        chroma=template.chroma[keep_rows][:, keep_cols],
        gap_mask=mask[:, keep_cols],
        row_labels=tuple(l for i, l in enumerate(template.row_labels) if i != r),
        hop_duration=template.hop_duration,
        onsets=None if template.onsets is None else template.onsets[keep_rows][:, keep_cols],
    )
    return reduced, extracted


@dataclass(frozen=True)
class AlignmentStep:
    """One template-extension step of a progressive run."""

    iteration: int
    label: str
    path_length: int
    total_cost: float
    average_cost: float


def progressive_align(
    versions: list[FeatureSequence],
    order,
    cfg: CostConfig,
    ms: MultiscaleConfig | None = None,
    steps_out: list[AlignmentStep] | None = None,
) -> Template:
    """Successively align versions to a growing template.

    ``order`` is a permutation of version indices; the first entry seeds
    the template, every later one is aligned against the current template
    and merged per ``cfg.gap_mode``.
    """
    order = _check_order(order, len(versions))
    if len(versions) < 2:
        raise ValueError("progressive alignment needs at least two versions")
    _check_homogeneous(versions)
    template = template_init(versions[order[0]])
    for idx in order[1:]:
        x = versions[idx]
        path = align_to_template(template, x, cfg, ms)
        if steps_out is not None:
            steps_out.append(
                AlignmentStep(1, x.label, len(path), path.total_cost, path.total_cost / len(path))
            )
        template = template_extend(template, x, path, cfg.gap_mode)
    return template


def iterative_align(
    versions: list[FeatureSequence],
    order,
    iterations: int,
    cfg: CostConfig,
    ms: MultiscaleConfig | None = None,
    steps_out: list[AlignmentStep] | None = None,
) -> Template:
    """Progressive alignment followed by remove-and-realign passes.

    Iteration 1 is :func:`progressive_align`. Each later iteration visits
    the versions in their original alignment order, removes each from the
    template, realigns it, and re-appends it as the last row.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    order = _check_order(order, len(versions))
    template = progressive_align(versions, order, cfg, ms, steps_out)
    k = len(versions)
    # Row index of each order position; realignment moves rows around.
    row_of = list(range(k))
    for iteration in range(2, iterations + 1):
        for pos in range(k):
            r = row_of[pos]
            template, seq = remove_from_template(template, r)
            row_of = [q - 1 if q > r else q for q in row_of]
            path = align_to_template(template, seq, cfg, ms)
            if steps_out is not None:
                steps_out.append(
                    AlignmentStep(
                        iteration, seq.label, len(path), path.total_cost, path.total_cost / len(path)
                    )
                )
            template = template_extend(template, seq, path, cfg.gap_mode)
            row_of[pos] = k - 1
    return template


def pairwise_from_template(template: Template, i: int, j: int) -> Correspondence:
    """Frame correspondences between two template rows.

    Scans columns left to right with per-row frame counters and emits a
    pair whenever both rows are non-gap; frames falling on gap columns are
    resolved later by the correspondence's interpolation.
    """
    if i == j:
        raise ValueError("row indices must differ")
    for r in (i, j):
        if not 0 <= r < template.k:
            raise IndexError(f"row {r} outside [0, {template.k - 1}]")
    non_i = ~template.gap_mask[i]
    non_j = ~template.gap_mask[j]
    both = non_i & non_j
    if not both.any():
        raise ValueError(f"rows {i} and {j} share no non-gap column")
    frames_i = np.cumsum(non_i)
    frames_j = np.cumsum(non_j)
    pairs = np.column_stack([frames_i[both], frames_j[both]])
    return Correspondence(pairs=pairs, size_a=int(non_i.sum()), size_b=int(non_j.sum()))


def _check_order(order, count: int) -> list[int]:
    order = [int(i) for i in order]
    if sorted(order) != list(range(count)):
        raise ValueError(f"order must be a permutation of 0..{count - 1}, got {order}")
    return order


def _check_homogeneous(versions: list[FeatureSequence]) -> None:
    first = versions[0]
    for v in versions[1:]:
        if v.dim != first.dim:
            raise ValueError("versions disagree on feature dimension")
        if v.has_onsets != first.has_onsets:
            raise ValueError("versions must all carry onset streams, or none")
        if v.has_onsets and v.onset_dim != first.onset_dim:
            raise ValueError("versions disagree on onset dimension")
        if not math.isclose(v.hop_duration, first.hop_duration):
            raise ValueError("versions disagree on hop duration")


# ---------------------------------------------------------------------------
# Template downsampling (multiscale support)
# ---------------------------------------------------------------------------


def downsample_template(
    template: Template,
    factor: int,
    silence_threshold: float = DEFAULT_SILENCE_THRESHOLD,
) -> Template:
    """Average groups of ``factor`` columns per row, ignoring gap entries.

    A group that is all-gap for a row stays a gap at the coarse level;
    otherwise the non-gap frames are averaged (chroma renormalized).
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be at least 1")
    if factor == 1:
        return template
    length = template.length
    starts = np.arange(0, length, factor)
    non_gap = ~template.gap_mask
    counts = np.add.reduceat(non_gap.astype(np.float64), starts, axis=1)
    coarse_gap = counts == 0
    denom = np.where(coarse_gap, 1.0, counts)

    def fold(values: np.ndarray) -> np.ndarray:
        clean = np.where(non_gap[:, :, None], values, 0.0)
        return np.add.reduceat(clean, starts, axis=1) / denom[:, :, None]

    chroma = fold(template.chroma)
    out_chroma = np.full_like(chroma, GAP_VALUE)
    for r in range(template.k):
        live = ~coarse_gap[r]
        out_chroma[r, live] = normalize_chroma_rows(chroma[r, live], silence_threshold)

    onsets = None
    if template.has_onsets:
        onsets = fold(template.onsets)
        onsets[coarse_gap] = GAP_VALUE

    return Template(
        chroma=out_chroma,
        gap_mask=coarse_gap,
        row_labels=template.row_labels,
        hop_duration=template.hop_duration * factor,
        onsets=onsets,
    )


# ---------------------------------------------------------------------------
# Template serialization
# ---------------------------------------------------------------------------

TEMPLATE_SCHEMA_VERSION = 1


def _sidecar_paths(path) -> tuple[Path, Path, Path]:
    path = Path(path)
    if not path.name.endswith(".csv"):
        raise ValueError(f"template path must end in .csv, got {path.name}")
    stem = path.name[: -len(".csv")]
    return path, path.with_name(stem + ".onset.csv"), path.with_name(stem + ".json")


def save_template(template: Template, path) -> None:
    """Write a template as CSV (L rows, k*D columns, gaps as -1) plus a
    JSON sidecar with row labels, dimensions, hop, and gap-run lengths."""
    csv_path, onset_path, json_path = _sidecar_paths(path)
    flat = template.chroma.transpose(1, 0, 2).reshape(template.length, template.k * template.dim)
    np.savetxt(csv_path, flat, delimiter=",", fmt="%.17g")
    if template.has_onsets:
        flat_onsets = template.onsets.transpose(1, 0, 2).reshape(
            template.length, template.k * template.onset_dim
        )
        np.savetxt(onset_path, flat_onsets, delimiter=",", fmt="%.17g")
    sidecar = {
        "schema_version": TEMPLATE_SCHEMA_VERSION,
        "row_labels": list(template.row_labels),
        "dim": template.dim,
        "onset_dim": template.onset_dim,
        "hop_duration": template.hop_duration,
        "gap_runs": [_run_lengths(template.gap_mask[r]) for r in range(template.k)],
    }
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_template(path) -> Template:
    """Read a template written by :func:`save_template`."""
    from .features import read_csv_matrix

    csv_path, onset_path, json_path = _sidecar_paths(path)
    if not json_path.exists():
        raise FileNotFoundError(f"template sidecar not found: {json_path}")
    sidecar = json.loads(json_path.read_text(encoding="utf-8"))
    labels = tuple(sidecar["row_labels"])
    dim = int(sidecar["dim"])
    k = len(labels)
    flat = read_csv_matrix(csv_path, min_value=None)
    if flat.shape[1] != k * dim:
        raise ValueError(f"{csv_path}: expected {k * dim} columns, found {flat.shape[1]}")
    length = flat.shape[0]
    chroma = flat.reshape(length, k, dim).transpose(1, 0, 2).copy()
    mask = np.zeros((k, length), dtype=bool)
    for r, runs in enumerate(sidecar["gap_runs"]):
        mask[r] = _runs_to_mask(runs, length)
    chroma[mask] = GAP_VALUE
    onsets = None
    if sidecar.get("onset_dim"):
        onset_dim = int(sidecar["onset_dim"])
        flat_onsets = read_csv_matrix(onset_path, min_value=None)
        if flat_onsets.shape != (length, k * onset_dim):
            raise ValueError(f"{onset_path}: shape does not match the template sidecar")
        onsets = flat_onsets.reshape(length, k, onset_dim).transpose(1, 0, 2).copy()
        onsets[mask] = GAP_VALUE
    return Template(
        chroma=chroma,
        gap_mask=mask,
        row_labels=labels,
        hop_duration=float(sidecar["hop_duration"]),
        onsets=onsets,
    )


def _run_lengths(mask_row: np.ndarray) -> list[int]:
    """Run-length encode a gap-mask row, first run counting non-gaps."""
    arr = np.asarray(mask_row, dtype=bool)
    changes = np.flatnonzero(np.diff(arr)) + 1
    bounds = np.concatenate(([0], changes, [arr.size]))
    runs = np.diff(bounds).tolist()
    if arr[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def _runs_to_mask(runs: list[int], length: int) -> np.ndarray:
    mask = np.zeros(length, dtype=bool)
    pos = 0
    gap = False
    for run in runs:
        if gap:
            mask[pos : pos + run] = True
        pos += run
        gap = not gap
    if pos != length:
        raise ValueError(f"gap runs cover {pos} columns, expected {length}")
    return mask
