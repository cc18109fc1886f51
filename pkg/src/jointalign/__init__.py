"""Joint alignment of multiple feature-sequence versions of a piece of
music via progressive template-based dynamic time warping."""

from .features import (
    CHROMA_DIM,
    DEFAULT_HOP,
    DEFAULT_ONSET_COST_CAP,
    DEFAULT_SILENCE_THRESHOLD,
    DEFAULT_WEIGHTS,
    GAP_MODE_COPY,
    GAP_MODE_INSERT,
    MEASURE_CHROMA,
    MEASURE_COMBINED,
    CostConfig,
    FeatureParseError,
    FeatureSequence,
    SyntheticCorpus,
    SyntheticCorpusSpec,
    combined_cost,
    cosine_cost,
    default_gap_penalty,
    generate_synthetic_corpus,
    load_feature_sequence,
    normalize_chroma,
    save_feature_sequence,
)
from .pairwise import (
    AlignmentPath,
    Correspondence,
    CostMatrix,
    align_pair,
    average_cost,
    cost_matrix,
    dtw,
    load_alignment,
    map_position,
    map_positions,
    save_alignment,
)
from .multiscale import (
    BandMask,
    MultiscaleConfig,
    align_sequences,
    downsample,
    msdtw,
    msdtw_detailed,
    project_path,
)
from .progressive import (
    GAP_VALUE,
    AlignmentStep,
    Template,
    align_to_template,
    downsample_template,
    is_gap,
    iterative_align,
    load_template,
    pairwise_from_template,
    progressive_align,
    remove_from_template,
    save_template,
    template_cost,
    template_extend,
    template_init,
)
from .ordering import (
    OrderPlan,
    as_given_order,
    dtw_cost_order,
    length_order,
    pairwise_average_costs,
)
from .evaluation import (
    BeatAnnotation,
    Corpus,
    DeviationReport,
    ExperimentReport,
    PairDeviation,
    ValueStats,
    average_beat_deviation,
    corpus_from_synthetic,
    corpus_stats,
    ground_truth_correspondence,
    load_beat_annotation,
    load_corpus,
    pair_deviation,
    run_experiment_matrix,
    run_variant,
    save_beat_annotation,
)

__version__ = "0.1.0"
