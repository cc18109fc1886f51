import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jointalign import (
    CostConfig,
    FeatureSequence,
    MEASURE_COMBINED,
    SyntheticCorpusSpec,
    generate_synthetic_corpus,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_sequence(rng, length, dim=12, onsets=True, label="") -> FeatureSequence:
    """A random unit-norm chroma sequence, optionally with onsets."""
    chroma = rng.uniform(0.0, 1.0, (length, dim))
    chroma /= np.linalg.norm(chroma, axis=1, keepdims=True)
    onset_arr = rng.uniform(0.0, 1.0, (length, dim)) if onsets else None
    return FeatureSequence(chroma=chroma, hop_duration=0.02, onsets=onset_arr, label=label)


def small_corpus(seed, num_versions=3, base_length=80, **overrides):
    spec = SyntheticCorpusSpec(
        base_length=base_length,
        num_versions=num_versions,
        warp_strength=overrides.pop("warp_strength", 0.3),
        noise_level=overrides.pop("noise_level", 0.04),
        articulation_perturbation=overrides.pop("articulation_perturbation", 0.5),
        beat_every=overrides.pop("beat_every", 8),
        seed=seed,
        **overrides,
    )
    return generate_synthetic_corpus(spec)


@pytest.fixture
def combined_cfg():
    return CostConfig(measure=MEASURE_COMBINED)
