"""Deterministic voice-anonymization primitives and a privacy-attack harness."""

__version__ = "0.1.0"

from .embedding import (
    AnonymizationSpec,
    EmbeddingNoiseConfig,
    EmbeddingPool,
    FarthestPoolConfig,
    RejectionConfig,
    SpeakerEmbedding,
    anonymize_utterance,
    cosine_distance,
    cosine_similarity,
    cross_gender_filter,
    embedding_awgn,
    farthest_pool_average,
    rejection_sample_anon,
    select_random_speaker,
)
from .evaluation import (
    EerResult,
    SyntheticPopulationConfig,
    Trial,
    classify_condition,
    compute_eer,
    generate_population,
    run_attack_experiment,
    score_trials,
)
from .f0 import (
    F0NoiseConfig,
    F0Track,
    MeanReversionConfig,
    awgn_f0,
    f0_summary,
    mean_reversion_f0,
    moving_average_f0,
)
from .prosody import MultiplierRange, PhonemeProsody, preset_ranges, randomize_prosody
from .rng import SeededRng, derive_seed
