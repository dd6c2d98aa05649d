"""avstitch: pseudo-untrimmed audio-visual dataset synthesis and evaluation.

The package builds long synthetic audio-visual videos by stitching together
semantically clustered trimmed clips, interleaves audio and video token
streams at a configurable audio rate, generates time-referenced instruction
and response pairs, and scores temporal predictions against ground truth.
"""

from __future__ import annotations

from avstitch.clustering import (
    ClusterAssignment,
    cluster,
    cluster_stats,
    load_assignment,
    write_assignment,
)
from avstitch.corpus import Corpus, TrimmedClip, hash_embed, load_corpus, write_corpus
from avstitch.interleave import (
    AUDIO,
    DEFAULT_AUDIO_RATE,
    DEFAULT_CONTEXT_LEN,
    VIDEO,
    ContextToken,
    InterleavedContext,
    SlotPattern,
    TokenSequence,
    interleave,
    resample,
    slot_pattern,
)
from avstitch.metrics import (
    EvalReport,
    GroundTruth,
    Prediction,
    ap_at,
    evaluate_avedl,
    evaluate_vtg,
    parse_response,
    tiou,
    token_span_to_seconds,
    vtg_report,
)
from avstitch.prompts import (
    DEFAULT_BANK,
    QAPair,
    TemplateBank,
    format_interval,
    gen_audio_pairs,
    gen_cba_pairs,
    interval_phrase,
    load_bank,
)
from avstitch.synthesis import (
    DEFAULT_SCALE_GRID,
    PseudoUntrimmedVideo,
    ScaledSegment,
    SynthesisConfig,
    TemporalAnnotation,
    build_dataset,
    load_manifest,
    write_manifest,
)

__version__ = "0.1.0"

__all__ = [
    "AUDIO",
    "ClusterAssignment",
    "ContextToken",
    "Corpus",
    "DEFAULT_AUDIO_RATE",
    "DEFAULT_BANK",
    "DEFAULT_CONTEXT_LEN",
    "DEFAULT_SCALE_GRID",
    "EvalReport",
    "GroundTruth",
    "InterleavedContext",
    "Prediction",
    "PseudoUntrimmedVideo",
    "QAPair",
    "ScaledSegment",
    "SlotPattern",
    "SynthesisConfig",
    "TemplateBank",
    "TemporalAnnotation",
    "TokenSequence",
    "TrimmedClip",
    "VIDEO",
    "ap_at",
    "build_dataset",
    "cluster",
    "cluster_stats",
    "evaluate_avedl",
    "evaluate_vtg",
    "format_interval",
    "gen_audio_pairs",
    "gen_cba_pairs",
    "hash_embed",
    "interleave",
    "interval_phrase",
    "load_assignment",
    "load_bank",
    "load_corpus",
    "load_manifest",
    "parse_response",
    "resample",
    "slot_pattern",
    "tiou",
    "token_span_to_seconds",
    "vtg_report",
    "write_assignment",
    "write_corpus",
    "write_manifest",
]
