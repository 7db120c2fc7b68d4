"""Concept segmentation evaluation harness: Python access to the C++ core."""

from ._conceptseg import (
    ConceptSegError,
    arrow_checks,
    decode_rle,
    dice,
    dice_counts,
    encode_rle,
    largest_component_box,
    parse_action,
    registry_datasets,
    registry_phrases,
    round_half_even,
    run_toy_eval,
    split_manifest,
    summarize_rows,
    train_count,
    validate_manifest,
    validate_phrase,
    write_toy_suite,
)

__version__ = "0.1.0"

__all__ = [
    "ConceptSegError",
    "arrow_checks",
    "decode_rle",
    "dice",
    "dice_counts",
    "encode_rle",
    "largest_component_box",
    "parse_action",
    "registry_datasets",
    "registry_phrases",
    "round_half_even",
    "run_toy_eval",
    "split_manifest",
    "summarize_rows",
    "train_count",
    "validate_manifest",
    "validate_phrase",
    "write_toy_suite",
]
