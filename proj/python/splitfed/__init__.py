"""Split learning with a frozen shared decoder: Python front end to the C++ core."""

from ._splitfed import (
    DatasetSplit,
    Server,
    SplitfedError,
    bce_from_logits,
    decoder_hash,
    default_centres,
    derive_seed,
    load_paramset,
    load_split,
    run_experiment,
    save_paramset,
    segmentation_metrics,
    train_client,
)

__all__ = [
    "DatasetSplit",
    "Server",
    "SplitfedError",
    "bce_from_logits",
    "decoder_hash",
    "default_centres",
    "derive_seed",
    "load_paramset",
    "load_split",
    "run_experiment",
    "save_paramset",
    "segmentation_metrics",
    "train_client",
]
