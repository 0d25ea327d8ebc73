"""Unsupervised zero-shot segmentation from diffusion self-attention tensors."""

from ._core import (
    AttentionStack,
    IoError,
    ValidationError,
    aggregate,
    anchor_grid,
    compute_weights,
    evaluate,
    generate_stack,
    hungarian_match,
    kl_distance,
    kmeans_segment,
    min_cross_distance,
    nms_assign,
    read_stack,
    run_merging,
    segment,
    validate_stack,
    write_stack,
)

__all__ = [
    "AttentionStack",
    "IoError",
    "ValidationError",
    "aggregate",
    "anchor_grid",
    "compute_weights",
    "evaluate",
    "generate_stack",
    "hungarian_match",
    "kl_distance",
    "kmeans_segment",
    "min_cross_distance",
    "nms_assign",
    "read_stack",
    "run_merging",
    "segment",
    "validate_stack",
    "write_stack",
]
