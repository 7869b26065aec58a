"""Capsule-network graphs: tensors, evaluation, backprop, generation rules."""

from ._capsnet import (
    CapsnetError,
    CapsuleGraph,
    Tensor,
    backward,
    build_cnn,
    build_mlp,
    canonical_form,
    conv2d,
    derive_json,
    downsample,
    enumerate_growth,
    evaluate,
    fixtures,
    grad_check,
    init_params,
    is_isomorphic,
    matmul,
    replay_json,
    reshape,
    train,
)

__all__ = [
    "CapsnetError",
    "CapsuleGraph",
    "Tensor",
    "backward",
    "build_cnn",
    "build_mlp",
    "canonical_form",
    "conv2d",
    "derive_json",
    "downsample",
    "enumerate_growth",
    "evaluate",
    "fixtures",
    "grad_check",
    "init_params",
    "is_isomorphic",
    "matmul",
    "replay_json",
    "reshape",
    "train",
]
