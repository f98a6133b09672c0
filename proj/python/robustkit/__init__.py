# SPDX-License-Identifier: Apache-2.0
"""Robust training toolkit: augmentation, mixing, adversarial training and robustness metrics."""

from ._native import (
    DivergedError,
    FormatError,
    Model,
    __version__,
    augment_and_mix,
    clean_accuracy,
    corrupt,
    evaluate_all,
    fgsm_attack,
    fmix_mask,
    js_divergence_probs,
    make_shapes_dataset,
    normalize_config,
    pgd_attack,
    robust_accuracy,
    softmax,
    train,
)

__all__ = [
    "DivergedError",
    "FormatError",
    "Model",
    "__version__",
    "augment_and_mix",
    "clean_accuracy",
    "corrupt",
    "evaluate_all",
    "fgsm_attack",
    "fmix_mask",
    "js_divergence_probs",
    "make_shapes_dataset",
    "normalize_config",
    "pgd_attack",
    "robust_accuracy",
    "softmax",
    "train",
]
