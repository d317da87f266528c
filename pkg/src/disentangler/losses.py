"""Training objectives: classification, reconstruction, and adversarial terms.

Every loss is written once as a graph builder (``*_node``) and exposed a
second time as a plain array function that evaluates the builder on a tiny
graph, keeping the formula single-sourced between training and tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

# Probabilities are clamped away from {0, 1} before any log so a saturated
# sigmoid/softmax cannot produce -inf.
PROB_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Combination weights for the joint objective.

    ``lambda_dcorr_target`` is the decorrelation weight reached after the
    linear warm-up of ``warmup_iterations`` steps.
    """

    lambda_rec: float = 1.0
    lambda_dcorr_target: float = 1.0
    lambda_adv: float = 0.01
    warmup_iterations: int = 2000

    def __post_init__(self):
        for name in ("lambda_rec", "lambda_dcorr_target", "lambda_adv"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.warmup_iterations < 1:
            raise ValueError("warmup_iterations must be >= 1")


def _safe_log(p: ad.Node) -> ad.Node:
    return ad.log(ad.clip(p, PROB_EPS, 1.0))


def classification_loss_node(probs: ad.Node, targets: ad.Node,
                             mode: str) -> ad.Node:
    """Graph for the supervised loss on soft targets.

    ``multiclass``: cross-entropy against one-hot targets, averaged over the
    batch.  ``multilabel``: binary cross-entropy against 0/1 targets,
    averaged over batch and coordinates.
    """
    if mode == "multiclass":
        # One-hot targets zero out every term but the true class, so summing
        # over the class axis then averaging rows is the batch-mean CE.
        per_sample = ad.sum_(targets * _safe_log(probs), axis=1)
        return -ad.mean(per_sample)
    if mode == "multilabel":
        one = ad.const(1.0)
        term = targets * _safe_log(probs) + \
            (one - targets) * _safe_log(one - probs)
        return -ad.mean(term)
    raise ValueError(f"unknown mode {mode!r}")


def pixel_recon_loss_node(x: ad.Node, x_hat: ad.Node) -> ad.Node:
    """Mean squared error over all pixels of the batch."""
    return ad.mean(ad.square(x - x_hat))


def feature_recon_loss_node(h_real: ad.Node, h_fake: ad.Node) -> ad.Node:
    """Mean squared error between matched intermediate feature activations."""
    return ad.mean(ad.square(h_real - h_fake))


def reconstruction_loss_node(pix: ad.Node, feat: ad.Node,
                             lambda_rec: float) -> ad.Node:
    """Pixel term plus ``lambda_rec`` times the feature-matching term."""
    return pix + ad.const(float(lambda_rec)) * feat


def adversarial_loss_node(d_real: ad.Node, d_fake: ad.Node) -> ad.Node:
    """mean(log d_real) + mean(log(1 - d_fake)).

    The discriminator ascends this value; the generator descends it (or uses
    :func:`generator_loss_node` with the non-saturating variant).
    """
    one = ad.const(1.0)
    return ad.mean(_safe_log(d_real)) + ad.mean(_safe_log(one - d_fake))


def generator_loss_node(d_fake: ad.Node, *,
                        non_saturating: bool = False) -> ad.Node:
    """Generator-side adversarial objective to minimize.

    Saturating form: mean(log(1 - d_fake)), the generator's share of the
    full objective.  Non-saturating form: -mean(log d_fake), same fixed
    points but useful gradients when the discriminator is confident.
    """
    one = ad.const(1.0)
    if non_saturating:
        return -ad.mean(_safe_log(d_fake))
    return ad.mean(_safe_log(one - d_fake))


def _eval(builder, arrays: dict[str, np.ndarray]) -> float:
    nodes = {name: ad.placeholder(name) for name in arrays}
    graph = ad.Graph({"value": builder(**nodes)})
    return float(graph.forward(arrays)["value"])


def _same_shape(a, b, what: str):
    if np.asarray(a).shape != np.asarray(b).shape:
        raise ValueError(f"{what}: shapes {np.asarray(a).shape} and "
                         f"{np.asarray(b).shape} differ")


def classification_loss(probs: np.ndarray, targets: np.ndarray,
                        mode: str) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape:
        raise ValueError(
            f"probs {probs.shape} and targets {targets.shape} differ")
    return _eval(lambda probs, targets:
                 classification_loss_node(probs, targets, mode),
                 {"probs": probs, "targets": targets})


def pixel_recon_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    _same_shape(x, x_hat, "pixel_recon_loss")
    return _eval(pixel_recon_loss_node, {"x": x, "x_hat": x_hat})


def feature_recon_loss(h_real: np.ndarray, h_fake: np.ndarray) -> float:
    _same_shape(h_real, h_fake, "feature_recon_loss")
    return _eval(feature_recon_loss_node, {"h_real": h_real, "h_fake": h_fake})


def reconstruction_loss(pix: float, feat: float, lambda_rec: float) -> float:
    """Combine the two already-reduced reconstruction terms."""
    return float(pix) + float(lambda_rec) * float(feat)


def adversarial_loss(d_real: np.ndarray, d_fake: np.ndarray) -> float:
    return _eval(adversarial_loss_node, {"d_real": d_real, "d_fake": d_fake})
