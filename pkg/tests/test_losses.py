"""Loss terms against hand-rolled oracles plus gradient checks."""

import numpy as np
import pytest

from disentangler import autodiff as ad
from disentangler.losses import (
    PROB_EPS,
    LossWeights,
    adversarial_loss,
    adversarial_loss_node,
    classification_loss,
    classification_loss_node,
    feature_recon_loss,
    generator_loss_node,
    pixel_recon_loss,
    reconstruction_loss,
)


def naive_multiclass_ce(probs, onehot):
    total = 0.0
    for n in range(len(probs)):
        k = int(np.argmax(onehot[n]))
        total += -np.log(max(probs[n, k], PROB_EPS))
    return total / len(probs)


def naive_multilabel_bce(probs, targets):
    total = 0.0
    for n in range(probs.shape[0]):
        for k in range(probs.shape[1]):
            p = min(max(probs[n, k], PROB_EPS), 1.0 - PROB_EPS)
            t = targets[n, k]
            total += -(t * np.log(p) + (1 - t) * np.log(1 - p))
    return total / probs.size


def _probs(n, k, seed):
    rng = np.random.default_rng(seed)
    raw = rng.random((n, k)) + 0.01
    return raw / raw.sum(axis=1, keepdims=True)


def test_multiclass_ce_matches_oracle():
    probs = _probs(6, 4, 0)
    onehot = np.eye(4)[np.random.default_rng(1).integers(0, 4, 6)]
    got = classification_loss(probs, onehot, "multiclass")
    assert got == pytest.approx(naive_multiclass_ce(probs, onehot), abs=1e-12)


def test_multilabel_bce_matches_oracle():
    rng = np.random.default_rng(2)
    probs = rng.random((5, 3)) * 0.98 + 0.01
    targets = (rng.random((5, 3)) > 0.5).astype(float)
    got = classification_loss(probs, targets, "multilabel")
    assert got == pytest.approx(naive_multilabel_bce(probs, targets),
                                abs=1e-12)


def test_uniform_multiclass_prediction_is_log_c():
    probs = np.full((3, 10), 0.1)
    onehot = np.eye(10)[[0, 4, 9]]
    assert classification_loss(probs, onehot, "multiclass") == pytest.approx(
        np.log(10.0), abs=1e-12)


def test_indifferent_multilabel_prediction_is_log_2():
    probs = np.full((4, 5), 0.5)
    targets = (np.random.default_rng(0).random((4, 5)) > 0.3).astype(float)
    assert classification_loss(probs, targets, "multilabel") == pytest.approx(
        np.log(2.0), abs=1e-12)


def test_perfect_prediction_is_zero_up_to_clamp():
    onehot = np.eye(4)[[1, 3]]
    assert classification_loss(onehot, onehot, "multiclass") <= 1e-11


def test_classification_loss_strictly_decreases_toward_label():
    onehot = np.array([[0.0, 1.0, 0.0]])
    wrong = np.array([[0.7, 0.1, 0.2]])
    losses_along_line = [
        classification_loss(wrong + t * (onehot - wrong), onehot,
                            "multiclass")
        for t in np.linspace(0.0, 0.9, 10)]
    assert all(b < a for a, b in zip(losses_along_line,
                                     losses_along_line[1:]))


def test_classification_loss_finite_at_saturated_probs():
    probs = np.array([[0.0, 1.0], [1.0, 0.0]])
    onehot = np.array([[1.0, 0.0], [0.0, 1.0]])
    ce = classification_loss(probs, onehot, "multiclass")
    assert np.isfinite(ce)
    assert ce == pytest.approx(-np.log(PROB_EPS), rel=1e-9)
    bce = classification_loss(probs, onehot, "multilabel")
    assert np.isfinite(bce)


def test_classification_loss_rejects_unknown_mode_and_shapes():
    with pytest.raises(ValueError, match="mode"):
        classification_loss(np.ones((2, 2)) / 2, np.eye(2), "ordinal")
    with pytest.raises(ValueError, match="differ"):
        classification_loss(np.ones((2, 3)) / 3, np.eye(2), "multiclass")


def test_pixel_recon_matches_elementwise_mse():
    rng = np.random.default_rng(3)
    x, xh = rng.random((4, 10)), rng.random((4, 10))
    want = sum((x[n, m] - xh[n, m]) ** 2
               for n in range(4) for m in range(10)) / 40
    assert pixel_recon_loss(x, xh) == pytest.approx(want, abs=1e-12)
    assert pixel_recon_loss(x, x) == 0.0
    assert pixel_recon_loss(x, x + 0.1) == pytest.approx(0.01, abs=1e-12)


def test_feature_recon_matches_elementwise_mse():
    rng = np.random.default_rng(4)
    h, hf = rng.random((3, 7)), rng.random((3, 7))
    want = ((h - hf) ** 2).sum() / 21
    assert feature_recon_loss(h, hf) == pytest.approx(want, abs=1e-12)
    assert feature_recon_loss(h, h + 2.0) == pytest.approx(4.0, abs=1e-12)


def test_recon_losses_reject_shape_mismatch():
    with pytest.raises(ValueError, match="differ"):
        pixel_recon_loss(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ValueError, match="differ"):
        feature_recon_loss(np.zeros((2, 3)), np.zeros((3, 3)))


def test_reconstruction_combines_scalar_terms():
    assert reconstruction_loss(0.01, 4.0, 1.0) == pytest.approx(4.01)
    assert reconstruction_loss(0.7, 9.0, 0.0) == pytest.approx(0.7)
    assert reconstruction_loss(0.0, 0.0, 1.0) == 0.0
    # Linear in the weight.
    vals = [reconstruction_loss(0.25, 1.5, w) for w in (0.0, 1.0, 2.0)]
    assert vals[2] - vals[1] == pytest.approx(vals[1] - vals[0])


def test_loss_weights_validation():
    w = LossWeights()
    assert w.lambda_rec == 1.0 and w.lambda_adv == 0.01
    with pytest.raises(ValueError, match="lambda_adv"):
        LossWeights(lambda_adv=-0.1)
    with pytest.raises(ValueError, match="warmup"):
        LossWeights(warmup_iterations=0)


def test_adversarial_loss_matches_direct_formula():
    rng = np.random.default_rng(6)
    d_real = rng.random((8, 1)) * 0.98 + 0.01
    d_fake = rng.random((8, 1)) * 0.98 + 0.01
    want = np.mean(np.log(d_real)) + np.mean(np.log(1.0 - d_fake))
    got = adversarial_loss(d_real, d_fake)
    assert got == pytest.approx(want, abs=1e-12)
    assert got <= 0.0


def test_adversarial_loss_named_points():
    half = np.full((4, 1), 0.5)
    assert adversarial_loss(half, half) == pytest.approx(2.0 * np.log(0.5))
    # Perfect discriminator: both log terms vanish.
    assert adversarial_loss(np.ones((4, 1)),
                            np.zeros((4, 1))) == pytest.approx(0.0,
                                                               abs=1e-9)


def test_adversarial_loss_finite_at_confident_discriminator():
    assert np.isfinite(adversarial_loss(np.ones((3, 1)), np.ones((3, 1))))
    assert np.isfinite(adversarial_loss(np.zeros((3, 1)), np.zeros((3, 1))))


def test_generator_loss_variants():
    d_fake = np.array([[0.2], [0.7]])
    sat = ad.Graph({"v": generator_loss_node(ad.placeholder("d"))})
    nonsat = ad.Graph({"v": generator_loss_node(ad.placeholder("d"),
                                                non_saturating=True)})
    assert float(sat.forward({"d": d_fake})["v"]) == pytest.approx(
        np.mean(np.log(1.0 - d_fake)))
    assert float(nonsat.forward({"d": d_fake})["v"]) == pytest.approx(
        -np.mean(np.log(d_fake)))


@pytest.mark.parametrize("mode", ["multiclass", "multilabel"])
def test_classification_loss_gradient(mode):
    rng = np.random.default_rng(7)
    logits = rng.normal(size=(5, 4))
    targets = np.eye(4)[rng.integers(0, 4, 5)] if mode == "multiclass" \
        else (rng.random((5, 4)) > 0.5).astype(float)
    x = ad.placeholder("x")
    probs = ad.softmax(x) if mode == "multiclass" else ad.sigmoid(x)
    g = ad.Graph({"loss": classification_loss_node(
        probs, ad.const(targets), mode)})
    assert ad.grad_check(g, "loss", {"x": logits}, 1e-5) < 1e-6


def test_adversarial_loss_gradient():
    rng = np.random.default_rng(8)
    point = {"r": rng.normal(size=(6, 1)), "f": rng.normal(size=(6, 1))}
    r, f = ad.placeholder("r"), ad.placeholder("f")
    g = ad.Graph({"loss": adversarial_loss_node(ad.sigmoid(r),
                                                ad.sigmoid(f))})
    assert ad.grad_check(g, "loss", point, 1e-5) < 1e-6
