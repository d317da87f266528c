"""Reconstruction quality metrics and the disentanglement scoring protocol.

Metrics are computed per image (RMSE, peak signal-to-noise ratio with a
100 dB cap, single-scale SSIM with a 7x7 Gaussian window) and reported as
mean and standard deviation over the batch.

The protocol scores how well an attribute was factored out of the latent
code: linear classifiers learn the attribute on real images, then rate
synthesized images whose soft-target coordinate sweeps an intensity grid.
A well-disentangled model yields error rates that fall as the intensity
rises.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import Dataset
from .editing import edit_multilabel
from .networks import Model, ModelParams

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 7
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    """Mean and standard deviation of each metric over a sample set."""

    rmse_mean: float
    rmse_std: float
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    count: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def gaussian_window(size: int = SSIM_WINDOW,
                    sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian weighting window."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim_pair(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    """Single-scale structural similarity of two 2-D images.

    Gaussian-weighted local statistics over every fully contained window;
    identical inputs give exactly 1.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"need matching 2-D images, got {a.shape} "
                         f"and {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    w = gaussian_window()
    wa = sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW))
    wb = sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW))
    mu_a = np.einsum("ijkl,kl->ij", wa, w)
    mu_b = np.einsum("ijkl,kl->ij", wb, w)
    var_a = np.einsum("ijkl,kl->ij", wa * wa, w) - mu_a * mu_a
    var_b = np.einsum("ijkl,kl->ij", wb * wb, w) - mu_b * mu_b
    cov = np.einsum("ijkl,kl->ij", wa * wb, w) - mu_a * mu_b
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _to_square(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2:
        raise ValueError("expected a batch of flattened images")
    side = int(round(np.sqrt(images.shape[1])))
    if side * side != images.shape[1]:
        raise ValueError(f"images of {images.shape[1]} pixels are not square")
    return images.reshape(len(images), side, side)


def image_metrics(x: np.ndarray, x_hat: np.ndarray,
                  peak: float) -> MetricReport:
    """Per-image RMSE / PSNR / SSIM aggregated as mean and std.

    ``peak`` is the width of the declared value range.  PSNR is
    20*log10(peak/RMSE), capped at 100 dB so exact reconstructions stay
    finite.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shapes {x.shape} and {x_hat.shape} differ")
    if peak <= 0:
        raise ValueError("peak must be positive")
    rmse = np.sqrt(np.mean((x - x_hat) ** 2, axis=1))
    with np.errstate(divide="ignore"):
        psnr = 20.0 * np.log10(peak / rmse)
    psnr = np.minimum(psnr, PSNR_CAP_DB)
    sq_x, sq_hat = _to_square(x), _to_square(x_hat)
    ssim = np.array([ssim_pair(a, b, peak) for a, b in zip(sq_x, sq_hat)])
    return MetricReport(
        rmse_mean=float(rmse.mean()), rmse_std=float(rmse.std()),
        psnr_mean=float(psnr.mean()), psnr_std=float(psnr.std()),
        ssim_mean=float(ssim.mean()), ssim_std=float(ssim.std()),
        count=len(rmse))


@dataclass(frozen=True)
class LinearClassifier:
    """Linear decision function with its training and holdout accuracy."""

    weights: np.ndarray
    bias: float
    train_accuracy: float
    holdout_accuracy: float

    def decision(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        """True where the sample is classified attribute-positive."""
        return self.decision(x) > 0.0


def train_linear_classifier(positives: np.ndarray, negatives: np.ndarray,
                            seed: int, *, iterations: int = 300,
                            regularization: float = 1e-3
                            ) -> LinearClassifier:
    """Fit a linear decision boundary by hinge-loss subgradient descent.

    Full-batch updates on the L2-regularized hinge objective.  The holdout
    is a per-class fifth selected by ``seed % 5`` (so five consecutive
    seeds rotate through disjoint folds) and everything is deterministic.
    Flipping the two classes negates the decision function exactly.
    """
    positives = np.asarray(positives, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64)
    if len(positives) == 0 or len(negatives) == 0:
        raise ValueError("both classes must be non-empty")

    def fold(n: int) -> np.ndarray:
        return np.arange(n) % 5 == seed % 5

    hold_p, hold_n = fold(len(positives)), fold(len(negatives))
    if hold_p.all() or hold_n.all():
        # A class too small to split: train on everything.
        hold_p = np.zeros(len(positives), dtype=bool)
        hold_n = np.zeros(len(negatives), dtype=bool)
    x_fit = np.vstack([positives[~hold_p], negatives[~hold_n]])
    y_fit = np.concatenate([np.ones((~hold_p).sum()),
                            -np.ones((~hold_n).sum())])

    w = np.zeros(x_fit.shape[1])
    b = 0.0
    for t in range(iterations):
        eta = 1.0 / (regularization * (t + 1) + 10.0)
        margin = y_fit * (x_fit @ w + b)
        viol = margin < 1.0
        grad_w = regularization * w - \
            (y_fit[viol, None] * x_fit[viol]).sum(axis=0) / len(x_fit)
        grad_b = -y_fit[viol].sum() / len(x_fit)
        w = w - eta * grad_w
        b = b - eta * grad_b

    def acc(xs, ys):
        if len(xs) == 0:
            return float("nan")
        pred = np.sign(xs @ w + b)
        pred[pred == 0] = 1.0
        return float(np.mean(pred == ys))

    x_hold = np.vstack([positives[hold_p], negatives[hold_n]])
    y_hold = np.concatenate([np.ones(hold_p.sum()), -np.ones(hold_n.sum())])
    hold_acc = acc(x_hold, y_hold)
    fit_acc = acc(x_fit, y_fit)
    return LinearClassifier(weights=w, bias=float(b),
                            train_accuracy=fit_acc,
                            holdout_accuracy=fit_acc
                            if np.isnan(hold_acc) else hold_acc)


@dataclass(frozen=True)
class ProtocolResult:
    """Per-intensity classification error for one attribute."""

    attribute: str
    attribute_index: int
    intensities: tuple
    error_rates: tuple
    classifier_train_accuracy: float
    classifier_holdout_accuracy: float
    synthesized_count: int

    def __post_init__(self):
        if any(e < 0.0 or e > 1.0 for e in self.error_rates):
            raise ValueError("error rates must lie in [0, 1]")
        grid = self.intensities
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("intensity grid must be strictly increasing")

    def to_dict(self) -> dict:
        return {"attribute": self.attribute,
                "attribute_index": self.attribute_index,
                "intensities": list(self.intensities),
                "error_rates": list(self.error_rates),
                "classifier_train_accuracy": self.classifier_train_accuracy,
                "classifier_holdout_accuracy":
                    self.classifier_holdout_accuracy,
                "synthesized_count": self.synthesized_count}


def resolve_attribute(dataset: Dataset, attribute) -> int:
    """Accept an attribute by index or by label name."""
    if isinstance(attribute, str):
        if attribute not in dataset.label_names:
            raise ValueError(
                f"attribute {attribute!r} not in {list(dataset.label_names)}")
        return dataset.label_names.index(attribute)
    idx = int(attribute)
    if not 0 <= idx < dataset.labels.shape[1]:
        raise ValueError(f"attribute index {idx} out of range")
    return idx


def disentanglement_protocol(params: ModelParams, train_set: Dataset,
                             test_set: Dataset, attribute,
                             intensity_grid, seed: int = 0, *,
                             num_classifiers: int = 5,
                             interval=(-2.0, 5.0)) -> ProtocolResult:
    """Four-step attribute-recovery evaluation.

    1. Split the training images by attribute presence.
    2. Train ``num_classifiers`` independently seeded linear classifiers
       on that split and average their judgments.
    3. Take every test image lacking the attribute and synthesize a
       counterpart at each grid intensity by overwriting the attribute's
       soft-target coordinate (latent code untouched).
    4. Report, per intensity, the fraction of synthesized images the
       classifiers fail to recognize as attribute-positive.
    """
    idx = resolve_attribute(train_set, attribute)
    grid = tuple(float(v) for v in intensity_grid)
    if not grid:
        raise ValueError("intensity grid is empty")

    present = train_set.labels[:, idx] > 0.5
    positives = train_set.images[present]
    negatives = train_set.images[~present]
    classifiers = [train_linear_classifier(positives, negatives, seed + k)
                   for k in range(num_classifiers)]

    lacking = test_set.labels[:, idx] <= 0.5
    test_images = test_set.images[lacking]
    if len(test_images) == 0:
        raise ValueError(
            f"no test images lack attribute "
            f"{train_set.label_names[idx] if train_set.label_names else idx}")

    model = Model(params)
    y = model.soft_targets(test_images)
    z = model.latent(test_images)
    rates = []
    for intensity in grid:
        y_edit = np.stack([edit_multilabel(row, [(idx, intensity)], interval)
                           for row in y])
        synthesized = model.decode(y_edit, z)
        per_clf = [float(np.mean(~clf.predict(synthesized)))
                   for clf in classifiers]
        rates.append(float(np.mean(per_clf)))

    name = train_set.label_names[idx] if train_set.label_names else str(idx)
    return ProtocolResult(
        attribute=name, attribute_index=idx, intensities=grid,
        error_rates=tuple(rates),
        classifier_train_accuracy=float(np.mean(
            [c.train_accuracy for c in classifiers])),
        classifier_holdout_accuracy=float(np.mean(
            [c.holdout_accuracy for c in classifiers])),
        synthesized_count=len(test_images))


def spearman_rank_correlation(a, b) -> float:
    """Spearman rho: Pearson correlation of average-tie ranks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length 1-D arrays of >= 2 values")

    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1, dtype=np.float64)
        # Average the ranks of tied values.
        for value in np.unique(v):
            mask = v == value
            if mask.sum() > 1:
                r[mask] = r[mask].mean()
        return r

    ra, rb = ranks(a), ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0.0:
        return 0.0
    return float((ra * rb).sum() / denom)
