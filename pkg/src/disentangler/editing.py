"""Image editing through the soft target representation.

Multiclass editing swaps the target class's probability with the current
maximum, preserving the probability multiset (and hence the unit sum).
Multilabel editing overwrites chosen attribute coordinates with new
intensities inside a guarded interval.  Synthesis feeds the edited soft
targets and the untouched latent code back through the decoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .networks import Model, ModelParams

# Attribute intensities outside this interval are rejected as meaningless
# extrapolation; the bounds are configurable per request.
DEFAULT_EDIT_INTERVAL = (-2.0, 5.0)


class IntervalError(ValueError):
    """An edit value falls outside the allowed editing interval."""

    def __init__(self, value: float, interval: tuple):
        super().__init__(
            f"edit value {value} outside editing interval "
            f"[{interval[0]}, {interval[1]}]")
        self.value = value
        self.interval = interval


@dataclass(frozen=True)
class EditRequest:
    """One editing instruction.

    ``target_class`` drives multiclass swaps; ``assignments`` is a sequence
    of (attribute index, new value) pairs for multilabel replacement.
    """

    mode: str
    target_class: int | None = None
    assignments: tuple = ()
    interval: tuple = DEFAULT_EDIT_INTERVAL

    def __post_init__(self):
        if self.mode not in ("multiclass", "multilabel"):
            raise ValueError("mode must be multiclass or multilabel")
        lo, hi = self.interval
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError("editing interval must be a finite (lo, hi)")
        if self.mode == "multiclass":
            if self.target_class is None or self.target_class < 0:
                raise ValueError("multiclass edit needs target_class >= 0")
        else:
            pairs = tuple((int(i), float(v)) for i, v in self.assignments)
            object.__setattr__(self, "assignments", pairs)
            indices = [i for i, _ in pairs]
            if len(set(indices)) != len(indices):
                raise ValueError(f"duplicate attribute indices {indices}")
            for _, v in pairs:
                if not lo <= v <= hi:
                    raise IntervalError(v, self.interval)


def _as_vector(y_hat) -> np.ndarray:
    y = np.asarray(y_hat, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError(f"expected a 1-D soft target vector, got {y.shape}")
    return y


def edit_multiclass(y_hat: np.ndarray, target_class: int) -> np.ndarray:
    """Swap the target class's value with the current maximum.

    Ties at the maximum resolve to the lowest index.  Swapping permutes the
    vector, so the coordinate sum is preserved exactly; asking for the
    current argmax is the identity.
    """
    y = _as_vector(y_hat).copy()
    if not 0 <= target_class < y.shape[0]:
        raise ValueError(
            f"target_class {target_class} out of range for {y.shape[0]} "
            "classes")
    top = int(np.argmax(y))
    y[target_class], y[top] = y[top], y[target_class]
    return y


def edit_multilabel(y_hat: np.ndarray, assignments,
                    interval=DEFAULT_EDIT_INTERVAL) -> np.ndarray:
    """Replace exactly the listed (index, value) coordinates.

    Values must lie inside ``interval``; indices must be distinct and in
    range.  Untouched coordinates are bit-identical to the input.
    """
    y = _as_vector(y_hat).copy()
    lo, hi = interval
    seen = set()
    for idx, value in assignments:
        idx = int(idx)
        value = float(value)
        if not 0 <= idx < y.shape[0]:
            raise ValueError(
                f"attribute index {idx} out of range for {y.shape[0]} "
                "attributes")
        if idx in seen:
            raise ValueError(f"duplicate attribute index {idx}")
        seen.add(idx)
        if not np.isfinite(value) or not lo <= value <= hi:
            raise IntervalError(value, tuple(interval))
        y[idx] = value
    return y


def apply_edit(y_hat: np.ndarray, request: EditRequest) -> np.ndarray:
    if request.mode == "multiclass":
        return edit_multiclass(y_hat, request.target_class)
    return edit_multilabel(y_hat, request.assignments, request.interval)


@dataclass(frozen=True)
class SynthesisResult:
    """All intermediates of one edit: original/edited soft targets, the
    untouched latent code, and the synthesized image."""

    image: np.ndarray
    soft_targets: np.ndarray
    edited_targets: np.ndarray
    latent: np.ndarray


def synthesize(params: ModelParams, x: np.ndarray,
               request: EditRequest) -> SynthesisResult:
    """Encode one image, apply the edit, decode with the latent unchanged.

    Pure with respect to ``params`` and ``x``; all stages run in eval mode,
    so results are deterministic and an identity edit reproduces the plain
    reconstruction bit for bit.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    batch = x[None, :] if squeeze else x
    if batch.shape[0] != 1:
        raise ValueError("synthesize edits a single image")
    model = Model(params)
    y = model.soft_targets(batch)[0]
    z = model.latent(batch)[0]
    y_edit = apply_edit(y, request)
    image = model.decode(y_edit[None, :], z[None, :])[0]
    return SynthesisResult(image=image, soft_targets=y,
                           edited_targets=y_edit, latent=z)
