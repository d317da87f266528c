"""Datasets: IDX container ingestion and a procedural glyph corpus.

The glyph corpus is the workhorse for tests and reference runs: every image
is rendered from known generative factors (shape class, stroke thickness,
slant, scale), so claims about what a representation disentangles can be
checked against ground truth.  IDX loading covers externally supplied
MNIST-format files; nothing is downloaded.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

SHAPES = ("bar", "box", "cross", "diagonal")
STYLE_NAMES = ("thick", "slanted", "large")

# Binarization thresholds for multilabel style attributes; recorded in
# Dataset.meta so downstream consumers can reproduce the labels.
STYLE_THRESHOLDS = {"thick": 2, "slanted": 1, "large": 0.9}

DEFAULT_SPLIT_SEED = 52


class DataFormatError(Exception):
    """Malformed container: bad magic, truncation, or count mismatch."""


@dataclass
class Dataset:
    """Immutable-by-convention bundle of images, labels, and provenance.

    ``images`` are N x M flattened float64 rows inside ``value_range``;
    ``labels`` are one-hot rows (multiclass) or 0/1 rows (multilabel);
    ``factors`` holds one dict of generative factors per synthetic sample.
    """

    images: np.ndarray
    labels: np.ndarray
    mode: str
    value_range: tuple = (0.0, 1.0)
    label_names: tuple = ()
    factors: list | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.images.ndim != 2 or self.labels.ndim != 2:
            raise ValueError("images and labels must be 2-D")
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images vs {len(self.labels)} labels")
        lo, hi = self.value_range
        if self.images.size and (self.images.min() < lo
                                 or self.images.max() > hi):
            raise ValueError(f"image values escape range [{lo}, {hi}]")
        if self.mode == "multiclass":
            if not np.allclose(self.labels.sum(axis=1), 1.0) or \
                    not np.isin(self.labels, (0.0, 1.0)).all():
                raise ValueError("multiclass labels must be one-hot rows")
        elif self.mode == "multilabel":
            if not np.isin(self.labels, (0.0, 1.0)).all():
                raise ValueError("multilabel labels must be 0/1")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.label_names and len(self.label_names) != self.labels.shape[1]:
            raise ValueError("label_names length != label width")
        if self.factors is not None and len(self.factors) != len(self.images):
            raise ValueError("factor metadata count != image count")

    def __len__(self):
        return len(self.images)

    def take(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        factors = None if self.factors is None else \
            [self.factors[i] for i in indices]
        return Dataset(self.images[indices], self.labels[indices], self.mode,
                       self.value_range, self.label_names, factors,
                       dict(self.meta))


def one_hot(values: np.ndarray, width: int | None = None) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64).ravel()
    if width is None:
        width = int(values.max()) + 1 if values.size else 0
    if values.size and (values.min() < 0 or values.max() >= width):
        raise ValueError(f"labels outside [0, {width})")
    out = np.zeros((len(values), width))
    out[np.arange(len(values)), values] = 1.0
    return out


def _read_exact(f, count: int, offset: int, what: str) -> bytes:
    buf = f.read(count)
    if len(buf) != count:
        raise DataFormatError(
            f"truncated {what}: wanted {count} bytes at offset {offset}, "
            f"got {len(buf)}")
    return buf


def _read_idx(path, magic_want: int, ndim_want: int):
    offset = 0
    with open(path, "rb") as f:
        head = _read_exact(f, 4, offset, "magic")
        magic = struct.unpack(">i", head)[0]
        if magic != magic_want:
            raise DataFormatError(
                f"{path}: bad magic 0x{magic:08x} at offset 0, "
                f"expected 0x{magic_want:08x}")
        offset += 4
        dims = []
        for _ in range(ndim_want):
            dims.append(struct.unpack(
                ">i", _read_exact(f, 4, offset, "dimension"))[0])
            offset += 4
        count = int(np.prod(dims))
        payload = _read_exact(f, count, offset, "payload")
    return dims, np.frombuffer(payload, dtype=np.uint8)


def load_idx(image_path, label_path, value_range=(0.0, 1.0)) -> Dataset:
    """Read an MNIST-format image/label file pair into a multiclass Dataset.

    Big-endian headers; pixel bytes scale to [0,1] by /255 (then shift to
    [-1,1] if that range is declared); labels one-hot encoded.
    """
    dims, pixels = _read_idx(image_path, IDX_IMAGE_MAGIC, 3)
    n, rows, cols = dims
    (n_lab,), raw_labels = _read_idx(label_path, IDX_LABEL_MAGIC, 1)
    if n != n_lab:
        raise DataFormatError(
            f"count mismatch: {n} images vs {n_lab} labels")
    images = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    if tuple(value_range) == (-1.0, 1.0):
        images = images * 2.0 - 1.0
    labels = one_hot(raw_labels)
    return Dataset(images, labels, "multiclass", tuple(value_range),
                   tuple(str(k) for k in range(labels.shape[1])),
                   None, {"side": rows} if rows == cols else {"rows": rows,
                                                              "cols": cols})


def save_idx(dataset: Dataset, image_path, label_path,
             factor_path=None) -> None:
    """Write a dataset back out in the IDX layout (plus optional factors).

    Pixels are quantized with round(v*255) after undoing a [-1,1] shift, so
    byte-sourced data round-trips bit-exactly.  Labels are single bytes: the
    class index for multiclass, the leading-indicator index (argmax) for
    multilabel, with the full label matrix reconstructible from factors.
    """
    side = dataset.meta.get("side")
    if side is None or side * side != dataset.images.shape[1]:
        raise ValueError("dataset lacks a square side in meta")
    images = dataset.images
    if tuple(dataset.value_range) == (-1.0, 1.0):
        images = (images + 1.0) / 2.0
    pixels = np.round(images * 255.0).astype(np.uint8)
    n = len(dataset)
    with open(image_path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, n, side, side))
        f.write(pixels.tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABEL_MAGIC, n))
        f.write(dataset.labels.argmax(axis=1).astype(np.uint8).tobytes())
    if factor_path is not None:
        payload = {"meta": dataset.meta, "mode": dataset.mode,
                   "label_names": list(dataset.label_names),
                   "factors": dataset.factors}
        Path(factor_path).write_text(json.dumps(payload, indent=1))


@dataclass(frozen=True)
class GlyphConfig:
    """Procedural corpus description; all factor grids have defaults."""

    side: int = 16
    shapes: tuple = SHAPES
    thickness_grid: tuple = (1, 2, 3)
    slant_grid: tuple = (-2, -1, 0, 1, 2)
    scale_grid: tuple = (0.6, 0.8, 1.0)
    counts: tuple = (2000, 500, 500)
    noise_level: float = 0.0
    mode: str = "multiclass"
    seed: int = 0

    def __post_init__(self):
        if self.side < 8:
            raise ValueError("side must be at least 8")
        for name in ("shapes", "thickness_grid", "slant_grid", "scale_grid",
                     "counts"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if any(s not in SHAPES for s in self.shapes):
            raise ValueError(f"shapes must come from {SHAPES}")
        if self.mode not in ("multiclass", "multilabel"):
            raise ValueError("mode must be multiclass or multilabel")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")


def _dilate(img: np.ndarray) -> np.ndarray:
    out = img.copy()
    out[1:, :] |= img[:-1, :]
    out[:-1, :] |= img[1:, :]
    out[:, 1:] |= img[:, :-1]
    out[:, :-1] |= img[:, 1:]
    return out


def render_glyph(side: int, shape: str, thickness: int, slant: int,
                 scale: float, noise_level: float = 0.0,
                 noise_seed: int = 0) -> np.ndarray:
    """Rasterize one glyph as a side x side float image in [0, 1].

    Pure function of its arguments: the same factors always produce the
    same pixels.  The skeleton is drawn on an integer grid, sheared by
    ``slant`` pixels of horizontal offset across the glyph height, then
    dilated ``thickness - 1`` times, which strictly grows the foreground.
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}")
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    c = side // 2
    # Base extent leaves room for maximal shear plus dilation at side 16.
    extent = max(2, int(round(scale * (side / 2 - 4))))
    span = max(side / 2 - 2, 1.0)

    def dx(y: int) -> int:
        return int(round(slant * (y - c) / span))

    img = np.zeros((side, side), dtype=bool)

    def put(y: int, x: int):
        if 0 <= y < side and 0 <= x < side:
            img[y, x] = True

    ks = range(-extent, extent + 1)
    if shape == "bar":
        for k in ks:
            put(c, c + k + dx(c))
    elif shape == "box":
        for k in ks:
            put(c - extent, c + k + dx(c - extent))
            put(c + extent, c + k + dx(c + extent))
            put(c + k, c - extent + dx(c + k))
            put(c + k, c + extent + dx(c + k))
    elif shape == "cross":
        for k in ks:
            put(c, c + k + dx(c))
            put(c + k, c + dx(c + k))
    elif shape == "diagonal":
        for k in ks:
            put(c + k, c + k + dx(c + k))

    for _ in range(thickness - 1):
        img = _dilate(img)
    out = img.astype(np.float64)
    if noise_level > 0:
        rng = np.random.default_rng(noise_seed)
        out = np.clip(out + rng.normal(0.0, noise_level, out.shape), 0.0, 1.0)
    return out


def _style_bits(thickness: int, slant: int, scale: float) -> list[float]:
    return [float(thickness >= STYLE_THRESHOLDS["thick"]),
            float(abs(slant) >= STYLE_THRESHOLDS["slanted"]),
            float(scale >= STYLE_THRESHOLDS["large"])]


def glyph_labels(config: GlyphConfig, factors: list[dict]) -> np.ndarray:
    """Label matrix for a factor list under the configured mode."""
    shape_idx = [config.shapes.index(f["shape"]) for f in factors]
    shape_part = one_hot(np.array(shape_idx), len(config.shapes))
    if config.mode == "multiclass":
        return shape_part
    style = np.array([_style_bits(f["thickness"], f["slant"], f["scale"])
                      for f in factors])
    return np.hstack([shape_part, style])


def generate_glyphs(config: GlyphConfig, count: int | None = None) -> Dataset:
    """Sample ``count`` glyphs (default: sum of configured split counts).

    Factors are drawn uniformly from the configured grids with a generator
    seeded by ``config.seed``; each sample's noise stream is keyed by a
    stored per-sample ``noise_seed`` so factors alone re-render the image.
    """
    if count is None:
        count = sum(config.counts)
    rng = np.random.default_rng(config.seed)
    factors = []
    images = np.empty((count, config.side * config.side))
    for i in range(count):
        f = {
            "shape": config.shapes[rng.integers(len(config.shapes))],
            "thickness": int(config.thickness_grid[
                rng.integers(len(config.thickness_grid))]),
            "slant": int(config.slant_grid[
                rng.integers(len(config.slant_grid))]),
            "scale": float(config.scale_grid[
                rng.integers(len(config.scale_grid))]),
            "noise_seed": int(rng.integers(2 ** 31)),
        }
        factors.append(f)
        images[i] = render_glyph(config.side, f["shape"], f["thickness"],
                                 f["slant"], f["scale"], config.noise_level,
                                 f["noise_seed"]).ravel()
    names = tuple(config.shapes) if config.mode == "multiclass" \
        else tuple(config.shapes) + STYLE_NAMES
    meta = {"side": config.side, "noise_level": config.noise_level,
            "thresholds": dict(STYLE_THRESHOLDS), "seed": config.seed}
    return Dataset(images, glyph_labels(config, factors), config.mode,
                   (0.0, 1.0), names, factors, meta)


def split_dataset(dataset: Dataset, counts,
                  seed: int = DEFAULT_SPLIT_SEED) -> list[Dataset]:
    """Disjoint splits of the given sizes after a seeded shuffle."""
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts) or sum(counts) > len(dataset):
        raise ValueError(
            f"split sizes {counts} exceed dataset of {len(dataset)}")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    out, start = [], 0
    for c in counts:
        out.append(dataset.take(perm[start:start + c]))
        start += c
    return out


def minibatches(dataset: Dataset, batch_size: int, seed: int, epoch: int):
    """Seeded permutation of the dataset cut into full-size batches.

    The trailing short batch is dropped because the distance statistics in
    the training objective need a constant batch size.  The permutation is
    keyed by (seed, epoch) so consecutive epochs reshuffle deterministically.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    if batch_size > len(dataset):
        raise ValueError(
            f"batch_size {batch_size} exceeds dataset of {len(dataset)}")
    perm = np.random.default_rng(
        np.random.SeedSequence((seed, epoch))).permutation(len(dataset))
    for start in range(0, len(dataset) - batch_size + 1, batch_size):
        idx = perm[start:start + batch_size]
        yield idx, dataset.images[idx], dataset.labels[idx]
