"""Model components: attribute encoder, latent encoder, decoder, discriminator.

All four are fully connected networks over the computation-graph engine.
The decoder re-appends the soft-target vector to the input of every layer
after the first, so attribute information stays available at each depth.
The discriminator exposes one hidden layer's pre-dropout activation as a
feature tap for feature-matching reconstruction.

Builders return graph nodes wired to caller-supplied parameter leaves;
:class:`Model` wraps a parameter set with ready-to-call inference methods.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

TARGET_KINDS = ("multiclass", "multilabel")
COMPONENTS = ("attr_enc", "lat_enc", "dec", "dis")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; every width and knob the builders need.

    ``feature_layer`` indexes the discriminator hidden layer whose
    activation feeds the feature-matching loss; ``image_range`` selects the
    decoder output activation (sigmoid for [0,1] data, tanh for [-1,1]).
    """

    image_dim: int
    target_dim: int
    latent_dim: int
    target_kind: str
    attr_widths: tuple = (256, 128)
    lat_widths: tuple = (256, 128)
    dec_widths: tuple = (128, 256)
    dis_widths: tuple = (256, 64)
    dropout: float = 0.3
    feature_layer: int = field(default=-1)
    image_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        for name in ("image_dim", "target_dim", "latent_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"target_kind must be one of {TARGET_KINDS}")
        for name in ("attr_widths", "lat_widths", "dec_widths", "dis_widths"):
            widths = tuple(int(w) for w in getattr(self, name))
            if not widths or any(w < 1 for w in widths):
                raise ValueError(f"{name} needs positive widths")
            object.__setattr__(self, name, widths)
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        n_hidden = len(self.dis_widths)
        tap = self.feature_layer if self.feature_layer >= 0 \
            else n_hidden + self.feature_layer
        if not 0 <= tap < n_hidden:
            raise ValueError(
                f"feature_layer {self.feature_layer} outside the "
                f"{n_hidden} discriminator hidden layers")
        object.__setattr__(self, "feature_layer", tap)
        if tuple(self.image_range) not in ((0.0, 1.0), (-1.0, 1.0)):
            raise ValueError("image_range must be (0,1) or (-1,1)")
        object.__setattr__(self, "image_range",
                           tuple(float(v) for v in self.image_range))

    @property
    def feature_dim(self) -> int:
        return self.dis_widths[self.feature_layer]

    def to_dict(self) -> dict:
        return {
            "image_dim": self.image_dim,
            "target_dim": self.target_dim,
            "latent_dim": self.latent_dim,
            "target_kind": self.target_kind,
            "attr_widths": list(self.attr_widths),
            "lat_widths": list(self.lat_widths),
            "dec_widths": list(self.dec_widths),
            "dis_widths": list(self.dis_widths),
            "dropout": self.dropout,
            "feature_layer": self.feature_layer,
            "image_range": list(self.image_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        fields = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        for k in ("attr_widths", "lat_widths", "dec_widths", "dis_widths",
                  "image_range"):
            if k in fields:
                fields[k] = tuple(fields[k])
        return cls(**fields)


def _layer_dims(spec: NetworkSpec, component: str) -> list[tuple[int, int]]:
    """(fan_in, fan_out) per layer, in forward order, final layer included."""
    if component == "attr_enc":
        dims = [spec.image_dim, *spec.attr_widths, spec.target_dim]
        return list(zip(dims[:-1], dims[1:]))
    if component == "lat_enc":
        dims = [spec.image_dim, *spec.lat_widths, spec.latent_dim]
        return list(zip(dims[:-1], dims[1:]))
    if component == "dis":
        dims = [spec.image_dim, *spec.dis_widths, 1]
        return list(zip(dims[:-1], dims[1:]))
    if component == "dec":
        # Soft targets are appended to every layer input.
        c = spec.target_dim
        fan_ins = [spec.latent_dim + c] + \
            [w + c for w in spec.dec_widths]
        fan_outs = [*spec.dec_widths, spec.image_dim]
        return list(zip(fan_ins, fan_outs))
    raise ValueError(f"unknown component {component!r}")


def param_shapes(spec: NetworkSpec,
                 components=COMPONENTS) -> dict[str, tuple]:
    """Shape of every named tensor, e.g. ``dec.w0`` -> (fan_in, fan_out)."""
    shapes: dict[str, tuple] = {}
    for comp in components:
        for k, (fan_in, fan_out) in enumerate(_layer_dims(spec, comp)):
            shapes[f"{comp}.w{k}"] = (fan_in, fan_out)
            shapes[f"{comp}.b{k}"] = (1, fan_out)
    return shapes


def component_of(name: str) -> str:
    return name.split(".", 1)[0]


@dataclass
class ModelParams:
    """Named tensors plus the seed that produced the initialization."""

    spec: NetworkSpec
    tensors: dict[str, np.ndarray]
    seed: int

    def __post_init__(self):
        want = param_shapes(self.spec)
        if set(self.tensors) != set(want):
            raise ValueError("tensor names do not match the architecture")
        for name, arr in self.tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != want[name]:
                raise ValueError(
                    f"{name}: shape {arr.shape}, expected {want[name]}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name}: non-finite values")
            self.tensors[name] = arr

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec,
                           {k: v.copy() for k, v in self.tensors.items()},
                           self.seed)

    def subset(self, component: str) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items()
                if component_of(k) == component}


def init_params(spec: NetworkSpec, seed: int) -> ModelParams:
    """Seed-deterministic initialization.

    Weights are uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
    Each tensor gets its own stream keyed by (seed, position in sorted name
    order) so the values do not depend on dict iteration order.
    """
    shapes = param_shapes(spec)
    tensors = {}
    for idx, name in enumerate(sorted(shapes)):
        shape = shapes[name]
        if name.split(".")[-1].startswith("b"):
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            rng = np.random.default_rng(np.random.SeedSequence((seed, idx)))
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(spec, tensors, seed)


def _affine(x: ad.Node, p: dict[str, ad.Node], comp: str, k: int) -> ad.Node:
    return ad.matmul(x, p[f"{comp}.w{k}"]) + p[f"{comp}.b{k}"]


def attr_encoder_nodes(spec: NetworkSpec, x: ad.Node,
                       p: dict[str, ad.Node]) -> ad.Node:
    """Soft-target head: relu+dropout hidden stack, softmax or sigmoid out."""
    h = x
    for k in range(len(spec.attr_widths)):
        h = ad.dropout(ad.relu(_affine(h, p, "attr_enc", k)), spec.dropout)
    logits = _affine(h, p, "attr_enc", len(spec.attr_widths))
    head = ad.softmax if spec.target_kind == "multiclass" else ad.sigmoid
    return head(logits)


def lat_encoder_nodes(spec: NetworkSpec, x: ad.Node,
                      p: dict[str, ad.Node]) -> ad.Node:
    """Latent head: relu+dropout hidden stack, linear (unbounded) output."""
    h = x
    for k in range(len(spec.lat_widths)):
        h = ad.dropout(ad.relu(_affine(h, p, "lat_enc", k)), spec.dropout)
    return _affine(h, p, "lat_enc", len(spec.lat_widths))


def decoder_nodes(spec: NetworkSpec, y: ad.Node, z: ad.Node,
                  p: dict[str, ad.Node]) -> ad.Node:
    """Generator: soft targets enter layer 0 with z and every later layer.

    No dropout anywhere in the decoder; the output activation maps into the
    configured image range.
    """
    h = ad.concat([y, z])
    for k in range(len(spec.dec_widths)):
        h = ad.relu(_affine(h, p, "dec", k))
        h = ad.concat([h, y])
    out = _affine(h, p, "dec", len(spec.dec_widths))
    return ad.sigmoid(out) if spec.image_range == (0.0, 1.0) else ad.tanh(out)


def discriminator_nodes(spec: NetworkSpec, x: ad.Node,
                        p: dict[str, ad.Node]) -> tuple[ad.Node, ad.Node]:
    """Real/fake probability plus the feature-tap activation.

    Returns ``(prob, tap)`` where ``tap`` is the pre-dropout activation of
    hidden layer ``spec.feature_layer``.
    """
    h = x
    tap = None
    for k in range(len(spec.dis_widths)):
        a = ad.relu(_affine(h, p, "dis", k))
        if k == spec.feature_layer:
            tap = a
        h = ad.dropout(a, spec.dropout)
    prob = ad.sigmoid(_affine(h, p, "dis", len(spec.dis_widths)))
    return prob, tap


_BUILDERS = {
    "attr_enc": attr_encoder_nodes,
    "lat_enc": lat_encoder_nodes,
    "dis": discriminator_nodes,
}


def parameter_nodes(spec: NetworkSpec,
                    components=COMPONENTS) -> dict[str, ad.Node]:
    return {name: ad.parameter(name)
            for name in param_shapes(spec, components)}


class Model:
    """Inference wrapper around one parameter set.

    Component graphs are built lazily and cached; a lock serializes forward
    passes because the cached graphs keep per-run state.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self.spec = params.spec
        self._graphs: dict[str, ad.Graph] = {}
        self._lock = threading.Lock()

    def _graph(self, kind: str) -> ad.Graph:
        if kind in self._graphs:
            return self._graphs[kind]
        spec = self.spec
        if kind == "dec":
            p = parameter_nodes(spec, ("dec",))
            out = decoder_nodes(spec, ad.placeholder("y"),
                                ad.placeholder("z"), p)
            graph = ad.Graph({"image": out})
        elif kind == "dis":
            p = parameter_nodes(spec, ("dis",))
            prob, tap = discriminator_nodes(spec, ad.placeholder("x"), p)
            graph = ad.Graph({"prob": prob, "tap": tap})
        else:
            p = parameter_nodes(spec, (kind,))
            out = _BUILDERS[kind](spec, ad.placeholder("x"), p)
            graph = ad.Graph({"out": out})
        self._graphs[kind] = graph
        return graph

    def _run(self, kind: str, bindings: dict, train: bool,
             seed: int) -> dict[str, np.ndarray]:
        graph = self._graph(kind)
        bound = dict(bindings)
        for name in param_shapes(self.spec, (kind,)):
            bound[name] = self.params.tensors[name]
        with self._lock:
            return graph.forward(bound, train=train, seed=seed)

    def _check_images(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.image_dim:
            raise ValueError(
                f"expected N x {self.spec.image_dim} images, got {x.shape}")
        return x

    def soft_targets(self, x: np.ndarray, *, train: bool = False,
                     seed: int = 0) -> np.ndarray:
        """Attribute probabilities for a batch of flattened images."""
        return self._run("attr_enc", {"x": self._check_images(x)},
                         train, seed)["out"]

    def latent(self, x: np.ndarray, *, train: bool = False,
               seed: int = 0) -> np.ndarray:
        """Free latent representation for a batch of flattened images."""
        return self._run("lat_enc", {"x": self._check_images(x)},
                         train, seed)["out"]

    def decode(self, y: np.ndarray, z: np.ndarray, *, train: bool = False,
               seed: int = 0) -> np.ndarray:
        """Images from soft targets and latents (row-aligned batches)."""
        y = np.asarray(y, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != self.spec.target_dim:
            raise ValueError(
                f"expected N x {self.spec.target_dim} targets, got {y.shape}")
        if z.ndim != 2 or z.shape[1] != self.spec.latent_dim:
            raise ValueError(
                f"expected N x {self.spec.latent_dim} latents, got {z.shape}")
        if y.shape[0] != z.shape[0]:
            raise ValueError("target and latent batch sizes differ")
        return self._run("dec", {"y": y, "z": z}, train, seed)["image"]

    def discriminate(self, x: np.ndarray, *, train: bool = False,
                     seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """(real-probability, feature-tap activation) for a batch."""
        out = self._run("dis", {"x": self._check_images(x)}, train, seed)
        return out["prob"], out["tap"]

    def reconstruct(self, x: np.ndarray, *, train: bool = False,
                    seed: int = 0) -> np.ndarray:
        """Encode then decode a batch (eval-style round trip)."""
        y = self.soft_targets(x, train=train, seed=seed)
        z = self.latent(x, train=train, seed=seed)
        return self.decode(y, z, train=train, seed=seed)
