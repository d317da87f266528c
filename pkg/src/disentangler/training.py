"""Two-phase training loop with RMSProp and decorrelation warm-up.

Phase 1 fits the attribute encoder alone on classification; its parameters
are then frozen.  Phase 2 jointly updates the latent encoder, decoder, and
discriminator on one shared forward pass per iteration:

* latent encoder descends  warmed_weight * dependence + reconstruction
* decoder descends         reconstruction + lambda_adv * generator term
* discriminator ascends    the adversarial objective

Ablation presets select which loss terms exist; ``M1`` drops the
discriminator entirely, so its log records carry no adversarial keys.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import Dataset, minibatches
from .dependence import dcov2_node, xcov_node
from .losses import (
    LossWeights,
    adversarial_loss_node,
    classification_loss_node,
    feature_recon_loss_node,
    generator_loss_node,
    pixel_recon_loss_node,
)
from .networks import (
    ModelParams,
    NetworkSpec,
    attr_encoder_nodes,
    decoder_nodes,
    discriminator_nodes,
    init_params,
    lat_encoder_nodes,
    parameter_nodes,
)

DECORRELATION_KINDS = ("dcov2", "xcov", "none")
ABLATIONS = ("M1", "M2", "M3", "full")

# Which loss terms each ablation activates: (pixel, feature+adversarial,
# decorrelation).  M2 keeps feature matching and the adversarial game but
# drops the pixel term; only "full" applies the decorrelation penalty.
_ABLATION_TERMS = {
    "M1": (True, False, False),
    "M2": (False, True, False),
    "M3": (True, True, False),
    "full": (True, True, True),
}


class TrainingDiverged(Exception):
    """Raised when a loss or activation stops being finite.

    Carries the last finite parameter snapshot and the log collected so
    far, so callers can checkpoint the wreckage for inspection.
    """

    def __init__(self, message: str, iteration: int,
                 params: ModelParams | None, log: "TrainLog"):
        super().__init__(message)
        self.iteration = iteration
        self.params = params
        self.log = log


@dataclass(frozen=True)
class TrainConfig:
    """All training knobs; architecture lives in NetworkSpec."""

    mode: str = "multiclass"
    decorrelation: str = "dcov2"
    weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 1e-4
    batch_size: int = 100
    phase1_epochs: int = 10
    phase2_iterations: int = 2000
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    seed: int = 0
    ablation: str = "full"
    non_saturating: bool = False
    patience: int = 3

    def __post_init__(self):
        if self.mode not in ("multiclass", "multilabel"):
            raise ValueError("mode must be multiclass or multilabel")
        if self.decorrelation not in DECORRELATION_KINDS:
            raise ValueError(
                f"decorrelation must be one of {DECORRELATION_KINDS}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 "
                             "(distance statistics need pairs)")
        for name in ("learning_rate", "rms_decay", "rms_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.phase1_epochs < 1 or self.phase2_iterations < 0:
            raise ValueError("phase lengths out of range")


@dataclass
class TrainLog:
    """Per-epoch phase-1 records and per-iteration phase-2 records."""

    phase1: list = field(default_factory=list)
    phase2: list = field(default_factory=list)


def lambda_dcorr_at(iteration: int, config: TrainConfig) -> float:
    """Linear warm-up of the decorrelation weight.

    target * min(1, iteration / warmup_iterations): zero at iteration 0,
    the target from the warm-up deadline onward.
    """
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    w = config.weights
    return w.lambda_dcorr_target * min(1.0,
                                       iteration / w.warmup_iterations)


def rmsprop_step(params: dict, grads: dict, state: dict, lr: float,
                 decay: float, eps: float) -> tuple[dict, dict]:
    """One RMSProp update; returns new (params, state) without mutation.

    v <- decay*v + (1-decay)*g^2;  theta <- theta - lr*g/(sqrt(v)+eps).
    """
    new_params, new_state = {}, {}
    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient for {name}")
        v = state.get(name)
        v = (1.0 - decay) * g * g if v is None else \
            decay * v + (1.0 - decay) * g * g
        new_params[name] = theta - lr * g / (np.sqrt(v) + eps)
        new_state[name] = v
    return new_params, new_state


def classification_accuracy(probs: np.ndarray, labels: np.ndarray,
                            mode: str) -> float:
    """Argmax match rate (multiclass) or per-bit match rate (multilabel)."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if mode == "multiclass":
        return float(np.mean(probs.argmax(axis=1) == labels.argmax(axis=1)))
    if mode == "multilabel":
        return float(np.mean((probs > 0.5) == (labels > 0.5)))
    raise ValueError(f"unknown mode {mode!r}")


def _iter_seed(master: int, phase: int, iteration: int) -> int:
    return int(np.random.SeedSequence(
        (master, phase, iteration)).generate_state(1)[0])


def _attr_graph(spec: NetworkSpec) -> ad.Graph:
    p = parameter_nodes(spec, ("attr_enc",))
    x = ad.placeholder("x")
    probs = attr_encoder_nodes(spec, x, p)
    targets = ad.placeholder("targets")
    loss = classification_loss_node(probs, targets, spec.target_kind)
    return ad.Graph({"probs": probs, "loss": loss})


def _eval_soft_targets(graph: ad.Graph, tensors: dict,
                       images: np.ndarray, labels: np.ndarray) -> dict:
    bind = {"x": images, "targets": labels}
    bind.update({k: v for k, v in tensors.items()
                 if k.startswith("attr_enc.")})
    return graph.forward(bind)


def pretrain_attr_encoder(config: TrainConfig, params: ModelParams,
                          train: Dataset,
                          val: Dataset | None = None
                          ) -> tuple[ModelParams, list]:
    """Phase 1: fit the attribute encoder on classification, then freeze.

    Runs up to ``config.phase1_epochs`` epochs, stopping early when the
    monitored accuracy (validation if given, else training) has not
    improved for ``config.patience`` consecutive epochs.  Returns updated
    parameters and one log record per completed epoch.
    """
    if len(train) == 0:
        raise ValueError("empty training dataset")
    graph = _attr_graph(params.spec)
    attr = params.subset("attr_enc")
    state: dict = {}
    records = []
    best_acc, stale = -1.0, 0
    monitor = val if val is not None and len(val) else train
    it = 0
    start = time.monotonic()
    for epoch in range(config.phase1_epochs):
        loss_start = float(_eval_soft_targets(
            graph, attr, train.images, train.labels)["loss"])
        for _, images, labels in minibatches(train, config.batch_size,
                                             config.seed, epoch):
            bind = {"x": images, "targets": labels, **attr}
            graph.forward(bind, train=True,
                          seed=_iter_seed(config.seed, 1, it))
            grads = graph.backward("loss", wrt=list(attr))
            attr, state = rmsprop_step(attr, grads, state,
                                       config.learning_rate,
                                       config.rms_decay, config.rms_eps)
            it += 1
        out = _eval_soft_targets(graph, attr, train.images, train.labels)
        loss_end = float(out["loss"])
        mon_out = _eval_soft_targets(graph, attr, monitor.images,
                                     monitor.labels)
        acc = classification_accuracy(mon_out["probs"], monitor.labels,
                                      config.mode)
        records.append({"epoch": epoch, "train_loss_start": loss_start,
                        "train_loss_end": loss_end, "accuracy": acc,
                        "wall_clock": time.monotonic() - start})
        if acc > best_acc + 1e-12:
            best_acc, stale = acc, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    tensors = dict(params.tensors)
    tensors.update(attr)
    return ModelParams(params.spec, tensors, params.seed), records


def _phase2_graph(spec: NetworkSpec, config: TrainConfig) -> ad.Graph:
    """One shared graph holding every phase-2 objective and monitor.

    The soft targets arrive as a placeholder (the attribute encoder is
    frozen and evaluated outside), as does the warmed decorrelation weight.
    """
    pix_on, adv_on, dcorr_on = _ABLATION_TERMS[config.ablation]
    dcorr_on = dcorr_on and config.decorrelation != "none"

    components = ("lat_enc", "dec", "dis") if adv_on else ("lat_enc", "dec")
    p = parameter_nodes(spec, components)
    x = ad.placeholder("x")
    y_soft = ad.placeholder("y_soft")
    z = lat_encoder_nodes(spec, x, p)
    x_hat = decoder_nodes(spec, y_soft, z, p)

    outputs: dict[str, ad.Node] = {"z": z, "x_hat": x_hat}
    pix = pixel_recon_loss_node(x, x_hat)
    outputs["pixel"] = pix
    rec = pix if pix_on else ad.const(0.0)
    if adv_on:
        prob_real, tap_real = discriminator_nodes(spec, x, p)
        prob_fake, tap_fake = discriminator_nodes(spec, x_hat, p)
        feat = feature_recon_loss_node(tap_real, tap_fake)
        rec = rec + ad.const(config.weights.lambda_rec) * feat
        adv = adversarial_loss_node(prob_real, prob_fake)
        gen = generator_loss_node(prob_fake,
                                  non_saturating=config.non_saturating)
        outputs.update({"feature": feat, "adversarial": adv,
                        "generator_adv": gen})
    outputs["reconstruction"] = rec

    monitor_kind = "xcov" if config.decorrelation == "xcov" else "dcov2"
    monitor = xcov_node(y_soft, z, config.batch_size) \
        if monitor_kind == "xcov" else dcov2_node(y_soft, z)
    outputs["dependence"] = monitor

    lat_obj = rec
    if dcorr_on:
        lat_obj = ad.placeholder("lambda_dcorr") * monitor + rec
    outputs["lat_objective"] = lat_obj
    dec_obj = rec
    if adv_on:
        dec_obj = rec + ad.const(config.weights.lambda_adv) * gen
    outputs["dec_objective"] = dec_obj
    return ad.Graph(outputs)


def _endless_batches(dataset: Dataset, batch_size: int, seed: int):
    epoch = 0
    while True:
        yield from minibatches(dataset, batch_size, seed, epoch)
        epoch += 1


def train_joint(config: TrainConfig, params: ModelParams,
                train: Dataset) -> tuple[ModelParams, list]:
    """Phase 2: joint latent-encoder/decoder/discriminator training.

    The attribute encoder is never part of the phase-2 graph, so its
    parameters are bit-identical before and after.  Raises
    :class:`TrainingDiverged` carrying the last finite snapshot when any
    forward value or loss leaves the finite range.
    """
    spec = params.spec
    graph = _phase2_graph(spec, config)
    attr_graph = _attr_graph(spec)
    pix_on, adv_on, dcorr_on = _ABLATION_TERMS[config.ablation]
    dcorr_on = dcorr_on and config.decorrelation != "none"

    comp_names = {"lat_enc": [], "dec": [], "dis": []}
    for name in graph.parameters:
        comp_names[name.split(".", 1)[0]].append(name)
    tensors = {name: params.tensors[name].copy()
               for names in comp_names.values() for name in names}
    states: dict[str, dict] = {"lat_enc": {}, "dec": {}, "dis": {}}
    records: list[dict] = []
    batches = _endless_batches(train, config.batch_size, config.seed)
    start = time.monotonic()

    def snapshot() -> ModelParams:
        merged = dict(params.tensors)
        merged.update({k: v.copy() for k, v in tensors.items()})
        return ModelParams(spec, merged, params.seed)

    last_good = snapshot()
    for it in range(config.phase2_iterations):
        _, images, labels = next(batches)
        lam = lambda_dcorr_at(it, config)
        try:
            y_soft = _eval_soft_targets(attr_graph, params.tensors,
                                        images, labels)["probs"]
            bind = {"x": images, "y_soft": y_soft, **tensors}
            if dcorr_on:
                bind["lambda_dcorr"] = lam
            out = graph.forward(bind, train=True,
                                seed=_iter_seed(config.seed, 2, it))
            lat_grads = graph.backward("lat_objective",
                                       wrt=comp_names["lat_enc"])
            dec_grads = graph.backward("dec_objective",
                                       wrt=comp_names["dec"])
            updates = [("lat_enc", lat_grads), ("dec", dec_grads)]
            if adv_on:
                # Ascent: RMSProp with the gradient negated.
                dis_grads = {k: -g for k, g in graph.backward(
                    "adversarial", wrt=comp_names["dis"]).items()}
                updates.append(("dis", dis_grads))
            for comp, grads in updates:
                sub = {n: tensors[n] for n in comp_names[comp]}
                sub, states[comp] = rmsprop_step(
                    sub, grads, states[comp], config.learning_rate,
                    config.rms_decay, config.rms_eps)
                tensors.update(sub)
        except (ad.NonFiniteError, ValueError) as exc:
            raise TrainingDiverged(
                f"iteration {it}: {exc}", it, last_good,
                TrainLog(phase2=records)) from exc

        record = {"iteration": it, "lambda_dcorr": lam,
                  "pixel": float(out["pixel"]),
                  "reconstruction": float(out["reconstruction"]),
                  "dependence": float(out["dependence"]),
                  "wall_clock": time.monotonic() - start}
        if adv_on:
            record["feature"] = float(out["feature"])
            record["adversarial"] = float(out["adversarial"])
            record["generator_adv"] = float(out["generator_adv"])
        records.append(record)
        last_good = snapshot()
    return last_good, records


def train(config: TrainConfig, spec: NetworkSpec, train_set: Dataset,
          val_set: Dataset | None = None) -> tuple[ModelParams, TrainLog]:
    """Initialize, run both phases, and return (params, full log)."""
    if spec.target_kind != config.mode:
        raise ValueError("spec.target_kind and config.mode disagree")
    params = init_params(spec, config.seed)
    params, phase1 = pretrain_attr_encoder(config, params, train_set,
                                           val_set)
    params, phase2 = train_joint(config, params, train_set)
    return params, TrainLog(phase1=phase1, phase2=phase2)
