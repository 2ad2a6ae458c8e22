"""Training loops for both supervision settings, ablations, evaluation.

The trainer accumulates per-video gradients over a batch, averages them,
and applies Adam with global-norm clipping.  Runs are deterministic for a
fixed seed: shuffling comes from one seeded generator and gradients are
reduced in shuffled video order.

Decoder-initialization modes mirror the ablation table: the full fusion
path, a single modality's final state, or "label_guided", which sums both
final states and adds an auxiliary video-level classification loss on each
encoder's final hidden state through a small MLP head.  The heads belong
to the trainer, not the model, and are not part of checkpoints.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from . import fusion as fusion_mod
from . import model as model_mod
from . import optim
from .data import DatasetManifest, FeatureSequence
from .fusion import MlpParams
from .model import DecoderInit, ModelParams
from .ops import Precision

SETTINGS = ("supervised", "weak")

# Table-3 row name -> (decoder init, auxiliary heads enabled)
INIT_MODES = {
    "fusion": (DecoderInit.FUSION, False),
    "visual_only": (DecoderInit.VISUAL_ONLY, False),
    "audio_only": (DecoderInit.AUDIO_ONLY, False),
    "label_guided": (DecoderInit.SUM, True),
}


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    setting: str = "supervised"
    init_mode: str = "fusion"
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0
    seed: int = 0
    hidden_size: int = 32
    precision: Precision = Precision.STANDARD
    patience: int | None = 20  # epochs without val improvement; None disables
    aux_weight: float = 1.0    # label_guided auxiliary loss weight

    def validate(self):
        if self.setting not in SETTINGS:
            raise ConfigError("setting must be one of %s, got %r"
                              % ("/".join(SETTINGS), self.setting))
        if self.init_mode not in INIT_MODES:
            raise ConfigError("init_mode must be one of %s, got %r"
                              % ("/".join(INIT_MODES), self.init_mode))
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1, got %d" % self.epochs)
        if self.lr <= 0.0:
            raise ConfigError("learning rate must be > 0, got %g" % self.lr)
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1, got %d" % self.batch_size)
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be >= 1, got %d" % self.hidden_size)
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 or None, got %d" % self.patience)
        if self.aux_weight < 0.0:
            raise ConfigError("aux_weight must be >= 0, got %g" % self.aux_weight)
        return self

    def adam(self) -> optim.AdamConfig:
        return optim.AdamConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                                eps=self.eps, clip_norm=self.clip_norm)


# ---------------------------------------------------------------------------
# label-guided auxiliary heads


@dataclass
class AuxHeads:
    """Per-modality video-level classifier heads, h -> h -> C+1."""

    audio: MlpParams
    visual: MlpParams

    def tensors(self):
        for name, arr in self.audio.tensors():
            yield "aux_audio." + name, arr
        for name, arr in self.visual.tensors():
            yield "aux_visual." + name, arr


def init_aux_heads(hidden_size: int, num_events: int, rng: np.random.Generator,
                   dtype=np.float64) -> AuxHeads:
    """Draw order: audio head, then visual head."""
    return AuxHeads(
        audio=fusion_mod.init_mlp_params(hidden_size, hidden_size,
                                         num_events + 1, rng, dtype),
        visual=fusion_mod.init_mlp_params(hidden_size, hidden_size,
                                          num_events + 1, rng, dtype),
    )


def aux_objective(heads: AuxHeads, trace: model_mod.PredictionTrace,
                  video_label: np.ndarray, weight: float):
    """Video-level BCE on each encoder's final hidden state.

    Returns (weighted loss, head grads, d(audio final h), d(visual final h)).
    """
    out_a, tr_a = fusion_mod.mlp_forward(heads.audio, trace.audio_state.h)
    out_v, tr_v = fusion_mod.mlp_forward(heads.visual, trace.visual_state.h)
    loss_a, dout_a = model_mod.bce_on_softmax(out_a, video_label)
    loss_v, dout_v = model_mod.bce_on_softmax(out_v, video_label)
    grads_a, dh_a = fusion_mod.mlp_backward(heads.audio, tr_a, weight * dout_a)
    grads_v, dh_v = fusion_mod.mlp_backward(heads.visual, tr_v, weight * dout_v)
    return weight * (loss_a + loss_v), AuxHeads(grads_a, grads_v), dh_a, dh_v


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class ClassStat:
    name: str
    total: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else float("nan")


@dataclass
class EvalReport:
    accuracy: float
    num_segments: int
    per_class: list

    def lines(self):
        yield "accuracy %.4f over %d segments" % (self.accuracy, self.num_segments)
        for stat in self.per_class:
            if stat.total:
                yield "  %-16s %4d/%-4d %.4f" % (stat.name, stat.correct,
                                                 stat.total, stat.accuracy)
            else:
                yield "  %-16s %4d/%-4d    -" % (stat.name, 0, 0)


def evaluate_params(params: ModelParams, sequences: list, class_names: list,
                    init_mode: DecoderInit = DecoderInit.FUSION) -> EvalReport:
    """Frame accuracy plus a per-class breakdown over the given videos."""
    if len(class_names) != params.num_events + 1:
        raise ValueError("expected %d class names, got %d"
                         % (params.num_events + 1, len(class_names)))
    predictions = []
    labels = []
    for seq in sequences:
        trace = model_mod.forward(params, seq.audio, seq.visual, init_mode)
        predictions.append(model_mod.predict_segments(trace))
        labels.append(seq.labels)
    predictions = np.concatenate(predictions) if predictions else np.zeros(0, np.int64)
    labels = np.concatenate(labels) if labels else np.zeros(0, np.int64)
    per_class = []
    for idx, name in enumerate(class_names):
        mask = labels == idx
        per_class.append(ClassStat(name=name, total=int(mask.sum()),
                                   correct=int((predictions[mask] == idx).sum())))
    accuracy = data_mod.frame_accuracy(predictions, labels) if labels.size else float("nan")
    return EvalReport(accuracy=accuracy, num_segments=int(labels.size),
                      per_class=per_class)


def evaluate(params: ModelParams, manifest: DatasetManifest, split: str,
             init_mode: DecoderInit = DecoderInit.FUSION) -> EvalReport:
    sequences = data_mod.load_split(manifest, split)
    if params.audio_dim != manifest.audio_dim or params.visual_dim != manifest.visual_dim:
        raise ValueError(
            "checkpoint dims (d_a=%d, d_v=%d) do not match manifest (d_a=%d, d_v=%d)"
            % (params.audio_dim, params.visual_dim,
               manifest.audio_dim, manifest.visual_dim))
    if params.num_events != manifest.num_events:
        raise ValueError("checkpoint has C=%d events, manifest has C=%d"
                         % (params.num_events, manifest.num_events))
    return evaluate_params(params, sequences, manifest.class_names(), init_mode)


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochLog:
    epoch: int
    loss: float
    val_accuracy: float

    def line(self) -> str:
        return "%d\t%.6f\t%.4f" % (self.epoch, self.loss, self.val_accuracy)


@dataclass
class TrainResult:
    params: ModelParams          # best-on-val parameters
    config: TrainConfig
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = float("nan")
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def _video_grads(params: ModelParams, seq: FeatureSequence, target,
                 setting: str, dec_init: DecoderInit,
                 aux: AuxHeads | None, aux_weight: float,
                 video_label: np.ndarray | None):
    """Loss and gradients for one video.  `target` is segment labels in the
    supervised setting and a video-level label vector in the weak setting."""
    trace = model_mod.forward(params, seq.audio, seq.visual, dec_init)
    if setting == "supervised":
        loss, dlogits = model_mod.supervised_objective(trace, target)
    else:
        loss, dlogits = model_mod.weak_objective(trace, target)
    if aux is None:
        grads, _ = model_mod.model_backward(trace, dlogits)
        return loss, grads, None
    aux_loss, aux_grads, dh_a, dh_v = aux_objective(aux, trace, video_label,
                                                    aux_weight)
    grads, _ = model_mod.model_backward(trace, dlogits,
                                        extra_dh_audio=dh_a,
                                        extra_dh_visual=dh_v)
    return loss + aux_loss, grads, aux_grads


def _accumulate(acc: dict, grads, scale: float | None = None):
    for name, arr in grads.tensors():
        if scale is None:
            acc[name] += arr
        else:
            acc[name] += scale * arr


def train(manifest: DatasetManifest, cfg: TrainConfig,
          log=None) -> TrainResult:
    """Train on the manifest's train split, validating per epoch.

    `log`, when given, receives one tab-separated line per epoch:
    epoch, mean train loss, val frame accuracy.
    """
    cfg.validate()
    dtype = cfg.precision.dtype
    train_seqs = data_mod.load_split(manifest, "train")
    val_seqs = data_mod.load_split(manifest, "val")
    if not train_seqs:
        raise ConfigError("train split is empty")

    dec_init, use_aux = INIT_MODES[cfg.init_mode]
    rng = np.random.default_rng(cfg.seed)
    params = model_mod.init_model_params(manifest.audio_dim, manifest.visual_dim,
                                         cfg.hidden_size, manifest.num_events,
                                         rng, dtype)
    aux = (init_aux_heads(cfg.hidden_size, manifest.num_events, rng, dtype)
           if use_aux else None)

    # The weak path sees only video-level labels, fixed before the loop.
    if cfg.setting == "weak":
        targets = [seq.video_label().astype(dtype) for seq in train_seqs]
        video_labels = targets
    else:
        targets = [seq.labels for seq in train_seqs]
        video_labels = ([seq.video_label().astype(dtype) for seq in train_seqs]
                        if use_aux else [None] * len(train_seqs))

    opt_params = dict(params.tensors())
    if aux is not None:
        opt_params.update(aux.tensors())
    opt_state = optim.AdamState.for_params(opt_params)
    adam_cfg = cfg.adam()
    zeros = {name: np.zeros_like(arr) for name, arr in opt_params.items()}

    result = TrainResult(params=params, config=cfg)
    best_params = None
    since_best = 0
    class_names = manifest.class_names()

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_seqs))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            acc = {name: arr.copy() for name, arr in zeros.items()}
            scale = 1.0 / len(batch)
            for idx in batch:
                seq = train_seqs[idx]
                loss, grads, aux_grads = _video_grads(
                    params, seq, targets[idx], cfg.setting, dec_init,
                    aux, cfg.aux_weight, video_labels[idx])
                epoch_loss += loss
                _accumulate(acc, grads, scale)
                if aux_grads is not None:
                    _accumulate(acc, aux_grads, scale)
            optim.adam_step(opt_params, acc, opt_state, adam_cfg)
        epoch_loss /= len(train_seqs)
        if not math.isfinite(epoch_loss):
            raise FloatingPointError("training loss went non-finite at epoch %d"
                                     % epoch)

        val_acc = (evaluate_params(params, val_seqs, class_names, dec_init).accuracy
                   if val_seqs else float("nan"))
        entry = EpochLog(epoch=epoch, loss=epoch_loss, val_accuracy=val_acc)
        result.history.append(entry)
        if log is not None:
            log(entry.line())

        improved = val_seqs and (best_params is None
                                 or val_acc > result.best_val_accuracy)
        if improved:
            result.best_val_accuracy = val_acc
            result.best_epoch = epoch
            best_params = model_mod.clone_model(params)
            since_best = 0
        else:
            since_best += 1
            if cfg.patience is not None and val_seqs and since_best >= cfg.patience:
                result.stopped_early = True
                break

    result.params = best_params if best_params is not None else params
    return result
