"""End-to-end training: joint loss, SGD with momentum, the epoch loop,
comparison modes (plain baseline, standard mixup, manifold mixup), and
checkpointing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields

import numpy as np

from . import tensor as T
from .checkpoint import config_hash, read_arrays, write_arrays
from .data import NoisyDataset, one_hot
from .errors import ConfigError, NumericError
from .grouping import (AttentionOutput, GAParams, INTERACTIONS,
                       PROJECTION_MODES, attend, sample_groups)
from .mixing import InterpolationBatch, interpolate
from .model import Model
from .tensor import Tensor, backward

MODES = ("afm", "baseline", "standard-mixup", "manifold-mixup")
METRIC_COLUMNS = ("epoch", "train_loss", "test_acc",
                  "mean_attn_clean", "mean_attn_noisy", "lr")


@dataclass
class TrainConfig:
    lam: float = 0.75
    k: int = 2
    m: int | None = None            # groups per batch; None -> batch size
    interaction: str = "sum"
    projections: str = "distinct"
    shared_classifiers: bool = True
    hidden: tuple[int, ...] = (64, 32)
    batch_size: int = 128
    epochs: int = 40
    lr: float = 0.02
    lr_decay: float = 0.1
    lr_decay_every: int = 30
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    mode: str = "afm"
    beta_param: float = 1.0         # Beta(b, b) draw for the mixup baselines
    ratio_policy: str = "random"
    intra_ratio: float | None = None
    data_fraction: float = 1.0
    mixup_epsilon: float = 1e-12
    ga_lr_scale: float = 1.0        # lr multiplier for the attention net
    ga_weight_decay: float = 0.05   # separate decay for the attention net

    def validate(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")
        if self.k < 2:
            raise ConfigError(f"group size must be >= 2, got {self.k}")
        if self.batch_size < self.k:
            raise ConfigError("batch size must be >= group size")
        if self.interaction not in INTERACTIONS:
            raise ConfigError(f"interaction must be one of {INTERACTIONS}")
        if self.projections not in PROJECTION_MODES:
            raise ConfigError(f"projections must be one of {PROJECTION_MODES}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.beta_param <= 0:
            raise ConfigError("beta_param must be positive")
        if not 0.0 < self.data_fraction <= 1.0:
            raise ConfigError("data_fraction must be in (0, 1]")
        if self.m is not None and self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.ga_lr_scale <= 0:
            raise ConfigError("ga_lr_scale must be positive")
        if self.ga_weight_decay < 0:
            raise ConfigError("ga_weight_decay must be nonnegative")
        return self

    def canonical_text(self) -> str:
        return "\n".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))


@dataclass
class MetricsLog:
    rows: list[dict] = field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(METRIC_COLUMNS)
            for row in self.rows:
                writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])

    def final(self, column):
        return self.rows[-1][column]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class SGD:
    """v <- momentum*v + grad + wd*param; param <- param - lr*v.

    ``lr_scales`` maps parameter names to per-parameter learning-rate
    multipliers; ``decay_overrides`` maps names to per-parameter weight
    decay. Both are used to give the attention net its own regime.
    """

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0, lr_scales=None,
                 decay_overrides=None):
        self.params = list(params)  # [(name, Tensor)]
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.lr_scales = dict(lr_scales or {})
        self.decay_overrides = dict(decay_overrides or {})
        self.velocity = {name: np.zeros_like(p.values) for name, p in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self):
        seen = set()
        for name, p in self.params:
            if id(p) in seen:  # shared classifiers appear once
                continue
            seen.add(id(p))
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            v = self.velocity[name]
            v *= self.momentum
            wd = self.decay_overrides.get(name, self.weight_decay)
            v += g + wd * p.values
            p.values = p.values - self.lr * self.lr_scales.get(name, 1.0) * v


@dataclass
class TrainState:
    epoch: int
    step: int
    model: Model
    ga: GAParams | None
    optimizer: SGD
    config: TrainConfig


def soft_cross_entropy(probs: Tensor, targets) -> Tensor:
    """Mean over rows of -sum_c target_c * log(prob_c); natural log."""
    rows = probs.values.shape[0]
    if rows == 0:
        raise ConfigError("cross-entropy over empty batch")
    t = targets if isinstance(targets, Tensor) else T.constant(targets)
    return T.smul(T.sum_reduce(T.mul(t, T.log(probs))), -1.0 / rows)


def compute_loss(model: Model, batch_features: Tensor, batch_labels_onehot,
                 interpolations: InterpolationBatch | None,
                 config: TrainConfig) -> Tensor:
    """lambda * L_afm + (1 - lambda) * L_org."""
    if batch_features.values.shape[0] == 0:
        raise ConfigError("empty batch")
    feats = model.extract_features(batch_features)
    probs_org = model.classify(feats, head=2)
    loss_org = soft_cross_entropy(probs_org, batch_labels_onehot)
    if config.lam == 0.0 and interpolations is None:
        return loss_org
    if interpolations is None or len(interpolations) == 0:
        raise ConfigError("interpolations required when lambda > 0")
    probs_mix = model.classify(interpolations.features, head=1)
    loss_afm = soft_cross_entropy(probs_mix, interpolations.soft_labels)
    return T.add(T.smul(loss_afm, config.lam), T.smul(loss_org, 1.0 - config.lam))


def _beta_pairs(feats: Tensor, labels_onehot, groups, weights) -> InterpolationBatch:
    """Pairwise interpolation with fixed (w, 1-w) weights, used by the
    mixup comparison modes."""
    m = len(groups)
    raw = np.column_stack([weights, 1.0 - weights])
    att = AttentionOutput(weights=T.constant(raw), groups=groups)
    return interpolate(feats, labels_onehot, att, epsilon=0.0)


def _attention_stats(interp: InterpolationBatch, batch_idx, noise_mask):
    """Mean normalized attention on clean vs noisy members, over groups
    that mix at least one clean and one noisy sample. Uses hidden clean
    labels for evaluation only."""
    clean_sum = noisy_sum = 0.0
    clean_n = noisy_n = 0
    w = interp.weights.values
    for gi, g in enumerate(interp.groups):
        noisy = [noise_mask[batch_idx[i]] for i in g.members]
        if not (any(noisy) and not all(noisy)):
            continue
        for pos, is_noisy in enumerate(noisy):
            if is_noisy:
                noisy_sum += w[gi, pos]
                noisy_n += 1
            else:
                clean_sum += w[gi, pos]
                clean_n += 1
    return clean_sum, clean_n, noisy_sum, noisy_n


def train(dataset: NoisyDataset, config: TrainConfig) -> tuple[TrainState, MetricsLog]:
    """Run the configured training mode; fully reproducible from the seed.

    Three independent rng streams (init, data order, grouping) keep the
    data-order randomness identical across modes.
    """
    config.validate()
    init_rng = np.random.default_rng([config.seed, 0])
    data_rng = np.random.default_rng([config.seed, 1])
    group_rng = np.random.default_rng([config.seed, 2])

    d0 = dataset.input_dim
    c = dataset.n_classes
    model = Model([d0, *config.hidden], c, config.shared_classifiers, init_rng)
    ga = None
    if config.mode == "afm":
        ga = GAParams(model.backbone.feature_dim, config.k, config.interaction,
                      config.projections, init_rng)

    ga_params = ga.parameters() if ga else []
    params = model.parameters() + ga_params
    # the attention net gets its own (stronger) decay: cross-entropy is
    # concave near the sigmoid endpoints, so lightly-decayed gates saturate
    # within an epoch along whatever direction the init happened to point;
    # the decay holds them responsive near 0.5 unless a real signal pushes
    opt = SGD(params, config.lr, config.momentum, config.weight_decay,
              lr_scales={name: config.ga_lr_scale for name, _ in ga_params},
              decay_overrides={name: config.ga_weight_decay for name, _ in ga_params})
    state = TrainState(epoch=0, step=0, model=model, ga=ga, optimizer=opt,
                       config=config)

    train_idx = dataset.train_idx.copy()
    if config.data_fraction < 1.0:
        keep = max(config.batch_size, int(round(config.data_fraction * len(train_idx))))
        keep = min(keep, len(train_idx))
        train_idx = train_idx[data_rng.permutation(len(train_idx))[:keep]]

    test_x = dataset.features[dataset.test_idx]
    test_y = dataset.clean_labels[dataset.test_idx]
    log = MetricsLog()

    for epoch in range(config.epochs):
        lr_e = config.lr * config.lr_decay ** (epoch // config.lr_decay_every)
        opt.lr = lr_e
        order = train_idx[data_rng.permutation(len(train_idx))]
        losses = []
        cs, cn, ns, nn = 0.0, 0, 0.0, 0
        for start in range(0, len(order) - config.k + 1, config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            if len(batch_idx) < config.k:
                break
            nb = len(batch_idx)
            x = T.constant(dataset.features[batch_idx])
            y = one_hot(dataset.given_labels[batch_idx], c)
            m = config.m if config.m is not None else nb

            interp = None
            if config.mode == "afm":
                feats = model.extract_features(x)
                groups = sample_groups(dataset.given_labels[batch_idx], m,
                                       config.k, config.ratio_policy,
                                       config.intra_ratio, group_rng)
                att = attend(feats, groups, ga)
                interp = interpolate(feats, y, att, config.mixup_epsilon)
                dcs, dcn, dns, dnn = _attention_stats(interp, batch_idx,
                                                      dataset.noise_mask)
                cs, cn, ns, nn = cs + dcs, cn + dcn, ns + dns, nn + dnn
            elif config.mode in ("standard-mixup", "manifold-mixup"):
                groups = sample_groups(dataset.given_labels[batch_idx], m, 2,
                                       "random", None, group_rng)
                w = group_rng.beta(config.beta_param, config.beta_param, size=m)
                if config.mode == "manifold-mixup":
                    feats = model.extract_features(x)
                    interp = _beta_pairs(feats, y, groups, w)
                else:
                    mixed = _beta_pairs(x, y, groups, w)
                    mixed_feats = model.extract_features(mixed.features)
                    interp = InterpolationBatch(features=mixed_feats,
                                                soft_labels=mixed.soft_labels,
                                                weights=mixed.weights,
                                                groups=groups)

            loss = compute_loss(model, x, y, interp, config)
            opt.zero_grad()
            backward(loss)
            opt.step()
            state.step += 1
            losses.append(float(loss.values))

        preds = model.inference_predict(test_x)
        log.append(
            epoch=epoch,
            train_loss=float(np.mean(losses)) if losses else float("nan"),
            test_acc=float(np.mean(preds == test_y)),
            mean_attn_clean=cs / cn if cn else float("nan"),
            mean_attn_noisy=ns / nn if nn else float("nan"),
            lr=lr_e,
        )
        state.epoch = epoch + 1
    return state, log


def run_comparison_mode(dataset: NoisyDataset, config: TrainConfig):
    if config.mode not in ("standard-mixup", "manifold-mixup"):
        raise ConfigError("run_comparison_mode needs a mixup comparison mode")
    return train(dataset, config)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_state(path, state: TrainState):
    arrays = {name: p.values for name, p in
              state.model.parameters() + (state.ga.parameters() if state.ga else [])}
    meta = {
        "__meta__/widths": np.asarray(state.model.backbone.widths, dtype=np.float64),
        "__meta__/n_classes": np.asarray(float(state.model.classifiers.n_classes)),
        "__meta__/shared": np.asarray(float(state.model.classifiers.shared)),
    }
    if state.ga is not None:
        meta["__meta__/k"] = np.asarray(float(state.ga.k))
        meta["__meta__/interaction"] = np.asarray(
            float(INTERACTIONS.index(state.ga.interaction)))
        meta["__meta__/projections"] = np.asarray(
            float(PROJECTION_MODES.index(state.ga.projections)))
    write_arrays(path, {**meta, **arrays},
                 config_hash(state.config.canonical_text()))


def load_state(path) -> tuple[Model, GAParams | None]:
    arrays, _ = read_arrays(path)

    def scalar(name):
        return arrays[name].reshape(-1)[0]

    try:
        widths = [int(v) for v in arrays["__meta__/widths"]]
        n_classes = int(scalar("__meta__/n_classes"))
        shared = bool(scalar("__meta__/shared"))
    except KeyError as exc:
        raise ConfigError(f"{path}: missing checkpoint metadata {exc}") from exc
    model = Model(widths, n_classes, shared)
    ga = None
    if "__meta__/k" in arrays:
        ga = GAParams(model.backbone.feature_dim, int(scalar("__meta__/k")),
                      INTERACTIONS[int(scalar("__meta__/interaction"))],
                      PROJECTION_MODES[int(scalar("__meta__/projections"))])
    for name, p in model.parameters() + (ga.parameters() if ga else []):
        if name not in arrays:
            raise ConfigError(f"{path}: missing parameter {name!r}")
        if arrays[name].shape != p.values.shape:
            raise ConfigError(f"{path}: shape mismatch for {name!r}")
        p.values = arrays[name].copy()
    return model, ga
