"""Training regimes.

``otc`` runs the three-step min-max update per batch: critic ascent on the
prior-vs-codes gap (then weight clipping), cross-entropy descent on encoder
+ classifier, and encoder ascent on the critic score of its own codes. The
steps run strictly in that order and each sees the parameter values the
previous step left behind.

``ecla`` is the same architecture with only the cross-entropy step;
``plain`` is the undefended single MLP; ``adv`` and ``otc_adv`` replace
each batch with PGD examples against the current model before updating.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .attacks import AttackConfig, pgd_linf
from .dataio import Dataset
from .errors import DivergenceError, NonFiniteError, UsageError
from .nets import Mlp, Pipeline, PlainClassifier, PriorSpec, build_pipeline, build_plain, sample_prior

REGIMES = ("plain", "ecla", "otc", "adv", "otc_adv")


@dataclass(frozen=True)
class TrainConfig:
    regime: str = "otc"
    lam: float = 1.0                 # weight of the latent regularizer
    clip_c: float = 0.01             # critic weight-clip constant
    epochs: int = 30
    batch_size: int = 128
    latent_dim: int = 4
    n_classes: int = 10
    enc_hidden: tuple[int, ...] = (256, 64)
    cla_hidden: tuple[int, ...] = (64,)
    disc_hidden: tuple[int, ...] = (64, 64)
    plain_hidden: tuple[int, ...] = (256, 64)
    cla_opt: T.AdamParams = T.AdamParams()
    disc_opt: T.AdamParams = T.AdamParams()
    enc_opt: T.AdamParams = T.AdamParams()
    attack: AttackConfig | None = None   # inner maximization for adv regimes
    seed: int = 0
    eval_train_n: int = 2048             # sample used for the per-epoch accuracy metric

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise UsageError(f"unknown regime {self.regime!r}")
        # lam = 0 is allowed as the degenerate limit in which the critic and
        # encoder-ascent updates are exactly zero-scaled and the (encoder,
        # classifier) trajectory coincides with the ecla regime bitwise
        if self.regime in ("otc", "otc_adv") and self.lam < 0:
            raise UsageError(f"regime {self.regime} needs lam >= 0, got {self.lam}")
        if not self.clip_c > 0:
            raise UsageError(f"clip_c must be positive, got {self.clip_c}")
        if self.batch_size < 2:
            raise UsageError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 0:
            raise UsageError(f"epochs must be >= 0, got {self.epochs}")
        if self.regime in ("adv", "otc_adv"):
            atk = self.attack if self.attack is not None else AttackConfig(family="pgd_linf", eps=0.3, random_start=True)
            if atk.family != "pgd_linf":
                raise UsageError("adversarial training expects a pgd_linf inner attack")
            object.__setattr__(self, "attack", atk)

    def uses_pipeline(self) -> bool:
        return self.regime in ("otc", "ecla", "otc_adv")


@dataclass
class TrainState:
    """Mutable companion of one training run."""

    model: Pipeline | PlainClassifier
    cfg: TrainConfig
    opt_cla: T.AdamState
    opt_disc: T.AdamState | None
    opt_enc: T.AdamState | None
    prior_rng: np.random.Generator
    attack_rng: np.random.Generator
    step: int = 0
    epoch: int = 0
    # per-epoch accumulators
    ce_sum: float = 0.0
    dobj_sum: float = 0.0
    n_steps_epoch: int = 0

    def reset_epoch_metrics(self):
        self.ce_sum = 0.0
        self.dobj_sum = 0.0
        self.n_steps_epoch = 0


def _check_objective(value: float, what: str, step: int) -> float:
    if not np.isfinite(value):
        raise DivergenceError(f"{what} became non-finite at step {step}", step=step)
    return value


def init_state(cfg: TrainConfig, input_dim: int) -> TrainState:
    """Build model and optimizer states from the master seed.

    Named substreams keep initialization, shuffling, prior draws and attack
    noise independent, so regimes that skip a stream still see identical
    draws on the streams they share.
    """
    streams = _streams(cfg.seed)
    if cfg.uses_pipeline():
        model = build_pipeline(streams["init"], input_dim, cfg.latent_dim, cfg.n_classes,
                               cfg.enc_hidden, cfg.cla_hidden, cfg.disc_hidden)
        model.prior = PriorSpec(cfg.latent_dim, streams["prior"])
        cla_params = model.encoder.params() + model.classifier.params()
        opt_cla = T.AdamState.for_params(cla_params, cfg.cla_opt)
        opt_disc = T.AdamState.for_params(model.discriminator.params(), cfg.disc_opt)
        opt_enc = T.AdamState.for_params(model.encoder.params(), cfg.enc_opt)
    else:
        model = build_plain(streams["init"], input_dim, cfg.n_classes, cfg.plain_hidden)
        opt_cla = T.AdamState.for_params(model.net.params(), cfg.cla_opt)
        opt_disc = None
        opt_enc = None
    return TrainState(model=model, cfg=cfg, opt_cla=opt_cla, opt_disc=opt_disc, opt_enc=opt_enc,
                      prior_rng=streams["prior"], attack_rng=streams["attack"])


def _streams(seed: int) -> dict[str, np.random.Generator]:
    root = np.random.SeedSequence(seed)
    names = ("init", "shuffle", "prior", "attack")
    children = root.spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


# ---------------------------------------------------------------------------
# single-batch updates
# ---------------------------------------------------------------------------

def ecla_step(state: TrainState, x: np.ndarray, y: np.ndarray) -> TrainState:
    """Cross-entropy descent on encoder + classifier (or the plain net)."""
    model = state.model
    tape = T.Tape()
    if isinstance(model, Pipeline):
        enc_bound = model.encoder.bind(tape)
        cla_bound = model.classifier.bind(tape)
        logits = model.logits_graph(T.constant(x), enc_bound, cla_bound)
        bound = enc_bound + cla_bound
        nets: list[Mlp] = [model.encoder, model.classifier]
    else:
        bound = model.net.bind(tape)
        logits = model.net.forward(T.constant(x), bound)
        nets = [model.net]
    loss = T.softmax_cross_entropy(logits, y)
    state.ce_sum += _check_objective(loss.item(), "cross-entropy", state.step)
    grads = T.backward(tape, loss)
    params = [p for net in nets for p in net.params()]
    new_params = T.adam_step(state.opt_cla, params, [grads[b] for b in bound], "descend")
    split = 2 * len(nets[0].weights)
    nets[0].set_params(new_params[:split])
    if len(nets) > 1:
        nets[1].set_params(new_params[split:])
    state.step += 1
    state.n_steps_epoch += 1
    return state


def otc_step(state: TrainState, x: np.ndarray, y: np.ndarray) -> TrainState:
    """One three-step min-max update, in the required order."""
    model = state.model
    if not isinstance(model, Pipeline):
        raise UsageError("otc_step needs a Pipeline model")
    cfg = state.cfg
    n = x.shape[0]

    # (1) critic ascent on (lam/n) * sum[D(z) - D(z_code)], then clip
    z_prior = sample_prior(model.prior, n)
    z_codes = model.encode(x)
    tape1 = T.Tape()
    disc_bound = model.discriminator.bind(tape1)
    d_real = model.discriminator.forward(T.constant(z_prior), disc_bound)
    d_fake = model.discriminator.forward(T.constant(z_codes), disc_bound)
    d_obj = T.scale(T.sub(T.mean_all(d_real), T.mean_all(d_fake)), cfg.lam)
    state.dobj_sum += _check_objective(d_obj.item(), "critic objective", state.step)
    grads1 = T.backward(tape1, d_obj)
    disc_params = T.adam_step(state.opt_disc, model.discriminator.params(),
                              [grads1[b] for b in disc_bound], "ascend")
    model.discriminator.set_params(T.clip_weights(disc_params, cfg.clip_c))

    # (2) cross-entropy descent on (encoder, classifier)
    tape2 = T.Tape()
    enc_bound = model.encoder.bind(tape2)
    cla_bound = model.classifier.bind(tape2)
    logits = model.logits_graph(T.constant(x), enc_bound, cla_bound)
    loss = T.softmax_cross_entropy(logits, y)
    state.ce_sum += _check_objective(loss.item(), "cross-entropy", state.step)
    grads2 = T.backward(tape2, loss)
    joint = model.encoder.params() + model.classifier.params()
    new_joint = T.adam_step(state.opt_cla, joint, [grads2[b] for b in enc_bound + cla_bound], "descend")
    split = 2 * len(model.encoder.weights)
    model.encoder.set_params(new_joint[:split])
    model.classifier.set_params(new_joint[split:])

    # (3) encoder ascent on (lam/n) * sum D(Q(x)), critic frozen at its new values
    tape3 = T.Tape()
    enc_bound3 = model.encoder.bind(tape3)
    codes = model.encoder.forward(T.constant(x), enc_bound3)
    enc_obj = T.scale(T.mean_all(model.discriminator.forward(codes)), cfg.lam)
    _check_objective(enc_obj.item(), "encoder objective", state.step)
    grads3 = T.backward(tape3, enc_obj)
    enc_params = T.adam_step(state.opt_enc, model.encoder.params(),
                             [grads3[b] for b in enc_bound3], "ascend")
    model.encoder.set_params(enc_params)

    state.step += 1
    state.n_steps_epoch += 1
    return state


def adv_step(state: TrainState, x: np.ndarray, y: np.ndarray, attack: AttackConfig) -> TrainState:
    """Inner maximization then the regime's parameter update on the adversarial batch."""
    if attack.family != "pgd_linf":
        raise UsageError("adversarial training expects a pgd_linf inner attack")
    step_seed = int(state.attack_rng.integers(0, 2**63 - 1))
    atk = replace(attack, seed=step_seed)
    try:
        x_adv = pgd_linf(state.model, x, y, atk).x_adv
    except NonFiniteError as exc:
        raise DivergenceError(f"inner attack diverged at step {state.step}: {exc}", step=state.step) from exc
    if state.cfg.regime == "otc_adv":
        return otc_step(state, x_adv, y)
    return ecla_step(state, x_adv, y)


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

LOG_COLUMNS = ("epoch", "clean_acc", "ce_loss", "d_obj", "wall_time_s")


def train(cfg: TrainConfig, dataset: Dataset) -> tuple[Pipeline | PlainClassifier, list[dict]]:
    """Run the configured regime for a fixed epoch budget.

    Returns the trained model and one metrics row per epoch. Trailing
    partial batches are dropped so every update sees exactly
    ``cfg.batch_size`` examples.
    """
    if dataset.images.shape[0] == 0:
        raise UsageError("dataset is empty")
    if dataset.labels.size and int(dataset.labels.max()) >= cfg.n_classes:
        raise UsageError(
            f"dataset has labels up to {int(dataset.labels.max())} but n_classes={cfg.n_classes}")
    state = init_state(cfg, dataset.images.shape[1])
    shuffle_rng = _streams(cfg.seed)["shuffle"]
    n = dataset.images.shape[0]
    steps_per_epoch = n // cfg.batch_size
    if cfg.epochs > 0 and steps_per_epoch == 0:
        raise UsageError(f"dataset of {n} examples is smaller than one batch ({cfg.batch_size})")
    log: list[dict] = []
    t0 = time.monotonic()
    eval_n = min(cfg.eval_train_n, n)
    for epoch in range(cfg.epochs):
        state.epoch = epoch
        state.reset_epoch_metrics()
        order = shuffle_rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            x, y = dataset.images[idx], dataset.labels[idx]
            try:
                if cfg.regime in ("adv", "otc_adv"):
                    adv_step(state, x, y, cfg.attack)
                elif cfg.regime == "otc":
                    otc_step(state, x, y)
                else:
                    ecla_step(state, x, y)
            except NonFiniteError as exc:
                raise DivergenceError(f"non-finite value at step {state.step}: {exc}", step=state.step) from exc
        pred = state.model.predict(dataset.images[:eval_n])
        acc = float(np.mean(pred == dataset.labels[:eval_n]) * 100.0)
        row = {
            "epoch": epoch,
            "clean_acc": acc,
            "ce_loss": state.ce_sum / max(state.n_steps_epoch, 1),
            "d_obj": state.dobj_sum / max(state.n_steps_epoch, 1),
            "wall_time_s": time.monotonic() - t0,
        }
        for key, value in row.items():
            if key != "epoch" and not np.isfinite(value):
                raise DivergenceError(f"metric {key} non-finite after epoch {epoch}", step=state.step)
        log.append(row)
    return state.model, log


def ecla_train(cfg: TrainConfig, dataset: Dataset) -> tuple[Pipeline, list[dict]]:
    """Encoder + classifier only; the critic stays at initialization."""
    if cfg.regime != "ecla":
        cfg = replace(cfg, regime="ecla")
    return train(cfg, dataset)
