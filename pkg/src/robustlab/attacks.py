"""White-box attacks and distortion metrics.

All attacks are untargeted, operate in the normalized [0, 1] pixel space,
and drive the same cross-entropy loss the models train with. The model
argument is anything exposing ``logits_graph`` / ``predict`` (Pipeline or
PlainClassifier); parameters stay frozen, gradients flow to the input only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .errors import ShapeError, UsageError

FAMILIES = ("fgsm", "pgd_linf", "cw_l2")


@dataclass(frozen=True)
class AttackConfig:
    family: str = "pgd_linf"
    eps: float = 0.3
    alpha: float | None = None      # step size; defaults to eps/4
    steps: int = 40
    random_start: bool = False
    seed: int | None = None         # random-start streams derive from (seed, example index)
    kappa: float = 0.0
    cw_c0: float = 1e-2
    cw_steps: int = 200
    cw_lr: float = 1e-2
    cw_binary_rounds: int = 5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown attack family {self.family!r}")
        if self.eps < 0:
            raise UsageError(f"eps must be >= 0, got {self.eps}")
        if self.steps < 1:
            raise UsageError(f"steps must be >= 1, got {self.steps}")
        if self.alpha is not None and not self.alpha > 0:
            raise UsageError(f"alpha must be positive, got {self.alpha}")
        if not self.cw_c0 > 0:
            raise UsageError(f"cw penalty weight must be positive, got {self.cw_c0}")
        if self.cw_steps < 1 or self.cw_binary_rounds < 1:
            raise UsageError("cw step and round counts must be >= 1")

    @property
    def step_size(self) -> float:
        return self.eps / 4.0 if self.alpha is None else self.alpha


@dataclass
class AttackResult:
    """Adversarial batch plus per-example bookkeeping."""

    x_adv: np.ndarray
    success: np.ndarray     # prediction != y_o, verified by a fresh forward pass
    linf: np.ndarray
    l2: np.ndarray


# ---------------------------------------------------------------------------
# distortion metrics
# ---------------------------------------------------------------------------

def linf_distortion(x_adv: np.ndarray, x_o: np.ndarray) -> float:
    """Largest absolute per-pixel change across everything passed in."""
    a, b = np.asarray(x_adv, dtype=float), np.asarray(x_o, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def l2_distortion(x_adv: np.ndarray, x_o: np.ndarray) -> float:
    """Per-pixel root-mean-square change: sqrt(sum(diff^2) / total pixels)."""
    a, b = np.asarray(x_adv, dtype=float), np.asarray(x_o, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2) / a.size)) if a.size else 0.0


def _per_example_linf(x_adv: np.ndarray, x_o: np.ndarray) -> np.ndarray:
    return np.max(np.abs(x_adv - x_o), axis=1)


def _per_example_l2(x_adv: np.ndarray, x_o: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((x_adv - x_o) ** 2, axis=1) / x_adv.shape[1])


# ---------------------------------------------------------------------------
# gradient plumbing
# ---------------------------------------------------------------------------

def loss_input_grad(model, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy loss and its gradient with respect to the input batch."""
    tape = T.Tape()
    x_leaf = T.leaf(x, tape, requires_grad=True)
    loss = T.softmax_cross_entropy(model.logits_graph(x_leaf), y)
    grads = T.backward(tape, loss)
    return loss.item(), grads[x_leaf]


def _result(model, x_adv: np.ndarray, x_o: np.ndarray, y: np.ndarray) -> AttackResult:
    pred = model.predict(x_adv)
    return AttackResult(
        x_adv=x_adv,
        success=pred != np.asarray(y),
        linf=_per_example_linf(x_adv, x_o),
        l2=_per_example_l2(x_adv, x_o),
    )


def _random_start(x_o: np.ndarray, eps: float, seed: int | None, index_offset: int) -> np.ndarray:
    """Uniform point in the eps-ball; one RNG stream per example index so the
    result does not depend on how a batch was partitioned."""
    noise = np.empty_like(x_o)
    base = 0 if seed is None else int(seed)
    for i in range(x_o.shape[0]):
        rng = np.random.default_rng(np.random.SeedSequence((base, index_offset + i)))
        noise[i] = rng.uniform(-eps, eps, size=x_o.shape[1])
    return np.clip(np.clip(x_o + noise, x_o - eps, x_o + eps), 0.0, 1.0)


# ---------------------------------------------------------------------------
# attacks
# ---------------------------------------------------------------------------

def fgsm(model, x_o: np.ndarray, y: np.ndarray, eps: float) -> AttackResult:
    """Single signed-gradient step of size eps, clamped to the ball and [0, 1]."""
    if eps < 0:
        raise UsageError(f"eps must be >= 0, got {eps}")
    x_o = np.asarray(x_o, dtype=T.DTYPE)
    _, g = loss_input_grad(model, x_o, y)
    x_adv = x_o + eps * np.sign(g)
    x_adv = np.clip(x_adv, x_o - eps, x_o + eps)
    x_adv = np.clip(x_adv, 0.0, 1.0)
    return _result(model, x_adv, x_o, y)


def pgd_linf(model, x_o: np.ndarray, y: np.ndarray, cfg: AttackConfig, index_offset: int = 0) -> AttackResult:
    """cfg.steps iterations of signed-gradient ascent, each projected to the
    eps-ball around x_o and clamped to [0, 1].

    ``index_offset`` is the absolute index of the first example, used only to
    derive per-example random-start streams.
    """
    if cfg.family not in ("pgd_linf", "fgsm"):
        raise UsageError(f"pgd_linf called with family {cfg.family!r}")
    x_o = np.asarray(x_o, dtype=T.DTYPE)
    eps, alpha = cfg.eps, cfg.step_size
    if cfg.random_start and eps > 0:
        x = _random_start(x_o, eps, cfg.seed, index_offset)
    else:
        x = x_o.copy()
    for _ in range(cfg.steps):
        _, g = loss_input_grad(model, x, y)
        x = x + alpha * np.sign(g)
        x = np.clip(x, x_o - eps, x_o + eps)
        x = np.clip(x, 0.0, 1.0)
    return _result(model, x, x_o, y)


def cw_l2(model, x_o: np.ndarray, y: np.ndarray, cfg: AttackConfig) -> AttackResult:
    """Untargeted Carlini-Wagner attack in the tanh change of variables.

    Minimizes ||delta||_2^2 + c * max(Z_y - max_{j != y} Z_j + kappa, 0) with
    Adam, binary-searching c per example; keeps the lowest-distance success
    seen anywhere. Examples the model already misclassifies are returned
    untouched (zero-cost solution).
    """
    if cfg.family != "cw_l2":
        raise UsageError(f"cw_l2 called with family {cfg.family!r}")
    x_o = np.asarray(x_o, dtype=T.DTYPE)
    y = np.asarray(y, dtype=np.int64)
    n, d = x_o.shape
    m = model.n_classes

    best = x_o.copy()
    best_sq = np.where(model.predict(x_o) != y, 0.0, np.inf)   # squared l2 sums

    # arctanh needs the open interval
    x_nudged = np.clip(x_o, 1e-6, 1.0 - 1e-6)
    w0 = np.arctanh(2.0 * x_nudged - 1.0)

    # -BIG knocks the true class out of the "other" max
    big = 1e9
    mask = np.zeros((n, m))
    mask[np.arange(n), y] = -big

    lower = np.zeros(n)
    upper = np.full(n, 1e10)
    c = np.full(n, cfg.cw_c0)

    for _ in range(cfg.cw_binary_rounds):
        w = w0.copy()
        opt = T.AdamState.for_params([w], T.AdamParams(lr=cfg.cw_lr, beta1=0.9, beta2=0.999))
        round_success = np.zeros(n, dtype=bool)
        c_col = c[:, None]
        for _ in range(cfg.cw_steps):
            tape = T.Tape()
            w_leaf = T.leaf(w, tape, requires_grad=True)
            x_t = T.scale(T.add(T.tanh(w_leaf), 1.0), 0.5)
            delta = T.sub(x_t, T.constant(x_o))
            sq = T.row_sum(T.mul(delta, delta))                       # (n, 1)
            logits = model.logits_graph(x_t)
            z_true = T.take_per_row(logits, y)                        # (n, 1)
            z_other = T.row_max(T.add(logits, T.constant(mask)))      # (n, 1)
            hinge = T.relu(T.add(T.sub(z_true, z_other), cfg.kappa))  # (n, 1)
            obj = T.sum_all(T.add(sq, T.mul(hinge, T.constant(c_col))))
            grads = T.backward(tape, obj)
            (w,) = T.adam_step(opt, [w], [grads[w_leaf]], "descend")

            # bookkeeping on already-computed forward values
            pred = np.argmax(logits.data, axis=1)
            hit = (pred != y) & (logits.data[np.arange(n), y] - z_other.data[:, 0] + cfg.kappa <= 0)
            round_success |= hit
            sq_now = sq.data[:, 0]
            better = hit & (sq_now < best_sq)
            if np.any(better):
                best[better] = x_t.data[better]
                best_sq[better] = sq_now[better]

        # binary search on c: shrink on success, grow (or bisect) on failure
        succ = round_success
        upper[succ] = np.minimum(upper[succ], c[succ])
        lower[~succ] = np.maximum(lower[~succ], c[~succ])
        bisect = upper < 1e9
        c = np.where(bisect, (lower + upper) / 2.0, np.where(succ, c, c * 10.0))

    return _result(model, best, x_o, y)


def run_attack(model, x_o: np.ndarray, y: np.ndarray, cfg: AttackConfig, index_offset: int = 0) -> AttackResult:
    """Dispatch on cfg.family."""
    if cfg.family == "fgsm":
        return fgsm(model, x_o, y, cfg.eps)
    if cfg.family == "pgd_linf":
        return pgd_linf(model, x_o, y, cfg, index_offset)
    return cw_l2(model, x_o, y, cfg)


def with_eps(cfg: AttackConfig, eps: float) -> AttackConfig:
    """Same attack at a different budget (alpha rescales when it was derived)."""
    return replace(cfg, eps=eps)
