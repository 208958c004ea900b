"""Built-in invariant checks, runnable from the CLI without any data files."""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from . import tensor as T
from .attacks import AttackConfig, fgsm, pgd_linf
from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import gen_blobs
from .idim import IdimConfig, gen_manifold, mle_idim
from .nets import PriorSpec, build_pipeline, sample_prior
from .training import TrainConfig, train


def _grad_check() -> bool:
    rng = np.random.default_rng(11)
    ok = True
    for _ in range(5):
        n_in, n_hidden = int(rng.integers(2, 5)), int(rng.integers(2, 6))
        w1 = rng.standard_normal((n_in, n_hidden))
        w2 = rng.standard_normal((n_hidden, 1))
        x = rng.standard_normal((3, n_in))

        def loss_of(w1v, w2v):
            tape = T.Tape()
            l1 = T.leaf(w1v, tape)
            l2 = T.leaf(w2v, tape)
            h = T.relu(T.matmul(T.constant(x), l1))
            return T.sum_all(T.mul(T.matmul(h, l2), T.matmul(h, l2))), tape, (l1, l2)

        loss, tape, leaves = loss_of(w1, w2)
        grads = T.backward(tape, loss)
        h = 1e-5
        for orig, leaf_t in ((w1, leaves[0]), (w2, leaves[1])):
            g = grads[leaf_t]
            flat = orig.ravel()
            for idx in range(0, flat.size, max(1, flat.size // 5)):
                saved = flat[idx]
                flat[idx] = saved + h
                up = loss_of(w1, w2)[0].item()
                flat[idx] = saved - h
                down = loss_of(w1, w2)[0].item()
                flat[idx] = saved
                fd = (up - down) / (2 * h)
                if abs(fd - g.ravel()[idx]) > 1e-4 * max(1.0, abs(fd)):
                    ok = False
    return ok


def _adam_first_step() -> bool:
    state = T.AdamState.for_params([np.array([1.0])], T.AdamParams(lr=1e-3))
    (p,) = T.adam_step(state, [np.array([1.0])], [np.array([1.0])], "descend")
    return abs((1.0 - p[0]) - 1e-3 / (1.0 + 1e-8)) < 1e-12


def _attack_invariants() -> bool:
    ds = gen_blobs(classes=3, n_per_class=60, dim=12, separation=8.0, seed=3)
    cfg = TrainConfig(regime="plain", epochs=5, batch_size=20, n_classes=3,
                      plain_hidden=(16,), seed=5)
    model, _ = train(cfg, ds)
    x, y = ds.images[:50], ds.labels[:50]
    eps = 0.1
    a = fgsm(model, x, y, eps)
    b = pgd_linf(model, x, y, AttackConfig(family="pgd_linf", eps=eps, alpha=eps, steps=1))
    if not np.array_equal(a.x_adv, b.x_adv):
        return False
    r = pgd_linf(model, x, y, AttackConfig(family="pgd_linf", eps=eps, steps=10))
    ball_ok = np.max(np.abs(r.x_adv - x)) <= eps + 1e-6
    range_ok = r.x_adv.min() >= 0.0 and r.x_adv.max() <= 1.0
    return bool(ball_ok and range_ok)


def _idim_fixture() -> bool:
    cloud = gen_manifold("segment", 1, 10, 1000, seed=42)
    est = mle_idim(cloud, IdimConfig())
    return 0.9 <= est <= 1.2


def _prior_moments() -> bool:
    z = sample_prior(PriorSpec(4, np.random.default_rng(0)), 20000)
    return bool(np.all(np.abs(z.mean(axis=0)) < 0.05) and np.all(np.abs(z.var(axis=0) - 1) < 0.05))


def _checkpoint_roundtrip() -> bool:
    model = build_pipeline(np.random.default_rng(9), input_dim=20, latent_dim=3, n_classes=4,
                           enc_hidden=(8,), cla_hidden=(8,), disc_hidden=(8,))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "m.ckpt"
        save_checkpoint(model, {"seed": 9}, path)
        loaded, snap = load_checkpoint(path)
    x = np.random.default_rng(1).uniform(0, 1, size=(6, 20))
    return bool(np.array_equal(model.logits(x), loaded.logits(x)) and snap["seed"] == "9")


CHECKS = (
    ("gradients-vs-finite-differences", _grad_check),
    ("adam-first-step", _adam_first_step),
    ("attack-ball-and-reduction", _attack_invariants),
    ("idim-segment-fixture", _idim_fixture),
    ("prior-moments", _prior_moments),
    ("checkpoint-roundtrip", _checkpoint_roundtrip),
)


def run_selftest() -> int:
    failures = 0
    for name, check in CHECKS:
        try:
            passed = check()
        except Exception as exc:  # a crash is a failure, keep going
            print(f"FAIL {name} ({type(exc).__name__}: {exc})")
            failures += 1
            continue
        print(f"{'PASS' if passed else 'FAIL'} {name}")
        failures += 0 if passed else 1
    return 0 if failures == 0 else 1
