"""Command-line interface.

Subcommands: train, attack, curve, idim, embed, selftest. Exit codes:
0 success, 1 usage, 2 data/format, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import tensor as T
from .attacks import AttackConfig, run_attack
from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import load_idx
from .errors import (DataFormatError, DivergenceError, InputError, NonFiniteError,
                     RobustlabError, ShapeError, UsageError)
from .evaluation import (accuracy, evaluate_curve, export_embeddings, write_attack_csv,
                         write_curve_csv, write_train_log_csv)
from .idim import IdimConfig, mle_idim, sample_cloud
from .runconfig import as_bool, as_int_tuple, parse_config_file, parse_eps_grid
from .training import REGIMES, TrainConfig, train


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so we control exit codes."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# keys accepted both in a config file and as CLI flags, with coercers
_TRAIN_KEYS = {
    "regime": str,
    "lambda": float,
    "clip": float,
    "epochs": int,
    "batch_size": int,
    "latent_dim": int,
    "n_classes": int,
    "enc_hidden": as_int_tuple,
    "cla_hidden": as_int_tuple,
    "disc_hidden": as_int_tuple,
    "plain_hidden": as_int_tuple,
    "adam_lr": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_eps": float,
    "attack_eps": float,
    "attack_alpha": float,
    "attack_steps": int,
    "attack_random_start": as_bool,
    "eval_train_n": int,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="robustlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint + log")
    p_train.add_argument("--regime", choices=REGIMES)
    p_train.add_argument("--config", help="key = value config file")
    p_train.add_argument("--train-images", required=True)
    p_train.add_argument("--train-labels", required=True)
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--log", help="training-log CSV path (default: <out>.log.csv)")
    p_train.add_argument("--seed", type=int, required=True)
    for key in _TRAIN_KEYS:
        if key == "regime":
            continue
        p_train.add_argument(f"--{key.replace('_', '-')}", dest=f"k_{key}")

    p_attack = sub.add_parser("attack", help="attack a checkpointed model, write per-example CSV")
    p_attack.add_argument("--ckpt", required=True)
    p_attack.add_argument("--images", required=True)
    p_attack.add_argument("--labels", required=True)
    p_attack.add_argument("--family", choices=("fgsm", "pgd_linf", "cw_l2"), default="pgd_linf")
    p_attack.add_argument("--eps", type=float, default=0.3)
    p_attack.add_argument("--alpha", type=float)
    p_attack.add_argument("--steps", type=int, default=40)
    p_attack.add_argument("--random-start", action="store_true")
    p_attack.add_argument("--kappa", type=float, default=0.0)
    p_attack.add_argument("--cw-c0", type=float, default=1e-2)
    p_attack.add_argument("--cw-steps", type=int, default=200)
    p_attack.add_argument("--cw-lr", type=float, default=1e-2)
    p_attack.add_argument("--cw-rounds", type=int, default=5)
    p_attack.add_argument("--n", type=int, default=1000)
    p_attack.add_argument("--out", required=True)
    p_attack.add_argument("--seed", type=int, required=True)

    p_curve = sub.add_parser("curve", help="accuracy vs eps curve, CSV plus figure")
    p_curve.add_argument("--ckpt", required=True)
    p_curve.add_argument("--images", required=True)
    p_curve.add_argument("--labels", required=True)
    p_curve.add_argument("--family", choices=("fgsm", "pgd_linf"), default="pgd_linf")
    p_curve.add_argument("--eps-grid", default="0:0.4:0.025")
    p_curve.add_argument("--eval-n", type=int, default=1000)
    p_curve.add_argument("--steps", type=int, default=40)
    p_curve.add_argument("--alpha", type=float)
    p_curve.add_argument("--out", required=True)
    p_curve.add_argument("--plot", help="figure path (default: <out> with .png)")
    p_curve.add_argument("--no-plot", action="store_true")

    p_idim = sub.add_parser("idim", help="maximum-likelihood intrinsic dimension")
    p_idim.add_argument("--input", help="CSV point cloud, one point per row")
    p_idim.add_argument("--images", help="IDX image file (paired with --labels)")
    p_idim.add_argument("--labels")
    p_idim.add_argument("--k1", type=int, default=6)
    p_idim.add_argument("--k2", type=int, default=12)
    p_idim.add_argument("--sample", type=int, default=1000)
    p_idim.add_argument("--seed", type=int, default=0)
    p_idim.add_argument("--mode", choices=("corrected_mean", "inverse"), default="corrected_mean")

    p_embed = sub.add_parser("embed", help="export latent embeddings to CSV")
    p_embed.add_argument("--ckpt", required=True)
    p_embed.add_argument("--images", required=True)
    p_embed.add_argument("--labels", required=True)
    p_embed.add_argument("--out", required=True)
    p_embed.add_argument("--n", type=int)
    p_embed.add_argument("--attack-eps", type=float, help="attack the inputs first")
    p_embed.add_argument("--attack-family", choices=("fgsm", "pgd_linf"), default="pgd_linf")
    p_embed.add_argument("--attack-steps", type=int, default=40)
    p_embed.add_argument("--attack-alpha", type=float)

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def _merged_train_config(args) -> TrainConfig:
    merged: dict[str, str] = {}
    if args.config:
        file_map = parse_config_file(args.config)
        unknown = set(file_map) - set(_TRAIN_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_map)
    for key in _TRAIN_KEYS:
        if key == "regime":
            continue
        flag_value = getattr(args, f"k_{key}")
        if flag_value is not None:
            merged[key] = flag_value
    if args.regime is not None:
        merged["regime"] = args.regime
    if "regime" not in merged:
        raise UsageError("no regime given (use --regime or a config file)")

    typed = {key: _TRAIN_KEYS[key](value) for key, value in merged.items()}
    opt = T.AdamParams(
        lr=typed.get("adam_lr", 1e-3),
        beta1=typed.get("adam_beta1", 0.5),
        beta2=typed.get("adam_beta2", 0.999),
        eps=typed.get("adam_eps", 1e-8),
    )
    attack = None
    if typed["regime"] in ("adv", "otc_adv"):
        attack = AttackConfig(
            family="pgd_linf",
            eps=typed.get("attack_eps", 0.3),
            alpha=typed.get("attack_alpha"),
            steps=typed.get("attack_steps", 40),
            random_start=typed.get("attack_random_start", True),
        )
    return TrainConfig(
        regime=typed["regime"],
        lam=typed.get("lambda", 1.0),
        clip_c=typed.get("clip", 0.01),
        epochs=typed.get("epochs", 30),
        batch_size=typed.get("batch_size", 128),
        latent_dim=typed.get("latent_dim", 4),
        n_classes=typed.get("n_classes", 10),
        enc_hidden=typed.get("enc_hidden", (256, 64)),
        cla_hidden=typed.get("cla_hidden", (64,)),
        disc_hidden=typed.get("disc_hidden", (64, 64)),
        plain_hidden=typed.get("plain_hidden", (256, 64)),
        cla_opt=opt, disc_opt=opt, enc_opt=opt,
        attack=attack,
        seed=args.seed,
        eval_train_n=typed.get("eval_train_n", 2048),
    )


def _snapshot(cfg: TrainConfig) -> dict:
    snap = {
        "regime": cfg.regime, "lambda": cfg.lam, "clip": cfg.clip_c,
        "epochs": cfg.epochs, "batch_size": cfg.batch_size,
        "latent_dim": cfg.latent_dim, "n_classes": cfg.n_classes,
        "seed": cfg.seed,
        "adam_lr": cfg.cla_opt.lr, "adam_beta1": cfg.cla_opt.beta1,
        "adam_beta2": cfg.cla_opt.beta2, "adam_eps": cfg.cla_opt.eps,
    }
    if cfg.attack is not None:
        snap["attack_eps"] = cfg.attack.eps
        snap["attack_alpha"] = "eps/4" if cfg.attack.alpha is None else cfg.attack.alpha
        snap["attack_steps"] = cfg.attack.steps
        snap["attack_random_start"] = cfg.attack.random_start
    return snap


def _cmd_train(args) -> int:
    cfg = _merged_train_config(args)
    dataset = load_idx(args.train_images, args.train_labels)
    model, log = train(cfg, dataset)
    save_checkpoint(model, _snapshot(cfg), args.out)
    log_path = args.log if args.log else f"{args.out}.log.csv"
    write_train_log_csv(log, log_path)
    final_acc = log[-1]["clean_acc"] if log else float("nan")
    print(f"trained regime={cfg.regime} epochs={cfg.epochs} final_train_acc={final_acc:.2f}%")
    print(f"checkpoint: {args.out}")
    print(f"log: {log_path}")
    return 0


def _cmd_attack(args) -> int:
    model, _ = load_checkpoint(args.ckpt)
    dataset = load_idx(args.images, args.labels)
    n = min(args.n, len(dataset))
    cfg = AttackConfig(
        family=args.family, eps=args.eps, alpha=args.alpha, steps=args.steps,
        random_start=args.random_start, seed=args.seed, kappa=args.kappa,
        cw_c0=args.cw_c0, cw_steps=args.cw_steps, cw_lr=args.cw_lr,
        cw_binary_rounds=args.cw_rounds,
    )
    x, y = dataset.images[:n], dataset.labels[:n]
    result = run_attack(model, x, y, cfg)
    write_attack_csv(model, result, y, args.out)
    rate = float(np.mean(result.success) * 100.0)
    print(f"attacked n={n} family={cfg.family} eps={cfg.eps} success_rate={rate:.1f}%")
    print(f"results: {args.out}")
    return 0


def _cmd_curve(args) -> int:
    model, _ = load_checkpoint(args.ckpt)
    dataset = load_idx(args.images, args.labels)
    grid = parse_eps_grid(args.eps_grid)
    eval_n = min(args.eval_n, len(dataset))
    attack = AttackConfig(family=args.family, eps=max(grid) if grid else 0.3,
                          alpha=args.alpha, steps=args.steps, random_start=False)
    curve = evaluate_curve(model, dataset, args.family, grid, eval_n,
                           attack=attack, model_id=Path(args.ckpt).name)
    write_curve_csv(curve, args.out)
    print(f"curve over {len(grid)} eps values on {eval_n} examples: {args.out}")
    if not args.no_plot:
        from .report import render_curve
        plot_path = args.plot if args.plot else str(Path(args.out).with_suffix(".png"))
        render_curve(curve, plot_path)
        print(f"figure: {plot_path}")
    return 0


def _load_cloud_csv(path) -> np.ndarray:
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [r for r in rows if r.strip() and not r.startswith("#")]
    if not rows:
        raise DataFormatError(f"{path}: empty point-cloud CSV")
    start = 0
    drop_cols = 0
    try:
        [float(tok) for tok in rows[0].split(",")]
    except ValueError:
        header = [tok.strip() for tok in rows[0].split(",")]
        start = 1
        # embeddings CSVs carry label/correct before the coordinates
        if header[:2] == ["label", "correct"]:
            drop_cols = 2
    try:
        data = np.array([[float(tok) for tok in row.split(",")] for row in rows[start:]])
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric cell in point cloud: {exc}") from exc
    return data[:, drop_cols:]


def _cmd_idim(args) -> int:
    if bool(args.input) == bool(args.images):
        raise UsageError("give exactly one of --input (CSV) or --images/--labels (IDX)")
    if args.images and not args.labels:
        raise UsageError("--images needs --labels")
    if args.input:
        points = _load_cloud_csv(args.input)
    else:
        points = load_idx(args.images, args.labels).images
    cfg = IdimConfig(k1=args.k1, k2=args.k2, sample=args.sample, seed=args.seed, average=args.mode)
    if points.shape[0] > cfg.sample:
        points = sample_cloud(points, cfg)
    estimate = mle_idim(points, cfg)
    print(estimate)
    return 0


def _cmd_embed(args) -> int:
    model, _ = load_checkpoint(args.ckpt)
    dataset = load_idx(args.images, args.labels)
    attack = None
    if args.attack_eps is not None:
        attack = AttackConfig(family=args.attack_family, eps=args.attack_eps,
                              alpha=args.attack_alpha, steps=args.attack_steps,
                              random_start=False)
    n = export_embeddings(model, dataset, args.out, attack=attack, eval_n=args.n)
    print(f"wrote {n} embedding rows: {args.out}")
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest
    return run_selftest()


_COMMANDS = {
    "train": _cmd_train,
    "attack": _cmd_attack,
    "curve": _cmd_curve,
    "idim": _cmd_idim,
    "embed": _cmd_embed,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, InputError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, NonFiniteError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except RobustlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
