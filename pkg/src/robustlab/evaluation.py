"""Robustness-curve evaluation, embedding export, and the CSV formats.

Evaluation always uses the first ``eval_n`` examples in file order so two
runs with the same inputs produce byte-identical CSVs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, run_attack
from .dataio import Dataset
from .errors import DataFormatError, UsageError
from .nets import Pipeline

CURVE_FORMAT_LINE = "robustlab-curve v1"


def accuracy(model, images: np.ndarray, labels: np.ndarray) -> float:
    """Percent of examples predicted correctly."""
    return float(np.mean(model.predict(images) == labels) * 100.0)


@dataclass
class RobustnessCurve:
    eps: list[float]
    acc: list[float]                      # percent, aligned with eps
    attack: dict = field(default_factory=dict)
    model_id: str = ""
    eval_n: int = 0

    def __post_init__(self):
        if len(self.eps) != len(self.acc):
            raise UsageError("eps grid and accuracy list lengths differ")
        if any(b <= a for a, b in zip(self.eps, self.eps[1:])):
            raise UsageError(f"eps grid must be strictly increasing, got {self.eps}")
        if any(not (0.0 <= a <= 100.0) for a in self.acc):
            raise UsageError("accuracies must lie in [0, 100]")


def evaluate_curve(model, dataset: Dataset, family: str, eps_grid, eval_n: int,
                   attack: AttackConfig | None = None, model_id: str = "") -> RobustnessCurve:
    """Accuracy under attack at each eps on the first eval_n test examples.

    The eps=0 entry is the clean accuracy from a direct prediction pass.
    """
    if family not in ("fgsm", "pgd_linf"):
        raise UsageError(f"curves are defined for fgsm/pgd_linf, got {family!r}")
    if eval_n < 1 or eval_n > len(dataset):
        raise UsageError(f"eval_n={eval_n} outside [1, {len(dataset)}]")
    base = attack if attack is not None else AttackConfig(family=family)
    if base.family != family:
        base = replace(base, family=family)
    x = dataset.images[:eval_n]
    y = dataset.labels[:eval_n]
    eps_list = [float(e) for e in eps_grid]
    accs = []
    for eps in eps_list:
        if eps == 0.0:
            accs.append(accuracy(model, x, y))
            continue
        result = run_attack(model, x, y, replace(base, eps=eps))
        accs.append(float(np.mean(~result.success) * 100.0))
    snapshot = {
        "family": family,
        "steps": base.steps,
        "alpha": "eps/4" if base.alpha is None else base.alpha,
        "random_start": base.random_start,
    }
    return RobustnessCurve(eps_list, accs, snapshot, model_id=model_id, eval_n=eval_n)


def write_curve_csv(curve: RobustnessCurve, path) -> None:
    lines = [f"# {CURVE_FORMAT_LINE}"]
    lines.append(f"# model = {curve.model_id}")
    lines.append(f"# eval_n = {curve.eval_n}")
    for key in sorted(curve.attack):
        lines.append(f"# attack.{key} = {curve.attack[key]}")
    lines.append("epsilon,accuracy_pct")
    for eps, acc in zip(curve.eps, curve.acc):
        lines.append(f"{eps!r},{acc!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_curve_csv(path) -> RobustnessCurve:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != f"# {CURVE_FORMAT_LINE}":
        raise DataFormatError(f"{path}: not a robustness-curve CSV")
    meta: dict = {}
    attack: dict = {}
    rows = []
    header_seen = False
    for line in text[1:]:
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            key, value = key.strip(), value.strip()
            if key.startswith("attack."):
                attack[key[len("attack."):]] = value
            else:
                meta[key] = value
        elif not header_seen:
            if line != "epsilon,accuracy_pct":
                raise DataFormatError(f"{path}: unexpected header row {line!r}")
            header_seen = True
        elif line.strip():
            eps_s, _, acc_s = line.partition(",")
            rows.append((float(eps_s), float(acc_s)))
    return RobustnessCurve([r[0] for r in rows], [r[1] for r in rows], attack,
                           model_id=meta.get("model", ""), eval_n=int(meta.get("eval_n", 0)))


def export_embeddings(model, dataset: Dataset, out_path, attack: AttackConfig | None = None,
                      eval_n: int | None = None) -> int:
    """Write one CSV row per example: label, correctness flag, latent coords.

    With an attack config the flag reflects correctness after the attack and
    the coordinates embed the attacked images. Returns the row count.
    """
    if not isinstance(model, Pipeline):
        raise UsageError("embeddings need an encoder; the plain baseline has none")
    n = len(dataset) if eval_n is None else min(eval_n, len(dataset))
    x = dataset.images[:n]
    y = dataset.labels[:n]
    if attack is not None:
        x = run_attack(model, x, y, attack).x_adv
    codes = model.encode(x)
    correct = model.predict(x) == y
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["label", "correct"] + [f"z{i}" for i in range(model.latent_dim)])
        for i in range(n):
            writer.writerow([int(y[i]), int(correct[i])] + [repr(float(v)) for v in codes[i]])
    return n


def write_attack_csv(model, result, labels: np.ndarray, path) -> None:
    """Per-example attack outcome table."""
    pred = model.predict(result.x_adv)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "label", "prediction", "success", "linf", "l2"])
        for i in range(result.x_adv.shape[0]):
            writer.writerow([i, int(labels[i]), int(pred[i]), int(result.success[i]),
                             repr(float(result.linf[i])), repr(float(result.l2[i]))])


def write_train_log_csv(log: list[dict], path) -> None:
    from .training import LOG_COLUMNS
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(LOG_COLUMNS)
        for row in log:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])
