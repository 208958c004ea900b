"""Versioned model checkpoints.

Layout: a UTF-8 text header (format line, hyperparameters, config snapshot,
tensor manifest, payload length), one blank line, then the raw parameter
payload as little-endian float64 in manifest order. Round-trips are bitwise
on parameters and therefore on predictions.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .nets import Mlp, MlpSpec, Pipeline, PlainClassifier

FORMAT_LINE = "RLAB-CKPT v1"


def _widths_str(spec: MlpSpec) -> str:
    return ",".join(str(w) for w in spec.widths)


def _manifest_for(name: str, mlp: Mlp) -> list[tuple[str, tuple[int, ...]]]:
    entries = []
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        entries.append((f"{name}.w{i}", w.shape))
        entries.append((f"{name}.b{i}", b.shape))
    return entries


def _model_nets(model) -> dict[str, Mlp]:
    return model.param_groups()


def save_checkpoint(model, snapshot: dict, path) -> None:
    """Write ``model`` plus a config snapshot to ``path``."""
    nets = _model_nets(model)
    lines = [FORMAT_LINE, f"kind = {model.kind}"]
    for name, mlp in nets.items():
        lines.append(f"{name}_widths = {_widths_str(mlp.spec)}")
        lines.append(f"{name}_activation = {mlp.spec.hidden_activation}")
        lines.append(f"{name}_leaky_slope = {mlp.spec.leaky_slope!r}")
    if model.kind == "pipeline":
        lines.append(f"latent_dim = {model.latent_dim}")
        lines.append(f"n_classes = {model.n_classes}")
    else:
        lines.append(f"n_classes = {model.n_classes}")
    for key in sorted(snapshot):
        value = str(snapshot[key])
        if "\n" in value or "\n" in key:
            raise DataFormatError(f"config snapshot entry {key!r} contains a newline")
        lines.append(f"cfg.{key} = {value}")
    manifest = []
    for name, mlp in nets.items():
        manifest.extend(_manifest_for(name, mlp))
    for tensor_name, shape in manifest:
        lines.append(f"tensor = {tensor_name} {'x'.join(str(s) for s in shape)}")
    payload = np.concatenate([p.ravel() for mlp in nets.values() for p in mlp.params()])
    lines.append(f"payload_floats = {payload.size}")
    blob = ("\n".join(lines) + "\n\n").encode("utf-8") + payload.astype("<f8").tobytes()
    Path(path).write_bytes(blob)


def _parse_header(text: str, path: str) -> dict:
    fields = {}
    lines = text.split("\n")
    if not lines or lines[0] != FORMAT_LINE:
        raise DataFormatError(f"{path}: unsupported checkpoint format line {lines[0]!r} (expected {FORMAT_LINE!r})")
    tensors = []
    for line in lines[1:]:
        if not line.strip():
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}: malformed header line {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "tensor":
            name, _, dims = value.partition(" ")
            tensors.append((name, tuple(int(d) for d in dims.split("x"))))
        else:
            fields[key] = value
    fields["__tensors__"] = tensors
    return fields


def _expected_manifest(kind: str, fields: dict, path: str) -> tuple[dict[str, MlpSpec], list[tuple[str, tuple[int, ...]]]]:
    names = ("encoder", "classifier", "discriminator") if kind == "pipeline" else ("net",)
    specs = {}
    manifest = []
    for name in names:
        try:
            widths = tuple(int(w) for w in fields[f"{name}_widths"].split(","))
            spec = MlpSpec(widths, fields[f"{name}_activation"], float(fields[f"{name}_leaky_slope"]))
        except KeyError as exc:
            raise DataFormatError(f"{path}: missing header field {exc}") from exc
        specs[name] = spec
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            manifest.append((f"{name}.w{i}", (fan_in, fan_out)))
            manifest.append((f"{name}.b{i}", (fan_out,)))
    if kind == "pipeline":
        k = int(fields.get("latent_dim", -1))
        if not (specs["encoder"].out_width == specs["classifier"].in_width
                == specs["discriminator"].in_width == k):
            raise DataFormatError(
                f"{path}: manifest mismatch, latent_dim={k} disagrees with widths "
                f"(encoder out {specs['encoder'].out_width}, classifier in {specs['classifier'].in_width}, "
                f"discriminator in {specs['discriminator'].in_width})")
        if specs["classifier"].out_width != int(fields.get("n_classes", -1)):
            raise DataFormatError(f"{path}: manifest mismatch, n_classes disagrees with classifier widths")
    return specs, manifest


def load_checkpoint(path):
    """Read a checkpoint; returns (model, config snapshot dict)."""
    path = str(path)
    blob = Path(path).read_bytes()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise DataFormatError(f"{path}: missing header/payload separator")
    fields = _parse_header(blob[:sep].decode("utf-8"), path)
    kind = fields.get("kind")
    if kind not in ("pipeline", "plain"):
        raise DataFormatError(f"{path}: unknown model kind {kind!r}")
    specs, expected = _expected_manifest(kind, fields, path)
    if fields["__tensors__"] != expected:
        raise DataFormatError(f"{path}: manifest mismatch between header widths and tensor list")
    declared = int(fields.get("payload_floats", -1))
    want = sum(int(np.prod(shape)) for _, shape in expected)
    if declared != want:
        raise DataFormatError(f"{path}: payload_floats={declared} but manifest wants {want}")
    payload = blob[sep + 2:]
    if len(payload) != 8 * want:
        raise DataFormatError(
            f"{path}: payload length mismatch, wanted {8 * want} bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    nets = {}
    offset = 0
    for name in specs:
        spec = specs[name]
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
            weights.append(flat[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out).copy())
            offset += fan_in * fan_out
            biases.append(flat[offset:offset + fan_out].copy())
            offset += fan_out
        nets[name] = Mlp(spec, weights, biases)
    snapshot = {k[len("cfg."):]: v for k, v in fields.items() if k.startswith("cfg.")}
    if kind == "pipeline":
        model = Pipeline(nets["encoder"], nets["classifier"], nets["discriminator"])
    else:
        model = PlainClassifier(nets["net"])
    return model, snapshot
