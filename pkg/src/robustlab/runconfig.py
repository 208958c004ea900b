"""Flat ``key = value`` config files with ``#`` comments.

Every key can also be given as a CLI flag; flags win over the file, the
file wins over built-in defaults.
"""

from __future__ import annotations

from pathlib import Path

from .errors import UsageError


def parse_config_file(path) -> dict[str, str]:
    """Read a key = value file; later duplicates override earlier ones."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise UsageError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def as_bool(value: str) -> bool:
    low = str(value).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {value!r}")


def as_int_tuple(value) -> tuple[int, ...]:
    if isinstance(value, tuple):
        return value
    parts = [p for p in str(value).replace(" ", "").split(",") if p]
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"expected comma-separated ints, got {value!r}") from exc


def parse_eps_grid(value) -> list[float]:
    """Either 'start:stop:step' (inclusive stop) or a comma list."""
    text = str(value).strip()
    try:
        if ":" in text:
            start_s, stop_s, step_s = text.split(":")
            start, stop, step = float(start_s), float(stop_s), float(step_s)
            if step <= 0:
                raise ValueError("step must be positive")
            grid = []
            i = 0
            while True:
                v = start + i * step
                if v > stop + 1e-12:
                    break
                grid.append(round(v, 12))
                i += 1
            return grid
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise UsageError(f"bad eps grid {value!r}: {exc}") from exc
