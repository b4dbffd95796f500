"""Flat ``key = value`` run configuration shared by the CLI subcommands.

Keys are dotted (``train.learning_rate``); ``#`` starts a comment. Unknown
keys are rejected. Command-line flags override file values.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any

# key -> (type, default)
SCHEMA: dict[str, tuple[type, Any]] = {
    "guided.radius": (int, 15),
    "guided.epsilon": (float, 0.01),
    "net.s1": (int, 16),
    "net.s2": (int, 1),
    "net.s3": (int, 8),
    "net.n1": (int, 512),
    "net.n2": (int, 512),
    "net.init": (str, "fixed"),
    "net.init_std": (float, 0.001),
    "train.learning_rate": (float, 0.01),
    "train.batch_size": (int, 16),
    "train.steps": (int, 1000),
    "train.patch_size": (int, 64),
    "train.seed": (int, 0),
    "train.domain": (str, "detail"),
    "train.step_scale": (str, "per_value"),
    "train.patches": (int, 100_000),
    "train.log_every": (int, 500),
    "train.checkpoint_every": (int, 0),
    "train.smoothing_window": (int, 500),
    "enhance.mode": (str, "none"),
    "enhance.gamma": (float, 0.8),
    "enhance.detail_boost": (float, 2.0),
    "enhance.stretch": (bool, True),
    "ssim.window": (int, 11),
    "ssim.sigma": (float, 1.5),
    "ssim.k1": (float, 0.01),
    "ssim.k2": (float, 0.03),
    "threads": (int, 1),
}


class ConfigError(ValueError):
    pass


def _convert(key: str, raw: Any) -> Any:
    kind = SCHEMA[key][0]
    if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def resolve(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    """Defaults, then the config file, then non-None ``overrides``."""
    cfg = {k: default for k, (_, default) in SCHEMA.items()}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        cfg.update(parse_config_text(text, str(p)))
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            cfg[key] = _convert(key, value)
    return cfg


def dump(cfg: dict[str, Any]) -> str:
    return "\n".join(f"{k} = {cfg[k]}" for k in sorted(cfg))
