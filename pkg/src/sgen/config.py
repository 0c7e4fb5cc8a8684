"""Plain key=value run configuration.

One ``key = value`` pair per line; blank lines and # comments are
ignored.  Unknown keys are rejected so typos fail loudly instead of
silently training with defaults.  ``serialize_config(parse_config(text))``
round-trips every setting.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .data import EVAL_SCALES, DegradeSpec
from .model import SgenConfig

__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config", "serialize_config"]


class ConfigError(ValueError):
    """Raised for unknown keys or unparseable values."""


@dataclass
class RunConfig:
    # architecture
    n_levels: int = 3
    base_channels: int = 32
    bottleneck_channels: int = 64
    merge_mode: str = "sgu"
    lrelu_slope: float = 0.2
    disc_channels: tuple[int, ...] = (32, 64, 128, 256)
    # training; gan_loss "none" selects plain MSE training
    gan_loss: str = "minimax"
    lambda_mse: float = 0.1
    learning_rate: float = 0.0002
    batch_size: int = 64
    steps: int = 0
    eval_every: int = 0
    seed: int = 0
    # degradation protocol
    scales: tuple[tuple[int, int], ...] = EVAL_SCALES
    down_factor: int = 4
    noise_sigma: float = 30.0
    up_method: str = "nearest"
    # data sources and outputs
    data_root: str = ""
    synthetic_count: int = 0
    synthetic_size: tuple[int, int] = (128, 96)
    checkpoint_out: str = "sgen.ckpt"
    report_out: str = "report"
    log_out: str = ""

    @property
    def adversarial(self) -> bool:
        return self.gan_loss != "none"

    def sgen_config(self) -> SgenConfig:
        variant = self.gan_loss if self.gan_loss != "none" else "minimax"
        return SgenConfig(
            n_levels=self.n_levels,
            base_channels=self.base_channels,
            bottleneck_channels=self.bottleneck_channels,
            merge_mode=self.merge_mode,
            lrelu_slope=self.lrelu_slope,
            gan_loss=variant,
            lambda_mse=self.lambda_mse,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            disc_channels=self.disc_channels,
        )

    def degrade_spec(self) -> DegradeSpec:
        return DegradeSpec(
            scales=self.scales,
            down_factor=self.down_factor,
            noise_sigma=self.noise_sigma,
            up_method=self.up_method,
            seed=self.seed,
        )


def _parse_size(text: str) -> tuple[int, int]:
    h, sep, w = text.lower().partition("x")
    if not sep or not h.strip().isdigit() or not w.strip().isdigit():
        raise ConfigError(f"bad size {text!r}: expected HxW, e.g. 128x96")
    return int(h), int(w)


def _parse_scales(text: str) -> tuple[tuple[int, int], ...]:
    return tuple(_parse_size(part) for part in text.split(",") if part.strip())


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"bad integer list {text!r}") from None


def _fmt_size(size: tuple[int, int]) -> str:
    return f"{size[0]}x{size[1]}"


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    defaults = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            if key == "scales":
                parsed = _parse_scales(value)
            elif key == "synthetic_size":
                parsed = _parse_size(value)
            elif key == "disc_channels":
                parsed = _parse_int_list(value)
            else:
                # scalar fields parse by the type of their default
                parsed = type(getattr(defaults, key))(value)
        except ConfigError:
            raise
        except (TypeError, ValueError):
            raise ConfigError(f"line {lineno}: bad value {value!r} for key {key!r}") from None
        setattr(cfg, key, parsed)
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name == "scales":
            text = ",".join(_fmt_size(s) for s in value)
        elif f.name == "synthetic_size":
            text = _fmt_size(value)
        elif f.name == "disc_channels":
            text = ",".join(str(v) for v in value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
