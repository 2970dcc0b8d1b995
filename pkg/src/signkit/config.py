"""Declarative pipeline configuration: one YAML document, strict keys,
dotted-path command-line overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .spotting import SpotConfig


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    captions_dir: str = "captions"
    features_dir: str = "features"
    posteriors_dir: str = "posteriors"
    proposals_file: str = "proposals.tsv"
    output_dir: str = "out"


@dataclass
class CorpusConfig:
    min_count: int = 2
    pad_sec: float = 0.5
    dev_size: int = 0
    test_size: int = 0
    split_seed: int = 0


@dataclass
class FusionSettings:
    """Model/training knobs; vocab_size is taken from the built vocabulary
    at train time."""

    stream_dims: dict[str, int] = field(
        default_factory=lambda: {"global": 16, "mouthing": 16, "hand": 16}
    )
    model_dim: int = 32
    num_heads: int = 2
    enc_layers: int = 2
    dec_layers: int = 2
    ffn_dim: int = 64
    max_len: int = 32
    dropout: float = 0.1
    lr_peak: float = 1e-3
    warmup_iters: int = 2000
    total_iters: int = 14000
    batch_size: int = 8
    seed: int = 0


@dataclass
class DecodeConfig:
    beam_width: int = 5
    length_penalty: float = 1.0


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    spotting: SpotConfig = field(default_factory=SpotConfig)
    fusion: FusionSettings = field(default_factory=FusionSettings)
    decode: DecodeConfig = field(default_factory=DecodeConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate_paths(self, *names: str) -> None:
        """Require the named path entries to exist on disk."""
        for name in names:
            value = Path(getattr(self.paths, name))
            if not value.exists():
                raise ConfigError(f"paths.{name}: {value} does not exist")


_SECTIONS = {
    "paths": PathsConfig,
    "corpus": CorpusConfig,
    "spotting": SpotConfig,
    "fusion": FusionSettings,
    "decode": DecodeConfig,
}


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    sections = {}
    for name, cls in _SECTIONS.items():
        payload = data.get(name, {})
        if not isinstance(payload, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        names = {f.name for f in dataclasses.fields(cls)}
        bad = set(payload) - names
        if bad:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(f'{name}.{k}' for k in bad))}")
        try:
            sections[name] = cls(**payload)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    return PipelineConfig(**sections)


def apply_overrides(data: dict, overrides: list[tuple[str, str]]) -> dict:
    """Apply ``(dotted.path, raw value)`` pairs; values are parsed as YAML
    scalars so numbers and booleans come out typed."""
    for path, raw in overrides:
        parts = path.split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {path}: {part} is not a section")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load_config(
    path: Optional[Path | str] = None, overrides: Optional[list[tuple[str, str]]] = None
) -> PipelineConfig:
    data: dict[str, Any] = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        data = loaded
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
