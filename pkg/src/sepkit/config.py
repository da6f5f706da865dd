"""Plain-text run configuration.

One setting per line, ``section.key = value``, where ``value`` is a JSON
literal (``3``, ``0.001``, ``"weighted_sum"``, ``true``, ``[1, 2, 4]``,
``null``).  ``#`` starts a comment.  An empty file yields all defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .losses import LossConfig
from .models import SeparatorConfig, SpeakerEmbedderConfig, SpectralConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path or '<config>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


@dataclass
class DataSettings:
    num_speakers: int = 5
    utterances_per_pair: int = 20
    duration_s: float = 1.0
    sample_rate: int = 16000
    seed: int = 0
    # existing manifest for train/eval/ablate; empty means generate under out_dir/data
    manifest: str = ""


@dataclass
class PipelineSettings:
    # "basic" trains the unconditioned separator; "conditioned" the two-stage model
    kind: str = "basic"
    oracle: bool = False
    basic_checkpoint: str = ""
    embedder_checkpoint: str = ""


@dataclass
class EmbedderSettings:
    embed_dim: int = 32
    hidden: int = 32
    width: int = 3
    epochs: int = 20
    batch_size: int = 16
    lr: float = 0.003


@dataclass
class EvalSettings:
    checkpoint: str = ""
    stoi: bool = True
    parallel: bool = False


@dataclass
class RunConfig:
    data: DataSettings = field(default_factory=DataSettings)
    model: SeparatorConfig = field(default_factory=SeparatorConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)
    embedder: EmbedderSettings = field(default_factory=EmbedderSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    text: str = ""

    def with_seed(self, seed: int) -> "RunConfig":
        self.train.seed = seed
        self.data.seed = seed
        return self

    def embedder_config(self) -> SpeakerEmbedderConfig:
        e = self.embedder
        return SpeakerEmbedderConfig(e.embed_dim, e.hidden, e.width, SpectralConfig(sample_rate=self.data.sample_rate))

    def to_dict(self) -> dict:
        return {
            "data": vars(self.data),
            "model": self.model.to_dict(),
            "loss": self.loss.to_dict(),
            "train": {k: v for k, v in self.train.to_dict().items() if k != "loss"},
            "pipeline": vars(self.pipeline),
            "embedder": vars(self.embedder),
            "eval": vars(self.eval),
        }

    def digest(self) -> str:
        """Hash of the resolved configuration (stable across comment and ordering edits)."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# key -> accepted python types; None in the tuple allows null
_OPTIONAL = {("model", "stride"): (int, type(None)), ("model", "dilations"): (list, type(None))}
_SECTIONS = {
    "data": DataSettings,
    "model": SeparatorConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "pipeline": PipelineSettings,
    "embedder": EmbedderSettings,
    "eval": EvalSettings,
}


def _schema() -> dict[str, dict[str, tuple]]:
    schema = {}
    for section, cls in _SECTIONS.items():
        keys = {}
        for f in fields(cls):
            if section == "train" and f.name == "loss":
                continue
            default = getattr(cls(), f.name)
            kinds = _OPTIONAL.get((section, f.name))
            if kinds is None:
                kinds = (float, int) if isinstance(default, float) else (type(default),)
            keys[f.name] = kinds
        schema[section] = keys
    return schema


SCHEMA = _schema()


def _check_type(value, kinds: tuple) -> bool:
    if isinstance(value, bool):
        return bool in kinds
    return isinstance(value, kinds)


def describe_defaults() -> str:
    """Human-readable list of every key and its default, for ``--help``."""
    lines = []
    defaults = RunConfig().to_dict()
    for section in SCHEMA:
        for key in SCHEMA[section]:
            lines.append(f"  {section}.{key} = {json.dumps(defaults[section][key])}")
    return "\n".join(lines)


def parse_config_text(text: str, path=None) -> RunConfig:
    values: dict[str, dict] = {s: {} for s in SCHEMA}
    lines: dict[tuple, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", lineno, path)
        lhs, rhs = (part.strip() for part in line.split("=", 1))
        if "." not in lhs:
            raise ConfigError(f"key {lhs!r} must be written section.key", lineno, path)
        section, key = lhs.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r} (known: {', '.join(SCHEMA)})", lineno, path)
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {lhs!r}", lineno, path)
        try:
            value = json.loads(rhs)
        except json.JSONDecodeError:
            raise ConfigError(f"{lhs}: cannot parse value {rhs!r} (use JSON literals; quote strings)", lineno, path)
        kinds = SCHEMA[section][key]
        if not _check_type(value, kinds):
            names = "/".join("null" if k is type(None) else k.__name__ for k in kinds)
            raise ConfigError(f"{lhs}: expected {names}, got {type(value).__name__} {rhs}", lineno, path)
        if isinstance(value, int) and not isinstance(value, bool) and float in kinds:
            value = float(value)
        values[section][key] = value
        lines[(section, key)] = lineno

    def build(section: str):
        try:
            return _SECTIONS[section](**values[section])
        except (TypeError, ValueError) as exc:
            first = min((n for (s, _), n in lines.items() if s == section), default=None)
            raise ConfigError(f"[{section}] {exc}", first, path) from exc

    cfg = RunConfig(
        data=build("data"),
        model=build("model"),
        loss=build("loss"),
        pipeline=build("pipeline"),
        embedder=build("embedder"),
        eval=build("eval"),
        text=text,
    )
    try:
        cfg.train = TrainConfig(**values["train"], loss=cfg.loss)
    except (TypeError, ValueError) as exc:
        first = min((n for (s, _), n in lines.items() if s == "train"), default=None)
        raise ConfigError(f"[train] {exc}", first, path) from exc
    if cfg.pipeline.kind not in ("basic", "conditioned"):
        raise ConfigError(f"pipeline.kind must be 'basic' or 'conditioned', got {cfg.pipeline.kind!r}", lines.get(("pipeline", "kind")), path)
    return cfg


def _strip_comment(raw: str) -> str:
    """Drop a trailing ``#`` comment that is not inside a quoted string."""
    quoted = False
    for i, ch in enumerate(raw):
        if ch == '"' and (i == 0 or raw[i - 1] != "\\"):
            quoted = not quoted
        elif ch == "#" and not quoted:
            return raw[:i].strip()
    return raw.strip()


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return parse_config_text(p.read_text(), p)
