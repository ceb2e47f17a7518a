"""JSON run configuration shared by all CLI commands.

A config file has up to five sections; every key is optional and unknown keys
are rejected::

    {
      "gen":     {GenConfig fields},
      "distill": {DistillConfig scalar fields},
      "freq":    {FreqAttentionConfig fields},
      "mv":      {MultiViewConfig fields},
      "teacher": {DistillConfig scalar fields overriding "distill" for teacher training}
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .freq_attention import FreqAttentionConfig
from .multiview import MultiViewConfig
from .synth import GenConfig, gen_config_dict
from .train import DistillConfig

_DISTILL_SCALARS = [f.name for f in dataclasses.fields(DistillConfig) if f.name not in ("freq", "mv")]
SECTIONS = {
    "gen": [f.name for f in dataclasses.fields(GenConfig)],
    "distill": _DISTILL_SCALARS,
    "freq": [f.name for f in dataclasses.fields(FreqAttentionConfig)],
    "mv": [f.name for f in dataclasses.fields(MultiViewConfig)],
    "teacher": _DISTILL_SCALARS,
}


@dataclass
class RunConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    teacher_overrides: dict = field(default_factory=dict)

    def teacher(self) -> DistillConfig:
        return dataclasses.replace(self.distill, alpha=0.0, beta=0.0, **self.teacher_overrides)

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        return RunConfig(
            dataclasses.replace(self.gen, seed=seed),
            dataclasses.replace(self.distill, master_seed=seed),
            dict(self.teacher_overrides),
        )

    def to_dict(self) -> dict:
        d = self.distill
        return {
            "gen": gen_config_dict(self.gen),
            "distill": {k: getattr(d, k) for k in _DISTILL_SCALARS},
            "freq": dataclasses.asdict(d.freq),
            "mv": dataclasses.asdict(d.mv),
            "teacher": dict(self.teacher_overrides),
        }


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for section, body in doc.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        unknown = set(body) - set(SECTIONS[section])
        if unknown:
            raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    try:
        gen = GenConfig(**doc.get("gen", {}))
        freq = FreqAttentionConfig(**doc.get("freq", {}))
        mv = MultiViewConfig(**doc.get("mv", {}))
        distill = DistillConfig(**doc.get("distill", {}), freq=freq, mv=mv)
        teacher = dict(doc.get("teacher", {}))
        dataclasses.replace(distill, **teacher)  # validate overrides early
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(gen, distill, teacher)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return parse_config(doc)


def write_config(cfg: RunConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
