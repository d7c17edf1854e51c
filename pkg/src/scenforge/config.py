"""Pipeline configuration: one JSON schema covering the model client, the
simulator, and the search, plus the seed-splitting rule.

All randomness in a run flows from a single master seed.  Sub-seeds are
derived, never consumed in sequence, so adding a scenario or a repetition
does not shift anyone else's stream:

    sub_seed = first 8 bytes of sha256("<master>|part|part|...") as an int

The default configuration is the reference setup: crossover rate 0.4,
mutation rate 0.5, 10 generations, population size equal to the scenario's
statement count, 5 s action duration, sampling temperature 0.8, and a
1000-token response cap.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .llm import LlmClientConfig
from .microsim import EgoPolicyConfig, PhysicsConfig
from .search import SearchConfig

POPULATION_AUTO = "template_length"


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit sub-seed for a labeled part of a campaign."""
    text = "|".join([str(master), *[str(p) for p in parts]])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class SimSettings:
    horizon: float = 30.0
    dt: float = 0.1
    lane_width: float = 5.0
    curve_radius: float = 150.0
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    ego: EgoPolicyConfig = field(default_factory=EgoPolicyConfig)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    repetitions: int = 5
    methods: tuple[str, ...] = ("genetic", "random")
    scenarios: tuple[str, ...] = ()
    out_dir: str = "runs"
    defaults_table: str | None = None
    llm: LlmClientConfig = field(default_factory=lambda: LlmClientConfig(transcript_path="transcript.json"))
    search: SearchConfig = field(default_factory=SearchConfig)
    sim: SimSettings = field(default_factory=SimSettings)

    @classmethod
    def default(cls) -> "PipelineConfig":
        return cls()

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["search"]["population_size"] is None:
            d["search"]["population_size"] = POPULATION_AUTO
        d["sim"]["action_duration"] = d["sim"]["physics"]["action_duration"]
        d["methods"] = list(self.methods)
        d["scenarios"] = list(self.scenarios)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        try:
            search_data = dict(data.get("search", {}))
            if search_data.get("population_size") == POPULATION_AUTO:
                search_data["population_size"] = None
            sim_data = dict(data.get("sim", {}))
            sim_data.pop("action_duration", None)
            physics = PhysicsConfig(**sim_data.pop("physics", {}))
            ego = EgoPolicyConfig(**sim_data.pop("ego", {}))
            return cls(
                seed=int(data.get("seed", 0)),
                repetitions=int(data.get("repetitions", 5)),
                methods=tuple(data.get("methods", ("genetic", "random"))),
                scenarios=tuple(data.get("scenarios", ())),
                out_dir=str(data.get("out_dir", "runs")),
                defaults_table=data.get("defaults_table"),
                llm=LlmClientConfig(**data.get("llm", {"transcript_path": "transcript.json"})),
                search=SearchConfig(**search_data),
                sim=SimSettings(physics=physics, ego=ego, **sim_data),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad configuration: {e}") from None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = cls.from_dict(data)
        if cfg.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        for m in cfg.methods:
            if m not in ("genetic", "random"):
                raise ConfigError(f"unknown method {m!r} (expected genetic or random)")
        return cfg
