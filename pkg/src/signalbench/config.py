"""Run configuration: defaults, flat ``section.key=value`` files, validation.

Grammar of a config file, one assignment per line::

    # comment
    sim.lane_length = 500
    plan.min_green = 10
    reward.C = 0.9
    dqn.gamma = 0.99
    env.phase_indicator = true
    run.scenario = evening
    run.seeds = 0,1,2,3,4

Sections are ``sim``, ``plan``, ``reward``, ``dqn``, ``env`` and ``run``.
Keys are the field names of the corresponding dataclasses.  Booleans
accept true/false/1/0/yes/no; tuples are comma separated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .dqn import DqnConfig
from .env import EnvConfig, RewardWeights
from .signals import TimingPlan
from .sim import SimConfig

SECTIONS = {
    "sim": SimConfig,
    "plan": TimingPlan,
    "reward": RewardWeights,
    "dqn": DqnConfig,
    "env": EnvConfig,
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class RunSettings:
    scenario: str = "evening"
    out_dir: str = ""
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    plan: TimingPlan = field(default_factory=TimingPlan)
    reward: RewardWeights = field(default_factory=RewardWeights)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    run: RunSettings = field(default_factory=RunSettings)

    def describe(self) -> list[str]:
        lines = []
        for name in ("sim", "plan", "reward", "dqn", "env", "run"):
            section = getattr(self, name)
            for f in fields(section):
                lines.append(f"{name}.{f.name}={getattr(section, f.name)}")
        return lines


def parse_lines(lines, source: str = "<config>") -> dict[str, str]:
    values = {}
    errors = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}:{lineno}: expected 'section.key = value'")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key:
            errors.append(f"{source}:{lineno}: key {key!r} needs a section prefix")
            continue
        values[key] = value
    if errors:
        raise ConfigError(errors)
    return values


def read_config_file(path) -> dict[str, str]:
    try:
        with open(path) as fh:
            return parse_lines(fh, str(path))
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc


def _coerce(raw: str, current):
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        items = [x.strip() for x in raw.split(",") if x.strip()]
        kind = type(current[0]) if current else int
        return tuple(kind(x) for x in items)
    return raw


def build_config(values: dict[str, str] | None = None) -> RunConfig:
    """Overlay ``values`` on the defaults and validate every section."""
    values = dict(values or {})
    errors = []
    sections: dict[str, dict] = {name: {} for name in (*SECTIONS, "run")}
    defaults = {**{k: cls.__dataclass_fields__ for k, cls in SECTIONS.items()},
                "run": RunSettings.__dataclass_fields__}
    default_objs = {"run": RunSettings()}
    for name, cls in SECTIONS.items():
        default_objs[name] = cls()
    for key, raw in values.items():
        section, _, name = key.partition(".")
        if section not in defaults:
            errors.append(f"unknown section {section!r} in {key!r}")
            continue
        if name not in defaults[section]:
            errors.append(f"unknown key {key!r}")
            continue
        try:
            sections[section][name] = _coerce(raw, getattr(default_objs[section], name))
        except ValueError as exc:
            errors.append(f"{key}: {exc}")
    built = {}
    for name, cls in (*SECTIONS.items(), ("run", RunSettings)):
        try:
            built[name] = dataclasses.replace(default_objs[name], **sections[name])
        except ValueError as exc:
            errors.extend(f"{name}: {msg}" for msg in str(exc).split("; "))
    run = built.get("run")
    if run is not None:
        if run.workers < 1:
            errors.append("run: workers must be >= 1")
        if not run.seeds:
            errors.append("run: at least one seed is required")
    if errors:
        raise ConfigError(errors)
    return RunConfig(**built)
