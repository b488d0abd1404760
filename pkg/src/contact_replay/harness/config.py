"""Run configuration: dataclasses, dotted-key overrides and INI-style files.

Config files use sections for the first key component::

    [env]
    task = push

    [prioritizer]
    kind = cebp
    sigmoid.T = 0.01

Every key can also be given on the command line as ``--set prioritizer.sigmoid.T=5``.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..agent import AgentConfig
from ..core import ContractViolation
from ..env import ConfigError, EnvConfig
from ..her import RelabelConfig
from ..prioritizers import PrioritizerKind, SigmoidParams

OUTPUT_ENV_VAR = "CONTACT_REPLAY_OUT"
_GEOMETRY = ("workspace", "gripper_region", "object_region", "goal_region")


def _default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV_VAR, "runs")


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    her: RelabelConfig = field(default_factory=RelabelConfig)
    prioritizer: PrioritizerKind = field(default_factory=PrioritizerKind)
    beta0: float = 0.4
    epochs: int = 50
    cycles_per_epoch: int = 50
    episodes_per_cycle: int = 2
    eval_episodes: int = 20
    seeds: tuple = (0, 1, 2, 3, 4)
    output_dir: str = field(default_factory=_default_output_dir)
    buffer_capacity: int = 10_000
    use_is_weights: bool = True
    wall_clock: bool = True
    dump_trajectories: bool = False
    save_buffer: bool = True
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("run.seeds must be non-empty and distinct")
        if min(self.seeds) < 0:
            raise ConfigError("run.seeds must be unsigned")
        for name in ("epochs", "cycles_per_epoch", "episodes_per_cycle", "eval_episodes"):
            if getattr(self, name) < 0:
                raise ConfigError(f"run.{name} must be >= 0")
        if self.buffer_capacity < 1 or self.workers < 1:
            raise ConfigError("run.buffer_capacity and run.workers must be >= 1")
        if not 0.0 <= self.beta0 <= 1.0:
            raise ConfigError("prioritizer.beta0 must lie in [0, 1]")


# dotted key -> (section attribute or None for RunConfig itself, field name)
def _key_table() -> dict[str, tuple[str | None, str]]:
    table: dict[str, tuple[str | None, str]] = {}
    for f in dataclasses.fields(EnvConfig):
        table[f"env.{f.name}"] = ("env", f.name)
    for f in dataclasses.fields(AgentConfig):
        table[f"agent.{f.name}"] = ("agent", f.name)
    table["her.strategy"] = ("her", "strategy")
    table["her.replay_k"] = ("her", "replay_k")
    table.update({
        "prioritizer.kind": ("prioritizer", "variant"),
        "prioritizer.sigmoid.k": ("sigmoid", "k"),
        "prioritizer.sigmoid.T": ("sigmoid", "T"),
        "prioritizer.per.alpha": ("prioritizer", "alpha"),
        "prioritizer.epsilon_floor": ("prioritizer", "epsilon_floor"),
        "prioritizer.ebp.mass": ("prioritizer", "mass"),
        "prioritizer.ebp.gravity": ("prioritizer", "gravity"),
        "cebp.per_step_energy": ("prioritizer", "per_step_energy"),
        "prioritizer.beta0": (None, "beta0"),
    })
    for name in ("epochs", "cycles_per_epoch", "episodes_per_cycle", "eval_episodes", "seeds",
                 "output_dir", "buffer_capacity", "use_is_weights", "wall_clock",
                 "dump_trajectories", "save_buffer", "workers"):
        table[f"run.{name}"] = (None, name)
    return table


VALID_KEYS = tuple(sorted(_key_table()))


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(raw, current, key: str):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    _, name = key.rsplit(".", 1)
    if name in _GEOMETRY:
        values = [float(v) for v in text.replace(";", ",").split(",")]
        if len(values) != 6:
            raise ValueError(f"{key} expects 6 numbers (low xyz, high xyz)")
        return (tuple(values[:3]), tuple(values[3:]))
    if name == "gripper_home":
        return tuple(float(v) for v in text.split(","))
    if isinstance(current, bool):
        return _parse_bool(text)
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        return tuple(int(v) for v in text.split(",") if v.strip())
    return text


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Return a copy of ``config`` with dotted-key overrides applied."""
    table = _key_table()
    sections: dict[str, dict] = {"env": {}, "agent": {}, "her": {}, "prioritizer": {},
                                 "sigmoid": {}, None: {}}
    for key, raw in overrides.items():
        if key not in table:
            raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(VALID_KEYS)}")
        section, name = table[key]
        if section is None:
            current = getattr(config, name)
        elif section == "sigmoid":
            current = getattr(config.prioritizer.sigmoid, name)
        else:
            current = getattr(getattr(config, section), name)
        try:
            sections[section][name] = _convert(raw, current, key)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    env_changes = sections["env"]
    if env_changes.get("task", config.env.task) != config.env.task:
        # geometry not given explicitly follows the new task's defaults
        for name in (*_GEOMETRY, "gripper_home"):
            env_changes.setdefault(name, None)
    try:
        prioritizer = config.prioritizer
        if sections["sigmoid"]:
            sections["prioritizer"]["sigmoid"] = dataclasses.replace(prioritizer.sigmoid,
                                                                     **sections["sigmoid"])
        return dataclasses.replace(
            config,
            env=dataclasses.replace(config.env, **sections["env"]),
            agent=dataclasses.replace(config.agent, **sections["agent"]),
            her=dataclasses.replace(config.her, **sections["her"]),
            prioritizer=dataclasses.replace(prioritizer, **sections["prioritizer"]),
            **sections[None],
        )
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from exc


def read_config_file(path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep "sigmoid.T" case
    try:
        with open(Path(path)) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return {f"{section}.{key}": value
            for section in parser.sections() for key, value in parser.items(section)}


def parse_set_flags(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path=None, overrides=None, base: RunConfig | None = None) -> RunConfig:
    config = base if base is not None else RunConfig()
    merged = {}
    if path is not None:
        merged.update(read_config_file(path))
    merged.update(overrides or {})
    return apply_overrides(config, merged)


def config_to_dict(config: RunConfig) -> dict[str, object]:
    """Flat ``{dotted key: value}`` view, the inverse of :func:`apply_overrides`."""
    out = {}
    for key, (section, name) in _key_table().items():
        if section is None:
            value = getattr(config, name)
        elif section == "sigmoid":
            value = getattr(config.prioritizer.sigmoid, name)
        else:
            value = getattr(getattr(config, section), name)
        out[key] = value
    return out


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        flat = []
        for v in value:
            flat.extend(v if isinstance(v, tuple) else (v,))
        return ",".join(repr(v) for v in flat)
    return str(value)


def write_config_file(config: RunConfig, path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for key, value in config_to_dict(config).items():
        section, rest = key.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, rest, format_value(value))
    with open(Path(path), "w") as fh:
        parser.write(fh)
