"""Run configuration: a flat key = value format with full validation.

A config file holds one ``key = value`` pair per line; blank lines and
``#`` comments are ignored. The same ``key=value`` syntax is accepted as
command-line overrides. Every run directory receives an echo of the fully
resolved configuration so results are self-describing.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Union

from .envs import ENV_NAMES
from .errors import ConfigError

ALGOS = ("sac", "sac+be", "sac+qu", "sac+mve", "sac+mve+be", "sac+mve+qu")


@dataclass
class RunConfig:
    env: str = "pendulum"
    algo: str = "sac"
    total_steps: int = 10000
    seeds: tuple[int, ...] = (0, 1, 2)

    # update schedule
    updates_per_step: int = 10
    update_start: int = 1000
    batch_size: int = 256

    # evaluation
    eval_interval: int = 1000
    eval_episodes: int = 10

    # SAC
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_alpha: float = 3e-4
    target_entropy: Union[str, float] = "auto"
    policy_hidden: tuple[int, ...] = (32, 32)
    critic_hidden: tuple[int, ...] = (32, 32)

    # replay
    buffer_capacity: int = 100000

    # world model
    ensemble_size: int = 5
    model_hidden: tuple[int, ...] = (32, 32)
    lr_model: float = 3e-4
    model_batch_size: int = 256
    warmup_transitions: int = 1000
    uncertainty_includes_reward: bool = False

    # candidate selection
    n_candidates: int = 100
    s_samples: int = 10
    selector_temperature: float = 1.0

    # value expansion
    horizon: int = 2

    @property
    def selector_kind(self) -> str:
        if self.algo.endswith("+be"):
            return "bounded"
        if self.algo.endswith("+qu"):
            return "qu"
        return "vanilla"

    @property
    def uses_mve(self) -> bool:
        return "+mve" in self.algo

    @property
    def needs_ensemble(self) -> bool:
        """True when any component consumes model predictions.

        Value expansion with horizon 0 never queries the model, so a plain
        ``sac+mve`` run at horizon 0 builds no ensemble at all and follows
        the exact computation path of ``sac``.
        """
        if self.selector_kind != "vanilla":
            return True
        return self.uses_mve and self.horizon > 0

    def resolved_target_entropy(self, action_dim: int) -> float:
        if self.target_entropy == "auto":
            return -float(action_dim)
        return float(self.target_entropy)


def _parse_int_tuple(raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",")]
    return tuple(int(p) for p in parts if p)


def _parse_field(name: str, raw: str):
    raw = raw.strip()
    try:
        if name in ("env", "algo"):
            return raw
        if name == "target_entropy":
            return "auto" if raw == "auto" else float(raw)
        if name == "uncertainty_includes_reward":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if name in ("seeds", "policy_hidden", "critic_hidden", "model_hidden"):
            return _parse_int_tuple(raw)
        default = RunConfig.__dataclass_fields__[name].default
        if isinstance(default, bool):
            raise ValueError("unhandled boolean field")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r} ({exc})") from None
    raise ConfigError(f"no parser for config key {name!r}")


_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def apply_pairs(cfg: RunConfig, pairs) -> RunConfig:
    """Apply (key, raw value) pairs in order; unknown keys are errors."""
    for key, raw in pairs:
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _parse_field(key, raw))
    return cfg


def parse_assignments(tokens) -> list[tuple[str, str]]:
    """Split ``key=value`` strings (CLI overrides) into pairs."""
    pairs = []
    for tok in tokens:
        if "=" not in tok:
            raise ConfigError(f"expected key=value, got {tok!r}")
        key, _, raw = tok.partition("=")
        pairs.append((key.strip(), raw.strip()))
    return pairs


def load_config(path) -> RunConfig:
    """Read a config file into a validated RunConfig."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {text!r}")
            key, _, raw = text.partition("=")
            pairs.append((key.strip(), raw.strip()))
    cfg = apply_pairs(RunConfig(), pairs)
    validate(cfg)
    return cfg


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_lines(cfg: RunConfig) -> list[str]:
    """Canonical ``key = value`` lines for the resolved-config echo."""
    return [f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(RunConfig)]


def validate(cfg: RunConfig) -> RunConfig:
    """Raise ConfigError on any out-of-range or inconsistent setting."""
    def check(ok: bool, msg: str):
        if not ok:
            raise ConfigError(msg)

    check(cfg.env in ENV_NAMES, f"unknown env {cfg.env!r}, expected one of {ENV_NAMES}")
    check(cfg.algo in ALGOS, f"unknown algo {cfg.algo!r}, expected one of {ALGOS}")
    check(cfg.total_steps >= 0, f"total_steps must be >= 0, got {cfg.total_steps}")
    check(len(cfg.seeds) > 0, "seeds must not be empty")
    check(all(s >= 0 for s in cfg.seeds), f"seeds must be >= 0, got {cfg.seeds}")
    check(len(set(cfg.seeds)) == len(cfg.seeds), f"seeds must be distinct, got {cfg.seeds}")
    check(cfg.updates_per_step >= 0, f"updates_per_step must be >= 0, got {cfg.updates_per_step}")
    check(cfg.update_start >= 1, f"update_start must be >= 1, got {cfg.update_start}")
    check(cfg.batch_size >= 1, f"batch_size must be >= 1, got {cfg.batch_size}")
    check(cfg.eval_interval >= 1, f"eval_interval must be >= 1, got {cfg.eval_interval}")
    check(cfg.eval_episodes >= 1, f"eval_episodes must be >= 1, got {cfg.eval_episodes}")
    check(0.0 <= cfg.gamma < 1.0, f"gamma must be in [0, 1), got {cfg.gamma}")
    check(0.0 < cfg.tau <= 1.0, f"tau must be in (0, 1], got {cfg.tau}")
    for name in ("lr_actor", "lr_critic", "lr_alpha", "lr_model"):
        check(getattr(cfg, name) > 0.0, f"{name} must be > 0, got {getattr(cfg, name)}")
    if cfg.target_entropy != "auto":
        check(isinstance(cfg.target_entropy, float),
              f"target_entropy must be 'auto' or a number, got {cfg.target_entropy!r}")
    for name in ("policy_hidden", "critic_hidden", "model_hidden"):
        sizes = getattr(cfg, name)
        check(len(sizes) >= 1 and all(h >= 1 for h in sizes),
              f"{name} must be one or more positive widths, got {sizes}")
    check(cfg.buffer_capacity >= 1, f"buffer_capacity must be >= 1, got {cfg.buffer_capacity}")
    check(cfg.ensemble_size >= 2, f"ensemble_size must be >= 2, got {cfg.ensemble_size}")
    check(cfg.model_batch_size >= 1, f"model_batch_size must be >= 1, got {cfg.model_batch_size}")
    check(cfg.warmup_transitions >= 2,
          f"warmup_transitions must be >= 2, got {cfg.warmup_transitions}")
    check(cfg.n_candidates >= 1, f"n_candidates must be >= 1, got {cfg.n_candidates}")
    check(cfg.s_samples >= 1, f"s_samples must be >= 1, got {cfg.s_samples}")
    check(cfg.selector_temperature > 0.0,
          f"selector_temperature must be > 0, got {cfg.selector_temperature}")
    check(cfg.horizon >= 0, f"horizon must be >= 0, got {cfg.horizon}")
    return cfg
