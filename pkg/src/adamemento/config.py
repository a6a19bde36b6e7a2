"""Run configuration.

The file format is flat ``key = value`` text with ``#`` comments.  Keys from
the reference hyperparameter table keep their CamelCase names; everything
else (environment, ablations, desk-scale knobs) is snake_case or dotted.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

from .env import ENV_NAMES, GridSpec, make_env
from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    max_step_per_episode: int = 4500
    ext_coef: float = 2.0
    learning_rate: float = 1e-4
    num_env: int = 32
    num_step: int = 128
    gamma: float = 0.999
    int_gamma: float = 0.99
    gae_lambda: float = 0.95
    stable_eps: float = 1e-8
    clip_grad_norm: float = 0.5
    entropy: float = 0.001
    epoch: int = 4
    mini_batch: int = 4
    ppo_eps: float = 0.1
    int_coef: float = 1.0
    update_proportion: float = 0.25
    obs_norm_step: int = 50
    confidence: float = 0.85
    good_buffer_size: int = 10
    bad_buffer_size: int = 5000
    good_buffer_batch_size: int = 1
    bad_buffer_batch_size: int = 128
    ori_policy_env_num: int = 16
    exploit_update: int = 50

    env_name: str = "cliff_walking"
    env_width: int | None = None
    env_height: int | None = None
    env_max_steps: int | None = None
    env_step_reward: float | None = None
    env_goal_reward: float | None = None
    env_cliff_reward: float | None = None

    seed: int = 0
    total_updates: int = 100
    out_dir: str = "runs/default"
    disable_memory: bool = False
    disable_curiosity: bool = False
    disable_f_discriminator: bool = False
    exploit: str = "auto"
    lambda_l1: float = 0.01
    failure_window: int = 10
    exploit_steps: int = 64
    hidden_size: int = 64
    latent_size: int = 32
    int_clip: float | None = None
    reflect_on_truncation: bool = False

    # ------------------------------------------------------------ derived
    @property
    def memory_enabled(self) -> bool:
        if self.disable_memory or self.exploit == "off":
            return False
        if self.exploit == "on":
            return True
        return self.env_name != "dark_chamber"

    @property
    def curiosity_enabled(self) -> bool:
        return not self.disable_curiosity and self.int_coef > 0

    @property
    def effective_lambda(self) -> float:
        return 0.0 if self.disable_f_discriminator else self.lambda_l1

    def grid_spec(self) -> GridSpec:
        overrides = {}
        for name in ("width", "height", "step_reward", "goal_reward", "cliff_reward"):
            value = getattr(self, f"env_{name}")
            if value is not None:
                overrides[name] = value
        spec = make_env(self.env_name, overrides)
        cap = min(self.env_max_steps or spec.max_steps, self.max_step_per_episode)
        return dataclasses.replace(spec, max_steps=cap)

    def to_text(self) -> str:
        lines = [f"{key} = {_format(getattr(self, attr))}" for key, attr, _ in _KEYS]
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _opt(kind):
    return ("optional", kind)


# file key, attribute, value type
_KEYS = [
    ("MaxStepPerEpisode", "max_step_per_episode", int),
    ("ExtCoef", "ext_coef", float),
    ("LearningRate", "learning_rate", float),
    ("NumEnv", "num_env", int),
    ("NumStep", "num_step", int),
    ("Gamma", "gamma", float),
    ("IntGamma", "int_gamma", float),
    ("Lambda", "gae_lambda", float),
    ("StableEps", "stable_eps", float),
    ("ClipGradNorm", "clip_grad_norm", float),
    ("Entropy", "entropy", float),
    ("Epoch", "epoch", int),
    ("MiniBatch", "mini_batch", int),
    ("PPOEps", "ppo_eps", float),
    ("IntCoef", "int_coef", float),
    ("UpdateProportion", "update_proportion", float),
    ("ObsNormStep", "obs_norm_step", int),
    ("Confidence", "confidence", float),
    ("GoodBufferSize", "good_buffer_size", int),
    ("BadBufferSize", "bad_buffer_size", int),
    ("GoodBufferBatchSize", "good_buffer_batch_size", int),
    ("BadBufferBatchSize", "bad_buffer_batch_size", int),
    ("OriPolicyEnvNum", "ori_policy_env_num", int),
    ("ExploitUpdate", "exploit_update", int),
    ("env.name", "env_name", str),
    ("env.width", "env_width", _opt(int)),
    ("env.height", "env_height", _opt(int)),
    ("env.max_steps", "env_max_steps", _opt(int)),
    ("env.step_reward", "env_step_reward", _opt(float)),
    ("env.goal_reward", "env_goal_reward", _opt(float)),
    ("env.cliff_reward", "env_cliff_reward", _opt(float)),
    ("seed", "seed", int),
    ("total_updates", "total_updates", int),
    ("out_dir", "out_dir", str),
    ("disable_memory", "disable_memory", bool),
    ("disable_curiosity", "disable_curiosity", bool),
    ("disable_f_discriminator", "disable_f_discriminator", bool),
    ("exploit", "exploit", str),
    ("lambda_l1", "lambda_l1", float),
    ("failure_window", "failure_window", int),
    ("exploit_steps", "exploit_steps", int),
    ("hidden_size", "hidden_size", int),
    ("latent_size", "latent_size", int),
    ("int_clip", "int_clip", _opt(float)),
    ("reflect_on_truncation", "reflect_on_truncation", bool),
]
KEY_TO_ATTR = {k: a for k, a, _ in _KEYS}
ATTR_TO_KEY = {a: k for k, a, _ in _KEYS}
_TYPES = {k: t for k, _, t in _KEYS}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key, text):
    kind = _TYPES[key]
    optional = isinstance(kind, tuple)
    if optional:
        kind = kind[1]
        if text.lower() in ("none", "null", ""):
            return None
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            as_float = float(text)
            if not as_float.is_integer():
                raise ValueError(text)
            return int(as_float)
        if kind is float:
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}", key=key) from None


def _parse_lines(lines, source):
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEY_TO_ATTR:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        out[key] = _parse_value(key, value)
    return out


def _require(cond, key, message):
    if not cond:
        raise ConfigError(f"{key}: {message}", key=key)


def validate(cfg: RunConfig) -> RunConfig:
    for key in ("NumEnv", "NumStep", "Epoch", "MiniBatch", "GoodBufferSize", "BadBufferSize",
                "GoodBufferBatchSize", "BadBufferBatchSize", "ExploitUpdate", "MaxStepPerEpisode",
                "ObsNormStep", "failure_window", "hidden_size", "latent_size"):
        minimum = 0 if key == "ObsNormStep" else 1
        _require(getattr(cfg, KEY_TO_ATTR[key]) >= minimum, key, f"must be >= {minimum}")
    _require(cfg.total_updates >= 0, "total_updates", "must be >= 0")
    _require(cfg.exploit_steps >= 0, "exploit_steps", "must be >= 0")
    for key in ("Gamma", "IntGamma"):
        _require(0.0 <= getattr(cfg, KEY_TO_ATTR[key]) < 1.0, key, "must lie in [0, 1)")
    _require(0.0 <= cfg.gae_lambda <= 1.0, "Lambda", "must lie in [0, 1]")
    _require(0.0 <= cfg.confidence <= 1.0, "Confidence", "must lie in [0, 1]")
    _require(0.0 < cfg.update_proportion <= 1.0, "UpdateProportion", "must lie in (0, 1]")
    for key in ("ExtCoef", "IntCoef", "Entropy", "lambda_l1"):
        _require(getattr(cfg, KEY_TO_ATTR[key]) >= 0.0, key, "must be >= 0")
    for key in ("LearningRate", "StableEps", "ClipGradNorm", "PPOEps"):
        _require(getattr(cfg, KEY_TO_ATTR[key]) > 0.0, key, "must be > 0")
    _require(0 <= cfg.ori_policy_env_num <= cfg.num_env, "OriPolicyEnvNum", "must lie in [0, NumEnv]")
    _require(cfg.num_env * cfg.num_step >= cfg.mini_batch, "MiniBatch", "exceeds the rollout size")
    _require(cfg.env_name in ENV_NAMES, "env.name", f"must be one of {ENV_NAMES}")
    _require(cfg.exploit in ("auto", "on", "off"), "exploit", "must be auto, on or off")
    _require(cfg.int_clip is None or cfg.int_clip > 0, "int_clip", "must be > 0")
    try:
        cfg.grid_spec()
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"env: {exc}", key="env.name") from exc
    return cfg


def from_mapping(values: dict) -> RunConfig:
    """Build a config from ``{file key: parsed value}`` on top of the defaults."""
    unknown = set(values) - set(KEY_TO_ATTR)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown config key {key!r}", key=key)
    return validate(RunConfig(**{KEY_TO_ATTR[k]: v for k, v in values.items()}))


def parse_overrides(overrides) -> dict:
    return _parse_lines(list(overrides or []), "--set")


def parse_config(path=None, overrides=None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``key=value`` overrides."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        values.update(_parse_lines(p.read_text().splitlines(), str(p)))
    values.update(parse_overrides(overrides))
    return from_mapping(values)


def replace(cfg: RunConfig, **changes) -> RunConfig:
    return validate(dataclasses.replace(cfg, **changes))
