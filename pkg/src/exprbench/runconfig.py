"""Declarative run configuration: INI sections with strict key checking.

Defaults reproduce the published hyperparameters (tau=0.07, margin=0.2,
epsilon=1e-6, lambda_sc=1.0, lambda_id=0.1, beta1=0.9, beta2=0.999); unknown
sections or keys are hard errors. Flags override file values, and the
effective configuration is echoed into every output directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

from .affect import DEFAULT_REGISTRY, ConfusingPairRegistry, ExpressionId
from .errors import ConfigError
from .losses import LossWeights, TripletConfig
from .trainer import EvalConfig, TrainingConfig
from .world import SyntheticWorldConfig

ENV_CONFIG_PATH = "EXPRBENCH_CONFIG"

_SCHEMA: dict[str, dict[str, type]] = {
    "world": {
        "latent_dim": int,
        "embed_dim": int,
        "n_identities": int,
        "overlap": float,
        "noise_sigma": float,
        "seed": int,
    },
    "losses": {
        "triplet": str,
        "margin": float,
        "epsilon": float,
        "tau": float,
        "lambda_sc": float,
        "lambda_id": float,
    },
    "training": {
        "lr": float,
        "steps": int,
        "seed": int,
        "mode": str,
        "hidden": int,
        "beta1": float,
        "beta2": float,
        "adam_eps": float,
        "log_every": int,
    },
    "eval": {
        "alpha_max": float,
        "grid": int,
        "n_eval_identities": int,
        "acc_min_alpha": float,
        "registry": str,
    },
    "io": {"out_dir": str},
}


@dataclass(frozen=True)
class RunConfig:
    world: SyntheticWorldConfig = SyntheticWorldConfig()
    triplet: TripletConfig = TripletConfig()
    weights: LossWeights = LossWeights()
    training: TrainingConfig = TrainingConfig()
    eval: EvalConfig = EvalConfig()
    registry: ConfusingPairRegistry = DEFAULT_REGISTRY
    out_dir: str = "out"


def parse_registry_spec(spec: str) -> ConfusingPairRegistry:
    """Parse "fear:surprised,angry:disgust" into a registry."""
    pairs = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 2:
            raise ConfigError(f"bad registry pair {chunk!r}; expected label:label")
        pairs.append((ExpressionId.from_label(parts[0]), ExpressionId.from_label(parts[1])))
    if not pairs:
        raise ConfigError("registry spec is empty")
    try:
        return ConfusingPairRegistry(tuple(pairs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def registry_to_spec(registry: ConfusingPairRegistry) -> str:
    return ",".join(f"{a.label}:{b.label}" for a, b in registry.pairs)


def load_run_config(path: str | None) -> RunConfig:
    """Read an INI run config; None yields pure defaults."""
    if path is None:
        return RunConfig()
    parser = configparser.ConfigParser()
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise FileNotFoundError(path)

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            caster = _SCHEMA[section][key]
            try:
                values[section][key] = caster(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}={raw!r}: {exc}") from exc

    def sect(name: str) -> dict:
        return values.get(name, {})

    try:
        world = SyntheticWorldConfig(**sect("world"))
        losses = sect("losses")
        triplet = TripletConfig(
            mode=losses.get("triplet", "infonce"),
            margin=losses.get("margin", TripletConfig.margin),
            epsilon=losses.get("epsilon", TripletConfig.epsilon),
            tau=losses.get("tau", TripletConfig.tau),
        )
        weights = LossWeights(
            lambda_sc=losses.get("lambda_sc", 1.0),
            lambda_id=losses.get("lambda_id", 0.1),
        )
        training = TrainingConfig(**sect("training"))
        ev = sect("eval")
        registry_spec = ev.pop("registry", None)
        eval_cfg = EvalConfig(**ev)
        registry = parse_registry_spec(registry_spec) if registry_spec else DEFAULT_REGISTRY
        out_dir = sect("io").get("out_dir", "out")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    return RunConfig(
        world=world,
        triplet=triplet,
        weights=weights,
        training=training,
        eval=eval_cfg,
        registry=registry,
        out_dir=out_dir,
    )


def with_overrides(
    cfg: RunConfig,
    seed: int | None = None,
    mode: str | None = None,
    lambda_sc: float | None = None,
    lambda_id: float | None = None,
    triplet_mode: str | None = None,
    alpha_max: float | None = None,
    grid: int | None = None,
    registry: ConfusingPairRegistry | None = None,
    out_dir: str | None = None,
) -> RunConfig:
    """Apply CLI flag overrides; --seed pins both the world and the trainer."""
    world = cfg.world
    training = cfg.training
    triplet = cfg.triplet
    weights = cfg.weights
    ev = cfg.eval
    if seed is not None:
        world = replace(world, seed=seed)
        training = replace(training, seed=seed)
    if mode is not None:
        training = replace(training, mode=mode)
    if triplet_mode is not None:
        triplet = replace(triplet, mode=triplet_mode)
    if lambda_sc is not None:
        weights = replace(weights, lambda_sc=lambda_sc)
    if lambda_id is not None:
        weights = replace(weights, lambda_id=lambda_id)
    if alpha_max is not None:
        ev = replace(ev, alpha_max=alpha_max)
    if grid is not None:
        ev = replace(ev, grid=grid)
    return RunConfig(
        world=world,
        triplet=triplet,
        weights=weights,
        training=training,
        eval=ev,
        registry=registry if registry is not None else cfg.registry,
        out_dir=out_dir if out_dir is not None else cfg.out_dir,
    )


def to_ini(cfg: RunConfig) -> str:
    """Render the effective configuration as a deterministic INI document."""
    lines = [
        "[world]",
        f"latent_dim = {cfg.world.latent_dim}",
        f"embed_dim = {cfg.world.embed_dim}",
        f"n_identities = {cfg.world.n_identities}",
        f"overlap = {cfg.world.overlap!r}",
        f"noise_sigma = {cfg.world.noise_sigma!r}",
        f"seed = {cfg.world.seed}",
        "",
        "[losses]",
        f"triplet = {cfg.triplet.mode}",
        f"margin = {cfg.triplet.margin!r}",
        f"epsilon = {cfg.triplet.epsilon!r}",
        f"tau = {cfg.triplet.tau!r}",
        f"lambda_sc = {cfg.weights.lambda_sc!r}",
        f"lambda_id = {cfg.weights.lambda_id!r}",
        "",
        "[training]",
        f"lr = {cfg.training.lr!r}",
        f"steps = {cfg.training.steps}",
        f"seed = {cfg.training.seed}",
        f"mode = {cfg.training.mode}",
        f"hidden = {cfg.training.hidden}",
        f"beta1 = {cfg.training.beta1!r}",
        f"beta2 = {cfg.training.beta2!r}",
        f"adam_eps = {cfg.training.adam_eps!r}",
        f"log_every = {cfg.training.log_every}",
        "",
        "[eval]",
        f"alpha_max = {cfg.eval.alpha_max!r}",
        f"grid = {cfg.eval.grid}",
        f"n_eval_identities = {cfg.eval.n_eval_identities}",
        f"acc_min_alpha = {cfg.eval.acc_min_alpha!r}",
        f"registry = {registry_to_spec(cfg.registry)}",
        "",
        "[io]",
        f"out_dir = {cfg.out_dir}",
    ]
    return "\n".join(lines) + "\n"
