"""Run configuration: one JSON document, defaults resolved on load.

Sub-seeds (dataset, init, subsampling, feature directions) default to
streams derived from the master ``seed`` but are written back resolved,
so an echoed config file reproduces the run exactly and round-trips
losslessly through ``from_dict(to_dict(cfg))``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .features import FeatureMapSpec
from .model import ModelConfig
from .rng import derive_seed
from .tasks import TaskSpec
from .train import OptimizerConfig

_MODEL_KEYS = (
    "layers",
    "heads",
    "d_model",
    "head_dim",
    "s",
    "d_v",
    "kinds",
    "mode",
    "rank_multi",
    "causal",
    "eta",
    "subsample_seed",
    "ffn_multiple",
    "std_eps",
)


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec
    model: ModelConfig
    optimizer: OptimizerConfig
    steps: int = 500
    batch_size: int = 32
    log_every: int = 50
    seed: int = 0
    init_seed: int = 0
    eta_sweep: tuple[float, ...] = ()
    cache_dataset: bool = False
    resume_from: str | None = None

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1 or self.log_every < 1:
            raise ConfigError("steps, batch_size and log_every must be positive")
        object.__setattr__(self, "eta_sweep", tuple(float(v) for v in self.eta_sweep))


def run_config_from_dict(raw: dict, seed_override: int | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a JSON object")
    try:
        seed = int(raw.get("seed", 0)) if seed_override is None else int(seed_override)

        task_section = dict(raw.get("task", {}))
        task_section.setdefault("dataset_seed", derive_seed(seed, "data"))
        task = TaskSpec(**task_section)

        model_section = dict(raw.get("model", {}))
        unknown = set(model_section) - set(_MODEL_KEYS) - {"feature_map"}
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        overrides = {k: model_section[k] for k in _MODEL_KEYS if k in model_section}
        if "kinds" in overrides:
            overrides["kinds"] = tuple(overrides["kinds"])
        overrides.setdefault("subsample_seed", derive_seed(seed, "subsample"))
        fm_section = model_section.get("feature_map")
        if fm_section is not None:
            fm_section = dict(fm_section)
            fm_section.setdefault("seed", derive_seed(seed, "features"))
            if "p" not in fm_section:
                fm_section["p"] = overrides.get("head_dim", ModelConfig.head_dim)
            overrides["feature_map"] = FeatureMapSpec.from_config(fm_section)
        model = ModelConfig.for_task(task, **overrides)

        optimizer = OptimizerConfig(**raw.get("optimizer", {}))
        train_section = dict(raw.get("train", {}))
        return RunConfig(
            task=task,
            model=model,
            optimizer=optimizer,
            steps=int(train_section.get("steps", 500)),
            batch_size=int(train_section.get("batch_size", 32)),
            log_every=int(train_section.get("log_every", 50)),
            seed=seed,
            init_seed=int(raw.get("init_seed", derive_seed(seed, "init"))),
            eta_sweep=tuple(raw.get("eta_sweep", ())),
            cache_dataset=bool(raw.get("cache_dataset", False)),
            resume_from=raw.get("resume_from"),
        )
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid run config: {exc}") from exc


def run_config_to_dict(cfg: RunConfig) -> dict:
    task = {k: v for k, v in cfg.task.__dict__.items()}
    model = {key: getattr(cfg.model, key) for key in _MODEL_KEYS}
    model["kinds"] = list(cfg.model.kinds)
    model["feature_map"] = cfg.model.feature_map.to_config()
    optimizer = {k: v for k, v in cfg.optimizer.__dict__.items()}
    return {
        "schema": 1,
        "seed": cfg.seed,
        "init_seed": cfg.init_seed,
        "task": task,
        "model": model,
        "optimizer": optimizer,
        "train": {"steps": cfg.steps, "batch_size": cfg.batch_size, "log_every": cfg.log_every},
        "eta_sweep": list(cfg.eta_sweep),
        "cache_dataset": cfg.cache_dataset,
        "resume_from": cfg.resume_from,
    }
