"""Optimizers, the training loop, logging and checkpoints.

Training is fully deterministic given the dataset seed, the init seed and
the optimizer settings: batch indices are a pure function of (dataset
seed, step), so a run resumed from a checkpoint continues exactly where
the uninterrupted run would have been.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .autograd import backward
from .errors import ConfigError, DivergenceError
from .ioutil import atomic_write_csv, atomic_write_json, ensure_dir
from .linalg import load_matrix_csv, save_matrix_csv
from .model import CLASSIFICATION, Model, forward_loss, predict
from .rng import Rng, derive_seed
from .tasks import Dataset

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_lr: float | None = None  # separate rate for the lambda_raw tensors

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer kind: {self.kind!r}")
        if self.lr < 0.0:
            raise ConfigError("learning rate must be nonnegative")


class Optimizer:
    """Adam or plain SGD; updates rebind arrays so live tapes stay valid."""

    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def _rate(self, name: str) -> float:
        if self.cfg.lambda_lr is not None and name.endswith("lambda_raw"):
            return self.cfg.lambda_lr
        return self.cfg.lr

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name in sorted(params):
            grad = grads.get(name)
            if grad is None:
                continue
            rate = self._rate(name)
            if self.cfg.kind == "sgd":
                params[name] = params[name] - rate * grad
                continue
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None:
                m = np.zeros_like(params[name])
                v = np.zeros_like(params[name])
            m = self.cfg.beta1 * m + (1.0 - self.cfg.beta1) * grad
            v = self.cfg.beta2 * v + (1.0 - self.cfg.beta2) * (grad * grad)
            self.m[name] = m
            self.v[name] = v
            m_hat = m / (1.0 - self.cfg.beta1**self.t)
            v_hat = v / (1.0 - self.cfg.beta2**self.t)
            params[name] = params[name] - rate * m_hat / (np.sqrt(v_hat) + self.cfg.eps)


@dataclass
class TrainLog:
    layers: int
    rows: list[dict] = field(default_factory=list)

    def header(self) -> list[str]:
        return (
            ["step", "task_loss"]
            + [f"j_layer_{layer}" for layer in range(self.layers)]
            + ["penalty", "total_loss", "eval_metric"]
        )

    def add_row(self, step, task_loss, per_layer_j, penalty, total, eval_metric):
        self.rows.append(
            {
                "step": step,
                "task_loss": task_loss,
                "per_layer_j": list(per_layer_j),
                "penalty": penalty,
                "total_loss": total,
                "eval_metric": eval_metric,
            }
        )

    def csv_rows(self):
        for row in self.rows:
            yield [row["step"], row["task_loss"], *row["per_layer_j"], row["penalty"], row["total_loss"], row["eval_metric"]]

    def to_csv(self, path) -> None:
        atomic_write_csv(path, self.header(), self.csv_rows())


def evaluate(model: Model, dataset: Dataset) -> float:
    """Test accuracy (classification) or test MSE (regression)."""
    outputs = predict(model, dataset.test_inputs)
    if model.config.out_kind == CLASSIFICATION:
        return float(np.mean(np.argmax(outputs, axis=1) == dataset.test_targets))
    return float(np.mean((outputs - dataset.test_targets) ** 2))


def batch_indices(dataset: Dataset, step: int, batch_size: int) -> list[int]:
    """Batch membership for one step; sorted so aggregation order is fixed."""
    size = dataset.train_inputs.shape[0]
    take = min(batch_size, size)
    rng = Rng(derive_seed(dataset.spec.dataset_seed, "batch", step))
    return sorted(rng.sample_without_replacement(size, take))


def train(
    model: Model,
    dataset: Dataset,
    optimizer: OptimizerConfig | Optimizer,
    steps: int,
    log_every: int = 50,
    batch_size: int = 32,
    start_step: int = 0,
) -> TrainLog:
    """Minimize task loss plus the squared-objective penalty.

    Logs every ``log_every`` steps and at the final step; raises
    DivergenceError (carrying the last logged row) past the loss limit.
    """
    opt = optimizer if isinstance(optimizer, Optimizer) else Optimizer(optimizer)
    log = TrainLog(layers=model.config.layers)
    for step in range(start_step, steps):
        idx = batch_indices(dataset, step, batch_size)
        batch = (dataset.train_inputs[idx], dataset.train_targets[idx])
        loss, tape, report = forward_loss(model, batch)
        if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"loss {loss} exceeded {DIVERGENCE_LIMIT} at step {step}",
                last_row=log.rows[-1] if log.rows else None,
            )
        grads = backward(tape)
        opt.update(model.params, grads)
        done = step + 1
        if done % log_every == 0 or done == steps:
            metric = evaluate(model, dataset)
            log.add_row(done, report.task_loss, report.per_layer_j, report.penalty, report.total, metric)
    return log


def _tensor_filename(name: str) -> str:
    return name.replace("/", "_") + ".csv"


def _save_tensor(directory, name, arr) -> dict:
    as2d = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    save_matrix_csv(os.path.join(directory, _tensor_filename(name)), as2d)
    return {"shape": list(np.asarray(arr).shape), "file": _tensor_filename(name)}


def _load_tensor(directory, entry) -> np.ndarray:
    arr = load_matrix_csv(os.path.join(directory, entry["file"]))
    return arr.reshape(entry["shape"])


def save_checkpoint(directory, model: Model, opt: Optimizer, step: int) -> None:
    """Flat manifest: tensor name -> shape + CSV file, plus optimizer state."""
    ensure_dir(directory)
    manifest = {
        "schema": 1,
        "step": step,
        "init_seed": model.init_seed,
        "tensors": {},
        "optimizer": {"kind": opt.cfg.kind, "t": opt.t, "m": {}, "v": {}},
    }
    for name, arr in model.params.items():
        manifest["tensors"][name] = _save_tensor(directory, name, arr)
    for slot in ("m", "v"):
        for name, arr in getattr(opt, slot).items():
            manifest["optimizer"][slot][name] = _save_tensor(directory, f"opt.{slot}.{name}", arr)
    atomic_write_json(os.path.join(directory, "manifest.json"), manifest)


def load_checkpoint(directory, config, opt_cfg: OptimizerConfig) -> tuple[Model, Optimizer, int]:
    with open(os.path.join(directory, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    params = {name: _load_tensor(directory, entry) for name, entry in manifest["tensors"].items()}
    model = Model(config=config, params=params, init_seed=manifest.get("init_seed", 0))
    opt = Optimizer(opt_cfg)
    opt.t = manifest["optimizer"]["t"]
    for slot in ("m", "v"):
        holder = getattr(opt, slot)
        for name, entry in manifest["optimizer"][slot].items():
            holder[name] = _load_tensor(directory, entry)
    return model, opt, manifest["step"]
