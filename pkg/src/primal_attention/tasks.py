"""Synthetic sequence tasks for the training harness.

Three desk-scale generators, each fully determined by a dataset seed:

* ``majority_token`` - classify which symbol group occurs most often.
  Tokens are uniform over the vocabulary; each token belongs to group
  ``token % classes`` and the label is the group with the highest count,
  ties resolved to the lowest group id. With ``classes == vocab`` this is
  exactly "label = majority symbol id".
* ``copy_first`` - the label is the first token.
* ``low_rank_regression`` - Gaussian inputs, targets X A B through a
  frozen rank-r factor pair.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .linalg import load_matrix_csv, save_matrix_csv
from .rng import Rng

MAJORITY_TOKEN = "majority_token"
COPY_FIRST = "copy_first"
LOW_RANK_REGRESSION = "low_rank_regression"
_KINDS = (MAJORITY_TOKEN, COPY_FIRST, LOW_RANK_REGRESSION)


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    n_positions: int
    dataset_seed: int = 0
    train_size: int = 512
    test_size: int = 256
    vocab: int = 8
    classes: int | None = None  # majority_token label groups; defaults to vocab
    input_dim: int = 8
    output_dim: int = 4
    target_rank: int = 2

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown task kind: {self.kind!r}")
        if self.n_positions < 1 or self.train_size < 1 or self.test_size < 1:
            raise ConfigError("sizes must be positive")
        if self.kind in (MAJORITY_TOKEN, COPY_FIRST) and self.vocab < 2:
            raise ConfigError("token tasks need vocab >= 2")
        if self.kind == MAJORITY_TOKEN:
            classes = self.vocab if self.classes is None else self.classes
            if not 2 <= classes <= self.vocab:
                raise ConfigError(f"classes must be in [2, vocab], got {classes}")
            object.__setattr__(self, "classes", classes)
        if self.kind == LOW_RANK_REGRESSION:
            if not 1 <= self.target_rank <= min(self.input_dim, self.output_dim):
                raise ConfigError("target_rank out of range")

    @property
    def label_count(self) -> int:
        if self.kind == MAJORITY_TOKEN:
            return self.classes
        if self.kind == COPY_FIRST:
            return self.vocab
        raise ConfigError("regression task has no label count")


@dataclass
class Dataset:
    spec: TaskSpec
    train_inputs: np.ndarray  # tokens (size, N) int64 or features (size, N, d)
    train_targets: np.ndarray  # labels (size,) or targets (size, N, out)
    test_inputs: np.ndarray
    test_targets: np.ndarray


def majority_label(tokens: np.ndarray, classes: int) -> int:
    groups = np.asarray(tokens, dtype=np.int64) % classes
    counts = np.bincount(groups, minlength=classes)
    return int(np.argmax(counts))  # argmax takes the lowest id on ties


def _token_sequences(rng: Rng, count: int, spec: TaskSpec) -> tuple[np.ndarray, np.ndarray]:
    tokens = np.empty((count, spec.n_positions), dtype=np.int64)
    for row in range(count):
        for col in range(spec.n_positions):
            tokens[row, col] = rng.below(spec.vocab)
    if spec.kind == MAJORITY_TOKEN:
        labels = np.array([majority_label(seq, spec.classes) for seq in tokens], dtype=np.int64)
    else:
        labels = tokens[:, 0].copy()
    return tokens, labels


def make_task(spec: TaskSpec) -> Dataset:
    """Generate the train/test splits; disjoint samples from one stream."""
    rng = Rng(spec.dataset_seed)
    total = spec.train_size + spec.test_size
    if spec.kind in (MAJORITY_TOKEN, COPY_FIRST):
        tokens, labels = _token_sequences(rng.derive("tokens"), total, spec)
        return Dataset(
            spec=spec,
            train_inputs=tokens[: spec.train_size],
            train_targets=labels[: spec.train_size],
            test_inputs=tokens[spec.train_size :],
            test_targets=labels[spec.train_size :],
        )
    factor_rng = rng.derive("factors")
    left = factor_rng.normals((spec.input_dim, spec.target_rank))
    right = factor_rng.normals((spec.target_rank, spec.output_dim))
    mapping = left @ right
    inputs = rng.derive("inputs").normals((total, spec.n_positions, spec.input_dim))
    targets = inputs @ mapping
    return Dataset(
        spec=spec,
        train_inputs=inputs[: spec.train_size],
        train_targets=targets[: spec.train_size],
        test_inputs=inputs[spec.train_size :],
        test_targets=targets[spec.train_size :],
    )


def target_mapping(spec: TaskSpec) -> np.ndarray:
    """The frozen input->target matrix of the regression task."""
    if spec.kind != LOW_RANK_REGRESSION:
        raise ConfigError("only the regression task has a target mapping")
    factor_rng = Rng(spec.dataset_seed).derive("factors")
    left = factor_rng.normals((spec.input_dim, spec.target_rank))
    right = factor_rng.normals((spec.target_rank, spec.output_dim))
    return left @ right


def save_dataset_csv(ds: Dataset, directory) -> None:
    """Cache the dataset under `directory` as CSV files plus a meta record."""
    os.makedirs(directory, exist_ok=True)
    meta = {"spec": ds.spec.__dict__, "kind": ds.spec.kind}
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    if ds.spec.kind in (MAJORITY_TOKEN, COPY_FIRST):
        for split, tokens, labels in (
            ("train", ds.train_inputs, ds.train_targets),
            ("test", ds.test_inputs, ds.test_targets),
        ):
            rows = np.concatenate([labels[:, None], tokens], axis=1).astype(np.float64)
            save_matrix_csv(os.path.join(directory, f"{split}.csv"), rows)
    else:
        for split, inputs, targets in (
            ("train", ds.train_inputs, ds.train_targets),
            ("test", ds.test_inputs, ds.test_targets),
        ):
            size = inputs.shape[0]
            save_matrix_csv(os.path.join(directory, f"{split}_x.csv"), inputs.reshape(size, -1))
            save_matrix_csv(os.path.join(directory, f"{split}_y.csv"), targets.reshape(size, -1))


def load_dataset_csv(directory) -> Dataset:
    with open(os.path.join(directory, "meta.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    spec = TaskSpec(**meta["spec"])
    if spec.kind in (MAJORITY_TOKEN, COPY_FIRST):
        parts = {}
        for split in ("train", "test"):
            rows = load_matrix_csv(os.path.join(directory, f"{split}.csv"))
            parts[split] = (rows[:, 1:].astype(np.int64), rows[:, 0].astype(np.int64))
        return Dataset(
            spec=spec,
            train_inputs=parts["train"][0],
            train_targets=parts["train"][1],
            test_inputs=parts["test"][0],
            test_targets=parts["test"][1],
        )
    parts = {}
    for split in ("train", "test"):
        x = load_matrix_csv(os.path.join(directory, f"{split}_x.csv"))
        y = load_matrix_csv(os.path.join(directory, f"{split}_y.csv"))
        size = x.shape[0]
        parts[split] = (
            x.reshape(size, spec.n_positions, spec.input_dim),
            y.reshape(size, spec.n_positions, spec.output_dim),
        )
    return Dataset(
        spec=spec,
        train_inputs=parts["train"][0],
        train_targets=parts["train"][1],
        test_inputs=parts["test"][0],
        test_targets=parts["test"][1],
    )
