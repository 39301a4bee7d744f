"""Wall-time and operation-count comparison of the attention mechanisms.

For each (mechanism, N) the benchmark reports the median wall time over
the configured repeats, the instrumented FLOP count of one forward, and a
closed-form model of the resident buffer bytes of the mixing computation.
Timings depend on the machine; FLOP and byte columns are deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import flops
from .attention import (
    DATA_DEPENDENT,
    DATA_INDEPENDENT,
    HeadParams,
    OutputMap,
    canonical_forward,
    primal_forward,
)
from .errors import ConfigError
from .features import COSINE, FeatureMapSpec, ProjectionSet
from .rng import Rng

MECHANISMS = ("canonical", "primal_data_independent", "primal_data_dependent")
BENCH_CSV_HEADER = ["mechanism", "n", "median_wall_time_s", "flops", "buffer_bytes"]


@dataclass(frozen=True)
class BenchConfig:
    n_list: tuple[int, ...] = (2048, 4096)
    d: int = 64
    s: int = 32
    d_v: int = 64
    heads: int = 1
    repeats: int = 20
    rank_multi: int = 10
    seed: int = 0
    mechanisms: tuple[str, ...] = ("canonical", "primal_data_independent")

    def __post_init__(self):
        if list(self.n_list) != sorted(self.n_list):
            raise ConfigError("n_list must be ascending")
        if any(m not in MECHANISMS for m in self.mechanisms):
            raise ConfigError(f"mechanisms must be among {MECHANISMS}")
        if self.repeats < 1 or self.heads < 1:
            raise ConfigError("repeats and heads must be positive")


def _build_case(cfg: BenchConfig, mechanism: str, n: int):
    rng = Rng(cfg.seed).derive(mechanism, n)
    d, s, d_v = cfg.d, cfg.s, cfg.d_v
    x = rng.normals((n, d))
    w_q = rng.normals((d, d)) / np.sqrt(d)
    w_k = rng.normals((d, d)) / np.sqrt(d)
    if mechanism == "canonical":
        ps = ProjectionSet(w_q=w_q, w_k=w_k, w_v=rng.normals((d_v, d)) / np.sqrt(d))
        return x, lambda: canonical_forward(x, ps)
    mode = DATA_INDEPENDENT if mechanism == "primal_data_independent" else DATA_DEPENDENT
    rows = d if mode == DATA_INDEPENDENT else min(s * cfg.rank_multi, n)
    params = HeadParams(
        projections=ProjectionSet(w_q=w_q, w_k=w_k),
        w_e=rng.normals((rows, s)) / np.sqrt(rows),
        w_r=rng.normals((rows, s)) / np.sqrt(rows),
        lambda_raw=np.zeros(s),
        mode=mode,
        rank_multi=cfg.rank_multi,
        subsample_seed=cfg.seed,
    )
    fmap = FeatureMapSpec(kind=COSINE, dim=d)
    out_map = OutputMap(w_o=rng.normals((d_v, 2 * s)) / np.sqrt(2 * s))
    return x, lambda: primal_forward(x, params, fmap, out_map)


def run_bench(cfg: BenchConfig) -> list[dict]:
    rows = []
    for mechanism in cfg.mechanisms:
        for n in cfg.n_list:
            _, forward = _build_case(cfg, mechanism, n)
            with flops.count_flops() as counter:
                forward()  # warm-up doubles as the instrumented count
            samples = []
            for _ in range(cfg.repeats):
                start = time.perf_counter()
                forward()
                samples.append(time.perf_counter() - start)
            samples.sort()
            mid = len(samples) // 2
            median = samples[mid] if len(samples) % 2 else 0.5 * (samples[mid - 1] + samples[mid])
            per_head_flops = counter.total
            if mechanism == "canonical":
                buffer_bytes = flops.canonical_buffer_bytes(n, cfg.d_v)
            else:
                buffer_bytes = flops.primal_buffer_bytes(n, cfg.d, cfg.s, cfg.d_v)
            rows.append(
                {
                    "mechanism": mechanism,
                    "n": n,
                    "median_wall_time_s": median * cfg.heads,
                    "flops": per_head_flops * cfg.heads,
                    "buffer_bytes": buffer_bytes * cfg.heads,
                }
            )
    return rows


def bench_csv_rows(rows: list[dict]):
    for row in rows:
        yield [row["mechanism"], row["n"], row["median_wall_time_s"], row["flops"], row["buffer_bytes"]]
