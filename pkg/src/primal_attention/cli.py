"""Command-line entry point.

    verify   - run the randomized certified-identity grid, emit a JSON report
    train    - train a model on a synthetic task, emit CSV log + checkpoint
    spectrum - singular spectrum of a matrix file or a trained layer's kernel
    bench    - wall-time / FLOP / buffer comparison of the mechanisms

Every command takes `--config <json> --out <dir> [--seed <u64>]`, writes
only inside the output directory (whole-file atomic writes), and echoes
its resolved configuration there. Exit codes: 0 success, 1 failed check
or divergence, 2 usage/config errors. Report CSVs get a rendered PNG
figure next to them; the CSV is the contract, the figure a convenience.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .analysis import model_kernel_matrix, run_verification_grid
from .bench import BENCH_CSV_HEADER, BenchConfig, bench_csv_rows, run_bench
from .config import run_config_from_dict, run_config_to_dict
from .errors import ConfigError, DivergenceError
from .ioutil import atomic_write_csv, atomic_write_json, ensure_dir
from .linalg import load_matrix_csv
from .model import Model
from .plots import render_bench_figure, render_spectrum_figure, render_train_figure
from .spectrum import SPECTRUM_CSV_HEADER, compute_spectrum, spectrum_csv_rows
from .tasks import make_task, save_dataset_csv
from .train import Optimizer, load_checkpoint, save_checkpoint, train


def _load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_verify(raw: dict, out: str, seed: int | None) -> int:
    if seed is not None:
        raw = dict(raw, seed=seed)
    result = run_verification_grid(raw)
    atomic_write_json(os.path.join(out, "config.json"), result["grid"])
    atomic_write_json(os.path.join(out, "verify_report.json"), result)
    if result["all_passed"]:
        return 0
    failing = [c["case"] for c in result["cases"] if not c["all_passed"]]
    names = sorted({name for c in result["cases"] for name in c["failing"]})
    print(f"verification failed for cases {failing[:8]}...: checks {names}", file=sys.stderr)
    return 1


def _run_single_training(run_cfg, out: str) -> int:
    dataset = make_task(run_cfg.task)
    if run_cfg.cache_dataset:
        save_dataset_csv(dataset, os.path.join(out, "dataset"))
    if run_cfg.resume_from:
        model, opt, start_step = load_checkpoint(run_cfg.resume_from, run_cfg.model, run_cfg.optimizer)
    else:
        model = Model.build(run_cfg.model, init_seed=run_cfg.init_seed)
        opt = Optimizer(run_cfg.optimizer)
        start_step = 0
    try:
        log = train(
            model,
            dataset,
            opt,
            steps=run_cfg.steps,
            log_every=run_cfg.log_every,
            batch_size=run_cfg.batch_size,
            start_step=start_step,
        )
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    log.to_csv(os.path.join(out, "trainlog.csv"))
    render_train_figure(log, os.path.join(out, "training_curves.png"))
    save_checkpoint(os.path.join(out, "checkpoint"), model, opt, run_cfg.steps)
    return 0


def _cmd_train(raw: dict, out: str, seed: int | None) -> int:
    run_cfg = run_config_from_dict(raw, seed_override=seed)
    atomic_write_json(os.path.join(out, "config.json"), run_config_to_dict(run_cfg))
    if not run_cfg.eta_sweep:
        return _run_single_training(run_cfg, out)
    status = 0
    for eta in run_cfg.eta_sweep:
        sub = os.path.join(out, f"eta_{eta:g}")
        ensure_dir(sub)
        sub_cfg = dataclasses.replace(
            run_cfg,
            model=dataclasses.replace(run_cfg.model, eta=eta),
            eta_sweep=(),
        )
        atomic_write_json(os.path.join(sub, "config.json"), run_config_to_dict(sub_cfg))
        status = max(status, _run_single_training(sub_cfg, sub))
    return status


def _cmd_spectrum(raw: dict, out: str, seed: int | None) -> int:
    source = raw.get("source")
    if not isinstance(source, dict) or "kind" not in source:
        raise ConfigError("spectrum config needs a source object with a kind")
    if source["kind"] == "file":
        matrix = load_matrix_csv(source["path"])
    elif source["kind"] == "model":
        run_dir = source["run_dir"]
        run_cfg = run_config_from_dict(_load_json(os.path.join(run_dir, "config.json")))
        dataset = make_task(run_cfg.task)
        model, _, _ = load_checkpoint(os.path.join(run_dir, "checkpoint"), run_cfg.model, run_cfg.optimizer)
        batch_seed = int(source.get("batch_seed", 0)) if seed is None else seed
        matrix = model_kernel_matrix(
            model, dataset, int(source.get("layer", 0)), int(source.get("head", 0)), batch_seed
        )
    else:
        raise ConfigError(f"unknown spectrum source kind: {source['kind']!r}")
    report = compute_spectrum(matrix)
    atomic_write_json(os.path.join(out, "config.json"), raw)
    atomic_write_csv(os.path.join(out, "spectrum.csv"), SPECTRUM_CSV_HEADER, spectrum_csv_rows(report))
    atomic_write_json(
        os.path.join(out, "spectrum_summary.json"),
        {"schema": 1, "effective_rank": {f"{tau:g}": rank for tau, rank in report.effective_ranks.items()}},
    )
    render_spectrum_figure(report, os.path.join(out, "spectrum.png"))
    return 0


def _cmd_bench(raw: dict, out: str, seed: int | None) -> int:
    section = dict(raw)
    if seed is not None:
        section["seed"] = seed
    for key in ("n_list", "mechanisms"):
        if key in section:
            section[key] = tuple(section[key])
    cfg = BenchConfig(**section)
    rows = run_bench(cfg)
    atomic_write_json(os.path.join(out, "config.json"), {**section, "n_list": list(cfg.n_list), "mechanisms": list(cfg.mechanisms)})
    atomic_write_csv(os.path.join(out, "bench.csv"), BENCH_CSV_HEADER, bench_csv_rows(rows))
    render_bench_figure(rows, os.path.join(out, "bench.png"))
    return 0


_COMMANDS = {
    "verify": _cmd_verify,
    "train": _cmd_train,
    "spectrum": _cmd_spectrum,
    "bench": _cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="primal-attention",
        description="primal-representation attention: verification, training, spectrum and efficiency analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("verify", "run the certified-identity verification grid"),
        ("train", "train a toy model on a synthetic sequence task"),
        ("spectrum", "singular spectrum of a matrix or trained-layer kernel"),
        ("bench", "compare wall time, FLOPs and buffer bytes per mechanism"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON config")
        cmd.add_argument("--out", required=True, help="output directory (all writes go here)")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = _load_json(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        ensure_dir(args.out)
        return _COMMANDS[args.command](raw, args.out, args.seed)
    except (ConfigError, FileNotFoundError, TypeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
