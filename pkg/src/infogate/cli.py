#!/usr/bin/env python3
"""Command-line entry point: data generation, training, probing, sweeps,
mask rendering and the gradient self-check."""

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv
from tqdm import tqdm

from . import __version__
from .config.manager import ConfigManager, RunConfig, config_hash, parse_override
from .diffcore.gradcheck import run_gradcheck_suite
from .diffcore.params import load_param_sets, save_param_sets
from .errors import DatasetFormatError, InfoGateError, NumericalAbort, ValidationError
from .nets.networks import Models
from .trainer.loop import train
from .trainer.probes import bc_probe, eval_masks, mask_gates, policy_rollout
from .trainer.sweep import lambda_sweep, summarize, write_sweep_csv
from .utils.file_manager import prepare_output_dir, resolve_input, write_json
from .utils.images import render_mask_pgm, render_overlay_ppm
from .utils.logger import setup_logging
from .utils.rng import RngStreams
from .worldgen.dataset import generate_dataset, load_dataset

logger = logging.getLogger(__name__)

COMMANDS = ("gen-data", "train", "probe", "sweep", "render-masks", "gradcheck")
EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
# Held-out episodes use seeds disjoint from the training episodes.
EVAL_SEED_OFFSET = 1_000_003
TOP_LEVEL_FLAGS = ("seed", "outdir", "log_level")


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises instead of exiting on bad arguments."""

    def error(self, message):
        raise ValidationError(message)


def build_parser() -> ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="Run seed (overrides config and INFOGATE_SEED)")
    common.add_argument("--outdir", help="Output root; artifacts go to <outdir>/<command>/<config-hash>/")
    common.add_argument("--log-level", dest="log_level", type=str.upper,
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    common.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="Override any configuration field, e.g. --set gate.warmup=100")

    parser = ArgumentParser(
        prog="infogate",
        description="InfoGate - learned noise gates for representation learning",
        epilog="""
Examples:
  infogate gen-data --seed 7                         # Generate training and held-out datasets
  infogate train --dataset train.igds --lambda 0.1   # Cooperative inverse-dynamics training
  infogate train --dataset train.igds --mode adversarial --reverse-mask
  infogate probe --params params.igps --dataset train.igds --eval-dataset eval.igds
  infogate sweep --dataset train.igds --eval-dataset eval.igds --lambdas 0.01 0.1 1 10
  infogate render-masks --params params.igps --dataset eval.igds --count 8
  infogate gradcheck --seeds 100                     # Finite-difference self-check

Configuration:
  - Defaults < JSON file (--config) < INFOGATE_* environment / .env < flags < --set
  - Every artifact records the config hash of the run that produced it
        """,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"InfoGate {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    sub.required = True

    gen = sub.add_parser("gen-data", parents=[common], help="Generate IGDS datasets")
    gen.add_argument("--episodes", dest="data.episodes", type=int)
    gen.add_argument("--eval-episodes", dest="data.eval_episodes", type=int)
    gen.add_argument("--level", dest="env.level", choices=("none", "easy", "medium", "hard"))
    gen.add_argument("--policy", dest="data.policy")
    gen.add_argument("--workers", dest="data.workers", type=int)

    tr = sub.add_parser("train", parents=[common], help="Train encoder, heads and gates")
    _add_dataset_flags(tr)
    tr.add_argument("--objective", dest="train.objective")
    tr.add_argument("--steps", dest="train.steps", type=int)
    tr.add_argument("--mode", dest="gate.mode", choices=("cooperative", "adversarial"))
    tr.add_argument("--location", dest="gate.location", choices=("input", "feature"))
    tr.add_argument("--lambda", dest="lam", type=float, help="Constant sparsity weight")
    tr.add_argument("--reverse-mask", dest="train.reverse_mask", action="store_const", const=True)

    pr = sub.add_parser("probe", parents=[common], help="Behaviour-cloning probe over a trained encoder")
    _add_dataset_flags(pr)
    pr.add_argument("--params", dest="paths.params")
    pr.add_argument("--gated", dest="probe.gated", action="store_const", const=True)
    pr.add_argument("--rollout-episodes", dest="probe.rollout_episodes", type=int)
    pr.add_argument("--with-mask-report", dest="with_mask_report", action="store_true")

    sw = sub.add_parser("sweep", parents=[common], help="Sparsity-weight sweep")
    _add_dataset_flags(sw)
    sw.add_argument("--lambdas", dest="sweep.lambdas", type=float, nargs="+")
    sw.add_argument("--seeds", dest="sweep.seeds", type=int, nargs="+")

    rm = sub.add_parser("render-masks", parents=[common], help="Write gate maps as PGM/PPM images")
    _add_dataset_flags(rm)
    rm.add_argument("--params", dest="paths.params")
    rm.add_argument("--count", dest="count", type=int, default=8)

    gc = sub.add_parser("gradcheck", parents=[common], help="Finite-difference check of every primitive")
    gc.add_argument("--seeds", dest="gradcheck_seeds", type=int, default=100)
    gc.add_argument("--depth", dest="gradcheck_depth", type=int, default=8)
    gc.add_argument("--float32", dest="float32", action="store_true",
                    help="Analytic gradients in 32-bit (tolerance 1e-4)")
    return parser


def _add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", dest="paths.dataset")
    parser.add_argument("--eval-dataset", dest="paths.eval_dataset")
    parser.add_argument("--expert-dataset", dest="paths.expert_dataset")


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Flag values that map onto configuration fields; ``--set`` entries win."""
    overrides: Dict[str, Any] = {}
    for key, value in vars(args).items():
        if value is None:
            continue
        if key in TOP_LEVEL_FLAGS or "." in key:
            overrides[key] = value
    if getattr(args, "lam", None) is not None:
        overrides["gate.schedule"] = {"kind": "constant", "start": args.lam, "end": args.lam}
    for item in getattr(args, "overrides", None) or []:
        key, value = parse_override(item)
        overrides[key] = value
    return overrides


def load_run_config(args: argparse.Namespace) -> RunConfig:
    manager = ConfigManager(getattr(args, "config", None))
    config = manager.apply_overrides(manager.load_config(), collect_overrides(args))
    manager.validate_config(config)
    return config


def _dataset(path: str, what: str):
    return load_dataset(resolve_input(path, what))


def _optional_dataset(path: str, what: str):
    return _dataset(path, what) if path else None


def _models(config: RunConfig) -> Models:
    return Models.from_state(config.nets, load_param_sets(resolve_input(config.paths.params, "params")))


def cmd_gen_data(config: RunConfig, args, out: Path, chash: str) -> int:
    data = config.data
    train_set = generate_dataset(config.env, data.episodes, data.horizon_cap, data.policy, seed=config.seed,
                                 epsilon=data.epsilon, eval_mode=data.eval_mode, workers=data.workers,
                                 config_hash=chash)
    eval_set = generate_dataset(config.env, data.eval_episodes, data.horizon_cap, data.policy,
                                seed=config.seed + EVAL_SEED_OFFSET, epsilon=data.epsilon, eval_mode=True,
                                workers=data.workers, config_hash=chash)
    train_path = train_set.save(out / "train.igds")
    eval_path = eval_set.save(out / "eval.igds")
    print(f"✅ Training dataset: {train_path} ({len(train_set)} records)")
    print(f"✅ Held-out dataset: {eval_path} ({len(eval_set)} records)")
    return EXIT_OK


def cmd_train(config: RunConfig, args, out: Path, chash: str) -> int:
    dataset = _dataset(config.paths.dataset, "dataset")
    eval_dataset = _optional_dataset(config.paths.eval_dataset, "eval dataset")
    result = train(config.train, config.gate, config.nets, dataset, seed=config.seed,
                   eval_dataset=eval_dataset, config_hash=chash, probe_cfg=config.probe)
    save_param_sets(out / "params.igps", result.models.param_sets())
    if result.reverse_encoder is not None:
        save_param_sets(out / "reverse_params.igps",
                        {"encoder": result.reverse_encoder.params, "heads": result.reverse_heads.params})
    result.runlog.write_jsonl(out / "runlog.jsonl")
    result.runlog.write_csv(out / "steps.csv", out / "evals.csv")
    final = result.runlog.final
    print(f"✅ Parameters: {out / 'params.igps'}")
    print(f"📊 Final task loss {final.get('task', float('nan')):.5f}, mean gate {final.get('mean_gate', 1.0):.4f}")
    return EXIT_OK


def cmd_probe(config: RunConfig, args, out: Path, chash: str) -> int:
    models = _models(config)
    train_set = _dataset(config.paths.expert_dataset or config.paths.dataset, "expert dataset")
    eval_set = _dataset(config.paths.eval_dataset, "eval dataset")
    mask_net = models.mask_net if config.gate.location == "input" else models.feature_mask_net
    result = bc_probe(models.encoder, train_set, eval_set, config.probe, RngStreams.from_seed(config.seed).probe,
                      mask_net=mask_net, gate_cfg=config.gate)
    record: Dict[str, Any] = {"config_hash": chash, "seed": config.seed, "accuracy": result.accuracy,
                              "train_accuracy": result.train_accuracy}
    if config.probe.rollout_episodes > 0:
        rollout = policy_rollout(models.encoder, result.head, config.env, config.probe.rollout_episodes,
                                 seed=config.seed + EVAL_SEED_OFFSET)
        record["rollout"] = asdict(rollout)
    if getattr(args, "with_mask_report", False):
        if models.mask_net is None:
            raise ValidationError("Parameter file has no input mask network to report on")
        record["mask"] = eval_masks(models.mask_net, eval_set).as_dict()
    path = write_json(out / "probe.json", record)
    print(f"✅ Probe accuracy {result.accuracy:.4f} (train {result.train_accuracy:.4f})")
    print(f"📝 Record: {path}")
    return EXIT_OK


def cmd_sweep(config: RunConfig, args, out: Path, chash: str) -> int:
    dataset = _dataset(config.paths.dataset, "dataset")
    eval_dataset = _dataset(config.paths.eval_dataset, "eval dataset")
    expert = _optional_dataset(config.paths.expert_dataset, "expert dataset")
    rows = lambda_sweep(config.train, config.gate, config.nets, config.probe, config.sweep.lambdas,
                        config.sweep.seeds, dataset, eval_dataset, expert)
    path = write_sweep_csv(rows, out / "sweep.csv", chash)
    write_json(out / "summary.json", {"config_hash": chash, "lambdas": summarize(rows)})
    for row in summarize(rows):
        print(f"📊 lambda={row['lambda']:g}  mean_gate={row['mean_gate']:.4f}  "
              f"accuracy={row['probe_accuracy']:.4f}")
    print(f"✅ Sweep table: {path}")
    return EXIT_OK


def cmd_render_masks(config: RunConfig, args, out: Path, chash: str) -> int:
    models = _models(config)
    if models.mask_net is None:
        raise ValidationError("Parameter file has no input mask network to render")
    dataset = _dataset(config.paths.eval_dataset or config.paths.dataset, "dataset")
    count = min(max(int(args.count), 1), len(dataset))
    obs = dataset.obs[:count]
    gates = mask_gates(models.mask_net, obs)
    for i in range(count):
        render_mask_pgm(gates[i], out / f"mask_{i:04d}.pgm")
        render_overlay_ppm(obs[i], gates[i], out / f"overlay_{i:04d}.ppm")
    print(f"✅ Rendered {count} masks to {out}")
    return EXIT_OK


def cmd_gradcheck(config: RunConfig, args, out: Path, chash: str) -> int:
    dtype = np.float32 if getattr(args, "float32", False) else np.float64

    def progress(it):
        return tqdm(it, desc="gradcheck", disable=None if config.train.progress else True, leave=False)

    report = run_gradcheck_suite(seeds=args.gradcheck_seeds, max_depth=args.gradcheck_depth,
                                 analytic_dtype=dtype, progress=progress)
    write_json(out / "gradcheck.json", {"config_hash": chash, "seeds": report.seeds, "tol": report.tol,
                                        "max_rel_error": report.max_rel_error, "composite_max": report.composite_max,
                                        "primitives": report.primitives, "passed": report.passed})
    worst = max(report.primitives, key=report.primitives.get)
    print(f"📊 Max relative error {report.max_rel_error:.3e} (worst primitive: {worst}, tolerance {report.tol:g})")
    if not report.passed:
        print("❌ Gradient check failed")
        return EXIT_INVALID
    print("✅ Gradient check passed")
    return EXIT_OK


HANDLERS: Dict[str, Callable[..., int]] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "probe": cmd_probe,
    "sweep": cmd_sweep,
    "render-masks": cmd_render_masks,
    "gradcheck": cmd_gradcheck,
}


def run(command: str, args: argparse.Namespace) -> int:
    """Run one command and map failures to exit codes.

    Returns:
        0 on success, 1 on validation or input errors, 2 on a numerical abort
    """
    handler = HANDLERS.get(command)
    if handler is None:
        print(f"❌ Unknown command '{command}' (expected one of: {', '.join(COMMANDS)})")
        return EXIT_INVALID
    try:
        config = load_run_config(args)
    except (FileNotFoundError, ValidationError) as exc:
        print(f"❌ Configuration error: {exc}")
        return EXIT_INVALID

    chash = config_hash(config)
    try:
        log_file = setup_logging(config.log_level, config.outdir, command)
        out = prepare_output_dir(config.outdir, command, chash)
        print(f"📝 Log file: {log_file}")
        print(f"📁 Output: {out}")
        logger.info("command_started | command=%s | config_hash=%s | seed=%d", command, chash, config.seed)
        return handler(config, args, out, chash)
    except NumericalAbort as exc:
        print(f"❌ Numerical abort: {exc}")
        return EXIT_NUMERICAL
    except DatasetFormatError as exc:
        print(f"❌ Unreadable input file: {exc}")
        return EXIT_INVALID
    except ValidationError as exc:
        print(f"❌ {exc}")
        return EXIT_INVALID
    except (InfoGateError, OSError) as exc:
        print(f"❌ Error: {exc}")
        return EXIT_INVALID


def execute(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv`` and run the selected command."""
    load_dotenv()
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
        return run(argv[0], argparse.Namespace())
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        print(f"❌ Invalid arguments: {exc}")
        return EXIT_INVALID
    return run(args.command, args)


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(execute(argv))


if __name__ == "__main__":
    main()
