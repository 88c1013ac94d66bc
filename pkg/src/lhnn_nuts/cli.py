"""Command line entry point: ``lhnn-nuts {train,sample,benchmark,diagnose}``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime failure.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import io
from .config import load_benchmark_config, load_run_config
from .diagnostics import ess, mode_occupancy
from .errors import ConfigError, TrainingDivergence
from .pipeline import (
    burn_in,
    checkpoint_meta,
    hamiltonian_traces,
    run_benchmark,
    sample_from_config,
    summarize_chain,
    train_from_config,
)
from .targets import GaussianMixture

log = logging.getLogger("lhnn_nuts")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    """Bad command line input, reported with exit code 1."""


def _out_dir(args, cfg_output, default):
    out = args.out or cfg_output or default
    os.makedirs(out, exist_ok=True)
    return out


def _emit(path, cfg, **extra):
    io.write_meta(path, cfg.hash, cfg.seed, **extra)


def cmd_train(args):
    cfg = load_run_config(args.config, args.seed)
    out = _out_dir(args, cfg.output, "run")
    outcome = train_from_config(cfg)
    meta = checkpoint_meta(cfg, outcome)

    ckpt = os.path.join(out, "checkpoint.json")
    io.save_checkpoint(ckpt, outcome.net, meta)
    _emit(ckpt, cfg)
    hist = os.path.join(out, "history.csv")
    io.write_history_csv(hist, outcome.result.initial_loss, outcome.result.history)
    _emit(hist, cfg)
    data = os.path.join(out, "dataset.csv")
    outcome.dataset.save(data)
    _emit(data, cfg)
    ledger = os.path.join(out, "ledger.json")
    io.write_json(ledger, {"exact_gradients": 0, "surrogate_evals": 0, "harvest_gradients": outcome.harvest_gradients})
    _emit(ledger, cfg)
    print(f"checkpoint: {ckpt}")
    print(f"harvest gradients: {outcome.harvest_gradients}  final loss: {outcome.result.final_loss:.6g}")
    return EXIT_OK


def _load_net_for(cfg, checkpoint):
    if cfg.sampler.mode == "classical":
        return None, 0
    if not checkpoint:
        raise UsageError(
            f"sampler mode {cfg.sampler.mode!r} needs a trained network: pass --checkpoint PATH "
            "(create one with `lhnn-nuts train --config ...`)"
        )
    try:
        net, meta = io.load_checkpoint(checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load checkpoint {checkpoint}: {exc}") from exc
    if net.dim != cfg.target.dim:
        raise UsageError(f"checkpoint network has d={net.dim} but target dim is {cfg.target.dim}")
    return net, int(meta.get("harvest_gradients", 0))


def cmd_sample(args):
    cfg = load_run_config(args.config, args.seed)
    net, harvest = _load_net_for(cfg, args.checkpoint)
    out = _out_dir(args, cfg.output, "run")
    result = sample_from_config(cfg, net)

    chain = os.path.join(out, "chain.csv")
    io.write_chain_csv(chain, result)
    _emit(chain, cfg, mode=result.mode, checkpoint=args.checkpoint)
    ledger = os.path.join(out, "ledger.json")
    io.write_json(ledger, result.ledger(harvest))
    _emit(ledger, cfg, mode=result.mode)
    summary = os.path.join(out, "summary.json")
    io.write_json(summary, summarize_chain(result, cfg.target, cfg.report, harvest))
    _emit(summary, cfg, mode=result.mode)
    print(f"chain: {chain} ({result.n_samples} samples, {result.wall_time:.1f}s)")
    print(f"exact gradients: {result.exact_gradients}  surrogate evals: {result.surrogate_evals}")
    return EXIT_OK


def cmd_benchmark(args):
    bcfg = load_benchmark_config(args.config, args.seed)
    out = _out_dir(args, bcfg.output, "benchmark")
    rows, text = run_benchmark(bcfg, out)
    print(text, end="")
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_RUNTIME


def cmd_diagnose(args):
    cfg = load_run_config(args.config, args.seed) if args.config else None
    if not args.chains and cfg is None:
        raise UsageError("diagnose needs at least one chain CSV or a --config for Hamiltonian traces")
    out = _out_dir(args, None, "diagnose")
    report = cfg.report if cfg else None
    burn_fraction = args.burn_in if args.burn_in is not None else (report["burn_in_fraction"] if report else 0.05)
    meta_hash = cfg.hash if cfg else None
    meta_seed = cfg.seed if cfg else args.seed

    summary = {}
    positions = []
    for path in args.chains:
        try:
            chain = io.read_chain_csv(path)
        except (OSError, ValueError, KeyError, StopIteration) as exc:
            raise UsageError(f"cannot read chain {path}: {exc}") from exc
        samples = chain["samples"]
        b = burn_in({"burn_in_fraction": burn_fraction}, samples.shape[0])
        kept = samples[b:]
        stem = os.path.splitext(os.path.basename(path))[0]
        entry = {"n_samples": int(samples.shape[0]), "burn_in": b, "fallback_samples": int(chain["fallback"].sum())}
        if kept.shape[0] >= 10:
            entry["ess"] = ess(kept).to_dict()
        if cfg is not None and isinstance(cfg.target, GaussianMixture) and kept.shape[0]:
            entry["mode_occupancy"] = mode_occupancy(kept, cfg.target.means).tolist()
        summary[stem] = entry
        scatter = os.path.join(out, f"scatter_{stem}.csv")
        io.write_scatter_csv(scatter, kept)
        io.write_meta(scatter, meta_hash, meta_seed, source=os.path.abspath(path))
        positions.append(kept)

    if cfg is not None and cfg.report["trace_states"] > 0:
        net = None
        if args.checkpoint:
            net, _ = _load_net_for(cfg, args.checkpoint) if cfg.sampler.mode != "classical" else io.load_checkpoint(args.checkpoint)
        rng = np.random.default_rng(cfg.seed)
        pool = np.concatenate(positions) if positions else None
        n = cfg.report["trace_states"]
        if pool is not None and pool.shape[0]:
            starts = pool[rng.choice(pool.shape[0], size=n)]
        else:
            starts = rng.standard_normal((n, cfg.target.dim))
        traces, wander = hamiltonian_traces(
            cfg.target, cfg.sampler.step_size, cfg.report["trace_steps"], starts, rng, net=net, masses=cfg.sampler.masses
        )
        trace_path = os.path.join(out, "hamiltonian_traces.csv")
        io.write_trace_csv(trace_path, traces)
        io.write_meta(trace_path, meta_hash, meta_seed)
        summary["hamiltonian_wander"] = wander

    path = os.path.join(out, "diagnostics.json")
    io.write_json(path, summary)
    io.write_meta(path, meta_hash, meta_seed)
    print(f"diagnostics: {path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lhnn-nuts", description="NUTS with latent Hamiltonian neural network gradients.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON run config")
        p.add_argument("--out", help="output directory (default: config 'output')")
        p.add_argument("--seed", type=int, help="override the config seed and every derived seed")

    p = sub.add_parser("train", help="harvest exact trajectories and train a network")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="run NUTS in the configured mode")
    common(p)
    p.add_argument("--checkpoint", help="trained network (required for lhnn modes)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("benchmark", help="classical vs LHNN-NUTS table over several targets")
    common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("diagnose", help="ESS, scatter and Hamiltonian-trace CSVs from existing chains")
    common(p, config_required=False)
    p.add_argument("--checkpoint", help="network for surrogate Hamiltonian traces")
    p.add_argument("--burn-in", type=float, help="burn-in fraction (default: config or 0.05)")
    p.add_argument("chains", nargs="*", help="chain CSV files")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for err in exc.errors:
            print(f"  - {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingDivergence as exc:
        print(f"training diverged at epoch {exc.epoch} (loss {exc.loss})", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
