"""End-to-end stages: harvest and train, sample, summarize, benchmark."""

import logging
import os
import time
import traceback
from dataclasses import dataclass, replace

import numpy as np

from . import io
from .diagnostics import (
    BenchmarkRow,
    degeneracy_score,
    energy_wander,
    ess,
    format_report,
    hamiltonian_trace,
    mode_occupancy,
    report_json,
)
from .sampler import nuts_sample
from .targets import GaussianMixture, PhaseState
from .train import harvest_training_data, train_lhnn

log = logging.getLogger(__name__)


@dataclass
class TrainOutcome:
    net: object
    result: object
    dataset: object

    @property
    def harvest_gradients(self):
        return int(self.dataset.meta["harvest_gradients"])


def train_from_config(cfg):
    t0 = time.perf_counter()
    dataset = harvest_training_data(cfg.target, cfg.harvest)
    log.info("harvested %d records for %d exact gradients", len(dataset), dataset.meta["harvest_gradients"])
    result = train_lhnn(dataset, cfg.train)
    log.info("trained for %d epochs: loss %.4g -> %.4g", len(result.history), result.initial_loss, result.final_loss)
    dataset.meta["wall_time"] = time.perf_counter() - t0
    return TrainOutcome(result.net, result, dataset)


def checkpoint_meta(cfg, outcome):
    from .train import _jsonable
    from dataclasses import asdict

    return {
        "seed": cfg.seed,
        "config_hash": cfg.hash,
        "target": cfg.raw.get("target"),
        "train": _jsonable(asdict(cfg.train)),
        "dataset_fingerprint": outcome.dataset.fingerprint(),
        "harvest_gradients": outcome.harvest_gradients,
        "n_records": len(outcome.dataset),
        "initial_loss": outcome.result.initial_loss,
        "final_loss": outcome.result.final_loss,
    }


def sample_from_config(cfg, net=None, mode=None):
    sampler_cfg = cfg.sampler if mode is None else replace(cfg.sampler, mode=mode)
    return nuts_sample(cfg.target, sampler_cfg, net=net)


def burn_in(cfg_report, n):
    return int(round(cfg_report["burn_in_fraction"] * n))


def summarize_chain(result, target, report, harvest_gradients=0):
    b = burn_in(report, result.n_samples)
    kept = result.samples[b:]
    out = {
        "mode": result.mode,
        "n_samples": result.n_samples,
        "burn_in": b,
        "ledger": result.ledger(harvest_gradients),
        "leapfrog_steps": int(result.leapfrog_steps),
        "fallback_samples": int(result.fallback.sum()),
        "divergent_starts": int(result.divergent_starts),
        "max_depth_hits": int(result.max_depth_hits),
        "mean_tree_depth": float(np.mean(result.tree_depth)),
        "wall_time": result.wall_time,
        "finite": bool(np.all(np.isfinite(result.samples))),
    }
    if kept.shape[0] >= 10:
        out["ess"] = ess(kept).to_dict()
    if kept.shape[0] >= 2:
        out["degeneracy_score"] = degeneracy_score(kept, report["degeneracy_radius"])
    if isinstance(target, GaussianMixture) and kept.shape[0]:
        out["mode_occupancy"] = mode_occupancy(kept, target.means).tolist()
    return out


def hamiltonian_traces(target, step_size, n_steps, initial_positions, rng, net=None, masses=None):
    """Exact-H traces from each start, with posterior and (if given) network gradients."""
    sqrt_m = np.ones(target.dim) if masses is None else np.sqrt(masses)
    states = [PhaseState(q, rng.standard_normal(target.dim) * sqrt_m) for q in initial_positions]
    traces = {"exact": [(k, hamiltonian_trace(target, z, step_size, n_steps, masses=masses)) for k, z in enumerate(states)]}
    if net is not None:
        traces["lhnn"] = [(k, hamiltonian_trace(target, z, step_size, n_steps, net=net, masses=masses)) for k, z in enumerate(states)]
    wander = {label: [energy_wander(tr) for _, tr in items] for label, items in traces.items()}
    return traces, wander


def run_benchmark_row(cfg, out_dir):
    """Classical NUTS and LHNN-NUTS on one target; failures become failed rows."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    try:
        t0 = time.perf_counter()
        classical = sample_from_config(cfg, mode="classical")
        b = burn_in(cfg.report, classical.n_samples)
        rows.append(
            BenchmarkRow(
                target=cfg.name,
                mode="classical",
                n_exact_gradients=classical.exact_gradients,
                ess=ess(classical.samples[b:]),
                wall_time=time.perf_counter() - t0,
                sampling_gradients=classical.exact_gradients,
                variant=cfg.report["ess_variant"],
            )
        )
        io.write_chain_csv(os.path.join(out_dir, "chain_classical.csv"), classical)
        io.write_meta(os.path.join(out_dir, "chain_classical.csv"), cfg.hash, cfg.seed, mode="classical")
    except Exception as exc:  # noqa: BLE001 - a failed stage must not stop the benchmark
        log.error("classical run for %s failed: %s", cfg.name, exc)
        rows.append(BenchmarkRow(cfg.name, "classical", 0, status="failed", error=f"{type(exc).__name__}: {exc}"))

    try:
        t0 = time.perf_counter()
        outcome = train_from_config(cfg)
        io.save_checkpoint(os.path.join(out_dir, "checkpoint.json"), outcome.net, checkpoint_meta(cfg, outcome))
        io.write_meta(os.path.join(out_dir, "checkpoint.json"), cfg.hash, cfg.seed)
        mode = cfg.sampler.mode if cfg.sampler.mode != "classical" else "lhnn_monitored"
        lhnn = sample_from_config(cfg, outcome.net, mode=mode)
        b = burn_in(cfg.report, lhnn.n_samples)
        rows.append(
            BenchmarkRow(
                target=cfg.name,
                mode=mode,
                n_exact_gradients=lhnn.exact_gradients + outcome.harvest_gradients,
                ess=ess(lhnn.samples[b:]),
                wall_time=time.perf_counter() - t0,
                sampling_gradients=lhnn.exact_gradients,
                harvest_gradients=outcome.harvest_gradients,
                surrogate_evals=lhnn.surrogate_evals,
                variant=cfg.report["ess_variant"],
                extra={"fallback_samples": int(lhnn.fallback.sum()), "final_loss": outcome.result.final_loss},
            )
        )
        io.write_chain_csv(os.path.join(out_dir, "chain_lhnn.csv"), lhnn)
        io.write_meta(os.path.join(out_dir, "chain_lhnn.csv"), cfg.hash, cfg.seed, mode=mode)
        io.write_json(os.path.join(out_dir, "ledger.json"), lhnn.ledger(outcome.harvest_gradients))
        io.write_meta(os.path.join(out_dir, "ledger.json"), cfg.hash, cfg.seed)
    except Exception as exc:  # noqa: BLE001
        log.error("LHNN run for %s failed: %s", cfg.name, exc)
        log.debug(traceback.format_exc())
        rows.append(BenchmarkRow(cfg.name, "lhnn_monitored", 0, status="failed", error=f"{type(exc).__name__}: {exc}"))
    return rows


def run_benchmark(bcfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for i, cfg in enumerate(bcfg.rows):
        rows.extend(run_benchmark_row(cfg, os.path.join(out_dir, f"{i:02d}_{cfg.name}")))
    text = format_report(rows)
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report_json(rows))
    for name in ("report.txt", "report.json"):
        io.write_meta(os.path.join(out_dir, name), bcfg.hash, bcfg.seed)
    return rows, text
