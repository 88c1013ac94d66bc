"""Run configuration: JSON schema, validation and seed derivation.

A run config is a JSON object::

    {
      "seed": 0,
      "output": "runs/mixture",
      "target":  {"family": "gaussian_mixture", "dim": 2, ...},
      "network": {"hidden": [100, 100, 100], "activation": "sine", "latent_dim": 2},
      "harvest": {"n_trajectories": 300, "n_steps": 100, "step_size": 0.1, ...},
      "train":   {"epochs": 200, "batch_size": 512, "learning_rate": 0.003, ...},
      "sampler": {"n_samples": 20000, "step_size": 0.1, "mode": "lhnn_monitored", ...},
      "report":  {"burn_in_fraction": 0.05, "ess_variant": "min", ...}
    }

A benchmark config has the same top-level ``seed``/``output``/``report`` keys
and a non-empty ``targets`` list whose entries each carry ``name``,
``target``, ``network``, ``harvest``, ``train`` and ``sampler`` blocks.

Validation collects every problem before raising, and nothing is computed
until a config validates.
"""

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .sampler import SamplerConfig
from .targets import build_target, validate_target_spec
from .train import HarvestConfig, TrainConfig

NETWORK_KEYS = {"hidden", "activation", "latent_dim", "scalar_output", "seed"}
REPORT_DEFAULTS = {
    "burn_in_fraction": 0.05,
    "ess_variant": "min",
    "degeneracy_radius": 1e-3,
    "trace_states": 5,
    "trace_steps": 500,
}
ESS_VARIANTS = ("min", "mean")
TOP_KEYS = {"seed", "output", "target", "network", "harvest", "train", "sampler", "report", "name"}

# stream indices for derived seeds
_STREAMS = {"harvest": 1, "network": 2, "train": 3, "sampler": 4}


def derive_seed(seed, stream):
    return int(np.random.SeedSequence([int(seed), _STREAMS[stream]]).generate_state(1)[0])


def config_hash(raw):
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunConfig:
    raw: dict
    target: object
    harvest: HarvestConfig
    train: TrainConfig
    sampler: SamplerConfig
    report: dict
    seed: int = 0
    output: str = None
    name: str = None
    base_dir: str = None

    @property
    def hash(self):
        return config_hash(self.raw)

    def meta(self, **extra):
        out = {"config_hash": self.hash, "seed": self.seed}
        out.update(extra)
        return out


@dataclass
class BenchmarkConfig:
    raw: dict
    rows: list = field(default_factory=list)
    seed: int = 0
    output: str = None
    report: dict = None

    @property
    def hash(self):
        return config_hash(self.raw)


def _dataclass_block(cls, block, prefix, errors):
    if block is None:
        block = {}
    if not isinstance(block, dict):
        errors.append(f"{prefix}: expected an object")
        return cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(block) - names)
    for k in unknown:
        errors.append(f"{prefix}.{k}: unknown key")
    kwargs = {k: v for k, v in block.items() if k in names}
    if "box" in kwargs and isinstance(kwargs["box"], list):
        kwargs["box"] = tuple(kwargs["box"])
    try:
        obj = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{prefix}: {exc}")
        return cls()
    errors.extend(obj.validate(prefix))
    return obj


def _resolve_seeds(raw, seed_override):
    raw = copy.deepcopy(raw)
    if seed_override is not None:
        raw["seed"] = int(seed_override)
        for block in ("harvest", "train", "sampler", "network"):
            if isinstance(raw.get(block), dict):
                raw[block].pop("seed", None)
    return raw


def parse_run_block(raw, prefix="", base_dir=None, top_seed=0):
    """Validate one run block; returns ``(RunConfig or None, errors)``."""
    errors = []
    p = (prefix + ".") if prefix else ""
    for k in sorted(set(raw) - TOP_KEYS):
        errors.append(f"{p}{k}: unknown key")
    seed = raw.get("seed", top_seed)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append(f"{p}seed: must be a non-negative integer")
        seed = 0

    target = None
    t_errors = validate_target_spec(raw.get("target"), f"{p}target")
    errors.extend(t_errors)
    if not t_errors:
        try:
            target = build_target(raw["target"], base_dir)
        except ConfigError as exc:
            errors.extend(f"{p}{e}" if not e.startswith(f"{p}target") else e for e in exc.errors)
        except ValueError as exc:
            errors.append(f"{p}target: {exc}")

    harvest_block = dict(raw.get("harvest") or {})
    harvest_block.setdefault("seed", derive_seed(seed, "harvest"))
    harvest = _dataclass_block(HarvestConfig, harvest_block, f"{p}harvest", errors)

    net = raw.get("network") or {}
    train_block = dict(raw.get("train") or {})
    if not isinstance(net, dict):
        errors.append(f"{p}network: expected an object")
        net = {}
    for k in sorted(set(net) - NETWORK_KEYS):
        errors.append(f"{p}network.{k}: unknown key")
    for k in ("hidden", "activation", "scalar_output"):
        if k in net:
            train_block[k] = net[k]
    train_block.setdefault("seed", derive_seed(seed, "train"))
    train_block.setdefault("init_seed", net.get("seed", derive_seed(seed, "network")))
    train = _dataclass_block(TrainConfig, train_block, f"{p}train", errors)
    latent = net.get("latent_dim")
    if latent is not None and target is not None:
        expected = 1 if train.scalar_output else target.dim
        if latent != expected:
            errors.append(
                f"{p}network.latent_dim ({latent}) does not match {p}target.dim ({target.dim})"
                + (" (scalar_output forces 1)" if train.scalar_output else "")
            )

    sampler_block = dict(raw.get("sampler") or {})
    sampler_block.setdefault("seed", derive_seed(seed, "sampler"))
    sampler = _dataclass_block(SamplerConfig, sampler_block, f"{p}sampler", errors)
    if target is not None:
        if sampler.initial_position is not None and len(sampler.initial_position) != target.dim:
            errors.append(f"{p}sampler.initial_position: length {len(sampler.initial_position)} != target dim {target.dim}")
        for block_name, m in (("sampler", sampler.masses), ("harvest", harvest.masses)):
            if m is not None and len(m) != target.dim:
                errors.append(f"{p}{block_name}.masses: length {len(m)} != target dim {target.dim}")

    report = _parse_report(raw.get("report"), f"{p}report", errors)
    if errors:
        return None, errors
    return (
        RunConfig(
            raw=raw,
            target=target,
            harvest=harvest,
            train=train,
            sampler=sampler,
            report=report,
            seed=seed,
            output=raw.get("output"),
            name=raw.get("name") or target.name,
            base_dir=base_dir,
        ),
        [],
    )


def _parse_report(block, prefix, errors):
    report = dict(REPORT_DEFAULTS)
    if block is None:
        return report
    if not isinstance(block, dict):
        errors.append(f"{prefix}: expected an object")
        return report
    for k in sorted(set(block) - set(REPORT_DEFAULTS)):
        errors.append(f"{prefix}.{k}: unknown key")
    report.update({k: v for k, v in block.items() if k in REPORT_DEFAULTS})
    bf = report["burn_in_fraction"]
    if not (isinstance(bf, (int, float)) and 0 <= bf < 1):
        errors.append(f"{prefix}.burn_in_fraction: must lie in [0, 1)")
    if report["ess_variant"] not in ESS_VARIANTS:
        errors.append(f"{prefix}.ess_variant: expected one of {ESS_VARIANTS}")
    if not (isinstance(report["degeneracy_radius"], (int, float)) and report["degeneracy_radius"] > 0):
        errors.append(f"{prefix}.degeneracy_radius: must be positive")
    for k in ("trace_states", "trace_steps"):
        if not isinstance(report[k], int) or report[k] < 0:
            errors.append(f"{prefix}.{k}: must be a non-negative integer")
    return report


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def parse_run_config(raw, seed_override=None, base_dir=None):
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    raw = _resolve_seeds(raw, seed_override)
    cfg, errors = parse_run_block(raw, base_dir=base_dir, top_seed=raw.get("seed", 0))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_run_config(path, seed_override=None):
    return parse_run_config(_read_json(path), seed_override, os.path.dirname(os.path.abspath(path)))


def parse_benchmark_config(raw, seed_override=None, base_dir=None):
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    raw = copy.deepcopy(raw)
    errors = []
    for k in sorted(set(raw) - {"seed", "output", "report", "targets"}):
        errors.append(f"{k}: unknown key")
    if seed_override is not None:
        raw["seed"] = int(seed_override)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append("seed: must be a non-negative integer")
        seed = 0
    targets = raw.get("targets")
    rows = []
    if not isinstance(targets, list) or not targets:
        errors.append("targets: must be a non-empty list of target run blocks")
        targets = []
    for i, block in enumerate(targets):
        if not isinstance(block, dict):
            errors.append(f"targets[{i}]: expected an object")
            continue
        block = _resolve_seeds(block, seed_override)
        if seed_override is not None:
            block.pop("seed", None)
        block.setdefault("seed", seed + i)
        if "report" not in block and raw.get("report") is not None:
            block["report"] = raw["report"]
        cfg, errs = parse_run_block(block, f"targets[{i}]", base_dir, seed)
        errors.extend(errs)
        if cfg is not None:
            rows.append(cfg)
    report = _parse_report(raw.get("report"), "report", errors)
    if errors:
        raise ConfigError(errors)
    return BenchmarkConfig(raw=raw, rows=rows, seed=seed, output=raw.get("output"), report=report)


def load_benchmark_config(path, seed_override=None):
    return parse_benchmark_config(_read_json(path), seed_override, os.path.dirname(os.path.abspath(path)))
