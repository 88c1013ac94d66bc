"""File formats: network checkpoints, chain CSVs, ledgers and meta sidecars.

Floats are written with ``repr`` (shortest round-trip form), so a checkpoint
or chain read back is bit-identical to what was written.
"""

import csv
import json
import os

import numpy as np

from . import __version__
from .network import LHNN

SCHEMA_VERSION = 1


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_meta(path, config_hash, seed, **extra):
    """Write ``<path>.meta.json`` naming the config hash and seed behind ``path``."""
    meta = {"file": os.path.basename(path), "config_hash": config_hash, "seed": seed, "version": __version__}
    meta.update(extra)
    write_json(str(path) + ".meta.json", meta)


def checkpoint_dict(net, meta=None):
    return {
        "schema_version": SCHEMA_VERSION,
        "architecture": {
            "layer_sizes": net.layer_sizes,
            "activation": net.activation,
            "d": net.dim,
            "latent_dim": net.latent_dim,
        },
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "meta": meta or {},
    }


def save_checkpoint(path, net, meta=None):
    write_json(path, checkpoint_dict(net, meta))


def load_checkpoint(path):
    """Return ``(net, meta)``; raises ValueError on a malformed file."""
    data = read_json(path)
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint schema {data.get('schema_version')!r}")
    arch = data["architecture"]
    net = LHNN(
        [np.array(w, dtype=float) for w in data["weights"]],
        [np.array(b, dtype=float) for b in data["biases"]],
        arch["activation"],
    )
    if net.layer_sizes != list(arch["layer_sizes"]):
        raise ValueError(f"{path}: weights do not match declared layer sizes {arch['layer_sizes']}")
    return net, data.get("meta", {})


def chain_header(dim):
    return ["iter", *[f"q_{i + 1}" for i in range(dim)], "H", "tree_depth", "fallback", "u"]


def write_chain_csv(path, result):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(chain_header(result.dim))
        u = result.u
        for i in range(result.n_samples):
            w.writerow(
                [i]
                + [repr(float(x)) for x in result.samples[i]]
                + [repr(float(result.hamiltonian[i])), int(result.tree_depth[i]), int(result.fallback[i]), repr(float(u[i]))]
            )


def read_chain_csv(path):
    """Return a dict with ``samples`` plus the per-sample metadata columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    qcols = [i for i, h in enumerate(header) if h.startswith("q_")]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
    col = {h: i for i, h in enumerate(header)}
    return {
        "iter": data[:, col["iter"]].astype(int),
        "samples": data[:, qcols],
        "H": data[:, col["H"]],
        "tree_depth": data[:, col["tree_depth"]].astype(int),
        "fallback": data[:, col["fallback"]].astype(int),
        "u": data[:, col["u"]],
    }


def write_history_csv(path, initial_loss, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        w.writerow([0, repr(float(initial_loss))])
        for k, v in enumerate(history, start=1):
            w.writerow([k, repr(float(v))])


def write_trace_csv(path, traces):
    """``traces`` maps a label to a list of ``(state_index, trace_array)`` pairs."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "state", "t", "H"])
        for label, items in traces.items():
            for k, trace in items:
                for t, h in trace:
                    w.writerow([label, k, repr(float(t)), repr(float(h))])


def write_scatter_csv(path, samples):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"q_{i + 1}" for i in range(samples.shape[1])])
        for row in samples:
            w.writerow([repr(float(x)) for x in row])
