import copy
import json
import os

import numpy as np
import pytest

from lhnn_nuts import io
from lhnn_nuts.cli import main
from lhnn_nuts.config import (
    derive_seed,
    load_benchmark_config,
    load_run_config,
    parse_benchmark_config,
    parse_run_config,
)
from lhnn_nuts.errors import ConfigError
from lhnn_nuts.network import LHNN
from lhnn_nuts.sampler import SamplerConfig, nuts_sample
from lhnn_nuts.targets import Gaussian

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

TINY = {
    "seed": 4,
    "target": {"family": "gaussian", "dim": 1},
    "network": {"hidden": [8], "activation": "tanh", "latent_dim": 1},
    "harvest": {"n_trajectories": 3, "n_steps": 10, "step_size": 0.1, "init": "box"},
    "train": {"epochs": 20, "learning_rate": 0.01},
    "sampler": {"n_samples": 1000, "step_size": 0.3, "mode": "classical"},
    "report": {"trace_states": 2, "trace_steps": 20},
}


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_shipped_configs_validate(name):
    path = os.path.join(CONFIGS, name)
    with open(path) as fh:
        raw = json.load(fh)
    if "targets" in raw:
        cfg = load_benchmark_config(path)
        assert cfg.rows
    else:
        load_run_config(path)


def test_all_errors_reported_at_once():
    raw = copy.deepcopy(TINY)
    raw["target"] = {"family": "gaussian", "dim": 2}
    raw["network"]["latent_dim"] = 3
    raw["sampler"]["n_samples"] = 0
    raw["train"]["epochs"] = -1
    raw["bogus"] = 1
    with pytest.raises(ConfigError) as info:
        parse_run_config(raw)
    msgs = info.value.errors
    assert any("network.latent_dim" in m and "target.dim" in m for m in msgs)
    assert any(m.startswith("sampler.n_samples") for m in msgs)
    assert any(m.startswith("train.epochs") for m in msgs)
    assert any(m.startswith("bogus") for m in msgs)


def test_unknown_nested_keys_rejected():
    raw = copy.deepcopy(TINY)
    raw["sampler"]["stepsize"] = 0.1
    raw["network"]["width"] = 3
    with pytest.raises(ConfigError) as info:
        parse_run_config(raw)
    assert any("sampler.stepsize" in m for m in info.value.errors)
    assert any("network.width" in m for m in info.value.errors)


def test_seed_derivation_and_override():
    cfg = parse_run_config(TINY)
    assert cfg.sampler.seed == derive_seed(4, "sampler") != cfg.harvest.seed
    raw = copy.deepcopy(TINY)
    raw["sampler"]["seed"] = 123
    assert parse_run_config(raw).sampler.seed == 123
    overridden = parse_run_config(raw, seed_override=9)
    assert overridden.seed == 9 and overridden.sampler.seed == derive_seed(9, "sampler")
    assert overridden.hash != cfg.hash


def test_benchmark_requires_targets():
    with pytest.raises(ConfigError, match="targets"):
        parse_benchmark_config({"seed": 0, "targets": []})
    bad = {"targets": [copy.deepcopy(TINY), {"target": {"family": "nope"}}]}
    with pytest.raises(ConfigError, match=r"targets\[1\]\.target\.family"):
        parse_benchmark_config(bad)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = LHNN.initialize([6, 17, 9, 3], "sine", seed=11)
    path = tmp_path / "ckpt.json"
    io.save_checkpoint(path, net, {"seed": 11})
    back, meta = io.load_checkpoint(path)
    assert meta == {"seed": 11}
    assert back.layer_sizes == net.layer_sizes and back.activation == "sine"
    z = np.random.default_rng(0).standard_normal((50, 6))
    assert back.forward(z).tobytes() == net.forward(z).tobytes()
    assert back.input_gradient(z).tobytes() == net.input_gradient(z).tobytes()


def test_checkpoint_schema_checked(tmp_path):
    path = tmp_path / "ckpt.json"
    io.save_checkpoint(path, LHNN.initialize([2, 3, 1]))
    data = json.loads(path.read_text())
    data["schema_version"] = 99
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError, match="schema"):
        io.load_checkpoint(path)


def test_chain_csv_round_trip(tmp_path):
    res = nuts_sample(Gaussian(2), SamplerConfig(n_samples=50, step_size=0.3, seed=1))
    path = tmp_path / "chain.csv"
    io.write_chain_csv(path, res)
    assert path.read_text().splitlines()[0] == "iter,q_1,q_2,H,tree_depth,fallback,u"
    back = io.read_chain_csv(path)
    assert back["samples"].tobytes() == res.samples.tobytes()
    assert back["iter"].tolist() == list(range(50))
    assert back["tree_depth"].tolist() == res.tree_depth.tolist()


def test_cli_classical_sample(tmp_path, capsys):
    cfg = write_config(tmp_path, TINY)
    out = tmp_path / "out"
    assert main(["sample", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "chain.csv").read_text().splitlines()
    assert len(lines) == 1001
    ledger = json.loads((out / "ledger.json").read_text())
    assert set(ledger) == {"exact_gradients", "surrogate_evals", "harvest_gradients"}
    assert ledger["surrogate_evals"] == 0 and ledger["exact_gradients"] > 0
    for name in ("chain.csv", "ledger.json", "summary.json"):
        meta = json.loads((out / (name + ".meta.json")).read_text())
        assert meta["config_hash"] == load_run_config(cfg).hash and meta["seed"] == 4


def test_cli_train_then_monitored_sample(tmp_path):
    raw = copy.deepcopy(TINY)
    raw["sampler"]["mode"] = "lhnn_monitored"
    cfg = write_config(tmp_path, raw)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", cfg, "--out", str(out_a)]) == 0
    assert main(["train", "--config", cfg, "--out", str(out_b)]) == 0
    ckpt = out_a / "checkpoint.json"
    a = json.loads(ckpt.read_text())
    b = json.loads((out_b / "checkpoint.json").read_text())
    assert a["weights"] == b["weights"] and a["biases"] == b["biases"]
    assert a["meta"]["dataset_fingerprint"] and a["meta"]["harvest_gradients"] == 33
    for name in ("checkpoint.json", "history.csv", "dataset.csv", "ledger.json"):
        assert (out_a / (name + ".meta.json")).exists()

    assert main(["sample", "--config", cfg, "--checkpoint", str(ckpt), "--out", str(out_a)]) == 0
    ledger = json.loads((out_a / "ledger.json").read_text())
    chain = io.read_chain_csv(out_a / "chain.csv")
    assert ledger["harvest_gradients"] == 33
    assert ledger["surrogate_evals"] > 0
    # posterior gradients during sampling only come from fallback iterations
    assert (ledger["exact_gradients"] > 0) == bool(chain["fallback"].any())


def test_cli_lhnn_without_checkpoint(tmp_path, capsys):
    raw = copy.deepcopy(TINY)
    raw["sampler"]["mode"] = "lhnn_monitored"
    assert main(["sample", "--config", write_config(tmp_path, raw)]) == 1
    assert "--checkpoint" in capsys.readouterr().err


def test_cli_checkpoint_dimension_mismatch(tmp_path, capsys):
    raw = copy.deepcopy(TINY)
    raw["sampler"]["mode"] = "lhnn_unmonitored"
    ckpt = tmp_path / "ckpt.json"
    io.save_checkpoint(ckpt, LHNN.initialize([4, 3, 2]))
    assert main(["sample", "--config", write_config(tmp_path, raw), "--checkpoint", str(ckpt)]) == 1
    assert "d=2" in capsys.readouterr().err


def test_cli_invalid_config_lists_errors(tmp_path, capsys):
    raw = copy.deepcopy(TINY)
    raw["target"] = {"family": "gaussian", "dim": 2}
    raw["network"]["latent_dim"] = 3
    raw["sampler"]["step_size"] = -1
    assert main(["train", "--config", write_config(tmp_path, raw), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "network.latent_dim" in err and "target.dim" in err and "sampler.step_size" in err
    assert not (tmp_path / "o").exists()


def test_cli_missing_config_file(tmp_path, capsys):
    assert main(["sample", "--config", str(tmp_path / "nope.json")]) == 1


def test_cli_training_divergence_exit_code(tmp_path, capsys):
    raw = copy.deepcopy(TINY)
    raw["train"]["learning_rate"] = 1e200
    raw["network"]["activation"] = "relu"
    with np.errstate(all="ignore"):
        code = main(["train", "--config", write_config(tmp_path, raw), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "epoch" in capsys.readouterr().err


def test_cli_benchmark_and_diagnose(tmp_path, capsys):
    row = copy.deepcopy(TINY)
    row["name"] = "gauss"
    row["sampler"]["n_samples"] = 300
    failing = copy.deepcopy(row)
    failing["name"] = "broken"
    failing["train"]["learning_rate"] = 1e200
    failing["network"]["activation"] = "relu"
    cfg = write_config(tmp_path, {"seed": 2, "targets": [row, failing]}, "bench.json")
    out = tmp_path / "bench"
    with np.errstate(all="ignore"):
        code = main(["benchmark", "--config", cfg, "--out", str(out)])
    assert code == 2  # one row failed, the rest still ran
    report = json.loads((out / "report.json").read_text())
    status = {(r["target"], r["mode"]): r["status"] for r in report["rows"]}
    assert status[("gauss", "classical")] == "ok" and status[("gauss", "lhnn_monitored")] == "ok"
    assert status[("broken", "classical")] == "ok" and status[("broken", "lhnn_monitored")] == "failed"
    text = (out / "report.txt").read_text()
    assert "# gradients" in text and "ESS/gradient" in text
    assert (out / "report.json.meta.json").exists()

    chain = out / "00_gauss" / "chain_lhnn.csv"
    diag = tmp_path / "diag"
    run_cfg = write_config(tmp_path, row, "row.json")
    assert main(["diagnose", "--config", run_cfg, "--checkpoint", str(out / "00_gauss" / "checkpoint.json"),
                 "--out", str(diag), str(chain)]) == 0
    summary = json.loads((diag / "diagnostics.json").read_text())
    assert summary["chain_lhnn"]["ess"]["min"] > 0
    assert set(summary["hamiltonian_wander"]) == {"exact", "lhnn"}
    header = (diag / "hamiltonian_traces.csv").read_text().splitlines()[0]
    assert header == "source,state,t,H"
    assert (diag / "scatter_chain_lhnn.csv.meta.json").exists()
    assert main(["diagnose", "--out", str(diag)]) == 1
