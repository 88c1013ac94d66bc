import numpy as np
import pytest

from conftest import SHO_TRAIN
from lhnn_nuts.errors import ConfigError, TrainingDivergence
from lhnn_nuts.network import LHNN
from lhnn_nuts.targets import Gaussian, build_target
from lhnn_nuts.train import HarvestConfig, TrainConfig, TrainingDataset, harvest_training_data, train_lhnn


def test_single_trajectory_records():
    t = Gaussian(1)
    data = harvest_training_data(t, HarvestConfig(n_trajectories=1, n_steps=10, step_size=0.1, init="box", seed=0))
    assert len(data) == 11
    assert np.array_equal(data.dq_dt, data.p)
    assert np.array_equal(data.dp_dt, -data.q)
    assert data.meta["harvest_gradients"] == 11


def test_mixture_harvest_counts_and_consistency():
    t = build_target({"family": "gaussian_mixture", "dim": 2})
    cfg = HarvestConfig(n_trajectories=50, n_steps=40, step_size=0.05, warm_samples=50, box=(-8, 8), seed=1)
    data = harvest_training_data(t, cfg)
    assert len(data) == 2050
    assert data.meta["trajectory_gradients"] == 50 * 41
    assert data.meta["harvest_gradients"] == data.meta["trajectory_gradients"] + data.meta["warm_gradients"]
    assert data.meta["warm_gradients"] > 0
    rows = np.random.default_rng(0).choice(len(data), 100, replace=False)
    for r in rows:
        assert np.array_equal(data.dq_dt[r], data.p[r])
        assert np.array_equal(data.dp_dt[r], t.grad_log_density(data.q[r]))


def test_masses_scale_position_derivative():
    t = Gaussian(2)
    m = [2.0, 0.5]
    data = harvest_training_data(t, HarvestConfig(n_trajectories=2, n_steps=5, init="box", masses=m, seed=0))
    assert np.array_equal(data.dq_dt, data.p * (1.0 / np.array(m)))


def test_zero_trajectories_rejected():
    with pytest.raises(ConfigError, match="n_trajectories"):
        harvest_training_data(Gaussian(1), HarvestConfig(n_trajectories=0))


def test_dataset_csv_round_trip(tmp_path):
    data = harvest_training_data(Gaussian(2), HarvestConfig(n_trajectories=3, n_steps=4, init="box", seed=2))
    path = tmp_path / "data.csv"
    data.save(path)
    back = TrainingDataset.load(path)
    assert back.fingerprint() == data.fingerprint()
    assert back.meta["harvest_gradients"] == data.meta["harvest_gradients"]
    assert path.read_text().splitlines()[0] == "q_1,q_2,p_1,p_2,dqdt_1,dqdt_2,dpdt_1,dpdt_2"


def test_sho_training_quality(sho_trained):
    data, result = sho_trained
    assert len(data) == 500
    assert result.final_loss < 1e-3
    assert result.final_loss <= result.initial_loss
    grads = result.net.input_gradient(data.z)
    # exact Hamiltonian gradient is (q, p)
    assert np.max(np.abs(grads - data.z)) < 0.05


def test_single_record_overfits():
    data = TrainingDataset([[0.4, -0.3]], [[-0.3]], [[-0.4]])
    result = train_lhnn(data, TrainConfig(epochs=1500, learning_rate=3e-3, hidden=[16, 16], seed=0))
    assert result.final_loss < 1e-6


def test_training_is_deterministic():
    data = harvest_training_data(Gaussian(1), HarvestConfig(n_trajectories=4, n_steps=10, init="box", seed=4))
    cfg = TrainConfig(epochs=30, batch_size=16, hidden=[8, 8], seed=7)
    a, b = train_lhnn(data, cfg), train_lhnn(data, cfg)
    assert np.array_equal(a.history, b.history)
    assert a.net.flat_parameters().tobytes() == b.net.flat_parameters().tobytes()


def test_minibatch_history_is_full_loss():
    data = harvest_training_data(Gaussian(1), HarvestConfig(n_trajectories=4, n_steps=10, init="box", seed=4))
    result = train_lhnn(data, TrainConfig(epochs=3, batch_size=10, hidden=[8], seed=1))
    assert len(result.history) == 3
    assert result.history[-1] == pytest.approx(result.net.loss(data.batch()), rel=1e-15)


def test_divergence_reports_epoch():
    data = harvest_training_data(Gaussian(1), HarvestConfig(n_trajectories=2, n_steps=5, init="box", seed=0))
    net = LHNN.initialize([2, 4, 1], "relu", seed=0)
    net.weights[0] *= 1e200
    with pytest.raises(TrainingDivergence) as info, np.errstate(all="ignore"):
        train_lhnn(data, TrainConfig(epochs=5, hidden=[4], activation="relu"), net=net)
    assert info.value.epoch == 1


def test_layer_sizes():
    assert TrainConfig(hidden=[5, 6]).layer_sizes(3) == [6, 5, 6, 3]
    assert TrainConfig(hidden=[5], scalar_output=True).layer_sizes(3) == [6, 5, 1]


def test_default_architecture():
    assert TrainConfig().hidden == [100, 100, 100] and TrainConfig().activation == "sine"
    assert SHO_TRAIN.hidden == [100, 100, 100]
