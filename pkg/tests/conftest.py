import sys

import numpy as np
import pytest

from lhnn_nuts.targets import Gaussian
from lhnn_nuts.train import HarvestConfig, TrainConfig, harvest_training_data, train_lhnn

# pilot-sized SHO training run shared by the train, integrate and diagnostics tests
SHO_HARVEST = HarvestConfig(n_trajectories=25, n_steps=19, step_size=0.1, init="box", box=(-2.5, 2.5), seed=3)
SHO_TRAIN = TrainConfig(epochs=2000, batch_size=1024, learning_rate=1e-3, seed=5, hidden=[100, 100, 100])


@pytest.fixture(scope="session")
def sho():
    return Gaussian(1)


@pytest.fixture(scope="session")
def sho_trained(sho):
    data = harvest_training_data(sho, SHO_HARVEST)
    result = train_lhnn(data, SHO_TRAIN)
    return data, result


def central_difference(f, x, h):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[n])
