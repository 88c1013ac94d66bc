import json

import numpy as np
import pytest

from lhnn_nuts.diagnostics import (
    BenchmarkRow,
    DegenerateChainWarning,
    EssReport,
    autocorrelation,
    degeneracy_score,
    energy_wander,
    ess,
    ess_1d,
    format_report,
    hamiltonian_trace,
    mode_occupancy,
    report_json,
)
from lhnn_nuts.targets import Gaussian, PhaseState, build_target


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    x = np.empty(n)
    x[0] = rng.standard_normal() / np.sqrt(1 - phi**2)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + rng.standard_normal()
    return x


def geyer_direct(x):
    """Initial monotone sequence estimator with autocovariances summed directly."""
    n = len(x)
    c = x - x.mean()
    acov = np.array([np.dot(c[: n - k], c[k:]) / n for k in range(n)])
    rho = acov / acov[0]
    gammas = []
    for k in range(n // 2):
        g = rho[2 * k] + rho[2 * k + 1]
        if g <= 0:
            break
        gammas.append(min(g, gammas[-1]) if gammas else g)
    return n / (-1 + 2 * sum(gammas))


def test_fft_autocorrelation_matches_direct_sum():
    x = ar1(0.6, 300, 1)
    c = x - x.mean()
    direct = np.array([np.dot(c[: 300 - k], c[k:]) for k in range(300)])
    np.testing.assert_allclose(autocorrelation(x), direct / direct[0], atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ess_matches_direct_geyer(seed):
    x = ar1(0.5, 800, seed)
    assert ess_1d(x) == pytest.approx(geyer_direct(x), rel=1e-9)


def test_ess_iid_band():
    x = np.random.default_rng(0).standard_normal((4000, 2))
    report = ess(x)
    assert 3000 <= report.min <= 5000
    assert report.min <= report.mean
    assert report.n_used == 4000


def test_ess_ar1_close_to_closed_form():
    value = ess_1d(ar1(0.9, 10_000, 0))
    assert abs(value - 10_000 * 0.1 / 1.9) / (10_000 * 0.1 / 1.9) < 0.25


def test_constant_chain_warns():
    with pytest.warns(DegenerateChainWarning):
        report = ess(np.ones((50, 2)))
    assert report.per_dimension.tolist() == [1.0, 1.0]


def test_ess_burn_in_and_minimum_length():
    x = np.random.default_rng(1).standard_normal((30, 1))
    assert ess(x, burn_in=10).n_used == 20
    with pytest.raises(ValueError):
        ess(x, burn_in=25)


def test_sho_exact_trace_conserves_energy():
    trace = hamiltonian_trace(Gaussian(1), PhaseState([1.0], [0.3]), 0.05, 1000)
    assert trace.shape == (1001, 2)
    assert trace[-1, 0] == pytest.approx(50.0)
    assert energy_wander(trace) < 1e-3


def test_zero_step_trace():
    trace = hamiltonian_trace(Gaussian(1), PhaseState([1.0], [1.0]), 0.1, 0)
    assert trace.tolist() == [[0.0, 1.0]]


def test_trained_surrogate_trace(sho, sho_trained):
    _, result = sho_trained
    rng = np.random.default_rng(3)
    for _ in range(3):
        z0 = PhaseState(rng.uniform(-1.5, 1.5, 1), rng.uniform(-1.5, 1.5, 1))
        assert energy_wander(hamiltonian_trace(sho, z0, 0.05, 500, net=result.net)) < 0.05


def test_mode_occupancy_examples():
    t = build_target({"family": "gaussian_mixture", "dim": 2})
    at_first = np.repeat(t.means[:1], 10, axis=0)
    assert mode_occupancy(at_first, t.means).tolist() == [1.0] + [0.0] * 7

    rng = np.random.default_rng(0)
    draws = t.means[rng.integers(0, 8, 8000)] + rng.standard_normal((8000, 2))
    occ = mode_occupancy(draws, t.means)
    assert occ.sum() == pytest.approx(1.0)
    assert np.all((occ >= 0.08) & (occ <= 0.17))
    with pytest.raises(ValueError):
        mode_occupancy(np.empty((0, 2)), t.means)


def test_degeneracy_score():
    assert degeneracy_score(np.zeros((20, 2)), 1e-3) == 1.0
    x = np.random.default_rng(0).standard_normal((5000, 2))
    assert degeneracy_score(x, 1e-3) < 0.01
    chain = np.array([[0.0], [0.0], [1.0], [1.0005], [3.0]])
    assert degeneracy_score(chain, 1e-3) == 0.5
    with pytest.raises(ValueError):
        degeneracy_score(np.zeros((1, 2)), 1e-3)
    with pytest.raises(ValueError):
        degeneracy_score(np.zeros((5, 2)), 0.0)


def test_benchmark_row_and_report():
    rep = EssReport(np.array([40.0, 80.0]), 1000)
    row = BenchmarkRow("mixture", "classical", 20_000, rep, 1.5, sampling_gradients=20_000)
    assert row.ess_per_gradient == 40.0 / 20_000
    assert BenchmarkRow("m", "classical", 100, rep, variant="mean").ess_per_gradient == 0.6
    lhnn = BenchmarkRow("mixture", "lhnn_monitored", 1000, rep, sampling_gradients=100, harvest_gradients=900)
    d = lhnn.to_dict()
    assert d["ess_per_gradient_variants"]["min_sampling_only"] == 0.4
    assert d["ess_per_gradient_variants"]["per_dimension"] == [0.04, 0.08]
    failed = BenchmarkRow("rosenbrock", "lhnn_monitored", 0, status="failed", error="boom")
    text = format_report([row, lhnn, failed])
    header = text.splitlines()[0]
    assert "# gradients" in header and "ESS/gradient" in header
    assert "LHNN-NUTS" in text and "failed" in text
    parsed = json.loads(report_json([row, lhnn, failed]))
    assert len(parsed["rows"]) == 3 and parsed["rows"][2]["status"] == "failed"
