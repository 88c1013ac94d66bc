"""Chain diagnostics: effective sample size, energy traces, mode coverage.

ESS uses Geyer's initial monotone sequence estimator: autocorrelations are
summed in adjacent pairs until a pair turns non-positive, with each pair
clipped to be no larger than the previous one.
"""

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .integrate import ExactGradient, IntegratorConfig, SurrogateGradient, integrate_trajectory
from .targets import hamiltonian


class DegenerateChainWarning(UserWarning):
    pass


@dataclass
class EssReport:
    per_dimension: np.ndarray
    n_used: int

    @property
    def min(self):
        return float(np.min(self.per_dimension))

    @property
    def mean(self):
        return float(np.mean(self.per_dimension))

    def to_dict(self):
        return {
            "per_dimension": [float(x) for x in self.per_dimension],
            "min": self.min,
            "mean": self.mean,
            "n_used": self.n_used,
        }


def autocorrelation(x):
    """Normalized autocorrelation at every lag, computed by FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    centered = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[:n]
    if acov[0] <= 0:
        return None
    return acov / acov[0]


def ess_1d(x):
    """ESS of one scalar chain; 1.0 (with a warning) if the chain is constant."""
    x = np.asarray(x, dtype=float)
    n = x.size
    rho = autocorrelation(x)
    if rho is None or not np.all(np.isfinite(rho)):
        warnings.warn("constant chain: ESS set to 1", DegenerateChainWarning, stacklevel=2)
        return 1.0
    n_pairs = n // 2
    pairs = rho[0 : 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    total = 0.0
    prev = np.inf
    for k in range(n_pairs):
        gamma = pairs[k]
        if gamma <= 0:
            break
        gamma = min(gamma, prev)
        total += gamma
        prev = gamma
    tau = -1.0 + 2.0 * total
    # antithetic chains can beat n; cap as in common practice at n log10 n
    tau = max(tau, 1.0 / np.log10(max(n, 10)))
    return n / tau


def ess(chain, burn_in=0):
    """Per-dimension ESS of a ``(n, d)`` sample matrix after dropping ``burn_in`` rows."""
    chain = np.asarray(chain, dtype=float)
    if chain.ndim == 1:
        chain = chain[:, None]
    used = chain[burn_in:]
    if used.shape[0] < 10:
        raise ValueError(f"need at least 10 post-burn-in samples, got {used.shape[0]}")
    return EssReport(np.array([ess_1d(used[:, k]) for k in range(used.shape[1])]), used.shape[0])


def hamiltonian_trace(target, z0, step_size, n_steps, net=None, masses=None):
    """Exact H along a leapfrog path driven by posterior or network gradients.

    Returns an ``(n_steps + 1, 2)`` array of ``(t, H)`` rows.
    """
    cfg = IntegratorConfig(step_size, masses)
    if n_steps == 0:
        return np.array([[0.0, hamiltonian(target, z0, cfg.masses)]])
    source = ExactGradient(target) if net is None else SurrogateGradient(net)
    path = integrate_trajectory(source, cfg, z0, n_steps)
    return np.array([[k * step_size, hamiltonian(target, z, cfg.masses)] for k, z in enumerate(path)])


def energy_wander(trace):
    h = np.asarray(trace)[:, 1]
    return float(np.max(np.abs(h - h[0])))


def mode_occupancy(samples, means):
    """Fraction of samples whose nearest mean is each mode."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    means = np.atleast_2d(np.asarray(means, dtype=float))
    if samples.shape[0] == 0 or samples.size == 0:
        raise ValueError("no samples")
    if means.shape[0] == 0:
        raise ValueError("no means")
    d2 = ((samples[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    counts = np.bincount(np.argmin(d2, axis=1), minlength=means.shape[0])
    return counts / samples.shape[0]


def degeneracy_score(samples, radius):
    """Fraction of consecutive sample pairs closer than ``radius``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples")
    steps = np.linalg.norm(np.diff(samples, axis=0), axis=1)
    return float(np.mean(steps < radius))


@dataclass
class BenchmarkRow:
    target: str
    mode: str
    n_exact_gradients: int
    ess: EssReport = None
    wall_time: float = 0.0
    sampling_gradients: int = 0
    harvest_gradients: int = 0
    surrogate_evals: int = 0
    status: str = "ok"
    error: str = ""
    extra: dict = field(default_factory=dict)
    # which ESS summary the headline ESS/gradient uses: "min" or "mean"
    variant: str = "min"

    @property
    def ess_per_gradient(self):
        """ESS (min over dimensions by default) divided by all exact gradients spent."""
        if self.ess is None or self.n_exact_gradients <= 0:
            return float("nan")
        return getattr(self.ess, self.variant) / self.n_exact_gradients

    def to_dict(self):
        out = {k: v for k, v in asdict(self).items() if k != "ess"}
        out["ess"] = None if self.ess is None else self.ess.to_dict()
        n = self.n_exact_gradients
        out["ess_per_gradient"] = self.ess_per_gradient
        if self.ess is not None and n > 0:
            out["ess_per_gradient_variants"] = {
                "min": self.ess.min / n,
                "mean": self.ess.mean / n,
                "per_dimension": [float(x) / n for x in self.ess.per_dimension],
                "min_sampling_only": self.ess.min / self.sampling_gradients if self.sampling_gradients else None,
            }
        return out


def format_report(rows):
    """Aligned text table with one line per (target, mode)."""
    header = ("posterior", "sampler", "# gradients", "ESS/gradient", "min ESS", "wall s", "status")
    lines = [header]
    for r in rows:
        label = "LHNN-NUTS" if r.mode.startswith("lhnn") else "NUTS"
        lines.append(
            (
                r.target,
                label,
                f"{r.n_exact_gradients:,}",
                f"{r.ess_per_gradient:.4g}",
                "-" if r.ess is None else f"{r.ess.min:.1f}",
                f"{r.wall_time:.1f}",
                r.status,
            )
        )
    widths = [max(len(str(line[k])) for line in lines) for k in range(len(header))]
    out = []
    for i, line in enumerate(lines):
        out.append("  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip())
        if i == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def report_json(rows):
    return json.dumps({"rows": [r.to_dict() for r in rows]}, indent=2, default=float)
