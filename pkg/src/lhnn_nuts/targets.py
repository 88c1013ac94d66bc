"""Benchmark posterior densities and the Hamiltonian built on them.

Every target exposes an unnormalized log-density, its analytic gradient and
the potential energy U(q) = -log pi(q).  Normalizing constants are dropped
throughout; only gradients and energy differences matter to the samplers.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

FAMILIES = ("gaussian", "gaussian_mixture", "rosenbrock", "logistic_regression", "rough_well")
_FAMILY_KEYS = {
    "gaussian": {"mean", "scale"},
    "gaussian_mixture": {"means", "n_components", "radius"},
    "rosenbrock": {"a", "b"},
    "rough_well": {"sigma", "eta", "eps"},
    "logistic_regression": {"dataset", "alpha"},
}


@dataclass(frozen=True)
class PhaseState:
    """A position/momentum pair ``z = {q, p}``."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        p = np.array(self.p, dtype=float).reshape(-1)
        if q.shape != p.shape:
            raise DimensionError(f"q has length {q.size} but p has length {p.size}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError(f"non-finite phase state q={q} p={p}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def dim(self):
        return self.q.size

    def flipped(self):
        return PhaseState(self.q, -self.p)

    def as_vector(self):
        """Concatenate to the ``[q, p]`` layout used as network input."""
        return np.concatenate([self.q, self.p])


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if x.shape[0] != y.size:
            raise DimensionError(f"{x.shape[0]} feature rows but {y.size} labels")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_rows(self):
        return self.labels.size

    @property
    def n_features(self):
        return self.features.shape[1]


def load_dataset_csv(path):
    """Read a dataset with a ``label`` column and numeric feature columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if "label" not in header:
            raise ValueError(f"{path}: no 'label' column in header {header}")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    li = header.index("label")
    return LabeledDataset(np.delete(data, li, axis=1), data[:, li])


def synthetic_logistic_dataset(n_rows=100, n_features=23, seed=0):
    """Deterministic binary-classification data for tests and demos."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_rows, n_features))
    beta = rng.standard_normal(n_features) / np.sqrt(n_features)
    logits = 0.5 + x @ beta
    y = (rng.random(n_rows) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
    return LabeledDataset(x, y)


class TargetDensity:
    """Base class; subclasses implement ``_log_density`` and ``_grad``."""

    name = "target"

    def __init__(self, dim, params=None):
        if int(dim) < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        self.params = dict(params or {})

    def _check(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dim,):
            raise DimensionError(f"{self.name}: expected q of shape ({self.dim},), got {q.shape}")
        return q

    def log_density(self, q):
        return float(self._log_density(self._check(q)))

    def grad_log_density(self, q):
        return self._grad(self._check(q))

    def potential(self, q):
        return -self.log_density(q)

    def grad_potential(self, q):
        return -self.grad_log_density(q)

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, params={self.params})"


class Gaussian(TargetDensity):
    """Independent Gaussian; standard normal unless mean/scale are given."""

    name = "gaussian"

    def __init__(self, dim, mean=None, scale=None):
        super().__init__(dim, {"mean": mean, "scale": scale})
        self.mean = np.zeros(self.dim) if mean is None else np.broadcast_to(np.asarray(mean, float), (self.dim,)).copy()
        self.scale = np.ones(self.dim) if scale is None else np.broadcast_to(np.asarray(scale, float), (self.dim,)).copy()
        if np.any(self.scale <= 0):
            raise ValueError("scale must be positive")

    def _log_density(self, q):
        r = (q - self.mean) / self.scale
        return -0.5 * r @ r

    def _grad(self, q):
        return -(q - self.mean) / self.scale**2


def circle_means(n_components, radius, dim=2):
    """Means equally spaced on a circle in the first two coordinates."""
    angles = 2.0 * np.pi * np.arange(n_components) / n_components
    means = np.zeros((n_components, dim))
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


# adjacent means 6 standard deviations apart: chord = 2 r sin(pi / 8) = 6
DEFAULT_MIXTURE_RADIUS = 3.0 / np.sin(np.pi / 8)


class GaussianMixture(TargetDensity):
    """Equal-weight mixture of identity-covariance Gaussians."""

    name = "gaussian_mixture"

    def __init__(self, means):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        super().__init__(means.shape[1], {"means": means.tolist()})
        self.means = means
        self._log_k = np.log(means.shape[0])

    def _log_terms(self, q):
        diff = q - self.means
        terms = -0.5 * (diff * diff).sum(axis=1)
        top = terms.max()
        # log-sum-exp shifted by the largest term so nothing overflows
        weights = np.exp(terms - top)
        return top, weights, diff

    def _log_density(self, q):
        top, weights, _ = self._log_terms(q)
        return top + np.log(weights.sum()) - self._log_k

    def _grad(self, q):
        _, weights, diff = self._log_terms(q)
        return -(weights @ diff) / weights.sum()


class Rosenbrock(TargetDensity):
    """Sum over coordinate pairs of ``a (y - x^2)^2 + (x - b)^2``."""

    name = "rosenbrock"

    def __init__(self, dim, a=5.0, b=1.0):
        if dim % 2:
            raise ValueError(f"rosenbrock needs an even dimension, got {dim}")
        super().__init__(dim, {"a": a, "b": b})
        self.a = float(a)
        self.b = float(b)

    def _log_density(self, q):
        x, y = q[0::2], q[1::2]
        return -np.sum(self.a * (y - x**2) ** 2 + (x - self.b) ** 2)

    def _grad(self, q):
        x, y = q[0::2], q[1::2]
        r = y - x**2
        g = np.empty_like(q)
        g[0::2] = 4.0 * self.a * r * x - 2.0 * (x - self.b)
        g[1::2] = -2.0 * self.a * r
        return g

    @property
    def mode(self):
        m = np.empty(self.dim)
        m[0::2] = self.b
        m[1::2] = self.b**2
        return m


class RoughWell(TargetDensity):
    """Quadratic well plus high-frequency cosine roughness."""

    name = "rough_well"

    def __init__(self, dim, sigma=1.0, eta=0.1, eps=0.1):
        super().__init__(dim, {"sigma": sigma, "eta": eta, "eps": eps})
        if sigma <= 0 or eps <= 0:
            raise ValueError("sigma and eps must be positive")
        self.sigma = float(sigma)
        self.eta = float(eta)
        self.eps = float(eps)

    def _log_density(self, q):
        return -(np.sum(q**2) / (2 * self.sigma**2) + self.eta * np.sum(np.cos(q / self.eps)))

    def _grad(self, q):
        return -(q / self.sigma**2 - (self.eta / self.eps) * np.sin(q / self.eps))


class LogisticRegression(TargetDensity):
    """Bayesian logistic regression with a N(0, 1/alpha) prior on every coefficient.

    Features are standardized on construction and an intercept column is
    prepended, so ``dim == n_features + 1``.
    """

    name = "logistic_regression"

    def __init__(self, dataset, alpha=1.0):
        x = dataset.features
        sd = x.std(axis=0)
        sd[sd == 0] = 1.0
        xs = (x - x.mean(axis=0)) / sd
        self.design = np.hstack([np.ones((x.shape[0], 1)), xs])
        self.labels = dataset.labels
        self.alpha = float(alpha)
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        super().__init__(self.design.shape[1], {"alpha": alpha, "n_rows": dataset.n_rows})

    def _log_density(self, q):
        eta = self.design @ q
        return self.labels @ eta - np.sum(np.logaddexp(0.0, eta)) - 0.5 * self.alpha * q @ q

    def _grad(self, q):
        eta = self.design @ q
        prob = np.exp(-np.logaddexp(0.0, -eta))
        return self.design.T @ (self.labels - prob) - self.alpha * q


def kinetic_energy(p, masses=None):
    p = np.asarray(p, dtype=float)
    if masses is None:
        return 0.5 * float(p @ p)
    return 0.5 * float(np.sum(p**2 / masses))


def hamiltonian(target, z, masses=None):
    """Exact H = U(q) + K(p) with Gaussian momenta."""
    if z.dim != target.dim:
        raise DimensionError(f"state has dimension {z.dim}, target has {target.dim}")
    return target.potential(z.q) + kinetic_energy(z.p, masses)


def build_target(spec, base_dir=None):
    """Construct a target from a JSON-style configuration block.

    Recognized keys depend on ``spec["family"]``; see README for the schema.
    """
    errors = validate_target_spec(spec)
    if errors:
        raise ConfigError(errors)
    family = spec["family"]
    dim = spec.get("dim")
    if family == "gaussian":
        return Gaussian(dim, spec.get("mean"), spec.get("scale"))
    if family == "gaussian_mixture":
        if spec.get("means") is not None:
            means = np.asarray(spec["means"], dtype=float)
        else:
            means = circle_means(
                spec.get("n_components", 8),
                spec.get("radius", DEFAULT_MIXTURE_RADIUS),
                dim if dim is not None else 2,
            )
        return GaussianMixture(means)
    if family == "rosenbrock":
        return Rosenbrock(dim, spec.get("a", 5.0), spec.get("b", 1.0))
    if family == "rough_well":
        return RoughWell(dim, spec.get("sigma", 1.0), spec.get("eta", 0.1), spec.get("eps", 0.1))
    data = spec.get("dataset", {"synthetic": {}})
    if "csv" in data:
        import os

        path = data["csv"]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        try:
            dataset = load_dataset_csv(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"target.dataset: cannot load {path}: {exc}") from exc
    else:
        syn = data.get("synthetic", {})
        n_features = syn.get("n_features", dim - 1 if dim else 23)
        dataset = synthetic_logistic_dataset(syn.get("n_rows", 100), n_features, syn.get("seed", 0))
    target = LogisticRegression(dataset, spec.get("alpha", 1.0))
    if dim is not None and target.dim != dim:
        raise ConfigError(
            f"target.dim is {dim} but the dataset yields {target.dim} parameters "
            f"({dataset.n_features} features + intercept)"
        )
    return target


def validate_target_spec(spec, prefix="target"):
    """Return a list of human-readable problems with a target block."""
    if not isinstance(spec, dict):
        return [f"{prefix}: expected an object"]
    errors = []
    family = spec.get("family")
    if family not in FAMILIES:
        errors.append(f"{prefix}.family: unknown family {family!r} (expected one of {', '.join(FAMILIES)})")
        return errors
    for key in sorted(set(spec) - _FAMILY_KEYS[family] - {"family", "dim"}):
        errors.append(f"{prefix}.{key}: unknown key for family {family}")
    dim = spec.get("dim")
    if dim is not None and (not isinstance(dim, int) or isinstance(dim, bool) or dim < 1):
        errors.append(f"{prefix}.dim: must be a positive integer, got {dim!r}")
        dim = None
    if family in ("gaussian", "rosenbrock", "rough_well") and dim is None and "dim" not in spec:
        errors.append(f"{prefix}.dim: required for family {family}")
    if family == "rosenbrock" and dim is not None and dim % 2:
        errors.append(f"{prefix}.dim: rosenbrock needs an even dimension, got {dim}")
    if family == "gaussian_mixture":
        means = spec.get("means")
        if means is not None:
            arr = np.asarray(means, dtype=float)
            if arr.ndim != 2 or arr.shape[0] < 1:
                errors.append(f"{prefix}.means: must be a non-empty list of vectors")
            elif dim is not None and arr.shape[1] != dim:
                errors.append(f"{prefix}.means: vectors have length {arr.shape[1]} but {prefix}.dim is {dim}")
        else:
            if dim is not None and dim < 2:
                errors.append(f"{prefix}.dim: circle-layout mixture needs dim >= 2")
            if spec.get("radius", 1.0) <= 0:
                errors.append(f"{prefix}.radius: must be positive")
            nc = spec.get("n_components", 8)
            if not isinstance(nc, int) or nc < 1:
                errors.append(f"{prefix}.n_components: must be a positive integer")
    for key in ("sigma", "eps", "alpha"):
        if key in spec and not (isinstance(spec[key], (int, float)) and spec[key] > 0):
            errors.append(f"{prefix}.{key}: must be positive")
    if family == "logistic_regression":
        data = spec.get("dataset", {"synthetic": {}})
        if not isinstance(data, dict) or not ({"csv", "synthetic"} & set(data)):
            errors.append(f"{prefix}.dataset: expected {{'csv': path}} or {{'synthetic': {{...}}}}")
    return errors
