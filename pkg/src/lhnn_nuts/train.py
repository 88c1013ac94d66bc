"""Training-data harvesting and L-HNN fitting.

Training records are phase-space states visited by exact-gradient leapfrog
trajectories.  Their time-derivative targets are taken analytically from
Hamilton's equations (dq/dt = p / m, dp/dt = -dU/dq), using the very gradient
the integrator evaluated, so no extra posterior gradients are spent.
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, IntegrationError, TrainingDivergence
from .integrate import ExactGradient, leapfrog
from .network import LHNN
from .sampler import SamplerConfig, nuts_sample

log = logging.getLogger(__name__)


@dataclass
class TrainingDataset:
    z: np.ndarray
    dq_dt: np.ndarray
    dp_dt: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.atleast_2d(np.asarray(self.z, dtype=float))
        self.dq_dt = np.atleast_2d(np.asarray(self.dq_dt, dtype=float))
        self.dp_dt = np.atleast_2d(np.asarray(self.dp_dt, dtype=float))
        d = self.dq_dt.shape[1]
        if self.z.shape[1] != 2 * d or self.dp_dt.shape[1] != d:
            raise ValueError("dataset columns are inconsistent with one dimension d")
        if not (len(self.z) == len(self.dq_dt) == len(self.dp_dt)):
            raise ValueError("dataset arrays have different row counts")

    def __len__(self):
        return self.z.shape[0]

    @property
    def dim(self):
        return self.dq_dt.shape[1]

    @property
    def q(self):
        return self.z[:, : self.dim]

    @property
    def p(self):
        return self.z[:, self.dim :]

    def batch(self, rows=None):
        if rows is None:
            return self.z, self.dq_dt, self.dp_dt
        return self.z[rows], self.dq_dt[rows], self.dp_dt[rows]

    def fingerprint(self):
        import hashlib

        h = hashlib.sha256()
        for a in (self.z, self.dq_dt, self.dp_dt):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]

    def save(self, path):
        d = self.dim
        header = (
            [f"q_{i + 1}" for i in range(d)]
            + [f"p_{i + 1}" for i in range(d)]
            + [f"dqdt_{i + 1}" for i in range(d)]
            + [f"dpdt_{i + 1}" for i in range(d)]
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in np.hstack([self.z, self.dq_dt, self.dp_dt]):
                w.writerow([repr(float(x)) for x in row])
        with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = data.shape[1] // 4
        try:
            with open(str(path) + ".meta.json", encoding="utf-8") as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            meta = {}
        return cls(data[:, : 2 * d], data[:, 2 * d : 3 * d], data[:, 3 * d :], meta)


@dataclass
class HarvestConfig:
    """How exact-gradient trajectories are started and integrated.

    ``init="nuts"`` draws starting positions from a short classical NUTS run
    (``warm_samples`` iterations, started inside ``box``); ``init="box"``
    draws them uniformly from ``box``.  Momenta are always fresh N(0, M).
    """

    n_trajectories: int = 50
    n_steps: int = 40
    step_size: float = 0.05
    init: str = "nuts"
    box: tuple = (-3.0, 3.0)
    warm_samples: int = 200
    warm_step_size: float = None
    masses: list = None
    seed: int = 0

    def validate(self, prefix="harvest"):
        errors = []
        if not isinstance(self.n_trajectories, int) or self.n_trajectories < 1:
            errors.append(f"{prefix}.n_trajectories: must be a positive integer")
        if not isinstance(self.n_steps, int) or self.n_steps < 1:
            errors.append(f"{prefix}.n_steps: must be a positive integer")
        if not (isinstance(self.step_size, (int, float)) and self.step_size > 0):
            errors.append(f"{prefix}.step_size: must be positive")
        if self.init not in ("nuts", "box"):
            errors.append(f"{prefix}.init: expected 'nuts' or 'box', got {self.init!r}")
        try:
            lo, hi = self.box
            if not lo < hi:
                errors.append(f"{prefix}.box: lower bound must be below upper bound")
        except (TypeError, ValueError):
            errors.append(f"{prefix}.box: expected [low, high]")
        if self.init == "nuts" and (not isinstance(self.warm_samples, int) or self.warm_samples < 1):
            errors.append(f"{prefix}.warm_samples: must be a positive integer")
        return errors


def harvest_training_data(target, cfg, rng=None):
    """Integrate exact-gradient trajectories and record every visited state.

    Each trajectory of ``n_steps`` steps yields ``n_steps + 1`` records and
    costs ``n_steps + 1`` posterior gradients.  A trajectory that hits a
    non-finite value keeps the records gathered before the failure.
    """
    errors = cfg.validate()
    if errors:
        raise ConfigError(errors)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    d = target.dim
    masses = np.ones(d) if cfg.masses is None else np.asarray(cfg.masses, dtype=float)
    inv_mass = 1.0 / masses
    lo, hi = cfg.box

    warm_gradients = 0
    if cfg.init == "nuts":
        warm = nuts_sample(
            target,
            SamplerConfig(
                n_samples=cfg.warm_samples,
                step_size=cfg.warm_step_size or cfg.step_size,
                masses=cfg.masses,
            ),
            rng=rng,
            q0=rng.uniform(lo, hi, d),
        )
        warm_gradients = warm.exact_gradients
        starts = warm.samples[rng.integers(0, cfg.warm_samples, cfg.n_trajectories)]
    else:
        starts = rng.uniform(lo, hi, (cfg.n_trajectories, d))

    source = ExactGradient(target)
    zs, dqs, dps = [], [], []
    failed = 0
    for q in starts:
        p = rng.standard_normal(d) * np.sqrt(masses)
        g = source.grad_potential(q, p)
        traj_z, traj_dq, traj_dp = [np.concatenate([q, p])], [p * inv_mass], [-g]
        try:
            if not np.all(np.isfinite(g)):
                raise IntegrationError("non-finite gradient at trajectory start", q, p)
            for _ in range(cfg.n_steps):
                q, p, g = leapfrog(source, q, p, cfg.step_size, inv_mass, g)
                traj_z.append(np.concatenate([q, p]))
                traj_dq.append(p * inv_mass)
                traj_dp.append(-g)
        except IntegrationError as exc:
            failed += 1
            log.warning("harvest trajectory aborted after %d steps: %s", len(traj_z) - 1, exc)
            if not np.all(np.isfinite(traj_dp[-1])):
                del traj_z[-1], traj_dq[-1], traj_dp[-1]
        zs.extend(traj_z)
        dqs.extend(traj_dq)
        dps.extend(traj_dp)

    if not zs:
        raise RuntimeError("harvest produced no records")
    meta = {
        "target": target.name,
        "dim": d,
        "step_size": cfg.step_size,
        "harvest": _jsonable(asdict(cfg)),
        "trajectory_gradients": source.count,
        "warm_gradients": warm_gradients,
        "harvest_gradients": source.count + warm_gradients,
        "failed_trajectories": failed,
        "n_records": len(zs),
    }
    return TrainingDataset(np.array(zs), np.array(dqs), np.array(dps), meta)


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 1024
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # learning rate is multiplied by this factor once training ends
    final_lr_fraction: float = 1.0
    seed: int = 0
    # seed for weight initialization; drawn from ``seed`` when absent
    init_seed: int = None
    hidden: list = field(default_factory=lambda: [100, 100, 100])
    activation: str = "sine"
    scalar_output: bool = False

    def validate(self, prefix="train"):
        errors = []
        for key in ("epochs", "batch_size"):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                errors.append(f"{prefix}.{key}: must be a positive integer")
        for key in ("learning_rate", "adam_eps", "final_lr_fraction"):
            v = getattr(self, key)
            if not (isinstance(v, (int, float)) and v > 0):
                errors.append(f"{prefix}.{key}: must be positive")
        for key in ("beta1", "beta2"):
            v = getattr(self, key)
            if not (isinstance(v, (int, float)) and 0 <= v < 1):
                errors.append(f"{prefix}.{key}: must lie in [0, 1)")
        if not all(isinstance(h, int) and h > 0 for h in self.hidden):
            errors.append(f"{prefix}.hidden: layer widths must be positive integers")
        from .network import ACTIVATIONS

        if self.activation not in ACTIVATIONS:
            errors.append(f"{prefix}.activation: unknown activation {self.activation!r}")
        return errors

    def layer_sizes(self, dim):
        return [2 * dim, *self.hidden, 1 if self.scalar_output else dim]


@dataclass
class TrainingResult:
    net: LHNN
    history: list
    initial_loss: float

    @property
    def final_loss(self):
        return self.history[-1] if self.history else self.initial_loss


class Adam:
    def __init__(self, shapes, lr, beta1, beta2, eps):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for x, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            x -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_lhnn(dataset, cfg, net=None):
    """Minimize the physics loss with Adam.

    Full-batch when the dataset fits in one batch, shuffled mini-batches
    otherwise.  ``history[k]`` is the full-dataset loss after epoch ``k + 1``.
    The learning rate decays geometrically to ``final_lr_fraction`` of its
    starting value over the run.
    """
    errors = cfg.validate()
    if len(dataset) == 0:
        errors.append("dataset is empty")
    if errors:
        raise ConfigError(errors)
    rng = np.random.default_rng(cfg.seed)
    if net is None:
        init_seed = cfg.init_seed if cfg.init_seed is not None else int(rng.integers(2**63))
        net = LHNN.initialize(cfg.layer_sizes(dataset.dim), cfg.activation, seed=init_seed)
    else:
        net = net.copy()
    params = net.parameters()
    opt = Adam([a.shape for a in params], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    n = len(dataset)
    full = dataset.batch()
    initial = net.loss(full)
    decay = cfg.final_lr_fraction ** (1.0 / max(cfg.epochs - 1, 1))
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * decay**epoch
        if n <= cfg.batch_size:
            _, grad = net.loss_and_gradient(full)
            opt.step(params, _interleave(grad), lr)
        else:
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                _, grad = net.loss_and_gradient(dataset.batch(order[start : start + cfg.batch_size]))
                opt.step(params, _interleave(grad), lr)
        value = net.loss(full)
        if not np.isfinite(value):
            raise TrainingDivergence(epoch + 1, value)
        history.append(value)
    return TrainingResult(net, history, initial)


def _interleave(grad):
    return [a for pair in zip(grad.weights, grad.biases) for a in pair]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
