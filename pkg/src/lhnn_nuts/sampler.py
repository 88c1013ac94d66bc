"""No-U-Turn sampling with exact or L-HNN gradients and online error monitoring.

Three modes share one tree builder:

``classical``
    every leapfrog step uses posterior gradients, divergence threshold
    ``max_energy_error_lf``.
``lhnn_monitored``
    steps use network gradients.  When the energy error of a network step
    exceeds ``max_energy_error_hnn`` the step is redone with posterior
    gradients and the chain keeps using them until ``n_lf`` sample iterations
    (counting the one where the breach happened) have elapsed.
``lhnn_unmonitored``
    network gradients throughout and no fallback; a subtree stops once the
    energy error exceeds ``unmonitored_threshold`` (``max_energy_error_lf``
    unless set, as in plain NUTS).  Kept to reproduce sampling degeneracy.

The energy error of a state is ``H(z) + ln u`` with the exact Hamiltonian.

Random draws come from one ``numpy.random.Generator`` per chain, consumed per
iteration in this order: momentum (d normals), slice variable, then for each
doubling the direction, the subtree proposal draws made inside the recursion,
and the top-level acceptance draw (only when the new subtree is valid).
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, IntegrationError
from .integrate import ExactGradient, SurrogateGradient, leapfrog
from .targets import kinetic_energy

log = logging.getLogger(__name__)

MODES = ("classical", "lhnn_monitored", "lhnn_unmonitored")


@dataclass
class SamplerConfig:
    n_samples: int = 1000
    step_size: float = 0.1
    mode: str = "classical"
    max_energy_error_lf: float = 1000.0
    max_energy_error_hnn: float = 10.0
    n_lf: int = 10
    max_tree_depth: int = 10
    seed: int = 0
    masses: list = None
    initial_position: list = None
    allow_n_lf_outside_range: bool = False
    unmonitored_threshold: float = None

    @property
    def surrogate_only_threshold(self):
        if self.unmonitored_threshold is None:
            return self.max_energy_error_lf
        return self.unmonitored_threshold

    def validate(self, prefix="sampler"):
        errors = []
        if not isinstance(self.n_samples, int) or self.n_samples < 1:
            errors.append(f"{prefix}.n_samples: must be a positive integer")
        if not (isinstance(self.step_size, (int, float)) and self.step_size > 0):
            errors.append(f"{prefix}.step_size: must be positive")
        if self.mode not in MODES:
            errors.append(f"{prefix}.mode: unknown mode {self.mode!r} (expected one of {', '.join(MODES)})")
        if self.mode == "lhnn_monitored" and not self.max_energy_error_hnn < self.max_energy_error_lf:
            errors.append(
                f"{prefix}.max_energy_error_hnn ({self.max_energy_error_hnn}) must be below "
                f"{prefix}.max_energy_error_lf ({self.max_energy_error_lf})"
            )
        if not isinstance(self.n_lf, int) or self.n_lf < 1:
            errors.append(f"{prefix}.n_lf: must be a positive integer")
        elif not (5 <= self.n_lf <= 20) and not self.allow_n_lf_outside_range:
            errors.append(f"{prefix}.n_lf: {self.n_lf} is outside 5..20; set allow_n_lf_outside_range to override")
        if not isinstance(self.max_tree_depth, int) or self.max_tree_depth < 1:
            errors.append(f"{prefix}.max_tree_depth: must be a positive integer")
        if self.masses is not None and np.any(np.asarray(self.masses, dtype=float) <= 0):
            errors.append(f"{prefix}.masses: must be positive")
        return errors


@dataclass
class FallbackState:
    active: bool = False
    count: int = 0


@dataclass
class ChainResult:
    samples: np.ndarray
    hamiltonian: np.ndarray
    tree_depth: np.ndarray
    fallback: np.ndarray
    ln_u: np.ndarray
    stop_reason: list
    # per-iteration gradient spend
    exact_per_sample: np.ndarray
    surrogate_per_sample: np.ndarray
    steps_per_sample: np.ndarray
    uturn_checks_failed: np.ndarray
    exact_gradients: int = 0
    surrogate_evals: int = 0
    leapfrog_steps: int = 0
    divergent_starts: int = 0
    max_depth_hits: int = 0
    wall_time: float = 0.0
    mode: str = "classical"
    extra: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def u(self):
        return np.exp(self.ln_u)

    def ledger(self, harvest_gradients=0):
        return {
            "exact_gradients": int(self.exact_gradients),
            "surrogate_evals": int(self.surrogate_evals),
            "harvest_gradients": int(harvest_gradients),
        }


def error_criterion(h_value, ln_u, threshold):
    """True when ``H + ln u`` exceeds the threshold; NaN counts as exceeding."""
    value = h_value + ln_u
    if math.isnan(value):
        return True
    return value > threshold


class Node:
    """A phase-space state in the tree with its exact H and cached gradient."""

    __slots__ = ("q", "p", "h", "grad")

    def __init__(self, q, p, h, grad=None):
        self.q = q
        self.p = p
        self.h = h
        # exact dU/dq at q, if known; surrogate gradients are never cached
        self.grad = grad


class Subtree(NamedTuple):
    minus: Node
    plus: Node
    proposal: Node
    n_valid: int
    ok: bool
    fallback: bool
    diverged: bool


class TreeContext:
    """Everything a tree expansion needs besides the state and direction."""

    def __init__(self, target, cfg, exact, surrogate, rng, ln_u=0.0):
        self.target = target
        self.cfg = cfg
        self.exact = exact
        self.surrogate = surrogate
        self.rng = rng
        self.ln_u = ln_u
        self.masses = None if cfg.masses is None else np.asarray(cfg.masses, dtype=float)
        self.inv_mass = np.ones(target.dim) if self.masses is None else 1.0 / self.masses
        self.steps = 0
        self.uturn_failures = 0

    def hamiltonian(self, q, p):
        try:
            return self.target.potential(q) + kinetic_energy(p, self.masses)
        except (FloatingPointError, ValueError):
            return math.inf

    def step(self, node, dt, source):
        try:
            if source is self.exact:
                if node.grad is None:
                    node.grad = self.exact.grad_potential(node.q, node.p)
                    if not np.all(np.isfinite(node.grad)):
                        node.grad = None
                        raise IntegrationError("non-finite gradient", node.q, node.p)
                q, p, g = leapfrog(source, node.q, node.p, dt, self.inv_mass, node.grad)
                return Node(q, p, self.hamiltonian(q, p), g)
            q, p, _ = leapfrog(source, node.q, node.p, dt, self.inv_mass)
            return Node(q, p, self.hamiltonian(q, p))
        except IntegrationError as exc:
            log.debug("integration failure: %s", exc)
            return Node(node.q, node.p, math.inf)


def _base_case(node, direction, fallback, ctx):
    cfg = ctx.cfg
    dt = direction * cfg.step_size
    ctx.steps += 1
    if cfg.mode == "classical":
        new = ctx.step(node, dt, ctx.exact)
        ok = not error_criterion(new.h, ctx.ln_u, cfg.max_energy_error_lf)
    elif cfg.mode == "lhnn_unmonitored":
        new = ctx.step(node, dt, ctx.surrogate)
        ok = not error_criterion(new.h, ctx.ln_u, cfg.surrogate_only_threshold)
    else:
        if not fallback:
            new = ctx.step(node, dt, ctx.surrogate)
            breach = error_criterion(new.h, ctx.ln_u, cfg.max_energy_error_hnn)
            fallback = breach
            ok = not breach
        # a step already taken with the flag on would be discarded unseen, so it is skipped
        if fallback:
            new = ctx.step(node, dt, ctx.exact)
            ok = not error_criterion(new.h, ctx.ln_u, cfg.max_energy_error_lf)
    n_valid = int(ctx.ln_u <= -new.h)
    return Subtree(new, new, new, n_valid, ok, fallback, not ok)


def _no_uturn(minus, plus, ctx):
    dq = plus.q - minus.q
    ok = dq @ minus.p >= 0 and dq @ plus.p >= 0
    if not ok:
        ctx.uturn_failures += 1
    return ok


def build_tree(node, direction, depth, fallback, ctx):
    """Build a subtree of ``2**depth`` leapfrog steps from ``node``.

    Returns the subtree's extreme states, its proposal, the number of states
    inside the slice, whether expansion may continue, the fallback flag after
    the subtree and whether the subtree ended in a divergence.
    """
    if depth == 0:
        return _base_case(node, direction, fallback, ctx)
    first = build_tree(node, direction, depth - 1, fallback, ctx)
    if not first.ok:
        return first
    if direction == -1:
        second = build_tree(first.minus, direction, depth - 1, first.fallback, ctx)
        minus, plus = second.minus, first.plus
    else:
        second = build_tree(first.plus, direction, depth - 1, first.fallback, ctx)
        minus, plus = first.minus, second.plus
    n_valid = first.n_valid + second.n_valid
    proposal = first.proposal
    draw = ctx.rng.random()
    if n_valid > 0 and draw < second.n_valid / n_valid:
        proposal = second.proposal
    ok = second.ok and _no_uturn(minus, plus, ctx)
    return Subtree(minus, plus, proposal, n_valid, ok, second.fallback, second.diverged)


def nuts_sample(target, cfg, net=None, rng=None, q0=None, callback=None):
    """Draw ``cfg.n_samples`` NUTS samples.

    ``net`` is required for the L-HNN modes and ignored in classical mode.
    ``callback(i, state)`` runs after each iteration with the chain's
    ``FallbackState``; tests use it to drive stub networks.
    """
    errors = cfg.validate()
    if cfg.mode != "classical" and net is None:
        errors.append(f"sampler.mode {cfg.mode} requires a trained network")
    if net is not None and cfg.mode != "classical" and net.dim != target.dim:
        errors.append(f"network dimension {net.dim} does not match target dimension {target.dim}")
    if errors:
        raise ConfigError(errors)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    d = target.dim
    if q0 is None:
        q0 = np.zeros(d) if cfg.initial_position is None else cfg.initial_position
    q = np.array(q0, dtype=float).reshape(d)

    exact = ExactGradient(target)
    surrogate = SurrogateGradient(net) if cfg.mode != "classical" else None
    ctx = TreeContext(target, cfg, exact, surrogate, rng)
    sqrt_m = np.ones(d) if ctx.masses is None else np.sqrt(ctx.masses)
    M = cfg.n_samples

    samples = np.empty((M, d))
    energies = np.empty(M)
    depths = np.empty(M, dtype=int)
    fallback_used = np.zeros(M, dtype=bool)
    ln_us = np.empty(M)
    reasons = []
    exact_ps = np.zeros(M, dtype=int)
    surr_ps = np.zeros(M, dtype=int)
    steps_ps = np.zeros(M, dtype=int)
    uturn_ps = np.zeros(M, dtype=int)

    state = FallbackState()
    current_grad = None
    divergent_starts = 0
    depth_hits = 0
    start = time.perf_counter()
    for i in range(M):
        e0, s0, st0 = exact.count, surrogate.count if surrogate else 0, ctx.steps
        ctx.uturn_failures = 0
        p = rng.standard_normal(d) * sqrt_m
        h0 = ctx.hamiltonian(q, p)
        # u ~ Uniform(0, exp(-H0)), kept in log space; 1 - U lies in (0, 1]
        ln_u = -h0 + math.log1p(-rng.random())
        ctx.ln_u = ln_u

        if state.active:
            state.count += 1
        if state.count == cfg.n_lf:
            state.active, state.count = False, 0
        used_fallback = state.active

        root = Node(q, p, h0, current_grad)
        minus = plus = proposal = root
        n_valid, ok, j = 1, True, 0
        reason = "max_depth"
        while ok and j < cfg.max_tree_depth:
            direction = -1 if rng.random() < 0.5 else 1
            if direction == -1:
                tree = build_tree(minus, direction, j, state.active, ctx)
                minus = tree.minus
            else:
                tree = build_tree(plus, direction, j, state.active, ctx)
                plus = tree.plus
            state.active = tree.fallback
            used_fallback = used_fallback or tree.fallback
            if tree.ok and rng.random() < min(1.0, tree.n_valid / n_valid):
                proposal = tree.proposal
            n_valid += tree.n_valid
            if not tree.ok:
                reason = "divergence" if tree.diverged else "uturn"
                if tree.diverged and j == 0:
                    divergent_starts += 1
                ok = False
            else:
                ok = _no_uturn(minus, plus, ctx)
                if not ok:
                    reason = "uturn"
            j += 1
        if ok:
            depth_hits += 1
            log.debug("iteration %d reached max tree depth %d", i, cfg.max_tree_depth)

        q = proposal.q
        current_grad = proposal.grad
        samples[i] = q
        energies[i] = proposal.h
        depths[i] = j
        fallback_used[i] = used_fallback
        ln_us[i] = ln_u
        reasons.append(reason)
        exact_ps[i] = exact.count - e0
        surr_ps[i] = (surrogate.count if surrogate else 0) - s0
        steps_ps[i] = ctx.steps - st0
        uturn_ps[i] = ctx.uturn_failures
        if callback is not None:
            callback(i, state)

    if divergent_starts:
        log.warning("%d of %d iterations diverged on their first leapfrog step", divergent_starts, M)
    return ChainResult(
        samples=samples,
        hamiltonian=energies,
        tree_depth=depths,
        fallback=fallback_used,
        ln_u=ln_us,
        stop_reason=reasons,
        exact_per_sample=exact_ps,
        surrogate_per_sample=surr_ps,
        steps_per_sample=steps_ps,
        uturn_checks_failed=uturn_ps,
        exact_gradients=exact.count,
        surrogate_evals=surrogate.count if surrogate else 0,
        leapfrog_steps=ctx.steps,
        divergent_starts=divergent_starts,
        max_depth_hits=depth_hits,
        wall_time=time.perf_counter() - start,
        mode=cfg.mode,
    )
