"""Velocity-Verlet (leapfrog) integration with exact or surrogate gradients.

One step advances position with the current momentum and the gradient at the
start of the step, then updates momentum with the average of the gradients at
both ends::

    q' = q + (dt / m) p - (dt^2 / 2m) g(q)
    p' = p - (dt / 2) (g(q) + g(q'))

``g`` is dU/dq from the posterior, or the dH/dq half of the network's input
gradient.  The network's gradient depends on momentum too; it is evaluated at
``(q, p)`` for the leading term and at ``(q', p)`` for the trailing term.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError
from .targets import PhaseState


class GradientSource:
    """Supplies dU/dq and counts how many times it was evaluated."""

    tag = "source"
    # whether grad_potential depends on momentum; such gradients are never reused
    momentum_dependent = False

    def __init__(self):
        self.count = 0

    def grad_potential(self, q, p):
        self.count += 1
        return self._grad(q, p)


class ExactGradient(GradientSource):
    tag = "exact"

    def __init__(self, target):
        super().__init__()
        self.target = target

    def _grad(self, q, p):
        return -self.target.grad_log_density(q)


class SurrogateGradient(GradientSource):
    tag = "surrogate"
    momentum_dependent = True

    def __init__(self, net):
        super().__init__()
        self.net = net
        self._d = net.dim

    def _grad(self, q, p):
        return self.net.input_gradient(np.concatenate([q, p]))[: self._d]


@dataclass(frozen=True)
class IntegratorConfig:
    step_size: float
    masses: np.ndarray = None

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.masses is not None:
            m = np.asarray(self.masses, dtype=float)
            if np.any(m <= 0):
                raise ValueError("masses must be positive")
            object.__setattr__(self, "masses", m)

    def inverse_masses(self, dim):
        return np.ones(dim) if self.masses is None else 1.0 / self.masses


def leapfrog(source, q, p, dt, inv_mass, grad=None):
    """One step on raw arrays; returns ``(q', p', g(q'))``.

    ``dt`` may be negative (backward integration).  ``grad`` is a reusable
    gradient at ``q`` from a previous step, or None to evaluate it.
    """
    if grad is None:
        grad = source.grad_potential(q, p)
        if not np.all(np.isfinite(grad)):
            raise IntegrationError("non-finite gradient", q, p)
    q_new = q + dt * inv_mass * p - 0.5 * dt * dt * inv_mass * grad
    grad_new = source.grad_potential(q_new, p)
    if not np.all(np.isfinite(grad_new)):
        raise IntegrationError("non-finite gradient", q_new, p)
    p_new = p - 0.5 * dt * (grad + grad_new)
    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(p_new))):
        raise IntegrationError("non-finite state", q_new, p_new)
    return q_new, p_new, grad_new


def leapfrog_step(source, cfg, z):
    inv_mass = cfg.inverse_masses(z.dim)
    q, p, _ = leapfrog(source, z.q, z.p, cfg.step_size, inv_mass)
    return PhaseState(q, p)


def integrate_trajectory(source, cfg, z0, n_steps, reuse_gradients=True):
    """Return ``[z0, z1, ..., z_n]``.

    With ``reuse_gradients`` the trailing gradient of one step is the leading
    gradient of the next, which leaves exact-gradient trajectories bit-identical
    while costing ``n + 1`` evaluations instead of ``2n``.  It has no effect on
    momentum-dependent sources.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    inv_mass = cfg.inverse_masses(z0.dim)
    reuse = reuse_gradients and not source.momentum_dependent
    q, p, g = z0.q, z0.p, None
    path = [z0]
    for _ in range(n_steps):
        q, p, g_new = leapfrog(source, q, p, cfg.step_size, inv_mass, g)
        g = g_new if reuse else None
        path.append(PhaseState(q, p))
    return path
