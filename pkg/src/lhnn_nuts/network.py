"""Latent Hamiltonian neural network.

A fully connected network maps ``z = [q, p]`` (length 2d) to ``d`` latent
outputs.  Their sum is the predicted Hamiltonian.  Input gradients and the
gradient of the physics loss with respect to every parameter are computed by
hand-written layer recursions (the loss gradient differentiates through the
input-gradient pass, so it needs the second derivative of the activation).

Weights follow the ``w @ u + b`` convention: ``weights[k]`` has shape
``(fan_out, fan_in)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


def _tanh(x):
    t = np.tanh(x)
    return t, 1.0 - t * t, -2.0 * t * (1.0 - t * t)


def _sine(x):
    s = np.sin(x)
    return s, np.cos(x), -s


def _relu(x):
    pos = (x > 0).astype(float)
    return x * pos, pos, np.zeros_like(x)


def _identity(x):
    return x, np.ones_like(x), np.zeros_like(x)


# each returns (phi, phi', phi'') evaluated elementwise
ACTIVATIONS = {"tanh": _tanh, "sine": _sine, "relu": _relu, "identity": _identity}


@dataclass
class ParameterGradient:
    weights: list
    biases: list

    def flat(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


class LHNN:
    """Feed-forward network whose latent outputs sum to a Hamiltonian.

    ``dim`` is the position dimension, so the input width is ``2 * dim``.
    The latent width is the last entry of ``layer_sizes``; it equals ``dim``
    for an L-HNN and 1 for a plain scalar-output HNN.
    """

    def __init__(self, weights, biases, activation="sine"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}; expected one of {sorted(ACTIVATIONS)}")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        self.activation = activation
        self._phi = ACTIVATIONS[activation]
        self._check_shapes()

    @classmethod
    def initialize(cls, layer_sizes, activation="sine", seed=0):
        """Uniform fan-in scaled initialization, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, fan_out))
        return cls(weights, biases, activation)

    @classmethod
    def zeros(cls, layer_sizes, activation="sine"):
        return cls(
            [np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])],
            [np.zeros(o) for o in layer_sizes[1:]],
            activation,
        )

    def _check_shapes(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("need one bias vector per weight matrix and at least one layer")
        width = self.weights[0].shape[1]
        if width % 2:
            raise DimensionError(f"input width {width} is not even")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != width or b.shape != (w.shape[0],):
                raise DimensionError(f"layer {k}: weight {w.shape} / bias {b.shape} do not chain from width {width}")
            width = w.shape[0]
        for a in self.weights + self.biases:
            if not np.all(np.isfinite(a)):
                raise ValueError("network parameters must be finite")

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def dim(self):
        return self.weights[0].shape[1] // 2

    @property
    def latent_dim(self):
        return self.weights[-1].shape[0]

    @property
    def n_hidden(self):
        return len(self.weights) - 1

    def copy(self):
        return LHNN([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def _inputs(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != 2 * self.dim or z.ndim > 2:
            raise DimensionError(f"expected z with last axis {2 * self.dim}, got shape {z.shape}")
        return z

    def forward(self, z):
        """Latent outputs for one input vector or a batch of rows."""
        u = self._inputs(z)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            u = self._phi(u @ w.T + b)[0]
        return u @ self.weights[-1].T + self.biases[-1]

    def hamiltonian_estimate(self, z):
        return self.forward(z).sum(axis=-1)

    def input_gradient(self, z):
        """Exact dH/dz; the first ``dim`` entries are dH/dq, the rest dH/dp."""
        u = self._inputs(z)
        derivs = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            act, d1, _ = self._phi(u @ w.T + b)
            derivs.append(d1)
            u = act
        g = self.weights[-1].sum(axis=0)
        for w, d1 in zip(reversed(self.weights[:-1]), reversed(derivs)):
            g = (g * d1) @ w
        if g.ndim == 1 and u.ndim == 2:
            g = np.broadcast_to(g, (u.shape[0], g.size)).copy()
        return g

    def _passes(self, z):
        """Forward pass plus the input-gradient pass, keeping every intermediate."""
        us, d1s, d2s = [z], [], []
        u = z
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            act, d1, d2 = self._phi(u @ w.T + b)
            us.append(act)
            d1s.append(d1)
            d2s.append(d2)
            u = act
        c = self.weights[-1].sum(axis=0)
        # gs[k] is dH/du_k, ds[k] = gs[k + 1] * phi'(a_k)
        gs = [None] * (self.n_hidden + 1)
        ds = [None] * self.n_hidden
        gs[-1] = np.broadcast_to(c, (z.shape[0], c.size))
        for k in reversed(range(self.n_hidden)):
            ds[k] = gs[k + 1] * d1s[k]
            gs[k] = ds[k] @ self.weights[k]
        return us, d1s, d2s, gs, ds

    @staticmethod
    def _batch(batch):
        z, dq, dp = (np.atleast_2d(np.asarray(a, dtype=float)) for a in batch)
        if z.shape[0] == 0:
            raise ValueError("empty batch")
        if not (z.shape[0] == dq.shape[0] == dp.shape[0]):
            raise DimensionError("batch arrays have different row counts")
        return z, dq, dp

    def _residuals(self, g0, dq, dp):
        d = self.dim
        if dq.shape[1] != d or dp.shape[1] != d:
            raise DimensionError(f"derivative targets must have {d} columns")
        # dH/dp should equal dq/dt and -dH/dq should equal dp/dt
        return g0[:, d:] - dq, -g0[:, :d] - dp

    def loss(self, batch):
        """Mean over rows of ``|dH/dp - dq/dt|^2 + |-dH/dq - dp/dt|^2``."""
        z, dq, dp = self._batch(batch)
        rq, rp = self._residuals(self.input_gradient(self._inputs(z)), dq, dp)
        return float((np.sum(rq * rq) + np.sum(rp * rp)) / z.shape[0])

    def loss_and_gradient(self, batch):
        z, dq, dp = self._batch(batch)
        z = self._inputs(z)
        n = z.shape[0]
        us, d1s, d2s, gs, ds = self._passes(z)
        rq, rp = self._residuals(gs[0], dq, dp)
        value = float((np.sum(rq * rq) + np.sum(rp * rp)) / n)

        P = self.n_hidden
        gw = [np.zeros_like(w) for w in self.weights]
        gb = [np.zeros_like(b) for b in self.biases]
        a_bar = [None] * P
        # adjoint of dH/dz
        g_bar = (2.0 / n) * np.concatenate([-rp, rq], axis=1)
        for k in range(P):
            d_bar = g_bar @ self.weights[k].T
            gw[k] += ds[k].T @ g_bar
            g_bar = d_bar * d1s[k]
            a_bar[k] = d_bar * gs[k + 1] * d2s[k]
        # dH/du_P is the column sum of the output weights
        gw[-1] += np.broadcast_to(g_bar.sum(axis=0), gw[-1].shape)

        u_bar = None
        for k in reversed(range(P)):
            ab = a_bar[k] if u_bar is None else a_bar[k] + u_bar * d1s[k]
            gw[k] += ab.T @ us[k]
            gb[k] += ab.sum(axis=0)
            u_bar = ab @ self.weights[k]
        return value, ParameterGradient(gw, gb)

    def loss_gradient(self, batch):
        return self.loss_and_gradient(batch)[1]

    def parameters(self):
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def flat_parameters(self):
        return np.concatenate([a.ravel() for a in self.parameters()])

    def with_flat_parameters(self, flat):
        flat = np.asarray(flat, dtype=float)
        out, i = [], 0
        for a in self.parameters():
            out.append(flat[i : i + a.size].reshape(a.shape))
            i += a.size
        if i != flat.size:
            raise DimensionError(f"expected {i} parameters, got {flat.size}")
        return LHNN(out[0::2], out[1::2], self.activation)
