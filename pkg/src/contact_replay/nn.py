"""Dense ReLU networks with hand-written backprop, Adam and Polyak averaging."""

from __future__ import annotations

import numpy as np

from .core import ContractViolation

NN_FORMAT_VERSION = 1
OUTPUT_ACTIVATIONS = ("identity", "tanh")


class Mlp:
    """Feed-forward net: ReLU hidden layers, identity or tanh output head.

    Inputs may be a single vector or a batch of row vectors. ``params`` is the
    flat list ``[W0, b0, W1, b1, ...]`` with ``W`` shaped ``(n_in, n_out)``.
    """

    def __init__(self, layer_sizes, output_activation: str = "identity",
                 rng: np.random.Generator | None = None, zero: bool = False):
        layer_sizes = [int(n) for n in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ContractViolation(f"bad layer sizes {layer_sizes}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ContractViolation(f"unknown output activation {output_activation!r}")
        self.layer_sizes = layer_sizes
        self.output_activation = output_activation
        self.params: list[np.ndarray] = []
        rng = rng if rng is not None else np.random.default_rng(0)
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            if zero:
                W, b = np.zeros((n_in, n_out)), np.zeros(n_out)
            else:
                # PyTorch-style fan-in uniform initialisation
                bound = 1.0 / np.sqrt(n_in)
                W = rng.uniform(-bound, bound, size=(n_in, n_out))
                b = rng.uniform(-bound, bound, size=n_out)
            self.params += [W, b]
        self._cache = None

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None] if single else x
        if h.shape[-1] != self.layer_sizes[0]:
            raise ContractViolation(f"expected input width {self.layer_sizes[0]}, got {h.shape[-1]}")
        activations = [h]
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            if i < self.n_layers - 1:
                h = np.maximum(z, 0.0)
            elif self.output_activation == "tanh":
                h = np.tanh(z)
            else:
                h = z
            activations.append(h)
        self._cache = (activations, single)
        return h[0] if single else h

    __call__ = forward

    def backward(self, output_grad) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(output * output_grad)`` w.r.t. params and input."""
        if self._cache is None:
            raise ContractViolation("backward() called without a preceding forward()")
        activations, single = self._cache
        g = np.asarray(output_grad, dtype=np.float64)
        if single:
            g = g[None]
        if g.shape != activations[-1].shape:
            raise ContractViolation(f"output_grad shape {g.shape} != output {activations[-1].shape}")
        if self.output_activation == "tanh":
            g = g * (1.0 - activations[-1] ** 2)
        grads = [None] * len(self.params)
        for i in reversed(range(self.n_layers)):
            h_in = activations[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
            if i > 0:
                g = g * (activations[i] > 0)
        return grads, (g[0] if single else g)

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.layer_sizes = list(self.layer_sizes)
        other.output_activation = self.output_activation
        other.params = [p.copy() for p in self.params]
        other._cache = None
        return other

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {
            f"{prefix}/format_version": np.array(NN_FORMAT_VERSION),
            f"{prefix}/layer_sizes": np.array(self.layer_sizes, dtype=np.int64),
            f"{prefix}/output_activation": np.array(self.output_activation),
        }
        for i, p in enumerate(self.params):
            out[f"{prefix}/param{i}"] = np.ascontiguousarray(p)
        return out

    @classmethod
    def from_arrays(cls, data, prefix: str) -> "Mlp":
        version = int(data[f"{prefix}/format_version"])
        if version != NN_FORMAT_VERSION:
            raise ValueError(f"{prefix}: unsupported network format {version}")
        net = cls(data[f"{prefix}/layer_sizes"].tolist(), str(data[f"{prefix}/output_activation"]),
                  zero=True)
        for i, p in enumerate(net.params):
            stored = data[f"{prefix}/param{i}"]
            if stored.shape != p.shape:
                raise ValueError(f"{prefix}/param{i}: shape {stored.shape}, expected {p.shape}")
            net.params[i] = stored.astype(np.float64)
        return net


class AdamState:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        self.skipped = 0

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/scalars": np.array([self.lr, self.beta1, self.beta2, self.eps]),
               f"{prefix}/counters": np.array([self.t, self.skipped], dtype=np.int64)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}/m{i}"] = m
            out[f"{prefix}/v{i}"] = v
        return out

    @classmethod
    def from_arrays(cls, data, prefix: str, params) -> "AdamState":
        lr, b1, b2, eps = data[f"{prefix}/scalars"].tolist()
        state = cls(params, lr, b1, b2, eps)
        state.t, state.skipped = (int(v) for v in data[f"{prefix}/counters"])
        state.m = [data[f"{prefix}/m{i}"].copy() for i in range(len(params))]
        state.v = [data[f"{prefix}/v{i}"].copy() for i in range(len(params))]
        return state


def adam_step(params, grads, state: AdamState) -> bool:
    """In-place Adam update with bias correction.

    Returns False (and counts the skip) when any gradient is non-finite.
    """
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ContractViolation("parameter and gradient shapes differ")
    if not all(np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        return False
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return True


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """Move ``target`` toward ``online``: ``target <- tau*online + (1-tau)*target``."""
    if target.layer_sizes != online.layer_sizes or target.output_activation != online.output_activation:
        raise ContractViolation("soft_update needs identical architectures")
    if not 0.0 <= tau <= 1.0:
        raise ContractViolation(f"tau must lie in [0, 1], got {tau}")
    for t, o in zip(target.params, online.params):
        if tau == 1.0:
            t[...] = o
        elif tau > 0.0:
            mixed = t + tau * (o - t)
            # rounding must not leave the segment between the two inputs
            np.clip(mixed, np.minimum(t, o), np.maximum(t, o), out=t)
