"""Small dense networks and an Adam optimizer on flat float64 parameter vectors.

Keeping parameters as one flat vector makes checkpointing, finite-difference
gradient checks and bitwise-reproducible updates straightforward.
"""

from __future__ import annotations

import numpy as np


class MLP:
    """Fully connected network with tanh hidden layers and a linear output."""

    def __init__(self, in_dim: int, out_dim: int, hidden: tuple[int, ...] = (64, 64),
                 rng: np.random.Generator | None = None, out_scale: float = 1.0):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.hidden = tuple(int(h) for h in hidden)
        dims = [self.in_dim, *self.hidden, self.out_dim]
        self.shapes: list[tuple[int, ...]] = []
        for a, b in zip(dims[:-1], dims[1:]):
            self.shapes.append((b, a))
            self.shapes.append((b,))
        self.n_params = sum(int(np.prod(s)) for s in self.shapes)
        self.theta = np.zeros(self.n_params)
        self._views: list[np.ndarray] = []
        offset = 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            self._views.append(self.theta[offset:offset + size].reshape(shape))
            offset += size
        if rng is not None:
            self.init_params(rng, out_scale)

    def init_params(self, rng: np.random.Generator, out_scale: float = 1.0) -> None:
        n_layers = len(self.shapes) // 2
        for layer in range(n_layers):
            w, b = self._views[2 * layer], self._views[2 * layer + 1]
            scale = 1.0 / np.sqrt(w.shape[1])
            if layer == n_layers - 1:
                scale *= out_scale
            w[:] = scale * rng.standard_normal(w.shape)
            b[:] = 0.0

    def get_theta(self) -> np.ndarray:
        return self.theta.copy()

    def set_theta(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        self.theta[:] = theta  # keep views valid

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        """x is (batch, in_dim); pass a list as ``cache`` to enable backward()."""
        h = x
        if cache is not None:
            cache.append(x)
        n_layers = len(self.shapes) // 2
        for layer in range(n_layers):
            w, b = self._views[2 * layer], self._views[2 * layer + 1]
            h = h @ w.T + b
            if layer < n_layers - 1:
                h = np.tanh(h)
                if cache is not None:
                    cache.append(h)
        return h

    def backward(self, cache: list, dout: np.ndarray) -> np.ndarray:
        """Gradient of sum(dout * output) with respect to the flat parameters."""
        grad = np.zeros(self.n_params)
        gviews = []
        offset = 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            gviews.append(grad[offset:offset + size].reshape(shape))
            offset += size
        n_layers = len(self.shapes) // 2
        d = dout
        for layer in range(n_layers - 1, -1, -1):
            w = self._views[2 * layer]
            inputs = cache[layer]
            gviews[2 * layer][:] = d.T @ inputs
            gviews[2 * layer + 1][:] = d.sum(axis=0)
            if layer > 0:
                d = (d @ w) * (1.0 - inputs * inputs)  # tanh'
        return grad


class Adam:
    """Adaptive-moment gradient step on a flat parameter vector."""

    def __init__(self, n_params: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """One descent step; returns the updated parameters."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
