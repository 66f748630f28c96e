"""Minimal MLP function approximators with hand-written backprop.

Everything the agents learn (policy, critics, world models) is an ``Mlp``.
Parameters live in one flat float64 vector; per-layer weight/bias views
share that memory, so the optimizer and soft updates are single vectorized
operations. No autodiff graph: ``backward`` implements the chain rule for
exactly the feed-forward shape ``forward`` computes.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .container import read_container, write_container
from .errors import NumericalError

HIDDEN_ACTIVATIONS = ("relu", "tanh")


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class GradientTape:
    """Per-parameter gradient accumulators mirroring one Mlp's layout.

    ``flat`` is the full gradient vector; ``layers`` holds (dW, db) views
    into it. ``dinput`` is the gradient with respect to the forward input
    (filled by ``Mlp.backward``), needed when chaining networks.
    """

    def __init__(self, sizes: tuple[int, ...]):
        self.sizes = sizes
        self.flat = np.zeros(_param_count(sizes))
        self.layers = _build_views(self.flat, sizes)
        self.dinput: np.ndarray | None = None

    def zero(self) -> None:
        self.flat[:] = 0.0
        self.dinput = None


def _param_count(sizes: Sequence[int]) -> int:
    return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


def _build_views(flat: np.ndarray, sizes: Sequence[int]):
    """Carve (W, b) views out of a flat vector, in declaration order."""
    views = []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = flat[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in)
        pos += fan_out * fan_in
        b = flat[pos : pos + fan_out]
        pos += fan_out
        views.append((w, b))
    return views


class Mlp:
    """Feed-forward network: affine layers, one hidden activation, identity output.

    Weight matrices are (out, in); batches are row-major (B, dim). A 1-D
    input is treated as a batch of one and returns a 1-D output.
    """

    def __init__(self, sizes: Sequence[int], hidden_activation: str = "relu", *, rng):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"need >= 2 positive layer sizes, got {sizes}")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {hidden_activation!r}")
        self.sizes = sizes
        self.hidden_activation = hidden_activation
        self.theta = np.zeros(_param_count(sizes))
        self.layers = _build_views(self.theta, sizes)
        self._cache: list[np.ndarray] | None = None
        self._init_params(_as_rng(rng))

    def _init_params(self, rng: np.random.Generator) -> None:
        # scaled uniform fan-in init: U(-1/sqrt(fan_in), +1/sqrt(fan_in))
        for w, b in self.layers:
            bound = 1.0 / np.sqrt(w.shape[1])
            w[:] = rng.uniform(-bound, bound, size=w.shape)
            b[:] = rng.uniform(-bound, bound, size=b.shape)

    @property
    def n_params(self) -> int:
        return self.theta.size

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.hidden_activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        """Run the network on a batch (B, in) -> (B, out).

        With ``cache=True`` the per-layer inputs are kept so ``backward``
        can run; any previous cache is dropped either way.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"input shape {x.shape} incompatible with layer sizes {self.sizes}")
        acts = [x] if cache else None
        a = x
        last = len(self.layers) - 1
        for l, (w, b) in enumerate(self.layers):
            z = a @ w.T + b
            a = self._act(z) if l < last else z
            if cache and l < last:
                acts.append(a)
        self._cache = acts
        return a[0] if single else a

    def backward(self, dy: np.ndarray, param_grads: bool = True) -> GradientTape:
        """Chain rule from upstream dL/dy (B, out) back to every parameter.

        The caller owns any 1/B scaling. Returns a tape whose ``dinput``
        holds dL/dx. Requires a preceding ``forward(..., cache=True)``.
        """
        if self._cache is None:
            raise RuntimeError("backward requires a prior forward(..., cache=True)")
        acts = self._cache
        dy = np.asarray(dy, dtype=np.float64)
        if dy.ndim == 1:
            dy = dy[None, :] if dy.size == self.out_dim else dy[:, None]
        tape = GradientTape(self.sizes)
        g = dy
        for l in range(len(self.layers) - 1, -1, -1):
            w, _ = self.layers[l]
            if param_grads:
                dw, db = tape.layers[l]
                np.matmul(g.T, acts[l], out=dw)
                np.sum(g, axis=0, out=db)
            g = g @ w
            if l > 0:
                a = acts[l]
                if self.hidden_activation == "relu":
                    g = g * (a > 0.0)
                else:
                    g = g * (1.0 - a * a)
        tape.dinput = g
        return tape

    def input_gradient(self, dy: np.ndarray) -> np.ndarray:
        """dL/dx only, skipping parameter gradients (cheaper for chaining)."""
        return self.backward(dy, param_grads=False).dinput

    def clone(self) -> "Mlp":
        other = Mlp(self.sizes, self.hidden_activation, rng=0)
        other.theta[:] = self.theta
        return other

    def save(self, path) -> None:
        meta = {"kind": "mlp", "sizes": list(self.sizes), "hidden_activation": self.hidden_activation}
        write_container(path, meta, {"theta": self.theta})

    @classmethod
    def load(cls, path) -> "Mlp":
        meta, arrays = read_container(path)
        if meta.get("kind") != "mlp":
            raise ValueError(f"{path}: container does not hold an mlp (kind={meta.get('kind')!r})")
        net = cls(meta["sizes"], meta["hidden_activation"], rng=0)
        net.theta[:] = arrays["theta"]
        return net


class Adam:
    """Adam on a flat parameter vector (decay 0.9/0.999, eps 1e-8)."""

    def __init__(self, n_params: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ValueError("learning rate must be >= 0")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        if theta.shape != self.m.shape or grad.shape != self.m.shape:
            raise ValueError(
                f"optimizer sized for {self.m.shape[0]} params, got theta {theta.shape}, grad {grad.shape}"
            )
        if not np.isfinite(grad).all():
            raise NumericalError("non-finite gradient passed to optimizer")
        self.t += 1
        self.m += (1.0 - self.beta1) * (grad - self.m)
        self.v += (1.0 - self.beta2) * (grad * grad - self.v)
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"m": self.m, "v": self.v, "t": np.array([self.t], dtype=np.int64)}


def optimizer_step(net: Mlp, tape: GradientTape, opt: Adam) -> Mlp:
    """Apply one optimizer update to ``net`` in place (and return it)."""
    if tape.sizes != net.sizes:
        raise ValueError(f"tape shape {tape.sizes} does not match net {net.sizes}")
    opt.step(net.theta, tape.flat)
    if not np.isfinite(net.theta).all():
        raise NumericalError("parameters became non-finite after optimizer step")
    return net


def soft_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """target <- (1 - tau) * target + tau * source, elementwise, in place."""
    if target.sizes != source.sizes or target.hidden_activation != source.hidden_activation:
        raise ValueError("soft_update requires identical architectures")
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    target.theta *= 1.0 - tau
    target.theta += tau * source.theta
    return target
