"""Dense network core: init, forward, exact backward, Adam, soft target blending.

Everything is plain numpy in float64. Nets are value objects; every operation
returns fresh arrays and never writes into its inputs. The backward pass
returns gradients for the parameters and for the network input, so callers can
chain nets (shared trunk feeding separate heads) or ascend on the input itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ContractError",
    "NumericError",
    "DenseNet",
    "NetGrads",
    "AdamState",
    "net_init",
    "net_forward",
    "net_apply",
    "net_backward",
    "adam_init",
    "adam_step",
    "soft_update",
    "clip_arrays",
    "concat_flat",
    "save_nets",
    "load_nets",
]

ACTIVATIONS = ("linear", "relu", "tanh")

SNAPSHOT_VERSION = 1


class ContractError(ValueError):
    """Structural precondition violated (shapes, topology, unknown names)."""


class NumericError(FloatingPointError):
    """Non-finite values where finite ones are required."""


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    raise ContractError(f"unknown activation {name!r}")


def _activate_grad(name: str, z: np.ndarray) -> np.ndarray:
    # derivative w.r.t. the pre-activation z; relu uses 0 at the kink
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    raise ContractError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class DenseNet:
    """A feedforward stack of dense layers.

    weights[i] has shape (fan_in, fan_out); biases[i] has shape (fan_out,).
    activations[i] names the nonlinearity applied after layer i.
    """

    weights: tuple
    biases: tuple
    activations: tuple

    @property
    def topology(self) -> tuple:
        dims = [self.weights[0].shape[0]]
        dims.extend(w.shape[1] for w in self.weights)
        return tuple(dims)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list:
        """All parameter arrays, weights and biases interleaved per layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def with_arrays(self, arrays) -> "DenseNet":
        """Rebuild the net from a flat array list as produced by arrays()."""
        n = len(self.weights)
        if len(arrays) != 2 * n:
            raise ContractError(f"expected {2 * n} arrays, got {len(arrays)}")
        ws, bs = [], []
        for i in range(n):
            w, b = arrays[2 * i], arrays[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ContractError("array shapes do not match the net topology")
            ws.append(w)
            bs.append(b)
        return DenseNet(tuple(ws), tuple(bs), self.activations)

    def validate(self) -> None:
        if not self.weights:
            raise ContractError("net has no layers")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ContractError(f"layer {i}: unknown activation {act!r}")
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ContractError(f"layer {i}: weight/bias shapes disagree")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ContractError(f"layer {i}: fan-in does not match previous fan-out")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"layer {i}: non-finite parameters")


@dataclass(frozen=True)
class NetGrads:
    """Parameter gradients parallel to DenseNet.arrays() ordering."""

    weights: tuple
    biases: tuple

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def net_init(topology, activations=None, rng=None) -> DenseNet:
    """Build a net with U[-1/sqrt(fan_in), 1/sqrt(fan_in)] weights and zero biases.

    topology lists layer widths, e.g. (3, 200, 200, 1). activations defaults to
    relu on hidden layers and linear on the output layer.
    """
    dims = tuple(int(d) for d in topology)
    if len(dims) < 2:
        raise ContractError("topology needs at least an input and an output width")
    if any(d <= 0 for d in dims):
        raise ContractError(f"topology widths must be positive, got {dims}")
    n_layers = len(dims) - 1
    if activations is None:
        activations = ("relu",) * (n_layers - 1) + ("linear",)
    activations = tuple(activations)
    if len(activations) != n_layers:
        raise ContractError("one activation per layer required")
    if rng is None:
        rng = np.random.default_rng()
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    net = DenseNet(tuple(ws), tuple(bs), activations)
    net.validate()
    return net


def _as_batch(x) -> tuple:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ContractError(f"input must be 1-D or 2-D, got shape {x.shape}")


def net_forward(net: DenseNet, x):
    """Forward pass. Returns (output, trace) where trace feeds net_backward.

    x may be a single vector (n,) or a batch (B, n); the output matches.
    """
    xb, squeeze = _as_batch(x)
    if xb.shape[1] != net.in_dim:
        raise ContractError(f"input width {xb.shape[1]} != net fan-in {net.in_dim}")
    inputs = []
    preacts = []
    h = xb
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w + b
        preacts.append(z)
        h = _activate(act, z)
    trace = (inputs, preacts, squeeze)
    return (h[0] if squeeze else h), trace


def net_apply(net: DenseNet, x) -> np.ndarray:
    """Forward pass without keeping a trace."""
    y, _ = net_forward(net, x)
    return y


def net_backward(net: DenseNet, trace, gout):
    """Exact reverse-mode gradients of <gout, output> for a recorded forward.

    For batched traces the parameter gradients sum over rows (scale gout by
    1/B beforehand for a batch mean); the returned input gradient keeps the
    per-row shape of the original input.
    """
    inputs, preacts, squeeze = trace
    g = np.asarray(gout, dtype=np.float64)
    if squeeze:
        if g.shape != (net.out_dim,):
            raise ContractError("gout shape does not match the traced output")
        g = g[None, :]
    elif g.shape != (inputs[0].shape[0], net.out_dim):
        raise ContractError("gout shape does not match the traced output")
    w_grads = [None] * len(net.weights)
    b_grads = [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        gz = g * _activate_grad(net.activations[i], preacts[i])
        w_grads[i] = inputs[i].T @ gz
        b_grads[i] = gz.sum(axis=0)
        g = gz @ net.weights[i].T
    gin = g[0] if squeeze else g
    return NetGrads(tuple(w_grads), tuple(b_grads)), gin


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators for a fixed list of parameter arrays."""

    m: tuple
    v: tuple
    t: int = 0

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(arrays, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    m = tuple(np.zeros_like(a) for a in arrays)
    v = tuple(np.zeros_like(a) for a in arrays)
    return AdamState(m=m, v=v, t=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(arrays, grads, state: AdamState, lr: float):
    """One descent step. Returns (new_arrays, new_state).

    Callers minimizing pass the loss gradient; callers ascending negate first.
    Rejects non-finite gradients so a single bad batch cannot poison the moments.
    """
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ContractError("arrays/grads/state lengths disagree")
    for g in grads:
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient entries")
    t = state.t + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_arrays, new_m, new_v = [], [], []
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_arrays.append(a - step)
        new_m.append(m)
        new_v.append(v)
    return new_arrays, AdamState(tuple(new_m), tuple(new_v), t, b1, b2, eps)


def soft_update(target: DenseNet, online: DenseNet, tau: float) -> DenseNet:
    """Blend target toward online: new = (1 - tau) * target + tau * online."""
    if not 0.0 <= tau <= 1.0:
        raise ContractError(f"tau must lie in [0, 1], got {tau}")
    if target.topology != online.topology:
        raise ContractError("target/online topologies differ")
    arrays = [
        (1.0 - tau) * t + tau * o
        for t, o in zip(target.arrays(), online.arrays())
    ]
    return target.with_arrays(arrays)


def clip_arrays(arrays, bound: float) -> list:
    """Elementwise clamp of every array to [-bound, bound]."""
    if bound <= 0.0:
        raise ContractError(f"clip bound must be positive, got {bound}")
    return [np.clip(a, -bound, bound) for a in arrays]


def concat_flat(arrays) -> np.ndarray:
    """Flatten a list of arrays into one vector (for norms and cosines)."""
    return np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)


def save_nets(path, nets: dict, meta: dict | None = None) -> None:
    """Write named nets plus JSON metadata to an .npz snapshot (exact round-trip)."""
    payload = {}
    index = {"version": SNAPSHOT_VERSION, "nets": {}, "meta": meta or {}}
    for name, net in nets.items():
        if "/" in name:
            raise ContractError("net names must not contain '/'")
        net.validate()
        index["nets"][name] = {"layers": len(net.weights), "activations": list(net.activations)}
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            payload[f"{name}/w{i}"] = w
            payload[f"{name}/b{i}"] = b
    payload["__index__"] = np.frombuffer(json.dumps(index).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_nets(path):
    """Read a snapshot written by save_nets. Returns (nets, meta)."""
    with np.load(path) as data:
        raw = bytes(data["__index__"].tobytes())
        index = json.loads(raw.decode("utf-8"))
        if index.get("version") != SNAPSHOT_VERSION:
            raise ContractError(f"unsupported snapshot version {index.get('version')!r}")
        nets = {}
        for name, entry in index["nets"].items():
            ws, bs = [], []
            for i in range(entry["layers"]):
                ws.append(np.asarray(data[f"{name}/w{i}"], dtype=np.float64))
                bs.append(np.asarray(data[f"{name}/b{i}"], dtype=np.float64))
            net = DenseNet(tuple(ws), tuple(bs), tuple(entry["activations"]))
            net.validate()
            nets[name] = net
    return nets, index["meta"]
