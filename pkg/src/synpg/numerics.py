"""Dense float64 tensors with taped reverse-mode gradients, an Adam optimizer,
and a finite-difference gradient checker.

Everything runs on the CPU in double precision. Each operation records its
parent nodes and a backward closure that maps the upstream gradient to one
gradient per parent; `backward` walks the tape in reverse topological order.
Stochastic code never touches a global RNG: callers construct an `Rng` and
pass it down.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Rng",
    "Tensor",
    "backward",
    "zero_grads",
    "relu",
    "concat_rows",
    "slice_cols",
    "add_bias",
    "softmax_rows",
    "log_softmax_rows",
    "layer_norm_rows",
    "embedding",
    "cross_entropy",
    "AdamState",
    "adam_step",
    "finite_diff_check",
]

_U64 = (1 << 64) - 1


class Rng:
    """Deterministic xorshift64* pseudo-random stream.

    A 64-bit shift-register generator (the xorshift64* variant). Small,
    portable, and bit-reproducible across platforms, which is all the
    training and sampling code needs.
    """

    def __init__(self, seed: int):
        # splitmix64 scramble so small consecutive seeds give unrelated streams
        z = (int(seed) + 0x9E3779B97F4A7C15) & _U64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
        self._state = (z ^ (z >> 31)) or 0x9E3779B97F4A7C15
        self._spare_normal = None

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _U64
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & _U64

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random mantissa bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def normal(self) -> float:
        """Standard normal via Box-Muller; consumes uniforms in pairs."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias."""
        if n <= 0:
            raise ValueError("randint needs n >= 1")
        limit = _U64 - (_U64 + 1) % n
        while True:
            x = self.next_u64()
            if x <= limit:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items):
        return items[self.randint(len(items))]

    def choice_weighted(self, items, probs):
        """Pick items[i] with probability probs[i]; probs must sum to ~1."""
        u = self.uniform()
        acc = 0.0
        for item, p in zip(items, probs):
            acc += p
            if u < acc:
                return item
        return items[-1]  # guard against accumulated rounding

    def fork(self, tag: int) -> "Rng":
        """Independent child stream; deterministic in (parent state, tag)."""
        return Rng(self.next_u64() ^ ((tag * 0x9E3779B97F4A7C15) & _U64))

    def uniform_array(self, shape, low: float, high: float) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        vals = [self.uniform_range(low, high) for _ in range(n)]
        return np.array(vals, dtype=np.float64).reshape(shape)


class Tensor:
    """A float64 array node on the computation tape.

    Leaf tensors reject non-finite values; internal nodes are created by the
    ops below and carry a backward closure. `grad` accumulates across
    repeated `backward` calls until `zero_grads` resets it.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite values rejected at tensor creation")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other: "Tensor") -> "Tensor":
        if self.data.shape != other.data.shape:
            raise ValueError(f"add shape mismatch {self.data.shape} vs {other.data.shape}")
        out = _node(self.data + other.data, (self, other))
        out._backward = lambda g: (g, g)
        return out

    def __sub__(self, other: "Tensor") -> "Tensor":
        if self.data.shape != other.data.shape:
            raise ValueError(f"sub shape mismatch {self.data.shape} vs {other.data.shape}")
        out = _node(self.data - other.data, (self, other))
        out._backward = lambda g: (g, -g)
        return out

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            c = float(other)
            out = _node(self.data * c, (self,))
            out._backward = lambda g: (g * c,)
            return out
        if self.data.shape != other.data.shape:
            raise ValueError(f"mul shape mismatch {self.data.shape} vs {other.data.shape}")
        a, b = self.data, other.data
        out = _node(a * b, (self, other))
        out._backward = lambda g: (g * b, g * a)
        return out

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __matmul__(self, other: "Tensor") -> "Tensor":
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch {a.shape} vs {b.shape}")
        out = _node(a @ b, (self, other))
        out._backward = lambda g: (g @ b.T, a.T @ g)
        return out

    @property
    def T(self) -> "Tensor":
        out = _node(self.data.T, (self,))
        out._backward = lambda g: (g.T,)
        return out

    def reshape(self, *shape) -> "Tensor":
        old = self.data.shape
        out = _node(self.data.reshape(*shape), (self,))
        out._backward = lambda g: (g.reshape(old),)
        return out

    def sum(self) -> "Tensor":
        shape = self.data.shape
        out = _node(np.asarray(self.data.sum()), (self,))
        out._backward = lambda g: (np.broadcast_to(g, shape),)
        return out

    def mean(self) -> "Tensor":
        shape = self.data.shape
        n = self.data.size
        out = _node(np.asarray(self.data.mean()), (self,))
        out._backward = lambda g: (np.broadcast_to(g / n, shape),)
        return out

    def item(self) -> float:
        return float(self.data)


def _node(data: np.ndarray, parents) -> Tensor:
    """Internal node constructor: no finiteness check on intermediate values."""
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.requires_grad = any(p.requires_grad for p in parents)
    t._parents = tuple(parents)
    t._backward = None
    return t


def backward(loss: Tensor) -> None:
    """Populate grad = d(loss)/d(tensor) for every requires_grad tensor
    reachable from `loss`. Repeated calls accumulate into existing grads.
    """
    if loss.data.shape != ():
        raise ValueError("backward requires a scalar loss")
    if not loss.requires_grad:
        return

    # iterative DFS topological sort; cycles are impossible by construction
    # (every op creates a fresh node) but the 3-state walk would detect one
    order = []
    state = {}  # id -> 1 visiting, 2 done
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        nid = id(node)
        if processed:
            state[nid] = 2
            order.append(node)
            continue
        s = state.get(nid)
        if s == 2:
            continue
        if s == 1:
            raise RuntimeError("cycle detected in computation record")
        state[nid] = 1
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and state.get(id(p)) != 2:
                stack.append((p, False))

    grads = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = np.array(pg, dtype=np.float64, copy=True)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# -- ops beyond operators ------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    out = _node(np.maximum(x.data, 0.0), (x,))
    mask = x.data > 0.0
    out._backward = lambda g: (g * mask,)
    return out


def concat_rows(parts) -> Tensor:
    """Stack 2-D tensors along axis 0."""
    parts = list(parts)
    if not parts:
        raise ValueError("concat_rows needs at least one tensor")
    out = _node(np.concatenate([p.data for p in parts], axis=0), parts)
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])
    out._backward = lambda g: tuple(g[a:b] for a, b in zip(offsets[:-1], offsets[1:]))
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    out = _node(x.data[:, start:stop], (x,))
    shape = x.data.shape

    def back(g):
        full = np.zeros(shape, dtype=np.float64)
        full[:, start:stop] = g
        return (full,)

    out._backward = back
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-cols vector to every row of a 2-D tensor."""
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise ValueError(f"add_bias shape mismatch {x.data.shape} vs {b.data.shape}")
    out = _node(x.data + b.data, (x, b))
    out._backward = lambda g: (g, g.sum(axis=0))
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by row-max subtraction."""
    if x.data.ndim != 2 or x.data.shape[1] < 1 or x.data.shape[0] < 1:
        raise ValueError(f"softmax_rows needs a non-empty 2-D tensor, got {x.data.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    out = _node(s, (x,))

    def back(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - dot),)

    out._backward = back
    return out


def log_softmax_rows(x: Tensor) -> Tensor:
    if x.data.ndim != 2 or x.data.shape[1] < 1 or x.data.shape[0] < 1:
        raise ValueError(f"log_softmax_rows needs a non-empty 2-D tensor, got {x.data.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    out = _node(logp, (x,))
    p = np.exp(logp)
    out._backward = lambda g: (g - p * g.sum(axis=1, keepdims=True),)
    return out


def layer_norm_rows(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row layer normalization with learned gain and bias."""
    d = x.data.shape[1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ValueError("layer_norm gain/bias must match row width")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _node(xhat * gain.data + bias.data, (x, gain, bias))

    def back(g):
        gx = g * gain.data
        term = gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(axis=1, keepdims=True)
        return (term * inv, (g * xhat).sum(axis=0), g.sum(axis=0))

    out._backward = back
    return out


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of `table` by integer id."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError("embedding ids must be a 1-D sequence")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError("embedding id out of range")
    out = _node(table.data[ids], (table,))
    shape = table.data.shape

    def back(g):
        full = np.zeros(shape, dtype=np.float64)
        np.add.at(full, ids, g)
        return (full,)

    out._backward = back
    return out


def cross_entropy(logits: Tensor, targets, ignore_index: int = -1) -> Tensor:
    """Mean negative log-probability of `targets` under row-wise softmax.

    Rows whose target equals `ignore_index` are excluded from the mean.
    """
    targets = list(targets)
    steps, vocab = logits.data.shape
    if len(targets) != steps:
        raise ValueError(f"{len(targets)} targets for {steps} logit rows")
    keep = [i for i, t in enumerate(targets) if t != ignore_index]
    if not keep:
        raise ValueError("cross_entropy: all positions ignored")
    for i in keep:
        if not (0 <= targets[i] < vocab):
            raise IndexError(f"target {targets[i]} out of range at step {i}")

    logp = log_softmax_rows(logits)
    rows = np.array(keep, dtype=np.int64)
    cols = np.array([targets[i] for i in keep], dtype=np.int64)
    k = len(keep)
    out = _node(np.asarray(-logp.data[rows, cols].mean()), (logp,))

    def back(g):
        full = np.zeros(logp.data.shape, dtype=np.float64)
        full[rows, cols] = -float(g) / k
        return (full,)

    out._backward = back
    return out


# -- optimizer ------------------------------------------------------------------


class AdamState:
    """Adam slots for a fixed parameter list.

    Weight decay is applied as a decoupled additive shrinkage
    lr * wd * param, not folded into the gradient.
    """

    def __init__(self, params, learning_rate: float = 1e-4, weight_decay: float = 1e-5,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        self.step_count = 0
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.first_moment = [np.zeros_like(p.data) for p in params]
        self.second_moment = [np.zeros_like(p.data) for p in params]


def adam_step(params, grads, state: AdamState) -> None:
    """One bias-corrected Adam update over a parameter list (in place)."""
    if len(params) != len(state.first_moment):
        raise ValueError("parameter list does not match optimizer state")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    lr, eps, wd = state.learning_rate, state.epsilon, state.weight_decay
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ValueError(f"grad shape {g.shape} does not match param {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if wd:
            update = update + lr * wd * p.data
        p.data = p.data - update


# -- verification ----------------------------------------------------------------


def finite_diff_check(f, params, h: float = 1e-5, max_coords: int = 8) -> float:
    """Max relative error between taped gradients and central differences.

    `f() -> scalar Tensor` must be deterministic and re-evaluable (an
    unnoticed source of randomness makes the result unreliable). For each
    parameter the `max_coords` coordinates with the largest analytic
    gradients are probed: those are where a comparison is informative, and a
    backward bug that invents gradients lands there too. Coordinates whose
    analytic gradient is exactly zero are skipped, since central differences
    there measure only floating-point noise. Error is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    saved = [p.grad for p in params]
    zero_grads(params)
    loss = f()
    backward(loss)
    analytic = [None if p.grad is None else p.grad.copy() for p in params]
    for p, g in zip(params, saved):
        p.grad = g

    worst = 0.0
    for p, ga in zip(params, analytic):
        if ga is None:
            continue
        flat = p.data.reshape(-1)
        flat_a = ga.reshape(-1)
        order = np.argsort(-np.abs(flat_a), kind="stable")[:max_coords]
        for idx in order:
            a = float(flat_a[idx])
            if a == 0.0:
                break  # sorted by magnitude: the rest are zeros too
            orig = flat[idx]
            flat[idx] = orig + h
            up = float(f().data)
            flat[idx] = orig - h
            down = float(f().data)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
