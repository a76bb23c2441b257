"""Dense 2-D tensors, a reverse-mode tape sized for the SDF MLP, and Adam.

The network topology is fixed (a small fully connected net evaluated on
point batches), so the tape supports exactly the primitive ops that the
conditioned MLP and its losses need. Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions do not match the operation's contract."""


class TapeStateError(RuntimeError):
    """Backward invoked on a tape with no recorded forward pass."""


class Tensor2:
    """A rows x cols float64 array, row-major, validated finite.

    Thin parameter container: the tape works on raw ndarrays internally,
    ``Tensor2`` is the checkpointable boundary type for weights, biases
    and latent rows.
    """

    __slots__ = ("a",)

    def __init__(self, array):
        a = np.ascontiguousarray(array, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError(f"Tensor2 requires a 2-D array, got ndim={a.ndim}")
        if not np.all(np.isfinite(a)):
            raise ValueError("Tensor2 values must be finite")
        self.a = a

    @property
    def rows(self) -> int:
        return self.a.shape[0]

    @property
    def cols(self) -> int:
        return self.a.shape[1]

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self.a.reshape(-1)

    @staticmethod
    def zeros(rows: int, cols: int) -> "Tensor2":
        return Tensor2(np.zeros((rows, cols)))

    def copy(self) -> "Tensor2":
        return Tensor2(self.a.copy())

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.a)):
            raise FloatingPointError("non-finite values in Tensor2")

    def __repr__(self) -> str:
        return f"Tensor2({self.rows}x{self.cols})"


@dataclass
class Node:
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    # maps the output gradient to one gradient per parent
    vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None


@dataclass(frozen=True)
class Var:
    """Handle to a tape node."""

    tape: "Tape"
    idx: int

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.idx].value

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape


class Tape:
    """Records primitive ops in topological order; rebuilt per minibatch."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _push(self, node: Node) -> Var:
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value) -> Var:
        a = value.a if isinstance(value, Tensor2) else np.asarray(value, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError("tape leaves must be 2-D")
        return self._push(Node("leaf", (), a))

    def matmul(self, x: Var, y: Var) -> Var:
        a, b = x.value, y.value
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
        out = a @ b

        def vjp(g):
            return g @ b.T, a.T @ g

        return self._push(Node("matmul", (x.idx, y.idx), out, vjp))

    def add(self, x: Var, y: Var) -> Var:
        a, b = x.value, y.value
        if a.shape != b.shape:
            raise ShapeError(f"add: {a.shape} vs {b.shape}")
        return self._push(Node("add", (x.idx, y.idx), a + b, lambda g: (g, g)))

    def add_row(self, x: Var, row: Var) -> Var:
        """Broadcast-add a 1 x n bias row to an m x n matrix."""
        a, b = x.value, row.value
        if b.shape != (1, a.shape[1]):
            raise ShapeError(f"add_row: {a.shape} + {b.shape}")
        return self._push(
            Node("add_row", (x.idx, row.idx), a + b,
                 lambda g: (g, g.sum(axis=0, keepdims=True)))
        )

    def sub(self, x: Var, y: Var) -> Var:
        a, b = x.value, y.value
        if a.shape != b.shape:
            raise ShapeError(f"sub: {a.shape} vs {b.shape}")
        return self._push(Node("sub", (x.idx, y.idx), a - b, lambda g: (g, -g)))

    def relu(self, x: Var) -> Var:
        a = x.value
        out = np.maximum(a, 0.0)
        # subgradient at exactly 0 is taken as 0; out > 0 iff a > 0
        return self._push(Node("relu", (x.idx,), out,
                               lambda g: (g * (out > 0.0),)))

    def affine(self, x: Var, w: Var, b: Var, relu: bool = False) -> Var:
        """Fused x @ w + b with optional ReLU; the training hot path."""
        a, wm, bias = x.value, w.value, b.value
        if a.shape[1] != wm.shape[0]:
            raise ShapeError(f"affine: {a.shape} @ {wm.shape}")
        if bias.shape != (1, wm.shape[1]):
            raise ShapeError(f"affine bias {bias.shape} for weight {wm.shape}")
        out = a @ wm
        out += bias
        if relu:
            np.maximum(out, 0.0, out=out)

            def vjp(g):
                g = g * (out > 0.0)
                return g @ wm.T, a.T @ g, g.sum(axis=0, keepdims=True)
        else:
            def vjp(g):
                return g @ wm.T, a.T @ g, g.sum(axis=0, keepdims=True)

        return self._push(Node("affine", (x.idx, w.idx, b.idx), out, vjp))

    def square(self, x: Var) -> Var:
        a = x.value
        return self._push(Node("square", (x.idx,), a * a, lambda g: (2.0 * a * g,)))

    def sum_all(self, x: Var) -> Var:
        a = x.value
        out = np.array([[a.sum()]])

        def vjp(g):
            return (np.full_like(a, g[0, 0]),)

        return self._push(Node("sum_all", (x.idx,), out, vjp))

    def scale(self, x: Var, c: float) -> Var:
        a = x.value
        return self._push(Node("scale", (x.idx,), a * c, lambda g: (g * c,)))

    def broadcast_rows(self, row: Var, m: int) -> Var:
        """Tile a 1 x n row to an m x n matrix; backward sums over rows."""
        b = row.value
        if b.shape[0] != 1:
            raise ShapeError(f"broadcast_rows wants a single row, got {b.shape}")
        out = np.broadcast_to(b, (m, b.shape[1])).copy()
        return self._push(Node("broadcast_rows", (row.idx,), out,
                               lambda g: (g.sum(axis=0, keepdims=True),)))

    def concat_cols(self, x: Var, y: Var) -> Var:
        a, b = x.value, y.value
        if a.shape[0] != b.shape[0]:
            raise ShapeError(f"concat_cols: {a.shape} vs {b.shape}")
        na = a.shape[1]
        return self._push(
            Node("concat_cols", (x.idx, y.idx), np.concatenate([a, b], axis=1),
                 lambda g: (g[:, :na], g[:, na:]))
        )

    def slice_cols(self, x: Var, j0: int, j1: int) -> Var:
        a = x.value
        if not (0 <= j0 <= j1 <= a.shape[1]):
            raise ShapeError(f"slice_cols [{j0}:{j1}] on width {a.shape[1]}")

        def vjp(g):
            full = np.zeros_like(a)
            full[:, j0:j1] = g
            return (full,)

        return self._push(Node("slice_cols", (x.idx,), a[:, j0:j1].copy(), vjp))


def backward(tape: Tape, seed: np.ndarray | None = None, root: Var | None = None) -> list[np.ndarray | None]:
    """Reverse sweep over the tape; returns one gradient slot per node.

    ``root`` defaults to the last recorded node; ``seed`` defaults to ones
    with the root's shape. Each node is visited exactly once, in reverse
    topological order (insertion order is topological by construction).
    """
    if not tape.nodes:
        raise TapeStateError("backward before any forward pass was recorded")
    if root is None:
        root = Var(tape, len(tape.nodes) - 1)
    out_val = tape.nodes[root.idx].value
    if seed is None:
        seed = np.ones_like(out_val)
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != out_val.shape:
        raise ShapeError(f"seed shape {seed.shape} vs output {out_val.shape}")

    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[root.idx] = seed
    for i in range(root.idx, -1, -1):
        g = grads[i]
        if g is None:
            continue
        node = tape.nodes[i]
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if grads[parent] is None:
                grads[parent] = pg
            else:
                grads[parent] = grads[parent] + pg
    return grads


def grad_of(grads: Sequence[np.ndarray | None], var: Var) -> np.ndarray:
    g = grads[var.idx]
    if g is None:
        return np.zeros_like(var.value)
    return g


@dataclass
class MLPLayer:
    """One affine layer: weight (in x out) and bias (1 x out)."""

    weight: Tensor2
    bias: Tensor2

    def __post_init__(self):
        if self.bias.a.shape != (1, self.weight.cols):
            raise ShapeError(
                f"bias {self.bias.a.shape} does not match weight {self.weight.a.shape}"
            )


def forward_mlp(layers: Sequence[MLPLayer], x: Var, tape: Tape) -> Var:
    """ReLU MLP forward on the tape: ReLU on hidden layers, linear output."""
    h = x
    for li, layer in enumerate(layers):
        if h.value.shape[1] != layer.weight.rows:
            raise ShapeError(
                f"layer {li}: input width {h.value.shape[1]} vs weight rows {layer.weight.rows}"
            )
        w = tape.leaf(layer.weight)
        b = tape.leaf(layer.bias)
        h = tape.affine(h, w, b, relu=li < len(layers) - 1)
    return h


def forward_mlp_inference(layers: Sequence[MLPLayer], x: np.ndarray) -> np.ndarray:
    """Tape-free forward pass, arithmetic-identical to the taped one."""
    h = np.asarray(x, dtype=np.float64)
    for li, layer in enumerate(layers):
        if h.shape[1] != layer.weight.rows:
            raise ShapeError(
                f"layer {li}: input width {h.shape[1]} vs weight rows {layer.weight.rows}"
            )
        h = h @ layer.weight.a
        h += layer.bias.a
        if li < len(layers) - 1:
            np.maximum(h, 0.0, out=h)
    return h


class AdamState:
    """Bias-corrected Adam over a fixed list of parameters, updated in place."""

    def __init__(self, params: Sequence[Tensor2], learning_rate: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.a) for p in self.params]
        self.second_moment = [np.zeros_like(p.a) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ShapeError(f"{len(grads)} grads for {len(self.params)} params")
        for g, p in zip(grads, self.params):
            if g.shape != p.a.shape:
                raise ShapeError(f"grad {g.shape} for param {p.a.shape}")
        self.step_count += 1
        b1t = 1.0 - self.beta1 ** self.step_count
        b2t = 1.0 - self.beta2 ** self.step_count
        for m, v, g, p in zip(self.first_moment, self.second_moment, grads, self.params):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.a -= self.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + self.epsilon)


def adam_step(state: AdamState, grads: Sequence[np.ndarray]) -> None:
    """Functional alias for :meth:`AdamState.step`."""
    state.step(grads)
