"""Dense-tensor reverse-mode differentiation with an Adam optimizer.

Tensors hold float64 numpy arrays (scalar, 1-D or 2-D). Every op validates
shapes, checks the result for NaN/Inf, and registers a local gradient rule;
``backward`` replays those rules once in reverse topological order. This is
deliberately minimal: no broadcasting beyond what the named ops define, no
views, no higher-order derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN/Inf, or a non-finite gradient was applied."""


class Tensor:
    """Value plus gradient slot; ops link results to their inputs.

    The chain of parent links is the tape: executing an op appends a node
    whose ``_vjp`` maps the output gradient to input gradients.
    """

    __slots__ = ("data", "grad", "name", "_parents", "_vjp", "_backward_done")

    def __init__(self, data, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeError(f"tensors are scalar, 1-D or 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None
        self._backward_done = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # Operator sugar; the named functions below are the actual op set.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(other))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(float(other), self)

    def __rmul__(self, other):
        return scalar_mul(float(other), self)

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("op produced non-finite values")
    out = Tensor(data)
    out._parents = parents
    out._vjp = vjp
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Primitive ops


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def neg(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scalar_mul(c: float, a: Tensor) -> Tensor:
    c = float(c)
    return _result(c * a.data, (a,), lambda g: (c * g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: (n,m) @ (m,k) -> (n,k), or (n,m) @ (m,) -> (n,)."""
    if a.data.ndim != 2:
        raise ShapeError(f"matmul: left operand must be 2-D, got {a.shape}")
    if b.data.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
        return _result(a.data @ b.data, (a, b),
                       lambda g: (g @ b.data.T, a.data.T @ g))
    if b.data.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
        return _result(a.data @ b.data, (a, b),
                       lambda g: (np.outer(g, b.data), a.data.T @ g))
    raise ShapeError(f"matmul: right operand must be 1-D or 2-D, got {b.shape}")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got {a.shape}")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: {a.shape} vs {b.shape}")
    return _result(np.dot(a.data, b.data), (a, b),
                   lambda g: (g * b.data, g * a.data))


def row(a: Tensor, i: int) -> Tensor:
    """Select row i of a matrix; gradient scatters back into that row."""
    if a.data.ndim != 2:
        raise ShapeError(f"row needs a matrix, got {a.shape}")

    def vjp(g):
        out = np.zeros_like(a.data)
        out[i] = g
        return (out,)

    return _result(a.data[i].copy(), (a,), vjp)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors into a matrix, one per row."""
    rows = list(rows)
    if not rows:
        raise ShapeError("stack_rows needs at least one row")
    dim = rows[0].shape
    if any(r.data.ndim != 1 or r.shape != dim for r in rows):
        raise ShapeError("stack_rows needs 1-D tensors of equal length")
    return _result(np.stack([r.data for r in rows]), tuple(rows),
                   lambda g: tuple(g[i] for i in range(len(rows))))


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate scalars and 1-D tensors into one vector."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat needs at least one part")
    flats = [p.data.reshape(-1) for p in parts]
    sizes = [f.size for f in flats]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]].reshape(parts[i].shape)
                     for i in range(len(parts)))

    return _result(np.concatenate(flats), tuple(parts), vjp)


def concat_cols(mats: Sequence[Tensor]) -> Tensor:
    """Concatenate matrices with equal row counts along columns."""
    mats = list(mats)
    if not mats or any(m.data.ndim != 2 for m in mats):
        raise ShapeError("concat_cols needs 2-D tensors")
    n = mats[0].shape[0]
    if any(m.shape[0] != n for m in mats):
        raise ShapeError("concat_cols: row counts differ")
    widths = [m.shape[1] for m in mats]
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(mats)))

    return _result(np.hstack([m.data for m in mats]), tuple(mats), vjp)


def mean_rows(a: Tensor) -> Tensor:
    """Average a matrix over its rows, yielding a vector."""
    if a.data.ndim != 2:
        raise ShapeError(f"mean_rows needs a matrix, got {a.shape}")
    n = a.shape[0]
    return _result(a.data.mean(axis=0), (a,),
                   lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def sum_all(a: Tensor) -> Tensor:
    return _result(np.asarray(a.data.sum()), (a,),
                   lambda g: (np.full_like(a.data, g),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _result(out, (a,), lambda g: (g / a.data,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values into [lo, hi]; gradient passes only where unclamped."""
    mask = (a.data >= lo) & (a.data <= hi)
    return _result(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def _softmax_1d(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def softmax(a: Tensor) -> Tensor:
    """Softmax over a 1-D tensor, computed with max subtraction."""
    if a.data.ndim != 1:
        raise ShapeError(f"softmax needs a vector, got {a.shape}")
    s = _softmax_1d(a.data)
    return _result(s, (a,), lambda g: (s * (g - np.dot(g, s)),))


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax over a matrix."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs a matrix, got {a.shape}")
    e = np.exp(a.data - a.data.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)
    return _result(s, (a,),
                   lambda g: (s * (g - (g * s).sum(axis=1, keepdims=True)),))


# ---------------------------------------------------------------------------
# Reverse pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into leaf.grad for every leaf tensor
    (parameter or constant) reachable from loss.

    The loss must be scalar. Adjoints of intermediate nodes live only for
    the duration of the call, so several losses sharing a subgraph may each
    run backward and their leaf gradients sum correctly. Calling backward
    twice on the same loss tensor is an error.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward_done:
        raise RuntimeError("backward already ran for this loss; rebuild the graph first")
    loss._backward_done = True

    # Iterative DFS: graphs from long training loops exceed recursion limits.
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    adjoint: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(topo):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            acc = adjoint.get(id(parent))
            adjoint[id(parent)] = pg if acc is None else acc + pg


def zero_grad(params: Iterable[Tensor] | Mapping[str, Tensor]) -> None:
    values = params.values() if isinstance(params, Mapping) else params
    for p in values:
        p.grad = None


# ---------------------------------------------------------------------------
# Adam


class Adam:
    """Adam with bias correction over a fixed, ordered set of parameters."""

    def __init__(self, params: Mapping[str, Tensor] | Sequence[Tensor],
                 lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params.values()) if isinstance(params, Mapping) else list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        """Apply one update from the gradients currently stored on the params."""
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter {p.name or i}")
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1 ** t)
            v_hat = self.v[i] / (1 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        zero_grad(self.params)


# ---------------------------------------------------------------------------
# Finite-difference checking


@dataclass
class GradCheckReport:
    tol: float
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def __str__(self) -> str:
        lines = [f"grad check (tol {self.tol:g}): "
                 f"{'PASS' if self.passed else 'FAIL'} max {self.max_rel_error:.3e}"]
        for name, err in sorted(self.per_param.items()):
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def grad_check(fn: Callable[[], Tensor], params: Mapping[str, Tensor],
               h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare backward() gradients of fn() against central finite differences.

    fn must be deterministic and rebuild its graph on every call. Relative
    error per element is |a - f| / max(1, |a|, |f|), so parameters the loss
    never touches (both gradients zero) report 0.
    """
    zero_grad(params)
    loss = fn()
    backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    zero_grad(params)

    report = GradCheckReport(tol=tol)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        fd = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = fn().item()
            flat[j] = orig - h
            down = fn().item()
            flat[j] = orig
            fd[j] = (up - down) / (2 * h)
        a = analytic[name].reshape(-1)
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(fd)))
        report.per_param[name] = float(np.max(np.abs(a - fd) / denom)) if flat.size else 0.0
    return report
