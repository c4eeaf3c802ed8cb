"""
Минимальный движок обратного автодифференцирования на numpy.

Узел графа хранит родителей и функцию _backward(g) -> градиенты родителей.
Градиенты накапливаются только в листьях с requires_grad=True
(параметры модели); промежуточные градиенты живут лишь внутри backward().
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from orcabehavior_hub.core.exceptions import InvalidArgumentError, ShapeMismatchError

_grad_enabled = True

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@contextmanager
def no_grad() -> Iterator[None]:
    """Вычисления без построения графа (оценка, инференс)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Свернуть градиент broadcast-операции обратно к форме операнда."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Tensor:
    """
    n-мерный массив с местом под градиент.

    Атрибуты:
      data: np.ndarray
      grad: np.ndarray | None  # есть только у листьев requires_grad после backward()
      requires_grad: bool
      name: str
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = "",
                 dtype=None) -> None:
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    # --- свойства ---
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgumentError(f"item() для формы {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} dtype={self.dtype}>"

    # --- построение графа ---
    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"],
              backward: BackwardFn) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    # --- арифметика ---
    def __add__(self, other) -> "Tensor":
        other = self._lift(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data + other.data, (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Tensor":
        return self._lift(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = self._lift(other)
        a, b = self.data, other.data
        return Tensor._make(
            a * b, (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._lift(other)
        a, b = self.data, other.data
        return Tensor._make(
            a / b, (self, other),
            lambda g: (
                _unbroadcast(g / b, a.shape),
                _unbroadcast(-g * a / (b * b), b.shape),
            ),
        )

    def __matmul__(self, other) -> "Tensor":
        other = self._lift(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeMismatchError((self.shape[-1], "*"), other.shape)
        a, b = self.data, other.data
        return Tensor._make(a @ b, (self, other), lambda g: (g @ b.T, a.T @ g))

    # --- редукции ---
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(
            np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), backward
        )

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # --- поэлементные ---
    def exp(self) -> "Tensor":
        e = np.exp(self.data)
        return Tensor._make(e, (self,), lambda g: (g * e,))

    def log(self) -> "Tensor":
        x = self.data
        return Tensor._make(np.log(x), (self,), lambda g: (g / x,))

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), lambda g: (g * mask,))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return Tensor._make(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(src),)
        )

    def log_softmax(self, axis: int = -1) -> "Tensor":
        """log(softmax) через log-sum-exp со сдвигом на максимум."""
        z = self.data - self.data.max(axis=axis, keepdims=True)
        out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
        soft = np.exp(out)
        return Tensor._make(
            out, (self,),
            lambda g: (g - soft * g.sum(axis=axis, keepdims=True),),
        )

    # --- обратный проход ---
    def backward(self) -> None:
        """Заполнить .grad у листьев-параметров: d(self)/d(param)."""
        if self.data.size != 1:
            raise InvalidArgumentError(
                f"backward() ожидает скаляр, получена форма {self.shape}"
            )
        if not self.requires_grad:
            raise InvalidArgumentError("значение не зависит ни от одного параметра")

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg


def _topological_order(root: Tensor) -> list[Tensor]:
    """Итеративный обход в глубину (глубокие сети не упираются в recursion limit)."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


# ---------- свёрточные операции ----------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """
    x: [N x C x H x W], weight: [O x C x kh x kw], bias: [O].
    Выход: [N x O x Ho x Wo], Ho = (H + 2p - kh) // stride + 1.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise InvalidArgumentError("conv2d ожидает 4-D вход и 4-D веса")
    n, c, h, w = x.shape
    o, wc, kh, kw = weight.shape
    if c != wc:
        raise ShapeMismatchError((n, wc, h, w), x.shape)
    s, p = int(stride), int(padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    hp, wp = xp.shape[2], xp.shape[3]
    if hp < kh or wp < kw:
        raise InvalidArgumentError(f"вход {h}x{w} меньше ядра {kh}x{kw}")
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    ho, wo = windows.shape[2], windows.shape[3]
    wdata = weight.data
    out = np.tensordot(windows, wdata, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g):
        d_w = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        d_cols = np.tensordot(g, wdata, axes=([1], [0]))  # [N, Ho, Wo, C, kh, kw]
        d_xp = np.zeros((n, c, hp, wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                d_xp[:, :, i:i + s * ho:s, j:j + s * wo:s] += (
                    d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        d_x = d_xp[:, :, p:p + h, p:p + w] if p else d_xp
        grads = [d_x, d_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward)


def avg_pool2d(x: Tensor, kernel: int) -> Tensor:
    """Неперекрывающееся среднее k x k; хвост, не кратный k, отбрасывается."""
    k = int(kernel)
    if k == 1:
        return x
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    if ho < 1 or wo < 1:
        raise InvalidArgumentError(f"вход {h}x{w} меньше окна пулинга {k}")
    cropped = x.data[:, :, :ho * k, :wo * k]
    out = cropped.reshape(n, c, ho, k, wo, k).mean(axis=(3, 5))

    def backward(g):
        d_x = np.zeros(x.shape, dtype=g.dtype)
        spread = np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)
        d_x[:, :, :ho * k, :wo * k] = spread
        return (d_x,)

    return Tensor._make(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """[N x C x H x W] -> [N x C]."""
    if x.ndim != 4:
        raise InvalidArgumentError("global_avg_pool ожидает 4-D вход")
    return x.mean(axis=(2, 3))
