"""Differentiable maps between Euclidean spaces.

A map takes a 1-d array of inputs (floats, or duals from an enclosing
derivative pass) and returns an array of a fixed ``shape``.  Maps built from
parsed expressions (:class:`ExprMap`) and maps built from Python callables
(:class:`FuncMap`) are interchangeable; derivatives are always exact
forward-mode derivatives.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from . import dual as D
from .expr import Expr, parse

__all__ = [
    "Map",
    "ExprMap",
    "FuncMap",
    "ConstMap",
    "as_array",
    "jacobian",
    "jvp",
    "directional",
    "state_symbols",
]


def state_symbols(n: int, prefix: str = "x") -> tuple[str, ...]:
    return tuple(f"{prefix}{i + 1}" for i in range(n))


def as_array(values) -> np.ndarray:
    """Pack map output as a float array, or an object array when duals are present."""
    arr = np.empty(len(values), dtype=object)
    arr[:] = list(values)
    if any(isinstance(v, D.Dual) for v in arr):
        return arr
    return arr.astype(float)


def _eps(out, tag):
    if isinstance(out, D.Dual) and out.tag == tag:
        return out.eps
    return 0.0


def _val(out, tag):
    if isinstance(out, D.Dual) and out.tag == tag:
        return out.val
    return out


def jvp(fn: Callable, x, v) -> tuple[np.ndarray, np.ndarray]:
    """Value ``fn(x)`` and directional derivative ``J(x) v`` in one dual pass."""
    tag = D.new_tag()
    seeded = [D.Dual(xi, vi, tag) for xi, vi in zip(x, v)]
    out = np.asarray(fn(as_array(seeded)), dtype=object)
    vals = as_array([_val(o, tag) for o in out.ravel()]).reshape(out.shape)
    ders = as_array([_eps(o, tag) for o in out.ravel()]).reshape(out.shape)
    return vals, ders


def directional(fn: Callable, x, v):
    return jvp(fn, x, v)[1]


def jacobian(fn: Callable, x) -> np.ndarray:
    """Exact Jacobian of ``fn`` at ``x``; row ``i`` is the gradient of output ``i``.

    For matrix-valued ``fn`` the result has shape ``fn(x).shape + (n,)``.
    """
    x = list(x)
    n = len(x)
    cols = []
    for j in range(n):
        e = [0.0] * n
        e[j] = 1.0
        cols.append(directional(fn, x, e))
    return np.stack(cols, axis=-1)


class Map:
    """Base class; subclasses implement :meth:`__call__`."""

    in_dim: int
    shape: tuple[int, ...]

    def __call__(self, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    @property
    def out_dim(self) -> int:
        return int(np.prod(self.shape))

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.in_dim,):
            raise ValueError(f"expected input of length {self.in_dim}, got shape {x.shape}")
        return np.asarray(self(x), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.in_dim,):
            raise ValueError(f"expected input of length {self.in_dim}, got shape {x.shape}")
        return jacobian(self, x)

    def jvp(self, x, v):
        return jvp(self, x, v)

    def describe(self):
        return repr(self)


class ExprMap(Map):
    """Array of expressions over ``symbols`` with parameters bound to values."""

    def __init__(
        self,
        exprs: Sequence,
        symbols: Sequence[str],
        params: Mapping[str, float] | None = None,
        shape: tuple[int, ...] | None = None,
    ):
        params = dict(params or {})
        self.symbols = tuple(symbols)
        self.params = params
        declared = self.symbols + tuple(params)
        flat = list(np.asarray(exprs, dtype=object).ravel()) if not isinstance(exprs, Expr) else [exprs]
        parsed = []
        for e in flat:
            if isinstance(e, Expr):
                if not e.free_symbols <= set(declared):
                    bad = sorted(e.free_symbols - set(declared))
                    raise ValueError(f"expression {e} uses undeclared symbols {bad}")
                e = Expr(e.node, declared, e.source)
            else:
                e = parse(str(e), declared)
            parsed.append(e)
        self.exprs = tuple(parsed)
        self.in_dim = len(self.symbols)
        self.shape = tuple(shape) if shape is not None else np.asarray(exprs, dtype=object).shape
        if int(np.prod(self.shape)) != len(self.exprs):
            raise ValueError("shape does not match number of expressions")
        self._pvals = tuple(float(params[k]) for k in params)

    def __call__(self, x) -> np.ndarray:
        args = tuple(x) + self._pvals
        return as_array([e(*args) for e in self.exprs]).reshape(self.shape)

    def describe(self):
        out = np.empty(len(self.exprs), dtype=object)
        out[:] = [e.source for e in self.exprs]
        return out.reshape(self.shape).tolist()

    def __repr__(self) -> str:
        return f"ExprMap({self.describe()!r})"


class FuncMap(Map):
    """Map backed by a Python callable that is safe on dual inputs."""

    def __init__(self, fn: Callable, in_dim: int, shape: Sequence[int] | int, label: str = ""):
        self.fn = fn
        self.in_dim = in_dim
        self.shape = (shape,) if isinstance(shape, int) else tuple(shape)
        self.label = label or getattr(fn, "__name__", "func")

    def __call__(self, x) -> np.ndarray:
        out = self.fn(x)
        return np.asarray(out if isinstance(out, np.ndarray) else as_array(list(np.ravel(out)))).reshape(self.shape)

    def describe(self):
        return self.label

    def __repr__(self) -> str:
        return f"FuncMap({self.label})"


class ConstMap(Map):
    def __init__(self, value, in_dim: int):
        self.const = np.asarray(value, dtype=float)
        self.in_dim = in_dim
        self.shape = self.const.shape

    def __call__(self, x) -> np.ndarray:
        return self.const.copy()

    def describe(self):
        return self.const.tolist()
