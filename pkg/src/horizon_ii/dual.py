"""Tagged dual numbers for exact forward-mode derivatives.

A :class:`Dual` carries ``val + eps * ε`` with ``ε² = 0``.  Each differentiation
pass draws a fresh integer tag from :func:`new_tag`; when two duals with
different tags meet in an operation, the one with the older (smaller) tag is
treated as a constant coefficient.  This keeps nested passes (a derivative
taken inside another derivative) free of perturbation confusion, which is what
lets ``jacobian(lambda x: jacobian(f, x) @ v, x)`` work.

Components may themselves be duals (from an outer pass), plain floats, or
numpy arrays, so one evaluation routine serves scalar, nested and vectorised
use.  The elementary functions below raise :class:`DomainError` instead of
returning NaN.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

__all__ = [
    "Dual",
    "DomainError",
    "new_tag",
    "real_part",
    "sin",
    "cos",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "fabs",
    "ipow",
    "div",
]

_tags = itertools.count(1)


class DomainError(ArithmeticError):
    """Evaluation left the domain of an elementary operation."""


def new_tag() -> int:
    return next(_tags)


def _tag(x) -> int:
    return x.tag if isinstance(x, Dual) else 0


def _split(x, tag):
    if isinstance(x, Dual) and x.tag == tag:
        return x.val, x.eps
    return x, 0.0


def real_part(x):
    """Strip every dual layer and return the underlying float or array."""
    while isinstance(x, Dual):
        x = x.val
    return x


class Dual:
    __slots__ = ("val", "eps", "tag")

    def __init__(self, val, eps, tag: int):
        self.val = val
        self.eps = eps
        self.tag = tag

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.eps!r}, tag={self.tag})"

    def __add__(self, other):
        t = max(self.tag, _tag(other))
        a, da = _split(self, t)
        b, db = _split(other, t)
        return Dual(a + b, da + db, t)

    __radd__ = __add__

    def __sub__(self, other):
        t = max(self.tag, _tag(other))
        a, da = _split(self, t)
        b, db = _split(other, t)
        return Dual(a - b, da - db, t)

    def __rsub__(self, other):
        t = max(self.tag, _tag(other))
        a, da = _split(other, t)
        b, db = _split(self, t)
        return Dual(a - b, da - db, t)

    def __mul__(self, other):
        t = max(self.tag, _tag(other))
        a, da = _split(self, t)
        b, db = _split(other, t)
        return Dual(a * b, a * db + da * b, t)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return Dual(-self.val, -self.eps, self.tag)

    def __pos__(self):
        return self

    def __pow__(self, n):
        return ipow(self, n)


def _is_zero(v) -> bool:
    v = real_part(v)
    if isinstance(v, np.ndarray):
        return bool(np.any(v == 0.0))
    return v == 0.0


def _is_nonpositive(v) -> bool:
    v = real_part(v)
    if isinstance(v, np.ndarray):
        return bool(np.any(v <= 0.0))
    return v <= 0.0


def _is_negative(v) -> bool:
    v = real_part(v)
    if isinstance(v, np.ndarray):
        return bool(np.any(v < 0.0))
    return v < 0.0


def div(a, b):
    t = max(_tag(a), _tag(b))
    if t == 0:
        if _is_zero(b):
            raise DomainError("division by zero")
        return a / b
    av, da = _split(a, t)
    bv, db = _split(b, t)
    q = div(av, bv)
    return Dual(q, div(da - q * db, bv), t)


def ipow(x, n: int):
    """``x**n`` for an integer exponent ``n``."""
    if n == 0:
        return 1.0 if not isinstance(real_part(x), np.ndarray) else np.ones_like(real_part(x))
    if n < 0:
        return div(1.0, ipow(x, -n))
    if isinstance(x, Dual):
        return Dual(ipow(x.val, n), n * ipow(x.val, n - 1) * x.eps, x.tag)
    return x**n


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.val), cos(x.val) * x.eps, x.tag)
    return np.sin(x) if isinstance(x, np.ndarray) else math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.val), -sin(x.val) * x.eps, x.tag)
    return np.cos(x) if isinstance(x, np.ndarray) else math.cos(x)


def tanh(x):
    if isinstance(x, Dual):
        th = tanh(x.val)
        return Dual(th, (1.0 - th * th) * x.eps, x.tag)
    return np.tanh(x) if isinstance(x, np.ndarray) else math.tanh(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(e, e * x.eps, x.tag)
    if isinstance(x, np.ndarray):
        with np.errstate(over="raise"):
            try:
                return np.exp(x)
            except FloatingPointError as err:
                raise DomainError("exp overflow") from err
    try:
        return math.exp(x)
    except OverflowError as err:
        raise DomainError(f"exp overflow at {x!r}") from err


def log(x):
    if _is_nonpositive(x):
        raise DomainError("log of a non-positive number")
    if isinstance(x, Dual):
        return Dual(log(x.val), div(x.eps, x.val), x.tag)
    return np.log(x) if isinstance(x, np.ndarray) else math.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        if _is_nonpositive(x.val):
            raise DomainError("sqrt is not differentiable at non-positive arguments")
        s = sqrt(x.val)
        return Dual(s, div(x.eps, 2.0 * s), x.tag)
    if _is_negative(x):
        raise DomainError("sqrt of a negative number")
    return np.sqrt(x) if isinstance(x, np.ndarray) else math.sqrt(x)


def _sign(x):
    v = real_part(x)
    return np.sign(v) if isinstance(v, np.ndarray) else float((v > 0) - (v < 0))


def fabs(x):
    # derivative taken as 0 at the kink
    if isinstance(x, Dual):
        return Dual(fabs(x.val), _sign(x.val) * x.eps, x.tag)
    return np.abs(x) if isinstance(x, np.ndarray) else abs(x)
