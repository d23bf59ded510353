"""Truncated Taylor-series ("jet") arithmetic along the simulation clock.

A :class:`Jet` stores normalized coefficients (c0, ..., cm) of
g(t + s) = sum_k c_k s^k, so c1 is the first total time derivative of g and
k! * c_k the k-th. Propagating jets through the virtual-control recursion
accumulates every chain-rule term of those derivatives exactly, which is what
makes the analytically differentiated baseline controller exact rather than
approximated.

Mixed-order operations truncate to the shorter operand: a coefficient is kept
only when every contribution to it is valid. Scalars act as constants of
unlimited order.
"""

from __future__ import annotations

import math


class Jet:
    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = tuple(float(v) for v in coeffs)
        if not self.c:
            raise ValueError("a jet needs at least one coefficient")

    @classmethod
    def constant(cls, value: float, order: int) -> "Jet":
        return cls((float(value),) + (0.0,) * order)

    @property
    def value(self) -> float:
        return self.c[0]

    @property
    def order(self) -> int:
        return len(self.c) - 1

    def truncated(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(self.c[: order + 1])

    def derivative(self) -> "Jet":
        """Jet of the total time derivative (one order lower)."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(tuple((k + 1) * self.c[k + 1] for k in range(self.order)))

    def __repr__(self) -> str:
        return f"Jet({list(self.c)})"

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            m = min(self.order, other.order)
            return Jet(tuple(self.c[k] + other.c[k] for k in range(m + 1)))
        return Jet((self.c[0] + other,) + self.c[1:])

    __radd__ = __add__

    def __neg__(self):
        return Jet(tuple(-v for v in self.c))

    def __sub__(self, other):
        return self.__add__(-other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, Jet):
            m = min(self.order, other.order)
            out = []
            for k in range(m + 1):
                acc = 0.0
                for j in range(k + 1):
                    acc += self.c[j] * other.c[k - j]
                out.append(acc)
            return Jet(out)
        return Jet(tuple(v * other for v in self.c))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            m = min(self.order, other.order)
            if other.c[0] == 0.0:
                raise ZeroDivisionError("jet division by zero leading term")
            out = []
            for k in range(m + 1):
                acc = self.c[k]
                for j in range(1, k + 1):
                    acc -= other.c[j] * out[k - j]
                out.append(acc / other.c[0])
            return Jet(out)
        return Jet(tuple(v / other for v in self.c))

    def __rtruediv__(self, other):
        return Jet.constant(other, self.order) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, int) or exponent < 0:
            raise ValueError("jets support non-negative integer powers only")
        result = Jet.constant(1.0, self.order)
        for _ in range(exponent):
            result = result * self
        return result


def _sin_cos(u: Jet) -> tuple[Jet, Jet]:
    # Joint recurrence: s_k and c_k each pull one factor of u' per order.
    m = u.order
    s = [math.sin(u.c[0])]
    c = [math.cos(u.c[0])]
    for k in range(1, m + 1):
        acc_s = 0.0
        acc_c = 0.0
        for j in range(1, k + 1):
            acc_s += j * u.c[j] * c[k - j]
            acc_c += j * u.c[j] * s[k - j]
        s.append(acc_s / k)
        c.append(-acc_c / k)
    return Jet(s), Jet(c)


def sin(u):
    if isinstance(u, Jet):
        return _sin_cos(u)[0]
    return math.sin(u)


def cos(u):
    if isinstance(u, Jet):
        return _sin_cos(u)[1]
    return math.cos(u)


def value_of(u) -> float:
    return u.value if isinstance(u, Jet) else float(u)
