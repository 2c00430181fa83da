"""Gaussian heat kernel, its mixed partial derivatives, and their means.

The d-dimensional kernel with bandwidth ``eps`` is

    p(x) = (2*pi*eps)**(-d/2) * exp(-|x|^2 / (2*eps))

Mixed partials are evaluated exactly through the one-dimensional identity

    d^n/dz^n p(z) = (-1)**n * eps**(-n/2) * He_n(z/sqrt(eps)) * p(z)

where ``He_n`` is the unnormalized probabilists' Hermite polynomial, combined
across coordinates by the product structure of the Gaussian.  The expectation
of the derivative kernel under a centered Gaussian increment of variance ``v``
per coordinate has the closed form of a derivative kernel with bandwidth
``v + eps`` evaluated at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "MAX_TOTAL_ORDER",
    "MultiIndex",
    "hermite_prob",
    "kernel",
    "kernel_derivative",
    "expected_kernel_derivative",
]

# Largest supported total derivative order.  Every experiment stays well below
# this; rejecting larger orders avoids having to define He_n overflow policies.
MAX_TOTAL_ORDER = 8

# Beyond 40 standard deviations the Gaussian factor underflows double
# precision (exp(-800) < 5e-324), so the kernel is exactly 0 there.
_UNDERFLOW_SIGMAS = 40.0


@dataclass(frozen=True)
class MultiIndex:
    """Coordinate-wise derivative order k = (k_1, ..., k_d).

    The dimension d and total order |k| are derived.  Total order zero is not
    representable here: the undifferentiated kernel is reached by passing a
    plain all-zero tuple to :func:`kernel_derivative`.
    """

    orders: tuple[int, ...]

    def __init__(self, orders: Sequence[int]):
        orders = tuple(int(o) for o in orders)
        if len(orders) < 1:
            raise ValueError("multi-index needs at least one coordinate")
        if any(o < 0 for o in orders):
            raise ValueError("derivative orders must be non-negative")
        if sum(orders) < 1:
            raise ValueError("total derivative order |k| must be >= 1")
        object.__setattr__(self, "orders", orders)

    @property
    def d(self) -> int:
        return len(self.orders)

    @property
    def total(self) -> int:
        """|k| = sum of the coordinate orders."""
        return sum(self.orders)

    @property
    def is_odd(self) -> bool:
        """True iff |k| is odd; exactly the cases with vanishing mean."""
        return self.total % 2 == 1

    def __iter__(self):
        return iter(self.orders)


def as_orders(k) -> tuple[int, ...]:
    """Normalize a MultiIndex or plain sequence of orders to a tuple.

    Plain sequences may be all-zero (the undifferentiated kernel), which
    MultiIndex itself forbids.
    """
    if isinstance(k, MultiIndex):
        return k.orders
    orders = tuple(int(o) for o in k)
    if len(orders) < 1 or any(o < 0 for o in orders):
        raise ValueError("orders must be a non-empty sequence of ints >= 0")
    return orders


def hermite_prob(n: int, y):
    """Unnormalized probabilists' Hermite polynomial He_n(y).

    Three-term recurrence He_0 = 1, He_1 = y, He_{n+1} = y*He_n - n*He_{n-1}.
    Accepts scalars or arrays.
    """
    if n < 0:
        raise ValueError("Hermite order must be non-negative")
    y_arr = np.asarray(y, dtype=float)
    h_prev = np.ones_like(y_arr)
    if n == 0:
        return float(h_prev) if y_arr.ndim == 0 else h_prev
    h = y_arr.copy()
    for i in range(1, n):
        h, h_prev = y_arr * h - i * h_prev, h
    return float(h) if y_arr.ndim == 0 else h


def _as_points(x) -> np.ndarray:
    """A point is a length-d sequence; batches stack points on leading axes."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    return x_arr


def kernel(x, eps: float):
    """Gaussian density p(x) = (2*pi*eps)**(-d/2) exp(-|x|^2/(2*eps)).

    ``x`` is one point of dimension d (last axis), or a batch of them.
    Returns exact 0 once any coordinate exceeds 40*sqrt(eps).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x_arr = _as_points(x)
    d = x_arr.shape[-1]
    z = x_arr / math.sqrt(eps)
    sq = np.sum(z * z, axis=-1)
    far = np.max(np.abs(z), axis=-1) > _UNDERFLOW_SIGMAS
    with np.errstate(under="ignore"):
        out = np.where(far, 0.0, np.exp(-0.5 * sq)) * (2.0 * math.pi * eps) ** (-d / 2.0)
    return float(out) if out.ndim == 0 else out


def kernel_derivative(x, eps: float, k):
    """Mixed partial of the kernel, orders k = (k_1, ..., k_d).

    Evaluates prod_j [(-1)**k_j eps**(-k_j/2) He_{k_j}(x_j/sqrt(eps))] * p(x).
    """
    orders = as_orders(k)
    total = sum(orders)
    if total > MAX_TOTAL_ORDER:
        raise ValueError(f"total derivative order {total} exceeds {MAX_TOTAL_ORDER}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    x_arr = _as_points(x)
    if x_arr.shape[-1] != len(orders):
        raise ValueError(
            f"point dimension {x_arr.shape[-1]} != multi-index dimension {len(orders)}"
        )
    base = kernel(x_arr, eps)
    rt = math.sqrt(eps)
    fac = np.ones(np.shape(base))
    for j, kj in enumerate(orders):
        if kj:
            sign = -1.0 if kj % 2 else 1.0
            fac = fac * hermite_prob(kj, x_arr[..., j] / rt) * (sign * eps ** (-kj / 2.0))
    out = fac * base
    return float(out) if np.ndim(out) == 0 else out


def _double_factorial(n: int) -> int:
    # (-1)!! == 1 by convention
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def expected_kernel_derivative(v, eps: float, k):
    """Mean of the derivative kernel over a N(0, v*I_d) increment.

    Equals prod_j [(-1)**(k_j/2) (k_j-1)!! (2*pi)**(-1/2) (v+eps)**(-(k_j+1)/2)]
    when every k_j is even, and 0 otherwise.  Identical to evaluating the
    derivative kernel with bandwidth v + eps at the origin.  ``v`` may be an
    array of variances.
    """
    orders = as_orders(k)
    total = sum(orders)
    if total > MAX_TOTAL_ORDER:
        raise ValueError(f"total derivative order {total} exceeds {MAX_TOTAL_ORDER}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < 0):
        raise ValueError("variance v must be non-negative")
    d = len(orders)
    if any(kj % 2 for kj in orders):
        out = np.zeros_like(v_arr)
        return float(out) if out.ndim == 0 else out
    c = 1.0
    for kj in orders:
        c *= (-1.0) ** (kj // 2) * _double_factorial(kj - 1) / math.sqrt(2.0 * math.pi)
    q = (total + d) / 2.0
    out = c * (v_arr + eps) ** (-q)
    return float(out) if out.ndim == 0 else out
