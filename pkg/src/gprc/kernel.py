"""Squared-exponential covariance and its closed-form mixed partial derivatives.

The kernel is

    k(x, x') = gamma_alpha**2 * exp(-0.5 * sum_d g_d * (x_d - x'_d)**2)

where ``g_d`` are the entries of ``lengthscales``.  Note that ``g_d`` multiplies
the squared distance, so it behaves as an *inverse squared* length scale:
larger values mean a rougher prior.

Because the kernel factorises over dimensions, every mixed derivative
``d^alpha_x d^beta_x' k`` is the product of one-dimensional factors
``(-1)**beta_d * p_n(r_d) * exp(-0.5 g_d r_d**2)`` with ``n = alpha_d + beta_d``
and ``r_d = x_d - x'_d``.  The polynomials obey ``p_0 = 1`` and
``p_{n+1} = p_n' - g r p_n`` (product rule on ``p * exp``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

__all__ = [
    "KernelHyperparams",
    "MultiIndex",
    "UnsupportedOrderError",
    "DEFAULT_MAX_ORDER",
    "se_kernel",
    "se_kernel_derivative",
    "se_derivative_matrix",
]

#: Maximum derivative order per argument side.  Runtime-configurable.
DEFAULT_MAX_ORDER = 2


class UnsupportedOrderError(ValueError):
    """A requested derivative order exceeds the configured cap."""


@dataclass(frozen=True)
class KernelHyperparams:
    """Amplitude and per-dimension inverse squared length scales."""

    gamma_alpha: float
    lengthscales: tuple[float, ...]

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "gamma_alpha", float(self.gamma_alpha))
        if len(ls) == 0:
            raise ValueError("input dimension must be at least 1")
        if not (self.gamma_alpha > 0 and np.isfinite(self.gamma_alpha)):
            raise ValueError(f"gamma_alpha must be positive, got {self.gamma_alpha}")
        if not all(v > 0 and np.isfinite(v) for v in ls):
            raise ValueError(f"lengthscales must be positive, got {ls}")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def to_dict(self) -> dict:
        return {"gamma_alpha": self.gamma_alpha, "lengthscales": list(self.lengthscales)}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelHyperparams":
        return cls(d["gamma_alpha"], tuple(d["lengthscales"]))


@dataclass(frozen=True)
class MultiIndex:
    """Per-dimension derivative orders, e.g. ``MultiIndex((1, 1))`` is d2/dx1dx2."""

    orders: tuple[int, ...] = field(default=(0,))

    def __post_init__(self):
        orders = tuple(int(o) for o in self.orders)
        if any(o < 0 for o in orders):
            raise ValueError(f"derivative orders must be nonnegative, got {orders}")
        if len(orders) == 0:
            raise ValueError("multi-index must have at least one entry")
        object.__setattr__(self, "orders", orders)

    @classmethod
    def zero(cls, dim: int) -> "MultiIndex":
        return cls((0,) * dim)

    @classmethod
    def of(cls, *orders: int) -> "MultiIndex":
        return cls(tuple(orders))

    @property
    def dim(self) -> int:
        return len(self.orders)

    @property
    def total(self) -> int:
        return sum(self.orders)

    def __str__(self) -> str:
        if self.total == 0:
            return "u"
        return "d" + "".join(f"{o}" for o in self.orders)


def _as_index(a, dim: int) -> tuple[int, ...]:
    orders = a.orders if isinstance(a, MultiIndex) else tuple(int(o) for o in np.atleast_1d(a))
    if len(orders) != dim:
        raise ValueError(f"multi-index {orders} does not match input dimension {dim}")
    return orders


@lru_cache(maxsize=None)
def _poly_unit(n: int) -> tuple[tuple[float, ...], ...]:
    """Coefficients of p_n for g = 1 as a tuple of per-power coefficients.

    For general g, p_n(r; g) = g**(n/2) * p_n(sqrt(g) r; 1); we instead keep
    the coefficients of r**k, which scale as g**((n + k) / 2).
    """
    p = np.array([1.0])
    out = [tuple(p)]
    for _ in range(n):
        p = P.polysub(P.polyder(p) if len(p) > 1 else np.array([0.0]), P.polymulx(p))
        out.append(tuple(p))
    return tuple(out)


def _poly_value(n: int, g: float, r: np.ndarray) -> np.ndarray:
    """Evaluate p_n(r) for inverse squared length scale ``g``."""
    coeffs = np.asarray(_poly_unit(n)[n], dtype=float)
    k = np.arange(len(coeffs))
    scaled = coeffs * g ** ((n + k) / 2.0)
    return P.polyval(r, scaled)


def _check_order(alpha, beta, max_order):
    if sum(alpha) > max_order or sum(beta) > max_order:
        raise UnsupportedOrderError(
            f"derivative orders {alpha}, {beta} exceed the per-side maximum {max_order}"
        )


def se_derivative_matrix(
    A: np.ndarray,
    B: np.ndarray,
    alpha,
    beta,
    hp: KernelHyperparams,
    *,
    dlog_lengthscale: int | None = None,
    max_order: int | None = None,
) -> np.ndarray:
    """Matrix of ``d^alpha_x d^beta_x' k(A_i, B_j)``.

    Parameters
    ----------
    A, B : array, (N, D) and (M, D)
        Points for the first and second kernel argument.
    alpha, beta : MultiIndex or sequence of int
        Derivative orders applied to the first and second argument.
    hp : KernelHyperparams
    dlog_lengthscale : int, optional
        If given, return the derivative of the matrix with respect to
        ``log(lengthscales[d])`` instead.
    max_order : int, optional
        Per-side order cap, defaults to ``DEFAULT_MAX_ORDER``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    D = hp.dim
    if A.shape[1] != D or B.shape[1] != D:
        raise ValueError(
            f"point dimensions {A.shape[1]}, {B.shape[1]} do not match hyperparameters ({D})"
        )
    alpha = _as_index(alpha, D)
    beta = _as_index(beta, D)
    _check_order(alpha, beta, DEFAULT_MAX_ORDER if max_order is None else max_order)

    out = np.full((A.shape[0], B.shape[0]), hp.gamma_alpha**2)
    for d in range(D):
        g = hp.lengthscales[d]
        r = A[:, d, None] - B[None, :, d]
        n = alpha[d] + beta[d]
        base = np.exp(-0.5 * g * r * r)
        if dlog_lengthscale == d:
            # g * d/dg of p_n exp(-g r^2/2) equals -(p_{n+2} + g p_n) / 2 times exp
            poly = -(_poly_value(n + 2, g, r) + g * _poly_value(n, g, r)) / (2.0 * g)
        else:
            poly = _poly_value(n, g, r)
        sign = -1.0 if beta[d] % 2 else 1.0
        out *= sign * poly * base
    return out


def se_kernel(x: Sequence[float], x_prime: Sequence[float], hp: KernelHyperparams) -> float:
    """Squared-exponential covariance between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != (hp.dim,) or x_prime.shape != (hp.dim,):
        raise ValueError(
            f"point shapes {x.shape}, {x_prime.shape} do not match dimension {hp.dim}"
        )
    v = x - x_prime
    return float(hp.gamma_alpha**2 * np.exp(-0.5 * np.dot(v * np.asarray(hp.lengthscales), v)))


def se_kernel_derivative(
    alpha,
    beta,
    x: Sequence[float],
    x_prime: Sequence[float],
    hp: KernelHyperparams,
    *,
    max_order: int | None = None,
) -> float:
    """``d^alpha_x d^beta_x' k(x, x')`` at a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != (hp.dim,) or x_prime.shape != (hp.dim,):
        raise ValueError(
            f"point shapes {x.shape}, {x_prime.shape} do not match dimension {hp.dim}"
        )
    return float(
        se_derivative_matrix(x[None], x_prime[None], alpha, beta, hp, max_order=max_order)[0, 0]
    )
