"""Linear differential operators and the cross-covariances they induce.

If ``u ~ GP(0, k)`` and ``L = sum_i c_i(x) d^{a_i}``, then ``L u`` is a
zero-mean GP and every covariance between ``u``, ``L u`` and a derivative
``d^b u`` is a weighted sum of kernel derivatives.  All of these are handled
here by treating each process as a linear operator applied to ``u``:
``u`` itself is the identity and a derivative target is a single
unit-coefficient term.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .kernel import KernelHyperparams, MultiIndex, se_derivative_matrix

__all__ = [
    "Field",
    "ConstantField",
    "BuiltinField",
    "GridField",
    "FunctionField",
    "as_field",
    "BUILTIN_FIELDS",
    "OperatorTerm",
    "LinearOperator",
    "AffineConstraint",
    "DerivativeTarget",
    "U",
    "cov_matrix",
    "kernel_rr",
    "kernel_ur",
    "kernel_ru",
    "kernel_lt",
    "operator_from_json",
]


# ----------------------------------------------------------------------------
# scalar fields


class Field:
    """A deterministic scalar function of position, evaluated row-wise."""

    def __call__(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self, sample_at: np.ndarray | None = None):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantField(Field):
    value: float

    def __call__(self, X):
        X = np.atleast_2d(X)
        return np.full(X.shape[0], float(self.value))

    def to_dict(self, sample_at=None):
        return float(self.value)


def _poisson_g(X):
    x1, x2 = X[:, 0], X[:, 1]
    return np.exp(-x1) * (x1 - 2.0 + x2**3 + 6.0 * x2)


#: Named fields that can be referenced from JSON operator descriptions.
BUILTIN_FIELDS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "zero": lambda X: np.zeros(X.shape[0]),
    "one": lambda X: np.ones(X.shape[0]),
    "poisson_g": _poisson_g,
}


@dataclass(frozen=True)
class BuiltinField(Field):
    name: str

    def __post_init__(self):
        if self.name not in BUILTIN_FIELDS:
            raise KeyError(f"unknown builtin field {self.name!r}; known: {sorted(BUILTIN_FIELDS)}")

    def __call__(self, X):
        return np.asarray(BUILTIN_FIELDS[self.name](np.atleast_2d(X)), dtype=float)

    def to_dict(self, sample_at=None):
        return {"builtin": self.name}


class GridField(Field):
    """Piecewise-linear interpolation of values on a rectilinear grid.

    Points outside the grid are linearly extrapolated.
    """

    def __init__(self, axes: Sequence[Sequence[float]], values):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float).reshape([len(a) for a in self.axes])
        if len(self.axes) == 1:
            self._interp = None
        else:
            self._interp = RegularGridInterpolator(
                self.axes, self.values, bounds_error=False, fill_value=None
            )

    def __call__(self, X):
        X = np.atleast_2d(X)
        if self._interp is None:
            ax, v = self.axes[0], self.values
            x = X[:, 0]
            out = np.interp(x, ax, v)
            if len(ax) > 1:
                lo, hi = x < ax[0], x > ax[-1]
                out[lo] = v[0] + (x[lo] - ax[0]) * (v[1] - v[0]) / (ax[1] - ax[0])
                out[hi] = v[-1] + (x[hi] - ax[-1]) * (v[-1] - v[-2]) / (ax[-1] - ax[-2])
            return out
        return self._interp(X)

    def to_dict(self, sample_at=None):
        return {"grid": {"axes": [a.tolist() for a in self.axes], "values": self.values.tolist()}}


class FunctionField(Field):
    """Wraps an arbitrary vectorised callable ``X (N, D) -> (N,)``.

    Not serializable by itself; :meth:`to_dict` samples it onto a 1-D grid
    when ``sample_at`` is supplied.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], name: str | None = None):
        self.func = func
        self.name = name or getattr(func, "__name__", "function")

    def __call__(self, X):
        return np.asarray(self.func(np.atleast_2d(X)), dtype=float).reshape(-1)

    def to_dict(self, sample_at=None):
        if sample_at is None:
            raise TypeError(f"field {self.name!r} is not serializable without sample points")
        pts = np.atleast_2d(sample_at)
        if pts.shape[1] != 1:
            raise TypeError("sampling arbitrary fields is only supported in one dimension")
        ax = np.unique(pts[:, 0])
        return GridField([ax], self(ax[:, None])).to_dict()

    def __repr__(self):
        return f"FunctionField({self.name})"


FieldLike = Union[Field, float, int, Callable[[np.ndarray], np.ndarray]]


def as_field(value: FieldLike) -> Field:
    if isinstance(value, Field):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return ConstantField(float(value))
    if callable(value):
        return FunctionField(value)
    raise TypeError(f"cannot interpret {value!r} as a scalar field")


def field_from_dict(d) -> Field:
    if isinstance(d, (int, float)):
        return ConstantField(float(d))
    if "builtin" in d:
        return BuiltinField(d["builtin"])
    if "grid" in d:
        return GridField(d["grid"]["axes"], d["grid"]["values"])
    raise ValueError(f"unrecognised field description {d!r}")


# ----------------------------------------------------------------------------
# operators


@dataclass(frozen=True)
class OperatorTerm:
    coefficient: Field
    derivative: MultiIndex

    def __init__(self, coefficient: FieldLike, derivative):
        object.__setattr__(self, "coefficient", as_field(coefficient))
        if not isinstance(derivative, MultiIndex):
            derivative = MultiIndex(tuple(np.atleast_1d(derivative)))
        object.__setattr__(self, "derivative", derivative)


class LinearOperator:
    """``sum_i c_i(x) d^{a_i} u``.  Duplicate multi-indices are allowed."""

    def __init__(self, terms: Iterable[OperatorTerm | tuple]):
        ts = []
        for t in terms:
            if not isinstance(t, OperatorTerm):
                t = OperatorTerm(*t)
            ts.append(t)
        if not ts:
            raise ValueError("a linear operator needs at least one term")
        dims = {t.derivative.dim for t in ts}
        if len(dims) != 1:
            raise ValueError(f"inconsistent term dimensions {sorted(dims)}")
        self.terms = tuple(ts)
        self.dim = dims.pop()

    @classmethod
    def identity(cls, dim: int) -> "LinearOperator":
        return cls([OperatorTerm(1.0, MultiIndex.zero(dim))])

    @property
    def max_order(self) -> int:
        return max(t.derivative.total for t in self.terms)

    def coefficients(self, X: np.ndarray) -> list[np.ndarray]:
        return [t.coefficient(X) for t in self.terms]

    def apply(self, derivs: Mapping[tuple[int, ...], np.ndarray], X: np.ndarray) -> np.ndarray:
        """Evaluate ``L u`` at ``X`` from a mapping ``orders -> d^orders u(X)``."""
        out = 0.0
        for t in self.terms:
            out = out + t.coefficient(X) * derivs[t.derivative.orders]
        return np.asarray(out, dtype=float)

    def to_dict(self, sample_at=None) -> dict:
        return {
            "terms": [
                {"coeff": t.coefficient.to_dict(sample_at), "orders": list(t.derivative.orders)}
                for t in self.terms
            ]
        }

    def __repr__(self):
        parts = [f"{t.coefficient!r}*d{t.derivative.orders}" for t in self.terms]
        return "LinearOperator(" + " + ".join(parts) + ")"


@dataclass(frozen=True)
class AffineConstraint:
    """The equation ``operator u = rhs``."""

    operator: LinearOperator
    rhs: Field = ConstantField(0.0)

    def __init__(self, operator: LinearOperator, rhs: FieldLike = 0.0):
        object.__setattr__(self, "operator", operator)
        object.__setattr__(self, "rhs", as_field(rhs))

    @property
    def dim(self) -> int:
        return self.operator.dim

    def residual(self, derivs, X) -> np.ndarray:
        """``L u - f`` given derivative values at ``X``."""
        return self.operator.apply(derivs, X) - self.rhs(X)

    def to_dict(self, sample_at=None) -> dict:
        d = self.operator.to_dict(sample_at)
        d["rhs"] = self.rhs.to_dict(sample_at)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AffineConstraint":
        terms = [OperatorTerm(field_from_dict(t["coeff"]), MultiIndex(tuple(t["orders"]))) for t in d["terms"]]
        return cls(LinearOperator(terms), field_from_dict(d.get("rhs", 0.0)))


def operator_from_json(text_or_path: str) -> AffineConstraint:
    """Parse an operator description from a JSON string or file path."""
    text = text_or_path
    if not text_or_path.lstrip().startswith("{"):
        with open(text_or_path) as fh:
            text = fh.read()
    return AffineConstraint.from_dict(json.loads(text))


@dataclass(frozen=True)
class DerivativeTarget:
    """A derivative of ``u`` to predict; the zero multi-index means ``u``."""

    derivative: MultiIndex

    def __init__(self, derivative):
        if not isinstance(derivative, MultiIndex):
            derivative = MultiIndex(tuple(np.atleast_1d(derivative)))
        object.__setattr__(self, "derivative", derivative)

    @classmethod
    def of(cls, *orders: int) -> "DerivativeTarget":
        return cls(MultiIndex(tuple(orders)))

    @property
    def name(self) -> str:
        return str(self.derivative)

    def as_operator(self) -> LinearOperator:
        return LinearOperator([OperatorTerm(1.0, self.derivative)])


class _U:
    """Sentinel for the latent process ``u`` itself."""

    def __repr__(self):
        return "U"


U = _U()


def _to_operator(proc, dim: int) -> LinearOperator:
    if proc is U or proc is None:
        return LinearOperator.identity(dim)
    if isinstance(proc, LinearOperator):
        return proc
    if isinstance(proc, AffineConstraint):
        return proc.operator
    if isinstance(proc, DerivativeTarget):
        return proc.as_operator()
    if isinstance(proc, MultiIndex):
        return DerivativeTarget(proc).as_operator()
    raise TypeError(f"cannot interpret {proc!r} as a process")


def cov_matrix(
    A: np.ndarray,
    proc_a,
    B: np.ndarray,
    proc_b,
    hp: KernelHyperparams,
    *,
    dlog_lengthscale: int | None = None,
    coeffs_a: list[np.ndarray] | None = None,
    coeffs_b: list[np.ndarray] | None = None,
) -> np.ndarray:
    """``Cov(L_a u(A_i), L_b u(B_j))`` as an (N, M) matrix.

    ``proc_a``/``proc_b`` may be ``U``, a :class:`DerivativeTarget`, a
    :class:`LinearOperator` or an :class:`AffineConstraint` (whose rhs is
    ignored).  Precomputed coefficient values may be passed to avoid
    re-evaluating expensive fields.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    La = _to_operator(proc_a, hp.dim)
    Lb = _to_operator(proc_b, hp.dim)
    ca = La.coefficients(A) if coeffs_a is None else coeffs_a
    cb = Lb.coefficients(B) if coeffs_b is None else coeffs_b
    cache: dict = {}
    out = np.zeros((A.shape[0], B.shape[0]))
    for ta, va in zip(La.terms, ca):
        for tb, vb in zip(Lb.terms, cb):
            key = (ta.derivative.orders, tb.derivative.orders)
            if key not in cache:
                cache[key] = se_derivative_matrix(
                    A, B, key[0], key[1], hp, dlog_lengthscale=dlog_lengthscale
                )
            out += va[:, None] * cache[key] * vb[None, :]
    if not np.all(np.isfinite(out)):
        i, j = np.argwhere(~np.isfinite(out))[0]
        raise FloatingPointError(
            f"non-finite covariance between points {A[i].tolist()} and {B[j].tolist()}"
        )
    return out


def _pt(x, dim):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (dim,):
        raise ValueError(f"point of shape {x.shape} does not match dimension {dim}")
    return x[None]


def kernel_rr(x, x_prime, constraint: AffineConstraint, hp: KernelHyperparams) -> float:
    """Covariance of the residual process with itself."""
    return float(cov_matrix(_pt(x, hp.dim), constraint, _pt(x_prime, hp.dim), constraint, hp)[0, 0])


def kernel_ur(x, x_prime, constraint: AffineConstraint, hp: KernelHyperparams) -> float:
    """``Cov(u(x), r(x'))``."""
    return float(cov_matrix(_pt(x, hp.dim), U, _pt(x_prime, hp.dim), constraint, hp)[0, 0])


def kernel_ru(x, x_prime, constraint: AffineConstraint, hp: KernelHyperparams) -> float:
    """``Cov(r(x), u(x'))``."""
    return float(cov_matrix(_pt(x, hp.dim), constraint, _pt(x_prime, hp.dim), U, hp)[0, 0])


def kernel_lt(x, x_prime, target: DerivativeTarget, other, hp: KernelHyperparams) -> float:
    """Covariance between ``d^target u(x)`` and ``other`` at ``x'``.

    ``other`` is ``U``, an :class:`AffineConstraint` (the residual) or another
    :class:`DerivativeTarget`.
    """
    return float(cov_matrix(_pt(x, hp.dim), target, _pt(x_prime, hp.dim), other, hp)[0, 0])
