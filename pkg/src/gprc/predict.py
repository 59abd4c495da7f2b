"""Constrained posterior prediction and product-of-experts IC/BC correction.

At a test point ``x*`` the equation is imposed on a small grid ``chi`` of
points around ``x*`` (the extended set).  The posterior of ``u`` or of any
derivative target is obtained by conditioning on the training observations
``y`` and the residual values ``f(chi)``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from .gpr import TrainedModel, robust_cholesky
from .kernel import KernelHyperparams, MultiIndex
from .operator import U, DerivativeTarget, cov_matrix

__all__ = [
    "ExtendedSetConfig",
    "PosteriorGaussian",
    "IcbcAnchor",
    "FieldPrediction",
    "build_extended_set",
    "posterior",
    "posterior_many",
    "poe_correct",
    "poe_normalizer",
    "predict_field",
    "write_field_csv",
    "MeanField",
    "VARIANCE_FLOOR_TOL",
    "EXPERT_VARIANCE_FLOOR",
]

log = logging.getLogger(__name__)

VARIANCE_FLOOR_TOL = 1e-10
EXPERT_VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class ExtendedSetConfig:
    """Half-width and number of points per dimension of the extended set."""

    half_width: tuple[float, ...]
    count: tuple[int, ...]

    def __post_init__(self):
        hw = tuple(float(v) for v in np.atleast_1d(self.half_width))
        ct = tuple(int(v) for v in np.atleast_1d(self.count))
        if len(hw) != len(ct):
            raise ValueError("half_width and count must have the same length")
        if any(v <= 0 for v in hw) or any(c < 1 for c in ct):
            raise ValueError(f"invalid extended set {hw}, {ct}")
        object.__setattr__(self, "half_width", hw)
        object.__setattr__(self, "count", ct)

    @classmethod
    def from_step(cls, width: float, step: float, dim: int = 1) -> "ExtendedSetConfig":
        """Grid spanning ``[x* - width, x* + width]`` with spacing close to ``step``."""
        count = int(round(2 * width / step)) + 1
        return cls((width,) * dim, (count,) * dim)

    @property
    def m(self) -> int:
        return int(np.prod(self.count))


@dataclass(frozen=True)
class PosteriorGaussian:
    mean: float
    variance: float


@dataclass(frozen=True)
class IcbcAnchor:
    """A known value of ``u`` (or of ``d^derivative u``) at an initial or boundary point."""

    x0: tuple[float, ...]
    value: float
    derivative: MultiIndex | None = None

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        if not np.isfinite(self.value):
            raise ValueError("anchor value must be finite")
        if self.derivative is None:
            object.__setattr__(self, "derivative", MultiIndex.zero(len(self.x0)))
        elif not isinstance(self.derivative, MultiIndex):
            object.__setattr__(self, "derivative", MultiIndex(tuple(self.derivative)))


def build_extended_set(x_star, cfg: ExtendedSetConfig | None, domain=None) -> np.ndarray:
    """Equally spaced grid centred on ``x_star``.

    ``domain`` is an optional ``(lower, upper)`` box; grid points outside it
    are dropped.  ``cfg=None`` gives an empty set.
    """
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    D = x_star.shape[0]
    if domain is not None:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (D,)) for b in domain)
        if np.any(x_star < lo) or np.any(x_star > hi):
            raise ValueError(f"test point {x_star.tolist()} lies outside the domain")
    if cfg is None:
        return np.empty((0, D))
    if len(cfg.count) != D:
        raise ValueError(f"extended set configured for {len(cfg.count)} dims, point has {D}")
    axes = [
        np.array([x_star[d]]) if cfg.count[d] == 1
        else np.linspace(x_star[d] - cfg.half_width[d], x_star[d] + cfg.half_width[d], cfg.count[d])
        for d in range(D)
    ]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, D)
    if domain is not None:
        inside = np.all((grid >= lo) & (grid <= hi), axis=1)
        grid = grid[inside]
        if grid.shape[0] == 0:
            grid = x_star[None]
    return grid


def _clamp(var: float) -> float:
    if var < 0:
        if var < -VARIANCE_FLOOR_TOL * 1e3:
            log.warning("posterior variance %.3g clamped to zero", var)
        return 0.0
    return var


def posterior_many(model: TrainedModel, targets: Sequence[DerivativeTarget], x_star, extset=None):
    """Posteriors of several targets at one test point, sharing one factorisation.

    For a plain model (no constraint) the extended set is ignored.
    """
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    D = model.dim
    if x_star.shape != (1, D):
        raise ValueError(f"test point shape {x_star.shape} does not match dimension {D}")
    chi = np.empty((0, D)) if extset is None else np.atleast_2d(np.asarray(extset, float)).reshape(-1, D)
    if chi.shape[0] > 1:
        # the extended set is a set: repeated points would count as extra slack observations
        _, first = np.unique(chi, axis=0, return_index=True)
        chi = chi[np.sort(first)]
    constraint = model.constraint
    if constraint is None or chi.shape[0] == 0:
        chi = np.empty((0, D))
        Khat = model.u_block
        Y = model.y
    else:
        c_chi = constraint.operator.coefficients(chi)
        Kur = cov_matrix(model.X, U, chi, constraint, model.hp, coeffs_b=c_chi)
        Krr = cov_matrix(chi, constraint, chi, constraint, model.hp, coeffs_a=c_chi, coeffs_b=c_chi)
        Krr = 0.5 * (Krr + Krr.T)
        Krr[np.diag_indices_from(Krr)] += model.noise.sigma_r2
        Khat = np.block([[model.u_block, Kur], [Kur.T, Krr]])
        Y = np.concatenate([model.y, constraint.rhs(chi)])
    L, _ = robust_cholesky(Khat)
    alpha = linalg.cho_solve((L, True), Y)
    out = []
    for t in targets:
        k = cov_matrix(x_star, t, model.X, U, model.hp)[0]
        if chi.shape[0]:
            k = np.concatenate([k, cov_matrix(x_star, t, chi, constraint, model.hp, coeffs_b=c_chi)[0]])
        v = linalg.solve_triangular(L, k, lower=True)
        prior = cov_matrix(x_star, t, x_star, t, model.hp)[0, 0]
        out.append(PosteriorGaussian(float(k @ alpha), _clamp(float(prior - v @ v))))
    return out


def posterior(model: TrainedModel, target: DerivativeTarget, x_star, extset=None) -> PosteriorGaussian:
    """Posterior mean and variance of ``target`` at ``x_star`` given the extended set."""
    return posterior_many(model, [target], x_star, extset)[0]


def _expert_variance(x_star, x0, hp: KernelHyperparams) -> float:
    v = np.atleast_1d(np.asarray(x_star, float)) - np.asarray(x0, float)
    return max(float(np.expm1(np.dot(v * np.asarray(hp.lengthscales), v))), EXPERT_VARIANCE_FLOOR)


def poe_correct(base: PosteriorGaussian, anchor: IcbcAnchor, x_star, hp: KernelHyperparams) -> PosteriorGaussian:
    """Product of the posterior with a Gaussian expert centred on the anchor value.

    The expert variance grows as ``exp(|x* - x0|^2) - 1`` in the kernel's
    metric, so the anchor dominates only close to ``x0``.
    """
    sb = _expert_variance(x_star, anchor.x0, hp)
    s = base.variance
    total = s + sb
    mean = (sb * base.mean + s * anchor.value) / total
    return PosteriorGaussian(float(mean), float(s * sb / total))


def poe_normalizer(base: PosteriorGaussian, anchor: IcbcAnchor, x_star, hp: KernelHyperparams) -> float:
    """Normalising constant of the expert product; does not affect mean or variance."""
    var = base.variance + _expert_variance(x_star, anchor.x0, hp)
    return float(np.exp(-0.5 * (base.mean - anchor.value) ** 2 / var) / np.sqrt(2 * np.pi * var))


def _nearest_anchor(anchors: Sequence[IcbcAnchor], x) -> IcbcAnchor:
    pts = np.array([a.x0 for a in anchors])
    d = np.linalg.norm(pts - np.asarray(x)[None], axis=1)
    return anchors[int(np.argmin(d))]  # argmin takes the first (lowest index) tie


@dataclass
class FieldPrediction:
    """Posterior means and variances of one target over a grid."""

    target: DerivativeTarget
    mean: np.ndarray
    variance: np.ndarray

    def __len__(self):
        return len(self.mean)

    def __getitem__(self, i) -> PosteriorGaussian:
        return PosteriorGaussian(float(self.mean[i]), float(self.variance[i]))


def predict_field(
    model: TrainedModel,
    targets: Sequence[DerivativeTarget],
    grid,
    extcfg: ExtendedSetConfig | None = None,
    anchors: Sequence[IcbcAnchor] | None = None,
    domain=None,
) -> dict[DerivativeTarget, FieldPrediction]:
    """Posterior of every target at every grid point.

    A fresh extended set is built around each grid point.  When anchors are
    given, the nearest anchor for the same derivative (if any) corrects the
    posterior by a product of experts.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("prediction grid is empty")
    targets = list(targets)
    T = grid.shape[0]
    means = np.empty((len(targets), T))
    variances = np.empty((len(targets), T))
    by_deriv: dict[MultiIndex, list[IcbcAnchor]] = {}
    for a in anchors or ():
        by_deriv.setdefault(a.derivative, []).append(a)
    if model.plain:
        _plain_batch(model, targets, grid, means, variances)
    for i, x in enumerate(grid):
        if model.plain and not anchors:
            break
        if model.plain:
            posts = [PosteriorGaussian(means[j, i], variances[j, i]) for j in range(len(targets))]
        else:
            try:
                chi = build_extended_set(x, extcfg, domain)
                posts = posterior_many(model, targets, x, chi)
            except Exception as exc:
                raise type(exc)(f"at grid index {i} ({x.tolist()}): {exc}") from exc
        for j, (t, p) in enumerate(zip(targets, posts)):
            cands = by_deriv.get(t.derivative)
            if cands:
                p = poe_correct(p, _nearest_anchor(cands, x), x, model.hp)
            means[j, i] = p.mean
            variances[j, i] = p.variance
    return {t: FieldPrediction(t, means[j], variances[j]) for j, t in enumerate(targets)}


def _plain_batch(model, targets, grid, means, variances):
    L, _ = robust_cholesky(model.u_block)
    alpha = linalg.cho_solve((L, True), model.y)
    for j, t in enumerate(targets):
        K = cov_matrix(grid, t, model.X, U, model.hp)
        V = linalg.solve_triangular(L, K.T, lower=True)
        prior = cov_matrix(grid[:1], t, grid[:1], t, model.hp)[0, 0]  # stationary
        means[j] = K @ alpha
        variances[j] = [_clamp(float(v)) for v in prior - np.sum(V * V, axis=0)]


def write_field_csv(path, grid, result: Mapping[DerivativeTarget, FieldPrediction]) -> None:
    """Columns ``x_1..x_D, target, mean, variance``."""
    grid = np.atleast_2d(grid)
    D = grid.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{d + 1}" for d in range(D)] + ["target", "mean", "variance"])
        for t, fp in result.items():
            for x, m, v in zip(grid, fp.mean, fp.variance):
                w.writerow([repr(float(c)) for c in x] + [t.name, repr(float(m)), repr(float(v))])


class MeanField:
    """Lazily evaluated, per-point cached posterior mean of a target.

    Used as a coefficient field: ``MeanField(model, extcfg)(X)`` returns the
    posterior mean of ``u`` at each row of ``X``.
    """

    def __init__(self, model: TrainedModel, extcfg=None, anchors=None, target=None, domain=None):
        self.model = model
        self.extcfg = extcfg
        self.domain = domain
        self.anchors = list(anchors or ())
        self.target = target or DerivativeTarget(MultiIndex.zero(model.dim))
        self._cache: dict[bytes, float] = {}

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        keys = [x.tobytes() for x in X]
        missing = [i for i, k in enumerate(keys) if k not in self._cache]
        if missing:
            uniq = {keys[i]: i for i in missing}
            pts = X[list(uniq.values())]
            vals = predict_field(self.model, [self.target], pts, self.extcfg, self.anchors, self.domain)[self.target].mean
            for k, v in zip(uniq, vals):
                self._cache[k] = float(v)
        return np.array([self._cache[k] for k in keys])
