"""Picard-style linearisation of nonlinear equations around the current GP mean.

Iteration 0 is plain GPR on the data.  Each later iteration freezes the
nonlinear factor at the previous posterior mean ``u0``, which turns the
equation into an affine constraint, and refits a constrained model.  Progress
is measured by the RMSE of the *true* nonlinear residual evaluated with the
posterior means of the required derivatives.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .gpr import Dataset, NoiseConfig, TrainedModel, TrainingConfig, train
from .operator import AffineConstraint, DerivativeTarget, Field, FunctionField
from .predict import ExtendedSetConfig, IcbcAnchor, MeanField, predict_field

__all__ = [
    "NonlinearProblem",
    "PicardConfig",
    "PicardStep",
    "PicardResult",
    "picard_solve",
    "residual_rmse",
]

log = logging.getLogger(__name__)


@dataclass
class NonlinearProblem:
    """A nonlinear equation together with its chosen linearisation.

    ``linearize(u0)`` receives the current mean field (a callable on
    ``(N, D)`` arrays) and returns the affine constraint obtained by freezing
    the nonlinear factor at ``u0``.  ``true_residual(X, derivs)`` evaluates the
    nonlinear residual from a mapping ``orders -> values at X`` covering every
    entry of ``residual_targets``.
    """

    linearize: Callable[[Field], AffineConstraint]
    true_residual: Callable[[np.ndarray, Mapping[tuple[int, ...], np.ndarray]], np.ndarray]
    residual_targets: Sequence[DerivativeTarget]

    @classmethod
    def from_linear(cls, constraint: AffineConstraint) -> "NonlinearProblem":
        """Wrap a linear equation; its linearisation ignores ``u0``."""
        targets = {t.derivative: DerivativeTarget(t.derivative) for t in constraint.operator.terms}
        return cls(lambda u0: constraint, lambda X, d: constraint.residual(d, X), list(targets.values()))


@dataclass(frozen=True)
class PicardConfig:
    eval_grid: np.ndarray
    max_iters: int = 3
    rmse_tol: float = 1e-4
    training: TrainingConfig = field(default_factory=TrainingConfig)
    domain: tuple | None = None
    anchors: tuple[IcbcAnchor, ...] = ()

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.eval_grid, dtype=float))
        if g.shape[0] == 0:
            raise ValueError("eval_grid must be nonempty")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        object.__setattr__(self, "eval_grid", g)


@dataclass(frozen=True)
class PicardStep:
    iteration: int
    nlml: float
    rmse: float


@dataclass
class PicardResult:
    """Outcome of :func:`picard_solve`.

    ``model`` is the iterate with the lowest true-residual RMSE; ``models``
    holds every iterate in order (index 0 is the plain GPR fit).  Unpacks as
    ``model, history``.
    """

    models: list[TrainedModel]
    history: list[PicardStep]
    error: Exception | None = None

    @property
    def best_index(self) -> int:
        return int(np.argmin([h.rmse for h in self.history]))

    @property
    def model(self) -> TrainedModel:
        return self.models[self.best_index]

    @property
    def last(self) -> TrainedModel:
        return self.models[-1]

    def __iter__(self):
        yield self.model
        yield self.history

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "nlml", "residual_rmse"])
            for h in self.history:
                w.writerow([h.iteration, repr(h.nlml), repr(h.rmse)])


def residual_rmse(model, problem: NonlinearProblem, grid, extcfg=None, domain=None, anchors=()) -> float:
    """RMSE of the nonlinear residual using posterior means on ``grid``."""
    grid = np.atleast_2d(grid)
    pred = predict_field(model, problem.residual_targets, grid, extcfg, anchors, domain)
    derivs = {t.derivative.orders: fp.mean for t, fp in pred.items()}
    r = np.asarray(problem.true_residual(grid, derivs), dtype=float)
    return float(np.sqrt(np.mean(r**2)))


def picard_solve(
    dataset: Dataset,
    problem: NonlinearProblem,
    extcfg: ExtendedSetConfig | None,
    noise: NoiseConfig,
    cfg: PicardConfig,
    *,
    initial_model: TrainedModel | None = None,
) -> PicardResult:
    """Alternate linearisation and constrained training.

    Stops after ``cfg.max_iters`` constrained fits, as soon as the residual
    RMSE improves by less than ``cfg.rmse_tol``, or when the linearisation
    returns the previous constraint unchanged (a linear equation).  A training failure stops the
    iteration; the result then carries the error and the history so far.
    ``initial_model`` replaces the iteration-0 GPR fit when given.
    """
    anchors = tuple(cfg.anchors)
    models: list[TrainedModel] = []
    history: list[PicardStep] = []
    try:
        m0 = initial_model or train(dataset, None, noise, cfg.training)
    except Exception as exc:  # noqa: BLE001 - reported through the result
        return PicardResult(models, history, exc)
    models.append(m0)
    history.append(PicardStep(0, m0.nlml_value, residual_rmse(m0, problem, cfg.eval_grid, extcfg, cfg.domain, anchors)))
    for k in range(1, cfg.max_iters + 1):
        prev = models[-1]
        u0 = MeanField(prev, extcfg, anchors, domain=cfg.domain)
        constraint = problem.linearize(FunctionField(u0, name=f"u_{k - 1}"))
        if constraint is prev.constraint:
            break  # linearisation no longer depends on u0; refitting would repeat prev
        tc = cfg.training
        if not prev.plain:
            tc = TrainingConfig(**{**tc.__dict__, "extra_inits": tc.extra_inits + (prev.hp,)})
        try:
            model = train(dataset, constraint, noise, tc)
            rmse = residual_rmse(model, problem, cfg.eval_grid, extcfg, cfg.domain, anchors)
        except Exception as exc:  # noqa: BLE001
            log.warning("Picard iteration %d failed: %s", k, exc)
            return PicardResult(models, history, exc)
        models.append(model)
        history.append(PicardStep(k, model.nlml_value, rmse))
        log.info("Picard iteration %d: residual RMSE %.4g", k, rmse)
        if history[-2].rmse - rmse < cfg.rmse_tol:
            break
    return PicardResult(models, history)
