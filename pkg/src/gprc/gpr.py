"""Joint covariance over observations and residual constraints, NLML and training.

The training covariance is the 2n x 2n block matrix

    [[K_uu + s_u I,  K_ur        ],
     [K_ru,          K_rr + s_r I]]

over the values of ``u`` and of the residual ``r = L u`` at the training
inputs.  Residual "observations" are the rhs ``f(X)``.  Without a constraint
the pipeline reduces to ordinary GP regression on the n x n block.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import pdist

from .kernel import KernelHyperparams
from .operator import U, AffineConstraint, cov_matrix

__all__ = [
    "ConditioningError",
    "Dataset",
    "NoiseConfig",
    "TrainingConfig",
    "TrainedModel",
    "JITTER_LADDER",
    "robust_cholesky",
    "assemble_joint_covariance",
    "nlml",
    "nlml_gradient",
    "train",
    "default_sigma_r2",
]

log = logging.getLogger(__name__)

JITTER_LADDER = (1e-10, 1e-8, 1e-6)
MODEL_FORMAT_VERSION = 1


class ConditioningError(np.linalg.LinAlgError):
    """Cholesky factorisation failed for every jitter on the ladder."""


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one observation")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} observations")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        if np.unique(X, axis=0).shape[0] < X.shape[0]:
            warnings.warn("dataset contains duplicate input locations", stacklevel=3)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class NoiseConfig:
    """Observation noise variance and residual slack variance.

    ``sigma_u2`` is optimised during training when ``train_sigma_u2`` is set;
    ``sigma_r2`` is always held fixed.
    """

    sigma_u2: float = 0.01
    sigma_r2: float = 0.1
    train_sigma_u2: bool = True

    def __post_init__(self):
        if not self.sigma_u2 >= 0:
            raise ValueError(f"sigma_u2 must be nonnegative, got {self.sigma_u2}")
        if not self.sigma_r2 > 0:
            raise ValueError(f"sigma_r2 must be positive, got {self.sigma_r2}")

    def to_dict(self):
        return {
            "sigma_u2": self.sigma_u2,
            "sigma_r2": self.sigma_r2,
            "train_sigma_u2": self.train_sigma_u2,
        }


@dataclass(frozen=True)
class TrainingConfig:
    restarts: int = 8
    seed: int = 0
    max_iter: int = 500
    analytic_gradient: bool = True
    extra_inits: tuple[KernelHyperparams, ...] = ()
    min_sigma_u2: float = 1e-8


def robust_cholesky(K: np.ndarray, ladder: Sequence[float] = JITTER_LADDER):
    """Lower Cholesky factor of ``K``, escalating through ``K + j * mean(diag K) * I``
    for the jitters ``j`` on the ladder only if the plain factorisation fails.

    Returns ``(L, absolute_jitter)``.
    """
    scale = float(np.mean(np.diag(K))) if K.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    eye = np.eye(K.shape[0])
    for j in (0.0, *ladder):
        try:
            L = linalg.cholesky(K + j * scale * eye, lower=True, check_finite=True)
            return L, j * scale
        except (linalg.LinAlgError, ValueError):
            continue
    raise ConditioningError(f"Cholesky failed with relative jitter ladder {tuple(ladder)}")


def _kernel_blocks(X, constraint, hp, coeffs=None, dlog_lengthscale=None):
    """Noise-free joint covariance (n x n, or 2n x 2n with a constraint)."""
    kw = dict(dlog_lengthscale=dlog_lengthscale)
    Kuu = cov_matrix(X, U, X, U, hp, **kw)
    if constraint is None:
        return Kuu
    Kur = cov_matrix(X, U, X, constraint, hp, coeffs_b=coeffs, **kw)
    Krr = cov_matrix(X, constraint, X, constraint, hp, coeffs_a=coeffs, coeffs_b=coeffs, **kw)
    return np.block([[Kuu, Kur], [Kur.T, Krr]])


def _noise_diag(n, constraint, noise):
    d = np.full(n, noise.sigma_u2)
    if constraint is None:
        return d
    return np.concatenate([d, np.full(n, noise.sigma_r2)])


def assemble_joint_covariance(
    X: np.ndarray,
    constraint: AffineConstraint | None,
    hp: KernelHyperparams,
    noise: NoiseConfig,
    *,
    coeffs: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Joint prior covariance of ``[y; r(X)]`` including noise and slack.

    Jitter is not included; it is applied by :func:`robust_cholesky`.
    Passing ``constraint=None`` gives the plain-GPR n x n matrix.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = _kernel_blocks(X, constraint, hp, coeffs)
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] += _noise_diag(X.shape[0], constraint, noise)
    return K


def joint_targets(X, y, constraint) -> np.ndarray:
    """The stacked observation vector ``[y; f(X)]``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if constraint is None:
        return y
    return np.concatenate([y, constraint.rhs(np.atleast_2d(X))])


def _nlml_from_chol(L, Y):
    alpha = linalg.cho_solve((L, True), Y)
    return (
        np.sum(np.log(np.diag(L)))
        + 0.5 * float(Y @ alpha)
        + 0.5 * len(Y) * np.log(2 * np.pi)
    ), alpha


def nlml(X, yjoint, constraint, hp: KernelHyperparams, noise: NoiseConfig, *, coeffs=None) -> float:
    """Negative log marginal likelihood of the stacked targets.

    ``0.5 log det K + 0.5 Y^T K^-1 Y + (len(Y) / 2) log 2 pi``, via Cholesky.
    """
    K = assemble_joint_covariance(X, constraint, hp, noise, coeffs=coeffs)
    L, _ = robust_cholesky(K)
    return float(_nlml_from_chol(L, np.asarray(yjoint, dtype=float))[0])


def _unpack(theta, dim, noise: NoiseConfig):
    hp = KernelHyperparams(np.exp(theta[0]), tuple(np.exp(theta[1 : 1 + dim])))
    if noise.train_sigma_u2:
        noise = replace(noise, sigma_u2=float(np.exp(theta[1 + dim])))
    return hp, noise


def _pack(hp: KernelHyperparams, noise: NoiseConfig, min_sigma_u2=1e-8):
    theta = [np.log(hp.gamma_alpha), *np.log(hp.lengthscales)]
    if noise.train_sigma_u2:
        theta.append(np.log(max(noise.sigma_u2, min_sigma_u2)))
    return np.array(theta)


def nlml_gradient(X, yjoint, constraint, hp, noise, *, coeffs=None):
    """NLML and its gradient with respect to the log-parameters.

    The parameter order is ``log gamma_alpha``, ``log lengthscales[d]`` for
    every d, then ``log sigma_u2`` if it is trainable.  Uses
    ``dNLML = 0.5 tr(K^-1 dK) - 0.5 a^T dK a`` with ``a = K^-1 Y``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(yjoint, dtype=float)
    n, D = X.shape
    Kk = _kernel_blocks(X, constraint, hp, coeffs)
    Kk = 0.5 * (Kk + Kk.T)
    K = Kk.copy()
    K[np.diag_indices_from(K)] += _noise_diag(n, constraint, noise)
    L, _ = robust_cholesky(K)
    value, a = _nlml_from_chol(L, Y)
    Kinv = linalg.cho_solve((L, True), np.eye(K.shape[0]))
    W = Kinv - np.outer(a, a)

    def g(dK):
        return 0.5 * float(np.sum(W * dK))

    grads = [g(2.0 * Kk)]
    for d in range(D):
        dK = _kernel_blocks(X, constraint, hp, coeffs, dlog_lengthscale=d)
        grads.append(g(0.5 * (dK + dK.T)))
    if noise.train_sigma_u2:
        grads.append(0.5 * noise.sigma_u2 * float(np.sum(np.diag(W)[:n])))
    return float(value), np.array(grads)


@dataclass
class TrainedModel:
    """Optimised hyperparameters plus the factorised training covariance.

    ``constraint`` is ``None`` for a plain GPR model.
    """

    hp: KernelHyperparams
    noise: NoiseConfig
    constraint: AffineConstraint | None
    X: np.ndarray
    y: np.ndarray
    yjoint: np.ndarray
    chol: np.ndarray
    nlml_value: float
    converged: bool = True
    coeffs: list[np.ndarray] | None = field(default=None, repr=False)

    @cached_property
    def u_block(self) -> np.ndarray:
        """``K_uu + sigma_u2 I`` over the training inputs."""
        K = cov_matrix(self.X, U, self.X, U, self.hp)
        K = 0.5 * (K + K.T)
        K[np.diag_indices_from(K)] += self.noise.sigma_u2
        return K

    @property
    def plain(self) -> bool:
        return self.constraint is None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @classmethod
    def build(cls, X, y, constraint, hp, noise, converged=True) -> "TrainedModel":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        coeffs = constraint.operator.coefficients(X) if constraint is not None else None
        K = assemble_joint_covariance(X, constraint, hp, noise, coeffs=coeffs)
        L, _ = robust_cholesky(K)
        Y = joint_targets(X, y, constraint)
        value, _ = _nlml_from_chol(L, Y)
        return cls(hp, noise, constraint, X, np.asarray(y, float), Y, L, float(value), converged, coeffs)

    def to_dict(self, sample_at: np.ndarray | None = None) -> dict:
        pts = self.X if sample_at is None else np.vstack([self.X, np.atleast_2d(sample_at)])
        return {
            "format": "gprc-model",
            "version": MODEL_FORMAT_VERSION,
            "hyperparameters": self.hp.to_dict(),
            "noise": self.noise.to_dict(),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "constraint": None if self.constraint is None else self.constraint.to_dict(pts),
            "nlml": self.nlml_value,
            "converged": self.converged,
        }

    def to_json(self, path=None, sample_at=None) -> str:
        text = json.dumps(self.to_dict(sample_at), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d: dict, *, verify_tol: float = 1e-6) -> "TrainedModel":
        if d.get("format") != "gprc-model":
            raise ValueError("not a model document")
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        constraint = None if d["constraint"] is None else AffineConstraint.from_dict(d["constraint"])
        model = cls.build(
            d["X"],
            d["y"],
            constraint,
            KernelHyperparams.from_dict(d["hyperparameters"]),
            NoiseConfig(**d["noise"]),
            converged=d.get("converged", True),
        )
        stored = float(d["nlml"])
        if abs(model.nlml_value - stored) > verify_tol * max(1.0, abs(stored)):
            raise ValueError(
                f"rebuilt model NLML {model.nlml_value!r} does not match stored {stored!r}"
            )
        return model

    @classmethod
    def from_json(cls, text_or_path: str) -> "TrainedModel":
        text = text_or_path
        if not text_or_path.lstrip().startswith("{"):
            with open(text_or_path) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def _initialisations(dataset: Dataset, noise: NoiseConfig, config: TrainingConfig):
    rng = np.random.default_rng(config.seed)
    X, y = dataset.X, dataset.y
    std = float(np.std(y)) if dataset.n > 1 else float(abs(y[0]))
    std = std if std > 0 else 1.0
    med = []
    for d in range(dataset.dim):
        dist = pdist(X[:, d : d + 1]) if dataset.n > 1 else np.array([])
        dist = dist[dist > 0]
        med.append(float(np.median(dist)) if dist.size else 1.0)
    med = np.array(med)
    inits = []
    for _ in range(config.restarts):
        ls = 10.0 ** rng.uniform(-2, 2, size=dataset.dim) / med**2
        hp = KernelHyperparams(std, tuple(ls))
        nz = replace(noise, sigma_u2=0.1 * std**2) if noise.train_sigma_u2 else noise
        inits.append((hp, nz))
    for hp in config.extra_inits:
        inits.append((hp, noise))
    bounds = [(np.log(std) - np.log(1e3), np.log(std) + np.log(1e3))]
    bounds += [(np.log(1e-4 / m**2), np.log(1e4 / m**2)) for m in med]
    if noise.train_sigma_u2:
        bounds.append((np.log(config.min_sigma_u2), np.log(10 * std**2)))
    return inits, bounds


def train(
    dataset: Dataset,
    constraint: AffineConstraint | None,
    noise_init: NoiseConfig,
    config: TrainingConfig | None = None,
) -> TrainedModel:
    """Fit kernel hyperparameters (and optionally ``sigma_u2``) by L-BFGS.

    Runs ``config.restarts`` seeded random initialisations plus any
    ``extra_inits`` and returns the model with the lowest NLML.  If the best
    run did not report convergence, ``converged`` is False on the result.
    """
    config = config or TrainingConfig()
    X, y = dataset.X, dataset.y
    if constraint is not None and constraint.dim != dataset.dim:
        raise ValueError(f"constraint dimension {constraint.dim} != data dimension {dataset.dim}")
    coeffs = constraint.operator.coefficients(X) if constraint is not None else None
    Y = joint_targets(X, y, constraint)
    D = dataset.dim
    inits, bounds = _initialisations(dataset, noise_init, config)

    def objective(theta):
        hp, nz = _unpack(theta, D, noise_init)
        try:
            if config.analytic_gradient:
                return nlml_gradient(X, Y, constraint, hp, nz, coeffs=coeffs)
            return nlml(X, Y, constraint, hp, nz, coeffs=coeffs)
        except (ConditioningError, FloatingPointError):
            if config.analytic_gradient:
                return 1e25, np.zeros_like(theta)
            return 1e25

    best = None
    for hp0, nz0 in inits:
        theta0 = np.clip(_pack(hp0, nz0, config.min_sigma_u2), [b[0] for b in bounds], [b[1] for b in bounds])
        start = objective(theta0)
        start = start[0] if config.analytic_gradient else start
        res = optimize.minimize(
            objective,
            theta0,
            jac=config.analytic_gradient,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": config.max_iter},
        )
        val = float(res.fun)
        if not np.isfinite(val) or val >= 1e25:
            continue
        if val > start:
            res.x, val = theta0, start
        log.debug("restart from %s -> nlml %.6g (%s)", hp0, val, res.message)
        if best is None or val < best[0]:
            best = (val, res.x, bool(res.success))
    if best is None:
        raise ConditioningError("every training restart failed to factorise the covariance")
    hp, nz = _unpack(best[1], D, noise_init)
    model = TrainedModel.build(X, y, constraint, hp, nz, converged=best[2])
    if not model.converged:
        log.warning("L-BFGS did not report convergence for the best restart")
    return model


def default_sigma_r2(dataset: Dataset, config: TrainingConfig | None = None, factor: float = 10.0) -> float:
    """Slack variance set to ``factor`` times the noise variance of a plain GPR fit."""
    model = train(dataset, None, NoiseConfig(train_sigma_u2=True), config)
    return factor * max(model.noise.sigma_u2, 1e-8)
