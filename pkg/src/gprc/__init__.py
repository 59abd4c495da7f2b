"""Gaussian process regression constrained by linear differential equations."""
from .gpr import ConditioningError, Dataset, NoiseConfig, TrainedModel, TrainingConfig, nlml, train
from .ident import LossCurve, ParamScenario, identify, loss_at
from .kernel import KernelHyperparams, MultiIndex, se_kernel, se_kernel_derivative
from .operator import AffineConstraint, DerivativeTarget, LinearOperator, OperatorTerm
from .picard import NonlinearProblem, PicardConfig, PicardResult, picard_solve
from .predict import (
    ExtendedSetConfig,
    IcbcAnchor,
    MeanField,
    PosteriorGaussian,
    build_extended_set,
    poe_correct,
    posterior,
    predict_field,
)

__version__ = "0.1.0"

__all__ = [
    "AffineConstraint",
    "ConditioningError",
    "Dataset",
    "DerivativeTarget",
    "ExtendedSetConfig",
    "IcbcAnchor",
    "KernelHyperparams",
    "LinearOperator",
    "LossCurve",
    "MeanField",
    "MultiIndex",
    "NoiseConfig",
    "NonlinearProblem",
    "OperatorTerm",
    "ParamScenario",
    "PicardConfig",
    "PicardResult",
    "PosteriorGaussian",
    "TrainedModel",
    "TrainingConfig",
    "build_extended_set",
    "identify",
    "loss_at",
    "nlml",
    "picard_solve",
    "poe_correct",
    "posterior",
    "predict_field",
    "se_kernel",
    "se_kernel_derivative",
    "train",
]
