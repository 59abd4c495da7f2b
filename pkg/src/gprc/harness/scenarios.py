"""Built-in experiment scenarios: a damped linear ODE, a 2-D Poisson problem
and the Van der Pol oscillator."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from ..operator import AffineConstraint, BuiltinField, DerivativeTarget, LinearOperator
from ..picard import NonlinearProblem
from ..predict import ExtendedSetConfig, IcbcAnchor
from .ode import ode_integrate

__all__ = [
    "Scenario",
    "SCENARIOS",
    "get_scenario",
    "linear_ode_scenario",
    "poisson_scenario",
    "van_der_pol_scenario",
    "van_der_pol_problem",
    "poisson_truth",
    "check_builtin_truths",
]

Derivs = Mapping[tuple[int, ...], np.ndarray]

# Interior observation sites for the Poisson example.  Fixed constants so that
# every run uses the same design.
POISSON_SITES = np.array(
    [
        [0.12, 0.15], [0.45, 0.08], [0.83, 0.18], [0.28, 0.35], [0.62, 0.30],
        [0.92, 0.45], [0.10, 0.55], [0.40, 0.52], [0.72, 0.62], [0.22, 0.78],
        [0.55, 0.75], [0.88, 0.85], [0.08, 0.92], [0.38, 0.95], [0.65, 0.90],
    ]
)


@dataclass
class Scenario:
    """Everything needed to generate data, fit and score one experiment.

    ``truth(X)`` returns a mapping from derivative orders to exact values at
    ``X`` for every target.  ``observation_sites(n)`` gives the sampling plan.
    """

    name: str
    dim: int
    truth: Callable[[np.ndarray], Derivs]
    problem: NonlinearProblem
    observation_sites: Callable[[int], np.ndarray]
    n_obs: int
    noise_var: float
    sigma_r2: float
    extcfg: ExtendedSetConfig
    eval_grid: np.ndarray
    targets: list[DerivativeTarget]
    anchors: tuple[IcbcAnchor, ...] = ()
    domain: tuple | None = None
    linear: bool = True
    picard_iters: int = 1
    train_sigma_u2: bool = False
    seed: int = 0
    constants: dict = field(default_factory=dict)

    def with_overrides(self, **kw) -> "Scenario":
        """Copy with fields replaced; ``half_width``/``count`` rebuild the extended set."""
        hw = kw.pop("half_width", None)
        ct = kw.pop("count", None)
        out = replace(self, **kw)
        if hw is not None or ct is not None:
            hw = self.extcfg.half_width if hw is None else tuple(np.broadcast_to(hw, (self.dim,)))
            ct = self.extcfg.count if ct is None else tuple(np.broadcast_to(ct, (self.dim,)))
            out = replace(out, extcfg=ExtendedSetConfig(hw, ct))
        return out

    def sample(self, seed: int | None = None):
        """Noisy observations ``(X, y)`` drawn with ``seed`` (default: scenario seed)."""
        rng = np.random.default_rng(self.seed if seed is None else seed)
        X = self.observation_sites(self.n_obs)
        zero = (0,) * self.dim
        u = self.truth(X)[zero]
        return X, u + rng.normal(0.0, np.sqrt(self.noise_var), size=u.shape)


# ----------------------------------------------------------------------------
# damped linear ODE  u'' + b u' + c u = 0


def linear_ode_solution(b: float, c: float, u0: float, du0: float):
    """Closed-form solution and its first two derivatives from the characteristic roots."""
    roots = np.roots([1.0, b, c]).astype(complex)
    s1, s2 = roots
    # u = A e^{s1 t} + B e^{s2 t}
    A = (du0 - s2 * u0) / (s1 - s2)
    B = u0 - A

    def sol(t):
        t = np.asarray(t, dtype=float)
        e1, e2 = np.exp(s1 * t), np.exp(s2 * t)
        return tuple(np.real(A * s1**k * e1 + B * s2**k * e2) for k in range(3))

    return sol


def linear_ode_scenario(
    b: float = 1.0,
    c: float = 3.0,
    t_end: float = 10.0,
    n_obs: int = 21,
    noise_var: float = 0.1,
    sigma_r2: float = 0.1,
) -> Scenario:
    u0, du0 = np.pi - 0.1, 0.0
    sol = ode_integrate(lambda t, u, du: -b * du - c * u, (u0, du0), (0.0, t_end), 1e-3)

    def truth(X):
        u, du, ddu = sol(np.atleast_2d(X)[:, 0])
        return {(0,): u, (1,): du, (2,): ddu}

    constraint = AffineConstraint(LinearOperator([(1.0, (2,)), (b, (1,)), (c, (0,))]))
    anchors = (
        IcbcAnchor((0.0,), u0, (0,)),
        IcbcAnchor((0.0,), du0, (1,)),
        IcbcAnchor((0.0,), -b * du0 - c * u0, (2,)),
    )
    return Scenario(
        name="linear_ode",
        dim=1,
        truth=truth,
        problem=NonlinearProblem.from_linear(constraint),
        observation_sites=lambda n: np.linspace(0.0, t_end, n)[:, None],
        n_obs=n_obs,
        noise_var=noise_var,
        sigma_r2=sigma_r2,
        extcfg=ExtendedSetConfig((3.0,), (60,)),
        eval_grid=np.linspace(0.0, t_end, 200)[:, None],
        targets=[DerivativeTarget.of(k) for k in range(3)],
        anchors=anchors,
        domain=((0.0,), (t_end,)),
        constants={"b": b, "c": c, "u0": u0, "du0": du0, "t_end": t_end},
    )


# ----------------------------------------------------------------------------
# Poisson  u_11 + u_22 = g on the unit square


def poisson_truth(X) -> dict:
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    e = np.exp(-x1)
    return {
        (0, 0): e * (x1 + x2**3),
        (1, 0): e * (1.0 - x1 - x2**3),
        (0, 1): 3.0 * x2**2 * e,
        (2, 0): e * (x1 - 2.0 + x2**3),
        (1, 1): -3.0 * x2**2 * e,
        (0, 2): 6.0 * x2 * e,
    }


def check_builtin_truths(tol: float = 1e-10) -> float:
    """Max Poisson residual of the analytic solution on a 20 x 20 grid."""
    g = np.linspace(0.0, 1.0, 20)
    X = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    d = poisson_truth(X)
    err = float(np.max(np.abs(d[(2, 0)] + d[(0, 2)] - BuiltinField("poisson_g")(X))))
    if err > tol:
        raise AssertionError(f"Poisson truth violates its equation by {err:.3g}")
    return err


def _boundary_anchors(n_per_edge: int = 401) -> tuple[IcbcAnchor, ...]:
    s = np.linspace(0.0, 1.0, n_per_edge)
    pts = np.unique(
        np.vstack(
            [
                np.c_[np.zeros_like(s), s],
                np.c_[np.ones_like(s), s],
                np.c_[s, np.zeros_like(s)],
                np.c_[s, np.ones_like(s)],
            ]
        ),
        axis=0,
    )
    d = poisson_truth(pts)
    out = [IcbcAnchor(tuple(p), float(v), (0, 0)) for p, v in zip(pts, d[(0, 0)])]
    out += [IcbcAnchor(tuple(p), float(v), (0, 2)) for p, v in zip(pts, d[(0, 2)])]
    return tuple(out)


def poisson_scenario(noise_var: float = 0.01, sigma_r2: float = 0.3, grid_n: int = 41) -> Scenario:
    check_builtin_truths()
    constraint = AffineConstraint(
        LinearOperator([(1.0, (2, 0)), (1.0, (0, 2))]), BuiltinField("poisson_g")
    )
    g = np.linspace(0.0, 1.0, grid_n)
    grid = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)

    def sites(n):
        if n > len(POISSON_SITES):
            raise ValueError(f"at most {len(POISSON_SITES)} fixed Poisson sites are available")
        return POISSON_SITES[:n].copy()

    return Scenario(
        name="poisson",
        dim=2,
        truth=poisson_truth,
        problem=NonlinearProblem.from_linear(constraint),
        observation_sites=sites,
        n_obs=15,
        noise_var=noise_var,
        sigma_r2=sigma_r2,
        extcfg=ExtendedSetConfig((0.33, 0.33), (5, 5)),
        eval_grid=grid,
        targets=[DerivativeTarget.of(0, 0), DerivativeTarget.of(1, 1), DerivativeTarget.of(0, 2)],
        anchors=_boundary_anchors(),
        domain=((0.0, 0.0), (1.0, 1.0)),
    )


# ----------------------------------------------------------------------------
# Van der Pol  u'' - mu (1 - u^2) u' + u = 0


def van_der_pol_problem(mu: float) -> NonlinearProblem:
    """Linearisation freezes the factor ``(1 - u^2)`` at the current mean ``u0``."""

    def linearize(u0):
        def damping(X):
            return -mu * (1.0 - u0(X) ** 2)

        return AffineConstraint(LinearOperator([(1.0, (2,)), (damping, (1,)), (1.0, (0,))]))

    def true_residual(X, d):
        return d[(2,)] - mu * (1.0 - d[(0,)] ** 2) * d[(1,)] + d[(0,)]

    return NonlinearProblem(linearize, true_residual, [DerivativeTarget.of(k) for k in range(3)])


def van_der_pol_scenario(
    mu: float = 0.5,
    t_end: float = 20.0,
    n_obs: int = 40,
    noise_var: float = 0.01,
    sigma_r2: float = 0.1,
) -> Scenario:
    u0, du0 = 2.0, 0.0
    sol = ode_integrate(lambda t, u, du: mu * (1 - u * u) * du - u, (u0, du0), (0.0, t_end), 1e-3)

    def truth(X):
        u, du, ddu = sol(np.atleast_2d(X)[:, 0])
        return {(0,): u, (1,): du, (2,): ddu}

    anchors = (
        IcbcAnchor((0.0,), u0, (0,)),
        IcbcAnchor((0.0,), du0, (1,)),
        IcbcAnchor((0.0,), mu * (1 - u0**2) * du0 - u0, (2,)),
    )
    return Scenario(
        name="van_der_pol",
        dim=1,
        truth=truth,
        problem=van_der_pol_problem(mu),
        observation_sites=lambda n: np.linspace(0.0, t_end, n)[:, None],
        n_obs=n_obs,
        noise_var=noise_var,
        sigma_r2=sigma_r2,
        extcfg=ExtendedSetConfig((0.2,), (4,)),
        eval_grid=np.linspace(0.0, t_end, 200)[:, None],
        targets=[DerivativeTarget.of(k) for k in range(3)],
        anchors=anchors,
        domain=((0.0,), (t_end,)),
        linear=False,
        picard_iters=1,
        constants={"mu": mu, "u0": u0, "du0": du0, "t_end": t_end},
    )


SCENARIOS: dict[str, Callable[..., Scenario]] = {
    "linear_ode": linear_ode_scenario,
    "poisson": poisson_scenario,
    "van_der_pol": van_der_pol_scenario,
}


def get_scenario(name: str, **kwargs) -> Scenario:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return factory(**kwargs)
