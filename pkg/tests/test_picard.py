import csv
from dataclasses import replace

import numpy as np
import pytest

from gprc.gpr import Dataset, NoiseConfig, TrainingConfig, train
from gprc.operator import AffineConstraint, DerivativeTarget, FunctionField, LinearOperator
from gprc.picard import NonlinearProblem, PicardConfig, picard_solve, residual_rmse
from gprc.predict import ExtendedSetConfig, predict_field
from gprc.harness.scenarios import van_der_pol_problem, van_der_pol_scenario

ODE = AffineConstraint(LinearOperator([(1.0, (2,)), (1.0, (1,)), (3.0, (0,))]))
EXT = ExtendedSetConfig((1.0,), (9,))
NOISE = NoiseConfig(0.01, 0.1, train_sigma_u2=False)
TRAIN = TrainingConfig(restarts=3, seed=0)


@pytest.fixture(scope="module")
def ode_data():
    r = np.random.default_rng(0)
    t = np.linspace(0, 6, 15)
    # underdamped solution of u'' + u' + 3u = 0
    w = np.sqrt(3 - 0.25)
    u = np.exp(-t / 2) * (np.cos(w * t) + np.sin(w * t) / (2 * w))
    return Dataset(t[:, None], u + 0.1 * r.normal(size=t.size))


def test_linear_problem_stops_after_one_iteration(ode_data):
    grid = np.linspace(0, 6, 30)[:, None]
    res = picard_solve(ode_data, NonlinearProblem.from_linear(ODE), EXT, NOISE, PicardConfig(grid, max_iters=3, training=TRAIN))
    assert res.error is None
    assert len(res.history) == 2
    direct = train(ode_data, ODE, NOISE, TRAIN)
    assert res.models[1].hp == direct.hp
    assert res.models[1].nlml_value == direct.nlml_value


def test_linear_refit_reproduces_means(ode_data):
    # a second constrained fit seeded with the first optimum lands on the same posterior
    grid = np.linspace(0, 6, 30)[:, None]
    m1 = train(ode_data, ODE, NOISE, TRAIN)
    m2 = train(ode_data, ODE, NOISE, replace(TRAIN, extra_inits=(m1.hp,)))
    t = DerivativeTarget.of(0)
    a = predict_field(m1, [t], grid, EXT)[t].mean
    b = predict_field(m2, [t], grid, EXT)[t].mean
    assert np.max(np.abs(a - b)) <= 1e-6


@pytest.fixture(scope="module")
def vdp_run():
    sc = van_der_pol_scenario()
    X, y = sc.sample(0)
    grid = sc.eval_grid[::4]
    seen = []

    def linearize(u0):
        seen.append(u0)
        return sc.problem.linearize(u0)

    prob = NonlinearProblem(linearize, sc.problem.true_residual, sc.problem.residual_targets)
    cfg = PicardConfig(grid, max_iters=2, rmse_tol=-np.inf, training=TRAIN, domain=sc.domain)
    res = picard_solve(Dataset(X, y), prob, sc.extcfg, NOISE, cfg)
    return sc, res, seen, grid


def test_vdp_first_iteration_beats_gpr(vdp_run):
    _, res, _, _ = vdp_run
    assert res.error is None and len(res.history) == 3
    assert res.history[1].rmse < res.history[0].rmse


def test_best_iterate_selection(vdp_run):
    _, res, _, _ = vdp_run
    rm = [h.rmse for h in res.history]
    assert res.history[res.best_index].rmse == min(rm)
    model, history = res
    assert model is res.models[int(np.argmin(rm))]


def test_u0_is_previous_posterior_mean(vdp_run):
    sc, res, seen, grid = vdp_run
    t = DerivativeTarget.of(0)
    for k, u0 in enumerate(seen):
        ext = None if res.models[k].plain else sc.extcfg
        ref = predict_field(res.models[k], [t], grid, ext, domain=sc.domain)[t].mean
        np.testing.assert_allclose(u0(grid), ref, rtol=0, atol=1e-12)


def test_history_csv(vdp_run, tmp_path):
    _, res, _, _ = vdp_run
    res.write_csv(tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["iteration", "nlml", "residual_rmse"]
    assert [int(r[0]) for r in rows[1:]] == [0, 1, 2]
    assert float(rows[2][2]) == res.history[1].rmse


def test_residual_rmse_of_exact_linear_solution_is_small():
    # sanity: a well-fitted constrained model has small residual for its own equation
    t = np.linspace(0, 4, 25)
    data = Dataset(t[:, None], np.exp(-t / 2) * np.cos(np.sqrt(2.75) * t))
    m = train(data, ODE, NoiseConfig(1e-6, 1e-4, False), TRAIN)
    grid = np.linspace(0.5, 3.5, 10)[:, None]
    assert residual_rmse(m, NonlinearProblem.from_linear(ODE), grid, EXT) < 0.05


def test_training_failure_is_reported(ode_data):
    bad = AffineConstraint(LinearOperator([(1.0, (2,)), (FunctionField(lambda X: np.full(len(np.atleast_2d(X)), np.nan)), (0,))]))
    prob = NonlinearProblem(lambda u0: bad, lambda X, d: d[(2,)], [DerivativeTarget.of(2), DerivativeTarget.of(0)])
    res = picard_solve(ode_data, prob, EXT, NOISE, PicardConfig(ode_data.X, training=TRAIN))
    assert res.error is not None
    assert len(res.history) == 1 and len(res.models) == 1


def test_config_validation():
    with pytest.raises(ValueError):
        PicardConfig(np.empty((0, 1)))
    with pytest.raises(ValueError):
        PicardConfig(np.zeros((3, 1)), max_iters=0)


def test_vdp_linearisation_coefficient():
    prob = van_der_pol_problem(0.5)
    con = prob.linearize(FunctionField(lambda X: np.full(len(np.atleast_2d(X)), 2.0)))
    X = np.array([[0.0], [1.0]])
    coeffs = {t.derivative.orders: c for t, c in zip(con.operator.terms, con.operator.coefficients(X))}
    np.testing.assert_allclose(coeffs[(1,)], -0.5 * (1 - 4.0))
    np.testing.assert_allclose(coeffs[(2,)], 1.0)
