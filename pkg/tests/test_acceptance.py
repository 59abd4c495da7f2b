"""Acceptance criteria AC-1 .. AC-7.

Each test prints exactly one ``AC-k PASS`` or ``AC-k FAIL`` line with the
measured numbers, then asserts.  Tolerances are the stated ones; nothing here
is loosened to make a criterion pass.
"""
import time

import numpy as np
import pytest

from gprc.gpr import Dataset, NoiseConfig, TrainedModel, TrainingConfig, joint_targets, nlml, nlml_gradient
from gprc.harness.experiments import Method, mean_reports, run_scenario, van_der_pol_identification
from gprc.harness.scenarios import linear_ode_scenario, poisson_scenario, van_der_pol_scenario
from gprc.ident import identify
from gprc.kernel import KernelHyperparams, se_kernel_derivative
from gprc.operator import DerivativeTarget
from gprc.predict import EXPERT_VARIANCE_FLOOR, ExtendedSetConfig, IcbcAnchor, PosteriorGaussian, poe_correct, posterior

from oracles import dense_cov, dense_nlml
from test_gpr import LAPLACE, ODE
from test_kernel import _orders, mp_kernel_derivative
from test_predict import _oracle_posterior

pytestmark = pytest.mark.slow

SEEDS5 = range(5)
SEEDS3 = range(3)


def report(capsys, tag, checks, detail):
    ok = all(c for _, c in checks)
    failed = [name for name, c in checks if not c]
    line = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
    if failed:
        line += "  | failed: " + "; ".join(failed)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def fmt(row, keys):
    return " ".join(f"{k}={row[k]:.4g}" for k in keys)


# ---------------------------------------------------------------------------- linear ODE

@pytest.fixture(scope="module")
def ode_means():
    sc = linear_ode_scenario()
    methods = [Method.gpr(), Method.gprc(0.1), Method.gprc(100.0)]
    return mean_reports([run_scenario(sc, methods, s) for s in SEEDS5])


def test_ac1_linear_ode_ordering(ode_means, capsys):
    gpr, gprc = ode_means["GPR"], ode_means["GPRC(0.1)"]
    keys = ("u", "d1", "d2", "r")
    checks = [(f"GPRC {k} < GPR {k}", gprc[k] < gpr[k]) for k in keys]
    checks.append(("GPRC u'' <= 0.9", gprc["d2"] <= 0.9))
    checks.append(("GPR u'' >= 2.0", gpr["d2"] >= 2.0))
    report(capsys, "AC-1", checks, f"GPR[{fmt(gpr, keys)}] GPRC[{fmt(gprc, keys)}] (5 seeds)")


def test_ac2_large_slack_matches_gpr(ode_means, capsys):
    gpr, big = ode_means["GPR"]["d2"], ode_means["GPRC(100)"]["d2"]
    rel = abs(big - gpr) / gpr
    report(capsys, "AC-2", [("|u''(1e2) - u''(GPR)| <= 25%", rel <= 0.25)],
           f"u'' GPR={gpr:.4g} GPRC(1e2)={big:.4g} rel={rel:.3f}")


# ---------------------------------------------------------------------------- Poisson

def test_ac3_poisson(capsys):
    sc = poisson_scenario()
    t0 = time.perf_counter()
    # the constrained method carries the boundary values, as in the original setting
    runs = [run_scenario(sc, [Method.gpr(), Method.gprc(poe=True)], s) for s in SEEDS3]
    runtime = time.perf_counter() - t0
    m = mean_reports(runs)
    gpr, gprc = m["GPR"], m["GPRC+PoE"]
    keys = ("u", "d11", "d02")
    checks = [("GPRC u <= 0.03", gprc["u"] <= 0.03)]
    checks += [(f"GPRC {k} < GPR {k}", gprc[k] < gpr[k]) for k in keys]
    checks += [(f"{k} improvement >= 3x", gpr[k] >= 3 * gprc[k]) for k in ("d11", "d02")]
    checks.append(("runtime <= 300 s", runtime <= 300))
    report(capsys, "AC-3", checks, f"GPR[{fmt(gpr, keys)}] GPRC[{fmt(gprc, keys)}] {runtime:.0f}s (3 seeds)")


# ---------------------------------------------------------------------------- Van der Pol

def test_ac4_van_der_pol_residual(capsys):
    res = {}
    for nv in (0.10, 0.05, 0.01):
        sc = van_der_pol_scenario(noise_var=nv)
        res[nv] = float(np.mean([run_scenario(sc, [Method.gprc()], s)[0].residual_rmse for s in SEEDS5]))
    checks = [
        ("r(0.01) <= 0.02", res[0.01] <= 0.02),
        ("non-increasing in noise", res[0.10] >= res[0.05] >= res[0.01]),
    ]
    report(capsys, "AC-4", checks, " ".join(f"r({k:g})={v:.4g}" for k, v in res.items()) + " (5 seeds)")


def _argmin(mode, n_obs):
    sc = van_der_pol_scenario().with_overrides(n_obs=n_obs)
    ps = van_der_pol_identification(sc)
    data = Dataset(*sc.sample(0))
    noise = NoiseConfig(sc.noise_var, sc.sigma_r2, False)
    t0 = time.perf_counter()
    curve = identify(data, ps, mode, sc.extcfg, noise, TrainingConfig(seed=0))
    return curve.argmin_mu, time.perf_counter() - t0


def test_ac5_identification(capsys):
    gprc40, t_gprc = _argmin("gprc", 40)
    gpr400, _ = _argmin("gpr", 400)
    gpr40, _ = _argmin("gpr", 40)
    checks = [
        ("GPRC n=40 argmin in [0.35, 0.60]", 0.35 <= gprc40 <= 0.60),
        ("GPR n=400 argmin within 0.1 of 0.5", abs(gpr400 - 0.5) <= 0.1 + 1e-12),
        ("GPR n=40 argmin outside [0.4, 0.6]", not (0.4 <= gpr40 <= 0.6)),
        ("GPRC grid <= 900 s", t_gprc <= 900),
    ]
    report(capsys, "AC-5", checks,
           f"GPRC(40)={gprc40:g} GPR(400)={gpr400:g} GPR(40)={gpr40:g} GPRC time={t_gprc:.0f}s")


# ---------------------------------------------------------------------------- extended-set plateau

def test_ac6_step_plateau(capsys):
    base = linear_ode_scenario()
    means = {}
    for step in (0.1, 0.05):
        sc = base.with_overrides(extcfg=ExtendedSetConfig.from_step(3.0, step))
        means[step] = mean_reports([run_scenario(sc, [Method.gprc(0.1)], s) for s in SEEDS5])["GPRC(0.1)"]
    rel = {k: abs(means[0.05][k] - means[0.1][k]) / means[0.1][k] for k in ("u", "d1", "d2")}
    checks = [(f"{k} change < 5%", v < 0.05) for k, v in rel.items()]
    report(capsys, "AC-6", checks, " ".join(f"{k}:{v:.3%}" for k, v in rel.items()) + " (step 0.1 -> 0.05, 5 seeds)")


# ---------------------------------------------------------------------------- oracle suites

def test_ac7_oracle_suites(capsys):
    worst = {}

    # kernel derivatives against an mpmath finite-difference oracle, total order <= 4
    r = np.random.default_rng(7)
    err = 0.0
    for dim, hp in ((1, KernelHyperparams(1.2, (1.7,))), (2, KernelHyperparams(0.9, (0.6, 2.3)))):
        for a, b in _orders(dim):
            for _ in range(2):
                x, xp = r.uniform(-1, 1, dim), r.uniform(-1, 1, dim)
                ref = mp_kernel_derivative(a, b, x, xp, hp)
                got = se_kernel_derivative(a, b, x, xp, hp)
                err = max(err, abs(got - ref) / max(abs(ref), 1e-2))
    worst["kernel"] = err

    # NLML and posterior against dense Gaussian conditioning, n <= 5, m <= 4
    e_nlml = e_post = 0.0
    for con, dim in ((None, 1), (ODE, 1), (LAPLACE, 2)):
        for n in range(1, 6):
            rr = np.random.default_rng(10 * n + dim + (0 if con is None else 100))
            X = rr.uniform(0, 2, (n, dim))
            y = rr.normal(size=n)
            hp = KernelHyperparams(rr.uniform(0.5, 2), tuple(rr.uniform(0.3, 2, dim)))
            noise = NoiseConfig(rr.uniform(0.01, 0.3), rr.uniform(0.05, 0.5))
            Y = joint_targets(X, y, con)
            blocks = [(X, None)] if con is None else [(X, None), (X, con)]
            K = dense_cov(blocks, blocks, hp)
            K[np.diag_indices(len(Y))] += np.r_[np.full(n, noise.sigma_u2), np.full(len(Y) - n, noise.sigma_r2)]
            e_nlml = max(e_nlml, abs(nlml(X, Y, con, hp, noise) - dense_nlml(K, Y)))
            if con is None:
                continue
            model = TrainedModel.build(X, y, con, hp, noise)
            for m in range(5):
                chi = rr.uniform(0, 2, (m, dim))
                for orders in ((0,) * dim, (1,) + (0,) * (dim - 1), (0,) * (dim - 1) + (2,)):
                    t = DerivativeTarget.of(*orders)
                    x = rr.uniform(0, 2, dim)
                    got = posterior(model, t, x, chi)
                    mean, var = _oracle_posterior(model, t, x, chi)
                    e_post = max(e_post, abs(got.mean - mean), abs(got.variance - var))
    worst["nlml"], worst["posterior"] = e_nlml, e_post

    # analytic gradient against central differences
    e_grad = 0.0
    for seed in range(20):
        rr = np.random.default_rng(seed)
        dim = 1 + seed % 2
        con = ODE if dim == 1 else LAPLACE
        X = rr.uniform(0, 2, (3 + seed % 3, dim))
        Y = joint_targets(X, rr.normal(size=len(X)), con)
        hp = KernelHyperparams(rr.uniform(0.5, 2), tuple(rr.uniform(0.3, 2, dim)))
        su2 = rr.uniform(0.02, 0.3)
        _, grad = nlml_gradient(X, Y, con, hp, NoiseConfig(su2, 0.2, train_sigma_u2=True))
        theta = np.r_[np.log(hp.gamma_alpha), np.log(hp.lengthscales), np.log(su2)]

        def f(t):
            h = KernelHyperparams(np.exp(t[0]), tuple(np.exp(t[1 : 1 + dim])))
            return nlml(X, Y, con, h, NoiseConfig(np.exp(t[-1]), 0.2))

        for i in range(len(theta)):
            e = np.zeros_like(theta)
            e[i] = 1e-5
            fd = (f(theta + e) - f(theta - e)) / 2e-5
            e_grad = max(e_grad, abs(grad[i] - fd) / max(abs(fd), 1e-3))
    worst["gradient"] = e_grad

    # PoE variance never exceeds either expert
    bad = 0
    for case in range(100):
        rr = np.random.default_rng(1000 + case)
        hp = KernelHyperparams(rr.uniform(0.5, 2), tuple(rr.uniform(0.1, 3, 2)))
        base = PosteriorGaussian(rr.normal(), rr.uniform(1e-6, 3))
        anchor = IcbcAnchor(tuple(rr.uniform(0, 1, 2)), rr.normal())
        x = rr.uniform(0, 1, 2)
        sb = max(np.expm1(np.sum(np.asarray(hp.lengthscales) * (x - anchor.x0) ** 2)), EXPERT_VARIANCE_FLOOR)
        bad += poe_correct(base, anchor, x, hp).variance > min(base.variance, sb) * (1 + 1e-12)
    worst["poe_violations"] = bad

    checks = [
        ("kernel rel <= 1e-6", worst["kernel"] <= 1e-6),
        ("NLML abs <= 1e-8", worst["nlml"] <= 1e-8),
        ("posterior abs <= 1e-8", worst["posterior"] <= 1e-8),
        ("gradient rel <= 1e-5", worst["gradient"] <= 1e-5),
        ("PoE bound on 100 cases", bad == 0),
    ]
    report(capsys, "AC-7", checks, " ".join(f"{k}={v:.2g}" for k, v in worst.items()))
