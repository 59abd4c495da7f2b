"""Recovering the damping parameter from data.

For each candidate mu we score how well a fit explains both the samples and
the equation.  With only 40 samples a plain regression fit is too rough in
its second derivative to locate mu; with 400 samples it is good enough.

    python demos/04_identify_damping.py
"""
import numpy as np

from gprc import Dataset, NoiseConfig, TrainingConfig, identify
from gprc.harness import van_der_pol_identification, van_der_pol_scenario


def curve(mode, n_obs):
    sc = van_der_pol_scenario().with_overrides(n_obs=n_obs)
    ps = van_der_pol_identification(sc)
    data = Dataset(*sc.sample(seed=0))
    noise = NoiseConfig(sc.noise_var, sc.sigma_r2, train_sigma_u2=False)
    return identify(data, ps, mode, sc.extcfg, noise, TrainingConfig(seed=0))


runs = {"GPR n=40": curve("gpr", 40), "GPR n=400": curve("gpr", 400), "GPRC n=40": curve("gprc", 40)}
mu = next(iter(runs.values())).mu
print("mu     " + "".join(f"{k:>12}" for k in runs))
for i, m in enumerate(mu):
    print(f"{m:5.2f}  " + "".join(f"{c.loss[i]:12.4g}" for c in runs.values()))
print("argmin " + "".join(f"{c.argmin_mu:12.2f}" for c in runs.values()))
print(f"true mu = 0.5; grid spacing {np.diff(mu)[0]:.2f}")
