"""Running scenarios: fit each method, score it against the truth, sweep settings."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..gpr import Dataset, NoiseConfig, TrainingConfig, train
from ..picard import PicardConfig, picard_solve
from ..predict import ExtendedSetConfig, predict_field
from .scenarios import Scenario

__all__ = [
    "Method",
    "RmseReport",
    "default_methods",
    "run_scenario",
    "run_seeds",
    "mean_reports",
    "sweep",
    "write_reports",
    "SWEEP_AXES",
    "van_der_pol_identification",
]

log = logging.getLogger(__name__)

SWEEP_AXES = ("step", "width", "sigma_r2", "n_obs")


@dataclass(frozen=True)
class Method:
    """``constrained=False`` is plain GPR; otherwise GPRC with the given slack.

    ``sigma_r2=None`` takes the scenario's value.  ``poe`` turns on the
    product-of-experts correction with the scenario anchors.
    """

    label: str
    constrained: bool = True
    sigma_r2: float | None = None
    poe: bool = False

    @classmethod
    def gpr(cls, poe: bool = False) -> "Method":
        return cls("GPR+PoE" if poe else "GPR", False, None, poe)

    @classmethod
    def gprc(cls, sigma_r2: float | None = None, poe: bool = False) -> "Method":
        label = "GPRC" if sigma_r2 is None else f"GPRC({sigma_r2:g})"
        return cls(label + ("+PoE" if poe else ""), True, sigma_r2, poe)


def default_methods(scenario: Scenario) -> list[Method]:
    if scenario.name == "linear_ode":
        return [Method.gpr(), Method.gprc(0.001), Method.gprc(0.1), Method.gprc(100.0), Method.gprc(0.1, poe=True)]
    return [Method.gpr(), Method.gprc(), Method.gprc(poe=True)]


@dataclass
class RmseReport:
    scenario: str
    method: str
    seed: int
    rmse: dict[str, float]
    residual_rmse: float
    nlml: float
    grid_hash: str
    truth_hash: str
    runtime: float = 0.0
    settings: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {"scenario": self.scenario, "method": self.method, "seed": self.seed}
        out.update(self.rmse)
        out["r"] = self.residual_rmse
        return out


def _hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()[:16]


def _fit(scenario: Scenario, method: Method, dataset: Dataset, training: TrainingConfig):
    noise = NoiseConfig(
        sigma_u2=scenario.noise_var,
        sigma_r2=scenario.sigma_r2 if method.sigma_r2 is None else method.sigma_r2,
        train_sigma_u2=scenario.train_sigma_u2,
    )
    if not method.constrained:
        return train(dataset, None, noise, training)
    if scenario.linear:
        return train(dataset, scenario.problem.linearize(None), noise, training)
    cfg = PicardConfig(
        eval_grid=scenario.eval_grid,
        max_iters=scenario.picard_iters,
        rmse_tol=-np.inf,
        training=training,
        domain=scenario.domain,
    )
    res = picard_solve(dataset, scenario.problem, scenario.extcfg, noise, cfg)
    if res.error is not None:
        raise res.error
    return res.last


def _score(scenario: Scenario, method: Method, model, seed: int, t0: float) -> RmseReport:
    grid = scenario.eval_grid
    targets = list(scenario.targets)
    for t in scenario.problem.residual_targets:
        if t not in targets:
            targets.append(t)
    anchors = scenario.anchors if method.poe else None
    extcfg = scenario.extcfg if method.constrained else None
    pred = predict_field(model, targets, grid, extcfg, anchors, scenario.domain)
    truth = scenario.truth(grid)
    rmse = {
        t.name: float(np.sqrt(np.mean((pred[t].mean - truth[t.derivative.orders]) ** 2)))
        for t in scenario.targets
    }
    derivs = {t.derivative.orders: pred[t].mean for t in targets}
    r = np.asarray(scenario.problem.true_residual(grid, derivs), dtype=float)
    return RmseReport(
        scenario=scenario.name,
        method=method.label,
        seed=seed,
        rmse=rmse,
        residual_rmse=float(np.sqrt(np.mean(r**2))),
        nlml=float(model.nlml_value),
        grid_hash=_hash(grid),
        truth_hash=_hash(*(truth[k] for k in sorted(truth))),
        runtime=time.perf_counter() - t0,
        settings={
            "n_obs": scenario.n_obs,
            "noise_var": scenario.noise_var,
            "sigma_r2": model.noise.sigma_r2 if method.constrained else None,
            "half_width": list(scenario.extcfg.half_width),
            "count": list(scenario.extcfg.count),
            "hp": model.hp.to_dict(),
        },
    )


def run_scenario(
    scenario: Scenario,
    methods: Sequence[Method] | None = None,
    seed: int | None = None,
    training: TrainingConfig | None = None,
) -> list[RmseReport]:
    """Sample one noisy dataset and score every method on it.

    Observation noise and training restarts both derive from ``seed``
    (default: the scenario seed), so a rerun reproduces every number.
    """
    seed = scenario.seed if seed is None else int(seed)
    methods = list(methods) if methods is not None else default_methods(scenario)
    X, y = scenario.sample(seed)
    dataset = Dataset(X, y)
    training = training or TrainingConfig(seed=seed)
    reports = []
    for m in methods:
        t0 = time.perf_counter()
        try:
            model = _fit(scenario, m, dataset, training)
            reports.append(_score(scenario, m, model, seed, t0))
        except Exception as exc:
            raise RuntimeError(f"scenario {scenario.name!r}, method {m.label!r}: {exc}") from exc
        log.info("%s %s seed %d: %s", scenario.name, m.label, seed, reports[-1].rmse)
    return reports


def run_seeds(scenario: Scenario, methods: Sequence[Method] | None, seeds: Iterable[int]) -> list[list[RmseReport]]:
    return [run_scenario(scenario, methods, s) for s in seeds]


def mean_reports(runs: Sequence[Sequence[RmseReport]]) -> dict[str, dict[str, float]]:
    """Per-method mean of each RMSE (and ``r``) across seeds."""
    acc: dict[str, list[dict]] = {}
    for run in runs:
        for rep in run:
            acc.setdefault(rep.method, []).append({**rep.rmse, "r": rep.residual_rmse})
    return {m: {k: float(np.mean([row[k] for row in rows])) for k in rows[0]} for m, rows in acc.items()}


def _step_of(ext: ExtendedSetConfig) -> float:
    c = ext.count[0]
    return 2 * ext.half_width[0] / (c - 1) if c > 1 else 2 * ext.half_width[0]


def _apply_axis(scenario: Scenario, axis: str, value) -> tuple[Scenario, Method | None]:
    if axis == "step":
        ext = ExtendedSetConfig.from_step(scenario.extcfg.half_width[0], float(value), scenario.dim)
        return scenario.with_overrides(extcfg=ext), None
    if axis == "width":
        ext = ExtendedSetConfig.from_step(float(value), _step_of(scenario.extcfg), scenario.dim)
        return scenario.with_overrides(extcfg=ext), None
    if axis == "sigma_r2":
        return scenario, Method.gprc(float(value))
    if axis == "n_obs":
        return scenario.with_overrides(n_obs=int(value)), None
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def sweep(
    scenario: Scenario,
    axis: str,
    values: Sequence,
    methods: Sequence[Method] | None = None,
    seed: int | None = None,
    path=None,
) -> list[dict]:
    """Rerun ``scenario`` for each value of ``axis`` with a fixed seed.

    For ``sigma_r2`` each value becomes its own GPRC method.  Other axes run
    ``methods`` (default: GPRC at the scenario slack).  Returns one row per
    (value, method) and writes them as CSV when ``path`` is given.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    rows = []
    for v in values:
        sc, m = _apply_axis(scenario, axis, v)
        ms = [m] if m is not None else list(methods or [Method.gprc()])
        for rep in run_scenario(sc, ms, seed):
            rows.append({"axis": axis, "value": v, **rep.row()})
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return rows


def write_reports(reports: Sequence[RmseReport], out_dir, stem: str = "rmse") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` with one row per report and a ``<stem>.json`` manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [r.row() for r in reports]
    keys = list(dict.fromkeys(k for r in rows for k in r))
    csv_path = out / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
    json_path = out / f"{stem}.json"
    json_path.write_text(json.dumps([asdict(r) for r in reports], indent=2))
    return csv_path, json_path


def van_der_pol_identification(
    scenario: Scenario,
    param_grid: Sequence[float] | None = None,
    n_design: int = 200,
):
    """Grid-search set-up for the damping parameter of a Van der Pol scenario."""
    from ..ident import ParamScenario
    from .scenarios import van_der_pol_problem

    if param_grid is None:
        param_grid = np.round(np.linspace(0.0, 1.0, 11), 10)
    X = scenario.observation_sites(scenario.n_obs)
    return ParamScenario(
        param_grid=np.asarray(param_grid, dtype=float),
        problem_of=van_der_pol_problem,
        design_points=ParamScenario.default_design_points(X, n_design),
        domain=scenario.domain,
        picard_iters=scenario.picard_iters,
    )
