"""Command-line entry point: ``gprc <subcommand> ...``.

Subcommands
-----------
fit         dataset CSV (+ operator JSON) -> model JSON
predict     model JSON + grid CSV + targets -> CSV of posterior means/variances
picard      Picard linearisation on a built-in nonlinear scenario
identify    parameter grid search on a built-in scenario -> loss CSV + JSON report
experiment  run the methods of a built-in scenario over seeds -> RMSE CSV + JSON
sweep       vary one setting of a built-in scenario -> CSV
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..gpr import Dataset, NoiseConfig, TrainedModel, TrainingConfig, train
from ..ident import identify
from ..operator import DerivativeTarget, operator_from_json
from ..picard import PicardConfig, picard_solve
from ..predict import ExtendedSetConfig, predict_field, write_field_csv
from .experiments import (
    SWEEP_AXES,
    Method,
    default_methods,
    mean_reports,
    run_scenario,
    sweep,
    van_der_pol_identification,
    write_reports,
)
from .scenarios import SCENARIOS, get_scenario

log = logging.getLogger("gprc")


def read_dataset(path) -> Dataset:
    """CSV with a header row, ``D`` location columns, then one observation column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header row and at least one data row")
    header, body = rows[0], rows[1:]
    try:
        float(header[0])
    except ValueError:
        pass
    else:
        raise ValueError(f"{path}: first row looks numeric; a header row is required")
    data = np.array([[float(v) for v in r] for r in body if r], dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError(f"{path}: expected at least one location column and one observation column")
    return Dataset(data[:, :-1], data[:, -1])


def read_grid(path) -> np.ndarray:
    """CSV with a header row and ``D`` location columns."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data


def parse_targets(text: str, dim: int) -> list[DerivativeTarget]:
    """``"u,1,2"`` in 1-D or ``"u;1,1;0,2"`` in general: orders per target."""
    parts = text.split(";") if (";" in text or dim > 1) else text.split(",")
    out = []
    for p in parts:
        p = p.strip()
        if p in ("u", ""):
            out.append(DerivativeTarget.of(*([0] * dim)))
            continue
        orders = [int(v) for v in p.replace("d", "").split(",")]
        if len(orders) != dim:
            raise ValueError(f"target {p!r} has {len(orders)} orders, data has {dim} dimensions")
        out.append(DerivativeTarget.of(*orders))
    return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args, cfg: dict):
    kwargs = dict(cfg.get("scenario", {}))
    ext = {k: kwargs.pop(k) for k in ("half_width", "count") if k in kwargs}
    n_picard = kwargs.pop("picard_iters", None)
    sc = get_scenario(args.name if hasattr(args, "name") else args.scenario, **kwargs)
    if args.sigma_r2 is not None:
        sc = sc.with_overrides(sigma_r2=args.sigma_r2)
    if ext:
        sc = sc.with_overrides(**ext)
    if n_picard is not None:
        sc = sc.with_overrides(picard_iters=int(n_picard))
    return sc.with_overrides(seed=args.seed)


def _training(args, cfg: dict) -> TrainingConfig:
    t = dict(cfg.get("training", {}))
    t.setdefault("seed", args.seed)
    return TrainingConfig(**t)


def cmd_fit(args, cfg):
    data = read_dataset(args.data)
    constraint = operator_from_json(args.operator) if args.operator else None
    noise = NoiseConfig(
        sigma_u2=cfg.get("sigma_u2", 0.01),
        sigma_r2=args.sigma_r2 if args.sigma_r2 is not None else cfg.get("sigma_r2", 0.1),
        train_sigma_u2=cfg.get("train_sigma_u2", True),
    )
    model = train(data, constraint, noise, _training(args, cfg))
    path = _out_dir(args) / "model.json"
    model.to_json(path)
    print(f"nlml {model.nlml_value:.6g}  converged {model.converged}  -> {path}")


def cmd_predict(args, cfg):
    model = TrainedModel.from_json(args.model)
    grid = read_grid(args.grid)
    targets = parse_targets(args.targets, model.dim)
    extcfg = None
    if not model.plain:
        ext = cfg.get("extended_set", {})
        hw = args.half_width if args.half_width is not None else ext.get("half_width", 3.0)
        ct = args.count if args.count is not None else ext.get("count", 60)
        extcfg = ExtendedSetConfig((hw,) * model.dim, (ct,) * model.dim)
    pred = predict_field(model, targets, grid, extcfg)
    path = _out_dir(args) / "prediction.csv"
    write_field_csv(path, grid, pred)
    print(f"{len(grid)} points x {len(targets)} targets -> {path}")


def cmd_picard(args, cfg):
    sc = _scenario(args, cfg)
    if sc.linear:
        raise SystemExit(f"scenario {sc.name!r} is linear; Picard iteration needs a nonlinear one")
    if args.data:
        data = read_dataset(args.data)
    else:
        data = Dataset(*sc.sample(args.seed))
    noise = NoiseConfig(sigma_u2=sc.noise_var, sigma_r2=sc.sigma_r2, train_sigma_u2=sc.train_sigma_u2)
    pc = PicardConfig(
        eval_grid=sc.eval_grid,
        max_iters=args.iters,
        rmse_tol=cfg.get("rmse_tol", 1e-4),
        training=_training(args, cfg),
        domain=sc.domain,
    )
    res = picard_solve(data, sc.problem, sc.extcfg, noise, pc)
    out = _out_dir(args)
    res.write_csv(out / "picard.csv")
    if res.models:
        res.last.to_json(out / "model.json", sample_at=sc.eval_grid)
    for h in res.history:
        print(f"iteration {h.iteration}: nlml {h.nlml:.6g}  residual RMSE {h.rmse:.6g}")
    if res.error is not None:
        print(f"stopped early: {res.error}", file=sys.stderr)
        return 1


def cmd_identify(args, cfg):
    sc = _scenario(args, cfg)
    if sc.name != "van_der_pol":
        raise SystemExit("identification is defined for the van_der_pol scenario")
    if args.n_obs is not None:
        sc = sc.with_overrides(n_obs=args.n_obs)
    grid = cfg.get("param_grid")
    ps = van_der_pol_identification(sc, grid)
    data = Dataset(*sc.sample(args.seed))
    noise = NoiseConfig(sigma_u2=sc.noise_var, sigma_r2=sc.sigma_r2, train_sigma_u2=sc.train_sigma_u2)
    curve = identify(data, ps, args.mode, sc.extcfg, noise, _training(args, cfg), refine=args.refine)
    curve.seeds["data"] = args.seed
    out = _out_dir(args)
    curve.write_csv(out / "loss.csv")
    curve.write_report(out / "identify.json")
    for m, v in zip(curve.mu, curve.loss):
        print(f"mu {m:.4g}  loss {v:.6g}")
    print(f"argmin mu = {curve.argmin_mu:g} ({args.mode})")


def _methods(args, sc):
    if args.methods is None:
        return default_methods(sc)
    out = []
    for tok in args.methods.split(","):
        tok = tok.strip()
        poe = tok.endswith("+poe")
        tok = tok.removesuffix("+poe")
        if tok == "gpr":
            out.append(Method.gpr(poe))
        elif tok == "gprc":
            out.append(Method.gprc(None, poe))
        elif tok.startswith("gprc:"):
            out.append(Method.gprc(float(tok[5:]), poe))
        else:
            raise SystemExit(f"unknown method {tok!r}; use gpr, gprc or gprc:<sigma_r2>, optionally +poe")
    return out


def cmd_experiment(args, cfg):
    sc = _scenario(args, cfg)
    methods = _methods(args, sc)
    seeds = [args.seed + k for k in range(args.repeats)]
    runs = [run_scenario(sc, methods, s) for s in seeds]
    out = _out_dir(args)
    write_reports([r for run in runs for r in run], out, stem=f"{sc.name}_rmse")
    means = mean_reports(runs)
    (out / f"{sc.name}_summary.json").write_text(json.dumps({"seeds": seeds, "mean_rmse": means}, indent=2))
    cols = list(next(iter(means.values())))
    print("method".ljust(16) + "".join(c.rjust(10) for c in cols))
    for m, row in means.items():
        print(m.ljust(16) + "".join(f"{row[c]:10.4g}" for c in cols))


def cmd_sweep(args, cfg):
    sc = _scenario(args, cfg)
    values = [float(v) for v in args.values.split(",")]
    if args.axis == "n_obs":
        values = [int(v) for v in values]
    methods = None if args.axis == "sigma_r2" else _methods(args, sc) if args.methods else None
    path = _out_dir(args) / f"{sc.name}_sweep_{args.axis}.csv"
    rows = sweep(sc, args.axis, values, methods, args.seed, path)
    for r in rows:
        print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    print(f"-> {path}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--sigma-r2", type=float, default=None, help="residual slack variance")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--config", default=None, help="JSON file of extra settings")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gprc", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit", parents=[common], help="train a model on a CSV dataset")
    s.add_argument("data", help="CSV: header, D location columns, one observation column")
    s.add_argument("--operator", help="operator JSON; omit for plain GPR")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", parents=[common], help="posterior of derivative targets on a grid")
    s.add_argument("model", help="model JSON written by fit")
    s.add_argument("grid", help="CSV: header, D location columns")
    s.add_argument("--targets", default="u", help='e.g. "u,1,2" (1-D) or "u;1,1;0,2"')
    s.add_argument("--half-width", type=float, default=None)
    s.add_argument("--count", type=int, default=None)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("picard", parents=[common], help="Picard iteration on a nonlinear scenario")
    s.add_argument("--scenario", default="van_der_pol", choices=sorted(SCENARIOS))
    s.add_argument("--data", default=None, help="CSV dataset (default: sample the scenario)")
    s.add_argument("--iters", type=int, default=3)
    s.set_defaults(func=cmd_picard)

    s = sub.add_parser("identify", parents=[common], help="grid search for a scenario parameter")
    s.add_argument("--scenario", default="van_der_pol", choices=sorted(SCENARIOS))
    s.add_argument("--mode", default="gprc", choices=("gprc", "gpr"))
    s.add_argument("--n-obs", type=int, default=None)
    s.add_argument("--refine", action="store_true", help="quadratic refinement of the grid argmin")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("experiment", parents=[common], help="RMSE table for a built-in scenario")
    s.add_argument("name", choices=sorted(SCENARIOS))
    s.add_argument("--repeats", type=int, default=1, help="number of consecutive seeds")
    s.add_argument("--methods", default=None, help="e.g. gpr,gprc:0.1,gprc:100+poe")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("sweep", parents=[common], help="vary one setting of a scenario")
    s.add_argument("name", choices=sorted(SCENARIOS))
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--methods", default=None)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = _load_config(args.config)
    try:
        return args.func(args, cfg) or 0
    except (ValueError, KeyError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
