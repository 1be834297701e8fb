"""Command-line entry point: ``srlasso fit|cv|simulate|report|rerun``.

Every artifact-producing command writes a ``manifest.json`` next to its
outputs. The manifest holds the merged configuration, so ``srlasso rerun``
can replay the run and reproduce its data files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from srlasso import __version__
from srlasso.data import DataError, destandardize, load_dataset
from srlasso.expand import ExpansionSpec
from srlasso.penalty import make_penalty
from srlasso.simulate import (
    FRAMEWORKS,
    POLY_TRUTHS,
    InterSimConfig,
    PolySimConfig,
    run_interaction_experiment,
    run_poly_experiment,
    summarize,
)
from srlasso.solver import SolverConfig
from srlasso.tuning import select_indices, cross_validate, tune_information_criterion

THREADS_ENV = "SRLASSO_THREADS"
MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad flag values or combinations; exit status 2."""


# ---------------------------------------------------------------- io helpers

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _frame_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


# ---------------------------------------------------------------- parsing helpers

def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def parse_select(text: str) -> dict:
    """``cv:k:r`` (r optional), ``bic`` or ``aic``."""
    low = text.lower()
    if low in ("bic", "aic"):
        return {"method": low.upper()}
    parts = low.split(":")
    if parts[0] != "cv" or len(parts) > 3:
        raise UsageError(f"--select must be cv:k:r, bic or aic, got {text!r}")
    try:
        k = int(parts[1]) if len(parts) > 1 and parts[1] else 10
        r = int(parts[2]) if len(parts) > 2 and parts[2] else 1
    except ValueError:
        raise UsageError(f"bad cv folds/repeats in {text!r}") from None
    if k < 2 or r < 1:
        raise UsageError("cv needs k >= 2 and r >= 1")
    return {"method": "cv", "k": k, "repeats": r}


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------- fit / cv

def _fit_config(args, command: str) -> dict:
    if args.scheme == "lasso" and args.gamma is not None:
        raise UsageError("--gamma cannot be combined with --scheme lasso")
    gammas = args.gamma if args.gamma is not None else ([0.0] if args.scheme == "lasso" else [0.5])
    if any(g < 0 for g in gammas):
        raise UsageError("--gamma values must be >= 0")
    try:
        ExpansionSpec.parse(args.expand)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    select = args.select if command == "fit" else f"cv:{args.folds}:{args.repeats}"
    parse_select(select)
    return {
        "data": str(Path(args.data).resolve()),
        "response": args.response,
        "family": args.family,
        "expand": args.expand,
        "scheme": args.scheme,
        "gamma": gammas,
        "select": select,
        "rule": args.rule,
        "seed": args.seed,
        "solver": {"n_lambda": args.n_lambda, "tol": args.tol},
    }


def _coef_table(fit, li, design) -> str:
    beta = fit.betas[li]
    raw, b_raw = destandardize(beta, fit.intercepts[li], design.params)
    group_of = design.column_group
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["term", "group", "coef_std", "coef_raw"])
    w.writerow(["(Intercept)", "", repr(float(fit.intercepts[li])), repr(float(b_raw))])
    names = design.column_names
    for j in np.flatnonzero(beta):
        w.writerow([names[j], design.groups[group_of[j]].group_id, repr(float(beta[j])), repr(float(raw[j]))])
    return buf.getvalue()


def run_fit(command: str, cfg: dict, out: Path) -> list[Path]:
    dataset = load_dataset(cfg["data"], cfg["response"], cfg["family"])
    spec = ExpansionSpec.parse(cfg["expand"])
    sel = parse_select(cfg["select"])
    solver = SolverConfig(n_lambda=cfg["solver"]["n_lambda"], tol=cfg["solver"]["tol"])
    written = []
    if sel["method"] == "cv":
        res = cross_validate(dataset, spec, cfg["scheme"], cfg["gamma"], k=sel["k"], repeats=sel["repeats"],
                             seed=cfg["seed"], config=solver)
        gi, li = select_indices(res, cfg["rule"])
        selection = {"method": "cv", "k": sel["k"], "repeats": sel["repeats"], "rule": cfg["rule"],
                     "gamma_index": gi, "lambda_index": li, "gamma": res.gammas[gi],
                     "lambda": float(res.lambdas[gi][li]),
                     "cv_loss": float(res.cv_loss[gi][li]), "cv_se": _finite(res.cv_se[gi][li])}
        cv_blob = res.to_dict()
        if command == "cv":
            path = out / "cv_surface.csv"
            _atomic_write(path, res.surface_csv())
            written.append(path)
            path = out / "cv.json"
            _atomic_write(path, _dump(cv_blob))
            written.append(path)
    else:
        res = tune_information_criterion(dataset, spec, cfg["scheme"], cfg["gamma"], sel["method"], config=solver)
        gi, li = res.chosen
        selection = {"method": sel["method"], "gamma_index": gi, "lambda_index": li, "gamma": res.gammas[gi],
                     "lambda": float(res.fits[gi].lambdas[li]), "criterion": float(res.values[gi][li]),
                     "values": res.to_dict()["values"][gi]}
    fit, design = res.fits[gi], res.designs[gi]
    model = fit.to_dict(design)
    model["penalty"] = make_penalty(design, cfg["scheme"], res.gammas[gi]).to_dict(float(fit.lambdas[li]))
    model["feature_names"] = list(design.feature_names)
    model["response"] = cfg["response"]
    model["selection"] = selection
    path = out / "model.json"
    _atomic_write(path, _dump(model))
    written.append(path)
    path = out / "coefficients.csv"
    _atomic_write(path, _coef_table(fit, li, design))
    written.append(path)
    return written


def _finite(x) -> Optional[float]:
    return float(x) if np.isfinite(x) else None


# ---------------------------------------------------------------- simulate / report

def _dataclass_kwargs(cls, raw: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names - {"kind", "frameworks", "b_values", "b"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return {k: v for k, v in raw.items() if k in names}


def _sim_config(args) -> dict:
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read --config: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("--config must hold a JSON object")
    flags = {k: v for k, v in vars(args).items() if v is not None}
    cfg = dict(file_cfg)
    if args.kind == "interactions":
        for key in ("n", "p", "s", "replicates", "n_test", "seed", "noise_sd", "k_folds", "gamma"):
            if key in flags:
                cfg[key] = flags[key]
        if "b" in flags:
            cfg["b_values"] = flags["b"]
        b_values = cfg.pop("b_values", None)
        b_file = cfg.pop("b", None)
        if b_values is None:
            b_values = b_file if b_file is not None else [0]
        cfg["b_values"] = [b_values] if isinstance(b_values, int) else list(b_values)
        if "frameworks" in flags:
            cfg["frameworks"] = flags["frameworks"]
        cfg["frameworks"] = list(cfg.get("frameworks", FRAMEWORKS))
        base = asdict(InterSimConfig(**_dataclass_kwargs(InterSimConfig, cfg)))
        base.pop("b")
        base["b_values"] = cfg["b_values"]
        base["frameworks"] = cfg["frameworks"]
        base["hierarchy_probs"] = list(base["hierarchy_probs"])
    else:
        for key in ("n", "noise_sd", "truth", "orders", "replicates", "eval_points", "seed", "tuning",
                    "gamma_grid", "k_folds", "cv_repeats"):
            if key in flags:
                cfg[key] = flags[key]
        base = asdict(PolySimConfig(**_dataclass_kwargs(PolySimConfig, cfg)))
        base["orders"] = list(base["orders"])
        if base["gamma_grid"] is not None:
            base["gamma_grid"] = list(base["gamma_grid"])
    base["kind"] = args.kind
    return base


def run_simulate(cfg: dict, out: Path, threads: int) -> list[Path]:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    try:
        if kind == "interactions":
            b_values = cfg.pop("b_values")
            frameworks = cfg.pop("frameworks")
            config = InterSimConfig(**{**cfg, "b": b_values[0], "hierarchy_probs": tuple(cfg["hierarchy_probs"])})
            for b in b_values:
                InterSimConfig(**{**cfg, "b": b, "hierarchy_probs": tuple(cfg["hierarchy_probs"])})
            result = run_interaction_experiment(config, frameworks, b_values, threads)
        else:
            result = run_poly_experiment(PolySimConfig(**cfg), threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    csv_path, json_path = out / "results.csv", out / "summary.json"
    _atomic_write(csv_path, _frame_csv(result.to_frame()))
    _atomic_write(json_path, _dump(result.summary()))
    return [csv_path, json_path]


def run_report(cfg: dict, out: Path) -> list[Path]:
    if not cfg["inputs"]:
        raise UsageError("report needs at least one input CSV")
    frames = []
    for path in cfg["inputs"]:
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.EmptyDataError) as exc:
            raise UsageError(f"cannot read {path}: {exc}") from None
        if "schema_version" not in frame:
            raise UsageError(f"{path} has no schema_version column")
        frames.append(frame)
    try:
        table = summarize(pd.concat(frames, ignore_index=True))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = out / "report.csv"
    _atomic_write(path, _frame_csv(table))
    return [path]


# ---------------------------------------------------------------- dispatch

def execute(command: str, cfg: dict, out: Path, threads: int = 1) -> dict:
    """Run ``command`` with a merged config, write its artifacts and the manifest."""
    out = Path(out)
    started = _now()
    if command in ("fit", "cv"):
        written = run_fit(command, cfg, out)
    elif command == "simulate":
        written = run_simulate(cfg, out, threads)
    elif command == "report":
        written = run_report(cfg, out)
    else:
        raise UsageError(f"unknown command {command!r}")
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "version": __version__,
        "started": started,
        "finished": _now(),
        "threads": threads,
        "outputs": [p.name for p in written],
    }
    _atomic_write(out / MANIFEST, _dump(manifest))
    return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srlasso", description="Sparsity-ranked lasso fitting and simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_flags(p):
        p.add_argument("--data", required=True, help="CSV with a header row")
        p.add_argument("--response", required=True, help="name of the response column")
        p.add_argument("--family", choices=("gaussian", "binomial"), default="gaussian")
        p.add_argument("--expand", default="none", help="none, interactions or poly:m")
        p.add_argument("--scheme", choices=("lasso", "srl", "cumulative"), default="srl")
        p.add_argument("--gamma", type=_float_list, default=None,
                       help="one value or a comma-separated grid (default 0.5)")
        p.add_argument("--rule", choices=("min", "one_se"), default="min")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--n-lambda", dest="n_lambda", type=int, default=100)
        p.add_argument("--tol", type=float, default=1e-7)
        p.add_argument("--out", required=True, help="output directory")

    p_fit = sub.add_parser("fit", help="fit a path and report the selected model")
    model_flags(p_fit)
    p_fit.add_argument("--select", default="cv:10:1", help="cv:k:r, bic or aic")

    p_cv = sub.add_parser("cv", help="cross-validate and write the loss surface")
    model_flags(p_cv)
    p_cv.add_argument("--folds", type=int, default=10)
    p_cv.add_argument("--repeats", type=int, default=1)

    p_sim = sub.add_parser("simulate", help="run a simulation study")
    sim_sub = p_sim.add_subparsers(dest="kind", required=True)
    for kind in ("interactions", "poly"):
        p = sim_sub.add_parser(kind)
        p.add_argument("--config", help="JSON file of settings; flags take precedence")
        p.add_argument("--replicates", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--noise-sd", dest="noise_sd", type=float)
        p.add_argument("--threads", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")
        p.add_argument("--out", required=True)
    p_int = sim_sub.choices["interactions"]
    p_int.add_argument("--b", type=_int_list, help="active interaction counts, e.g. 0,5,10")
    p_int.add_argument("--p", type=int)
    p_int.add_argument("--s", type=int)
    p_int.add_argument("--n-test", dest="n_test", type=int)
    p_int.add_argument("--k-folds", dest="k_folds", type=int)
    p_int.add_argument("--gamma", type=float)
    p_int.add_argument("--frameworks", type=lambda t: [x for x in t.split(",") if x])
    p_poly = sim_sub.choices["poly"]
    p_poly.add_argument("--truth", choices=POLY_TRUTHS)
    p_poly.add_argument("--orders", type=_int_list)
    p_poly.add_argument("--tuning", choices=("bic", "cv"))
    p_poly.add_argument("--gamma-grid", dest="gamma_grid", type=_float_list)
    p_poly.add_argument("--eval-points", dest="eval_points", type=int)
    p_poly.add_argument("--k-folds", dest="k_folds", type=int)
    p_poly.add_argument("--cv-repeats", dest="cv_repeats", type=int)

    p_rep = sub.add_parser("report", help="aggregate simulation CSVs to mean/SE long format")
    p_rep.add_argument("inputs", nargs="+")
    p_rep.add_argument("--out", required=True)

    p_rerun = sub.add_parser("rerun", help="replay a run from its manifest")
    p_rerun.add_argument("manifest")
    p_rerun.add_argument("--out", help="output directory (default: the manifest's own)")
    p_rerun.add_argument("--threads", type=int)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("fit", "cv"):
            execute(args.command, _fit_config(args, args.command), Path(args.out))
        elif args.command == "simulate":
            threads = args.threads if args.threads is not None else default_threads()
            execute("simulate", _sim_config(args), Path(args.out), threads)
        elif args.command == "report":
            execute("report", {"inputs": [str(Path(p).resolve()) for p in args.inputs]}, Path(args.out))
        else:
            path = Path(args.manifest)
            try:
                manifest = json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read manifest: {exc}") from None
            out = Path(args.out) if args.out else path.parent
            threads = args.threads if args.threads is not None else default_threads()
            execute(manifest["command"], manifest["config"], out, threads)
    except UsageError as exc:
        parser.exit(2, f"srlasso: error: {exc}\n")
    except (DataError, ValueError, OSError) as exc:
        print(f"srlasso: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
