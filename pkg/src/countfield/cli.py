"""Command-line entry point.

Subcommands wire the library to files: ``simulate``, ``fit``, ``predict``,
``crossval``, ``study`` and ``corr-table``.  CSVs carry a header row with
coordinates in columns x, y (optional t); JSON holds structured
configuration and results.  Outputs are written atomically (temp file +
rename).  Exit codes: 1 usage, 2 data, 3 numerical failure,
4 non-convergence.
"""

import argparse
import json
import math
import os
import sys
import tempfile
import time

import numpy as np
import pandas as pd

from .correlation import (
    CorrelationModel,
    LgParams,
    rho_poisson_gc,
    rho_poisson_lg,
    rho_poisson_stationary,
    underlying_from_distance,
)
from .errors import (
    CountFieldError,
    DataError,
    NonConvergenceError,
    NoPairsError,
    NumericalError,
    SeriesTruncationError,
)
from .estimate import (
    FieldData,
    FitConfig,
    FitResult,
    OptimizerConfig,
    PairWeights,
    ParameterVector,
    bootstrap_std_errors,
    fit_by_method,
)
from .locations import LocationSet, perturbed_grid
from .models import PoissonFieldModel, ZipFieldModel
from .predict import crossval_rmse, linear_predict
from .rng import SeedSpec
from .simulate import simulate_poisson_field, simulate_zip_field
from .specfun import SeriesControl
from .study import StudySpec, run_study

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_NONCONVERGENCE = 4

_COORD_COLS = ("x", "y", "t")
_METHOD_FLAGS = {
    "poisson-wpl": "poisson_wpl",
    "gaussian-wpl": "gaussian_wpl",
    "gaussian-ml": "gaussian_ml",
    "zip-wpl": "zip_wpl",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_frame(path, frame):
    _atomic_write(path, frame.to_csv(index=False, lineterminator="\n"))


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {path}: {exc}") from exc


def _read_table(path):
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    except Exception as exc:
        raise DataError(f"could not parse CSV {path}: {exc}") from exc
    if "x" not in frame.columns:
        raise DataError(f"{path} lacks an 'x' coordinate column")
    return frame


def _locations_from_frame(frame):
    cols = ["x"] + (["y"] if "y" in frame.columns else [])
    coords = frame[cols].to_numpy(dtype=float)
    times = frame["t"].to_numpy(dtype=float) if "t" in frame.columns else None
    return LocationSet(coords, times)


def _covariate_columns(frame, config):
    explicit = config.get("covariates")
    if explicit is not None:
        missing = [c for c in explicit if c not in frame.columns]
        if missing:
            raise DataError(f"covariate columns missing from data: {missing}")
        return list(explicit)
    return [c for c in frame.columns if c not in _COORD_COLS and c != "count"]


def _design_matrix(frame, columns):
    n = frame.shape[0]
    if not columns:
        return np.ones((n, 1))
    return np.column_stack([np.ones(n), frame[columns].to_numpy(dtype=float)])


def _field_data(frame, config):
    if "count" not in frame.columns:
        raise DataError("data CSV lacks a 'count' column")
    cols = _covariate_columns(frame, config)
    locs = _locations_from_frame(frame)
    counts = frame["count"].to_numpy()
    return FieldData(locs, counts, _design_matrix(frame, cols)), cols


def _weights_from_config(config):
    w = config.get("weights")
    if not w or "xi_s" not in w:
        raise DataError("config must define weights.xi_s")
    xi_t = w.get("xi_t")
    return PairWeights(float(w["xi_s"]), None if xi_t is None else float(xi_t))


def _fit_config(config, family):
    opt = config.get("optimizer", {})
    ser = config.get("series", {})
    return FitConfig(
        family=family,
        fixed=tuple(config.get("fixed", ("nugget",))),
        optimizer=OptimizerConfig(**opt) if opt else OptimizerConfig(),
        ctrl=SeriesControl(**ser) if ser else None,
        t=float(config.get("t", 1.0)),
    )


def _model_from_json(spec, design):
    corr = CorrelationModel.from_dict(spec["corr"])
    base = PoissonFieldModel(
        np.asarray(spec["beta"], dtype=float), design, corr, float(spec.get("t", 1.0))
    )
    if spec.get("type") == "zip":
        corr_b = CorrelationModel.from_dict(spec["corr_b"])
        return ZipFieldModel(base, float(spec["theta"]), corr_b)
    return base


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(args):
    spec = _load_json(args.model)
    seed = SeedSpec(args.seed)
    if args.locs == "grid":
        grid = spec.get("grid", {})
        locs = perturbed_grid(
            int(grid.get("n_per_side", 15)),
            float(grid.get("spacing", 0.05)),
            float(grid.get("jitter", 0.015)),
            seed.child("locs"),
        )
        n_cov = int(spec.get("n_covariates", 0))
        if n_cov > 0:
            u = seed.generator("cov").uniform(0.0, 1.0, size=(len(locs), n_cov))
            design = np.column_stack([np.ones(len(locs)), u])
            cov_names = [f"u{i+1}" for i in range(n_cov)]
        else:
            design = np.ones((len(locs), 1))
            cov_names = []
        cov_values = design[:, 1:]
    else:
        frame = _read_table(args.locs)
        locs = _locations_from_frame(frame)
        cov_names = _covariate_columns(frame, spec)
        design = _design_matrix(frame, cov_names)
        cov_values = design[:, 1:]
    model = _model_from_json(spec, design)
    if isinstance(model, ZipFieldModel):
        counts = simulate_zip_field(model, locs, seed.child("field"))
    else:
        counts = simulate_poisson_field(model, locs, seed.child("field"))
    out = {"x": locs.coords[:, 0]}
    if locs.coords.shape[1] > 1:
        out["y"] = locs.coords[:, 1]
    if locs.has_time:
        out["t"] = locs.times
    out["count"] = counts
    for k, name in enumerate(cov_names):
        out[name] = cov_values[:, k]
    _write_frame(args.out, pd.DataFrame(out))
    sidecar = {
        "model": spec,
        "seed": args.seed,
        "n_sites": len(locs),
        "covariate_columns": cov_names,
    }
    _write_json(args.out + ".meta.json", sidecar)
    return [args.out, args.out + ".meta.json"]


def _cmd_fit(args):
    config = _load_json(args.config) if args.config else {}
    frame = _read_table(args.data)
    data, cov_names = _field_data(frame, config)
    method = _METHOD_FLAGS[args.method]
    family = config.get("family", "gw4")
    fit_cfg = _fit_config(config, family)
    init = (
        ParameterVector.from_dict(config["init"]) if config.get("init") else None
    )
    weights = _weights_from_config(config) if method != "gaussian_ml" else (
        _weights_from_config(config) if config.get("weights") else None
    )
    fit = fit_by_method(method, data, weights, init=init, config=fit_cfg)
    fit.covariate_columns = cov_names
    boot = config.get("bootstrap")
    if boot:
        fit.std_errors = bootstrap_std_errors(
            fit,
            data,
            weights if weights is not None else PairWeights(1e9),
            int(boot.get("B", 100)),
            SeedSpec(int(boot.get("seed", 0))),
            config=fit_cfg,
        )
    _write_json(args.out, fit.to_dict())
    if not fit.converged:
        raise NonConvergenceError(f"{method} did not converge (result written to {args.out})")
    return [args.out]


def _cmd_predict(args):
    fit = FitResult.from_dict(_load_json(args.fit))
    data_frame = _read_table(args.data)
    config = {"covariates": fit.covariate_columns or []}
    data, _ = _field_data(data_frame, config)
    target_frame = _read_table(args.targets)
    targets = _locations_from_frame(target_frame)
    t_design = _design_matrix(target_frame, config["covariates"]) if config["covariates"] else None
    if t_design is None and (fit.covariate_columns or []) == []:
        t_design = np.ones((len(targets), 1))
    model = fit.field_model(data.covariates)
    res = linear_predict(
        model, data, targets, target_covariates=t_design, clamp_nonnegative=args.clamp
    )
    out = {"x": targets.coords[:, 0]}
    if targets.coords.shape[1] > 1:
        out["y"] = targets.coords[:, 1]
    if targets.has_time:
        out["t"] = targets.times
    out["predicted"] = res.predicted
    out["mse"] = res.mse
    _write_frame(args.out, pd.DataFrame(out))
    return [args.out]


def _cmd_crossval(args):
    config = _load_json(args.config) if args.config else {}
    frame = _read_table(args.data)
    data, _ = _field_data(frame, config)
    method = config.get("method", "poisson_wpl")
    weights = _weights_from_config(config)
    fit_cfg = _fit_config(config, config.get("family", "gw4"))
    res = crossval_rmse(
        data,
        weights,
        split=args.split,
        repeats=args.repeats,
        seed=SeedSpec(args.seed),
        method=method,
        config=fit_cfg,
    )
    base = args.out
    _write_frame(
        base + ".csv",
        pd.DataFrame({"repeat": np.arange(res.rmse.shape[0]), "rmse": res.rmse}),
    )
    _write_json(
        base + ".json",
        {
            "method": method,
            "split": args.split,
            "repeats": args.repeats,
            "mean_rmse": res.mean_rmse,
            "n_failed": res.n_failed,
        },
    )
    return [base + ".csv", base + ".json"]


def _cmd_study(args):
    spec = StudySpec.from_dict(_load_json(args.spec))
    report = run_study(spec)
    d = report.to_dict()
    _write_json(args.out, d)
    rows = []
    for method, est in report.estimates.items():
        for r, row in enumerate(np.asarray(est)):
            rec = {"method": method, "replicate": r}
            rec.update({name: v for name, v in zip(report.param_names, row)})
            rows.append(rec)
    base, _ = os.path.splitext(args.out)
    _write_frame(base + "_replicates.csv", pd.DataFrame(rows))
    return [args.out, base + "_replicates.csv"]


def _parse_distances(text):
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise DataError(f"distances must be 'start:stop:step', got {text!r}") from exc
    if step <= 0 or stop < start:
        raise DataError("distances must satisfy step > 0 and stop >= start")
    return np.arange(start, stop + 0.5 * step, step)


def _cmd_corr_table(args):
    spec = _load_json(args.model)
    corr = CorrelationModel.from_dict(spec["corr"] if "corr" in spec else spec)
    lams = spec.get("lambda", 1.0)
    scalar_lam = np.ndim(lams) == 0
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    sig2 = np.broadcast_to(
        np.atleast_1d(np.asarray(spec.get("lg_sigma2", 0.1), dtype=float)), lams.shape
    )
    dists = _parse_distances(args.distances)
    gc_nodes = int(spec.get("gc_nodes", 96))
    rho_u = np.asarray(underlying_from_distance(corr, dists), dtype=float)
    frames = []
    for lam, s2 in zip(lams, sig2):
        lg = LgParams(mu=math.log(lam) - 0.5 * s2, sigma2=s2)
        block = {
            "distance": dists,
            "rho_underlying": rho_u,
            "rho_poisson": rho_poisson_stationary(rho_u, lam),
            "rho_lg": [
                rho_poisson_lg(r, lg, zero_lag=(d == 0.0))
                for r, d in zip(rho_u, dists)
            ],
            "rho_gc": [rho_poisson_gc(r, lam, gc_nodes) for r in rho_u],
        }
        if not scalar_lam:
            block = {"lambda": np.full(dists.shape, lam), **block}
        frames.append(pd.DataFrame(block))
    _write_frame(args.out, pd.concat(frames, ignore_index=True))
    return [args.out]


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="countfield", description=__doc__)
    p.add_argument("--threads", type=int, default=None, help="cap worker threads")
    p.add_argument("--log-json", default=None, help="append a JSON run record to this file")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a count field to CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--locs", default="grid", help="'grid' or a CSV of locations")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_simulate)

    f = sub.add_parser("fit", help="fit a model to observed counts")
    f.add_argument("--data", required=True)
    f.add_argument("--config", default=None)
    f.add_argument("--method", choices=sorted(_METHOD_FLAGS), default="poisson-wpl")
    f.add_argument("--out", required=True)
    f.set_defaults(fn=_cmd_fit)

    pr = sub.add_parser("predict", help="linear prediction at target sites")
    pr.add_argument("--fit", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--targets", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--clamp", action="store_true", help="clamp predictions at 0")
    pr.set_defaults(fn=_cmd_predict)

    c = sub.add_parser("crossval", help="repeated-split prediction RMSE")
    c.add_argument("--data", required=True)
    c.add_argument("--config", default=None)
    c.add_argument("--split", type=float, default=0.8)
    c.add_argument("--repeats", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="output base path (writes .csv and .json)")
    c.set_defaults(fn=_cmd_crossval)

    st = sub.add_parser("study", help="run a simulation study from a spec")
    st.add_argument("--spec", required=True)
    st.add_argument("--out", required=True)
    st.set_defaults(fn=_cmd_study)

    ct = sub.add_parser("corr-table", help="correlation curves as CSV")
    ct.add_argument("--model", required=True)
    ct.add_argument("--distances", required=True, help="start:stop:step")
    ct.add_argument("--out", required=True)
    ct.set_defaults(fn=_cmd_corr_table)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    if args.threads is not None:
        try:
            import numba

            numba.set_num_threads(max(1, args.threads))
        except (ImportError, ValueError):
            pass
    started = time.time()
    status = 0
    outputs = []
    try:
        outputs = args.fn(args)
    except (NumericalError, SeriesTruncationError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        status = EXIT_NUMERICAL
    except (NonConvergenceError,) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        status = EXIT_NONCONVERGENCE
    except (DataError, NoPairsError, KeyError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        status = EXIT_DATA
    except CountFieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_NUMERICAL
    if args.log_json:
        record = {
            "command": args.command,
            "argv": sys.argv[1:] if argv is None else list(argv),
            "elapsed_seconds": round(time.time() - started, 3),
            "outputs": outputs,
            "status": status,
        }
        with open(args.log_json, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
