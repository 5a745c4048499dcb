"""Command-line front end.

Subcommands ``simulate``, ``fit``, ``predict``, ``loadings`` and ``rolling``.
Every option can also come from a JSON document passed with ``--config``;
flags given on the command line win over the document, and unknown keys
are rejected.

Exit codes: 0 success, 1 malformed input or configuration, 2 estimation
failure, 3 solver non-convergence (artifacts are still written).
"""

import argparse
import dataclasses
import logging
import math
import os
import sys

import numpy as np

from . import io, sim
from .errors import ConvergenceError, EstimationError, FamarError
from .linalg import panel_to_rows, vec
from .mfm import KRONECKER, PROJECTION, MfmFit, ProjectionPair, fit_mfm, ols_coefficients
from .rotation import normalize_columns, varimax, varimax_criterion
from .solver import (
    NUCLEAR,
    SPARSE,
    RegressionData,
    RegressionFit,
    SolverConfig,
    apgd_nuclear,
    cross_validate,
    default_lambda_grid,
    fit_sparse,
    lambda_max_nuclear,
    lambda_max_sparse,
)

logger = logging.getLogger("famar")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ESTIMATION = 2
EXIT_NONCONVERGED = 3

FIT_METHODS = ("nuclear", "sparse", "baseline", "factors-only", "idio-only")
ROLLING_METHODS = {
    "nuclear": "famar",
    "factors-only": "factors_only",
    "idio-only": "idio_only",
    "baseline": "baseline_x",
}

DEFAULTS = {
    "seed": 0,
    "pretrain_frac": None,
    "pretrain": None,
    "k1": None,
    "k2": None,
    "method": "nuclear",
    "lambda": None,
    "lambda_grid": "auto",
    "folds": 5,
    "out": ".",
    "preset": None,
    "reps": None,
    "grid": None,
    "panel": None,
    "response": None,
    "fit": None,
    "no_rotate": False,
    "no_demean": False,
    "no_regression": False,
    "window": None,
    "pretrain_len": None,
    "max_iter": 5000,
    "epsilon": 1e-6,
    "cv_epsilon": None,
}

COMMAND_KEYS = {
    "simulate": {"seed", "preset", "reps", "grid", "out", "lambda_grid", "folds",
                 "no_regression", "max_iter", "epsilon", "cv_epsilon", "sim"},
    "fit": {"seed", "panel", "response", "pretrain_frac", "pretrain", "k1", "k2", "method",
            "lambda", "lambda_grid", "folds", "out", "no_demean", "max_iter", "epsilon"},
    "predict": {"fit", "panel", "response", "out"},
    "loadings": {"fit", "no_rotate", "out"},
    "rolling": {"seed", "panel", "response", "window", "pretrain_len", "k1", "k2", "method",
                "lambda_grid", "folds", "out", "max_iter", "epsilon", "cv_epsilon"},
}


class UsageError(FamarError, ValueError):
    """Bad command-line or configuration input."""


# ---------------------------------------------------------------------------
# option handling


def _parse_grid_spec(spec):
    """``auto[:NUM[:RATIO]]`` or comma-separated absolute penalty values.

    Returns ``("auto", num, ratio)`` or ``("values", array)``.
    """
    spec = str(spec).strip()
    if spec.startswith("auto"):
        parts = spec.split(":")
        if parts[0] != "auto" or len(parts) > 3:
            raise UsageError(f"bad lambda grid spec {spec!r}")
        try:
            num = int(parts[1]) if len(parts) > 1 else 20
            ratio = float(parts[2]) if len(parts) > 2 else 1e-4
        except ValueError:
            raise UsageError(f"bad lambda grid spec {spec!r}") from None
        if num < 1 or not 0 < ratio <= 1:
            raise UsageError(f"bad lambda grid spec {spec!r}")
        return ("auto", num, ratio)
    try:
        values = np.array([float(v) for v in spec.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"bad lambda grid spec {spec!r}") from None
    if values.size == 0 or np.any(~np.isfinite(values)) or np.any(values < 0):
        raise UsageError("lambda grid values must be finite and nonnegative")
    return ("values", values)


def _parse_int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None


def resolve_options(command, args):
    """Merge built-in defaults, the JSON config and explicit flags (in that order)."""
    allowed = COMMAND_KEYS[command]
    opts = {k: DEFAULTS.get(k) for k in allowed}
    if args.config:
        doc = io.read_json(args.config)
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        opts.update(doc)
    for key in allowed:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            opts[key] = value
    return opts


def _solver_config(opts):
    try:
        return SolverConfig(max_iter=int(opts["max_iter"]), epsilon=float(opts["epsilon"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _require(opts, *keys):
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


# ---------------------------------------------------------------------------
# simulate


def _write_normality(out, cfg, res):
    rows = []
    for name, ks, pv, std in (("r", res.r_ks, res.r_pvalue, res.r_std), ("c", res.c_ks, res.c_pvalue, res.c_std)):
        for (j, k), stat in np.ndenumerate(ks):
            rows.append((name, j, k, stat, pv[j, k], std[:, j, k].mean()))
    path = os.path.join(out, "normality.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("matrix,row,col,ks_statistic,p_value,standardized_mean\n")
        for name, j, k, stat, p, m in rows:
            fh.write(f"{name},{j},{k},{io.FLOAT_FMT % stat},{io.FLOAT_FMT % p},{io.FLOAT_FMT % m}\n")
    summary = {
        "schema_version": io.SCHEMA_VERSION,
        "preset": "normality",
        "config": cfg.to_dict(),
        "entries": len(rows),
        "ks_pass_rate_0.01": res.pass_rate(0.01),
        "mean_within_4_se_rate": res.mean_ok_rate(),
    }
    io.write_json(os.path.join(out, "summary.json"), summary)
    print(f"KS pass rate at level 0.01: {summary['ks_pass_rate_0.01']:.4f} over {len(rows)} entries")


def _sim_configs(opts):
    preset = opts.get("preset")
    seed = int(opts["seed"])
    reps = None if opts.get("reps") is None else int(opts["reps"])
    if opts.get("sim") is not None:
        doc = dict(opts["sim"])
        grid_field = doc.pop("sweep", None)
        values = doc.pop("values", None)
        try:
            base = sim.SimConfig(**{**doc, "seed": seed, **({"replications": reps} if reps else {})})
        except TypeError as exc:
            raise UsageError(f"invalid sim config: {exc}") from None
        if grid_field is None:
            return "custom", [base]
        if grid_field == "p":
            return "custom", [dataclasses.replace(base, p1=v, p2=v) for v in _parse_int_list(values)]
        if grid_field not in {f.name for f in dataclasses.fields(sim.SimConfig)}:
            raise UsageError(f"cannot sweep unknown field {grid_field!r}")
        return "custom", [dataclasses.replace(base, **{grid_field: v}) for v in _parse_int_list(values)]
    if preset is None:
        raise UsageError(f"--preset is required; valid presets: {', '.join(sim.PRESETS)}")
    if preset not in sim.PRESETS:
        raise UsageError(f"unknown preset {preset!r}; valid presets: {', '.join(sim.PRESETS)}")
    if preset == "normality":
        cfg = dataclasses.replace(sim.NORMALITY_CONFIG, seed=seed)
        if reps is not None:
            cfg = dataclasses.replace(cfg, replications=reps)
        return preset, [cfg]
    grid = _parse_int_list(opts["grid"]) if opts.get("grid") is not None else None
    return preset, sim.preset_grid(preset, seed=seed, reps=reps, grid=grid)


def cmd_simulate(opts):
    try:
        name, configs = _sim_configs(opts)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    if name == "normality":
        res = sim.normality_experiment(configs[0])
        _write_normality(out, configs[0], res)
        return EXIT_OK
    spec = None
    if not opts.get("no_regression"):
        grid = _parse_grid_spec(opts["lambda_grid"])
        if grid[0] != "auto":
            raise UsageError("simulate only accepts auto[:NUM[:RATIO]] lambda grids")
        spec = sim.RegressionSpec(
            folds=int(opts["folds"]), grid_size=grid[1], grid_ratio=grid[2],
            cv_epsilon=None if opts.get("cv_epsilon") is None else float(opts["cv_epsilon"]),
            solver=_solver_config(opts),
        )
    res = sim.run_setting(configs, spec)
    io.write_sim_rows(os.path.join(out, "results.csv"), res.rows)
    summary = {
        "schema_version": io.SCHEMA_VERSION,
        "preset": name,
        "configs": [c.to_dict() for c in configs],
        "regression": spec is not None,
        "aggregates": res.aggregates(),
    }
    io.write_json(os.path.join(out, "summary.json"), summary)
    failed = sum(r["failed"] for r in res.rows)
    print(f"{len(res.rows)} rows written to {os.path.join(out, 'results.csv')} ({failed} failed)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit / predict / loadings


def _load_training(opts):
    _require(opts, "panel", "response")
    panel = io.read_panel(opts["panel"])
    y = io.read_vector(opts["response"])
    if y.shape[0] != panel.shape[0]:
        raise io.InputError(f"panel has {panel.shape[0]} samples but response has {y.shape[0]}")
    if opts.get("pretrain") is not None:
        pre = io.read_panel(opts["pretrain"])
        return pre, panel, y
    if opts.get("pretrain_frac") is None:
        raise UsageError("need --pretrain-frac or a pretrain panel file")
    frac = float(opts["pretrain_frac"])
    if not 0 < frac < 1:
        raise UsageError("--pretrain-frac must lie strictly between 0 and 1")
    cut = int(math.floor(frac * panel.shape[0]))
    if cut < 1 or cut >= panel.shape[0]:
        raise UsageError(f"--pretrain-frac {frac} leaves an empty split of {panel.shape[0]} samples")
    return panel[:cut], panel[cut:], y[cut:]


def _select_lambda(data, opts, method, solver):
    if opts.get("lambda") is not None:
        lam = float(opts["lambda"])
        if not lam >= 0:
            raise UsageError("--lambda must be nonnegative")
        return lam, None
    grid = _parse_grid_spec(opts["lambda_grid"])
    if grid[0] == "auto":
        lam_max = lambda_max_nuclear(data) if method == NUCLEAR else lambda_max_sparse(data)
        values = default_lambda_grid(lam_max, grid[1], grid[2])
    else:
        values = grid[1]
    lam, curve = cross_validate(data, values, int(opts["folds"]), int(opts["seed"]), method, solver)
    return lam, {"grid": values.tolist(), "cv_mse": curve.tolist()}


def cmd_fit(opts):
    _require(opts, "k1", "k2")
    method = opts["method"]
    if method not in FIT_METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {', '.join(FIT_METHODS)}")
    k1, k2 = int(opts["k1"]), int(opts["k2"])
    solver = _solver_config(opts)
    demean = not opts.get("no_demean")
    pre, panel, y = _load_training(opts)
    y_mean = float(y.mean()) if demean else 0.0
    yc = y - y_mean

    u_mode = PROJECTION if method == "sparse" else KRONECKER
    mfm = fit_mfm(pre, panel, k1, k2, u_mode=u_mode, demean=demean)
    cv = None
    if method == "factors-only":
        a = ols_coefficients(panel_to_rows(mfm.f_hat), yc)
        p1, p2 = panel.shape[1:]
        r = yc - panel_to_rows(mfm.f_hat) @ a
        fit = RegressionFit(a.reshape(k1, k2, order="F"), np.zeros((p1, p2)), 0.0, 0,
                            np.array([r @ r / (2 * r.size)]), 0, True)
    else:
        if method == "baseline":
            x = panel - mfm.mean if mfm.mean is not None else panel
            data = RegressionData(yc, None, x)
        elif method == "idio-only":
            data = RegressionData(yc, None, mfm.u_hat)
        else:
            data = RegressionData(yc, mfm.f_hat, mfm.u_hat)
        path = SPARSE if method == "sparse" else NUCLEAR
        lam, cv = _select_lambda(data, opts, path, solver)
        if path == SPARSE:
            fit = fit_sparse(data, lam, solver)
        else:
            fit = apgd_nuclear(data, solver.replace(lam=lam))

    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    io.write_matrix(os.path.join(out, "a_hat.csv"), fit.a_hat if fit.a_hat.size else np.zeros((1, 0)))
    io.write_matrix(os.path.join(out, "b_hat.csv"), fit.b_hat)
    io.write_matrix(os.path.join(out, "r_hat.csv"), mfm.r_hat)
    io.write_matrix(os.path.join(out, "c_hat.csv"), mfm.c_hat)
    io.write_matrix(os.path.join(out, "w1.csv"), mfm.projections.w1)
    io.write_matrix(os.path.join(out, "w2.csv"), mfm.projections.w2)
    io.write_matrix(os.path.join(out, "gamma_tilde.csv"), mfm.gamma_tilde)
    io.write_matrix(os.path.join(out, "mean.csv"), mfm.mean if mfm.mean is not None else np.zeros(panel.shape[1:]))
    io.write_panel(os.path.join(out, "f_hat.csv"), mfm.f_hat)
    meta = {
        "schema_version": io.SCHEMA_VERSION,
        "method": method,
        "k1": k1,
        "k2": k2,
        "p1": int(panel.shape[1]),
        "p2": int(panel.shape[2]),
        "n": int(panel.shape[0]),
        "n_pretrain": int(pre.shape[0]),
        "demean": demean,
        "y_mean": y_mean,
        "u_mode": mfm.u_hat_mode,
        "c_s": mfm.c_s,
        "r_s": mfm.r_s,
        "lambda": fit.lam,
        "iterations": fit.iterations,
        "rank_b": fit.rank_b,
        "objective": fit.objective,
        "converged": fit.converged,
        "cross_validation": cv,
    }
    io.write_json(os.path.join(out, "fit.json"), meta)
    print(f"lambda={fit.lam:.6g} rank(B)={fit.rank_b} iterations={fit.iterations} converged={fit.converged}")
    if not fit.converged:
        logger.error("solver did not converge within %d iterations", solver.max_iter)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _load_fit(directory):
    if directory is None:
        raise UsageError("missing required option --fit")
    meta_path = os.path.join(directory, "fit.json")
    if not os.path.exists(meta_path):
        raise io.InputError(f"no fit found in {directory!r} (missing fit.json)")
    meta = io.read_json(meta_path)
    if meta.get("schema_version") != io.SCHEMA_VERSION:
        raise io.InputError(f"unsupported fit schema version {meta.get('schema_version')!r}")

    def mat(name):
        return io.read_matrix(os.path.join(directory, name))

    k1, k2, p1, p2 = meta["k1"], meta["k2"], meta["p1"], meta["p2"]
    proj = ProjectionPair(mat("w1.csv").reshape(p1, k1), mat("w2.csv").reshape(p2, k2))
    mfm = MfmFit(
        projections=proj,
        f_hat=np.zeros((0, k1, k2)),
        gamma_tilde=mat("gamma_tilde.csv").reshape(p1 * p2, k1 * k2),
        r_hat=mat("r_hat.csv").reshape(p1, k1),
        c_hat=mat("c_hat.csv").reshape(p2, k2),
        c_s=meta["c_s"],
        r_s=meta["r_s"],
        u_hat=np.zeros((0, p1, p2)),
        u_hat_mode=meta["u_mode"],
        mean=mat("mean.csv").reshape(p1, p2) if meta["demean"] else None,
    )
    a_raw = mat("a_hat.csv") if meta["method"] not in ("baseline", "idio-only") else np.zeros((0, 0))
    a = a_raw.reshape(k1, k2) if a_raw.size else np.zeros((0, 0))
    b = mat("b_hat.csv").reshape(p1, p2)
    return meta, mfm, a, b


def _fitted_values(meta, mfm, a, b, panel):
    if panel.shape[1:] != (meta["p1"], meta["p2"]):
        raise io.InputError(
            f"panel matrices are {panel.shape[1:]}, the fit expects {(meta['p1'], meta['p2'])}"
        )
    f_new, u_new = mfm.transform(panel)
    if meta["method"] == "baseline":
        u_new = panel - mfm.mean if mfm.mean is not None else panel
    out = panel_to_rows(u_new) @ vec(b)
    if a.size:
        out = out + panel_to_rows(f_new) @ vec(a)
    return out + meta["y_mean"]


def cmd_predict(opts):
    meta, mfm, a, b = _load_fit(opts.get("fit"))
    _require(opts, "panel")
    panel = io.read_panel(opts["panel"])
    y_hat = _fitted_values(meta, mfm, a, b, panel)
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    io.write_vector(os.path.join(out, "predictions.csv"), y_hat, header=("sample_id", "y_hat"))
    report = {"schema_version": io.SCHEMA_VERSION, "samples": int(y_hat.size), "r2": None}
    if opts.get("response") is not None:
        y = io.read_vector(opts["response"])
        if y.shape[0] != y_hat.shape[0]:
            raise io.InputError(f"response has {y.shape[0]} samples, panel has {y_hat.shape[0]}")
        report["r2"] = sim.out_of_sample_r2(y, y_hat, np.full(y.shape, meta["y_mean"]))
        print(f"R2={report['r2']:.6g}")
    io.write_json(os.path.join(out, "predict.json"), report)
    return EXIT_OK


def cmd_loadings(opts):
    meta, mfm, _, _ = _load_fit(opts.get("fit"))
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    report = {"schema_version": io.SCHEMA_VERSION, "rotated": not opts.get("no_rotate")}
    for name, loading in (("r", mfm.r_hat), ("c", mfm.c_hat)):
        base = normalize_columns(loading)
        entry = {"criterion_normalized": varimax_criterion(base)}
        if opts.get("no_rotate"):
            result = base
        else:
            result, t = varimax(loading, return_rotation=True)
            entry["criterion_rotated"] = varimax_criterion(result)
            entry["orthogonality_residual"] = float(np.linalg.norm(t.T @ t - np.eye(t.shape[0])))
            io.write_matrix(os.path.join(out, f"{name}_rotation.csv"), t)
        io.write_long_matrix(os.path.join(out, f"{name}_loading.csv"), result)
        report[name] = entry
    io.write_json(os.path.join(out, "loadings.json"), report)
    return EXIT_OK


def cmd_rolling(opts):
    _require(opts, "panel", "response", "window", "pretrain_len", "k1", "k2")
    panel = io.read_panel(opts["panel"])
    y = io.read_vector(opts["response"])
    if y.shape[0] != panel.shape[0]:
        raise io.InputError(f"panel has {panel.shape[0]} samples but response has {y.shape[0]}")
    methods = opts["method"]
    methods = list(ROLLING_METHODS) if methods == "all" else [methods]
    for m in methods:
        if m not in ROLLING_METHODS:
            raise UsageError(f"rolling supports methods {', '.join(ROLLING_METHODS)} or all")
    grid = _parse_grid_spec(opts["lambda_grid"])
    if grid[0] != "auto":
        raise UsageError("rolling only accepts auto[:NUM[:RATIO]] lambda grids")
    spec = sim.RegressionSpec(
        folds=int(opts["folds"]), grid_size=grid[1], grid_ratio=grid[2],
        cv_epsilon=None if opts.get("cv_epsilon") is None else float(opts["cv_epsilon"]),
        solver=_solver_config(opts),
    )
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    report = {"schema_version": io.SCHEMA_VERSION, "window": int(opts["window"]),
              "pretrain_len": int(opts["pretrain_len"]), "r2": {}}
    try:
        for m in methods:
            res = sim.rolling_predict(panel, y, int(opts["window"]), int(opts["pretrain_len"]),
                                      int(opts["k1"]), int(opts["k2"]), ROLLING_METHODS[m], spec,
                                      int(opts["seed"]))
            report["r2"][m] = res.r2
            table = np.column_stack([np.arange(int(opts["window"]), panel.shape[0]),
                                     res.targets, res.predictions, res.benchmarks])
            np.savetxt(os.path.join(out, f"rolling_{m}.csv"), table, delimiter=",",
                       fmt=["%d", io.FLOAT_FMT, io.FLOAT_FMT, io.FLOAT_FMT],
                       header="t,y,y_hat,benchmark", comments="")
            print(f"{m}: out-of-sample R2={res.r2:.6g}")
    except ValueError as exc:
        if isinstance(exc, FamarError):
            raise
        raise UsageError(str(exc)) from None
    io.write_json(os.path.join(out, "rolling.json"), report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parser


def build_parser():
    parser = argparse.ArgumentParser(prog="famar", description="Factor-augmented matrix regression")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *names):
        p.add_argument("--config", help="JSON document with option values")
        p.add_argument("--out", help="output directory (default: current)")
        if "seed" in names:
            p.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
        if "data" in names:
            p.add_argument("--panel", help="long-format panel CSV")
            p.add_argument("--response", help="response CSV with header sample_id,y")
        if "factors" in names:
            p.add_argument("--k1", type=int, help="row factor dimension")
            p.add_argument("--k2", type=int, help="column factor dimension")
        if "lambda" in names:
            p.add_argument("--lambda-grid", dest="lambda_grid",
                           help="auto[:NUM[:RATIO]] or comma-separated values")
            p.add_argument("--folds", type=int, help="cross-validation folds")
            p.add_argument("--max-iter", dest="max_iter", type=int, help="solver iteration cap")
            p.add_argument("--epsilon", type=float, help="solver stopping tolerance")

    p = sub.add_parser("simulate", help="run a simulation preset")
    common(p, "seed", "lambda")
    p.add_argument("--preset", help="one of: " + ", ".join(sim.PRESETS))
    p.add_argument("--reps", type=int, help="replications per grid point")
    p.add_argument("--grid", help="comma-separated values of the swept dimension")
    p.add_argument("--no-regression", dest="no_regression", action="store_true",
                   help="factor-model metrics only")
    p.add_argument("--cv-epsilon", dest="cv_epsilon", type=float,
                   help="looser solver tolerance inside cross validation")

    p = sub.add_parser("fit", help="fit the factor model and the regression")
    common(p, "seed", "data", "factors", "lambda")
    p.add_argument("--pretrain-frac", dest="pretrain_frac", type=float,
                   help="leading fraction of samples used for the projections")
    p.add_argument("--pretrain", help="separate pre-training panel CSV")
    p.add_argument("--method", choices=FIT_METHODS)
    p.add_argument("--lambda", dest="lambda", type=float, help="fixed penalty (skips CV)")
    p.add_argument("--no-demean", dest="no_demean", action="store_true")

    p = sub.add_parser("predict", help="predict responses for a new panel")
    common(p, "data")
    p.add_argument("--fit", help="directory written by `famar fit`")

    p = sub.add_parser("loadings", help="normalized (and varimax-rotated) loadings")
    common(p)
    p.add_argument("--fit", help="directory written by `famar fit`")
    p.add_argument("--no-rotate", dest="no_rotate", action="store_true")

    p = sub.add_parser("rolling", help="rolling-window one-step-ahead prediction")
    common(p, "seed", "data", "factors", "lambda")
    p.add_argument("--window", type=int, help="window width (pre-training plus training)")
    p.add_argument("--pretrain-len", dest="pretrain_len", type=int,
                   help="leading samples of each window used for the projections")
    p.add_argument("--method", choices=tuple(ROLLING_METHODS) + ("all",))
    p.add_argument("--cv-epsilon", dest="cv_epsilon", type=float)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "loadings": cmd_loadings,
    "rolling": cmd_rolling,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args.command, args)
        return COMMANDS[args.command](opts)
    except EstimationError as exc:
        print(f"famar: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except ConvergenceError as exc:
        print(f"famar: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (FamarError, ValueError, OSError, KeyError) as exc:
        print(f"famar: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
