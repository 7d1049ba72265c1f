"""Command-line interface: ``spcr {fit,cv,simulate,bench,predict,scores}``.

Exit codes: 0 success, 2 input error, 3 fit hit the iteration cap,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .baselines import composite_coefficients, loading_support
from .bench import BenchConfig, method_names, run_bench
from .family import DomainError, FamilySpec, mean_function, multiclass_probabilities
from .linalg import CenteredDesign, center_columns
from .optimizer import (
    ADAPTIVE_EPS,
    Controls,
    FitResult,
    HyperParams,
    NumericalFailure,
    fit,
    fit_adaptive,
    indicator_matrix,
)
from .selection import CvSpec, lambda_grid, make_folds, select_hyperparameters
from .simulate import CASES, gen_case, gen_illustrative

log = logging.getLogger("spcrglm")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_NUMERIC = 0, 2, 3, 4


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    input_path: str | None = None
    output_dir: str = "."
    family: str = "binomial"
    k: int = 1
    w: float = 0.01
    xi: float = 0.001
    lambda_beta: float = 0.0
    lambda_gamma: float = 0.0
    q: float = 0.0
    folds: int = 5
    seed: int = 0
    scale_columns: bool = False
    max_outer: int = 100
    tol: float = 1e-5
    n_points: int = 10
    grid_beta: list[float] | None = None
    grid_gamma: list[float] | None = None
    model_dir: str | None = None
    case: str | None = None
    n: int = 200
    reps: int = 20
    methods: list[str] | None = None
    q_list: list[float] | None = None
    m_test: int = 1000

    def hyper(self) -> HyperParams:
        return HyperParams(w=self.w, xi=self.xi, lambda_beta=self.lambda_beta,
                           lambda_gamma=self.lambda_gamma, q=self.q)

    def controls(self) -> Controls:
        return Controls(max_outer=self.max_outer, tol=self.tol)


def fmt(v) -> str:
    return format(float(v), ".17g")


def write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(c if isinstance(c, str) else fmt(c) for c in row) + "\n")


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o)}")


def read_table(path: str | Path, delimiter: str = ",") -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not header:
        raise InputError(f"{path}: missing header row")
    return [h.strip() for h in header], rows


def parse_numeric(path, header, rows, columns) -> np.ndarray:
    idx = [header.index(c) for c in columns]
    out = np.empty((len(rows), len(idx)))
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise InputError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        for c, i in enumerate(idx):
            cell = row[i].strip()
            try:
                v = float(cell)
            except ValueError:
                v = np.nan
            if not np.isfinite(v):
                raise InputError(f"{path}: row {r}, column {header[i]!r}: missing or non-numeric value {cell!r}")
            out[r - 2, c] = v
    return out


def load_dataset(cfg: RunConfig):
    """Predictors, response and variable names from the input CSV."""
    if not cfg.input_path:
        raise InputError("--input-path is required")
    header, rows = read_table(cfg.input_path)
    _family(cfg, [0, 1])
    multiclass = cfg.family == "multiclass"
    resp = "class" if multiclass else "y"
    if resp not in header:
        raise InputError(f"{cfg.input_path}: no response column named {resp!r}")
    names = [h for h in header if h != resp]
    if not names:
        raise InputError("no predictor columns")
    raw = parse_numeric(cfg.input_path, header, rows, names)
    if multiclass:
        labels = [row[header.index(resp)].strip() for row in rows]
        if any(lab == "" for lab in labels):
            bad = labels.index("") + 2
            raise InputError(f"{cfg.input_path}: row {bad}, column 'class': missing label")
        y, levels = indicator_matrix(np.array(labels))
        levels = [str(v) for v in levels]
    else:
        y = parse_numeric(cfg.input_path, header, rows, [resp])[:, 0]
        levels = None
    if raw.shape[0] < 2:
        raise InputError("need at least two rows")
    return raw, y, names, levels


def _family(cfg: RunConfig, levels) -> FamilySpec:
    try:
        if cfg.family == "multiclass":
            return FamilySpec.multiclass(len(levels))
        return FamilySpec.from_name(cfg.family)
    except DomainError as exc:
        raise InputError(str(exc)) from exc


def write_fit_outputs(out: Path, cfg: RunConfig, res: FitResult, design: CenteredDesign,
                      names: list[str], levels, extra: dict | None = None) -> None:
    params = res.params
    k = params.k
    pcs = [f"PC{j + 1}" for j in range(k)]
    write_table(out / "loadings.tsv", ["variable"] + pcs,
                ([nm] + list(row) for nm, row in zip(names, params.B)))
    gam = np.asarray(params.gamma).reshape(k, -1)
    cols = levels if levels is not None else ["gamma"]
    write_table(out / "gamma.tsv", ["component"] + cols, ([pc] + list(row) for pc, row in zip(pcs, gam)))
    g0 = np.atleast_1d(params.gamma0)
    with open(out / "intercept.txt", "w", encoding="utf-8") as fh:
        if levels is None:
            fh.write(fmt(g0[0]) + "\n")
        else:
            for lev, v in zip(levels, g0):
                fh.write(f"{lev}\t{fmt(v)}\n")
    scores = design.X @ params.B
    write_table(out / "scores.tsv", pcs, scores)
    zeta = composite_coefficients(params.B, gam)
    meta = {
        "config": asdict(cfg),
        "family": res.family.kind,
        "levels": levels,
        "variables": names,
        "col_means": design.col_means,
        "col_scale": design.scale,
        "converged": res.converged,
        "n_outer": res.n_outer,
        "objective_trace": res.objective_trace,
        "degenerate_A": res.degenerate_A,
        "zeta": {nm: (row.tolist() if levels is not None else float(row[0])) for nm, row in zip(names, zeta)},
        "selected_by_loadings": {nm: bool(s) for nm, s in zip(names, loading_support(params.B))},
        "lambda_entry": res.hyper.lambda_entry,
    }
    if extra:
        meta.update(extra)
    write_json(out / "fit.json", meta)


def _fit_status(res: FitResult) -> int:
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_fit(cfg: RunConfig) -> int:
    raw, y, names, levels = load_dataset(cfg)
    fam = _family(cfg, levels)
    design = center_columns(raw, scale=cfg.scale_columns)
    if not 1 <= cfg.k <= design.p:
        raise InputError(f"k must lie in 1..{design.p}")
    hyper = cfg.hyper()
    if cfg.q > 0:
        res = fit_adaptive(design.X, y, fam, hyper, cfg.k, cfg.controls())
    else:
        res = fit(design.X, y, fam, hyper, cfg.k, cfg.controls())
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_fit_outputs(out, cfg, res, design, names, levels)
    return _fit_status(res)


def cmd_cv(cfg: RunConfig) -> int:
    raw, y, names, levels = load_dataset(cfg)
    fam = _family(cfg, levels)
    design = center_columns(raw, scale=cfg.scale_columns)
    if not 1 <= cfg.k <= design.p:
        raise InputError(f"k must lie in 1..{design.p}")
    if not 2 <= cfg.folds <= design.n:
        raise InputError("folds must lie in 2..n")
    hyper = cfg.hyper().replace(lambda_beta=0.0, lambda_gamma=0.0)
    grid = lambda_grid(design.X, y, fam, cfg.k, cfg.n_points, hyper)
    gb = np.array(cfg.grid_beta if cfg.grid_beta else grid.beta, dtype=float)
    gg = np.array(cfg.grid_gamma if cfg.grid_gamma else grid.gamma, dtype=float)
    folds = make_folds(design.n, cfg.folds, cfg.seed, labels=y if fam.is_multiclass else None)
    cv = CvSpec(cfg.folds, folds, gb, gg, cfg.seed)
    sel = select_hyperparameters(design.X, y, fam, cfg.k, cv, hyper, cfg.controls())
    stage = "spcr"
    if cfg.q > 0:
        factor = 1.0 / np.maximum(np.abs(sel.refit.params.B), ADAPTIVE_EPS) ** cfg.q
        sel = select_hyperparameters(design.X, y, fam, cfg.k, cv, hyper, cfg.controls(),
                                     penalty_factor=factor)
        stage = "aspcr"
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    gb_sorted, gg_sorted = sel.cv.grid_beta, sel.cv.grid_gamma
    write_table(out / "cv_surface.tsv", ["lambda_beta"] + [fmt(v) for v in gg_sorted],
                ([fmt(b)] + list(row) for b, row in zip(gb_sorted, sel.cv_surface)))
    best = {
        "lambda_beta": sel.best[0],
        "lambda_gamma": sel.best[1],
        "cv": float(sel.cv_surface[sel.best_index]),
        "folds": cfg.folds,
        "seed": cfg.seed,
        "method": stage,
        "grid_beta": gb_sorted,
        "grid_gamma": gg_sorted,
        "grid_degenerate": grid.degenerate,
        "failed_points": sel.failed,
    }
    write_json(out / "best.json", best)
    write_fit_outputs(out, cfg, sel.refit, design, names, levels, {"cv_best": best})
    return _fit_status(sel.refit)


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.case not in (*CASES, "illustrative"):
        raise InputError(f"unknown case {cfg.case!r}")
    data = gen_illustrative(cfg.n, cfg.seed) if cfg.case == "illustrative" else gen_case(cfg.case, cfg.n, cfg.seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = data.X.shape[1]
    names = [f"x{j + 1}" for j in range(p)]
    with open(out / "data.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names + ["y"]) + "\n")
        for row, yi in zip(data.X, data.y):
            fh.write(",".join(fmt(v) for v in row) + "," + str(int(yi)) + "\n")
    truth = {"case": cfg.case, "n": cfg.n, "seed": cfg.seed, "family": data.truth.family,
             "coef": data.truth.coef}
    write_json(out / "truth.json", truth)
    if data.truth.labels is not None:
        write_table(out / "labels.tsv", ["cluster", "u1", "u2"],
                    ([str(int(lab)), *u] for lab, u in zip(data.truth.labels, data.truth.u)))
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    if cfg.case not in CASES:
        raise InputError(f"unknown case {cfg.case!r}; expected one of {sorted(CASES)}")
    methods = tuple(cfg.methods or ("spcr", "aspcr", "pcr"))
    bad = set(methods) - {"spcr", "aspcr", "pcr"}
    if bad:
        raise InputError(f"unknown methods {sorted(bad)}")
    bc = BenchConfig(cfg.case, cfg.n, cfg.k, cfg.reps, methods, tuple(cfg.q_list or (0.1, 0.5, 1.0)),
                     cfg.seed, cfg.folds, cfg.n_points, cfg.m_test, cfg.w, cfg.xi, cfg.controls())
    t0 = time.perf_counter()
    rows, summary = run_bench(bc)
    log.info("bench finished in %.1f s", time.perf_counter() - t0)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw_cols = ["rep", "seed", "method", "el", "tpr", "tnr", "tpr_loadings", "tnr_loadings",
                "lambda_beta", "lambda_gamma", "converged"]
    write_table(out / "bench_raw.tsv", raw_cols,
                ([_cell(r[c]) for c in raw_cols] for r in rows))

    def ms(m, s):
        return "NA" if m is None else f"{fmt(m)} ({'NA' if s is None else fmt(s)})"

    write_table(out / "bench.tsv", ["case", "n", "k", "method", "EL", "TPR", "TNR", "reps"],
                ([cfg.case, str(cfg.n), str(cfg.k), name, ms(r.el_mean, r.el_sd),
                  ms(r.tpr_mean, r.tpr_sd), ms(r.tnr_mean, r.tnr_sd), str(r.n_reps)]
                 for name, r in summary.items()))
    write_json(out / "bench.json", {"config": asdict(cfg), "methods": method_names(bc),
                                    "summary": {k: asdict(v) for k, v in summary.items()}})
    return EXIT_OK


def _cell(v):
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return fmt(v)


def _load_model(model_dir: str | None):
    if not model_dir:
        raise InputError("--model-dir is required")
    d = Path(model_dir)
    try:
        meta = json.loads((d / "fit.json").read_text(encoding="utf-8"))
        _, lrows = read_table(d / "loadings.tsv", "\t")
        _, grows = read_table(d / "gamma.tsv", "\t")
        irows = (d / "intercept.txt").read_text(encoding="utf-8").split("\n")
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load model from {d}: {exc}") from exc
    B = np.array([[float(c) for c in r[1:]] for r in lrows])
    gamma = np.array([[float(c) for c in r[1:]] for r in grows])
    g0 = np.array([float(line.split("\t")[-1]) for line in irows if line.strip()])
    return meta, B, gamma, g0


def _new_design(cfg: RunConfig, meta):
    header, rows = read_table(cfg.input_path) if cfg.input_path else (None, None)
    if header is None:
        raise InputError("--input-path is required")
    names = meta["variables"]
    missing = [nm for nm in names if nm not in header]
    if missing:
        raise InputError(f"{cfg.input_path}: missing predictor columns {missing}")
    raw = parse_numeric(cfg.input_path, header, rows, names)
    return (raw - np.array(meta["col_means"])) / np.array(meta["col_scale"])


def cmd_scores(cfg: RunConfig) -> int:
    meta, B, _, _ = _load_model(cfg.model_dir)
    X = _new_design(cfg, meta)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "scores.tsv", [f"PC{j + 1}" for j in range(B.shape[1])], X @ B)
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    meta, B, gamma, g0 = _load_model(cfg.model_dir)
    X = _new_design(cfg, meta)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if meta["family"] == "multiclass":
        prob = multiclass_probabilities(g0, gamma, B, X)
        levels = meta["levels"]
        write_table(out / "predictions.tsv", [f"prob_{lev}" for lev in levels] + ["class"],
                    (list(pr) + [levels[int(np.argmax(pr))]] for pr in prob))
        return EXIT_OK
    fam = FamilySpec.from_name(meta["family"])
    kappa = g0[0] + (X @ B) @ gamma[:, 0]
    write_table(out / "predictions.tsv", ["linear_predictor", "mean"],
                zip(kappa, mean_function(fam, kappa)))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "simulate": cmd_simulate, "bench": cmd_bench,
            "predict": cmd_predict, "scores": cmd_scores}


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spcr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--output-dir", default=".")
        p.add_argument("--seed", type=int, default=0)
        if data:
            p.add_argument("--input-path")
            p.add_argument("--family", default="binomial",
                           help="gaussian, binomial, poisson or multiclass")
            p.add_argument("--scale-columns", action="store_true")

    def tuning(p):
        p.add_argument("--k", type=int, default=1)
        p.add_argument("--w", type=float, default=0.01)
        p.add_argument("--xi", type=float, default=0.001)
        p.add_argument("--q", type=float, default=0.0)
        p.add_argument("--max-outer", type=int, default=100)
        p.add_argument("--tol", type=float, default=1e-5)

    p = sub.add_parser("fit", help="fit at fixed penalties")
    common(p)
    tuning(p)
    p.add_argument("--lambda-beta", type=float, default=0.0)
    p.add_argument("--lambda-gamma", type=float, default=0.0)

    p = sub.add_parser("cv", help="select penalties by K-fold cross-validation and refit")
    common(p)
    tuning(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--n-points", type=int, default=10)
    p.add_argument("--grid-beta", type=_floats)
    p.add_argument("--grid-gamma", type=_floats)

    p = sub.add_parser("simulate", help="write a simulated dataset as CSV")
    common(p, data=False)
    p.add_argument("--case", required=True)
    p.add_argument("--n", type=int, default=200)

    p = sub.add_parser("bench", help="Monte Carlo comparison on a simulation case")
    common(p, data=False)
    tuning(p)
    p.add_argument("--case", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--methods", type=lambda s: [m.strip() for m in s.split(",") if m.strip()])
    p.add_argument("--q-list", type=_floats)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--n-points", type=int, default=10)
    p.add_argument("--m-test", type=int, default=1000)

    for name, helptext in (("predict", "linear predictor and mean for new rows"),
                           ("scores", "PC scores for new rows")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model-dir", required=True)
        p.add_argument("--input-path", required=True)
        p.add_argument("--output-dir", default=".")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    return RunConfig(**{k: v for k, v in vars(ns).items() if k in known})


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    cfg = config_from_args(ns)
    try:
        return COMMANDS[cfg.command](cfg)
    except (InputError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
