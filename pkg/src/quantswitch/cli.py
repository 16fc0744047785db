"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 validation failure (bad config
or a model violating the structural conditions).
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import re
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import benchmark as bm
from .config import ConfigError, RunConfig, build_model, parse_config
from .gauss_quant import build_gaussian_quantizer, load_quantizer, save_quantizer
from .marginal import build_quantization_tree, save_tree, tree_solve
from .markovian import build_lattice, solve, value_at
from .model import TimeGrid, validate_costs, validate_terminal

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


class ValidationFailure(RuntimeError):
    def __init__(self, reports):
        self.reports = reports
        super().__init__("model validation failed")


def _fail(kind: str, message: str, details=None) -> None:
    report = {"error": kind, "message": message}
    if details:
        report["details"] = details
    print(json.dumps(report, indent=2), file=sys.stderr)


def _write_manifest(out: Path, config: RunConfig, timings: dict, extra=None) -> None:
    manifest = {
        "config_sha256": config.digest(),
        "config": config.data,
        "seed": config.seed,
        "versions": {"quantswitch": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "timings_seconds": timings,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_values(out: Path, values) -> None:
    with open(out / "values.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["regime", "value"])
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v))])


_SCHEME_DEFAULTS = {
    "markovian": {"m": 100, "delta": 0.01, "n_quant": 1000, "r_mult": 10.0},
    "marginal": {"m": 100, "nbar": 10000, "n_mc": 10 ** 6},
}
_FLAG_KEYS = {
    "markovian": {"m": "m", "delta_inv": "delta", "n_quant": "n_quant", "r_mult": "r_mult"},
    "marginal": {"m": "m", "nbar": "nbar", "paths": "n_mc", "n_train": "n_train"},
}


def _load_config(args) -> RunConfig:
    """Config file (or the benchmark defaults) with command-line flags layered on top."""
    scheme = args.default_scheme
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"<root>: cannot read {args.config} ({exc})"]) from exc
    else:
        data = {"model": {"family": "benchmark_gbm"}, scheme: dict(_SCHEME_DEFAULTS[scheme])}
    if isinstance(data, dict):
        overrides = {key: getattr(args, attr) for attr, key in _FLAG_KEYS[scheme].items()
                     if getattr(args, attr, None) is not None}
        if "delta" in overrides:
            overrides["delta"] = 1.0 / overrides["delta"]
        if overrides:
            block = data.setdefault(scheme, {})
            if "r_mult" in overrides:
                block.pop("R", None)
            block.update(overrides)
        if args.seed is not None:
            data["seed"] = args.seed
        if args.out:
            data.setdefault("output", {})["dir"] = args.out
    return parse_config(json.dumps(data))


def _validation_points(config: RunConfig, model):
    if config.scheme == "markovian":
        return _lattice(config, model).nodes
    x0 = np.array(config.x0())
    scale = 1.0 + np.abs(x0)
    return x0 + scale * np.linspace(-1.0, 1.0, 201)[:, None]


def _lattice(config: RunConfig, model):
    p = config.params
    x0 = config.x0()
    R = p.get("R")
    if R is None:
        R = p.get("r_mult", 10.0) * float(np.linalg.norm(x0))
    return build_lattice(model.d, p["delta"], R, center=p.get("center"))


def _validate(config: RunConfig, model) -> list:
    pts = _validation_points(config, model)
    reports = [("costs", validate_costs(model, pts)), ("terminal", validate_terminal(model, pts))]
    return reports


def _print_reports(reports) -> None:
    for name, rep in reports:
        print(f"[{name}] {rep.summary()}")


def cmd_validate(args) -> int:
    config = _load_config(args)
    model, _ = build_model(config.data["model"])
    reports = _validate(config, model)
    _print_reports(reports)
    return EXIT_OK if all(r.passed for _, r in reports) else EXIT_VALIDATION


def _prepare(config: RunConfig):
    model, sol = build_model(config.data["model"])
    reports = _validate(config, model)
    if not all(r.passed for _, r in reports):
        _print_reports(reports)
        raise ValidationFailure(reports)
    out = Path(config.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return model, sol, out


def cmd_solve_markovian(args) -> int:
    args.default_scheme = "markovian"
    config = _load_config(args)
    if config.scheme != "markovian":
        raise ConfigError(["config has no 'markovian' block"])
    model, _, out = _prepare(config)
    p = config.params
    t0 = time.perf_counter()
    if p.get("quantizer_file"):
        gq = load_quantizer(p["quantizer_file"], d=model.d)
    else:
        gq = build_gaussian_quantizer(model.d, p["n_quant"], seed=config.seed)
    t1 = time.perf_counter()
    grid = _lattice(config, model)
    surface = solve(model, grid, TimeGrid(model.horizon, p["m"]), gq)
    t2 = time.perf_counter()
    x0 = config.x0()
    values = [value_at(surface, 0, x0, i) for i in range(model.q)]
    _write_values(out, values)
    if config.output.get("surface_csv"):
        surface.to_csv(out / "surface.csv")
    timings = {"quantizer": t1 - t0, "solve": t2 - t1, **surface.timings}
    _write_manifest(out, config, timings, {"nodes": grid.size})
    for i, v in enumerate(values):
        print(f"v_{i}(0, {x0}) = {v:.6f}")
    print(f"time: quantizer {t1 - t0:.2f}s, solve {t2 - t1:.2f}s ({grid.size} nodes)")
    return EXIT_OK


def cmd_solve_marginal(args) -> int:
    args.default_scheme = "marginal"
    config = _load_config(args)
    if config.scheme != "marginal":
        raise ConfigError(["config has no 'marginal' block"])
    model, _, out = _prepare(config)
    p = config.params
    x0 = config.x0()
    tg = TimeGrid(model.horizon, p["m"])
    t0 = time.perf_counter()
    mq = build_quantization_tree(model, x0, tg, p["nbar"], n_train=p.get("n_train"),
                                 n_mc=p.get("n_mc", 10 ** 6), seed=config.seed,
                                 max_iters=p.get("max_iters", 200))
    t1 = time.perf_counter()
    proc = tree_solve(model, mq)
    t2 = time.perf_counter()
    _write_values(out, proc.y0)
    if config.output.get("tree_file"):
        save_tree(mq, out / "tree.mq1")
    timings = {**mq.timings, "tree": t2 - t1}
    _write_manifest(out, config, timings, {"grid_sizes": mq.sizes})
    for i, v in enumerate(proc.y0):
        print(f"Y_0^{i} = {v:.6f}")
    print(f"time: training {mq.timings['training']:.2f}s, transitions {mq.timings['transitions']:.2f}s, "
          f"tree {t2 - t1:.3f}s")
    return EXIT_OK


def cmd_quantize_gaussian(args) -> int:
    t0 = time.perf_counter()
    gq = build_gaussian_quantizer(args.d, args.n_quant, method=args.method, n_samples=args.n_samples,
                                  seed=args.seed)
    save_quantizer(gq, args.out_file)
    print(f"N={gq.N} d={gq.d} distortion={gq.distortion:.6g} mean={gq.mean().tolist()} "
          f"({time.perf_counter() - t0:.2f}s) -> {args.out_file}")
    return EXIT_OK


_PRESET = re.compile(r"^table([12]):\(([\d,\s]+)\)$")


def _parse_rows(text: str, width: int) -> list:
    rows = []
    for chunk in re.findall(r"\(([^)]*)\)", text):
        vals = tuple(int(v) for v in chunk.split(","))
        if len(vals) != width:
            raise ConfigError([f"row {chunk!r} needs {width} integers"])
        rows.append(vals)
    return rows


def cmd_benchmark(args) -> int:
    if args.preset:
        mt = _PRESET.match(args.preset.replace(" ", ""))
        if not mt:
            raise ConfigError([f"preset {args.preset!r} is not of the form table1:(m,1/delta,N) or table2:(m,nbar)"])
        table = int(mt.group(1))
        rows = _parse_rows(f"({mt.group(2)})", 3 if table == 1 else 2)
    else:
        table = args.table
        rows = _parse_rows(args.rows, 3 if table == 1 else 2) if args.rows else None
    seeds = tuple(range(args.seed, args.seed + args.seeds))
    if table == 1:
        report = bm.run_table1(rows or bm.TABLE1_ROWS, r_mult=args.r_mult, threads=args.threads)
        cols = ["m", "delta_inv", "N"]
    else:
        report = bm.run_table2(rows or bm.TABLE2_ROWS, n_mc=args.paths, seeds=seeds, threads=args.threads)
        cols = ["m", "nbar"]
    for r in report:
        label = ",".join(str(r[c]) for c in cols)
        print(f"({label})  value={r['value']:.4f}  error={r['rel_error_pct']:.3f}%  time={r['seconds']:.1f}s")
    print(f"exact value {report[0]['exact']:.4f}")
    if args.out_csv:
        bm.write_report_csv(report, args.out_csv, cols)
    return EXIT_OK


def cmd_convergence(args) -> int:
    ms = [int(v) for v in args.m_list.split(",")]
    if args.scheme == "markovian":
        rows = [(m, args.delta_inv, args.n_quant) for m in ms]
        report = bm.run_table1(rows, r_mult=args.r_mult, threads=args.threads)
        cols = ["m", "delta_inv", "N"]
    else:
        rows = [(m, args.nbar) for m in ms]
        report = bm.run_table2(rows, n_mc=args.paths, seeds=(args.seed,), threads=args.threads)
        cols = ["m", "nbar"]
    for r in report:
        print(f"m={r['m']:5d}  value={r['value']:.5f}  error={r['rel_error_pct']:.3f}%")
    if args.out_csv:
        bm.write_report_csv(report, args.out_csv, cols)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantswitch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scheme):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.set_defaults(default_scheme=scheme)

    p = sub.add_parser("validate", help="check the cost and terminal conditions of a configured model")
    common(p, "markovian")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-markovian", help="lattice scheme with a quantized Gaussian innovation")
    common(p, "markovian")
    p.add_argument("--m", type=int)
    p.add_argument("--delta-inv", type=float)
    p.add_argument("--n-quant", type=int)
    p.add_argument("--r-mult", type=float)
    p.set_defaults(func=cmd_solve_markovian)

    p = sub.add_parser("solve-marginal", help="marginal quantization tree")
    common(p, "marginal")
    p.add_argument("--m", type=int)
    p.add_argument("--nbar", type=int)
    p.add_argument("--paths", type=int, help="Monte-Carlo paths for the transition weights")
    p.add_argument("--n-train", type=int)
    p.set_defaults(func=cmd_solve_marginal)

    p = sub.add_parser("quantize-gaussian", help="train and save a Gaussian quantizer")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n-quant", type=int, required=True)
    p.add_argument("--method", default="auto", choices=["auto", "lloyd_exact", "lloyd_mc", "clvq"])
    p.add_argument("--n-samples", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-file", required=True)
    p.set_defaults(func=cmd_quantize_gaussian)

    p = sub.add_parser("benchmark", help="reproduce the two-regime GBM tables")
    p.add_argument("--preset", help="e.g. 'table1:(100,100,1000)' or 'table2:(10,100)'")
    p.add_argument("--table", type=int, choices=[1, 2], default=1)
    p.add_argument("--rows", help="rows such as '(10,10,100);(100,100,1000)'")
    p.add_argument("--r-mult", type=float, default=10.0)
    p.add_argument("--paths", type=int, default=10 ** 6)
    p.add_argument("--seeds", type=int, default=3, help="seeds per marginal row (the median is reported)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-csv")
    p.add_argument("--threads", type=int, default=1, help="worker threads across table rows")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("convergence", help="sweep the number of time steps on the benchmark")
    p.add_argument("--scheme", choices=["markovian", "marginal"], default="markovian")
    p.add_argument("--m-list", default="10,20,50,100")
    p.add_argument("--delta-inv", type=float, default=100.0)
    p.add_argument("--n-quant", type=int, default=1000)
    p.add_argument("--r-mult", type=float, default=10.0)
    p.add_argument("--nbar", type=int, default=10000)
    p.add_argument("--paths", type=int, default=10 ** 6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-csv")
    p.add_argument("--threads", type=int, default=1, help="worker threads across sweep points")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _fail("config", "invalid configuration", exc.errors)
        return EXIT_VALIDATION
    except ValidationFailure as exc:
        details = [{"check": name, "passed": rep.passed, "margins": rep.margins,
                    "violations": len(rep.violations)} for name, rep in exc.reports]
        _fail("validation", str(exc), details)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - reported as a structured runtime failure
        _fail("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
