"""Command-line interface: ``steincv {estimate,generate,benchmark,check}``.

Exit codes:
    0  success
    1  unexpected internal error
    2  shape mismatch, or too few samples for ``check``
    3  identifiability / singular design
    4  parse error (method/target spec, CSV contents)
    5  missing or unreadable file

Errors print one line to stderr of the form
``steincv: error exit=<code> kind=<ExceptionName> message=<text>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .basis import enumerate_basis
from .errors import DimensionError, IdentifiabilityError, SingularDesignError, SpecParseError
from .evaluation import run_benchmark
from .specs import evaluate_integrands, integrand_names, parse_integrands, parse_method, parse_target
from .stein import SampleSet, build_design_matrix, check_zero_mean
from .targets import mala_sample, sample_iid

logger = logging.getLogger("steincv")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INTERNAL, EXIT_SHAPE, EXIT_IDENT, EXIT_PARSE, EXIT_FILE = 0, 1, 2, 3, 4, 5
MIN_CHECK_SAMPLES = 30


class CLIError(Exception):
    def __init__(self, code, message, kind=None):
        super().__init__(message)
        self.code = code
        self.kind = kind or type(self).__name__


def load_schema(name: str) -> dict:
    """Load one of the shipped JSON schemas (``estimate``, ``manifest``, ``benchmark``, ``check``)."""
    text = resources.files("steincv").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


# -- CSV ------------------------------------------------------------------


def read_matrix(path) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV; a first row that does not parse as numbers is a header."""
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    except FileNotFoundError:
        raise CLIError(EXIT_FILE, f"file not found: {path}", "FileNotFoundError") from None
    except OSError as exc:
        raise CLIError(EXIT_FILE, f"cannot read {path}: {exc}", "OSError") from None
    if not rows:
        raise CLIError(EXIT_PARSE, f"{path} contains no data", "ParseError")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(rows[0]) if rows else 0
    try:
        values = np.array([[float(c) for c in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise CLIError(EXIT_PARSE, f"{path}: {exc}", "ParseError") from None
    if not rows or any(len(r) != width for r in rows) or (header and len(header) != width):
        raise CLIError(EXIT_PARSE, f"{path}: ragged or empty table", "ParseError")
    return values.reshape(len(rows), width), header


def write_matrix(path, values: np.ndarray, header) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in values:
            writer.writerow([repr(float(x)) for x in row])


# -- JSON helpers ---------------------------------------------------------


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isnan(value):
            return None
        if np.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def _dump(obj, out) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("STEINCV_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CLIError(EXIT_PARSE, f"STEINCV_THREADS={env!r} is not an integer", "ParseError") from None
    return 1


def _load_samples(args, need_integrands=True):
    thetas, theta_header = read_matrix(args.samples)
    grads, _ = read_matrix(args.grads)
    if thetas.shape != grads.shape:
        raise CLIError(EXIT_SHAPE, f"samples {thetas.shape} and gradients {grads.shape} differ in shape", "DimensionError")
    try:
        samples = SampleSet(thetas, grads)
    except ValueError as exc:
        raise CLIError(EXIT_PARSE, str(exc), "ParseError") from None
    if not need_integrands:
        return samples, None, None
    F, f_header = read_matrix(args.integrands)
    if F.shape[0] != thetas.shape[0]:
        raise CLIError(EXIT_SHAPE, f"integrands have {F.shape[0]} rows but samples have {thetas.shape[0]}", "DimensionError")
    names = f_header or [f"f{j + 1}" for j in range(F.shape[1])]
    return samples, F, names


# -- commands -------------------------------------------------------------


def cmd_estimate(args) -> int:
    method = parse_method(args.method)
    samples, F, names = _load_samples(args)
    est, post_time = method.run(samples, F, seed=args.seed, threads=_threads(args))
    report = {
        "schema": "steincv/estimate",
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "method": {"spec": method.label, "name": est.method},
        "seed": args.seed,
        "n_samples": samples.n_samples,
        "dim": samples.dim,
        "integrands": names,
        "estimates": est.values,
        "diagnostics": {k: v for k, v in est.diagnostics.items()},
    }
    if args.timing:
        report["timing"] = {"postprocessing_seconds": post_time}
    _dump(report, args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    target = parse_target(args.target)
    exps = parse_integrands(args.integrand, target.dim)
    start = time.perf_counter()
    rng = np.random.default_rng(args.seed)
    manifest = {
        "schema": "steincv/manifest",
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "target": args.target,
        "target_params": target.params,
        "sampler": args.sampler,
        "S": args.S,
        "seed": args.seed,
        "integrand": args.integrand,
    }
    if args.sampler == "iid":
        samples = sample_iid(target, args.S, rng)
        manifest.update(warmup=0, acceptance_rate=1.0, step_size=None)
    else:
        step = "auto" if args.step == "auto" else float(args.step)
        chain = mala_sample(target, args.S, warmup=args.warmup, step_size=step, seed=rng)
        samples = chain.samples
        manifest.update(warmup=chain.warmup_discarded, acceptance_rate=chain.acceptance_rate, step_size=chain.step_size)
    sampling_time = time.perf_counter() - start
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    d = target.dim
    write_matrix(out / "samples.csv", samples.thetas, [f"theta{i + 1}" for i in range(d)])
    write_matrix(out / "grads.csv", samples.grads, [f"grad{i + 1}" for i in range(d)])
    write_matrix(out / "integrands.csv", evaluate_integrands(samples.thetas, exps), integrand_names(exps))
    manifest["files"] = {"samples": "samples.csv", "grads": "grads.csv", "integrands": "integrands.csv"}
    if args.timing:
        manifest["timing"] = {"sampling_seconds": sampling_time}
    _dump(manifest, out / "manifest.json")
    return EXIT_OK


def _benchmark_rows(report):
    rows = []
    for c in report.cells:
        rows.append(
            {
                "target": c.target,
                "S": c.S,
                "method": c.method,
                "se_mean": c.se_mean,
                "oe_mean": c.oe_mean,
                "se": c.se,
                "oe": c.oe,
                "mse": c.mse,
                "se_infinite": c.se_infinite,
                "n_ok": c.n_ok,
                "n_failed": c.n_failed,
                "failures": list(c.failures),
                "sampling_seconds": c.sampling_time,
                "postprocessing_seconds": c.post_time,
            }
        )
    return rows


def cmd_benchmark(args) -> int:
    methods = [parse_method(m) for spec in args.method for m in _split_methods(spec)]
    targets = [parse_target(t) for t in args.target]
    report = run_benchmark(
        targets,
        methods,
        args.S,
        args.reps,
        seed=args.seed,
        integrands=args.integrand,
        sampler=args.sampler,
        warmup=args.warmup,
        threads=_threads(args),
        golden_size=args.golden_size,
    )
    rows = _benchmark_rows(report)
    if args.format == "json":
        _dump(
            {
                "schema": "steincv/benchmark",
                "schema_version": SCHEMA_VERSION,
                "version": __version__,
                "config": report.config,
                "integrands": report.integrands,
                "truth": report.truth,
                "truth_source": report.truth_source,
                "rows": rows,
            },
            args.out,
        )
    else:
        buf = io.StringIO()
        names = report.integrands
        header = ["target", "S", "method", "se_mean", "oe_mean", "n_ok", "n_failed", "sampling_seconds", "postprocessing_seconds"]
        header += [f"se[{n}]" for n in names] + ["failures"]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            se = [_jsonable(v) for v in r["se"]]
            writer.writerow(
                [r["target"], r["S"], r["method"], _jsonable(r["se_mean"]), _jsonable(r["oe_mean"]), r["n_ok"], r["n_failed"],
                 _jsonable(r["sampling_seconds"]), _jsonable(r["postprocessing_seconds"]), *se, " | ".join(r["failures"])]
            )
        if args.out in (None, "-"):
            sys.stdout.write(buf.getvalue())
        else:
            Path(args.out).write_text(buf.getvalue())
    return EXIT_OK


def _split_methods(spec: str):
    return [s for s in spec.split(";") if s.strip()]


def cmd_check(args) -> int:
    samples, _, _ = _load_samples(args, need_integrands=False)
    if samples.n_samples < MIN_CHECK_SAMPLES:
        raise CLIError(EXIT_SHAPE, f"check needs at least {MIN_CHECK_SAMPLES} samples, got {samples.n_samples}", "DimensionError")
    basis = enumerate_basis(samples.dim, 2)
    diag = check_zero_mean(build_design_matrix(samples, basis, threads=_threads(args)))
    columns = [
        {"monomial": list(m.exponents), "mean": diag.mean[j], "std_error": diag.std_error[j], "passed": diag.passed[j]}
        for j, m in enumerate(basis.indices)
    ]
    _dump(
        {
            "schema": "steincv/check",
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "n_samples": samples.n_samples,
            "dim": samples.dim,
            "order": 2,
            "columns": columns,
            "flagged": diag.failed_columns,
            "n_flagged": len(diag.failed_columns),
        },
        args.out,
    )
    if diag.failed_columns:
        print(f"steincv: {len(diag.failed_columns)} design column(s) fail the zero-mean check", file=sys.stderr)
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default $STEINCV_THREADS or 1)")
    p.add_argument("--out", default=None, help="output path ('-' or omitted for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steincv", description="Stein-operator control variates for Monte Carlo output.")
    parser.add_argument("--version", action="version", version=f"steincv {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate expectations from sample/gradient/integrand CSVs")
    p.add_argument("--samples", required=True)
    p.add_argument("--grads", required=True)
    p.add_argument("--integrands", required=True)
    p.add_argument("--method", required=True, help="e.g. mc, zv:q=2, rzv:q=2,penalty=ridge,cv=10, sa:k=25")
    p.add_argument("--timing", action="store_true", help="include wall-clock timing (makes output non-reproducible)")
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("generate", help="write a synthetic chain as CSV files plus a manifest")
    p.add_argument("--target", required=True, help="e.g. gaussian:d=2 or banana:d=2,b=0.5")
    p.add_argument("--sampler", choices=("iid", "mala"), default="mala")
    p.add_argument("--S", type=int, required=True)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--step", default="auto", help="MALA step size or 'auto'")
    p.add_argument("--integrand", default="theta", help="integrand monomials, e.g. theta or theta1,theta1^2")
    p.add_argument("--timing", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_generate, out=".")

    p = sub.add_parser("benchmark", help="repeated-trial SE/OE comparison against vanilla Monte Carlo")
    p.add_argument("--target", action="append", required=True)
    p.add_argument("--method", action="append", required=True, help="repeatable; ';' also separates methods")
    p.add_argument("--S", type=int, nargs="+", required=True)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--sampler", choices=("iid", "mala"), default="mala")
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--integrand", default="theta")
    p.add_argument("--golden-size", type=int, default=100_000)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("check", help="zero-mean diagnostic of a Q=2 design matrix (gradient sanity check)")
    p.add_argument("--samples", required=True)
    p.add_argument("--grads", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_check)
    return parser


def _fail(code, kind, message) -> int:
    message = " ".join(str(message).split())
    print(f"steincv: error exit={code} kind={kind} message={message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        return _fail(exc.code, exc.kind, exc)
    except SpecParseError as exc:
        return _fail(EXIT_PARSE, type(exc).__name__, exc)
    except DimensionError as exc:
        return _fail(EXIT_SHAPE, type(exc).__name__, exc)
    except (IdentifiabilityError, SingularDesignError) as exc:
        return _fail(EXIT_IDENT, type(exc).__name__, exc)
    except Exception as exc:  # noqa: BLE001
        logger.debug("unexpected failure", exc_info=True)
        return _fail(EXIT_INTERNAL, type(exc).__name__, exc)


if __name__ == "__main__":
    sys.exit(main())
