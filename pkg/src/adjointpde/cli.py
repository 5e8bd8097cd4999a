"""Command-line front end: ``adjointpde {generate,noise,denoise,discover,compare,sweep,eval}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.

Configuration precedence is command-line flag, then a ``key = value`` config
file (``--config``), then built-in defaults. When the dataset metadata names a
benchmark problem, the built-in hyperparameters and library are that problem's
recommended ones. The effective settings are written to every run's metadata.

The preprocessing pipeline always runs in the order
subsample, add noise, denoise, discover.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import stridge_discover
from .core import CoefficientVector, Dataset, Hyperparameters, TermLibrary, build_library, format_pde, library_from_text, ranged_library
from .datagen import GenerationError, Problem, ProblemSpec, generate, library_hint, recommended_hyperparameters
from .io import FormatError, _jsonable, atomic_write, load_dataset, save_dataset
from .metrics import METRICS_HEADER, align, l2_residual, metrics_row
from .optimize import DivergenceError, Flag, discover, suggest_beta
from .preprocess import add_noise, subsample_time, svd_denoise

log = logging.getLogger("adjointpde")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class Diverged(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this tool reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- parsing helpers

def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _multi_index(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _beta(text: str):
    if text.strip().lower() == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        key = key.strip().replace("-", "_")
        value = value.strip()
        try:
            out[key] = _number(value)
        except ValueError:
            out[key] = {"true": True, "false": False}.get(value.lower(), value)
    return out


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys may use dashes or underscores."""
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> dict:
    """Fill options not given on the command line from the config file."""
    if not getattr(args, "config", None):
        return {}
    try:
        cfg = read_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    actions = {a.dest: a for a in parser._actions}
    used = {}
    for key, value in cfg.items():
        action = actions.get(key)
        if action is None or key in ("config", "data", "func", "command"):
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, key) is not None:
            continue  # the command line wins
        if action.nargs in ("+", "*"):
            conv = [action.type(v) if action.type else v for v in value.split()]
        elif isinstance(action, argparse.BooleanOptionalAction):
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
            conv = lowered in ("true", "1", "yes")
        else:
            try:
                conv = action.type(value) if action.type else value
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
            if action.choices and conv not in action.choices:
                raise UsageError(f"config key {key!r} must be one of {sorted(action.choices)}")
        setattr(args, key, conv)
        used[key] = conv
    return used


def _threads(args) -> int:
    if args.threads is not None:
        value = args.threads
    else:
        env = os.environ.get("PDED_THREADS", "1")
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"PDED_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise UsageError("thread count must be at least 1")
    return value


# ---------------------------------------------------------------- shared building blocks

HP_FLAGS = {f.name: "--" + f.name.replace("_", "-") for f in fields(Hyperparameters)}


def _add_hp_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("hyperparameters (defaults: the problem's recommended values)")
    g.add_argument("--beta", type=_beta, help="step scale, or 'auto' for a curvature-based estimate")
    g.add_argument("--eps0", type=float)
    g.add_argument("--sigma-thr", type=float)
    g.add_argument("--n-thr", type=int)
    g.add_argument("--gamma", type=float)
    g.add_argument("--gamma-thr", type=float)
    g.add_argument("--max-epochs", type=int)
    g.add_argument("--substeps", type=int)
    g.add_argument("--cfl-safety", type=float)
    g.add_argument("--averaging", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--threshold-mode", choices=["during", "final-only"])
    g.add_argument("--ridge-once", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--max-retries", type=int)
    g.add_argument("--blowup-factor", type=float)
    g.add_argument("--lr-scaling", choices=["grid", "diagonal"])


def _add_library_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("candidate library (default: the problem's study library)")
    g.add_argument("--dmax", type=int, help="derivative orders dmin..dmax")
    g.add_argument("--dmin", type=int, help="smallest derivative order with --dmax (default 1)")
    g.add_argument("--pmax", type=int, help="power degrees 1..pmax")
    g.add_argument("--derivs", nargs="+", type=_multi_index, metavar="D", help="explicit derivative multi-indices, e.g. 2,0 0,2")
    g.add_argument("--powers", nargs="+", type=_multi_index, metavar="P", help="explicit power multi-indices, e.g. 1 3")
    g.add_argument("--library", help="library file (coefficient text format; values ignored)")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("preprocessing (applied as subsample, noise, denoise)")
    g.add_argument("--subsample", type=int, help="keep every S-th snapshot")
    g.add_argument("--noise", type=float, help="multiplicative noise level sigma")
    g.add_argument("--seed", type=int, help="noise seed")
    g.add_argument("--sv-thresh", type=float, help="SVD denoise threshold")
    g.add_argument("--sv-absolute", action=argparse.BooleanOptionalAction, default=None,
                   help="treat --sv-thresh as an absolute singular value")
    g.add_argument("--repeat", type=int, help="repeat the noisy pipeline R times")
    g.add_argument("--seed-base", type=int, help="first seed of a --repeat series")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--threads", type=int, help="worker threads (fallback: PDED_THREADS, then 1)")
    p.add_argument("--format", choices=["pded", "csv"], help="dataset format (default: from the file suffix)")


def _load(path, fmt) -> Dataset:
    try:
        return load_dataset(path, fmt)
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {exc.filename}") from exc
    except (FormatError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc


def _problem_of(data: Dataset) -> Problem | None:
    name = data.metadata.get("problem")
    try:
        return Problem(name) if name else None
    except ValueError:
        return None


def resolve_library(args, data: Dataset) -> TermLibrary:
    n, N = data.grid.n, data.values.shape[1]
    explicit = args.derivs is not None or args.powers is not None
    ranged = args.dmax is not None or args.pmax is not None
    if sum([explicit, ranged, args.library is not None]) > 1:
        raise UsageError("use one of --dmax/--pmax, --derivs/--powers or --library")
    if args.library is not None:
        try:
            lib, _ = library_from_text(Path(args.library).read_text())
        except OSError as exc:
            raise DataError(f"cannot read library file: {exc}") from exc
        except ValueError as exc:
            raise DataError(f"bad library file: {exc}") from exc
    elif explicit:
        if args.derivs is None or args.powers is None:
            raise UsageError("--derivs and --powers must be given together")
        try:
            lib = build_library(n, N, args.derivs, args.powers)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    elif ranged:
        if args.dmax is None or args.pmax is None:
            raise UsageError("--dmax and --pmax must be given together")
        dmin = 1 if args.dmin is None else args.dmin
        if not 0 <= dmin <= args.dmax or args.pmax < 1:
            raise UsageError("need 0 <= dmin <= dmax and pmax >= 1")
        lib = ranged_library(n, N, range(dmin, args.dmax + 1), range(1, args.pmax + 1))
    else:
        problem = _problem_of(data)
        if problem is None:
            raise UsageError("dataset names no known problem; give --dmax/--pmax, --derivs/--powers or --library")
        lib = library_hint(problem)
    if lib.n != n or lib.N != N:
        raise DataError(f"library is for n={lib.n}, N={lib.N} but data has n={n}, N={N}")
    return lib


def resolve_hyperparameters(args, data: Dataset) -> tuple[Hyperparameters, bool]:
    """Effective hyperparameters, and whether beta is still to be estimated from the processed data."""
    problem = _problem_of(data)
    base = recommended_hyperparameters(problem) if problem else Hyperparameters()
    changes = {name: getattr(args, name) for name in HP_FLAGS if getattr(args, name, None) is not None}
    auto = changes.get("beta") == "auto"
    if auto:
        del changes["beta"]
    try:
        hp = replace(base, **changes)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid hyperparameters: {exc}") from exc
    return hp, auto


def _with_beta(hp: Hyperparameters, auto: bool, data: Dataset, library: TermLibrary) -> Hyperparameters:
    if not auto:
        return hp
    try:
        hp = replace(hp, beta=suggest_beta(data, library, hp))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    log.info("beta auto -> %.6g", hp.beta)
    return hp


def run_pipeline(data: Dataset, args, seed: int | None) -> Dataset:
    """Subsample, then add noise, then denoise; each stage is skipped when not requested."""
    try:
        if args.subsample is not None:
            data = subsample_time(data, args.subsample)
        if args.noise:
            data = add_noise(data, args.noise, 0 if seed is None else seed)
        if args.sv_thresh is not None:
            data = svd_denoise(data, args.sv_thresh, relative=not args.sv_absolute)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    return data


def _seeds(args) -> list[int | None]:
    repeat = args.repeat or 1
    if repeat < 1:
        raise UsageError("--repeat must be at least 1")
    if repeat == 1:
        return [args.seed if args.seed is not None else args.seed_base]
    if args.seed is not None and args.seed_base is not None:
        raise UsageError("use --seed-base with --repeat, not --seed")
    if not args.noise:
        log.warning("--repeat without --noise repeats a deterministic run")
    base = args.seed_base if args.seed_base is not None else (args.seed or 0)
    return [base + r for r in range(repeat)]


def _truth_for(args, data_path) -> CoefficientVector | None:
    path = args.truth
    if path is None:
        sidecar = Path(str(data_path) + ".truth.txt")
        path = sidecar if sidecar.exists() else None
    if path is None:
        return None
    try:
        return CoefficientVector.from_text(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read truth file: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"bad truth file {path}: {exc}") from exc


def _csv(rows: list[dict], header) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _markdown(rows: list[dict], header) -> str:
    def cell(v):
        return f"{v:.3g}" if isinstance(v, float) else str(v)

    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(cell(r[h]) for h in header) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _score(problem: str, method: str, est: CoefficientVector, truth, residual, epochs, flags, zero_tol):
    if truth is None:
        return {"problem": problem, "method": method, "tpr": "", "l1_coeff_err": "",
                "l2_residual": residual, "epochs": epochs, "flags": ";".join(flags)}
    e, t = align(est, truth)
    return metrics_row(problem, method, e, t, residual, epochs, flags, zero_tol)


def report_text(alpha: CoefficientVector, header: dict) -> str:
    """Recovered PDE as comment lines followed by the coefficient table."""
    lines = [f"# {line}" for line in format_pde(alpha)]
    lines += [f"# {k}: {v}" for k, v in header.items()]
    return "\n".join(lines) + "\n" + alpha.to_text()


def parse_report_header(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.startswith("# ") and ": " in line:
            k, v = line[2:].split(": ", 1)
            out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    overrides = _overrides(args.set)
    for key in ("nx", "nt", "dt", "seed"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    try:
        problem = Problem(args.problem)
    except ValueError:
        raise UsageError(f"unknown problem {args.problem!r}; choose from {', '.join(p.value for p in Problem)}") from None
    try:
        data, truth, library = generate(ProblemSpec(problem, overrides))
    except GenerationError as exc:
        raise Diverged(str(exc)) from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out or f"{problem.value}.{args.format or 'pded'}")
    fmt = args.format or ("csv" if out.suffix == ".csv" else "pded")
    if fmt == "csv" and data.grid.n != 1:
        raise UsageError("--format csv is only available for one-dimensional problems")
    data = Dataset(data.grid, data.times, data.values,
                   {**data.metadata, "boundary": data.grid.boundary.value, "overrides": overrides})
    save_dataset(data, out, fmt)
    atomic_write(str(out) + ".truth.txt", truth.to_text())
    print(f"wrote {out} ({len(data.times)} snapshots, grid {'x'.join(map(str, data.grid.dims))})")
    for line in format_pde(truth):
        print(f"  truth: {line}")
    return EXIT_OK


def cmd_noise(args) -> int:
    data = _load(args.data, args.format)
    try:
        noisy = add_noise(data, args.sigma, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = args.out or _derived(args.data, "noisy")
    save_dataset(noisy, out, args.format)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_denoise(args) -> int:
    data = _load(args.data, args.format)
    try:
        clean = svd_denoise(data, args.sv_thresh, relative=not args.absolute)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = args.out or _derived(args.data, "denoised")
    save_dataset(clean, out, args.format)
    print(f"wrote {out} (kept rank {clean.metadata.get('svd_rank')})")
    return EXIT_OK


def _derived(path, tag: str) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}.{tag}{p.suffix or '.pded'}"))


LATE_DEFAULTS = {"zero_tol": 1e-3, "ridge_lambda": 1e-5, "stridge_tol": 1e-3, "stridge_iters": 10}


def _setup(parser, args):
    config = _apply_config(parser, args)
    for key, value in LATE_DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    data = _load(args.data, args.format)
    threads = _threads(args)
    library = resolve_library(args, data)
    hp, auto = resolve_hyperparameters(args, data)
    return config, data, threads, library, hp, auto


def _run_discover(data, library, hp, threads, verbose):
    def progress(epoch, alpha, residual):
        if verbose and (epoch == 1 or epoch % 25 == 0):
            log.info("epoch %d  residual %.3e  active %d", epoch, residual, int(np.count_nonzero(alpha)))

    try:
        report = discover(data, library, hp, callback=progress, threads=threads)
    except DivergenceError as exc:
        raise Diverged(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    return report


def cmd_discover(args, parser) -> int:
    config, data0, threads, library, hp0, auto = _setup(parser, args)
    truth = _truth_for(args, args.data)
    prefix = args.out_prefix or str(Path(args.data).with_suffix("")) + ".report"
    seeds = _seeds(args)
    rows = []
    diverged = False
    problem = data0.metadata.get("problem", Path(args.data).stem)
    for seed in seeds:
        data = run_pipeline(data0, args, seed)
        hp = _with_beta(hp0, auto, data, library)
        report = _run_discover(data, library, hp, threads, args.verbose)
        tag = prefix if len(seeds) == 1 else f"{prefix}.seed{seed}"
        residual = float(report.per_epoch_l2_residual[-1]) if report.epochs_run else float("nan")
        header = {"epochs": report.epochs_run, "l2_residual": residual,
                  "flags": ";".join(report.flag_names()) or "none", "seed": seed}
        atomic_write(tag + ".txt", report_text(report.final_alpha, header))
        atomic_write(tag + ".trajectory.csv", report.trajectory_csv())
        meta = {
            "command": "discover",
            "version": __version__,
            "input": str(args.data),
            "problem": problem,
            "hyperparameters": hp.as_dict(),
            "beta_auto": auto,
            "config_file": args.config,
            "config_values": config,
            "threads": threads,
            "pipeline": {"subsample": args.subsample, "noise": args.noise, "seed": seed,
                         "sv_thresh": args.sv_thresh, "sv_relative": not args.sv_absolute,
                         "order": ["subsample", "noise", "denoise", "discover"]},
            "library": [t.label() + f" [eq {t.eq_index}]" for t in library],
            "epochs_run": report.epochs_run,
            "flags": report.flag_names(),
            "blowups": report.blowups,
            "dataset_metadata": data.metadata,
        }
        atomic_write(tag + ".meta.json", json.dumps(_jsonable(meta), indent=2, sort_keys=True))
        rows.append({**_score(problem, "adjoint", report.final_alpha, truth, residual, report.epochs_run,
                              report.flag_names(), args.zero_tol), "seed": seed})
        if len(seeds) > 1:
            print(f"seed {seed}:")
        for line in format_pde(report.final_alpha):
            print(line)
        print(f"epochs {report.epochs_run}, residual {residual:.3e}, flags {header['flags']}")
        diverged |= Flag.ABORTED in report.flags
    atomic_write(prefix + ".metrics.csv", _csv(rows, METRICS_HEADER + ("seed",)))
    if diverged:
        print("error: discovery aborted on numerical divergence", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_compare(args, parser) -> int:
    config, data0, threads, library, hp0, auto = _setup(parser, args)
    truth = _truth_for(args, args.data)
    if truth is None:
        raise DataError("compare needs a truth file (--truth, or DATA.truth.txt next to the dataset)")
    prefix = args.out_prefix or str(Path(args.data).with_suffix("")) + ".compare"
    problem = data0.metadata.get("problem", Path(args.data).stem)
    rows = []
    diverged = False
    hp = hp0
    for seed in _seeds(args):
        data = run_pipeline(data0, args, seed)
        hp = _with_beta(hp0, auto, data, library)
        report = _run_discover(data, library, hp, threads, args.verbose)
        diverged |= Flag.ABORTED in report.flags
        res = float(report.per_epoch_l2_residual[-1]) if report.epochs_run else float("nan")
        rows.append({**_score(problem, "adjoint", report.final_alpha, truth, res, report.epochs_run,
                              report.flag_names(), args.zero_tol), "seed": seed})
        try:
            base, results = stridge_discover(data, library, ridge_lambda=args.ridge_lambda, tol=args.stridge_tol,
                                             max_iters=args.stridge_iters)
        except ValueError as exc:
            raise DataError(f"baseline failed: {exc}") from exc
        base_res = l2_residual(data, library, base, hp)
        flags = ["singular"] if any(r.singular for r in results) else []
        rows.append({**_score(problem, "stridge", base, truth, base_res, max(r.iterations for r in results),
                              flags, args.zero_tol), "seed": seed})
        for method, est in (("adjoint", report.final_alpha), ("stridge", base)):
            for line in format_pde(est):
                print(f"{method:8s} {line}")
    header = METRICS_HEADER + ("seed",)
    atomic_write(prefix + ".metrics.csv", _csv(rows, header))
    atomic_write(prefix + ".md", _markdown(rows, header))
    meta = {"command": "compare", "version": __version__, "input": str(args.data), "hyperparameters": hp.as_dict(),
            "beta_auto": auto,
            "config_values": config, "threads": threads,
            "baseline": {"ridge_lambda": args.ridge_lambda, "tol": args.stridge_tol, "max_iters": args.stridge_iters},
            "pipeline": {"subsample": args.subsample, "noise": args.noise, "sv_thresh": args.sv_thresh,
                         "seeds": _seeds(args)}}
    atomic_write(prefix + ".meta.json", json.dumps(_jsonable(meta), indent=2, sort_keys=True))
    sys.stdout.write(_markdown(rows, header))
    if diverged:
        print("error: adjoint discovery aborted on numerical divergence", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_sweep(args, parser) -> int:
    """Re-run discovery over a list of values for one hyperparameter."""
    config, data0, threads, library, hp, auto = _setup(parser, args)
    name = args.param.replace("-", "_")
    if name not in HP_FLAGS:
        raise UsageError(f"unknown hyperparameter {args.param!r}")
    truth = _truth_for(args, args.data)
    data = run_pipeline(data0, args, args.seed)
    if name != "beta":
        hp = _with_beta(hp, auto, data, library)
    problem = data0.metadata.get("problem", Path(args.data).stem)
    rows = []
    for raw in args.values:
        try:
            value = type(getattr(hp, name))(_number(raw) if not isinstance(getattr(hp, name), str) else raw)
            point = replace(hp, **{name: value})
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value {raw!r} for {name}: {exc}") from exc
        report = _run_discover(data, library, point, threads, args.verbose)
        res = float(report.per_epoch_l2_residual[-1]) if report.epochs_run else float("nan")
        row = _score(problem, "adjoint", report.final_alpha, truth, res, report.epochs_run, report.flag_names(),
                     args.zero_tol)
        rows.append({name: value, **row})
        print(f"{name}={value}: epochs {report.epochs_run}, residual {res:.3e}, tpr {row['tpr']}")
    out = args.out or str(Path(args.data).with_suffix("")) + f".sweep-{name}.csv"
    atomic_write(out, _csv(rows, (name,) + METRICS_HEADER))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        text = Path(args.report).read_text()
        est = CoefficientVector.from_text(text)
    except OSError as exc:
        raise DataError(f"cannot read report: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"bad report file: {exc}") from exc
    try:
        truth = CoefficientVector.from_text(Path(args.truth).read_text())
    except OSError as exc:
        raise DataError(f"cannot read truth file: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"bad truth file: {exc}") from exc
    header = parse_report_header(text)
    if args.data is not None:
        data = _load(args.data, args.format)
        residual = l2_residual(data, est.library, est)
    else:
        residual = float(header.get("l2_residual", "nan"))
    epochs = int(header.get("epochs", 0))
    flags = [] if header.get("flags", "none") == "none" else header["flags"].split(";")
    e, t = align(est, truth)
    row = metrics_row(args.problem or Path(args.report).stem, args.method, e, t, residual, epochs, flags, args.zero_tol)
    text_out = _csv([row], METRICS_HEADER)
    if args.out:
        atomic_write(args.out, text_out)
    sys.stdout.write(text_out)
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adjointpde", description="Discover governing PDEs from gridded space-time data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate a benchmark problem")
    p.add_argument("problem", help=", ".join(x.value for x in Problem))
    p.add_argument("--out")
    p.add_argument("--format", choices=["pded", "csv"])
    p.add_argument("--nx", type=int)
    p.add_argument("--nt", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="any other generator parameter")

    p = sub.add_parser("noise", help="add multiplicative Gaussian noise")
    p.add_argument("data")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--format", choices=["pded", "csv"])

    p = sub.add_parser("denoise", help="truncated-SVD denoising")
    p.add_argument("data")
    p.add_argument("--sv-thresh", type=float, required=True)
    p.add_argument("--absolute", action="store_true", help="threshold is an absolute singular value")
    p.add_argument("--out")
    p.add_argument("--format", choices=["pded", "csv"])

    for name, text in (("discover", "run adjoint-based discovery"),
                       ("compare", "adjoint discovery next to the STRidge baseline"),
                       ("sweep", "hyperparameter sensitivity sweep")):
        p = sub.add_parser(name, help=text)
        p.add_argument("data")
        _add_common(p)
        _add_library_flags(p)
        _add_hp_flags(p)
        _add_pipeline_flags(p)
        p.add_argument("--truth", help="truth coefficient file (default: DATA.truth.txt when present)")
        p.add_argument("--zero-tol", type=float, help="support tolerance for TPR (default 1e-3)")
        if name == "compare":
            p.add_argument("--ridge-lambda", type=float, help="default 1e-5")
            p.add_argument("--stridge-tol", type=float, help="default 1e-3")
            p.add_argument("--stridge-iters", type=int, help="default 10")
        if name == "sweep":
            p.add_argument("--param", required=True, help="hyperparameter name, e.g. beta")
            p.add_argument("--values", nargs="+", required=True)
            p.add_argument("--out")
        else:
            p.add_argument("--out-prefix")

    p = sub.add_parser("eval", help="score a stored report against a truth file")
    p.add_argument("report")
    p.add_argument("--truth", required=True)
    p.add_argument("--data", help="dataset for recomputing the L2 residual")
    p.add_argument("--format", choices=["pded", "csv"])
    p.add_argument("--problem")
    p.add_argument("--method", default="adjoint")
    p.add_argument("--zero-tol", type=float, default=1e-3)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "noise":
            return cmd_noise(args)
        if args.command == "denoise":
            return cmd_denoise(args)
        if args.command == "eval":
            return cmd_eval(args)
        handler = {"discover": cmd_discover, "compare": cmd_compare, "sweep": cmd_sweep}[args.command]
        return handler(args, sub)
    except UsageError as exc:
        print(f"adjointpde: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"adjointpde: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Diverged as exc:
        print(f"adjointpde: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
