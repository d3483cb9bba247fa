"""Command-line front end.

Settings come from, in increasing precedence: built-in defaults, the
``POOLDECODE_SEED`` environment variable (seed only), a ``key=value``
config file given with ``--config``, and command-line flags.  The resolved
settings are echoed as ``#`` lines at the top of every output, and
``--dump-config`` writes them in a form ``--config`` reads back.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error
(including a failed ``validate`` check).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import warnings

from . import __version__
from .bounds import (SystemParams, lower_bound_order, sufficient_tests_nonuniform,
                     sufficient_tests_uniform)
from .harness import (INDIRAL_NOTE, ExperimentSpec, TargetUnreachable, canonical_decoder,
                      estimate_aper, find_min_tests, robustness_table, search_flags,
                      summary_row, sweep_aper_vs_M, sweep_M_vs_L, sweep_noise, write_csv)
from .model import NoiseParams
from .validate import run_all

__all__ = ["main", "UsageError", "DEFAULTS"]

SUBCOMMANDS = ("simulate", "sweep", "min-tests", "bounds", "robustness", "validate")

_INT = ("N", "K", "L", "M", "trials", "seed", "K_hat", "M_lo", "M_hi", "probe_trials",
        "final_trials")
_FLOAT = ("u", "q", "eps0", "psi", "target", "c0")
_BOOL = ("u_known",)

DEFAULTS = {
    "N": 256, "K": 16, "L": 64, "M": 150, "u": 0.05, "q": 0.1, "trials": 500, "seed": 0,
    "decoder": "CoAl", "decoders": None, "eps0": 0.01, "psi": None, "K_hat": None,
    "u_known": False, "tie_rule": "random", "target": 0.1, "M_lo": 1, "M_hi": 20000,
    "probe_trials": 500, "final_trials": 2000, "M_grid": None, "L_grid": None,
    "u_grid": None, "q_grid": None, "delta_k": "0.75,1.5,2.0", "c0": 1.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _convert(key: str, value: str):
    try:
        if key in _INT:
            return int(value)
        if key in _FLOAT:
            return float(value)
        if key in _BOOL:
            low = value.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        return value.strip()
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None


def read_config(text: str) -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` lines are skipped."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise UsageError(f"config line {n}: expected key=value")
        if key not in DEFAULTS:
            raise UsageError(f"config line {n}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def format_config(cfg: dict) -> list:
    lines = []
    for key in DEFAULTS:
        v = cfg.get(key)
        if v is None:
            continue
        lines.append(f"{key}={str(v).lower() if isinstance(v, bool) else v}")
    return lines


def _add_flags(p: argparse.ArgumentParser) -> None:
    for key in DEFAULTS:
        flag = "--" + key.replace("_", "-")
        if key in _BOOL:
            p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None)
        else:
            typ = int if key in _INT else float if key in _FLOAT else str
            p.add_argument(flag, dest=key, type=typ, default=None)
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--dump-config", help="write the resolved settings to this path")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: available CPUs)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pooldecode",
                     description="Non-defective subset recovery from noisy pooled tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "estimate the error rate of one decoder at one M",
        "sweep": "error rate over an M, u or q grid, or minimal M over an L grid",
        "min-tests": "smallest M reaching the target error rate",
        "bounds": "sufficient-test formulas and order-level lower bounds",
        "robustness": "test-count ratio under a mismatched defective count",
        "validate": "statistical checks of the channel and the moment formulas",
    }
    for name in SUBCOMMANDS:
        _add_flags(sub.add_parser(name, help=helps[name]))
    return parser


def resolve(args: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS)
    if environ.get("POOLDECODE_SEED"):
        cfg["seed"] = _convert("seed", environ["POOLDECODE_SEED"])
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg.update(read_config(fh.read()))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    for key in DEFAULTS:
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    return cfg


def _grid(cfg, key, typ):
    text = cfg.get(key)
    if not text:
        return None
    try:
        return [typ(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad grid for {key}: {text!r}") from None


def _spec(cfg: dict) -> ExperimentSpec:
    try:
        return ExperimentSpec(
            N=cfg["N"], K=cfg["K"], L=cfg["L"], M=cfg["M"],
            noise=NoiseParams(cfg["u"], cfg["q"]), decoder=cfg["decoder"],
            trials=cfg["trials"], root_seed=cfg["seed"], K_hat=cfg["K_hat"],
            eps0=cfg["eps0"], psi=cfg["psi"], u_known=cfg["u_known"],
            tie_rule=cfg["tie_rule"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _decoders(cfg) -> list | None:
    names = _grid(cfg, "decoders", str)
    if names is None:
        return None
    try:
        return [canonical_decoder(d.strip()) for d in names]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _header(command: str, cfg: dict, decoders) -> list:
    lines = [f"pooldecode {__version__} {command}"] + format_config(cfg)
    if "InDirAl" in decoders:
        lines.append(INDIRAL_NOTE)
    return lines


def _run(command: str, cfg: dict, workers, out) -> int:
    spec = _spec(cfg)
    cfg = dict(cfg, decoder=spec.decoder)
    decoders = _decoders(cfg) or [spec.decoder]
    header = _header(command, cfg, decoders)
    if command == "simulate":
        write_csv([summary_row(spec, estimate_aper(spec, workers))], out, header)
    elif command == "sweep":
        grids = {k: _grid(cfg, k, int if k.startswith(("M", "L")) else float)
                 for k in ("M_grid", "L_grid", "u_grid", "q_grid")}
        given = [k for k, v in grids.items() if v]
        if len(given) != 1:
            raise UsageError("sweep needs exactly one of --M-grid, --L-grid, --u-grid, --q-grid")
        kind = given[0]
        if kind == "M_grid":
            rows = sweep_aper_vs_M(spec, grids[kind], decoders, workers)
        elif kind == "L_grid":
            rows = sweep_M_vs_L(spec, grids[kind], cfg["target"], cfg["M_lo"], cfg["M_hi"],
                                decoders, cfg["probe_trials"], cfg["final_trials"], workers)
        else:
            rows = sweep_noise(spec, u_grid=grids["u_grid"], q_grid=grids["q_grid"],
                               decoders=decoders, workers=workers)
        write_csv(rows, out, header)
    elif command == "min-tests":
        rows = []
        for dec in decoders:
            res = find_min_tests(spec.replace(decoder=dec), cfg["target"], cfg["M_lo"],
                                 cfg["M_hi"], cfg["probe_trials"], cfg["final_trials"],
                                 workers=workers)
            row = summary_row(spec.replace(decoder=dec, M=res.M), res.estimate,
                       M_ci_low=res.M_ci[0], M_ci_high=res.M_ci[1], sweep_id="min_tests")
            row["flags"] = search_flags(row["flags"], res, cfg["M_lo"])
            rows.append(row)
        write_csv(rows, out, header)
    elif command == "robustness":
        rows = robustness_table(spec, _grid(cfg, "delta_k", float), cfg["target"],
                                cfg["M_lo"], cfg["M_hi"], decoders, cfg["probe_trials"],
                                cfg["final_trials"], workers)
        write_csv(rows, out, header)
    elif command == "bounds":
        return _bounds(cfg, out, header)
    elif command == "validate":
        for line in header:
            out.write(f"# {line}\n")
        results = run_all(cfg["seed"])
        for r in results:
            out.write(r.line() + "\n")
        return 0 if all(r.passed for r in results) else 2
    return 0


def _bounds(cfg, out, header) -> int:
    noise = NoiseParams(cfg["u"], cfg["q"])
    try:
        params = SystemParams(cfg["N"], cfg["K"], cfg["L"], noise, c0=cfg["c0"],
                              psi0=cfg["psi"] or 0.0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = [("sufficient_nonuniform", sufficient_tests_nonuniform(params)),
                ("sufficient_uniform", sufficient_tests_uniform(params))]
    try:
        lb = lower_bound_order(cfg["N"], cfg["K"], cfg["L"], noise)
        rows += [("lower_order_no_noise", lb.no_noise), ("lower_order_dilution", lb.dilution),
                 ("lower_order_additive", lb.additive)]
        header = header + [f"lower bounds: {lb.label}"]
    except ValueError as exc:
        header = header + [f"lower bounds unavailable: {exc}"]
    header = header + [f"warning: {w.message}" for w in caught]
    for line in header:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["quantity", "value"])
    for k, v in rows:
        w.writerow([k, v if isinstance(v, int) else f"{v:.6g}"])
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve(args)
    except UsageError as exc:
        print(f"pooldecode: usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("pooldecode: usage error: --threads must be positive", file=sys.stderr)
        return 1
    buf = io.StringIO()
    try:
        if args.dump_config:
            with open(args.dump_config, "w", encoding="utf-8") as fh:
                fh.write("\n".join(format_config(cfg)) + "\n")
        code = _run(args.command, cfg, args.threads, buf)
    except UsageError as exc:
        print(f"pooldecode: usage error: {exc}", file=sys.stderr)
        return 1
    except (TargetUnreachable, RuntimeError, ValueError, OSError, ArithmeticError) as exc:
        print(f"pooldecode: error: {exc}", file=sys.stderr)
        return 2
    text = buf.getvalue()
    try:
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"pooldecode: error: {exc}", file=sys.stderr)
        return 2
    return code
