"""The ``carpet`` command.

Usage::

    carpet <check|compensation|pressure|dimension|mcmullen|oracle|render|report> SPEC [flags]

Every subcommand prints one JSON object::

    {"command": ..., "spec": ..., "knobs": {...}, "result": {...}}

or, on failure, ``"error": {"code": ..., "message": ...}`` in place of
``result``.  Exit status: 0 success, 2 no applicable theorem or not a full
shift, 3 invalid specification, 4 numerical failure.
"""

from __future__ import annotations

import os

_THREADS = os.environ.get("CARPET_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse  # noqa: E402
import dataclasses  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from fractions import Fraction  # noqa: E402

import numpy as np  # noqa: E402

from . import errors  # noqa: E402
from .compensation import build_G, dump  # noqa: E402
from .dimension import (  # noqa: E402
    hausdorff_dimension,
    mcmullen_dimension,
    pbm_bytes,
    render,
    weighted_entropy_oracle,
)
from .hypocheck import CPRIME_DEPTH, classify  # noqa: E402
from .pressure import BISECT_TOL, DEFAULT_HORIZON, pressure  # noqa: E402
from .specfile import SpecFile, parse_spec  # noqa: E402
from .symdyn import count_words  # noqa: E402

EXIT_OK = 0
EXIT_THEOREM = 2
EXIT_SCHEMA = 3
EXIT_NUMERIC = 4

_EXIT_OF = {
    errors.NoApplicableTheorem: EXIT_THEOREM,
    errors.NotFullShift: EXIT_THEOREM,
    errors.HypothesisNotCertified: EXIT_THEOREM,
    errors.SchemaError: EXIT_SCHEMA,
    errors.InvalidFactorMap: EXIT_SCHEMA,
    errors.EmptySubshift: EXIT_SCHEMA,
    errors.NotAWord: EXIT_SCHEMA,
    errors.NotIrreducible: EXIT_SCHEMA,
    errors.RootNotBracketed: EXIT_NUMERIC,
    errors.SeriesDiverges: EXIT_NUMERIC,
    errors.TooLarge: EXIT_NUMERIC,
}

DEFAULT_SYMBOLIC_TAU = 0.5
DEFAULT_ORACLE_HORIZON = 10
DEFAULT_COMPENSATION_DEPTH = 8
MAX_ORACLE_SYMBOLS = 5


class CommandFailed(Exception):
    def __init__(self, code: str, message: str, status: int, extra: dict | None = None):
        super().__init__(message)
        self.code = code
        self.status = status
        self.extra = extra or {}


def jsonable(obj):
    """Convert results to plain JSON values; non-finite floats become strings."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if f.repr}
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, tuple) else " ".join(map(str, k)): jsonable(v)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(jsonable(v) for v in obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _failure(exc: Exception) -> CommandFailed:
    if isinstance(exc, CommandFailed):
        return exc
    for cls, status in _EXIT_OF.items():
        if isinstance(exc, cls):
            return CommandFailed(exc.code, str(exc), status)
    if isinstance(exc, errors.CarpetError):
        return CommandFailed(exc.code, str(exc), EXIT_NUMERIC)
    if isinstance(exc, (ArithmeticError, OverflowError)):
        return CommandFailed("NumericFailure", str(exc), EXIT_NUMERIC)
    raise exc


def _need_carpet(spec: SpecFile, what: str):
    if spec.carpet is None:
        raise errors.SchemaError(f"{what} needs a carpet specification")
    return spec.carpet


def _tau_for(spec: SpecFile, tau):
    if tau is not None:
        return float(tau)
    if spec.carpet is not None:
        return 1.0 - math.log(spec.carpet.m) / math.log(spec.carpet.l)
    return DEFAULT_SYMBOLIC_TAU


def _alpha_for(spec: SpecFile, alpha):
    if alpha is not None:
        return float(alpha)
    if spec.carpet is not None:
        return math.log(spec.carpet.l) / math.log(spec.carpet.m) - 1.0
    raise errors.SchemaError("--alpha is required for symbolic specifications")


# -- subcommands -------------------------------------------------------------------


def cmd_check(spec: SpecFile, args) -> dict:
    pi = spec.pi
    if pi.distinguished is None:
        return {"setting": "neither", "applicable_theorems": [],
                "notes": ["no codomain symbol has a one-point fiber"]}
    report = classify(pi, cprime_depth=args.cprime_depth)
    out = jsonable(report)
    out["gibbs"] = report.gibbs
    return out


def cmd_compensation(spec: SpecFile, args) -> dict:
    G = build_G(spec.pi)
    rows = [[w, v] for w, v in dump(G, args.depth)]
    rows = jsonable(rows)
    digest = hashlib.sha256(json.dumps(rows, sort_keys=True).encode()).hexdigest()
    return {"case": G.case, "depth": args.depth, "tail_values": jsonable(G.tail_values),
            "grid_partition": jsonable(G.grid_partition), "rows": rows, "digest": digest}


def cmd_pressure(spec: SpecFile, args) -> dict:
    tau = _tau_for(spec, args.tau)
    G = build_G(spec.pi) if tau != 0.0 else None
    res = pressure(spec.pi, tau, G, args.horizon)
    return {"tau": res.tau, "pressure": res.pressure, "lambda": res.lam,
            "bracket": list(res.bracket), "method": res.method, "depth": res.depth,
            "tail_bound": jsonable(res.tail_bound), "certified": True,
            "case": G.case if G is not None else "zero-potential"}


def _oracle_result(spec: SpecFile, alpha: float, args) -> dict:
    pi = spec.pi
    if len(pi.domain.essential) > MAX_ORACLE_SYMBOLS:
        raise errors.TooLarge(f"oracle supports at most {MAX_ORACLE_SYMBOLS} domain symbols")
    br = weighted_entropy_oracle(pi.domain, pi.codomain, pi, alpha, memory=args.memory,
                                 horizon=args.oracle_horizon, seed=args.seed)
    return {"alpha": alpha, "memory": args.memory, "horizon": args.oracle_horizon,
            "upper_horizon": br.upper_horizon, "seed": args.seed,
            "lower": br.lower, "upper": br.upper, "width": br.upper - br.lower}


def cmd_dimension(spec: SpecFile, args) -> dict:
    carpet = _need_carpet(spec, "dimension")
    try:
        res = hausdorff_dimension(carpet, args.horizon)
    except errors.NoApplicableTheorem as exc:
        extra = {}
        if len(spec.pi.domain.essential) <= MAX_ORACLE_SYMBOLS:
            alpha = _alpha_for(spec, None)
            orc = _oracle_result(spec, alpha, args)
            scale = math.log(carpet.l)
            extra["uncertified_estimate"] = {
                "dimension_bracket": [orc["lower"] / scale, orc["upper"] / scale],
                "source": "weighted entropy oracle", "certified": False}
        raise CommandFailed(exc.code, str(exc), EXIT_THEOREM, extra) from None
    return {"dimension": res.dimension, "bracket": list(res.bracket), "alpha": res.alpha,
            "tau": res.tau, "pressure": res.pressure.pressure, "lambda": res.pressure.lam,
            "pressure_bracket": list(res.pressure.bracket), "method": res.method,
            "theorems": list(res.theorems), "gibbs": res.gibbs, "certified": True}


def cmd_mcmullen(spec: SpecFile, args) -> dict:
    carpet = _need_carpet(spec, "mcmullen")
    return {"dimension": mcmullen_dimension(carpet), "row_counts": carpet.row_counts()}


def cmd_oracle(spec: SpecFile, args) -> dict:
    return _oracle_result(spec, _alpha_for(spec, args.alpha), args)


def cmd_render(spec: SpecFile, args) -> dict:
    carpet = _need_carpet(spec, "render")
    if not args.output:
        raise errors.SchemaError("render needs -o FILE")
    bitmap = render(carpet, args.depth)
    data = pbm_bytes(bitmap)
    with open(args.output, "wb") as fh:
        fh.write(data)
    return {"width": int(bitmap.shape[1]), "height": int(bitmap.shape[0]),
            "depth": args.depth, "set_pixels": int(bitmap.sum()),
            "allowed_words": count_words(spec.pi.domain, args.depth),
            "path": str(args.output), "sha256": hashlib.sha256(data).hexdigest()}


def cmd_report(spec: SpecFile, args) -> dict:
    sections = [("check", cmd_check), ("compensation", cmd_compensation),
                ("pressure", cmd_pressure)]
    if spec.carpet is not None:
        sections.append(("dimension", cmd_dimension))
    if len(spec.pi.domain.essential) <= MAX_ORACLE_SYMBOLS and (
            spec.carpet is not None or args.alpha is not None):
        sections.append(("oracle", cmd_oracle))
    out, timings, status = {}, {}, EXIT_OK
    for name, fn in sections:
        start = time.perf_counter()
        try:
            out[name] = fn(spec, args)
        except Exception as exc:  # noqa: BLE001 - each section reports its own failure
            fail = _failure(exc)
            out[name] = {"error": {"code": fail.code, "message": str(fail), **fail.extra}}
            status = max(status, fail.status)
        timings[name] = time.perf_counter() - start
    if args.timings:
        out["timings"] = timings
    return out, status


COMMANDS = {
    "check": cmd_check,
    "compensation": cmd_compensation,
    "pressure": cmd_pressure,
    "dimension": cmd_dimension,
    "mcmullen": cmd_mcmullen,
    "oracle": cmd_oracle,
    "render": cmd_render,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carpet", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("spec", help="specification file (JSON)")
    p.add_argument("--tau", type=float, default=None,
                   help="potential exponent (default: carpet tau, or 0.5)")
    p.add_argument("--alpha", type=float, default=None,
                   help="weight of the image entropy (default: carpet alpha)")
    p.add_argument("--depth", type=int, default=None,
                   help="table depth for compensation, pixel depth for render")
    p.add_argument("--horizon", type=int, default=None,
                   help="pressure horizon (default 300); oracle horizon for oracle (default 10)")
    p.add_argument("--memory", type=int, default=1, help="Markov memory of the oracle")
    p.add_argument("--seed", type=int, default=0, help="seed for oracle restarts")
    p.add_argument("--cprime-depth", type=int, default=CPRIME_DEPTH, dest="cprime_depth")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings")
    p.add_argument("-o", "--output", default=None, help="output file for render")
    return p


def _knobs(args) -> dict:
    return {"tau": args.tau, "alpha": args.alpha, "depth": args.depth,
            "horizon": args.horizon, "oracle_horizon": args.oracle_horizon,
            "memory": args.memory, "seed": args.seed, "cprime_depth": args.cprime_depth,
            "bisection_xtol": BISECT_TOL}


def run(argv=None, stdout=None) -> int:
    """Run one subcommand; returns the exit status."""
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    args.oracle_horizon = DEFAULT_ORACLE_HORIZON
    if args.command == "oracle" and args.horizon is not None:
        args.oracle_horizon = args.horizon
    if args.command == "oracle" or args.horizon is None:
        args.horizon = DEFAULT_HORIZON
    if args.depth is None:
        args.depth = 1 if args.command == "render" else DEFAULT_COMPENSATION_DEPTH
    out = {"command": args.command, "spec": args.spec}
    status = EXIT_OK
    try:
        spec = parse_spec(args.spec)
        out["spec"] = spec.name
        out["knobs"] = _knobs(args)
        result = COMMANDS[args.command](spec, args)
        if args.command == "report":
            result, status = result
        out["result"] = result
    except Exception as exc:  # noqa: BLE001 - mapped to exit statuses
        fail = _failure(exc)
        out["error"] = {"code": fail.code, "message": str(fail), **jsonable(fail.extra)}
        status = fail.status
    stdout.write(json.dumps(jsonable(out), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return status


def main(argv=None) -> int:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
