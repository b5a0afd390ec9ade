"""Command-line front end: ``nddsize analyze | sweep | generate``.

Exit status: 0 when every analysed unit converged, 2 when at least one did
not, 1 on any error (bad input, too little data, usage).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from . import ghr_sim, kde
from .ingestion import (
    VARIABLES, ConfigurationError, ScenarioRules, drivers_below_floor, event_counts,
    extract_events, read_log,
)
from .sufficiency import (
    JOINT, MULTIVARIATE, UNIVARIATE, InsufficientDataError, SufficiencyConfig,
    SufficiencyResult, compute_traces, epsilon_sweep, minutes, summarize,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
POOLED_UNIT = "ALL"

log = logging.getLogger("nddsize")


class CommandError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1; 2 means "not converged"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# shared pipeline

def _column_map(pairs: Sequence[str] | None) -> dict[str, str]:
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise CommandError(f"--column expects canonical=header, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _load_events(args, warnings: list[str]):
    rules = ScenarioRules(
        max_distance=args.max_distance, min_speed=args.min_speed,
        min_duration=args.min_duration, min_events_per_driver=args.min_events,
        rate_hz=args.rate_hz,
    )
    records = []
    inputs = []
    cmap = _column_map(args.column)
    for path in args.inputs:
        try:
            parsed = read_log(path, cmap, args.delimiter)
        except OSError as exc:
            raise CommandError(f"{path}: {exc.strerror or exc}") from exc
        except ConfigurationError as exc:
            raise CommandError(f"{path}: {exc}") from exc
        if parsed.errors and not args.allow_row_errors:
            first = parsed.errors[0]
            raise CommandError(f"{path}: line {first.line}: {first.message}"
                               f" ({len(parsed.errors)} bad row(s) in total)")
        for e in parsed.errors:
            warnings.append(f"{path}: skipped {e}")
        inputs.append({"path": str(path), "rows": len(parsed.records), "row_errors": len(parsed.errors)})
        records += parsed.records

    events = extract_events(records, rules)
    counts = event_counts(events)
    below = set(drivers_below_floor(events, rules))
    for d in sorted(below):
        warnings.append(f"driver {d}: {counts[d]} car-following events, fewer than {rules.min_events_per_driver}")
    samples = {}
    for e in events:
        samples[e.driver_id] = samples.get(e.driver_id, 0) + len(e)
    extraction = {
        "records": len(records),
        "events": len(events),
        "event_samples": sum(samples.values()),
        "per_driver": {
            d: {"events": counts[d], "samples": samples[d], "below_event_floor": d in below}
            for d in sorted(counts)
        },
    }
    return events, rules, inputs, extraction


def _units(events, pool: bool):
    if pool:
        return {POOLED_UNIT: list(events)} if events else {}
    units: dict[str, list] = {}
    for e in events:
        units.setdefault(e.driver_id, []).append(e)
    return dict(sorted(units.items()))


def _configs(args) -> list[SufficiencyConfig]:
    variables = tuple(v.strip() for v in args.variables.split(",")) if args.variables else VARIABLES
    common = dict(m=args.block_size, epsilon=args.epsilon, f=args.rate_hz,
                  pad_factor=args.pad_factor, variables=variables,
                  weighted_joint=args.weighted_joint)
    modes = [UNIVARIATE, MULTIVARIATE] if args.mode == "both" else [args.mode]
    out = []
    for mode in modes:
        ppd = args.grid_points if mode == UNIVARIATE else args.grid_points_per_dim
        try:
            out.append(SufficiencyConfig(mode=mode, points_per_dim=ppd, **common))
        except ValueError as exc:
            raise CommandError(str(exc)) from exc
    return out


def _unit_traces(unit_events, configs):
    return {cfg.mode: compute_traces(unit_events, cfg) for cfg in configs}


def _compute_all(units, configs, jobs: int, warnings: list[str]):
    """Traces per unit and mode; units lacking data are skipped with a warning."""
    def work(item):
        name, evs = item
        try:
            return name, _unit_traces(evs, configs), None
        except (InsufficientDataError, kde.DegenerateVariableError) as exc:
            return name, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        done = list(pool.map(work, units.items()))
    traces, skipped = {}, []
    for name, tr, err in done:
        if tr is None:
            skipped.append({"unit": name, "reason": err})
            warnings.append(f"unit {name} skipped: {err}")
        else:
            traces[name] = tr
    if not traces:
        reasons = "; ".join(f"{s['unit']}: {s['reason']}" for s in skipped) or "no car-following events"
        raise CommandError(reasons)
    return traces, skipped


def _result_doc(res: SufficiencyResult) -> dict:
    f = res.config.f
    variables = {}
    for name, vr in res.per_variable.items():
        tr = res.traces[name]
        variables[name] = {
            "converged": vr.converged,
            "n_star": vr.n_star,
            "t_star_minutes": vr.t_star,
            "kl_at_n_star": tr.value_at(vr.n_star) if vr.converged else None,
            "trace": [
                {"n": int(n), "t_minutes": minutes(int(n), f), "kl": float(k)}
                for n, k in zip(tr.n, tr.kl)
            ],
        }
    return {
        "mode": res.config.mode,
        "converged": res.converged,
        "overall_n_star": res.overall_n_star,
        "overall_t_star_minutes": res.overall_t_star,
        "failed_variables": list(res.failed),
        "variables": variables,
    }


def _trace_tables(results: dict[str, dict[str, SufficiencyResult]]) -> dict[str, str]:
    rows: dict[str, list] = {}
    for unit, by_mode in results.items():
        for res in by_mode.values():
            for name, tr in res.traces.items():
                for n, k in zip(tr.n, tr.kl):
                    rows.setdefault(name, []).append(
                        (unit, name, int(n), _fmt(minutes(int(n), res.config.f)), _fmt(float(k))))
    tables = {}
    for name, body in rows.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("unit", "variable", "n", "t_minutes", "kl"))
        w.writerows(body)
        tables[name] = buf.getvalue()
    return tables


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _header(command: str, args, configs, rules) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": {
            "modes": [c.mode for c in configs],
            "block_size": args.block_size,
            "epsilon": args.epsilon,
            "rate_hz": args.rate_hz,
            "grid_points": args.grid_points,
            "grid_points_per_dim": args.grid_points_per_dim,
            "pad_factor": args.pad_factor,
            "variables": list(configs[0].variables),
            "weighted_joint": args.weighted_joint,
            "pool_drivers": args.pool_drivers,
            "rules": {
                "max_distance": rules.max_distance,
                "min_speed": rules.min_speed,
                "min_duration": rules.min_duration,
                "min_events_per_driver": rules.min_events_per_driver,
            },
        },
    }


# ---------------------------------------------------------------------------
# commands

def cmd_analyze(args) -> int:
    warnings: list[str] = []
    configs = _configs(args)
    events, rules, inputs, extraction = _load_events(args, warnings)
    units = _units(events, args.pool_drivers)
    traces, skipped = _compute_all(units, configs, args.jobs, warnings)

    results = {
        unit: {cfg.mode: summarize(by_mode[cfg.mode], cfg) for cfg in configs}
        for unit, by_mode in traces.items()
    }
    converged = all(r.converged for by_mode in results.values() for r in by_mode.values())
    doc = _header("analyze", args, configs, rules)
    doc.update({
        "status": "converged" if converged else "not_converged",
        "inputs": inputs,
        "extraction": extraction,
        "results": [
            {"unit": unit, "analyses": {mode: _result_doc(r) for mode, r in by_mode.items()}}
            for unit, by_mode in results.items()
        ],
        "skipped": skipped,
        "warnings": warnings,
    })
    out = Path(args.out)
    _write_atomic(out / "report.json", _dump(doc))
    for name, text in _trace_tables(results).items():
        _write_atomic(out / f"trace_{name}.csv", text)
    for unit, by_mode in results.items():
        for mode, r in by_mode.items():
            status = "converged" if r.converged else f"NOT converged ({', '.join(r.failed)})"
            n = f"n*={r.overall_n_star} ({_fmt(r.overall_t_star)} min)" if r.converged else ""
            print(f"{unit} [{mode}]: {status} {n}".rstrip())
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _parse_epsilons(text: str | None) -> list[float]:
    items = [s for s in (text or "").replace(" ", ",").split(",") if s]
    if not items:
        raise CommandError("sweep needs a nonempty --epsilons list")
    try:
        eps = [float(s) for s in items]
    except ValueError as exc:
        raise CommandError(f"bad epsilon list {text!r}") from exc
    if any(e <= 0 for e in eps) or len(set(eps)) != len(eps):
        raise CommandError("epsilons must be positive and distinct")
    return eps


def cmd_sweep(args) -> int:
    warnings: list[str] = []
    epsilons = _parse_epsilons(args.epsilons)
    configs = _configs(args)
    events, rules, inputs, extraction = _load_events(args, warnings)
    units = _units(events, args.pool_drivers)
    traces, skipped = _compute_all(units, configs, args.jobs, warnings)

    rows = []
    all_converged = True
    for unit, by_mode in traces.items():
        for cfg in configs:
            for eps, res in epsilon_sweep(units[unit], cfg, epsilons, traces=by_mode[cfg.mode]):
                all_converged &= res.converged
                rows.append({
                    "unit": unit,
                    "mode": cfg.mode,
                    "epsilon": eps,
                    "converged": res.converged,
                    "n_star": res.overall_n_star,
                    "t_star_minutes": res.overall_t_star,
                    "per_variable": {k: v.n_star for k, v in res.per_variable.items()},
                })
    doc = _header("sweep", args, configs, rules)
    doc.update({
        "epsilons": epsilons,
        "inputs": inputs,
        "extraction": extraction,
        "rows": rows,
        "skipped": skipped,
        "warnings": warnings,
    })
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("unit", "mode", "epsilon", "n_star", "t_minutes", "converged"))
    for r in rows:
        w.writerow((r["unit"], r["mode"], _fmt(r["epsilon"]),
                    "" if r["n_star"] is None else r["n_star"],
                    "" if r["t_star_minutes"] is None else _fmt(r["t_star_minutes"]),
                    int(r["converged"])))
    out = Path(args.out)
    _write_atomic(out / "sweep.json", _dump(doc))
    _write_atomic(out / "sweep.csv", buf.getvalue())
    print(buf.getvalue(), end="")
    return EXIT_OK if all_converged else EXIT_NOT_CONVERGED


def cmd_generate(args) -> int:
    path = args.scenario or ghr_sim.default_scenario_path()
    try:
        spec = ghr_sim.load_scenario(path)
    except OSError as exc:
        raise CommandError(f"{path}: {exc.strerror or exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise CommandError(f"{path}: bad scenario: {exc}") from exc
    try:
        data = ghr_sim.generate_dataset(spec, args.seed)
    except ghr_sim.CollisionError as exc:
        raise CommandError(str(exc)) from exc
    out = Path(args.output)
    _write_atomic(out, data.decode("utf-8"))
    rows = data.count(b"\n") - 1
    print(f"wrote {rows} rows to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def _analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("inputs", nargs="+", help="driving log(s), CSV or TSV")
    p.add_argument("--out", default="nddsize-out", help="output directory")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--block-size", type=int, default=2000, help="m, samples per block")
    p.add_argument("--rate-hz", type=float, default=10.0)
    p.add_argument("--grid-points", type=int, default=kde.DEFAULT_POINTS_1D)
    p.add_argument("--grid-points-per-dim", type=int, default=kde.DEFAULT_POINTS_ND)
    p.add_argument("--pad-factor", type=float, default=kde.DEFAULT_PAD)
    p.add_argument("--mode", choices=("univariate", "multivariate", "both"), default="univariate")
    p.add_argument("--weighted-joint", action="store_true",
                   help="cell-volume weighted joint KL instead of the plain grid sum")
    p.add_argument("--variables", help="comma list from v_e,a_e,delta_v,delta_d")
    p.add_argument("--max-distance", type=float, default=120.0)
    p.add_argument("--min-speed", type=float, default=5.0)
    p.add_argument("--min-duration", type=float, default=30.0)
    p.add_argument("--min-events", type=int, default=300,
                   help="warn about drivers with fewer events")
    p.add_argument("--pool-drivers", action="store_true", help="one combined analysis")
    p.add_argument("--column", action="append", metavar="CANON=HEADER",
                   help="map a canonical column to a header name (repeatable)")
    p.add_argument("--delimiter", help="field delimiter (default: sniffed)")
    p.add_argument("--allow-row-errors", action="store_true",
                   help="skip malformed rows instead of failing")
    p.add_argument("--jobs", type=int, default=1, help="units analysed concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nddsize", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="find the sufficient data amount")
    _analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="n* for several epsilon thresholds")
    _analysis_flags(p)
    p.add_argument("--epsilons", required=True, help="comma-separated thresholds")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("generate", help="write a synthetic GHR driving log")
    p.add_argument("--scenario", help="scenario JSON (default: bundled)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, ValueError, ArithmeticError) as exc:
        print(f"nddsize: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
