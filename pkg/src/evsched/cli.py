"""Command-line entry point: ``evsched <command> [options]``.

Commands: ``ingest``, ``metrics``, ``optimize-bill``, ``optimize-peak`` and
``generate``.  Exit codes: 0 success, 1 usage error, 2 data error, 3 solver
time limit without a feasible result.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import reporting as rep
from .ingestion import (SessionFileError, generate_synthetic, group_sessions,
                        load_synthetic_config, read_sessions, synthetic_config_from_mapping,
                        write_sessions)
from .metrics import summarize
from .optimize.bill import optimize_month_bill
from .optimize.peak import DEFAULT_PEAK_PERIOD, optimize_peak_two_stage, peak_mask
from .optimize.problem import SolverConfig
from .tariff import Month, TariffSchedule, e19, load_tariff
from .timegrid import SLOTS_PER_DAY, ConfigurationError, slot_of_time

log = logging.getLogger("evsched")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TIME_LIMIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NoFeasibleResult(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_or_none(text: str) -> float | None:
    if text.lower() in ("none", "inf", "0"):
        return None
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("time limit must be >= 0")
    return value


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad date {text!r}, expected YYYY-MM-DD") from None


def _month(text: str) -> Month:
    try:
        return Month.parse(text)
    except (ValueError, ConfigurationError):
        raise argparse.ArgumentTypeError(f"bad month {text!r}, expected YYYY-MM") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evsched", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    data = _Parser(add_help=False)
    data.add_argument("--input", action="append", default=[], metavar="CSV",
                      help="session file (long form); repeat for several files")
    data.add_argument("--vap", action="append", default=[], help="keep only these VAPs")
    data.add_argument("--month", action="append", default=[], type=_month,
                      help="keep only these months (YYYY-MM)")
    data.add_argument("--threshold", type=float, default=0.01,
                      help="power at or below this (kW) counts as idle")
    data.add_argument("--timezone", help="IANA zone used to reject DST transition days")

    out = _Parser(add_help=False)
    out.add_argument("--out", default="out", help="output directory (created if absent)")
    out.add_argument("--seed", type=int, default=0)

    solver = _Parser(add_help=False)
    solver.add_argument("--mode", choices=("auto", "exact", "heuristic"), default="auto")
    solver.add_argument("--gap", type=float, default=0.05, help="relative optimality gap")
    solver.add_argument("--exact-threshold", type=int, default=200_000,
                        help="largest candidate-schedule count solved exhaustively")
    solver.add_argument("--time-limit", type=_float_or_none, default=60.0,
                        help="seconds per daily solve (0 or none: unlimited)")
    solver.add_argument("--window", help="optimization window HH:MM-HH:MM (default full day)")
    solver.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("ingest", parents=[data, out], help="validate and normalize session files")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("metrics", parents=[data, out],
                       help="infrastructure use, load flexibility and histograms")
    p.add_argument("--holidays", default="",
                   help="comma-separated YYYY-MM-DD dates excluded from business days")
    p.add_argument("--evse-count", type=int,
                   help="EVSEs per VAP (default: distinct EVSEs in the data)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("optimize-bill", parents=[data, out, solver],
                       help="minimize monthly TOU bills with demand charges")
    p.add_argument("--tariff", help="tariff JSON, or 'e19' for the built-in E-19 rates")
    p.set_defaults(func=cmd_optimize_bill)

    p = sub.add_parser("optimize-peak", parents=[data, out, solver],
                       help="two-stage peak shaving inside a system peak window")
    p.add_argument("--peak-period", default=DEFAULT_PEAK_PERIOD, metavar="HH:MM-HH:MM")
    p.set_defaults(func=cmd_optimize_peak)

    p = sub.add_parser("generate", parents=[out], help="write a synthetic session file")
    p.add_argument("--config", help="flat key = value generator config")
    p.add_argument("--n-sessions", type=int)
    p.add_argument("--start-date", type=_date)
    p.add_argument("--n-days", type=int)
    p.set_defaults(func=cmd_generate)
    return parser


# -- shared helpers ------------------------------------------------------------

def _out_dir(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_sessions(args):
    if not args.input:
        raise UsageError("--input is required")
    for f in args.input:
        if not Path(f).is_file():
            raise UsageError(f"input file not found: {f}")
    sessions, rejected = [], []
    for f in args.input:
        try:
            res = read_sessions(f, threshold=args.threshold, timezone=args.timezone)
        except SessionFileError as exc:
            raise DataError(f"{f}: {exc}") from None
        for w in res.warnings:
            print(f"warning: {f}: {w}", file=sys.stderr)
        sessions.extend(res.sessions)
        rejected.extend((f, r) for r in res.rejected)
    seen = set()
    for s in sessions:
        if s.session_id in seen:
            raise DataError(f"session {s.session_id} appears in more than one input file")
        seen.add(s.session_id)
    if args.vap:
        sessions = [s for s in sessions if s.vap_id in set(args.vap)]
    if args.month:
        months = set(args.month)
        sessions = [s for s in sessions if Month.of(s.date) in months]
    if not sessions:
        print("warning: no sessions left after filters; writing empty reports", file=sys.stderr)
    return sessions, rejected


def _solver_config(args) -> SolverConfig:
    try:
        return SolverConfig(mode=args.mode, relative_gap=args.gap,
                            exact_threshold=args.exact_threshold,
                            time_limit=args.time_limit, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _window(args) -> tuple[int, int]:
    if not args.window:
        return 0, SLOTS_PER_DAY - 1
    try:
        start_txt, end_txt = args.window.split("-")
        start = slot_of_time(start_txt, boundary=True)
        end = slot_of_time(end_txt, boundary=True)
    except (ValueError, ConfigurationError):
        raise UsageError(f"bad --window {args.window!r}") from None
    if end <= start:
        raise UsageError("--window must not wrap past midnight")
    return start, end - 1


def _tariff(args) -> TariffSchedule:
    if not args.tariff:
        raise UsageError("optimize-bill needs --tariff (a JSON file or 'e19')")
    if args.tariff.lower() == "e19":
        return e19()
    if not Path(args.tariff).is_file():
        raise UsageError(f"tariff file not found: {args.tariff}")
    try:
        return load_tariff(args.tariff)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{args.tariff}: {exc}") from None


def _versions() -> dict:
    try:
        own = metadata.version("evsched")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"evsched": own, "python": sys.version.split()[0], "numpy": np.__version__,
            "scipy": scipy.__version__}


def _echo(args) -> dict:
    return {k: (v if not callable(v) else v.__name__) for k, v in sorted(vars(args).items())}


def _map(fn, jobs: Sequence[tuple], workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, *zip(*jobs)))
    return [fn(*j) for j in jobs]


def _check_feasible(results) -> None:
    for res in results:
        if not np.isfinite(res.objective):
            raise NoFeasibleResult("solver stopped at the time limit without a feasible schedule")


# -- commands --------------------------------------------------------------------

def cmd_ingest(args) -> list[str]:
    sessions, rejected = _load_sessions(args)
    out = _out_dir(args)
    write_sessions(sorted(sessions, key=lambda s: (s.vap_id, s.date, s.session_id)),
                   out / "sessions.csv")
    rep.write_table(out / "rejected.csv",
                    [{"file": f, "session_id": r.session_id, "line": r.line, "reason": r.reason}
                     for f, r in rejected],
                    ("file", "session_id", "line", "reason"))
    for vap, days in group_sessions(sessions).items():
        n = sum(1 for ss in days.values() for s in ss if s.source_id is None)
        print(f"{vap}: {n} sessions over {len(days)} days")
    print(f"rejected: {len(rejected)}")
    return ["sessions.csv", "rejected.csv"]


def cmd_generate(args) -> list[str]:
    overrides = {"seed": args.seed, "n_sessions": args.n_sessions,
                 "start_date": args.start_date, "n_days": args.n_days}
    try:
        if args.config:
            if not Path(args.config).is_file():
                raise UsageError(f"config file not found: {args.config}")
            cfg = load_synthetic_config(args.config, **overrides)
        else:
            cfg = synthetic_config_from_mapping({k: v for k, v in overrides.items()
                                                 if v is not None})
        sessions = generate_synthetic(cfg)
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    write_sessions(sessions, out / "sessions.csv")
    print(f"{cfg.vap_id}: {len(sessions)} sessions written")
    return ["sessions.csv"]


def cmd_metrics(args) -> list[str]:
    sessions, _ = _load_sessions(args)
    try:
        holidays = [dt.date.fromisoformat(x.strip()) for x in args.holidays.split(",")
                    if x.strip()]
    except ValueError:
        raise UsageError(f"bad --holidays {args.holidays!r}") from None
    if args.evse_count is not None and args.evse_count < 1:
        raise UsageError("--evse-count must be at least 1")
    out = _out_dir(args)
    summaries, monthly = [], []
    for vap in sorted({s.vap_id for s in sessions}):
        mine = [s for s in sessions if s.vap_id == vap]
        evse = args.evse_count or len({s.evse_id for s in mine})
        summaries.append(summarize(mine, vap_id=vap, evse_count=evse, holidays=holidays))
        for month in sorted({Month.of(s.date) for s in mine}):
            days = month.days()
            monthly.append(summarize(mine, vap_id=vap, start=days[0], end=days[-1],
                                     evse_count=evse, holidays=holidays))
    rows = []
    for scope, group in (("all", summaries), ("month", monthly)):
        for m in group:
            rows.append({"scope": scope} | m.row())
    columns = ["scope"] + (list(rows[0].keys())[1:] if rows else [])
    rep.write_table(out / "metrics.csv", rows, columns, comment=rep.WHISKER_NOTE)
    rep.write_table(out / "histograms.csv", list(rep.histogram_rows(summaries)),
                    rep.HISTOGRAM_COLUMNS)
    rep.write_table(out / "histograms_hourly.csv",
                    list(rep.histogram_rows(summaries, hourly=True)), rep.HISTOGRAM_COLUMNS)
    daily = [{"vap_id": m.vap_id, "date": d.isoformat(), "i_use": v}
             for m in monthly for d, v in sorted(m.i_use.items())]
    rep.write_table(out / "i_use_daily.csv", daily, ("vap_id", "date", "i_use"))
    (out / "metrics.json").write_text(
        "[\n" + ",\n".join(m.to_json() for m in summaries) + "\n]\n", encoding="utf-8")
    for m in summaries:
        lf = "n/a" if m.mean_l_flex is None else f"{m.mean_l_flex:.3f}"
        iu = "n/a" if m.mean_i_use is None else f"{m.mean_i_use:.3f}"
        print(f"{m.vap_id}: {m.n_sessions} sessions, {m.n_evse} EVSEs, "
              f"mean i_use {iu}, mean l_flex {lf}")
    return ["metrics.csv", "histograms.csv", "histograms_hourly.csv", "i_use_daily.csv",
            "metrics.json"]


def _bill_job(vap, month, by_day, tariff, config, t_start, t_end):
    return vap, optimize_month_bill(by_day, month, tariff, config, t_start, t_end)


def cmd_optimize_bill(args) -> list[str]:
    tariff = _tariff(args)
    config = _solver_config(args)
    t_start, t_end = _window(args)
    sessions, _ = _load_sessions(args)
    jobs = []
    for vap, days in group_sessions(sessions).items():
        months = sorted({Month.of(d) for d in days})
        for month in months:
            by_day = {d: ss for d, ss in days.items() if Month.of(d) == month}
            jobs.append((vap, month, by_day, tariff, config, t_start, t_end))
    try:
        results = _map(_bill_job, jobs, args.jobs)
    except ConfigurationError as exc:
        raise DataError(str(exc)) from None
    _check_feasible(r for _, mr in results for r in mr.results.values())

    out = _out_dir(args)
    rep.write_table(out / "bill_table.csv", rep.bill_rows(results, tariff), rep.BILL_COLUMNS)
    rep.write_table(out / "bill_detail.csv", rep.bill_detail_rows(results),
                    ("vap_id", "month", "demand_period", "current_peak_kw",
                     "optimized_peak_kw", "current_dc", "optimized_dc"))
    profiles, schedules, solves = [], [], []
    sessions_of = {(v, d): ss for v, days in group_sessions(sessions).items()
                   for d, ss in days.items()}
    for vap, mr in results:
        for i, day in enumerate(mr.month.days()):
            profiles.extend(rep.profile_rows(vap, day, mr.baseline_profiles[i], mr.profiles[i]))
            if (vap, day) in sessions_of:
                schedules.extend(rep.schedule_rows(vap, day, mr.schedules[day],
                                                   sessions_of[(vap, day)]))
        solves.extend(rep.solve_rows(vap, mr.results, "bill"))
    rep.write_table(out / "bill_profiles.csv", profiles, rep.PROFILE_COLUMNS)
    rep.write_table(out / "bill_schedules.csv", schedules, rep.SCHEDULE_COLUMNS)
    rep.write_table(out / "bill_solves.csv", solves)
    for vap, mr in results:
        b, o = mr.baseline_bill, mr.bill
        red = 100 * (b.total - o.total) / b.total if b.total else 0.0
        print(f"{vap} {mr.month}: bill {b.total:.2f} -> {o.total:.2f} ({red:.2f}% lower), "
              f"{mr.n_sessions} sessions")
    return ["bill_table.csv", "bill_detail.csv", "bill_profiles.csv", "bill_schedules.csv",
            "bill_solves.csv"]


def _peak_job(vap, day, sessions, period, config, t_start, t_end):
    return vap, day, optimize_peak_two_stage(sessions, period, config, t_start, t_end)


def cmd_optimize_peak(args) -> list[str]:
    config = _solver_config(args)
    t_start, t_end = _window(args)
    try:
        period = sorted(np.flatnonzero(peak_mask(args.peak_period)).tolist())
    except (ValueError, ConfigurationError) as exc:
        raise UsageError(f"bad --peak-period: {exc}") from None
    sessions, _ = _load_sessions(args)
    grouped = group_sessions(sessions)
    jobs = [(vap, day, ss, period, config, t_start, t_end)
            for vap, days in grouped.items() for day, ss in days.items()]
    results = _map(_peak_job, jobs, args.jobs)
    _check_feasible(r for _, _, pr in results for r in (pr.stage1, pr.stage2))

    out = _out_dir(args)
    rep.write_table(out / "peak_table.csv", rep.peak_month_rows(results),
                    rep.PEAK_MONTH_COLUMNS, comment=rep.WHISKER_NOTE)
    rep.write_table(out / "peak_daily.csv",
                    [rep.peak_day_row(v, d, r) for v, d, r in results], rep.PEAK_DAY_COLUMNS)
    profiles, schedules, solves = [], [], []
    for vap, day, r in results:
        ss = grouped[vap][day]
        base = rep.aggregate_ap(ss, None, t_start, t_end)
        opt = rep.aggregate_ap(ss, r.schedule, t_start, t_end)
        profiles.extend(rep.profile_rows(vap, day, base, opt))
        schedules.extend(rep.schedule_rows(vap, day, r.schedule, ss))
        solves.extend(rep.solve_rows(vap, {day: r.stage1}, "stage1"))
        solves.extend(rep.solve_rows(vap, {day: r.stage2}, "stage2"))
    rep.write_table(out / "peak_profiles.csv", profiles, rep.PROFILE_COLUMNS)
    rep.write_table(out / "peak_schedules.csv", schedules, rep.SCHEDULE_COLUMNS)
    rep.write_table(out / "peak_solves.csv", solves)
    for row in rep.peak_month_rows(results):
        med = "n/a" if row["shed_median"] is None else f"{row['shed_median']:.3f}"
        shift = ("n/a" if row["shift_per_session_median"] is None
                 else f"{row['shift_per_session_median']:.3f}")
        print(f"{row['vap_id']} {row['month']}: median peak shed {med}, "
              f"median shift {shift} kWh/session over {row['n_days']} days")
    return ["peak_table.csv", "peak_daily.csv", "peak_profiles.csv", "peak_schedules.csv",
            "peak_solves.csv"]


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    started = time.perf_counter()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        outputs = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NoFeasibleResult as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TIME_LIMIT
    rep.Manifest(args.command, _echo(args), _versions(), outputs,
                 round(time.perf_counter() - started, 3)).write(_out_dir(args) / "manifest.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
