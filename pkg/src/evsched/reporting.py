"""Report tables for bill and peak runs, written as comma-delimited text.

Numbers are formatted with a fixed number of decimals so that reruns with the
same inputs produce byte-identical files.  Dollar columns carry 4 decimals,
every other float 6.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .metrics import MetricsSummary, box_stats
from .optimize.bill import MonthBillResult
from .optimize.peak import PeakResult
from .schedule import Schedule, aggregate_power, baseline_schedule
from .tariff import Month, TariffSchedule
from .timegrid import GRID, SLOTS_PER_DAY, ChargingSession

DOLLAR_COLUMNS = frozenset({
    "current_bill", "optimized_bill", "current_dc", "optimized_dc", "current_ec",
    "optimized_ec", "reduction_per_session",
})

WHISKER_NOTE = ("# whisker_low/whisker_high are the 1st/99th percentiles of a normal fit "
                "(mean -/+ 2.326 std)")


def fmt(column: str, value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        text = f"{v:.4f}" if column in DOLLAR_COLUMNS else f"{v:.6f}"
        # avoid "-0.000000" so identical results never differ only in sign
        return text[1:] if text.startswith("-") and float(text) == 0 else text
    return str(value)


def write_table(path: str | Path, rows: Sequence[Mapping[str, object]],
                columns: Sequence[str] | None = None, comment: str | None = None) -> None:
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(comment.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(c, r.get(c)) for c in columns])


def pct(part: float, whole: float) -> float | None:
    return 100.0 * part / whole if whole else None


# -- bill -------------------------------------------------------------------

BILL_COLUMNS = (
    "vap_id", "period", "kind", "n_months", "n_sessions", "current_bill", "optimized_bill",
    "current_dc", "optimized_dc", "current_ec", "optimized_ec", "reduction_per_session",
    "dc_reduction_pct", "ec_reduction_pct", "total_reduction_pct",
)


def _bill_row(vap_id: str, period: str, kind: str, n_months: int, n_sessions: int,
              cur_dc: float, opt_dc: float, cur_ec: float, opt_ec: float) -> dict:
    # averages over the months in the row; shares are of the current total so
    # that DC% + EC% = total%
    current, optimized = cur_dc + cur_ec, opt_dc + opt_ec
    per_session = (current - optimized) * n_months / n_sessions if n_sessions else None
    return {
        "vap_id": vap_id, "period": period, "kind": kind, "n_months": n_months,
        "n_sessions": n_sessions, "current_bill": current, "optimized_bill": optimized,
        "current_dc": cur_dc, "optimized_dc": opt_dc, "current_ec": cur_ec,
        "optimized_ec": opt_ec, "reduction_per_session": per_session,
        "dc_reduction_pct": pct(cur_dc - opt_dc, current),
        "ec_reduction_pct": pct(cur_ec - opt_ec, current),
        "total_reduction_pct": pct(current - optimized, current),
    }


def bill_rows(results: Iterable[tuple[str, MonthBillResult]],
              tariff: TariffSchedule) -> list[dict]:
    """One row per (VAP, month) and one per (VAP, season) averaging its months."""
    rows, by_season = [], {}
    for vap, r in sorted(results, key=lambda x: (x[0], x[1].month)):
        b, o = r.baseline_bill, r.bill
        rows.append(_bill_row(vap, str(r.month), "month", 1, r.n_sessions,
                              b.demand_total, o.demand_total, b.energy, o.energy))
        season = tariff.season_of(dt.date(r.month.year, r.month.month, 1)).name
        by_season.setdefault((vap, season), []).append(r)
    for (vap, season), rs in sorted(by_season.items()):
        n = len(rs)
        rows.append(_bill_row(
            vap, season, "season", n, sum(r.n_sessions for r in rs),
            sum(r.baseline_bill.demand_total for r in rs) / n,
            sum(r.bill.demand_total for r in rs) / n,
            sum(r.baseline_bill.energy for r in rs) / n,
            sum(r.bill.energy for r in rs) / n,
        ))
    return rows


def bill_detail_rows(results: Iterable[tuple[str, MonthBillResult]]) -> list[dict]:
    """Per-period demand maxima and charges behind each month's bill."""
    rows = []
    for vap, r in sorted(results, key=lambda x: (x[0], x[1].month)):
        for name in sorted(r.baseline_bill.demand):
            rows.append({
                "vap_id": vap, "month": str(r.month), "demand_period": name,
                "current_peak_kw": r.baseline_bill.peaks.get(name, 0.0),
                "optimized_peak_kw": r.bill.peaks.get(name, 0.0),
                "current_dc": r.baseline_bill.demand[name],
                "optimized_dc": r.bill.demand[name],
            })
    return rows


def solve_rows(vap: str, results: Mapping[dt.date, object], stage: str = "") -> list[dict]:
    rows = []
    for day, res in sorted(results.items()):
        rows.append({
            "vap_id": vap, "date": day.isoformat(), "stage": stage,
            "solver": res.solver, "status": res.status, "objective": res.objective,
            "lower_bound": res.lower_bound, "gap": res.gap,
            "stopped": res.stats.get("stopped", "search-complete"),
        })
    return rows


# -- peak -------------------------------------------------------------------

PEAK_DAY_COLUMNS = (
    "vap_id", "date", "n_sessions", "baseline_peak_kw", "bound_kw", "optimized_peak_kw",
    "pct_peak_shed", "retained_ratio", "baseline_pp_energy_kwh", "optimized_pp_energy_kwh",
    "energy_shifted_kwh", "energy_shift_per_session", "stage1_status", "stage1_gap",
    "stage2_status", "stage2_gap",
)

PEAK_MONTH_COLUMNS = (
    "vap_id", "month", "n_days", "n_sessions", "shed_median", "shed_q25", "shed_q75",
    "shed_whisker_low", "shed_whisker_high", "retained_median", "energy_shifted_kwh",
    "shift_per_session_median",
)


def energy_shift_per_session(result: PeakResult) -> float | None:
    """kWh moved out of the peak window per session that day (None without sessions)."""
    if result.n_sessions == 0:
        return None
    return result.energy_shifted_kwh / result.n_sessions


def report_energy_shift_per_session(peak_results: Mapping[dt.date, PeakResult],
                                    sessions: Sequence[ChargingSession] | None = None
                                    ) -> dict[str, object]:
    """Daily kWh/session values and their median per month.

    ``sessions`` optionally overrides each day's session count (counted
    per date over sessions that are not after-midnight continuations).
    """
    counts = None
    if sessions is not None:
        counts = {}
        for s in sessions:
            if s.source_id is None:
                counts[s.date] = counts.get(s.date, 0) + 1
    daily: dict[dt.date, float | None] = {}
    for day, r in sorted(peak_results.items()):
        n = r.n_sessions if counts is None else counts.get(day, 0)
        daily[day] = r.energy_shifted_kwh / n if n else None
    monthly: dict[str, float | None] = {}
    for month in sorted({Month.of(d) for d in daily}):
        vals = [v for d, v in daily.items() if Month.of(d) == month and v is not None]
        monthly[str(month)] = float(np.median(vals)) if vals else None
    return {"daily": daily, "monthly_median": monthly}


def peak_day_row(vap: str, day: dt.date, r: PeakResult) -> dict:
    return {
        "vap_id": vap, "date": day.isoformat(), "n_sessions": r.n_sessions,
        "baseline_peak_kw": r.baseline_peak_kw, "bound_kw": r.bound_kw,
        "optimized_peak_kw": r.optimized_peak_kw, "pct_peak_shed": r.pct_peak_shed,
        "retained_ratio": r.retained_ratio,
        "baseline_pp_energy_kwh": r.baseline_energy_kwh,
        "optimized_pp_energy_kwh": r.optimized_energy_kwh,
        "energy_shifted_kwh": r.energy_shifted_kwh,
        "energy_shift_per_session": energy_shift_per_session(r),
        "stage1_status": r.stage1.status, "stage1_gap": r.stage1.gap,
        "stage2_status": r.stage2.status, "stage2_gap": r.stage2.gap,
    }


def peak_month_rows(results: Iterable[tuple[str, dt.date, PeakResult]]) -> list[dict]:
    groups: dict[tuple[str, Month], list[PeakResult]] = {}
    for vap, day, r in results:
        groups.setdefault((vap, Month.of(day)), []).append(r)
    rows = []
    for (vap, month), rs in sorted(groups.items()):
        shed = box_stats(r.pct_peak_shed for r in rs)
        retained = [r.retained_ratio for r in rs if r.retained_ratio is not None]
        shifts = [v for v in map(energy_shift_per_session, rs) if v is not None]
        rows.append({
            "vap_id": vap, "month": str(month), "n_days": len(rs),
            "n_sessions": sum(r.n_sessions for r in rs),
            "shed_median": shed["median"], "shed_q25": shed["q25"], "shed_q75": shed["q75"],
            "shed_whisker_low": shed["whisker_low"], "shed_whisker_high": shed["whisker_high"],
            "retained_median": float(np.median(retained)) if retained else None,
            "energy_shifted_kwh": sum(r.energy_shifted_kwh for r in rs),
            "shift_per_session_median": float(np.median(shifts)) if shifts else None,
        })
    return rows


# -- profiles, schedules, histograms -----------------------------------------

def profile_rows(vap: str, day: dt.date, baseline: np.ndarray, optimized: np.ndarray):
    for k in range(SLOTS_PER_DAY):
        yield {"vap_id": vap, "date": day.isoformat(), "slot": k,
               "clock": GRID.slot_start(k).strftime("%H:%M"),
               "baseline_kw": float(baseline[k]), "optimized_kw": float(optimized[k])}


PROFILE_COLUMNS = ("vap_id", "date", "slot", "clock", "baseline_kw", "optimized_kw")
SCHEDULE_COLUMNS = ("vap_id", "date", "session_id", "block_index", "original_slot",
                    "assigned_slot", "power_kw")


def schedule_rows(vap: str, day: dt.date, schedule: Schedule,
                  sessions: Sequence[ChargingSession]):
    for s in sorted(sessions, key=lambda s: s.session_id):
        for j, (q, orig, new) in enumerate(zip(s.blocks, s.original_slots,
                                               schedule.slots_for(s.session_id))):
            yield {"vap_id": vap, "date": day.isoformat(), "session_id": s.session_id,
                   "block_index": j, "original_slot": orig, "assigned_slot": new,
                   "power_kw": q}


def histogram_rows(summaries: Iterable[MetricsSummary], hourly: bool = False):
    for m in summaries:
        arr, dep = np.asarray(m.arrival_hist), np.asarray(m.departure_hist)
        if hourly:
            arr, dep = arr.reshape(24, -1).sum(axis=1), dep.reshape(24, -1).sum(axis=1)
        for k in range(len(arr)):
            clock = f"{k:02d}:00" if hourly else GRID.slot_start(k).strftime("%H:%M")
            yield {"vap_id": m.vap_id, "window": f"{m.start.isoformat()}/{m.end.isoformat()}",
                   "bin": k, "clock": clock, "arrivals": int(arr[k]),
                   "departures": int(dep[k])}


HISTOGRAM_COLUMNS = ("vap_id", "window", "bin", "clock", "arrivals", "departures")


@dataclass
class Manifest:
    """Run echo written next to the reports; it carries the wall time, so it
    is the one output file that differs between reruns."""

    command: str
    config: dict
    versions: dict
    outputs: list
    wall_seconds: float

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.__dict__, indent=2, sort_keys=True,
                                         default=str) + "\n", encoding="utf-8")


def aggregate_ap(sessions: Sequence[ChargingSession], schedule: Schedule | None = None,
                 t_start: int = 0, t_end: int = SLOTS_PER_DAY - 1) -> np.ndarray:
    """Aggregate profile of ``schedule`` (the as-measured one when ``None``)."""
    if schedule is None:
        schedule = baseline_schedule(sessions, t_start, t_end)
    return aggregate_power(schedule, sessions).ap
