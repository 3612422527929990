"""Per-run summaries computed from event logs, and CSV/JSON output."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

from .engine import EventLog


class IncompleteRun(Exception):
    pass


class IoFailure(OSError):
    pass


def _ratio(num, den):
    """``num / den`` or ``None`` when the denominator is empty."""
    return None if not den else num / den


# --------------------------------------------------------------------------
# falls

FALLS_METRICS = (
    "fp", "fn", "tp", "tn",
    "avg_fp_per_tick", "avg_fn_per_tick",
    "fp_ratio", "fn_ratio",
    "sensitivity", "specificity",
    "csc_ambulances", "csc_volunteers", "cwt",
    "reqs_handled",
    "ic_verifications", "ma_verifications", "ma_interventions",
    "avg_ma_cost", "avg_wt",
)
FALLS_COLUMNS = ("scenario", "ic_count", "seed") + FALLS_METRICS


@dataclass
class FallsSummary:
    scenario: str
    ic_count: int
    seed: int
    fp: int
    fn: int
    tp: int
    tn: int
    avg_fp_per_tick: float | None
    avg_fn_per_tick: float | None
    fp_ratio: float | None
    fn_ratio: float | None
    sensitivity: float | None
    specificity: float | None
    csc_ambulances: int
    csc_volunteers: int
    cwt: int
    reqs_handled: int
    ic_verifications: int
    ma_verifications: int
    ma_interventions: int
    avg_ma_cost: float | None
    avg_wt: float | None
    max_ticks: int = 0
    open_alarms: int = 0

    columns = FALLS_COLUMNS

    @classmethod
    def from_counts(cls, *, scenario: str, ic_count: int, seed: int, max_ticks: int,
                    fp: int, fn: int, tp: int, tn: int, csc_ambulances: int, csc_volunteers: int,
                    cwt: int, reqs_handled: int, ic_verifications: int = 0, ma_verifications: int = 0,
                    ma_interventions: int = 0, open_alarms: int = 0) -> "FallsSummary":
        """Fill in every derived column from the raw counters."""
        return cls(
            scenario=scenario, ic_count=ic_count, seed=seed,
            fp=fp, fn=fn, tp=tp, tn=tn,
            avg_fp_per_tick=_ratio(fp, max_ticks),
            avg_fn_per_tick=_ratio(fn, max_ticks),
            fp_ratio=_ratio(fp, reqs_handled),
            fn_ratio=_ratio(fn, fn + tn),
            sensitivity=_ratio(tp, tp + fn),
            specificity=_ratio(tn, tn + fp),
            csc_ambulances=csc_ambulances, csc_volunteers=csc_volunteers, cwt=cwt,
            reqs_handled=reqs_handled,
            ic_verifications=ic_verifications, ma_verifications=ma_verifications,
            ma_interventions=ma_interventions,
            avg_ma_cost=_ratio(csc_ambulances, reqs_handled),
            avg_wt=_ratio(cwt, reqs_handled),
            max_ticks=max_ticks, open_alarms=open_alarms,
        )

    def identity_errors(self) -> dict[str, float]:
        """Absolute deviations of the five derived columns from their definitions."""
        checks = {
            "avg_ma_cost": (self.avg_ma_cost, _ratio(self.csc_ambulances, self.reqs_handled)),
            "avg_wt": (self.avg_wt, _ratio(self.cwt, self.reqs_handled)),
            "fp_ratio": (self.fp_ratio, _ratio(self.fp, self.reqs_handled)),
            "fn_ratio": (self.fn_ratio, _ratio(self.fn, self.fn + self.tn)),
            "avg_fp_per_tick": (self.avg_fp_per_tick, _ratio(self.fp, self.max_ticks)),
        }
        out = {}
        for k, (have, want) in checks.items():
            if have is None or want is None:
                out[k] = 0.0 if have is want else float("inf")
            else:
                out[k] = abs(have - want)
        return out

    def row(self) -> dict:
        return {c: getattr(self, c) for c in self.columns}


def summarize_falls_run(log: EventLog) -> FallsSummary:
    """Build the falls metric row from a finished run's event log.

    Alarms still open when the run ended are left out of every average and
    only counted in ``open_alarms``.
    """
    end = None
    fp = tp = fn = 0
    csc_amb = csc_vol = cwt = handled = 0
    ic_ver = ma_ver = ma_int = 0
    for e in log:
        k = e.kind
        if k == "alarm_raised":
            if e.payload["truth"] == "true_fall":
                tp += 1
            else:
                fp += 1
        elif k == "fall":
            if not e.payload["detected"]:
                fn += 1
        elif k == "alarm_closed":
            handled += 1
            cwt += e.payload["wt"]
        elif k == "cost":
            if e.payload["resource"] == "ambulance":
                csc_amb += e.payload["cycles"]
            else:
                csc_vol += e.payload["cycles"]
        elif k == "verification":
            if e.payload["by"] == "ic":
                ic_ver += 1
            elif e.payload["truth"] == "false_alarm":
                ma_ver += 1
        elif k == "intervention":
            ma_int += 1
        elif k == "run_end":
            end = e.payload
    if end is None or end.get("scenario") != "falls":
        raise IncompleteRun("log has no falls run_end record")
    return FallsSummary.from_counts(
        scenario=end["variant"], ic_count=end["ic_count"], seed=end["seed"], max_ticks=end["max_ticks"],
        fp=fp, fn=fn, tp=tp, tn=end["tn"], csc_ambulances=csc_amb, csc_volunteers=csc_vol,
        cwt=cwt, reqs_handled=handled, ic_verifications=ic_ver, ma_verifications=ma_ver,
        ma_interventions=ma_int, open_alarms=end["open_alarms"],
    )


# --------------------------------------------------------------------------
# city and fire

CITY_COLUMNS = (
    "scenario", "strategy", "threshold", "individuals", "seed",
    "requests", "treated", "died", "open_requests",
    "avg_querying_time", "son_inter_community_count", "traditional_failure_count",
    "on_foot", "own_car", "taxi",
    "houses", "fully_burned_houses", "extinguished_houses",
)


@dataclass
class CitySummary:
    scenario: str
    strategy: str
    threshold: int
    individuals: int
    seed: int
    requests: int
    treated: int
    died: int
    open_requests: int
    avg_querying_time: float | None
    son_inter_community_count: int | None
    traditional_failure_count: int | None
    on_foot: int
    own_car: int
    taxi: int
    houses: int
    fully_burned_houses: int | None
    extinguished_houses: int | None

    columns = CITY_COLUMNS

    @property
    def transport_mode_counts(self) -> dict[str, int]:
        return {"on_foot": self.on_foot, "own_car": self.own_car, "taxi": self.taxi}

    def row(self) -> dict:
        return {c: getattr(self, c) for c in self.columns}


def summarize_city_run(log: EventLog) -> CitySummary:
    """Build the city (or fire) metric row from a finished run's event log."""
    end = None
    requests = treated = died = failures = inter = 0
    querying = 0
    modes = {"on_foot": 0, "own_car": 0, "taxi": 0}
    burned = extinguished = 0
    for e in log:
        k = e.kind
        if k == "hc_request":
            requests += 1
        elif k == "hc_allocated":
            treated += 1
            querying += e.payload["querying"]
            inter += bool(e.payload["inter_community"])
        elif k == "hc_died":
            died += 1
        elif k == "hc_rejected":
            failures += 1
        elif k == "office_arrival":
            modes[e.payload["mode"]] += 1
        elif k == "house_burned":
            burned += 1
        elif k == "fire_out":
            extinguished += 1
        elif k == "run_end":
            end = e.payload
    if end is None or end.get("scenario") not in ("city", "fire"):
        raise IncompleteRun("log has no city run_end record")
    strategy = end["strategy"]
    houses = end["houses"]
    return CitySummary(
        scenario=end["scenario"], strategy=strategy, threshold=end["threshold"],
        individuals=end["individuals"], seed=end["seed"],
        requests=requests, treated=treated, died=died, open_requests=end["open_requests"],
        avg_querying_time=_ratio(querying, treated),
        son_inter_community_count=inter if strategy == "FSO" else 0,
        traditional_failure_count=failures if strategy == "Traditional" else None,
        houses=houses,
        fully_burned_houses=burned if houses else None,
        extinguished_houses=extinguished if houses else None,
        **modes,
    )


# --------------------------------------------------------------------------
# output files

def _variant(s) -> str:
    return s.scenario if isinstance(s, FallsSummary) else s.strategy


def _scenario(s) -> str:
    return "falls" if isinstance(s, FallsSummary) else s.scenario


_SWEEP_PARAM = {"falls": "ic", "city": "threshold-individuals", "fire": "houses"}
_COLUMNS = {"falls": FALLS_COLUMNS, "city": CITY_COLUMNS, "fire": CITY_COLUMNS}


def _sort_key(s):
    if isinstance(s, FallsSummary):
        return (s.scenario, s.ic_count, s.seed)
    return (s.strategy, s.threshold, s.individuals, s.houses, s.seed)


def _csv_text(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r[c] is None else r[c] for c in columns])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def write_outputs(summaries, out_dir, formats: Sequence[str] = ("csv", "json"),
                  config: dict | None = None, scenario: str | None = None) -> list[Path]:
    """Write one CSV per (scenario, variant, seed) plus one per whole sweep.

    Per-run-group files are named ``<scenario>_<variant>_<param>_<seed>.csv``
    where ``<param>`` names the swept parameter; ``<scenario>_sweep.csv``
    holds every row. Each CSV gets a JSON sidecar with the rows, the config and
    the seed. Empty averages are written as empty CSV fields and JSON nulls.
    Output depends only on the inputs, so rewriting is byte-identical.
    """
    summaries = sorted(summaries, key=lambda s: (_scenario(s), _sort_key(s)))
    for f in formats:
        if f not in ("csv", "json"):
            raise ValueError(f"unknown output format {f!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(exc.errno, f"cannot create {out}: {exc.strerror}") from exc

    groups: dict[tuple, list] = {}
    sweeps: dict[str, list] = {}
    if scenario is not None:
        sweeps.setdefault(scenario, [])
    for s in summaries:
        sc = _scenario(s)
        groups.setdefault((sc, _variant(s), s.seed), []).append(s)
        sweeps.setdefault(sc, []).append(s)

    written: list[Path] = []

    def emit(stem: str, sc: str, rows: list, meta: dict) -> None:
        cols = _COLUMNS[sc]
        data = [r.row() for r in rows]
        if "csv" in formats:
            p = out / f"{stem}.csv"
            _write(p, _csv_text(cols, data))
            written.append(p)
        if "json" in formats:
            p = out / f"{stem}.json"
            _write(p, _json_text({**meta, "scenario": sc, "columns": list(cols), "rows": data,
                                  "config": config or {}}))
            written.append(p)

    for (sc, variant, seed), rows in groups.items():
        param = _SWEEP_PARAM[sc]
        emit(f"{sc}_{variant}_{param}_{seed}", sc, rows, {"variant": variant, "param": param, "seed": seed})
    for sc, rows in sweeps.items():
        emit(f"{sc}_sweep", sc, rows, {"seeds": sorted({r.seed for r in rows})})
    return written
