"""Experiment configuration, sweep orchestration and reproducibility manifests.

Configs are INI files read with :mod:`configparser`. The grammar is documented
in the README; in short::

    [run]
    scenario = falls          ; falls | city | fire
    seeds = 0..19             ; or a list "1,5,9", or seed = 3 + replications = 20
    ticks = 10000
    out = results
    jobs = 1
    formats = csv,json

    [world]
    width = 41
    height = 41

    [falls]
    ic = 0..40 step 5
    devices = 1,2
    p_false_positive = 1/500  ; any FallsParams field

    [city]
    strategies = FSO,PerfectOracle,Traditional
    thresholds = 100,150,200
    individuals = 60..140 step 20

    [fire]
    strategies = FSO,Traditional

    [tree]
    emergency_response =      ; child = parent, empty parent for the root
    local_residents = emergency_response

Unknown sections and keys are rejected.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .city import STRATEGIES, CityParams, build_city_world, fire_params
from .city.model import default_tree_edges
from .falls import FallsParams, build_falls_world
from .metrics import summarize_city_run, summarize_falls_run, write_outputs

SCENARIOS = ("falls", "city", "fire")
DEFAULT_TICKS = {"falls": 10000, "city": 3000, "fire": 3000}
MANIFEST_NAME = "manifest.json"


class ParseError(ValueError):
    def __init__(self, line: int | None, message: str) -> None:
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ValidationError(ValueError):
    def __init__(self, field: str, reason: str) -> None:
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


# --------------------------------------------------------------------------
# value grammar

def parse_scalar(text: str, kind: type, name: str):
    s = text.strip()
    if kind is bool:
        low = s.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValidationError(name, f"expected a boolean, got {text!r}")
    if kind is int:
        try:
            return int(s)
        except ValueError:
            raise ValidationError(name, f"expected an integer, got {text!r}") from None
    if kind is float:
        try:
            return float(Fraction(s)) if "/" in s else float(s)
        except (ValueError, ZeroDivisionError):
            raise ValidationError(name, f"expected a number, got {text!r}") from None
    return s


def parse_int_list(text: str, name: str) -> list[int]:
    """``"a..b"``, ``"a..b step k"`` (inclusive) or ``"a, b, c"``."""
    s = text.strip()
    if ".." in s:
        head, _, step_part = s.partition("step")
        lo, _, hi = head.partition("..")
        a, b = parse_scalar(lo, int, name), parse_scalar(hi, int, name)
        step = parse_scalar(step_part, int, name) if step_part.strip() else 1
        if step <= 0:
            raise ValidationError(name, "range step must be > 0")
        if b < a:
            raise ValidationError(name, f"empty range {text!r}")
        return list(range(a, b + 1, step))
    out = [parse_scalar(x, int, name) for x in s.split(",") if x.strip()]
    if not out:
        raise ValidationError(name, "empty list")
    return out


def format_int_list(values: Sequence[int]) -> str:
    v = list(values)
    if len(v) >= 3:
        step = v[1] - v[0]
        if step > 0 and all(b - a == step for a, b in zip(v, v[1:])):
            return f"{v[0]}..{v[-1]}" + (f" step {step}" if step != 1 else "")
    return ",".join(str(x) for x in v)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --------------------------------------------------------------------------
# plan

_FALLS_SWEPT = {"n_ic", "n_devices"}
_CITY_SWEPT = {"strategy", "threshold", "n_individuals"}
_FIRE_SWEPT = {"strategy"}


def _param_kinds(cls) -> dict[str, type]:
    base = cls() if cls is FallsParams else CityParams()
    return {f.name: type(getattr(base, f.name)) for f in fields(cls)}


@dataclass(frozen=True)
class RunSpec:
    scenario: str
    seed: int
    ticks: int
    width: int
    height: int
    params: FallsParams | CityParams
    tree_edges: tuple | None = None

    @property
    def label(self) -> str:
        p = self.params
        if self.scenario == "falls":
            return f"falls/{p.scenario}/ic={p.n_ic}/seed={self.seed}"
        if self.scenario == "city":
            return f"city/{p.strategy}/threshold={p.threshold}/individuals={p.n_individuals}/seed={self.seed}"
        return f"fire/{p.strategy}/houses={p.n_houses}/seed={self.seed}"


@dataclass
class ExperimentPlan:
    scenario: str
    seeds: list[int]
    ticks: int
    out: str | None = None
    jobs: int = 1
    formats: tuple[str, ...] = ("csv", "json")
    width: int = 41
    height: int = 41
    # sweep axes
    ic: list[int] = field(default_factory=list)
    devices: list[int] = field(default_factory=list)
    strategies: list[str] = field(default_factory=list)
    thresholds: list[int] = field(default_factory=list)
    individuals: list[int] = field(default_factory=list)
    # every non-swept model parameter, explicit
    params: dict = field(default_factory=dict)
    tree_edges: list[tuple[str, str | None]] | None = None

    def runs(self) -> Iterator[RunSpec]:
        tree = tuple(self.tree_edges) if self.tree_edges is not None else None
        common = dict(ticks=self.ticks, width=self.width, height=self.height)
        if self.scenario == "falls":
            for d in self.devices:
                for ic in self.ic:
                    p = FallsParams(**self.params, n_ic=ic, n_devices=d)
                    for s in self.seeds:
                        yield RunSpec("falls", s, params=p, **common)
        elif self.scenario == "city":
            for st in self.strategies:
                for th in self.thresholds:
                    for n in self.individuals:
                        p = CityParams(**self.params, strategy=st, threshold=th, n_individuals=n)
                        for s in self.seeds:
                            yield RunSpec("city", s, params=p, tree_edges=tree, **common)
        else:
            for st in self.strategies:
                p = CityParams(**self.params, strategy=st)
                for s in self.seeds:
                    yield RunSpec("fire", s, params=p, tree_edges=tree, **common)

    def run_count(self) -> int:
        return sum(1 for _ in self.runs())

    def to_config_text(self, include_out: bool = True) -> str:
        """Render the plan as a fully explicit config; parsing it gives the same plan."""
        lines = ["[run]", f"scenario = {self.scenario}", f"seeds = {format_int_list(self.seeds)}",
                 f"ticks = {self.ticks}"]
        if include_out and self.out is not None:
            lines.append(f"out = {self.out}")
        lines += [f"jobs = {self.jobs}", f"formats = {','.join(self.formats)}", "",
                  "[world]", f"width = {self.width}", f"height = {self.height}", "",
                  f"[{self.scenario}]"]
        if self.scenario == "falls":
            lines += [f"ic = {format_int_list(self.ic)}", f"devices = {format_int_list(self.devices)}"]
        else:
            lines.append(f"strategies = {','.join(self.strategies)}")
        if self.scenario == "city":
            lines += [f"thresholds = {format_int_list(self.thresholds)}",
                      f"individuals = {format_int_list(self.individuals)}"]
        lines += [f"{k} = {_format_value(v)}" for k, v in self.params.items()]
        if self.tree_edges is not None:
            lines += ["", "[tree]"]
            lines += [f"{c} = {p or ''}".rstrip() for c, p in self.tree_edges]
        return "\n".join(lines) + "\n"


def _default_params(scenario: str) -> dict:
    if scenario == "falls":
        d = asdict(FallsParams())
        swept = _FALLS_SWEPT
    elif scenario == "city":
        d = asdict(CityParams())
        swept = _CITY_SWEPT
    else:
        d = asdict(fire_params())
        swept = _FIRE_SWEPT
    return {k: v for k, v in d.items() if k not in swept}


def default_plan(scenario: str) -> ExperimentPlan:
    if scenario not in SCENARIOS:
        raise ValidationError("run.scenario", f"must be one of {SCENARIOS}, got {scenario!r}")
    plan = ExperimentPlan(scenario=scenario, seeds=list(range(20)), ticks=DEFAULT_TICKS[scenario],
                          params=_default_params(scenario))
    if scenario == "falls":
        plan.ic = list(range(0, 41, 5))
        plan.devices = [1, 2]
    elif scenario == "city":
        plan.strategies = list(STRATEGIES)
        plan.thresholds = [100, 150, 200]
        plan.individuals = list(range(60, 141, 20))
    else:
        plan.strategies = ["FSO", "Traditional"]
    return plan


def _read_ini(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None,
                                   empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError(exc.lineno, "text before the first [section]") from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError(line, "expected 'key = value'") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ParseError(exc.lineno, str(exc).split(": ", 1)[-1]) from None
    return cp


def apply_override(cp: configparser.ConfigParser, item: str, scenario: str | None) -> None:
    """Apply ``section.key=value`` or ``key=value`` (looked up in run, world, then the scenario)."""
    key, sep, value = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ParseError(None, f"override {item!r} is not key=value")
    if "." in key:
        section, key = key.split(".", 1)
    else:
        sc = scenario or (cp.get("run", "scenario", fallback=None) if cp.has_section("run") else None)
        section = _section_for(key, sc)
    if not cp.has_section(section):
        cp.add_section(section)
    cp.set(section, key, value.strip())


_RUN_KEYS = {"scenario", "seeds", "seed", "replications", "ticks", "out", "jobs", "formats"}
_WORLD_KEYS = {"width", "height"}
_SWEEP_KEYS = {"falls": {"ic", "devices"}, "city": {"strategies", "thresholds", "individuals"},
               "fire": {"strategies"}}


def _section_for(key: str, scenario: str | None) -> str:
    if key in _RUN_KEYS:
        return "run"
    if key in _WORLD_KEYS:
        return "world"
    if scenario is None:
        raise ValidationError(key, "cannot place a bare key before the scenario is known")
    return scenario


def parse_config(text: str, overrides: Sequence[str] = ()) -> ExperimentPlan:
    """Parse and validate an experiment config; see the module docstring for the grammar."""
    cp = _read_ini(text)
    for item in overrides:
        apply_override(cp, item, None)

    unknown = set(cp.sections()) - {"run", "world", "tree", *SCENARIOS}
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown section")
    if not cp.has_option("run", "scenario"):
        raise ValidationError("run.scenario", "required")
    scenario = cp.get("run", "scenario").strip()
    plan = default_plan(scenario)
    others = set(SCENARIOS) - {scenario}
    for s in others:
        if cp.has_section(s):
            raise ValidationError(s, f"section does not apply to scenario {scenario!r}")

    run = dict(cp.items("run")) if cp.has_section("run") else {}
    for k in run:
        if k not in _RUN_KEYS:
            raise ValidationError(f"run.{k}", "unknown key")
    if "seeds" in run and ("seed" in run or "replications" in run):
        raise ValidationError("run.seeds", "give either seeds or seed/replications")
    if "seeds" in run:
        plan.seeds = parse_int_list(run["seeds"], "run.seeds")
    elif "seed" in run or "replications" in run:
        base = parse_scalar(run.get("seed", "0"), int, "run.seed")
        reps = parse_scalar(run.get("replications", "1"), int, "run.replications")
        if reps < 1:
            raise ValidationError("run.replications", "must be >= 1")
        plan.seeds = list(range(base, base + reps))
    if any(s < 0 or s >= 2**64 for s in plan.seeds):
        raise ValidationError("run.seeds", "seeds are unsigned 64-bit integers")
    if len(set(plan.seeds)) != len(plan.seeds):
        raise ValidationError("run.seeds", "duplicate seed")
    if "ticks" in run:
        plan.ticks = parse_scalar(run["ticks"], int, "run.ticks")
    if plan.ticks < 1:
        raise ValidationError("run.ticks", "must be >= 1")
    if "out" in run:
        plan.out = run["out"].strip() or None
    if "jobs" in run:
        plan.jobs = parse_scalar(run["jobs"], int, "run.jobs")
        if plan.jobs < 1:
            raise ValidationError("run.jobs", "must be >= 1")
    if "formats" in run:
        fmts = tuple(f.strip() for f in run["formats"].split(",") if f.strip())
        bad = [f for f in fmts if f not in ("csv", "json")]
        if bad or not fmts:
            raise ValidationError("run.formats", f"expected csv and/or json, got {run['formats']!r}")
        plan.formats = fmts

    if cp.has_section("world"):
        for k, v in cp.items("world"):
            if k not in _WORLD_KEYS:
                raise ValidationError(f"world.{k}", "unknown key")
            setattr(plan, k, parse_scalar(v, int, f"world.{k}"))
    if plan.width < 3 or plan.height < 3:
        raise ValidationError("world", "width and height must be >= 3")

    kinds = _param_kinds(FallsParams if scenario == "falls" else CityParams)
    if cp.has_section(scenario):
        for k, v in cp.items(scenario):
            name = f"{scenario}.{k}"
            if k in _SWEEP_KEYS[scenario]:
                _set_sweep(plan, k, v, name)
            elif k in plan.params:
                val = parse_scalar(v, kinds[k], name)
                if k.startswith("p_") or k.endswith("_fraction"):
                    if not 0.0 <= val <= 1.0:
                        raise ValidationError(name, f"probability must lie in [0, 1], got {val}")
                plan.params[k] = val
            elif k in kinds:
                raise ValidationError(name, "this parameter is swept; use the sweep key instead")
            else:
                raise ValidationError(name, "unknown key")

    if cp.has_section("tree"):
        if scenario == "falls":
            raise ValidationError("tree", "the falls hierarchy is fixed")
        edges = [(c, p.strip() or None) for c, p in cp.items("tree")]
        plan.tree_edges = edges

    try:
        specs = list(plan.runs())
    except ValueError as exc:
        raise ValidationError(scenario, str(exc)) from None
    if not specs:
        raise ValidationError(scenario, "empty sweep")
    if plan.tree_edges is not None:
        _check_tree(plan)
    return plan


def _set_sweep(plan: ExperimentPlan, key: str, value: str, name: str) -> None:
    if key == "strategies":
        items = [x.strip() for x in value.split(",") if x.strip()]
        bad = [x for x in items if x not in STRATEGIES]
        if bad or not items:
            raise ValidationError(name, f"strategies must be drawn from {STRATEGIES}")
        plan.strategies = items
        return
    vals = parse_int_list(value, name)
    if key == "devices" and any(d not in (1, 2) for d in vals):
        raise ValidationError(name, "device count must be 1 or 2")
    if key == "ic" and min(vals) < 0:
        raise ValidationError(name, "IC counts must be >= 0")
    if key == "thresholds" and min(vals) < 1:
        raise ValidationError(name, "thresholds must be >= 1")
    if key == "individuals" and min(vals) < 0:
        raise ValidationError(name, "population must be >= 0")
    setattr(plan, key, vals)


def _check_tree(plan: ExperimentPlan) -> None:
    from .city.model import CityModel
    from .engine import World, WorldConfig

    spec = next(plan.runs())
    cfg = WorldConfig(width=plan.width, height=plan.height, max_ticks=1, master_seed=0)
    try:
        World(cfg, [CityModel(spec.params, plan.tree_edges)])
    except ValueError as exc:
        raise ValidationError("tree", str(exc)) from None


# --------------------------------------------------------------------------
# execution

def execute_run(spec: RunSpec):
    """Run one world and summarize it. Each call owns its world; safe in a worker process."""
    if spec.scenario == "falls":
        w = build_falls_world(spec.params, spec.seed, spec.ticks, spec.width, spec.height).run()
        return summarize_falls_run(w.log)
    w = build_city_world(spec.params, spec.seed, spec.ticks, spec.width, spec.height,
                         tree_edges=spec.tree_edges).run()
    return summarize_city_run(w.log)


@dataclass
class RunFailure:
    label: str
    error: str


@dataclass
class ExperimentResult:
    summaries: list
    failures: list[RunFailure]
    files: list[Path]
    manifest: Path | None

    @property
    def status(self) -> int:
        return 1 if self.failures else 0


def _guarded(spec: RunSpec):
    try:
        return execute_run(spec), None
    except Exception as exc:  # reported per run, the sweep carries on
        return None, f"{type(exc).__name__}: {exc}"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def versions() -> dict:
    from . import __version__
    return {"fsosim": __version__, "numpy": np.__version__, "python": platform.python_version()}


def resolve_out(plan: ExperimentPlan, out: str | os.PathLike | None = None) -> Path:
    return Path(out or plan.out or os.environ.get("FSO_SIM_OUT") or "results")


def run_experiment(plan: ExperimentPlan, out: str | os.PathLike | None = None,
                   jobs: int | None = None, progress=None) -> ExperimentResult:
    """Run every (sweep point, seed) of ``plan`` and write summaries plus a manifest.

    Rows do not depend on execution order, so ``jobs > 1`` (a process pool)
    gives byte-identical files.
    """
    out_dir = resolve_out(plan, out)
    jobs = jobs or plan.jobs
    specs = list(plan.runs())
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_guarded, specs, chunksize=max(1, len(specs) // (4 * jobs))))
    else:
        results = []
        for spec in specs:
            results.append(_guarded(spec))
            if progress is not None:
                progress(spec, results[-1][1])

    summaries, failures = [], []
    for spec, (summary, err) in zip(specs, results):
        if err is None:
            summaries.append(summary)
        else:
            failures.append(RunFailure(spec.label, err))

    config_text = plan.to_config_text(include_out=False)
    files = write_outputs(summaries, out_dir, plan.formats,
                          config={"text": config_text, "sha256": _sha256(config_text.encode())},
                          scenario=plan.scenario)
    manifest = {
        "config": config_text,
        "config_sha256": _sha256(config_text.encode()),
        "scenario": plan.scenario,
        "seeds": list(plan.seeds),
        "runs": len(specs),
        "failures": [asdict(f) for f in failures],
        "versions": versions(),
        "outputs": {p.name: _sha256(p.read_bytes()) for p in sorted(files)},
    }
    mpath = out_dir / MANIFEST_NAME
    mpath.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return ExperimentResult(summaries, failures, files, mpath)


def load_manifest(path: str | os.PathLike) -> tuple[ExperimentPlan, dict]:
    """The plan recorded in a manifest plus the manifest itself."""
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    data = json.loads(p.read_text(encoding="utf-8"))
    text = data["config"]
    if _sha256(text.encode()) != data.get("config_sha256"):
        raise ValidationError("manifest", "config hash does not match its text")
    return parse_config(text), data


def verify_outputs(manifest: dict, out_dir: str | os.PathLike) -> list[str]:
    """Names of files in ``out_dir`` whose hash differs from the manifest's."""
    bad = []
    for name, digest in sorted(manifest["outputs"].items()):
        f = Path(out_dir) / name
        if not f.exists() or _sha256(f.read_bytes()) != digest:
            bad.append(name)
    return bad


def rerun_manifest(path: str | os.PathLike, out: str | os.PathLike,
                   jobs: int | None = None) -> tuple[ExperimentResult, list[str]]:
    plan, manifest = load_manifest(path)
    result = run_experiment(plan, out, jobs)
    return result, verify_outputs(manifest, resolve_out(plan, out))


def describe(plan: ExperimentPlan, file=None) -> None:
    print(f"{plan.scenario}: {plan.run_count()} runs over {len(plan.seeds)} seeds, "
          f"{plan.ticks} ticks", file=file or sys.stdout)


__all__ = [
    "SCENARIOS", "ParseError", "ValidationError", "ExperimentPlan", "RunSpec", "RunFailure",
    "ExperimentResult", "parse_config", "default_plan", "apply_override", "execute_run",
    "run_experiment", "load_manifest", "verify_outputs", "rerun_manifest", "parse_int_list",
    "format_int_list", "default_tree_edges",
]
