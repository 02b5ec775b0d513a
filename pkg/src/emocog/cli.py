"""Command-line runner: simulate scenarios, report metrics, record backend fixtures."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from . import __version__, metrics
from .domain import BackendError, ConfigError, ScenarioConfig, load_config, loads_config, validate_config
from .policies import HttpChatBackend, LlmBackend, RecordingBackend, ScriptedBackend
from .world import parse_assignment, read_daily, read_events, run

log = logging.getLogger("emocog")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_CORRUPT = 4

BUILTIN = "builtin:"
BACKEND_POLICIES = ("llm", "framework")


class CorruptLog(Exception):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def _builtin(name: str, suffix: str) -> Any:
    return resources.files("emocog").joinpath(f"data/{name}{suffix}")


def load_scenario(source: str | None) -> tuple[ScenarioConfig, str]:
    if source is None or source == f"{BUILTIN}default":
        return loads_config(_builtin("default", ".toml").read_text(encoding="utf-8")), f"{BUILTIN}default"
    if source.startswith(BUILTIN):
        res = _builtin(source[len(BUILTIN) :], ".toml")
        if not res.is_file():
            raise ConfigError([f"scenario: no packaged scenario {source!r}"])
        return loads_config(res.read_text(encoding="utf-8")), source
    path = Path(source)
    if not path.is_file():
        raise ConfigError([f"scenario: file not found: {source}"])
    return load_config(path), str(path)


def load_fixture(source: str) -> dict:
    try:
        if source.startswith(BUILTIN):
            res = _builtin(source[len(BUILTIN) :], ".json")
            if not res.is_file():
                raise ConfigError([f"fixture: no packaged fixture {source!r}"])
            data = json.loads(res.read_text(encoding="utf-8"))
        else:
            with Path(source).open(encoding="utf-8") as fh:
                data = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"fixture: cannot read {source}: {exc.strerror}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"fixture: {source} is not valid JSON: {exc.msg}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError([f"fixture: {source} must hold a JSON object"])
    try:
        ScriptedBackend.from_mapping(data)
    except ValueError as exc:
        raise ConfigError([f"fixture: {exc}"]) from exc
    return data


@dataclass
class RunManifest:
    scenario: str
    policies: dict[int, str]
    backend: str
    out: str
    seed: int
    fixture: str | None = None
    fixture_data: dict | None = None
    config: dict = field(default_factory=dict)
    run_id: str = ""
    digest: str = ""
    version: str = __version__

    def __post_init__(self):
        if self.backend not in ("live", "scripted"):
            raise ConfigError([f"backend: expected 'live' or 'scripted', got {self.backend!r}"])
        needs_backend = any(p in BACKEND_POLICIES for p in self.policies.values())
        if self.backend == "scripted" and needs_backend and self.fixture_data is None:
            raise ConfigError(["fixture: scripted backend with llm/framework riders needs --fixture"])

    def to_json(self) -> str:
        data = {
            "run_id": self.run_id,
            "digest": self.digest,
            "version": self.version,
            "scenario": self.scenario,
            "seed": self.seed,
            "policies": {str(k): v for k, v in sorted(self.policies.items())},
            "backend": self.backend,
            "fixture": self.fixture,
            "fixture_data": self.fixture_data,
            "out": self.out,
            "config": self.config,
        }
        return json.dumps(data, indent=2, sort_keys=False)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(
                scenario=data["scenario"],
                policies={int(k): v for k, v in data["policies"].items()},
                backend=data["backend"],
                out=data.get("out", "."),
                seed=int(data["seed"]),
                fixture=data.get("fixture"),
                fixture_data=data.get("fixture_data"),
                config=data["config"],
                run_id=data.get("run_id", ""),
                digest=data.get("digest", ""),
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError([f"manifest: cannot use {path}: {exc}"]) from exc

    def scenario_config(self) -> ScenarioConfig:
        cfg = validate_config(self.config)
        if sorted(self.policies) != list(range(cfg.n_riders)):
            raise ConfigError([f"policies: need exactly one policy for each of riders 0..{cfg.n_riders - 1}"])
        return cfg


def build_manifest(args: argparse.Namespace) -> RunManifest:
    if args.manifest:
        m = RunManifest.from_file(args.manifest)
        if args.out:
            m.out = args.out
        return m
    cfg, scenario = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.days is not None:
        cfg = validate_config(cfg.replace(n_days=args.days))
    try:
        kinds = parse_assignment(args.policies, cfg.n_riders)
    except ValueError as exc:
        raise ConfigError([f"policies: {exc}"]) from exc
    fixture_data = load_fixture(args.fixture) if args.fixture else None
    return RunManifest(
        scenario=scenario,
        policies=dict(enumerate(kinds)),
        backend=args.backend,
        out=args.out,
        seed=cfg.seed,
        fixture=args.fixture,
        fixture_data=fixture_data,
        config=cfg.to_dict(),
    )


def make_backend(m: RunManifest, cfg: ScenarioConfig) -> LlmBackend | None:
    if not any(p in BACKEND_POLICIES for p in m.policies.values()):
        return None
    if m.backend == "scripted":
        return ScriptedBackend.from_mapping(m.fixture_data)
    return live_backend(cfg)


def live_backend(cfg: ScenarioConfig) -> HttpChatBackend:
    if not (os.environ.get("EMOCOG_API_KEY") or os.environ.get("OPENAI_API_KEY") or os.environ.get("EMOCOG_BASE_URL")):
        raise BackendError("live backend needs EMOCOG_API_KEY (or OPENAI_API_KEY), or EMOCOG_BASE_URL for a local server")
    return HttpChatBackend.from_env(cfg.backend)


def execute(m: RunManifest, backend: LlmBackend | None) -> Path:
    """Run into a scratch directory, then move it to out/<run-id>."""
    cfg = m.scenario_config()
    out_root = Path(m.out)
    out_root.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".run-", dir=out_root))
    try:
        kinds = [m.policies[i] for i in range(cfg.n_riders)]
        result = run(cfg, kinds, backend=backend, out_dir=scratch, progress=True)
        m.digest = result.digest
        m.run_id = time.strftime("%Y%m%dT%H%M%S", time.gmtime()) + "-" + result.digest[:12]
        (scratch / "manifest.json").write_text(m.to_json() + "\n", encoding="utf-8")
        final = out_root / m.run_id
        if final.exists():
            shutil.rmtree(final)
        scratch.rename(final)
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    return final


def cmd_run(args: argparse.Namespace) -> int:
    m = build_manifest(args)
    cfg = m.scenario_config()
    backend = make_backend(m, cfg)
    final = execute(m, backend)
    print(final)
    return EXIT_OK


def cmd_record_fixtures(args: argparse.Namespace) -> int:
    args.backend = "live"
    m = build_manifest(args)
    m.backend = "live"
    cfg = m.scenario_config()
    target = Path(args.fixture_out)
    recorder = None
    if any(p in BACKEND_POLICIES for p in m.policies.values()):
        recorder = RecordingBackend(live_backend(cfg))
    try:
        final = execute(m, recorder)
        print(final)
    finally:
        if recorder is None:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text("{}\n", encoding="utf-8")
        else:
            recorder.save(target)
            log.info("wrote %d fixture entries to %s", len(recorder.records), target)
    if recorder is not None and recorder.failures:
        log.warning("%d backend calls failed during recording; the fixture is partial", recorder.failures)
        if not recorder.records:
            return EXIT_BACKEND
    return EXIT_OK


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------


@dataclass
class LoadedRun:
    path: Path
    name: str
    ticks_per_day: int
    n_days: int
    events: list[dict]
    daily: list[dict]


def load_run(path: Path) -> LoadedRun:
    problems = []
    for fname in ("manifest.json", "events.jsonl", "daily.csv"):
        if not (path / fname).is_file():
            problems.append(f"{path / fname}: missing")
    if problems:
        raise CorruptLog(problems)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        cfg = manifest["config"]
        tpd, n_days = int(cfg["ticks_per_day"]), int(cfg["n_days"])
    except (ValueError, KeyError, TypeError) as exc:
        problems.append(f"{path / 'manifest.json'}: {exc}")
    try:
        events = read_events(path / "events.jsonl")
    except ValueError as exc:
        problems.append(str(exc))
    try:
        daily = read_daily(path / "daily.csv")
    except (ValueError, csv.Error) as exc:
        problems.append(f"{path / 'daily.csv'}: {exc}")
    if problems:
        raise CorruptLog(problems)
    return LoadedRun(path, manifest.get("run_id") or path.name, tpd, n_days, events, daily)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6g}"


def summarize(r: LoadedRun) -> dict[str, Any]:
    """Every metric for one run, keyed for the report tables."""
    inv = {p.day: p.value for p in metrics.involution_series(r.daily)}
    assignment = metrics.policy_of_agents(r.events)
    for row in r.daily:
        assignment.setdefault(int(row["agent"]), row["policy"])
    types = sorted(set(assignment.values()))
    acceptance = {}
    for t in types:
        acc, off = metrics.acceptance_counts(r.events, t, assignment)
        acceptance[t] = (acc, off, acc / off if off else None)
    try:
        desire = metrics.desire_distribution(r.events, "framework", r.ticks_per_day, r.n_days, assignment)
    except metrics.MetricError:
        desire = []
    try:
        consistency = metrics.consistency_report(r.daily)
    except metrics.MetricError:
        consistency = None
    return {"involution": inv, "acceptance": acceptance, "desire": desire, "consistency": consistency, "types": types}


def cmd_report(args: argparse.Namespace) -> int:
    runs, problems = [], []
    for d in args.run_dirs:
        try:
            runs.append(load_run(Path(d)))
        except CorruptLog as exc:
            problems.extend(exc.problems)
    if problems:
        for p in problems:
            print(f"corrupt or missing log: {p}", file=sys.stderr)
        return EXIT_CORRUPT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries = [summarize(r) for r in runs]

    inv_rows, acc_rows, des_rows, con_rows = [], [], [], []
    for r, s in zip(runs, summaries):
        for day in range(1, r.n_days + 1):
            inv_rows.append([r.name, day, _fmt(s["involution"].get(day))])
        for t, (acc, off, rate) in s["acceptance"].items():
            acc_rows.append([r.name, t, off, acc, _fmt(rate)])
        for day, fr in s["desire"]:
            des_rows.append([r.name, day, _fmt(fr["income"]), _fmt(fr["health"]), _fmt(fr["rank"])])
        c = s["consistency"]
        if c is not None:
            for row in c.rows:
                con_rows.append([r.name, row.agent, row.policy, row.days, _fmt(row.dtw_z), _fmt(row.dtw_raw)])
            for t in c.by_type:
                con_rows.append([r.name, "mean", t, "", _fmt(c.by_type[t]), _fmt(c.by_type_raw[t])])
    _write_csv(out / "involution.csv", ["run", "day", "involution"], inv_rows)
    _write_csv(out / "acceptance.csv", ["run", "policy", "offers", "accepts", "acceptance_rate"], acc_rows)
    _write_csv(out / "desire.csv", ["run", "day", "income", "health", "rank"], des_rows)
    _write_csv(out / "consistency.csv", ["run", "agent", "policy", "days", "dtw_z", "dtw_raw"], con_rows)

    if len(runs) >= 2:
        metric_rows: dict[str, list[str]] = {}

        def put(key: str, i: int, value: str) -> None:
            metric_rows.setdefault(key, [""] * len(runs))[i] = value

        for i, s in enumerate(summaries):
            vals = list(s["involution"].values())
            put("involution_final", i, _fmt(vals[-1] if vals else None))
            put("involution_mean", i, _fmt(sum(vals) / len(vals) if vals else None))
            for t, (_, _, rate) in s["acceptance"].items():
                put(f"acceptance_rate[{t}]", i, _fmt(rate))
            if s["consistency"] is not None:
                for t, v in s["consistency"].by_type.items():
                    put(f"dtw_z[{t}]", i, _fmt(v))
        _write_csv(out / "comparison.csv", ["metric", *[r.name for r in runs]], [[k, *v] for k, v in metric_rows.items()])

    (out / "summary.md").write_text(render_summary(runs, summaries), encoding="utf-8")
    print(out)
    return EXIT_OK


def render_summary(runs: Sequence[LoadedRun], summaries: Sequence[dict]) -> str:
    lines = ["# Run report", ""]
    for r, s in zip(runs, summaries):
        lines += [f"## {r.name}", "", f"- days: {r.n_days}", f"- policy types: {', '.join(s['types'])}"]
        vals = list(s["involution"].values())
        if vals:
            lines.append(f"- involution: first {vals[0]:.4g}, last {vals[-1]:.4g}")
        lines += ["", "| policy | offers | accepts | acceptance rate | mean z-DTW | mean raw DTW |", "|---|---|---|---|---|---|"]
        c = s["consistency"]
        for t in s["types"]:
            acc, off, rate = s["acceptance"][t]
            dz = _fmt(c.by_type.get(t)) if c else ""
            dr = _fmt(c.by_type_raw.get(t)) if c else ""
            lines.append(f"| {t} | {off} | {acc} | {_fmt(rate)} | {dz} | {dr} |")
        if s["desire"]:
            last_day, fr = s["desire"][-1]
            lines += ["", f"Framework focus mix on day {last_day}: income {fr['income']:.3f}, health {fr['health']:.3f}, rank {fr['rank']:.3f}"]
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario TOML/JSON file, or builtin:default (the default)")
    p.add_argument("--policies", default="all:rule", help="comma list of one policy per rider, or all:<type>")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--days", type=int, help="override the number of simulated days")
    p.add_argument("--fixture", help="scripted-backend fixture JSON, or builtin:income_greedy")
    p.add_argument("--out", default="runs", help="output root; the run lands in <out>/<run-id>/")
    p.add_argument("--manifest", help="re-run exactly what an existing manifest.json describes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emocog", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario")
    _add_run_args(p)
    p.add_argument("--backend", choices=("live", "scripted"), default="scripted")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="compute metrics from one or more run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", default="report")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("record-fixtures", help="run against the live backend and save every reply")
    _add_run_args(p)
    p.add_argument("--fixture-out", required=True, help="where to write the recorded fixture JSON")
    p.set_defaults(func=cmd_record_fixtures)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
