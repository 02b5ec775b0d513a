from __future__ import annotations

import csv
import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest
import tomli_w
from conftest import income_greedy_fixture

from emocog.cli import load_scenario, main
from emocog.domain import ScenarioConfig
from emocog.metrics import acceptance_counts, desire_distribution
from emocog.policies import ScriptedBackend, prompt_hash
from emocog.world import read_daily, read_events

MIXED = "rl,rl,llm,llm,framework,framework"


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def only_run(out: Path) -> Path:
    (run_dir,) = [p for p in out.iterdir() if p.is_dir()]
    return run_dir


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        h.update(str(p.relative_to(root)).encode())
        if p.is_file():
            h.update(p.read_bytes())
    return h.hexdigest()


def read_csv(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def scenario_file(tmp_path) -> Path:
    path = tmp_path / "default.toml"
    path.write_text(tomli_w.dumps(ScenarioConfig(n_days=2).to_dict()))
    return path


def test_packaged_default_matches_code_defaults():
    cfg, name = load_scenario(None)
    assert name == "builtin:default" and cfg == ScenarioConfig()


def test_rule_run_writes_three_files(tmp_path, scenario_file):
    assert run_cli("run", "--scenario", scenario_file, "--policies", "all:rule", "--seed", 7, "--out", tmp_path / "runs") == 0
    run_dir = only_run(tmp_path / "runs")
    assert sorted(p.name for p in run_dir.iterdir() if p.is_file()) == ["daily.csv", "events.jsonl", "manifest.json"]
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["run_id"] == run_dir.name
    assert run_dir.name.endswith(manifest["digest"][:12])


def test_mixed_run_has_per_type_rows(tmp_path, scenario_file):
    out = tmp_path / "runs"
    assert run_cli("run", "--scenario", scenario_file, "--policies", MIXED, "--fixture", "builtin:income_greedy", "--out", out) == 0
    daily = read_daily(only_run(out) / "daily.csv")
    for kind in ("rl", "llm", "framework"):
        days = {int(r["day"]) for r in daily if r["policy"] == kind}
        assert days == {1, 2}


def test_same_manifest_same_digest_and_manifest_replay(tmp_path, scenario_file):
    args = ["run", "--scenario", scenario_file, "--policies", MIXED, "--fixture", "builtin:income_greedy"]
    assert run_cli(*args, "--out", tmp_path / "a") == 0
    assert run_cli(*args, "--out", tmp_path / "b") == 0
    a, b = only_run(tmp_path / "a"), only_run(tmp_path / "b")
    assert (a / "events.jsonl").read_bytes() == (b / "events.jsonl").read_bytes()
    # The manifest alone reproduces the run, even after the fixture file is gone.
    assert run_cli("run", "--manifest", a / "manifest.json", "--out", tmp_path / "c") == 0
    c = only_run(tmp_path / "c")
    assert (c / "events.jsonl").read_bytes() == (a / "events.jsonl").read_bytes()


def test_scripted_without_fixture_is_config_error(tmp_path, capsys):
    assert run_cli("run", "--days", 1, "--policies", MIXED, "--out", tmp_path) == 2
    assert "fixture" in capsys.readouterr().err


def test_bad_config_lists_every_problem(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("n_riders = 0\nn_days = -1\n")
    assert run_cli("run", "--scenario", bad, "--out", tmp_path / "runs") == 2
    err = capsys.readouterr().err
    assert "n_riders" in err and "n_days" in err


@pytest.mark.parametrize("argv", [["--policies", "all:robot"], ["--scenario", "missing.toml"], ["--fixture", "missing.json", "--policies", MIXED]])
def test_other_config_errors(tmp_path, argv):
    assert run_cli("run", "--days", 1, "--out", tmp_path, *argv) == 2


def test_live_without_credentials_is_backend_error(tmp_path, monkeypatch):
    for var in ("EMOCOG_API_KEY", "OPENAI_API_KEY", "EMOCOG_BASE_URL"):
        monkeypatch.delenv(var, raising=False)
    assert run_cli("run", "--days", 1, "--policies", MIXED, "--backend", "live", "--out", tmp_path) == 3


@pytest.fixture
def two_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    scen = root / "s.toml"
    scen.write_text(tomli_w.dumps(ScenarioConfig(n_days=3).to_dict()))
    dirs = []
    for i, pol in enumerate(["rule,rule,rl,rl,framework,framework", "all:llm"]):
        out = root / f"r{i}"
        assert run_cli("run", "--scenario", scen, "--policies", pol, "--fixture", "builtin:income_greedy", "--out", out) == 0
        dirs.append(only_run(out))
    return dirs


def test_report_single_run(tmp_path, two_runs):
    assert run_cli("report", two_runs[0], "--out", tmp_path / "rep") == 0
    rep = tmp_path / "rep"
    inv = read_csv(rep / "involution.csv")
    assert [int(r["day"]) for r in inv] == [1, 2, 3]
    assert not (rep / "comparison.csv").exists()
    assert (rep / "summary.md").read_text().startswith("# Run report")


def test_report_fractions_recount_from_raw_events(tmp_path, two_runs):
    assert run_cli("report", *two_runs, "--out", tmp_path / "rep") == 0
    rep = tmp_path / "rep"
    header = next(csv.reader((rep / "comparison.csv").open()))
    assert header == ["metric", two_runs[0].name, two_runs[1].name]
    for row in read_csv(rep / "acceptance.csv"):
        run_dir = next(d for d in two_runs if d.name == row["run"])
        events = read_events(run_dir / "events.jsonl")
        # Recount from the manifest and the raw offer/decision events.
        policies = json.loads((run_dir / "manifest.json").read_text())["policies"]
        members = {int(a) for a, p in policies.items() if p == row["policy"]}
        offers = sum(1 for e in events if e["kind"] == "offer" and e["agent"] in members)
        accepts = sum(1 for e in events if e["kind"] == "decision" and e["agent"] in members and e.get("action") == "accept" and "order" in e)
        assert (int(row["offers"]), int(row["accepts"])) == (offers, accepts)
        assert acceptance_counts(events, row["policy"]) == (accepts, offers)
    desire = read_csv(rep / "desire.csv")
    events = read_events(two_runs[0] / "events.jsonl")
    recount = desire_distribution(events, n_days=3)
    assert len(desire) == len(recount) == 3
    for row, (day, fr) in zip(desire, recount):
        assert int(row["day"]) == day
        assert sum(float(row[k]) for k in ("income", "health", "rank")) == pytest.approx(1.0, abs=1e-5)
        assert float(row["income"]) == pytest.approx(fr["income"], abs=1e-5)


def test_report_is_read_only(tmp_path, two_runs):
    before = [tree_digest(d) for d in two_runs]
    assert run_cli("report", *two_runs, "--out", tmp_path / "rep") == 0
    assert [tree_digest(d) for d in two_runs] == before


def test_report_on_corrupt_log(tmp_path, two_runs, capsys):
    bad = tmp_path / "bad"
    bad.mkdir()
    for f in two_runs[0].iterdir():
        if f.is_file():
            (bad / f.name).write_bytes(f.read_bytes())
    with (bad / "events.jsonl").open("a") as fh:
        fh.write("{truncated\n")
    missing = tmp_path / "missing"
    missing.mkdir()
    assert run_cli("report", two_runs[0], bad, missing, "--out", tmp_path / "rep") == 4
    err = capsys.readouterr().err
    assert "events.jsonl" in err and str(missing / "manifest.json") in err


# ---------------------------------------------------------------- fixture recording


class FakeChat(BaseHTTPRequestHandler):
    replies = ScriptedBackend.from_mapping(income_greedy_fixture())
    seen: set[str] = set()

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        prompt = body["messages"][-1]["content"]
        self.seen.add(prompt_hash(prompt))
        text = self.replies.respond(prompt)
        data = json.dumps({"choices": [{"message": {"role": "assistant", "content": text}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def fake_server(monkeypatch):
    FakeChat.seen = set()
    server = ThreadingHTTPServer(("127.0.0.1", 0), FakeChat)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    monkeypatch.setenv("EMOCOG_BASE_URL", f"http://127.0.0.1:{server.server_address[1]}/v1")
    monkeypatch.delenv("EMOCOG_API_KEY", raising=False)
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    yield
    server.shutdown()
    server.server_close()


def test_record_then_replay(tmp_path, fake_server):
    fx = tmp_path / "fx.json"
    args = ["--days", 1, "--policies", "rule,rule,llm,llm,framework,framework"]
    assert run_cli("record-fixtures", *args, "--out", tmp_path / "live", "--fixture-out", fx) == 0
    live = only_run(tmp_path / "live")
    recorded = json.loads(fx.read_text())
    assert recorded and set(recorded) == FakeChat.seen
    events = read_events(live / "events.jsonl")
    assert not [e for e in events if e["kind"] == "backend_error"]
    assert run_cli("run", *args, "--fixture", fx, "--out", tmp_path / "replay") == 0
    replay = only_run(tmp_path / "replay")
    assert (replay / "events.jsonl").read_bytes() == (live / "events.jsonl").read_bytes()


def test_record_without_backend_riders_gives_empty_fixture(tmp_path, fake_server):
    fx = tmp_path / "fx.json"
    assert run_cli("record-fixtures", "--days", 1, "--policies", "all:rule", "--out", tmp_path / "live", "--fixture-out", fx) == 0
    assert json.loads(fx.read_text()) == {}
