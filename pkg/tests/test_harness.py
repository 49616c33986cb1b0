"""Batch runner, record loading, reporting, and the command line."""

from __future__ import annotations

import json
import re
from pathlib import Path

import pytest
from click.testing import CliRunner

from suctionsim.cli import main as cli_main
from suctionsim.errors import ConfigError
from suctionsim.harness import (
    MODULES,
    compare_modules,
    emit_report,
    load_records,
    make_backend,
    metric_samples,
    run_batch,
    run_episode,
)
from suctionsim.llm_client import ChatClient
from suctionsim.reasoning import (
    LLMBackend,
    NoneBackend,
    RandomBackend,
    RuleBackend,
    guideline_text,
)
from suctionsim.records import EpisodeRecord


class TestMakeBackend:
    def test_module_wiring(self):
        assert isinstance(make_backend("rr"), RandomBackend)
        assert isinstance(make_backend("nr"), NoneBackend)
        assert isinstance(make_backend("rule"), RuleBackend)
        assert make_backend("rule").clot_first is False
        assert make_backend("rule-clot-first").clot_first is True
        client = ChatClient(mode="replay")
        woc = make_backend("lrwoc", llm_client=client)
        wc = make_backend("lrwc", llm_client=client)
        assert isinstance(woc, LLMBackend) and woc.context is None
        assert wc.context == guideline_text()

    def test_llm_modules_need_a_client(self):
        with pytest.raises(ConfigError):
            make_backend("lrwoc")

    def test_unknown_module(self):
        with pytest.raises(ConfigError):
            make_backend("oracle")


class EchoPlanner:
    """Answers every chat request with the pool labels it finds, in order."""

    def __init__(self):
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        labels = re.findall(r"^(P\d+):", request.user, re.M)
        return "\n".join(f"{i + 1}. {l}" for i, l in enumerate(labels))


class TestRunEpisode:
    def test_record_structure(self, episode_env1_rule):
        scenario, record = episode_env1_rule
        assert record.module == "rule"
        assert record.completed
        assert record.initial_active == record.active[0]
        assert record.steps() > 10
        assert record.active[-1] == 0
        # the initial plan is flushed against the reset step
        assert record.plans[0]["step"] == 0
        assert record.plans[0]["provenance"] == "RULE"
        assert record.fraction[0] == pytest.approx(1.0)

    def test_deterministic_serialization(self, scenario_factory):
        sc = scenario_factory(1, 41, particles=300)
        a = run_episode(sc, "rule")
        b = run_episode(sc, "rule")
        assert a.to_ndjson() == b.to_ndjson()

    def test_llm_module_records_provenance(self, scenario_factory):
        sc = scenario_factory(1, 41, particles=300)
        planner = EchoPlanner()
        record = run_episode(sc, "lrwoc", llm_client=planner)
        assert record.plans[0]["provenance"] == "LLM_WOC"
        assert not record.tainted
        assert planner.calls >= 1

    def test_llm_degradation_taints_record(self, scenario_factory):
        class Mute:
            def complete(self, request):
                return "I cannot help with that."

        sc = scenario_factory(1, 41, particles=300)
        record = run_episode(sc, "lrwoc", llm_client=Mute())
        assert record.tainted
        assert any(ev["type"] == "llm_degradation" for ev in record.events)
        assert record.plans[0]["provenance"] == "RULE"


@pytest.fixture(scope="module")
def small_batch(tmp_path_factory):
    out = tmp_path_factory.mktemp("batch")
    paths = run_batch(
        [1], ["rule", "rr"], scenes=2, seed=90, out_dir=out, workers=1,
        total_particles=250, step_budget=800,
    )
    return out, paths


class TestRunBatch:
    def test_one_record_per_episode(self, small_batch):
        out, paths = small_batch
        assert len(paths) == 4
        names = {p.name for p in paths}
        assert names == {
            "env1_rule_seed90.ndjson", "env1_rule_seed91.ndjson",
            "env1_rr_seed90.ndjson", "env1_rr_seed91.ndjson",
        }

    def test_load_records_groups_by_cell(self, small_batch):
        out, _ = small_batch
        grouped = load_records(out / "records")
        assert set(grouped) == {(1, "rule"), (1, "rr")}
        assert all(len(v) == 2 for v in grouped.values())

    def test_batch_reruns_byte_identical(self, small_batch, tmp_path):
        out, paths = small_batch
        again = run_batch(
            [1], ["rule"], scenes=1, seed=90, out_dir=tmp_path, workers=1,
            total_particles=250, step_budget=800,
        )
        assert again[0].read_bytes() == (out / "records" / "env1_rule_seed90.ndjson").read_bytes()


class TestComparison:
    def test_needs_five_samples_per_side(self):
        with pytest.raises(ValueError):
            compare_modules([1, 2, 3, 4], [1, 2, 3, 4, 5])
        result = compare_modules([1.0, 2, 3, 4, 5], [2.0, 3, 4, 5, 7])
        assert 0.0 <= result.p_value <= 1.0

    def test_metric_samples_skips_missing(self, small_batch):
        out, _ = small_batch
        grouped = load_records(out / "records")
        samples = metric_samples(grouped[(1, "rule")], "t_50")
        assert len(samples) == 2
        assert all(isinstance(v, float) for v in samples)


class TestReport:
    def test_emit_report_outputs(self, small_batch, tmp_path):
        out, _ = small_batch
        grouped = load_records(out / "records")
        summary = emit_report(grouped, tmp_path)
        csv_text = (tmp_path / "metrics.csv").read_text()
        header, *rows = csv_text.splitlines()
        assert header == "env_id,module,seed,t_ab,t_50,t_95,ttpl,completed,tainted"
        assert len(rows) == 4
        loaded = json.loads((tmp_path / "summary.json").read_text())
        assert loaded == summary
        assert set(summary) == {"env1/rule", "env1/rr"}
        png = (tmp_path / "env1_remaining.png").read_bytes()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"


class TestCli:
    def test_run_and_report(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "exp"
        result = runner.invoke(cli_main, [
            "run", "--env", "1", "--module", "rule", "--scenes", "1",
            "--seed", "90", "--out", str(out), "--workers", "1",
            "--particles", "250", "--step-budget", "800",
        ])
        assert result.exit_code == 0, result.output
        assert "wrote 1 records" in result.output
        report = runner.invoke(cli_main, ["report", "--in", str(out)])
        assert report.exit_code == 0, report.output
        assert (out / "metrics.csv").exists()
        assert (out / "summary.json").exists()

    def test_llm_modules_require_transport(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(cli_main, [
            "run", "--module", "lrwoc", "--out", str(tmp_path),
        ])
        assert result.exit_code != 0
        assert "--llm" in result.output

    def test_replay_requires_cassette(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(cli_main, [
            "run", "--module", "lrwoc", "--llm", "replay", "--out", str(tmp_path),
        ])
        assert result.exit_code != 0
        assert "--cassette" in result.output

    def test_bad_env_spec(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(cli_main, [
            "run", "--env", "7", "--module", "rule", "--out", str(tmp_path),
        ])
        assert result.exit_code != 0

    def test_report_on_empty_directory(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(cli_main, ["report", "--in", str(tmp_path)])
        assert result.exit_code != 0
        assert "no .ndjson records" in result.output
