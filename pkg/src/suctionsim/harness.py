"""Batch experiment execution, reporting, and module wiring."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .control import ScriptedPolicy, SuctionEnv
from .errors import ConfigError
from .llm_client import ChatClient, load_cassette
from .metrics import Metrics, aggregate, compute_metrics
from .records import EpisodeRecord
from .reasoning import LLMBackend, NoneBackend, RandomBackend, RuleBackend, guideline_text
from .scenario import ScenarioConfig, generate_scenario
from .stats import WelchResult, welch_t_test

MODULES = ("rr", "nr", "lrwoc", "lrwc", "rule", "rule-clot-first")


def make_backend(module: str, seed: int = 0, llm_client: ChatClient | None = None):
    if module == "rr":
        return RandomBackend()
    if module == "nr":
        return NoneBackend()
    if module == "rule":
        return RuleBackend()
    if module == "rule-clot-first":
        return RuleBackend(clot_first=True)
    if module in ("lrwoc", "lrwc"):
        if llm_client is None:
            raise ConfigError(f"module {module!r} needs a chat client (live or cassette replay)")
        context = guideline_text() if module == "lrwc" else None
        return LLMBackend(llm_client, context=context)
    raise ConfigError(f"unknown module {module!r}; expected one of {MODULES}")


def run_episode(
    scenario: ScenarioConfig,
    module: str,
    policy: ScriptedPolicy | None = None,
    llm_client: ChatClient | None = None,
) -> EpisodeRecord:
    """One full episode under the environment contract; returns its record."""
    backend = make_backend(module, scenario.seed, llm_client)
    env = SuctionEnv(scenario, backend)
    policy = policy or ScriptedPolicy(scenario.physics)
    record = EpisodeRecord(scenario=scenario.to_dict(), module=module)

    step = env.reset()
    record.initial_active = env.initial_active
    seen_plans = 0
    record.add_step(step.info, step.reward.total)
    while seen_plans < len(env.plans):
        record.add_plan(step.info["step_index"], env.plans[seen_plans])
        seen_plans += 1
    while not step.done:
        command = policy.act(step.observation)
        step = env.step(command)
        record.add_step(step.info, step.reward.total)
        while seen_plans < len(env.plans):
            record.add_plan(step.info["step_index"], env.plans[seen_plans])
            seen_plans += 1
    while seen_plans < len(env.plans):
        record.add_plan(step.info["step_index"], env.plans[seen_plans])
        seen_plans += 1
    record.events = list(env.events)
    record.completed = step.info["active"] == 0
    if any(ev.get("type") == "llm_degradation" for ev in record.events):
        record.tainted = True
    return record


def _episode_worker(args) -> str:
    scenario_dict, module, out_dir, cassette_path = args
    scenario = ScenarioConfig.from_dict(scenario_dict)
    client = None
    if module in ("lrwoc", "lrwc") and cassette_path:
        client = ChatClient(mode="replay", cassette=load_cassette(cassette_path))
    record = run_episode(scenario, module, llm_client=client)
    path = Path(out_dir) / f"env{scenario.env_id}_{module}_seed{scenario.seed}.ndjson"
    record.save(path)
    return str(path)


def run_batch(
    env_ids,
    modules,
    scenes: int,
    seed: int,
    out_dir: str | Path,
    workers: int = 8,
    total_particles: int = 4000,
    distractor_tool: bool = False,
    cassette_path: str | None = None,
    step_budget: int = 3000,
) -> list[Path]:
    """Run scenes x envs x modules episodes on a worker pool; write records."""
    out = Path(out_dir)
    records_dir = out / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for env_id in env_ids:
        for i in range(scenes):
            scenario = generate_scenario(
                env_id,
                seed + i,
                total_particles=total_particles,
                distractor_tool=distractor_tool,
                step_budget=step_budget,
            )
            for module in modules:
                jobs.append((scenario.to_dict(), module, str(records_dir), cassette_path))
    if workers <= 1:
        paths = [_episode_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(_episode_worker, jobs, chunksize=1))
    return sorted(Path(p) for p in paths)


def load_records(records_dir: str | Path) -> dict:
    """Group persisted records by (env_id, module)."""
    grouped: dict = {}
    for path in sorted(Path(records_dir).glob("*.ndjson")):
        record = EpisodeRecord.load(path)
        key = (record.scenario["env_id"], record.module)
        grouped.setdefault(key, []).append(record)
    return grouped


def compare_modules(samples_a, samples_b) -> WelchResult:
    """Welch comparison of one metric's samples between two modules."""
    if len(samples_a) < 5 or len(samples_b) < 5:
        raise ValueError("need at least 5 samples per side")
    return welch_t_test(samples_a, samples_b)


def metric_samples(records, name: str) -> list[float]:
    out = []
    for record in records:
        value = getattr(compute_metrics(record), name)
        if value is not None:
            out.append(float(value))
    return out


def _metrics_csv(grouped: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["env_id", "module", "seed", "t_ab", "t_50", "t_95", "ttpl", "completed", "tainted"])
    rows = []
    for (env_id, module), records in grouped.items():
        for record in records:
            m = compute_metrics(record)
            rows.append(
                [
                    env_id,
                    module,
                    record.scenario["seed"],
                    "" if m.t_ab is None else m.t_ab,
                    "" if m.t_50 is None else m.t_50,
                    "" if m.t_95 is None else m.t_95,
                    repr(m.ttpl),
                    int(m.completed),
                    int(record.tainted),
                ]
            )
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    writer.writerows(rows)
    return buf.getvalue()


def _remaining_plot(grouped: dict, env_id: int, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for (e, module), records in sorted(grouped.items()):
        if e != env_id:
            continue
        length = max(len(r.fraction) for r in records)
        series = np.full((len(records), length), np.nan)
        for i, r in enumerate(records):
            f = np.asarray(r.fraction)
            series[i, : len(f)] = f
            series[i, len(f):] = f[-1] if len(f) else 0.0
        mean = series.mean(axis=0)
        std = series.std(axis=0)
        x = np.arange(length)
        ax.plot(x, 100 * mean, label=module.upper())
        ax.fill_between(x, 100 * (mean - std), 100 * (mean + std), alpha=0.2)
    ax.set_xlabel("step")
    ax.set_ylabel("blood remaining (%)")
    ax.set_title(f"Environment {env_id}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def emit_report(grouped: dict, out_dir: str | Path) -> dict:
    """Write metrics CSV, JSON summary, and per-environment remaining plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        (out / "metrics.csv").write_text(_metrics_csv(grouped))
        summary = aggregate(grouped)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        for env_id in sorted({e for e, _ in grouped}):
            _remaining_plot(grouped, env_id, out / f"env{env_id}_remaining.png")
    except OSError as exc:
        raise ConfigError(f"report emission failed at {out}: {exc}") from exc
    return summary
