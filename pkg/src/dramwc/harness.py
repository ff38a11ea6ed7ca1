"""Command-line front end: named scenario presets, single simulations,
bound/measurement comparisons, and randomized interference sweeps.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import analysis, checks
from .device import make_timing
from .scheduler import Mode, SchedulerConfig
from .workload import (
    GeneratorKind,
    GeneratorSpec,
    MshrConfig,
    ScenarioSpec,
    StagedRequest,
    build_adversarial,
    run_scenario,
    scenario_from_text,
    scenario_to_text,
)


def _fig2() -> ScenarioSpec:
    # Three older row-hit reads queued on one bank ahead of a younger
    # row-hit read on another bank: the younger read must wait for the
    # column-to-column gap behind each older read.
    return ScenarioSpec(
        label="fig2",
        open_rows={1: 7, 2: 3},
        prestage=[
            StagedRequest(False, 2, 2, 3),
            StagedRequest(False, 2, 2, 3),
            StagedRequest(False, 2, 2, 3),
            StagedRequest(False, 1, 1, 7),
        ],
        horizon=200,
        analyzed_core=1,
        num_cores=3,
    )


def _fig3() -> ScenarioSpec:
    # One row-miss read per closed bank: the second activate waits only for
    # the activate-to-activate gap, so the two requests overlap.
    return ScenarioSpec(
        label="fig3",
        open_rows={},
        prestage=[
            StagedRequest(False, 2, 2, 5),
            StagedRequest(False, 1, 1, 9),
        ],
        horizon=200,
        analyzed_core=1,
        num_cores=3,
    )


def _fig4() -> ScenarioSpec:
    # An older row-miss request gets overtaken: the younger row-hit column
    # command is preferred over the older precharge.
    return ScenarioSpec(
        label="fig4",
        open_rows={1: 20, 2: 10},
        prestage=[
            StagedRequest(False, 2, 2, 10),  # row hit, oldest
            StagedRequest(False, 2, 2, 11),  # row miss behind it
            StagedRequest(False, 1, 1, 20),  # row hit, youngest
        ],
        horizon=200,
        analyzed_core=1,
        num_cores=3,
    )


def _fig5() -> ScenarioSpec:
    # Drain already triggered with two queued writes, two competing reads
    # staged, and the analyzed read arriving last: it finishes after all of
    # them.
    return ScenarioSpec(
        label="fig5",
        open_rows={0: 5, 1: 15, 2: 25, 3: 35},
        prestage=[
            StagedRequest(True, 3, 3, 36),
            StagedRequest(True, 3, 3, 37),
            StagedRequest(False, 1, 1, 15),
            StagedRequest(False, 2, 2, 25),
            StagedRequest(False, 0, 0, 5),
        ],
        initial_mode=Mode.WRITE_DRAIN,
        horizon=300,
        analyzed_core=0,
        num_cores=4,
    )


_PRESETS = {"fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "fig5": _fig5}


def preset(name: str) -> ScenarioSpec:
    """Named illustrative scenario with exact staged queues and open rows."""
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")


def pipeline_scenario(n_reads: int) -> ScenarioSpec:
    """N row-hit reads staged on one open bank; their bursts must occupy
    exactly n_reads * tburst back-to-back data-bus cycles."""
    return ScenarioSpec(
        label=f"pipeline-{n_reads}",
        open_rows={1: 40},
        prestage=[StagedRequest(False, 1, 1, 40) for _ in range(n_reads)],
        horizon=40 + 8 * n_reads,
        analyzed_core=1,
        num_cores=2,
        scheduler=SchedulerConfig(read_cap=max(32, n_reads + 2)),
        mshr=MshrConfig(
            global_read_cap=max(32, n_reads + 2),
            per_core_read_cap=max(10, n_reads + 2),
        ),
    )


def live_scenario(kind: GeneratorKind | str, n_interferers: int = 3,
                  seed: int = 0, latency_budget: int = 25,
                  horizon: int = 60_000, mshr: MshrConfig | None = None,
                  interferer_start: int = 0) -> ScenarioSpec:
    """Latency-style analyzed task on core 0 co-running with n interferers."""
    if isinstance(kind, str):
        kind = GeneratorKind(kind)
    open_rows = {core: 100 + core for core in range(n_interferers + 1)}
    generators = [
        GeneratorSpec(GeneratorKind.LATENCY, core=0, bank=0,
                      budget=latency_budget)
    ]
    for core in range(1, n_interferers + 1):
        generators.append(
            GeneratorSpec(kind, core=core, bank=core, start=interferer_start)
        )
    return ScenarioSpec(
        label=f"live-{kind.value}-x{n_interferers}-{seed}",
        open_rows=open_rows,
        generators=generators,
        horizon=horizon,
        analyzed_core=0,
        num_cores=n_interferers + 1,
        mshr=mshr or MshrConfig(),
        seed=seed,
    )


def solo_variant(spec: ScenarioSpec) -> ScenarioSpec:
    """The same scenario with only the analyzed core's generator running."""
    keep = [g for g in spec.generators if g.core == spec.analyzed_core]
    if not keep:
        raise ValueError("scenario has no generator on the analyzed core")
    return replace(spec, label=spec.label + "-solo", generators=keep, prestage=[])


def _analyzed_stop(spec: ScenarioSpec):
    """Stop once the analyzed core's budgeted requests have all completed."""
    core = spec.analyzed_core
    budget = None
    for gen in spec.generators:
        if gen.core == core:
            budget = gen.budget
    if core is None or budget is None:
        return None

    def stop(controller):
        done = sum(
            1 for rec in controller.trace.completions if rec.core == core
        )
        return done >= budget

    return stop


def core_span(trace, core: int) -> int:
    """Cycles from the first arrival to the last completion for one core."""
    completions = [r for r in trace.completions if r.core == core]
    if not completions:
        raise ValueError(f"core {core} completed nothing")
    first = min(r.arrival_cycle for r in completions)
    return max(r.completion_cycle for r in completions) - first


@dataclass
class ExperimentReport:
    scenario: str
    seed: int
    bound_full: int
    bound_nowq: int
    bound_baseline: int
    measured_max: int
    measured_mean: float
    margin_full: float
    margin_nowq: float
    violations_full: int
    violations_nowq: int
    violations_baseline: int
    slowdown: float | None = None

    CSV_HEADER = (
        "scenario,seed,bound_full,bound_nowq,bound_baseline,"
        "measured_max,measured_mean,margin_full,margin_nowq,"
        "violations_full,violations_nowq,violations_baseline,slowdown"
    )

    def csv_row(self) -> str:
        slowdown = "" if self.slowdown is None else f"{self.slowdown:.4f}"
        return (
            f"{self.scenario},{self.seed},{self.bound_full},{self.bound_nowq},"
            f"{self.bound_baseline},{self.measured_max},{self.measured_mean:.3f},"
            f"{self.margin_full:.4f},{self.margin_nowq:.4f},"
            f"{self.violations_full},{self.violations_nowq},"
            f"{self.violations_baseline},{slowdown}"
        )


def evaluate(trace, spec: ScenarioSpec, slowdown: float | None = None,
             inputs: analysis.AnalysisInputs | None = None) -> ExperimentReport:
    """Bound-vs-measurement report for the analyzed core of one trace."""
    if spec.analyzed_core is None:
        raise ValueError("scenario has no analyzed core")
    inputs = inputs or analysis.AnalysisInputs(timing=trace.timing)
    full = analysis.per_request_bound(inputs, "full")
    nowq = analysis.per_request_bound(inputs, "no_write_queue")
    baseline = analysis.kim_baseline_bound(inputs)
    rep_full = analysis.bound_check(trace, full, spec.analyzed_core)
    rep_nowq = analysis.bound_check(trace, nowq, spec.analyzed_core)
    rep_base = analysis.bound_check(trace, baseline, spec.analyzed_core)
    return ExperimentReport(
        scenario=spec.label,
        seed=spec.seed,
        bound_full=full.per_request_cycles,
        bound_nowq=nowq.per_request_cycles,
        bound_baseline=baseline.per_request_cycles,
        measured_max=rep_full.max_delay,
        measured_mean=rep_full.mean_delay,
        margin_full=rep_full.margin,
        margin_nowq=rep_nowq.margin,
        violations_full=rep_full.violation_count,
        violations_nowq=rep_nowq.violation_count,
        violations_baseline=rep_base.violation_count,
        slowdown=slowdown,
    )


# ---------------------------------------------------------------------------
# File emission
# ---------------------------------------------------------------------------

def _write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")


def simulate(spec: ScenarioSpec, out_dir) -> "tuple":
    """Run a scenario, validate its trace, and emit trace/stats/scenario files."""
    trace, workload = run_scenario(spec)
    checks.validate_trace(trace)
    out = Path(out_dir)
    _write(out / "trace.csv", trace.to_csv())
    _write(out / "stats.txt", trace.stats_text())
    _write(out / "scenario.txt", scenario_to_text(spec))
    return trace, workload


def compare(spec: ScenarioSpec, out_dir=None) -> ExperimentReport:
    """Single run with all three bounds and the measured delays side by side."""
    trace, _ = run_scenario(spec)
    checks.validate_trace(trace)
    report = evaluate(trace, spec)
    if out_dir is not None:
        out = Path(out_dir)
        _write(out / "trace.csv", trace.to_csv())
        _write(out / "stats.txt", trace.stats_text())
        _write(out / "scenario.txt", scenario_to_text(spec))
        timing = trace.timing
        rows = [f"quantity,cycles,ns"]
        inputs = analysis.AnalysisInputs(timing=timing)
        for name, cycles, ns in analysis.bound_rows(inputs):
            rows.append(f"{name},{cycles},{ns:.2f}")
        rows.append(f"measured_max_delay,{report.measured_max},"
                    f"{timing.ns(report.measured_max):.2f}")
        rows.append(f"measured_mean_delay,{report.measured_mean:.3f},"
                    f"{timing.ns(report.measured_mean):.2f}")
        rows.append(f"margin_full_ratio,{report.margin_full:.4f},")
        rows.append(f"margin_nowq_ratio,{report.margin_nowq:.4f},")
        rows.append(f"violations_full,{report.violations_full},")
        rows.append(f"violations_nowq,{report.violations_nowq},")
        rows.append(f"violations_baseline,{report.violations_baseline},")
        _write(out / "report.csv", "\n".join(rows) + "\n")
    return report


def sweep(kind, n_interferers: int, seeds, out_dir=None,
          latency_budget: int = 25, mshr: MshrConfig | None = None,
          staged: bool = False) -> list[ExperimentReport]:
    """Run the analyzed task against n interferers for each seed.

    Live mode (default) co-runs generators and reports the normalized
    response time against a solo run; staged mode replays the pre-loaded
    worst-case initial conditions instead.
    """
    if isinstance(kind, str):
        kind = GeneratorKind(kind)
    reports = []
    for seed in seeds:
        if staged:
            spec = build_adversarial(interferer_kind=kind, seed=seed,
                                     n_interferers=n_interferers)
            trace, _ = run_scenario(spec)
            checks.validate_trace(trace)
            report = evaluate(trace, spec)
        else:
            spec = live_scenario(kind, n_interferers, seed,
                                 latency_budget=latency_budget,
                                 mshr=mshr or MshrConfig())
            solo = solo_variant(spec)
            solo_trace, _ = run_scenario(solo, stop=_analyzed_stop(solo))
            checks.validate_trace(solo_trace)
            trace, _ = run_scenario(spec, stop=_analyzed_stop(spec))
            checks.validate_trace(trace)
            slowdown = (core_span(trace, spec.analyzed_core)
                        / core_span(solo_trace, spec.analyzed_core))
            report = evaluate(trace, spec, slowdown=slowdown)
        reports.append(report)
        if out_dir is not None:
            run_dir = Path(out_dir) / f"seed_{seed}"
            _write(run_dir / "trace.csv", trace.to_csv())
            _write(run_dir / "stats.txt", trace.stats_text())
            _write(run_dir / "scenario.txt", scenario_to_text(spec))
    if out_dir is not None:
        lines = [ExperimentReport.CSV_HEADER]
        lines += [r.csv_row() for r in sorted(reports, key=lambda r: r.seed)]
        _write(Path(out_dir) / "summary.csv", "\n".join(lines) + "\n")
    return reports


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(text)]


def _load_config(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = line.split(None, 1)
        values[key] = value
    return values


def _apply_overrides(spec: ScenarioSpec, args) -> ScenarioSpec:
    if getattr(args, "prioritized_bank", None) is not None:
        spec = replace(spec, scheduler=replace(
            spec.scheduler, prioritized_bank=args.prioritized_bank))
    if getattr(args, "mshr_reserve", None) is not None:
        spec = replace(spec, mshr=replace(
            spec.mshr, reserve_per_core=args.mshr_reserve))
    return spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dramwc",
        description="Memory-controller simulation and worst-case interference bounds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_preset = sub.add_parser("preset", help="emit and run a named scenario")
    p_preset.add_argument("name", choices=sorted(_PRESETS))
    p_preset.add_argument("--out", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario file")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--prioritized-bank", type=int, dest="prioritized_bank")
    p_sim.add_argument("--mshr-reserve", type=int, dest="mshr_reserve")

    p_an = sub.add_parser("analyze", help="compute bounds from a config file")
    p_an.add_argument("--config", required=True)
    p_an.add_argument("--out")

    p_cmp = sub.add_parser("compare", help="bounds vs. one simulated scenario")
    src = p_cmp.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(_PRESETS))
    src.add_argument("--scenario")
    p_cmp.add_argument("--kind", default="bandwidth_write",
                       choices=[k.value for k in GeneratorKind])
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--out", required=True)
    p_cmp.add_argument("--prioritized-bank", type=int, dest="prioritized_bank")
    p_cmp.add_argument("--mshr-reserve", type=int, dest="mshr_reserve")

    p_sweep = sub.add_parser("sweep", help="seeded interference experiments")
    p_sweep.add_argument("--kind", required=True,
                         choices=[k.value for k in GeneratorKind])
    p_sweep.add_argument("--n", type=int, default=3, choices=(1, 2, 3))
    p_sweep.add_argument("--seeds", default="0..4")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--staged", action="store_true",
                         help="replay staged worst cases instead of live runs")
    p_sweep.add_argument("--mshr-reserve", type=int, dest="mshr_reserve")

    args = parser.parse_args(argv)

    if args.command == "preset":
        spec = preset(args.name)
        trace, _ = simulate(spec, args.out)
        print(f"{spec.label}: {len(trace.issues)} commands, "
              f"{len(trace.completions)} completions, "
              f"{trace.total_cycles} cycles")
        return 0

    if args.command == "simulate":
        spec = scenario_from_text(Path(args.scenario).read_text())
        spec = _apply_overrides(spec, args)
        trace, _ = simulate(spec, args.out)
        print(f"{spec.label}: {len(trace.completions)} completions in "
              f"{trace.total_cycles} cycles -> {args.out}")
        return 0

    if args.command == "analyze":
        cfg = _load_config(args.config)
        timing_keys = {"tck_ns", "trp", "trcd", "cl", "wl", "tburst", "tccd",
                       "twtr", "trrd", "trtp", "tfaw", "trc", "twr", "rd_wr_gap"}
        timing_raw = {
            k: (float(v) if k == "tck_ns" else int(v))
            for k, v in cfg.items() if k in timing_keys
        }
        inputs = analysis.AnalysisInputs(
            timing=make_timing(timing_raw),
            max_prior_reads=int(cfg.get("max_prior_reads", 30)),
            drain_batch=int(cfg.get("drain_batch", 4)),
            num_cores=int(cfg.get("num_cores", 4)),
            miss_count=int(cfg.get("miss_count", 0)),
            solo_cycles=int(cfg["solo_cycles"]) if "solo_cycles" in cfg else None,
        )
        print(analysis.format_bound_table(inputs), end="")
        if args.out:
            rows = ["quantity,cycles,ns"]
            for name, cycles, ns in analysis.bound_rows(inputs):
                rows.append(f"{name},{cycles},{ns:.2f}")
            _write(Path(args.out) / "report.csv", "\n".join(rows) + "\n")
        return 0

    if args.command == "compare":
        if args.preset:
            spec = preset(args.preset)
        elif args.scenario:
            spec = scenario_from_text(Path(args.scenario).read_text())
        else:
            spec = build_adversarial(interferer_kind=args.kind, seed=args.seed)
        spec = _apply_overrides(spec, args)
        report = compare(spec, args.out)
        print(f"{report.scenario}: measured max {report.measured_max}, "
              f"bound(full) {report.bound_full}, "
              f"bound(nowq) {report.bound_nowq}, "
              f"baseline {report.bound_baseline}")
        return 0

    if args.command == "sweep":
        mshr = MshrConfig()
        if args.mshr_reserve is not None:
            mshr = replace(mshr, reserve_per_core=args.mshr_reserve)
        reports = sweep(args.kind, args.n, _parse_seeds(args.seeds),
                        out_dir=args.out, mshr=mshr, staged=args.staged)
        for report in reports:
            slowdown = "-" if report.slowdown is None else f"{report.slowdown:.2f}"
            print(f"seed {report.seed}: max delay {report.measured_max}, "
                  f"slowdown {slowdown}, violations "
                  f"full={report.violations_full} nowq={report.violations_nowq}")
        return 0

    parser.error(f"unhandled command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
