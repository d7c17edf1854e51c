"""Command-line front end.

Four subcommands cover the pipeline:

  extract     accident report text -> interaction script (.ips)
  logicalize  interaction script -> searchable logical scenario (.lsc)
  search      logical scenario -> collision cases + history + progress plot
  campaign    scenario set x methods x repetitions -> metrics and figures

Exit codes: 0 success, 2 usage/configuration/input problems, 3 pipeline
failures (the model never produced a usable answer), 4 internal errors.
"""

from __future__ import annotations

import argparse
import functools
import json
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import PipelineConfig, SimSettings, derive_seed
from .dsl import parse_logical, serialize_concrete, serialize_template
from .errors import (
    ConfigError,
    ConversionFailed,
    ExtractionFailed,
    ParseError,
    ScenForgeError,
    TranscriptMissError,
)
from .ips import check_legality, parse_ips, serialize_ips
from .llm import LlmClientConfig, ReplayClient, convert_to_template, extract_ips, make_client
from .logicalize import DefaultRangeTable, fill_ranges, select_ego, substitute_ego
from .microsim import RoadModel, simulate, write_trace_csv
from .report import (
    write_metrics_csv,
    write_metrics_json,
    write_search_progress,
    write_type_counts,
    write_types_over_sims,
)
from .search import (
    SearchConfig,
    random_search,
    resolve_population_size,
    run_search,
    write_history_jsonl,
)
from .triage import CritRecord, RepetitionHistory, classify, metrics


def _trace_case(tc, sim: SimSettings, threshold: float):
    road = RoadModel.from_descriptor(tc.scenario.template.road, sim.lane_width, sim.curve_radius)
    return simulate(tc, road, sim.ego, sim.physics, sim.horizon, sim.dt, threshold)


def build_run_trace(sim: SimSettings, threshold: float):
    """Picklable pure case-to-trace function for (optionally parallel) maps."""
    return functools.partial(_trace_case, sim=sim, threshold=threshold)


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"input file not found: {p}")
    return p.read_text()


def _client_from_args(args):
    if args.replay:
        return ReplayClient.from_path(args.replay)
    if args.record:
        return make_client(LlmClientConfig(
            mode="record", endpoint=args.endpoint, model_name=args.model,
            transcript_path=args.record,
        ))
    if args.live:
        return make_client(LlmClientConfig(
            mode="live", endpoint=args.endpoint, model_name=args.model,
            transcript_path=None,
        ))
    raise ConfigError("choose a model source: --replay TRANSCRIPT, --record TRANSCRIPT, or --live")


def _add_client_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--replay", metavar="TRANSCRIPT", help="answer prompts from a recorded transcript")
    sub.add_argument("--record", metavar="TRANSCRIPT", help="ask the live endpoint and record the transcript")
    sub.add_argument("--live", action="store_true", help="ask the live endpoint without recording")
    sub.add_argument("--endpoint", default=LlmClientConfig.endpoint, help="chat-completions URL")
    sub.add_argument("--model", default=LlmClientConfig.model_name, help="model name for live calls")


def cmd_extract(args) -> int:
    report = _read_text(args.report)
    client = _client_from_args(args)
    result = extract_ips(report, client, max_retries=args.max_retries)
    out = Path(args.out) if args.out else Path(args.report).with_suffix(".ips")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_ips(result.ips))
    print(f"extracted {len(result.ips.initials)} initial actions and "
          f"{len(result.ips.patterns)} patterns in {result.attempts} attempt(s) -> {out}")
    return 0


def cmd_logicalize(args) -> int:
    ips = parse_ips(_read_text(args.script))
    legality = check_legality(ips)
    if not legality.ok:
        raise ConfigError("input script is illegal:\n" + legality.describe())
    client = _client_from_args(args)
    conversion = convert_to_template(ips, client, max_retries=args.max_retries)
    defaults = DefaultRangeTable.load(args.defaults) if args.defaults else DefaultRangeTable.builtin()
    scenario = fill_ranges(conversion.template, conversion.proposed_ranges(), defaults,
                           ips.road, vehicle_length=args.vehicle_length)
    ego = select_ego(ips).ego
    scenario = substitute_ego(scenario, ego)
    out = Path(args.out) if args.out else Path(args.script).with_suffix(".lsc")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_template(scenario.template))
    print(f"logical scenario with {scenario.template.statement_count} statements, "
          f"ego {ego}, in {conversion.attempts} attempt(s) -> {out}")
    return 0


def _search_config_from_args(args) -> SearchConfig:
    return SearchConfig(
        population_size=args.population,
        generations=args.generations,
        seed=args.seed,
        collision_threshold=args.threshold,
    )


def cmd_search(args) -> int:
    scenario = parse_logical(_read_text(args.scenario))
    cfg = _search_config_from_args(args)
    sim = SimSettings(horizon=args.horizon, dt=args.dt)
    run_trace = build_run_trace(sim, cfg.collision_threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            result = run_search(scenario, cfg, run_trace,
                                map_fn=lambda f, xs: pool.map(f, list(xs)),
                                vehicle_length=sim.physics.vehicle_length)
    else:
        result = run_search(scenario, cfg, run_trace,
                            vehicle_length=sim.physics.vehicle_length)
    elapsed = time.perf_counter() - started

    write_history_jsonl(result.history, out / "history.jsonl")
    crit_dir = out / "criticals"
    crit_dir.mkdir(exist_ok=True)
    for case in result.critical.cases:
        stem = f"sim_{case.sim_index:04d}"
        (crit_dir / f"{stem}.ctc").write_text(serialize_concrete(case.tc))
        write_trace_csv(case.trace, crit_dir / f"{stem}_trace.csv")
    write_search_progress(result.history, out / "progress.csv", out / "progress.png")
    summary = {
        "seed": cfg.seed,
        "population_size": resolve_population_size(cfg, scenario),
        "generations": cfg.generations,
        "simulations": result.simulations,
        "collisions": len(result.collisions),
        "harvested": len(result.critical),
        "critical_sims": result.critical.log,
        "population_sizes": result.population_sizes,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{result.simulations} simulations, {len(result.critical)} critical cases "
          f"harvested in {elapsed:.1f} s -> {out}")
    return 0


def _campaign_repetition(scenarios, method, rep_index, pipeline: PipelineConfig):
    """One repetition of one method: every scenario in order, indices
    continuing across scenarios."""
    records: list[CritRecord] = []
    wall = 0.0
    offset = 0
    threshold = pipeline.search.collision_threshold
    run_trace = build_run_trace(pipeline.sim, threshold)
    for name, scenario in scenarios:
        seed = derive_seed(pipeline.seed, name, method, rep_index)
        cfg = SearchConfig(
            population_size=pipeline.search.population_size,
            generations=pipeline.search.generations,
            crossover_rate=pipeline.search.crossover_rate,
            mutation_rate=pipeline.search.mutation_rate,
            mutation_eta=pipeline.search.mutation_eta,
            tournament_size=pipeline.search.tournament_size,
            seed=seed,
            collision_threshold=threshold,
            acr_eta=pipeline.search.acr_eta,
        )
        started = time.perf_counter()
        if method == "genetic":
            result = run_search(scenario, cfg, run_trace,
                                vehicle_length=pipeline.sim.physics.vehicle_length)
        else:
            budget = resolve_population_size(cfg, scenario) * cfg.generations
            result = random_search(scenario, budget, seed, run_trace, threshold,
                                   cfg.acr_eta,
                                   vehicle_length=pipeline.sim.physics.vehicle_length)
        wall += time.perf_counter() - started

        signatures = {c.sim_index: classify(c) for c in result.collisions}
        for record in result.history:
            records.append(CritRecord(
                sim_index=offset + record.sim_index,
                critical=record.critical,
                signature=signatures.get(record.sim_index),
            ))
        offset += result.simulations
    return RepetitionHistory(tuple(records), wall)


def cmd_campaign(args) -> int:
    pipeline = PipelineConfig.load(args.config)
    if not pipeline.scenarios:
        raise ConfigError("campaign config lists no scenarios")
    out = Path(args.out) if args.out else Path(pipeline.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    # scenario paths are taken relative to the config file, not the cwd
    base = Path(args.config).resolve().parent
    scenarios = []
    for path in pipeline.scenarios:
        p = Path(path)
        if not p.is_absolute():
            p = base / p
        scenarios.append((p.stem, parse_logical(_read_text(str(p)))))

    per_method = {}
    curves = {}
    counts = {}
    for method in pipeline.methods:
        reps = [
            _campaign_repetition(scenarios, method, rep, pipeline)
            for rep in range(pipeline.repetitions)
        ]
        per_method[method] = metrics(reps)
        curves[method] = [rep.records for rep in reps]
        counts[method] = Counter(
            r.signature.label() for rep in reps for r in rep.records
            if r.critical and r.signature is not None
        )

    write_metrics_csv(per_method, out / "metrics.csv")
    write_metrics_json(per_method, out / "metrics.json")
    write_types_over_sims(curves, out / "types_over_sims.csv", out / "types_over_sims.png")
    write_type_counts(counts, out / "type_counts.csv", out / "type_counts.png")
    (out / "config.json").write_text(pipeline.to_json())
    for method, m in per_method.items():
        print(f"{method}: {m.n_types.mean:.1f} types over {m.n_critical.mean:.1f} "
              f"collisions per repetition -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenforge",
        description="Generate critical driving scenarios from accident reports.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="accident report -> interaction script")
    p.add_argument("report", help="path to the report text")
    p.add_argument("--out", help="output .ips path (default: alongside the report)")
    p.add_argument("--max-retries", type=int, default=3)
    _add_client_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("logicalize", help="interaction script -> logical scenario")
    p.add_argument("script", help="path to the .ips file")
    p.add_argument("--out", help="output .lsc path (default: alongside the script)")
    p.add_argument("--defaults", help="JSON default-range table (builtin if omitted)")
    p.add_argument("--vehicle-length", type=float, default=4.5)
    p.add_argument("--max-retries", type=int, default=3)
    _add_client_flags(p)
    p.set_defaults(func=cmd_logicalize)

    p = sub.add_parser("search", help="genetic search for collision cases")
    p.add_argument("scenario", help="path to the .lsc file")
    p.add_argument("--out", default="search_out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--generations", type=int, default=10)
    p.add_argument("--population", type=int, default=None,
                   help="population size (default: one per statement)")
    p.add_argument("--threshold", type=float, default=4.5, help="collision threshold (m)")
    p.add_argument("--horizon", type=float, default=30.0, help="simulated seconds per case")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--jobs", type=int, default=1, help="parallel simulation workers")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("campaign", help="repeated searches with metrics and figures")
    p.add_argument("--config", required=True, help="campaign JSON config")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.set_defaults(func=cmd_campaign)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ParseError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ExtractionFailed, ConversionFailed, TranscriptMissError) as e:
        print(f"pipeline failure: {e}", file=sys.stderr)
        return 3
    except ScenForgeError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
