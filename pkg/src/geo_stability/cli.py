"""Command-line entry point: ``geo-stability <subcommand>``.

Every flag has a config-file key of the same name (dashes become
underscores, date flags map to ``date_window.start``/``date_window.end``).
Flags win over the file. Exit codes: 0 ok, 1 finished with warnings, 2 fatal.
"""
from __future__ import annotations

import functools
import io
import json
import logging
import sys
from datetime import timedelta
from importlib import resources
from pathlib import Path

import click
import yaml

from . import svg
from .brands import DEFAULT_THRESHOLD, LexiconSet, campaign_detection_rates, detect_records, load_lexicons, qualify_campaigns
from .collector import (
    CollectionPlan,
    HttpAdapter,
    SimulatedAdapter,
    SimulatedClock,
    SimulatedEngineConfig,
    load_prompts,
    run_plan,
    simulate_study,
)
from .concentration import gini_matrix
from .convergence import derive_seed, run_convergence_curve, window_convergence_curve
from .ingestion import IngestConfig, apply_filters, coverage_table, load_document, parse_timestamp, read_logs, write_log
from .model import EngineId, Kind, RboParams, format_timestamp
from .pairing import (
    SimultaneousPairingConfig,
    TemporalPairingConfig,
    consecutive_day_pairs,
    score_pairs,
    simultaneous_pairs,
    write_manifest,
)
from .reporting import aggregate, per_prompt_breakdown, render_pairs_csv, render_prompt_rows, render_report

logger = logging.getLogger("geo_stability.cli")

EXIT_OK, EXIT_WARN, EXIT_FATAL = 0, 1, 2

# output names per (population, kind)
TABLES = {
    ("temporal", "source"): ("table2_source_temporal", "fig1_source_temporal"),
    ("temporal", "brand"): ("table3_brand_temporal", "fig2_brand_temporal"),
    ("simultaneous", "source"): ("table4_source_simultaneous", "fig4_source_simultaneous"),
    ("simultaneous", "brand"): ("table5_brand_simultaneous", "fig4_brand_simultaneous"),
}


class _WarningCounter(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.count = 0

    def emit(self, record):
        self.count += 1


class Fatal(click.ClickException):
    exit_code = EXIT_FATAL

    def show(self, file=None):
        click.echo(f"error: {self.format_message()}", err=True)


def _guard(fn):
    """Turn data errors into exit 2 and logged warnings into exit 1."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        counter = _WarningCounter()
        pkg = logging.getLogger("geo_stability")
        pkg.addHandler(counter)
        try:
            fn(*args, **kwargs)
        except (ValueError, OSError, KeyError, yaml.YAMLError) as exc:
            raise Fatal(str(exc)) from exc
        finally:
            pkg.removeHandler(counter)
        if counter.count:
            click.get_current_context().exit(EXIT_WARN)
    return wrapper


def _load_settings(config: "str | None", **flags) -> dict:
    doc = load_document(config) if config else {}
    for key, value in flags.items():
        if value is None or value == ():
            continue
        doc[key] = list(value) if isinstance(value, tuple) else value
    return doc


def _ingest_config(settings: dict) -> IngestConfig:
    return IngestConfig.from_mapping(
        settings,
        start_date=settings.get("date_start"),
        end_date=settings.get("date_end"),
    )


def _load_dataset(paths, settings):
    if not paths:
        raise ValueError("no input files")
    records, errors = read_logs(paths)
    for err in errors:
        logger.warning("line %d: %s", err.line_no, err.message)
    if not records:
        raise ValueError("no valid records in input")
    return apply_filters(records, _ingest_config(settings))


def _lexicons(settings, required=True) -> "LexiconSet | None":
    source = settings.get("lexicon")
    if source is None:
        if required:
            raise ValueError("brand analysis requires --lexicon (a file or 'builtin')")
        return None
    return load_lexicons(source)


def _out_dir(settings) -> Path:
    out = Path(settings.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, data) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.write_bytes(data)
    click.echo(f"wrote {path}")


def _qualified_lexicons(dataset, lexicons: LexiconSet, threshold: float) -> LexiconSet:
    rates = campaign_detection_rates(dataset, lexicons)
    report = qualify_campaigns(rates, threshold)
    keep = LexiconSet()
    for name, ok in report.qualified.items():
        if ok:
            lex = lexicons.for_campaign(name)
            keep[lex.campaign.name] = lex
    return keep


def common_options(fn):
    opts = [
        click.option("--config", type=click.Path(exists=True, dir_okay=False), envvar="GEO_STABILITY_CONFIG",
                     help="YAML/JSON config file (fallback: $GEO_STABILITY_CONFIG)."),
        click.option("--date-start", help="First day kept (YYYY-MM-DD); key date_window.start."),
        click.option("--date-end", help="Last day kept (YYYY-MM-DD); key date_window.end."),
        click.option("--excluded-date", "excluded_dates", multiple=True, help="Drop this UTC day (repeatable)."),
        click.option("--blocked-domain", "blocked_domains", multiple=True,
                     help="Strip citations to this domain (repeatable)."),
        click.option("--excluded-engine", "excluded_engines", multiple=True,
                     help="Drop this engine's records (repeatable)."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--seed", type=int, help="Master seed for all randomness."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


lexicon_option = click.option("--lexicon", help="Brand lexicon file, or 'builtin' for the bundled one.")
threshold_option = click.option("--threshold", type=float, help=f"Brand-detection qualification threshold (default {DEFAULT_THRESHOLD}).")
inputs_argument = click.argument("inputs", nargs=-1, type=click.Path(exists=True, dir_okay=False))


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-v", "--verbose", is_flag=True, help="Log progress messages.")
def main(verbose):
    """Stability analysis of AI-search answers: similarity, concentration, convergence."""
    pkg = logging.getLogger("geo_stability")
    for h in [h for h in pkg.handlers if getattr(h, "_cli", False)]:
        pkg.removeHandler(h)
    # bound to the current stderr, which test runners swap per invocation
    handler = logging.StreamHandler(sys.stderr)
    handler._cli = True
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    pkg.addHandler(handler)
    pkg.setLevel(logging.INFO if verbose else logging.WARNING)


@main.command()
@inputs_argument
@common_options
@_guard
def ingest(inputs, config, **flags):
    """Parse and filter logs; write dataset.jsonl and table1_coverage.csv."""
    settings = _load_settings(config, **flags)
    dataset = _load_dataset(inputs, settings)
    out = _out_dir(settings)
    with open(out / "dataset.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        write_log(dataset.records, fh)
    click.echo(f"wrote {out / 'dataset.jsonl'}")
    _write(out / "table1_coverage.csv", coverage_table(dataset).to_csv())
    click.echo(f"records kept: {len(dataset)}")
    for key in sorted(dataset.drop_counts):
        click.echo(f"dropped {key}: {dataset.drop_counts[key]}")


def _similarity_outputs(dataset, population, kinds, settings, out: Path) -> None:
    params = RboParams(float(settings.get("rbo_p", 0.9)))
    lexicons = None
    if "brand" in kinds:
        lexicons = _qualified_lexicons(dataset, _lexicons(settings),
                                       float(settings.get("threshold", DEFAULT_THRESHOLD)))
    all_scores = []
    for kind in kinds:
        if population == "temporal":
            pairs = consecutive_day_pairs(dataset, TemporalPairingConfig(int(settings.get("max_gap_days", 1))), kind)
        else:
            cfg = SimultaneousPairingConfig(timedelta(hours=float(settings.get("max_delta_hours", 24))))
            pairs = simultaneous_pairs(dataset, cfg, kind)
        scores = score_pairs(pairs, params, lexicons if kind == "brand" else None)
        all_scores.extend(scores)
        table, fig = TABLES[(population, kind)]
        rows = aggregate(scores, "campaign", population)
        _write(out / f"{table}.csv", render_report(rows, "csv"))
        _write(out / f"{table}.md", render_report(rows, "markdown"))
        if any(r.pair_count for r in rows):
            _write(out / f"{fig}.svg", render_report(rows, "svg"))
        _write(out / f"pairs_{kind}_{population}.csv", render_pairs_csv(scores))
        buf = io.StringIO()
        write_manifest(pairs, buf)
        _write(out / f"manifest_{kind}_{population}.jsonl", buf.getvalue())
        click.echo(f"{population} {kind}: {len(pairs)} pairs")
    if population == "simultaneous":
        by_engine = aggregate(all_scores, "engine", population)
        _write(out / "table6_engine_simultaneous.csv", render_report(by_engine, "csv"))
        _write(out / "table6_engine_simultaneous.md", render_report(by_engine, "markdown"))
        prompt_rows = per_prompt_breakdown(all_scores)
        _write(out / "per_prompt_simultaneous.csv", render_prompt_rows(prompt_rows, "csv"))
        if prompt_rows:
            _write(out / "fig5_per_prompt.svg", render_prompt_rows(prompt_rows, "svg"))


def _kinds(kind: str) -> list[str]:
    return ["source", "brand"] if kind == "both" else [Kind.parse(kind).value]


@main.command()
@inputs_argument
@click.option("--mode", type=click.Choice(["temporal", "simul"]), default="simul", show_default=True,
              help="Consecutive-day pairs or all runs within max-delta-hours.")
@click.option("--kind", type=click.Choice(["source", "brand", "both"]), default="source", show_default=True)
@click.option("--rbo-p", type=float, help="RBO persistence (default 0.9).")
@click.option("--max-gap-days", type=int, help="Temporal mode: largest day gap that still pairs (default 1).")
@click.option("--max-delta-hours", type=float, help="Simul mode: pairing window in hours (default 24).")
@lexicon_option
@threshold_option
@common_options
@_guard
def similarity(inputs, mode, kind, config, **flags):
    """Pairwise Jaccard/RBO tables, figures and pair manifests."""
    settings = _load_settings(config, **flags)
    dataset = _load_dataset(inputs, settings)
    population = "temporal" if mode == "temporal" else "simultaneous"
    _similarity_outputs(dataset, population, _kinds(kind), settings, _out_dir(settings))


def _gini_outputs(dataset, out: Path) -> None:
    matrix = gini_matrix(dataset)
    if not matrix.cells:
        raise ValueError("no citations in dataset; Gini undefined everywhere")
    _write(out / "gini_matrix.csv", matrix.to_csv())
    lines = ["# schema_version: 1", "campaign,mean_gini"]
    lines += [f"{c.display_name},{v:.6f}" for c, v in matrix.by_campaign().items()]
    _write(out / "table8_gini_campaign.csv", "\n".join(lines) + "\n")
    lines = ["# schema_version: 1", "engine,mean_gini"]
    lines += [f"{e.display_name},{v:.6f}" for e, v in matrix.by_engine().items()]
    _write(out / "table9_gini_engine.csv", "\n".join(lines) + "\n")
    values = {(c.display_name, e.display_name): v for (c, e), v in matrix.cells.items()}
    _write(out / "fig3_gini_heatmap.svg", svg.heatmap(
        [c.display_name for c in matrix.campaigns], [e.display_name for e in matrix.engines], values,
        "Source citation Gini by campaign and engine"))
    click.echo(f"global mean Gini: {matrix.global_mean:.3f}")


@main.command()
@inputs_argument
@common_options
@_guard
def gini(inputs, config, **flags):
    """Citation Gini per campaign x engine, marginal means and heatmap."""
    settings = _load_settings(config, **flags)
    _gini_outputs(_load_dataset(inputs, settings), _out_dir(settings))


def _converge_outputs(dataset, mode, kind, settings, out: Path) -> None:
    seed = int(settings.get("seed", 0))
    if mode == "runs":
        lex = _lexicons(settings) if kind == "brand" else None
        curve = run_convergence_curve(
            dataset, kind, lex, n_runs=int(settings.get("n_runs", 10)),
            resamples=int(settings.get("resamples", 2000)), seed=seed,
        )
        name, fig, xlabel = f"table10_runs_{kind}", f"fig6_runs_{kind}", "runs per prompt (n)"
        refs = [0.10, 0.08]
    else:
        curve = window_convergence_curve(
            dataset, None, _lexicons(settings), bool(settings.get("strict_calendar", False)),
        )
        name, fig, xlabel = "table11_window", "fig7_window", "window length (days)"
        refs = [0.10, 0.05, 0.02]
    _write(out / f"{name}.csv", curve.to_csv())
    _write(out / f"{name}_thresholds.txt", curve.threshold_report())
    _write(out / f"{fig}.svg", svg.line_chart(
        [p.size for p in curve.points], [p.se for p in curve.points], refs,
        f"Mean SE ({curve.mode})", xlabel, "mean SE"))
    click.echo(curve.threshold_report(), nl=False)


@main.command()
@inputs_argument
@click.option("--mode", type=click.Choice(["runs", "window"]), default="runs", show_default=True)
@click.option("--kind", type=click.Choice(["brand", "source"]), default="brand", show_default=True,
              help="Runs mode: brand detection rate or source-coverage Jaccard.")
@click.option("--n-runs", type=int, help="Runs per group used in runs mode (default 10).")
@click.option("--resamples", type=int, help="Subsamples per run count (default 2000).")
@click.option("--strict-calendar", is_flag=True, default=None, help="Window mode: windows must cover consecutive days.")
@lexicon_option
@common_options
@_guard
def converge(inputs, mode, kind, config, **flags):
    """Convergence curves (SE vs runs or window length) with threshold report."""
    settings = _load_settings(config, **flags)
    _converge_outputs(_load_dataset(inputs, settings), mode, kind, settings, _out_dir(settings))


@main.command()
@inputs_argument
@lexicon_option
@common_options
@_guard
def detect(inputs, config, **flags):
    """Per-record brand detections (detections.csv)."""
    settings = _load_settings(config, **flags)
    dataset = _load_dataset(inputs, settings)
    lexicons = _lexicons(settings)
    lines = ["# schema_version: 1", "campaign,engine,prompt_index,timestamp,run_index,brands"]
    for rec, res in detect_records(dataset, lexicons):
        brands = "|".join(res.brands_ordered)
        if any(ch in brands for ch in ',"'):
            brands = '"' + brands.replace('"', '""') + '"'
        lines.append(f"{rec.campaign.name},{rec.engine.name},{rec.prompt.index},"
                     f"{format_timestamp(rec.timestamp)},{rec.run_index},{brands}")
    _write(_out_dir(settings) / "detections.csv", "\n".join(lines) + "\n")


@main.command()
@inputs_argument
@lexicon_option
@threshold_option
@common_options
@_guard
def qualify(inputs, config, **flags):
    """Campaign detection rates against the qualification threshold."""
    settings = _load_settings(config, **flags)
    dataset = _load_dataset(inputs, settings)
    rates = campaign_detection_rates(dataset, _lexicons(settings))
    report = qualify_campaigns(rates, float(settings.get("threshold", DEFAULT_THRESHOLD)))
    _write(_out_dir(settings) / "qualification.csv", report.to_csv())


def _adapter(spec: dict, seed: int, name: str):
    kind = spec.get("adapter", "simulated")
    if kind == "http":
        return HttpAdapter(spec["url"], float(spec.get("timeout", 10.0)))
    if kind == "simulated":
        pool = spec.get("domain_pool", {"example.com": 1})
        brands = spec.get("brand_pool", {})
        return SimulatedAdapter(SimulatedEngineConfig(
            seed=derive_seed(seed, name),
            domain_pool=tuple((str(k), float(v)) for k, v in pool.items()),
            brand_pool=tuple((str(k), float(v)) for k, v in brands.items()),
            citations_per_answer=tuple(spec.get("citations_per_answer", (3, 8))),
        ))
    raise ValueError(f"unknown adapter type {kind!r} for engine {name}")


@main.command()
@click.argument("plan_file", type=click.Path(exists=True, dir_okay=False))
@common_options
@_guard
def collect(plan_file, config, **flags):
    """Execute a collection plan; append records to <out>/collected.jsonl.

    The plan file lists ``engines`` (name, adapter: simulated|http, url, ...),
    optional ``prompts`` ({campaign: [text, ...]}, default bundled),
    ``campaigns``, ``reps_per_prompt``, ``inter_call_delay``, ``max_retries``
    and ``start``/``step_seconds`` for a simulated clock.
    """
    settings = _load_settings(config, **flags)
    plan_doc = load_document(plan_file)
    seed = int(settings.get("seed", 0))
    specs = plan_doc.get("engines") or []
    if not specs:
        raise ValueError(f"{plan_file}: plan lists no engines")
    engines, adapters = [], {}
    for spec in specs:
        spec = {"name": spec} if isinstance(spec, str) else dict(spec)
        eid = EngineId.parse(spec["name"])
        engines.append(eid)
        adapters[eid] = _adapter(spec, seed, eid.name)
    plan = CollectionPlan(
        load_prompts(plan_doc.get("prompts"), plan_doc.get("campaigns")), engines,
        int(plan_doc.get("reps_per_prompt", 10)), float(plan_doc.get("inter_call_delay", 0.0)),
        int(plan_doc.get("max_retries", 2)),
    )
    kwargs = {}
    if "start" in plan_doc:
        kwargs["clock"] = SimulatedClock(parse_timestamp(plan_doc["start"]),
                                         timedelta(seconds=float(plan_doc.get("step_seconds", 60))))
    path = _out_dir(settings) / "collected.jsonl"
    with open(path, "a", encoding="utf-8", newline="\n") as sink:
        summary = run_plan(plan, adapters, sink, **kwargs)
    click.echo(f"wrote {path}")
    for e in engines:
        click.echo(f"{e.name}: {summary.successes[e.name]} ok, {summary.failures[e.name]} failed")


@main.command()
@click.option("--sim-config", type=click.Path(exists=True, dir_okay=False),
              help="Simulation settings (default: the bundled synthetic study).")
@common_options
@_guard
def simulate(sim_config, config, **flags):
    """Write a seeded synthetic dataset to <out>/simulated.jsonl."""
    settings = _load_settings(config, **flags)
    if sim_config:
        sim = load_document(sim_config)
    else:
        sim = yaml.safe_load(resources.files("geo_stability.data").joinpath("simulation.yaml").read_text("utf-8"))
    path = _out_dir(settings) / "simulated.jsonl"
    with open(path, "w", encoding="utf-8", newline="\n") as sink:
        summary = simulate_study(sim, int(settings.get("seed", 0)), sink)
    click.echo(f"wrote {path} ({summary.total_successes} records)")


@main.command()
@click.option("--temporal", "temporal_inputs", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Daily-collection log (repeatable).")
@click.option("--simultaneous", "simul_inputs", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Repeated-run log (repeatable).")
@click.option("--n-runs", type=int, help="Runs per group for run convergence (default 10).")
@click.option("--resamples", type=int, help="Subsamples per run count (default 2000).")
@lexicon_option
@threshold_option
@common_options
@_guard
def report(temporal_inputs, simul_inputs, config, **flags):
    """Every table and figure the inputs support, under stable file names."""
    settings = _load_settings(config, **flags)
    if not temporal_inputs and not simul_inputs:
        raise ValueError("give --temporal and/or --simultaneous inputs")
    out = _out_dir(settings)
    has_lexicon = settings.get("lexicon") is not None
    kinds = ["source", "brand"] if has_lexicon else ["source"]
    if not has_lexicon:
        logger.warning("no lexicon given; brand tables skipped")
    if temporal_inputs:
        dataset = _load_dataset(temporal_inputs, settings)
        _write(out / "table1_coverage.csv", coverage_table(dataset).to_csv())
        _similarity_outputs(dataset, "temporal", kinds, settings, out)
        _gini_outputs(dataset, out)
        if has_lexicon:
            _converge_outputs(dataset, "window", "brand", settings, out)
    if simul_inputs:
        dataset = _load_dataset(simul_inputs, settings)
        _similarity_outputs(dataset, "simultaneous", kinds, settings, out)
        for kind in kinds:
            _converge_outputs(dataset, "runs", kind, settings, out)
    summary = {"temporal_inputs": [Path(p).name for p in temporal_inputs],
               "simultaneous_inputs": [Path(p).name for p in simul_inputs],
               "seed": int(settings.get("seed", 0))}
    _write(out / "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":  # pragma: no cover
    main()
