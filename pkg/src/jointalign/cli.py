"""Command-line interface: pair alignment, joint multi-version alignment,
evaluation runs, and synthetic corpus generation."""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import click

from ._parallel import default_jobs
from .evaluation import (
    VARIANT_CODES,
    load_corpus,
    run_experiment_matrix,
    save_beat_annotation,
    BeatAnnotation,
)
from .features import (
    CHROMA_SUFFIX,
    DEFAULT_HOP,
    DEFAULT_ONSET_COST_CAP,
    DEFAULT_SILENCE_THRESHOLD,
    GAP_MODES,
    MEASURE_CHROMA,
    MEASURE_COMBINED,
    MEASURES,
    CostConfig,
    SyntheticCorpusSpec,
    generate_synthetic_corpus,
    load_feature_sequence,
    normalize_chroma,
    save_feature_sequence,
)
from .multiscale import MultiscaleConfig, align_sequences
from .ordering import (
    STRATEGIES,
    STRATEGY_AS_GIVEN,
    STRATEGY_DTW_COST,
    STRATEGY_LENGTH_ASC,
    STRATEGY_LENGTH_DESC,
    as_given_order,
    dtw_cost_order,
    length_order,
)
from .pairwise import average_cost, save_alignment
from .progressive import iterative_align, progressive_align, save_template

REPORT_SCHEMA_VERSION = 1


def _parse_floats(value: str, count: int, name: str) -> tuple[float, ...]:
    try:
        parts = tuple(float(p) for p in value.split(","))
    except ValueError:
        raise click.BadParameter(f"{name} must be comma-separated numbers, got {value!r}")
    if len(parts) != count:
        raise click.BadParameter(f"{name} needs exactly {count} values, got {len(parts)}")
    return parts


def _weights_callback(ctx, param, value):
    return _parse_floats(value, 3, "--weights")


def _factors_callback(ctx, param, value):
    try:
        return tuple(int(p) for p in value.split(","))
    except ValueError:
        raise click.BadParameter(f"--factors must be comma-separated integers, got {value!r}")


def base_cost_options(f):
    options = [
        click.option(
            "--hop",
            type=float,
            default=DEFAULT_HOP,
            show_default=True,
            help="Seconds per feature frame.",
        ),
        click.option(
            "--weights",
            default="2,1.5,1.5",
            show_default=True,
            callback=_weights_callback,
            help="DTW step weights w1,w2,w3 (diagonal, row advance, column advance).",
        ),
        click.option(
            "--gap-penalty",
            type=float,
            default=None,
            help="Gap penalty; defaults to the highest value the measure can assume.",
        ),
        click.option(
            "--onset-cost-cap",
            type=float,
            default=DEFAULT_ONSET_COST_CAP,
            show_default=True,
            help="Assumed cap of the onset distance when deriving the default gap penalty.",
        ),
        click.option(
            "--silence-threshold",
            type=float,
            default=DEFAULT_SILENCE_THRESHOLD,
            show_default=True,
            help="Chroma norm below which a frame counts as silence.",
        ),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def cost_options(f):
    f = click.option(
        "--measure",
        type=click.Choice(("auto",) + MEASURES),
        default="auto",
        show_default=True,
        help="Local cost measure; auto picks the combined measure when onset files exist.",
    )(f)
    return base_cost_options(f)


def multiscale_options(f):
    options = [
        click.option(
            "--multiscale/--no-multiscale",
            "multiscale",
            default=False,
            show_default=True,
            help="Use multiscale (banded) DTW instead of the full recursion.",
        ),
        click.option(
            "--factors",
            default="8,4,2,1",
            show_default=True,
            callback=_factors_callback,
            help="Multiscale downsampling factors, coarse to fine, ending at 1.",
        ),
        click.option(
            "--radius",
            type=int,
            default=25,
            show_default=True,
            help="Band radius (frames) around the projected path.",
        ),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _ms_config(multiscale: bool, factors, radius) -> MultiscaleConfig | None:
    if not multiscale:
        return None
    return MultiscaleConfig(factors=factors, band_radius=radius, enabled=True)


def _resolve_measure(measure: str, sequences) -> str:
    if measure != "auto":
        return measure
    return MEASURE_COMBINED if all(s.has_onsets for s in sequences) else MEASURE_CHROMA


def _load_versions(paths, hop, silence_threshold):
    seqs = []
    for p in paths:
        seq = load_feature_sequence(p, hop_duration=hop)
        seqs.append(normalize_chroma(seq, silence_threshold))
    return seqs


def _write_json(data: dict, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _report_envelope(command: str, config: dict) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": command,
        "config": config,
        # The one volatile block; everything else is reproducible.
        "run_info": {"created_at": time.strftime("%Y-%m-%dT%H:%M:%S%z")},
    }


@click.group()
def main():
    """Joint alignment of multiple versions of a piece of music.

    Feature files are headerless CSVs with one frame per line
    (<label>.chroma.csv, optional <label>.onset.csv of equal length);
    beat annotations hold one time in seconds per line
    (<label>.beats.csv).
    """


@main.command("align-pair")
@click.argument("chroma_a", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("chroma_b", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "-o",
    "--output",
    type=click.Path(dir_okay=False, path_type=Path),
    default=Path("alignment.csv"),
    show_default=True,
    help="Alignment CSV output path.",
)
@cost_options
@multiscale_options
def align_pair_cmd(
    chroma_a,
    chroma_b,
    output,
    hop,
    weights,
    measure,
    gap_penalty,
    onset_cost_cap,
    silence_threshold,
    multiscale,
    factors,
    radius,
):
    """Align exactly two versions and write the warping path."""
    try:
        x, y = _load_versions([chroma_a, chroma_b], hop, silence_threshold)
        measure = _resolve_measure(measure, (x, y))
        cfg = CostConfig(
            measure=measure,
            weights=weights,
            gap_penalty=gap_penalty,
            onset_cost_cap=onset_cost_cap,
        )
        ms = _ms_config(multiscale, factors, radius)
        path = align_sequences(x, y, cfg, ms)
        save_alignment(path, output)
        report = _report_envelope(
            "align-pair",
            {
                "inputs": [str(chroma_a), str(chroma_b)],
                "hop_duration": hop,
                "weights": list(weights),
                "measure": measure,
                "gap_penalty": cfg.effective_gap_penalty,
                "silence_threshold": silence_threshold,
                "multiscale": None if ms is None else {"factors": list(factors), "band_radius": radius},
                "output": str(output),
            },
        )
        report["result"] = {
            "total_cost": path.total_cost,
            "average_cost": average_cost(path),
            "path_length": len(path),
        }
        _write_json(report, output.with_name(output.name + ".report.json"))
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"total_cost={path.total_cost!r}")
    click.echo(f"average_cost={average_cost(path)!r}")
    click.echo(f"path_length={len(path)}")
    click.echo(f"wrote {output}", err=True)


@main.command("align-multi")
@click.argument(
    "inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
@click.option(
    "-o",
    "--outdir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for the template files and the run report.",
)
@click.option(
    "--order",
    type=click.Choice(STRATEGIES),
    default=STRATEGY_LENGTH_ASC,
    show_default=True,
    help="Order in which versions enter the progressive alignment.",
)
@click.option(
    "--iterations",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="1 = plain progressive alignment; more adds remove-and-realign passes.",
)
@click.option(
    "--gap-mode",
    type=click.Choice(GAP_MODES),
    default="insert-gaps",
    show_default=True,
    help="Insert gap symbols or copy features when stretching the template.",
)
@click.option(
    "--order-full-dtw",
    is_flag=True,
    default=False,
    help="Use full instead of multiscale DTW for the DTW-cost ordering phase.",
)
@click.option("--jobs", type=click.IntRange(min=1), default=default_jobs, help="Worker threads.")
@cost_options
@multiscale_options
def align_multi_cmd(
    inputs,
    outdir,
    order,
    iterations,
    gap_mode,
    order_full_dtw,
    jobs,
    hop,
    weights,
    measure,
    gap_penalty,
    onset_cost_cap,
    silence_threshold,
    multiscale,
    factors,
    radius,
):
    """Jointly align two or more versions into a template."""
    if len(inputs) < 2:
        raise click.UsageError("align-multi needs at least two input files")
    try:
        versions = _load_versions(inputs, hop, silence_threshold)
        measure = _resolve_measure(measure, versions)
        cfg = CostConfig(
            measure=measure,
            weights=weights,
            gap_penalty=gap_penalty,
            gap_mode=gap_mode,
            onset_cost_cap=onset_cost_cap,
        )
        ms = _ms_config(multiscale, factors, radius)

        if order == STRATEGY_DTW_COST:
            order_ms = None if order_full_dtw else MultiscaleConfig(
                factors=factors, band_radius=radius, enabled=True
            )
            plan = dtw_cost_order(versions, cfg, order_ms, jobs=jobs)
        elif order == STRATEGY_LENGTH_DESC:
            plan = length_order(versions, descending=True)
        elif order == STRATEGY_AS_GIVEN:
            plan = as_given_order(versions)
        else:
            plan = length_order(versions)

        steps = []
        if iterations > 1:
            template = iterative_align(versions, plan.permutation, iterations, cfg, ms, steps)
        else:
            template = progressive_align(versions, plan.permutation, cfg, ms, steps)

        outdir.mkdir(parents=True, exist_ok=True)
        save_template(template, outdir / "template.csv")
        report = _report_envelope(
            "align-multi",
            {
                "inputs": [str(p) for p in inputs],
                "hop_duration": hop,
                "weights": list(weights),
                "measure": measure,
                "gap_penalty": cfg.effective_gap_penalty,
                "gap_mode": gap_mode,
                "silence_threshold": silence_threshold,
                "order": order,
                "iterations": iterations,
                "multiscale": None if ms is None else {"factors": list(factors), "band_radius": radius},
            },
        )
        report["run_info"]["jobs"] = jobs
        report["order_plan"] = {
            "strategy": plan.strategy,
            "permutation": list(plan.permutation),
            "labels": [versions[i].label for i in plan.permutation],
        }
        if plan.pairwise_avg_costs is not None:
            report["order_plan"]["pairwise_avg_costs"] = [
                [float(v) for v in row] for row in plan.pairwise_avg_costs
            ]
        report["steps"] = [
            {
                "iteration": s.iteration,
                "label": s.label,
                "path_length": s.path_length,
                "total_cost": s.total_cost,
                "average_cost": s.average_cost,
            }
            for s in steps
        ]
        report["template"] = {
            "rows": template.k,
            "columns": template.length,
            "gap_count": template.gap_count,
            "row_labels": list(template.row_labels),
        }
        _write_json(report, outdir / "report.json")
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"template_rows={template.k}")
    click.echo(f"template_columns={template.length}")
    click.echo(f"gap_count={template.gap_count}")
    click.echo(f"wrote {outdir / 'template.csv'} and {outdir / 'report.json'}", err=True)


@main.command("evaluate")
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option(
    "-o",
    "--outdir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for the evaluation report and per-pair CSVs.",
)
@click.option(
    "--variants",
    default="A,B",
    show_default=True,
    help=f"Comma-separated subset of {','.join(VARIANT_CODES)}.",
)
@click.option("--jobs", type=click.IntRange(min=1), default=default_jobs, help="Worker threads.")
@base_cost_options
@multiscale_options
def evaluate_cmd(
    corpus_dir,
    outdir,
    variants,
    jobs,
    hop,
    weights,
    gap_penalty,
    onset_cost_cap,
    silence_threshold,
    multiscale,
    factors,
    radius,
):
    """Run alignment variants over an annotated corpus and report beat deviations.

    Each variant pins its own cost measure, so there is no --measure flag
    here; combined-measure variants need onset files in the corpus.
    """
    codes = [c.strip().upper() for c in variants.split(",") if c.strip()]
    if not codes:
        raise click.UsageError("--variants must name at least one variant")
    try:
        corpus = load_corpus(
            corpus_dir,
            hop_duration=hop,
            require_beats=True,
            normalize=True,
            silence_threshold=silence_threshold,
        )
        cfg = CostConfig(
            weights=weights, gap_penalty=gap_penalty, onset_cost_cap=onset_cost_cap
        )
        ms = _ms_config(multiscale, factors, radius)
        result = run_experiment_matrix(corpus, codes, cfg, ms, jobs=jobs)

        outdir.mkdir(parents=True, exist_ok=True)
        body = result.to_json_dict()
        report = _report_envelope("evaluate", dict(body["config"], corpus=str(corpus_dir)))
        report["run_info"]["jobs"] = jobs
        report["run_info"]["elapsed_seconds"] = body.pop("elapsed_seconds")
        report["variants"] = body["variants"]
        _write_json(report, outdir / "report.json")
        for code in codes:
            rows = ["label_a,label_b,mean_ms,forward_ms,backward_ms"]
            for key, dev in sorted(result.variants[code].report.per_pair.items()):
                a, b = key.split("|")
                rows.append(f"{a},{b},{dev.mean_ms!r},{dev.forward_ms!r},{dev.backward_ms!r}")
            (outdir / f"pairs_{code}.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    for code in codes:
        summary = result.variants[code].report.summary
        click.echo(
            f"variant {code}: pairs={len(result.variants[code].report.per_pair)} "
            f"min={summary.minimum:.1f} mean={summary.mean:.1f} "
            f"max={summary.maximum:.1f} std={summary.std:.1f} (ms)"
        )
    click.echo(f"wrote {outdir / 'report.json'}", err=True)


@main.command("synth")
@click.option(
    "-o",
    "--outdir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for the generated corpus.",
)
@click.option("--length", type=click.IntRange(min=2), default=400, show_default=True, help="Base timeline length in frames.")
@click.option("--versions", type=click.IntRange(min=2), default=5, show_default=True, help="Number of versions.")
@click.option("--warp", type=click.FloatRange(0.0, 1.0), default=0.3, show_default=True, help="Warp strength.")
@click.option("--noise", type=click.FloatRange(min=0.0), default=0.02, show_default=True, help="Additive noise level.")
@click.option("--articulation", type=click.FloatRange(min=0.0), default=0.0, show_default=True, help="Articulation / balance perturbation strength.")
@click.option("--beat-every", type=click.IntRange(min=1), default=10, show_default=True, help="Frames between ground-truth beats on the base timeline.")
@click.option("--seed", type=int, default=0, show_default=True, help="Generator seed.")
@click.option("--hop", type=float, default=DEFAULT_HOP, show_default=True, help="Seconds per frame.")
@click.option("--onsets/--no-onsets", "with_onsets", default=True, show_default=True, help="Also write onset-indicator streams.")
def synth_cmd(outdir, length, versions, warp, noise, articulation, beat_every, seed, hop, with_onsets):
    """Generate a synthetic corpus with known ground-truth beats."""
    try:
        spec = SyntheticCorpusSpec(
            base_length=length,
            num_versions=versions,
            warp_strength=warp,
            noise_level=noise,
            articulation_perturbation=articulation,
            beat_every=beat_every,
            seed=seed,
            hop_duration=hop,
            with_onsets=with_onsets,
        )
        corpus = generate_synthetic_corpus(spec)
        outdir.mkdir(parents=True, exist_ok=True)
        for seq, times in zip(corpus.versions, corpus.beat_times):
            save_feature_sequence(seq, outdir / (seq.label + CHROMA_SUFFIX))
            save_beat_annotation(
                BeatAnnotation(times=times, label=seq.label),
                outdir / (seq.label + ".beats.csv"),
            )
        manifest = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": "synth",
            "spec": dataclasses.asdict(spec),
            "labels": corpus.labels,
        }
        _write_json(manifest, outdir / "manifest.json")
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"versions={len(corpus.versions)}")
    click.echo(f"frames={[len(v) for v in corpus.versions]}")
    click.echo(f"wrote corpus to {outdir}", err=True)


if __name__ == "__main__":
    main()
