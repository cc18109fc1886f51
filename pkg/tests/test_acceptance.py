"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as the
criteria complete.
"""

import json
import time

import numpy as np
from click.testing import CliRunner

from jointalign import (
    CostConfig,
    GAP_MODE_INSERT,
    MEASURE_COMBINED,
    MultiscaleConfig,
    SyntheticCorpusSpec,
    align_pair,
    align_to_template,
    average_beat_deviation,
    average_cost,
    dtw,
    dtw_cost_order,
    generate_synthetic_corpus,
    ground_truth_correspondence,
    length_order,
    msdtw,
    pairwise_from_template,
    progressive_align,
    remove_from_template,
    template_extend,
    template_init,
)
from jointalign.cli import main as cli_main
from jointalign.evaluation import BeatAnnotation, corpus_from_synthetic, run_variant
from oracles import brute_force_dtw_cost, scalar_template_cost_matrix

COMBINED = CostConfig(measure=MEASURE_COMBINED)


def _report(n: int, message: str) -> None:
    print(f"\nACCEPTANCE {n} PASS: {message}")


def _pair_corpus(seed: int, base_length=90, warp=0.35, articulation=0.8):
    return generate_synthetic_corpus(
        SyntheticCorpusSpec(
            base_length=base_length,
            num_versions=2,
            warp_strength=warp,
            noise_level=0.05,
            articulation_perturbation=articulation,
            beat_every=8,
            seed=seed,
        )
    )


def diagonal_matches(path):
    deltas = np.diff(path.pairs, axis=0)
    keep = np.concatenate(([True], (deltas == 1).all(axis=1)))
    return path.pairs[keep]


def test_criterion_1_dtw_oracle_equivalence():
    """500 random small instances match brute-force enumeration exactly."""
    rng = np.random.default_rng(101)
    dtw(np.zeros((2, 2)), (2.0, 1.5, 1.5))  # warm the jit kernel before timing
    started = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        n, m = rng.integers(1, 9, 2)
        cost = rng.uniform(0.0, 1.0, (n, m))
        weights = tuple(rng.uniform(0.3, 3.0, 3))
        got = dtw(cost, weights).total_cost
        want = brute_force_dtw_cost(cost, weights)
        worst = max(worst, abs(got - want))
        assert abs(got - want) <= 1e-9
    elapsed = time.perf_counter() - started
    assert elapsed <= 10.0
    _report(1, f"500 instances, max |dtw - brute force| = {worst:.2e}, {elapsed:.2f}s")


def test_criterion_2_two_version_reduction():
    """Progressive K=2 reproduces the pairwise path's (1,1) matches exactly."""
    for seed in range(100):
        corpus = _pair_corpus(seed)
        x, y = corpus.versions
        pairwise = align_pair(x, y, COMBINED)
        template = progressive_align([x, y], [0, 1], COMBINED)
        corr = pairwise_from_template(template, 0, 1)
        np.testing.assert_array_equal(corr.pairs, diagonal_matches(pairwise))
    _report(2, "100 synthetic pairs, correspondences identical to pairwise (1,1) matches")


def test_criterion_3_template_structural_suite():
    """Row reconstruction, no all-gap columns, and gap accounting hold
    after every extension, removal, and iteration."""
    checked = 0

    def check_invariants(template, originals_by_row):
        assert not template.gap_mask.all(axis=0).any()
        for row, original in originals_by_row.items():
            rebuilt = template.row_sequence(row)
            np.testing.assert_array_equal(rebuilt.chroma, original.chroma)

    for case in range(50):
        k = 3 + case % 6
        corpus = generate_synthetic_corpus(
            SyntheticCorpusSpec(
                base_length=60 + (case % 4) * 10,
                num_versions=k,
                warp_strength=0.35,
                noise_level=0.05,
                articulation_perturbation=1.0,
                beat_every=8,
                seed=1000 + case,
            )
        )
        order = list(length_order(corpus.versions).permutation)
        template = template_init(corpus.versions[order[0]])
        by_row = {0: corpus.versions[order[0]]}
        for idx in order[1:]:
            x = corpus.versions[idx]
            path = align_to_template(template, x, COMBINED)
            deltas = np.diff(path.pairs, axis=0)
            row_steps = int(((deltas[:, 0] == 1) & (deltas[:, 1] == 0)).sum())
            col_steps = int(((deltas[:, 0] == 0) & (deltas[:, 1] == 1)).sum())
            before_k, before_gaps = template.k, template.gap_count
            template = template_extend(template, x, path, GAP_MODE_INSERT)
            by_row[template.k - 1] = x
            assert template.row_gap_count(template.k - 1) == row_steps
            assert template.gap_count == before_gaps + row_steps + before_k * col_steps
            check_invariants(template, by_row)
            checked += 1
        # One iterative pass: removing row 0 each time visits the versions
        # in their original alignment order.
        for _ in range(k):
            template, extracted = remove_from_template(template, 0)
            reduced_rows = {r: by_row[r + 1] for r in range(template.k)}
            check_invariants(template, reduced_rows)
            path = align_to_template(template, extracted, COMBINED)
            template = template_extend(template, extracted, path, GAP_MODE_INSERT)
            by_row = dict(reduced_rows)
            by_row[template.k - 1] = extracted
            check_invariants(template, by_row)
            checked += 1
    _report(3, f"50 corpora, invariants checked after {checked} template mutations")


def test_criterion_4_template_cost_oracle():
    """2-row template alignment matches brute force on the merged grid."""
    rng = np.random.default_rng(404)
    worst = 0.0
    for trial in range(30):
        lengths = rng.integers(3, 9, 3)
        corpus = generate_synthetic_corpus(
            SyntheticCorpusSpec(
                base_length=int(lengths[0]) + 4,
                num_versions=3,
                warp_strength=0.4,
                noise_level=0.08,
                articulation_perturbation=1.0,
                beat_every=4,
                seed=4000 + trial,
            )
        )
        a, b, x = (
            _truncate(corpus.versions[0], int(lengths[0])),
            _truncate(corpus.versions[1], int(lengths[1])),
            _truncate(corpus.versions[2], int(lengths[2])),
        )
        template = template_extend(
            template_init(a), b, align_to_template(template_init(a), b, COMBINED)
        )
        assert template.k == 2
        merged = scalar_template_cost_matrix(template, x, COMBINED)
        want = brute_force_dtw_cost(merged, COMBINED.weights)
        got = align_to_template(template, x, COMBINED).total_cost
        worst = max(worst, abs(got - want))
        assert abs(got - want) <= 1e-9
    _report(4, f"30 two-row templates, max |aligned - brute force| = {worst:.2e}")


def _truncate(seq, length):
    from jointalign import FeatureSequence

    length = max(2, min(length, len(seq)))
    return FeatureSequence(
        chroma=seq.chroma[:length],
        hop_duration=seq.hop_duration,
        onsets=None if seq.onsets is None else seq.onsets[:length],
        label=seq.label,
    )


def test_criterion_5_multiscale_saturation_and_accuracy():
    """Saturated bands reproduce full DTW; tight bands stay within 2%."""
    for seed in range(100):
        corpus = _pair_corpus(seed, base_length=40 + seed % 60, warp=0.4)
        x, y = corpus.versions
        dense = align_pair(x, y, COMBINED)
        saturated = MultiscaleConfig(
            factors=(4, 2, 1), band_radius=max(len(x), len(y)), enabled=True
        )
        fast = msdtw(x, y, COMBINED, saturated)
        np.testing.assert_array_equal(fast.pairs, dense.pairs)
        assert abs(fast.total_cost - dense.total_cost) <= 1e-9

    ms = MultiscaleConfig(factors=(4, 2, 1), band_radius=25, enabled=True)
    ratios = []
    for seed in range(8):
        corpus = _pair_corpus(seed, base_length=400, warp=0.3, articulation=0.6)
        x, y = corpus.versions
        assert max(len(x), len(y)) <= 500
        dense = align_pair(x, y, COMBINED)
        fast = msdtw(x, y, COMBINED, ms)
        assert fast.total_cost >= dense.total_cost - 1e-9
        ratio = fast.total_cost / dense.total_cost
        ratios.append(ratio)
        assert ratio <= 1.02
    _report(
        5,
        "100 saturated pairs exact; banded (4,2,1) radius 25 within "
        f"{(max(ratios) - 1) * 100:.3f}% of full DTW",
    )


def test_criterion_6_beat_deviation_quantization_bound():
    """Ground-truth correspondences keep the deviation within one hop."""
    worst = 0.0
    for seed in range(10):
        corpus = _pair_corpus(seed, base_length=200, warp=0.3)
        hop = corpus.spec.hop_duration
        beats = [BeatAnnotation(times=t) for t in corpus.beat_times]
        for i, j in ((0, 1), (1, 0)):
            corr = ground_truth_correspondence(corpus, i, j)
            dev = average_beat_deviation(corr, beats[i], beats[j], hop)
            worst = max(worst, dev)
            assert dev <= hop * 1000.0
    _report(6, f"20 directions, worst deviation {worst:.1f} ms <= 20 ms")


def test_criterion_7_qualitative_claims_at_desk_scale():
    """On the fixed hard benchmark, the progressive method beats pairwise
    on mean and spread, and disabling onset features hurts it."""
    started = time.perf_counter()
    cfg = CostConfig()
    values = {"A": [], "B": [], "F": []}
    for seed in range(10):
        spec = SyntheticCorpusSpec(
            base_length=300,
            num_versions=10,
            warp_strength=0.35,
            noise_level=0.05,
            articulation_perturbation=3.0,
            beat_every=10,
            seed=seed,
        )
        corpus = corpus_from_synthetic(generate_synthetic_corpus(spec))
        for code in values:
            outcome = run_variant(corpus, code, cfg)
            values[code].extend(d.mean_ms for d in outcome.report.per_pair.values())
    elapsed = time.perf_counter() - started
    a = np.asarray(values["A"])
    b = np.asarray(values["B"])
    f = np.asarray(values["F"])
    assert len(a) == len(b) == len(f) == 10 * 45

    tail_fraction = float(np.mean(a > 2.0 * np.median(a)))
    assert tail_fraction >= 0.20  # the benchmark is genuinely hard for pairwise
    assert b.mean() <= a.mean()  # (a) progressive improves the mean
    assert b.std() <= 0.8 * a.std()  # (b) progressive cuts the spread
    assert f.mean() >= b.mean()  # (c) onset features help
    assert elapsed <= 300.0
    _report(
        7,
        f"tail={tail_fraction:.0%}; mean A={a.mean():.0f} B={b.mean():.0f} F={f.mean():.0f} ms; "
        f"std A={a.std():.0f} B={b.std():.0f} ms; {elapsed:.0f}s",
    )


def test_criterion_8_ordering_determinism_and_correctness():
    """Greedy DTW-cost order matches an exhaustive re-scan; length order
    matches a reference sort."""
    full = MultiscaleConfig(enabled=False)
    for case in range(20):
        corpus = generate_synthetic_corpus(
            SyntheticCorpusSpec(
                base_length=50 + (case % 3) * 15,
                num_versions=4 + case % 2,
                warp_strength=0.35,
                noise_level=0.05,
                articulation_perturbation=1.2,
                beat_every=8,
                seed=8000 + case,
            )
        )
        versions = corpus.versions
        k = len(versions)
        plan = dtw_cost_order(versions, COMBINED, full)

        costs = np.zeros((k, k))
        for i in range(k):
            for j in range(i + 1, k):
                value = average_cost(align_pair(versions[i], versions[j], COMBINED))
                costs[i, j] = costs[j, i] = value
        first = min(
            ((i, j) for i in range(k) for j in range(i + 1, k)),
            key=lambda p: (costs[p], sorted((versions[p[0]].label, versions[p[1]].label)), p),
        )
        chosen = [first[0], first[1]]
        remaining = [i for i in range(k) if i not in chosen]
        while remaining:
            nxt = min(
                remaining,
                key=lambda i: (sum(costs[i, c] for c in chosen), versions[i].label, i),
            )
            chosen.append(nxt)
            remaining.remove(nxt)
        assert plan.permutation == tuple(chosen)

        reference = tuple(
            sorted(range(k), key=lambda i: (len(versions[i]), versions[i].label, i))
        )
        assert length_order(versions).permutation == reference
    _report(8, "20 corpora, greedy selection equals the exhaustive re-scan at every step")


def test_criterion_9_end_to_end_determinism(tmp_path):
    """Identical CLI invocations with different job counts produce
    numerically identical reports."""
    runner = CliRunner()
    corpus_dir = tmp_path / "corpus"
    result = runner.invoke(
        cli_main,
        [
            "synth", "-o", str(corpus_dir), "--length", "160", "--versions", "4",
            "--warp", "0.3", "--noise", "0.04", "--articulation", "0.8",
            "--beat-every", "8", "--seed", "42",
        ],
    )
    assert result.exit_code == 0, result.output

    bodies = []
    for jobs in ("1", "4"):
        outdir = tmp_path / f"eval_jobs{jobs}"
        result = runner.invoke(
            cli_main,
            [
                "evaluate", str(corpus_dir), "-o", str(outdir),
                "--variants", "A,B,D,E", "--jobs", jobs,
            ],
        )
        assert result.exit_code == 0, result.output
        body = json.loads((outdir / "report.json").read_text())
        body.pop("run_info")
        bodies.append(json.dumps(body, sort_keys=True))
    assert bodies[0] == bodies[1]
    _report(9, "evaluate with --jobs 1 and --jobs 4 produced identical reports")
