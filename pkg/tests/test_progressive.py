import numpy as np
import pytest

from jointalign import (
    CostConfig,
    GAP_MODE_COPY,
    GAP_MODE_INSERT,
    GAP_VALUE,
    MEASURE_COMBINED,
    SyntheticCorpusSpec,
    Template,
    align_pair,
    align_to_template,
    downsample_template,
    generate_synthetic_corpus,
    is_gap,
    iterative_align,
    load_template,
    pairwise_from_template,
    progressive_align,
    remove_from_template,
    save_template,
    template_cost,
    template_extend,
    template_init,
)
from jointalign.pairwise import AlignmentPath
from conftest import random_sequence, small_corpus
from oracles import brute_force_dtw_cost, scalar_pair_cost, scalar_template_cost_matrix


def assert_rows_reconstruct(template, versions, row_to_version):
    for row, version in row_to_version.items():
        rebuilt = template.row_sequence(row)
        np.testing.assert_array_equal(rebuilt.chroma, versions[version].chroma)
        if versions[version].has_onsets:
            np.testing.assert_array_equal(rebuilt.onsets, versions[version].onsets)


def count_steps(path):
    deltas = np.diff(path.pairs, axis=0)
    diag = int(((deltas[:, 0] == 1) & (deltas[:, 1] == 1)).sum())
    row = int(((deltas[:, 0] == 1) & (deltas[:, 1] == 0)).sum())
    col = int(((deltas[:, 0] == 0) & (deltas[:, 1] == 1)).sum())
    return diag, row, col


class TestTemplateBasics:
    def test_init_shape(self, rng):
        seq = random_sequence(rng, 5, label="a")
        t = template_init(seq)
        assert (t.k, t.length, t.gap_count) == (1, 5, 0)
        assert t.row_labels == ("a",)
        assert t.hop_duration == seq.hop_duration
        np.testing.assert_array_equal(t.row_sequence(0).chroma, seq.chroma)

    def test_rejects_all_gap_column(self):
        chroma = np.ones((2, 3, 4))
        mask = np.zeros((2, 3), dtype=bool)
        mask[:, 1] = True
        chroma[:, 1, :] = GAP_VALUE
        with pytest.raises(ValueError, match="all-gap"):
            Template(chroma=chroma, gap_mask=mask, row_labels=("a", "b"), hop_duration=0.02)

    def test_is_gap_predicate(self):
        assert is_gap(np.full(12, GAP_VALUE))
        assert not is_gap(np.zeros(12))


class TestTemplateCost:
    def _gapped_template(self, rng):
        seqs = [random_sequence(rng, 4, label=l) for l in "abc"]
        chroma = np.stack([s.chroma for s in seqs])
        onsets = np.stack([s.onsets for s in seqs])
        mask = np.zeros((3, 4), dtype=bool)
        mask[0, 1] = mask[1, 1] = True  # column 1 keeps one real entry
        chroma[mask] = GAP_VALUE
        onsets[mask] = GAP_VALUE
        return Template(
            chroma=chroma, gap_mask=mask, row_labels=("a", "b", "c"),
            hop_duration=0.02, onsets=onsets,
        )

    def test_single_row_reduces_to_pairwise(self, rng):
        seq = random_sequence(rng, 4)
        t = template_init(seq)
        x = random_sequence(rng, 1)
        cfg = CostConfig(measure=MEASURE_COMBINED)
        want = scalar_pair_cost(seq.chroma[2], seq.onsets[2], x.chroma[0], x.onsets[0], cfg.measure)
        assert template_cost(t, 2, x.chroma[0], x.onsets[0], cfg) == pytest.approx(want, abs=1e-12)

    def test_two_gaps_one_real(self, rng):
        t = self._gapped_template(rng)
        x = random_sequence(rng, 1)
        cfg = CostConfig(measure=MEASURE_COMBINED)
        got = template_cost(t, 1, x.chroma[0], x.onsets[0], cfg)
        real = scalar_pair_cost(t.chroma[2, 1], t.onsets[2, 1], x.chroma[0], x.onsets[0], cfg.measure)
        assert got == pytest.approx(2 * cfg.effective_gap_penalty + real, abs=1e-12)

    def test_random_columns_match_row_by_row_oracle(self, rng):
        t = self._gapped_template(rng)
        cfg = CostConfig(measure=MEASURE_COMBINED)
        x = random_sequence(rng, 6)
        oracle = scalar_template_cost_matrix(t, x, cfg)
        for col in range(t.length):
            for m in range(len(x)):
                got = template_cost(t, col, x.chroma[m], x.onsets[m], cfg)
                assert got == pytest.approx(oracle[col, m], abs=1e-12)

    def test_rejects_gap_input(self, rng):
        t = self._gapped_template(rng)
        with pytest.raises(ValueError, match="gap"):
            template_cost(t, 0, np.full(12, GAP_VALUE), None, CostConfig())


class TestAlignToTemplate:
    def test_self_alignment_through_template(self, rng):
        seq = random_sequence(rng, 12, onsets=False)
        path = align_to_template(template_init(seq), seq, CostConfig())
        assert path.total_cost == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_array_equal(path.pairs[:, 0], path.pairs[:, 1])

    def test_single_row_equals_pairwise_exactly(self):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        for seed in range(5):
            corpus = generate_synthetic_corpus(
                SyntheticCorpusSpec(base_length=50, num_versions=2, warp_strength=0.4, seed=seed)
            )
            x, y = corpus.versions
            pairwise = align_pair(x, y, cfg)
            templated = align_to_template(template_init(x), y, cfg)
            np.testing.assert_array_equal(templated.pairs, pairwise.pairs)
            assert templated.total_cost == pairwise.total_cost

    def test_two_row_template_matches_brute_force(self, rng):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        for _ in range(10):
            a = random_sequence(rng, int(rng.integers(3, 8)), label="a")
            b = random_sequence(rng, int(rng.integers(3, 8)), label="b")
            x = random_sequence(rng, int(rng.integers(3, 8)), label="x")
            t = template_extend(template_init(a), b, align_to_template(template_init(a), b, cfg))
            assert t.k == 2
            merged = scalar_template_cost_matrix(t, x, cfg)
            want = brute_force_dtw_cost(merged, cfg.weights)
            got = align_to_template(t, x, cfg)
            assert got.total_cost == pytest.approx(want, abs=1e-9)

    def test_dimension_mismatch(self, rng):
        t = template_init(random_sequence(rng, 4, onsets=False))
        with pytest.raises(ValueError, match="dimension"):
            align_to_template(t, random_sequence(rng, 4, dim=6, onsets=False), CostConfig())

    def test_multiscale_variant_runs(self):
        from jointalign import MultiscaleConfig

        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = generate_synthetic_corpus(
            SyntheticCorpusSpec(base_length=120, num_versions=3, warp_strength=0.3, seed=4)
        )
        t = progressive_align(corpus.versions[:2], [0, 1], cfg)
        ms = MultiscaleConfig(factors=(2, 1), band_radius=30, enabled=True)
        banded = align_to_template(t, corpus.versions[2], cfg, ms)
        dense = align_to_template(t, corpus.versions[2], cfg)
        assert banded.total_cost >= dense.total_cost - 1e-9
        assert banded.total_cost <= 1.05 * dense.total_cost


class TestTemplateExtend:
    def test_diagonal_path_adds_no_gaps(self, rng):
        a = random_sequence(rng, 5, label="a")
        b = random_sequence(rng, 5, label="b")
        pairs = np.column_stack([np.arange(1, 6), np.arange(1, 6)])
        path = AlignmentPath(pairs=pairs, total_cost=1.0)
        for mode in (GAP_MODE_INSERT, GAP_MODE_COPY):
            t = template_extend(template_init(a), b, path, mode)
            assert t.gap_count == 0
            np.testing.assert_array_equal(t.row_sequence(1).chroma, b.chroma)

    def test_case_equations_by_hand(self, rng):
        a = random_sequence(rng, 3, label="a")
        b = random_sequence(rng, 2, label="b")
        path = AlignmentPath(pairs=np.asarray([[1, 1], [2, 1], [3, 2]]), total_cost=1.0)

        inserted = template_extend(template_init(a), b, path, GAP_MODE_INSERT)
        assert inserted.length == 3
        assert not inserted.gap_mask[1, 0]
        assert inserted.gap_mask[1, 1]  # the (1,0) step stores a gap in row 1
        assert not inserted.gap_mask[1, 2]
        np.testing.assert_array_equal(inserted.chroma[1, 1], np.full(12, GAP_VALUE))
        np.testing.assert_array_equal(inserted.chroma[1, 2], b.chroma[1])

        copied = template_extend(template_init(a), b, path, GAP_MODE_COPY)
        assert copied.gap_count == 0
        np.testing.assert_array_equal(copied.chroma[1, 0], b.chroma[0])
        np.testing.assert_array_equal(copied.chroma[1, 1], b.chroma[0])  # x1 duplicated
        np.testing.assert_array_equal(copied.chroma[1, 2], b.chroma[1])

    def test_column_step_gaps_old_rows(self, rng):
        a = random_sequence(rng, 2, label="a")
        b = random_sequence(rng, 3, label="b")
        path = AlignmentPath(pairs=np.asarray([[1, 1], [1, 2], [2, 3]]), total_cost=1.0)
        t = template_extend(template_init(a), b, path, GAP_MODE_INSERT)
        assert t.gap_mask[0, 1]  # the (0,1) step stores gaps in all old rows
        assert not t.gap_mask[1, 1]
        np.testing.assert_array_equal(t.row_sequence(0).chroma, a.chroma)
        np.testing.assert_array_equal(t.row_sequence(1).chroma, b.chroma)

    def test_gap_accounting_on_random_paths(self, rng):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        for seed in range(5):
            corpus = small_corpus(seed, num_versions=3)
            t = template_init(corpus.versions[0])
            for idx in (1, 2):
                x = corpus.versions[idx]
                path = align_to_template(t, x, cfg)
                diag, row_steps, col_steps = count_steps(path)
                before_gaps = t.gap_count
                before_k = t.k
                t = template_extend(t, x, path, GAP_MODE_INSERT)
                assert t.row_gap_count(t.k - 1) == row_steps
                new_gap_columns = int((t.gap_mask[:before_k].all(axis=0)).sum())
                assert new_gap_columns == col_steps
                assert t.gap_count == before_gaps + row_steps + before_k * col_steps
                assert not t.gap_mask.all(axis=0).any()

    def test_row_reconstruction_after_extensions(self):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(3, num_versions=4)
        t = progressive_align(corpus.versions, [0, 1, 2, 3], cfg)
        assert_rows_reconstruct(t, corpus.versions, {r: r for r in range(4)})

    def test_length_mismatch_rejected(self, rng):
        a = random_sequence(rng, 4)
        b = random_sequence(rng, 4)
        path = AlignmentPath(pairs=np.asarray([[1, 1], [2, 2]]), total_cost=0.0)
        with pytest.raises(ValueError, match="ends at"):
            template_extend(template_init(a), b, path)


class TestRemoveFromTemplate:
    def test_remove_undoes_extend(self, rng):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(8, num_versions=3)
        base = progressive_align(corpus.versions[:2], [0, 1], cfg)
        x = corpus.versions[2]
        path = align_to_template(base, x, cfg)
        extended = template_extend(base, x, path, GAP_MODE_INSERT)
        reduced, extracted = remove_from_template(extended, extended.k - 1)
        np.testing.assert_array_equal(reduced.chroma, base.chroma)
        np.testing.assert_array_equal(reduced.gap_mask, base.gap_mask)
        assert reduced.row_labels == base.row_labels
        np.testing.assert_array_equal(extracted.chroma, x.chroma)
        np.testing.assert_array_equal(extracted.onsets, x.onsets)

    def test_no_all_gap_columns_after_any_removal(self):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(4, num_versions=4)
        t = progressive_align(corpus.versions, [0, 1, 2, 3], cfg)
        for row in range(t.k):
            reduced, _ = remove_from_template(t, row)
            assert not reduced.gap_mask.all(axis=0).any()

    def test_cannot_remove_last_row(self, rng):
        t = template_init(random_sequence(rng, 3))
        with pytest.raises(ValueError, match="last row"):
            remove_from_template(t, 0)


class TestProgressiveAlign:
    def test_two_version_reduction(self):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        for seed in range(5):
            corpus = small_corpus(seed, num_versions=2)
            pairwise = align_pair(corpus.versions[0], corpus.versions[1], cfg)
            template = progressive_align(corpus.versions, [0, 1], cfg)
            corr = pairwise_from_template(template, 0, 1)
            deltas = np.diff(pairwise.pairs, axis=0)
            keep = np.concatenate(([True], (deltas == 1).all(axis=1)))
            np.testing.assert_array_equal(corr.pairs, pairwise.pairs[keep])

    def test_identical_copies_have_no_gaps(self, rng):
        seq = random_sequence(rng, 30, label="v")
        versions = [seq, seq, seq, seq]
        t = progressive_align(versions, [0, 1, 2, 3], CostConfig(measure=MEASURE_COMBINED))
        assert t.gap_count == 0
        assert t.length == 30
        for r in range(4):
            np.testing.assert_array_equal(t.chroma[r], seq.chroma)

    def test_structure_on_synthetic_corpus(self):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(12, num_versions=5, base_length=100)
        order = [4, 2, 0, 1, 3]
        t = progressive_align(corpus.versions, order, cfg)
        assert t.k == 5
        assert t.length >= max(len(v) for v in corpus.versions)
        assert_rows_reconstruct(t, corpus.versions, {r: order[r] for r in range(5)})

    def test_order_must_be_permutation(self):
        corpus = small_corpus(1, num_versions=3)
        with pytest.raises(ValueError, match="permutation"):
            progressive_align(corpus.versions, [0, 1, 1], CostConfig(measure=MEASURE_COMBINED))


class TestIterativeAlign:
    def test_one_iteration_equals_progressive(self):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(7, num_versions=3)
        a = progressive_align(corpus.versions, [0, 1, 2], cfg)
        b = iterative_align(corpus.versions, [0, 1, 2], 1, cfg)
        np.testing.assert_array_equal(a.chroma, b.chroma)
        np.testing.assert_array_equal(a.gap_mask, b.gap_mask)

    def test_identical_copies_fixed_point(self, rng):
        seq = random_sequence(rng, 25, label="v")
        versions = [seq, seq, seq]
        cfg = CostConfig(measure=MEASURE_COMBINED)
        t = iterative_align(versions, [0, 1, 2], 2, cfg)
        assert t.gap_count == 0
        assert t.length == 25

    def test_invariants_after_each_iteration(self):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(9, num_versions=4)
        for iterations in (1, 2, 3):
            t = iterative_align(corpus.versions, [0, 1, 2, 3], iterations, cfg)
            assert t.k == 4
            assert not t.gap_mask.all(axis=0).any()
            # Rows return to alignment order after every full pass.
            assert_rows_reconstruct(t, corpus.versions, {r: r for r in range(4)})

    def test_steps_log_iteration_numbers(self):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(2, num_versions=3)
        steps = []
        iterative_align(corpus.versions, [0, 1, 2], 2, cfg, steps_out=steps)
        assert [s.iteration for s in steps] == [1, 1, 2, 2, 2]
        assert all(s.average_cost == pytest.approx(s.total_cost / s.path_length) for s in steps)

    def test_rejects_zero_iterations(self):
        corpus = small_corpus(1, num_versions=2)
        with pytest.raises(ValueError, match="iterations"):
            iterative_align(corpus.versions, [0, 1], 0, CostConfig(measure=MEASURE_COMBINED))


class TestPairwiseFromTemplate:
    def test_gap_free_template_is_identity(self, rng):
        seq = random_sequence(rng, 8, label="v")
        t = progressive_align([seq, seq], [0, 1], CostConfig(measure=MEASURE_COMBINED))
        corr = pairwise_from_template(t, 0, 1)
        np.testing.assert_array_equal(corr.pairs[:, 0], corr.pairs[:, 1])
        assert corr.pairs.shape == (8, 2)

    def test_monotone_in_both_coordinates(self):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(5, num_versions=4)
        t = progressive_align(corpus.versions, [0, 1, 2, 3], cfg)
        for i in range(4):
            for j in range(i + 1, 4):
                corr = pairwise_from_template(t, i, j)
                assert (np.diff(corr.pairs[:, 0]) > 0).all()
                assert (np.diff(corr.pairs[:, 1]) > 0).all()
                assert corr.size_a == len(corpus.versions[i])
                assert corr.size_b == len(corpus.versions[j])

    def test_row_validation(self):
        corpus = small_corpus(5, num_versions=2)
        t = progressive_align(corpus.versions, [0, 1], CostConfig(measure=MEASURE_COMBINED))
        with pytest.raises(ValueError, match="differ"):
            pairwise_from_template(t, 1, 1)
        with pytest.raises(IndexError):
            pairwise_from_template(t, 0, 5)


class TestTemplateSerialization:
    def test_round_trip(self, tmp_path):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(6, num_versions=3)
        t = progressive_align(corpus.versions, [0, 1, 2], cfg)
        save_template(t, tmp_path / "template.csv")
        assert (tmp_path / "template.json").exists()
        assert (tmp_path / "template.onset.csv").exists()
        back = load_template(tmp_path / "template.csv")
        np.testing.assert_array_equal(back.chroma, t.chroma)
        np.testing.assert_array_equal(back.onsets, t.onsets)
        np.testing.assert_array_equal(back.gap_mask, t.gap_mask)
        assert back.row_labels == t.row_labels
        assert back.hop_duration == t.hop_duration

    def test_gaps_serialized_as_minus_one(self, tmp_path):
        cfg = CostConfig(measure=MEASURE_COMBINED)
        corpus = small_corpus(6, num_versions=2)
        t = progressive_align(corpus.versions, [0, 1], cfg)
        save_template(t, tmp_path / "template.csv")
        flat = np.loadtxt(tmp_path / "template.csv", delimiter=",")
        k, length, dim = t.chroma.shape
        grid = flat.reshape(length, k, dim).transpose(1, 0, 2)
        assert (grid[t.gap_mask] == GAP_VALUE).all()


class TestDownsampleTemplate:
    def test_gap_aware_averaging(self, rng):
        seqs = [random_sequence(rng, 4, label=l) for l in "ab"]
        chroma = np.stack([s.chroma for s in seqs])
        onsets = np.stack([s.onsets for s in seqs])
        mask = np.zeros((2, 4), dtype=bool)
        mask[0, 0] = True  # row 0 gap in the first group's first column
        mask[1, 2] = mask[1, 3] = True  # row 1 entirely gap in the second group
        chroma[mask] = GAP_VALUE
        onsets[mask] = GAP_VALUE
        t = Template(chroma=chroma, gap_mask=mask, row_labels=("a", "b"), hop_duration=0.02, onsets=onsets)
        coarse = downsample_template(t, 2)
        assert coarse.length == 2
        # Row 0 group 0: only column 1 is real.
        want = seqs[0].chroma[1] / np.linalg.norm(seqs[0].chroma[1])
        np.testing.assert_allclose(coarse.chroma[0, 0], want, atol=1e-12)
        # Row 1 group 1 is all-gap at the coarse level.
        assert coarse.gap_mask[1, 1]
        assert not coarse.gap_mask[0, 1]
        assert coarse.hop_duration == pytest.approx(0.04)
