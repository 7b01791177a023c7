"""Model alphabet, block words, exact cylinder masses, and the two averaging
identities (disintegration and cylinder restriction) verified statistically."""

import itertools
from fractions import Fraction as F

import numpy as np
import pytest

from normalis.disintegration import (
    KSReport,
    ModelCylinder,
    ModelWord,
    atom_bound,
    build_alphabet,
    ks_compare,
    model_cylinder_measure,
    model_mean,
    sample_block_matrix,
    sample_model_point,
    sample_model_values,
    sample_omega,
    values_for_fixed_omega,
    verify_disintegration,
    verify_restriction_identity,
)
from normalis.errors import InputError
from normalis.ifs_core import EquicontractiveIFS, ProbVector, cantor_system


def three_map_system():
    """ratio 1/5, translations (0, 2/5, 4/5): all first-level images disjoint."""
    return (EquicontractiveIFS(F(1, 5), (F(0), F(2, 5), F(4, 5))),
            ProbVector([F(1, 4), F(1, 4), F(1, 2)]))


PAIR = frozenset({0, 1})


class TestAlphabet:
    def test_three_map_blocks_and_weights(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        assert a.blocks == (frozenset({0, 1}), frozenset({2}))
        assert a.weights == (F(1, 2), F(1, 2))
        assert a.pair == (0, 1)

    def test_two_map_degenerate_single_block(self):
        a = build_alphabet(ProbVector([F(1, 2), F(1, 2)]), 0, 1)
        assert a.blocks == (frozenset({0, 1}),)
        assert a.weights == (F(1),)

    def test_four_map_weights(self):
        a = build_alphabet(ProbVector([F(1, 8), F(1, 8), F(1, 4), F(1, 2)]), 0, 1)
        assert a.weights == (F(1, 4), F(1, 4), F(1, 2))

    def test_pair_order_insensitive(self):
        _, p = three_map_system()
        assert build_alphabet(p, 1, 0) == build_alphabet(p, 0, 1)

    def test_rejects_equal_pair_and_zero_weights(self):
        _, p = three_map_system()
        with pytest.raises(InputError):
            build_alphabet(p, 1, 1)
        with pytest.raises(InputError):
            build_alphabet(ProbVector([F(1, 2), F(0), F(1, 2)]), 0, 2)
        with pytest.raises(InputError):
            build_alphabet(p, 0, 5)


class TestModelWord:
    def test_deterministic_per_seed(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        assert sample_omega(a, 10, seed=5).prefix(10) == \
            sample_omega(a, 10, seed=5).prefix(10)
        assert sample_omega(a, 10, seed=5).prefix(10) != \
            sample_omega(a, 10, seed=6).prefix(10)

    def test_lazy_extension_consistent(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=5)
        head = w.prefix(3)
        assert w.prefix(8) == ModelWord(a, seed=5).prefix(8)
        assert w.prefix(8)[:3] == head

    def test_single_block_alphabet_constant(self):
        a = build_alphabet(ProbVector([F(1, 2), F(1, 2)]), 0, 1)
        assert sample_omega(a, 8, seed=1).prefix(8) == (0,) * 8

    def test_pair_block_frequency(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        mat = sample_block_matrix(a, 100_000, 0, seed=9)
        freq = (mat[:, 0] == 0).mean()
        assert abs(freq - 0.5) < 4 * np.sqrt(0.25 / 100_000)

    def test_explicit_prefix_then_lazy(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=5, prefix=(0, 1))
        assert w.block_at(0) == PAIR and w.block_at(1) == frozenset({2})
        assert w.block_index_at(7) in (0, 1)

    def test_shift_reads_same_blocks(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=5, prefix=(0, 1))
        s = w.shifted(2)
        assert [s.block_index_at(k) for k in range(5)] == \
            [w.block_index_at(k + 2) for k in range(5)]


class TestCylinderMass:
    def test_conditional_product(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=5, prefix=(0, 1))
        # (p_0/q_pair) * (p_2/q_2) = (1/4)/(1/2) * 1 = 1/2
        assert model_cylinder_measure(ModelCylinder(w, (0, 2)), p, a) == F(1, 2)
        assert model_cylinder_measure(ModelCylinder(w, ()), p, a) == 1

    def test_singleton_blocks_mass_one(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=1, prefix=(1, 1, 1))
        assert model_cylinder_measure(ModelCylinder(w, (2, 2, 2)), p, a) == 1

    def test_degenerate_alphabet_matches_plain_cylinder_measure(self):
        p = ProbVector([F(1, 2), F(1, 2)])
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=1)
        assert model_cylinder_measure(ModelCylinder(w, (0, 1)), p, a) == F(1, 4)

    def test_incompatible_word_rejected(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=5, prefix=(0, 1))
        with pytest.raises(InputError):
            ModelCylinder(w, (2, 2))  # 2 is not in the pair block at position 0

    def test_masses_sum_to_one_and_respect_atom_bound(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=3)
        blocks = w.prefix(4)
        choices = [sorted(a.blocks[b]) for b in blocks]
        bound = atom_bound(w.blocks_prefix(4), p, 0, 1)
        total = F(0)
        for word in itertools.product(*choices):
            mass = model_cylinder_measure(ModelCylinder(w, word), p, a)
            assert mass <= bound
            total += mass
        assert total == 1


class TestAtomBound:
    def test_pair_count_powers(self):
        _, p = three_map_system()
        assert atom_bound([PAIR] * 3, p, 0, 1) == F(1, 8)
        assert atom_bound([frozenset({2})], p, 0, 1) == 1
        p2 = ProbVector([F(1, 8), F(3, 8), F(1, 2)])
        assert atom_bound([PAIR] * 2, p2, 0, 1) == F(9, 16)

    def test_strictly_decreasing_along_pair_occurrences(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = sample_omega(a, 40, seed=11)
        prev = F(2)
        for m in range(1, 40):
            cur = atom_bound(w.blocks_prefix(m), p, 0, 1)
            assert cur <= prev
            if w.block_index_at(m - 1) == 0:
                assert cur < prev or prev == F(2)
            prev = cur
        assert cur < F(1, 10)  # forty draws at q_pair = 1/2: bound is far below 1

    def test_expected_pair_count(self):
        _, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        mat = sample_block_matrix(a, 20_000, 29, seed=13)
        counts = (mat == 0).sum(axis=1)
        expect = 30 * 0.5
        sigma = np.sqrt(30 * 0.25) / np.sqrt(20_000)
        assert abs(counts.mean() - expect) < 4 * sigma


class TestModelSampling:
    def test_singleton_prefix_forces_digits(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=1, prefix=(1,) * 6)
        pt = sample_model_point(w, ifs, p, 5, seed=2)
        assert pt.word == (2,) * 6

    def test_point_deterministic(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = sample_omega(a, 12, seed=4)
        p1 = sample_model_point(w, ifs, p, 10, seed=2, index=5)
        w2 = sample_omega(a, 12, seed=4)
        p2 = sample_model_point(w2, ifs, p, 10, seed=2, index=5)
        assert p1.word == p2.word

    def test_fixed_omega_mean(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = sample_omega(a, 25, seed=17)
        vals = values_for_fixed_omega(w, ifs, p, 100_000, 24, seed=4)
        mu = model_mean(w, ifs, p, 24)
        sigma = vals.std() / np.sqrt(len(vals))
        assert abs(vals.mean() - mu) < 4 * sigma

    def test_degenerate_alphabet_digit_law_equals_direct(self):
        # |I|=2 with the pair {0,1}: conditional weights are exactly p, so digit
        # frequencies must match the direct sampler's
        ifs, p = cantor_system()
        a = build_alphabet(p, 0, 1)
        vals = sample_model_values(ifs, p, a, 50_000, 20, seed=6)
        assert abs((vals < F(1, 2)).mean() - 0.5) < 4 * np.sqrt(0.25 / 50_000)


class TestVerification:
    def test_disintegration_passes(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        rep = verify_disintegration(ifs, p, a, 100_000, 25, seed=31)
        assert rep.passed
        assert rep.statistic < 1.63 * np.sqrt(2 / 100_000)

    def test_corrupted_weights_fail(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        rep = verify_disintegration(ifs, p, a, 100_000, 25, seed=31,
                                    corrupt_pair_weight=True)
        assert not rep.passed
        assert rep.statistic > 5 * rep.critical

    def test_degenerate_alphabet_passes(self):
        ifs, p = cantor_system()
        a = build_alphabet(p, 0, 1)
        assert verify_disintegration(ifs, p, a, 10_000, 25, seed=3).passed

    def test_underpowered_rejected(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        with pytest.raises(InputError):
            verify_disintegration(ifs, p, a, 50, 25, seed=1)

    def test_restriction_identity_passes(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=5, prefix=(0, 1))
        rep = verify_restriction_identity(w, (0, 2), ifs, p, 10_000, seed=8)
        assert rep.passed and rep.n1 == rep.n2 == 10_000

    def test_restriction_empty_word_identity(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=5, prefix=(0, 1))
        assert verify_restriction_identity(w, (), ifs, p, 5_000, seed=9).passed

    def test_restriction_thin_cylinder_rejected(self):
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=5, prefix=(0,) * 50)
        with pytest.raises(InputError):
            # mass (1/2)^50 far below the 1e-6 feasibility floor
            verify_restriction_identity(w, (0,) * 50, ifs, p, 1000, seed=2)

    def test_ks_report_shape(self):
        rep = ks_compare(np.random.default_rng(0).normal(size=500),
                         np.random.default_rng(1).normal(size=500))
        d = rep.as_dict()
        assert set(d) == {"statistic", "critical", "alpha", "n1", "n2",
                          "pvalue", "pass"}

    def test_eq5_disjointness_of_distinct_compatible_words(self):
        # words of equal length differing in a pair-block coordinate occupy
        # disjoint geometric intervals (exact check)
        from normalis.ifs_core import cylinder_interval
        ifs, p = three_map_system()
        a = build_alphabet(p, 0, 1)
        w = ModelWord(a, seed=3)
        blocks = w.prefix(3)
        choices = [sorted(a.blocks[b]) for b in blocks]
        words = list(itertools.product(*choices))
        for w1, w2 in itertools.combinations(words, 2):
            lo1, hi1 = cylinder_interval(ifs, w1)
            lo2, hi2 = cylinder_interval(ifs, w2)
            assert hi1 < lo2 or hi2 < lo1
