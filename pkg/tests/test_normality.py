import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normalis.algebra import ExactNumber
from normalis.errors import InputError
from normalis.fourier import blowup_factor, fourier_product
from normalis.ifs_core import (
    EquicontractiveIFS,
    ProbVector,
    cantor_system,
    cylinder_enclosure,
    cylinder_interval,
    golden_bernoulli_system,
    sample_point,
    sample_values,
    sample_word,
)
from normalis.normality import (
    DigitStream,
    WeylSeries,
    digit_budget,
    embed_point,
    extract_digits,
    fractional_parts,
    kgram_test,
    monobit_test,
    partition_cell,
    rotation_orbit,
    star_discrepancy,
    unit_embedding,
    weyl_sums,
    weyl_sums_rational,
)
from normalis.precision import Enclosure

F = Fraction


class TestDigitStream:
    def test_digit_range_checked(self):
        with pytest.raises(InputError):
            DigitStream(2, (0, 1, 2))
        with pytest.raises(InputError):
            DigitStream(1, (0,))

    def test_value_interval(self):
        s = DigitStream(2, (1, 0, 1))
        lo, hi = s.value_interval()
        assert lo == F(5, 8) and hi == F(6, 8)


class TestExtractDigits:
    def test_one_third_binary(self):
        s = extract_digits(F(1, 3), 2, 6)
        assert s.digits == (0, 1, 0, 1, 0, 1)
        assert not s.boundary
        assert s.tail == F(1, 3)

    def test_terminating_representative(self):
        s = extract_digits(F(2, 3), 3, 4)
        assert s.digits == (2, 0, 0, 0)
        assert s.boundary  # b-adic: the terminating expansion was chosen
        assert s.tail == 0

    def test_zero_is_b_adic(self):
        s = extract_digits(F(0), 5, 4)
        assert s.digits == (0, 0, 0, 0)
        assert s.boundary

    def test_range_checked(self):
        with pytest.raises(InputError):
            extract_digits(F(3, 2), 2, 4)
        with pytest.raises(InputError):
            extract_digits(F(-1, 3), 2, 4)

    def test_algebraic_point_digits(self):
        ifs, _ = golden_bernoulli_system()
        s = extract_digits(ifs.ratio, 2, 30)
        assert "".join(map(str, s.digits)) == "100111100011011101111001101110"
        assert not s.boundary

    def test_algebraic_range_checked(self):
        ifs, _ = golden_bernoulli_system()
        with pytest.raises(InputError):
            extract_digits(1 + ifs.ratio, 2, 4)

    def test_cantor_digits_avoid_one(self):
        ifs, p = cantor_system()

        def refine(d):
            return sample_point(ifs, p, depth=d, seed=314, index=0)

        pt = sample_point(ifs, p, depth=50, seed=314, index=0)
        s = extract_digits(pt, 3, 1000, refine=refine)
        assert len(s.digits) == 1000
        assert not s.boundary
        assert set(s.digits) <= {0, 2}
        word = refine(1100).word
        assert all(d == 2 * w for d, w in zip(s.digits, word))

    def test_word_route_matches_point_route(self):
        ifs, p = cantor_system()
        pt = sample_point(ifs, p, depth=80, seed=9)
        a = extract_digits(pt, 3, 60,
                           refine=lambda d: sample_point(ifs, p, depth=d, seed=9))
        b = extract_digits(sample_word(ifs, p, depth=80, seed=9), 3, 60,
                           refine=lambda d: sample_word(ifs, p, depth=d, seed=9),
                           ifs=ifs)
        assert a.digits == b.digits

    def test_missing_refinement_is_loud(self):
        ifs, p = cantor_system()
        pt = sample_point(ifs, p, depth=5, seed=2)
        with pytest.raises(InputError, match="refinement"):
            extract_digits(pt, 3, 50)

    def test_boundary_stall_flags_partial_stream(self):
        # binary system where the word (0,1,1,1,...) converges to exactly 1/2:
        # the first digit straddles forever, so refinement must stall and flag
        ifs = EquicontractiveIFS(ExactNumber(F(1, 2)),
                                 (ExactNumber(0), ExactNumber(F(1, 2))))

        def refine(d):
            return (0,) + (1,) * d

        s = extract_digits(refine(8), 2, 4, refine=refine, ifs=ifs)
        assert s.boundary
        assert len(s.digits) < 4

    def test_embedded_golden_stream(self):
        ifs, p = golden_bernoulli_system()
        k, j = unit_embedding(ifs, 2)
        assert (k, j) == (3, 3)
        word = sample_word(ifs, p, depth=digit_budget(2, ifs.ratio, 64), seed=3)
        s = extract_digits(
            word, 2, 64,
            refine=lambda d: sample_word(ifs, p, depth=d, seed=3),
            ifs=ifs, embedding=(k, j))
        assert len(s.digits) == 64
        lo, hi = s.value_interval()
        pt = sample_point(ifs, p, depth=len(word) - 1, seed=3)
        emb = embed_point(pt, k, j, 2)
        assert emb.lo >= lo and emb.hi <= hi + F(1, 2 ** 60)

    def test_enclosure_evaluator_contains_exact_endpoints(self):
        ifs, _ = golden_bernoulli_system()
        for word in [(), (0,), (0, 1, 1, 0, 1), (1, 1, 1, 1)]:
            lo, hi = cylinder_interval(ifs, word)
            enc = cylinder_enclosure(ifs, word, 80)
            assert enc.lo <= lo.approx(100).hi
            assert hi.approx(100).lo <= enc.hi


class TestWeylSums:
    def test_period_two_orbit(self):
        # 2/3 under doubling alternates {1/3, 2/3}: even-N averages are -1/2
        w = weyl_sums(F(2, 3), 1, [2, 10, 1000], base=2)
        for _, a in w.entries:
            assert abs(a - (-0.5)) < 1e-9

    def test_fixed_point_zero(self):
        w = weyl_sums(F(0), 1, [5, 50], base=2)
        for _, a in w.entries:
            assert abs(a - 1) < 1e-15

    def test_stream_matches_rational_orbit(self):
        s = extract_digits(F(1, 7), 2, 200)
        wa = weyl_sums(s, 1, [10, 100])
        wb = weyl_sums_rational(F(1, 7), 2, 1, [10, 100])
        assert all(abs(a[1] - b[1]) < 1e-12
                   for a, b in zip(wa.entries, wb.entries))

    def test_exact_fractional_parts(self):
        s = extract_digits(F(1, 7), 2, 50)
        fp = fractional_parts(s, 5)
        assert fp == [(F(1, 7) * 2 ** n) % 1 for n in range(1, 6)]

    def test_fractional_parts_need_tail(self):
        s = DigitStream(2, (0, 1, 1))
        with pytest.raises(InputError, match="tail"):
            fractional_parts(s, 2)

    def test_insufficient_digits_reports_requirement(self):
        s = DigitStream(2, tuple([0, 1] * 30))
        with pytest.raises(InputError, match=r"\d+ digits"):
            weyl_sums(s, 1, [50])

    def test_bare_point_needs_base(self):
        with pytest.raises(InputError, match="base"):
            weyl_sums(F(1, 3), 1, [10])

    def test_l_nonzero(self):
        with pytest.raises(InputError):
            weyl_sums(F(1, 3), 0, [10], base=2)

    def test_grid_validation(self):
        with pytest.raises(InputError):
            weyl_sums(F(1, 3), 1, [], base=2)
        with pytest.raises(InputError):
            weyl_sums(F(1, 3), 1, [0, 5], base=2)

    def test_average_stays_in_disk(self):
        with pytest.raises(InputError):
            WeylSeries(1, ((4, 2.0 + 0j),))

    def test_cantor_average_decays(self):
        ifs, p = cantor_system()
        word = sample_word(ifs, p, depth=digit_budget(2, F(1, 3), 4200), seed=21)
        s = extract_digits(
            word, 2, 4200,
            refine=lambda d: sample_word(ifs, p, depth=d, seed=21), ifs=ifs)
        w = weyl_sums(s, 1, [64, 4096])
        assert abs(w.final()) < 0.1


class TestStarDiscrepancy:
    def test_centered_grid_is_optimal(self):
        n = 10
        pts = [F(2 * i - 1, 2 * n) for i in range(1, n + 1)]
        assert star_discrepancy(pts) == F(1, 2 * n)

    def test_repeated_point_maximal(self):
        assert star_discrepancy([F(0)] * 7) == 1

    def test_golden_rotation_low_discrepancy(self):
        phi = (math.sqrt(5) - 1) / 2
        pts = [(n * phi) % 1 for n in range(1, 1001)]
        assert star_discrepancy(pts) <= 0.01

    def test_permutation_invariance_exact(self):
        xs = [F(1, 3), F(1, 7), F(2, 5), F(9, 11)]
        assert star_discrepancy(xs) == star_discrepancy(list(reversed(xs)))

    def test_out_of_range_rejected(self):
        with pytest.raises(InputError):
            star_discrepancy([0.5, 1.0])
        with pytest.raises(InputError):
            star_discrepancy([])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.fractions(min_value=0, max_value=F(49, 50),
                                 max_denominator=50),
                    min_size=1, max_size=20))
    def test_bounds(self, pts):
        d = star_discrepancy(pts)
        assert F(1, 2 * len(pts)) <= d <= 1


class TestKgram:
    def test_alternating_stream_balanced(self):
        s = DigitStream(2, tuple([0, 1] * 50))
        r = kgram_test(s, 1)
        assert r.statistic == 0
        assert r.passed
        assert r.counts == (50, 50)

    def test_cantor_negative_control(self):
        ifs, p = cantor_system()
        pt = sample_point(ifs, p, depth=350, seed=99)
        s = extract_digits(pt, 3, 300,
                           refine=lambda d: sample_point(ifs, p, depth=d, seed=99))
        r = kgram_test(s, 1)
        assert r.counts[1] == 0
        assert r.statistic > 100
        assert not r.passed

    def test_golden_point_passes(self):
        ifs, p = golden_bernoulli_system()
        k, j = unit_embedding(ifs, 2)
        word = sample_word(ifs, p, depth=digit_budget(2, ifs.ratio, 4096),
                           seed=1000)
        s = extract_digits(
            word, 2, 4096,
            refine=lambda d: sample_word(ifs, p, depth=d, seed=1000),
            ifs=ifs, embedding=(k, j))
        assert not s.boundary
        for kk in (1, 2, 3):
            assert kgram_test(s, kk).passed
        assert monobit_test(s).passed

    def test_underpowered_is_loud(self):
        s = DigitStream(2, (0, 1) * 10)
        with pytest.raises(InputError, match="underpowered"):
            kgram_test(s, 3)

    def test_report_shape(self):
        s = DigitStream(2, (0, 1) * 50)
        d = kgram_test(s, 1).as_dict()
        assert d["pass"] is True
        assert d["dof"] == 1

    def test_monobit_base(self):
        with pytest.raises(InputError):
            monobit_test(DigitStream(3, (0, 1, 2) * 40))


class TestRotationOrbit:
    def test_integer_theta_is_periodic(self):
        orb = rotation_orbit(9, F(1, 3), 10)
        assert orb.periodic and orb.period == 1
        assert orb.fracs[0].lo == orb.fracs[0].hi == 0
        assert orb.nprimes == (2,)

    def test_half_theta_period_two(self):
        orb = rotation_orbit(3, F(1, 9), 10)
        assert orb.periodic and orb.period == 2
        assert [f.lo for f in orb.fracs] == [F(1, 2), F(0)]
        assert orb.nprimes == (0, 1)

    def test_frozen_floor_sequence(self):
        orb = rotation_orbit(2, F(1, 3), 10)
        assert not orb.periodic
        assert orb.nprimes == (0, 1, 1, 2, 3, 3, 4, 5, 5, 6)

    def test_matches_blowup_factors(self):
        orb = rotation_orbit(2, F(1, 3), 12)
        for n in range(1, 13):
            assert orb.nprimes[n - 1] == blowup_factor(2, F(1, 3), n)[0]

    def test_irrational_orbit_equidistributes(self):
        orb = rotation_orbit(2, F(1, 3), 10 ** 4)
        assert orb.discrepancy < 0.01

    def test_difference_is_theta_mod_one(self):
        orb = rotation_orbit(2, F(1, 3), 50)
        theta = float(orb.theta.mid)
        for a, b in zip(orb.fracs, orb.fracs[1:]):
            d = (float(b.mid) - float(a.mid)) % 1
            assert min(abs(d - theta), abs(d - theta + 1), abs(d - theta - 1)) < 1e-9

    def test_input_validation(self):
        with pytest.raises(InputError):
            rotation_orbit(2, F(3, 2), 5)
        with pytest.raises(InputError):
            rotation_orbit(2, F(1, 3), 0)


class TestPartitionCell:
    def test_empty_cell_at_m_zero(self):
        ifs, p = cantor_system()
        pt = sample_point(ifs, p, depth=10, seed=5)
        assert partition_cell(pt, 0, F(1, 2)) == ()

    def test_depth_six_at_m_ten(self):
        ifs, p = cantor_system()
        pt = sample_point(ifs, p, depth=20, seed=5)
        theta = rotation_orbit(2, F(1, 3), 2).theta
        cell = partition_cell(pt, 10, theta)
        assert len(cell) == 6
        assert cell == tuple(pt.word[:6])

    def test_nesting(self):
        ifs, p = cantor_system()
        pt = sample_point(ifs, p, depth=30, seed=5)
        theta = rotation_orbit(2, F(1, 3), 2).theta
        prev = ()
        for m in range(0, 20):
            cell = partition_cell(pt, m, theta)
            assert cell[:len(prev)] == prev
            prev = cell

    def test_cell_width_is_exact(self):
        ifs, p = cantor_system()
        pt = sample_point(ifs, p, depth=20, seed=5)
        cell = partition_cell(pt, 10, rotation_orbit(2, F(1, 3), 2).theta)
        lo, hi = cylinder_interval(ifs, cell)
        assert (hi - lo) == ExactNumber(F(1, 3)) ** len(cell)

    def test_insufficient_depth_is_loud(self):
        ifs, p = cantor_system()
        pt = sample_point(ifs, p, depth=3, seed=5)
        with pytest.raises(InputError, match="deeper"):
            partition_cell(pt, 100, F(63, 100))

    def test_wide_theta_enclosure_rejected(self):
        ifs, p = cantor_system()
        pt = sample_point(ifs, p, depth=30, seed=5)
        with pytest.raises(InputError, match="too wide"):
            partition_cell(pt, 10, Enclosure(F(1, 2), F(2, 3)))


class TestWeylFourierBridge:
    def test_ensemble_mean_matches_transform(self):
        # the sampled mean of e(l b^n x) is a Monte Carlo estimate of the
        # transform at frequency l b^n
        ifs, p = cantor_system()
        xi = 8  # l = 1, b = 2, n = 3
        fv = fourier_product(ifs, p, xi, 1e-9)
        vals = sample_values(ifs, p, 10 ** 4, depth=40, seed=77)
        phases = np.exp(2j * np.pi * xi * vals)
        emp = phases.mean()
        se = max(phases.real.std(ddof=1), phases.imag.std(ddof=1)) / 100
        assert abs(emp - fv.value) <= 4 * se + float(fv.tail_bound)
