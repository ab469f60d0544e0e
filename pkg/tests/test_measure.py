import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cifs_lab.cifs import SystemConfig, Word, distortion_audit
from cifs_lab.errors import DomainError, FitError
from cifs_lab.geometry import Disk, TauParam
from cifs_lab.lattice import LatticeIndex, enumerate_indices, smallest_indices
from cifs_lab.measure import (
    ball_mass,
    build_measure,
    claim_star_scan,
    classify_case,
    default_b_sample,
    index_set_case1,
    index_set_case3,
    packing_constants,
    refinement_ratios,
    scaling_exponent_fit,
    typical_centers,
)
from cifs_lab.pressure import bowen_root

TAU_I = TauParam(0, 1)


def tree_mass(measure, ball, prefix=(), tol=1e-12):
    """Plain recursive walk of the cylinder tree with per-word records."""
    lo = hi = 0.0
    for idx in measure.indices:
        w = Word(measure.tau, prefix + (idx,))
        e = measure.entry(w)
        d = abs(e.image.center - ball.center)
        if d + e.image.radius <= ball.radius + tol:
            lo += e.weight_low
            hi += e.weight_high
        elif d <= ball.radius + e.image.radius + tol:
            if len(w) < measure.level:
                k_lo, k_hi = tree_mass(measure, ball, w.letters, tol)
                lo += min(k_lo, e.weight_high)
                hi += min(k_hi, e.weight_high)
            else:
                hi += e.weight_high
    return lo, hi


@pytest.fixture(scope="module")
def small3():
    idx = enumerate_indices(TAU_I, 4)
    return build_measure(TAU_I, 1.3, idx, level=3)


@pytest.fixture(scope="module")
def mid2():
    idx = smallest_indices(TAU_I, 300)
    h = bowen_root(TAU_I, idx, word_length=2).h
    return build_measure(TAU_I, h, idx, level=2)


balls = st.builds(
    lambda c, r: Disk(c, r),
    st.complex_numbers(max_magnitude=0.6).map(lambda z: 0.5 + z),
    st.floats(1e-3, 0.4),
)


class TestWeights:
    def test_levels_sum_to_one(self, small3):
        for depth in (1, 2, 3):
            assert math.fsum(small3.leaves(depth)["mid"].tolist()) == pytest.approx(1, abs=1e-12)

    def test_mid_oracle(self):
        idx = enumerate_indices(TAU_I, math.sqrt(8))
        mu = build_measure(TAU_I, 1.5, idx)
        e = mu.entry(Word(TAU_I, [(1, 1)]))
        z = math.fsum(abs(b) ** -3 for b in idx.values)
        assert e.weight_mid == pytest.approx(abs(1 + 1j) ** -3 / z, rel=1e-14)
        assert e.weight_mid == pytest.approx(0.61313, abs=5e-6)
        assert e.weight_high == pytest.approx(oracles.generator_sup(1 + 1j) ** 1.5 / z, rel=1e-13)

    def test_ordering_and_distortion(self, small3):
        k = distortion_audit(SystemConfig(TAU_I, 4), word_length=3).k_hat
        for depth in (1, 2, 3):
            lv = small3.leaves(depth)
            assert np.all(lv["low"] > 0)
            assert np.all(lv["low"] <= lv["mid"]) and np.all(lv["mid"] <= lv["high"])
            assert np.all(lv["high"] / lv["low"] <= k ** (2 * small3.h) * (1 + 1e-12))

    def test_entries_match_records(self, small3):
        ents = small3.entries()
        assert len(ents) == len(small3.indices) ** 3
        for e in ents[::37]:
            direct = small3.entry(e.word)
            assert e.weight_mid == pytest.approx(direct.weight_mid, rel=1e-12)
            assert e.image.center == pytest.approx(direct.image.center, rel=1e-12)

    def test_entry_too_deep(self, small3):
        with pytest.raises(DomainError):
            small3.entry(Word(TAU_I, [(1, 1)] * 4))

    def test_h_range(self):
        with pytest.raises(DomainError):
            build_measure(TAU_I, 2.0, 5)

    def test_refinement_ratios(self, mid2):
        k = distortion_audit(SystemConfig(TAU_I, mid2.indices.bound), word_length=1).k_hat
        r = refinement_ratios(mid2)
        assert len(r) == len(mid2.indices)
        lim = k ** (2 * mid2.h)
        assert np.all(r >= 1 / lim) and np.all(r <= lim)


class TestBallMass:
    def test_whole_and_empty(self, small3):
        assert ball_mass(small3, Disk(0.5, 0.6)).lower == 1
        assert ball_mass(small3, Disk(5, 0.1)).upper == 0

    @settings(max_examples=40)
    @given(balls)
    def test_matches_plain_tree(self, small3, ball):
        est = ball_mass(small3, ball)
        lo, hi = tree_mass(small3, ball)
        assert est.lower == pytest.approx(min(lo, 1), abs=1e-13)
        assert est.upper == pytest.approx(min(hi, 1), abs=1e-13)
        assert est.lower <= est.upper

    @settings(max_examples=40)
    @given(balls)
    def test_preimage_equals_direct(self, small3, ball):
        a = ball_mass(small3, ball)
        b = ball_mass(small3, ball, direct=True)
        assert a.lower == pytest.approx(b.lower, abs=1e-13)
        assert a.upper == pytest.approx(b.upper, abs=1e-13)
        assert a.contained_words == b.contained_words

    def test_ball_through_origin(self, small3):
        # the inverted circle degenerates to a line; the direct path is used
        ball = Disk(0.1, 0.1)
        assert ball_mass(small3, ball).lower == pytest.approx(tree_mass(small3, ball)[0], abs=1e-13)

    def test_lower_monotone_in_level(self):
        idx = smallest_indices(TAU_I, 60)
        mus = [build_measure(TAU_I, 1.4, idx, level=k) for k in (1, 2, 3)]
        rng = np.random.default_rng(5)
        for _ in range(50):
            ball = Disk(0.5 + 0.45 * complex(*rng.uniform(-1, 1, 2)), float(10 ** rng.uniform(-2.5, -0.5)))
            est = [ball_mass(m, ball) for m in mus]
            assert est[0].lower <= est[1].lower + 1e-15 <= est[2].lower + 2e-15
            assert est[0].upper + 1e-15 >= est[1].upper >= est[2].upper - 1e-15


class TestConstants:
    def test_frozen_tau_i(self):
        pc = packing_constants(TAU_I, 3.124381051569329, 1.6055571250617504, 2.999999997, 2.0)
        assert pc.q_prime == 1 / 32
        assert pc.c_prime == 34
        assert pc.r0 == 1 / 8 and pc.xi == 1 / 64 and pc.gamma == pc.k
        assert pc.r_big0 == 34
        assert pc.l_prime == pytest.approx(1 / 35**2)
        assert pc.l == pytest.approx(4.650819559555285e-06, rel=1e-12)

    def test_formula_other_tau(self):
        tau = TauParam(1, 1)
        k, h, q, c = 2.5, 1.5, 0.4, 20.0
        pc = packing_constants(tau, k, h, q, c)
        lam2 = (3 + math.sqrt(5)) / 2
        n_tau = math.sqrt(2 * lam2 / (1 / lam2)) + 1
        assert pc.q_prime == pytest.approx(1 / (32 * lam2))
        assert pc.c_prime == pytest.approx(34 * math.sqrt(lam2))
        assert pc.r0 == pytest.approx(k / c)
        lp = min(pc.q_prime / 4, (pc.c_prime + 1) ** -2)
        want = min(lp * (8 * k) ** -h, q * k ** (2 - 3 * h) * n_tau ** (-2 * h) * 2 ** (2 - 2 * h))
        assert pc.l == pytest.approx(want, rel=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(DomainError):
            packing_constants(TAU_I, 0.5, 1.5, 1, 1)


class TestIndexSets:
    @settings(max_examples=30)
    @given(st.integers(1, 30), st.integers(1, 30), st.floats(0.02, 0.45))
    def test_case1_routes_agree(self, m, n, frac):
        b = complex(m, n)
        x = 1 / b
        sets = index_set_case1(TAU_I, x, frac * abs(x))
        assert sets.agree

    def test_case1_contains_b(self):
        b = 7 + 3j
        x = 1 / b
        diam = 1 / (abs(b + 0.5) ** 2 - 0.25)
        sets = index_set_case1(TAU_I, x, 4 * diam)
        assert LatticeIndex(7, 3) in sets.by_images
        assert set(sets.near) <= set(sets.by_images)

    def test_case1_requires_small_r(self):
        with pytest.raises(DomainError):
            index_set_case1(TAU_I, 0.1, 0.2)

    def test_case3_annulus(self, audit_tau):
        s = index_set_case3(audit_tau, 0.01, 3.0)
        mods = np.abs(s.values)
        assert np.all(mods > s.inner * (1 - 1e-12)) and np.all(mods <= s.outer * (1 + 1e-12))
        want = oracles.annulus_count(audit_tau.u, audit_tau.v, s.inner, s.outer)
        assert len(s.indices) == want

    def test_classify(self):
        assert classify_case(1.0, 0.5) == 1
        assert classify_case(1.0, 0.6) == 2
        assert classify_case(1.0, 2.0) == 2
        assert classify_case(1.0, 2.1) == 3


class TestScan:
    def test_default_sample(self):
        idx = smallest_indices(TAU_I, 100)
        s = default_b_sample(idx, 5, 5, seed=1)
        assert s[:5] == [idx[i] for i in range(5)]
        assert len(set(s)) == 10
        assert s == default_b_sample(idx, 5, 5, seed=1)

    def test_small_scan_positive(self, mid2):
        pc = packing_constants(TAU_I, 3.124381051569329, mid2.h, 3.0, 2.0)
        res = claim_star_scan(TAU_I, mid2, pc, r_per_b=6)
        assert res.rows
        assert all(row["ratio"] > 0 for row in res.rows)
        assert all(row["lower"] <= row["upper"] for row in res.rows)
        for rep in res.cases:
            sel = [row["ratio"] for row in res.rows if row["case"] == rep.case_id]
            assert rep.scanned == len(sel)
            if sel:
                assert rep.min_ratio == min(sel)
        # b too small for gamma * diam <= xi are reported, not scanned
        assert LatticeIndex(1, 1) in res.skipped

    def test_empty_sample(self, mid2):
        pc = packing_constants(TAU_I, 3.0, mid2.h, 3.0, 2.0)
        with pytest.raises(DomainError):
            claim_star_scan(TAU_I, mid2, pc, b_sample=[])


class TestScalingFit:
    def test_centers_resolved(self, mid2):
        cs = typical_centers(mid2, 10, 1e-3, seed=3)
        assert len(cs) == 10
        assert all(abs(c - 0.5) <= 0.5 for c in cs)
        assert cs == typical_centers(mid2, 10, 1e-3, seed=3)

    def test_unresolvable(self, mid2):
        with pytest.raises(FitError):
            typical_centers(mid2, 5, 1e-12, max_draws=2000)

    def test_grid_rules(self, mid2):
        with pytest.raises(FitError):
            scaling_exponent_fit(mid2, [0.5], [0.01, 0.02, 0.05])
        with pytest.raises(FitError):
            scaling_exponent_fit(mid2, [], np.geomspace(1e-3, 1e-1, 5))

    def test_zero_mass_raises(self, mid2):
        with pytest.raises(FitError):
            scaling_exponent_fit(mid2, [0.5 + 0.499j], np.geomspace(1e-6, 1e-4, 3))

    def test_exponent_near_h(self, mid2):
        cs = typical_centers(mid2, 12, 1e-3, seed=0)
        fit = scaling_exponent_fit(mid2, cs, np.geomspace(1e-3, 1e-1, 7))
        assert abs(fit.exponent - mid2.h) < 0.3
        assert len(fit.slopes) == 12
