import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from cifs_lab.cifs import (
    MoebiusMap,
    SystemConfig,
    Word,
    all_words,
    coding_point,
    compose,
    contraction_hat,
    derivative_range,
    distortion_audit,
    generator,
    image_disk,
    nested_eval,
    osc_audit,
    sample_limit_set,
    unravel_word,
    word_blocks,
    words_from_letters,
)
from cifs_lab.errors import DomainError, ResourceError
from cifs_lab.geometry import Disk, TauParam
from cifs_lab.lattice import LatticeIndex, enumerate_indices

taus = st.builds(TauParam, st.floats(0, 3), st.floats(1, 3))
letters = st.tuples(st.integers(1, 6), st.integers(1, 6))
words = st.lists(letters, min_size=1, max_size=5)


class TestMoebius:
    def test_det_tracked(self):
        mp = MoebiusMap(1, 2, 3, 4)
        assert mp.det == pytest.approx((1 * 4 - 2 * 3) / 16)
        assert mp(1) == pytest.approx(3 / 7)

    def test_singular_rejected(self):
        with pytest.raises(DomainError):
            MoebiusMap(1, 2, 2, 4)

    def test_scaling_leaves_map_unchanged(self):
        mp = MoebiusMap(1, 2j, 3, 4)
        sc = mp.scaled(1e5 - 3j)
        for z in (0.1, 0.3 + 0.2j):
            assert sc(z) == pytest.approx(mp(z))
            assert sc.derivative(z) == pytest.approx(mp.derivative(z))

    def test_then_is_composition(self):
        f, g = MoebiusMap(1, 2, 0.5, 3), MoebiusMap(0, 1, 1, 2 + 1j)
        z = 0.2 + 0.1j
        assert f.then(g)(z) == pytest.approx(f(g(z)))

    def test_pole(self):
        assert generator(TauParam(0, 1), LatticeIndex(1, 1)).pole == pytest.approx(-1 - 1j)
        assert math.isinf(MoebiusMap(1, 0, 0, 1).pole.real)


class TestWords:
    def test_empty_word_rejected(self):
        with pytest.raises(DomainError):
            Word(TauParam(0, 1), ())

    def test_bad_letter_rejected(self):
        with pytest.raises(DomainError):
            Word(TauParam(0, 1), ((0, 1),))

    @given(taus, words, st.complex_numbers(max_magnitude=0.5))
    def test_compose_matches_nested(self, tau, ls, z):
        z = 0.5 + z
        w = Word(tau, ls)
        assert compose(w)(z) == pytest.approx(oracles.nested(w.values(), z), rel=1e-12)
        assert nested_eval(w.values(), z) == pytest.approx(oracles.nested(w.values(), z), rel=1e-12)

    @given(taus, words)
    def test_derivative_range_matches_sampling(self, tau, ls):
        w = Word(tau, ls)
        lo, hi = derivative_range(compose(w))
        slo, shi = oracles.sampled_derivative_range(w.values(), n=2000)
        assert lo <= slo * (1 + 1e-12) and shi <= hi * (1 + 1e-12)
        assert slo == pytest.approx(lo, rel=1e-4) and shi == pytest.approx(hi, rel=1e-4)

    @given(taus, words)
    def test_image_disk_matches_mapped_boundary(self, tau, ls):
        w = Word(tau, ls)
        d = image_disk(compose(w))
        pts = [oracles.nested(w.values(), 0.5 + 0.5 * cmath.exp(2j * math.pi * k / 64)) for k in range(64)]
        # nested evaluation carries absolute rounding of order eps * |point|
        err = max(abs(abs(p - d.center) - d.radius) for p in pts)
        assert err <= 1e-9 * d.radius + 1e-14
        assert abs(oracles.nested(w.values(), 0.5) - d.center) < d.radius

    def test_long_word_derivative_does_not_underflow_or_cancel(self):
        tau = TauParam(0, 1)
        w = Word(tau, [(1, 1)] * 40)
        hi = derivative_range(compose(w))[1]
        assert hi == pytest.approx(oracles.word_derivative(w.values(), 0.5), rel=0.5)
        assert 0 < hi < 1e-10

    def test_generator_sup_closed_form(self, audit_tau):
        for idx in enumerate_indices(audit_tau, 12):
            b = idx.value(audit_tau)
            lo, hi = derivative_range(generator(audit_tau, idx))
            assert hi == pytest.approx(oracles.generator_sup(b), rel=1e-13)
            assert lo == pytest.approx(oracles.generator_inf(b), rel=1e-13)

    def test_coding_point_converges_to_fixed_point(self):
        tau = TauParam(0, 1)
        w = Word(tau, [(1, 1)] * 30)
        cp = coding_point(w)
        fp = oracles.fixed_point(1 + 1j)
        assert abs(cp.point - fp) <= cp.error
        assert abs(fp - (0.5290855136357462 - 0.2570658641216772j)) < 1e-14
        assert abs(cp.disk.center - fp) <= cp.disk.radius


class TestVectorised:
    def test_blocks_are_lexicographic(self):
        vals = enumerate_indices(TauParam(0, 1), 4).values
        n = len(vals)
        blocks = list(word_blocks(vals, 3, block=7))
        assert len(blocks) > 1
        flat = 0
        for bk in blocks:
            assert bk.start == flat
            for j in range(len(bk)):
                ls = [vals[i] for i in unravel_word(flat, n, 3)]
                assert bk.at_zero()[j] == pytest.approx(oracles.nested(ls, 0), rel=1e-12)
                flat += 1
        assert flat == n**3

    def test_words_from_letters_matches_all_words(self):
        vals = enumerate_indices(TauParam(0.5, 1.5), 5).values
        n = len(vals)
        full = all_words(vals, 2)
        letters = np.array([unravel_word(k, n, 2) for k in range(n * n)])
        part = words_from_letters(vals, letters)
        np.testing.assert_allclose(part.at_zero(), full.at_zero(), rtol=1e-13)
        np.testing.assert_allclose(part.derivative_range()[1], full.derivative_range()[1], rtol=1e-13)

    def test_image_disks_vectorised(self):
        tau = TauParam(1, 1)
        idx = enumerate_indices(tau, 6)
        ws = all_words(idx.values, 2)
        centers, radii = ws.image_disks()
        for k in (0, 3, len(ws) - 1):
            w = Word(tau, [idx[i] for i in unravel_word(k, len(idx), 2)])
            d = image_disk(compose(w))
            assert centers[k] == pytest.approx(d.center, rel=1e-12)
            assert radii[k] == pytest.approx(d.radius, rel=1e-12)

    def test_cap_enforced(self):
        vals = enumerate_indices(TauParam(0, 1), 10).values
        with pytest.raises(ResourceError):
            all_words(vals, 3, cap=100)


class TestConfig:
    def test_requires_truncation(self):
        with pytest.raises(DomainError):
            SystemConfig(TauParam(0, 1))

    def test_domain_x_fixed(self):
        with pytest.raises(DomainError):
            SystemConfig(TauParam(0, 1), 5, domain_x=Disk(0.5, 0.4))

    def test_domain_v_must_contain_x(self):
        with pytest.raises(DomainError):
            SystemConfig(TauParam(0, 1), 5, domain_v=Disk(0.5, 0.5))

    def test_count_truncation(self):
        cfg = SystemConfig(TauParam(0, 1), truncation_count=3)
        assert len(cfg.indices) == 3
        assert cfg.truncation_bound == pytest.approx(math.sqrt(5))

    def test_limit_sample_inside_x(self):
        cfg = SystemConfig(TauParam(0, 1), 6, max_word_length=2)
        pts = sample_limit_set(cfg)
        assert len(pts) == len(cfg.indices) ** 2
        assert np.all(np.abs(pts - 0.5) <= 0.5)


class TestAudits:
    def test_osc_radius_20(self, audit_tau):
        cfg = SystemConfig(audit_tau, 20)
        assert osc_audit(cfg) == []

    def test_osc_detects_overlap(self):
        # a non-lattice translate reuses an image disk
        cfg = SystemConfig(TauParam(0, 1), 3)
        cfg.indices.values[1] = cfg.indices.values[0]
        assert osc_audit(cfg)

    def test_contraction_below_one(self, audit_tau):
        idx = enumerate_indices(audit_tau, 20)
        assert contraction_hat(idx) < 1

    def test_distortion_tau_i_generators(self):
        rep = distortion_audit(SystemConfig(TauParam(0, 1), 20), word_length=1)
        assert rep.k_hat == pytest.approx(3.12438105156933, rel=1e-12)
        assert rep.k_hat == pytest.approx(oracles.generator_distortion(1 + 1j), rel=1e-12)
        assert rep.worst_word == (LatticeIndex(1, 1),)
        assert rep.contraction_hat == pytest.approx(0.5891972930813328, rel=1e-12)

    def test_distortion_tau_i_length_two(self):
        tau = TauParam(0, 1)
        rep = distortion_audit(SystemConfig(tau, 20), word_length=2)
        assert rep.worst_word == (LatticeIndex(1, 4), LatticeIndex(1, 1))
        lo, hi = oracles.sampled_derivative_range([1 + 4j, 1 + 1j], n=20000)
        assert rep.k_hat == pytest.approx(hi / lo, rel=1e-6)
        assert rep.k_hat == pytest.approx(3.272014855490399, rel=1e-12)

    def test_k_hat_nondecreasing_in_word_length(self):
        cfg = SystemConfig(TauParam(0.5, 1.5), 8)
        ks = [distortion_audit(cfg, word_length=L, samples=20_000).k_hat for L in (1, 2, 3)]
        assert ks == sorted(ks) and ks[0] >= 1

    def test_distortion_is_extremal_over_x(self):
        # sample pairs of points of X; the ratio never exceeds the audit value
        tau = TauParam(0, 1)
        rep = distortion_audit(SystemConfig(tau, 20))
        rng = np.random.default_rng(1)
        z = 0.5 + 0.5 * np.sqrt(rng.random(20000)) * np.exp(2j * np.pi * rng.random(20000))
        for idx in enumerate_indices(tau, 5):
            d = 1 / np.abs(z + idx.value(tau)) ** 2
            assert d.max() / d.min() <= rep.k_hat * (1 + 1e-12)

    def test_generator_derivative_comparable_to_inverse_square(self, audit_tau):
        k = distortion_audit(SystemConfig(audit_tau, 20), word_length=1).k_hat
        rng = np.random.default_rng(2)
        z = 0.5 + 0.5 * np.sqrt(rng.random(2000)) * np.exp(2j * np.pi * rng.random(2000))
        for idx in enumerate_indices(audit_tau, 20):
            b = idx.value(audit_tau)
            d = 1 / np.abs(z + b) ** 2
            assert np.all(d * abs(b) ** 2 <= k) and np.all(d * abs(b) ** 2 >= 1 / k)
