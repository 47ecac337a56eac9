import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import assume, given, settings, strategies as st

from cdrfeat.coherence import (CoherenceConfig, CoherenceState, DiffusenessEstimator,
                               cdr_to_diffuseness, diffuse_coherence_model, estimate_cdr,
                               mixed_coherence_forward, update)

CFG = CoherenceConfig()


def _frame(x1, x2):
    return np.vstack([np.atleast_1d(x1), np.atleast_1d(x2)]).astype(complex)


def test_defaults():
    assert CFG.forgetting_factor == 0.68
    assert CFG.mic_spacing_m == 0.08
    assert CFG.sound_speed_mps == 343.0
    assert CFG.cdr_max == 1e4


@pytest.mark.parametrize("kw", [{"forgetting_factor": 1.0}, {"forgetting_factor": -0.1},
                                {"mic_spacing_m": 0.0}, {"sound_speed_mps": -1.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        CoherenceConfig(**kw)


class TestUpdate:
    def test_identical_channels_first_frame(self):
        x = np.array([1 + 2j, -0.5j, 3.0, 0.0])
        st_ = CoherenceState.zeros(4)
        g = update(st_, _frame(x, x))
        np.testing.assert_allclose(g[:3], 1.0, atol=1e-15)
        assert g[3] == 0  # silent bin reads as no coherent evidence

    def test_sign_flip(self):
        rng = np.random.default_rng(0)
        st_ = CoherenceState.zeros(16)
        for _ in range(5):
            x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
            g = update(st_, _frame(x, -x))
        np.testing.assert_allclose(g, -1.0, atol=1e-12)

    def test_two_step_unroll(self):
        x1 = np.array([1 + 1j, 2.0, -1j])
        x2 = np.array([0.5j, 1 - 1j, 3.0])
        st_ = CoherenceState.zeros(3)
        update(st_, _frame(x1, x2))
        update(st_, _frame(x1, x2))
        # hand-unrolled: phi(1) = 0.32 p, phi(2) = 0.68 * 0.32 p + 0.32 p
        for got, p in [(st_.phi11, abs(x1) ** 2), (st_.phi22, abs(x2) ** 2), (st_.phi12, x1 * np.conj(x2))]:
            np.testing.assert_allclose(got, 0.68 * (0.32 * p) + 0.32 * p, rtol=1e-15)
        assert st_.frames_seen == 2

    def test_fixed_point_residual(self):
        x = np.array([1.5 - 0.5j, 2j])
        st_ = CoherenceState.zeros(2)
        for n in range(1, 30):
            update(st_, _frame(x, x))
            np.testing.assert_allclose(abs(x) ** 2 - st_.phi11, 0.68 ** n * abs(x) ** 2,
                                       rtol=1e-9, atol=1e-15)

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(ValueError, match="2 channels"):
            update(CoherenceState.zeros(4), np.zeros((3, 4), complex))
        with pytest.raises(ValueError, match="bin count"):
            update(CoherenceState.zeros(4), np.zeros((2, 5), complex))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.99))
    def test_state_invariants(self, seed, lam):
        rng = np.random.default_rng(seed)
        cfg = CoherenceConfig(forgetting_factor=lam)
        st_ = CoherenceState.zeros(32)
        for _ in range(20):
            scale = 10.0 ** rng.uniform(-4, 4)
            x = scale * (rng.standard_normal((2, 32)) + 1j * rng.standard_normal((2, 32)))
            g = update(st_, x, cfg)
            assert np.all(st_.phi11 >= 0) and np.all(st_.phi22 >= 0)
            assert np.all(np.abs(st_.phi12) ** 2 <= st_.phi11 * st_.phi22 * (1 + 1e-12) + 1e-12)
            assert np.all(np.abs(g) <= 1.0)


class TestDiffuseModel:
    def test_dc_is_one(self):
        assert diffuse_coherence_model([0.0])[0] == 1.0

    def test_first_zero(self):
        f = CFG.sound_speed_mps / (2 * CFG.mic_spacing_m)
        assert f == 2143.75
        assert diffuse_coherence_model([f])[0] == pytest.approx(0.0, abs=1e-15)

    def test_against_high_precision(self):
        mpmath.mp.dps = 40
        for f in (125.0, 1000.0, 3000.0, 7999.0):
            arg = 2 * mpmath.pi * f * mpmath.mpf("0.08") / 343
            ref = float(mpmath.sin(arg) / arg)
            assert diffuse_coherence_model([f])[0] == pytest.approx(ref, abs=1e-15)
        assert diffuse_coherence_model([1000.0])[0] == pytest.approx(0.678, abs=1e-3)

    def test_range(self):
        g = diffuse_coherence_model(np.linspace(0, 100000, 20001))
        assert g.max() == 1.0 and g.min() >= -0.21724 - 1e-9

    def test_negative_frequency_rejected(self):
        with pytest.raises(ValueError):
            diffuse_coherence_model([-1.0])


class TestForwardModel:
    def test_zero_snr(self):
        assert mixed_coherence_forward(0.0, np.exp(0.3j), 0.4) == pytest.approx(0.4)

    def test_large_snr(self):
        gs = np.exp(1.1j)
        assert abs(mixed_coherence_forward(1e12, gs, 0.4) - gs) < 1e-10

    def test_equal_mixture(self):
        assert mixed_coherence_forward(1.0, 1.0, 0.0) == pytest.approx(0.5)

    def test_rejects_non_unit_direct_coherence(self):
        with pytest.raises(ValueError):
            mixed_coherence_forward(1.0, 0.9, 0.0)


class TestEstimator:
    def test_numerator_vanishes_symbolically_for_pure_diffuse(self):
        # independent check of the closed form: gamma_x = gamma_n (real) -> numerator == 0
        gn = sympy.symbols("g", real=True)
        re, mag2 = gn, gn ** 2
        root = sympy.sqrt(gn**2 * re**2 - gn**2 * mag2 + gn**2 - 2 * gn * re + mag2)
        assert sympy.simplify(gn * re - mag2 - root) == 0

    def test_root_argument_regrouping_is_exact(self):
        gn, re, im = sympy.symbols("g r i", real=True)
        mag2 = re**2 + im**2
        expanded = gn**2 * re**2 - gn**2 * mag2 + gn**2 - 2 * gn * re + mag2
        regrouped = (gn - re) ** 2 + im**2 * (1 - gn**2)
        assert sympy.expand(expanded - regrouped) == 0

    @pytest.mark.parametrize("gn", [-0.2, 0.0, 0.3, 0.9])
    def test_pure_diffuse_is_zero(self, gn):
        assert estimate_cdr(np.array([gn + 0j]), np.array([gn]))[0] == pytest.approx(0.0, abs=1e-12)

    def test_pure_plane_wave_saturates(self):
        cdr = estimate_cdr(np.exp(1j * np.linspace(0, 6, 7)), np.full(7, 0.3))
        np.testing.assert_array_equal(cdr, CFG.cdr_max)

    def test_forward_roundtrip_example(self):
        gx = mixed_coherence_forward(1.0, np.exp(1j * np.pi / 4), 0.5)
        assert gx == pytest.approx(0.60355339 + 0.35355339j, abs=1e-8)
        assert estimate_cdr(gx, 0.5) == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.0, 1e3), st.floats(0.0, 2 * np.pi, exclude_max=True), st.floats(-0.217, 0.999))
    def test_inversion(self, snr, theta, gn):
        gx = mixed_coherence_forward(snr, np.exp(1j * theta), gn)
        assume(abs(gx) < 1 - CFG.gamma_clip_eps)
        assert abs(estimate_cdr(gx, gn) - snr) <= max(1e-6, 1e-6 * snr)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, 100.0), st.floats(-0.2, 0.95))
    def test_doa_blindness(self, snr, gn):
        theta = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        est = estimate_cdr(mixed_coherence_forward(snr, np.exp(1j * theta), gn), np.full(64, gn))
        assert np.ptp(est) <= 1e-9 * max(1.0, snr)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.0, 2 * np.pi), st.floats(-0.2, 0.95))
    def test_monotone_in_snr(self, theta, gn):
        snr = np.concatenate([[0.0], np.logspace(-3, 3, 200)])
        est = estimate_cdr(mixed_coherence_forward(snr, np.exp(1j * theta), gn), np.full(snr.shape, gn))
        assert np.all(np.diff(est) >= -1e-9 * np.maximum(1.0, est[1:]))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 2 * np.pi), st.floats(-1.0, 1.0))
    def test_output_range_adversarial(self, mag, phase, gn):
        cdr = estimate_cdr(np.array([mag * np.exp(1j * phase)]), np.array([gn]))
        assert np.all(np.isfinite(cdr)) and 0.0 <= cdr[0] <= CFG.cdr_max
        d = cdr_to_diffuseness(cdr)
        assert 0.0 < d[0] <= 1.0


@pytest.mark.parametrize("cdr, d", [(0.0, 1.0), (1.0, 0.5), (3.0, 0.25)])
def test_cdr_to_diffuseness(cdr, d):
    assert cdr_to_diffuseness(cdr) == d


def test_estimator_chain_frame_fields():
    freqs = np.arange(257) * 31.25
    est = DiffusenessEstimator(freqs)
    rng = np.random.default_rng(0)
    out = est.process(rng.standard_normal((2, 257)) + 1j * rng.standard_normal((2, 257)))
    assert out.cdr.shape == out.diffuseness.shape == out.coherence.shape == (257,)
    np.testing.assert_allclose(out.diffuseness, 1.0 / (out.cdr + 1.0), atol=1e-12)
    assert np.all(np.abs(out.coherence) <= 1.0)
