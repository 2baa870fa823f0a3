import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fieldstop import states

PI = math.pi


def brute_force_mixture(weighted_phases):
    # explicit 2x2 density-operator sum in the {HH, VV} basis
    rho = np.zeros((2, 2), dtype=complex)
    total = 0.0
    for w, phi in weighted_phases:
        ket = np.array([1.0, cmath.exp(1j * phi)]) / math.sqrt(2.0)
        rho += w * np.outer(ket, ket.conj())
        total += w
    rho /= total
    return rho


class TestPureStateFidelity:
    def test_identities(self):
        assert states.pure_state_fidelity(PI, "phi_minus") == pytest.approx(1.0)
        assert states.pure_state_fidelity(0.0, "phi_minus") == pytest.approx(0.0)
        assert states.pure_state_fidelity(PI / 2, "phi_minus") == pytest.approx(0.5)
        assert states.pure_state_fidelity(0.0, "phi_plus") == pytest.approx(1.0)

    @given(st.floats(-20, 20))
    def test_targets_sum_to_one(self, dphi):
        total = states.pure_state_fidelity(dphi, "phi_minus") + states.pure_state_fidelity(
            dphi, "phi_plus"
        )
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_unknown_target(self):
        with pytest.raises(ValueError, match="target"):
            states.pure_state_fidelity(PI, "psi_minus")


class TestTwoPhotonState:
    def test_positivity_enforced(self):
        with pytest.raises(ValueError, match="positivity"):
            states.TwoPhotonState(0.5, 0.5, 0.6 + 0j)
        with pytest.raises(ValueError, match="sum to 1"):
            states.TwoPhotonState(0.6, 0.6, 0.0j)

    @given(
        st.lists(
            st.tuples(st.floats(0.01, 5.0), st.floats(-10.0, 10.0)),
            min_size=1,
            max_size=40,
        )
    )
    def test_mixtures_always_physical(self, pairs):
        state = states.mix_over_phases(pairs)
        assert abs(state.coherence) <= math.sqrt(state.p_hh * state.p_vv) + 1e-12


class TestMixOverPhases:
    def test_single_phase_pi(self):
        state = states.mix_over_phases([(1.0, PI)])
        assert state.coherence == pytest.approx(-0.5, abs=1e-15)
        assert states.state_fidelity(state, "phi_minus") == pytest.approx(1.0)

    def test_equal_mix_fully_dephases(self):
        state = states.mix_over_phases([(1.0, 0.0), (1.0, PI)])
        assert abs(state.coherence) == pytest.approx(0.0, abs=1e-15)
        assert states.state_fidelity(state, "phi_minus") == pytest.approx(0.5)

    def test_uniform_phase_window_matches_analytic_integral(self):
        # uniform over [pi - 1, pi + 1]: |c| = sin(1)/2 in the continuum
        n = 20001
        phases = PI + (np.arange(n) + 0.5) / n * 2.0 - 1.0
        state = states.mix_over_phases([(1.0, p) for p in phases])
        assert abs(state.coherence) == pytest.approx(0.5 * math.sin(1.0), abs=1e-6)
        assert states.state_fidelity(state, "phi_minus") == pytest.approx(
            0.5 + 0.5 * math.sin(1.0), abs=1e-6
        )

    @given(
        st.lists(
            st.tuples(st.floats(0.0, 3.0), st.floats(-6.3, 6.3)),
            min_size=1,
            max_size=1000,
        ).filter(lambda pairs: sum(w for w, _ in pairs) > 1e-9)
    )
    def test_matches_brute_force_density_sum(self, pairs):
        state = states.mix_over_phases(pairs)
        rho = brute_force_mixture(pairs)
        assert state.p_hh == pytest.approx(rho[0, 0].real, abs=1e-12)
        assert state.p_vv == pytest.approx(rho[1, 1].real, abs=1e-12)
        # module convention: coherence phasor rotates with +dphi
        assert state.coherence == pytest.approx(complex(rho[1, 0]), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            states.mix_over_phases([])

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            states.mix_over_phases([(-1.0, 0.0)])


class TestStateFidelity:
    def test_examples(self):
        assert states.state_fidelity(states.TwoPhotonState(0.5, 0.5, -0.5 + 0j)) == pytest.approx(1.0)
        assert states.state_fidelity(states.TwoPhotonState(0.5, 0.5, 0j)) == pytest.approx(0.5)
        c = 0.5 * 0.95 * cmath.exp(1j * PI)
        assert states.state_fidelity(states.TwoPhotonState(0.5, 0.5, c)) == pytest.approx(0.975)


class TestPolarizerCurve:
    def test_full_contrast_node(self):
        phi_minus = states.TwoPhotonState(0.5, 0.5, -0.5 + 0j)
        scan = states.polarizer_curve(phi_minus, [45.0])
        assert scan.probabilities[0] == pytest.approx(0.0, abs=1e-15)

    def test_zero_contrast_curve(self):
        phi_plus = states.TwoPhotonState(0.5, 0.5, 0.5 + 0j)
        scan = states.polarizer_curve(phi_plus, np.linspace(0, 180, 19))
        assert np.allclose(scan.probabilities, 0.5, atol=1e-15)

    def test_partial_coherence_at_node(self):
        state = states.TwoPhotonState(0.5, 0.5, -0.475 + 0j)
        scan = states.polarizer_curve(state, [45.0])
        assert scan.probabilities[0] == pytest.approx(0.0125, abs=1e-12)

    @given(st.floats(0.0, 0.5), st.floats(-PI, PI), st.floats(0.0, 360.0))
    def test_range_and_period(self, mag, phase, theta):
        state = states.TwoPhotonState(0.5, 0.5, mag * cmath.exp(1j * phase))
        p0, p90 = states.polarizer_curve(state, [theta, theta + 90.0]).probabilities
        assert -1e-12 <= p0 <= 1.0 + 1e-12
        assert p0 == pytest.approx(p90, abs=1e-9)

    def test_full_contrast_shape(self):
        phi_minus = states.TwoPhotonState(0.5, 0.5, -0.5 + 0j)
        angles = np.linspace(0, 180, 37)
        scan = states.polarizer_curve(phi_minus, angles)
        expected = 0.5 * np.cos(2 * np.deg2rad(angles)) ** 2
        assert np.allclose(scan.probabilities, expected, atol=1e-12)


class TestPolarizerFit:
    def make_scan(self, visibility, noise=0.0, rng=None, n=37):
        state = states.TwoPhotonState(0.5, 0.5, -visibility / 2 + 0j)
        angles = np.linspace(0.0, 180.0, n)
        scan = states.polarizer_curve(state, angles)
        y = scan.probabilities
        if noise and rng is not None:
            y = y + rng.normal(0.0, noise * y.max(), y.shape)
        return angles, y

    def test_noiseless_full_contrast_roundtrip(self):
        angles, y = self.make_scan(1.0)
        fit = states.fit_polarizer_curve(angles, y)
        assert fit.fidelity == pytest.approx(1.0, abs=1e-9)
        assert fit.visibility == pytest.approx(1.0, abs=1e-9)
        assert fit.mean_phase_rad == PI

    def test_partial_visibility_roundtrip_is_exact_noiseless(self):
        angles, y = self.make_scan(0.95)
        fit = states.fit_polarizer_curve(angles, y)
        assert fit.visibility == pytest.approx(0.95, abs=1e-9)
        assert fit.fidelity == pytest.approx(0.975, abs=1e-9)

    def test_noisy_recovery_within_centipoint(self, rng):
        angles, y = self.make_scan(0.95, noise=0.02, rng=rng)
        fit = states.fit_polarizer_curve(angles, y)
        assert fit.fidelity == pytest.approx(0.975, abs=0.01)

    def test_constant_data_reads_as_dephased(self):
        angles = np.linspace(0.0, 180.0, 19)
        fit = states.fit_polarizer_curve(angles, np.full_like(angles, 0.37))
        assert fit.visibility == 0.0
        assert fit.fidelity == pytest.approx(0.5)
        assert fit.clamped

    def test_zero_data_degenerate(self):
        angles = np.linspace(0.0, 180.0, 19)
        fit = states.fit_polarizer_curve(angles, np.zeros_like(angles))
        assert fit.degenerate
        assert fit.fidelity == pytest.approx(0.5)

    def test_requires_eight_samples(self):
        with pytest.raises(ValueError, match="at least 8"):
            states.fit_polarizer_curve(np.linspace(0, 180, 7), np.zeros(7))

    def test_requires_half_turn_coverage(self):
        with pytest.raises(ValueError, match="180"):
            states.fit_polarizer_curve(np.linspace(0, 90, 10), np.zeros(10))

    def test_three_sigma_coverage(self, rng):
        # the reported uncertainty must cover the truth in almost every
        # noisy realization
        hits = 0
        n_trials = 300
        for _ in range(n_trials):
            angles, y = self.make_scan(0.95, noise=0.02, rng=rng)
            fit = states.fit_polarizer_curve(angles, y)
            sigma_v = 2.0 * fit.sigma_fidelity
            if abs(fit.visibility - 0.95) <= 3.0 * sigma_v and fit.mean_phase_rad == PI:
                hits += 1
        assert hits / n_trials >= 0.99


class TestQber:
    def test_values(self):
        assert states.fidelity_to_qber(1.0) == 0.0
        assert states.fidelity_to_qber(0.85) == pytest.approx(0.15)
        assert states.fidelity_to_qber(0.99) == pytest.approx(0.01)

    def test_out_of_model(self):
        with pytest.raises(ValueError, match="model range"):
            states.fidelity_to_qber(0.4)
