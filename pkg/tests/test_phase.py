import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fieldstop import materials as mat
from fieldstop import phase as ph
from fieldstop.geometry import EmissionAngle, GenerationPoint
from tests.conftest import make_stack

PI = math.pi
ON_AXIS = EmissionAngle(0.0, 0.0)


class TestPairWavelengths:
    def test_paper_triple_satisfies_conservation(self):
        ph.PairWavelengths(0.4050832, 0.785, 0.837)
        # the rounded pump passes the 0.1 percent gate as well
        ph.PairWavelengths(0.405, 0.785, 0.837)

    def test_violation_rejected(self):
        with pytest.raises(ph.EnergyConservationError):
            ph.PairWavelengths(0.500, 0.785, 0.837)

    def test_conjugate_idler(self):
        lam_i = ph.conjugate_idler_um(0.4050832, 0.785)
        assert lam_i == pytest.approx(0.837, abs=2e-6)

    def test_conjugate_requires_pump_energy(self):
        with pytest.raises(ph.EnergyConservationError):
            ph.conjugate_idler_um(0.8, 0.785)


class TestOnAxisCalibration:
    def test_delta_phi_equals_offset_on_axis(self, pair_waves):
        stack = make_stack()
        for depth in (1.0, 3.0, 5.0):
            value = ph.delta_phi(GenerationPoint(1, depth), ON_AXIS, pair_waves, stack, PI)
            assert value == pytest.approx(PI, abs=1e-9)

    def test_offset_is_configurable(self, pair_waves):
        stack = make_stack()
        value = ph.delta_phi(GenerationPoint(1, 3.0), ON_AXIS, pair_waves, stack, 0.25)
        assert value == pytest.approx(0.25, abs=1e-9)

    def test_same_depth_pathways_identical(self, pair_waves):
        # pairs born at equal depths in either crystal accumulate the same
        # phase difference: conversion position drops out
        stack = make_stack()
        diffs = []
        for depth in (0.5, 2.0, 3.5, 5.5):
            vv = ph.accumulated_phase("VV", GenerationPoint(1, depth), ON_AXIS, pair_waves, stack)
            hh = ph.accumulated_phase("HH", GenerationPoint(2, depth), ON_AXIS, pair_waves, stack)
            diffs.append(vv.total - hh.total)
        assert np.ptp(diffs) == pytest.approx(0.0, abs=1e-6)

    def test_pathway_point_consistency_enforced(self, pair_waves):
        stack = make_stack()
        with pytest.raises(ValueError, match="crystal 1"):
            ph.accumulated_phase("VV", GenerationPoint(2, 1.0), ON_AXIS, pair_waves, stack)

    def test_on_axis_phase_is_index_times_length_sum(self, pair_waves):
        # at normal incidence each photon phase must reduce to
        # sum over media of (2 pi / lambda) * n_j * L_j
        stack = make_stack()
        depth = 2.25
        hh = ph.accumulated_phase("HH", GenerationPoint(2, depth), ON_AXIS, pair_waves, stack)
        lam_s, lam_i, lam_p = pair_waves.signal_um, pair_waves.idler_um, pair_waves.pump_um
        c = stack.crystal1
        n_o_s = float(mat.index_ordinary(c, lam_s))
        n_o_i = float(mat.index_ordinary(c, lam_i))
        n_p = float(mat.index_extraordinary_effective(c, lam_p, c.cut_angle_rad))
        comp = stack.compensator
        n_comp_s = float(comp.extraordinary_principal.index(lam_s))
        n_comp_i = float(comp.extraordinary_principal.index(lam_i))
        um = 1e3
        pump_expected = 2 * PI / lam_p * (n_p * 6.0 + 1.0 * 0.5 + 1.5 * 1.0 + 1.0 * 0.5 + n_p * depth) * um
        sig_expected = 2 * PI / lam_s * (n_o_s * (6.0 - depth) + 1.0 * 0.5 + n_comp_s * 3.6) * um
        idl_expected = 2 * PI / lam_i * (n_o_i * (6.0 - depth) + 1.0 * 0.5 + n_comp_i * 3.6) * um
        assert hh.phi_pump == pytest.approx(pump_expected, rel=1e-12)
        assert hh.phi_signal == pytest.approx(sig_expected, rel=1e-12)
        assert hh.phi_idler == pytest.approx(idl_expected, rel=1e-12)

    def test_energy_conservation_gate(self):
        with pytest.raises(ph.EnergyConservationError):
            ph.PairWavelengths(0.405, 0.785, 0.80)


@pytest.fixture(scope="module")
def pmap(pair_waves):
    return ph.phase_map(make_stack(), pair_waves, ph.GridSpec(0.02, 1.0))


class TestPhaseMap:
    def test_center_equals_offset_exactly(self, pmap):
        c = len(pmap.alpha_x_deg) // 2
        assert pmap.values[c, c] == PI

    def test_mirror_symmetry_exact(self, pmap):
        assert np.array_equal(pmap.values, pmap.values[:, ::-1])

    def test_unwrap_continuity(self, pmap):
        assert np.max(np.abs(np.diff(pmap.values, axis=0))) < PI
        assert np.max(np.abs(np.diff(pmap.values, axis=1))) < PI

    def test_metadata_records_labels_and_bound(self, pmap):
        assert "bbo-o-eimerl87" in pmap.metadata["sellmeier_labels"]
        assert pmap.metadata["depth_residual_bound_rad"] >= 0.0

    def test_constant_phase_disc_radius_near_tenth_degree(self, pmap):
        r = np.hypot(*np.meshgrid(pmap.alpha_x_deg, pmap.alpha_y_deg))
        outside = np.abs(pmap.values - PI) > 0.2
        radius = float(r[outside].min())
        assert 0.08 <= radius <= 0.16

    def test_doubling_length_shrinks_disc_by_root_two(self, pair_waves, pmap):
        # the quadratic phase landscape scales linearly with crystal length,
        # so the radius of an iso-phase disc shrinks by sqrt(2) when the
        # length doubles
        pmap12 = ph.phase_map(make_stack(length_mm=12.0), pair_waves, ph.GridSpec(0.02, 1.0))
        r = np.hypot(*np.meshgrid(pmap.alpha_x_deg, pmap.alpha_y_deg))
        r6 = float(r[np.abs(pmap.values - PI) > 0.2].min())
        r12 = float(r[np.abs(pmap12.values - PI) > 0.2].min())
        assert r12 == pytest.approx(r6 / math.sqrt(2), rel=0.15)

    def test_vertical_pi_shift_angle(self, pmap):
        # angle at which the phase has moved a full pi from the axis
        c = len(pmap.alpha_x_deg) // 2
        upper = pmap.values[c:, c] - PI
        ay = pmap.alpha_y_deg[c:]
        crossing = np.argmax(upper <= -PI)
        assert crossing > 0
        assert 0.3 <= ay[crossing] <= 1.2
        assert ay[crossing] == pytest.approx(0.48, abs=0.03)

    def test_coarse_grid_rejected(self, pair_waves):
        with pytest.raises(ph.CoarseGridError):
            ph.phase_map(make_stack(), pair_waves, ph.GridSpec(0.4, 2.0))

    def test_depth_averaging_barely_matters_when_parallel(self, pair_waves):
        # position invariance makes the depth average almost a no-op
        grid = ph.GridSpec(0.05, 0.5)
        one = ph.phase_map(make_stack(), pair_waves, grid, ph.AveragingSpec(depth_samples=1))
        many = ph.phase_map(make_stack(), pair_waves, grid, ph.AveragingSpec(depth_samples=16))
        assert np.max(np.abs(one.values - many.values)) < 0.02

    def test_post_crystal_gap_cancels(self, pair_waves):
        # media after the second crystal are common to both pathways
        import dataclasses

        from fieldstop.geometry import StackElement

        base = make_stack()
        elements = []
        for e in base.elements:
            if e.role == "gap" and elements and elements[-1].role == "crystal2":
                e = StackElement(e.medium, 7.77, e.role)
            elements.append(e)
        moved = dataclasses.replace(base, elements=tuple(elements))
        grid = ph.GridSpec(0.05, 0.3)
        a = ph.phase_map(base, pair_waves, grid)
        b = ph.phase_map(moved, pair_waves, grid)
        assert np.max(np.abs(a.values - b.values)) < 1e-9

    def test_interpolation_bounds_error_names_needed_extent(self, pmap):
        with pytest.raises(ValueError, match="half_extent_deg >= 1.5"):
            pmap.interpolate(1.5, 0.0)


class TestUnwrap:
    def test_roundtrip_on_smooth_field(self, rng):
        x = np.linspace(-1, 1, 81)
        xx, yy = np.meshgrid(x, x)
        smooth = 9.0 * (xx**2 + yy**2) + 1.3 * xx * yy
        wrapped = np.angle(np.exp(1j * smooth))
        recovered = ph.unwrap_about_center(wrapped)
        center = smooth[40, 40]
        assert np.allclose(recovered - recovered[40, 40], smooth - center, atol=1e-9)


class TestScaling:
    def test_identity_scale(self, pair_waves):
        stack = make_stack().without_isotropic_spacers()
        dev = ph.crystal_length_scaling_check(stack, pair_waves, 6.0, 6.0, ph.GridSpec(0.05, 0.5))
        assert dev == pytest.approx(0.0, abs=1e-12)

    def test_factor_two_without_spacers(self, pair_waves):
        stack = make_stack().without_isotropic_spacers()
        dev = ph.crystal_length_scaling_check(stack, pair_waves, 6.0, 12.0, ph.GridSpec(0.02, 0.5))
        assert dev <= 0.05

    def test_gaps_degrade_scaling(self, pair_waves):
        grid = ph.GridSpec(0.02, 0.5)
        with_gaps = ph.crystal_length_scaling_check(make_stack(), pair_waves, 6.0, 12.0, grid)
        without = ph.crystal_length_scaling_check(
            make_stack().without_isotropic_spacers(), pair_waves, 6.0, 12.0, grid
        )
        assert without < with_gaps


class TestSpectral:
    def test_uncompensated_profile_strongly_sloped(self, pair_waves):
        bare = make_stack().without_compensator()
        profile = ph.spectral_phase_profile(bare, pair_waves, samples=11, depth_samples=4)
        phis = [p for _, p in profile]
        assert max(phis) - min(phis) > 3.0

    def test_signal_idler_exchange_invariance(self, pair_waves):
        # the pair {785, 837} is the same pair when labelled the other way
        stack = make_stack()
        a = ph.delta_phi(GenerationPoint(1, 3.0), ON_AXIS, pair_waves, stack, PI, lam_s_um=0.7725)
        partner = ph.conjugate_idler_um(pair_waves.pump_um, 0.7725)
        b = ph.delta_phi(GenerationPoint(1, 3.0), ON_AXIS, pair_waves, stack, PI, lam_s_um=partner)
        assert a == pytest.approx(b, abs=1e-9)

    def test_optimizer_matches_installed_compensator(self, pair_waves):
        result = ph.optimize_compensator_thickness(make_stack(), pair_waves)
        assert result.thickness_mm == pytest.approx(3.6, abs=0.6)
        assert not result.degenerate

    def test_optimizer_reduces_spread_tenfold(self, pair_waves):
        result = ph.optimize_compensator_thickness(make_stack(), pair_waves)
        assert result.uncompensated_peak_to_peak_rad / result.peak_to_peak_rad >= 10.0

    def test_doubled_crystals_double_the_optimum(self, pair_waves):
        short = ph.optimize_compensator_thickness(make_stack(), pair_waves)
        long = ph.optimize_compensator_thickness(make_stack(length_mm=12.0), pair_waves)
        assert long.thickness_mm == pytest.approx(2 * short.thickness_mm, rel=0.05)

    def test_zero_bandwidth_is_degenerate(self, pair_waves):
        result = ph.optimize_compensator_thickness(make_stack(), pair_waves, bandwidth_nm=0.0)
        assert result.degenerate
        assert math.isnan(result.thickness_mm)

    def test_wrong_orientation_has_no_interior_minimum(self, pair_waves):
        flipped = make_stack(e_axis="vertical")
        with pytest.raises(ValueError, match="no interior minimum"):
            ph.optimize_compensator_thickness(flipped, pair_waves)


class TestRadialCompensation:
    def test_zero_profile_is_identity(self, pmap):
        same = ph.apply_radial_compensation(pmap, (0.0, 0.0, 0.0))
        assert np.array_equal(same.values, pmap.values)
        assert same.metadata["radial_profile_coeffs"] == (0.0, 0.0, 0.0)

    def test_quadratic_fit_grows_constant_disc(self, pmap):
        coeffs = ph.fit_radial_quadratic(pmap, PI, 0.3)
        fixed = ph.apply_radial_compensation(pmap, coeffs)
        r = np.hypot(*np.meshgrid(pmap.alpha_x_deg, pmap.alpha_y_deg))

        def disc_radius(values):
            outside = np.abs(values - PI) > 0.2
            return float(r[outside].min()) if outside.any() else float(r.max())

        assert disc_radius(fixed.values) >= 2.0 * disc_radius(pmap.values)

    def test_compensation_keeps_mirror_symmetry(self, pmap):
        coeffs = ph.fit_radial_quadratic(pmap, PI, 0.3)
        fixed = ph.apply_radial_compensation(pmap, coeffs)
        assert np.array_equal(fixed.values, fixed.values[:, ::-1])


class TestDepthInvariance:
    def _independent_mismatch(self, stack, waves, alpha_y_rad, lam_s):
        # pump minus ordinary-pair longitudinal wavevector, assembled from
        # scratch (rad/um)
        lam_i = ph.conjugate_idler_um(waves.pump_um, lam_s)
        c = stack.crystal1
        kp = 2 * PI / waves.pump_um * float(
            mat.index_extraordinary_effective(c, waves.pump_um, c.cut_angle_rad)
        )
        kt = 2 * PI / lam_s * math.sin(alpha_y_rad)
        ks = math.sqrt((2 * PI * float(mat.index_ordinary(c, lam_s)) / lam_s) ** 2 - kt**2)
        ki = math.sqrt((2 * PI * float(mat.index_ordinary(c, lam_i)) / lam_i) ** 2 - kt**2)
        return abs(kp - ks - ki)

    def test_parallel_spread_obeys_analytic_bound(self, pair_waves):
        stack = make_stack()
        rho_p = float(mat.walkoff_angle(stack.crystal1, pair_waves.pump_um, stack.crystal1.cut_angle_rad))
        rho_s = float(mat.walkoff_angle(stack.crystal1, pair_waves.signal_um, stack.crystal1.cut_angle_rad))
        clamp_mm = 6.0 * abs(1.0 - math.tan(rho_s) / math.tan(rho_p))
        for ay_deg in (0.0, 0.15, 0.3):
            for lam_s in (0.7725, 0.785, 0.7975):
                spread = ph.depth_phase_spread(
                    stack, pair_waves, EmissionAngle(0.0, math.radians(ay_deg)), 33, lam_s
                )
                bound = self._independent_mismatch(stack, pair_waves, math.radians(ay_deg), lam_s)
                assert spread <= bound * clamp_mm * 1e3 * 1.10 + 1e-9

    def test_antiparallel_contrast_large_and_gated(self, pair_waves):
        anti = make_stack(axis="anti-parallel")
        contrast = ph.antiparallel_contrast(anti, pair_waves)
        assert contrast > 2.0
        with pytest.raises(ValueError, match="anti-parallel"):
            ph.antiparallel_contrast(make_stack(), pair_waves)

    def test_parallel_residual_ten_times_below_antiparallel(self, pair_waves):
        angles = [EmissionAngle(0.0, 0.0), EmissionAngle(0.0, math.radians(0.3)),
                  EmissionAngle(math.radians(0.3), 0.0), EmissionAngle(math.radians(0.2), math.radians(0.2))]
        parallel = make_stack()
        anti = make_stack(axis="anti-parallel")
        spread_par = max(ph.depth_phase_spread(parallel, pair_waves, a, 33) for a in angles)
        spread_anti = max(ph.depth_phase_spread(anti, pair_waves, a, 33) for a in angles)
        assert spread_anti >= 10.0 * spread_par

    def test_vanishing_length_kills_contrast_both_ways(self, pair_waves):
        for axis in ("parallel", "anti-parallel"):
            tiny = make_stack(length_mm=1e-6, axis=axis)
            alpha = EmissionAngle(0.0, math.radians(0.3))
            assert ph.depth_phase_spread(tiny, pair_waves, alpha, 9) < 1e-6


class TestSmallAngleOracle:
    def test_second_order_expansion_matches_trace(self, pair_waves):
        # symbolic derivation of the vertical-angle Taylor expansion from the
        # dispersion relations, compared against the full numeric trace
        sp = pytest.importorskip("sympy")
        stack = make_stack()
        from fieldstop.geometry import paired_point

        lam_s, lam_i, lam_p = pair_waves.signal_um, pair_waves.idler_um, pair_waves.pump_um
        c1 = stack.crystal1
        cut = c1.cut_angle_rad
        no_s = float(mat.index_ordinary(c1, lam_s))
        no_i = float(mat.index_ordinary(c1, lam_i))
        ne_s = float(c1.extraordinary_principal.index(lam_s))
        ne_i = float(c1.extraordinary_principal.index(lam_i))

        ay = sp.Symbol("ay", real=True)
        k0s, k0i, k0p = 2 * sp.pi / lam_s, 2 * sp.pi / lam_i, 2 * sp.pi / lam_p
        kt = k0s * sp.sin(ay)

        def kz_iso(n, k0):
            return sp.sqrt((n * k0) ** 2 - kt**2)

        def kz_e(no, ne, k0, kty):
            io2, ie2 = 1 / no**2, 1 / ne**2
            d = io2 - ie2
            s, co = sp.sin(cut), sp.cos(cut)
            a = ie2 + co**2 * d
            b = 2 * kty * s * co * d
            cc = kt**2 * ie2 + kty**2 * s**2 * d - k0**2
            return (-b + sp.sqrt(b**2 - 4 * a * cc)) / (2 * a)

        rho_p = float(mat.walkoff_angle(c1, lam_p, cut))
        rho_pair = 0.5 * (
            float(mat.walkoff_angle(c1, lam_s, cut)) + float(mat.walkoff_angle(c1, lam_i, cut))
        )
        z1 = 3.0
        z2 = paired_point(GenerationPoint(1, z1), stack, rho_p, rho_pair).depth_mm
        um = 1e3
        kp = k0p * float(mat.index_extraordinary_effective(c1, lam_p, cut))
        between = [(1.0, 0.5 * um), (1.5, 1.0 * um), (1.0, 0.5 * um)]
        phi_v = (
            kp * z1 * um
            + (kz_iso(no_s, k0s) + kz_iso(no_i, k0i)) * (6.0 - z1) * um
            + sum((kz_iso(n, k0s) + kz_iso(n, k0i)) * t for n, t in between)
            + (kz_e(no_s, ne_s, k0s, kt) + kz_e(no_i, ne_i, k0i, -kt)) * 6.0 * um
        )
        phi_h = (
            kp * (6.0 + z2) * um
            + sum(k0p * n * t for n, t in between)
            + (kz_iso(no_s, k0s) + kz_iso(no_i, k0i)) * (6.0 - z2) * um
        )
        dphi = phi_v - phi_h
        d1 = float(sp.diff(dphi, ay).subs(ay, 0))
        d2 = float(sp.diff(dphi, ay, 2).subs(ay, 0))

        point = GenerationPoint(1, z1)
        base = ph.delta_phi(point, ON_AXIS, pair_waves, stack, PI)
        for ay_deg in np.linspace(-0.1, 0.1, 9):
            a = math.radians(ay_deg)
            full = ph.delta_phi(point, EmissionAngle(0.0, a), pair_waves, stack, PI)
            taylor = base + d1 * a + 0.5 * d2 * a * a
            assert abs(full - taylor) <= 1e-3
