"""Accumulated optical phase along the two pair-generation pathways.

A pair collected at external signal angle alpha is treated as plane waves:
the transverse wavevector k_t = k0*(sin ax, sin ay) is fixed in air and
conserved across every planar interface, the idler carries -k_t (transverse
momentum conservation against the on-axis pump), and each traversed medium
contributes its longitudinal wavevector times its thickness to the photon
phase.  Extraordinary propagation solves the uniaxial normal surface
(k_t^2 + k_z^2 - (k.c)^2)/n_e^2 + (k.c)^2/n_o^2 = k0^2 for k_z in closed
form, so the direction dependence of the index is exact.  Walk-off enters
only through the transverse mapping between generation depth and exit
position (:func:`fieldstop.geometry.paired_point`); transverse phase terms
cancel within a pair and are omitted.

The phase difference between the two pathways,

    delta_phi = (pump + signal + idler phase of the VV pathway)
              - (pump + signal + idler phase of the HH pathway),

is reported relative to its on-axis, center-wavelength, depth-averaged
value plus a configurable global offset (the experiment absorbs constant
phases into compensator tilt; offset pi selects the antisymmetric Bell
state on axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .geometry import EmissionAngle, GenerationPoint, OpticalStack
from .materials import index_extraordinary_effective, index_ordinary, walkoff_angle

TWO_PI = 2.0 * math.pi
ENERGY_CONSERVATION_TOL = 1e-3  # relative tolerance on 1/lp = 1/ls + 1/li


class EnergyConservationError(ValueError):
    """Pump/signal/idler wavelengths violate energy conservation."""


class CoarseGridError(ValueError):
    """Grid too coarse to unwrap the phase landscape reliably."""


def conjugate_idler_um(pump_um: float, signal_um: float) -> float:
    """Idler wavelength fixed by energy conservation."""
    inv = 1.0 / pump_um - 1.0 / signal_um
    if inv <= 0:
        raise EnergyConservationError(
            f"signal {signal_um} um carries more energy than pump {pump_um} um"
        )
    return 1.0 / inv


@dataclass(frozen=True)
class PairWavelengths:
    """Pump/signal/idler vacuum wavelengths (micrometers)."""

    pump_um: float
    signal_um: float
    idler_um: float

    def __post_init__(self):
        rel = abs(1.0 / self.signal_um + 1.0 / self.idler_um - 1.0 / self.pump_um) * self.pump_um
        if rel > ENERGY_CONSERVATION_TOL:
            raise EnergyConservationError(
                f"1/{self.signal_um} + 1/{self.idler_um} deviates from 1/{self.pump_um} "
                f"by {rel:.2e} (relative), above {ENERGY_CONSERVATION_TOL:.0e}"
            )

    @classmethod
    def from_pump_signal(cls, pump_um: float, signal_um: float) -> "PairWavelengths":
        return cls(pump_um, signal_um, conjugate_idler_um(pump_um, signal_um))


@dataclass(frozen=True)
class GridSpec:
    """Uniform symmetric angle grid (degrees); zero is always a node."""

    step_deg: float
    half_extent_deg: float

    def __post_init__(self):
        if self.step_deg <= 0 or self.half_extent_deg <= 0:
            raise ValueError("grid step and extent must be positive")
        if self.half_extent_deg < self.step_deg:
            raise ValueError("grid extent must cover at least one step")

    def axis_deg(self) -> np.ndarray:
        n = int(round(self.half_extent_deg / self.step_deg))
        return np.arange(-n, n + 1) * self.step_deg


@dataclass(frozen=True)
class AveragingSpec:
    """How delta_phi is averaged per map cell.

    ``depth_samples`` midpoint depths, uniform over the first crystal with
    the partner depth taken from the transverse pairing map.
    ``band_samples`` > 1 additionally averages over that many equally
    spaced signal wavelengths across ``bandwidth_nm``.
    """

    depth_samples: int = 8
    band_samples: int = 1
    bandwidth_nm: float = 25.0

    def __post_init__(self):
        if self.depth_samples < 1 or self.band_samples < 1:
            raise ValueError("sample counts must be >= 1")


@dataclass(frozen=True)
class PathwayPhase:
    """Per-photon accumulated phases (radians) of one pathway."""

    pathway: str  # "VV" (pair born in crystal 1) or "HH" (crystal 2)
    phi_pump: float
    phi_signal: float
    phi_idler: float

    @property
    def total(self) -> float:
        return self.phi_pump + self.phi_signal + self.phi_idler


@dataclass
class PhaseMap:
    """delta_phi over a uniform (alpha_x, alpha_y) grid, in radians,
    unwrapped and anchored so the on-axis value equals the global offset."""

    alpha_x_deg: np.ndarray
    alpha_y_deg: np.ndarray
    values: np.ndarray  # shape (len(alpha_y), len(alpha_x))
    metadata: dict = field(default_factory=dict)

    @property
    def step_deg(self) -> float:
        return float(self.alpha_x_deg[1] - self.alpha_x_deg[0])

    @property
    def half_extent_deg(self) -> float:
        return float(self.alpha_x_deg[-1])

    def interpolate(self, ax_deg, ay_deg):
        """Bilinear interpolation; raises for points outside the grid."""
        ax = np.asarray(ax_deg, dtype=float)
        ay = np.asarray(ay_deg, dtype=float)
        ext = self.half_extent_deg
        if np.any(np.abs(ax) > ext + 1e-12) or np.any(np.abs(ay) > ext + 1e-12):
            needed = float(max(np.max(np.abs(ax)), np.max(np.abs(ay))))
            raise ValueError(
                f"requested angles reach {needed:.4f} deg but the map only "
                f"extends to {ext:.4f} deg; recompute the map with "
                f"half_extent_deg >= {needed:.4f}"
            )
        step = self.step_deg
        fx = np.clip((ax + ext) / step, 0, len(self.alpha_x_deg) - 1)
        fy = np.clip((ay + ext) / step, 0, len(self.alpha_y_deg) - 1)
        ix = np.clip(fx.astype(int), 0, len(self.alpha_x_deg) - 2)
        iy = np.clip(fy.astype(int), 0, len(self.alpha_y_deg) - 2)
        tx, ty = fx - ix, fy - iy
        v = self.values
        return (
            v[iy, ix] * (1 - tx) * (1 - ty)
            + v[iy, ix + 1] * tx * (1 - ty)
            + v[iy + 1, ix] * (1 - tx) * ty
            + v[iy + 1, ix + 1] * tx * ty
        )


# ---------------------------------------------------------------------------
# longitudinal wavevectors


def _kz_isotropic(n, k0, kt2):
    return np.sqrt((n * k0) ** 2 - kt2)


def _kz_extraordinary(n_o, n_e, k0, kty, kt2, cut_rad, axis_sign):
    """Positive root of the extraordinary normal surface for axis
    (0, axis_sign*sin(cut), cos(cut)) and transverse wavevector (ktx, kty)."""
    io2 = 1.0 / n_o**2
    ie2 = 1.0 / n_e**2
    d = io2 - ie2
    s, c = math.sin(cut_rad), math.cos(cut_rad)
    a = ie2 + c * c * d
    b = 2.0 * axis_sign * kty * s * c * d
    cc = kt2 * ie2 + kty * kty * s * s * d - k0 * k0
    return (-b + np.sqrt(b * b - 4.0 * a * cc)) / (2.0 * a)


@dataclass(frozen=True)
class _Trace:
    """Per-medium longitudinal wavevectors (rad/um) for one signal
    wavelength and one grid of emission angles, plus thicknesses (um)."""

    stack: OpticalStack
    lam_s_um: float
    lam_i_um: float
    # pump scalars
    kp_crystal: float
    kp_between_um: float  # sum over media between the crystals of kz_p * thickness
    # signal/idler arrays, by medium
    k_c1_o: tuple
    k_c2_o: tuple
    k_c2_e: tuple
    between_um: tuple  # sum over between-media of (kz_s + kz_i) * thickness
    after_um: tuple  # same for media after crystal2 except the compensator
    comp_v_um: tuple  # compensator phase for a V photon: (signal, idler)
    comp_h_um: tuple
    l1_um: float
    l2_um: float

    def phi_v(self, z1_mm: float):
        """Total pathway phase for a pair born at depth z1 in crystal 1."""
        pump, sig, idl = self.components_v(z1_mm)
        return pump + sig + idl

    def phi_h(self, z2_mm: float):
        """Total pathway phase for a pair born at depth z2 in crystal 2."""
        pump, sig, idl = self.components_h(z2_mm)
        return pump + sig + idl

    def components_v(self, z1_mm: float):
        z1 = z1_mm * 1e3
        ks, ki = self.k_c1_o
        kes, kei = self.k_c2_e
        pump = self.kp_crystal * z1
        sig = ks * (self.l1_um - z1) + self.between_um[1] + kes * self.l2_um + self.after_um[1] + self.comp_v_um[0]
        idl = ki * (self.l1_um - z1) + self.between_um[2] + kei * self.l2_um + self.after_um[2] + self.comp_v_um[1]
        return pump, sig, idl

    def components_h(self, z2_mm: float):
        z2 = z2_mm * 1e3
        ks, ki = self.k_c2_o
        pump = self.kp_crystal * (self.l1_um + z2) + self.kp_between_um
        sig = ks * (self.l2_um - z2) + self.after_um[1] + self.comp_h_um[0]
        idl = ki * (self.l2_um - z2) + self.after_um[2] + self.comp_h_um[1]
        return pump, sig, idl


def _trace_stack(stack: OpticalStack, waves: PairWavelengths, lam_s_um: float, alpha_x, alpha_y):
    """Build the per-medium wavevector table for signal angle arrays
    (radians).  The idler rides at the conjugate transverse wavevector."""
    lam_i_um = conjugate_idler_um(waves.pump_um, lam_s_um)
    k0s = TWO_PI / lam_s_um
    k0i = TWO_PI / lam_i_um
    k0p = TWO_PI / waves.pump_um

    sin_x = np.sin(np.asarray(alpha_x, dtype=float))
    sin_y = np.sin(np.asarray(alpha_y, dtype=float))
    kty_s = k0s * sin_y
    kt2 = (k0s * sin_x) ** 2 + kty_s**2
    kty_i = -kty_s  # conjugate emission: k_t,i = -k_t,s

    c1, c2 = stack.crystal1, stack.crystal2
    cut = c1.cut_angle_rad
    s2 = stack.crystal2_axis_sign

    no_s1, no_i1 = index_ordinary(c1, lam_s_um), index_ordinary(c1, lam_i_um)
    no_s2, no_i2 = index_ordinary(c2, lam_s_um), index_ordinary(c2, lam_i_um)
    ne_s2 = c2.extraordinary_principal.index(lam_s_um)
    ne_i2 = c2.extraordinary_principal.index(lam_i_um)

    kp_crystal = k0p * float(index_extraordinary_effective(c1, waves.pump_um, cut))

    k_c1_o = (_kz_isotropic(no_s1, k0s, kt2), _kz_isotropic(no_i1, k0i, kt2))
    k_c2_o = (_kz_isotropic(no_s2, k0s, kt2), _kz_isotropic(no_i2, k0i, kt2))
    k_c2_e = (
        _kz_extraordinary(no_s2, ne_s2, k0s, kty_s, kt2, c2.cut_angle_rad, s2),
        _kz_extraordinary(no_i2, ne_i2, k0i, kty_i, kt2, c2.cut_angle_rad, s2),
    )

    def iso_index(element):
        return stack.hwp_bulk_index if element.role == "hwp" else 1.0

    roles = [e.role for e in stack.elements]
    i_c1, i_c2 = roles.index("crystal1"), roles.index("crystal2")

    between_sum = 0.0
    between_s = 0.0
    between_i = 0.0
    kp_between_um = 0.0
    for e in stack.elements[i_c1 + 1 : i_c2]:
        n = iso_index(e)
        t_um = e.thickness_mm * 1e3
        ks = _kz_isotropic(n, k0s, kt2)
        ki = _kz_isotropic(n, k0i, kt2)
        between_s = between_s + ks * t_um
        between_i = between_i + ki * t_um
        between_sum = between_sum + (ks + ki) * t_um
        kp_between_um += k0p * n * t_um

    after_sum = 0.0
    after_s = 0.0
    after_i = 0.0
    comp_v_um = (0.0, 0.0)
    comp_h_um = (0.0, 0.0)
    for e in stack.elements[i_c2 + 1 :]:
        if e.role == "compensator":
            comp = stack.compensator
            t_um = e.thickness_mm * 1e3
            n_o = index_ordinary(comp, lam_s_um), index_ordinary(comp, lam_i_um)
            n_e = (
                comp.extraordinary_principal.index(lam_s_um),
                comp.extraordinary_principal.index(lam_i_um),
            )
            # collimated space: normal incidence for every emission angle
            if stack.compensator_e_axis == "horizontal":
                nh, nv = n_e, n_o
            else:
                nh, nv = n_o, n_e
            comp_v_um = (k0s * nv[0] * t_um, k0i * nv[1] * t_um)
            comp_h_um = (k0s * nh[0] * t_um, k0i * nh[1] * t_um)
        else:
            n = iso_index(e)
            t_um = e.thickness_mm * 1e3
            ks = _kz_isotropic(n, k0s, kt2)
            ki = _kz_isotropic(n, k0i, kt2)
            after_s = after_s + ks * t_um
            after_i = after_i + ki * t_um
            after_sum = after_sum + (ks + ki) * t_um

    return _Trace(
        stack=stack,
        lam_s_um=lam_s_um,
        lam_i_um=lam_i_um,
        kp_crystal=kp_crystal,
        kp_between_um=kp_between_um,
        k_c1_o=k_c1_o,
        k_c2_o=k_c2_o,
        k_c2_e=k_c2_e,
        between_um=(between_sum, between_s, between_i),
        after_um=(after_sum, after_s, after_i),
        comp_v_um=comp_v_um,
        comp_h_um=comp_h_um,
        l1_um=c1.thickness_mm * 1e3,
        l2_um=c2.thickness_mm * 1e3,
    )


# ---------------------------------------------------------------------------
# pairing between generation depths


def _pairing_walkoffs(stack: OpticalStack, waves: PairWavelengths, lam_s_um: float):
    """On-axis pump and pair walk-off angles used for the depth pairing.

    The pair walk-off is the mean of the signal and idler extraordinary
    walk-offs; within the validity window the angle dependence of the
    walk-off itself is negligible.
    """
    cut = stack.crystal1.cut_angle_rad
    rho_p = float(walkoff_angle(stack.crystal1, waves.pump_um, cut))
    lam_i = conjugate_idler_um(waves.pump_um, lam_s_um)
    rho_s = float(walkoff_angle(stack.crystal2, lam_s_um, cut))
    rho_i = float(walkoff_angle(stack.crystal2, lam_i, cut))
    return rho_p, 0.5 * (rho_s + rho_i)


def _depth_pairs(stack, waves, lam_s_um, depths_mm):
    """(z1, z2) partner depths for pairs born at ``depths_mm`` in crystal 1."""
    from .geometry import paired_point

    rho_p, rho_pair = _pairing_walkoffs(stack, waves, lam_s_um)
    pairs = []
    for z1 in depths_mm:
        z2 = paired_point(GenerationPoint(1, float(z1)), stack, rho_p, rho_pair).depth_mm
        pairs.append((float(z1), z2))
    return pairs


def _midpoint_depths(length_mm: float, n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n * length_mm


def _raw_delta_phi(trace: _Trace, z1_mm: float, z2_mm: float):
    return trace.phi_v(z1_mm) - trace.phi_h(z2_mm)


@lru_cache(maxsize=64)
def _on_axis_reference(stack: OpticalStack, waves: PairWavelengths, depth_samples: int) -> float:
    """Depth-averaged on-axis raw delta_phi at the center wavelength."""
    trace = _trace_stack(stack, waves, waves.signal_um, 0.0, 0.0)
    depths = _midpoint_depths(stack.crystal1.thickness_mm, depth_samples)
    pairs = _depth_pairs(stack, waves, waves.signal_um, depths)
    return float(np.mean([_raw_delta_phi(trace, z1, z2) for z1, z2 in pairs]))


# ---------------------------------------------------------------------------
# public operations


def accumulated_phase(
    pathway: str,
    point: GenerationPoint,
    alpha: EmissionAngle,
    waves: PairWavelengths,
    stack: OpticalStack,
    lam_s_um: float | None = None,
) -> PathwayPhase:
    """Raw accumulated pump/signal/idler phases of one pathway.

    The VV pathway (pair born in crystal 1) crosses the second crystal as
    an extraordinary wave; the HH pathway inherits the pump phase through
    crystal 1 and the intermediate media.  Calibration (on-axis reference
    and global offset) is applied by :func:`delta_phi`, not here.
    """
    if pathway not in ("VV", "HH"):
        raise ValueError("pathway must be 'VV' or 'HH'")
    expected_crystal = 1 if pathway == "VV" else 2
    if point.crystal != expected_crystal:
        raise ValueError(f"{pathway} pairs are born in crystal {expected_crystal}")
    lam_s = waves.signal_um if lam_s_um is None else lam_s_um
    trace = _trace_stack(stack, waves, lam_s, alpha.alpha_x_rad, alpha.alpha_y_rad)
    if pathway == "VV":
        pump, sig, idl = trace.components_v(point.depth_mm)
    else:
        pump, sig, idl = trace.components_h(point.depth_mm)
    return PathwayPhase(pathway, float(pump), float(sig), float(idl))


def delta_phi(
    point: GenerationPoint,
    alpha: EmissionAngle,
    waves: PairWavelengths,
    stack: OpticalStack,
    global_offset_rad: float,
    lam_s_um: float | None = None,
    reference_depth_samples: int = 8,
) -> float:
    """Pathway phase difference for the pair family through ``point``.

    The partner generation point in the other crystal is the one whose
    pairs exit at the same transverse position.  The result is referenced
    to the depth-averaged on-axis value at the center wavelength, shifted
    by the global offset, so delta_phi(on axis) == global_offset.
    """
    lam_s = waves.signal_um if lam_s_um is None else lam_s_um
    from .geometry import paired_point

    rho_p, rho_pair = _pairing_walkoffs(stack, waves, lam_s)
    partner = paired_point(point, stack, rho_p, rho_pair)
    z1, z2 = (point.depth_mm, partner.depth_mm) if point.crystal == 1 else (partner.depth_mm, point.depth_mm)
    trace = _trace_stack(stack, waves, lam_s, alpha.alpha_x_rad, alpha.alpha_y_rad)
    raw = float(_raw_delta_phi(trace, z1, z2))
    ref = _on_axis_reference(stack, waves, reference_depth_samples)
    return raw - ref + global_offset_rad


def depth_resolved_delta_phi(
    stack: OpticalStack,
    waves: PairWavelengths,
    alpha: EmissionAngle,
    depths_mm,
    global_offset_rad: float = math.pi,
    lam_s_um: float | None = None,
) -> np.ndarray:
    """delta_phi for pairs born at each depth (crystal-1 parametrization)."""
    lam_s = waves.signal_um if lam_s_um is None else lam_s_um
    trace = _trace_stack(stack, waves, lam_s, alpha.alpha_x_rad, alpha.alpha_y_rad)
    ref = _on_axis_reference(stack, waves, 8)
    pairs = _depth_pairs(stack, waves, lam_s, depths_mm)
    return np.array([_raw_delta_phi(trace, z1, z2) - ref + global_offset_rad for z1, z2 in pairs])


def depth_phase_spread(
    stack: OpticalStack,
    waves: PairWavelengths,
    alpha: EmissionAngle,
    n_depths: int = 33,
    lam_s_um: float | None = None,
) -> float:
    """Peak-to-peak spread of delta_phi across generation depths."""
    depths = _midpoint_depths(stack.crystal1.thickness_mm, n_depths)
    values = depth_resolved_delta_phi(stack, waves, alpha, depths, 0.0, lam_s_um)
    return float(np.ptp(values))


def antiparallel_contrast(
    stack: OpticalStack,
    waves: PairWavelengths,
    bandwidth_nm: float = 25.0,
    n_depths: int = 33,
) -> float:
    """Maximum on-axis depth spread of delta_phi for an anti-parallel stack.

    Evaluated at the band center and both band edges: at the exactly
    phase-matched center wavelength the longitudinal mismatch vanishes and
    any stacking order looks depth-invariant, so the spectral edges carry
    the contrast.
    """
    if stack.axis_configuration != "anti-parallel":
        raise ValueError("antiparallel_contrast requires an anti-parallel stack")
    alpha = EmissionAngle(0.0, 0.0)
    half_bw_um = bandwidth_nm * 1e-3 / 2.0
    lams = [waves.signal_um - half_bw_um, waves.signal_um, waves.signal_um + half_bw_um]
    return max(depth_phase_spread(stack, waves, alpha, n_depths, lam) for lam in lams)


def phase_map(
    stack: OpticalStack,
    waves: PairWavelengths,
    grid: GridSpec,
    averaging: AveragingSpec = AveragingSpec(),
    global_offset_rad: float = math.pi,
    extra_metadata: dict | None = None,
) -> PhaseMap:
    """delta_phi over the emission-angle grid, depth-averaged (and
    optionally band-averaged), unwrapped, anchored to the global offset."""
    axis = grid.axis_deg()
    ax, ay = np.meshgrid(np.deg2rad(axis), np.deg2rad(axis))

    if averaging.band_samples > 1:
        half_bw = averaging.bandwidth_nm * 1e-3 / 2.0
        lam_list = list(waves.signal_um + np.linspace(-half_bw, half_bw, averaging.band_samples))
    else:
        lam_list = [waves.signal_um]

    acc = np.zeros_like(ax)
    count = 0
    for lam_s in lam_list:
        trace = _trace_stack(stack, waves, lam_s, ax, ay)
        depths = _midpoint_depths(stack.crystal1.thickness_mm, averaging.depth_samples)
        for z1, z2 in _depth_pairs(stack, waves, lam_s, depths):
            acc = acc + _raw_delta_phi(trace, z1, z2)
            count += 1
    raw = acc / count

    center = len(axis) // 2
    rel = raw - raw[center, center]
    _check_unwrappable(rel, grid.step_deg)
    values = rel + global_offset_rad

    # analytic bound on the depth dependence of delta_phi anywhere on this
    # grid: the pairing leaves a clamped band of width w near the entry
    # face where the partner depth saturates, and there delta_phi changes
    # by the longitudinal mismatch (pump minus ordinary pair) per length.
    trace0 = _trace_stack(stack, waves, waves.signal_um, ax, ay)
    mismatch = np.abs(trace0.kp_crystal - trace0.k_c1_o[0] - trace0.k_c1_o[1])
    mid = stack.crystal1.thickness_mm / 2.0
    pairs_mid = _depth_pairs(stack, waves, waves.signal_um, [mid])
    clamp_width_mm = abs(pairs_mid[0][1] - mid)
    depth_bound = float(np.max(mismatch)) * clamp_width_mm * 1e3

    metadata = {
        "depth_residual_bound_rad": depth_bound,
        "lambda_pump_um": waves.pump_um,
        "lambda_signal_um": waves.signal_um,
        "lambda_idler_um": waves.idler_um,
        "global_offset_rad": global_offset_rad,
        "depth_samples": averaging.depth_samples,
        "band_samples": averaging.band_samples,
        "axis_configuration": stack.axis_configuration,
        "sellmeier_labels": ";".join(
            sorted(
                {
                    stack.crystal1.ordinary.source_label,
                    stack.crystal1.extraordinary_principal.source_label,
                }
                | (
                    {
                        stack.compensator.ordinary.source_label,
                        stack.compensator.extraordinary_principal.source_label,
                    }
                    if stack.compensator is not None
                    else set()
                )
            )
        ),
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    return PhaseMap(axis.copy(), axis.copy(), values, metadata)


def _check_unwrappable(rel: np.ndarray, step_deg: float):
    """The map must vary by less than pi between neighboring cells, and the
    wrap-then-unwrap round trip must reproduce it; otherwise the grid is
    too coarse for unambiguous unwrapping."""
    jump = max(
        float(np.max(np.abs(np.diff(rel, axis=0)), initial=0.0)),
        float(np.max(np.abs(np.diff(rel, axis=1)), initial=0.0)),
    )
    if jump >= math.pi:
        raise CoarseGridError(
            f"phase changes by {jump:.2f} rad between neighboring cells at "
            f"step {step_deg} deg; refine the grid below {step_deg * math.pi / jump:.4f} deg"
        )
    wrapped = np.angle(np.exp(1j * rel))
    unwrapped = unwrap_about_center(wrapped)
    if np.max(np.abs(unwrapped - rel)) > 1e-6:
        raise CoarseGridError(
            f"unwrapping is ambiguous at step {step_deg} deg; refine the grid"
        )


def unwrap_about_center(wrapped: np.ndarray) -> np.ndarray:
    """Unwrap a smooth 2-D phase field starting from the central cell:
    first along the central row, then along every column."""
    out = wrapped.copy()
    cy, cx = out.shape[0] // 2, out.shape[1] // 2
    row = out[cy, :]
    row[cx:] = np.unwrap(row[cx:])
    row[: cx + 1] = np.unwrap(row[: cx + 1][::-1])[::-1]
    out[cy:, :] = np.unwrap(out[cy:, :], axis=0)
    out[: cy + 1, :] = np.unwrap(out[: cy + 1, :][::-1, :], axis=0)[::-1, :]
    return out - out[cy, cx] + wrapped[cy, cx]


def crystal_length_scaling_check(
    stack: OpticalStack,
    waves: PairWavelengths,
    length1_mm: float,
    length2_mm: float,
    grid: GridSpec,
    averaging: AveragingSpec = AveragingSpec(),
    global_offset_rad: float = math.pi,
    exclusion_deg: float = 0.05,
) -> float:
    """Max relative deviation of (delta_phi - offset) from linear scaling
    in the crystal length, excluding a small on-axis disc where the values
    cross zero."""
    scale = length2_mm / length1_mm
    map1 = phase_map(stack.with_crystal_lengths(length1_mm), waves, grid, averaging, 0.0)
    map2 = phase_map(stack.with_crystal_lengths(length2_mm), waves, grid, averaging, 0.0)
    r = np.hypot(*np.meshgrid(map1.alpha_x_deg, map1.alpha_y_deg))
    outside = r > exclusion_deg
    expected = scale * map1.values[outside]
    actual = map2.values[outside]
    return float(np.max(np.abs(actual - expected) / np.abs(expected)))


def spectral_phase_profile(
    stack: OpticalStack,
    waves: PairWavelengths,
    bandwidth_nm: float = 25.0,
    samples: int = 21,
    depth_samples: int = 8,
    global_offset_rad: float = math.pi,
) -> list[tuple[float, float]]:
    """On-axis, depth-averaged delta_phi across the signal bandwidth.

    Returns (signal wavelength in nm, delta_phi in rad) pairs; the idler
    wavelength follows energy conservation at every sample.
    """
    half_bw_um = bandwidth_nm * 1e-3 / 2.0
    lam_grid = waves.signal_um + np.linspace(-half_bw_um, half_bw_um, samples)
    alpha = EmissionAngle(0.0, 0.0)
    depths = _midpoint_depths(stack.crystal1.thickness_mm, depth_samples)
    out = []
    for lam_s in lam_grid:
        values = depth_resolved_delta_phi(stack, waves, alpha, depths, global_offset_rad, float(lam_s))
        out.append((float(lam_s * 1e3), float(np.mean(values))))
    return out


@dataclass(frozen=True)
class CompensatorResult:
    thickness_mm: float
    peak_to_peak_rad: float
    uncompensated_peak_to_peak_rad: float
    degenerate: bool = False
    message: str = ""


def optimize_compensator_thickness(
    stack: OpticalStack,
    waves: PairWavelengths,
    interval_mm: tuple[float, float] = (0.5, 10.0),
    bandwidth_nm: float = 25.0,
    samples: int = 21,
    depth_samples: int = 4,
    tol_mm: float = 1e-3,
) -> CompensatorResult:
    """Compensator thickness minimizing the peak-to-peak spectral spread of
    the on-axis delta_phi.  Deterministic to ``tol_mm``.

    Raises ValueError when the optimum sits on the interval boundary (no
    interior minimum); returns a degenerate-flagged result when the
    objective is flat (zero bandwidth).
    """
    lo, hi = interval_mm
    if not 0 <= lo < hi <= 10.0:
        raise ValueError("search interval must lie within [0, 10] mm")
    lo = max(lo, 1e-4)
    if stack.compensator is None:
        raise ValueError("stack has no compensator element to optimize")

    def peak_to_peak(thickness_mm: float) -> float:
        trial = stack.with_compensator_thickness(thickness_mm)
        profile = spectral_phase_profile(
            trial, waves, bandwidth_nm, samples, depth_samples, 0.0
        )
        phis = [p for _, p in profile]
        return max(phis) - min(phis)

    bare_profile = spectral_phase_profile(
        stack.without_compensator(), waves, bandwidth_nm, samples, depth_samples, 0.0
    )
    bare = [p for _, p in bare_profile]
    baseline = max(bare) - min(bare)

    probes = [peak_to_peak(t) for t in (lo, 0.5 * (lo + hi), hi)]
    if max(probes) - min(probes) < 1e-12:
        return CompensatorResult(
            thickness_mm=float("nan"),
            peak_to_peak_rad=probes[0],
            uncompensated_peak_to_peak_rad=baseline,
            degenerate=True,
            message="objective is flat over the interval (zero spectral bandwidth?)",
        )

    res = minimize_scalar(peak_to_peak, bounds=(lo, hi), method="bounded", options={"xatol": tol_mm})
    best = float(res.x)
    if best - lo < 2 * tol_mm or hi - best < 2 * tol_mm:
        raise ValueError(
            f"no interior minimum: optimizer stopped at {best:.4f} mm on the "
            f"interval [{lo}, {hi}] mm (check compensator orientation/material)"
        )
    return CompensatorResult(
        thickness_mm=best,
        peak_to_peak_rad=float(res.fun),
        uncompensated_peak_to_peak_rad=baseline,
    )


def fit_radial_quadratic(
    pmap: PhaseMap, global_offset_rad: float, max_radius_deg: float = 0.3
) -> tuple[float, float, float]:
    """Least-squares radial profile c2*r^2 (r in degrees) matching
    -(delta_phi - offset) inside ``max_radius_deg``.

    Returns polynomial coefficients (c0, c1, c2) in ascending powers of r;
    only the quadratic term is fitted.
    """
    r = np.hypot(*np.meshgrid(pmap.alpha_x_deg, pmap.alpha_y_deg))
    mask = r <= max_radius_deg
    y = -(pmap.values[mask] - global_offset_rad)
    r2 = r[mask] ** 2
    c2 = float(np.sum(y * r2) / np.sum(r2 * r2))
    return (0.0, 0.0, c2)


def apply_radial_compensation(pmap: PhaseMap, coeffs: tuple[float, ...]) -> PhaseMap:
    """Add a radially symmetric phase profile (polynomial in r, degrees) to
    the map; the aperture retains its mirror symmetry."""
    r = np.hypot(*np.meshgrid(pmap.alpha_x_deg, pmap.alpha_y_deg))
    profile = np.polyval(list(reversed(coeffs)), r)
    metadata = dict(pmap.metadata)
    metadata["radial_profile_coeffs"] = tuple(float(c) for c in coeffs)
    return PhaseMap(pmap.alpha_x_deg.copy(), pmap.alpha_y_deg.copy(), pmap.values + profile, metadata)
