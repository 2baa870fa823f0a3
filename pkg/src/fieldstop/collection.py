"""Circular field-stop collection: rates, aperture-averaged fidelity,
iris-translation scans, saturation fits, and fidelity/brightness tradeoffs.

The angular far-field pair density is modeled as a radially symmetric
Gaussian over the signal emission angle; a circular iris of diameter d in
the collimated beam collects the angular disc of radius (d/2)/scale.
Idler-arm bucket detection is assumed (all idler angles accepted), so the
collected state mixes pure states over the signal-angle footprint only.
Detector efficiencies and pair-to-singles ratios are reporting constants;
they never enter the fidelity math.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import erf

from .phase import PhaseMap
from .states import mix_over_phases, pure_state_fidelity

APERTURE_PLANES = ("before-split", "signal-arm")


@dataclass(frozen=True)
class EmissionProfile:
    """Radial Gaussian angular pair density with saturation rate
    ``r_max_pairs_per_s_per_mw``; the rate scales linearly with crystal
    length, anchored at ``reference_length_mm``."""

    sigma_theta_deg: float
    r_max_pairs_per_s_per_mw: float
    reference_length_mm: float = 6.0

    def __post_init__(self):
        if self.sigma_theta_deg <= 0:
            raise ValueError("sigma_theta must be positive")
        if self.r_max_pairs_per_s_per_mw <= 0:
            raise ValueError("saturation rate must be positive")

    def density(self, alpha_x_deg, alpha_y_deg):
        """Pairs/s/mW per square degree of signal emission angle."""
        r2 = np.asarray(alpha_x_deg) ** 2 + np.asarray(alpha_y_deg) ** 2
        s2 = self.sigma_theta_deg**2
        return self.r_max_pairs_per_s_per_mw / (2.0 * math.pi * s2) * np.exp(-r2 / (2.0 * s2))

    def weight(self, alpha_x_deg, alpha_y_deg):
        r2 = np.asarray(alpha_x_deg) ** 2 + np.asarray(alpha_y_deg) ** 2
        return np.exp(-r2 / (2.0 * self.sigma_theta_deg**2))

    def scaled_to_length(self, length_mm: float) -> "EmissionProfile":
        return EmissionProfile(
            self.sigma_theta_deg,
            self.r_max_pairs_per_s_per_mw * length_mm / self.reference_length_mm,
            length_mm,
        )


@dataclass(frozen=True)
class ApertureSpec:
    """Circular field stop in the collimated beam; iris position maps
    linearly to emission angle via ``scale_mm_per_deg``."""

    diameter_mm: float
    center_x_mm: float = 0.0
    center_y_mm: float = 0.0
    plane: str = "before-split"
    scale_mm_per_deg: float = 2.0

    def __post_init__(self):
        if self.diameter_mm < 0:
            raise ValueError("aperture diameter must be non-negative")
        if self.plane not in APERTURE_PLANES:
            raise ValueError(f"plane must be one of {APERTURE_PLANES}")
        if self.scale_mm_per_deg <= 0:
            raise ValueError("angle-position scale must be positive")

    @property
    def radius_deg(self) -> float:
        return 0.5 * self.diameter_mm / self.scale_mm_per_deg

    @property
    def center_deg(self) -> tuple[float, float]:
        return (
            self.center_x_mm / self.scale_mm_per_deg,
            self.center_y_mm / self.scale_mm_per_deg,
        )


def _disc_quadrature(radius_deg: float, n_radial: int = 48, n_azimuthal: int = 96):
    """Quadrature nodes/weights for integrals over a centered disc.

    Gauss-Legendre in u = r^2 makes the radial part exact for smooth
    integrands; uniform midpoint rule in azimuth converges spectrally for
    periodic integrands.
    """
    u_nodes, u_weights = np.polynomial.legendre.leggauss(n_radial)
    u = 0.5 * (u_nodes + 1.0) * radius_deg**2
    wu = 0.5 * u_weights * radius_deg**2
    r = np.sqrt(u)
    phi = (np.arange(n_azimuthal) + 0.5) * (2.0 * math.pi / n_azimuthal)
    wphi = 2.0 * math.pi / n_azimuthal
    xs = r[:, None] * np.cos(phi)[None, :]
    ys = r[:, None] * np.sin(phi)[None, :]
    weights = 0.5 * wu[:, None] * np.ones_like(phi)[None, :] * wphi
    return xs.ravel(), ys.ravel(), weights.ravel()


def aperture_fidelity(
    pmap: PhaseMap,
    aperture: ApertureSpec,
    profile: EmissionProfile,
    target: str = "phi_minus",
    n_radial: int = 48,
    n_azimuthal: int = 96,
) -> float:
    """Emission-weighted Bell-state fidelity over the aperture footprint:
    F = integral w(alpha) F_pure(delta_phi(alpha)) / integral w(alpha)."""
    cx, cy = aperture.center_deg
    if aperture.diameter_mm == 0:
        return float(pure_state_fidelity(pmap.interpolate(cx, cy), target))
    xs, ys, w = _disc_quadrature(aperture.radius_deg, n_radial, n_azimuthal)
    ax, ay = xs + cx, ys + cy
    weights = w * profile.weight(ax, ay)
    phases = pmap.interpolate(ax, ay)
    f = pure_state_fidelity(phases, target)
    return float(np.sum(weights * f) / np.sum(weights))


def collected_state(
    pmap: PhaseMap,
    aperture: ApertureSpec,
    profile: EmissionProfile,
    n_radial: int = 48,
    n_azimuthal: int = 96,
):
    """Mixed two-photon state collected through the aperture."""
    cx, cy = aperture.center_deg
    if aperture.diameter_mm == 0:
        return mix_over_phases([(1.0, float(pmap.interpolate(cx, cy)))])
    xs, ys, w = _disc_quadrature(aperture.radius_deg, n_radial, n_azimuthal)
    ax, ay = xs + cx, ys + cy
    weights = w * profile.weight(ax, ay)
    phases = pmap.interpolate(ax, ay)
    return mix_over_phases(zip(weights, phases))


def pair_rate(
    aperture: ApertureSpec,
    profile: EmissionProfile,
    n_radial: int = 48,
    n_azimuthal: int = 96,
) -> float:
    """Detected pair rate through a centered aperture: numerical integral
    of the Gaussian angular density over the angular disc.  Saturates at
    the profile's total rate as the aperture opens."""
    if aperture.center_x_mm != 0 or aperture.center_y_mm != 0:
        raise ValueError("pair_rate is defined for a centered aperture")
    if aperture.diameter_mm == 0:
        return 0.0
    xs, ys, w = _disc_quadrature(aperture.radius_deg, n_radial, n_azimuthal)
    return float(np.sum(w * profile.density(xs, ys)))


def iris_translation_scan(
    pmap: PhaseMap,
    positions_mm,
    diameter_mm: float,
    profile: EmissionProfile,
    scale_mm_per_deg: float,
    diameter_sigma_mm: float = 0.0,
    target: str = "phi_minus",
) -> list[tuple[float, float, float, float]]:
    """Fidelity versus vertical iris position in the signal arm, with an
    optional one-sigma band from the iris-diameter uncertainty.

    Returns (position_mm, fidelity, fidelity_lo, fidelity_hi) rows.  The
    phase calibration is whatever the map carries (set for maximum
    fidelity at position 0) and is not re-adjusted per position.
    """
    rows = []
    for pos in positions_mm:
        diameters = [diameter_mm]
        if diameter_sigma_mm > 0:
            diameters = [max(diameter_mm - diameter_sigma_mm, 0.0), diameter_mm, diameter_mm + diameter_sigma_mm]
        values = [
            aperture_fidelity(
                pmap,
                ApertureSpec(d, 0.0, float(pos), "signal-arm", scale_mm_per_deg),
                profile,
                target,
            )
            for d in diameters
        ]
        center = values[len(values) // 2] if len(values) == 3 else values[0]
        rows.append((float(pos), center, min(values), max(values)))
    return rows


# ---------------------------------------------------------------------------
# saturation-curve fitting


def gaussian_disc_model(half_angle_deg, scale, width_deg, offset):
    """Disc integral of a radial Gaussian: offset + scale * (1 - exp(-a^2/2w^2))."""
    a = np.asarray(half_angle_deg, dtype=float)
    return offset + scale * (1.0 - np.exp(-(a**2) / (2.0 * width_deg**2)))


def erf_model(half_angle_deg, scale, width_deg, offset):
    return offset + scale * erf(np.asarray(half_angle_deg, dtype=float) / (width_deg * math.sqrt(2.0)))


@dataclass
class SaturationFit:
    model: str
    scale: float
    width_deg: float
    offset: float
    residual_norm: float
    degenerate: bool = False
    message: str = ""


def fit_saturation_curve(half_angles_deg, rates, model: str = "erf") -> SaturationFit:
    """Least-squares saturation fit of rate vs collection half-angle.

    ``model`` selects the error-function family or the Gaussian-disc
    integral family.  Flat data yields a degenerate-flagged result instead
    of an arbitrary width.
    """
    angles = np.asarray(half_angles_deg, dtype=float)
    y = np.asarray(rates, dtype=float)
    if angles.size < 5:
        raise ValueError("need at least 5 points spanning the knee")
    models = {"erf": erf_model, "gaussian-disc": gaussian_disc_model}
    if model not in models:
        raise ValueError(f"model must be one of {tuple(models)}")
    span = float(np.ptp(y))
    if span <= 0 or span < 1e-12 * max(abs(float(np.max(y))), 1.0):
        return SaturationFit(model, 0.0, float("nan"), float(np.mean(y)), 0.0, True, "flat data: width unidentifiable")
    p0 = (float(np.max(y)), max(float(np.median(angles)) / 1.2, 1e-6), float(np.min(y)))
    try:
        popt, _ = curve_fit(models[model], angles, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise RuntimeError(f"saturation fit did not converge: {exc}") from exc
    residual = y - models[model](angles, *popt)
    return SaturationFit(model, float(popt[0]), abs(float(popt[1])), float(popt[2]), float(np.linalg.norm(residual)))


# ---------------------------------------------------------------------------
# fidelity / brightness tradeoff


@dataclass(frozen=True)
class TradeoffRow:
    length_mm: float
    diameter_mm: float
    rate_pairs_per_s_per_mw: float
    fidelity: float
    qber: float


def tradeoff_table(
    maps_by_length: dict[float, PhaseMap],
    diameters_mm,
    profile: EmissionProfile,
    scale_mm_per_deg: float,
    target: str = "phi_minus",
) -> list[TradeoffRow]:
    """Rate and fidelity for every (crystal length, iris diameter) pair.

    ``maps_by_length`` holds a phase map per crystal length; the saturation
    rate scales linearly with length relative to the profile's reference.
    The QBER column is the diagonal-basis error rate 1 - F.
    """
    rows = []
    for length in sorted(maps_by_length):
        pmap = maps_by_length[length]
        prof = profile.scaled_to_length(length)
        for d in diameters_mm:
            aperture = ApertureSpec(float(d), 0.0, 0.0, "before-split", scale_mm_per_deg)
            rate = pair_rate(aperture, prof)
            fidelity = aperture_fidelity(pmap, aperture, prof, target)
            rows.append(TradeoffRow(float(length), float(d), rate, fidelity, 1.0 - fidelity))
    return rows
