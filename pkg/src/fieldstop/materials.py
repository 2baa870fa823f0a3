"""Dispersion and birefringence of uniaxial crystals.

Refractive indices come from named Sellmeier coefficient sets shipped as
flat key-value data files (see ``data/``), so every number that enters a
simulation can be traced back to a published source via its
``source_label``.  Wavelengths are vacuum wavelengths in micrometers,
angles in radians, crystal thicknesses in millimeters.  Air is treated as
index exactly 1.

All functions here are pure and accept numpy arrays wherever a wavelength
or angle is expected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.optimize import brentq


class WavelengthRangeError(ValueError):
    """Wavelength outside the validity range of a coefficient set."""


class DegenerateInputError(ValueError):
    """Input that makes the requested quantity undefined."""


# Supported functional forms for n^2(lam), lam in micrometers.
_FORMS = ("single_pole",)  # n^2 = b1 + b2/(lam^2 - b3) - b4*lam^2


@dataclass(frozen=True)
class SellmeierModel:
    """One refractive-index branch of one material.

    ``coefficients`` are interpreted according to ``form``; only the
    four-coefficient ``single_pole`` form is currently shipped.
    """

    material: str
    coefficients: tuple[float, ...]
    valid_range_um: tuple[float, float]
    source_label: str
    form: str = "single_pole"

    def __post_init__(self):
        if self.form not in _FORMS:
            raise ValueError(f"unknown Sellmeier form {self.form!r}")
        if self.form == "single_pole" and len(self.coefficients) != 4:
            raise ValueError("single_pole form requires exactly 4 coefficients")
        lo, hi = self.valid_range_um
        if not 0 < lo < hi:
            raise ValueError(f"invalid wavelength range [{lo}, {hi}]")

    def _check_range(self, lam_um):
        lo, hi = self.valid_range_um
        lam = np.asarray(lam_um)
        if np.any(lam < lo) or np.any(lam > hi):
            bad = np.atleast_1d(lam)[(np.atleast_1d(lam) < lo) | (np.atleast_1d(lam) > hi)]
            raise WavelengthRangeError(
                f"{self.material} ({self.source_label}): wavelength "
                f"{float(bad.flat[0]):.4g} um outside valid range [{lo}, {hi}] um"
            )

    def index(self, lam_um):
        """Refractive index at vacuum wavelength ``lam_um`` (micrometers)."""
        self._check_range(lam_um)
        lam2 = np.square(lam_um)
        b1, b2, b3, b4 = self.coefficients
        return np.sqrt(b1 + b2 / (lam2 - b3) - b4 * lam2)


@dataclass(frozen=True)
class UniaxialCrystal:
    """A uniaxial crystal slab cut with its optic axis at ``cut_angle_rad``
    from the surface normal (= nominal propagation direction).

    ``axis_sign`` records whether the optic axis of this slab is tilted the
    same way (+1) or the opposite way (-1) as the first crystal of a stack;
    it matters only for stacked-crystal geometries.
    """

    material: str
    ordinary: SellmeierModel
    extraordinary_principal: SellmeierModel
    cut_angle_rad: float
    thickness_mm: float
    axis_sign: int = +1

    def __post_init__(self):
        if not 0.0 <= self.cut_angle_rad <= np.pi / 2:
            raise ValueError("cut angle must lie in [0, pi/2]")
        if self.thickness_mm <= 0:
            raise ValueError("thickness must be positive")
        if self.axis_sign not in (+1, -1):
            raise ValueError("axis_sign must be +1 or -1")


def index_ordinary(crystal: UniaxialCrystal, lam_um):
    """Ordinary index n_o(lam)."""
    return crystal.ordinary.index(lam_um)


def index_extraordinary_effective(crystal: UniaxialCrystal, lam_um, theta_prop_rad):
    """Extraordinary index for propagation at angle ``theta_prop_rad``
    between the wavevector and the optic axis.

    Index ellipsoid: 1/n(theta)^2 = cos^2(theta)/n_o^2 + sin^2(theta)/n_e^2.
    """
    theta = np.asarray(theta_prop_rad)
    if np.any(theta < 0) or np.any(theta > np.pi):
        raise ValueError("propagation angle must lie in [0, pi]")
    n_o = crystal.ordinary.index(lam_um)
    n_e = crystal.extraordinary_principal.index(lam_um)
    inv_n2 = np.cos(theta) ** 2 / n_o**2 + np.sin(theta) ** 2 / n_e**2
    return 1.0 / np.sqrt(inv_n2)


def walkoff_angle(crystal: UniaxialCrystal, lam_um, theta_prop_rad):
    """Poynting-vector walk-off angle rho for an extraordinary wave.

    tan(rho) = (n(theta)^2 / 2) * (1/n_e^2 - 1/n_o^2) * sin(2*theta)

    Sign convention: positive rho tilts the Poynting vector away from the
    optic axis (toward theta = 90 deg).  For a negative uniaxial crystal
    (n_e < n_o) rho is positive, so in a slab whose axis is tilted upward
    from the beam the energy walks downward.  This matches the
    finite-difference relation tan(rho) = -(1/n) dn/dtheta.
    """
    n = index_extraordinary_effective(crystal, lam_um, theta_prop_rad)
    n_o = crystal.ordinary.index(lam_um)
    n_e = crystal.extraordinary_principal.index(lam_um)
    tan_rho = 0.5 * n**2 * (1.0 / n_e**2 - 1.0 / n_o**2) * np.sin(2.0 * np.asarray(theta_prop_rad))
    return np.arctan(tan_rho)


def walkoff_mismatch(pump_rho_rad: float, spdc_rho_rad: float) -> float:
    """Relative walk-off mismatch |rho_p - rho_s| / rho_p."""
    if pump_rho_rad == 0:
        raise DegenerateInputError("pump walk-off is zero; relative mismatch undefined")
    return abs(pump_rho_rad - spdc_rho_rad) / abs(pump_rho_rad)


def phase_matching_angle(
    crystal: UniaxialCrystal, lam_pump_um: float, lam_signal_um: float, lam_idler_um: float
) -> float:
    """Cut angle (rad) for type-I collinear phase matching.

    Solves n_e(lam_p, theta)/lam_p = n_o(lam_s)/lam_s + n_o(lam_i)/lam_i
    for theta.  Raises ValueError when no solution exists in (0, pi/2).
    """
    target = (
        index_ordinary(crystal, lam_signal_um) / lam_signal_um
        + index_ordinary(crystal, lam_idler_um) / lam_idler_um
    )

    def residual(theta):
        return index_extraordinary_effective(crystal, lam_pump_um, theta) / lam_pump_um - target

    lo, hi = 1e-6, np.pi / 2 - 1e-6
    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo * r_hi > 0:
        raise ValueError(
            "no type-I collinear phase-matching angle in (0, 90) deg for "
            f"{crystal.material} at pump {lam_pump_um} um"
        )
    return brentq(residual, lo, hi, xtol=1e-12)


# ---------------------------------------------------------------------------
# coefficient-set loading

_KV_RE = re.compile(r"^\s*([A-Za-z0-9_]+)\s*=\s*(.+?)\s*$")


def _parse_kv_file(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line in text.splitlines():
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        m = _KV_RE.match(stripped)
        if m is None:
            raise ValueError(f"malformed coefficient-file line: {line!r}")
        entries[m.group(1)] = m.group(2)
    return entries


def _data_text(filename: str) -> str:
    return resources.files("fieldstop.data").joinpath(filename).read_text()


def load_sellmeier(material: str, label: str, branch: str) -> SellmeierModel:
    """Load one index branch ('o' or 'e') of a named coefficient set."""
    if branch not in ("o", "e"):
        raise ValueError("branch must be 'o' or 'e'")
    filename = f"{material}_{label}_{branch}.txt"
    try:
        entries = _parse_kv_file(_data_text(filename))
    except FileNotFoundError:
        available = sorted(
            p.name for p in resources.files("fieldstop.data").iterdir() if p.name.endswith(".txt")
        )
        raise ValueError(
            f"no coefficient set {filename!r}; available: {', '.join(available)}"
        ) from None
    coeff_keys = sorted(k for k in entries if re.fullmatch(r"b\d+", k))
    coefficients = tuple(float(entries[k]) for k in coeff_keys)
    return SellmeierModel(
        material=entries["material"],
        coefficients=coefficients,
        valid_range_um=(float(entries["range_um_min"]), float(entries["range_um_max"])),
        source_label=entries["source_label"],
        form=entries["form"],
    )


def load_crystal(
    material: str,
    label: str,
    cut_angle_rad: float,
    thickness_mm: float,
    axis_sign: int = +1,
) -> UniaxialCrystal:
    """Build a UniaxialCrystal from a named coefficient set."""
    return UniaxialCrystal(
        material=material,
        ordinary=load_sellmeier(material, label, "o"),
        extraordinary_principal=load_sellmeier(material, label, "e"),
        cut_angle_rad=cut_angle_rad,
        thickness_mm=thickness_mm,
        axis_sign=axis_sign,
    )
