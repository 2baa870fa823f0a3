"""Ordered optical stack and planar-interface ray geometry.

The stack runs crystal1 -> HWP -> crystal2 -> (collimation) -> compensator.
The compensator sits in collimated space, where every emission angle has
been mapped to a transverse position (``angle_position_scale_mm_per_deg``),
so rays cross it at normal incidence.

The transverse coordinate is lab-frame y (positive up).  Both crystals'
optic axes lie in the y-z plane, tilted toward +y by the cut angle; with
the walk-off sign convention of :mod:`fieldstop.materials` every
extraordinary ray then walks toward -y.  In the anti-parallel
configuration the second crystal's axis (and with it the walk-off
direction) is flipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .materials import UniaxialCrystal

MAX_EMISSION_ANGLE_RAD = math.radians(5.0)  # validity window of the small-angle model

ROLES = ("crystal1", "hwp", "crystal2", "gap", "compensator")
AXIS_CONFIGURATIONS = ("parallel", "anti-parallel")


@dataclass(frozen=True)
class StackElement:
    medium: str
    thickness_mm: float
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown element role {self.role!r}")
        if self.thickness_mm <= 0:
            raise ValueError(f"element {self.medium!r}: thickness must be positive")


@dataclass(frozen=True)
class EmissionAngle:
    """External signal emission angles (radians); alpha_y positive = upward."""

    alpha_x_rad: float
    alpha_y_rad: float

    def __post_init__(self):
        if abs(self.alpha_x_rad) > MAX_EMISSION_ANGLE_RAD or abs(self.alpha_y_rad) > MAX_EMISSION_ANGLE_RAD:
            raise ValueError("emission angle outside the 5 deg validity window")


@dataclass(frozen=True)
class GenerationPoint:
    """Pair-generation point: crystal 1 or 2, depth from that crystal's
    entry face.  ``transverse_offset_mm`` is the pump walk-off displacement
    accumulated before generation (lab y, filled in by the stack)."""

    crystal: int
    depth_mm: float
    transverse_offset_mm: float = 0.0

    def __post_init__(self):
        if self.crystal not in (1, 2):
            raise ValueError("crystal must be 1 or 2")
        if self.depth_mm < 0:
            raise ValueError("depth must be non-negative")


@dataclass(frozen=True)
class OpticalStack:
    """Ordered media plus the crystal/compensator descriptions they refer to."""

    elements: tuple[StackElement, ...]
    crystal1: UniaxialCrystal
    crystal2: UniaxialCrystal
    compensator: UniaxialCrystal | None
    hwp_bulk_index: float
    axis_configuration: str
    angle_position_scale_mm_per_deg: float
    compensator_e_axis: str = "horizontal"  # which photon polarization sees n_e

    def __post_init__(self):
        roles = [e.role for e in self.elements]
        for unique_role in ("crystal1", "hwp", "crystal2"):
            if roles.count(unique_role) != 1:
                raise ValueError(f"stack must contain exactly one {unique_role} element")
        if roles.count("compensator") > 1:
            raise ValueError("stack must contain at most one compensator element")
        order = [roles.index("crystal1"), roles.index("hwp"), roles.index("crystal2")]
        if order != sorted(order):
            raise ValueError("stack order must be crystal1, hwp, crystal2")
        if "compensator" in roles and roles.index("compensator") < roles.index("crystal2"):
            raise ValueError("compensator must come after crystal2")
        if self.axis_configuration not in AXIS_CONFIGURATIONS:
            raise ValueError(f"axis_configuration must be one of {AXIS_CONFIGURATIONS}")
        if self.angle_position_scale_mm_per_deg <= 0:
            raise ValueError("angle_position_scale must be positive")
        if self.compensator_e_axis not in ("horizontal", "vertical"):
            raise ValueError("compensator_e_axis must be 'horizontal' or 'vertical'")
        if self.hwp_bulk_index < 1:
            raise ValueError("hwp_bulk_index must be >= 1")
        for crystal, role in ((self.crystal1, "crystal1"), (self.crystal2, "crystal2")):
            if abs(crystal.thickness_mm - self.element(role).thickness_mm) > 1e-12:
                raise ValueError(f"{role} element thickness disagrees with crystal description")

    def element(self, role: str) -> StackElement:
        return next(e for e in self.elements if e.role == role)

    @property
    def crystal2_axis_sign(self) -> int:
        return +1 if self.axis_configuration == "parallel" else -1

    def crystal_for(self, point: GenerationPoint) -> UniaxialCrystal:
        return self.crystal1 if point.crystal == 1 else self.crystal2

    def with_crystal_lengths(self, length_mm: float) -> "OpticalStack":
        """Copy of the stack with both crystal lengths set to ``length_mm``."""
        elements = tuple(
            replace(e, thickness_mm=length_mm) if e.role in ("crystal1", "crystal2") else e
            for e in self.elements
        )
        return replace(
            self,
            elements=elements,
            crystal1=replace(self.crystal1, thickness_mm=length_mm),
            crystal2=replace(self.crystal2, thickness_mm=length_mm),
        )

    def with_compensator_thickness(self, thickness_mm: float) -> "OpticalStack":
        if self.compensator is None:
            raise ValueError("stack has no compensator element")
        if thickness_mm <= 0:
            raise ValueError("compensator thickness must be positive")
        elements = tuple(
            replace(e, thickness_mm=thickness_mm) if e.role == "compensator" else e
            for e in self.elements
        )
        return replace(
            self,
            elements=elements,
            compensator=replace(self.compensator, thickness_mm=thickness_mm),
        )

    def without_compensator(self) -> "OpticalStack":
        """Copy of the stack with the compensator element removed."""
        elements = tuple(e for e in self.elements if e.role != "compensator")
        return replace(self, elements=elements, compensator=None)

    def without_isotropic_spacers(self) -> "OpticalStack":
        """Copy with all gaps and the HWP bulk path shrunk to (near) zero.

        Used by length-scaling checks: only the crystals then contribute a
        thickness that scales.
        """
        eps = 1e-9
        elements = tuple(
            replace(e, thickness_mm=eps) if e.role in ("gap", "hwp") else e
            for e in self.elements
        )
        return replace(self, elements=elements)

    def with_axis_configuration(self, axis_configuration: str) -> "OpticalStack":
        return replace(self, axis_configuration=axis_configuration)


# ---------------------------------------------------------------------------
# planar-interface geometry


def refract_external_to_internal(alpha_ext_rad, n):
    """Internal propagation angle from Snell's law: sin a_ext = n sin a_int."""
    return np.arcsin(np.sin(alpha_ext_rad) / n)


def path_length_in_element(thickness_mm, alpha_int_rad):
    """Geometric ray path through a slab crossed at internal angle alpha."""
    return thickness_mm / np.cos(alpha_int_rad)


# ---------------------------------------------------------------------------
# generation depth <-> transverse exit position


def pump_offset_at_birth(point: GenerationPoint, stack: OpticalStack, pump_rho_rad: float) -> float:
    """Pump-beam transverse displacement (mm, lab y) accumulated when the
    pump reaches the generation point.  Walk-off happens only inside the
    crystals; isotropic spacers leave the on-axis pump untouched."""
    t = math.tan(pump_rho_rad)
    if point.crystal == 1:
        return -point.depth_mm * t
    return -stack.crystal1.thickness_mm * t - stack.crystal2_axis_sign * point.depth_mm * t


def transverse_exit_position(
    point: GenerationPoint,
    stack: OpticalStack,
    pump_rho_rad: float,
    spdc_rho_rad: float,
) -> float:
    """Transverse position (mm, lab y) of a pair at the crystal-2 exit face,
    relative to pairs born at the crystal-2 exit face (which sit at 0).

    Crystal-1 pairs inherit the pump offset at birth, cross the rest of
    crystal 1 as ordinary rays (no walk-off), and walk through all of
    crystal 2 as extraordinary rays.  Crystal-2 pairs inherit the pump
    offset at birth and leave as ordinary rays.
    """
    if point.depth_mm > stack.crystal_for(point).thickness_mm + 1e-12:
        raise ValueError("generation depth exceeds crystal thickness")
    s2 = stack.crystal2_axis_sign
    l2 = stack.crystal2.thickness_mm
    if point.crystal == 1:
        raw = pump_offset_at_birth(point, stack, pump_rho_rad) - s2 * l2 * math.tan(spdc_rho_rad)
    else:
        raw = pump_offset_at_birth(point, stack, pump_rho_rad)
    reference = pump_offset_at_birth(GenerationPoint(2, l2), stack, pump_rho_rad)
    return raw - reference


def paired_point(
    point: GenerationPoint,
    stack: OpticalStack,
    pump_rho_rad: float,
    spdc_rho_rad: float,
) -> GenerationPoint:
    """Generation point in the other crystal whose pairs exit at the same
    transverse position, clamped to that crystal's physical depth range.

    With parallel axes the partner sits at (almost) the same depth; with
    anti-parallel axes the exit profiles barely overlap and most depths
    clamp to a crystal face.
    """
    x = transverse_exit_position(point, stack, pump_rho_rad, spdc_rho_rad)
    tp = math.tan(pump_rho_rad)
    ts = math.tan(spdc_rho_rad)
    s2 = stack.crystal2_axis_sign
    l1 = stack.crystal1.thickness_mm
    l2 = stack.crystal2.thickness_mm
    if tp == 0:
        # no walk-off: every depth exits at the same position; pair by depth
        other = 2 if point.crystal == 1 else 1
        length = l2 if other == 2 else l1
        return GenerationPoint(other, min(point.depth_mm, length))
    if point.crystal == 1:
        # invert T_hh(z2) = s2*tp*(l2 - z2) for z2
        depth, other, length = l2 - s2 * x / tp, 2, l2
    else:
        # invert T_vv(z1) = tp*(l1 - z1) + s2*l2*(tp - ts) for z1
        depth, other, length = l1 + s2 * l2 * (tp - ts) / tp - x / tp, 1, l1
    return GenerationPoint(other, min(max(depth, 0.0), length))
