"""Flat key-value source configuration.

One ``key = value`` per line, ``#`` comments.  The optical stack is
declared as ordered element sections ``element<k>_medium``,
``element<k>_thickness_mm``, ``element<k>_role``.  Parsing validates
everything it can and reports all failures at once, with line numbers.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .geometry import AXIS_CONFIGURATIONS, OpticalStack, StackElement
from .materials import load_crystal
from .phase import ENERGY_CONSERVATION_TOL, PairWavelengths


class ConfigError(ValueError):
    """Aggregated configuration failures."""

    def __init__(self, path, errors):
        self.errors = list(errors)
        lines = "\n".join(f"  line {ln if ln else '?'}: {msg}" for ln, msg in self.errors)
        super().__init__(f"invalid configuration {path}:\n{lines}")


@dataclass
class SourceConfig:
    # wavelengths (nm)
    pump_nm: float
    signal_nm: float
    idler_nm: float
    signal_bandwidth_nm: float
    # crystals
    cut_angle_deg: float
    axis_configuration: str
    sellmeier_bbo: str
    sellmeier_yvo4: str
    hwp_bulk_index: float
    compensator_e_axis: str
    elements: tuple[StackElement, ...]
    # calibration
    global_phase_offset_rad: float
    angle_position_scale_mm_per_deg: float
    sigma_theta_deg: float
    r_max_pairs_per_s_per_mw: float
    # iris
    iris_diameter_mm: float
    iris_diameter_sigma_mm: float
    iris_scan_halfspan_mm: float
    iris_scan_step_mm: float
    # scan grids
    aperture_diameters_mm: tuple[float, ...]
    tradeoff_lengths_mm: tuple[float, ...]
    tradeoff_diameters_mm: tuple[float, ...]
    # numerics
    grid_step_deg: float
    grid_half_extent_deg: float
    depth_samples: int
    spectral_samples: int
    polarizer_step_deg: float
    polarizer_noise_rel: float
    compensator_search_min_mm: float
    compensator_search_max_mm: float
    # provenance
    raw: dict[str, str] = field(default_factory=dict, repr=False)

    def wavelengths(self) -> PairWavelengths:
        return PairWavelengths(self.pump_nm * 1e-3, self.signal_nm * 1e-3, self.idler_nm * 1e-3)

    def hash(self) -> str:
        canonical = "\n".join(f"{k}={self.raw[k]}" for k in sorted(self.raw))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


_DEFAULTS: dict[str, str] = {
    "signal_bandwidth_nm": "25.0",
    "axis_configuration": "parallel",
    "sellmeier_bbo": "eimerl87",
    "sellmeier_yvo4": "vendor",
    "hwp_bulk_index": "1.5",
    "compensator_e_axis": "horizontal",
    "global_phase_offset_rad": repr(math.pi),
    "angle_position_scale_mm_per_deg": "2.0",
    "sigma_theta_deg": "0.19",
    "r_max_pairs_per_s_per_mw": "321000.0",
    "iris_diameter_mm": "0.65",
    "iris_diameter_sigma_mm": "0.10",
    "iris_scan_halfspan_mm": "3.0",
    "iris_scan_step_mm": "0.1",
    "aperture_diameters_mm": "0.1,0.2,0.3,0.4,0.5,0.65,0.8,1.0,1.2,1.6,2.0,2.4,3.0,4.0,6.0",
    "tradeoff_lengths_mm": "3.0,6.0,12.0",
    "tradeoff_diameters_mm": "0.1,0.2,0.3,0.4,0.5,0.65,0.68,0.8,1.0,1.2,1.6,2.0,3.0",
    "grid_step_deg": "0.02",
    "grid_half_extent_deg": "1.8",
    "depth_samples": "8",
    "spectral_samples": "21",
    "polarizer_step_deg": "5.0",
    "polarizer_noise_rel": "0.02",
    "compensator_search_min_mm": "0.5",
    "compensator_search_max_mm": "10.0",
}

_REQUIRED = ("pump_nm", "signal_nm", "idler_nm", "cut_angle_deg")


def default_config_path() -> Path:
    return Path(str(resources.files("fieldstop.data").joinpath("paper_6mm.conf")))


def _read_kv(path: Path):
    entries: dict[str, str] = {}
    lines: dict[str, int] = {}
    errors: list[tuple[int | None, str]] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append((lineno, f"expected 'key = value', got {stripped!r}"))
            continue
        key, value = (s.strip() for s in stripped.split("=", 1))
        if not key:
            errors.append((lineno, "empty key"))
            continue
        if key in entries:
            errors.append((lineno, f"duplicate key {key!r} (first on line {lines[key]})"))
            continue
        entries[key] = value
        lines[key] = lineno
    return entries, lines, errors


def parse_config(path) -> SourceConfig:
    """Parse and validate a configuration file; raises ConfigError listing
    every problem found (with line numbers where available)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(path, [(None, "file does not exist")])
    entries, linenos, errors = _read_kv(path)

    merged = dict(_DEFAULTS)
    merged.update(entries)

    def lineof(key):
        return linenos.get(key)

    for key in _REQUIRED:
        if key not in entries:
            errors.append((None, f"missing required key {key!r}"))

    def get_float(key, minimum=None, maximum=None, strict_min=False):
        if key not in merged:
            return None
        try:
            value = float(merged[key])
        except ValueError:
            errors.append((lineof(key), f"{key}: not a number: {merged[key]!r}"))
            return None
        if minimum is not None and (value <= minimum if strict_min else value < minimum):
            op = ">" if strict_min else ">="
            errors.append((lineof(key), f"{key}: must be {op} {minimum}, got {value}"))
            return None
        if maximum is not None and value > maximum:
            errors.append((lineof(key), f"{key}: must be <= {maximum}, got {value}"))
            return None
        return value

    def get_int(key, minimum=1):
        value = get_float(key, minimum)
        if value is None:
            return None
        if value != int(value):
            errors.append((lineof(key), f"{key}: must be an integer, got {value}"))
            return None
        return int(value)

    def get_choice(key, choices):
        value = merged.get(key)
        if value not in choices:
            errors.append((lineof(key), f"{key}: must be one of {choices}, got {value!r}"))
            return None
        return value

    def get_list(key):
        try:
            values = tuple(float(v) for v in merged[key].split(","))
        except ValueError:
            errors.append((lineof(key), f"{key}: not a comma-separated number list: {merged[key]!r}"))
            return ()
        if any(v <= 0 for v in values):
            errors.append((lineof(key), f"{key}: entries must be positive"))
            return ()
        return values

    pump_nm = get_float("pump_nm", 0.0, strict_min=True)
    signal_nm = get_float("signal_nm", 0.0, strict_min=True)
    idler_nm = get_float("idler_nm", 0.0, strict_min=True)
    if None not in (pump_nm, signal_nm, idler_nm):
        rel = abs(1.0 / signal_nm + 1.0 / idler_nm - 1.0 / pump_nm) * pump_nm
        if rel > ENERGY_CONSERVATION_TOL:
            errors.append(
                (
                    lineof("pump_nm"),
                    f"energy conservation violated: 1/{signal_nm} + 1/{idler_nm} deviates "
                    f"from 1/{pump_nm} by {rel:.2e} relative (limit {ENERGY_CONSERVATION_TOL:.0e})",
                )
            )

    cut = get_float("cut_angle_deg")
    if cut is not None and not 0.0 < cut < 90.0:
        errors.append((lineof("cut_angle_deg"), f"cut_angle_deg: must lie in (0, 90), got {cut}"))

    # ordered stack elements
    element_indices = sorted(
        {
            int(k[len("element") : -len("_medium")])
            for k in merged
            if k.startswith("element") and k.endswith("_medium")
        }
    )
    elements: list[StackElement] = []
    for idx in element_indices:
        base = f"element{idx}_"
        medium = merged.get(base + "medium")
        role = merged.get(base + "role")
        thickness = get_float(base + "thickness_mm", 0.0, strict_min=True)
        if role is None:
            errors.append((lineof(base + "medium"), f"element {idx}: missing {base}role"))
            continue
        if thickness is None:
            continue
        try:
            elements.append(StackElement(medium, thickness, role))
        except ValueError as exc:
            errors.append((lineof(base + "role"), f"element {idx}: {exc}"))
    if not element_indices:
        errors.append((None, "no stack elements declared (element1_medium = ... etc.)"))

    config = SourceConfig(
        pump_nm=pump_nm or 0.0,
        signal_nm=signal_nm or 0.0,
        idler_nm=idler_nm or 0.0,
        signal_bandwidth_nm=get_float("signal_bandwidth_nm", 0.0) or 0.0,
        cut_angle_deg=cut or 0.0,
        axis_configuration=get_choice("axis_configuration", AXIS_CONFIGURATIONS) or "parallel",
        sellmeier_bbo=merged["sellmeier_bbo"],
        sellmeier_yvo4=merged["sellmeier_yvo4"],
        hwp_bulk_index=get_float("hwp_bulk_index", 1.0) or 1.5,
        compensator_e_axis=get_choice("compensator_e_axis", ("horizontal", "vertical")) or "horizontal",
        elements=tuple(elements),
        global_phase_offset_rad=get_float("global_phase_offset_rad") or 0.0,
        angle_position_scale_mm_per_deg=get_float("angle_position_scale_mm_per_deg", 0.0, strict_min=True) or 2.0,
        sigma_theta_deg=get_float("sigma_theta_deg", 0.0, strict_min=True) or 0.19,
        r_max_pairs_per_s_per_mw=get_float("r_max_pairs_per_s_per_mw", 0.0, strict_min=True) or 321000.0,
        iris_diameter_mm=get_float("iris_diameter_mm", 0.0, strict_min=True) or 0.65,
        iris_diameter_sigma_mm=get_float("iris_diameter_sigma_mm", 0.0) or 0.0,
        iris_scan_halfspan_mm=get_float("iris_scan_halfspan_mm", 0.0, strict_min=True) or 3.0,
        iris_scan_step_mm=get_float("iris_scan_step_mm", 0.0, strict_min=True) or 0.1,
        aperture_diameters_mm=get_list("aperture_diameters_mm"),
        tradeoff_lengths_mm=get_list("tradeoff_lengths_mm"),
        tradeoff_diameters_mm=get_list("tradeoff_diameters_mm"),
        grid_step_deg=get_float("grid_step_deg", 0.0, strict_min=True) or 0.02,
        grid_half_extent_deg=get_float("grid_half_extent_deg", 0.0, strict_min=True) or 1.8,
        depth_samples=get_int("depth_samples") or 8,
        spectral_samples=get_int("spectral_samples", 3) or 21,
        polarizer_step_deg=get_float("polarizer_step_deg", 0.0, strict_min=True) or 5.0,
        polarizer_noise_rel=get_float("polarizer_noise_rel", 0.0) or 0.0,
        compensator_search_min_mm=get_float("compensator_search_min_mm", 0.0) or 0.5,
        compensator_search_max_mm=get_float("compensator_search_max_mm", 0.0, strict_min=True) or 10.0,
        raw=merged,
    )

    if errors:
        raise ConfigError(path, errors)

    # the stack itself enforces ordering/uniqueness invariants
    try:
        build_stack(config)
        config.wavelengths()
    except ValueError as exc:
        raise ConfigError(path, [(None, str(exc))]) from exc
    return config


def build_stack(config: SourceConfig) -> OpticalStack:
    """Instantiate the optical stack described by a configuration."""
    cut_rad = math.radians(config.cut_angle_deg)
    roles = {e.role: e for e in config.elements}
    for required in ("crystal1", "hwp", "crystal2"):
        if required not in roles:
            raise ValueError(f"stack is missing the {required} element")
    axis2 = +1 if config.axis_configuration == "parallel" else -1
    crystal1 = load_crystal("bbo", config.sellmeier_bbo, cut_rad, roles["crystal1"].thickness_mm)
    crystal2 = load_crystal(
        "bbo", config.sellmeier_bbo, cut_rad, roles["crystal2"].thickness_mm, axis_sign=axis2
    )
    compensator = None
    if "compensator" in roles:
        compensator = load_crystal(
            "yvo4", config.sellmeier_yvo4, math.pi / 2, roles["compensator"].thickness_mm
        )
    return OpticalStack(
        elements=config.elements,
        crystal1=crystal1,
        crystal2=crystal2,
        compensator=compensator,
        hwp_bulk_index=config.hwp_bulk_index,
        axis_configuration=config.axis_configuration,
        angle_position_scale_mm_per_deg=config.angle_position_scale_mm_per_deg,
        compensator_e_axis=config.compensator_e_axis,
    )
