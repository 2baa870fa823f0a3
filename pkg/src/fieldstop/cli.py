"""Command-line entry point.

One experiment per invocation; every experiment writes a CSV dataset plus a
key-value metadata sidecar carrying the config hash and the Sellmeier
source labels, enough to reproduce the run.  CSV bodies are byte-identical
across runs with identical inputs: fixed 9-significant-digit formatting,
'.' decimal separator, LF line endings.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .collection import (
    ApertureSpec,
    EmissionProfile,
    aperture_fidelity,
    collected_state,
    fit_saturation_curve,
    iris_translation_scan,
    pair_rate,
    tradeoff_table,
)
from .config import ConfigError, SourceConfig, build_stack, default_config_path, parse_config
from .materials import phase_matching_angle
from .phase import (
    AveragingSpec,
    GridSpec,
    apply_radial_compensation,
    fit_radial_quadratic,
    optimize_compensator_thickness,
    phase_map,
    spectral_phase_profile,
)
from .states import fit_polarizer_curve, polarizer_curve

EXPERIMENTS = (
    "phase-map",
    "fidelity-aperture",
    "polarizer-scan",
    "iris-scan",
    "rate-curve",
    "tradeoff",
    "phasematch",
    "compensate",
)


def _fmt(value) -> str:
    return format(float(value), ".9g")


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_sidecar(path: Path, entries: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")


def _sidecar_base(config: SourceConfig, experiment: str, seed) -> dict:
    return {
        "experiment": experiment,
        "fieldstop_version": __version__,
        "config_hash": config.hash(),
        "seed": "none" if seed is None else seed,
        "sellmeier_bbo": config.sellmeier_bbo,
        "sellmeier_yvo4": config.sellmeier_yvo4,
        "global_phase_offset_rad": _fmt(config.global_phase_offset_rad),
        "grid_step_deg": _fmt(config.grid_step_deg),
        "grid_half_extent_deg": _fmt(config.grid_half_extent_deg),
        "depth_samples": config.depth_samples,
        "axis_configuration": config.axis_configuration,
    }


def _grid(config: SourceConfig, min_extent_deg: float = 0.0) -> GridSpec:
    extent = max(config.grid_half_extent_deg, min_extent_deg)
    steps = math.ceil(extent / config.grid_step_deg)
    return GridSpec(config.grid_step_deg, steps * config.grid_step_deg)


def _profile(config: SourceConfig) -> EmissionProfile:
    reference = next(e for e in config.elements if e.role == "crystal1").thickness_mm
    return EmissionProfile(config.sigma_theta_deg, config.r_max_pairs_per_s_per_mw, reference)


def _map(config: SourceConfig, min_extent_deg: float = 0.0):
    stack = build_stack(config)
    return phase_map(
        stack,
        config.wavelengths(),
        _grid(config, min_extent_deg),
        AveragingSpec(config.depth_samples),
        config.global_phase_offset_rad,
    )


# ---------------------------------------------------------------------------
# experiments


def _run_phase_map(config, out, seed):
    pmap = _map(config)
    rows = []
    for iy, ay in enumerate(pmap.alpha_y_deg):
        for ix, ax in enumerate(pmap.alpha_x_deg):
            rows.append((ax, ay, pmap.values[iy, ix]))
    _write_csv(out / "phase-map.csv", "alpha_x_deg,alpha_y_deg,delta_phi_rad", rows)
    meta = _sidecar_base(config, "phase-map", seed)
    meta["sellmeier_labels"] = pmap.metadata["sellmeier_labels"]
    _write_sidecar(out / "phase-map.meta", meta)


def _aperture_rows(config, pmap, profile):
    scale = config.angle_position_scale_mm_per_deg
    rows = []
    for d in config.aperture_diameters_mm:
        aperture = ApertureSpec(d, scale_mm_per_deg=scale)
        rate = pair_rate(aperture, profile)
        fidelity = aperture_fidelity(pmap, aperture, profile)
        rows.append((d, aperture.radius_deg, rate, fidelity))
    return rows


def _run_fidelity_aperture(config, out, seed):
    scale = config.angle_position_scale_mm_per_deg
    needed = max(config.aperture_diameters_mm) / 2 / scale
    pmap = _map(config, needed)
    rows = _aperture_rows(config, pmap, _profile(config))
    _write_csv(
        out / "fidelity-aperture.csv",
        "diameter_mm,half_angle_deg,rate_pairs_per_s_per_mW,fidelity",
        rows,
    )
    _write_sidecar(out / "fidelity-aperture.meta", _sidecar_base(config, "fidelity-aperture", seed))


def _run_rate_curve(config, out, seed):
    scale = config.angle_position_scale_mm_per_deg
    needed = max(config.aperture_diameters_mm) / 2 / scale
    pmap = _map(config, needed)
    rows = _aperture_rows(config, pmap, _profile(config))
    _write_csv(
        out / "rate-curve.csv",
        "diameter_mm,half_angle_deg,rate_pairs_per_s_per_mW,fidelity",
        rows,
    )
    half_angles = [r[1] for r in rows]
    rates = [r[2] for r in rows]
    meta = _sidecar_base(config, "rate-curve", seed)
    for model in ("erf", "gaussian-disc"):
        fit = fit_saturation_curve(half_angles, rates, model)
        prefix = f"fit_{model.replace('-', '_')}"
        meta[f"{prefix}_scale"] = _fmt(fit.scale)
        meta[f"{prefix}_width_deg"] = "nan" if fit.degenerate else _fmt(fit.width_deg)
        meta[f"{prefix}_offset"] = _fmt(fit.offset)
        meta[f"{prefix}_residual_norm"] = _fmt(fit.residual_norm)
    _write_sidecar(out / "rate-curve.meta", meta)


def _run_polarizer_scan(config, out, seed):
    scale = config.angle_position_scale_mm_per_deg
    needed = config.iris_diameter_mm / 2 / scale
    pmap = _map(config, needed)
    aperture = ApertureSpec(config.iris_diameter_mm, plane="signal-arm", scale_mm_per_deg=scale)
    state = collected_state(pmap, aperture, _profile(config))
    angles = np.arange(0.0, 180.0 + 1e-9, config.polarizer_step_deg)
    scan = polarizer_curve(state, angles)
    probabilities = scan.probabilities
    if seed is not None and config.polarizer_noise_rel > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, config.polarizer_noise_rel * float(probabilities.max()), probabilities.shape)
        probabilities = np.clip(probabilities + noise, 0.0, None)
    fit = fit_polarizer_curve(angles, probabilities)
    _write_csv(
        out / "polarizer-scan.csv",
        "theta_pol_deg,probability",
        zip(angles, probabilities),
    )
    meta = _sidecar_base(config, "polarizer-scan", seed)
    meta.update(
        iris_diameter_mm=_fmt(config.iris_diameter_mm),
        fit_visibility=_fmt(fit.visibility),
        fit_mean_phase_rad=_fmt(fit.mean_phase_rad),
        fit_fidelity=_fmt(fit.fidelity),
        fit_sigma_fidelity=_fmt(fit.sigma_fidelity) if math.isfinite(fit.sigma_fidelity) else "inf",
        fit_degenerate=fit.degenerate,
    )
    _write_sidecar(out / "polarizer-scan.meta", meta)


def _run_iris_scan(config, out, seed):
    scale = config.angle_position_scale_mm_per_deg
    halfspan = config.iris_scan_halfspan_mm
    needed = (halfspan + (config.iris_diameter_mm + config.iris_diameter_sigma_mm) / 2) / scale
    pmap = _map(config, needed)
    n = int(round(halfspan / config.iris_scan_step_mm))
    positions = np.arange(-n, n + 1) * config.iris_scan_step_mm
    rows = iris_translation_scan(
        pmap,
        positions,
        config.iris_diameter_mm,
        _profile(config),
        scale,
        config.iris_diameter_sigma_mm,
    )
    _write_csv(out / "iris-scan.csv", "position_mm,fidelity,fidelity_lo,fidelity_hi", rows)
    meta = _sidecar_base(config, "iris-scan", seed)
    meta["iris_diameter_mm"] = _fmt(config.iris_diameter_mm)
    meta["iris_diameter_sigma_mm"] = _fmt(config.iris_diameter_sigma_mm)
    _write_sidecar(out / "iris-scan.meta", meta)


def _run_tradeoff(config, out, seed, lengths=None):
    scale = config.angle_position_scale_mm_per_deg
    lengths = tuple(lengths) if lengths else config.tradeoff_lengths_mm
    needed = max(config.tradeoff_diameters_mm) / 2 / scale
    stack = build_stack(config)
    grid = _grid(config, needed)
    maps = {
        length: phase_map(
            stack.with_crystal_lengths(length),
            config.wavelengths(),
            grid,
            AveragingSpec(config.depth_samples),
            config.global_phase_offset_rad,
        )
        for length in lengths
    }
    rows = tradeoff_table(maps, config.tradeoff_diameters_mm, _profile(config), scale)
    _write_csv(
        out / "tradeoff.csv",
        "length_mm,diameter_mm,rate,fidelity,qber",
        ((r.length_mm, r.diameter_mm, r.rate_pairs_per_s_per_mw, r.fidelity, r.qber) for r in rows),
    )
    meta = _sidecar_base(config, "tradeoff", seed)
    meta["lengths_mm"] = ",".join(_fmt(length) for length in lengths)
    meta["qber_threshold_fidelity"] = _fmt(0.85)
    _write_sidecar(out / "tradeoff.meta", meta)


def _run_phasematch(config, out, seed):
    stack = build_stack(config)
    waves = config.wavelengths()
    angle = phase_matching_angle(stack.crystal1, waves.pump_um, waves.signal_um, waves.idler_um)
    angle_deg = math.degrees(angle)
    print(f"type-I collinear phase-matching angle: {angle_deg:.4f} deg")
    _write_csv(
        out / "phasematch.csv",
        "lambda_pump_nm,lambda_signal_nm,lambda_idler_nm,cut_angle_deg",
        [(config.pump_nm, config.signal_nm, config.idler_nm, angle_deg)],
    )
    meta = _sidecar_base(config, "phasematch", seed)
    meta["phase_matching_angle_deg"] = _fmt(angle_deg)
    _write_sidecar(out / "phasematch.meta", meta)


def _run_compensate(config, out, seed):
    stack = build_stack(config)
    waves = config.wavelengths()
    result = optimize_compensator_thickness(
        stack,
        waves,
        (config.compensator_search_min_mm, config.compensator_search_max_mm),
        config.signal_bandwidth_nm,
        config.spectral_samples,
    )
    if result.degenerate:
        print(f"compensator optimization degenerate: {result.message}")
    else:
        print(
            f"optimal compensator thickness: {result.thickness_mm:.4f} mm "
            f"(spectral spread {result.uncompensated_peak_to_peak_rad:.3f} -> "
            f"{result.peak_to_peak_rad:.6f} rad)"
        )
    bare = spectral_phase_profile(
        stack.without_compensator(), waves, config.signal_bandwidth_nm, config.spectral_samples
    )
    best_stack = stack if result.degenerate else stack.with_compensator_thickness(result.thickness_mm)
    compensated = spectral_phase_profile(
        best_stack, waves, config.signal_bandwidth_nm, config.spectral_samples
    )
    rows = [
        (lam, phi_bare, phi_comp)
        for (lam, phi_bare), (_, phi_comp) in zip(bare, compensated)
    ]
    _write_csv(
        out / "compensate.csv",
        "lambda_signal_nm,delta_phi_uncompensated_rad,delta_phi_compensated_rad",
        rows,
    )
    meta = _sidecar_base(config, "compensate", seed)
    meta.update(
        optimal_thickness_mm="nan" if result.degenerate else _fmt(result.thickness_mm),
        peak_to_peak_rad=_fmt(result.peak_to_peak_rad),
        uncompensated_peak_to_peak_rad=_fmt(result.uncompensated_peak_to_peak_rad),
        degenerate=result.degenerate,
    )
    _write_sidecar(out / "compensate.meta", meta)


_RUNNERS = {
    "phase-map": _run_phase_map,
    "fidelity-aperture": _run_fidelity_aperture,
    "polarizer-scan": _run_polarizer_scan,
    "iris-scan": _run_iris_scan,
    "rate-curve": _run_rate_curve,
    "tradeoff": _run_tradeoff,
    "phasematch": _run_phasematch,
    "compensate": _run_compensate,
}


def run_experiment(name: str, config: SourceConfig, out_dir, seed=None, lengths=None) -> int:
    """Run one named experiment; returns a process exit status."""
    if name not in _RUNNERS:
        print(
            f"unknown experiment {name!r}; valid names: {', '.join(EXPERIMENTS)}",
            file=sys.stderr,
        )
        return 2
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if name == "tradeoff":
            _RUNNERS[name](config, out, seed, lengths)
        else:
            _RUNNERS[name](config, out, seed)
    except (ValueError, RuntimeError) as exc:
        print(f"experiment {name} failed: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fieldstop",
        description="Simulate a two-crystal collinear SPDC source with field-stop collection.",
    )
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="source configuration file (default: packaged paper_6mm.conf)",
    )
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--experiment", required=True, choices=EXPERIMENTS, help="experiment to run")
    parser.add_argument("--seed", type=int, default=None, help="noise seed (polarizer-scan)")
    parser.add_argument("--grid-step-deg", type=float, default=None, help="override grid step")
    parser.add_argument("--lengths", type=str, default=None, help="crystal lengths in mm (comma-separated)")
    args = parser.parse_args(argv)

    config_path = args.config if args.config is not None else default_config_path()
    try:
        config = parse_config(config_path)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1

    if args.grid_step_deg is not None:
        if args.grid_step_deg <= 0:
            print("--grid-step-deg must be positive", file=sys.stderr)
            return 2
        config.grid_step_deg = args.grid_step_deg

    lengths = None
    if args.lengths is not None:
        try:
            lengths = tuple(float(v) for v in args.lengths.split(","))
        except ValueError:
            print(f"--lengths: not a comma-separated number list: {args.lengths!r}", file=sys.stderr)
            return 2
        if any(v <= 0 for v in lengths):
            print("--lengths: entries must be positive", file=sys.stderr)
            return 2

    return run_experiment(args.experiment, config, args.out, args.seed, lengths)


if __name__ == "__main__":
    sys.exit(main())
