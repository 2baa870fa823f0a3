"""Two-photon polarization states on the {|HH>, |VV>} subspace.

Collinear type-I phase matching produces no |HV> or |VH> components, so the
effective state is a 2x2 operator: populations p_hh, p_vv and one complex
coherence c with |c| <= sqrt(p_hh * p_vv).  A pure pair with pathway phase
difference dphi has c = exp(i dphi)/2; mixing over a phase distribution
shrinks |c|.

The single-polarizer diagnostic projects signal and idler onto a common
linear polarization at angle theta:

    P(theta) = p_hh cos^4 + p_vv sin^4 + 2 Re(c) cos^2 sin^2,

a cos(4 theta) fringe.  The antisymmetric Bell state gives the full-contrast
curve cos^2(2 theta)/2, the symmetric one a flat 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TARGETS = ("phi_minus", "phi_plus")

_POSITIVITY_TOL = 1e-9


class FitError(RuntimeError):
    """Polarizer-curve fit could not be carried out."""


@dataclass(frozen=True)
class TwoPhotonState:
    p_hh: float
    p_vv: float
    coherence: complex

    def __post_init__(self):
        if self.p_hh < -_POSITIVITY_TOL or self.p_vv < -_POSITIVITY_TOL:
            raise ValueError("populations must be non-negative")
        if abs(self.p_hh + self.p_vv - 1.0) > 1e-9:
            raise ValueError("populations must sum to 1")
        bound = math.sqrt(max(self.p_hh * self.p_vv, 0.0))
        if abs(self.coherence) > bound + _POSITIVITY_TOL:
            raise ValueError(
                f"|coherence| = {abs(self.coherence):.6g} violates positivity bound {bound:.6g}"
            )


def _check_target(target: str):
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")


def pure_state_fidelity(delta_phi_rad, target: str = "phi_minus"):
    """Fidelity of the pure pair state (|HH> + e^{i dphi}|VV>)/sqrt(2) with a
    Bell state: F(phi-) = (1 - cos dphi)/2, F(phi+) = (1 + cos dphi)/2."""
    _check_target(target)
    sign = -1.0 if target == "phi_minus" else +1.0
    return 0.5 * (1.0 + sign * np.cos(delta_phi_rad))


def mix_over_phases(weighted_phases) -> TwoPhotonState:
    """Balanced mixture of pure pair states with phases dphi_k and
    non-negative weights w_k (normalized internally):
    c = (1/2) sum_k w_k exp(i dphi_k)."""
    pairs = list(weighted_phases)
    if not pairs:
        raise ValueError("need at least one (weight, phase) pair")
    weights = np.array([w for w, _ in pairs], dtype=float)
    phases = np.array([p for _, p in pairs], dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights must not all be zero")
    c = 0.5 * np.sum(weights * np.exp(1j * phases)) / total
    return TwoPhotonState(0.5, 0.5, complex(c))


def state_fidelity(state: TwoPhotonState, target: str = "phi_minus") -> float:
    """Overlap with a Bell state: F = (p_hh + p_vv)/2 -+ Re(c)."""
    _check_target(target)
    sign = -1.0 if target == "phi_minus" else +1.0
    return 0.5 * (state.p_hh + state.p_vv) + sign * state.coherence.real


def fidelity_to_qber(fidelity: float) -> float:
    """Diagonal-basis error rate of this state family.

    H/V-basis errors vanish identically on the {HH, VV} subspace, so the
    quantum bit error rate is carried by the diagonal basis and equals
    1 - F.  Only defined for F >= 1/2 (states at least as close to the
    target as to its orthogonal partner)."""
    if not 0.5 <= fidelity <= 1.0 + 1e-12:
        raise ValueError(f"fidelity {fidelity} outside the model range [0.5, 1]")
    return 1.0 - min(fidelity, 1.0)


@dataclass
class FitResult:
    visibility: float
    mean_phase_rad: float
    fidelity: float
    sigma_fidelity: float
    fringe_amplitude: float
    fringe_visibility: float
    residual_rms: float
    clamped: bool = False
    degenerate: bool = False
    message: str = ""


@dataclass
class PolarizerScan:
    angles_deg: np.ndarray
    probabilities: np.ndarray
    fit: FitResult | None = None


def polarizer_curve(state: TwoPhotonState, angles_deg) -> PolarizerScan:
    """Coincidence probability behind a single polarizer at each angle."""
    angles = np.asarray(angles_deg, dtype=float)
    th = np.deg2rad(angles)
    c2, s2 = np.cos(th) ** 2, np.sin(th) ** 2
    p = state.p_hh * c2**2 + state.p_vv * s2**2 + 2.0 * state.coherence.real * c2 * s2
    return PolarizerScan(angles.copy(), p)


def fit_polarizer_curve(angles_deg, rates) -> FitResult:
    """Least-squares fit of the single-polarizer fringe and fidelity
    extraction toward the antisymmetric Bell state.

    The curve family is R(theta) = A (1 + Vf cos 4 theta).  Within the
    analysis family of this source (balanced populations, coherence along
    the antisymmetric state, so c = -V/2) the fringe visibility maps to the
    coherence magnitude as V = (3 Vf - 1)/(1 + Vf), clamped to [0, 1], and
    F = (1 + V)/2.  Zero-contrast data therefore reads as fully dephased
    (V = 0, F = 1/2).  Uncertainties come from the residual-estimated noise
    via the linear-fit covariance.
    """
    angles = np.asarray(angles_deg, dtype=float)
    y = np.asarray(rates, dtype=float)
    if angles.shape != y.shape or angles.ndim != 1:
        raise ValueError("angles and rates must be matching 1-D arrays")
    if angles.size < 8:
        raise ValueError("need at least 8 polarizer samples")
    if angles.max() - angles.min() < 180.0 - 1e-9:
        raise ValueError("polarizer samples must cover at least 180 deg")

    x = np.cos(4.0 * np.deg2rad(angles))
    design = np.column_stack([np.ones_like(x), x])
    gram = design.T @ design
    cond = np.linalg.cond(gram)
    if cond > 1e12:
        raise FitError(
            f"degenerate polarizer sampling (design condition {cond:.2e}); "
            f"raw residual rms {np.std(y):.3g}"
        )
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    a0, a1 = float(coef[0]), float(coef[1])
    residuals = y - design @ coef
    dof = max(angles.size - 2, 1)
    noise_var = float(residuals @ residuals) / dof
    rms = math.sqrt(float(np.mean(residuals**2)))

    if a0 <= 0 or a0 < 10 * math.sqrt(noise_var / angles.size):
        return FitResult(
            visibility=0.0,
            mean_phase_rad=math.pi,
            fidelity=0.5,
            sigma_fidelity=float("inf"),
            fringe_amplitude=a0,
            fringe_visibility=0.0,
            residual_rms=rms,
            degenerate=True,
            message="no usable signal amplitude",
        )

    vf = a1 / a0
    cov = noise_var * np.linalg.inv(gram)
    # delta method through vf = a1/a0 and V = (3 vf - 1)/(1 + vf)
    grad = np.array([-a1 / a0**2, 1.0 / a0])
    var_vf = float(grad @ cov @ grad)
    dv_dvf = 4.0 / (1.0 + vf) ** 2
    sigma_v = math.sqrt(max(var_vf, 0.0)) * abs(dv_dvf)

    raw_v = (3.0 * vf - 1.0) / (1.0 + vf)
    v = min(max(raw_v, 0.0), 1.0)
    return FitResult(
        visibility=v,
        mean_phase_rad=math.pi,
        fidelity=0.5 * (1.0 + v),
        sigma_fidelity=0.5 * sigma_v,
        fringe_amplitude=a0,
        fringe_visibility=vf,
        residual_rms=rms,
        clamped=(raw_v != v),
    )
