"""Boundary evolution as an ODE on the network parameters.

The transport equation d(phi)/dt = v |grad phi| is collocated on all grid
nodes.  Substituting phi = N(x, y, theta) turns it into an overdetermined
linear system for the parameter rate,

    J(theta) dtheta/dt = v * |grad N|,

where J is the Jacobian of network outputs with respect to the parameters.
A ridge-stabilized least squares solution of that system defines the ODE
right hand side, which an embedded Runge-Kutta-Fehlberg 4(5) pair
integrates with adaptive step control over a fixed pseudo-time span per
optimization iteration.  The velocity field is held frozen during the span.

Collocation happens in the network's input frame: points are normalized
node coordinates and gradient magnitudes are taken with respect to those
same inputs, so the level set field is effectively a signed distance in
input-frame units and one unit of pseudo-time moves the boundary about one
input-frame unit.

Reinitialization reuses the same projection with the right hand side
S(phi0) (1 - |grad N|), a smoothed-sign relaxation toward unit gradient
magnitude that keeps the zero contour in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import network as net
from .geometry import (
    Grid,
    HeavisideParams,
    ScalarField,
    extract_zero_contour,
    volume_fraction,
)


class StiffnessError(RuntimeError):
    """Raised when step control cannot meet the tolerance above h_min."""


# ---------------------------------------------------------------- velocity


def normal_velocity(
    energy: ScalarField,
    lam: float,
    normalize: bool = True,
    reference_band: np.ndarray | None = None,
    scale_quantile: float = 1.0,
) -> ScalarField:
    """Boundary advection speed: strain energy density minus the multiplier.

    Positive where material pays for itself (energy above lam, solid grows)
    and negative where it does not.  With `normalize` the field is divided
    by the `scale_quantile` quantile of |energy - lam| and clipped to
    [-1, 1]; the zero crossing is unaffected.  `reference_band` restricts
    the quantile to the interface nodes.  Point loads put a strain energy
    spike orders of magnitude above anything else on the boundary, and a
    plain division by the maximum flattens the contour velocities into a
    uniform shave; a sub-unit quantile lets the spike saturate at the clip
    while typical boundary segments keep their relative speeds.
    """
    if not 0.0 < scale_quantile <= 1.0:
        raise ValueError(f"scale_quantile must be in (0, 1], got {scale_quantile!r}")
    v = energy.values - lam
    if normalize:
        ref = v if reference_band is None else v[reference_band]
        peak = float(np.quantile(np.abs(ref), scale_quantile)) if ref.size else 0.0
        if peak > 0:
            v = np.clip(v / peak, -1.0, 1.0)
    return ScalarField(energy.grid, v)


# ---------------------------------------------------------------- least squares


def lstsq_solve(jac: np.ndarray, rhs: np.ndarray, damping: float = 1e-3) -> np.ndarray:
    """Ridge-stabilized least squares solution of jac @ x = rhs.

    Solves min ||jac x - rhs||^2 + mu ||x||^2 with mu = (damping * s_max)^2
    through the SVD.  Network Jacobians carry a long tail of small singular
    values (near-redundant neurons); the plain minimum-norm solution pours
    large rates into those directions for negligible field improvement and
    makes the parameter ODE artificially stiff.  The filter s / (s^2 + mu)
    caps any direction's gain at 1 / (2 damping s_max), leaves directions
    with s well above damping * s_max essentially untouched, and varies
    smoothly with jac, so the step controller never sees a solver
    discontinuity.  damping=0 recovers the exact minimum-norm solution.
    """
    u, s, vt = scipy.linalg.svd(jac, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros(jac.shape[1])
    if damping == 0.0:
        factors = np.divide(1.0, s, out=np.zeros_like(s), where=s > 0)
    else:
        mu = (damping * s[0]) ** 2
        factors = s / (s * s + mu)
    return vt.T @ (factors * (u.T @ rhs))


def hj_rhs(theta: net.ParameterVector, velocity: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Parameter rate for the transport equation at frozen velocity."""
    grad = net.grad_spatial(theta, points)
    rhs = velocity * np.hypot(grad[:, 0], grad[:, 1])
    jac = net.jacobian_params(theta, points)
    return lstsq_solve(jac, rhs)


# ---------------------------------------------------------------- integrator

# Fehlberg 4(5) coefficients
_RKF_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_RKF_A = [
    np.array([]),
    np.array([1 / 4]),
    np.array([3 / 32, 9 / 32]),
    np.array([1932 / 2197, -7200 / 2197, 7296 / 2197]),
    np.array([439 / 216, -8.0, 3680 / 513, -845 / 4104]),
    np.array([-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40]),
]
_RKF_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
# difference between the fifth and fourth order weights
_RKF_ERR = np.array([1 / 360, 0.0, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55])


@dataclass(frozen=True)
class OdeConfig:
    """Adaptive step control for one pseudo-time span.

    `tau` is the span integrated per optimization iteration.  Step bounds
    default to fractions of tau when left unset.
    """

    tau: float = 3e-3
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    h_init: float | None = None
    h_min: float | None = None
    h_max: float | None = None

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.abs_tol <= 0 or self.rel_tol < 0:
            raise ValueError("tolerances must be positive")
        object.__setattr__(self, "h_init", self.tau if self.h_init is None else self.h_init)
        object.__setattr__(self, "h_min", self.tau * 1e-6 if self.h_min is None else self.h_min)
        object.__setattr__(self, "h_max", self.tau if self.h_max is None else self.h_max)
        if not 0 < self.h_min <= self.h_init <= self.h_max <= self.tau:
            raise ValueError(
                f"need 0 < h_min <= h_init <= h_max <= tau, got "
                f"{self.h_min}, {self.h_init}, {self.h_max}, {self.tau}"
            )


def rkf45_embedded(f, y: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One raw Fehlberg step: fifth order solution and the error vector."""
    k = []
    for a_row in _RKF_A:
        yi = y if not len(a_row) else y + h * sum(a * ki for a, ki in zip(a_row, k))
        k.append(f(yi))
    y5 = y + h * sum(b * ki for b, ki in zip(_RKF_B5, k))
    err = h * sum(e * ki for e, ki in zip(_RKF_ERR, k))
    return y5, err


def rkf45_step(f, y: np.ndarray, h: float, cfg: OdeConfig):
    """Attempt one adaptive step.

    Returns (y_next, h_next, error_norm, accepted).  The step is accepted
    when the error norm is within max(abs_tol, rel_tol * ||y||); either way
    h_next carries the 0.84 (tol/err)^(1/4) update clamped to the bounds.
    On rejection y is returned unchanged.
    """
    y5, err_vec = rkf45_embedded(f, y, h)
    err = float(np.linalg.norm(err_vec))
    tol = max(cfg.abs_tol, cfg.rel_tol * float(np.linalg.norm(y)))
    if err == 0.0:
        return y5, cfg.h_max, err, True
    h_next = 0.84 * h * (tol / err) ** 0.25
    h_next = min(max(h_next, cfg.h_min), cfg.h_max)
    if err <= tol:
        return y5, h_next, err, True
    return y, h_next, err, False


def integrate_span(f, y0: np.ndarray, cfg: OdeConfig) -> tuple[np.ndarray, int]:
    """Integrate over [0, tau] with adaptive steps.

    Returns the final state and the number of accepted steps.  Raises
    StiffnessError when the controller rejects a step it may no longer
    shrink.
    """
    y = y0
    t = 0.0
    h = cfg.h_init
    accepted = 0
    while t < cfg.tau - 1e-15 * cfg.tau:
        h = min(h, cfg.tau - t)
        y_next, h_next, err, ok = rkf45_step(f, y, h, cfg)
        if ok:
            y = y_next
            t += h
            accepted += 1
        else:
            if h <= cfg.h_min * (1 + 1e-12):
                raise StiffnessError(
                    f"step control stalled at t={t:.3e}: error {err:.3e} at h_min={cfg.h_min:.3e}"
                )
        h = h_next
    return y, accepted


# ---------------------------------------------------------------- optimizer state


@dataclass
class OptimizationState:
    """Evolving design: parameters, multiplier and recorded history.

    `history` holds one (compliance, volume_fraction) pair per evaluated
    iteration; `iteration` counts completed design updates.
    """

    theta: net.ParameterVector
    lam: float
    iteration: int = 0
    history: list[tuple[float, float]] = field(default_factory=list)
    last_ode_substeps: int = 0
    last_reinit_residual: float = float("nan")


def advance_design(
    state: OptimizationState, velocity: ScalarField, cfg: OdeConfig
) -> OptimizationState:
    """Integrate the parameter ODE over one pseudo-time span.

    The velocity field stays frozen; collocation runs over every node of the
    velocity's grid in the network input frame.  Returns a new state with
    updated parameters, iteration count and substep tally.
    """
    points = velocity.grid.normalized_node_coords()
    v = velocity.values

    def f(y: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(y)):
            raise StiffnessError(
                f"parameter vector left finite range at iteration {state.iteration}"
            )
        return hj_rhs(net.ParameterVector(y, state.theta.arch), v, points)

    y_end, substeps = integrate_span(f, state.theta.values, cfg)
    return replace(
        state,
        theta=net.ParameterVector(y_end, state.theta.arch),
        iteration=state.iteration + 1,
        last_ode_substeps=substeps,
    )


# ---------------------------------------------------------------- reinitialization


@dataclass(frozen=True)
class ReinitConfig:
    """Periodic relaxation of the field toward unit gradient magnitude.

    Step size and smoothing width are expressed in the same units as the
    level set values; problem builders scale them to the input frame (one
    grid cell of physical distance maps to h * norm_scale input units).

    Collocation is restricted to nodes within `collocation_factor` times
    the interface band.  The saturated far field of a tanh network is
    nearly flat, and letting it demand unit gradients pulls the fitted
    parameters hard enough to drag the zero contour along; corrected only
    near the interface, the minimum-norm update leaves the contour in
    place.
    """

    every_n_iterations: int = 1
    pseudo_steps: int = 5
    step_size: float = 0.5
    sign_smoothing_eps: float = 1.0
    collocation_factor: float = 3.0
    anchor_weight: float = 0.0

    def __post_init__(self) -> None:
        if self.every_n_iterations < 1:
            raise ValueError("every_n_iterations must be at least 1")
        if self.pseudo_steps < 0:
            raise ValueError("pseudo_steps cannot be negative")
        if self.step_size <= 0 or self.sign_smoothing_eps <= 0:
            raise ValueError("step_size and sign_smoothing_eps must be positive")
        if self.collocation_factor <= 0:
            raise ValueError("collocation_factor must be positive")
        if self.anchor_weight < 0:
            raise ValueError("anchor_weight cannot be negative")


def smoothed_sign(phi: np.ndarray, eps: float) -> np.ndarray:
    """phi / sqrt(phi^2 + eps^2); zero at the boundary, +-1 far away."""
    return phi / np.sqrt(phi * phi + eps * eps)


def reinit_rhs(
    theta: net.ParameterVector,
    phi_initial: np.ndarray,
    points: np.ndarray,
    eps: float,
    active: np.ndarray | None = None,
    anchors: np.ndarray | None = None,
    anchor_weight: float = 0.0,
) -> np.ndarray:
    """Parameter rate that relaxes |grad N| toward 1 near the interface.

    The sign is taken from the frozen entry field, so nodes on the original
    contour contribute nothing and the zero level stays put.  Outside the
    `active` mask the demand is zero, which makes those rows hold-still
    constraints: the least squares update steepens the band while leaving
    the rest of the field (and with it the design) as untouched as the
    parametrization allows.

    `anchors` are points on the entry contour.  Their rows demand
    N(anchor) -> 0 at `anchor_weight`, actively pulling the zero level back
    to where it started instead of merely not pushing it.
    """
    grad = net.grad_spatial(theta, points)
    gmag = np.hypot(grad[:, 0], grad[:, 1])
    rhs = smoothed_sign(phi_initial, eps) * (1.0 - gmag)
    if active is not None:
        rhs = np.where(active, rhs, 0.0)
    jac = net.jacobian_params(theta, points)
    if anchors is not None and anchor_weight > 0 and anchors.size:
        jac = np.vstack([jac, anchor_weight * net.jacobian_params(theta, anchors)])
        rhs = np.concatenate([rhs, -anchor_weight * net.forward(theta, anchors)])
    return lstsq_solve(jac, rhs)


def gradient_residual(
    theta: net.ParameterVector, points: np.ndarray, band: np.ndarray
) -> float:
    """Mean | |grad N| - 1 | over the masked points (nan for an empty mask)."""
    if not np.any(band):
        return float("nan")
    grad = net.grad_spatial(theta, points[band])
    gmag = np.hypot(grad[:, 0], grad[:, 1])
    return float(np.mean(np.abs(gmag - 1.0)))


def reinitialize(
    state: OptimizationState,
    cfg: ReinitConfig,
    grid: Grid,
    band_half_width: float,
) -> OptimizationState:
    """Run the configured number of explicit relaxation pseudo-steps.

    The sign field is frozen at entry.  The relaxation demand applies to
    nodes with |phi| below collocation_factor * band_half_width; every
    other grid node enters the projection with zero demand so the far
    field is actively held in place.  With a positive anchor_weight the
    entry contour is sampled and those points are pulled back to the zero
    level each step.  Records the mean gradient residual | |grad N| - 1 |
    over the tight band (|phi| < band_half_width) after the last step.
    Passes through untouched when pseudo_steps is zero or no node lies
    near the contour.
    """
    if cfg.pseudo_steps == 0:
        return state
    points = grid.normalized_node_coords()
    phi0 = net.forward(state.theta, points)
    near = np.abs(phi0) < cfg.collocation_factor * band_half_width
    if not np.any(near):
        return replace(state, last_reinit_residual=float("nan"))
    anchors = None
    if cfg.anchor_weight > 0:
        chains = extract_zero_contour(ScalarField(grid, phi0))
        if chains:
            anchors = grid.to_normalized(np.vstack(chains))
    y = state.theta.values
    for _ in range(cfg.pseudo_steps):
        rate = reinit_rhs(
            net.ParameterVector(y, state.theta.arch),
            phi0,
            points,
            cfg.sign_smoothing_eps,
            active=near,
            anchors=anchors,
            anchor_weight=cfg.anchor_weight,
        )
        y = y + cfg.step_size * rate
    theta = net.ParameterVector(y, state.theta.arch)
    band = np.abs(phi0) < band_half_width
    residual = gradient_residual(theta, points, band)
    return replace(state, theta=theta, last_reinit_residual=residual)


def restore_band_slope(
    state: OptimizationState, grid: Grid, band_half_width: float
) -> OptimizationState:
    """Rescale the output layer so the band-mean gradient magnitude is one.

    Volume removal systematically flattens the field (shrinking features
    lower the interior extrema), which would otherwise slow the boundary
    and widen the effective interface over hundreds of iterations.  A pure
    output scaling corrects the mean decay with the zero contour untouched,
    leaving only genuine shape distortion for the relaxation events.
    """
    points = grid.normalized_node_coords()
    phi = net.forward(state.theta, points)
    band = np.abs(phi) < band_half_width
    if not np.any(band):
        return state
    grad = net.grad_spatial(state.theta, points[band])
    mean = float(np.mean(np.hypot(grad[:, 0], grad[:, 1])))
    if not np.isfinite(mean) or mean <= 0:
        return state
    return replace(state, theta=net.scale_output(state.theta, 1.0 / mean))


# ---------------------------------------------------------------- multiplier and stopping


@dataclass(frozen=True)
class MultiplierScheme:
    """Volume multiplier policy.

    fixed: the multiplier stays at `fixed_value`.
    augmented: integral feedback, lam <- lam + gamma (volume - target),
    which settles only when the volume constraint is met.
    scheduled: each iteration the multiplier is found by bisection so the
    predicted volume step follows max(target, volume - rate); scale free,
    so it needs no retuning when the energy magnitudes change.
    """

    mode: str = "fixed"
    fixed_value: float = 5.0
    gamma: float = 10.0
    rate: float = 0.01

    def __post_init__(self) -> None:
        if self.mode not in ("fixed", "augmented", "scheduled"):
            raise ValueError(f"unknown multiplier mode {self.mode!r}")
        if self.mode == "augmented" and self.gamma <= 0:
            raise ValueError("gamma must be positive in augmented mode")
        if self.mode == "scheduled" and self.rate <= 0:
            raise ValueError("rate must be positive in scheduled mode")


def update_multiplier(
    state: OptimizationState,
    volume_target: float,
    scheme: MultiplierScheme,
    current_volume: float,
) -> float:
    """Next multiplier value under fixed or augmented feedback.

    Scheduled mode picks its multiplier before the advance instead, via
    `volume_matching_multiplier`, so here it passes the value through.
    """
    if scheme.mode == "fixed":
        return scheme.fixed_value
    if scheme.mode == "scheduled":
        return state.lam
    return state.lam + scheme.gamma * (current_volume - volume_target)


def volume_matching_multiplier(
    phi: ScalarField,
    gradient_magnitude: np.ndarray,
    energy: ScalarField,
    heaviside: HeavisideParams,
    tau: float,
    volume_goal: float,
    normalize: bool = True,
    reference_band: np.ndarray | None = None,
    scale_quantile: float = 1.0,
    iterations: int = 60,
) -> float:
    """Multiplier whose velocity step steers the volume toward `volume_goal`.

    Predicts the volume after one pseudo-time span using the unprojected
    update phi + tau * v(lam) * |grad phi| and bisects on lam, which trades
    shrink area against growth area monotonically.  The least squares
    projection and the adaptive integrator then realize a nearby step; the
    per-iteration feedback absorbs the mismatch.  Goals outside the
    reachable range return the bracket end, i.e. a best-effort push.
    """

    def predicted_volume(lam: float) -> float:
        v = normal_velocity(
            energy, lam, normalize=normalize,
            reference_band=reference_band, scale_quantile=scale_quantile,
        ).values
        shifted = phi.values + tau * v * gradient_magnitude
        return volume_fraction(ScalarField(phi.grid, shifted), heaviside)

    # beyond the energy range the velocity sign is uniform, so these
    # bracket the extreme one-step volumes
    lo = float(np.min(energy.values)) - 1.0
    hi = float(np.max(energy.values)) + 1.0
    if predicted_volume(lo) <= volume_goal:
        return lo
    if predicted_volume(hi) >= volume_goal:
        return hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if predicted_volume(mid) > volume_goal:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def check_convergence(
    history: list[tuple[float, float]],
    window: int,
    tol: float,
    volume_target: float,
    volume_tol: float,
) -> bool:
    """Stationarity test on the recorded history.

    True once the window is full, every consecutive relative compliance
    change within the window is at most `tol`, and the latest volume is
    within `volume_tol` of the target.
    """
    if window < 2:
        raise ValueError("window must span at least two iterations")
    if len(history) < window:
        return False
    recent = [c for c, _ in history[-window:]]
    for prev, cur in zip(recent[:-1], recent[1:]):
        denom = max(abs(prev), 1e-300)
        if abs(cur - prev) / denom > tol:
            return False
    return abs(history[-1][1] - volume_target) <= volume_tol
