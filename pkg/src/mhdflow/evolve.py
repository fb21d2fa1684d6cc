"""Time stepping.

All steppers integrate the linear part (background coupling plus dissipation)
exactly with the closed-form per-mode propagator and apply classical RK4 to
the integrating-factor transform of the remainder, giving a fourth-order
scheme with no stiffness restriction from the Alfven frequency m k2.  The
advective CFL restriction remains and is enforced up front.

Flow-map steppers re-impose the div_A constraint after every step (the RK
stages drift at the local-truncation level) and pin the zero modes.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from .errors import StabilityError
from .kinematics import (build_geometry, evaluate_stack, grad_a, lap_a,
                         odevity_project, odevity_reflect)
from .linear import fixed_grid_propagator, flow_map_propagator
from .pressure import project_div_a_free, solve_lagrangian_pressure
from .spectral import SpectralField, leray_project, to_phys, to_spec
from .state import EulerianState, FlowMapState, StepControl

CFL_LIMIT = 0.5


def max_speed(u: SpectralField) -> float:
    """Pointwise maximum of |u| over the grid."""
    v = to_phys(u.grid, u.coeffs)
    return float(np.sqrt(v[0] ** 2 + v[1] ** 2).max())


def advective_dt_bound(state) -> float:
    """Largest admissible step, CFL_LIMIT * h / max(1, max speed)."""
    u = state.u if isinstance(state, FlowMapState) else state.v
    return CFL_LIMIT * u.grid.spacing / max(1.0, max_speed(u))


def default_dt(state) -> float:
    """Half the advective bound: 0.25 h / max(1, max speed)."""
    return 0.5 * advective_dt_bound(state)


def _check_dt(state, dt: float):
    bound = advective_dt_bound(state)
    if dt > bound:
        u = state.u if isinstance(state, FlowMapState) else state.v
        raise StabilityError(
            f"dt = {dt:.3e} exceeds the advective bound {bound:.3e} "
            f"(max speed {max_speed(u):.3f}, h = {u.grid.spacing:.3e})"
        )


def _pin_mean(c: np.ndarray) -> np.ndarray:
    c[..., 0, 0] = 0.0
    return c


# ---------------------------------------------------------------------------
# Flow-map steppers (viscous and damped variants share everything but the
# dissipation operator: nu lap vs kappa drag)
# ---------------------------------------------------------------------------

def _step_flow_map(state: FlowMapState, ctl: StepControl,
                   pressure_tol: float, projection_tol: float) -> FlowMapState:
    g = state.grid
    _check_dt(state, ctl.dt)
    h = ctl.dt
    nu, kappa, m = state.nu, state.kappa, state.m
    pf = flow_map_propagator(g, nu, kappa, m, h)
    ph = flow_map_propagator(g, nu, kappa, m, 0.5 * h)
    e0, u0 = state.eta.coeffs, state.u.coeffs

    q_hint = [None]  # warm start threaded through the stages

    def remainder(ec: np.ndarray, uc: np.ndarray) -> np.ndarray:
        geom = build_geometry(SpectralField(g, ec), dealias=ctl.dealias)
        u = SpectralField(g, uc)
        q, _ = solve_lagrangian_pressure(geom, u, m, tol=pressure_tol,
                                         initial=q_hint[0])
        q_hint[0] = q
        n_u = -grad_a(geom, q).coeffs
        if nu != 0.0:
            n_u = n_u + nu * (lap_a(geom, u).coeffs + g.ksq * uc)
        return n_u

    def apply(p, ec, uc):
        return p[0] * ec + p[1] * uc, p[2] * ec + p[3] * uc

    # integrating-factor RK4; the remainder has no displacement slot
    n1 = remainder(e0, u0)
    e2, u2 = apply(ph, e0, u0 + 0.5 * h * n1)
    n2 = remainder(e2, u2)
    e3, u3 = apply(ph, e0, u0)
    n3 = remainder(e3, u3 + 0.5 * h * n2)
    ef, uf = apply(pf, e0, u0)
    n4 = remainder(ef + h * ph[1] * n3, uf + h * ph[3] * n3)
    n23 = n2 + n3
    e_new = ef + (h / 6.0) * (pf[1] * n1 + 2.0 * ph[1] * n23)
    u_new = uf + (h / 6.0) * (pf[3] * n1 + 2.0 * ph[3] * n23 + n4)

    eta = SpectralField(g, _pin_mean(e_new))
    geom_new = build_geometry(eta, dealias=ctl.dealias)
    u_field, _ = project_div_a_free(geom_new, SpectralField(g, _pin_mean(u_new)),
                                    tol=projection_tol)
    if ctl.odevity_project:
        eta = odevity_project(eta)
        u_field = odevity_project(u_field)
    return state.replace(eta=eta, u=u_field, t=state.t + h)


def step_lagrangian_viscous(state: FlowMapState, ctl: StepControl,
                            pressure_tol: float = 1e-10,
                            projection_tol: float = 1e-11) -> FlowMapState:
    """One step of the viscous flow-map system (nu > 0 allowed, kappa must be 0)."""
    if state.kappa != 0.0:
        raise ValueError("viscous stepper expects kappa = 0; use the damped stepper")
    return _step_flow_map(state, ctl, pressure_tol, projection_tol)


def step_lagrangian_damped(state: FlowMapState, ctl: StepControl,
                           pressure_tol: float = 1e-10,
                           projection_tol: float = 1e-11) -> FlowMapState:
    """One step of the damped inviscid variant (kappa > 0, nu must be 0)."""
    if state.nu != 0.0:
        raise ValueError("damped stepper expects nu = 0")
    if state.kappa <= 0.0:
        raise ValueError("damped stepper needs kappa > 0")
    return _step_flow_map(state, ctl, pressure_tol, projection_tol)


# ---------------------------------------------------------------------------
# Fixed-grid stepper
# ---------------------------------------------------------------------------

def _eulerian_remainder(g, vc: np.ndarray, bc: np.ndarray,
                        mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ik = (1j * g.k1, 1j * g.k2)
    vp = to_phys(g, vc)
    bp = to_phys(g, bc)
    dv = to_phys(g, np.stack([[vc[i] * ik[k] for k in range(2)] for i in range(2)]))
    db = to_phys(g, np.stack([[bc[i] * ik[k] for k in range(2)] for i in range(2)]))

    adv_v = np.stack([vp[0] * dv[i, 0] + vp[1] * dv[i, 1]
                      - bp[0] * db[i, 0] - bp[1] * db[i, 1] for i in range(2)])
    adv_b = np.stack([vp[0] * db[i, 0] + vp[1] * db[i, 1]
                      - bp[0] * dv[i, 0] - bp[1] * dv[i, 1] for i in range(2)])

    n_v = leray_project(SpectralField(g, -to_spec(g, adv_v) * mask)).coeffs
    n_b = leray_project(SpectralField(g, -to_spec(g, adv_b) * mask)).coeffs
    return n_v, n_b


def step_eulerian(state: EulerianState, ctl: StepControl) -> EulerianState:
    """One step of the fixed-grid system for (v, b).

    The Alfven coupling m d2 and the dissipation are integrated exactly; the
    advective terms are the RK4 remainder, Leray-projected every stage.
    """
    g = state.grid
    _check_dt(state, ctl.dt)
    h = ctl.dt
    mask = g.dealias_mask if ctl.dealias else g.nyquist_mask
    pf = fixed_grid_propagator(g, state.nu, state.kappa, state.m, h)
    ph = fixed_grid_propagator(g, state.nu, state.kappa, state.m, 0.5 * h)
    v0, b0 = state.v.coeffs, state.b.coeffs

    def apply(p, vc, bc):
        return p[0] * vc + p[1] * bc, p[2] * vc + p[3] * bc

    n1v, n1b = _eulerian_remainder(g, v0, b0, mask)
    v2, b2 = apply(ph, v0 + 0.5 * h * n1v, b0 + 0.5 * h * n1b)
    n2v, n2b = _eulerian_remainder(g, v2, b2, mask)
    v3, b3 = apply(ph, v0, b0)
    n3v, n3b = _eulerian_remainder(g, v3 + 0.5 * h * n2v, b3 + 0.5 * h * n2b, mask)
    vf, bf = apply(pf, v0, b0)
    pv, pb = apply(ph, n3v, n3b)
    n4v, n4b = _eulerian_remainder(g, vf + h * pv, bf + h * pb, mask)

    c1v, c1b = apply(pf, n1v, n1b)
    c23v, c23b = apply(ph, n2v + n3v, n2b + n3b)
    v_new = vf + (h / 6.0) * (c1v + 2.0 * c23v + n4v)
    b_new = bf + (h / 6.0) * (c1b + 2.0 * c23b + n4b)

    v_field = leray_project(SpectralField(g, _pin_mean(v_new)))
    b_field = leray_project(SpectralField(g, _pin_mean(b_new)))
    if ctl.odevity_project:
        v_field = odevity_project(v_field)
        # b carries the complementary parity (component 1 odd, 2 even)
        b_field = SpectralField(g, 0.5 * (b_field.coeffs
                                          - odevity_reflect(b_field).coeffs))
    return state.replace(v=v_field, b=b_field, t=state.t + h)


# ---------------------------------------------------------------------------
# Particle integration of recorded fixed-grid velocity frames
# ---------------------------------------------------------------------------

def integrate_flow_map(frames: Sequence[EulerianState],
                       ) -> List[Tuple[float, SpectralField]]:
    """Integrate label trajectories through recorded velocity frames.

    Classical RK4 with step equal to two frame spacings, the middle frame
    serving both interior stages; velocities are evaluated off-grid by direct
    Fourier sums.  Needs an odd number of uniformly spaced frames (an even
    number of intervals).

    Returns:
        [(t, displacement field)] at every second frame, starting from zero
        displacement at frames[0].
    """
    if len(frames) < 3 or len(frames) % 2 == 0:
        raise ValueError("need an odd number of frames >= 3 for paired RK4 steps")
    times = np.array([f.t for f in frames])
    spacing = np.diff(times)
    if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=1e-12):
        raise ValueError("frames must be uniformly spaced in time")

    g = frames[0].grid
    y1, y2 = g.points
    labels = np.stack([np.broadcast_to(y1, (g.n, g.n)).ravel(),
                       np.broadcast_to(y2, (g.n, g.n)).ravel()], axis=1)

    def vel(frame: EulerianState, pts: np.ndarray) -> np.ndarray:
        return evaluate_stack(g, frame.v.coeffs, pts).T  # (M, 2)

    pos = labels.copy()
    out: List[Tuple[float, SpectralField]] = [
        (float(times[0]), SpectralField.zeros(g, rank=2))]
    for i in range(0, len(frames) - 1, 2):
        f0, f1, f2 = frames[i], frames[i + 1], frames[i + 2]
        h = float(f2.t - f0.t)
        k1 = vel(f0, pos)
        k2 = vel(f1, pos + 0.5 * h * k1)
        k3 = vel(f1, pos + 0.5 * h * k2)
        k4 = vel(f2, pos + h * k3)
        pos = pos + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        disp = (pos - labels).T.reshape(2, g.n, g.n)
        out.append((float(f2.t), SpectralField.from_values(g, disp)))
    return out
