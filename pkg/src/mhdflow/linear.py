"""Closed-form linear evolution and the divergence-removing correctors.

Dropping the quadratic terms decouples the flow-map system into independent
2x2 mode problems eta'' + d eta' + w^2 eta = 0 with d = nu|k|^2 (viscous) or
d = kappa (damped drag) and w = m k2.  The matrix exponential is assembled
uniformly across the oscillatory, critical, and overdamped regimes from the
entire functions C(x) = sum x^n/(2n)! and S(x) = sum x^n/(2n+1)! evaluated at
x = (d^2/4 - w^2) t^2, so no tolerance-dependent eigenvalue branching is
needed: near x = 0 a short Taylor series takes over smoothly.

The same machinery drives the fixed-grid linear propagator, whose coupling is
i m k2 off-diagonal instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DivergenceFreeError, SolvabilityError
from .kinematics import GeometryBundle, build_geometry, div_a
from .spectral import (Grid, SpectralField, divergence, gradient, invert_laplacian,
                       sobolev_norm)

_SERIES_CUT = 1e-6


def _exp_pair(d: np.ndarray, w2: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Stable e^{mu t} C and e^{mu t} t S with mu = -d/2, s^2 = d^2/4 - w^2.

    The exponential prefactor is folded into each regime branch so that the
    overdamped case only ever exponentiates nonpositive numbers (for t >= 0).
    """
    d = np.asarray(d, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    d, w2 = np.broadcast_arrays(d, w2)
    shape = d.shape
    d = np.atleast_1d(d)
    w2 = np.atleast_1d(w2)
    mu_t = -0.5 * d * t
    s2 = 0.25 * d * d - w2
    x = s2 * t * t

    ec = np.empty_like(x)
    es = np.empty_like(x)

    small = np.abs(x) <= _SERIES_CUT
    if small.any():
        xs = x[small]
        emu = np.exp(mu_t[small])
        ec[small] = emu * (1.0 + xs / 2.0 + xs ** 2 / 24.0 + xs ** 3 / 720.0)
        es[small] = emu * t * (1.0 + xs / 6.0 + xs ** 2 / 120.0 + xs ** 3 / 5040.0)

    over = x > _SERIES_CUT
    if over.any():
        s = np.sqrt(s2[over])
        a = np.exp(mu_t[over] + s * t)
        b = np.exp(mu_t[over] - s * t)
        ec[over] = 0.5 * (a + b)
        es[over] = 0.5 * (a - b) / s

    osc = x < -_SERIES_CUT
    if osc.any():
        om = np.sqrt(-s2[osc])
        emu = np.exp(mu_t[osc])
        ec[osc] = emu * np.cos(om * t)
        es[osc] = emu * np.sin(om * t) / om

    return ec.reshape(shape), es.reshape(shape)


def flow_map_propagator(grid: Grid, nu: float, kappa: float, m: float,
                        t: float) -> Tuple[np.ndarray, ...]:
    """Per-mode 2x2 propagator (p11, p12, p21, p22) for (eta_hat, u_hat).

    Real arrays of shape (n, n//2+1); the same matrix acts on both vector
    components of a mode.
    """
    d = nu * grid.ksq + kappa
    w2 = (m * grid.k2) ** 2
    ec, es = _exp_pair(d, w2, t)
    half_d = 0.5 * d
    return ec + half_d * es, es, -w2 * es, ec - half_d * es


def fixed_grid_propagator(grid: Grid, nu: float, kappa: float, m: float,
                          t: float) -> Tuple[np.ndarray, ...]:
    """Per-mode 2x2 propagator (q11, q12, q21, q22) for (v_hat, b_hat).

    The off-diagonal coupling is i m k2, so q12 = q21 are imaginary while the
    diagonal stays real; shapes as in flow_map_propagator.
    """
    d = nu * grid.ksq + kappa
    w2 = (m * grid.k2) ** 2
    ec, es = _exp_pair(d, w2, t)
    half_d = 0.5 * d
    coupling = 1j * m * grid.k2 * es
    return ec - half_d * es, coupling, coupling, ec + half_d * es


@dataclass(frozen=True)
class LinearModeState:
    """One Fourier mode of the linearized flow-map system.

    k is the wavevector (k1, k2); eta_hat and u_hat are the complex 2-vector
    amplitudes; t the current time.
    """

    k: Tuple[float, float]
    eta_hat: np.ndarray
    u_hat: np.ndarray
    nu: float
    kappa: float
    m: float
    t: float = 0.0


def evolve_mode_exact(mode: LinearModeState, t: float) -> LinearModeState:
    """Advance one mode by the elapsed time t >= 0 using the closed form."""
    if t < 0:
        raise ValueError(f"elapsed time must be >= 0, got {t}")
    k1, k2 = mode.k
    d = mode.nu * (k1 * k1 + k2 * k2) + mode.kappa
    w2 = (mode.m * k2) ** 2
    ec, es = _exp_pair(np.float64(d), np.float64(w2), t)
    half_d = 0.5 * d
    p11 = ec + half_d * es
    p21 = -w2 * es
    p22 = ec - half_d * es
    eta = np.asarray(mode.eta_hat, dtype=np.complex128)
    u = np.asarray(mode.u_hat, dtype=np.complex128)
    return LinearModeState(mode.k, p11 * eta + es * u, p21 * eta + p22 * u,
                           mode.nu, mode.kappa, mode.m, mode.t + t)


def _require_div_free(f: SpectralField, name: str):
    res = sobolev_norm(divergence(f), 0)
    if res > 1e-8 * max(sobolev_norm(f, 1), 1e-300):
        raise DivergenceFreeError(
            f"{name} is not divergence-free (residual {res:.3e}); "
            "apply compute_correctors to the data first"
        )


def evolve_linear_field(eta0: SpectralField, u0: SpectralField, nu: float,
                        kappa: float, m: float,
                        t: float) -> Tuple[SpectralField, SpectralField]:
    """Exact linear solution at time t >= 0 from divergence-free data."""
    if t < 0:
        raise ValueError(f"elapsed time must be >= 0, got {t}")
    _require_div_free(eta0, "eta0")
    _require_div_free(u0, "u0")
    g = eta0.grid
    p11, p12, p21, p22 = flow_map_propagator(g, nu, kappa, m, t)
    eta_t = SpectralField(g, p11 * eta0.coeffs + p12 * u0.coeffs)
    u_t = SpectralField(g, p21 * eta0.coeffs + p22 * u0.coeffs)
    return eta_t, u_t


@dataclass(frozen=True)
class Correctors:
    """Gradient fields restoring the divergence constraints of initial data.

    eta0 + eta_r is divergence-free; u0 + u_r is div_A-free to leading order
    (its plain divergence cancels div_Atilde u0).  q1 and q2 are the zero-mean
    gauge pressures of the two underlying Stokes problems.
    """

    eta_r: SpectralField
    u_r: SpectralField
    q1: SpectralField
    q2: SpectralField


def compute_correctors(eta0: SpectralField, u0: SpectralField,
                       geom: GeometryBundle | None = None) -> Correctors:
    """Solve the two gradient corrector problems for the data (eta0, u0).

    The displacement corrector prescribes div eta_r = -div eta0; the velocity
    corrector prescribes div u_r = div_Atilde u0 (geometry of eta0).  Both are
    curl-free gradients of Poisson solutions.

    Raises:
        SolvabilityError: if a prescribed divergence fails the zero-mean check
            at 1e-12 relative (cannot happen for in-band data; indicates
            corrupted input).
    """
    if geom is None:
        geom = build_geometry(eta0)
    q1 = SpectralField(eta0.grid, -divergence(eta0).coeffs)
    eta_r = gradient(invert_laplacian(q1))

    q2 = div_a(geom, u0, tilde=True)
    mean = abs(q2.coeffs[0, 0]) / q2.grid.n ** 2
    if mean > 1e-12 * max(sobolev_norm(q2, 0), 1e-300):
        raise SolvabilityError(
            f"prescribed corrector divergence has mean {mean:.3e}; "
            "input data is not consistent"
        )
    u_r = gradient(invert_laplacian(q2))
    return Correctors(eta_r=eta_r, u_r=u_r, q1=q1, q2=q2)
