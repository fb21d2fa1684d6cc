"""Label-frame pressure and the divergence constraint.

The pressure of the flow-map system satisfies lap(q) = f(q) where f collects
the velocity quadratic, the A-perturbation pressure terms, and the background
magnetic tension.  Since the geometry perturbation A - I is small in the
regimes of interest, the equation is solved by a Laplacian-preconditioned
fixed point whose contraction rate is set by |A - I|.  The same iteration,
with a different right-hand side, projects a velocity onto div_A-free fields.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import EllipticDivergenceError, EllipticIterationError
from .kinematics import GeometryBundle, div_a, grad_a
from .spectral import (SpectralField, divergence, invert_laplacian, sobolev_norm,
                       to_phys, to_spec)

_TINY = 1e-300
_CONTRACTION_WARN = 0.5


@dataclass(frozen=True)
class EllipticSolveReport:
    """Outcome of one preconditioned elliptic solve.

    Attributes:
        iterations: fixed-point sweeps performed.
        residual: final relative residual.
        history: residual after each sweep.
        converged: whether the tolerance was met.
        stripped_mean: largest right-hand-side mean removed before inversion
            (rounding-level for well-posed inputs).
    """

    iterations: int
    residual: float
    history: Tuple[float, ...]
    converged: bool
    stripped_mean: float


def _warn_if_large_perturbation(geom: GeometryBundle):
    amp = float(np.abs(geom.a_tilde).max())
    if amp > _CONTRACTION_WARN:
        warnings.warn(
            f"geometry perturbation |A - I| = {amp:.3f} > {_CONTRACTION_WARN}; "
            "the pressure fixed point may converge slowly or not at all",
            RuntimeWarning,
            stacklevel=3,
        )


def _strip_mean(f: SpectralField) -> Tuple[SpectralField, float]:
    m = abs(f.coeffs[0, 0]) / f.grid.n ** 2
    if m == 0.0:
        return f, 0.0
    c = f.coeffs.copy()
    c[0, 0] = 0.0
    return SpectralField(f.grid, c), float(m)


def pressure_rhs_fixed(geom: GeometryBundle, u: SpectralField,
                       m: float) -> SpectralField:
    """The q-independent part of the pressure right-hand side.

    Velocity part: the divergence of u twisted by the cofactor matrix of
    grad u, which reduces to 2 det(grad u).  Background part: m^2 times
    (d2^2 div eta + the grad-eta cofactor applied to d2^2 eta).
    """
    g = geom.grid
    ik1, ik2 = 1j * g.k1, 1j * g.k2

    du = to_phys(g, np.stack([[u.coeffs[i] * ik for ik in (ik1, ik2)]
                              for i in range(2)]))
    f_vals = 2.0 * (du[0, 0] * du[1, 1] - du[0, 1] * du[1, 0])

    if m != 0.0:
        ge = geom.grad_eta
        w = -g.k2 ** 2 * geom.eta_coeffs  # d2^2 eta, spectral
        dw = to_phys(g, np.stack([[w[i] * ik for ik in (ik1, ik2)]
                                  for i in range(2)]))
        f_vals = f_vals + m * m * (
            ge[1, 1] * dw[0, 0] - ge[1, 0] * dw[0, 1]
            + ge[0, 0] * dw[1, 1] - ge[0, 1] * dw[1, 0]
        )
    out = to_spec(g, f_vals) * geom.mask
    if m != 0.0:
        div_eta = ik1 * geom.eta_coeffs[0] + ik2 * geom.eta_coeffs[1]
        out = out + m * m * (-g.k2 ** 2) * div_eta
    return SpectralField(g, out)


def _pressure_coupling(geom: GeometryBundle, q: SpectralField) -> SpectralField:
    """-(div_Atilde grad_A q + div grad_Atilde q), the q-dependent remainder."""
    x = grad_a(geom, q)
    term1 = div_a(geom, x, tilde=True)
    term2 = divergence(grad_a(geom, q, tilde=True))
    return SpectralField(geom.grid, -(term1.coeffs + term2.coeffs))


def solve_lagrangian_pressure(
    geom: GeometryBundle,
    u: SpectralField,
    m: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    initial: Optional[SpectralField] = None,
) -> Tuple[SpectralField, EllipticSolveReport]:
    """Solve the pressure equation lap q = f(q) at one flow-map instant.

    Args:
        geom: geometry of the current displacement.
        u: label-frame velocity.
        m: background field strength.
        tol: relative residual target.
        max_iter: fixed-point sweep cap.
        initial: warm-start pressure (previous stage), zero if omitted.

    Returns:
        (q, report) with q zero-mean.

    Raises:
        EllipticDivergenceError: residual grew five sweeps in a row.
        EllipticIterationError: tolerance not reached within max_iter.
    """
    _warn_if_large_perturbation(geom)
    g = geom.grid
    f_fixed = pressure_rhs_fixed(geom, u, m)
    q = initial if initial is not None else SpectralField.zeros(g)

    history = []
    stripped = 0.0
    prev = np.inf
    grow = 0
    for it in range(max_iter):
        rhs = f_fixed + _pressure_coupling(geom, q)
        res_field = SpectralField(g, -g.ksq * q.coeffs - rhs.coeffs)
        scale = max(sobolev_norm(rhs, 0), _TINY)
        res = sobolev_norm(res_field, 0) / scale
        history.append(res)
        if res < tol:
            return q, EllipticSolveReport(it, res, tuple(history), True, stripped)
        if res > prev:
            grow += 1
            if grow >= 5:
                raise EllipticDivergenceError(
                    f"pressure iteration residual grew 5 sweeps running "
                    f"(last {res:.3e}); geometry likely outside the contraction regime"
                )
        else:
            grow = 0
        prev = res
        rhs_clean, drop = _strip_mean(rhs)
        stripped = max(stripped, drop)
        q = invert_laplacian(rhs_clean, mean=0.0)

    report = EllipticSolveReport(max_iter, history[-1], tuple(history), False, stripped)
    raise EllipticIterationError(
        f"pressure iteration hit the {max_iter}-sweep cap at residual "
        f"{history[-1]:.3e} (tol {tol:.1e})", report)


def project_div_a_free(
    geom: GeometryBundle,
    u_star: SpectralField,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> Tuple[SpectralField, EllipticSolveReport]:
    """Remove the div_A part of u_star: returns u = u_star - grad_A phi.

    The potential solves div_A grad_A phi = div_A u_star by the same
    preconditioned iteration; on success ||div_A u||_0 <= tol * ||u_star||_1.
    """
    _warn_if_large_perturbation(geom)
    g = geom.grid
    rhs0 = div_a(geom, u_star)
    scale = max(sobolev_norm(u_star, 1), _TINY)

    phi = SpectralField.zeros(g)
    history = []
    stripped = 0.0
    prev = np.inf
    grow = 0
    for it in range(max_iter):
        lap_phi = div_a(geom, grad_a(geom, phi))
        res_field = rhs0 - lap_phi  # = div_A (u_star - grad_A phi)
        res = sobolev_norm(res_field, 0) / scale
        history.append(res)
        if res < tol:
            u = u_star - grad_a(geom, phi)
            return u, EllipticSolveReport(it, res, tuple(history), True, stripped)
        if res > prev:
            grow += 1
            if grow >= 5:
                raise EllipticDivergenceError(
                    f"div_A projection residual grew 5 sweeps running (last {res:.3e})"
                )
        else:
            grow = 0
        prev = res
        res_clean, drop = _strip_mean(res_field)
        stripped = max(stripped, drop)
        phi = phi + invert_laplacian(res_clean, mean=0.0)

    report = EllipticSolveReport(max_iter, history[-1], tuple(history), False, stripped)
    raise EllipticIterationError(
        f"div_A projection hit the {max_iter}-sweep cap at residual "
        f"{history[-1]:.3e} (tol {tol:.1e})", report)
