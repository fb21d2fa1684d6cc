"""Flow-map geometry: the matrix A = (grad zeta)^{-T} and operators twisted by it.

With zeta(y) = y + eta(y) and J = det(grad zeta), the matrix A carries Eulerian
derivatives back to labels: (d_i f) o zeta = A_ik d_k (f o zeta).  A is stored
in cofactor form, the J = 1 expression A = cof(grad zeta): its rows are exact
curls, so the Piola identity d_k A_ik = 0 holds identically for any eta and
every div_A output keeps an exactly zero mean -- the solvability the pressure
iteration relies on -- even when a time-integrator stage sits slightly off the
det = 1 manifold.  The actual pointwise Jacobian is carried alongside purely
as a drift diagnostic (A and (grad zeta)^{-T} differ by O(det - 1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, FlowMapInversionError, RankError
from .spectral import (Grid, SpectralField, leray_project, sobolev_norm, to_phys,
                       to_spec)
from .state import EulerianState, FlowMapState

DET_FLOOR = 0.25


@dataclass(frozen=True)
class GeometryBundle:
    """Pointwise geometry of one flow map, ready for operator application.

    Arrays are collocation values: grad_eta[i, k] = d_k eta_i, a[i, k] = A_ik
    in cofactor form, a_tilde = a - I, det = det(grad zeta).  The mask is
    applied to every operator output (2/3 rule unless the bundle was built
    with dealias=False).
    """

    grid: Grid
    eta_coeffs: np.ndarray  # (2, n, n//2+1), the displacement that was built
    grad_eta: np.ndarray    # (2, 2, n, n)
    a: np.ndarray           # (2, 2, n, n)
    a_tilde: np.ndarray     # (2, 2, n, n)
    det: np.ndarray         # (n, n)
    min_det: float
    max_det: float
    mask: np.ndarray

    @property
    def det_drift(self) -> float:
        """sup |det(grad zeta) - 1| over the grid."""
        return max(abs(self.min_det - 1.0), abs(self.max_det - 1.0))


def build_geometry(eta: SpectralField, dealias: bool = True,
                   det_floor: float = DET_FLOOR) -> GeometryBundle:
    """Assemble Jacobian, inverse-transpose A, and det for the map y + eta(y).

    Raises:
        DegenerateGeometryError: if min det(grad zeta) <= det_floor, i.e. the
            map is no longer safely invertible on the grid.
    """
    if not eta.is_vector:
        raise RankError("build_geometry needs a vector displacement field")
    g = eta.grid
    ik = (1j * g.k1, 1j * g.k2)
    dcoef = np.stack([[eta.coeffs[i] * ik[k] for k in range(2)] for i in range(2)])
    ge = to_phys(g, dcoef)  # (2, 2, n, n)

    gz11 = 1.0 + ge[0, 0]
    gz12 = ge[0, 1]
    gz21 = ge[1, 0]
    gz22 = 1.0 + ge[1, 1]
    det = gz11 * gz22 - gz12 * gz21

    min_det = float(det.min())
    if min_det <= det_floor:
        flat = int(det.argmin())
        y1, y2 = g.points
        loc = (y1[flat // g.n, 0], y2[0, flat % g.n])
        raise DegenerateGeometryError(min_det, loc)

    a = np.empty_like(ge)
    a[0, 0] = gz22
    a[0, 1] = -gz21
    a[1, 0] = -gz12
    a[1, 1] = gz11
    a_tilde = a.copy()
    a_tilde[0, 0] -= 1.0
    a_tilde[1, 1] -= 1.0

    mask = g.dealias_mask if dealias else g.nyquist_mask
    return GeometryBundle(g, eta.coeffs, ge, a, a_tilde, det,
                          min_det, float(det.max()), mask)


def _dphys(f: SpectralField) -> np.ndarray:
    """Physical values of (d_1 f, d_2 f); leading axis is the derivative index."""
    g = f.grid
    return to_phys(g, np.stack([1j * g.k1 * f.coeffs, 1j * g.k2 * f.coeffs]))


def grad_a(geom: GeometryBundle, f: SpectralField, tilde: bool = False) -> SpectralField:
    """A-twisted gradient (A_ik d_k f); tilde=True uses A - I instead of A."""
    if f.is_vector:
        raise RankError("grad_a acts on scalar fields; apply per component")
    mat = geom.a_tilde if tilde else geom.a
    df = _dphys(f)
    out = np.einsum("ikxy,kxy->ixy", mat, df)
    return SpectralField(geom.grid, to_spec(geom.grid, out) * geom.mask)


def div_a(geom: GeometryBundle, x: SpectralField, tilde: bool = False) -> SpectralField:
    """A-twisted divergence A_lk d_k x_l; tilde=True uses A - I."""
    if not x.is_vector:
        raise RankError("div_a needs a vector field")
    mat = geom.a_tilde if tilde else geom.a
    g = geom.grid
    ik = (1j * g.k1, 1j * g.k2)
    dcoef = np.stack([[x.coeffs[l] * ik[k] for k in range(2)] for l in range(2)])
    dx = to_phys(g, dcoef)  # (l, k, n, n)
    out = np.einsum("lkxy,lkxy->xy", mat, dx)
    return SpectralField(g, to_spec(g, out) * geom.mask)


def curl_a(geom: GeometryBundle, x: SpectralField) -> SpectralField:
    """A-twisted curl A_1k d_k x_2 - A_2k d_k x_1 (plain curl at A = I)."""
    if not x.is_vector:
        raise RankError("curl_a needs a vector field")
    g = geom.grid
    d2 = _dphys(x.component(1))
    d1 = _dphys(x.component(0))
    out = (geom.a[0, 0] * d2[0] + geom.a[0, 1] * d2[1]
           - geom.a[1, 0] * d1[0] - geom.a[1, 1] * d1[1])
    return SpectralField(g, to_spec(g, out) * geom.mask)


def lap_a(geom: GeometryBundle, f: SpectralField) -> SpectralField:
    """A-twisted Laplacian div_A grad_A, componentwise on vectors."""
    if f.is_vector:
        comps = [div_a(geom, grad_a(geom, f.component(i))).coeffs for i in range(2)]
        return SpectralField(geom.grid, np.stack(comps))
    return div_a(geom, grad_a(geom, f))


def magnetic_field(state: FlowMapState) -> SpectralField:
    """Frozen-in magnetic field m*(d2 eta + e2), background included."""
    g = state.grid
    coeffs = state.m * 1j * g.k2 * state.eta.coeffs
    coeffs[1, 0, 0] += state.m * g.n ** 2  # uniform e2 part
    return SpectralField(g, coeffs)


# ---------------------------------------------------------------------------
# Parity in y2: component 1 even, component 2 odd (the invariant symmetry class)
# ---------------------------------------------------------------------------

def _reflect_coeffs(c: np.ndarray) -> np.ndarray:
    # f(y1, -y2) in rfft2 storage: coefficient (m1, m2) <- conj at (-m1, m2)
    return np.conj(np.roll(c[..., ::-1, :], 1, axis=-2))


def odevity_reflect(f: SpectralField) -> SpectralField:
    """Mirror across y2 = 0; vector fields also flip the sign of component 2."""
    if f.is_vector:
        out = _reflect_coeffs(f.coeffs)
        out[1] = -out[1]
        return SpectralField(f.grid, out)
    return SpectralField(f.grid, _reflect_coeffs(f.coeffs))


def odevity_project(f: SpectralField) -> SpectralField:
    """Projection onto the symmetry class fixed by odevity_reflect."""
    return SpectralField(f.grid, 0.5 * (f.coeffs + odevity_reflect(f).coeffs))


def odevity_residual(f: SpectralField) -> float:
    """L2 distance to the reflected field (0 exactly on the symmetry class)."""
    return sobolev_norm(f - odevity_reflect(f), 0)


# ---------------------------------------------------------------------------
# Off-grid evaluation and flow-map inversion
# ---------------------------------------------------------------------------

def evaluate_stack(grid: Grid, coeff_stack: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate several scalar coefficient arrays at arbitrary points.

    Direct Fourier sums, no interpolation: exact (to roundoff) for band-limited
    fields.  coeff_stack has shape (F, n, n//2+1), points (M, 2); returns (F, M).
    """
    p = np.asarray(points, dtype=np.float64)
    e1 = np.exp(1j * p[:, :1] * grid.k1.ravel())          # (M, n)
    e2 = np.exp(1j * p[:, 1:] * grid.k2.ravel())          # (M, half)
    weighted = coeff_stack * grid.hermitian_weight        # (F, n, half)
    partial = np.matmul(e2, weighted.transpose(0, 2, 1))  # (F, M, n)
    out = np.einsum("fmn,mn->fm", partial, e1).real
    return out / grid.n ** 2


def evaluate_at(f: SpectralField, points: np.ndarray) -> np.ndarray:
    """Evaluate a field at points (M, 2); returns (M,) or (2, M) values."""
    stack = f.coeffs[np.newaxis] if not f.is_vector else f.coeffs
    out = evaluate_stack(f.grid, stack, points)
    return out[0] if not f.is_vector else out


def invert_flow_map(state: FlowMapState, tol: float = 1e-10,
                    max_iter: int = 50) -> SpectralField:
    """Inverse displacement xi with zeta^{-1}(x) = x + xi(x) on the grid.

    Newton iteration on every collocation point at once, with the residual
    measured in the sup norm.

    Raises:
        FlowMapInversionError: no convergence within max_iter sweeps.
    """
    g = state.grid
    y1, y2 = g.points
    x = np.stack([np.broadcast_to(y1, (g.n, g.n)).ravel(),
                  np.broadcast_to(y2, (g.n, g.n)).ravel()], axis=1)  # (M, 2)

    ik = (1j * g.k1, 1j * g.k2)
    ec = state.eta.coeffs
    stack = np.stack([ec[0], ec[1],
                      ec[0] * ik[0], ec[0] * ik[1],
                      ec[1] * ik[0], ec[1] * ik[1]])

    y = x.copy()
    for _ in range(max_iter):
        vals = evaluate_stack(g, stack, y)
        r1 = y[:, 0] + vals[0] - x[:, 0]
        r2 = y[:, 1] + vals[1] - x[:, 1]
        res = max(np.abs(r1).max(), np.abs(r2).max())
        if res < tol:
            xi = (y - x).T.reshape(2, g.n, g.n)
            return SpectralField.from_values(g, xi)
        j11 = 1.0 + vals[2]
        j12 = vals[3]
        j21 = vals[4]
        j22 = 1.0 + vals[5]
        det = j11 * j22 - j12 * j21
        y[:, 0] -= (j22 * r1 - j12 * r2) / det
        y[:, 1] -= (-j21 * r1 + j11 * r2) / det

    raise FlowMapInversionError(
        f"flow-map Newton stalled at residual {res:.3e} after {max_iter} sweeps"
    )


def compose_with_flow_map(f: SpectralField, eta: SpectralField) -> SpectralField:
    """Return f(y + eta(y)) sampled on the label grid (push through the map)."""
    g = eta.grid
    y1, y2 = g.points
    disp = to_phys(g, eta.coeffs)
    pts = np.stack([(y1 + disp[0]).ravel(), (y2 + disp[1]).ravel()], axis=1)
    vals = evaluate_at(f, pts)
    shape = (2, g.n, g.n) if f.is_vector else (g.n, g.n)
    return SpectralField.from_values(g, vals.reshape(shape))


def to_eulerian(state: FlowMapState, tol: float = 1e-10) -> EulerianState:
    """Push (u, m d2 eta) to the fixed grid through zeta^{-1} (matched data map)."""
    g = state.grid
    xi = invert_flow_map(state, tol=tol)
    y1, y2 = g.points
    xiv = to_phys(g, xi.coeffs)
    pts = np.stack([(y1 + xiv[0]).ravel(), (y2 + xiv[1]).ravel()], axis=1)

    b_lag = state.m * 1j * g.k2 * state.eta.coeffs
    stack = np.stack([state.u.coeffs[0], state.u.coeffs[1], b_lag[0], b_lag[1]])
    vals = evaluate_stack(g, stack, pts)
    v = SpectralField.from_values(g, vals[:2].reshape(2, g.n, g.n))
    b = SpectralField.from_values(g, vals[2:].reshape(2, g.n, g.n))
    # interpolation and truncation leave a tiny compressible residue
    return EulerianState(v=leray_project(v), b=leray_project(b), t=state.t,
                         nu=state.nu, kappa=state.kappa, m=state.m)
