"""Constraint-compatible initial data.

Both generators start from a divergence-free base pair and then run two small
fixed points: one adds a gradient part to eta until det(grad zeta) = 1 holds
pointwise (via the 2D identity div eta = d1 eta2 d2 eta1 - d1 eta1 d2 eta2,
equivalent to a unit Jacobian), and one adds a gradient part to u until
div_A u = 0 in the geometry of the finished eta.  Both iterations contract at
a rate set by the data amplitude, so they fail loudly outside the
small-displacement regime instead of returning near-compatible data.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .diagnostics import energy_functional, strong_field_margin
from .errors import DataGenerationError
from .kinematics import build_geometry, div_a, odevity_project, odevity_residual
from .spectral import (Grid, SpectralField, dealias_product, derivative, divergence,
                       gradient, invert_laplacian, leray_project, sobolev_norm)
from .state import FlowMapState


@dataclass(frozen=True)
class InitialDataSpec:
    """Recipe for one data set.

    family: "taylor_green" (cellular base profile, amplitude-eps displacement
        with an order-one velocity), "random_symmetric" (seeded band-limited
        noise in the symmetry class), or "from_file" (checkpoint, handled by
        the run layer).
    """

    family: str
    epsilon: float
    seed: int = 0
    band: int = 8
    path: str = ""

    def __post_init__(self):
        if self.family not in ("taylor_green", "random_symmetric", "from_file"):
            raise ValueError(f"unknown data family {self.family!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.band < 0:
            raise ValueError("band must be >= 0")


def taylor_green_profile(grid: Grid) -> SpectralField:
    """The cellular field (sin y1 cos y2, -cos y1 sin y2); needs the 2pi box."""
    if abs(grid.length - 2.0 * np.pi) > 1e-12:
        raise ValueError("the cellular profile is defined on the 2pi-periodic box")
    y1, y2 = grid.points
    vals = np.stack([np.sin(y1) * np.cos(y2), -np.cos(y1) * np.sin(y2)])
    return SpectralField.from_values(grid, vals)


def _sarrus_defect(eta: SpectralField) -> SpectralField:
    """div eta required for a unit Jacobian: d1 eta2 d2 eta1 - d1 eta1 d2 eta2."""
    d1 = derivative(eta, 1)
    d2 = derivative(eta, 2)
    t1 = dealias_product(d1.component(1), d2.component(0))
    t2 = dealias_product(d1.component(0), d2.component(1))
    return t1 - t2


class _Progress:
    """Fail loudly when a constraint fixed point stops making progress.

    At its representation floor the residual bounces instead of sitting
    still, so no single-sweep comparison is reliable; track the best value
    and give up only after several sweeps without real improvement.  Growth
    far past the best value means the amplitude left the contraction regime;
    a plateau above tol means the remaining defect lives outside the dealias
    band, where further sweeps of the truncated map cannot reach.
    """

    def __init__(self, what: str, tol: float, patience: int = 5):
        self.what, self.tol, self.patience = what, tol, patience
        self.best = np.inf
        self.stale = 0

    def check(self, value: float) -> None:
        if value < 0.9 * self.best:
            self.best, self.stale = value, 0
            return
        self.stale += 1
        if self.stale < self.patience:
            return
        if value > 10.0 * self.best:
            raise DataGenerationError(
                f"{self.what} fixed point diverging ({value:.3e} after "
                f"{self.best:.3e}); amplitude outside the contraction regime")
        raise DataGenerationError(
            f"{self.what} fixed point stalled at its representation floor "
            f"({self.best:.3e}, tol {self.tol:.1e}); the residual defect is "
            "not representable in band")


def _enforce_unit_jacobian(base: SpectralField, det_tol: float,
                           max_iter: int) -> SpectralField:
    """Fixed point eta = base + grad lap^{-1}(sarrus(eta)); base must be div-free."""
    eta = base
    progress = _Progress("Jacobian", det_tol)
    for _ in range(max_iter):
        drift = build_geometry(eta).det_drift
        if drift < det_tol:
            return eta
        progress.check(drift)
        eta = base + gradient(invert_laplacian(_sarrus_defect(eta)))
    raise DataGenerationError(
        f"Jacobian fixed point not converged in {max_iter} sweeps "
        f"(det drift {build_geometry(eta).det_drift:.3e}, tol {det_tol:.1e})"
    )


def _enforce_div_a_free(eta: SpectralField, base_u: SpectralField, tol: float,
                        max_iter: int) -> SpectralField:
    """Fixed point u = base_u + grad lap^{-1}(-div_Atilde u) for div_A u = 0."""
    geom = build_geometry(eta)
    scale = max(sobolev_norm(base_u, 1), 1e-300)
    u = base_u
    progress = _Progress("div_A", tol * scale)
    for _ in range(max_iter):
        res = sobolev_norm(div_a(geom, u), 0)
        if res < tol * scale:
            return u
        progress.check(res)
        defect = _strip_mean(div_a(geom, u, tilde=True))
        u = base_u - gradient(invert_laplacian(defect))
    raise DataGenerationError(
        f"div_A fixed point not converged in {max_iter} sweeps "
        f"(residual {res:.3e}, tol {tol * scale:.1e})"
    )


def _strip_mean(f: SpectralField) -> SpectralField:
    # rounding-level mean from the rational part of A; keep lap^{-1} well posed
    c = f.coeffs.copy()
    c[0, 0] = 0.0
    return SpectralField(f.grid, c)


def generate_taylor_green(grid: Grid, epsilon: float, det_tol: float = 1e-12,
                          div_tol: float = 1e-12, max_iter: int = 100):
    """Cellular data: eta0 = eps * profile + O(eps^2) gradient correction,
    u0 = profile + O(eps) gradient correction.

    The velocity stays order one while the displacement scales with eps, so
    m d2 eta0 is order one under the fixed-energy coupling m = 1/eps.

    Returns:
        (eta0, u0) with det(grad zeta0) = 1 to det_tol and div_A u0 = 0 to
        div_tol * ||u0||_1.
    """
    base = taylor_green_profile(grid)
    eta = _enforce_unit_jacobian(epsilon * base, det_tol, max_iter)
    u = _enforce_div_a_free(eta, base, div_tol, max_iter)
    return odevity_project(eta), odevity_project(u)


def generate_random_symmetric(grid: Grid, epsilon: float, seed: int, band: int,
                              det_tol: float = 1e-12, div_tol: float = 1e-12,
                              max_iter: int = 100):
    """Seeded band-limited data in the symmetry class, constraint-enforced.

    Gaussian coefficients with a smooth spectral taper inside min(band, n//3),
    symmetry- and Leray-projected, displacement scaled to ||eta||_3 = eps and
    velocity to ||u||_2 = eps, then pushed through the same two fixed points
    as the cellular family.  band = 0 returns zero data.
    """
    band = min(band, grid.n // 3)
    if band == 0 or epsilon == 0.0:
        return SpectralField.zeros(grid, 2), SpectralField.zeros(grid, 2)

    rng = np.random.default_rng(seed)
    mod = np.sqrt(grid.modes1.astype(float) ** 2 + grid.modes2.astype(float) ** 2)
    taper = np.exp(-2.0 * (mod / band) ** 2) * (np.abs(grid.modes1) <= band) \
        * (grid.modes2 <= band)

    def draw() -> SpectralField:
        shape = (2, grid.n, grid.half)
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        f = SpectralField.from_coeffs(grid, c * taper)
        f = leray_project(odevity_project(f))
        c = f.coeffs.copy()
        c[:, 0, 0] = 0.0
        return SpectralField(grid, c)

    eta_base = draw()
    u_base = draw()
    n3 = sobolev_norm(eta_base, 3)
    n2 = sobolev_norm(u_base, 2)
    if n3 == 0.0 or n2 == 0.0:
        raise DataGenerationError("random draw degenerate (zero base field)")
    eta_base = (epsilon / n3) * eta_base
    u_base = (epsilon / n2) * u_base

    eta = _enforce_unit_jacobian(eta_base, det_tol, max_iter)
    u = _enforce_div_a_free(eta, u_base, div_tol, max_iter)
    return eta, u


@dataclass(frozen=True)
class ValidationReport:
    """Constraint residuals and size measures of one data set."""

    det_drift: float
    div_a_residual: float
    div_u_residual: float
    odevity_eta: float
    odevity_u: float
    mean_eta: float
    mean_u: float
    e20: float
    e21: float
    norm4: float
    strong_field_margin: float

    def as_dict(self) -> dict:
        return asdict(self)


def validate(eta: SpectralField, u: SpectralField, m: float) -> ValidationReport:
    """Measure every compatibility residual the solvers rely on."""
    geom = build_geometry(eta)
    state = FlowMapState(eta=eta, u=u, t=0.0, nu=0.0, kappa=0.0, m=m)
    d2eta = derivative(eta, 2)
    norm4 = np.sqrt(sobolev_norm(eta, 4) ** 2 + sobolev_norm(u, 4) ** 2
                    + m ** 2 * sobolev_norm(d2eta, 4) ** 2)
    return ValidationReport(
        det_drift=geom.det_drift,
        div_a_residual=sobolev_norm(div_a(geom, u), 0),
        div_u_residual=sobolev_norm(divergence(u), 0),
        odevity_eta=odevity_residual(eta),
        odevity_u=odevity_residual(u),
        mean_eta=float(np.abs(eta.mean()).max()),
        mean_u=float(np.abs(u.mean()).max()),
        e20=energy_functional(state, 2, 0),
        e21=energy_functional(state, 2, 1),
        norm4=float(norm4),
        strong_field_margin=strong_field_margin(state),
    )
