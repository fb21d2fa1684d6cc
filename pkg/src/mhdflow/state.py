"""Solution states for the flow-map and fixed-grid formulations."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import GridMismatchError, RankError
from .spectral import Grid, SpectralField


def _check_pair(a: SpectralField, b: SpectralField, names: str):
    if not (a.is_vector and b.is_vector):
        raise RankError(f"{names} must both be vector fields")
    if a.grid != b.grid:
        raise GridMismatchError(f"{names} live on different grids")


def _check_params(nu: float, kappa: float, m: float):
    if nu < 0 or kappa < 0:
        raise ValueError(f"dissipation parameters must be >= 0 (nu={nu}, kappa={kappa})")
    if m < 0:
        raise ValueError(f"background strength m must be >= 0, got {m}")


@dataclass(frozen=True)
class FlowMapState:
    """Lagrangian state: displacement eta and label-frame velocity u at time t.

    The flow map is zeta(y) = y + eta(y); u is the velocity seen along labels.
    Parameters: nu (viscosity), kappa (linear drag; the damped variant), and the
    background field strength m.  eta and u are expected zero-mean.
    """

    eta: SpectralField
    u: SpectralField
    t: float
    nu: float
    kappa: float
    m: float

    def __post_init__(self):
        _check_pair(self.eta, self.u, "eta and u")
        _check_params(self.nu, self.kappa, self.m)

    @property
    def grid(self) -> Grid:
        return self.eta.grid

    def replace(self, **kw) -> "FlowMapState":
        return replace(self, **kw)


@dataclass(frozen=True)
class EulerianState:
    """Fixed-grid state: velocity v and magnetic perturbation b at time t.

    b is the deviation of the (velocity-scaled) magnetic field from the uniform
    background m*e2; both fields should be divergence-free and zero-mean.
    """

    v: SpectralField
    b: SpectralField
    t: float
    nu: float
    kappa: float
    m: float

    def __post_init__(self):
        _check_pair(self.v, self.b, "v and b")
        _check_params(self.nu, self.kappa, self.m)

    @property
    def grid(self) -> Grid:
        return self.v.grid

    def replace(self, **kw) -> "EulerianState":
        return replace(self, **kw)


_SCHEMES = ("etd_rk4", "imex_bdf2")


@dataclass(frozen=True)
class StepControl:
    """Time-stepping knobs shared by all steppers.

    Args:
        dt: step size, > 0.
        scheme: "etd_rk4" (exponential RK4, the default) or "imex_bdf2"
            (two-step implicit-explicit; driver-level, needs history).
        dealias: apply the 2/3 rule inside nonlinear terms.  Leave on except
            for aliasing experiments.
        odevity_project: re-impose the (even, odd)-in-y2 symmetry after each
            step instead of merely monitoring its residual.
    """

    dt: float
    scheme: str = "etd_rk4"
    dealias: bool = True
    odevity_project: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; options: {_SCHEMES}")
