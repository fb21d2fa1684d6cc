"""Shared fixtures, seeded field builders, and the mode ODE oracle."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mhdflow.linear import LinearModeState
from mhdflow.spectral import Grid, SpectralField, sobolev_norm

# One-line verdicts from the acceptance tests, echoed after the run summary so
# they are visible without -s.
ACCEPTANCE_LINES = []


def record_criterion(number: int, passed: bool, text: str):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


def band_field(grid: Grid, seed: int, band: int = 5, rank: int = 2,
               amp: float = 1.0) -> SpectralField:
    """Zero-mean random real field supported on modes |m| <= band."""
    rng = np.random.default_rng(seed)
    shape = (2, grid.n, grid.half) if rank == 2 else (grid.n, grid.half)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = (np.abs(grid.modes1) <= band) & (grid.modes2 <= band)
    f = SpectralField.from_coeffs(grid, c * mask)
    c = f.coeffs.copy()
    c[..., 0, 0] = 0.0
    f = SpectralField(grid, c)
    return (amp / sobolev_norm(f, 0)) * f


def oracle_mode(mode, t, rtol=1e-12):
    """Adaptive high-order integration of one mode's ODE system.

    Near-zero atol keeps the error control relative even while the solution
    decays by many orders; callers must cap the decay depth d*t so that the
    integrator can actually deliver that relative accuracy.
    """
    d = mode.nu * (mode.k[0] ** 2 + mode.k[1] ** 2) + mode.kappa
    w2 = (mode.m * mode.k[1]) ** 2

    def rhs(_, y):
        eta, u = y[:2], y[2:]
        return np.concatenate([u, -w2 * eta - d * u])

    y0 = np.concatenate([mode.eta_hat, mode.u_hat]).astype(np.complex128)
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=rtol, atol=1e-22)
    return sol.y[:2, -1], sol.y[2:, -1]


def capped_time(mode, t):
    """Limit d*t so both sides stay inside the comparable decay range."""
    d = mode.nu * (mode.k[0] ** 2 + mode.k[1] ** 2) + mode.kappa
    return float(min(t, 40.0 / max(d, 1.0)))


def random_mode(rng, near_critical=False):
    k = (int(rng.integers(-6, 7)), int(rng.integers(-6, 7)))
    m = float(10.0 ** rng.uniform(0, 1.6))
    if rng.random() < 0.5:
        nu, kappa = float(10.0 ** rng.uniform(-2, 0)), 0.0
    else:
        nu, kappa = 0.0, float(10.0 ** rng.uniform(-1, 1))
    if near_critical and k[1] != 0:
        # pin the discriminant d^2/4 - (m k2)^2 within 1e-8 of zero
        target = 2.0 * m * abs(k[1]) * (1.0 + rng.choice([-1.0, 1.0]) * 1e-8)
        if nu > 0:
            nu = target / max(k[0] ** 2 + k[1] ** 2, 1)
        else:
            kappa = target
    amp = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return LinearModeState(k=k, eta_hat=amp[:2], u_hat=amp[2:],
                           nu=nu, kappa=kappa, m=m)
