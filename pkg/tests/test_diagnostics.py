"""Energy bookkeeping, decay fitting, and sweep slope extraction."""

import numpy as np
import pytest

from conftest import band_field
from mhdflow.diagnostics import (DecayFit, EnergyRecord, a_dissipation,
                                 energy_functional, energy_identity_residual,
                                 fit_decay, linear_error_metrics, msweep_slope,
                                 pullback_norms, strong_field_margin)
from mhdflow.initial_data import generate_taylor_green
from mhdflow.kinematics import build_geometry
from mhdflow.spectral import (SpectralField, derivative, gradient, leray_project,
                              sobolev_norm)
from mhdflow.state import FlowMapState


def _state(grid, eta, u, m=10.0):
    return FlowMapState(eta=eta, u=u, t=0.0, nu=0.0, kappa=0.0, m=m)


def test_energy_functional_against_operator_oracle(grid32):
    eta = band_field(grid32, seed=1, band=5, amp=0.3)
    u = band_field(grid32, seed=2, band=5)
    st = _state(grid32, eta, u, m=7.0)
    # E_{2,0} assembled from the public norm operators
    grad_sq = sum(sobolev_norm(gradient(eta.component(i)), 2) ** 2
                  for i in range(2))
    e20 = (grad_sq + sobolev_norm(u, 2) ** 2
           + 49.0 * sobolev_norm(derivative(eta, 2), 2) ** 2)
    assert energy_functional(st, 2, 0) == pytest.approx(e20, rel=1e-12)
    # E_{2,1}: one d2 layer outside, one regularity layer fewer
    d2eta, d2u = derivative(eta, 2), derivative(u, 2)
    grad_sq1 = sum(sobolev_norm(gradient(d2eta.component(i)), 1) ** 2
                   for i in range(2))
    e21 = (grad_sq1 + sobolev_norm(d2u, 1) ** 2
           + 49.0 * sobolev_norm(derivative(d2eta, 2), 1) ** 2)
    assert energy_functional(st, 2, 1) == pytest.approx(e21, rel=1e-12)


def test_strong_field_margin_branches(grid32):
    z = SpectralField.zeros(grid32, rank=2)
    assert strong_field_margin(_state(grid32, z, z, m=4.0)) == np.inf
    # small data: X < 1 uses the fourth root
    eta = band_field(grid32, seed=3, band=3, amp=1e-3)
    st = _state(grid32, eta, z, m=4.0)
    x = energy_functional(st, 2, 0) * np.exp(energy_functional(st, 2, 1))
    assert x < 1.0
    assert strong_field_margin(st) == pytest.approx(4.0 / x ** 0.25, rel=1e-12)
    # large data: plain ratio
    eta = band_field(grid32, seed=4, band=3, amp=2.0)
    u = band_field(grid32, seed=5, band=3, amp=2.0)
    st = _state(grid32, eta, u, m=4.0)
    x = energy_functional(st, 2, 0) * np.exp(energy_functional(st, 2, 1))
    assert x > 1.0
    assert strong_field_margin(st) == pytest.approx(4.0 / x, rel=1e-12)


def test_a_dissipation_reduces_to_plain_gradients(grid32):
    u = leray_project(band_field(grid32, seed=6, band=5))
    geom0 = build_geometry(SpectralField.zeros(grid32, rank=2))
    expect = sum(sobolev_norm(gradient(u.component(j)), 0) ** 2
                 for j in range(2))
    assert a_dissipation(_state(grid32, SpectralField.zeros(grid32, rank=2), u),
                         geom0) == pytest.approx(expect, rel=1e-12)


def test_pullback_norms_at_identity_match_plain_norms(grid32):
    u = leray_project(band_field(grid32, seed=7, band=5))
    eta = SpectralField.zeros(grid32, rank=2)
    st = _state(grid32, eta, u, m=3.0)
    norms = pullback_norms(st, build_geometry(eta))
    assert norms["v_L2"] == pytest.approx(sobolev_norm(u, 0), rel=1e-10)
    assert norms["v_H2"] == pytest.approx(sobolev_norm(u, 2), rel=1e-10)
    assert norms["b_L2"] == pytest.approx(
        3.0 * sobolev_norm(derivative(eta, 2), 0), abs=1e-12)


def test_fit_decay_recovers_synthetic_power_law():
    t = np.linspace(0.0, 50.0, 300)
    vals = 3.7 * (1.0 + t) ** -1.8
    fit = fit_decay(t, vals, kind="power", window=(5.0, 50.0))
    assert isinstance(fit, DecayFit)
    assert fit.slope == pytest.approx(-1.8, abs=1e-10)
    assert fit.r2 > 1.0 - 1e-12
    assert fit.stderr < 1e-10
    assert fit.n_samples == np.count_nonzero((t >= 5.0) & (t <= 50.0))


def test_fit_decay_recovers_synthetic_exponential():
    t = np.linspace(0.0, 30.0, 200)
    vals = 2.0 * np.exp(-0.7 * t)
    fit = fit_decay(t, vals, kind="exponential", window=(5.0, 30.0))
    assert fit.slope == pytest.approx(0.7, abs=1e-10)  # positive = decay
    assert fit.r2 > 1.0 - 1e-12


def test_fit_decay_window_isolation():
    t = np.linspace(0.0, 20.0, 120)
    vals = 5.0 * (1.0 + t) ** -2.0
    poisoned = vals.copy()
    poisoned[t < 4.0] = 7.3  # junk outside the window must not matter
    fit = fit_decay(t, poisoned, kind="power", window=(4.0, 20.0))
    assert fit.slope == pytest.approx(-2.0, abs=1e-9)


def test_fit_decay_input_validation():
    t = np.linspace(0.0, 5.0, 30)
    vals = np.exp(-t)
    with pytest.raises(ValueError):
        fit_decay(t, vals, kind="power", window=(4.9, 5.0))  # < 8 samples
    bad = vals.copy()
    bad[10] = 0.0
    with pytest.raises(ValueError) as err:
        fit_decay(t, bad, kind="exponential", window=(0.0, 5.0))
    assert "10" in str(err.value)
    with pytest.raises(ValueError):
        fit_decay(t, vals, kind="cubic", window=(0.0, 5.0))


def test_energy_identity_residual_on_synthetic_balance():
    # E(t) = E0 - 2 nu int D dt holds exactly for D = e^{-t}; sampling fine
    # enough that the Simpson floor sits well under the tolerance
    nu = 0.05
    t = np.linspace(0.0, 5.0, 2001)
    diss = np.exp(-t)
    energy = 4.0 - 2.0 * nu * (1.0 - np.exp(-t))
    records = [EnergyRecord(t=float(ti),
                            norms={"u_L2": float(np.sqrt(e)),
                                   "m_d2eta_L2": 0.0,
                                   "dissipation": float(d)},
                            residuals={})
               for ti, e, d in zip(t, energy, diss)]
    assert energy_identity_residual(records, nu=nu, kappa=0.0) < 1e-12
    # a 1% energy defect is reported at the 1% level
    records[-1] = EnergyRecord(t=5.0, norms={
        "u_L2": float(np.sqrt(energy[-1] * 1.01)), "m_d2eta_L2": 0.0,
        "dissipation": float(diss[-1])}, residuals={})
    assert energy_identity_residual(records, nu=nu, kappa=0.0) == pytest.approx(
        0.01 * energy[-1] / 4.0, rel=1e-3)


def test_linear_error_metrics_zero_for_matched_pairs(grid32):
    eta, u = generate_taylor_green(grid32, 0.05)
    states = [FlowMapState(eta=eta, u=u, t=0.1 * j, nu=0.0, kappa=0.0, m=5.0)
              for j in range(3)]
    recs = linear_error_metrics(states, [(s.eta, s.u) for s in states])
    assert len(recs) == 3
    for r in recs:
        assert r.norms["etad_H3_sq"] == 0.0
        assert r.norms["ud_H2_sq"] == 0.0
        assert r.norms["damped_sq"] == 0.0
    with pytest.raises(ValueError):
        linear_error_metrics(states, [(eta, u)])


def test_msweep_slope_on_synthetic_data():
    ms = [16.0, 32.0, 64.0, 128.0]
    ds = [8.0 * m ** -1.5 for m in ms]
    slope, stderr = msweep_slope(ms, ds)
    assert slope == pytest.approx(-1.5, abs=1e-12)
    assert stderr < 1e-12
    with pytest.raises(ValueError):
        msweep_slope([16.0, 32.0], [1.0, 0.5])  # too few points
    with pytest.raises(ValueError):
        msweep_slope([16.0, 8.0, 32.0], [1.0, 2.0, 0.5])  # not increasing
    with pytest.raises(ValueError):
        msweep_slope(ms, [1.0, 0.5, 0.0, 0.1])  # nonpositive deviation
