"""Run-time measurements: energies, constraint residuals, decay fits.

Conventions used throughout: <t> denotes 1 + t, fits are ordinary least
squares on log-transformed data, and every "..._sq" key stores a squared
norm so that records can be integrated or compared without re-squaring.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from .kinematics import GeometryBundle, grad_a
from .spectral import SpectralField, aniso_norm, derivative, sobolev_norm
from .state import FlowMapState


@dataclass(frozen=True)
class EnergyRecord:
    """One sampling instant of a run: norms and constraint residuals by label."""

    t: float
    norms: Dict[str, float] = field(default_factory=dict)
    residuals: Dict[str, float] = field(default_factory=dict)


def energy_functional(state: FlowMapState, n: int, i: int) -> float:
    """The weighted energy ||d2^i (grad eta, u, m d2 eta)||_{n-i}^2.

    All three blocks share the H^{n-i} weight after i background-direction
    derivatives; the gradient block contributes |k|^2 |eta_hat|^2 and the
    frozen-in block m^2 k2^2 |eta_hat|^2.
    """
    if not 0 <= i <= n:
        raise ValueError(f"need 0 <= i <= n, got n={n}, i={i}")
    g = state.grid
    w = g.sobolev_weight(n - i) * g.k2 ** (2 * i)
    ec, uc = state.eta.coeffs, state.u.coeffs
    eta_sq = (ec.real ** 2 + ec.imag ** 2).sum(axis=0)
    u_sq = (uc.real ** 2 + uc.imag ** 2).sum(axis=0)
    m2k2 = (state.m * g.k2) ** 2
    total = np.sum(g.hermitian_weight * w * ((g.ksq + m2k2) * eta_sq + u_sq))
    return g.norm_factor * float(total)


def strong_field_margin(state: FlowMapState) -> float:
    """How far above the data the background strength sits.

    m divided by max(X^{1/4}, X) with X = E_{2,0} exp(E_{2,1}); infinite for
    zero data.  Reported for context only, never used as a gate, so X
    overflowing to inf (margin 0) is acceptable.
    """
    with np.errstate(over="ignore"):
        x = energy_functional(state, 2, 0) * np.exp(
            energy_functional(state, 2, 1))
    if x == 0.0:
        return np.inf
    return state.m / max(x ** 0.25, x)


def a_dissipation(state: FlowMapState, geom: GeometryBundle) -> float:
    """||grad_A u||_0^2, the viscous energy-identity integrand."""
    total = 0.0
    for j in range(2):
        dj = grad_a(geom, state.u.component(j))
        total += sobolev_norm(dj, 0) ** 2
    return total


def pullback_norms(state: FlowMapState, geom: GeometryBundle) -> Dict[str, float]:
    """Sobolev norms of the fixed-grid fields (v, b) without inverting the map.

    Composition with the volume-preserving flow map leaves L2 integrals
    unchanged, and fixed-grid derivatives pull back to grad_A applications,
    so ||v||_{H^s} equals the label-frame norm of the A-derivative stack of u
    (exact up to the monitored Jacobian drift).  Same for b against m d2 eta.
    The two orderings of the mixed second A-derivative pull back the same
    fixed-grid partial, so they carry half weight each to match the
    one-term-per-multi-index norm convention.
    """
    out = {}
    b_lag = state.m * derivative(state.eta, 2)
    for name, w in (("v", state.u), ("b", b_lag)):
        l2_sq = sobolev_norm(w, 0) ** 2
        d1 = [grad_a(geom, w.component(j)) for j in range(2)]
        d1_sq = sum(sobolev_norm(f, 0) ** 2 for f in d1)
        d2_sq = 0.0
        for f in d1:
            for i in range(2):
                g = grad_a(geom, f.component(i))
                for l in range(2):
                    weight = 1.0 if l == i else 0.5
                    d2_sq += weight * sobolev_norm(g.component(l), 0) ** 2
        out[f"{name}_L2"] = np.sqrt(l2_sq)
        out[f"{name}_H1"] = np.sqrt(l2_sq + d1_sq)
        out[f"{name}_H2"] = np.sqrt(l2_sq + d1_sq + d2_sq)
    return out


def energy_identity_residual(records: Sequence[EnergyRecord], nu: float,
                             kappa: float) -> float:
    """Defect of the exact energy balance over a recorded run.

    E(t) = ||u||_0^2 + ||m d2 eta||_0^2 must satisfy
    E(T) + 2 nu int ||grad_A u||_0^2 = E(0) (viscous) or the kappa analog
    with ||u||_0^2 as integrand; records must carry the integrand under the
    "dissipation" key.  The integral uses composite Simpson quadrature on the
    record times; returns |defect| / E(0).
    """
    if len(records) < 3:
        raise ValueError("need at least 3 records for the quadrature")
    t = np.array([r.t for r in records])
    energy = np.array([r.norms["u_L2"] ** 2 + r.norms["m_d2eta_L2"] ** 2
                       for r in records])
    coeff = 2.0 * (nu if nu != 0.0 else kappa)
    integral = 0.0
    if coeff != 0.0:
        d = np.array([r.norms["dissipation"] for r in records])
        integral = simpson(d, x=t)
    return abs(energy[-1] + coeff * integral - energy[0]) / energy[0]


@dataclass(frozen=True)
class DecayFit:
    """Least-squares decay law over a time window.

    For kind "power" the model is log N = a + slope * log<t>; for
    "exponential" it is log N = a - rate * t and slope stores the rate
    (positive means decay).
    """

    kind: str
    slope: float
    stderr: float
    r2: float
    window: Tuple[float, float]
    n_samples: int


def _ols(x: np.ndarray, y: np.ndarray):
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    resid = y - ym - slope * (x - xm)
    rss = float((resid ** 2).sum())
    tss = float(((y - ym) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    stderr = np.sqrt(rss / (len(x) - 2) / sxx) if len(x) > 2 else np.inf
    return slope, stderr, r2


def fit_decay(times: Sequence[float], values: Sequence[float], kind: str,
              window: Tuple[float, float]) -> DecayFit:
    """Fit a power law in <t> = 1 + t or an exponential over [window] samples.

    Raises:
        ValueError: unknown kind, fewer than 8 samples in the window, or
            nonpositive values (their indices are listed).
    """
    if kind not in ("power", "exponential"):
        raise ValueError(f"kind must be 'power' or 'exponential', got {kind!r}")
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 8:
        raise ValueError(
            f"window {window} holds {int(sel.sum())} samples; need at least 8")
    bad = np.where(sel & (v <= 0.0))[0]
    if bad.size:
        raise ValueError(
            f"nonpositive values at indices {bad.tolist()[:10]} cannot be log-fit")
    tw, vw = t[sel], v[sel]
    if kind == "power":
        slope, stderr, r2 = _ols(np.log1p(tw), np.log(vw))
    else:
        s, stderr, r2 = _ols(tw, np.log(vw))
        slope = -s  # report a positive decay rate
    return DecayFit(kind, slope, stderr, r2, (float(window[0]), float(window[1])),
                    int(sel.sum()))


def linear_error_metrics(run: Sequence[FlowMapState],
                         linear: Sequence[Tuple[SpectralField, SpectralField]],
                         ) -> List[EnergyRecord]:
    """Deviation of a nonlinear run from its exact linear companion.

    Args:
        run: recorded nonlinear states.
        linear: (eta, u) pairs at the same instants (same length and times).

    Returns:
        Records keyed by the deviation quantities: the plain squared norms
        "etad_H3_sq" and "ud_H2_sq" (the latter is ||(u_d, m d2 eta_d)||_2^2),
        the <t>-weighted families "etad_d2{i}_w" (i = 1, 2) and
        "ud_d2{i}_w" (i = 0, 1, 2), and the damped-theory size
        "damped_sq" = ||(eta_d, u_d)||_4^2 + ||m eta_d||_{5,2}^2.
    """
    if len(run) != len(linear):
        raise ValueError(f"trajectory lengths differ: {len(run)} vs {len(linear)}")
    out = []
    for state, (eta_l, u_l) in zip(run, linear):
        de = state.eta - eta_l
        du = state.u - u_l
        t_w = 1.0 + state.t
        m = state.m
        norms = {
            "etad_H3_sq": sobolev_norm(de, 3) ** 2,
            "ud_H2_sq": (sobolev_norm(du, 2) ** 2
                         + m ** 2 * sobolev_norm(derivative(de, 2), 2) ** 2),
            "damped_sq": (sobolev_norm(de, 4) ** 2 + sobolev_norm(du, 4) ** 2
                          + m ** 2 * aniso_norm(de, 5) ** 2),
        }
        for i in (1, 2):
            di = derivative(de, 2, order=i)
            norms[f"etad_d2{i}_w"] = t_w ** i * sobolev_norm(di, 3 - i) ** 2
        for i in (0, 1, 2):
            du_i = du if i == 0 else derivative(du, 2, order=i)
            de_i = derivative(de, 2, order=i + 1)
            norms[f"ud_d2{i}_w"] = t_w ** (i + 1) * (
                sobolev_norm(du_i, 2 - i) ** 2
                + m ** 2 * sobolev_norm(de_i, 2 - i) ** 2)
        out.append(EnergyRecord(t=state.t, norms=norms))
    return out


def msweep_slope(ms: Sequence[float], ds: Sequence[float]) -> Tuple[float, float]:
    """Log-log slope of deviation size against background strength.

    Returns (slope, stderr); requires at least 3 strictly increasing m values
    and positive deviations.
    """
    m = np.asarray(ms, dtype=float)
    d = np.asarray(ds, dtype=float)
    if len(m) < 3:
        raise ValueError("need at least 3 sweep points")
    if not np.all(np.diff(m) > 0):
        raise ValueError("sweep m values must be strictly increasing")
    if not np.all(d > 0):
        raise ValueError("deviation sizes must be positive")
    slope, stderr, _ = _ols(np.log(m), np.log(d))
    return slope, stderr
