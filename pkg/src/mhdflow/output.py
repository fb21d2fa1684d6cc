"""Result serialization: record CSVs and versioned JSON run summaries.

CSV columns are "t", the norm labels in sorted order, then the residual
labels in sorted order prefixed with "res_".  Floats are written with
repr(), the shortest round-trip form, so files diff cleanly between
identical runs.  Summaries carry a format_version and validate against the
bundled schema.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Mapping, Optional, Sequence

from .diagnostics import DecayFit, EnergyRecord

# Stable identifiers for the verifiable claims this suite checks; reports and
# the acceptance tests share these names.
CLAIMS: Dict[str, str] = {
    "C1-mode-propagator": "closed-form per-mode propagator matches adaptive"
                          " ODE integration to near machine precision",
    "C2-energy-identity": "discrete energy balance closes to quadrature"
                          " accuracy and tightens under step refinement",
    "C3-constraints": "volume, div_A, and symmetry class are preserved along"
                      " a nonlinear run",
    "C4-viscous-decay": "fixed-grid velocity and magnetic perturbations decay"
                        " at the expected graded rates (viscous)",
    "C5-viscous-msweep": "deviation from the linear evolution shrinks with"
                         " background strength (viscous)",
    "C6-damped-decay": "energy decays exponentially at a rate independent of"
                       " the background strength (damped)",
    "C7-damped-msweep": "deviation from the linear evolution shrinks with"
                        " background strength (damped)",
    "C8-formulations": "flow-map and fixed-grid formulations agree after"
                       " push-forward, with frozen-in transport",
    "C9-correctors": "initial-data correctors restore the nonlinear"
                     " constraints to round-off",
    "C10-boundedness": "the graded energy never leaves its early-time"
                       " envelope over long runs",
}

FORMAT_VERSION = 1

_COMPARATORS = {
    "<=": lambda v, t: v <= t,
    "<": lambda v, t: v < t,
    ">=": lambda v, t: v >= t,
    ">": lambda v, t: v > t,
}


@dataclass(frozen=True)
class Check:
    """One gated scalar: value compared against threshold."""

    name: str
    value: float
    threshold: float
    comparator: str = "<="
    claim: str = ""

    @property
    def passed(self) -> bool:
        try:
            return bool(_COMPARATORS[self.comparator](self.value, self.threshold))
        except KeyError:
            raise ValueError(f"unknown comparator {self.comparator!r}") from None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.value:.6g} "
                f"{self.comparator} {self.threshold:.6g}")


def write_records_csv(path: str, records: Sequence[EnergyRecord]) -> None:
    """Write a record stream; all records must share the first one's keys.

    An empty stream still produces a header-only file.
    """
    norm_keys = sorted(records[0].norms) if records else []
    res_keys = sorted(records[0].residuals) if records else []
    header = ["t"] + norm_keys + [f"res_{k}" for k in res_keys]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            try:
                row = ([repr(float(r.t))]
                       + [repr(float(r.norms[k])) for k in norm_keys]
                       + [repr(float(r.residuals[k])) for k in res_keys])
            except KeyError as exc:
                raise ValueError(
                    f"record at t = {r.t} lacks key {exc}") from None
            writer.writerow(row)


def read_records_csv(path: str) -> List[EnergyRecord]:
    """Inverse of write_records_csv (round-trips exactly)."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        res_cols = [(i, name[4:]) for i, name in enumerate(header)
                    if name.startswith("res_")]
        norm_cols = [(i, name) for i, name in enumerate(header)
                     if i > 0 and not name.startswith("res_")]
        out = []
        for row in reader:
            out.append(EnergyRecord(
                t=float(row[0]),
                norms={name: float(row[i]) for i, name in norm_cols},
                residuals={name: float(row[i]) for i, name in res_cols}))
    return out


def _clean(obj):
    """Replace non-finite floats with None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return obj if obj == obj and abs(obj) != float("inf") else None
    return obj


def fit_entry(name: str, fit: DecayFit) -> dict:
    return {"name": name, "kind": fit.kind, "slope": fit.slope,
            "stderr": fit.stderr, "r2": fit.r2,
            "window": list(fit.window), "n_samples": fit.n_samples}


def summarize_run(scenario: str, *, config: Optional[Mapping[str, object]],
                  run: Optional[Mapping[str, object]] = None,
                  final: Optional[EnergyRecord] = None,
                  validation: Optional[Mapping[str, float]] = None,
                  fits: Sequence[dict] = (),
                  sweep: Sequence[Mapping[str, object]] = (),
                  comparison: Optional[Mapping[str, object]] = None,
                  checks: Sequence[Check] = ()) -> dict:
    """Assemble the versioned summary document for one CLI invocation.

    Each gated check names the claim it tests; the matching entries of
    CLAIMS ride along as the traceability map.
    """
    doc: dict = {"format_version": FORMAT_VERSION, "scenario": scenario}
    if config is not None:
        doc["config"] = dict(config)
    if run is not None:
        doc["run"] = dict(run)
    if validation is not None:
        doc["validation"] = dict(validation)
    if final is not None:
        doc["final"] = {"t": final.t, "norms": dict(final.norms),
                        "residuals": dict(final.residuals)}
    if fits:
        doc["fits"] = list(fits)
    if sweep:
        doc["sweep"] = [dict(p) for p in sweep]
    if comparison is not None:
        doc["comparison"] = dict(comparison)
    if checks:
        doc["checks"] = [{"name": c.name, "passed": c.passed,
                          "value": c.value, "threshold": c.threshold,
                          "comparator": c.comparator, "claim": c.claim}
                         for c in checks]
        claimed = {c.claim for c in checks if c.claim}
        if claimed:
            doc["claims"] = {cid: CLAIMS[cid] for cid in sorted(claimed)
                             if cid in CLAIMS}
    return _clean(doc)


def write_summary(path: str, summary: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_schema() -> dict:
    """The bundled JSON schema for summary documents."""
    text = (resources.files("mhdflow") / "schemas" / "summary.schema.json"
            ).read_text(encoding="utf-8")
    return json.loads(text)
