"""Record CSVs, gated checks, and versioned JSON summaries."""

import json

import jsonschema
import numpy as np
import pytest

from mhdflow.diagnostics import DecayFit, EnergyRecord
from mhdflow.output import (CLAIMS, Check, fit_entry, load_schema,
                            read_records_csv, summarize_run, write_records_csv,
                            write_summary)


def sample_records(n=4):
    rng = np.random.default_rng(17)
    out = []
    for i in range(n):
        out.append(EnergyRecord(
            t=0.1 * i,
            norms={"u_L2": float(rng.uniform(0.5, 2.0)),
                   "eta_H3": float(rng.uniform(0.01, 0.1)),
                   "b_H2": float(rng.uniform(0.1, 1.0))},
            residuals={"det_drift": float(10.0 ** -rng.uniform(8, 12)),
                       "div_a_u": float(10.0 ** -rng.uniform(9, 13))}))
    return out


def test_csv_round_trip_is_exact(tmp_path):
    records = sample_records()
    p = str(tmp_path / "records.csv")
    write_records_csv(p, records)
    back = read_records_csv(p)
    assert len(back) == len(records)
    for a, b in zip(records, back):
        assert a.t == b.t
        assert a.norms == b.norms
        assert a.residuals == b.residuals


def test_csv_column_order(tmp_path):
    p = str(tmp_path / "records.csv")
    write_records_csv(p, sample_records())
    header = open(p).readline().strip().split(",")
    assert header == ["t", "b_H2", "eta_H3", "u_L2",
                      "res_det_drift", "res_div_a_u"]


def test_empty_records_give_header_only(tmp_path):
    p = str(tmp_path / "records.csv")
    write_records_csv(p, [])
    lines = open(p).read().splitlines()
    assert lines == ["t"]
    assert read_records_csv(p) == []


def test_inconsistent_records_rejected(tmp_path):
    records = sample_records(2)
    records[1] = EnergyRecord(t=1.0, norms={"other": 1.0}, residuals={})
    with pytest.raises(ValueError):
        write_records_csv(str(tmp_path / "bad.csv"), records)


def test_check_lines_and_comparators():
    c = Check(name="det_drift", value=2.5e-8, threshold=1e-6)
    assert c.passed
    assert c.line() == "[PASS] det_drift: 2.5e-08 <= 1e-06"
    c = Check(name="slope", value=-0.4, threshold=-0.7, comparator="<=")
    assert not c.passed
    assert c.line().startswith("[FAIL] slope")
    assert Check(name="x", value=2.0, threshold=1.0, comparator=">").passed
    with pytest.raises(ValueError):
        Check(name="x", value=1.0, threshold=1.0, comparator="~=").passed


def test_summary_validates_against_schema(tmp_path):
    fit = DecayFit(kind="power", slope=-1.4, stderr=0.01, r2=0.999,
                   window=(20.0, 100.0), n_samples=80)
    checks = [Check(name="slope_v_h1", value=-1.4, threshold=-1.25,
                    claim="C4-viscous-decay")]
    doc = summarize_run(
        "decay", config={"grid.n": 64, "physics.nu": 0.05},
        run={"dt": 1e-3, "n_steps": 5000, "scheme": "etd_rk4",
             "wall_time": 12.5},
        final=sample_records(1)[0],
        validation={"det_drift": 1e-12},
        fits=[fit_entry("v_H1", fit)],
        checks=checks)
    jsonschema.validate(doc, load_schema())
    assert doc["format_version"] == 1
    assert doc["claims"] == {"C4-viscous-decay": CLAIMS["C4-viscous-decay"]}
    p = str(tmp_path / "summary.json")
    write_summary(p, doc)
    assert json.load(open(p)) == doc


def test_summary_scrubs_nonfinite_values():
    rec = EnergyRecord(t=0.0, norms={"margin": float("inf")},
                       residuals={"nan_thing": float("nan")})
    doc = summarize_run("run", config=None, final=rec)
    assert doc["final"]["norms"]["margin"] is None
    assert doc["final"]["residuals"]["nan_thing"] is None
    # the document stays strictly-JSON serializable
    json.dumps(doc, allow_nan=False)


def test_summary_bytes_are_deterministic(tmp_path):
    doc = summarize_run("run", config={"grid.n": 16},
                        run={"dt": 0.1, "n_steps": 10, "scheme": "etd_rk4"})
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    write_summary(a, doc)
    write_summary(b, doc)
    assert open(a, "rb").read() == open(b, "rb").read()


def test_schema_rejects_malformed_documents():
    schema = load_schema()
    jsonschema.validate({"format_version": 1, "scenario": "run"}, schema)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"scenario": "run"}, schema)  # missing version
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"format_version": 2, "scenario": "run"}, schema)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"format_version": 1, "scenario": "run",
                             "unexpected": 1}, schema)
