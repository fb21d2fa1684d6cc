"""End-to-end checks of the command-line front end.

Everything runs in-process through main(argv) at desk scale (N = 32), so
these double as integration tests of config parsing -> driver -> output.
N = 32 is the smallest grid whose dealias band holds the full constraint
correction cascade for the cellular family at the default tolerances.
"""

import csv
import json
import os

import jsonschema
import numpy as np
import pytest

from mhdflow.checkpoint import load_checkpoint
from mhdflow.cli import main
from mhdflow.driver import make_initial_state, run_flow_map
from mhdflow.initial_data import InitialDataSpec
from mhdflow.linear import LinearModeState, evolve_mode_exact
from mhdflow.output import load_schema, write_records_csv
from mhdflow.spectral import Grid


def cli(*argv) -> int:
    return main([str(a) for a in argv])


def load_summary(out):
    """Read out/summary.json and validate it against the shipped schema."""
    with open(os.path.join(out, "summary.json"), encoding="utf-8") as fh:
        doc = json.load(fh)
    jsonschema.validate(doc, load_schema())
    return doc


RUN_CONFIG = """\
# small end-to-end run
grid.n            = 32
physics.m         = 5.0
physics.nu        = 0.05
initial.family    = "taylor_green"
initial.epsilon   = 0.1
time.dt           = 2e-3
time.t_final      = 0.04
time.record_every = 4
"""


def test_run_writes_outputs(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CONFIG)
    out = tmp_path / "out"
    assert cli("run", "--config", cfg, "--out", out, "--quiet") == 0

    with open(out / "records.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    # t = 0 plus every fourth of 20 steps
    assert len(rows) == 6
    assert float(rows[0]["t"]) == 0.0
    assert abs(float(rows[-1]["t"]) - 0.04) < 1e-12

    doc = load_summary(out)
    assert doc["scenario"] == "run"
    assert doc["config"]["grid.n"] == 32
    assert doc["run"]["n_steps"] == 20
    assert doc["final"]["norms"]["u_L2"] > 0
    assert doc["validation"]["det_drift"] < 1e-9


def test_run_is_deterministic(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CONFIG)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli("run", "--config", cfg, "--out", out, "--quiet",
                   "--seed", 3) == 0
        outs.append((out / "records.csv").read_bytes())
    assert outs[0] == outs[1]


def test_run_save_final_checkpoint(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CONFIG)
    final = tmp_path / "final.bin"
    assert cli("run", "--config", cfg, "--out", tmp_path / "o", "--quiet",
               "--save-final", final) == 0
    state = load_checkpoint(str(final))
    assert state.grid.n == 32
    assert abs(state.t - 0.04) < 1e-12
    assert state.nu == 0.05


@pytest.mark.parametrize("argv", [
    ("run", "--config", "/nonexistent/p.cfg"),
    ("run", "--set", "bogus.key=1"),
    ("run", "--set", "gridn16"),              # missing '='
    ("run", "--set", "grid.n=seventeen"),     # coercion failure
    ("decay", "--set", "grid.n=32"),          # no dissipation at all
    ("linear", "--k1", "0", "--k2", "0"),     # the only non-evolving mode
])
def test_config_errors_exit_two(tmp_path, argv):
    assert cli(*argv, "--out", tmp_path, "--quiet") == 2


def _msweep_args(out, gate):
    return ("msweep", "--out", out, "--quiet",
            "--set", "grid.n=32",
            "--set", "physics.nu=0.05",
            "--set", "sweep.ms=8,16,24",
            "--set", "time.t_final=0.5",
            "--set", f"gates.msweep_slope={gate}")


def test_msweep_gate_failure_exits_one(tmp_path, capsys):
    # no sweep can reach slope <= -50, so the gate must trip
    assert cli(*_msweep_args(tmp_path, -50.0)) == 1
    assert "[FAIL] msweep_slope" in capsys.readouterr().out
    doc = load_summary(tmp_path)
    assert doc["checks"][0]["passed"] is False
    assert doc["comparison"]["mode"] == "viscous"
    assert len(doc["sweep"]) == 3


def test_msweep_passes_with_worker_pool(tmp_path, capsys):
    # deviation shrinks with m, so slope <= 0 is safe even on a short run;
    # --threads 2 exercises the process-pool path
    assert cli(*_msweep_args(tmp_path, 0.0), "--threads", 2) == 0
    assert "[PASS] msweep_slope" in capsys.readouterr().out
    for m in (8, 16, 24):
        assert os.path.exists(os.path.join(tmp_path, f"records_m{m}.csv"))
    doc = load_summary(tmp_path)
    assert doc["comparison"]["slope"] < 0.0


def test_gen_ic_then_run_matches_direct(tmp_path):
    """from_file must reproduce the in-memory pipeline bit for bit."""
    common = ("--set", "physics.m=5", "--set", "physics.nu=0.05",
              "--set", "time.dt=2e-3", "--set", "time.t_final=0.04",
              "--set", "time.record_every=4")
    # band 3 on a 32-grid keeps the whole correction cascade representable,
    # so the default generator tolerances are reachable
    icdir = tmp_path / "ic"
    assert cli("gen-ic", "--out", icdir, "--quiet", "--file", "state0.bin",
               "--set", "grid.n=32", "--set", "initial.family=random_symmetric",
               "--set", "initial.epsilon=0.1", "--set", "initial.seed=7",
               "--set", "initial.band=3", *common) == 0
    assert load_summary(icdir)["validation"]["div_a_residual"] < 1e-9

    out = tmp_path / "run"
    assert cli("run", "--out", out, "--quiet",
               "--set", "initial.family=from_file",
               "--set", f"initial.path={icdir / 'state0.bin'}", *common) == 0

    grid = Grid(32)
    spec = InitialDataSpec(family="random_symmetric", epsilon=0.1, seed=7,
                           band=3)
    state0 = make_initial_state(grid, spec, m=5.0, nu=0.05)
    res = run_flow_map(state0.eta, state0.u, m=5.0, nu=0.05, dt=2e-3,
                       n_steps=20, record_every=4)
    direct = tmp_path / "direct.csv"
    write_records_csv(str(direct), res.records)
    assert (out / "records.csv").read_bytes() == direct.read_bytes()


def test_linear_csv_matches_exact_evolution(tmp_path):
    assert cli("linear", "--out", tmp_path, "--quiet",
               "--k1", 2, "--k2", 3, "--amplitude", 0.5, "--samples", 5,
               "--set", "physics.m=4", "--set", "physics.nu=0.05",
               "--set", "time.t_final=2.0") == 0
    with open(tmp_path / "linear.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5

    direction = np.array([-3.0, 2.0], dtype=np.complex128) / np.hypot(2, 3)
    mode = LinearModeState(k=(2.0, 3.0), eta_hat=0.5 * direction,
                           u_hat=0.5 * direction, nu=0.05, kappa=0.0, m=4.0)
    for row, t in zip(rows, np.linspace(0.0, 2.0, 5)):
        st = evolve_mode_exact(mode, float(t))
        # repr round-trips doubles exactly, and the evolution is a pure
        # function of its inputs, so the CSV must match bitwise
        assert float(row["t"]) == float(t)
        for j, name in ((0, "eta1"), (1, "eta2")):
            assert float(row[f"{name}_re"]) == st.eta_hat[j].real
            assert float(row[f"{name}_im"]) == st.eta_hat[j].imag
        for j, name in ((0, "u1"), (1, "u2")):
            assert float(row[f"{name}_re"]) == st.u_hat[j].real
            assert float(row[f"{name}_im"]) == st.u_hat[j].imag


def test_compare_subcommand(tmp_path):
    args = ("compare", "--out", tmp_path, "--quiet",
            "--set", "grid.n=32", "--set", "physics.m=5",
            "--set", "physics.nu=0.05", "--set", "initial.epsilon=0.1",
            "--set", "time.dt=2.5e-3", "--set", "time.t_final=0.1")
    assert cli(*args, "--frames", 5) == 0
    doc = load_summary(tmp_path)
    comp = doc["comparison"]
    assert comp["v_rel_diff"] < 1e-3
    assert comp["frozen_in_rel"] < 1e-3
    assert comp["particle_rel"] < 1e-3
    # 4 frames cannot bracket t_final/2, and 6 does not divide 40 steps
    assert cli(*args, "--frames", 4) == 2
    assert cli(*args, "--frames", 7) == 2


DECAY_CONFIG = """\
grid.n            = 32
physics.m         = 5.0
physics.nu        = 0.1
initial.epsilon   = 0.1
time.dt           = 2e-3
time.t_final      = 0.5
time.record_every = 5
fit.window_lo     = 0.1
fit.window_hi     = 0.5
# gates loose enough for a short transient-dominated run
gates.slope_v_h1  = 10.0
gates.slope_v_h2  = 10.0
gates.slope_b_h2  = 10.0
gates.weighted_factor = 1e6
gates.separation  = -1e6
"""


def test_decay_viscous_gates(tmp_path, capsys):
    cfg = tmp_path / "decay.cfg"
    cfg.write_text(DECAY_CONFIG)
    out = tmp_path / "pass"
    assert cli("decay", "--config", cfg, "--out", out, "--quiet") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 8          # 3 slopes + 3 weighted + separation + envelope
    assert all(line.startswith("[PASS]") for line in lines)
    doc = load_summary(out)
    assert {f["name"] for f in doc["fits"]} == {"v_H1", "v_H2", "b_H2"}
    assert all(c["passed"] for c in doc["checks"])

    # an unreachable slope gate must flip the exit code
    out2 = tmp_path / "fail"
    assert cli("decay", "--config", cfg, "--out", out2, "--quiet",
               "--set", "gates.slope_v_h1=-100") == 1
    lines = capsys.readouterr().out.strip().splitlines()
    assert sum(line.startswith("[FAIL]") for line in lines) == 1


def test_decay_damped_two_runs(tmp_path):
    out = tmp_path / "damped"
    assert cli("decay", "--out", out, "--quiet",
               "--set", "grid.n=32", "--set", "physics.kappa=1.0",
               "--set", "physics.m=8", "--set", "time.dt=5e-3",
               "--set", "time.t_final=1.0", "--set", "time.record_every=5",
               "--set", "gates.damped_r2=0.01",
               "--set", "gates.rate_agreement=1e6") == 0
    # the companion run doubles m and halves dt to keep m*dt fixed
    assert os.path.exists(os.path.join(out, "records.csv"))
    assert os.path.exists(os.path.join(out, "records_m16.csv"))
    doc = load_summary(out)
    assert len(doc["fits"]) == 2
    names = {c["name"] for c in doc["checks"]}
    assert names == {"damped_rate_positive", "damped_fit_r2",
                     "rate_m_independence"}
