import json
import subprocess
import sys

import numpy as np
import pytest

import nlident.experiments as ex
from nlident.cli import EXIT_CONFIG, EXIT_NOCONV, EXIT_OK, EXIT_SOLVER, main


def test_exit_code_values():
    assert (EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NOCONV) == (0, 2, 3, 4)


def test_identify_and_profile(tmp_path):
    out = tmp_path / "b.json"
    assert main(["identify", "--case", "B", "--n", "16", "--m", "4", "--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert rec["converged"] and rec["spec"]["n"] == 16 and len(rec["theta"]["coeffs"]) == 5
    prof = tmp_path / "p.csv"
    assert main(["profile", "--result", str(out), "--samples", "9", "--out", str(prof)]) == 0
    lines = prof.read_text().splitlines()
    assert lines[0] == "z,theta" and len(lines) == 10


def test_non_convergence_still_writes(tmp_path):
    out = tmp_path / "b.json"
    code = main(["--max-iters", "2", "identify", "--case", "B", "--n", "16", "--m", "4",
                 "--out", str(out)])
    assert code == EXIT_NOCONV
    assert json.loads(out.read_text())["converged"] is False


def test_surrogate_then_identify(tmp_path):
    sur = tmp_path / "d.json"
    assert main(["surrogate", "--case", "D", "--n", "64", "--out", str(sur)]) == 0
    out = tmp_path / "d_run.json"
    code = main(["--max-iters", "400", "--verify-quadrature", "identify", "--case", "D",
                 "--n", "32", "--m", "4", "--surrogate", str(sur), "--out", str(out)])
    assert code in (EXIT_OK, EXIT_NOCONV)
    assert json.loads(out.read_text())["spec"]["beta"] == 5e-4


def test_convergence_csv(tmp_path):
    out = tmp_path / "t.csv"
    code = main(["convergence", "--case", "B", "--eps", "0.0625", "--levels", "16:4,32:8",
                 "--out", str(out)])
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "N,M,e_u2,rate_u,e_theta,rate_theta" and len(lines) == 3


@pytest.mark.parametrize("argv", [
    ["identify", "--case", "C", "--n", "16", "--m", "4", "--out", "x.json"],
    ["identify", "--case", "B", "--n", "1", "--m", "4", "--out", "x.json"],
    ["identify", "--case", "B", "--n", "16", "--m", "4", "--surrogate", "s.json",
     "--out", "x.json"],
    ["convergence", "--case", "B", "--eps", "0.0625", "--levels", "16:4,48:8", "--out", "t.csv"],
    ["convergence", "--case", "B", "--eps", "0.0625", "--levels", "16-4", "--out", "t.csv"],
    ["--threads", "-1", "identify", "--case", "B", "--n", "16", "--m", "4", "--out", "x.json"],
    ["profile", "--result", "missing.json", "--samples", "5", "--out", "p.csv"],
])
def test_invalid_configuration(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_CONFIG


def test_argparse_rejects_closed_form_surrogate():
    with pytest.raises(SystemExit) as exc:
        main(["surrogate", "--case", "B", "--out", "x.json"])
    assert exc.value.code == 2


def test_solver_failure(tmp_path, monkeypatch):
    def broken(*args, **kw):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(ex, "run_identification", broken)
    code = main(["identify", "--case", "B", "--n", "16", "--m", "4",
                 "--out", str(tmp_path / "x.json")])
    assert code == EXIT_SOLVER


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nlident.cli", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "convergence" in proc.stdout
