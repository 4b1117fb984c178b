import numpy as np
import pytest

from nlident.experiments import (
    CSV_HEADER,
    EXPERIMENT_CFG,
    build_problem,
    case_spec,
    convergence_table,
    emit_theta_profile,
    load_surrogate,
    make_surrogate,
    parse_levels,
    profile_to_csv,
    rate,
    reduced_objective,
    rows_to_csv,
    run_identification,
    save_surrogate,
    surrogate_cached,
    theta_a,
    theta_c,
    theta_d,
    theta_l2_error,
    u_hat_b,
)
from nlident.inverse import Problem
from nlident.optimizer import BfgsConfig, minimize
from nlident.theta import Basis, ThetaField, constant, interpolate


def test_closed_form_data():
    assert theta_c(0.5) == pytest.approx(0.215625, abs=1e-15)
    assert theta_d(0.3) == 0.1
    assert theta_d(0.1) == 1.0 and theta_d(0.8) == 1.0
    # midpoint form of 2 + 0.4 (x + y - 1)^2
    x, y = 0.3, 0.9
    assert theta_a((x + y) / 2) == pytest.approx(2 + 0.4 * (x + y - 1) ** 2, rel=1e-15)
    assert u_hat_b(0.5) == 0.625


def test_case_table():
    a = case_spec("A")
    assert (a.a, a.b, a.family, a.eps, a.s, a.basis, a.beta, a.surrogate_n) == (
        -1.0, 1.0, "fractional", 2**-4, 0.7, "linear", 0.0, 2**11)
    b = case_spec("b", eps=2**-9)
    assert b.case_id == "B" and b.eps == 2**-9 and b.surrogate_n is None
    d = case_spec("D")
    assert d.basis == "constant" and d.beta == 5e-4 and d.surrogate_n == 2**12
    assert case_spec("C").f(np.array([0.3])) == pytest.approx([5.0])
    with pytest.raises(ValueError):
        case_spec("E")


def test_rate_arithmetic():
    assert round(rate(3.24e-5, 7.66e-6), 2) == 2.08
    assert rate(1e-3, 1e-3) == 0.0
    assert rate(None, 1e-3) is None


def test_parse_levels():
    assert parse_levels("16:4, 32:8") == [(16, 4), (32, 8)]


def test_profile_examples():
    pm = case_spec("C", m=8).param_mesh()
    z, v = emit_theta_profile(constant(1.0, pm, Basis.LINEAR), 11)
    assert np.all(v == 1.0) and z[0] == pm.lo and z[-1] == pm.hi
    fine = case_spec("C", m=8).param_mesh()
    th_c = interpolate(theta_c, fine, Basis.LINEAR)
    assert th_c(0.5) == pytest.approx(0.215625, abs=1e-15)
    pm_d = case_spec("D", m=10).param_mesh()
    assert interpolate(theta_d, pm_d, Basis.CONSTANT)(0.3) == 0.1
    with pytest.raises(ValueError):
        emit_theta_profile(th_c, 1)
    text = profile_to_csv(*emit_theta_profile(th_c, 3))
    assert text.splitlines()[0] == "z,theta"


def test_surrogate_rejected_for_closed_form_case():
    with pytest.raises(ValueError):
        make_surrogate(case_spec("B"))


@pytest.fixture(scope="module")
def surrogate_c():
    return make_surrogate(case_spec("C"))


def test_case_c_surrogate_zero_on_boundary(surrogate_c):
    u = surrogate_c
    assert u.mesh.interior_elem_count == 2**12
    assert u(0.0) == 0.0 and u(1.0) == 0.0
    assert np.all(u.values[u.mesh.constraint_nodes] == 0.0)


def test_case_d_surrogate_shape():
    u = make_surrogate(case_spec("D"))
    inner = u.mesh.interior_nodes
    x, v = u.mesh.nodes[inner], u.values[inner]
    dv = np.diff(v)
    # single interior maximum: increasing, then decreasing
    k = int(np.argmax(v))
    assert 0 < k < v.size - 1
    assert np.all(dv[:k] > 0) and np.all(dv[k:] < 0)
    slope = np.abs(dv / np.diff(x))
    xm = 0.5 * (x[1:] + x[:-1])
    mid = slope[(xm > 0.22) & (xm < 0.3)].mean()
    outer = slope[(xm > 0.1) & (xm < 0.18)].mean()
    assert mid > 3 * outer


def test_surrogate_io_round_trip(tmp_path, surrogate_c):
    spec = case_spec("C")
    path = tmp_path / "u.json"
    save_surrogate(path, spec, surrogate_c)
    back = load_surrogate(path, spec)
    assert np.array_equal(back.values, surrogate_c.values)
    with pytest.raises(ValueError):
        load_surrogate(path, case_spec("D"))
    with pytest.raises(ValueError):
        load_surrogate(path, case_spec("C", eps=2**-4))
    again = surrogate_cached(spec, tmp_path / "cache")
    assert np.array_equal(surrogate_cached(spec, tmp_path / "cache").values, again.values)


def test_single_element_parameter_recovers_constant():
    spec = case_spec("C", 32, 1)
    pm = spec.param_mesh()
    assert pm.interior_elem_count == 1
    truth = constant(1.7, pm, Basis.LINEAR)
    free = Problem(spec.state_mesh(), spec.kernel, spec.f, spec.g)
    prob = build_problem(spec, free.solve_state(truth))
    start = constant(1.0, pm, Basis.LINEAR)
    cfg = BfgsConfig(grad_tol=1e-12)
    run = minimize(reduced_objective(prob, start), start.coeffs, cfg)
    assert run.converged
    assert np.allclose(run.x, 1.7, atol=1e-8)


def test_surrogate_self_consistency():
    # representable truth on the surrogate's own grid: nothing to improve
    spec = case_spec("D", 80, 5, beta=0.0, surrogate_n=80)
    sur = make_surrogate(spec)
    th0 = interpolate(theta_d, spec.param_mesh(), Basis.CONSTANT)
    res = run_identification(spec, BfgsConfig(), sur, theta0=th0)
    assert res.run.converged and len(res.run.iterates) == 1
    assert res.e_u2 <= 1e-9 and theta_l2_error(spec, res.theta) == 0.0


def test_case_b_coarse_identification_bands():
    res = run_identification(case_spec("B", 16, 4))
    assert 1.66e-4 / 5 <= res.e_u2 <= 5 * 1.66e-4
    assert 1.31e-2 / 5 <= res.e_theta <= 5 * 1.31e-2
    res = run_identification(case_spec("B", 32, 8))
    assert 3.10e-3 / 5 <= res.e_theta <= 5 * 3.10e-3


def test_case_b_finest_l2_error_band():
    # reference value for (N, M) = (2^7, 2^5), eps = 2^-4, within a factor of 5
    res = run_identification(case_spec("B", 128, 32))
    assert 1.92e-6 / 5 <= res.e_u2 <= 5 * 1.92e-6


def test_convergence_table_csv_is_reproducible():
    levels = [(16, 4), (32, 8)]
    rows = convergence_table("B", 2**-4, levels)
    assert rows[0].rate_u is None and rows[1].rate_u is not None
    assert rows[1].rate_u == pytest.approx(np.log2(rows[0].e_u2 / rows[1].e_u2))
    a = rows_to_csv(rows)
    b = rows_to_csv(convergence_table("B", 2**-4, levels))
    assert a.encode() == b.encode()
    lines = a.splitlines()
    assert lines[0] == ",".join(CSV_HEADER) == "N,M,e_u2,rate_u,e_theta,rate_theta"
    assert lines[1].startswith("16,4,") and lines[1].count(",") == 5


def test_convergence_table_requires_surrogate():
    with pytest.raises(ValueError):
        convergence_table("C", 2**-9, [(16, 4)])


def test_failed_level_is_flagged_and_breaks_rates(monkeypatch):
    import nlident.experiments as ex

    real = ex.run_identification

    def flaky(spec, *args, **kw):
        if spec.n == 32:
            raise np.linalg.LinAlgError("boom")
        return real(spec, *args, **kw)

    monkeypatch.setattr(ex, "run_identification", flaky)
    rows = convergence_table("B", 2**-4, [(16, 4), (32, 8), (64, 16)])
    assert not rows[1].converged and np.isnan(rows[1].e_u2)
    assert rows[2].rate_u is None and rows[2].rate_theta is None
    assert rows_to_csv(rows).splitlines()[2] == "32,8,,,,"


def test_result_record_is_json_ready():
    import json

    res = run_identification(case_spec("B", 16, 4))
    rec = json.loads(json.dumps(res.to_record()))
    th = ThetaField.from_record(rec["theta"])
    assert np.array_equal(th.coeffs, res.theta.coeffs)
    assert rec["spec"]["case_id"] == "B" and len(rec["iterates"]) == len(res.run.iterates)


def test_experiment_config():
    assert EXPERIMENT_CFG.grad_tol <= 1e-12
