import numpy as np
import pytest

from parabolic_dfi import (Certificate, ControlField, Field, Linear, Problem, Tolerances,
                           check_adjoint_conditions, simulate,
                           check_maximum_principle, check_polyhedral_conditions,
                           solve_polyhedral_lp, sufficiency_sampling)
from parabolic_dfi.errors import PreconditionError

from instances import bang_bang_certificate, polyhedral_instances, zero_problem


def bang_bang_cert(**kw):
    problem, utilde, ustar, w = bang_bang_certificate()
    return problem, Certificate(utilde, ustar, w=w, **kw)


def lp_cert(name):
    p = polyhedral_instances()[name]
    res = solve_polyhedral_lp(p)
    return p, Certificate(res.state, res.ustar, q=res.q, tolerances=Tolerances.uniform(1e-6))


def test_zero_certificate_passes():
    p = zero_problem()
    z = Field.zeros(p.spec)
    rep = check_adjoint_conditions(p.F, p.g, Certificate(z, z))
    assert rep.passed
    assert [c.name for c in rep.conditions] == ["boundary_zeros", "argmax", "adjoint_inclusion"]


def test_bang_bang_certificate_passes():
    problem, cert = bang_bang_cert(tolerances=Tolerances(1e-8, 1e-12, 1e-8))
    assert check_adjoint_conditions(problem.F, problem.g, cert).passed
    F = problem.F
    rep = check_maximum_principle(F.B, F.U, cert)
    assert rep.passed
    rep = check_maximum_principle(F.B, F.U, Certificate(cert.utilde, cert.ustar), A=F.A)
    assert rep.passed


def test_terminal_adjoint_value_fails_boundary_zeros():
    problem, cert = bang_bang_cert()
    h = problem.spec.h
    cert.ustar.values[-1, 5, 5] = h
    rep = check_adjoint_conditions(problem.F, problem.g, cert)
    assert not rep["boundary_zeros"].passed
    assert rep["boundary_zeros"].max_violation == pytest.approx(h)
    assert rep["boundary_zeros"].worst_point == (5, 5, problem.spec.nt - 1)


def test_maximum_principle_rejects_idle_control():
    problem, cert = bang_bang_cert()
    cert.w.values[:] = 0.0
    rep = check_maximum_principle(problem.F.B, problem.F.U, cert)
    assert rep["control_admissible"].passed
    assert not rep["maximum_principle"].passed
    cert.w.values[0, 0, 0] = 2.0
    assert not check_maximum_principle(problem.F.B, problem.F.U, cert)["control_admissible"].passed


def test_infeasible_candidate_is_a_precondition_error():
    problem, cert = bang_bang_cert()
    cert.utilde.values[5, 5, 5] += 1.0
    with pytest.raises(PreconditionError):
        check_adjoint_conditions(problem.F, problem.g, cert)


@pytest.mark.parametrize("name", sorted(polyhedral_instances()))
def test_lp_duals_certify(name):
    p, cert = lp_cert(name)
    rep = check_polyhedral_conditions(p.F, p.g, cert)
    assert rep.passed, rep.to_text()


def test_negative_multiplier_fails():
    p, cert = lp_cert("abs_linear")
    cert.q[1, 1, 1, 0] = -0.5
    rep = check_polyhedral_conditions(p.F, p.g, cert)
    assert not rep["q_nonnegative"].passed
    assert rep["q_nonnegative"].max_violation == pytest.approx(0.5)
    assert rep["q_nonnegative"].worst_point == (1, 1, 1)


def test_zero_multipliers_for_zero_cost():
    p = polyhedral_instances()["abs_linear"]
    p0 = Problem(p.spec, p.F, Linear([0.0]), p.b)
    res = solve_polyhedral_lp(p0)
    cert = Certificate(res.state, Field.zeros(p.spec), q=np.zeros(p.spec.shape[:3] + (2,)))
    assert check_polyhedral_conditions(p0.F, p0.g, cert).passed


def test_sufficiency_margins():
    problem, cert = bang_bang_cert()
    rep = sufficiency_sampling(problem, cert, num_samples=20)
    assert rep.passed
    # a suboptimal candidate loses to some random control
    idle = simulate(problem.F, problem.b, ControlField.zeros(problem.spec, 1))
    rep = sufficiency_sampling(problem, Certificate(idle, cert.ustar), num_samples=20)
    assert not rep.passed
    assert "min_margin=-" in rep.notes[0]


def test_zero_cost_margins_are_exactly_zero():
    p = zero_problem()
    z = Field.zeros(p.spec)
    rep = sufficiency_sampling(p, Certificate(z, z), num_samples=10)
    assert rep.passed
    assert rep.notes[0].endswith("min_margin=0")


@pytest.mark.parametrize("name", sorted(polyhedral_instances()))
def test_polyhedral_sufficiency(name):
    p, cert = lp_cert(name)
    assert sufficiency_sampling(p, cert, num_samples=30).passed


def test_reports_are_deterministic():
    texts = []
    for _ in range(2):
        problem, cert = bang_bang_cert()
        rep = check_adjoint_conditions(problem.F, problem.g, cert)
        rep.extend(sufficiency_sampling(problem, cert, num_samples=5))
        texts.append(rep.to_text())
    assert texts[0] == texts[1]


def test_certificate_validation():
    p = zero_problem()
    z = Field.zeros(p.spec)
    with pytest.raises(ValueError):
        Certificate(z, z, lam=2)
    with pytest.raises(ValueError):
        Certificate(z, z, q=np.zeros((1, 1, 1, 1)))
    with pytest.raises(ValueError):
        Tolerances(inclusion_tol=0.0)
