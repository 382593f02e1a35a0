import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parabolic_dfi import (BoundaryData, Box, Constant, ControlField, Field, GridSpec,
                           LinearControl, Quadratic,
                           adjoint_residual, adjoint_solve_linear, sbp_boundary_terms, sbp_terms,
                           simulate, stencil_identity_check, stencil_identity_residuals)
from parabolic_dfi.adjoint import adjoint_residual_field
from parabolic_dfi.errors import PreconditionError

from instances import bang_bang_certificate, bang_bang_spec, const_boundary, zero_problem
from oracles import dense_backward

SPEC11 = GridSpec(1.0, 1.0, 1.0, 0.1, 0.1, 0.1)


def adjoint_like(spec, rng):
    """Random field vanishing on the lateral faces and the terminal level."""
    v = np.zeros(spec.shape)
    v[:-1, 1:-1, 1:-1] = rng.normal(size=(spec.nt - 1, spec.ny - 2, spec.nx - 2, spec.n))
    return Field(spec, v)


# ---------------------------------------------------------------------------
# stencil identity


def test_stencil_identity_examples():
    rng = np.random.default_rng(0)
    u = Field(SPEC11, rng.normal(size=SPEC11.shape))
    assert stencil_identity_check(u, (5, 5, 5)) <= 1e-12 * np.abs(u.values).max() / SPEC11.delta**2
    assert stencil_identity_check(Field.zeros(SPEC11), (5, 5, 5)) == 0.0
    bump = Field.zeros(SPEC11)
    bump.values[4, 5, 5] = 1.0
    assert stencil_identity_check(bump, (5, 5, 5)) <= 1e-12


def test_vectorized_stencil_agrees_with_pointwise():
    rng = np.random.default_rng(1)
    s = GridSpec(1.0, 1.0, 0.5, 0.25, 0.2, 0.1)
    u = Field(s, rng.normal(size=s.shape))
    res = stencil_identity_residuals(u)
    assert res.shape == (s.nt - 1, s.ny - 2, s.nx - 2)
    for it in range(1, s.nt):
        for iy in range(1, s.ny - 1):
            for ix in range(1, s.nx - 1):
                assert res[it - 1, iy - 1, ix - 1] == pytest.approx(
                    stencil_identity_check(u, (ix, iy, it)), abs=1e-12)


def test_stencil_rejects_boundary_points():
    with pytest.raises(Exception):
        stencil_identity_check(Field.zeros(SPEC11), (0, 5, 5))
    with pytest.raises(Exception):
        stencil_identity_check(Field.zeros(SPEC11), (5, 5, 0))


# ---------------------------------------------------------------------------
# backward solve


def test_backward_solve_small_cases():
    s = bang_bang_spec()
    assert np.all(adjoint_solve_linear([[0.0]], np.zeros(s.shape), s).values == 0.0)
    us = adjoint_solve_linear([[0.0]], np.ones(s.shape), s).values
    np.testing.assert_allclose(us[-2, 1:-1, 1:-1], -s.h)
    assert np.all(us[-1] == 0.0)


def test_backward_solve_matches_dense_and_is_negative():
    s = GridSpec(1.0, 1.0, 0.1, 0.1, 0.1, 0.002)
    us = adjoint_solve_linear([[0.0]], np.ones(s.shape), s).values[..., 0]
    ref = dense_backward(s, 0.0, np.ones((s.nt, s.ny, s.nx)))
    np.testing.assert_allclose(us, ref, atol=1e-13)
    assert np.all(us[:-1, 1:-1, 1:-1] < 0)


def test_backward_solve_with_coupling_matches_dense():
    s = GridSpec(1.0, 1.0, 0.05, 0.2, 0.2, 0.005)
    gp = np.random.default_rng(2).normal(size=s.shape)
    us = adjoint_solve_linear([[0.4]], gp, s).values[..., 0]
    np.testing.assert_allclose(us, dense_backward(s, 0.4, gp[..., 0]), atol=1e-12)


def test_backward_solve_zeroes_residual():
    s = GridSpec(1.0, 1.0, 0.05, 0.2, 0.2, 0.005, 2)
    A = np.array([[0.2, -0.5], [0.3, 0.1]])
    gp = np.random.default_rng(3).normal(size=s.shape)
    us = adjoint_solve_linear(A, gp, s)
    r = adjoint_residual_field(us)
    fstar = us.values[1:, 1:-1, 1:-1] @ A
    fstar[-1] = 0.0
    np.testing.assert_allclose(r, fstar - gp[1:, 1:-1, 1:-1], atol=1e-10)


# ---------------------------------------------------------------------------
# inclusion residuals


def test_zero_problem_residual_is_zero():
    p = zero_problem()
    z = Field.zeros(p.spec)
    rep = adjoint_residual(p.F, z, z, p.g)
    assert rep.passed
    assert rep["adjoint_inclusion"].max_violation == 0.0


def test_bang_bang_certificate_residual():
    problem, utilde, ustar, _ = bang_bang_certificate()
    rep = adjoint_residual(problem.F, ustar, utilde, problem.g, tol=1e-8)
    assert rep.passed, rep.to_text()
    assert rep["adjoint_inclusion"].max_violation <= 1e-8


def test_perturbation_is_reported_at_the_next_level():
    problem, utilde, ustar, _ = bang_bang_certificate()
    s = problem.spec
    bad = ustar.copy()
    bad.values[5, 5, 5] += 0.1
    rep = adjoint_residual(problem.F, bad, utilde, problem.g)
    cond = rep["adjoint_inclusion"]
    assert not cond.passed
    assert cond.max_violation >= 0.1 / s.h - 1e-6
    assert cond.worst_point == (5, 5, 6)


def test_boundary_violation_names_faces():
    problem, utilde, ustar, _ = bang_bang_certificate()
    bad = ustar.copy()
    bad.values[-1, 5, 5] = 1.0
    bad.values[3, 0, 4] = 1.0
    with pytest.raises(PreconditionError, match="t=T, y=0"):
        adjoint_residual(problem.F, bad, utilde, problem.g)
    rep = adjoint_residual(problem.F, bad, utilde, problem.g, require_boundary=False)
    assert not rep.passed


def test_quadratic_objective_inclusion():
    s = GridSpec(1.0, 1.0, 0.05, 0.2, 0.2, 0.005)
    F = LinearControl([[0.3]], [[1.0]], Box([-1.0], [1.0]))
    g = Quadratic([[1.0]], [0.2])
    b = const_boundary(s, 0.1)
    u = simulate(F, b, ControlField.constant(s, [0.5]))
    us = adjoint_solve_linear(F.A, g.gradient(u.values), s)
    rep = adjoint_residual(F, us, u, g)
    assert rep["adjoint_inclusion"].max_violation <= 1e-10


# ---------------------------------------------------------------------------
# summation by parts


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_volume_and_flux_forms_agree(seed):
    rng = np.random.default_rng(seed)
    s = GridSpec(1.0, 0.8, 0.3, 0.25, 0.2, 0.1, 2)
    u, ut, us = (Field(s, rng.normal(size=s.shape)) for _ in range(3))
    vol, flux = sbp_terms(u, ut, us), sbp_boundary_terms(u, ut, us)
    for a, b in zip(vol, flux):
        assert a == pytest.approx(b, abs=1e-9 * (1 + abs(a)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_terms_vanish_for_matched_pairs(seed):
    rng = np.random.default_rng(seed)
    s = GridSpec(1.0, 0.8, 0.1, 0.25, 0.2, 0.01)
    b = BoundaryData.from_function(s, lambda x, y, t: np.cos(x + 2 * y) + t)
    F = Constant(Box([-1.0], [1.0]))
    shape = (s.nt - 1, s.ny - 2, s.nx - 2, 1)
    u = simulate(F, b, ControlField(s, rng.uniform(-1, 1, size=shape)))
    ut = simulate(F, b, ControlField(s, rng.uniform(-1, 1, size=shape)))
    us = adjoint_like(s, rng)
    for j in sbp_terms(u, ut, us):
        assert abs(j) <= 1e-9
