import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parabolic_dfi import (Box, Constant, FiniteSet, GTransform, LinearControl, Polyhedral,
                           Polytope, Singleton, argmax_select, g_forward, g_hamiltonian,
                           g_lam_from_f, hamiltonian, lam, member)
from parabolic_dfi.errors import PreconditionError, UnboundedError
from parabolic_dfi.maps import map_from_dict

from instances import MAP_KINDS, random_g_tuple, random_map
from oracles import g_linear_part, g_sup_linprog

UNIT = Box([-1.0], [1.0])


# ---------------------------------------------------------------------------
# membership


def test_member_examples():
    assert member(Constant(UNIT), [5.0], [0.0])
    assert not member(Polyhedral([[1.0]], [[1.0]], [0.0]), [0.0], [-1.0])
    assert member(LinearControl([[0.0]], [[1.0]], UNIT), [0.0], [0.5])
    assert not member(LinearControl([[0.0]], [[1.0]], UNIT), [0.0], [1.5])


def test_member_linear_control_general_sets():
    # non-invertible B and a polytope U go through the distance LP
    F = LinearControl(np.eye(2), [[1.0], [1.0]], Box([0.0], [1.0]))
    assert member(F, [0.0, 0.0], [0.5, 0.5])
    assert not member(F, [0.0, 0.0], [0.5, 0.4])
    assert F.residual([0.0, 0.0], [0.5, 0.4]) == pytest.approx(0.05)
    P = LinearControl(np.zeros((2, 2)), np.eye(2), Polytope([[1, 1], [-1, 0], [0, -1]], [1, 0, 0]))
    assert member(P, [0, 0], [0.3, 0.3])
    assert not member(P, [0, 0], [0.8, 0.8])
    Fs = LinearControl([[0.0]], [[2.0]], FiniteSet([[0.0], [1.0]]))
    assert member(Fs, [0.0], [2.0]) and not member(Fs, [0.0], [1.0])


def test_polyhedral_requires_nonempty_f0():
    with pytest.raises(ValueError):
        Polyhedral([[0.0], [0.0]], [[1.0], [-1.0]], [-1.0, -1.0])


def test_residuals_vectorized_agree():
    rng = np.random.default_rng(0)
    for kind in MAP_KINDS:
        F = random_map(rng, kind)
        U, V = rng.normal(size=(4, 3, F.n)), rng.normal(size=(4, 3, F.n))
        ref = np.array([[F.residual(U[i, j], V[i, j]) for j in range(3)] for i in range(4)])
        np.testing.assert_allclose(F.residuals(U, V), ref, atol=1e-12)


# ---------------------------------------------------------------------------
# Hamiltonian and argmax


def test_hamiltonian_box_is_l1():
    F = LinearControl(np.zeros((3, 3)), np.eye(3), Box(-np.ones(3), np.ones(3)))
    v = np.array([1.0, -2.0, 0.5])
    assert hamiltonian(F, np.ones(3), v).value == pytest.approx(3.5)


def test_hamiltonian_polyhedral_one_sided():
    F = Polyhedral(np.eye(2), np.eye(2), np.zeros(2))   # F(u) = {v >= u}
    u = np.array([0.3, -1.0])
    assert hamiltonian(F, u, [-1.0, -2.0]).value == pytest.approx(-0.3 + 2.0)
    assert hamiltonian(F, u, [0.1, -2.0]).infinite


def test_hamiltonian_empty_value_is_inf():
    F = Polyhedral([[1.0], [0.0]], [[0.0], [0.0]], [0.0, 1.0])   # F(u) empty for u > 0
    assert hamiltonian(F, [1.0], [0.0]).infinite
    assert hamiltonian(F, [-1.0], [0.0]).value == 0.0


@pytest.mark.parametrize("kind", MAP_KINDS)
def test_hamiltonian_zero_direction(kind):
    F = random_map(np.random.default_rng(7), kind)
    u = np.zeros(F.n)
    assert hamiltonian(F, u, np.zeros(F.n)).value == 0.0


def test_argmax_examples():
    assert argmax_select(LinearControl([[0.0]], [[1.0]], UNIT), [0.0], [2.0])[0] == 1.0
    F = Polyhedral([[1.0]], [[1.0]], [0.0])
    assert argmax_select(F, [0.3], [-1.0])[0] == pytest.approx(0.3)
    with pytest.raises(UnboundedError):
        argmax_select(F, [0.3], [1.0])


def test_argmax_zero_direction_follows_set_rules():
    assert argmax_select(Constant(Box([-1.0, 0.0], [1.0, 2.0])), [0, 0], [0, 0]).tolist() == [1, 2]
    F = Constant(FiniteSet([[0.0], [1.0]]))
    assert argmax_select(F, [0.0], [0.0])[0] == 0.0


@pytest.mark.parametrize("kind", MAP_KINDS)
def test_argmax_attains_hamiltonian(kind):
    rng = np.random.default_rng(11)
    for _ in range(20):
        F = random_map(rng, kind)
        u, vs = rng.normal(size=F.n), rng.normal(size=F.n)
        H = hamiltonian(F, u, vs)
        if H.infinite:
            continue
        v = argmax_select(F, u, vs)
        assert member(F, u, v)
        assert v @ vs == pytest.approx(H.value, abs=1e-9 * max(1, abs(H.value)))


# ---------------------------------------------------------------------------
# LAM


def test_lam_constant_example():
    r = lam(Constant(UNIT), [3.0], [0.0], [1.0])
    assert r.kind == "point" and r.ustar[0] == 0.0
    assert lam(Constant(UNIT), [-3.0], [0.0], [1.0]).is_empty


def test_lam_polyhedral_example():
    r = lam(Polyhedral([[1.0]], [[1.0]], [0.0]), [-2.0], [0.0], [0.0])
    assert r.kind == "affine"
    assert r.ustar[0] == pytest.approx(-2.0)
    assert r.q[0] == pytest.approx(2.0)


def test_lam_linear_control_follows_definition():
    F = LinearControl([[0.0]], [[1.0]], UNIT)
    # v = 1 maximizes <v, v*> only for v* >= 0
    r = lam(F, [2.0], [0.0], [1.0])
    assert r.kind == "point" and r.ustar[0] == 0.0
    assert lam(F, [-2.0], [0.0], [1.0]).is_empty


def test_lam_requires_membership():
    with pytest.raises(PreconditionError):
        lam(Constant(UNIT), [1.0], [0.0], [2.0])


def test_lam_polyhedral_inactive_rows_pinned():
    # F(u) = {|v| <= 1}; at v = 1 only the upper row is active
    F = Polyhedral([[0.0], [0.0]], [[1.0], [-1.0]], [1.0, 1.0])
    r = lam(F, [3.0], [0.0], [1.0])
    assert r.kind == "affine"
    np.testing.assert_allclose(r.q, [0.0, 3.0])
    assert lam(F, [-3.0], [0.0], [1.0]).is_empty


def _lam_probe_check(F, u, v, vs, rng, probes=500):
    res = lam(F, vs, u, v)
    assert not res.is_empty
    H0 = hamiltonian(F, u, vs).value
    for _ in range(probes):
        ut = u + rng.normal(size=F.n) * rng.choice([1e-3, 1.0, 5.0])
        H = hamiltonian(F, ut, vs)
        if H.infinite:   # convention for empty F(ut); not a valid probe
            continue
        assert H.value - H0 <= res.ustar @ (ut - u) + 1e-8


@pytest.mark.parametrize("kind", ["linear_control", "polyhedral", "constant_box"])
def test_lam_subgradient_inequality(kind):
    rng = np.random.default_rng(21)
    checked = 0
    while checked < 4:
        F = random_map(rng, kind)
        u, vs = rng.normal(size=F.n), rng.normal(size=F.n)
        if hamiltonian(F, u, vs).infinite:
            continue
        v = argmax_select(F, u, vs)
        _lam_probe_check(F, u, v, vs, rng)
        checked += 1


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0.01, 100))
def test_lam_positive_homogeneity(seed, a):
    rng = np.random.default_rng(seed)
    F = random_map(rng, "linear_control")
    u, vs = rng.normal(size=F.n), rng.normal(size=F.n)
    v = argmax_select(F, u, vs)
    r1, r2 = lam(F, vs, u, v), lam(F, a * vs, u, v)
    np.testing.assert_allclose(r2.ustar, a * r1.ustar, rtol=1e-12, atol=1e-12)
    P = Polyhedral([[1.0]], [[1.0]], [0.0])
    p1, p2 = lam(P, [-1.0], [0.2], [0.2]), lam(P, [-a], [0.2], [0.2])
    assert p2.ustar[0] == pytest.approx(a * p1.ustar[0])


def test_map_dict_round_trip():
    for F in (LinearControl([[1.0]], [[2.0]], UNIT), Polyhedral([[1.0]], [[1.0]], [0.0]),
              Constant(Singleton([1.0]))):
        G = map_from_dict(F.to_dict())
        assert G.to_dict() == F.to_dict()


def test_from_ppc_swaps_roles():
    # A v - B u <= d  with A = 1, B = 0, d = 1 means v <= 1
    F = Polyhedral.from_ppc([[1.0]], [[0.0]], [1.0])
    assert member(F, [7.0], [1.0]) and not member(F, [7.0], [1.1])


# ---------------------------------------------------------------------------
# five-argument map


def test_g_coefficients():
    G = GTransform(Constant(Singleton([0.0])), 0.1, 0.2, 0.01)
    assert G.theta == pytest.approx(0.5)
    assert G.c0 == pytest.approx(1.5)
    assert G.kappa == pytest.approx(G.c0 / G.delta**2)
    with pytest.raises(ValueError):
        GTransform(Constant(UNIT), 0.0, 1.0, 1.0)


def test_g_forward_examples():
    z = [0.0] * 5
    G = GTransform(Constant(UNIT), 1.0, 1.0, 1.0)
    assert g_forward(G, *z, [0.0])[0] == 0.0
    assert g_forward(G, 0.0, 0.0, 1.0, 0.0, 0.0, [0.0])[0] == pytest.approx(3.0)
    G2 = GTransform(Constant(UNIT), 0.1, 0.2, 0.01)
    assert g_forward(G2, 0.0, 0.0, 1.0, 0.0, 0.0, [0.0])[0] == pytest.approx(1.5)
    with pytest.raises(PreconditionError):
        g_forward(G, *z, [2.0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_g_forward_matches_hand_coefficients(seed):
    rng = np.random.default_rng(seed)
    G, z, _ = random_g_tuple(rng, "constant_box")
    vf = G.base.U.sample(rng)
    ref = g_linear_part(G.delta, G.sigma, G.h, *z) - G.delta**2 * vf
    np.testing.assert_allclose(g_forward(G, *z, vf), ref, atol=1e-12)
    # and the recovered F-velocity inverts the forward map
    np.testing.assert_allclose(G.f_velocity(*z, ref), vf, atol=1e-10)


def test_g_hamiltonian_examples():
    G = GTransform(Constant(UNIT), 0.5, 0.5, 0.1)
    z = [1.0, 2.0, 3.0, 4.0, 5.0]
    assert g_hamiltonian(G, *z, [0.0]).value == 0.0
    Gs = GTransform(Constant(Singleton([0.0])), 0.5, 0.25, 0.1)
    lin = g_linear_part(0.5, 0.25, 0.1, *np.array(z))
    assert g_hamiltonian(Gs, *z, [2.0]).value == pytest.approx(2.0 * lin)


@pytest.mark.parametrize("kind", MAP_KINDS)
def test_g_hamiltonian_against_direct_sup(kind):
    rng = np.random.default_rng(MAP_KINDS.index(kind))
    for _ in range(40):
        G, z, vs = random_g_tuple(rng, kind)
        ours, ref = g_hamiltonian(G, *z, vs), g_sup_linprog(G, z, vs)
        if np.isinf(ref):
            assert ours.infinite
        else:
            assert ours.value == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("kind", ["linear_control", "polyhedral", "constant_box"])
def test_g_argmax_equivalence(kind):
    # a G-argmax point maps to an F-argmax point under the affine recovery
    rng = np.random.default_rng(5)
    for _ in range(30):
        G, z, vs = random_g_tuple(rng, kind)
        if g_hamiltonian(G, *z, vs).infinite:
            continue
        v = G.argmax(*z, vs)
        assert v @ vs == pytest.approx(g_hamiltonian(G, *z, vs).value, abs=1e-9)
        vf = G.f_velocity(*z, v)
        assert G.base.in_argmax(z[2], vf, -vs)


def test_g_lam_fixed_multipliers():
    G = GTransform(Constant(UNIT), 1.0, 1.0, 1.0)
    vs = np.array([0.7])
    gl = g_lam_from_f(G, vs, (0, 0, 0, 0, 0, G.forward(0, 0, 0, 0, 0, [-1.0])))
    np.testing.assert_allclose(gl.u1s, -vs)
    np.testing.assert_allclose(gl.u2s, -vs)
    np.testing.assert_allclose(gl.u3s, -vs)
    np.testing.assert_allclose(gl.u4s, vs)
    zero = g_lam_from_f(G, [0.0], (0, 0, 0, 0, 0, G.forward(0, 0, 0, 0, 0, [0.5])))
    assert np.all(zero.as_vector() == 0.0)


def test_g_lam_rejects_non_argmax_witness():
    G = GTransform(Constant(UNIT), 1.0, 1.0, 1.0)
    with pytest.raises(PreconditionError):
        g_lam_from_f(G, [1.0], (0, 0, 0, 0, 0, G.forward(0, 0, 0, 0, 0, [1.0])))


def test_g_lam_polyhedral_one_dimensional():
    # base F(u) = {v >= u}, delta = sigma = 1, h = 0.5, graph point (u, vf) = (0, 0)
    G = GTransform(Polyhedral([[1.0]], [[1.0]], [0.0]), 1.0, 1.0, 0.5)
    vs = np.array([2.0])
    z = np.zeros(5)
    gl = g_lam_from_f(G, vs, (*z, G.forward(*z, [0.0])))
    assert gl.base.kind == "affine"
    assert gl.ustar[0] == pytest.approx(G.delta**2 * (-2.0) + G.c0 * 2.0)
    zs = np.array([gl.u1s[0], gl.u2s[0], gl.ustar[0], gl.u3s[0], gl.u4s[0]])

    def H(zz):
        # hand formula: lin(z) v* + delta^2 sup{-v* v : v >= u} = lin v* - 2 u
        return g_linear_part(1.0, 1.0, 0.5, *zz) * 2.0 - 2.0 * zz[2]

    rng = np.random.default_rng(0)
    for _ in range(200):
        zt = rng.normal(size=5)
        assert H(zt) - H(z) <= zs @ (zt - z) + 1e-8
        assert g_hamiltonian(G, *zt, vs).value == pytest.approx(H(zt), abs=1e-10)
