import numpy as np
import pytest

from magnetohom import fenchel as fc
from magnetohom.errors import NotCoercive, NotConvex
from magnetohom.materials import ModelParams, make_example1

from oracles import power_conjugate, quadratic_conjugate


def test_quadratic_conjugate_closed_form():
    r = fc.conjugate(fc.quadratic(3.0), [], [1.0, 0.0, 0.0])
    assert r.value == pytest.approx(1 / 6, abs=1e-10)
    assert np.allclose(r.argmax, [1 / 3, 0, 0], atol=1e-6)


def test_power_conjugate_closed_form():
    r = fc.conjugate(fc.power(1.0, 4.0), [], [1.0, 0.0, 0.0])
    assert r.value == pytest.approx(0.75, abs=1e-8)


def test_prototype_at_unit_G():
    r = fc.conjugate(fc.prototype(4, 2), [1.0], [0.0, 0.0, 0.0])
    assert r.value == pytest.approx(-0.75, abs=1e-8)
    assert np.linalg.norm(r.argmax) == pytest.approx(1 / np.sqrt(2), abs=1e-4)


def test_kkt_residual_small():
    theta = fc.power(1.3, 3.0)
    r = fc.conjugate(theta, [], [0.4, -1.2, 0.7])
    assert r.kkt_residual < 1e-6


def test_not_coercive_without_growth():
    theta = fc.ParamFunction(lambda G, M: float(np.dot(M, M)), 0, 3)
    with pytest.raises(NotCoercive):
        fc.conjugate(theta, [], [1.0, 0, 0])


def test_grid_refinement_monotone():
    theta = fc.prototype(4, 2)
    B = np.array([0.3, 1.1, -0.4])
    v1 = fc.conjugate(theta, [0.8], B, grid_n=11, refine_iters=0).value
    v2 = fc.conjugate(theta, [0.8], B, grid_n=21, refine_iters=0).value
    assert v2 >= v1 - 1e-12


def test_shift_identity():
    a = np.array([0.2, -0.1, 0.3])
    base = fc.quadratic(2.0)
    shifted = fc.ParamFunction(lambda G, M: base(G, M) + M @ a, 0, 3, growth=base.growth,
                               grad_M=lambda G, M: base.gradient_M(G, M) + a)
    B = np.array([0.5, 0.5, -1.0])
    assert fc.conjugate(shifted, [], B).value == pytest.approx(fc.conjugate(base, [], B - a).value, abs=1e-8)


def test_phi_from_zero_psi_hat():
    zero = fc.ParamFunction(lambda F, M: 0.0 * np.sum(M**2, axis=-1), 0, 3,
                            grad_M=lambda F, M: 0 * np.asarray(M), convex=True)
    b = np.array([0.3, -0.2, 1.0])
    assert fc.phi_from_psi_hat(zero, 1.0, [], b) == pytest.approx(-b @ b / 2, abs=1e-8)


def test_phi_psi_hat_quadratic_roundtrip():
    a, mu0 = 2.0, 1.0
    psi_hat = fc.quadratic(a)
    b = np.array([0.5, 0.1, -0.7])
    assert fc.phi_from_psi_hat(psi_hat, mu0, [], b) == pytest.approx(-b @ b / (2 * (a + mu0)), abs=1e-8)
    phi = fc.phi_function(psi_hat, mu0)
    m = np.array([0.2, -0.3, 0.4])
    assert fc.psi_hat_from_phi(phi, mu0, [], m) == pytest.approx(a / 2 * m @ m, abs=1e-8)


def test_psi_hat_from_nonconcave_phi_raises():
    phi = fc.ParamFunction(lambda F, b: np.sum(b**2, axis=-1) ** 2, 0, 3)
    with pytest.raises(NotConvex):
        fc.psi_hat_from_phi(phi, 1.0, [], np.array([0.1, 0.0, 0.0]))


def test_magnetization_from_b():
    mu = 2.5
    phi = fc.ParamFunction(lambda F, b: -float(np.dot(b, b)) / (2 * mu), 0, 3)
    b = np.array([1.0, -2.0, 0.5])
    assert np.allclose(fc.magnetization_from_b(phi, [], b), b / mu, atol=1e-7)
    flat = fc.ParamFunction(lambda F, b: 0.0, 0, 3)
    assert np.allclose(fc.magnetization_from_b(flat, [], b), 0.0)


def test_example1_magnetization():
    # psi = |B|^2/(2 mu_soft) soft branch; M = (1/mu0 - 1/mu_soft) B
    p = ModelParams(mu0=1.0, mu_soft=2.0)
    model = make_example1(p)
    B = np.array([0.4, 0.0, -0.8])
    phi = fc.ParamFunction(lambda F, b: model.soft(np.zeros((3, 3)), b) - b @ b / (2 * p.mu0), 0, 3)
    assert np.allclose(fc.magnetization_from_b(phi, [], B), (1 / p.mu0 - 1 / p.mu_soft) * B, atol=1e-7)


def test_dual_H_potential():
    A = np.diag([1.0, 2.0, 3.0])
    psi = fc.ParamFunction(lambda F, B: 0.5 * B @ A @ B, 0, 3)
    B = np.array([0.1, 0.2, 0.3])
    assert np.allclose(fc.dual_H_potential(psi, [], B), A @ B, atol=1e-8)


def test_audit_quadratic_B_lipschitz():
    c = 2.0
    rep = fc.audit_fenchel_bounds(fc.quadratic(c), samples=60, box=3.0)
    assert rep.gc_ok
    # |B1|^2 - |B2|^2 over (|B1| + |B2| + 1)|B1 - B2| is below 1/(2c) * 2 = 1/c
    assert rep.L_B <= 1 / c


def test_audit_quadratic_param_G_lipschitz():
    rep = fc.audit_fenchel_bounds(fc.quadratic_param(), samples=60, box=3.0)
    assert rep.L_G <= 1.0 + 1e-6


def test_closed_forms_against_oracles(rng):
    for _ in range(5):
        B = rng.normal(size=3)
        assert fc.conjugate(fc.quadratic(1.7), [], B).value == pytest.approx(quadratic_conjugate(1.7, B), abs=1e-8)
        assert fc.conjugate(fc.power(0.8, 3.0), [], B).value == pytest.approx(power_conjugate(0.8, 3.0, B),
                                                                            abs=1e-6)
