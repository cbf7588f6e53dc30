import numpy as np
import pytest

from magnetohom import fields as fl


def _random(rng, n):
    return rng.standard_normal((n, n, n, 3))


def test_projection_divergence_free_and_idempotent(rng):
    B = _random(rng, 12)
    P = fl.project_div_free_array(B)
    assert np.abs(fl.divergence(P)).max() < 1e-10
    assert fl.l2_norm(fl.project_div_free_array(P) - P) <= 1e-12 * fl.l2_norm(B)


def test_projection_keeps_mean(rng):
    B = _random(rng, 8) + np.array([1.0, -2.0, 0.5])
    assert np.allclose(fl.mean(fl.project_div_free_array(B)), fl.mean(B))


def test_gradient_field_projects_to_zero():
    n = 16
    x = np.arange(n) / n
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    grad = np.stack([2 * np.pi * np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y),
                     -2 * np.pi * np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y), 0 * Z], axis=-1)
    assert fl.l2_norm(fl.project_div_free_array(grad)) < 1e-10 * fl.l2_norm(grad)
    assert np.allclose(grad - fl.project_div_free_array(grad), grad)


def test_dual_norm_single_mode():
    # B = (sin 2 pi x1, 0, 0): div B = 2 pi cos(2 pi x1); dual norm = 2 pi / sqrt(2 (1 + 4 pi^2))
    n = 16
    x = np.arange(n) / n
    X = np.meshgrid(x, x, x, indexing="ij")[0]
    B = np.zeros((n, n, n, 3))
    B[..., 0] = np.sin(2 * np.pi * X)
    expected = 2 * np.pi / np.sqrt(2 * (1 + 4 * np.pi**2))
    assert fl.dual_norm_div(B) == pytest.approx(expected, rel=1e-12)


def test_residual_bounded_by_dual_norm(rng):
    B = _random(rng, 8)
    assert fl.l2_norm(B - fl.project_div_free_array(B)) <= np.sqrt(1 + 4 * np.pi**2) * fl.dual_norm_div(B)


def test_kuhn_gradient_exact_on_affine(rng):
    n = 6
    A = rng.normal(size=(3, 3))
    # affine data is not periodic, so only voxels away from the wrap are checked
    x = np.arange(n) / n
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)
    phi = X @ A.T
    T = fl.kuhn_gradient(phi)
    assert np.allclose(T[: n - 1, : n - 1, : n - 1], A[None, None, None, None], atol=1e-12)


def test_kuhn_gradient_adjoint(rng):
    n = 5
    phi = rng.normal(size=(n, n, n, 3))
    T = rng.normal(size=(n, n, n, 6, 3, 3))
    lhs = np.sum(fl.kuhn_gradient(phi) * T)
    rhs = np.sum(phi * fl.kuhn_gradient_adjoint(T))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_nodal_gradient_adjoint(rng):
    n = 5
    phi = rng.normal(size=(n, n, n, 3))
    T = rng.normal(size=(n, n, n, 3, 3))
    assert np.sum(fl.nodal_gradient(phi) * T) == pytest.approx(np.sum(phi * fl.nodal_gradient_adjoint(T)),
                                                               rel=1e-12)


def test_gradient_dirichlet_requires_zero_trace(rng):
    phi = rng.normal(size=(6, 6, 6, 3))
    with pytest.raises(ValueError):
        fl.gradient_dirichlet(phi)
    phi[fl.boundary_nodes(6)] = 0.0
    assert fl.gradient_dirichlet(phi).shape == (6, 6, 6, 3, 3)


def test_field_dump_roundtrip(tmp_path, rng):
    f = fl.GridVectorField(_random(rng, 4))
    fl.save_field(f, tmp_path / "b.raw")
    g = fl.load_field(tmp_path / "b.raw")
    assert np.array_equal(f.values, g.values) and g.boundary == f.boundary


def test_field_shape_checked():
    with pytest.raises(ValueError):
        fl.GridVectorField(np.zeros((4, 4, 3, 3)))
