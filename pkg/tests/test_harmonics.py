import numpy as np
import pytest
from numpy.testing import assert_allclose

from dielspheres.harmonics import (
    ShIndex,
    eval_real_sh,
    project_onto_sphere,
    quadrature_rule,
    real_sh_table,
    sh_dim,
    sh_flat_index,
)

RNG = np.random.default_rng(20240817)


def random_units(n):
    v = RNG.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def closed_form_low_degree(u):
    """Reference values for l <= 2 from the documented closed forms."""
    x, y, z = u
    c0 = 0.28209479177387814
    c1 = 0.4886025119029199
    c2 = 1.0925484305920792
    return {
        (0, 0): c0,
        (1, -1): c1 * y, (1, 0): c1 * z, (1, 1): c1 * x,
        (2, -2): c2 * x * y, (2, -1): c2 * y * z,
        (2, 0): 0.31539156525252005 * (3 * z * z - 1),
        (2, 1): c2 * x * z,
        (2, 2): 0.5462742152960396 * (x * x - y * y),
    }


def test_constant_harmonic():
    assert_allclose(eval_real_sh(ShIndex(0, 0), [0.3, -0.4, np.sqrt(0.75)]),
                    0.28209479177387814, rtol=1e-14)


def test_y10_at_pole():
    assert_allclose(eval_real_sh(ShIndex(1, 0), [0.0, 0.0, 1.0]),
                    0.4886025119029199, rtol=1e-14)


def test_closed_forms_low_degrees():
    for u in random_units(20):
        ref = closed_form_low_degree(u)
        for (l, m), val in ref.items():
            assert_allclose(eval_real_sh(ShIndex(l, m), u), val,
                            rtol=1e-13, atol=1e-15)


def test_against_scipy_legendre():
    # Pbar_lm against scipy's unnormalised P_l^m (Condon-Shortley phased)
    from scipy.special import lpmv
    from math import factorial

    x = RNG.uniform(-1, 1, size=7)
    units = np.column_stack([np.sqrt(1 - x**2), np.zeros_like(x), x])  # phi = 0
    lmax = 8
    table = real_sh_table(lmax, units)
    for l in range(lmax + 1):
        for m in range(0, l + 1):
            norm = np.sqrt((2 * l + 1) / (4 * np.pi)
                           * factorial(l - m) / factorial(l + m))
            ref = (-1.0) ** m * norm * lpmv(m, l, x)  # strip CS phase
            mine = table[:, sh_flat_index(l, m)]
            if m > 0:
                mine = mine / np.sqrt(2.0)  # cos(0)=1, undo real normalisation
            assert_allclose(mine, ref, rtol=1e-11, atol=1e-13)


def test_unit_vector_domain_error():
    with pytest.raises(ValueError):
        eval_real_sh(ShIndex(1, 0), [0.0, 0.0, 1.0 + 1e-6])


def test_invalid_index():
    with pytest.raises(ValueError):
        ShIndex(1, 2)


def test_quadrature_weight_sum():
    rule = quadrature_rule(9)
    assert_allclose(rule.weights.sum(), 4 * np.pi, rtol=1e-14)


def test_quadrature_orthonormality():
    lmax = 6
    rule = quadrature_rule(2 * lmax)
    table = real_sh_table(lmax, rule.nodes)
    gram = table.T @ (rule.weights[:, None] * table)
    assert np.max(np.abs(gram - np.eye(sh_dim(lmax)))) < 1e-12


def test_y21_norm_via_higher_order_rule():
    rule = quadrature_rule(20)
    table = real_sh_table(2, rule.nodes)
    val = np.sum(rule.weights * table[:, sh_flat_index(2, 1)] ** 2)
    assert_allclose(val, 1.0, atol=1e-13)


def test_quadrature_order_validation():
    with pytest.raises(ValueError):
        quadrature_rule(0)


def test_project_constant():
    r = 1.7
    proj = project_onto_sphere(lambda p: np.full(len(p), 3.25),
                               center=[1.0, -2.0, 0.5], radius=r, lmax=3)
    expected = np.zeros(sh_dim(3))
    expected[0] = 3.25 * r**2 * np.sqrt(4 * np.pi)
    assert_allclose(proj, expected, atol=1e-12)


@pytest.mark.parametrize("radius,expected", [(1.0, 1.0), (2.0, 4.0)])
def test_project_harmonic_jacobian(radius, expected):
    center = np.array([0.2, 0.0, -1.0])

    def field(pts):
        units = (pts - center) / radius
        return real_sh_table(1, units)[:, sh_flat_index(1, 1)]

    proj = project_onto_sphere(field, center, radius, lmax=2)
    ref = np.zeros(sh_dim(2))
    ref[sh_flat_index(1, 1)] = expected
    assert_allclose(proj, ref, atol=1e-12)
