import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mzuq.errors import ConfigError, MeasureError, OrderError
from mzuq.polybasis import (
    C_RATIO,
    E_NORMALIZED,
    GH_TENSOR,
    ORTHONORMAL,
    SMOLYAK,
    STANDARD,
    GaussianMeasure,
    LegendreFamily,
    MultiIndex,
    hermite_basis,
    inner_product,
    legendre_eval,
    nonzero_entries,
    product_rule,
    quad_tensor,
    quadrature,
    smolyak_points,
    total_degree_indices,
    triple_tensor,
)


def test_legendre_matches_numpy():
    xi = np.linspace(-1, 1, 17)
    fam = LegendreFamily(8)
    for n in range(9):
        coef = np.zeros(n + 1)
        coef[n] = 1.0
        np.testing.assert_allclose(legendre_eval(fam, n, xi), np.polynomial.legendre.legval(xi, coef), atol=1e-13)


def test_legendre_order_out_of_range():
    with pytest.raises(OrderError):
        legendre_eval(LegendreFamily(3), 4, 0.2)
    with pytest.raises(OrderError):
        LegendreFamily(-1)


@pytest.mark.parametrize("norm", [STANDARD, ORTHONORMAL])
def test_legendre_orthogonality(norm):
    fam = LegendreFamily(7, norm)
    x, w = np.polynomial.legendre.leggauss(12)
    P = fam.table(x)
    gram = (0.5 * w * P.T) @ P
    np.testing.assert_allclose(gram, np.diag(fam.norm_sq(np.arange(8))), atol=1e-14)


def _brute_triple(fam, M):
    x, w = np.polynomial.legendre.leggauss(3 * M + 2)
    P = fam.table(x)
    return np.einsum("q,qi,qj,qk->ijk", 0.5 * w, P, P, P)


def test_triple_tensor_against_brute_force():
    fam = LegendreFamily(6, ORTHONORMAL)
    e = triple_tensor(fam, 6, E_NORMALIZED)
    np.testing.assert_allclose(e, _brute_triple(fam, 6), atol=1e-13)
    assert e[0, 0, 0] == 1.0


def test_triple_tensor_symmetry_and_pattern():
    M = 6
    e = triple_tensor(LegendreFamily(M, STANDARD), M, E_NORMALIZED)
    for perm in itertools.permutations(range(3)):
        np.testing.assert_array_equal(e, np.transpose(e, perm))
    for l, m, r in itertools.product(range(M + 1), repeat=3):
        allowed = (l + m + r) % 2 == 0 and abs(l - m) <= r <= l + m
        if not allowed:
            assert e[l, m, r] == 0.0
        else:
            assert e[l, m, r] > 0.0


def test_c_ratio_is_e_over_norm():
    fam = LegendreFamily(6, STANDARD)
    e = triple_tensor(fam, 6, E_NORMALIZED)
    c = triple_tensor(fam, 6, C_RATIO)
    np.testing.assert_allclose(c, e * (2 * np.arange(7) + 1)[None, None, :], atol=1e-14)
    # c_{l0r} = delta_lr
    np.testing.assert_allclose(c[:, 0, :], np.eye(7), atol=1e-14)


def test_unknown_convention():
    with pytest.raises(ConfigError):
        triple_tensor(LegendreFamily(2), 2, "bogus")


def test_quad_tensor_symmetry_and_known_entries():
    d = quad_tensor(LegendreFamily(4), 4)
    for perm in itertools.permutations(range(4)):
        np.testing.assert_array_equal(d, np.transpose(d, perm))
    assert d[0, 0, 0, 0] == 1.0
    assert d[1, 1, 1, 1] == pytest.approx(1.0 / 5.0, abs=1e-15)
    assert d[0, 0, 1, 1] == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert d[0, 1, 1, 1] == 0.0


def test_nonzero_entries_lists_c_order():
    T = np.zeros((2, 2, 2))
    T[1, 0, 1] = 2.0
    T[0, 1, 1] = 3.0
    assert nonzero_entries(T) == [((0, 1, 1), 3.0), ((1, 0, 1), 2.0)]


def test_multi_index_ordering():
    idx = total_degree_indices(2, 2)
    assert [str(m) for m in idx] == ["00", "10", "01", "20", "11", "02"]
    assert MultiIndex((2, 1)).order == 3


@given(st.integers(1, 4), st.integers(0, 5))
def test_total_degree_count(d, p):
    assert len(total_degree_indices(d, p)) == math.comb(d + p, p)


def test_measure_rejects_nonpositive_variance():
    with pytest.raises(MeasureError):
        GaussianMeasure([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(MeasureError):
        GaussianMeasure([0.0], [1.0, 2.0])


def test_hermite_gram_identity():
    meas = GaussianMeasure([1.0, -0.3], [0.01, 0.04])
    basis = hermite_basis(meas, 5)
    assert len(basis) == 21
    rule = quadrature(GH_TENSOR, 2, 6, meas)
    H = basis.evaluate(rule.nodes)
    gram = (rule.weights[:, None] * H).T @ H
    np.testing.assert_allclose(gram, np.eye(21), atol=1e-8)


def test_hermite_gradient_by_finite_differences():
    meas = GaussianMeasure([0.5, 0.1, -0.2], [0.3, 0.2, 0.5])
    basis = hermite_basis(meas, 3)
    x = np.array([0.7, -0.1, 0.2])
    g = basis.gradient(x)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (basis.evaluate(x + e) - basis.evaluate(x - e)) / (2 * h)
        np.testing.assert_allclose(g[:, i], fd, atol=1e-7)


def test_smolyak_sizes_and_weights():
    assert [smolyak_points(l) for l in (1, 2, 3)] == [1, 3, 5]
    sizes = [len(quadrature(SMOLYAK, 7, l)) for l in (1, 2, 3)]
    assert sizes == [1, 15, 127]
    for l in (1, 2, 3, 4):
        r = quadrature(SMOLYAK, 5, l)
        assert r.weights.sum() == pytest.approx(1.0, abs=1e-12)


def _gauss_moment(k):
    return 0.0 if k % 2 else float(math.prod(range(k - 1, 0, -2)))


@pytest.mark.parametrize("level", [2, 3, 4])
def test_smolyak_exact_for_total_degree(level):
    # exact for every monomial of total degree <= 2 level - 1
    d = 3
    rule = quadrature(SMOLYAK, d, level)
    deg = 2 * level - 1
    for exps in itertools.product(range(deg + 1), repeat=d):
        if sum(exps) > deg:
            continue
        got = rule.integrate(lambda x: np.prod(x ** np.array(exps), axis=1))
        want = math.prod(_gauss_moment(k) for k in exps)
        assert got == pytest.approx(want, abs=1e-10)


def test_product_rule_integrates_separable_moments():
    meas = GaussianMeasure([1.0, 2.0, 3.0], [0.5, 0.25, 0.1])
    r1 = quadrature(GH_TENSOR, 1, 3, meas.marginal([0]))
    r2 = quadrature(SMOLYAK, 2, 3, meas.marginal([1, 2]))
    rule = product_rule([([0], r1), ([1, 2], r2)], 3)
    assert len(rule) == len(r1) * len(r2)
    mean = rule.integrate(lambda x: x[:, 0] * x[:, 2])
    assert mean == pytest.approx(3.0, abs=1e-12)
    var = rule.integrate(lambda x: (x[:, 1] - 2.0) ** 2)
    assert var == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(ConfigError):
        product_rule([([0], r1)], 3)


def test_inner_product_arity_check():
    rule = quadrature(GH_TENSOR, 2, 3)
    assert inner_product(lambda x: x[:, 0], lambda x: x[:, 0], rule, 2) == pytest.approx(1.0)
    with pytest.raises(MeasureError):
        inner_product(lambda x: x, lambda x: x, rule, 3)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.0, 1.0), st.integers(0, 6))
def test_orthonormal_is_scaled_standard(xi, n):
    a = legendre_eval(LegendreFamily(6, ORTHONORMAL), n, xi)
    b = legendre_eval(LegendreFamily(6, STANDARD), n, xi)
    assert a == pytest.approx(math.sqrt(2 * n + 1) * b, abs=1e-12)
