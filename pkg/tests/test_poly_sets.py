import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swinv.poly import Polynomial, gram_map, lie_derivative_map, monomials
from swinv.sets import EllipsoidSet, Polytope, SublevelSet


def naive_eval(exps, coeffs, x):
    return np.array([sum(c * np.prod(row ** e) for e, c in zip(exps, coeffs)) for row in x])


class TestPolynomial:
    def test_monomial_count(self):
        assert monomials(2, 12).shape == (91, 2)
        assert monomials(3, 4, min_degree=4).shape == (15, 3)

    def test_evaluation_matches_naive(self, rng):
        E = monomials(3, 5)
        c = rng.standard_normal(E.shape[0])
        x = rng.uniform(-2, 2, (20, 3))
        np.testing.assert_allclose(Polynomial(E, c)(x), naive_eval(E, c, x), rtol=1e-12, atol=1e-12)

    def test_gradient_by_finite_differences(self, rng):
        E = monomials(2, 6)
        p = Polynomial(E, rng.standard_normal(E.shape[0]))
        x = rng.uniform(-1, 1, (5, 2))
        h = 1e-6
        fd = np.stack([(p(x + h * e) - p(x - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
        np.testing.assert_allclose(p.gradient(x), fd, rtol=1e-6, atol=1e-6)

    def test_homogeneous_part_and_degree(self):
        E = monomials(2, 4)
        c = np.arange(E.shape[0], dtype=float)
        p = Polynomial(E, c)
        assert p.degree == 4
        top = p.homogeneous_part(4)
        assert np.all(top.exponents.sum(axis=1) == 4)

    def test_gram_map_reproduces_quadratic_form(self, rng):
        half, full = monomials(2, 3), monomials(2, 6)
        Q = rng.standard_normal((half.shape[0], half.shape[0]))
        Q = Q + Q.T
        coeffs = gram_map(half, full) @ Q.ravel()
        x = rng.uniform(-1, 1, (10, 2))
        z = Polynomial(half, np.zeros(half.shape[0]))._terms(x, half)
        np.testing.assert_allclose(Polynomial(full, coeffs)(x), np.einsum("ka,ab,kb->k", z, Q, z), rtol=1e-10)

    def test_lie_derivative_map(self, rng):
        full = monomials(2, 4)
        c = rng.standard_normal(full.shape[0])
        A, b = rng.standard_normal((2, 2)), rng.standard_normal(2)
        V = Polynomial(full, c)
        LV = Polynomial(full, lie_derivative_map(full, A, b) @ c)
        x = rng.uniform(-1, 1, (10, 2))
        expected = np.einsum("kn,kn->k", V.gradient(x), x @ A.T + b)
        np.testing.assert_allclose(LV(x), expected, rtol=1e-10, atol=1e-10)


class TestEllipsoidSet:
    def test_boundary_points_are_on_level(self, rng):
        ell = EllipsoidSet([1.0, -1.0], [[2.0, 0.3], [0.3, 0.5]], 1.5)
        for pts in (ell.boundary_points(50), ell.boundary_points(50, rng)):
            np.testing.assert_allclose(ell.norm(pts), 1.5, rtol=1e-12)

    def test_interior_points_inside(self, rng):
        ell = EllipsoidSet(np.zeros(3), np.diag([1.0, 2.0, 3.0]))
        assert ell.contains(ell.interior_points(200, rng)).all()

    def test_from_quadratic(self):
        P = np.array([[4.0, 0.0], [0.0, 1.0]])
        ell = EllipsoidSet.from_quadratic(P, [0.0, 0.0], 2.0)
        assert ell.contains(np.array([[1.0, 0.0]]))[0]
        assert not ell.contains(np.array([[1.01, 0.0]]))[0]

    def test_rejects_indefinite_shape(self):
        with pytest.raises(ValueError):
            EllipsoidSet([0.0, 0.0], np.diag([1.0, -1.0]))

    def test_distance_to_circle(self):
        ell = EllipsoidSet([0.0, 0.0], np.eye(2), 1.0)
        np.testing.assert_allclose(ell.distance(np.array([[3.0, 4.0], [0.1, 0.0]])), [4.0, 0.0], atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_distance_property(self, seed):
        rng = np.random.default_rng(seed)
        L = rng.standard_normal((2, 2))
        ell = EllipsoidSet(rng.standard_normal(2), L @ L.T + 0.1 * np.eye(2))
        x = rng.standard_normal(2) * 5
        d = ell.distance(x[None, :])[0]
        pts = ell.boundary_points(4000)
        brute = np.min(np.linalg.norm(pts - x, axis=1))
        if ell.contains(x[None, :])[0]:
            assert d == 0.0
        else:
            assert d <= brute + 1e-9
            assert d >= brute - 1e-2 * (1 + brute)

    def test_outward_normal(self):
        ell = EllipsoidSet([0.0, 0.0], np.diag([4.0, 1.0]))
        n = ell.outward_normals(np.array([2.0, 0.0]))[0]
        assert n[0] > 0 and n[1] == 0


class TestPolytope:
    def test_square_corner_has_two_normals(self):
        box = Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
        assert len(box.outward_normals(np.array([1.0, 1.0]))) == 2
        assert len(box.outward_normals(np.array([1.0, 0.0]))) == 1
        assert box.contains(np.array([[0.0, 0.0], [2.0, 0.0]])).tolist() == [True, False]


class TestSublevelSet:
    def test_disc(self):
        disc = SublevelSet(lambda x: np.sum(x**2, axis=1) - 1.0, lambda x: 2 * x)
        assert disc.contains(np.array([[0.5, 0.5]]))[0]
        np.testing.assert_allclose(disc.outward_normals(np.array([1.0, 0.0]))[0], [2.0, 0.0])
