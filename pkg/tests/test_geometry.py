import pytest
import torch

from landingflow import geometry, linalg
from landingflow.config import numerics_config
from landingflow.exceptions import DimensionError, DomainError, RankError
from landingflow.geometry import MetricTag, NormalVector, TangentVector
from landingflow.landing_logic import Objective, autograd_objective
from landingflow.problems import random_stiefel_point

DTYPE = numerics_config.DTYPE

SHAPES = [(2, 1), (5, 2), (8, 3), (6, 6)]


def fro(A):
    return torch.linalg.matrix_norm(A).item()


def random_spd(p, generator):
    B = torch.randn((p, p), generator=generator, dtype=DTYPE)
    return B @ B.T + 0.5 * torch.eye(p, dtype=DTYPE)


class TestPenalty:
    def test_example(self):
        """N([[2], [0]]) = 1/4 (4 - 1)^2."""
        X = torch.tensor([[2.0], [0.0]], dtype=DTYPE)
        assert geometry.stiefel_distance_penalty(X) == pytest.approx(2.25)

    def test_zero_on_manifold(self, generator):
        X = random_stiefel_point(7, 3, generator)
        assert geometry.stiefel_distance_penalty(X) <= 1e-28

    def test_gradient_matches_autograd(self, point_factory):
        X = point_factory(6, 3, low=0.2, high=3.0)
        penalty = autograd_objective(
            "penalty", lambda Z: 0.25 * torch.sum((Z.T @ Z - torch.eye(Z.shape[1], dtype=Z.dtype)) ** 2)
        )
        torch.testing.assert_close(geometry.penalty_gradient(X), penalty.grad(X), rtol=1e-12, atol=1e-12)


class TestPoint:
    def test_rejects_wide_and_rank_deficient(self):
        with pytest.raises(DimensionError):
            geometry.as_point(torch.ones((2, 3), dtype=DTYPE))
        with pytest.raises(RankError):
            geometry.as_point(torch.tensor([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]], dtype=DTYPE))

    def test_tiny_scale_is_a_point(self, generator):
        """Full rank and positive definiteness are both judged relative to scale."""
        X = 1e-7 * random_stiefel_point(5, 2, generator)
        point = geometry.as_point(X)
        torch.testing.assert_close(point.gram.entries, 1e-14 * torch.eye(2, dtype=DTYPE), rtol=1e-10, atol=0)

    def test_gram_solves(self, point_factory, generator):
        point = geometry.as_point(point_factory(6, 3))
        B = torch.randn((3, 3), generator=generator, dtype=DTYPE)
        torch.testing.assert_close(point.gram.entries @ point.gram_solve(B), B, rtol=1e-12, atol=1e-12)
        torch.testing.assert_close(point.gram_solve_right(B) @ point.gram.entries, B, rtol=1e-12, atol=1e-12)


class TestTangentParameterizations:
    def test_skew_example(self):
        """W = [[0, 1], [-1, 0]] at Y = e1 gives W Y = [0, -1]^T."""
        Y = torch.tensor([[1.0], [0.0]], dtype=DTYPE)
        W = torch.tensor([[0.0, 1.0], [-1.0, 0.0]], dtype=DTYPE)
        xi = geometry.tangent_from_skew(Y, W)
        torch.testing.assert_close(xi.value, torch.tensor([[0.0], [-1.0]], dtype=DTYPE))

    @pytest.mark.parametrize("n,p", SHAPES)
    def test_skew_membership(self, n, p, point_factory, generator):
        Y = point_factory(n, p)
        for _ in range(20):
            W = torch.randn((n, n), generator=generator, dtype=DTYPE)
            xi = geometry.tangent_from_skew(Y, W - W.T)
            assert geometry.tangent_residual(Y, xi.value) <= 1e-12 * max(fro(xi.value) * fro(Y), 1.0)

    def test_non_skew_rejected(self):
        Y = torch.tensor([[1.0], [0.0]], dtype=DTYPE)
        with pytest.raises(DomainError):
            geometry.tangent_from_skew(Y, torch.eye(2, dtype=DTYPE))
        with pytest.raises(DimensionError):
            geometry.tangent_from_skew(Y, torch.zeros((3, 3), dtype=DTYPE))

    @pytest.mark.parametrize("n,p", [(5, 2), (8, 3), (4, 4)])
    def test_omega_k_round_trip(self, n, p, point_factory, generator):
        Y = point_factory(n, p)
        Omega = linalg.skew(torch.randn((p, p), generator=generator, dtype=DTYPE))
        K = torch.randn((n - p, p), generator=generator, dtype=DTYPE)
        xi = geometry.tangent_from_omega_k(Y, Omega, K)
        Omega_back, K_back = geometry.tangent_decompose_omega_k(xi)
        torch.testing.assert_close(Omega_back.entries, Omega.entries, rtol=1e-10, atol=1e-10)
        torch.testing.assert_close(K_back, K, rtol=1e-10, atol=1e-10)

    def test_omega_vanishes_for_one_column(self, point_factory, generator):
        Y = point_factory(4, 1)
        xi = geometry.tangent_from_skew(Y, linalg.skew(torch.randn((4, 4), generator=generator, dtype=DTYPE)))
        Omega, K = geometry.tangent_decompose_omega_k(xi)
        assert torch.count_nonzero(Omega.entries) == 0
        assert K.shape == (3, 1)

    def test_decompose_rejects_normal_vector(self, point_factory):
        point = geometry.as_point(point_factory(5, 2))
        with pytest.raises(DomainError):
            geometry.tangent_decompose_omega_k(TangentVector.computed(point, point.Y.clone()))

    def test_tangent_vector_validates(self, point_factory):
        point = geometry.as_point(point_factory(5, 2))
        with pytest.raises(DomainError):
            TangentVector(base=point, value=point.Y.clone())

    @pytest.mark.parametrize("n,p", [(5, 3), (6, 2), (4, 4)])
    def test_tangent_space_dimension(self, n, p, point_factory):
        """The (Omega, K) images span a space of dimension n p - p (p + 1) / 2."""
        Y = point_factory(n, p)
        images = []
        for i in range(p):
            for j in range(i + 1, p):
                E = torch.zeros((p, p), dtype=DTYPE)
                E[i, j], E[j, i] = 1.0, -1.0
                images.append(geometry.tangent_from_omega_k(Y, E, torch.zeros((n - p, p), dtype=DTYPE)).value)
        for i in range(n - p):
            for j in range(p):
                K = torch.zeros((n - p, p), dtype=DTYPE)
                K[i, j] = 1.0
                images.append(geometry.tangent_from_omega_k(Y, torch.zeros((p, p), dtype=DTYPE), K).value)
        stacked = torch.stack([image.reshape(-1) for image in images])
        assert torch.linalg.matrix_rank(stacked).item() == n * p - p * (p + 1) // 2


class TestPhi:
    def test_identity_gram_is_fixed(self, generator):
        X = random_stiefel_point(5, 2, generator)
        torch.testing.assert_close(geometry.map_phi(X, torch.eye(2, dtype=DTYPE)).entries, X)

    @pytest.mark.parametrize("n,p", [(4, 1), (7, 3)])
    def test_maps_onto_generalized_stiefel(self, n, p, generator):
        X = random_stiefel_point(n, p, generator)
        M = random_spd(p, generator)
        Y = geometry.map_phi(X, M).entries
        torch.testing.assert_close(Y.T @ Y, M, rtol=1e-12, atol=1e-12)
        torch.testing.assert_close(geometry.map_phi_inverse(Y, M).entries, X, rtol=1e-11, atol=1e-11)

    def test_pullback_is_tangent(self, point_factory, tangent_factory):
        point = geometry.as_point(point_factory(6, 3))
        X = geometry.map_phi_inverse(point.Y, point.gram).entries
        xi = geometry.tangent_from_pullback(point, tangent_factory(X))
        assert geometry.tangent_residual(point, xi.value) <= 1e-10 * fro(xi.value) * fro(point.Y)


class TestMetricG:
    def test_reduces_to_canonical_on_stiefel(self, generator, tangent_factory):
        X = random_stiefel_point(7, 3, generator)
        for _ in range(10):
            xi, zeta = tangent_factory(X), tangent_factory(X)
            expected = geometry.canonical_metric(X, xi, zeta)
            assert geometry.metric_g(X, xi, zeta) == pytest.approx(expected, rel=1e-12, abs=1e-12 * fro(xi) * fro(zeta))

    def test_positive_and_symmetric(self, point_factory, generator):
        Y = point_factory(6, 3, low=0.1, high=5.0)
        for _ in range(500):
            xi = torch.randn((6, 3), generator=generator, dtype=DTYPE)
            zeta = torch.randn((6, 3), generator=generator, dtype=DTYPE)
            assert geometry.metric_g(Y, xi, xi) > 0
            forward, backward = geometry.metric_g(Y, xi, zeta), geometry.metric_g(Y, zeta, xi)
            assert abs(forward - backward) <= 1e-12 * fro(xi) * fro(zeta) * 100

    @pytest.mark.parametrize("n,p", [(3, 1), (7, 3)])
    def test_phi_is_an_isometry(self, n, p, generator, tangent_factory):
        """g_{Phi(X)}(xi M^{1/2}, zeta M^{1/2}) = canonical metric of (xi, zeta) at X."""
        X = random_stiefel_point(n, p, generator)
        M = random_spd(p, generator)
        Y = geometry.map_phi(X, M).entries
        for _ in range(10):
            xi, zeta = tangent_factory(X), tangent_factory(X)
            pushed = geometry.metric_g(Y, geometry.pushforward_phi(xi, M), geometry.pushforward_phi(zeta, M))
            expected = geometry.canonical_metric(X, xi, zeta)
            assert pushed == pytest.approx(expected, rel=1e-10, abs=1e-10 * fro(xi) * fro(zeta))


class TestEuclideanDecomposition:
    @pytest.mark.parametrize("n,p", SHAPES)
    def test_split(self, n, p, point_factory, generator):
        X = point_factory(n, p)
        xi = torch.randn((n, p), generator=generator, dtype=DTYPE)
        xi_T, xi_N = geometry.euclidean_decompose(X, xi)
        torch.testing.assert_close(xi_T.value + xi_N.value, xi, rtol=1e-12, atol=1e-12)
        assert abs(linalg.frobenius_inner(xi_T.value, xi_N.value)) <= 1e-10 * fro(xi) ** 2
        assert geometry.tangent_residual(X, xi_T.value) <= 1e-10 * fro(xi) * fro(X)
        assert xi_N.metric_tag is MetricTag.EUCLIDEAN
        torch.testing.assert_close(X @ xi_N.coefficient.entries, xi_N.value)

    def test_tangent_and_normal_inputs(self, point_factory, tangent_factory, generator):
        X = point_factory(6, 2)
        xi = tangent_factory(X)
        xi_T, xi_N = geometry.euclidean_decompose(X, xi)
        torch.testing.assert_close(xi_T.value, xi, rtol=1e-10, atol=1e-10 * fro(xi))
        assert fro(xi_N.value) <= 1e-10 * fro(xi)

        S = linalg.sym(torch.randn((2, 2), generator=generator, dtype=DTYPE)).entries
        normal = X @ S
        xi_T, xi_N = geometry.euclidean_decompose(X, normal)
        assert fro(xi_T.value) <= 1e-10 * fro(normal)
        torch.testing.assert_close(xi_N.value, normal, rtol=1e-10, atol=1e-10 * fro(normal))


class TestCanonicalNormal:
    def test_projection_of_normal_and_tangent(self, point_factory, tangent_factory, generator):
        point = geometry.as_point(point_factory(6, 3))
        S = linalg.sym(torch.randn((3, 3), generator=generator, dtype=DTYPE)).entries
        normal = point.Y @ point.gram_solve(S)
        torch.testing.assert_close(geometry.canonical_normal_project(point, normal).value, normal)
        xi = tangent_factory(point.Y)
        assert fro(geometry.canonical_normal_project(point, xi).value) <= 1e-11 * fro(xi) * fro(point.Y) ** 2

    def test_projection_is_g_orthogonal(self, point_factory, generator):
        """xi - P(xi) is g-orthogonal to every basis normal Y (Y^T Y)^{-1} E."""
        point = geometry.as_point(point_factory(5, 3))
        xi = torch.randn((5, 3), generator=generator, dtype=DTYPE)
        remainder = geometry.canonical_tangent_project(point, xi).value
        for i in range(3):
            for j in range(i, 3):
                E = torch.zeros((3, 3), dtype=DTYPE)
                E[i, j] = E[j, i] = 1.0
                basis = point.Y @ point.gram_solve(E)
                assert abs(geometry.metric_g(point, remainder, basis)) <= 1e-10 * fro(xi) * fro(basis) * 10

    def test_normal_vector_validates(self, point_factory, tangent_factory):
        point = geometry.as_point(point_factory(5, 2))
        with pytest.raises(DomainError):
            NormalVector(base=point, value=tangent_factory(point.Y), metric_tag=MetricTag.CANONICAL_G)
        vector = NormalVector(base=point, value=point.Y @ point.gram_solve(torch.eye(2, dtype=DTYPE)),
                              metric_tag=MetricTag.CANONICAL_G)
        torch.testing.assert_close(vector.coefficient.entries, torch.eye(2, dtype=DTYPE), rtol=1e-12, atol=1e-12)


class TestPi:
    def test_pi_map_on_stiefel(self, generator, tangent_factory):
        """At X on St(p, n), Pi(xi) = xi + X X^T xi."""
        X = random_stiefel_point(5, 2, generator)
        xi = tangent_factory(X)
        torch.testing.assert_close(geometry.pi_map(X, xi).value, xi + X @ (X.T @ xi), rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("n,p", SHAPES)
    def test_round_trips(self, n, p, point_factory, tangent_factory):
        X = point_factory(n, p)
        for _ in range(50):
            zeta = tangent_factory(X)
            back = geometry.pi_map(X, geometry.pi_inverse(X, zeta))
            torch.testing.assert_close(back.value, zeta, rtol=1e-9, atol=1e-9 * fro(zeta))
            again = geometry.pi_inverse(X, geometry.pi_map(X, zeta))
            torch.testing.assert_close(again.value, zeta, rtol=1e-9, atol=1e-9 * fro(zeta))

    def test_inverse_on_stiefel(self, generator, tangent_factory):
        """At X on St(p, n), Pi^{-1}(zeta) = (I - 1/2 X X^T) zeta."""
        X = random_stiefel_point(6, 3, generator)
        zeta = tangent_factory(X)
        expected = zeta - 0.5 * X @ (X.T @ zeta)
        torch.testing.assert_close(geometry.pi_inverse(X, zeta).value, expected, rtol=1e-10, atol=1e-10)

    def test_routes_differ_by_euclidean_normal(self, point_factory, tangent_factory):
        point = geometry.as_point(point_factory(6, 3))
        zeta = tangent_factory(point.Y)
        difference = geometry.pi_inverse_closed_form(point, zeta) - geometry.pi_inverse(point, zeta).value
        _, normal = geometry.euclidean_decompose(point, difference)
        torch.testing.assert_close(normal.value, difference, rtol=1e-9, atol=1e-9 * fro(zeta))
        geometry.pi_inverse(point, zeta, check=True)

    def test_debug_check_from_environment(self, point_factory, tangent_factory, monkeypatch):
        monkeypatch.setenv("LANDING_DEBUG", "1")
        X = point_factory(5, 2)
        geometry.pi_inverse(X, tangent_factory(X))

    def test_non_tangent_rejected(self, point_factory):
        X = point_factory(4, 2)
        with pytest.raises(DomainError):
            geometry.pi_inverse(X, X)
        with pytest.raises(DomainError):
            geometry.pi_map(X, X)


class TestMetricPi:
    @pytest.mark.parametrize("n,p", [(2, 1), (5, 2), (7, 3)])
    def test_agrees_with_g_on_tangent_pairs(self, n, p, point_factory, tangent_factory):
        X = point_factory(n, p)
        for _ in range(20):
            xi, zeta = tangent_factory(X), tangent_factory(X)
            scale = (geometry.metric_g(X, xi, xi) * geometry.metric_g(X, zeta, zeta)) ** 0.5
            assert abs(geometry.metric_pi(X, xi, zeta) - geometry.metric_g(X, xi, zeta)) <= 1e-10 * scale

    def test_tangent_normal_pairs_are_orthogonal(self, point_factory, tangent_factory, generator):
        X = point_factory(6, 3)
        S = linalg.sym(torch.randn((3, 3), generator=generator, dtype=DTYPE)).entries
        normal, xi = X @ S, tangent_factory(X)
        assert abs(geometry.metric_pi(X, normal, xi)) <= 1e-10 * fro(normal) * fro(xi)

    def test_canonical_at_identity_gram(self, generator, tangent_factory):
        X = random_stiefel_point(6, 2, generator)
        xi = tangent_factory(X)
        expected = geometry.canonical_metric(X, xi, xi)
        assert geometry.metric_pi(X, xi, xi) == pytest.approx(expected, rel=1e-12)
        assert geometry.metric_g(X, xi, xi) == pytest.approx(expected, rel=1e-12)


class TestRiemannianGradients:
    @pytest.mark.parametrize("kind", ["linear", "procrustes", "rayleigh"])
    def test_gradient_identity(self, kind, point_factory, tangent_factory, objective_factory):
        """g(grad f, xi) = <grad f_euclidean, xi> for every tangent xi."""
        obj = objective_factory(kind, 6, 3)
        for _ in range(100):
            X = point_factory(6, 3)
            xi = tangent_factory(X)
            G = obj.grad(X)
            grad = geometry.riemannian_gradient_canonical(X, obj)
            lhs = geometry.metric_g(X, grad.value, xi)
            assert abs(lhs - linalg.frobenius_inner(G, xi)) <= 1e-9 * fro(G) * fro(xi) * fro(X) ** 2

    def test_gradient_is_tangent(self, point_factory, objective_factory):
        obj = objective_factory("rayleigh", 7, 2)
        X = point_factory(7, 2)
        grad = geometry.riemannian_gradient_canonical(X, obj)
        assert geometry.tangent_residual(X, grad.value) <= 1e-12 * fro(grad.value) * fro(X) * 10

    def test_normal_gradient_has_zero_riemannian_gradient(self, point_factory, generator):
        """grad f(X) = X S, S symmetric, is a critical direction."""
        S = linalg.sym(torch.randn((3, 3), generator=generator, dtype=DTYPE)).entries
        obj = Objective(name="normal", value=lambda X: 0.0, grad=lambda X: X @ S)
        X = point_factory(6, 3)
        grad = geometry.riemannian_gradient_canonical(X, obj)
        assert fro(grad.value) <= 1e-12 * fro(X) ** 3 * fro(S) * 10

    def test_euclidean_gradient_identity(self, point_factory, tangent_factory, objective_factory):
        obj = objective_factory("procrustes", 5, 2)
        X = point_factory(5, 2)
        grad = geometry.riemannian_gradient_euclidean(X, obj)
        for _ in range(10):
            xi = tangent_factory(X)
            expected = linalg.frobenius_inner(obj.grad(X), xi)
            assert linalg.frobenius_inner(grad.value, xi) == pytest.approx(expected, rel=1e-9, abs=1e-9 * fro(xi) * fro(obj.grad(X)))

    def test_relative_gradient_is_pi_of_projected_gradient(self, point_factory, objective_factory):
        """psi(X) X = Pi_X(P_X(grad f)) with the Euclidean tangent projection P_X."""
        obj = objective_factory("linear", 6, 2)
        X = point_factory(6, 2)
        projected, _ = geometry.euclidean_decompose(X, obj.grad(X))
        grad = geometry.riemannian_gradient_canonical(X, obj)
        torch.testing.assert_close(geometry.pi_map(X, projected).value, grad.value, rtol=1e-10, atol=1e-10)
