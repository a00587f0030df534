import json

import pytest
import torch

from landingflow import geometry, linalg
from landingflow.config import numerics_config
from landingflow.exceptions import ConfigError, DimensionError, RankError
from landingflow.flow_manager import IntegratorConfig, integrate
from landingflow.landing_logic import LandingParams, check_gradient, landing_residual
from landingflow.problems import (
    BUILTIN_PROBLEMS,
    builtin_problem,
    load_problem,
    make_constant,
    make_generator,
    make_linear,
    make_procrustes,
    make_rayleigh,
    random_full_rank_point,
    random_point_with_gram_spectrum,
    random_stiefel_point,
    rayleigh_spectrum,
)

DTYPE = numerics_config.DTYPE


class TestLinear:
    def test_unit_vector_optimum(self):
        problem = builtin_problem("linear21")
        torch.testing.assert_close(problem.optimizer, torch.tensor([[-1.0], [0.0]], dtype=DTYPE))
        assert problem.optimal_value == pytest.approx(-1.0)
        assert problem.optimum_info["isolated"]

    def test_gradient_is_a(self, generator):
        A = torch.randn((5, 2), generator=generator, dtype=DTYPE)
        problem = make_linear(5, 2, A)
        assert torch.equal(problem.objective.grad(torch.zeros((5, 2), dtype=DTYPE)), A)

    def test_nuclear_norm_optimum(self, generator):
        A = torch.randn((6, 3), generator=generator, dtype=DTYPE)
        problem = make_linear(6, 3, A)
        assert problem.objective(problem.optimizer) == pytest.approx(problem.optimal_value, rel=1e-12)
        assert problem.optimal_value == pytest.approx(-torch.linalg.matrix_norm(A, ord="nuc").item())

    def test_rejects_zero_and_bad_shape(self):
        with pytest.raises(ConfigError):
            make_linear(3, 1, torch.zeros((3, 1), dtype=DTYPE))
        with pytest.raises(DimensionError):
            make_linear(3, 1, torch.ones((2, 1), dtype=DTYPE))


class TestProcrustes:
    def test_identity_with_stiefel_target(self, generator):
        """A = I and B on St(p, n): the optimizer is B with value 0."""
        B = random_stiefel_point(6, 2, generator)
        problem = make_procrustes(6, 2, torch.eye(6, dtype=DTYPE), B)
        torch.testing.assert_close(problem.optimizer, B, rtol=1e-12, atol=1e-12)
        assert problem.optimal_value == pytest.approx(0.0, abs=1e-12)
        assert problem.objective(B) == pytest.approx(0.0, abs=1e-28)

    def test_optimum_value_matches_optimizer(self):
        problem = builtin_problem("procrustes")
        assert problem.objective(problem.optimizer) == pytest.approx(problem.optimal_value, rel=1e-12)

    def test_general_a_has_no_optimum(self, generator):
        A = torch.randn((7, 5), generator=generator, dtype=DTYPE)
        B = torch.randn((7, 2), generator=generator, dtype=DTYPE)
        problem = make_procrustes(5, 2, A, B)
        assert problem.optimum_info is None
        X = random_stiefel_point(5, 2, generator)
        assert check_gradient(problem.objective, X, generator=generator) <= 1e-5


class TestRayleigh:
    def test_identity_gives_half_p(self, generator):
        problem = make_rayleigh(5, 3, torch.eye(5, dtype=DTYPE))
        assert problem.objective(random_stiefel_point(5, 3, generator)) == pytest.approx(1.5)

    def test_diagonal_optimum(self):
        A = torch.diag(torch.arange(1.0, 6.0, dtype=DTYPE))
        problem = make_rayleigh(5, 2, A)
        assert problem.optimal_value == pytest.approx(1.5)
        assert problem.optimum_info["eigengap"] == pytest.approx(1.0)
        assert problem.objective(problem.optimizer) == pytest.approx(1.5)

    def test_asymmetric_rejected(self):
        with pytest.raises(ConfigError):
            make_rayleigh(2, 1, torch.tensor([[1.0, 2.0], [0.0, 1.0]], dtype=DTYPE))

    def test_spectrum(self):
        spectrum = rayleigh_spectrum(6, 2)
        torch.testing.assert_close(spectrum, torch.tensor([1.0, 1.25, 1.75, 2.0, 2.25, 2.5], dtype=DTYPE))

    def test_flow_finds_bottom_subspace(self):
        problem = builtin_problem("rayleigh")
        trajectory = integrate(
            problem.initial_point(), "landing", problem.objective, LandingParams(), IntegratorConfig(t_max=100.0)
        )
        X = trajectory.final.X
        tangential, _ = landing_residual(X, problem.objective)
        assert tangential <= 1e-6
        assert trajectory.final.f == pytest.approx(problem.optimal_value, abs=1e-6)
        A = problem.objective.grad(torch.eye(20, dtype=DTYPE))
        assert torch.linalg.matrix_norm(A @ X - X @ (X.T @ A @ X)).item() <= 1e-5


class TestBuiltins:
    @pytest.mark.parametrize("name", BUILTIN_PROBLEMS)
    def test_gradients(self, name, generator):
        problem = builtin_problem(name)
        if name == "constant":
            assert torch.count_nonzero(problem.objective.grad(problem.initial_point())) == 0
            return
        assert check_gradient(problem.objective, problem.initial_point(), probes=20, generator=generator) <= 1e-5

    @pytest.mark.parametrize("name", ["linear", "procrustes", "rayleigh"])
    def test_deterministic(self, name):
        first, second = builtin_problem(name, seed=3), builtin_problem(name, seed=3)
        X = first.initial_point()
        torch.testing.assert_close(second.initial_point(), X, rtol=0, atol=0)
        torch.testing.assert_close(second.objective.grad(X), first.objective.grad(X), rtol=0, atol=0)
        other = builtin_problem(name, seed=4)
        assert not torch.equal(other.objective.grad(X), first.objective.grad(X))

    def test_constant_starts_on_manifold(self):
        problem = builtin_problem("constant")
        assert geometry.stiefel_distance_penalty(problem.initial_point()) <= 1e-28

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError):
            builtin_problem("quartic")


class TestRandomPoints:
    def test_gram_spectrum(self, generator):
        chi = torch.tensor([0.25, 1.0, 3.0], dtype=DTYPE)
        X = random_point_with_gram_spectrum(7, 3, chi, generator)
        torch.testing.assert_close(torch.linalg.eigvalsh(X.T @ X), chi, rtol=1e-12, atol=1e-12)

    def test_full_rank_points_respect_penalty_bound(self):
        for seed in range(20):
            X = random_full_rank_point(8, 4, make_generator(seed), penalty_max=0.5, spread=(0.01, 10.0))
            assert geometry.stiefel_distance_penalty(X) <= 0.5 + 1e-12
            linalg.check_full_rank(X)

    def test_invalid_spectrum(self, generator):
        with pytest.raises(ConfigError):
            random_point_with_gram_spectrum(3, 2, torch.tensor([1.0, 0.0], dtype=DTYPE), generator)
        with pytest.raises(DimensionError):
            random_point_with_gram_spectrum(3, 2, torch.tensor([1.0], dtype=DTYPE), generator)


class TestLoadProblem:
    def test_builtin_name(self):
        problem = load_problem("rayleigh", seed=5)
        assert problem.name == "rayleigh"
        assert problem.seed == 5

    def test_spec_dict(self):
        spec = {
            "kind": "linear",
            "n": 2,
            "p": 1,
            "params": {"A": [[0.0], [2.0]]},
            "x0": [[1.0], [1.0]],
            "run": {"lambda": 2.0, "tmax": 5},
        }
        problem = load_problem(spec)
        torch.testing.assert_close(problem.optimizer, torch.tensor([[0.0], [-1.0]], dtype=DTYPE))
        torch.testing.assert_close(problem.initial_point(), torch.tensor([[1.0], [1.0]], dtype=DTYPE))
        assert problem.run == {"lambda": 2.0, "tmax": 5}

    def test_file(self, tmp_path):
        path = tmp_path / "problem.json"
        path.write_text(json.dumps({"kind": "rayleigh", "n": 6, "p": 2, "seed": 11, "params": {"gap": 1.0}}))
        problem = load_problem(str(path))
        assert problem.seed == 11
        assert problem.optimum_info["eigengap"] == pytest.approx(1.0)
        assert load_problem(str(path), seed=12).seed == 12

    def test_seeded_specs_are_deterministic(self):
        spec = {"kind": "procrustes", "n": 5, "p": 2, "seed": 9}
        first, second = load_problem(spec), load_problem(spec)
        torch.testing.assert_close(first.optimizer, second.optimizer, rtol=0, atol=0)

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "quartic", "n": 3, "p": 1},
            {"kind": "linear", "n": 1, "p": 2},
            {"kind": "linear", "p": 2},
            {"kind": "rayleigh", "params": {"gap": 1.0}},
            {"kind": "rayleigh", "n": 4, "p": 2, "params": {"gap": "wide"}},
            {"kind": "rayleigh", "n": 3, "p": 1, "params": {"eigenvalues": ["a", "b", "c"]}},
            {"kind": "constant", "n": 3, "p": 1, "params": {"value": [1, 2]}},
            {"kind": "linear", "n": 3, "p": 1, "params": [1.0]},
            {"kind": "linear", "n": 3, "p": 1, "run": [1, 2]},
            {"kind": "linear", "n": 3, "p": 1, "params": {"A": "abc"}},
        ],
    )
    def test_invalid_specs(self, spec):
        with pytest.raises(ConfigError):
            load_problem(spec)

    def test_builtin_kind_without_dimensions(self):
        problem = load_problem({"kind": "linear", "seed": 4})
        assert (problem.n, problem.p) == (10, 3)
        assert problem.seed == 4

    def test_bad_x0(self):
        with pytest.raises(DimensionError):
            load_problem({"kind": "constant", "n": 3, "p": 2, "x0": [[1.0, 0.0], [0.0, 1.0]]})
        with pytest.raises(RankError):
            load_problem({"kind": "constant", "n": 2, "p": 2, "x0": [[1.0, 1.0], [1.0, 1.0]]})

    def test_invalid_json_and_missing_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_problem(str(path))
        with pytest.raises(ConfigError):
            load_problem(str(tmp_path / "missing.json"))

    def test_constant_value(self):
        problem = load_problem({"kind": "constant", "n": 3, "p": 1, "params": {"value": 2.5}})
        assert problem.objective(torch.ones((3, 1), dtype=DTYPE)) == 2.5
        assert make_constant(3, 1).optimal_value == 0.0
