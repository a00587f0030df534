"""
Benchmark objectives with known optima, random starting points, and the
JSON problem spec loader used by the CLI.

All randomness comes from ``torch.Generator().manual_seed(seed)`` (MT19937),
so a (kind, n, p, seed) quadruple always builds the same instance.
"""
import json
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import torch
from loguru import logger

from landingflow import linalg
from landingflow.config import numerics_config
from landingflow.exceptions import ConfigError, DimensionError
from landingflow.geometry import stiefel_distance_penalty
from landingflow.landing_logic import Objective
from landingflow.linalg import as_tensor


def make_generator(seed):
    return torch.Generator().manual_seed(int(seed))


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    objective: Objective
    n: int
    p: int
    seed: int = 0
    optimum_info: Optional[dict] = None
    x0: Optional[torch.Tensor] = None
    run: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.n >= self.p >= 1:
            raise DimensionError(f"Expected n >= p >= 1, got {(self.n, self.p)}")
        if self.x0 is not None and tuple(self.x0.shape) != (self.n, self.p):
            raise DimensionError(f"x0 has shape {tuple(self.x0.shape)}, expected {(self.n, self.p)}")

    @property
    def optimal_value(self):
        return None if self.optimum_info is None else self.optimum_info.get("value")

    @property
    def optimizer(self):
        return None if self.optimum_info is None else self.optimum_info.get("optimizer")

    def initial_point(self, seed=None):
        """The stored x0, else a seeded random full-rank start with N(X0) <= 5."""
        if self.x0 is not None:
            return self.x0.clone()
        generator = make_generator(self.seed if seed is None else seed)
        return random_full_rank_point(self.n, self.p, generator)

    def with_x0(self, x0):
        return replace(self, x0=as_tensor(x0))


def _require_shape(M, shape, what):
    if tuple(M.shape) != tuple(shape):
        raise DimensionError(f"{what} has shape {tuple(M.shape)}, expected {tuple(shape)}")


def make_linear(n, p, A, seed=0, name="linear"):
    """
    f(X) = <A, X>, grad f = A. On St(p, n) the minimum is -||A||_* at
    X* = -polar(A) (for p = 1: -A/||A|| with value -||A||).
    """
    A = as_tensor(A)
    _require_shape(A, (n, p), "A")
    if torch.count_nonzero(A) == 0:
        raise ConfigError("make_linear needs a nonzero A")
    objective = Objective(
        name=name,
        value=lambda X: linalg.frobenius_inner(A, X),
        grad=lambda X: A,
    )
    singular_values = torch.linalg.svdvals(A)
    optimum_info = {
        "value": -torch.sum(singular_values).item(),
        "optimizer": -linalg.polar_factor(A),
        "description": "-polar(A)",
        "isolated": bool(p == 1 or singular_values[-1] > 0),
    }
    return ProblemInstance(name=name, objective=objective, n=n, p=p, seed=seed, optimum_info=optimum_info)


def make_procrustes(n, p, A, B, seed=0, name="procrustes"):
    """f(X) = 1/2 ||A X - B||_F^2, grad f = A^T (A X - B)."""
    A, B = as_tensor(A), as_tensor(B)
    if A.dim() != 2 or A.shape[1] != n:
        raise DimensionError(f"A must be m x {n}, got {tuple(A.shape)}")
    _require_shape(B, (A.shape[0], p), "B")

    def value(X):
        residual = A @ as_tensor(X) - B
        return 0.5 * torch.sum(residual * residual).item()

    def grad(X):
        return A.T @ (A @ as_tensor(X) - B)

    optimum_info = None
    if A.shape[0] == n and torch.equal(A, torch.eye(n, dtype=A.dtype)):
        nuclear = torch.sum(torch.linalg.svdvals(B)).item()
        optimum_info = {
            "value": 0.5 * torch.sum(B * B).item() + 0.5 * p - nuclear,
            "optimizer": linalg.polar_factor(B),
            "description": "polar(B)",
        }
    return ProblemInstance(
        name=name,
        objective=Objective(name=name, value=value, grad=grad),
        n=n,
        p=p,
        seed=seed,
        optimum_info=optimum_info,
    )


def make_rayleigh(n, p, A, seed=0, name="rayleigh"):
    """f(X) = 1/2 tr(X^T A X), grad f = A X; the minimum is half the sum of the p smallest eigenvalues."""
    A = as_tensor(A)
    _require_shape(A, (n, n), "A")
    if torch.linalg.matrix_norm(A - A.T).item() > numerics_config.SYM_TOL * max(torch.linalg.matrix_norm(A).item(), 1.0):
        raise ConfigError("make_rayleigh needs a symmetric A")
    A = linalg.sym(A).entries

    def value(X):
        X = as_tensor(X)
        return 0.5 * torch.sum(X * (A @ X)).item()

    eigenvalues, eigenvectors = torch.linalg.eigh(A)
    optimum_info = {
        "value": 0.5 * torch.sum(eigenvalues[:p]).item(),
        "optimizer": eigenvectors[:, :p],
        "description": "eigenvectors of the p smallest eigenvalues (unique up to O(p))",
        "eigengap": (eigenvalues[p] - eigenvalues[p - 1]).item() if p < n else float("inf"),
        "isolated": p == 1,
    }
    return ProblemInstance(
        name=name,
        objective=Objective(name=name, value=value, grad=lambda X: A @ as_tensor(X)),
        n=n,
        p=p,
        seed=seed,
        optimum_info=optimum_info,
    )


def make_constant(n, p, value=0.0, seed=0, name="constant"):
    value = float(value)
    zero = torch.zeros((n, p), dtype=numerics_config.DTYPE)
    objective = Objective(name=name, value=lambda X: value, grad=lambda X: zero)
    return ProblemInstance(
        name=name,
        objective=objective,
        n=n,
        p=p,
        seed=seed,
        optimum_info={"value": value, "description": "every point is critical"},
    )


def random_orthogonal(k, generator):
    Q, R = torch.linalg.qr(torch.randn((k, k), generator=generator, dtype=numerics_config.DTYPE))
    return Q * torch.sign(torch.diagonal(R))


def random_stiefel_point(n, p, generator):
    """Haar-distributed point of St(p, n)."""
    Q, R = torch.linalg.qr(torch.randn((n, p), generator=generator, dtype=numerics_config.DTYPE))
    return Q * torch.sign(torch.diagonal(R))


def random_point_with_gram_spectrum(n, p, chi, generator):
    """X with X^T X = V diag(chi) V^T for a random orthogonal V."""
    chi = as_tensor(chi).reshape(-1)
    if chi.numel() != p:
        raise DimensionError(f"Expected {p} Gram eigenvalues, got {chi.numel()}")
    if not bool((chi > 0).all()):
        raise ConfigError("Gram eigenvalues must be positive")
    Q = random_stiefel_point(n, p, generator)
    V = random_orthogonal(p, generator)
    return (Q * torch.sqrt(chi)) @ V.T


def random_full_rank_point(n, p, generator, penalty_max=5.0, spread=(0.2, 2.0)):
    """Random full-rank X with N(X) <= penalty_max and Gram eigenvalues in ``spread``."""
    low, high = spread
    chi = low + (high - low) * torch.rand(p, generator=generator, dtype=numerics_config.DTYPE)
    penalty = 0.25 * torch.sum((chi - 1) ** 2).item()
    if penalty > penalty_max:
        chi = 1 + (chi - 1) * (penalty_max / penalty) ** 0.5
    X = random_point_with_gram_spectrum(n, p, chi, generator)
    logger.debug(f"Random start with N(X0) = {stiefel_distance_penalty(X):.4f}")
    return X


def rayleigh_spectrum(n, p, gap=0.5, low=1.0, step=0.25):
    """low, low + step, ... for the bottom p, then a jump of ``gap``, then steps of ``step``."""
    bottom = [low + step * i for i in range(p)]
    top = [bottom[-1] + gap + step * i for i in range(n - p)]
    return torch.tensor(bottom + top, dtype=numerics_config.DTYPE)


def builtin_problem(name, seed=0):
    """
    Named instances: linear21 (A = e1 on St(1, 2)), linear (10 x 3), procrustes
    (10 x 3, A = I), rayleigh (20 x 3, eigengap 0.5), constant (5 x 2, on-manifold start).
    """
    generator = make_generator(seed)
    if name == "linear21":
        return make_linear(2, 1, torch.tensor([[1.0], [0.0]], dtype=numerics_config.DTYPE), seed=seed, name=name)
    if name == "linear":
        A = torch.randn((10, 3), generator=generator, dtype=numerics_config.DTYPE)
        return make_linear(10, 3, A, seed=seed, name=name)
    if name == "procrustes":
        B = torch.randn((10, 3), generator=generator, dtype=numerics_config.DTYPE)
        return make_procrustes(10, 3, torch.eye(10, dtype=numerics_config.DTYPE), B, seed=seed, name=name)
    if name == "rayleigh":
        Q = random_orthogonal(20, generator)
        A = (Q * rayleigh_spectrum(20, 3)) @ Q.T
        return make_rayleigh(20, 3, A, seed=seed, name=name)
    if name == "constant":
        problem = make_constant(5, 2, seed=seed, name=name)
        return problem.with_x0(random_stiefel_point(5, 2, generator))
    raise ConfigError(f"Unknown builtin problem {name!r}; expected one of {list(BUILTIN_PROBLEMS)}")


BUILTIN_PROBLEMS = ("linear21", "linear", "procrustes", "rayleigh", "constant")

KINDS = ("linear", "procrustes", "rayleigh", "constant")


def _matrix(params, key, shape=None):
    if key not in params:
        return None
    try:
        M = torch.tensor(params[key], dtype=numerics_config.DTYPE)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Parameter {key!r} is not a numeric matrix: {e}")
    if M.dim() == 1:
        M = M.reshape(-1, 1)
    if shape is not None:
        _require_shape(M, shape, key)
    return M


def _scalar(params, key, default):
    try:
        return float(params.get(key, default))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Parameter {key!r} is not a number: {e}")


def problem_from_spec(spec):
    """
    Builds a ProblemInstance from a spec dict
    ``{kind, n, p, seed, params, x0 (optional), run (optional)}``.
    """
    if not isinstance(spec, dict):
        raise ConfigError("Problem spec must be a JSON object")
    kind = spec.get("kind")
    if kind in BUILTIN_PROBLEMS and not any(key in spec for key in ("n", "p", "params")):
        problem = builtin_problem(kind, seed=spec.get("seed", 0))
    else:
        if kind not in KINDS:
            raise ConfigError(f"Unknown problem kind {kind!r}; expected one of {list(KINDS)}")
        try:
            n, p, seed = int(spec["n"]), int(spec["p"]), int(spec.get("seed", 0))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Problem spec needs integer n and p: {e}")
        if not n >= p >= 1:
            raise ConfigError(f"Expected n >= p >= 1, got {(n, p)}")
        params = spec.get("params", {}) or {}
        if not isinstance(params, dict):
            raise ConfigError("The 'params' section must be a JSON object")
        generator = make_generator(seed)
        if kind == "linear":
            A = _matrix(params, "A", (n, p))
            if A is None:
                A = torch.randn((n, p), generator=generator, dtype=numerics_config.DTYPE)
            problem = make_linear(n, p, A, seed=seed)
        elif kind == "procrustes":
            A = _matrix(params, "A")
            if A is None:
                A = torch.eye(n, dtype=numerics_config.DTYPE)
            B = _matrix(params, "B")
            if B is None:
                B = torch.randn((A.shape[0], p), generator=generator, dtype=numerics_config.DTYPE)
            problem = make_procrustes(n, p, A, B, seed=seed)
        elif kind == "rayleigh":
            A = _matrix(params, "A", (n, n))
            if A is None:
                if "eigenvalues" in params:
                    try:
                        spectrum = torch.tensor(params["eigenvalues"], dtype=numerics_config.DTYPE)
                    except (TypeError, ValueError) as e:
                        raise ConfigError(f"Parameter 'eigenvalues' is not a numeric vector: {e}")
                    _require_shape(spectrum, (n,), "eigenvalues")
                else:
                    spectrum = rayleigh_spectrum(n, p, gap=_scalar(params, "gap", 0.5))
                Q = random_orthogonal(n, generator)
                A = (Q * spectrum) @ Q.T
            problem = make_rayleigh(n, p, A, seed=seed)
        else:
            problem = make_constant(n, p, value=_scalar(params, "value", 0.0), seed=seed)
    if spec.get("x0") is not None:
        x0 = _matrix(spec, "x0", (problem.n, problem.p))
        linalg.check_full_rank(x0)
        problem = problem.with_x0(x0)
    run = spec.get("run") or {}
    if not isinstance(run, dict):
        raise ConfigError("The 'run' section must be a JSON object")
    return replace(problem, run=dict(run))


def load_problem(source, seed=None):
    """
    Resolves ``source`` to a ProblemInstance: a builtin name, a path to a JSON
    spec file, or a spec dict. ``seed`` overrides the spec's seed.
    """
    if isinstance(source, dict):
        spec = dict(source)
    elif isinstance(source, str) and source in BUILTIN_PROBLEMS:
        return builtin_problem(source, seed=0 if seed is None else seed)
    elif isinstance(source, (str, os.PathLike)) and os.path.isfile(source):
        try:
            with open(source, "r") as file:
                spec = json.load(file)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Problem file {source} is not valid JSON: {e}")
    else:
        raise ConfigError(f"Problem {source!r} is neither a builtin ({', '.join(BUILTIN_PROBLEMS)}) nor a file")
    if seed is not None:
        spec["seed"] = seed
    return problem_from_spec(spec)
