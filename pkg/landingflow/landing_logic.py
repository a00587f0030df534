"""
The landing field and the PLAM comparison field.

Both fields are returned as raw ambient n x p tensors: away from St(p, n) they
are neither tangent nor normal, and no geometry tagging happens here.
Objective implementations must be reentrant; the integrator sweep calls them
from several threads.
"""
import enum
from dataclasses import dataclass
from typing import Callable

import torch
from loguru import logger

from landingflow import linalg
from landingflow.config import numerics_config
from landingflow.exceptions import ConfigError
from landingflow.geometry import penalty_gradient
from landingflow.linalg import as_tensor


@dataclass(frozen=True)
class Objective:
    """A smooth f on R^{n x p} with its Euclidean gradient."""

    name: str
    value: Callable[[torch.Tensor], float]
    grad: Callable[[torch.Tensor], torch.Tensor]

    def __call__(self, X):
        return float(self.value(X))


@dataclass(frozen=True)
class LandingParams:
    lambda_: float = 1.0

    def __post_init__(self):
        if not float(self.lambda_) > 0:
            raise ConfigError(f"lambda must be positive, got {self.lambda_}")
        object.__setattr__(self, "lambda_", float(self.lambda_))


class FieldKind(enum.Enum):
    LANDING = "landing"
    PLAM = "plam"


def relative_gradient_psi(X, obj):
    """psi(X) = 2 skew(grad f(X) X^T), an n x n skew matrix."""
    X = as_tensor(X)
    return linalg.skew(2 * as_tensor(obj.grad(X)) @ X.T)


def _relative_gradient_term(X, G):
    # psi(X) X without forming the n x n matrix
    return G @ (X.T @ X) - X @ (G.T @ X)


def landing_field(X, obj, params):
    """Lambda(X) = psi(X) X + lambda X (X^T X - I)."""
    X = as_tensor(X)
    G = as_tensor(obj.grad(X))
    return _relative_gradient_term(X, G) + params.lambda_ * penalty_gradient(X)


def plam_field(X, obj, params):
    """grad f(X) - X sym(grad f(X)^T X) + lambda X (X^T X - I)."""
    X = as_tensor(X)
    G = as_tensor(obj.grad(X))
    return G - X @ linalg.sym(G.T @ X).entries + params.lambda_ * penalty_gradient(X)


def landing_residual(X, obj, params=None):
    """
    The two Frobenius-orthogonal residuals of the landing field.

    Returns:
        tuple[float, float]: (||psi(X) X||_F, ||grad N(X)||_F); both vanish
        exactly on the critical set.
    """
    X = as_tensor(X)
    G = as_tensor(obj.grad(X))
    tangential = torch.linalg.matrix_norm(_relative_gradient_term(X, G)).item()
    normal = torch.linalg.matrix_norm(penalty_gradient(X)).item()
    return tangential, normal


def penalty_dissipation_rate(X, params):
    """d/dt N along the exact landing flow: -lambda ||grad N(X)||_F^2."""
    gradient = penalty_gradient(X)
    return -params.lambda_ * torch.sum(gradient * gradient).item()


def objective_rate(X, obj, params, field=None):
    """d/dt f = -<grad f(X), field(X)> along the flow of ``field`` (landing by default)."""
    X = as_tensor(X)
    field = field or landing_field
    return -linalg.frobenius_inner(obj.grad(X), field(X, obj, params))


_FIELDS = {
    FieldKind.LANDING: landing_field,
    FieldKind.PLAM: plam_field,
}


def make_field(kind):
    """Returns the field function ``(X, obj, params) -> n x p tensor`` for a FieldKind or its name."""
    try:
        kind = FieldKind(kind) if not isinstance(kind, FieldKind) else kind
    except ValueError:
        raise ConfigError(f"Unknown field {kind!r}; expected one of {[k.value for k in FieldKind]}")
    return _FIELDS[kind]


def check_gradient(obj, X, h=1e-6, probes=20, generator=None):
    """
    Compares obj.grad against central finite differences of obj.value.

    Args:
        obj (Objective): objective under test.
        X (torch.Tensor): probe center.
        h (float): finite-difference step.
        probes (int): number of random unit directions.
        generator (torch.Generator, optional): direction source.

    Returns:
        float: worst relative error, measured against ||grad f(X)||_F.
    """
    X = as_tensor(X)
    G = as_tensor(obj.grad(X))
    scale = max(torch.linalg.matrix_norm(G).item(), 1e-12)
    worst = 0.0
    for _ in range(probes):
        E = torch.randn(X.shape, generator=generator, dtype=numerics_config.DTYPE)
        E = E / torch.linalg.matrix_norm(E)
        finite_difference = (obj(X + h * E) - obj(X - h * E)) / (2 * h)
        analytic = linalg.frobenius_inner(G, E)
        worst = max(worst, abs(finite_difference - analytic) / scale)
    logger.debug(f"Gradient check for {obj.name}: worst relative error {worst:.3e}")
    return worst


def autograd_objective(name, fn):
    """Wraps ``fn: tensor -> scalar tensor`` as an Objective with a torch.autograd gradient."""

    def value(X):
        with torch.no_grad():
            return float(fn(as_tensor(X)))

    def grad(X):
        X = as_tensor(X).detach().clone().requires_grad_(True)
        with torch.enable_grad():
            (gradient,) = torch.autograd.grad(fn(X), X)
        return gradient.detach()

    return Objective(name=name, value=value, grad=grad)
