"""
Geometry of the generalized Stiefel manifold St_M(p, n) = {Y : Y^T Y = M}.

Every full-rank X lies on St_{X^T X}(p, n); the functions here work at such a
point: tangent parameterizations, the extended canonical metric g, the
Euclidean and Pi-based alternatives, normal spaces, projections and Riemannian
gradients. (Y^T Y)^{-1} is always applied through Cholesky solves.
"""
import enum
import os
from dataclasses import dataclass, field
from functools import cached_property

import torch
from loguru import logger

from landingflow import linalg
from landingflow.config import numerics_config
from landingflow.exceptions import DimensionError, DomainError
from landingflow.linalg import SkewMatrix, SpdMatrix, SymMatrix, as_tensor


@dataclass(frozen=True)
class FullRankMatrix:
    entries: torch.Tensor

    def __post_init__(self):
        if self.entries.dim() != 2:
            raise DimensionError(f"Expected an n x p matrix, got shape {tuple(self.entries.shape)}")
        n, p = self.entries.shape
        if not n >= p >= 1:
            raise DimensionError(f"Expected n >= p >= 1, got {(n, p)}")
        linalg.check_full_rank(self.entries)

    @classmethod
    def from_tensor(cls, X):
        return cls(entries=as_tensor(X))

    @property
    def shape(self):
        return tuple(self.entries.shape)


@dataclass(frozen=True)
class GeneralizedStiefelPoint:
    """A full-rank Y with its cached Gram matrix Y^T Y (so Y is on St_{Y^T Y})."""

    base: FullRankMatrix
    gram: SpdMatrix

    def __post_init__(self):
        Y = self.base.entries
        expected = Y.T @ Y
        defect = torch.linalg.matrix_norm(self.gram.entries - expected).item()
        if defect > 1e-12 * max(torch.linalg.matrix_norm(expected).item(), 1.0):
            raise DomainError("Gram matrix does not match base^T base")

    @classmethod
    def from_matrix(cls, X):
        if isinstance(X, GeneralizedStiefelPoint):
            return X
        base = X if isinstance(X, FullRankMatrix) else FullRankMatrix.from_tensor(X)
        Y = base.entries
        return cls(base=base, gram=SpdMatrix.from_tensor(Y.T @ Y))

    @property
    def Y(self):
        return self.base.entries

    @property
    def n(self):
        return self.base.entries.shape[0]

    @property
    def p(self):
        return self.base.entries.shape[1]

    @cached_property
    def cholesky(self):
        return torch.linalg.cholesky(self.gram.entries)

    @cached_property
    def complement(self):
        return linalg.orth_complement(self.Y)

    def gram_solve(self, B):
        """(Y^T Y)^{-1} B"""
        return torch.cholesky_solve(as_tensor(B), self.cholesky)

    def gram_solve_right(self, B):
        """B (Y^T Y)^{-1}"""
        return torch.cholesky_solve(as_tensor(B).T, self.cholesky).T


def as_point(Y):
    return GeneralizedStiefelPoint.from_matrix(Y)


def tangent_residual(Y, xi):
    """Membership residual ||xi^T Y + Y^T xi||_F of the tangent-space equation."""
    Y = as_point(Y).Y
    xi = as_tensor(xi)
    A = Y.T @ xi
    return torch.linalg.matrix_norm(A + A.T).item()


def _tangent_slack(Y, xi):
    return numerics_config.TANGENT_TOL * max(
        torch.linalg.matrix_norm(xi).item() * torch.linalg.matrix_norm(Y).item(), 1e-300
    )


@dataclass(frozen=True)
class TangentVector:
    base: GeneralizedStiefelPoint
    value: torch.Tensor

    def __post_init__(self):
        if tuple(self.value.shape) != self.base.base.shape:
            raise DimensionError(
                f"Tangent value shape {tuple(self.value.shape)} does not match base {self.base.base.shape}"
            )
        residual = tangent_residual(self.base, self.value)
        if residual > _tangent_slack(self.base.Y, self.value):
            raise DomainError(f"Vector is not tangent (membership residual {residual:.3e})")

    @classmethod
    def computed(cls, base, value):
        """Wraps a vector produced by the geometry itself; membership holds by construction."""
        vector = object.__new__(cls)
        object.__setattr__(vector, "base", base)
        object.__setattr__(vector, "value", value)
        return vector


class MetricTag(enum.Enum):
    CANONICAL_G = "canonical_g"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class NormalVector:
    """
    Normal vector at a point; the tag fixes which normal space it belongs to:
    canonical_g -> Y (Y^T Y)^{-1} S, euclidean -> Y S, S symmetric.
    """

    base: GeneralizedStiefelPoint
    value: torch.Tensor
    metric_tag: MetricTag
    coefficient: SymMatrix = field(init=False)

    def __post_init__(self):
        point, value = self.base, self.value
        if tuple(value.shape) != point.base.shape:
            raise DimensionError("Normal value shape does not match its base point")
        if self.metric_tag is MetricTag.CANONICAL_G:
            S = point.Y.T @ value
            rebuilt = point.Y @ point.gram_solve(S)
        else:
            S = point.gram_solve(point.Y.T @ value)
            rebuilt = point.Y @ S
        scale = max(torch.linalg.matrix_norm(value).item(), 1e-300)
        defect = max(
            torch.linalg.matrix_norm(rebuilt - value).item(),
            torch.linalg.matrix_norm(S - S.T).item() * torch.linalg.matrix_norm(point.Y).item(),
        )
        if defect > numerics_config.NORMAL_TOL * scale * max(1.0, torch.linalg.matrix_norm(point.Y).item()):
            raise DomainError(f"Vector is not in the {self.metric_tag.value} normal space (defect {defect:.3e})")
        object.__setattr__(self, "coefficient", linalg.sym(S))

    @classmethod
    def computed(cls, base, value, metric_tag, coefficient):
        vector = object.__new__(cls)
        object.__setattr__(vector, "base", base)
        object.__setattr__(vector, "value", value)
        object.__setattr__(vector, "metric_tag", metric_tag)
        object.__setattr__(vector, "coefficient", coefficient)
        return vector


def stiefel_distance_penalty(X):
    """N(X) = 1/4 ||X^T X - I||_F^2"""
    X = as_tensor(X)
    defect = X.T @ X - torch.eye(X.shape[1], dtype=X.dtype)
    return 0.25 * torch.sum(defect * defect).item()


def penalty_gradient(X):
    """grad N(X) = X (X^T X - I)"""
    X = as_tensor(X)
    return X @ (X.T @ X) - X


def _as_skew(W):
    if isinstance(W, SkewMatrix):
        return W
    W = as_tensor(W)
    if W.dim() != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"Expected a square skew matrix, got shape {tuple(W.shape)}")
    scale = max(torch.linalg.matrix_norm(W).item(), 1.0)
    if torch.linalg.matrix_norm(W + W.T).item() > numerics_config.SYM_TOL * scale:
        raise DomainError("W must be skew-symmetric")
    return linalg.skew(W)


def tangent_from_skew(Y, W):
    """Tangent vector W Y for skew W (n x n)."""
    point = as_point(Y)
    W = _as_skew(W)
    if W.entries.shape[0] != point.n:
        raise DimensionError(f"W has size {W.entries.shape[0]}, expected {point.n}")
    return TangentVector(base=point, value=W.entries @ point.Y)


def tangent_from_omega_k(Y, Omega, K):
    """Tangent vector Y (Y^T Y)^{-1} Omega + Y_perp K."""
    point = as_point(Y)
    Omega = _as_skew(Omega)
    K = as_tensor(K)
    if Omega.entries.shape != (point.p, point.p):
        raise DimensionError(f"Omega must be {point.p} x {point.p}")
    if tuple(K.shape) != (point.n - point.p, point.p):
        raise DimensionError(f"K must be {point.n - point.p} x {point.p}, got {tuple(K.shape)}")
    value = point.Y @ point.gram_solve(Omega.entries) + point.complement @ K
    return TangentVector(base=point, value=value)


def tangent_decompose_omega_k(xi):
    """
    Recovers (Omega, K) with xi = Y (Y^T Y)^{-1} Omega + Y_perp K.

    Args:
        xi (TangentVector): tangent vector at its base point.

    Returns:
        tuple[SkewMatrix, torch.Tensor]
    """
    if not isinstance(xi, TangentVector):
        raise DomainError("tangent_decompose_omega_k expects a TangentVector")
    point, value = xi.base, xi.value
    residual = tangent_residual(point, value)
    if residual > _tangent_slack(point.Y, value):
        raise DomainError(f"Vector is not tangent (membership residual {residual:.3e})")
    Omega = linalg.skew(point.Y.T @ value)
    K = point.complement.T @ value
    return Omega, K


def map_phi(X, M):
    """Phi(X) = X M^{1/2}; maps St(p, n) onto St_M(p, n)."""
    X = as_tensor(X)
    return FullRankMatrix(entries=X @ linalg.spd_sqrt(M).entries)


def map_phi_inverse(Y, M):
    """Phi^{-1}(Y) = Y M^{-1/2}"""
    Y = as_tensor(Y)
    R = linalg.spd_sqrt(M).entries
    return FullRankMatrix(entries=torch.linalg.solve(R, Y.T).T)


def pushforward_phi(xi_hat, M):
    """Phi is linear, so its differential is xi_hat -> xi_hat M^{1/2}."""
    return as_tensor(xi_hat) @ linalg.spd_sqrt(M).entries


def tangent_from_pullback(Y, zeta):
    """Tangent vector Phi(zeta) for zeta tangent to St(p, n) at Phi^{-1}(Y), M = Y^T Y."""
    point = as_point(Y)
    X = map_phi_inverse(point.Y, point.gram).entries
    zeta = as_tensor(zeta)
    residual = tangent_residual(X, zeta)
    if residual > _tangent_slack(X, zeta):
        raise DomainError(f"zeta is not tangent to St(p, n) at Phi^-1(Y) (residual {residual:.3e})")
    return TangentVector(base=point, value=pushforward_phi(zeta, point.gram))


def canonical_metric(X, xi, zeta):
    """<xi, (I - 1/2 X X^T) zeta>, the canonical metric of St(p, n)."""
    X, xi, zeta = as_tensor(X), as_tensor(xi), as_tensor(zeta)
    return linalg.frobenius_inner(xi, zeta - 0.5 * X @ (X.T @ zeta))


def _half_projector_apply(point, Z):
    return Z - 0.5 * point.Y @ point.gram_solve(point.Y.T @ Z)


def metric_g(Y, xi, zeta):
    """g_Y(xi, zeta) = <xi, (I - 1/2 Y (Y^T Y)^{-1} Y^T) zeta (Y^T Y)^{-1}>"""
    point = as_point(Y)
    Z = point.gram_solve_right(as_tensor(zeta))
    return linalg.frobenius_inner(xi, _half_projector_apply(point, Z))


def euclidean_decompose(X, xi):
    """
    Euclidean-orthogonal split xi = xi_T + xi_N with xi_N = X S, S symmetric,
    where (X^T X) S + S (X^T X) = 2 sym(X^T xi).

    Returns:
        tuple[TangentVector, NormalVector]
    """
    point = as_point(X)
    xi = as_tensor(xi)
    if tuple(xi.shape) != point.base.shape:
        raise DimensionError(f"xi has shape {tuple(xi.shape)}, expected {point.base.shape}")
    C = linalg.sym(2 * (point.Y.T @ xi))
    S = linalg.solve_lyapunov_spd(point.gram, C)
    xi_N = point.Y @ S.entries
    xi_T = xi - xi_N
    return (
        TangentVector.computed(point, xi_T),
        NormalVector.computed(point, xi_N, MetricTag.EUCLIDEAN, S),
    )


def canonical_normal_project(Y, xi):
    """
    g-orthogonal projection onto N_Y = {Y (Y^T Y)^{-1} S}; the coefficient is S = sym(Y^T xi).
    """
    point = as_point(Y)
    S = linalg.sym(point.Y.T @ as_tensor(xi))
    value = point.Y @ point.gram_solve(S.entries)
    return NormalVector.computed(point, value, MetricTag.CANONICAL_G, S)


def canonical_tangent_project(Y, xi):
    point = as_point(Y)
    normal = canonical_normal_project(point, xi)
    return TangentVector.computed(point, as_tensor(xi) - normal.value)


def _require_tangent(point, xi):
    if isinstance(xi, TangentVector):
        return xi.value
    value = as_tensor(xi)
    residual = tangent_residual(point, value)
    if residual > _tangent_slack(point.Y, value):
        raise DomainError(f"Vector is not tangent (membership residual {residual:.3e})")
    return value


def pi_map(X, xi):
    """Pi_X(xi) = xi X^T X + X X^T xi on the tangent space."""
    point = as_point(X)
    value = _require_tangent(point, xi)
    return TangentVector.computed(point, value @ point.gram.entries + point.Y @ (point.Y.T @ value))


def pi_inverse_closed_form(X, zeta):
    """(I - 1/2 X (X^T X)^{-1} X^T) zeta (X^T X)^{-1}; equals Pi^{-1}(zeta) up to a Euclidean normal term."""
    point = as_point(X)
    return _half_projector_apply(point, point.gram_solve_right(as_tensor(zeta)))


def _debug_enabled():
    return os.environ.get("LANDING_DEBUG", "0") not in ("", "0", "false", "False")


def pi_inverse(X, zeta, check=None):
    """
    Pi_X^{-1}(zeta) = X (X^T X)^{-1} Omega + X_perp X_perp^T zeta (X^T X)^{-1},
    with Omega the skew solution of X^T zeta = Omega X^T X + X^T X Omega.

    With ``check`` (default: LANDING_DEBUG) the closed form is evaluated too and
    their difference is asserted to be a Euclidean normal vector X S.
    """
    point = as_point(X)
    value = _require_tangent(point, zeta)
    A = point.Y.T @ value
    Omega = linalg.solve_lyapunov_skew(point.gram, linalg.skew(A))
    result = point.Y @ point.gram_solve(Omega.entries) + point.complement @ (
        point.complement.T @ point.gram_solve_right(value)
    )
    if _debug_enabled() if check is None else check:
        _check_pi_inverse_routes(point, value, result)
    return TangentVector.computed(point, result)


def _check_pi_inverse_routes(point, zeta, result):
    difference = pi_inverse_closed_form(point, zeta) - result
    S = point.gram_solve(point.Y.T @ difference)
    defect = max(
        torch.linalg.matrix_norm(point.Y @ S - difference).item(),
        torch.linalg.matrix_norm(S - S.T).item() * torch.linalg.matrix_norm(point.Y).item(),
    )
    scale = max(torch.linalg.matrix_norm(result).item(), 1e-300)
    if defect > numerics_config.PI_INVERSE_CHECK_TOL * scale:
        raise DomainError(f"Pi inverse routes disagree beyond a normal term (defect {defect:.3e})")
    logger.debug(f"Pi inverse routes agree (defect {defect:.3e})")


def metric_pi(X, xi, zeta):
    """<xi_T, Pi^{-1}(zeta_T)> + <xi_N, zeta_N> with the Euclidean decomposition."""
    point = as_point(X)
    xi_T, xi_N = euclidean_decompose(point, xi)
    zeta_T, zeta_N = euclidean_decompose(point, zeta)
    return linalg.frobenius_inner(xi_T.value, pi_inverse(point, zeta_T).value) + linalg.frobenius_inner(
        xi_N.value, zeta_N.value
    )


def riemannian_gradient_canonical(X, obj):
    """grad f(X) = psi(X) X with psi(X) = 2 skew(grad f(X) X^T), w.r.t. g on St_{X^T X}."""
    point = as_point(X)
    Y = point.Y
    G = as_tensor(obj.grad(Y))
    value = G @ (Y.T @ Y) - Y @ (G.T @ Y)
    return TangentVector.computed(point, value)


def riemannian_gradient_euclidean(X, obj):
    """Tangent part of the Euclidean gradient (Euclidean metric on St_{X^T X})."""
    point = as_point(X)
    tangent, _ = euclidean_decompose(point, obj.grad(point.Y))
    return tangent
