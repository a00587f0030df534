"""
Dense kernels for the Stiefel geometry: symmetric/skew parts, SPD square roots,
orthogonal complements and the symmetric Lyapunov solver.

Everything here is a pure function of its inputs.
"""
from dataclasses import dataclass

import torch
from loguru import logger

from landingflow.config import numerics_config
from landingflow.exceptions import DimensionError, DomainError, RankError


def as_tensor(A):
    """Unwraps the typed matrices below and casts to the working dtype."""
    if hasattr(A, "entries"):
        A = A.entries
    if not isinstance(A, torch.Tensor):
        return torch.as_tensor(A, dtype=numerics_config.DTYPE)
    return A.to(dtype=numerics_config.DTYPE)


def _require_square(A, what="matrix"):
    if A.dim() != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"Expected a square {what}, got shape {tuple(A.shape)}")


def _symmetric_defect(A):
    scale = max(torch.linalg.matrix_norm(A).item(), 1.0)
    return torch.linalg.matrix_norm(A - A.T).item() / scale


@dataclass(frozen=True)
class SymMatrix:
    entries: torch.Tensor

    def __post_init__(self):
        _require_square(self.entries, "symmetric matrix")
        if not torch.equal(self.entries, self.entries.T):
            raise DomainError("SymMatrix entries are not exactly symmetric; build it with sym()")


@dataclass(frozen=True)
class SkewMatrix:
    entries: torch.Tensor

    def __post_init__(self):
        _require_square(self.entries, "skew-symmetric matrix")
        if not torch.equal(self.entries, -self.entries.T):
            raise DomainError("SkewMatrix entries are not exactly skew-symmetric; build it with skew()")


@dataclass(frozen=True)
class SpdMatrix:
    entries: torch.Tensor

    def __post_init__(self):
        _require_square(self.entries, "SPD matrix")
        if _symmetric_defect(self.entries) > numerics_config.SYM_TOL:
            raise DomainError("Matrix is not symmetric within tolerance")
        eigenvalues = torch.linalg.eigvalsh(self.entries)
        if eigenvalues[0] <= numerics_config.SPD_EIG_TOL * eigenvalues[-1].item():
            raise DomainError(
                f"Matrix is not positive definite (smallest eigenvalue {eigenvalues[0].item():.3e})"
            )

    @classmethod
    def from_tensor(cls, A):
        """Symmetrizes rounding noise away before validating."""
        A = as_tensor(A)
        _require_square(A)
        return cls(entries=(A + A.T) / 2)

    @property
    def size(self):
        return self.entries.shape[0]


def sym(A):
    """Returns the symmetric part (A + A^T)/2."""
    A = as_tensor(A)
    _require_square(A)
    return SymMatrix(entries=(A + A.T) / 2)


def skew(A):
    """Returns the skew-symmetric part (A - A^T)/2."""
    A = as_tensor(A)
    _require_square(A)
    return SkewMatrix(entries=(A - A.T) / 2)


def frobenius_inner(A, B):
    return torch.sum(as_tensor(A) * as_tensor(B)).item()


def _spd_eigh(M):
    M = as_tensor(M)
    _require_square(M)
    eigenvalues, eigenvectors = torch.linalg.eigh((M + M.T) / 2)
    if eigenvalues[0] <= numerics_config.SPD_EIG_TOL * eigenvalues[-1].item():
        raise DomainError(
            f"Coefficient matrix is not positive definite (smallest eigenvalue {eigenvalues[0].item():.3e})"
        )
    return eigenvalues, eigenvectors


def spd_sqrt(M):
    """
    Principal square root of an SPD matrix.

    Args:
        M (SpdMatrix | torch.Tensor): symmetric positive-definite matrix.

    Returns:
        SpdMatrix: R with R @ R = M.
    """
    eigenvalues, Q = _spd_eigh(M)
    R = (Q * torch.sqrt(eigenvalues)) @ Q.T
    return SpdMatrix(entries=(R + R.T) / 2)


def spd_inverse_sqrt(M):
    eigenvalues, Q = _spd_eigh(M)
    R = (Q * torch.rsqrt(eigenvalues)) @ Q.T
    return SpdMatrix(entries=(R + R.T) / 2)


def check_full_rank(X, tol=None):
    """
    Raises RankError unless sigma_min > tol * sigma_max.

    Returns:
        torch.Tensor: the singular values, descending.
    """
    X = as_tensor(X)
    if X.dim() != 2:
        raise DimensionError(f"Expected a matrix, got shape {tuple(X.shape)}")
    tol = numerics_config.RANK_TOL if tol is None else tol
    if not torch.isfinite(X).all():
        raise RankError("Matrix has non-finite entries")
    singular_values = torch.linalg.svdvals(X)
    if singular_values.numel() == 0 or singular_values[-1] <= tol * singular_values[0]:
        smallest = singular_values[-1].item() if singular_values.numel() else 0.0
        raise RankError(f"Matrix is rank deficient (smallest singular value {smallest:.3e})")
    return singular_values


def orth_complement(X):
    """
    Returns X_perp (n x (n-p)) with X^T X_perp = 0 and X_perp^T X_perp = I.
    """
    X = as_tensor(X)
    n, p = X.shape
    if p > n:
        raise DimensionError(f"Expected n >= p, got shape {(n, p)}")
    check_full_rank(X)
    U, _, _ = torch.linalg.svd(X, full_matrices=True)
    return U[:, p:].contiguous()


def polar_factor(A):
    """Orthogonal polar factor U V^T of a full-column-rank matrix."""
    A = as_tensor(A)
    U, _, Vh = torch.linalg.svd(A, full_matrices=False)
    return U @ Vh


def principal_angles(A, B):
    """Principal angles (ascending) between the column spans of A and B."""
    QA, _ = torch.linalg.qr(as_tensor(A))
    QB, _ = torch.linalg.qr(as_tensor(B))
    cosines = torch.linalg.svdvals(QA.T @ QB).clamp(-1.0, 1.0)
    return torch.flip(torch.arccos(cosines), dims=(0,))


def _lyapunov_eig(A, C):
    eigenvalues, Q = _spd_eigh(A)
    C = as_tensor(C)
    if C.shape != (eigenvalues.shape[0],) * 2:
        raise DimensionError(f"Right-hand side shape {tuple(C.shape)} does not match coefficient size")
    C_rot = Q.T @ C @ Q
    S_rot = C_rot / (eigenvalues[:, None] + eigenvalues[None, :])
    return Q @ S_rot @ Q.T


def _log_residual(A, S, C, label):
    A, C = as_tensor(A), as_tensor(C)
    residual = torch.linalg.matrix_norm(A @ S + S @ A - C).item()
    scale = torch.linalg.matrix_norm(C).item()
    if residual > numerics_config.LYAPUNOV_RESIDUAL_TOL * max(scale, 1e-300):
        logger.debug(f"{label} Lyapunov residual {residual:.3e} above tolerance (|C| = {scale:.3e})")


def solve_lyapunov_spd(A, C):
    """
    Solves A S + S A = C for symmetric S with A SPD.

    Uses A = Q diag(l) Q^T, so (Q^T S Q)_ij = (Q^T C Q)_ij / (l_i + l_j); for
    symmetric A this is the Bartels-Stewart method with a diagonal Schur form.

    Args:
        A (SpdMatrix | torch.Tensor): p x p SPD coefficient.
        C (SymMatrix | torch.Tensor): p x p symmetric right-hand side.

    Returns:
        SymMatrix: the unique solution.
    """
    S = _lyapunov_eig(A, C)
    S = sym(S)
    _log_residual(A, S.entries, C, "Symmetric")
    return S


def solve_lyapunov_skew(A, C):
    """
    Solves Omega A + A Omega = C for skew Omega with A SPD and C skew.
    """
    Omega = _lyapunov_eig(A, C)
    scale = max(torch.linalg.matrix_norm(Omega).item(), 1e-300)
    defect = torch.linalg.matrix_norm(Omega + Omega.T).item()
    if defect > numerics_config.SYM_TOL * 1e2 * scale:
        raise DomainError(f"Lyapunov solution is not skew-symmetric (defect {defect:.3e}); is C skew?")
    Omega = skew(Omega)
    _log_residual(A, Omega.entries, C, "Skew")
    return Omega
