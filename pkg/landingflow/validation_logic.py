"""
Numerical certificates over landing trajectories.

Each certificate is a validator class with a ``validate`` method returning a
CertificateReport; a failed certificate is an outcome, never an exception.
The module-level ``certify_*`` functions are the entry points.
"""
import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import torch
from loguru import logger

from landingflow import linalg
from landingflow.config import numerics_config
from landingflow.exceptions import ConfigError, DomainError, IntegrationError, PreconditionError
from landingflow.flow_manager import IntegratorConfig, gram_trajectory, integrate
from landingflow.geometry import stiefel_distance_penalty
from landingflow.landing_logic import FieldKind, LandingParams, landing_field, landing_residual
from landingflow.linalg import as_tensor
from landingflow.problems import make_generator
from landingflow.utils.threads import resolve_workers


class Status(enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not_applicable"


@dataclass
class CertificateReport:
    certificate: str
    status: Status
    metrics: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status is Status.PASS

    @property
    def failed(self):
        return self.status is Status.FAIL

    def to_dict(self):
        return {
            "certificate": self.certificate,
            "pass": self.passed,
            "status": self.status.value,
            "metrics": self.metrics,
            "tolerances": self.tolerances,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def gram_closed_form(chi0, lambda_, t):
    """
    Eigenvalue of X(t)^T X(t) along the exact landing flow started from eigenvalue chi0:
    chi0 e^{2 lambda t} / (chi0 (e^{2 lambda t} - 1) + 1), evaluated as
    chi0 / (chi0 + (1 - chi0) e^{-2 lambda t}) so large 2 lambda t cannot overflow.

    Accepts floats or tensors for chi0 and t.
    """
    scalar = not isinstance(chi0, torch.Tensor) and not isinstance(t, torch.Tensor)
    chi0, t = as_tensor(chi0), as_tensor(t)
    _check_closed_form_domain(chi0, lambda_, t)
    decay = torch.exp(-2.0 * lambda_ * t)
    value = chi0 / (chi0 + (1.0 - chi0) * decay)
    return value.item() if scalar else value


def gram_closed_form_derivative(chi0, lambda_, t):
    """Time derivative of gram_closed_form: 2 lambda chi0 (1 - chi0) e^{-2 lambda t} / D^2."""
    scalar = not isinstance(chi0, torch.Tensor) and not isinstance(t, torch.Tensor)
    chi0, t = as_tensor(chi0), as_tensor(t)
    _check_closed_form_domain(chi0, lambda_, t)
    decay = torch.exp(-2.0 * lambda_ * t)
    denominator = chi0 + (1.0 - chi0) * decay
    value = 2.0 * lambda_ * chi0 * (1.0 - chi0) * decay / denominator**2
    return value.item() if scalar else value


def _check_closed_form_domain(chi0, lambda_, t):
    if not bool((chi0 > 0).all()):
        raise DomainError("chi0 must be positive")
    if not lambda_ > 0:
        raise DomainError("lambda must be positive")
    if not bool((t >= 0).all()):
        raise DomainError("t must be nonnegative")


def _trajectory_lambda(traj, params):
    if params is not None:
        return params.lambda_
    if "lambda" in traj.metadata:
        return float(traj.metadata["lambda"])
    raise ConfigError("lambda is unknown: pass params or a trajectory carrying its metadata")


class CertificateValidator:
    name = None

    def __init__(self, **tolerances):
        self.tolerances = {**self.default_tolerances(), **tolerances}

    def default_tolerances(self):
        return {}

    def evaluate(self, traj, **kwargs):
        """Returns (status, metrics)."""
        raise NotImplementedError

    def validate(self, traj, **kwargs):
        if len(traj) == 0:
            raise ConfigError("Cannot certify an empty trajectory")
        status, metrics = self.evaluate(traj, **kwargs)
        report = CertificateReport(
            certificate=self.name, status=status, metrics=metrics, tolerances=dict(self.tolerances)
        )
        logger.info(f"Certificate {self.name}: {status.value} {metrics}")
        return report


def _eigenvector_drift(X_first, X_other, cluster_tol):
    """Largest sine of the angle between matching eigenvectors of the two Gram matrices."""
    values_first, vectors_first = torch.linalg.eigh(X_first.T @ X_first)
    values_other, vectors_other = torch.linalg.eigh(X_other.T @ X_other)
    drift = 0.0
    for i in range(values_first.numel()):
        separated = True
        for values in (values_first, values_other):
            neighbours = torch.cat([values[:i], values[i + 1:]])
            if neighbours.numel() and torch.min(torch.abs(neighbours - values[i])).item() <= cluster_tol:
                separated = False
        if not separated:
            continue
        u, v = vectors_first[:, i], vectors_other[:, i]
        drift = max(drift, torch.linalg.vector_norm(v - torch.dot(u, v) * u).item())
    return drift


class GramConvergenceValidator(CertificateValidator):
    name = "gram"

    def default_tolerances(self):
        return {
            "gram": numerics_config.GRAM_TOL,
            "eigen_cluster": numerics_config.EIGEN_CLUSTER_TOL,
            "monotone_floor": 1e-12,
        }

    def evaluate(self, traj, params=None):
        if traj.field_kind is not FieldKind.LANDING:
            return Status.NOT_APPLICABLE, {"reason": "closed-form Gram dynamics hold for the landing field only"}
        lambda_ = _trajectory_lambda(traj, params)
        spectra = gram_trajectory(traj)
        chi0 = spectra[0][1]
        max_deviation, monotone, drift = 0.0, True, 0.0
        previous_distance = torch.abs(chi0 - 1.0)
        previous_error = torch.zeros_like(chi0)
        for t, eigenvalues in spectra:
            expected = gram_closed_form(chi0, lambda_, torch.tensor(t, dtype=numerics_config.DTYPE))
            error = torch.abs(eigenvalues - expected)
            max_deviation = max(max_deviation, torch.max(error / expected).item())
            distance = torch.abs(eigenvalues - 1.0)
            # exact eigenvalues approach 1 monotonically; allow the integration error
            slack = previous_error + error + self.tolerances["monotone_floor"]
            if bool((distance > previous_distance + slack).any()):
                monotone = False
            previous_distance, previous_error = distance, error
        X0 = traj.initial.X
        for sample in traj.samples[1:]:
            drift = max(drift, _eigenvector_drift(X0, sample.X, self.tolerances["eigen_cluster"]))
        metrics = {
            "lambda": lambda_,
            "max_relative_deviation": max_deviation,
            "monotone_approach": monotone,
            "eigenvector_drift": drift,
            "initial_eigenvalues": chi0.tolist(),
            "final_eigenvalues": spectra[-1][1].tolist(),
            "samples": len(traj),
        }
        status = Status.PASS if max_deviation <= self.tolerances["gram"] else Status.FAIL
        return status, metrics


class CriticalConvergenceValidator(CertificateValidator):
    name = "critical"

    def default_tolerances(self):
        return {
            "stationarity": numerics_config.STATIONARITY_TOL,
            "feasibility": numerics_config.FEASIBILITY_TOL,
        }

    def evaluate(self, traj, obj=None):
        final = traj.final
        if obj is not None:
            stationarity, _ = landing_residual(final.X, obj)
            source = "psi_x"
        else:
            # ||Lambda||^2 = ||psi X||^2 + lambda^2 ||grad N||^2 bounds the tangential part
            stationarity = final.residual
            source = "field_residual"
        penalty = stiefel_distance_penalty(final.X)
        metrics = {
            "final_t": final.t,
            "final_f": final.f,
            "stationarity": stationarity,
            "stationarity_source": source,
            "penalty": penalty,
        }
        passed = stationarity <= self.tolerances["stationarity"] and penalty <= self.tolerances["feasibility"]
        return (Status.PASS if passed else Status.FAIL), metrics


class PenaltyMonotoneValidator(CertificateValidator):
    name = "monotone"

    def default_tolerances(self):
        return {"absolute_slack": numerics_config.PENALTY_SLACK_FLOOR, "relative_slack": 1e-10}

    def evaluate(self, traj):
        if traj.field_kind is not FieldKind.LANDING:
            return Status.NOT_APPLICABLE, {"reason": "penalty monotonicity holds for the landing field only"}
        penalties = traj.penalties
        max_increase, violations = 0.0, 0
        for before, after in zip(penalties, penalties[1:]):
            increase = after - before
            max_increase = max(max_increase, increase)
            if increase > self.tolerances["absolute_slack"] + self.tolerances["relative_slack"] * before:
                violations += 1
        metrics = {
            "max_increase": max_increase,
            "violations": violations,
            "initial_penalty": penalties[0],
            "final_penalty": penalties[-1],
        }
        return (Status.PASS if violations == 0 else Status.FAIL), metrics


class ManifoldInvarianceValidator(CertificateValidator):
    name = "invariance"

    def default_tolerances(self):
        return {"invariance": numerics_config.INVARIANCE_TOL}

    def evaluate(self, traj):
        tol = self.tolerances["invariance"]
        initial = traj.initial.penalty
        if initial > tol:
            return Status.NOT_APPLICABLE, {"reason": "trajectory does not start on St(p, n)", "initial_penalty": initial}
        max_penalty = max(traj.penalties)
        return (Status.PASS if max_penalty <= tol else Status.FAIL), {"max_penalty": max_penalty}


CERTIFICATES = {
    GramConvergenceValidator.name: GramConvergenceValidator,
    CriticalConvergenceValidator.name: CriticalConvergenceValidator,
    PenaltyMonotoneValidator.name: PenaltyMonotoneValidator,
    ManifoldInvarianceValidator.name: ManifoldInvarianceValidator,
}


def certify_gram_convergence(traj, params=None, tol=None):
    tolerances = {} if tol is None else {"gram": tol}
    return GramConvergenceValidator(**tolerances).validate(traj, params=params)


def certify_critical_convergence(traj, obj=None, tol_stat=None, tol_feas=None):
    tolerances = {}
    if tol_stat is not None:
        tolerances["stationarity"] = tol_stat
    if tol_feas is not None:
        tolerances["feasibility"] = tol_feas
    return CriticalConvergenceValidator(**tolerances).validate(traj, obj=obj)


def certify_penalty_monotone(traj, slack=None):
    tolerances = {} if slack is None else {"absolute_slack": slack}
    return PenaltyMonotoneValidator(**tolerances).validate(traj)


def certify_manifold_invariance(traj, tol=None):
    tolerances = {} if tol is None else {"invariance": tol}
    return ManifoldInvarianceValidator(**tolerances).validate(traj)


class StabilityProbe:
    """
    Perturbs an equilibrium X* and integrates back.

    ``mode="point"`` compares endpoints with X* directly (isolated minima);
    ``mode="subspace"`` aligns them with X* Q, Q = polar(X*^T X_end), which
    tests convergence to the orbit X* O(p) of Rayleigh-type optima.
    """

    MODES = ("point", "subspace")

    def __init__(self, X_star, obj, params, cfg=None, mode="point", workers=None):
        if mode not in self.MODES:
            raise ConfigError(f"Unknown stability mode {mode!r}; expected one of {self.MODES}")
        self.X_star = as_tensor(X_star)
        self.obj = obj
        self.params = params
        self.cfg = cfg or IntegratorConfig(t_max=50.0)
        self.mode = mode
        self.workers = workers
        self._check_precondition()

    def _check_precondition(self):
        penalty = stiefel_distance_penalty(self.X_star)
        residual = torch.linalg.matrix_norm(landing_field(self.X_star, self.obj, self.params)).item()
        if penalty > numerics_config.FEASIBILITY_TOL or residual > 1e-10:
            raise PreconditionError(
                f"X* must be a feasible equilibrium (N = {penalty:.3e}, ||Lambda|| = {residual:.3e})"
            )

    def distance(self, X_end):
        if self.mode == "point":
            return torch.linalg.matrix_norm(X_end - self.X_star).item()
        Q = linalg.polar_factor(self.X_star.T @ X_end)
        return torch.linalg.matrix_norm(X_end - self.X_star @ Q).item()

    def _trial(self, X0):
        try:
            trajectory = integrate(X0, FieldKind.LANDING, self.obj, self.params, self.cfg)
        except IntegrationError as e:
            logger.warning(f"Stability trial failed: {e}")
            return math.inf, math.pi / 2
        X_end = trajectory.final.X
        angle = linalg.principal_angles(X_end, self.X_star).max().item()
        return self.distance(X_end), angle

    def run(self, radius, trials, generator=None, recover_tol=None):
        if radius < 0 or trials < 1:
            raise ConfigError("radius must be nonnegative and trials positive")
        generator = generator or make_generator(0)
        recover_tol = max(10.0 * radius, 1e-10) if recover_tol is None else recover_tol
        starts = []
        for _ in range(trials):
            E = torch.randn(self.X_star.shape, generator=generator, dtype=numerics_config.DTYPE)
            starts.append(self.X_star + radius * E / torch.linalg.matrix_norm(E))
        with ThreadPoolExecutor(max_workers=resolve_workers(self.workers, trials)) as executor:
            outcomes = list(executor.map(self._trial, starts))
        distances = [distance for distance, _ in outcomes]
        recovered = sum(distance <= recover_tol for distance in distances)
        metrics = {
            "mode": self.mode,
            "radius": radius,
            "trials": trials,
            "recovered": recovered,
            "fraction_recovered": recovered / trials,
            "max_distance": max(distances),
            "max_principal_angle": max(angle for _, angle in outcomes),
        }
        status = Status.PASS if recovered == trials else Status.FAIL
        report = CertificateReport(
            certificate="stability", status=status, metrics=metrics, tolerances={"recover": recover_tol}
        )
        logger.info(f"Certificate stability: {status.value} {metrics}")
        return report


def probe_stability(
    X_star, obj, params, radius, trials, cfg=None, generator=None, mode="point", recover_tol=None, workers=None
):
    """
    Launches ``trials`` landing flows from X* + radius * (random unit perturbation).

    Raises:
        PreconditionError: X* is not a feasible equilibrium.

    Returns:
        CertificateReport: PASS iff every run returns within ``recover_tol``
        (default 10 * radius); metrics carry the fraction recovered.
    """
    if not isinstance(params, LandingParams):
        raise ConfigError("params must be LandingParams")
    probe = StabilityProbe(X_star, obj, params, cfg=cfg, mode=mode, workers=workers)
    return probe.run(radius, trials, generator=generator, recover_tol=recover_tol)
