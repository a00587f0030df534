"""
Integration of the landing system dX/dt = -Lambda(X) (and of the PLAM system).

One loop class per scheme; all share the stopping rules, the recording stride,
the full-rank check on recorded states and the penalty monotonicity check.
"""
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import torch
from loguru import logger
from tqdm import tqdm

from landingflow import linalg
from landingflow.config import numerics_config
from landingflow.exceptions import (
    ConfigError,
    IntegrationError,
    NonmonotonePenaltyError,
    RankError,
    RankFailureError,
)
from landingflow.geometry import stiefel_distance_penalty
from landingflow.landing_logic import FieldKind, LandingParams, make_field
from landingflow.linalg import as_tensor
from landingflow.utils.threads import resolve_workers


class Scheme(enum.Enum):
    EULER = "euler"
    RK4 = "rk4"
    RKF45 = "rkf45"

    @classmethod
    def _missing_(cls, value):
        aliases = {"explicit_euler": cls.EULER, "rkf45_adaptive": cls.RKF45}
        return aliases.get(value)


class Termination(enum.Enum):
    T_MAX = "t_max"
    RESIDUAL_TOL = "residual_tol"
    RANK_FAILURE = "rank_failure"
    NONMONOTONE_PENALTY = "nonmonotone_penalty"
    STEP_UNDERFLOW = "step_underflow"


def default_dt(params):
    """0.01 / lambda: the penalty dynamics contract at rate 2 lambda."""
    return numerics_config.DEFAULT_DT_SCALE / params.lambda_


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: Scheme = Scheme.RK4
    dt: Optional[float] = None
    t_max: float = 10.0
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    record_every: int = 1
    residual_tol: Optional[float] = None
    check_monotone: bool = True

    def __post_init__(self):
        try:
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        except ValueError:
            raise ConfigError(f"Unknown integrator {self.scheme!r}; expected one of {[s.value for s in Scheme]}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_max > 0:
            raise ConfigError(f"t_max must be positive, got {self.t_max}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ConfigError("abs_tol and rel_tol must be positive")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigError(f"record_every must be a positive integer, got {self.record_every}")
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise ConfigError(f"residual_tol must be positive, got {self.residual_tol}")

    def step_size(self, params):
        return self.dt if self.dt is not None else default_dt(params)

    def stopping_residual(self):
        return self.residual_tol if self.residual_tol is not None else numerics_config.DEFAULT_RESIDUAL_TOL


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    X: torch.Tensor
    f: float
    penalty: float
    residual: float


@dataclass
class Trajectory:
    samples: list = field(default_factory=list)
    terminated_by: Optional[Termination] = None
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def initial(self):
        return self.samples[0]

    @property
    def final(self):
        return self.samples[-1]

    @property
    def times(self):
        return [sample.t for sample in self.samples]

    @property
    def penalties(self):
        return [sample.penalty for sample in self.samples]

    @property
    def field_kind(self):
        return FieldKind(self.metadata.get("field", FieldKind.LANDING.value))

    @property
    def shape(self):
        return tuple(self.samples[0].X.shape)


def gram_trajectory(traj):
    """Ascending eigenvalues of X(t)^T X(t) at every sample, as (t, eigenvalues) pairs."""
    return [(sample.t, torch.linalg.eigvalsh(sample.X.T @ sample.X)) for sample in traj.samples]


class IntegratorLoop:
    """
    Fixed-step integration loop; subclasses provide ``step``.

    ``step(X, h)`` returns the advanced state together with a local error
    estimate of the same shape, which feeds the monotonicity slack (and the
    step control of adaptive schemes).
    """

    adaptive = False

    def __init__(self, obj, params, field_kind=FieldKind.LANDING, cfg=None):
        self.obj = obj
        self.params = params
        self.field_kind = FieldKind(field_kind)
        self.field = make_field(self.field_kind)
        self.cfg = cfg or IntegratorConfig()

    def velocity(self, X):
        return -self.field(X, self.obj, self.params)

    def step(self, X, h):
        raise NotImplementedError

    def sample(self, t, X):
        return TrajectorySample(
            t=float(t),
            X=X.clone(),
            f=self.obj(X),
            penalty=stiefel_distance_penalty(X),
            residual=torch.linalg.matrix_norm(self.field(X, self.obj, self.params)).item(),
        )

    def _check_rank(self, X, t, trajectory):
        try:
            linalg.check_full_rank(X)
        except RankError as e:
            trajectory.terminated_by = Termination.RANK_FAILURE
            raise RankFailureError(
                f"State lost full rank at t={t:.6g} ({e}); reduce dt", trajectory=trajectory
            ) from e

    def _check_monotone(self, X_old, X_new, err, t, trajectory):
        if not self.cfg.check_monotone or self.field_kind is not FieldKind.LANDING:
            return
        penalty_old = stiefel_distance_penalty(X_old)
        penalty_new = stiefel_distance_penalty(X_new)
        truncation = abs(penalty_new - stiefel_distance_penalty(X_new - err))
        slack = numerics_config.MONOTONE_SLACK_FACTOR * truncation + numerics_config.PENALTY_SLACK_FLOOR
        if penalty_new > penalty_old + slack:
            trajectory.terminated_by = Termination.NONMONOTONE_PENALTY
            raise NonmonotonePenaltyError(
                f"Penalty increased from {penalty_old:.6e} to {penalty_new:.6e} at t={t:.6g} "
                f"(slack {slack:.3e}); reduce dt",
                trajectory=trajectory,
            )

    def run(self, X0, metadata=None):
        """
        Integrates from X0 until t_max or until ||field(X)||_F drops to the stopping residual.

        Returns:
            Trajectory

        Raises:
            RankError: X0 is not full rank.
            RankFailureError, NonmonotonePenaltyError: carrying the partial trajectory.
        """
        cfg = self.cfg
        X = as_tensor(X0).clone()
        linalg.check_full_rank(X)
        dt = cfg.step_size(self.params)
        residual_tol = cfg.stopping_residual()
        trajectory = Trajectory(
            metadata={
                "field": self.field_kind.value,
                "lambda": self.params.lambda_,
                "scheme": cfg.scheme.value,
                "dt": dt,
                **(metadata or {}),
            }
        )

        current = self.sample(0.0, X)
        trajectory.samples.append(current)
        t, steps, last_recorded = 0.0, 0, 0
        terminated_by = Termination.T_MAX
        if current.residual <= residual_tol:
            terminated_by = Termination.RESIDUAL_TOL

        while terminated_by is Termination.T_MAX and t < cfg.t_max:
            last_step = t + dt >= cfg.t_max * (1 - 1e-12)
            h = cfg.t_max - t if last_step else dt
            X_new, err = self.step(X, h)
            if not torch.isfinite(X_new).all():
                trajectory.terminated_by = Termination.RANK_FAILURE
                raise RankFailureError(f"State became non-finite at t={t + h:.6g}; reduce dt", trajectory=trajectory)

            if self.adaptive:
                err_norm = torch.linalg.matrix_norm(err).item()
                tol = cfg.abs_tol + cfg.rel_tol * torch.linalg.matrix_norm(X).item()
                factor = 0.9 * (tol / max(err_norm, 1e-300)) ** 0.2
                next_dt = h * min(5.0, max(0.2, factor))
                if err_norm > tol:
                    if next_dt < 1e-12 * cfg.t_max:
                        trajectory.terminated_by = Termination.STEP_UNDERFLOW
                        raise IntegrationError(f"Step size underflow at t={t:.6g}", trajectory=trajectory)
                    dt = next_dt
                    continue
                dt = next_dt

            self._check_monotone(X, X_new, err, t + h, trajectory)
            steps += 1
            if self.adaptive:
                t = cfg.t_max if last_step else t + h
            else:
                t = cfg.t_max if last_step else steps * dt
            X = X_new

            residual = torch.linalg.matrix_norm(self.field(X, self.obj, self.params)).item()
            if residual <= residual_tol:
                terminated_by = Termination.RESIDUAL_TOL
            if last_step or residual <= residual_tol or steps - last_recorded >= cfg.record_every:
                self._check_rank(X, t, trajectory)
                trajectory.samples.append(self.sample(t, X))
                last_recorded = steps

        trajectory.terminated_by = terminated_by
        final = trajectory.final
        logger.debug(
            f"{self.__class__.__name__} finished at t={final.t:.6g} ({terminated_by.value}) after {steps} steps: "
            f"f={final.f:.10g}, N={final.penalty:.3e}, residual={final.residual:.3e}"
        )
        return trajectory


class EulerLoop(IntegratorLoop):
    def step(self, X, h):
        k1 = self.velocity(X)
        X_new = X + h * k1
        # Heun correction as the local error estimate
        k2 = self.velocity(X_new)
        return X_new, 0.5 * h * (k2 - k1)


class RK4Loop(IntegratorLoop):
    def step(self, X, h):
        k1 = self.velocity(X)
        k2 = self.velocity(X + 0.5 * h * k1)
        k3 = self.velocity(X + 0.5 * h * k2)
        k4 = self.velocity(X + h * k3)
        X_new = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        # difference to the embedded midpoint step
        return X_new, X_new - (X + h * k2)


class RKF45Loop(IntegratorLoop):
    """Runge-Kutta-Fehlberg 4(5); advances with the fifth-order solution."""

    adaptive = True

    def step(self, X, h):
        k1 = self.velocity(X)
        k2 = self.velocity(X + h * (k1 / 4))
        k3 = self.velocity(X + h * (3 / 32 * k1 + 9 / 32 * k2))
        k4 = self.velocity(X + h * (1932 / 2197 * k1 - 7200 / 2197 * k2 + 7296 / 2197 * k3))
        k5 = self.velocity(X + h * (439 / 216 * k1 - 8 * k2 + 3680 / 513 * k3 - 845 / 4104 * k4))
        k6 = self.velocity(
            X + h * (-8 / 27 * k1 + 2 * k2 - 3544 / 2565 * k3 + 1859 / 4104 * k4 - 11 / 40 * k5)
        )
        X4 = X + h * (25 / 216 * k1 + 1408 / 2565 * k3 + 2197 / 4104 * k4 - k5 / 5)
        X5 = X + h * (16 / 135 * k1 + 6656 / 12825 * k3 + 28561 / 56430 * k4 - 9 / 50 * k5 + 2 / 55 * k6)
        return X5, X5 - X4


LOOPS = {
    Scheme.EULER: EulerLoop,
    Scheme.RK4: RK4Loop,
    Scheme.RKF45: RKF45Loop,
}


def integrate(X0, field_kind, obj, params, cfg=None, metadata=None):
    """
    Integrates the chosen field from X0.

    Args:
        X0 (torch.Tensor | FullRankMatrix): full-rank start.
        field_kind (FieldKind | str): "landing" or "plam".
        obj (Objective): objective.
        params (LandingParams): lambda.
        cfg (IntegratorConfig, optional): scheme, steps and stopping rules.
        metadata (dict, optional): extra metadata (seed, problem) stored on the trajectory.

    Returns:
        Trajectory
    """
    cfg = cfg or IntegratorConfig()
    loop = LOOPS[cfg.scheme](obj, params, field_kind=field_kind, cfg=cfg)
    return loop.run(X0, metadata=metadata)


@dataclass
class SweepCell:
    lambda_: float
    start_index: int
    trajectory: Optional[Trajectory]
    error: Optional[Exception] = None

    @property
    def ok(self):
        return self.error is None


def _run_cell(problem, lambda_, start_index, X0, field_kind, cfg, metadata):
    params = LandingParams(lambda_=lambda_)
    cell_cfg = cfg if cfg.dt is not None else replace(cfg, dt=default_dt(params))
    cell_metadata = {**metadata, "start_index": start_index}
    try:
        trajectory = integrate(X0, field_kind, problem.objective, params, cell_cfg, metadata=cell_metadata)
        return SweepCell(lambda_=lambda_, start_index=start_index, trajectory=trajectory)
    except IntegrationError as e:
        logger.warning(f"Sweep cell lambda={lambda_}, start={start_index} failed: {e}")
        return SweepCell(lambda_=lambda_, start_index=start_index, trajectory=e.trajectory, error=e)


def sweep(problem, lambdas, initial_points, field_kind=FieldKind.LANDING, cfg=None, workers=None, progress=False):
    """
    Runs every (lambda, initial point) cell concurrently.

    Cells are independent and deterministic, so the result (returned in grid
    order, lambda-major) does not depend on the worker count.

    Returns:
        list[SweepCell]
    """
    cfg = cfg or IntegratorConfig()
    lambdas = [float(lambda_) for lambda_ in lambdas]
    if any(not math.isfinite(lambda_) or lambda_ <= 0 for lambda_ in lambdas):
        raise ConfigError(f"Every lambda must be positive, got {lambdas}")
    metadata = {"problem": problem.name, "seed": problem.seed}
    cells = [(lambda_, index, X0) for lambda_ in lambdas for index, X0 in enumerate(initial_points)]
    workers = resolve_workers(workers, len(cells))
    logger.debug(f"Sweeping {len(cells)} cells on {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [
            executor.submit(_run_cell, problem, lambda_, index, X0, FieldKind(field_kind), cfg, metadata)
            for lambda_, index, X0 in cells
        ]
        return [future.result() for future in tqdm(futures, desc="sweep", disable=not progress)]
