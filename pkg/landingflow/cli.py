"""
Command-line front end.

    landingflow run      --problem linear21 --lambda 1 --tmax 30 --out t.csv
    landingflow figure1  --out-dir figure1
    landingflow certify  --trajectory t.json --certificates gram critical
    landingflow sweep    --problem rayleigh --lambdas 0.5 1 2 --starts 4 --out-dir sweep

Exit codes: 0 success, 1 a certificate failed, 2 invalid configuration,
3 the integration failed (rank loss or non-monotone penalty).
"""
import json
import os
import sys

import torch
from loguru import logger

from landingflow.config import Configurator, check_config, mlflow_config, numerics_config
from landingflow.config.config import EVENTS_LEVEL, close_sinks
from landingflow.exceptions import ConfigError, DimensionError, DomainError, IntegrationError, PreconditionError
from landingflow.flow_manager import IntegratorConfig, integrate, sweep
from landingflow.landing_logic import FieldKind, LandingParams
from landingflow.problems import builtin_problem, load_problem
from landingflow.trajectory_io import read_trajectory, write_trajectory
from landingflow.utils.mlflow_utils import end_run, initialize_mlflow, log_metrics, log_trajectory_metrics
from landingflow.validation_logic import CERTIFICATES, Status, probe_stability

EXIT_OK = 0
EXIT_CERTIFICATE_FAILED = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3

FIGURE_INITIAL_POINTS = {
    "inside": [[0.2], [0.5]],
    "outside": [[1.2], [1.4]],
}
FIGURE_NOTE = "The lambda grid, the two initial points, t_max and dt are defaults; override them with flags."


def _integrator_config(config):
    return IntegratorConfig(
        scheme=config.integrator.scheme,
        dt=config.integrator.dt,
        t_max=config.integrator.t_max,
        abs_tol=config.integrator.abs_tol,
        rel_tol=config.integrator.rel_tol,
        record_every=config.output.record_every,
        residual_tol=config.integrator.residual_tol,
    )


def _load_resolved(config):
    """Loads the problem, then resolves options with its 'run' section."""
    raw_seed = config.problem.seed
    problem = load_problem(config.problem.name or "linear21", seed=raw_seed)
    config = Configurator.resolve(config, problem.run)
    if raw_seed is None and "seed" in problem.run:
        problem = load_problem(config.problem.name, seed=config.problem.seed)
    config.problem.seed = problem.seed
    return problem, config


def _start_mlflow(config, role, **params):
    if not config.mlflow.active:
        return False
    mlflow_config.MLFLOW_ACTIVE = True
    return initialize_mlflow(
        role=role,
        mlflow_ui_url=mlflow_config.MLFLOW_UI_URL,
        experiment_name=mlflow_config.EXPERIMENT_NAME,
        **params,
    )


def _summary(trajectory):
    final = trajectory.final
    return f"f={final.f:.12g} N={final.penalty:.3e} ||Lambda||={final.residual:.3e} at t={final.t:.6g}"


def _run_flow(problem, config):
    params = LandingParams(lambda_=config.landing.lambda_)
    cfg = _integrator_config(config)
    X0 = problem.initial_point()
    metadata = {"problem": problem.name, "seed": problem.seed}
    return integrate(X0, config.landing.field, problem.objective, params, cfg, metadata=metadata)


def cmd_run(config):
    problem, config = _load_resolved(config)
    check_config(config)
    mlflow_on = _start_mlflow(
        config, "run", problem=problem.name, field=config.landing.field, lambda_=config.landing.lambda_
    )
    try:
        trajectory = _run_flow(problem, config)
        if mlflow_on:
            log_trajectory_metrics(trajectory)
    except IntegrationError as e:
        logger.error(f"Integration failed: {e}")
        if e.trajectory is not None and config.output.path:
            write_trajectory(config.output.path, e.trajectory, config.output.format)
        return EXIT_INTEGRATION
    finally:
        if mlflow_on:
            end_run()
    if config.output.path:
        fmt = write_trajectory(config.output.path, trajectory, config.output.format)
        logger.info(f"Wrote {len(trajectory)} samples to {config.output.path} ({fmt})")
    print(_summary(trajectory))
    logger.log(EVENTS_LEVEL, f"run {problem.name} ({trajectory.terminated_by.value}): {_summary(trajectory)}")
    return EXIT_OK


def _lambda_tag(lambda_):
    return repr(float(lambda_)).replace(".", "p")


def _first_time_below(trajectory, threshold):
    for sample in trajectory.samples:
        if sample.penalty <= threshold:
            return sample.t
    return None


def _write_cells(cells, out_dir, fmt, names):
    """Writes one trajectory file per cell; returns the manifest cell entries."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for cell in cells:
        filename = f"{names[cell.start_index]}_lambda{_lambda_tag(cell.lambda_)}.{fmt}"
        entry = {
            "lambda": cell.lambda_,
            "start": names[cell.start_index],
            "file": filename,
            "status": "ok" if cell.ok else type(cell.error).__name__,
        }
        if cell.trajectory is not None and len(cell.trajectory):
            write_trajectory(os.path.join(out_dir, filename), cell.trajectory, fmt)
            entry.update(
                {
                    "terminated_by": cell.trajectory.terminated_by.value,
                    "final_t": cell.trajectory.final.t,
                    "final_f": cell.trajectory.final.f,
                    "final_penalty": cell.trajectory.final.penalty,
                    "t_penalty_below_1e-4": _first_time_below(cell.trajectory, 1e-4),
                }
            )
        entries.append(entry)
    return entries


def _write_manifest(path, manifest):
    with open(path, "w") as file:
        json.dump(manifest, file, sort_keys=True, indent=2)
        file.write("\n")


def cmd_figure1(config):
    config = Configurator.resolve(config)
    check_config(config)
    problem = builtin_problem("linear21")
    lambdas = [float(lambda_) for lambda_ in config.figure.lambdas]
    names = list(FIGURE_INITIAL_POINTS)
    starts = [torch.tensor(FIGURE_INITIAL_POINTS[name], dtype=numerics_config.DTYPE) for name in names]
    cfg = IntegratorConfig(
        scheme=config.integrator.scheme,
        dt=config.figure.dt,
        t_max=config.figure.t_max,
        record_every=config.output.record_every,
    )
    fmt = config.output.format or "csv"
    cells = sweep(problem, lambdas, starts, FieldKind.LANDING, cfg, workers=config.sweep.workers, progress=not config.quiet)
    entries = _write_cells(cells, config.output.dir, fmt, [f"figure1_{name}" for name in names])
    manifest = {
        "figure": "landing flows on St(1, 2) minimizing <A, X>",
        "note": FIGURE_NOTE,
        "problem": problem.name,
        "A": [[1.0], [0.0]],
        "optimizer": problem.optimizer.tolist(),
        "lambdas": lambdas,
        "initial_points": FIGURE_INITIAL_POINTS,
        "scheme": cfg.scheme.value,
        "dt": cfg.dt,
        "t_max": cfg.t_max,
        "format": fmt,
        "cells": entries,
    }
    _write_manifest(os.path.join(config.output.dir, "figure1_manifest.json"), manifest)
    if _start_mlflow(config, "figure1", lambdas=lambdas):
        for step, entry in enumerate(entries):
            log_metrics(step, final_penalty=entry.get("final_penalty", float("nan")))
        end_run()
    failed = [cell for cell in cells if not cell.ok]
    logger.log(EVENTS_LEVEL, f"figure1: {len(cells) - len(failed)}/{len(cells)} cells written to {config.output.dir}")
    return EXIT_INTEGRATION if failed else EXIT_OK


def cmd_sweep(config):
    problem, config = _load_resolved(config)
    check_config(config)
    params = LandingParams(lambda_=config.landing.lambda_)
    cfg = _integrator_config(config)
    if config.sweep.starts < 1:
        raise ConfigError("--starts must be positive")
    starts = [problem.initial_point(seed=problem.seed + index) for index in range(config.sweep.starts)]
    fmt = config.output.format or "csv"
    cells = sweep(
        problem, config.sweep.lambdas, starts, config.landing.field, cfg, workers=config.sweep.workers,
        progress=not config.quiet,
    )
    names = [f"{problem.name}_start{index}" for index in range(len(starts))]
    entries = _write_cells(cells, config.output.dir, fmt, names)
    manifest = {
        "problem": problem.name,
        "seed": problem.seed,
        "field": FieldKind(config.landing.field).value,
        "lambdas": [float(lambda_) for lambda_ in config.sweep.lambdas],
        "starts": len(starts),
        "scheme": cfg.scheme.value,
        "t_max": cfg.t_max,
        "format": fmt,
        "optimal_value": problem.optimal_value,
        "cells": entries,
    }
    _write_manifest(os.path.join(config.output.dir, "sweep_manifest.json"), manifest)
    failed = [cell for cell in cells if not cell.ok]
    logger.log(EVENTS_LEVEL, f"sweep {problem.name}: {len(cells) - len(failed)}/{len(cells)} cells succeeded")
    return EXIT_INTEGRATION if failed else EXIT_OK


def cmd_certify(config):
    problem, config = _load_resolved(config)
    check_config(config)
    params = LandingParams(lambda_=config.landing.lambda_)
    if config.certify.trajectory:
        # CSV files carry no metadata; the run flags describe them
        metadata = None
        if not config.certify.trajectory.endswith(".json"):
            metadata = {"field": config.landing.field, "lambda": config.landing.lambda_}
        trajectory = read_trajectory(config.certify.trajectory, metadata=metadata)
    else:
        try:
            trajectory = _run_flow(problem, config)
        except IntegrationError as e:
            logger.error(f"Integration failed: {e}")
            return EXIT_INTEGRATION
        if config.output.path:
            write_trajectory(config.output.path, trajectory, config.output.format)

    reports = []
    for name in config.certify.certificates:
        if name == "stability":
            if problem.optimizer is None:
                raise ConfigError(f"Problem {problem.name} has no known optimizer to probe")
            reports.append(
                probe_stability(
                    problem.optimizer,
                    problem.objective,
                    params,
                    radius=config.certify.radius,
                    trials=config.certify.trials,
                    mode=config.certify.stability_mode,
                )
            )
        elif name == "gram":
            reports.append(CERTIFICATES[name]().validate(trajectory, params=None if config.certify.trajectory else params))
        elif name == "critical":
            obj = problem.objective if not config.certify.trajectory else None
            reports.append(CERTIFICATES[name]().validate(trajectory, obj=obj))
        else:
            reports.append(CERTIFICATES[name]().validate(trajectory))

    document = json.dumps([report.to_dict() for report in reports], sort_keys=True, indent=2)
    if config.certify.out:
        with open(config.certify.out, "w") as file:
            file.write(document + "\n")
    print(document)
    if _start_mlflow(config, "certify"):
        for step, report in enumerate(reports):
            log_metrics(step, **{f"{report.certificate}_pass": float(report.passed)})
        end_run()
    failed = [report.certificate for report in reports if report.status is Status.FAIL]
    logger.log(EVENTS_LEVEL, f"certify: {len(reports) - len(failed)}/{len(reports)} certificates not failed")
    return EXIT_CERTIFICATE_FAILED if failed else EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "figure1": cmd_figure1,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
}


def main(argv=None):
    tolerances = numerics_config.current()
    try:
        config = Configurator.combine_configs(argv)
        return COMMANDS[config.command](config)
    except (ConfigError, DimensionError, DomainError, PreconditionError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except IntegrationError as e:
        logger.error(f"Integration failed: {e}")
        return EXIT_INTEGRATION
    finally:
        numerics_config.override(**tolerances)
        mlflow_config.MLFLOW_ACTIVE = False
        close_sinks()


if __name__ == "__main__":
    sys.exit(main())
