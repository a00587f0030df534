import os
import platform

import mlflow
import psutil
from loguru import logger

from landingflow import __version__ as VERSION


def get_memory_usage():
    """
    Retrieves the current memory usage of this process.

    Returns:
        float: resident set size in megabytes.
    """
    memory_info = psutil.Process().memory_info()
    return round(memory_info.rss / 1024**2, 2)


def initialize_mlflow(role, mlflow_ui_url, experiment_name, run_name=None, **params):
    """
    Starts an MLflow run and logs the run parameters.

    Never raises: an unreachable tracking server only costs the metrics.

    Returns:
        bool: whether a run was started.
    """
    try:
        os.environ["MLFLOW_START_RETRY_ATTEMPT_MAX"] = "2"
        mlflow.set_tracking_uri(mlflow_ui_url)
        mlflow.set_experiment(experiment_name)
        mlflow.start_run(run_name=run_name or role)
        mlflow.log_param("role", role)
        mlflow.log_param("Version of Code", VERSION)
        mlflow.log_param("host", platform.node())
        for name, value in params.items():
            mlflow.log_param(name, value)
        return True
    except Exception as e:
        logger.error(f"Failed to initialize and log parameters to MLflow: {e}")
        return False


def log_metrics(step, **metrics):
    """
    Logs given metrics to MLflow at the provided step.

    Args:
        step (int): sample index.
        **metrics: metric name -> value.
    """
    try:
        for metric_name, metric_value in metrics.items():
            mlflow.log_metric(metric_name, metric_value, step=step)
    except Exception as e:
        logger.error(f"Failed to log metrics to MLflow, run continues: {e}")


def log_trajectory_metrics(trajectory, prefix=""):
    """Logs f, penalty and residual of every trajectory sample."""
    for step, sample in enumerate(trajectory.samples):
        log_metrics(
            step,
            **{
                f"{prefix}f": sample.f,
                f"{prefix}penalty": sample.penalty,
                f"{prefix}residual": sample.residual,
            },
        )
    log_metrics(len(trajectory.samples), **{f"{prefix}memory_mb": get_memory_usage()})


def end_run():
    try:
        mlflow.end_run()
    except Exception as e:
        logger.error(f"Failed to close the MLflow run: {e}")
