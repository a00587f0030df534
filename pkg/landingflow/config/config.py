import os
import sys
from argparse import ArgumentParser, Namespace

from loguru import logger

from landingflow.config import numerics_config
from landingflow.exceptions import ConfigError
from .landing_config import (
    DEFAULTS,
    RUN_KEYS,
    add_certify_args,
    add_figure_args,
    add_integrator_args,
    add_landing_args,
    add_logging_args,
    add_mlflow_args,
    add_numerics_args,
    add_output_args,
    add_output_dir_args,
    add_problem_args,
    add_sweep_args,
)

EVENTS_LEVEL = "EVENTS"

_installed_sinks = []


class ConfigParser(ArgumentParser):
    """ArgumentParser that raises ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(message)


def _nest(flat):
    """{"a.b": 1, "c": 2} -> Namespace(a=Namespace(b=1), c=2)"""
    root = Namespace()
    for key, value in sorted(flat.items()):
        node = root
        *parents, leaf = key.split(".")
        for part in parents:
            if not hasattr(node, part):
                setattr(node, part, Namespace())
            node = getattr(node, part)
        setattr(node, leaf, value)
    return root


def _flatten(config, prefix=""):
    flat = {}
    for key, value in vars(config).items():
        if isinstance(value, Namespace):
            flat.update(_flatten(value, f"{prefix}{key}."))
        else:
            flat[f"{prefix}{key}"] = value
    return flat


def get(config, dotted, default=None):
    node = config
    for part in dotted.split("."):
        if not hasattr(node, part):
            return default
        node = getattr(node, part)
    return node


class Configurator:
    SUBCOMMANDS = ("run", "figure1", "certify", "sweep")

    @staticmethod
    def build_parser():
        parser = ConfigParser(
            prog="landingflow",
            description="Landing flows on the Stiefel manifold. Precedence: CLI flags > problem file 'run' section > defaults.",
        )
        subparsers = parser.add_subparsers(dest="command", parser_class=ConfigParser)

        run = subparsers.add_parser("run", help="Integrate one flow and write its trajectory.")
        add_problem_args(run)
        add_landing_args(run)
        add_integrator_args(run)
        add_output_args(run)

        figure = subparsers.add_parser("figure1", help="Landing trajectories on St(1, 2) for a lambda grid.")
        add_figure_args(figure)
        add_output_dir_args(figure)

        certify = subparsers.add_parser("certify", help="Evaluate certificates on a trajectory or a fresh run.")
        add_certify_args(certify)
        add_problem_args(certify)
        add_landing_args(certify)
        add_integrator_args(certify)
        add_output_args(certify)

        sweep = subparsers.add_parser("sweep", help="Lambda grid x seeded starts, run concurrently.")
        add_problem_args(sweep)
        add_landing_args(sweep)
        add_integrator_args(sweep)
        add_sweep_args(sweep)
        add_output_dir_args(sweep)

        for subparser in (run, figure, certify, sweep):
            add_logging_args(subparser)
            add_mlflow_args(subparser)
            add_numerics_args(subparser)
        return parser

    @staticmethod
    def combine_configs(argv=None):
        """
        Parses ``argv`` into a nested namespace (``config.integrator.dt``).
        Unset options stay None until ``Configurator.resolve``.
        """
        parser = Configurator.build_parser()
        args = parser.parse_args(argv)
        if args.command is None:
            raise ConfigError(f"Missing subcommand; expected one of {Configurator.SUBCOMMANDS}")
        return _nest(vars(args))

    @staticmethod
    def resolve(config, run_section=None):
        """
        Fills every None option from the problem file's "run" section, then DEFAULTS.
        """
        flat = _flatten(config)
        from_file = {}
        for key, value in (run_section or {}).items():
            if key not in RUN_KEYS:
                raise ConfigError(f"Unknown key {key!r} in the 'run' section; expected one of {sorted(RUN_KEYS)}")
            from_file[RUN_KEYS[key]] = value
        for key, default in DEFAULTS.items():
            if flat.get(key) is None:
                flat[key] = from_file.get(key, default)
        return _nest(flat)


def _ensure_events_level():
    try:
        logger.level(EVENTS_LEVEL)
    except ValueError:
        logger.level(EVENTS_LEVEL, no=38, icon="📝")


def check_config(config):
    r"""Checks/validates the config namespace object, installs the log sinks and applies tolerance overrides."""
    for sink_id in _installed_sinks:
        try:
            logger.remove(sink_id)
        except ValueError:
            pass
    _installed_sinks.clear()
    try:
        logger.remove(0)
    except ValueError:
        pass

    _ensure_events_level()
    level = "WARNING" if get(config, "quiet") else get(config, "logging.level", "INFO")
    _installed_sinks.append(logger.add(sys.stderr, level=level))

    events_dir = get(config, "logging.events_dir")
    if events_dir:
        full_path = os.path.expanduser(events_dir)
        os.makedirs(full_path, exist_ok=True)
        _installed_sinks.append(
            logger.add(
                os.path.join(full_path, "events.log"),
                rotation=get(config, "logging.events_retention_size", "100 MB"),
                serialize=True,
                enqueue=True,
                backtrace=False,
                diagnose=False,
                level=EVENTS_LEVEL,
                format="{time:YYYY-MM-DD at HH:mm:ss} | {level} | {message}",
            )
        )

    overrides = {
        name: value
        for name, value in vars(get(config, "numerics", Namespace())).items()
        if value is not None
    }
    if overrides:
        try:
            numerics_config.override(**overrides)
        except (KeyError, ValueError) as e:
            raise ConfigError(str(e))
        logger.debug(f"Tolerance overrides: {overrides}")

    lambda_ = get(config, "landing.lambda_")
    if lambda_ is not None and not float(lambda_) > 0:
        raise ConfigError(f"lambda must be positive, got {lambda_}")
    return config


def close_sinks():
    """Flushes enqueued sinks; call before the process exits."""
    logger.complete()
