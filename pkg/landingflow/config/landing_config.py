"""
Argument adders, one per concern. Destinations are dotted (``integrator.dt``)
and default to None; ``Configurator`` nests them and fills in DEFAULTS after
the problem file's "run" section, giving CLI > spec file > defaults.
"""
from landingflow.config import numerics_config

DEFAULTS = {
    "problem.name": "linear21",
    "problem.seed": 0,
    "landing.field": "landing",
    "landing.lambda_": 1.0,
    "integrator.scheme": "rk4",
    "integrator.dt": None,
    "integrator.t_max": 10.0,
    "integrator.abs_tol": 1e-10,
    "integrator.rel_tol": 1e-8,
    "integrator.residual_tol": None,
    "output.path": None,
    "output.format": None,
    "output.record_every": 1,
    "output.dir": "figure1",
    "figure.lambdas": [0.25, 1.0, 4.0],
    "figure.t_max": 60.0,
    "figure.dt": 0.01,
    "sweep.lambdas": [0.25, 1.0, 4.0],
    "sweep.starts": 4,
    "sweep.workers": None,
    "certify.trajectory": None,
    "certify.certificates": ["gram", "critical"],
    "certify.out": None,
    "certify.radius": 0.1,
    "certify.trials": 20,
    "certify.stability_mode": "point",
    "logging.level": "INFO",
    "logging.events_dir": None,
    "logging.events_retention_size": "100 MB",
    "mlflow.active": False,
    "quiet": False,
}

# keys accepted in a problem file's "run" section
RUN_KEYS = {
    "field": "landing.field",
    "lambda": "landing.lambda_",
    "integrator": "integrator.scheme",
    "dt": "integrator.dt",
    "tmax": "integrator.t_max",
    "abs_tol": "integrator.abs_tol",
    "rel_tol": "integrator.rel_tol",
    "residual_tol": "integrator.residual_tol",
    "record_every": "output.record_every",
    "format": "output.format",
    "seed": "problem.seed",
}


def add_problem_args(parser):
    parser.add_argument(
        "--problem",
        "--problem.name",
        dest="problem.name",
        type=str,
        help="Builtin problem (linear21, linear, procrustes, rayleigh, constant) or a JSON problem file.",
    )
    parser.add_argument("--seed", "--problem.seed", dest="problem.seed", type=int, help="Seed of the instance and start.")


def add_landing_args(parser):
    parser.add_argument(
        "--field", "--landing.field", dest="landing.field", choices=["landing", "plam"], help="Vector field to integrate."
    )
    parser.add_argument("--lambda", "--landing.lambda", dest="landing.lambda_", type=float, help="Penalty weight lambda > 0.")


def add_integrator_args(parser):
    parser.add_argument(
        "--integrator",
        "--integrator.scheme",
        dest="integrator.scheme",
        choices=["euler", "rk4", "rkf45"],
        help="Integration scheme (default rk4).",
    )
    parser.add_argument("--dt", "--integrator.dt", dest="integrator.dt", type=float, help="Step size (default 0.01/lambda).")
    parser.add_argument("--tmax", "--integrator.t_max", dest="integrator.t_max", type=float, help="Final time.")
    parser.add_argument("--integrator.abs_tol", dest="integrator.abs_tol", type=float, help="rkf45 absolute tolerance.")
    parser.add_argument("--integrator.rel_tol", dest="integrator.rel_tol", type=float, help="rkf45 relative tolerance.")
    parser.add_argument(
        "--integrator.residual_tol",
        dest="integrator.residual_tol",
        type=float,
        help="Stop once ||field(X)||_F drops to this value (default 1e-8).",
    )


def add_output_args(parser):
    parser.add_argument("--out", "--output.path", dest="output.path", type=str, help="Trajectory output file.")
    parser.add_argument(
        "--format", "--output.format", dest="output.format", choices=["csv", "json"], help="Trajectory file format."
    )
    parser.add_argument(
        "--record-every", "--output.record_every", dest="output.record_every", type=int, help="Record every k-th step."
    )


def add_output_dir_args(parser):
    parser.add_argument("--out-dir", "--output.dir", dest="output.dir", type=str, help="Directory for the cell files.")
    parser.add_argument(
        "--format", "--output.format", dest="output.format", choices=["csv", "json"], help="Trajectory file format."
    )
    parser.add_argument(
        "--record-every", "--output.record_every", dest="output.record_every", type=int, help="Record every k-th step."
    )


def add_figure_args(parser):
    parser.add_argument("--lambdas", "--figure.lambdas", dest="figure.lambdas", type=float, nargs="+", help="Lambda grid.")
    parser.add_argument("--tmax", "--figure.t_max", dest="figure.t_max", type=float, help="Final time of every cell.")
    parser.add_argument("--dt", "--figure.dt", dest="figure.dt", type=float, help="Step size shared by every cell.")
    parser.add_argument(
        "--integrator",
        "--integrator.scheme",
        dest="integrator.scheme",
        choices=["euler", "rk4", "rkf45"],
        help="Integration scheme (default rk4).",
    )
    parser.add_argument("--workers", "--sweep.workers", dest="sweep.workers", type=int, help="Parallel cells.")


def add_sweep_args(parser):
    parser.add_argument("--lambdas", "--sweep.lambdas", dest="sweep.lambdas", type=float, nargs="+", help="Lambda grid.")
    parser.add_argument("--starts", "--sweep.starts", dest="sweep.starts", type=int, help="Seeded initial points per lambda.")
    parser.add_argument("--workers", "--sweep.workers", dest="sweep.workers", type=int, help="Parallel cells.")


def add_certify_args(parser):
    parser.add_argument(
        "--trajectory", "--certify.trajectory", dest="certify.trajectory", type=str, help="Trajectory file to certify."
    )
    parser.add_argument(
        "--certificates",
        "--certify.certificates",
        dest="certify.certificates",
        nargs="+",
        choices=["gram", "critical", "monotone", "invariance", "stability"],
        help="Certificates to evaluate.",
    )
    parser.add_argument("--report", "--certify.out", dest="certify.out", type=str, help="Write the JSON reports here.")
    parser.add_argument("--radius", "--certify.radius", dest="certify.radius", type=float, help="Stability probe radius.")
    parser.add_argument("--trials", "--certify.trials", dest="certify.trials", type=int, help="Stability probe trials.")
    parser.add_argument(
        "--stability-mode",
        "--certify.stability_mode",
        dest="certify.stability_mode",
        choices=["point", "subspace"],
        help="Compare endpoints pointwise or up to O(p).",
    )


def add_logging_args(parser):
    parser.add_argument(
        "--logging.level",
        dest="logging.level",
        choices=["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR"],
        help="Console log level.",
    )
    parser.add_argument("--logging.events_dir", dest="logging.events_dir", type=str, help="Write events.log here.")
    parser.add_argument(
        "--logging.events_retention_size", dest="logging.events_retention_size", type=str, help="Events log rotation size."
    )
    parser.add_argument("--quiet", dest="quiet", action="store_true", default=None, help="Warnings only, no progress bars.")


def add_mlflow_args(parser):
    parser.add_argument("--mlflow", dest="mlflow.active", action="store_true", default=None, help="Log metrics to MLflow.")


def add_numerics_args(parser):
    for name in numerics_config.TOLERANCE_NAMES:
        parser.add_argument(
            f"--numerics.{name.lower()}",
            dest=f"numerics.{name.lower()}",
            type=float,
            help=f"Override {name} (default {getattr(numerics_config, name)}).",
        )
