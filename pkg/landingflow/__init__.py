__version__ = "0.1.0"

from . import linalg
from . import geometry
from . import landing_logic
from . import flow_manager
from . import problems
from . import validation_logic
from . import trajectory_io
