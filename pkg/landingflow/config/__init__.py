from .landing_config import *
from .config import Configurator, check_config
