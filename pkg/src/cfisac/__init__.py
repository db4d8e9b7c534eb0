"""Joint BS mode selection, beamforming and receive filtering for cell-free ISAC."""

from .exceptions import (InfeasibleConstraintsError, InvalidConfigError, ISACError,
                         ModeInfeasibleError)
from .model import Beamformer, FilterBank, ModeVector
from .scenario import NetworkConfig, Scenario, generate_scenario

__version__ = "0.1.0"
