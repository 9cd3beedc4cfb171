"""Message-passing block sparse Bayesian learning and its deep-unfolded variant
for joint activity detection and channel estimation in grant-free NORA."""

from .config import SystemConfig, load_config, parse_config
from .errors import MpbsblError
from .pilots import build_system

__all__ = ["SystemConfig", "load_config", "parse_config", "MpbsblError", "build_system"]
__version__ = "0.1.0"
