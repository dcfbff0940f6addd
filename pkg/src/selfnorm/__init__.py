"""Self-normalized sums: statistics, tail approximations, block schemes and simulation."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
