"""Quasilinear analysis of feedback loops with a bivariate saturating actuator."""

from ._core import *  # noqa: F401,F403
from ._core import ConfigError, QlcError

__all__ = [name for name in dir() if not name.startswith("_")]
