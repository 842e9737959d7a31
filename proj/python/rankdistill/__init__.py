"""Ranking distillation for top-N recommendation."""

from ._rankdistill import *  # noqa: F401,F403
from ._rankdistill import (  # noqa: F401
    ConfigError,
    IoError,
    NumericError,
    RankDistillError,
)

__all__ = [name for name in dir() if not name.startswith("_")]
