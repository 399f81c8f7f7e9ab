"""Pullback metrics and geodesics on hyperbolic GP latent spaces."""

from ._hypepull import *  # noqa: F401,F403
from ._hypepull import __version__  # noqa: F401
