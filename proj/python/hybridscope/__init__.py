"""Python bindings for the hybridscope C++ library."""

from ._hybridscope import *  # noqa: F401,F403
from ._hybridscope import __doc__  # noqa: F401
