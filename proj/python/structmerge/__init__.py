from structmerge._core import *  # noqa: F401,F403
from structmerge._core import __version__  # noqa: F401
