"""Weakly supervised screening over bags of segmented cells."""

try:
    from ._millie import *  # noqa: F401,F403
    from ._millie import __version__  # noqa: F401
except ImportError:  # build-tree layout: extension lives next to the package
    from _millie import *  # noqa: F401,F403
    from _millie import __version__  # noqa: F401
