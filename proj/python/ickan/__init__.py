"""Input-convex Kolmogorov-Arnold networks (Python bindings).

The heavy lifting lives in the C++ core; this package re-exports the
pybind11 module. Build the extension via scikit-build-core
(``pip install -e . --no-build-isolation``) or point ``PYTHONPATH`` at a
CMake build tree that contains ``_core``.
"""

try:
    from ickan._core import *  # noqa: F401,F403
    from ickan._core import Model, Hypercube  # noqa: F401
except ImportError:  # running against a plain CMake build tree
    import os
    import sys

    _core_dir = os.environ.get("ICKAN_CORE_DIR")
    if _core_dir:
        sys.path.insert(0, _core_dir)
    from _core import *  # noqa: F401,F403
    from _core import Model, Hypercube  # noqa: F401
