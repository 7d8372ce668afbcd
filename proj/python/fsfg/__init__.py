"""Python facade over the C++ core.

The heavy lifting lives in the compiled ``_fsfg`` extension; this package
re-exports its operations under a stable name. The extension sits inside the
package in installed wheels and on the build tree's PYTHONPATH in dev runs.
"""

try:
    from ._fsfg import *  # noqa: F401,F403
except ImportError:
    from _fsfg import *  # noqa: F401,F403
