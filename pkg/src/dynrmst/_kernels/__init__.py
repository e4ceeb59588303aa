"""Kernel backend selection.

The compiled extension is preferred when it built; the numpy fallback is
semantically identical.  Set ``DYNRMST_PURE_PYTHON=1`` to force the
fallback (used by the benchmark and the backend-equivalence tests).
"""

import os

if os.environ.get("DYNRMST_PURE_PYTHON") == "1":
    from ._py import BACKEND, concordance_stats, jackknife_pseudo
else:
    try:
        from ._speedups import BACKEND, concordance_stats, jackknife_pseudo
    except ImportError:
        from ._py import BACKEND, concordance_stats, jackknife_pseudo

__all__ = ["BACKEND", "jackknife_pseudo", "concordance_stats"]
