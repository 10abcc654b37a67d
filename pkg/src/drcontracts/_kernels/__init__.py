"""Settlement kernel selection.

Imports the compiled extension when available, otherwise the pure-numpy
fallback.  Set DRCONTRACTS_PURE_PYTHON=1 to force the fallback (used by the
benchmark and by tests comparing the two implementations).
"""

from __future__ import annotations

import os

from ._settlement_py import settle_trials as settle_trials_python

if os.environ.get("DRCONTRACTS_PURE_PYTHON", "") not in ("", "0"):
    settle_trials = settle_trials_python
    BACKEND = "python"
else:
    try:
        from ._settlement import settle_trials as settle_trials_compiled

        settle_trials = settle_trials_compiled
        BACKEND = "compiled"
    except ImportError:
        settle_trials = settle_trials_python
        BACKEND = "python"

__all__ = ["settle_trials", "settle_trials_python", "BACKEND"]
