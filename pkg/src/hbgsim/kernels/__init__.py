"""Numeric kernel selection.

The Cython extension is preferred when it built; the pure Python twin is the
fallback and the reference. Set HBGSIM_PURE=1 to force the fallback (used by
the kernel benchmark and the cross-checking tests). Both implementations are
kept operation-for-operation identical, so traces do not depend on which one
is active.
"""

import os

BACKEND = "pure"
if not os.environ.get("HBGSIM_PURE"):
    try:
        from ._speedups import derivatives, eval_pass, run, step  # noqa: F401

        BACKEND = "compiled"
    except ImportError:
        pass
if BACKEND == "pure":
    from ._pure import derivatives, eval_pass, run, step  # noqa: F401

EULER = 0
RK4 = 1
