"""Numeric kernels with a compiled fast path and a pure-Python fallback.

The compiled extension is optional.  Set ``LINEUPDX_PURE=1`` to force the
pure-Python implementation even when the extension is available; ``BACKEND``
records which one is active.
"""

import os

__all__ = [
    "BACKEND",
    "reg_gamma_p",
    "reg_gamma_q",
    "reg_beta",
    "normal_sf",
    "normal_ppf",
    "normal_ppf_vec",
    "poisson_binomial_tail",
]

BACKEND = "pure"

if os.environ.get("LINEUPDX_PURE", "") != "1":
    try:
        from ._speedups import (  # noqa: F401
            reg_gamma_p,
            reg_gamma_q,
            reg_beta,
            normal_sf,
            normal_ppf,
            normal_ppf_vec,
            poisson_binomial_tail,
        )

        BACKEND = "compiled"
    except ImportError:
        pass

if BACKEND == "pure":
    from .pure import (  # noqa: F401
        reg_gamma_p,
        reg_gamma_q,
        reg_beta,
        normal_sf,
        normal_ppf,
        normal_ppf_vec,
        poisson_binomial_tail,
    )
