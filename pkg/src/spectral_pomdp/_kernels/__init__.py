"""Kernel backend selection.

Tries the compiled extension first and falls back to the pure-python
implementations. Set SPECTRAL_POMDP_FORCE_FALLBACK=1 to skip the extension,
which is mainly useful for the parity tests and the benchmark.
"""

import os

if os.environ.get("SPECTRAL_POMDP_FORCE_FALLBACK") == "1":
    from spectral_pomdp._kernels._fallback import (
        BACKEND,
        em_accumulate,
        pouct_plan,
        simulate_steps,
    )
else:
    try:
        from spectral_pomdp._native import (
            BACKEND,
            em_accumulate,
            pouct_plan,
            simulate_steps,
        )
    except ImportError:
        from spectral_pomdp._kernels._fallback import (
            BACKEND,
            em_accumulate,
            pouct_plan,
            simulate_steps,
        )

__all__ = ["BACKEND", "simulate_steps", "em_accumulate", "pouct_plan"]
