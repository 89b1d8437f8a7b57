"""Kernel backend selection.

Tries the compiled extension first and falls back to the pure numpy
reference.  Override with HMFG_KERNELS=compiled|pure|auto (auto is the
default; "compiled" raises if the extension is missing so CI can assert
the build actually happened).
"""

from __future__ import annotations

import importlib
import os

from . import pure

_choice = os.environ.get("HMFG_KERNELS", "auto").lower()
if _choice not in ("auto", "compiled", "pure"):
    raise ValueError(f"HMFG_KERNELS must be auto, compiled or pure, got {_choice!r}")

_core = None
if _choice in ("auto", "compiled"):
    try:
        _core = importlib.import_module("hmfg._kernels._core")
    except ImportError:
        if _choice == "compiled":
            raise

COMPILED = _core is not None

cost_value = pure.cost_value
cost_grad = pure.cost_grad


def backend():
    return "compiled" if COMPILED else "pure"


def pmp_integrate(x0, p0, t0, dt, steps, eps, gamma, fpack, store_path=True):
    if _core is None:
        return pure.pmp_integrate(x0, p0, t0, dt, steps, eps, gamma, fpack, store_path)
    return _core.pmp_integrate(
        x0, p0, t0, dt, steps, eps, gamma,
        fpack["kinds"], fpack["params"], fpack["conv"], fpack["conv_par"],
        fpack["conv_pos"], fpack["conv_w"],
        fpack["tab_dt"], fpack["tab_v"], fpack["tab_d1"], fpack["tab_d2"],
        store_path,
    )


def hjb_sweep(u_next, flags_next, L, dt, eps, controls, ctrl_cost, f_node, u_out, flags_out):
    fn = _core.hjb_sweep if _core is not None else pure.hjb_sweep
    fn(u_next, flags_next, L, dt, eps, controls, ctrl_cost, f_node, u_out, flags_out)
