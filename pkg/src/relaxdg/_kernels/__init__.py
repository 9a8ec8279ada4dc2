"""Backend selection for the hot chemistry kernels.

The compiled Cython core is preferred when importable; the vectorized numpy
reference implementation is the fallback and the semantic ground truth.
Set ``RELAXDG_PURE_PYTHON=1`` to force the fallback (used by the parity
tests and the benchmark).
"""

import os

from . import reference

_KERNEL_NAMES = (
    "primitive",
    "flux",
    "wave_speed",
    "log_equilibrium_ratio",
    "dlog_equilibrium_ratio_dT",
    "forward_rate",
    "reaction_rate",
    "source",
    "entropy",
    "entropy_flux",
    "entropy_grad",
    "affinity",
    "maxwellian",
)

BACKEND = "python"
_impl = reference

if os.environ.get("RELAXDG_PURE_PYTHON", "") != "1":
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = reference


def _bind(name):
    return getattr(_impl, name, None) or getattr(reference, name)


primitive = _bind("primitive")
flux = _bind("flux")
wave_speed = _bind("wave_speed")
log_equilibrium_ratio = _bind("log_equilibrium_ratio")
dlog_equilibrium_ratio_dT = _bind("dlog_equilibrium_ratio_dT")
forward_rate = _bind("forward_rate")
reaction_rate = _bind("reaction_rate")
source = _bind("source")
entropy = _bind("entropy")
entropy_flux = _bind("entropy_flux")
entropy_grad = _bind("entropy_grad")
affinity = _bind("affinity")
maxwellian = _bind("maxwellian")
