"""fracheat: a desk-scale numerical laboratory for fractional heat type
operators, the degenerate weighted extension problem, and the associated
Lorentz/Dini real-analysis toolkit and regularity probes."""

__version__ = "0.1.0"

from .kernels import (
    FracParams,
    QuadratureSpec,
    heat_kernel,
    subordination_constant,
    dtn_constant,
    frac_heat_apply,
)

__all__ = [
    "FracParams",
    "QuadratureSpec",
    "heat_kernel",
    "subordination_constant",
    "dtn_constant",
    "frac_heat_apply",
    "__version__",
]
