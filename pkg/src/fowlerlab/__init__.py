"""Phase-plane and shooting workbench for radial elliptic equations in Fowler variables.

Modules, bottom-up: ``params`` (exponent algebra), ``fowler`` (the planar
systems), ``integrate`` (adaptive Dormand-Prince with events; compiled kernel
when available, pure Python otherwise), ``manifolds`` (equilibria, energy,
invariant manifolds), ``shooting`` (classification and the D_k / L_k search)
and ``cli``.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketNotFound,
    BudgetExhausted,
    DegenerateCrossing,
    DomainError,
    FowlerError,
    RegimeError,
    SeedOverflow,
    StepFailure,
    Unresolved,
)
from .fowler import Nonlinearity, PiecewiseSystem, Side  # noqa: E402
from .integrate import backend_name, integrate  # noqa: E402
from .manifolds import equilibria, trace_manifold  # noqa: E402
from .params import ProblemConfig, critical_exponents, derive_exponent_set  # noqa: E402
from .shooting import find_structure, scaling_report, solve_radial  # noqa: E402

__all__ = [
    "BracketNotFound", "BudgetExhausted", "DegenerateCrossing", "DomainError", "FowlerError",
    "Nonlinearity", "PiecewiseSystem", "ProblemConfig", "RegimeError", "SeedOverflow", "Side",
    "StepFailure", "Unresolved", "backend_name", "critical_exponents", "derive_exponent_set",
    "equilibria", "find_structure", "integrate", "scaling_report", "solve_radial", "trace_manifold",
]
