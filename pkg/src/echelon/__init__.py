"""Scaled-space series and Kolmogorov-type normal forms."""
from .divisors import (
    DiophantineCert,
    divide_by_frequency,
    frequency_derivation,
    measure_fractions,
    min_small_divisor,
    siegel_divisors,
    small_divisor_series,
)
from .errors import (
    ConvergenceError,
    DegenerateError,
    EchelonError,
    FrequencyDriftError,
    ParseError,
    PreconditionError,
    ResonanceError,
    SignatureError,
)
from .kam import (
    average,
    homological_inverse,
    isochronic_check,
    kam_transversal_step,
    make_hamiltonian,
    poisson_bracket,
    singular_kam_step,
)
from .normal_form import (
    IterationTrace,
    Schedule,
    kolmogorov_iterate,
    morse_reduce,
    newton_iterate,
    picard_iterate,
    residual_bound,
    siegel_linearize,
    transversal_iterate,
)
from .numbers import GaussianRational, QuadraticSurd, parse_number
from .operators import (
    BoundProfile,
    Derivation,
    check_condition_E,
    compose_bound,
    estimate_bound,
    exp,
    infinite_product,
)
from .scales import MAJORANT, ScaleFamily, ScaleKind, norm_at
from .series import TruncatedSeries, compose, from_literal, to_literal

__all__ = [
    "BoundProfile", "ConvergenceError", "DegenerateError", "Derivation", "DiophantineCert",
    "EchelonError", "FrequencyDriftError", "GaussianRational", "IterationTrace", "MAJORANT",
    "ParseError", "PreconditionError", "QuadraticSurd", "ResonanceError", "ScaleFamily",
    "ScaleKind", "Schedule", "SignatureError", "TruncatedSeries", "average", "check_condition_E",
    "compose", "compose_bound", "divide_by_frequency", "estimate_bound", "exp",
    "frequency_derivation", "from_literal", "homological_inverse", "infinite_product",
    "isochronic_check", "kam_transversal_step", "kolmogorov_iterate", "make_hamiltonian",
    "measure_fractions", "min_small_divisor", "morse_reduce", "newton_iterate", "norm_at",
    "parse_number", "picard_iterate", "poisson_bracket", "residual_bound", "siegel_divisors",
    "siegel_linearize", "singular_kam_step", "small_divisor_series", "to_literal",
    "transversal_iterate",
]
