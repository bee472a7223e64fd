"""Numerical tolerances and fit thresholds, centralized.

Every module pulls its comparison thresholds from the single `TOLS` record
below so that property tests have one knob to turn.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    #: entrywise absolute tolerance for matrix equality
    entry_eq: float = 1e-12
    #: max allowed |rho - rho^dagger| entry for states
    hermiticity: float = 1e-10
    #: max allowed |tr(rho) - 1|
    trace: float = 1e-10
    #: eigenvalue floor for accepting a state as positive semidefinite
    psd_floor: float = -1e-10
    #: looser floor used when checking states produced by long pipelines
    psd_floor_loose: float = -1e-9
    #: max allowed ||U^dagger U - I||_max for propagators
    unitarity: float = 1e-10
    #: imaginary part allowed when casting an expectation value to real
    expectation_imag: float = 1e-10
    #: |f| may exceed 1 by at most this much (floating-point slack)
    coherence_overshoot: float = 1e-9


TOLS = Tolerances()

#: decay samples below this magnitude are treated as noise floor by fitters
FIT_FLOOR = 0.05

#: minimum number of admissible samples for a log-linear decay fit
FIT_MIN_POINTS = 8

#: below this kick half-range the sinc factor switches to its Taylor series
THETA_SERIES_CUTOFF = 1e-6
