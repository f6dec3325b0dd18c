"""Thresholds, periodic orbits and monodromy, elliptic functions, physical parameters."""
from .elliptic import complete_K, cubic_orbit_amplitude, jacobi_elliptic
from .floquet import MonodromyResult, find_periodic_orbit, floquet_mu, monodromy
from .thresholds import (
    ThresholdEstimate, analytic_threshold_spin_orbit, cubic_threshold_reference,
    empirical_threshold, theta0_from_C,
)
