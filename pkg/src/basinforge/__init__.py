"""Basins of attraction of forced dissipative oscillators."""
from .models import (
    PhaseState, Constant, LinearRamp, ExpRamp, CubicParams, SpinOrbitParams,
    FourierPolynomial, make_schedule, damping_at, damping_integral, energy_I,
    global_attraction_bound,
)
from .integrate import IntegratorConfig, Method, integrate_to
from .classify import (
    ClassifierConfig, Origin, Resonance, Unclassified, classify, cluster_variants,
    detect_period, strobe, transient_time, winding_count,
)

__version__ = "0.1.0"
