"""Vector fields, damping laws and model-level diagnostics.

Two models are provided:

* the parametrically driven cubic oscillator
  ``q'' + (1 + eps cos t) q**3 + gamma(t) q' = 0`` on the plane, and
* the spin-orbit model
  ``theta'' = 2 eps sum_k a_k(e) sin(2 theta - k t) - gamma(t) (theta' - 1)``
  with the angle kept on its lift to the real line.

Time is dimensionless with forcing period ``2 pi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

MODEL_CUBIC = 0
MODEL_SPINORBIT = 1

SCHED_CONSTANT = 0
SCHED_LINEAR = 1
SCHED_EXP = 2


@dataclass(frozen=True)
class PhaseState:
    q: float
    v: float
    t: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.v) and math.isfinite(self.t)):
            raise ValueError(f"non-finite phase state {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.v], dtype=np.float64)


# ---------------------------------------------------------------------------
# damping schedules


@dataclass(frozen=True)
class Constant:
    gamma0: float

    kind = SCHED_CONSTANT
    delta = 0.0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be > 0")

    @property
    def T0(self) -> float:
        return 0.0


@dataclass(frozen=True)
class _Ramp:
    gamma0: float
    delta: float

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be > 0")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")

    @property
    def T0(self) -> float:
        return self.delta / self.gamma0


@dataclass(frozen=True)
class LinearRamp(_Ramp):
    """gamma0 * t / T0 up to the knee T0 = delta / gamma0, then gamma0."""

    kind = SCHED_LINEAR


@dataclass(frozen=True)
class ExpRamp(_Ramp):
    """gamma0 * (1 - exp(-t / T0)) with T0 = delta / gamma0."""

    kind = SCHED_EXP


DampingSchedule = Union[Constant, LinearRamp, ExpRamp]

# fraction of gamma0 an exponential ramp must reach before it counts as settled
EXP_SETTLED_FRACTION = 0.99


def damping_at(schedule: DampingSchedule, t: float) -> float:
    if t < 0:
        raise ValueError("damping_at needs t >= 0")
    g0, T0 = schedule.gamma0, schedule.T0
    if schedule.kind == SCHED_CONSTANT or T0 == 0.0:
        return g0
    if schedule.kind == SCHED_LINEAR:
        return g0 * t / T0 if t < T0 else g0
    return g0 * -math.expm1(-t / T0)


def damping_integral(schedule: DampingSchedule, t0: float, t1: float) -> float:
    """Exact value of the integral of gamma(t) over [t0, t1]."""

    def primitive(t):
        g0, T0 = schedule.gamma0, schedule.T0
        if schedule.kind == SCHED_CONSTANT or T0 == 0.0:
            return g0 * t
        if schedule.kind == SCHED_LINEAR:
            if t < T0:
                return 0.5 * g0 * t * t / T0
            return 0.5 * g0 * T0 + g0 * (t - T0)
        return g0 * (t + T0 * math.expm1(-t / T0))

    return primitive(t1) - primitive(t0)


def settle_time(schedule: DampingSchedule) -> float:
    """Time after which gamma(t) may be treated as its final value."""
    if schedule.kind == SCHED_CONSTANT or schedule.T0 == 0.0:
        return 0.0
    if schedule.kind == SCHED_LINEAR:
        return schedule.T0
    return -schedule.T0 * math.log(1.0 - EXP_SETTLED_FRACTION)


def make_schedule(kind: str, gamma0: float, delta: float = 0.0) -> DampingSchedule:
    kind = kind.lower()
    if kind in ("constant", "const"):
        return Constant(gamma0)
    if kind in ("linear", "linearramp", "ramp"):
        return LinearRamp(gamma0, delta)
    if kind in ("exp", "expramp", "exponential"):
        return ExpRamp(gamma0, delta)
    raise ValueError(f"unknown schedule kind {kind!r}")


def schedule_name(schedule: DampingSchedule) -> str:
    return {SCHED_CONSTANT: "constant", SCHED_LINEAR: "linear", SCHED_EXP: "exp"}[schedule.kind]


# ---------------------------------------------------------------------------
# spin-orbit potential coefficients

# a_k(e) as {power of e: rational coefficient}, truncated at e**5
_A_COEFFS: dict[int, dict[int, Fraction]] = {
    1: {1: Fraction(1, 4), 3: Fraction(-1, 32), 5: Fraction(5, 768)},
    2: {0: Fraction(1, 2), 2: Fraction(-5, 4), 4: Fraction(13, 32)},
    3: {1: Fraction(-7, 4), 3: Fraction(123, 32), 5: Fraction(-489, 256)},
    4: {2: Fraction(17, 4), 4: Fraction(-115, 12)},
    5: {3: Fraction(-845, 96), 5: Fraction(32525, 1536)},
    6: {4: Fraction(533, 32)},
    7: {5: Fraction(-228347, 7680)},
    -1: {3: Fraction(-1, 96), 5: Fraction(-11, 1536)},
    -2: {4: Fraction(1, 48)},
    -3: {5: Fraction(-81, 2560)},
}

HARMONICS = tuple(range(-3, 8))  # k = -3..7; a_0 is identically zero


@dataclass(frozen=True)
class FourierPolynomial:
    """Coefficients a_k(e) of g(theta, t) = sum_k a_k cos(2 theta - k t)."""

    e: float
    values: dict[int, float] = field(init=False, repr=False)

    def __post_init__(self):
        ex = Fraction(self.e)
        vals = {}
        for k in HARMONICS:
            poly = _A_COEFFS.get(k, {})
            vals[k] = float(sum((c * ex**n for n, c in poly.items()), Fraction(0)))
        object.__setattr__(self, "values", vals)

    def __getitem__(self, k: int) -> float:
        return self.values.get(k, 0.0)

    def as_array(self) -> np.ndarray:
        """a_k for k = -3..7 in order (index 3 is a_0 = 0)."""
        return np.array([self[k] for k in HARMONICS], dtype=np.float64)

    @staticmethod
    def exact(k: int, e: Fraction | float | str) -> Fraction:
        ex = Fraction(e)
        return sum((c * ex**n for n, c in _A_COEFFS.get(k, {}).items()), Fraction(0))


# ---------------------------------------------------------------------------
# model parameters


@dataclass(frozen=True)
class CubicParams:
    epsilon: float
    schedule: DampingSchedule

    model = MODEL_CUBIC
    name = "cubic"

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")

    def pack(self) -> np.ndarray:
        return _pack(MODEL_CUBIC, self.epsilon, self.schedule, np.zeros(len(HARMONICS)))

    def fingerprint_fields(self) -> dict:
        return {"model": "cubic", "epsilon": self.epsilon, **_schedule_fields(self.schedule)}

    def with_schedule(self, schedule: DampingSchedule) -> "CubicParams":
        return CubicParams(self.epsilon, schedule)


@dataclass(frozen=True)
class SpinOrbitParams:
    eccentricity: float
    epsilon: float
    schedule: DampingSchedule
    coeffs: FourierPolynomial = field(init=False, repr=False)

    model = MODEL_SPINORBIT
    name = "spinorbit"

    def __post_init__(self):
        if not 0.0 <= self.eccentricity <= 0.5:
            raise ValueError("eccentricity must lie in [0, 0.5]")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        object.__setattr__(self, "coeffs", FourierPolynomial(self.eccentricity))

    def pack(self) -> np.ndarray:
        return _pack(MODEL_SPINORBIT, self.epsilon, self.schedule, self.coeffs.as_array())

    def fingerprint_fields(self) -> dict:
        return {
            "model": "spinorbit",
            "eccentricity": self.eccentricity,
            "epsilon": self.epsilon,
            **_schedule_fields(self.schedule),
        }

    def with_schedule(self, schedule: DampingSchedule) -> "SpinOrbitParams":
        return SpinOrbitParams(self.eccentricity, self.epsilon, schedule)


ModelParams = Union[CubicParams, SpinOrbitParams]

# layout of the packed parameter vector handed to the compiled kernels
P_MODEL, P_EPS, P_KIND, P_G0, P_T0, P_A0 = 0, 1, 2, 3, 4, 5
PACKED_LEN = P_A0 + len(HARMONICS)


def _pack(model: int, eps: float, schedule: DampingSchedule, coeffs: np.ndarray) -> np.ndarray:
    par = np.zeros(PACKED_LEN)
    par[P_MODEL] = model
    par[P_EPS] = eps
    par[P_KIND] = schedule.kind
    par[P_G0] = schedule.gamma0
    par[P_T0] = schedule.T0
    par[P_A0:] = coeffs
    return par


def _schedule_fields(schedule: DampingSchedule) -> dict:
    return {"schedule": schedule_name(schedule), "gamma0": schedule.gamma0, "delta": schedule.delta}


# ---------------------------------------------------------------------------
# vector fields (reference implementations; the compiled kernels mirror these)


def cubic_rhs(state: PhaseState, params: CubicParams) -> tuple[float, float]:
    q, v, t = state.q, state.v, state.t
    gamma = damping_at(params.schedule, t)
    return v, -(1.0 + params.epsilon * math.cos(t)) * q**3 - gamma * v


def spin_orbit_rhs(state: PhaseState, params: SpinOrbitParams) -> tuple[float, float]:
    theta, v, t = state.q, state.v, state.t
    gamma = damping_at(params.schedule, t)
    force = sum(params.coeffs[k] * math.sin(2.0 * theta - k * t) for k in HARMONICS)
    return v, 2.0 * params.epsilon * force - gamma * (v - 1.0)


def energy_I(state: PhaseState) -> float:
    """Energy of the unperturbed cubic oscillator, v**2/2 + q**4/4."""
    return 0.5 * state.v**2 + 0.25 * state.q**4


def global_attraction_bound(epsilon: float) -> float:
    """Damping above which the origin of the cubic model attracts everything.

    Maximum over t of eps sin t / (2 (1 + eps cos t)), which equals
    eps / (2 sqrt(1 - eps**2)).
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("global_attraction_bound needs 0 <= epsilon < 1")
    return epsilon / (2.0 * math.sqrt(1.0 - epsilon * epsilon))
