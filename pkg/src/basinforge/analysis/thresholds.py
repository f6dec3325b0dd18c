"""Damping thresholds above which a p:q periodic orbit no longer exists.

Thresholds have the form ``gamma = C0 * eps**n`` to leading order. For the
spin-orbit model ``C0`` follows from the potential coefficients; for the cubic
oscillator a reference table is shipped. The empirical threshold is found by
bisection on orbit existence, continuing the orbit from the last success.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Optional

from ..errors import NoSubharmonic, NotFound, NotTabulated
from ..models import HARMONICS, Constant, CubicParams, FourierPolynomial, PhaseState, SpinOrbitParams
from .floquet import find_periodic_orbit


@dataclass(frozen=True)
class ThresholdEstimate:
    p: int
    q: int
    C0: float
    n_order: int
    method: str  # "analytic", "table" or "bisection"
    bracket: Optional[tuple[float, float]] = None
    gamma_thr: Optional[float] = None

    def __post_init__(self):
        if not self.C0 >= 0:
            raise ValueError("C0 must be >= 0")
        if self.method not in ("analytic", "table", "bisection"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "bisection":
            if self.bracket is None or not 0 <= self.bracket[0] <= self.bracket[1]:
                raise ValueError("bisection estimate needs a valid bracket")

    @property
    def omega(self) -> float:
        return self.p / self.q

    def gamma(self, eps: float) -> float:
        if self.gamma_thr is not None:
            return self.gamma_thr
        return self.C0 * eps**self.n_order


def _harmonic(p: int, q: int) -> Optional[int]:
    if (2 * p) % q:
        return None
    k = 2 * p // q
    return k if k in HARMONICS and k != 0 else None


def analytic_threshold_spin_orbit(e: float, p: int, q: int) -> ThresholdEstimate:
    """C0 = 2 q |a_(2p/q)(e)| / |p - q|; infinite for 1:1, zero off the harmonics."""
    if q < 1 or math.gcd(p, q) != 1:
        raise ValueError("need q >= 1 and gcd(p, q) = 1")
    if p == q:
        return ThresholdEstimate(p, q, math.inf, 1, "analytic")
    k = _harmonic(p, q)
    if k is None:
        return ThresholdEstimate(p, q, 0.0, 1, "analytic")
    # exact rational arithmetic on the decimal value of e
    a = FourierPolynomial.exact(k, Fraction(repr(float(e))))
    c0 = Fraction(2 * q) * abs(a) / abs(p - q)
    return ThresholdEstimate(p, q, float(c0), 1, "analytic")


def theta0_from_C(e: float, p: int, q: int, C: float) -> tuple[float, float]:
    """First-order phases of the p:q orbit at gamma = C eps, as (stable, unstable).

    Solves 2 a_k sin(2 theta0) = C (p/q - 1) with k = 2p/q; both roots lie in
    [0, pi). The stable root has a_k cos(2 theta0) < 0.
    """
    k = _harmonic(p, q)
    if k is None:
        raise NoSubharmonic(f"{p}:{q} is not a first-order resonance")
    a = FourierPolynomial(e)[k]
    if a == 0.0:
        raise NoSubharmonic(f"a_{k} vanishes at e={e}")
    s = C * (p / q - 1.0) / (2.0 * a)
    if abs(s) >= 1.0:
        raise NoSubharmonic(f"|C|={abs(C):.6g} is not below the threshold constant")
    x1 = math.asin(s)
    x2 = math.pi - x1
    roots = [(0.5 * x) % math.pi for x in (x1, x2)]
    roots.sort(key=lambda th: a * math.cos(2.0 * th) >= 0.0)
    return roots[0], roots[1]


def phase_condition(e: float, p: int, q: int, C: float, theta0: float) -> float:
    """Average over 2 pi q of the first-order forcing along theta0 + (p/q) t,
    minus C (p/q - 1); vanishes at an admissible theta0."""
    from scipy.integrate import quad

    coeffs = FourierPolynomial(e)
    w = p / q

    def force(t):
        return sum(2.0 * coeffs[k] * math.sin(2.0 * (theta0 + w * t) - k * t) for k in HARMONICS)

    period = 2.0 * math.pi * q
    val, _ = quad(force, 0.0, period, limit=400, epsabs=1e-13)
    return val / period - C * (w - 1.0)


# leading primary (n = 1, q even) and secondary (n = 2, q odd) resonances, p = 1
_CUBIC_TABLE = {
    2: (0.178442, 1), 4: (0.061574, 1), 6: (0.008980, 1), 8: (0.000920, 1), 10: (0.000078, 1),
    1: (0.146322, 2), 3: (0.065001, 2), 5: (0.006488, 2), 7: (0.000177, 2), 9: (0.000002, 2),
}


def cubic_threshold_reference(p: int, q: int) -> ThresholdEstimate:
    if p != 1 or q not in _CUBIC_TABLE:
        raise NotTabulated(f"no reference threshold for {p}:{q}")
    c0, n = _CUBIC_TABLE[q]
    return ThresholdEstimate(p, q, c0, n, "table")


def empirical_threshold(
    make_params: Callable[[float], object],
    p: int,
    q: int,
    bracket: tuple[float, float],
    rel_width: float = 1e-3,
    guess: Optional[PhaseState] = None,
    eps: Optional[float] = None,
    n_order: int = 1,
) -> ThresholdEstimate:
    """Bisect on gamma for the fold of the p:q orbit.

    ``make_params(gamma)`` builds the model at damping gamma. The orbit must
    exist at ``bracket[0]`` and not at ``bracket[1]``; every trial is seeded
    with the last orbit found, so the branch is followed continuously.
    """
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ValueError("need 0 < gamma_lo < gamma_hi")
    try:
        orbit = find_periodic_orbit(make_params(lo), p, q, guess, stable=True)
    except NotFound as exc:
        raise ValueError(f"no {p}:{q} orbit at the low end of the bracket") from exc
    if _exists(make_params(hi), p, q, orbit):
        raise ValueError(f"{p}:{q} orbit still exists at the high end of the bracket")
    while hi - lo > rel_width * lo:
        mid = 0.5 * (lo + hi)
        found = _exists(make_params(mid), p, q, orbit)
        if found is None:
            hi = mid
        else:
            lo, orbit = mid, found
    g = 0.5 * (lo + hi)
    c0 = g / eps**n_order if eps else 0.0
    return ThresholdEstimate(p, q, c0, n_order, "bisection", (lo, hi), g)


def _exists(params, p, q, seed) -> Optional[PhaseState]:
    try:
        return find_periodic_orbit(params, p, q, seed, stable=None)
    except NotFound:
        return None


def cubic_threshold_bisection(eps: float, p: int, q: int,
                              bracket: Optional[tuple[float, float]] = None) -> ThresholdEstimate:
    """Empirical threshold of the cubic p:q orbit at forcing eps, constant damping."""
    if bracket is None:
        ref = cubic_threshold_reference(p, q).gamma(eps)
        bracket = (0.3 * ref, 2.0 * ref)
    n = cubic_threshold_reference(p, q).n_order if (p == 1 and q in _CUBIC_TABLE) else 1
    return empirical_threshold(lambda g: CubicParams(eps, Constant(g)), p, q, bracket,
                               eps=eps, n_order=n)


def spin_orbit_threshold_bisection(e: float, eps: float, p: int, q: int,
                                   bracket: Optional[tuple[float, float]] = None) -> ThresholdEstimate:
    if bracket is None:
        ref = analytic_threshold_spin_orbit(e, p, q).gamma(eps)
        if not 0 < ref < math.inf:
            raise ValueError(f"{p}:{q} has no finite first-order threshold")
        bracket = (0.3 * ref, 2.0 * ref)
    return empirical_threshold(lambda g: SpinOrbitParams(e, eps, Constant(g)), p, q, bracket,
                               eps=eps)


THRESHOLD_COLUMNS = ["p", "q", "omega", "C0", "n_order", "method", "gamma_thr"]


def write_threshold_csv(rows: Iterable[ThresholdEstimate], path_or_file,
                        eps: Optional[float] = None) -> None:
    if isinstance(path_or_file, (str, Path)):
        with open(path_or_file, "w", newline="") as fh:
            write_threshold_csv(rows, fh, eps)
        return
    w = csv.writer(path_or_file, lineterminator="\n")
    w.writerow(THRESHOLD_COLUMNS)
    for r in rows:
        if r.gamma_thr is not None:
            g = r.gamma_thr
        elif eps is not None:
            g = r.C0 * eps**r.n_order
        else:
            g = ""
        w.writerow([r.p, r.q, repr(r.omega), f"{r.C0:.4g}" if math.isfinite(r.C0) else "inf",
                    r.n_order, r.method, g if g == "" else repr(g)])
