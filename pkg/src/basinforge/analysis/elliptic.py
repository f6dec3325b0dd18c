"""Jacobi elliptic functions and the complete integral K by the AGM.

The modulus convention is used throughout: ``k`` is the modulus, the
parameter is ``m = k**2``. The unperturbed cubic oscillator ``x'' + x**3 = 0``
is solved by ``x(t) = alpha cn(alpha t)`` with ``k = 1/sqrt(2)``.
"""
from __future__ import annotations

import math

_MAX_AGM = 64


def _check_k(k: float) -> None:
    if not 0.0 <= k < 1.0:
        raise ValueError(f"modulus k must satisfy 0 <= k < 1, got {k}")


def agm(a: float, b: float) -> float:
    for _ in range(_MAX_AGM):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return a


def complete_K(k: float) -> float:
    """K(k) = pi / (2 agm(1, sqrt(1 - k**2)))."""
    _check_k(k)
    return math.pi / (2.0 * agm(1.0, math.sqrt(1.0 - k * k)))


def jacobi_elliptic(u: float, k: float) -> tuple[float, float, float]:
    """(cn, sn, dn) of argument u and modulus k, by descending Landen/AGM."""
    _check_k(k)
    if k == 0.0:
        return math.cos(u), math.sin(u), 1.0
    a = [1.0]
    c = [k]
    b = math.sqrt(1.0 - k * k)
    while abs(c[-1]) > 1e-16 and len(a) < _MAX_AGM:
        an, bn = a[-1], b
        a.append(0.5 * (an + bn))
        c.append(0.5 * (an - bn))
        b = math.sqrt(an * bn)
    n = len(a) - 1
    phi = (2.0**n) * a[n] * u
    phi_next = phi
    for j in range(n, 0, -1):
        phi_next = phi
        phi = 0.5 * (phi + math.asin(c[j] / a[j] * math.sin(phi)))
    sn = math.sin(phi)
    cn = math.cos(phi)
    dn = cn / math.cos(phi_next - phi) if n > 0 else 1.0
    return cn, sn, dn


def cubic_orbit_amplitude(omega: float) -> float:
    """Amplitude alpha of the unforced orbit with frequency omega: 2 pi alpha = 4 omega K."""
    return 4.0 * omega * complete_K(1.0 / math.sqrt(2.0)) / (2.0 * math.pi)


def cubic_orbit_state(alpha: float, phase: float) -> tuple[float, float]:
    """Point of x = alpha cn(alpha s) at s = phase, with its velocity."""
    cn, sn, dn = jacobi_elliptic(alpha * phase, 1.0 / math.sqrt(2.0))
    return alpha * cn, -alpha * alpha * sn * dn
