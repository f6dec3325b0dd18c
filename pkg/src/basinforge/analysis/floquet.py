"""Periodic orbits by Newton shooting, and their monodromy matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .. import _kernels as K
from ..errors import NotFound
from ..integrate import IntegratorConfig, Method, raise_for_status
from ..models import MODEL_CUBIC, MODEL_SPINORBIT, ModelParams, PhaseState, damping_integral
from .elliptic import complete_K, cubic_orbit_amplitude, cubic_orbit_state, jacobi_elliptic

TWO_PI = 2.0 * math.pi

# variational equations are only available through the embedded RK pair
SHOOTING_CONFIG = IntegratorConfig(method=Method.ADAPTIVE_RK, tol=1e-12)


@dataclass(frozen=True)
class MonodromyResult:
    matrix: np.ndarray  # 2x2 propagator over one period
    eigenvalues: tuple[complex, complex]
    lyapunov: tuple[float, float]  # log|lambda| / T, ordered as eigenvalues
    period: float
    det: float
    det_expected: float  # exp(-integral of gamma over the period)

    @property
    def stable(self) -> bool:
        return all(abs(lam) < 1.0 for lam in self.eigenvalues)

    @property
    def det_rel_error(self) -> float:
        return abs(self.det / self.det_expected - 1.0)


def flow_with_tangent(params: ModelParams, y: np.ndarray, t0: float, t1: float,
                      cfg: IntegratorConfig = SHOOTING_CONFIG) -> tuple[np.ndarray, np.ndarray]:
    """End state and 2x2 derivative of the flow map from t0 to t1."""
    z = np.zeros(6)
    z[0:2] = y
    z[2] = 1.0  # (dq, dv) tangent along q
    z[5] = 1.0  # (dq, dv) tangent along v
    t, status, _ = K.propagate(0, params.pack(), z, t0, t1, cfg.tol, cfg.series_order,
                               cfg.max_step, cfg.min_step, 0.0, 0.0)
    raise_for_status(status, t)
    jac = np.array([[z[2], z[4]], [z[3], z[5]]])
    return z[0:2].copy(), jac


def monodromy(params: ModelParams, orbit: PhaseState, q: int,
              cfg: IntegratorConfig = SHOOTING_CONFIG) -> MonodromyResult:
    """Propagator of the variational equations along ``orbit`` for T = 2 pi q."""
    if q < 1:
        raise ValueError("q must be >= 1")
    period = TWO_PI * q
    _, m = flow_with_tangent(params, orbit.as_array(), orbit.t, orbit.t + period, cfg)
    lam = np.linalg.eigvals(m)
    lam = sorted((complex(x) for x in lam), key=lambda z: (-abs(z), z.imag))
    lyap = tuple(math.log(abs(z)) / period for z in lam)
    det = float(np.linalg.det(m))
    expected = math.exp(-damping_integral(params.schedule, orbit.t, orbit.t + period))
    return MonodromyResult(m, (lam[0], lam[1]), lyap, period, det, expected)


def _return_residual(model, p, y, y_end):
    r = y_end - y
    if model == MODEL_SPINORBIT:
        r[0] -= TWO_PI * p
    return r


def _winding_of(params, y, t0, p, q, cfg):
    from ..classify import _winding

    return _winding(params.model, params.pack(), y, t0, q, cfg, 64)


def newton_periodic(
    params: ModelParams,
    p: int,
    q: int,
    guess: PhaseState,
    tol: float = 1e-10,
    max_iter: int = 40,
    max_shift: float = 0.5,
    cfg: IntegratorConfig = SHOOTING_CONFIG,
) -> PhaseState:
    """Newton iteration on the period-2 pi q return map from a single guess.

    Raises :class:`NotFound` when the iteration diverges, wanders more than
    ``max_shift`` from the guess, or converges to an orbit of another winding.
    """
    y = guess.as_array()
    y0 = y.copy()
    t0 = guess.t
    period = TWO_PI * q
    res_norm = math.inf
    for _ in range(max_iter):
        try:
            y_end, jac = flow_with_tangent(params, y, t0, t0 + period, cfg)
        except Exception as exc:
            raise NotFound(f"propagation failed during shooting: {exc}") from exc
        r = _return_residual(params.model, p, y, y_end)
        res_norm = float(np.max(np.abs(r)))
        if res_norm <= tol:
            break
        a = jac - np.eye(2)
        try:
            step = np.linalg.solve(a, -r)
        except np.linalg.LinAlgError as exc:
            raise NotFound("singular shooting Jacobian") from exc
        # keep single updates modest so the iteration cannot hop between orbits
        scale = min(1.0, 0.25 / max(float(np.max(np.abs(step))), 1e-300))
        y = y + scale * step
        if not np.all(np.isfinite(y)) or float(np.max(np.abs(y - y0))) > max_shift:
            raise NotFound("Newton iteration left the neighbourhood of the guess")
    else:
        raise NotFound(f"Newton did not converge (residual {res_norm:.3g})")
    if params.model == MODEL_CUBIC and float(np.max(np.abs(y))) < 1e-6:
        raise NotFound("converged to the origin")
    w = _winding_of(params, y, t0, p, q, cfg)
    if w != p:
        raise NotFound(f"converged to an orbit with winding {w}, wanted {p}")
    return PhaseState(float(y[0]), float(y[1]), t0)


def cubic_seeds(p: int, q: int, n_phase: int = 24) -> list[PhaseState]:
    """Points of the unforced orbit with frequency p/q, over a grid of phases."""
    omega = p / q
    alpha = cubic_orbit_amplitude(omega)
    period = 4.0 * complete_K(1.0 / math.sqrt(2.0)) / alpha
    out = []
    for j in range(n_phase):
        x, v = cubic_orbit_state(alpha, period * j / n_phase)
        out.append(PhaseState(x, v, 0.0))
    return out


def spin_orbit_seeds(params, p: int, q: int) -> list[PhaseState]:
    """First-order phases theta_0 (stable first) with velocity p/q."""
    from .thresholds import theta0_from_C

    g = params.schedule.gamma0
    if params.epsilon == 0:
        raise NotFound("no forcing, no isolated orbit")
    stable, unstable = theta0_from_C(params.eccentricity, p, q, g / params.epsilon)
    return [PhaseState(th, p / q, 0.0) for th in (stable, unstable)]


def find_periodic_orbit(
    params: ModelParams,
    p: int,
    q: int,
    guess: Optional[PhaseState] = None,
    stable: Optional[bool] = True,
    tol: float = 1e-10,
    cfg: IntegratorConfig = SHOOTING_CONFIG,
) -> PhaseState:
    """A p:q periodic orbit at the current parameters, as its point at t = guess.t.

    Without a guess, seeds come from the unforced elliptic orbit (cubic) or
    from the first-order phase condition (spin-orbit). ``stable=True`` keeps
    only orbits whose Floquet multipliers lie inside the unit circle,
    ``stable=False`` only unstable ones, ``None`` accepts either.
    """
    if q < 1 or math.gcd(p, q) != 1:
        raise ValueError("need q >= 1 and gcd(p, q) = 1")
    if guess is not None:
        seeds = [guess]
    elif params.model == MODEL_CUBIC:
        seeds = _rank_seeds(params, p, q, cubic_seeds(p, q), cfg)
    else:
        try:
            seeds = spin_orbit_seeds(params, p, q)
        except Exception as exc:
            raise NotFound(str(exc)) from exc
    last = None
    found = []
    for seed in seeds:
        try:
            orbit = newton_periodic(params, p, q, seed, tol, cfg=cfg)
        except NotFound as exc:
            last = exc
            continue
        if any(abs(orbit.q - o.q) < 1e-6 and abs(orbit.v - o.v) < 1e-6 for o in found):
            continue
        found.append(orbit)
        if stable is None:
            return orbit
        if monodromy(params, orbit, q, cfg).stable == stable:
            return orbit
    raise NotFound(f"no {'stable ' if stable else ''}{p}:{q} orbit found" +
                   (f" ({last})" if last else ""))


def _rank_seeds(params, p, q, seeds, cfg):
    # try the seeds whose one-period return residual is smallest first
    scored = []
    par = params.pack()
    for s in seeds:
        y = s.as_array()
        t, status, _ = K.propagate(0, par, y, s.t, s.t + TWO_PI * q, 1e-9, 25,
                                   cfg.max_step, cfg.min_step, 0.0, 0.0)
        if status != K.OK:
            continue
        scored.append((float(np.max(np.abs(y - s.as_array()))), s))
    scored.sort(key=lambda x: x[0])
    return [s for _, s in scored]


def floquet_mu(omega: float = 0.5) -> float:
    """Time average of sn**2 cn**2 along the unforced cubic orbit (k = 1/sqrt 2).

    The average over a full period does not depend on the frequency; the
    argument only fixes the time scale of the quadrature.
    """
    alpha = cubic_orbit_amplitude(omega)
    kk = 1.0 / math.sqrt(2.0)
    period = 4.0 * complete_K(kk) / alpha

    def f(t):
        cn, sn, _ = jacobi_elliptic(alpha * t, kk)
        return sn * sn * cn * cn

    val, _ = quad(f, 0.0, period, limit=200, epsabs=1e-13, epsrel=1e-13)
    return val / period
