"""Trajectory propagation.

Two methods share one entry point, :func:`integrate_to`:

``AdaptiveRK``
    Dormand-Prince 5(4) embedded pair with PI step control; absolute and
    relative tolerance are both ``tol``. Works for either model and for the
    variational system.
``TaylorSeries``
    High-order power series about the current time, built by series
    arithmetic (sums and Cauchy products). The step is the largest rung of a
    geometric ladder whose ODE residual at the step end stays below ``tol``.
    Cubic model only; a spin-orbit request falls back to AdaptiveRK.

Both methods split steps at the knee of a linear damping ramp.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from enum import Enum

import numpy as np

from . import _kernels as K
from .errors import NonFinite, StepUnderflow
from .models import MODEL_CUBIC, ModelParams, PhaseState


class Method(str, Enum):
    ADAPTIVE_RK = "rk"
    TAYLOR = "taylor"


_METHOD_CODE = {Method.ADAPTIVE_RK: 0, Method.TAYLOR: 1}


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = Method.TAYLOR
    tol: float = 1e-12
    series_order: int = 25
    max_step: float = 10.0
    min_step: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.series_order < 4:
            raise ValueError("series_order must be >= 4")
        if not 0 < self.min_step < self.max_step:
            raise ValueError("need 0 < min_step < max_step")

    @property
    def code(self) -> int:
        return _METHOD_CODE[self.method]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d


@dataclass(frozen=True)
class SeriesCoefficients:
    t0: float
    q: np.ndarray  # coefficients of the coordinate
    v: np.ndarray  # coefficients of the velocity (derivative series)

    @property
    def order(self) -> int:
        return len(self.q) - 1

    def __call__(self, h: float) -> tuple[float, float]:
        x, dx, _ = K.taylor_eval(self.q, self.order, h)
        return x, dx


def raise_for_status(status: int, t: float) -> None:
    if status == K.UNDERFLOW:
        raise StepUnderflow(f"step size fell below min_step at t={t:.6g}")
    if status == K.NONFINITE:
        raise NonFinite(f"state became non-finite at t={t:.6g}")


def integrate_to(
    params: ModelParams,
    state: PhaseState,
    t_end: float,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> PhaseState:
    """Propagate ``state`` to exactly ``t_end``."""
    if t_end < state.t:
        raise ValueError("t_end must not precede state.t")
    y = state.as_array()
    t, status, _ = K.propagate(
        cfg.code, params.pack(), y, state.t, t_end,
        cfg.tol, cfg.series_order, cfg.max_step, cfg.min_step, 0.0, 0.0,
    )
    raise_for_status(status, t)
    return PhaseState(float(y[0]), float(y[1]), t_end)


def integrate_array(params: ModelParams, y: np.ndarray, t0: float, t1: float,
                    cfg: IntegratorConfig) -> np.ndarray:
    """Same as :func:`integrate_to` for a raw state vector (2 or 6 entries).

    The time direction may be reversed (t1 < t0); that case is handled by
    integrating the time-reversed field and is only meant for conservative
    checks, so it is restricted to constant damping.
    """
    y = np.array(y, dtype=np.float64)
    par = params.pack()
    if t1 >= t0:
        t, status, _ = K.propagate(cfg.code, par, y, t0, t1, cfg.tol, cfg.series_order,
                                   cfg.max_step, cfg.min_step, 0.0, 0.0)
        raise_for_status(status, t)
        return y
    return _integrate_backward(params, y, t0, t1, cfg)


def _integrate_backward(params, y, t0, t1, cfg):
    # s = -t maps the backward problem onto a forward one for the cubic model
    # with cos(-s) = cos(s); only the sign of the velocity and of gamma flip.
    if params.model != MODEL_CUBIC or params.schedule.kind != 0:
        raise ValueError("backward integration is only supported for the cubic model "
                         "with constant damping")
    par = params.pack()
    par[3] = -par[3]  # gamma -> -gamma
    z = y.copy()
    z[1] = -z[1]
    t, status, _ = K.propagate(cfg.code, par, z, -t0, -t1, cfg.tol,
                               cfg.series_order, cfg.max_step, cfg.min_step, 0.0, 0.0)
    raise_for_status(status, t)
    z[1] = -z[1]
    return z


def taylor_recurrence(params: ModelParams, state: PhaseState, order: int) -> SeriesCoefficients:
    """Taylor coefficients of the cubic-model solution through ``state``."""
    if params.model != MODEL_CUBIC:
        raise ValueError("the series method is implemented for the cubic model only")
    if order < 4:
        raise ValueError("order must be >= 4")
    c = np.empty(order + 1)
    K.taylor_coeffs(params.pack(), state.q, state.v, state.t, order, c)
    dc = np.array([k * c[k] for k in range(1, order + 1)] + [0.0])
    return SeriesCoefficients(state.t, c, dc)


def series_residual(params: ModelParams, series: SeriesCoefficients, h: float) -> float:
    return float(K.taylor_residual(params.pack(), series.q, series.order, series.t0, h))


def taylor_step(
    params: ModelParams,
    state: PhaseState,
    cfg: IntegratorConfig = IntegratorConfig(),
    h_start: float = 0.7,
) -> tuple[PhaseState, float]:
    """One series step: the largest ladder rung whose residual is below tol."""
    series = taylor_recurrence(params, state, cfg.series_order)
    par = params.pack()
    cap = min(cfg.max_step, K.knee_after(par, state.t) - state.t)
    h, status = K.taylor_choose_step(par, series.q, series.order, state.t, h_start, cap,
                                     cfg.tol, cfg.min_step)
    raise_for_status(status, state.t)
    q, v = series(h)
    return PhaseState(float(q), float(v), state.t + h), float(h)
