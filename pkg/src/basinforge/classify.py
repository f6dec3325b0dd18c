"""Attractor identification for single trajectories.

A trajectory is integrated past its transient, then sampled once per forcing
period. The cubic model first checks for capture by the origin through the
energy ``v**2/2 + q**4/4``; otherwise the smallest period ``q`` of the
stroboscopic samples is found and the winding ``p`` is counted over one
orbit period. Coexisting orbits with the same ``p:q`` are separated later by
:func:`cluster_variants`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .integrate import IntegratorConfig, raise_for_status
from .models import MODEL_CUBIC, MODEL_SPINORBIT, ModelParams, PhaseState, settle_time

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Origin:
    def __str__(self):
        return "origin"


@dataclass(frozen=True)
class Resonance:
    p: int
    q: int
    variant: int = 0

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError("q must be positive")
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(f"{self.p}:{self.q} is not in lowest terms")

    def __str__(self):
        return f"{self.p}:{self.q}"

    @property
    def omega(self) -> float:
        return self.p / self.q


@dataclass(frozen=True)
class Unclassified:
    note: str = ""

    def __str__(self):
        return "unclassified"


ResonanceLabel = Union[Origin, Resonance, Unclassified]


def variant_letter(variant: int) -> str:
    return "abcdefghijklmnopqrstuvwxyz"[variant]


def label_name(label: ResonanceLabel, n_variants: int = 1) -> str:
    """Human label: ``origin``, ``1:2``, ``1:1a`` / ``1:1b``, ``unclassified``."""
    if isinstance(label, Resonance) and n_variants > 1:
        return f"{label.p}:{label.q}{variant_letter(label.variant)}"
    return str(label)


@dataclass(frozen=True)
class ClassifierConfig:
    n_transient_factor: float = 20.0
    q_max: int = 16
    origin_energy_tol: float = 1e-8
    period_match_tol: float = 1e-5
    variant_cluster_radius: float = 0.05
    n_confirm_periods: Optional[int] = None
    winding_samples_per_period: int = 64

    def __post_init__(self):
        if self.n_confirm_periods is None:
            object.__setattr__(self, "n_confirm_periods", 3 * self.q_max)
        for name in ("n_transient_factor", "q_max", "origin_energy_tol", "period_match_tol",
                     "variant_cluster_radius", "n_confirm_periods", "winding_samples_per_period"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_confirm_periods <= self.q_max:
            raise ValueError("n_confirm_periods must exceed q_max")

    def to_dict(self) -> dict:
        return asdict(self)


def _ceil_to_period(t: float) -> float:
    # tolerate round-off so exact multiples are not pushed up a period
    return math.ceil(t / TWO_PI - 1e-9) * TWO_PI


def transient_time(gamma0: float, cfg: ClassifierConfig = ClassifierConfig()) -> float:
    """N / gamma0 rounded up to a whole number of forcing periods."""
    if not gamma0 > 0:
        raise ValueError("gamma0 must be > 0")
    return _ceil_to_period(cfg.n_transient_factor / gamma0)


def settle_end(params: ModelParams, cfg: ClassifierConfig = ClassifierConfig()) -> float:
    """End of the transient: ramp settling time plus N / gamma0, on the strobe grid."""
    return settle_end_for(params.schedule, cfg)


# ---------------------------------------------------------------------------
# stroboscopic sampling


@dataclass(frozen=True)
class StrobeSamples:
    t: np.ndarray
    raw: np.ndarray  # (n, 2): coordinate on its lift, velocity
    angular: bool

    @property
    def wrapped(self) -> np.ndarray:
        if not self.angular:
            return self.raw
        out = self.raw.copy()
        out[:, 0] = np.mod(out[:, 0], TWO_PI)
        return out

    def states(self) -> list[PhaseState]:
        return [PhaseState(float(q), float(v), float(t)) for (q, v), t in zip(self.raw, self.t)]


def strobe(params: ModelParams, state: PhaseState, n: int,
           icfg: IntegratorConfig = IntegratorConfig()) -> StrobeSamples:
    """Sample the trajectory at state.t + 2 pi k, k = 1..n."""
    y = state.as_array()
    out = np.empty((n, 2))
    status = K.strobe(icfg.code, params.pack(), y, state.t, n, 1, icfg.tol, icfg.series_order,
                      icfg.max_step, icfg.min_step, out)
    raise_for_status(status, state.t)
    times = state.t + TWO_PI * np.arange(1, n + 1)
    return StrobeSamples(times, out, params.model == MODEL_SPINORBIT)


def _sample_distance(a: np.ndarray, b: np.ndarray, angular: bool) -> np.ndarray:
    dq = np.abs(a[..., 0] - b[..., 0])
    if angular:
        dq = np.mod(dq, TWO_PI)
        dq = np.minimum(dq, TWO_PI - dq)
    return np.maximum(dq, np.abs(a[..., 1] - b[..., 1]))


def detect_period(samples, cfg: ClassifierConfig = ClassifierConfig(),
                  angular: bool = False) -> Optional[int]:
    """Smallest q <= q_max with samples[i + q] == samples[i] for every window."""
    if isinstance(samples, StrobeSamples):
        angular = samples.angular
        samples = samples.raw
    s = np.asarray(samples, dtype=np.float64)
    if len(s) < cfg.n_confirm_periods:
        raise ValueError(f"need at least {cfg.n_confirm_periods} samples, got {len(s)}")
    for q in range(1, cfg.q_max + 1):
        if np.all(_sample_distance(s[q:], s[:-q], angular) <= cfg.period_match_tol):
            return q
    return None


def winding_count(params: ModelParams, state: PhaseState, q: int,
                  icfg: IntegratorConfig = IntegratorConfig(),
                  samples_per_period: int = 64) -> Optional[int]:
    """Oscillations (cubic) or revolutions (spin-orbit) over 2 pi q; None if ill-defined."""
    return _winding(params.model, params.pack(), state.as_array(), state.t, q, icfg,
                    samples_per_period)


def _winding(model, par, y, t, q, icfg, sub):
    y = y.copy()
    if model == MODEL_SPINORBIT:
        theta0 = y[0]
        t_end, status, _ = K.propagate(icfg.code, par, y, t, t + TWO_PI * q, icfg.tol,
                                       icfg.series_order, icfg.max_step, icfg.min_step, 0.0, 0.0)
        raise_for_status(status, t_end)
        turns = (y[0] - theta0) / TWO_PI
        p = round(turns)
        return p if abs(turns - p) <= 0.1 else None
    out = np.empty((q * sub, 2))
    x0 = y[0]
    status = K.strobe(icfg.code, par, y, t, q, sub, icfg.tol, icfg.series_order,
                      icfg.max_step, icfg.min_step, out)
    raise_for_status(status, t)
    xs = np.concatenate(([x0], out[:, 0]))
    signs = np.sign(xs)
    signs = signs[signs != 0]
    changes = int(np.count_nonzero(signs[1:] != signs[:-1]))
    if changes % 2:
        return None
    return changes // 2


def canonical_point(cycle: np.ndarray, angular: bool) -> np.ndarray:
    """Lexicographically smallest (q, v) among the points of a stroboscopic cycle."""
    pts = cycle.copy()
    if angular:
        pts[:, 0] = np.mod(pts[:, 0], TWO_PI)
    idx = np.lexsort((pts[:, 1], pts[:, 0]))[0]
    return pts[idx]


# ---------------------------------------------------------------------------
# single trajectory


def classify(
    params: ModelParams,
    ic: PhaseState,
    cfg: ClassifierConfig = ClassifierConfig(),
    icfg: IntegratorConfig = IntegratorConfig(),
) -> tuple[ResonanceLabel, Optional[PhaseState]]:
    """Label the attractor reached from ``ic``.

    Returns the label and a representative stroboscopic point of the locked
    cycle (None for the origin and for unclassified trajectories).
    """
    label, rep = classify_packed(params.model, params.pack(), params.schedule, ic.q, ic.v, ic.t,
                                 cfg, icfg)
    if rep is None:
        return label, None
    return label, PhaseState(float(rep[0]), float(rep[1]), float(rep[2]))


def classify_packed(model, par, schedule, q0, v0, t0, cfg, icfg):
    cubic = model == MODEL_CUBIC
    angular = model == MODEL_SPINORBIT
    y = np.array([q0, v0], dtype=np.float64)
    stop_energy = cfg.origin_energy_tol if cubic else 0.0
    t_end = t0 + settle_end_for(schedule, cfg)
    extension = transient_time(schedule.gamma0, cfg)
    n = cfg.n_confirm_periods
    samples = np.empty((n, 2))
    args = (icfg.tol, icfg.series_order, icfg.max_step, icfg.min_step)
    t = t0
    h = 0.0
    for attempt in range(2):
        t_reached, status, h = K.propagate(icfg.code, par, y, t, t_end, args[0], args[1],
                                           args[2], args[3], h, stop_energy)
        if status == K.STOPPED:
            return Origin(), None
        if status != K.OK:
            return Unclassified(_status_note(status, t_reached)), None
        t = t_end
        if cubic and 0.5 * y[1] ** 2 + 0.25 * y[0] ** 4 < cfg.origin_energy_tol:
            return Origin(), None
        status = K.strobe(icfg.code, par, y, t, n, 1, *args, samples)
        if status != K.OK:
            return Unclassified(_status_note(status, t)), None
        t += TWO_PI * n
        q = detect_period(samples, cfg, angular)
        if q is not None:
            try:
                p = _winding(model, par, y, t, q, icfg, cfg.winding_samples_per_period)
            except Exception as exc:  # propagation failure during the winding pass
                return Unclassified(str(exc)), None
            if p is None:
                return Unclassified("non-integer winding"), None
            if cubic and p <= 0:
                return Unclassified(f"winding {p} over period {q}"), None
            # a multiple of the true period can match first while the approach
            # to the cycle is still contracting; the ratio p/q is unaffected
            g = math.gcd(p, q)
            p, q = p // g, q // g
            rep = canonical_point(samples[-q:], angular)
            return Resonance(p, q), (rep[0], rep[1], t)
        t_end = t + extension
    return Unclassified("no period detected"), None


def settle_end_for(schedule, cfg):
    return _ceil_to_period(settle_time(schedule) + cfg.n_transient_factor / schedule.gamma0)


def _status_note(status, t):
    if status == K.UNDERFLOW:
        return f"step underflow at t={t:.6g}"
    if status == K.NONFINITE:
        return f"non-finite state at t={t:.6g}"
    return f"integration status {status}"


# ---------------------------------------------------------------------------
# variants


def _wrap_diff(d: float) -> float:
    return (d + math.pi) % TWO_PI - math.pi


def cluster_variants(
    results: Sequence[tuple[ResonanceLabel, Optional[Sequence[float]]]],
    radius: float = 0.05,
    angular: bool = False,
    max_clusters: int = 4,
) -> tuple[list[ResonanceLabel], set[tuple[int, int]]]:
    """Assign variant indices to coexisting orbits with equal p:q.

    Representatives ``(q, v)`` of each resonance group are clustered greedily
    (radius ``radius``, processed in sorted order so input order does not
    matter); clusters are numbered by their centroid, lexicographically on
    ``(q, v)``. Returns the relabelled list and the set of ``(p, q)`` groups
    with more than ``max_clusters`` clusters, which deserve manual review.
    """
    out: list[ResonanceLabel] = list(lab for lab, _ in results)
    groups: dict[tuple[int, int], list[int]] = {}
    for i, (lab, _) in enumerate(results):
        if isinstance(lab, Resonance):
            groups.setdefault((lab.p, lab.q), []).append(i)
    flagged = set()
    for key, idxs in groups.items():
        pts = np.array([[float(results[i][1][0]), float(results[i][1][1])] for i in idxs])
        if angular:
            pts[:, 0] = np.mod(pts[:, 0], TWO_PI)
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        anchors: list[np.ndarray] = []
        sums: list[np.ndarray] = []
        counts: list[int] = []
        member = np.empty(len(idxs), dtype=int)
        for j in order:
            pt = pts[j]
            hit = -1
            for c, anchor in enumerate(anchors):
                centroid = anchor + sums[c] / counts[c]
                dq = pt[0] - centroid[0]
                if angular:
                    dq = _wrap_diff(dq)
                if max(abs(dq), abs(pt[1] - centroid[1])) <= radius:
                    hit = c
                    break
            if hit < 0:
                anchors.append(pt.copy())
                sums.append(np.zeros(2))
                counts.append(1)
                hit = len(anchors) - 1
            else:
                d = pt - anchors[hit]
                if angular:
                    d[0] = _wrap_diff(d[0])
                sums[hit] += d
                counts[hit] += 1
            member[j] = hit
        centroids = [anchors[c] + sums[c] / counts[c] for c in range(len(anchors))]
        if angular:
            centroids = [np.array([c[0] % TWO_PI, c[1]]) for c in centroids]
        rank = sorted(range(len(centroids)), key=lambda c: (centroids[c][0], centroids[c][1]))
        variant_of = {c: r for r, c in enumerate(rank)}
        if len(centroids) > max_clusters:
            flagged.add(key)
        for j, i in enumerate(idxs):
            out[i] = Resonance(key[0], key[1], variant_of[member[j]])
    return out, flagged
