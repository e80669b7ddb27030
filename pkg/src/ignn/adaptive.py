"""Drift-triggered retraining schedule.

The embedding drift between checkpoints is ``||Z_i - Z_{i-1}||_F``.  Drift
is summed since the last retrain and a retrain fires once the sum reaches
``theta`` (absolute mode) or once the sum divided by ``||Z_t - Z_0||_F``
reaches it (relative mode).  After the first few observed triggers the
remaining budget is planned ahead by fitting ``a * t^-b`` to the drift rate.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_OBSERVED_TRIGGERS = 3


class ScheduleError(ValueError):
    pass


class ThresholdMode(enum.Enum):
    ABSOLUTE = "abs"
    RELATIVE = "rel"


class Action(enum.Enum):
    RETRAIN = "retrain"
    WAIT = "wait"


@dataclass(frozen=True)
class Decision:
    action: Action
    exhausted: bool = False

    @property
    def retrain(self) -> bool:
        return self.action is Action.RETRAIN


@dataclass(frozen=True)
class DriftSample:
    event_index: int
    delta_z: float
    # ||Z_t - Z_0||_F at this checkpoint; needed in relative mode only
    baseline_norm: float | None = None

    def __post_init__(self) -> None:
        if not self.delta_z >= 0.0:
            raise ScheduleError(f"drift must be >= 0, got {self.delta_z}")


@dataclass(frozen=True)
class PowerLawFit:
    a: float
    b: float
    rms: float

    def rate(self, t) -> np.ndarray:
        return self.a * np.asarray(t, dtype=np.float64) ** (-self.b)


@dataclass
class ScheduleState:
    theta: float
    budget: int
    mode: ThresholdMode = ThresholdMode.ABSOLUTE
    observed_triggers: int = 0
    trigger_times: list[int] = field(default_factory=list)
    drift_history: list[DriftSample] = field(default_factory=list)
    fit: PowerLawFit | None = None
    baseline_norm: float = 0.0
    accumulated: float = 0.0

    def __post_init__(self) -> None:
        if self.theta < 0:
            raise ScheduleError(f"theta must be >= 0, got {self.theta}")
        if self.budget < 0:
            raise ScheduleError(f"budget must be >= 0, got {self.budget}")
        self.mode = ThresholdMode(self.mode)

    @property
    def exhausted(self) -> bool:
        return self.observed_triggers >= self.budget

    @property
    def last_trigger(self) -> int:
        return self.trigger_times[-1] if self.trigger_times else 0


def delta_z(Z_prev, Z_cur) -> float:
    """Frobenius norm of ``Z_cur - Z_prev``."""
    A = np.asarray(Z_prev, dtype=np.float64)
    B = np.asarray(Z_cur, dtype=np.float64)
    if A.shape != B.shape:
        raise ScheduleError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.linalg.norm(B - A))


def _level(sched: ScheduleState) -> float:
    if sched.mode is ThresholdMode.ABSOLUTE:
        return sched.accumulated
    if sched.baseline_norm > 0.0:
        return sched.accumulated / sched.baseline_norm
    return math.inf if sched.accumulated > 0.0 else 0.0


def observe(sched: ScheduleState, sample: DriftSample, accumulate: bool = True) -> Decision:
    """Record one drift sample and decide whether to retrain now.

    With ``accumulate=False`` the sample already holds the drift since the
    last retrain and replaces the running sum instead of adding to it.
    """
    if sched.drift_history and sample.event_index <= sched.drift_history[-1].event_index:
        raise ScheduleError("drift samples must arrive in increasing event order")
    sched.drift_history.append(sample)
    if sample.baseline_norm is not None:
        sched.baseline_norm = sample.baseline_norm
    if sched.exhausted:
        return Decision(Action.WAIT, exhausted=True)
    sched.accumulated = sched.accumulated + sample.delta_z if accumulate else sample.delta_z
    if _level(sched) >= sched.theta:
        sched.accumulated = 0.0
        sched.trigger_times.append(sample.event_index)
        sched.observed_triggers += 1
        return Decision(Action.RETRAIN)
    return Decision(Action.WAIT)


def fit_power_law(history: Iterable[DriftSample] | Iterable[tuple[float, float]]) -> PowerLawFit:
    """Least-squares fit of ``log dz = log a - b log t``."""
    pts = [
        (s.event_index, s.delta_z) if isinstance(s, DriftSample) else (s[0], s[1])
        for s in history
    ]
    if len(pts) < 3:
        raise ScheduleError(f"insufficient data: need >= 3 samples, got {len(pts)}")
    t = np.asarray([p[0] for p in pts], dtype=np.float64)
    z = np.asarray([p[1] for p in pts], dtype=np.float64)
    if (t <= 0).any() or (z <= 0).any():
        raise ScheduleError("power-law fit needs positive times and drift values")
    lt, lz = np.log(t), np.log(z)
    design = np.column_stack([np.ones_like(lt), -lt])
    (log_a, b), *_ = np.linalg.lstsq(design, lz, rcond=None)
    rms = float(np.sqrt(np.mean((design @ np.array([log_a, b]) - lz) ** 2)))
    return PowerLawFit(float(np.exp(log_a)), float(b), rms)


def _cumulative(fit: PowerLawFit, t: float) -> float:
    if abs(1.0 - fit.b) < 1e-12:
        return fit.a * math.log(t)
    return fit.a * t ** (1.0 - fit.b) / (1.0 - fit.b)


def _reach(fit: PowerLawFit, start: float, amount: float) -> float:
    """Smallest ``t`` with ``integral_start^t a s^-b ds = amount`` (inf if never)."""
    if amount <= 0.0:
        return start
    if fit.a <= 0.0:
        return math.inf
    if abs(1.0 - fit.b) < 1e-12:
        return start * math.exp(amount / fit.a)
    base = start ** (1.0 - fit.b) + amount * (1.0 - fit.b) / fit.a
    if base <= 0.0:
        return math.inf
    return base ** (1.0 / (1.0 - fit.b))


@dataclass
class Prediction:
    indices: list[int]
    clamped: bool = False


def predict_schedule(
    sched: ScheduleState,
    total_events: int,
    fit: PowerLawFit | None = None,
    force_final: bool = True,
) -> Prediction:
    """Plan the remaining ``budget - observed_triggers`` retrains.

    Per-event drift is taken as ``a * t^-b``; event ``t`` contributes the
    integral over ``[t - 1/2, t + 1/2]``.  Retrain ``j`` lands at the first
    index where the drift accumulated since retrain ``j - 1`` reaches the
    threshold.  With ``force_final`` the last slot is the final event.
    Retrains that would fall past ``total_events`` are spread evenly over
    the remaining range and the prediction is flagged as clamped.
    """
    fit = fit or sched.fit
    if fit is None:
        raise ScheduleError("no power-law fit available")
    if sched.observed_triggers < 1:
        raise ScheduleError("at least one observed trigger is needed before predicting")
    remaining = sched.budget - sched.observed_triggers
    if remaining <= 0:
        return Prediction([])
    theta = sched.theta
    if sched.mode is ThresholdMode.RELATIVE:
        theta *= sched.baseline_norm
    prev = sched.last_trigger
    k = total_events
    free = remaining - 1 if force_final else remaining
    out: list[int] = []
    clamped = False
    for _ in range(free):
        end = _reach(fit, prev + 0.5, theta)
        idx = max(prev + 1, math.ceil(end - 0.5 - 1e-9)) if math.isfinite(end) else math.inf
        if idx > k or (force_final and idx >= k):
            clamped = True
            break
        out.append(int(idx))
        prev = int(idx)
    left = remaining - len(out)
    if left > 0 and (clamped or force_final):
        last = out[-1] if out else sched.last_trigger
        span = k - last
        if span < left:
            raise ScheduleError(f"cannot fit {left} retrains in ({last}, {k}]")
        out.extend(last + round(span * (j + 1) / left) for j in range(left))
    return Prediction(out, clamped)


def periodic_schedule(budget: int, total_events: int) -> list[int]:
    """Retrain every ``total_events / budget`` events, last one at the end."""
    if budget < 1:
        return []
    return sorted({round(total_events * j / budget) for j in range(1, budget + 1)})


@dataclass
class AdaptivePlan:
    observed: list[int]
    predicted: list[int]
    fit: PowerLawFit | None
    clamped: bool = False

    @property
    def schedule(self) -> list[int]:
        return self.observed + self.predicted


def drift_rates(samples: Sequence[DriftSample]) -> list[tuple[int, float]]:
    """Per-event drift rate at each sample (drift divided by the gap since the previous one)."""
    out = []
    prev = 0
    for s in samples:
        gap = s.event_index - prev
        if gap > 0 and s.delta_z > 0:
            out.append((s.event_index, s.delta_z / gap))
        prev = s.event_index
    return out


def plan_adaptive(
    samples: Sequence[DriftSample],
    theta: float,
    budget: int,
    total_events: int,
    mode: ThresholdMode | str = ThresholdMode.ABSOLUTE,
    observed_triggers: int = DEFAULT_OBSERVED_TRIGGERS,
    force_final: bool = True,
) -> AdaptivePlan:
    """Observe until ``observed_triggers`` retrains fired, then fit and predict the rest."""
    sched = ScheduleState(theta=theta, budget=budget, mode=ThresholdMode(mode))
    want = min(observed_triggers, budget)
    for s in samples:
        if sched.observed_triggers >= want:
            break
        observe(sched, s)
    if sched.observed_triggers < want:
        return AdaptivePlan(list(sched.trigger_times), [], None)
    if sched.observed_triggers >= budget:
        return AdaptivePlan(list(sched.trigger_times), [], None)
    sched.fit = fit_power_law(drift_rates(sched.drift_history))
    pred = predict_schedule(sched, total_events, force_final=force_final)
    return AdaptivePlan(list(sched.trigger_times), pred.indices, sched.fit, pred.clamped)


def staleness(
    trigger_times: Iterable[int], timeline: Sequence[tuple[int, np.ndarray]]
) -> float:
    """Sum over checkpoints of ``||Z_t - Z_last||_F``, ``last`` the latest retrain at or before ``t``.

    The model trained at the first checkpoint counts as a retrain.
    """
    if not timeline:
        return 0.0
    by_time = {t: Z for t, Z in timeline}
    triggers = sorted(set(trigger_times))
    missing = [t for t in triggers if t not in by_time]
    if missing:
        raise ScheduleError(f"timeline lacks checkpoints for retrains at {missing}")
    pending = iter(triggers)
    nxt = next(pending, None)
    model = timeline[0][1]
    total = 0.0
    for t, Z in timeline:
        while nxt is not None and nxt <= t:
            model = by_time[nxt]
            nxt = next(pending, None)
        total += float(np.linalg.norm(Z - model))
    return total
