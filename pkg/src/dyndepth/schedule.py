"""Adaptive depth score scheduling.

Turns the previous scale's per-layer feature deltas into per-position depth
scores: aggregate deltas into a base decision map, normalize to strict-greater
percentile ranks, then map ranks through a monotone non-increasing schedule
function whose free parameter is solved from a compute budget. A cyclic
rotation of the rank axis (pivot ``eta``) keeps low-ranked regions from being
starved on every scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import as_scalar_map, bilinear_resize


class ReferenceMetric(Enum):
    MAE = "mae"
    MSE = "mse"
    SUB = "sub"


class BudgetMode(Enum):
    SEGMENT_INTEGRAL = "segment_integral"
    FULL_INTEGRAL = "full_integral"


@dataclass(frozen=True)
class ScheduleFamily:
    """One of the decaying rank-to-score profiles.

    kind: "sigmoid", "linear_a" or "linear_b"; ``k`` is the sigmoid
    sharpness and is ignored by the linear families.
    """

    kind: str
    k: float = 12.0

    def __post_init__(self):
        if self.kind not in ("sigmoid", "linear_a", "linear_b"):
            raise ValueError(f"unknown schedule family {self.kind!r}")


@dataclass(frozen=True)
class SchedulerConfig:
    metric: ReferenceMetric = ReferenceMetric.MAE
    layer_range: tuple[int, int] = (3, 19)
    family: ScheduleFamily = field(default_factory=lambda: ScheduleFamily("sigmoid", 12.0))
    eta: float = 0.8
    reference_scale: int = 6
    rotation_enabled: bool = True
    budget_mode: BudgetMode = BudgetMode.SEGMENT_INTEGRAL

    def __post_init__(self):
        lo, hi = self.layer_range
        if not 0 <= lo <= hi:
            raise ValueError(f"invalid layer range {self.layer_range}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must be in (0,1), got {self.eta}")


def reference_response(delta: np.ndarray, metric: ReferenceMetric) -> np.ndarray:
    """Reduce a (h, w, c) delta grid to a per-position scalar response.

    MAE and MSE take the channel mean of |v| and v^2; SUB takes the channel
    mean and subtracts the map-wide mean so the result is zero-mean.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.ndim != 3 or delta.shape[2] < 1:
        raise ValueError(f"delta must be (h, w, c), got shape {delta.shape}")
    if metric is ReferenceMetric.MAE:
        return np.abs(delta).mean(axis=2)
    if metric is ReferenceMetric.MSE:
        return (delta * delta).mean(axis=2)
    sub = delta.mean(axis=2)
    return sub - sub.mean()


def base_decision_map(cache, cfg: SchedulerConfig, h_out: int, w_out: int) -> np.ndarray:
    """Sum reference responses over the configured layer range, then upsample."""
    lo, hi = cfg.layer_range
    total = None
    for layer in range(lo, hi + 1):
        resp = reference_response(cache.layer_delta(layer), cfg.metric)
        total = resp if total is None else total + resp
    return bilinear_resize(total, h_out, w_out)


def percentile_ranks(base: np.ndarray) -> np.ndarray:
    """Fraction of positions with strictly greater value, per position.

    Ties share ranks; values lie in [0, 1 - 1/(h*w)] and at least one
    position (a maximum) has rank 0.
    """
    base = as_scalar_map(base)
    flat = base.ravel()
    n = flat.size
    order = np.sort(flat)
    greater = n - np.searchsorted(order, flat, side="right")
    return (greater / n).reshape(base.shape)


def schedule_value(family: ScheduleFamily, c: float, x) -> np.ndarray | float:
    """Evaluate the schedule function at rank x in [0, 1], clamped to [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if family.kind == "sigmoid":
        # numerically safe logistic; exact 1.0/0.0 under exp over/underflow
        t = family.k * (x - c)
        with np.errstate(over="ignore"):
            val = 1.0 / (1.0 + np.exp(t))
    elif family.kind == "linear_a":
        val = 1.0 - c * x
    else:  # linear_b
        val = c * (x - 1.0)
    out = np.clip(val, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def schedule_area(family: ScheduleFamily, c: float) -> float:
    """Closed-form integral of the clamped schedule function over [0, 1]."""
    if family.kind == "sigmoid":
        k = family.k

        def softplus(t):
            return max(t, 0.0) + math.log1p(math.exp(-abs(t)))

        return (softplus(k * c) - softplus(k * (c - 1.0))) / k
    if family.kind == "linear_a":
        if c <= 0.0:
            return 1.0
        if c <= 1.0:
            return 1.0 - c / 2.0
        return 1.0 / (2.0 * c)
    # linear_b: b = -c, profile b*(1-x) clipped to [0, 1]
    b = -c
    if b <= 0.0:
        return 0.0
    if b <= 1.0:
        return b / 2.0
    return 1.0 - 1.0 / (2.0 * b)


@dataclass(frozen=True)
class BudgetSolution:
    """Solved schedule parameter plus the integral actually achieved."""

    c: float
    area: float  # realized integral of G over [0, 1]
    required_area: float
    saturated: bool


_C_BOUND = 1e6
_BISECT_STEPS = 200
_BISECT_TOL = 1e-9


def solve_budget_param(
    family: ScheduleFamily,
    eta: float,
    target: float,
    mode: BudgetMode = BudgetMode.SEGMENT_INTEGRAL,
) -> BudgetSolution:
    """Solve the schedule parameter c so the budgeted integral hits target.

    Under the rotated schedule both budget modes reduce to a constraint on
    A(c) = integral of G over [0, 1]: the segment mode needs
    eta * A(c) = target, the full mode A(c) = target. A(c) is continuous
    and monotone in c for every family, so bisection applies; if the
    requirement exceeds the achievable range, c saturates at the boundary
    and the realized area is reported in the result.
    """
    if target <= 0.0:
        raise ValueError(f"target must be positive, got {target}")
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must be in (0,1), got {eta}")
    required = target / eta if mode is BudgetMode.SEGMENT_INTEGRAL else target

    if family.kind == "sigmoid":
        lo, hi = -_C_BOUND, _C_BOUND
        increasing = True
    elif family.kind == "linear_a":
        lo, hi = 0.0, _C_BOUND
        increasing = False
    else:  # linear_b
        lo, hi = -_C_BOUND, 0.0
        increasing = False

    a_lo, a_hi = schedule_area(family, lo), schedule_area(family, hi)
    a_min, a_max = min(a_lo, a_hi), max(a_lo, a_hi)
    if required >= a_max:
        c = lo if a_lo >= a_hi else hi
        return BudgetSolution(c, schedule_area(family, c), required, True)
    if required <= a_min:
        c = lo if a_lo <= a_hi else hi
        return BudgetSolution(c, schedule_area(family, c), required, True)

    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        a_mid = schedule_area(family, mid)
        if abs(a_mid - required) <= _BISECT_TOL:
            return BudgetSolution(mid, a_mid, required, False)
        if (a_mid < required) == increasing:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    a_c = schedule_area(family, c)
    if abs(a_c - required) > 1e-6:
        raise RuntimeError(
            f"budget bisection failed to converge: family={family.kind} "
            f"required={required} reached={a_c}"
        )
    return BudgetSolution(c, a_c, required, False)


def rotated_schedule(family: ScheduleFamily, c: float, eta: float, rho) -> np.ndarray | float:
    """Schedule with the rank axis cyclically rotated about pivot eta.

    Ranks up to eta are stretched onto [0, 1]; ranks past eta are mapped
    back down from the top, so G'(0) = G'(1) = G(0) and the minimum G(1)
    sits exactly at rho = eta.
    """
    rho = np.asarray(rho, dtype=np.float64)
    left = rho <= eta
    arg = np.where(left, rho / eta, (1.0 - rho) / (1.0 - eta))
    out = schedule_value(family, c, np.clip(arg, 0.0, 1.0))
    return float(out) if np.ndim(out) == 0 else out


def depth_scores(percentiles: np.ndarray, cfg: SchedulerConfig, c: float) -> np.ndarray:
    """Per-position depth scores in [0, 1] from percentile ranks."""
    p = as_scalar_map(percentiles)
    if cfg.rotation_enabled:
        return np.asarray(rotated_schedule(cfg.family, c, cfg.eta, p))
    return np.asarray(schedule_value(cfg.family, c, p))


def depth_map(scores: np.ndarray, num_layers: int) -> np.ndarray:
    """Integer per-position depths floor(score * L), in [0, L]."""
    if num_layers < 1:
        raise ValueError(f"layer count must be >= 1, got {num_layers}")
    s = as_scalar_map(scores)
    if s.min() < 0.0 or s.max() > 1.0:
        raise ValueError("depth scores must lie in [0, 1]")
    return np.floor(s * num_layers).astype(np.int64)
