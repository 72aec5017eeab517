"""Cross-validation of the population model against unit-level simulation.

Population-level plans prescribe fractional control mass per bin; a real
fleet actuates whole units.  The bridge is an integer draw with a
per-bin error carry,

    U[k] = n_units * u[k]
    u_hat[k] = floor(U[k] + e[k]),   e[0] = 0
    e[k+1] = U[k] + e[k] - u_hat[k]

which keeps the cumulative actuated unit count within one unit per bin
of the continuous prescription.  The discretized plan is then applied
to an agent-based fleet (uniform random unit selection inside each bin,
each unit switched at most once) and the resulting aggregate power is
compared against the bin model's prediction.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ValidationDegradedWarning
from .etp import Fleet, FleetStepper
from .markov import BinGrid
from .reachhold import ControlPlan

SHORTFALL_WARN_FRACTION = 0.05
FLOOR_NUDGE = 1e-9  # absorbs float dust so exact integers floor cleanly


@dataclass
class DiscretizedPlan:
    """Integer actuation schedule: counts[k, i] units to switch out of
    state i at step k, plus the carry history that produced it."""

    counts: np.ndarray  # (T, n_states) int
    carry: np.ndarray  # (T+1, n_states); carry[0] = 0, carry[-1] = final error
    n_units: int

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2 or not np.issubdtype(self.counts.dtype, np.integer):
            raise InvalidInputError("counts must be a 2-D integer array")
        if np.any(self.counts < 0):
            raise InvalidInputError("counts must be nonnegative")
        if int(self.counts.sum()) > self.n_units:
            raise InvalidInputError(
                f"plan actuates {int(self.counts.sum())} units but the fleet has {self.n_units}"
            )

    @property
    def total_requested(self) -> int:
        return int(self.counts.sum())


def discretize_plan(plan: ControlPlan, n_units: int, x_0: np.ndarray | None = None) -> DiscretizedPlan:
    """Floor-with-carry conversion of a fractional plan to unit counts.

    Profile plans (alpha form) need the occupancy x_0 they scale.
    """
    if n_units < 1:
        raise InvalidInputError(f"n_units must be >= 1, got {n_units}")
    if plan.alpha is not None:
        if x_0 is None:
            raise InvalidInputError("profile plans need x_0 to expand into per-bin mass")
        u = plan.as_u(x_0)
    else:
        u = plan.u
    U = np.clip(u, 0.0, None) * n_units
    T, n_states = U.shape
    counts = np.zeros((T, n_states), dtype=int)
    carry = np.zeros((T + 1, n_states))
    e = np.zeros(n_states)
    for k in range(T):
        tot = U[k] + e
        c = np.floor(tot + FLOOR_NUDGE).astype(int)
        counts[k] = c
        e = tot - c
        carry[k + 1] = e
    return DiscretizedPlan(counts=counts, carry=carry, n_units=n_units)


@dataclass
class MicroRun:
    """Outcome of applying a discretized plan to an agent-based fleet."""

    power_kw: np.ndarray  # (horizon+1,)
    actuated: np.ndarray  # (n_units,) bool, final
    shortfall_events: list[dict]  # {"step", "state", "requested", "selected"}
    total_requested: int
    total_selected: int
    dt_minutes: float

    @property
    def shortfall_fraction(self) -> float:
        if self.total_requested == 0:
            return 0.0
        return 1.0 - self.total_selected / self.total_requested

    @property
    def degraded(self) -> bool:
        return self.shortfall_fraction > SHORTFALL_WARN_FRACTION


def apply_plan_micro(
    fleet: Fleet,
    plan: DiscretizedPlan,
    grid: BinGrid,
    T_set_new: float,
    T_amb: float,
    deadband: float,
    dt_minutes: float = 1.0,
    horizon: int | None = None,
    seed: int = 0,
) -> MicroRun:
    """Run the fleet forward, switching plan.counts[k, i] not-yet-actuated
    units out of state i at each step k (uniform random within the bin,
    deterministic in the seed).  The fleet is advanced in place.

    If a bin holds fewer eligible units than requested, all of them are
    taken and the shortfall is logged; a total shortfall above 5% of the
    requested actuations raises a validation-degraded warning.
    """
    counts = plan.counts
    T = counts.shape[0]
    K = T if horizon is None else int(horizon)
    if K < T:
        raise InvalidInputError(f"horizon {K} shorter than the plan ({T} steps)")
    if counts.shape[1] != grid.n_states:
        raise InvalidInputError(
            f"plan has {counts.shape[1]} states but the grid has {grid.n_states}"
        )
    if plan.n_units != fleet.n_units:
        raise InvalidInputError(
            f"plan discretized for {plan.n_units} units, fleet has {fleet.n_units}"
        )
    rng = np.random.default_rng(seed)
    stepper = FleetStepper(fleet, T_amb, dt_minutes)
    stepper.deadband = deadband
    actuated = np.zeros(fleet.n_units, dtype=bool)
    power = np.empty(K + 1)
    power[0] = stepper.power_kw()
    shortfalls: list[dict] = []
    selected_total = 0
    for k in range(K):
        if k < T and counts[k].any():
            state_idx = grid.temp_bin(fleet.T_a) + grid.n_bins * fleet.on.astype(int)
            for i in np.flatnonzero(counts[k]):
                want = int(counts[k][i])
                pool = np.flatnonzero(~actuated & (state_idx == i))
                take = min(want, pool.size)
                if take < want:
                    shortfalls.append(
                        {"step": k, "state": int(i), "requested": want, "selected": take}
                    )
                if take > 0:
                    chosen = rng.choice(pool, size=take, replace=False)
                    fleet.T_set[chosen] = T_set_new
                    actuated[chosen] = True
                    selected_total += take
        stepper.advance()
        power[k + 1] = stepper.power_kw()
    run = MicroRun(
        power_kw=power,
        actuated=actuated,
        shortfall_events=shortfalls,
        total_requested=plan.total_requested,
        total_selected=selected_total,
        dt_minutes=dt_minutes,
    )
    if run.degraded:
        warnings.warn(
            f"micro run short {run.shortfall_fraction:.1%} of requested actuations",
            ValidationDegradedWarning,
        )
    return run


def burn_in(
    fleet: Fleet,
    T_amb: float,
    deadband: float,
    dt_minutes: float = 1.0,
    steps: int = 240,
    baseline_window: int | None = None,
) -> float:
    """Advance the fleet to statistical steady state and return the mean
    aggregate power over the trailing window (default: the second half),
    which serves as the micro-side nominal demand estimate."""
    if steps < 1:
        raise InvalidInputError(f"steps must be >= 1, got {steps}")
    stepper = FleetStepper(fleet, T_amb, dt_minutes)
    stepper.deadband = deadband
    power = np.empty(steps)
    for k in range(steps):
        stepper.advance()
        power[k] = stepper.power_kw()
    window = baseline_window if baseline_window is not None else steps // 2
    window = max(1, min(window, steps))
    return float(power[-window:].mean())


@dataclass
class ValidationReport:
    """Agreement metrics between a bin-model trace and a micro trace.

    rmse and max_abs_dev are normalized by the fleet's connected power;
    hold metrics are present only when a hold target was supplied.
    """

    rmse: float
    max_abs_dev: float
    hold_satisfied_fraction: float | None
    p_on_total_kw: float
    shortfall_events: list[dict]
    degraded: bool

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "max_abs_dev": self.max_abs_dev,
            "hold_satisfied_fraction": self.hold_satisfied_fraction,
            "p_on_total_kw": self.p_on_total_kw,
            "shortfall_events": self.shortfall_events,
            "degraded": self.degraded,
        }


def compare_traces(
    markov_kw: np.ndarray,
    micro_kw: np.ndarray,
    p_on_total: float,
    P_hold_kw: float | None = None,
    T_hold_steps: int | None = None,
    baseline_kw: float | None = None,
    hold_tol_kw: float | None = None,
    shortfall_events: list[dict] | None = None,
    degraded: bool = False,
) -> ValidationReport:
    """Normalized agreement metrics on two equal-length power traces.

    When a hold target (P_hold_kw, T_hold_steps) is given, the fraction
    of hold steps whose micro demand reduction baseline_kw - micro_kw[k]
    stays within hold_tol_kw of the target is reported as well (default
    tolerance 5% of connected power).
    """
    markov_kw = np.asarray(markov_kw, dtype=float)
    micro_kw = np.asarray(micro_kw, dtype=float)
    if markov_kw.shape != micro_kw.shape or markov_kw.ndim != 1:
        raise InvalidInputError(
            f"traces must be equal-length 1-D arrays, got {markov_kw.shape} and {micro_kw.shape}"
        )
    if p_on_total <= 0.0:
        raise InvalidInputError(f"p_on_total must be positive, got {p_on_total}")
    dev = markov_kw - micro_kw
    rmse = float(np.sqrt(np.mean(dev**2)) / p_on_total)
    max_abs = float(np.max(np.abs(dev)) / p_on_total)
    fraction = None
    if P_hold_kw is not None:
        if T_hold_steps is None or baseline_kw is None:
            raise InvalidInputError("hold checks need T_hold_steps and baseline_kw")
        if not 1 <= T_hold_steps < micro_kw.size:
            raise InvalidInputError(
                f"T_hold_steps {T_hold_steps} outside the trace (len {micro_kw.size})"
            )
        tol = hold_tol_kw if hold_tol_kw is not None else 0.05 * p_on_total
        reduction = baseline_kw - micro_kw[1 : T_hold_steps + 1]
        fraction = float(np.mean(reduction >= P_hold_kw - tol))
    return ValidationReport(
        rmse=rmse,
        max_abs_dev=max_abs,
        hold_satisfied_fraction=fraction,
        p_on_total_kw=float(p_on_total),
        shortfall_events=shortfall_events or [],
        degraded=degraded,
    )


def save_validation_report(
    report: ValidationReport,
    markov_kw: np.ndarray,
    micro_kw: np.ndarray,
    json_path,
    csv_path,
) -> None:
    """Persist the metrics as JSON and the paired traces as CSV."""
    with open(str(json_path), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    markov_kw = np.asarray(markov_kw, dtype=float)
    micro_kw = np.asarray(micro_kw, dtype=float)
    if markov_kw.shape != micro_kw.shape:
        raise InvalidInputError("paired traces must have equal length")
    with open(str(csv_path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "markov_kW", "micro_kW"])
        for k in range(markov_kw.size):
            writer.writerow([k, repr(float(markov_kw[k])), repr(float(micro_kw[k]))])
