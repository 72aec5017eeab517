"""Second-order equivalent thermal parameter (ETP) model of a cooling TCL.

Each unit couples an air node and a lumped solid-mass node:

    C_a * dT_a/dt = H_m*(T_m - T_a) + U_a*(T_amb - T_a) + Q_a
    C_m * dT_m/dt = H_m*(T_a - T_m) + Q_m

Q_a depends on the compressor mode (Q_a_on while cooling, Q_a_off

otherwise) and a hysteresis thermostat switches the mode: ON when the
air temperature reaches the upper deadband edge T_set + deadband/2, OFF
at the lower edge T_set - deadband/2.

Within a step the mode is held fixed, so the dynamics are affine LTI and
integrate exactly through the matrix exponential of the augmented system.
The thermostat is evaluated once per step, after integration; callers
pick dt small enough that at most one switching event falls in a step
(default 1 minute, far below typical residential cycle times).

Units: temperatures in degC, capacitances in kWh/degC, conductances in
kW/degC, heat rates in kW, dt in minutes (converted to hours internally).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.linalg import expm

from .errors import InvalidInputError

DEFAULT_DT_MINUTES = 1.0


@dataclass(frozen=True)
class TclParams:
    """Thermal and electrical parameters of one TCL.

    Attributes
    ----------
    C_a : float
        Air (fast) node heat capacity, kWh/degC.
    C_m : float
        Solid-mass (slow) node heat capacity, kWh/degC.
    U_a : float
        Envelope conductance between air node and ambient, kW/degC.
    H_m : float
        Conductance between air and mass nodes, kW/degC.
    Q_a_on, Q_a_off : float
        Heat rate into the air node with compressor on / off, kW.
        Negative Q_a_on means cooling.
    Q_m : float
        Heat rate into the mass node, kW.
    P_rate : float
        Electrical power drawn while on, kW.
    """

    C_a: float
    C_m: float
    U_a: float
    H_m: float
    Q_a_on: float
    Q_a_off: float
    Q_m: float
    P_rate: float

    def __post_init__(self) -> None:
        for name in ("C_a", "C_m", "U_a", "H_m"):
            if not getattr(self, name) > 0.0:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("Q_a_on", "Q_a_off", "Q_m", "P_rate"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite, got {getattr(self, name)!r}")

    def duty_cycle(self, T_amb: float, T_set: float) -> float:
        """Steady-state compressor duty fraction from the energy balance
        around mean air temperature T_set."""
        denom = self.Q_a_off - self.Q_a_on
        if denom <= 0.0:
            raise InvalidInputError("cooling model requires Q_a_on < Q_a_off")
        d = (self.U_a * (T_amb - T_set) + self.Q_a_off + self.Q_m) / denom
        return float(np.clip(d, 0.0, 1.0))


# Shipped nominal parameter set, typical of a single-family residence with
# a ~3 ton unit at COP ~3.  Chosen so the one-minute bin model is well
# inside its domain: the mass node is light relative to the air node and
# the duty cycle at the default ambient is ~0.4.
DEFAULT_PARAMS = TclParams(
    C_a=3.0,
    C_m=0.5,
    U_a=0.35,
    H_m=1.0,
    Q_a_on=-10.5,
    Q_a_off=0.0,
    Q_m=0.0,
    P_rate=3.5,
)


@dataclass
class TclState:
    """Instantaneous state of one TCL."""

    T_a: float
    T_m: float
    on: bool
    T_set: float


@dataclass(frozen=True)
class FleetSpec:
    """Recipe for sampling a fleet of TCLs.

    heterogeneity is the half-width of a uniform relative perturbation
    applied independently to every nominal parameter (0 gives a
    homogeneous fleet).  All randomness derives from `seed`.
    """

    n_units: int
    nominal: TclParams = DEFAULT_PARAMS
    heterogeneity: float = 0.0
    deadband: float = 1.0
    T_amb: float = 32.0
    T_set: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_units < 1:
            raise InvalidInputError(f"n_units must be >= 1, got {self.n_units}")
        if not 0.0 <= self.heterogeneity < 1.0:
            raise InvalidInputError(f"heterogeneity must lie in [0, 1), got {self.heterogeneity}")
        if self.deadband <= 0.0:
            raise InvalidInputError(f"deadband must be positive, got {self.deadband}")


@dataclass
class Fleet:
    """Sampled fleet: per-unit parameter arrays plus mutable state arrays."""

    spec: FleetSpec
    params: dict[str, np.ndarray]  # each (n_units,)
    T_a: np.ndarray
    T_m: np.ndarray
    on: np.ndarray  # bool
    T_set: np.ndarray

    @property
    def n_units(self) -> int:
        return self.spec.n_units

    @property
    def P_on_total(self) -> float:
        """Total connected compressor power, kW."""
        return float(self.params["P_rate"].sum())

    def copy(self) -> "Fleet":
        return Fleet(
            spec=self.spec,
            params={k: v.copy() for k, v in self.params.items()},
            T_a=self.T_a.copy(),
            T_m=self.T_m.copy(),
            on=self.on.copy(),
            T_set=self.T_set.copy(),
        )


@dataclass
class FleetTrace:
    """Per-step record of a fleet simulation.  Arrays have horizon+1 rows."""

    power_kw: np.ndarray  # (K+1,)
    T_a: np.ndarray  # (K+1, n)
    T_m: np.ndarray
    on: np.ndarray  # bool
    T_set: np.ndarray
    dt_minutes: float

    def to_csv(self, path) -> None:
        """Write the per-unit trace as rows of step,unit,T_a,T_m,on,T_set."""
        n_steps, n_units = self.T_a.shape
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "unit", "T_a", "T_m", "on", "T_set"])
            for k in range(n_steps):
                for u in range(n_units):
                    writer.writerow(
                        [
                            k,
                            u,
                            repr(float(self.T_a[k, u])),
                            repr(float(self.T_m[k, u])),
                            int(self.on[k, u]),
                            repr(float(self.T_set[k, u])),
                        ]
                    )


def _continuous_matrices(params: TclParams, T_amb: float, on: bool) -> tuple[np.ndarray, np.ndarray]:
    """Drift matrix F and offset g of d/dt [T_a, T_m] = F x + g (per hour)."""
    F = np.array(
        [
            [-(params.U_a + params.H_m) / params.C_a, params.H_m / params.C_a],
            [params.H_m / params.C_m, -params.H_m / params.C_m],
        ]
    )
    q_a = params.Q_a_on if on else params.Q_a_off
    g = np.array([(params.U_a * T_amb + q_a) / params.C_a, params.Q_m / params.C_m])
    return F, g


def discretize(params: TclParams, T_amb: float, on: bool, dt_minutes: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step map x' = A_d x + b_d for a fixed mode.

    Uses the matrix exponential of the augmented 3x3 system, which is
    exact for the affine dynamics regardless of dt.
    """
    if dt_minutes <= 0.0:
        raise InvalidInputError(f"dt_minutes must be positive, got {dt_minutes}")
    F, g = _continuous_matrices(params, T_amb, on)
    M = np.zeros((3, 3))
    M[:2, :2] = F
    M[:2, 2] = g
    E = expm(M * (dt_minutes / 60.0))
    return E[:2, :2], E[:2, 2]


def apply_thermostat(T_a, T_set, on, deadband):
    """Hysteresis logic for a cooling TCL; works elementwise on arrays."""
    upper = T_set + 0.5 * deadband
    lower = T_set - 0.5 * deadband
    return np.where(T_a >= upper, True, np.where(T_a <= lower, False, on))


def step_tcl(
    state: TclState,
    params: TclParams,
    T_amb: float,
    deadband: float,
    dt_minutes: float = DEFAULT_DT_MINUTES,
) -> TclState:
    """Advance one TCL by one step: exact integration, then thermostat.

    Returns a new TclState; the input is not modified.
    """
    if deadband <= 0.0:
        raise InvalidInputError(f"deadband must be positive, got {deadband}")
    for name, value in (("T_a", state.T_a), ("T_m", state.T_m), ("T_set", state.T_set), ("T_amb", T_amb)):
        if not np.isfinite(value):
            raise InvalidInputError(f"{name} must be finite, got {value!r}")
    A_d, b_d = discretize(params, T_amb, state.on, dt_minutes)
    x = A_d @ np.array([state.T_a, state.T_m]) + b_d
    on = bool(apply_thermostat(x[0], state.T_set, state.on, deadband))
    return TclState(T_a=float(x[0]), T_m=float(x[1]), on=on, T_set=state.T_set)


def sample_fleet(spec: FleetSpec) -> Fleet:
    """Draw the fleet a FleetSpec describes, deterministically in the seed.

    Parameters get independent uniform relative perturbations of
    half-width `heterogeneity`; initial air temperatures are uniform on
    the deadband, mass temperatures start equal to air, and the initial
    mode is Bernoulli with the nominal duty cycle.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_units
    params: dict[str, np.ndarray] = {}
    for f in fields(TclParams):
        nominal = getattr(spec.nominal, f.name)
        factors = 1.0 + spec.heterogeneity * rng.uniform(-1.0, 1.0, size=n)
        params[f.name] = nominal * factors
    half = 0.5 * spec.deadband
    T_a = rng.uniform(spec.T_set - half, spec.T_set + half, size=n)
    duty = spec.nominal.duty_cycle(spec.T_amb, spec.T_set)
    on = rng.uniform(size=n) < duty
    return Fleet(
        spec=spec,
        params=params,
        T_a=T_a,
        T_m=T_a.copy(),
        on=on,
        T_set=np.full(n, spec.T_set, dtype=float),
    )


class FleetStepper:
    """Precomputed per-unit one-step maps for both modes.

    Caches the exact discretization for a fixed (T_amb, dt) pair so the
    per-step work is a couple of batched 2x2 affine maps.
    """

    def __init__(self, fleet: Fleet, T_amb: float, dt_minutes: float = DEFAULT_DT_MINUTES):
        if dt_minutes <= 0.0:
            raise InvalidInputError(f"dt_minutes must be positive, got {dt_minutes}")
        self.fleet = fleet
        self.T_amb = float(T_amb)
        self.dt_minutes = float(dt_minutes)
        self.deadband = fleet.spec.deadband
        p = fleet.params
        n = fleet.n_units
        dt_h = dt_minutes / 60.0
        M = np.zeros((2, n, 3, 3))
        for mode, q_a in enumerate((p["Q_a_off"], p["Q_a_on"])):
            M[mode, :, 0, 0] = -(p["U_a"] + p["H_m"]) / p["C_a"]
            M[mode, :, 0, 1] = p["H_m"] / p["C_a"]
            M[mode, :, 1, 0] = p["H_m"] / p["C_m"]
            M[mode, :, 1, 1] = -p["H_m"] / p["C_m"]
            M[mode, :, 0, 2] = (p["U_a"] * self.T_amb + q_a) / p["C_a"]
            M[mode, :, 1, 2] = p["Q_m"] / p["C_m"]
        E = expm(M.reshape(2 * n, 3, 3) * dt_h).reshape(2, n, 3, 3)
        # index 0: compressor off, 1: on
        self.A_d = E[:, :, :2, :2]
        self.b_d = E[:, :, :2, 2]

    def advance(self) -> None:
        """One in-place step of the whole fleet: integrate, then thermostat."""
        f = self.fleet
        mode = f.on.astype(int)
        A = self.A_d[mode, np.arange(f.n_units)]
        b = self.b_d[mode, np.arange(f.n_units)]
        x = np.stack([f.T_a, f.T_m], axis=1)
        x = np.einsum("nij,nj->ni", A, x) + b
        f.T_a = x[:, 0]
        f.T_m = x[:, 1]
        f.on = apply_thermostat(f.T_a, f.T_set, f.on, self.deadband)

    def power_kw(self) -> float:
        """Current aggregate electrical demand, kW."""
        f = self.fleet
        return float(self.fleet.params["P_rate"][f.on].sum())


def simulate_fleet(
    fleet: Fleet,
    T_amb: float,
    deadband: float,
    dt_minutes: float,
    horizon: int,
    setpoint_schedule: dict[int, float] | None = None,
    record_traces: bool = True,
) -> FleetTrace:
    """Simulate the fleet for `horizon` steps; the fleet is advanced in place.

    setpoint_schedule maps step index k to a new common setpoint applied
    just before the thermostat decision of step k.  The returned power
    trace has horizon+1 samples, index 0 being the initial condition.
    """
    if horizon < 0:
        raise InvalidInputError(f"horizon must be >= 0, got {horizon}")
    schedule = setpoint_schedule or {}
    for k in schedule:
        if not 0 <= k < max(horizon, 1):
            raise InvalidInputError(f"setpoint schedule step {k} outside horizon {horizon}")
    stepper = FleetStepper(fleet, T_amb, dt_minutes)
    stepper.deadband = deadband
    n = fleet.n_units
    power = np.empty(horizon + 1)
    if record_traces:
        T_a = np.empty((horizon + 1, n))
        T_m = np.empty((horizon + 1, n))
        on = np.empty((horizon + 1, n), dtype=bool)
        T_set = np.empty((horizon + 1, n))
    power[0] = stepper.power_kw()
    if record_traces:
        T_a[0], T_m[0], on[0], T_set[0] = fleet.T_a, fleet.T_m, fleet.on, fleet.T_set
    for k in range(horizon):
        if k in schedule:
            fleet.T_set = np.full(n, float(schedule[k]))
        stepper.advance()
        power[k + 1] = stepper.power_kw()
        if record_traces:
            T_a[k + 1], T_m[k + 1] = fleet.T_a, fleet.T_m
            on[k + 1], T_set[k + 1] = fleet.on, fleet.T_set
    if not record_traces:
        z2 = np.zeros((0, n))
        return FleetTrace(power, z2, z2.copy(), z2.astype(bool), z2.copy(), dt_minutes)
    return FleetTrace(power, T_a, T_m, on, T_set, dt_minutes)
