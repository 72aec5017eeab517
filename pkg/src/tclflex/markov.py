"""Markov-chain bin model of an aggregate TCL population.

State space: N temperature bins for compressor-off units followed by N
bins for compressor-on units (2N states total, cold to hot within each
block).  A column-stochastic matrix A maps the population fraction
vector forward one timestep; columns are estimated by Monte-Carlo
one-step simulation of a representative unit.

Population fractions live in [0, 1] and sum to one over the whole fleet;
multiplying by the fleet's connected power via the output vector turns
occupancy of the on-block into aggregate demand in kW.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstraintViolationError,
    InvalidConfigurationError,
    InvalidInputError,
    NumericalFailureError,
)
from .etp import TclParams, apply_thermostat, discretize

DEFAULT_N_SAMPLES = 20000


@dataclass(frozen=True)
class BinGrid:
    """Uniform temperature grid over [T_min, T_max] with n_bins bins.

    Bins are half-open [edge_i, edge_{i+1}) except the last, which is
    closed.  State indices 0..n_bins-1 are the off block and
    n_bins..2*n_bins-1 the on block, both ordered cold to hot.
    """

    T_min: float
    T_max: float
    n_bins: int

    def __post_init__(self) -> None:
        if not self.T_max > self.T_min:
            raise InvalidInputError(f"need T_max > T_min, got [{self.T_min}, {self.T_max}]")
        if self.n_bins < 1:
            raise InvalidInputError(f"n_bins must be >= 1, got {self.n_bins}")

    @property
    def delta_tau(self) -> float:
        return (self.T_max - self.T_min) / self.n_bins

    @property
    def n_states(self) -> int:
        return 2 * self.n_bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.T_min, self.T_max, self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def temp_bin(self, T_a) -> np.ndarray:
        """Temperature bin index (0..n_bins-1); excursions beyond the grid
        clip into the boundary bins."""
        idx = np.floor((np.asarray(T_a) - self.T_min) / self.delta_tau).astype(int)
        return np.clip(idx, 0, self.n_bins - 1)

    def state_index(self, T_a, on) -> np.ndarray:
        """Full state index combining temperature bin and mode block."""
        return self.temp_bin(T_a) + self.n_bins * np.asarray(on).astype(int)

    def on_mask(self) -> np.ndarray:
        """Boolean mask of length 2*n_bins selecting the on block."""
        m = np.zeros(self.n_states, dtype=bool)
        m[self.n_bins :] = True
        return m

    def band_strictly_inside(self, T_set: float, deadband: float) -> bool:
        return self.T_min < T_set - 0.5 * deadband and T_set + 0.5 * deadband < self.T_max


def build_grid(T_min: float = 18.0, T_max: float = 24.0, n_bins: int = 40) -> BinGrid:
    """Construct the default-shaped temperature grid."""
    return BinGrid(T_min=T_min, T_max=T_max, n_bins=n_bins)


@dataclass
class TransitionMatrix:
    """Estimated one-step transition matrix with its operating point.

    P[j, i] is the probability of moving from state i to state j over
    one dt under thermostat control at (T_set, deadband) and ambient
    T_amb.  Columns sum to one.
    """

    P: np.ndarray
    grid: BinGrid
    dt_minutes: float
    T_set: float
    T_amb: float
    deadband: float

    def validate(self, tol: float = 1e-9) -> None:
        n = self.grid.n_states
        if self.P.shape != (n, n):
            raise InvalidInputError(f"matrix shape {self.P.shape} does not match grid ({n} states)")
        if np.any(self.P < 0.0):
            raise NumericalFailureError("transition matrix has negative entries")
        worst = np.abs(self.P.sum(axis=0) - 1.0).max()
        if worst > tol:
            raise NumericalFailureError(f"column sums deviate from 1 by {worst:.3e} (> {tol:.1e})")


def estimate_transition_matrix(
    params: TclParams,
    grid: BinGrid,
    T_set: float,
    deadband: float,
    T_amb: float,
    dt_minutes: float = 1.0,
    n_samples: int = DEFAULT_N_SAMPLES,
    seed: int = 0,
) -> TransitionMatrix:
    """Monte-Carlo estimate of the one-step transition matrix.

    Each column draws n_samples air temperatures uniformly inside its
    bin, sets the mass node to its quasi-steady value T_a + Q_m/H_m,
    advances one exact ETP step in the bin's mode, applies the
    thermostat at (T_set, deadband), and counts destination states.
    Columns are normalized after counting.  Per-column seeds spawn from
    the master seed, so results do not depend on evaluation order.
    """
    if n_samples < 1000:
        raise InvalidInputError(f"n_samples must be >= 1000 per bin, got {n_samples}")
    if not grid.band_strictly_inside(T_set, deadband):
        raise InvalidConfigurationError(
            f"deadband [{T_set - deadband / 2}, {T_set + deadband / 2}] not strictly inside "
            f"grid [{grid.T_min}, {grid.T_max}]"
        )
    N = grid.n_bins
    edges = grid.edges
    maps = {on: discretize(params, T_amb, on, dt_minutes) for on in (False, True)}
    T_m_offset = params.Q_m / params.H_m
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = root.spawn(2 * N)
    P = np.zeros((2 * N, 2 * N))
    for i in range(2 * N):
        on = i >= N
        b = i % N
        rng = np.random.default_rng(seeds[i])
        T_a = rng.uniform(edges[b], edges[b + 1], size=n_samples)
        T_m = T_a + T_m_offset
        A_d, b_d = maps[on]
        T_a_next = A_d[0, 0] * T_a + A_d[0, 1] * T_m + b_d[0]
        on_next = apply_thermostat(T_a_next, T_set, np.full(n_samples, on), deadband)
        dest = grid.state_index(T_a_next, on_next)
        counts = np.bincount(dest, minlength=2 * N).astype(float)
        total = counts.sum()
        if total == 0.0:  # defensive: cannot happen for n_samples >= 1
            P[i, i] = 1.0
        else:
            P[:, i] = counts / total
    tm = TransitionMatrix(P=P, grid=grid, dt_minutes=dt_minutes, T_set=T_set, T_amb=T_amb, deadband=deadband)
    tm.validate()
    return tm


@dataclass
class StationaryResult:
    """Outcome of the stationary-distribution search."""

    x: np.ndarray
    residual: float  # ||A x - x||_inf at the returned iterate
    iterations: int
    unique: bool  # single eigenvalue at 1 (within 1e-8)


def _deadband_start(tm: TransitionMatrix) -> np.ndarray:
    """Uniform mass over both mode blocks of the bins meeting the deadband."""
    grid = tm.grid
    centers = grid.centers
    lo = tm.T_set - 0.5 * tm.deadband
    hi = tm.T_set + 0.5 * tm.deadband
    inside = (centers >= lo - grid.delta_tau) & (centers <= hi + grid.delta_tau)
    x = np.concatenate([inside, inside]).astype(float)
    return x / x.sum()


def stationary_distribution(
    tm: TransitionMatrix,
    tol: float = 1e-10,
    max_iter: int = 500_000,
) -> StationaryResult:
    """Fixed point of the transition matrix by power iteration.

    Starts from uniform mass on the deadband bins and iterates, restarting
    from the average of the last two iterates if progress stalls (this
    suppresses oscillatory components without deflating anything).  The
    iterate with the smallest residual is polished until no further
    improvement and returned.  Residuals above `tol` raise
    NumericalFailureError with the best residual achieved.
    """
    A = tm.P
    x = _deadband_start(tm)
    best_x = x
    best_res = float(np.abs(A @ x - x).max())
    iterations = 0
    stall_window = 1000
    last_improvement = 0
    while iterations < max_iter:
        x_next = A @ x
        s = x_next.sum()
        if s <= 0.0 or not np.isfinite(s):
            raise NumericalFailureError("power iteration lost probability mass")
        x_next = x_next / s
        res = float(np.abs(A @ x_next - x_next).max())
        iterations += 1
        if res < best_res:
            best_res, best_x = res, x_next
            last_improvement = iterations
        if iterations - last_improvement >= stall_window:
            if best_res <= tol:
                break
            # deflation-free restart: averaged iterate kills period-2 modes
            x_next = 0.5 * (x_next + x)
            x_next = x_next / x_next.sum()
            last_improvement = iterations
        x = x_next
    if best_res > tol:
        raise NumericalFailureError(
            f"stationary distribution did not converge: residual {best_res:.3e} > {tol:.1e} "
            f"after {iterations} iterations"
        )
    eigvals = np.linalg.eigvals(A)
    unique = int(np.sum(np.abs(eigvals - 1.0) < 1e-8)) == 1
    return StationaryResult(x=best_x, residual=best_res, iterations=iterations, unique=unique)


@dataclass
class PopulationState:
    """Fractions of the fleet in each state, split into the nominal-setpoint
    population x and the actuated population x_a."""

    x: np.ndarray
    x_a: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.x_a = np.asarray(self.x_a, dtype=float)
        if self.x.shape != self.x_a.shape:
            raise InvalidInputError("x and x_a must have the same shape")
        if np.any(self.x < -1e-12) or np.any(self.x_a < -1e-12):
            raise InvalidInputError("population fractions must be nonnegative")
        mass = self.x.sum() + self.x_a.sum()
        if abs(mass - 1.0) > 1e-9:
            raise InvalidInputError(f"total population mass {mass!r} deviates from 1 by > 1e-9")


@dataclass(frozen=True)
class OutputVector:
    """Maps a population vector to aggregate demand in kW."""

    c: np.ndarray
    P_on_total: float


def output_vector(grid: BinGrid, P_on_total: float) -> OutputVector:
    """Demand readout: P_on_total on the on block, zero on the off block."""
    if P_on_total <= 0.0:
        raise InvalidInputError(f"P_on_total must be positive, got {P_on_total}")
    return OutputVector(c=np.where(grid.on_mask(), P_on_total, 0.0), P_on_total=P_on_total)


def step_population(
    state: PopulationState,
    u: np.ndarray,
    A: TransitionMatrix,
    A_a: TransitionMatrix,
) -> PopulationState:
    """Advance one step, moving control mass u from x into the actuated
    population: x' = A (x - u), x_a' = A_a (x_a + u).

    u must satisfy 0 <= u <= x elementwise (small numerical slack is
    tolerated and clipped)."""
    u = np.asarray(u, dtype=float)
    if u.shape != state.x.shape:
        raise InvalidInputError(f"u shape {u.shape} does not match state {state.x.shape}")
    slack = 1e-9 * max(1.0, float(state.x.max(initial=0.0)))
    low = u < -slack
    high = u > state.x + slack
    if np.any(low | high):
        i = int(np.argmax(low | high))
        raise ConstraintViolationError(
            f"u[{i}]={u[i]!r} outside [0, x[{i}]={state.x[i]!r}]"
        )
    u = np.clip(u, 0.0, state.x)
    return PopulationState(x=A.P @ (state.x - u), x_a=A_a.P @ (state.x_a + u))


def aggregate_power(state: PopulationState, c: OutputVector) -> float:
    """Total demand of both populations, kW."""
    return float(c.c @ (state.x + state.x_a))


def x_out_vector(grid: BinGrid, T_set: float, deadband: float) -> np.ndarray:
    """Unit mass at the lower deadband edge, compressor running.

    The mass sits in the on-block bin containing T_set - deadband/2;
    if the edge coincides with a bin boundary (within 1e-9), the colder
    adjacent bin is used.  Running at the cold edge maximizes how long
    the squeezed system keeps drawing rated power, which is what makes
    it useful as a relaxation anchor.
    """
    T_edge = T_set - 0.5 * deadband
    if not grid.T_min < T_edge < grid.T_max:
        raise InvalidConfigurationError(f"lower deadband edge {T_edge} outside grid")
    b = int(grid.temp_bin(T_edge))
    i_edge = round((T_edge - grid.T_min) / grid.delta_tau)
    if abs(T_edge - (grid.T_min + i_edge * grid.delta_tau)) <= 1e-9 and i_edge > 0:
        b = i_edge - 1
    x = np.zeros(grid.n_states)
    x[grid.n_bins + b] = 1.0
    return x


_MATRIX_HEADER = "# tclflex transition matrix v1"


def save_matrix(tm: TransitionMatrix, path) -> None:
    """Write the matrix and its operating point as CSV with # metadata lines.

    Floats are written with repr, which round-trips bit-exactly.
    """
    buf = io.StringIO()
    buf.write(_MATRIX_HEADER + "\n")
    for key, value in (
        ("dt_minutes", tm.dt_minutes),
        ("T_set", tm.T_set),
        ("T_amb", tm.T_amb),
        ("deadband", tm.deadband),
        ("T_min", tm.grid.T_min),
        ("T_max", tm.grid.T_max),
    ):
        buf.write(f"# {key}={value!r}\n")
    buf.write(f"# n_bins={tm.grid.n_bins}\n")
    for row in tm.P:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_matrix(path) -> TransitionMatrix:
    """Read a matrix written by save_matrix and re-validate it."""
    meta: dict[str, float] = {}
    rows: list[list[float]] = []
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != _MATRIX_HEADER:
            raise InvalidInputError(f"unrecognized matrix file header: {first!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = float(value)
            else:
                rows.append([float(tok) for tok in line.split(",")])
    try:
        grid = BinGrid(T_min=meta["T_min"], T_max=meta["T_max"], n_bins=int(meta["n_bins"]))
        tm = TransitionMatrix(
            P=np.array(rows),
            grid=grid,
            dt_minutes=meta["dt_minutes"],
            T_set=meta["T_set"],
            T_amb=meta["T_amb"],
            deadband=meta["deadband"],
        )
    except KeyError as exc:
        raise InvalidInputError(f"matrix file missing metadata field {exc}") from exc
    tm.validate()
    return tm
