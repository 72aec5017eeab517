"""Reach-and-hold characterization of aggregate demand flexibility.

A fleet at stationary occupancy x_0 can be commanded, per step, to move
a population fraction u[k] (0 <= u[k] <= x[k]) from the nominal-setpoint
dynamics A to the raised-setpoint dynamics A_a.  The demand reduction

    dP[k] = sum_{n<k} (h_{k-n} - h_{a,k-n}) @ u[n],   h_m = c A^m

is the reach; a pair (P_hold, T_hold) is achievable when some admissible
plan keeps dP[k] >= P_hold for every k in 1..T_hold.  Three routes map
the achievable set:

* exact: the full LP over u (desk scale only),
* inner: a feasible budget-allocation policy u[k] = alpha[k] x_0 whose
  lower-bound recursion exploits that a setpoint raise of at least one
  deadband empties the on block in one step,
* outer: an LP relaxation driven by a fictitious squeezed-deadband
  system whose transition matrix A_out concentrates mass at the lower
  deadband edge; its validity is certified empirically by comparing
  kernels, never assumed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FrontierMonotonicityError,
    InvalidInputError,
    NumericalFailureError,
)
from .etp import TclParams
from .lp import OPTIMAL, LinearProgram, LpSolution, solve
from .markov import (
    BinGrid,
    OutputVector,
    PopulationState,
    TransitionMatrix,
    aggregate_power,
    estimate_transition_matrix,
    output_vector,
    stationary_distribution,
    step_population,
    x_out_vector,
)

EXACT = "exact"
INNER = "inner"
OUTER = "outer"
METHODS = (EXACT, INNER, OUTER)

# max T_hold * n_states for the exact route; the dense constraint block
# grows with the square of this product, so 5000 keeps it under ~200 MB
EXACT_LP_CAP = 5000
DEFAULT_T_MAX = 480  # steps; 8 h at one-minute resolution
DEFAULT_N_GRID = 50


@dataclass
class ResponseKernels:
    """Iterated output kernels h_m = c A^m for the three dynamics."""

    h: np.ndarray  # (horizon+1, n_states), h[0] = c
    h_a: np.ndarray
    h_out: np.ndarray | None
    c: OutputVector
    horizon: int


def response_kernels(
    A: TransitionMatrix,
    A_a: TransitionMatrix,
    c: OutputVector,
    horizon: int,
    A_out: TransitionMatrix | None = None,
) -> ResponseKernels:
    """Compute h, h_a (and h_out when A_out is given) up to `horizon`
    by iterated vector-matrix products; no matrix powers are formed."""
    if horizon < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {horizon}")
    mats = [A.P, A_a.P] + ([A_out.P] if A_out is not None else [])
    outs = []
    for M in mats:
        H = np.empty((horizon + 1, c.c.size))
        H[0] = c.c
        row = c.c
        for m in range(1, horizon + 1):
            row = row @ M
            H[m] = row
        outs.append(H)
    h, h_a = outs[0], outs[1]
    h_out = outs[2] if A_out is not None else None
    return ResponseKernels(h=h, h_a=h_a, h_out=h_out, c=c, horizon=horizon)


@dataclass
class ControlPlan:
    """Either an absolute per-bin plan u (T, n_states) or a stationary-
    profile plan alpha (T,) meaning u[k] = alpha[k] * x_0."""

    u: np.ndarray | None = None
    alpha: np.ndarray | None = None

    def __post_init__(self) -> None:
        if (self.u is None) == (self.alpha is None):
            raise InvalidInputError("exactly one of u and alpha must be given")
        if self.u is not None:
            self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
            if np.any(self.u < -1e-12):
                raise InvalidInputError("u must be nonnegative")
        else:
            self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
            if np.any(self.alpha < -1e-12):
                raise InvalidInputError("alpha must be nonnegative")
            if self.alpha.sum() > 1.0 + 1e-9:
                raise InvalidInputError(f"alpha budget {self.alpha.sum()!r} exceeds 1")

    @property
    def horizon(self) -> int:
        return self.u.shape[0] if self.u is not None else self.alpha.size

    def as_u(self, x_0: np.ndarray) -> np.ndarray:
        if self.u is not None:
            return self.u
        return self.alpha[:, None] * x_0[None, :]


@dataclass
class HoldResponse:
    """Demand-reduction trace dP[k], k = 0..horizon (dP[0] = 0)."""

    delta_p_kw: np.ndarray
    p_nom_kw: float


def delta_p(plan: ControlPlan, kernels: ResponseKernels, x_0: np.ndarray) -> HoldResponse:
    """Reduction trace of a plan via the kernel convolution."""
    K = kernels.horizon
    d = kernels.h - kernels.h_a  # (K+1, n_states)
    p_nom = float(kernels.h[0] @ x_0)
    out = np.zeros(K + 1)
    if plan.alpha is not None:
        s = d[1:] @ x_0  # s[m-1] = d_m @ x_0
        conv = np.convolve(plan.alpha, s)
        out[1:] = conv[: K]
    else:
        u = plan.u
        acc = np.zeros(K)
        for i in range(u.shape[1]):
            col = np.convolve(u[:, i], d[1:, i])
            acc += col[: K]
        out[1:] = acc
    return HoldResponse(delta_p_kw=out, p_nom_kw=p_nom)


def delta_p_by_stepping(
    plan: ControlPlan,
    A: TransitionMatrix,
    A_a: TransitionMatrix,
    c: OutputVector,
    x_0: np.ndarray,
    horizon: int,
) -> HoldResponse:
    """Reduction trace by direct population stepping (independent of the
    kernel algebra; used for cross-checks and plan certification)."""
    u_full = plan.as_u(x_0)
    T = u_full.shape[0]
    p_nom = float(c.c @ x_0)
    state = PopulationState(x=x_0.copy(), x_a=np.zeros_like(x_0))
    out = np.zeros(horizon + 1)
    zero = np.zeros_like(x_0)
    for k in range(horizon):
        # project onto the admissible set: LP answers carry solver-level
        # slack, and shrinking u only understates the reduction
        u_k = np.minimum(np.clip(u_full[k], 0.0, None), state.x) if k < T else zero
        state = step_population(state, u_k, A, A_a)
        out[k + 1] = p_nom - aggregate_power(state, c)
    return HoldResponse(delta_p_kw=out, p_nom_kw=p_nom)


@dataclass
class ReachHoldPoint:
    """One boundary sample: reduction P_hold_kw sustainable for
    T_hold_steps consecutive steps by `method`."""

    P_hold_kw: float
    T_hold_steps: int
    method: str
    horizon_limited: bool = False
    raw_objective_kw: float | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.P_hold_kw < 0.0:
            raise InvalidInputError(f"P_hold_kw must be >= 0, got {self.P_hold_kw}")
        if self.T_hold_steps < 0:
            raise InvalidInputError(f"T_hold_steps must be >= 0, got {self.T_hold_steps}")


@dataclass
class ConditionReport:
    """Empirical check that the squeezed-system kernel dominates the
    reduction kernel elementwise: min over steps m and states of
    (h_out_m - h_a_m) @ x_out - (h_m - h_a_m)."""

    holds: bool
    min_margin_kw: float
    argmin_step: int
    argmin_state: int
    horizon: int

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "min_margin_kw": self.min_margin_kw,
            "argmin_step": self.argmin_step,
            "argmin_state": self.argmin_state,
            "horizon": self.horizon,
        }


@dataclass
class ReachHoldSet:
    """Boundary of the achievable (P_hold, T_hold) region for one method.

    Points are kept sorted by T_hold ascending with P_hold nonincreasing
    (strictly a frontier).  `regime` records the operating point and
    normalization so a set is self-describing on disk.
    """

    points: list[ReachHoldPoint]
    method: str
    regime: dict
    condition: ConditionReport | None = None

    def __post_init__(self) -> None:
        self.points = sorted(self.points, key=lambda p: (p.T_hold_steps, -p.P_hold_kw))
        self._check_frontier()

    def _check_frontier(self) -> None:
        tol = 1e-9 * max(1.0, float(self.regime.get("P_on_total_kw", 1.0)))
        prev_T = -1
        prev_P = np.inf
        for p in self.points:
            if p.T_hold_steps == prev_T:
                raise FrontierMonotonicityError(f"duplicate T_hold {p.T_hold_steps} on frontier")
            if p.P_hold_kw > prev_P + tol:
                raise FrontierMonotonicityError(
                    f"P_hold increases along T_hold at T={p.T_hold_steps}: "
                    f"{p.P_hold_kw} after {prev_P}"
                )
            prev_T, prev_P = p.T_hold_steps, p.P_hold_kw
        if self.points and "P_nom_kw" in self.regime:
            worst = max(p.P_hold_kw for p in self.points)
            if worst > self.regime["P_nom_kw"] + tol:
                raise FrontierMonotonicityError(
                    f"boundary P_hold {worst} exceeds P_nom {self.regime['P_nom_kw']}"
                )

    @property
    def dt_minutes(self) -> float:
        return float(self.regime["dt_minutes"])

    @property
    def verified(self) -> bool | None:
        """For outer sets with a condition report: whether the empirical
        kernel-domination check passed.  None when no report is attached
        (exact and inner sets carry their own guarantees)."""
        return self.condition.holds if self.condition is not None else None


def frontier_from_samples(
    samples: list[ReachHoldPoint], method: str, regime: dict, condition: ConditionReport | None = None
) -> ReachHoldSet:
    """Collapse sampled points to a frontier: max P_hold per T_hold, then
    drop points dominated by a longer hold at equal or larger P."""
    best: dict[int, ReachHoldPoint] = {}
    for p in samples:
        cur = best.get(p.T_hold_steps)
        if cur is None or p.P_hold_kw > cur.P_hold_kw:
            best[p.T_hold_steps] = p
    pts = [best[t] for t in sorted(best)]
    keep: list[ReachHoldPoint] = []
    run_max = -np.inf
    for p in reversed(pts):  # longest holds first; drop dominated shorter holds
        if p.P_hold_kw > run_max + 1e-15:
            keep.append(p)
            run_max = p.P_hold_kw
    keep.reverse()
    return ReachHoldSet(points=keep, method=method, regime=regime, condition=condition)


def solve_exact(
    T_hold: int,
    kernels: ResponseKernels,
    x_0: np.ndarray,
    A: TransitionMatrix,
) -> tuple[float, ControlPlan, LpSolution]:
    """Exact boundary value at T_hold by the full LP over u[0..T_hold-1].

    Desk-scale only: refuses problems with T_hold * n_states above
    EXACT_LP_CAP.  Admissibility uses the true propagated baseline
    A^k x_0, not its stationary idealization.
    """
    n = x_0.size
    if T_hold < 1:
        raise InvalidInputError(f"T_hold must be >= 1, got {T_hold}")
    if T_hold * n > EXACT_LP_CAP:
        raise InvalidInputError(
            f"exact LP size {T_hold * n} exceeds cap {EXACT_LP_CAP}; use inner/outer"
        )
    if kernels.horizon < T_hold:
        raise InvalidInputError("kernels horizon too short for requested T_hold")
    T = T_hold
    d = kernels.h - kernels.h_a
    # variables: u[0..T-1] flattened, then P
    n_vars = T * n + 1
    c_obj = np.zeros(n_vars)
    c_obj[-1] = 1.0
    # A^m and A^m x_0 for admissibility rows
    Apow = [np.eye(n)]
    for _ in range(T - 1):
        Apow.append(A.P @ Apow[-1])
    base = [x_0]
    for k in range(1, T):
        base.append(A.P @ base[-1])
    rows = []
    rhs = []
    for k in range(1, T + 1):  # hold rows: P - sum d[k-n] u[n] <= 0
        row = np.zeros(n_vars)
        for m in range(k):
            row[m * n : (m + 1) * n] = -d[k - m]
        row[-1] = 1.0
        rows.append(row)
        rhs.append(0.0)
    for k in range(1, T):  # admissibility: u[k] + sum A^{k-n} u[n] <= A^k x_0
        block = np.zeros((n, n_vars))
        for m in range(k):
            block[:, m * n : (m + 1) * n] = Apow[k - m]
        block[:, k * n : (k + 1) * n] += np.eye(n)
        rows.append(block)
        rhs.append(base[k])
    G = np.vstack([np.atleast_2d(r) for r in rows])
    h_vec = np.concatenate([np.atleast_1d(r) for r in rhs])
    lo = np.zeros(n_vars)
    hi = np.full(n_vars, np.inf)
    hi[:n] = x_0  # u[0] <= x[0]
    lp = LinearProgram(c=c_obj, G=G, h=h_vec, lo=lo, hi=hi)
    sol = solve(lp)
    if sol.status != OPTIMAL:
        raise NumericalFailureError(f"exact LP did not solve cleanly: status {sol.status}")
    u = sol.z[:-1].reshape(T, n)
    return float(sol.z[-1]), ControlPlan(u=np.clip(u, 0.0, None)), sol


def alpha_lower_bound(
    k: int,
    alpha: np.ndarray,
    P_hold: float,
    kernels: ResponseKernels,
    x_0: np.ndarray,
) -> float:
    """Minimum feasible alpha[k] given the committed prefix alpha[0..k-1].

    Valid in the regime where the setpoint raise is at least one
    deadband, so a freshly actuated cohort draws no power on its first
    step.  For k = 0 this is P_hold / P_nom; for k >= 1 each committed
    alpha[n] is discounted by the actuated cohort's power recovery
    c A_a^{k-n+1} x_0."""
    p_nom = float(kernels.h[0] @ x_0)
    if p_nom <= 0.0:
        raise InvalidInputError("P_nom must be positive")
    r = P_hold / p_nom
    if k == 0:
        return r
    if kernels.horizon < k + 1:
        raise InvalidInputError(f"kernels horizon {kernels.horizon} too short for k={k}")
    rec = kernels.h_a[2 : k + 2] @ x_0  # c A_a^{k-n+1} x_0 for n = k-1 .. 0
    terms = -1.0 + rec[::-1] / p_nom
    return r + float(np.asarray(alpha[:k]) @ terms)


@dataclass
class InnerPoint:
    """Result of the budget-allocation construction for one P_hold."""

    point: ReachHoldPoint
    plan: ControlPlan
    response: HoldResponse
    depletion_step: int | None  # step at which the budget hit 1, if it did
    min_margin_kw: float  # min over k <= T_hold of dP[k] - P_hold


def inner_point(
    P_hold: float,
    kernels: ResponseKernels,
    x_0: np.ndarray,
    T_max: int = DEFAULT_T_MAX,
) -> InnerPoint:
    """Greedy-minimal feasible allocation: alpha[k] = max(alpha_lb, 0)
    until the unit budget depletes, then the hold duration is the last
    step before the reduction falls below P_hold (T_max if it never
    does, flagged horizon-limited)."""
    p_nom = float(kernels.h[0] @ x_0)
    if not -1e-12 * p_nom <= P_hold <= p_nom * (1.0 + 1e-12):
        raise InvalidInputError(f"P_hold {P_hold} outside [0, P_nom={p_nom}]")
    if kernels.horizon < T_max:
        raise InvalidInputError(f"kernels horizon {kernels.horizon} < T_max {T_max}")
    P_hold = float(np.clip(P_hold, 0.0, p_nom))
    rec = kernels.h_a[1:] @ x_0  # c A_a^m x_0, m = 1..horizon
    r = P_hold / p_nom
    alpha = np.zeros(T_max)
    depletion = None
    committed = 0.0
    # recursion state: alpha_lb[k] = r + sum_{n<k} alpha[n] (-1 + rec[k-n]/p_nom)
    for k in range(T_max):
        if k == 0:
            lb = r
        else:
            # rec[k-n] = c A_a^{k-n+1} x_0 paired with alpha[n], n = 0..k-1
            lb = r - committed + float(alpha[:k] @ rec[k:0:-1]) / p_nom
        a = max(lb, 0.0)
        if committed + a >= 1.0:
            alpha[k] = 1.0 - committed
            depletion = k
            committed = 1.0
            break
        alpha[k] = a
        committed += a
    plan = ControlPlan(alpha=alpha)
    response = delta_p(plan, kernels, x_0)
    dp = response.delta_p_kw
    scan_from = (depletion + 1) if depletion is not None else 1
    # steps where alpha sat exactly at its lower bound satisfy the hold
    # with equality, so the violation test needs room for rounding noise
    hold_tol = 1e-10 * max(1.0, kernels.c.P_on_total)
    T_hold = T_max
    horizon_limited = True
    for k in range(scan_from, T_max + 1):
        if dp[k] < P_hold - hold_tol:
            T_hold = k - 1
            horizon_limited = False
            break
    margin = float((dp[1 : T_hold + 1] - P_hold).min()) if T_hold >= 1 else 0.0
    pt = ReachHoldPoint(
        P_hold_kw=P_hold, T_hold_steps=T_hold, method=INNER, horizon_limited=horizon_limited
    )
    return InnerPoint(
        point=pt, plan=plan, response=response, depletion_step=depletion, min_margin_kw=margin
    )


def default_p_grid(p_nom: float, n_grid: int = DEFAULT_N_GRID) -> np.ndarray:
    """n_grid reductions evenly spaced in (0, P_nom]."""
    return np.linspace(p_nom / n_grid, p_nom, n_grid)


def inner_boundary(
    kernels: ResponseKernels,
    x_0: np.ndarray,
    T_max: int = DEFAULT_T_MAX,
    p_grid: np.ndarray | None = None,
    regime: dict | None = None,
) -> ReachHoldSet:
    """Inner frontier over a grid of target reductions."""
    p_nom = float(kernels.h[0] @ x_0)
    if p_grid is None:
        p_grid = default_p_grid(p_nom)
    samples = [inner_point(float(P), kernels, x_0, T_max).point for P in p_grid]
    return frontier_from_samples(samples, INNER, regime or {"P_nom_kw": p_nom, "dt_minutes": 1.0})


def inner_p_at(
    T_hold: int,
    kernels: ResponseKernels,
    x_0: np.ndarray,
    T_max: int = DEFAULT_T_MAX,
    tol_rel: float = 1e-9,
) -> float:
    """Largest grid-free inner reduction holdable for T_hold steps, by
    bisection on the monotone feasibility predicate."""
    p_nom = float(kernels.h[0] @ x_0)
    if inner_point(p_nom, kernels, x_0, T_max).point.T_hold_steps >= T_hold:
        return p_nom
    lo, hi = 0.0, p_nom  # lo feasible, hi not
    while hi - lo > tol_rel * p_nom:
        mid = 0.5 * (lo + hi)
        if inner_point(mid, kernels, x_0, T_max).point.T_hold_steps >= T_hold:
            lo = mid
        else:
            hi = mid
    return lo


def build_fictitious_system(
    params: TclParams,
    grid: BinGrid,
    T_set: float,
    deadband: float,
    T_amb: float,
    dt_minutes: float = 1.0,
    n_samples: int = 20000,
    seed: int = 0,
) -> TransitionMatrix:
    """Squeezed companion system for the outer bound: setpoint at the
    lower deadband edge, deadband narrowed to one bin width."""
    T_set_out = T_set - 0.5 * deadband
    return estimate_transition_matrix(
        params, grid, T_set_out, grid.delta_tau, T_amb, dt_minutes, n_samples, seed
    )


def check_outer_condition(
    kernels: ResponseKernels,
    x_out: np.ndarray,
    horizon: int | None = None,
) -> ConditionReport:
    """Empirical validity condition for the outer bound (see module
    docstring); reports the worst margin and where it occurs."""
    if kernels.h_out is None:
        raise InvalidInputError("kernels were built without the squeezed system")
    K = horizon if horizon is not None else kernels.horizon
    if K > kernels.horizon or K < 1:
        raise InvalidInputError(f"condition horizon {K} outside 1..{kernels.horizon}")
    d_out = (kernels.h_out[1 : K + 1] - kernels.h_a[1 : K + 1]) @ x_out  # (K,)
    d = kernels.h[1 : K + 1] - kernels.h_a[1 : K + 1]  # (K, n_states)
    margins = d_out[:, None] - d
    flat = int(np.argmin(margins))
    m_idx, s_idx = divmod(flat, margins.shape[1])
    min_margin = float(margins[m_idx, s_idx])
    tol = 1e-12 * max(1.0, kernels.c.P_on_total)
    return ConditionReport(
        holds=min_margin >= -tol,
        min_margin_kw=min_margin,
        argmin_step=m_idx + 1,
        argmin_state=s_idx,
        horizon=K,
    )


def solve_outer(
    T_hold: int,
    kernels: ResponseKernels,
    x_out: np.ndarray,
    support: str = "xout",
) -> tuple[float, ControlPlan, LpSolution]:
    """Outer-bound LP at T_hold.

    support "full" allows mass anywhere; "xout" restricts it to the
    squeezed system's anchor bin, which eliminates most variables but
    stays an overestimate only when the kernel-domination condition
    verifies, so callers gate it on check_outer_condition."""
    if T_hold < 1:
        raise InvalidInputError(f"T_hold must be >= 1, got {T_hold}")
    if kernels.h_out is None:
        raise InvalidInputError("kernels were built without the squeezed system")
    if kernels.horizon < T_hold:
        raise InvalidInputError("kernels horizon too short for requested T_hold")
    n = x_out.size
    if support == "xout":
        cols = np.flatnonzero(x_out > 0.0)
    elif support == "full":
        cols = np.arange(n)
    else:
        raise InvalidInputError(f"support must be 'full' or 'xout', got {support!r}")
    d_out = kernels.h_out - kernels.h_a  # (K+1, n_states)
    T = T_hold
    S = cols.size
    n_vars = T * S + 1
    c_obj = np.zeros(n_vars)
    c_obj[-1] = 1.0
    G = np.zeros((T + 1, n_vars))
    h_vec = np.zeros(T + 1)
    for k in range(1, T + 1):  # P - sum d_out[k-n][cols] @ v[n] <= 0
        for m in range(k):
            G[k - 1, m * S : (m + 1) * S] = -d_out[k - m][cols]
        G[k - 1, -1] = 1.0
    G[T, : T * S] = 1.0  # total budget <= 1
    h_vec[T] = 1.0
    lo = np.zeros(n_vars)
    lp = LinearProgram(c=c_obj, G=G, h=h_vec, lo=lo)
    sol = solve(lp)
    if sol.status != OPTIMAL:
        raise NumericalFailureError(f"outer LP did not solve cleanly: status {sol.status}")
    v = sol.z[:-1].reshape(T, S)
    u = np.zeros((T, n))
    u[:, cols] = v
    return float(sol.z[-1]), ControlPlan(u=np.clip(u, 0.0, None)), sol


def outer_boundary(
    kernels: ResponseKernels,
    x_out: np.ndarray,
    t_grid: np.ndarray,
    regime: dict,
    condition_horizon: int | None = None,
) -> ReachHoldSet:
    """Outer frontier over hold durations.

    The full-support relaxation is always solved; the tighter anchor-bin
    restriction is applied on top only when the kernel-domination
    condition verifies.  Values are clipped to P_nom (the true reduction
    can never exceed nominal demand) and the condition report rides
    along so consumers can see whether the bound is certified.
    """
    p_nom = float(regime["P_nom_kw"])
    condition = check_outer_condition(kernels, x_out, condition_horizon)
    samples = []
    for T in np.asarray(t_grid, dtype=int):
        raw, _, _ = solve_outer(int(T), kernels, x_out, support="full")
        if condition.holds:
            raw_xout, _, _ = solve_outer(int(T), kernels, x_out, support="xout")
            raw = min(raw, raw_xout)
        samples.append(
            ReachHoldPoint(
                P_hold_kw=float(np.clip(raw, 0.0, p_nom)),
                T_hold_steps=int(T),
                method=OUTER,
                raw_objective_kw=raw,
            )
        )
    return frontier_from_samples(samples, OUTER, regime, condition=condition)


def make_regime(
    grid: BinGrid,
    T_set: float,
    T_set_new: float,
    deadband: float,
    T_amb: float,
    dt_minutes: float,
    P_on_total: float,
    P_nom: float,
    T_max: int,
    extra: dict | None = None,
) -> dict:
    regime = {
        "T_set": T_set,
        "T_set_new": T_set_new,
        "deadband": deadband,
        "T_amb": T_amb,
        "dt_minutes": dt_minutes,
        "T_min": grid.T_min,
        "T_max_grid": grid.T_max,
        "n_bins": grid.n_bins,
        "P_on_total_kw": P_on_total,
        "P_nom_kw": P_nom,
        "T_max_steps": T_max,
    }
    if extra:
        regime.update(extra)
    return regime


@dataclass
class CharacterizedFleet:
    """Matrices, stationary state, and kernels for one operating point."""

    A: TransitionMatrix
    A_a: TransitionMatrix
    A_out: TransitionMatrix | None
    x_0: np.ndarray
    c: OutputVector
    kernels: ResponseKernels
    regime: dict

    @property
    def p_nom_kw(self) -> float:
        return float(self.c.c @ self.x_0)


def characterize(
    params: TclParams,
    grid: BinGrid,
    T_set: float,
    T_set_new: float,
    deadband: float,
    T_amb: float,
    P_on_total: float,
    dt_minutes: float = 1.0,
    T_max: int = DEFAULT_T_MAX,
    n_samples: int = 20000,
    seed: int = 0,
    with_outer: bool = True,
    T_set_stationary: float | None = None,
) -> CharacterizedFleet:
    """Estimate all matrices and kernels for one regime.

    T_set_stationary lets the baseline occupancy come from a different
    setpoint than the thermostat program encoded in A (pre-cooling
    studies); by default both are T_set.
    """
    seeds = np.random.SeedSequence(seed).spawn(3)
    base_set = T_set if T_set_stationary is None else T_set_stationary
    A = estimate_transition_matrix(
        params, grid, base_set, deadband, T_amb, dt_minutes, n_samples, seeds[0]
    )
    A_a = estimate_transition_matrix(
        params, grid, T_set_new, deadband, T_amb, dt_minutes, n_samples, seeds[1]
    )
    A_out = None
    if with_outer:
        A_out = build_fictitious_system(
            params, grid, base_set, deadband, T_amb, dt_minutes, n_samples, seeds[2]
        )
    x_0 = stationary_distribution(A).x
    c = output_vector(grid, P_on_total)
    kernels = response_kernels(A, A_a, c, horizon=T_max + 1, A_out=A_out)
    regime = make_regime(
        grid, base_set, T_set_new, deadband, T_amb, dt_minutes, P_on_total,
        float(c.c @ x_0), T_max,
    )
    return CharacterizedFleet(A=A, A_a=A_a, A_out=A_out, x_0=x_0, c=c, kernels=kernels, regime=regime)


def sweep_setpoint(
    params: TclParams,
    grid: BinGrid,
    T_set: float,
    new_setpoints: list[float],
    deadband: float,
    T_amb: float,
    P_on_total: float,
    dt_minutes: float = 1.0,
    T_max: int = DEFAULT_T_MAX,
    n_grid: int = DEFAULT_N_GRID,
    n_samples: int = 20000,
    seed: int = 0,
) -> list[ReachHoldSet]:
    """Inner frontiers for several raised setpoints from one baseline."""
    sets = []
    for i, T_new in enumerate(new_setpoints):
        fleet = characterize(
            params, grid, T_set, float(T_new), deadband, T_amb, P_on_total,
            dt_minutes, T_max, n_samples, seed=seed + 1000 * i, with_outer=False,
        )
        p_grid = default_p_grid(fleet.p_nom_kw, n_grid)
        sets.append(
            inner_boundary(fleet.kernels, fleet.x_0, T_max, p_grid, regime=fleet.regime)
        )
    return sets


def precool_compare(
    params: TclParams,
    grid: BinGrid,
    T_set_nominal: float,
    T_set_precool: float,
    T_set_new: float,
    deadband: float,
    T_amb: float,
    P_on_total: float,
    dt_minutes: float = 1.0,
    T_max: int = DEFAULT_T_MAX,
    n_grid: int = DEFAULT_N_GRID,
    n_samples: int = 20000,
    seed: int = 0,
) -> dict[str, ReachHoldSet]:
    """Inner frontiers starting from the nominal occupancy versus an
    occupancy pre-cooled to a lower setpoint, both released to T_set_new."""
    out: dict[str, ReachHoldSet] = {}
    for label, start in (("baseline", T_set_nominal), ("precooled", T_set_precool)):
        fleet = characterize(
            params, grid, start, T_set_new, deadband, T_amb, P_on_total,
            dt_minutes, T_max, n_samples,
            seed=seed + (0 if label == "baseline" else 5000),
            with_outer=False,
        )
        fleet.regime["start_setpoint"] = start
        p_grid = default_p_grid(fleet.p_nom_kw, n_grid)
        out[label] = inner_boundary(fleet.kernels, fleet.x_0, T_max, p_grid, regime=fleet.regime)
    return out


def save_set(rh_set: ReachHoldSet, csv_path) -> None:
    """Write the frontier CSV plus a JSON sidecar with the regime block,
    per-point flags, and (for outer sets) the condition report."""
    csv_path = str(csv_path)
    dt_min = float(rh_set.regime.get("dt_minutes", 1.0))
    with open(csv_path, "w") as fh:
        fh.write("T_hold_steps,T_hold_hours,P_hold_kW,method\n")
        for p in rh_set.points:
            hours = p.T_hold_steps * dt_min / 60.0
            fh.write(f"{p.T_hold_steps},{hours!r},{p.P_hold_kw!r},{p.method}\n")
    sidecar = {
        "method": rh_set.method,
        "regime": rh_set.regime,
        "condition": rh_set.condition.to_dict() if rh_set.condition else None,
        "points": [
            {
                "T_hold_steps": p.T_hold_steps,
                "P_hold_kW": p.P_hold_kw,
                "horizon_limited": p.horizon_limited,
                "raw_objective_kw": p.raw_objective_kw,
            }
            for p in rh_set.points
        ],
    }
    with open(_sidecar_path(csv_path), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar_path(csv_path: str) -> str:
    return csv_path[: -len(".csv")] + ".json" if csv_path.endswith(".csv") else csv_path + ".json"


def load_set(csv_path) -> ReachHoldSet:
    """Read a frontier written by save_set."""
    csv_path = str(csv_path)
    with open(_sidecar_path(csv_path)) as fh:
        sidecar = json.load(fh)
    with open(csv_path) as fh:
        header = fh.readline().strip()
        if header != "T_hold_steps,T_hold_hours,P_hold_kW,method":
            raise InvalidInputError(f"unrecognized frontier header: {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    flags = {p["T_hold_steps"]: p for p in sidecar.get("points", [])}
    points = []
    for t_str, _, p_str, method in rows:
        t = int(t_str)
        meta = flags.get(t, {})
        points.append(
            ReachHoldPoint(
                P_hold_kw=float(p_str),
                T_hold_steps=t,
                method=method,
                horizon_limited=bool(meta.get("horizon_limited", False)),
                raw_objective_kw=meta.get("raw_objective_kw"),
            )
        )
    condition = None
    if sidecar.get("condition"):
        cd = sidecar["condition"]
        condition = ConditionReport(
            holds=cd["holds"],
            min_margin_kw=cd["min_margin_kw"],
            argmin_step=cd["argmin_step"],
            argmin_state=cd["argmin_state"],
            horizon=cd["horizon"],
        )
    return ReachHoldSet(
        points=points, method=sidecar["method"], regime=sidecar["regime"], condition=condition
    )
