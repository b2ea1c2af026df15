import logging
import math
import time
import typing as t
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import lyapunov_value
from .functions import (
    ElasticNetScalar,
    IndicatorSet,
    UnsupportedComponentError,
    prox_conjugate,
    soft_threshold,
)
from .problem import (
    REFERENCE_GAP_TOL,
    CompositeProblem,
    ReferenceSolution,
    distance_squared,
    dual_lipschitz,
    dual_value,
    duality_gap,
    primal_from_dual,
)
from .schedules import DelaySchedule, ZeroDelay, describe
from .sets import Hyperplane
from .spaces import BlockVector, operator_norm
from .trace import Trace, TraceRow

logger = logging.getLogger(__name__)

type Array = np.ndarray
type Method = t.Literal["rdciag", "dbcd", "dual_pg", "piag", "sparse_kaczmarz"]

METHODS: tuple[str, ...] = ("rdciag", "dbcd", "dual_pg", "piag", "sparse_kaczmarz")
TABLE_METHODS = frozenset({"rdciag", "piag"})

RECONCILE_EVERY = 1000
RECONCILE_TOL = 1e-10
DIVERGENCE_FACTOR = 1e6
MAX_RECORDED_ROWS = 10_000


class StalenessError(RuntimeError):
    """Raised when a snapshot outlives the schedule's delay bound."""


class DivergenceError(RuntimeError):
    """Raised when the dual objective blows up during a run."""


def make_rng(seed: int) -> np.random.Generator:
    """The block-sampling generator: PCG64 seeded with `seed`."""
    return np.random.Generator(np.random.PCG64(seed))


# --------------------------------------------------------------------------
# Stale gradient bookkeeping
# --------------------------------------------------------------------------


@dataclass(slots=True, eq=False)
class GradientTable:
    """
    Per-component snapshots of the primal recovery xᵢ = ∇fᵢ*(−(𝒜*y)ᵢ).

    `aggregate` holds sⱼ = Σᵢ𝒜ⱼᵢxᵢ over the stored snapshots and is patched
    in place whenever one snapshot changes.
    """

    u_snapshot: list[Array]
    x_snapshot: list[Array]
    aggregate: BlockVector
    refreshed_at: Array

    @classmethod
    def build(cls, p: CompositeProblem, y: BlockVector, k: int = 0) -> "GradientTable":
        u = p.A.adjoint_apply(y)
        us = [u.block(i).copy() for i in range(p.num_primal)]
        xs = [f.conjugate_grad(-ui) for f, ui in zip(p.f_components, us)]
        x = BlockVector.from_blocks(p.primal_layout, xs)
        return cls(us, xs, p.A.apply(x), np.full(p.num_primal, k, dtype=np.int64))

    def refresh(self, p: CompositeProblem, i: int, y: BlockVector, k: int) -> None:
        u = p.A.adjoint_block(i, y)
        x_new = p.f_components[i].conjugate_grad(-u)
        delta = x_new - self.x_snapshot[i]
        layout = self.aggregate.layout
        for j, matrix in p.A.column(i):
            self.aggregate.data[layout.slice(j)] += matrix @ delta
        self.u_snapshot[i] = u
        self.x_snapshot[i] = x_new
        self.refreshed_at[i] = k

    def ages(self, k: int) -> Array:
        return k - self.refreshed_at

    def primal(self, p: CompositeProblem) -> BlockVector:
        return BlockVector.from_blocks(p.primal_layout, self.x_snapshot)

    def recompute_aggregate(self, p: CompositeProblem) -> BlockVector:
        return p.A.apply(self.primal(p))

    def reconcile_error(self, p: CompositeProblem) -> float:
        """Relative drift of the patched aggregate from a full recomputation."""
        fresh = self.recompute_aggregate(p)
        scale = max(1.0, fresh.norm())
        return float(np.max(np.abs(fresh.data - self.aggregate.data), initial=0.0)) / scale


@dataclass(slots=True, eq=False)
class SolverState:
    y: BlockVector
    alpha: float
    rng: np.random.Generator
    table: GradientTable | None = None
    k: int = 0
    delay_rng: np.random.Generator | None = None
    debug: bool = False

    def __post_init__(self):
        """Ensure all preconditions are met."""
        if not self.alpha > 0:
            raise ValueError(f"Step size must be positive, got {self.alpha}.")
        if self.k < 0:
            raise ValueError("Iteration counter must be nonnegative.")

    def max_age(self) -> int:
        if self.table is None:
            return 0
        return int(np.max(self.table.ages(self.k), initial=0))


def initial_dual(p: CompositeProblem) -> BlockVector:
    """y⁰ = 0, moved into dom gⱼ* by one conjugate prox where 0 lies outside."""
    y = BlockVector.zeros(p.dual_layout)
    for j, g in enumerate(p.g_components):
        zero = y.block(j).copy()
        try:
            inside = math.isfinite(g.conjugate(zero))
        except UnsupportedComponentError:
            inside = True
        if not inside:
            y.set_block(j, prox_conjugate(g, zero, 1.0))
    return y


def init_state(
    p: CompositeProblem,
    alpha: float,
    seed: int,
    schedule: DelaySchedule | None = None,
    *,
    with_table: bool = True,
    debug: bool = False,
) -> SolverState:
    y = initial_dual(p)
    schedule = schedule or ZeroDelay()
    return SolverState(
        y=y,
        alpha=alpha,
        rng=make_rng(seed),
        table=GradientTable.build(p, y) if with_table else None,
        delay_rng=schedule.make_rng(),
        debug=debug,
    )


def _require_table(state: SolverState) -> GradientTable:
    if state.table is None:
        raise ValueError("This method needs a gradient table; use init_state(with_table=True).")
    return state.table


def refresh_table(p: CompositeProblem, state: SolverState, schedule: DelaySchedule) -> None:
    """Refresh the snapshots the schedule selects at iteration k and check ages."""
    table = _require_table(state)
    mask = schedule.due(state.k, table.refreshed_at, state.delay_rng)
    for i in np.flatnonzero(mask):
        table.refresh(p, int(i), state.y, state.k)
    ages = table.ages(state.k)
    if ages.size and int(ages.max()) > schedule.tau:
        worst = int(np.argmax(ages))
        raise StalenessError(
            f"Component {worst} is {int(ages[worst])} iterations stale at k = {state.k}, "
            f"bound is {schedule.tau}."
        )


def _block_update(
    p: CompositeProblem, y: BlockVector, s: Array, j: int, alpha: float
) -> Array:
    return prox_conjugate(p.g_components[j], y.block(j) + alpha * s, alpha)


def _draw(p: CompositeProblem, state: SolverState) -> int:
    return int(state.rng.integers(p.num_dual))


def _after_step(p: CompositeProblem, state: SolverState) -> None:
    state.k += 1
    if state.debug and state.table is not None and state.k % RECONCILE_EVERY == 0:
        drift = state.table.reconcile_error(p)
        assert drift <= RECONCILE_TOL, f"aggregate drifted by {drift:.3g} at k = {state.k}"


# --------------------------------------------------------------------------
# Steps
# --------------------------------------------------------------------------


def deterministic_candidate(p: CompositeProblem, state: SolverState) -> BlockVector:
    """ỹ with every block j set to prox_conjugate(gⱼ, yⱼ + α·sⱼ, α); state untouched."""
    table = _require_table(state)
    candidate = BlockVector.zeros(p.dual_layout)
    for j in range(p.num_dual):
        candidate.set_block(
            j, _block_update(p, state.y, table.aggregate.block(j), j, state.alpha)
        )
    return candidate


def rdciag_step(
    p: CompositeProblem, state: SolverState, schedule: DelaySchedule
) -> SolverState:
    refresh_table(p, state, schedule)
    table = _require_table(state)
    candidate = deterministic_candidate(p, state) if state.debug else None
    j = _draw(p, state)
    state.y.set_block(j, _block_update(p, state.y, table.aggregate.block(j), j, state.alpha))
    if candidate is not None:
        assert np.array_equal(state.y.block(j), candidate.block(j)), "block update left the candidate"
    _after_step(p, state)
    return state


def piag_step(
    p: CompositeProblem, state: SolverState, schedule: DelaySchedule
) -> SolverState:
    refresh_table(p, state, schedule)
    state.y = deterministic_candidate(p, state)
    _after_step(p, state)
    return state


def random_dbcd_step(p: CompositeProblem, state: SolverState) -> SolverState:
    j = _draw(p, state)
    s = np.zeros(p.dual_layout.block_dims[j])
    for i, matrix in p.A.row(j):
        xi = p.f_components[i].conjugate_grad(-p.A.adjoint_block(i, state.y))
        s += matrix @ xi
    state.y.set_block(j, _block_update(p, state.y, s, j, state.alpha))
    _after_step(p, state)
    return state


def dual_pg_step(p: CompositeProblem, y: BlockVector, alpha: float) -> BlockVector:
    """One proximal gradient step on the whole dual with fresh x = ∇f*(−𝒜*y)."""
    if not alpha > 0:
        raise ValueError(f"Step size must be positive, got {alpha}.")
    z = p.A.apply(primal_from_dual(p, y))
    result = BlockVector.zeros(p.dual_layout)
    for j in range(p.num_dual):
        result.set_block(j, _block_update(p, y, z.block(j), j, alpha))
    return result


# --------------------------------------------------------------------------
# Randomized sparse Kaczmarz
# --------------------------------------------------------------------------


@dataclass(slots=True, eq=False)
class KaczmarzState:
    """
    Iterates of the sparse Kaczmarz method for min λ‖x‖₁ + ½‖x‖² s.t. Ax = b.

    `x_dual` is the auxiliary variable x* = Aᵀz kept alongside the row
    multipliers z, and `x` = soft(x*, λ) is the primal iterate.
    """

    x_dual: Array
    x: Array
    z: Array
    rng: np.random.Generator
    k: int = 0


def _check_rows(matrix: Array) -> None:
    norms = np.einsum("ij,ij->i", matrix, matrix)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"Row {int(zero[0])} of the system matrix is zero.")


def init_kaczmarz(matrix: t.Any, b: t.Any, lam: float, seed: int) -> KaczmarzState:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if b.shape != (matrix.shape[0],):
        raise ValueError(f"Right-hand side of shape {b.shape} for {matrix.shape[0]} rows.")
    if lam < 0:
        raise ValueError("Sparsity weight must be nonnegative.")
    _check_rows(matrix)
    n, m = matrix.shape[1], matrix.shape[0]
    return KaczmarzState(np.zeros(n), np.zeros(n), np.zeros(m), make_rng(seed))


def sparse_kaczmarz_step(
    matrix: Array, b: Array, lam: float, state: KaczmarzState
) -> KaczmarzState:
    i = int(state.rng.integers(matrix.shape[0]))
    row = matrix[i]
    norm2 = float(row @ row)
    if norm2 == 0.0:
        raise ValueError(f"Row {i} of the system matrix is zero.")
    step = (float(row @ state.x) - float(b[i])) / norm2
    state.x_dual = state.x_dual - step * row
    state.z[i] -= step
    state.x = soft_threshold(state.x_dual, lam)
    state.k += 1
    return state


def kaczmarz_dual_value(b: Array, lam: float, state: KaczmarzState) -> float:
    """½‖soft(x*, λ)‖² − ⟨b, z⟩, the objective the method descends on."""
    shrunk = soft_threshold(state.x_dual, lam)
    return 0.5 * float(shrunk @ shrunk) - float(b @ state.z)


def kaczmarz_data(p: CompositeProblem) -> tuple[Array, Array, float]:
    """Recover (A, b, λ) from an augmented ℓ₁ problem."""
    lams = set()
    for f in p.f_components:
        match f:
            case ElasticNetScalar(lam=lam):
                lams.add(lam)
            case _:
                raise ValueError("sparse_kaczmarz needs elastic net primal components.")
    if len(lams) != 1:
        raise ValueError("sparse_kaczmarz needs one shared sparsity weight.")
    rows, rhs = [], []
    for g in p.g_components:
        match g:
            case IndicatorSet(s=Hyperplane(a=a, b=b)) if a.shape[0] == p.num_primal:
                rows.append(a)
                rhs.append(b)
            case _:
                raise ValueError("sparse_kaczmarz needs one hyperplane per dual block.")
    return np.vstack(rows), np.array(rhs), lams.pop()


# --------------------------------------------------------------------------
# Runs
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class StopRule:
    max_iter: int
    gap_tol: float = math.inf
    record_every: int | None = None

    def __post_init__(self):
        """Ensure all preconditions are met."""
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative.")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be at least 1.")

    @property
    def cadence(self) -> int:
        if self.record_every is not None:
            return self.record_every
        return max(1, self.max_iter // MAX_RECORDED_ROWS)


def _guard(d: float, d0: float, k: int) -> None:
    if not math.isfinite(d) or d - d0 > DIVERGENCE_FACTOR * max(1.0, abs(d0)):
        raise DivergenceError(f"Dual objective diverged at k = {k}: D = {d:.6g}, D0 = {d0:.6g}.")


def _sq_dist(x: BlockVector, ref: ReferenceSolution | None) -> float | None:
    if ref is None:
        return None
    diff = x.data - ref.x_star.data
    return float(diff @ diff)


def run(
    p: CompositeProblem,
    method: Method | str,
    schedule: DelaySchedule,
    alpha: float,
    seed: int,
    stop: StopRule,
    ref: ReferenceSolution | None = None,
    *,
    record_time: bool = False,
    debug: bool = False,
) -> Trace:
    """
    Iterate one method and record a trace every `stop.cadence` iterations.

    The run ends at `stop.max_iter` or at the first recorded row whose gap is
    within `stop.gap_tol` (an infinite tolerance never stops early).
    """
    if method not in METHODS:
        raise ValueError(f"Unknown method {method!r}; expected one of {', '.join(METHODS)}.")
    if not alpha > 0:
        raise ValueError(f"Step size must be positive, got {alpha}.")
    if method == "sparse_kaczmarz":
        return _run_kaczmarz(p, seed, stop, ref, record_time=record_time)

    uses_table = method in TABLE_METHODS
    state = init_state(p, alpha, seed, schedule, with_table=uses_table, debug=debug)
    trace = Trace()
    trace.meta.update(
        method=method,
        alpha=alpha,
        seed=seed,
        num_primal=p.num_primal,
        num_dual=p.num_dual,
        **describe(schedule if uses_table else ZeroDelay()),
    )
    d0 = dual_value(p, state.y)
    trace.meta["D0"] = d0
    if ref is not None:
        trace.meta["D_star"] = ref.D_star
        trace.meta["gamma0"] = lyapunov_value(
            d0, ref.D_star, distance_squared(state.y, ref), alpha
        )
    cadence = stop.cadence
    max_y = state.y.norm()
    start = time.perf_counter()
    logger.info(
        "Running %s: alpha=%.6g seed=%d max_iter=%d", method, alpha, seed, stop.max_iter
    )

    while state.k < stop.max_iter:
        match method:
            case "rdciag":
                rdciag_step(p, state, schedule)
            case "piag":
                piag_step(p, state, schedule)
            case "dbcd":
                random_dbcd_step(p, state)
            case _:
                state.y = dual_pg_step(p, state.y, alpha)
                state.k += 1
        max_y = max(max_y, state.y.norm())
        if state.k % cadence and state.k != stop.max_iter:
            continue
        x = state.table.primal(p) if state.table is not None else primal_from_dual(p, state.y)
        d = dual_value(p, state.y)
        _guard(d, d0, state.k)
        dist2 = distance_squared(state.y, ref)
        row = TraceRow(
            k=state.k,
            D=d,
            gap=duality_gap(p, x, state.y),
            dist2=dist2,
            gamma=None if ref is None else lyapunov_value(d, ref.D_star, dist2, alpha),
            primal_err2=_sq_dist(x, ref),
            max_age=state.max_age(),
            seconds=time.perf_counter() - start if record_time else 0.0,
        )
        trace.append(row)
        logger.debug("k=%d D=%.17g gap=%.3g", row.k, row.D, row.gap)
        if stop.gap_tol != math.inf and row.gap <= stop.gap_tol:
            break

    trace.meta["iterations"] = state.k
    trace.meta["max_y_norm"] = max_y
    logger.info(
        "Finished %s seed=%d after %d iterations, gap %.3g",
        method,
        seed,
        state.k,
        trace.rows[-1].gap if trace.rows else math.nan,
    )
    return trace


def _run_kaczmarz(
    p: CompositeProblem,
    seed: int,
    stop: StopRule,
    ref: ReferenceSolution | None,
    *,
    record_time: bool,
) -> Trace:
    matrix, b, lam = kaczmarz_data(p)
    state = init_kaczmarz(matrix, b, lam, seed)
    trace = Trace()
    trace.meta.update(
        method="sparse_kaczmarz",
        seed=seed,
        num_primal=p.num_primal,
        num_dual=p.num_dual,
        delay="zero",
        tau=0,
    )
    d0 = kaczmarz_dual_value(b, lam, state)
    trace.meta["D0"] = d0
    cadence = stop.cadence
    start = time.perf_counter()
    while state.k < stop.max_iter:
        sparse_kaczmarz_step(matrix, b, lam, state)
        if state.k % cadence and state.k != stop.max_iter:
            continue
        d = kaczmarz_dual_value(b, lam, state)
        _guard(d, d0, state.k)
        err2 = None
        if ref is not None:
            diff = state.x - ref.x_star.data
            err2 = float(diff @ diff)
        row = TraceRow(
            k=state.k,
            D=d,
            gap=float(np.linalg.norm(matrix @ state.x - b)),
            dist2=None,
            gamma=None,
            primal_err2=err2,
            max_age=0,
            seconds=time.perf_counter() - start if record_time else 0.0,
        )
        trace.append(row)
        if stop.gap_tol != math.inf and row.gap <= stop.gap_tol:
            break
    trace.meta["iterations"] = state.k
    trace.meta["max_y_norm"] = float(np.linalg.norm(state.z))
    return trace


# --------------------------------------------------------------------------
# Reference solves and recorded histories
# --------------------------------------------------------------------------


def solve_reference(
    p: CompositeProblem,
    max_iter: int = 1_000_000,
    *,
    gap_tol: float = 1e-11,
    check_every: int = 100,
) -> ReferenceSolution:
    """Long dual proximal gradient run at α = 1/L with L = ‖𝒜‖²/minᵢμᵢ."""
    lipschitz = dual_lipschitz(p, operator_norm(p.A))
    alpha = 1.0 / lipschitz if lipschitz > 0 else 1.0
    y = initial_dual(p)
    gap = math.inf
    k = 0
    while k < max_iter:
        y = dual_pg_step(p, y, alpha)
        k += 1
        if k % check_every == 0 or k == max_iter:
            gap = duality_gap(p, primal_from_dual(p, y), y)
            if gap <= gap_tol:
                break
    x = primal_from_dual(p, y)
    gap = duality_gap(p, x, y)
    if not gap <= REFERENCE_GAP_TOL:
        logger.warning("Reference solve stopped at gap %.3g after %d iterations.", gap, k)
    logger.info("Reference solve: %d iterations, gap %.3g", k, gap)
    provenance = f"dual proximal gradient, alpha={alpha:.17g}, iterations={k}, gap={gap:.3g}"
    return ReferenceSolution(x, y, dual_value(p, y), provenance)


@dataclass(slots=True, eq=False)
class History:
    """Every iterate yᵏ and the deterministic candidate ỹᵏ⁺¹ of each step."""

    method: str
    alpha: float
    tau: int
    iterates: list[BlockVector] = field(default_factory=list)
    candidates: list[BlockVector] = field(default_factory=list)
    drawn: list[int] = field(default_factory=list)


def record_history(
    p: CompositeProblem,
    method: Method | str,
    schedule: DelaySchedule,
    alpha: float,
    seed: int,
    steps: int,
) -> History:
    """Run `steps` iterations keeping the full iterate sequence."""
    if method not in TABLE_METHODS | {"dbcd", "dual_pg"}:
        raise ValueError(f"Cannot record a history for {method!r}.")
    uses_table = method in TABLE_METHODS
    state = init_state(p, alpha, seed, schedule, with_table=uses_table)
    history = History(method, alpha, schedule.tau if uses_table else 0)
    history.iterates.append(state.y.copy())
    for _ in range(steps):
        if uses_table:
            refresh_table(p, state, schedule)
            candidate = deterministic_candidate(p, state)
        else:
            candidate = dual_pg_step(p, state.y, alpha)
        if method in ("rdciag", "dbcd"):
            j = _draw(p, state)
            state.y.set_block(j, candidate.block(j))
            history.drawn.append(j)
        else:
            state.y = candidate.copy()
        state.k += 1
        history.candidates.append(candidate)
        history.iterates.append(state.y.copy())
    return history
