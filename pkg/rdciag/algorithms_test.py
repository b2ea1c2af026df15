import math
from dataclasses import dataclass

import numpy as np
import pytest

from .algorithms import (
    DivergenceError,
    GradientTable,
    StalenessError,
    StopRule,
    dual_pg_step,
    init_kaczmarz,
    init_state,
    initial_dual,
    kaczmarz_data,
    piag_step,
    random_dbcd_step,
    rdciag_step,
    record_history,
    run,
    solve_reference,
    sparse_kaczmarz_step,
)
from .applications import (
    AugL1Spec,
    BestApproxSpec,
    build_augmented_l1,
    build_best_approximation,
    desk_augmented_l1,
    desk_best_approximation,
)
from .checks import random_instance
from .functions import IndicatorSet, QuadraticPlusIndicator
from .problem import CompositeProblem, ReferenceSolution, dual_lipschitz
from .schedules import CyclicDelay, DelaySchedule, RandomBoundedDelay, ZeroDelay
from .sets import Box, Halfspace, Hyperplane, WholeSpace
from .spaces import BlockLayout, BlockOperator, BlockVector, operator_norm


def _pinned() -> CompositeProblem:
    """min ½(x − 1)² subject to x = 0, whose dual optimum is y = 1."""
    one = BlockLayout((1,))
    return CompositeProblem(
        (QuadraticPlusIndicator([1.0], WholeSpace(1)),),
        (IndicatorSet(Hyperplane([1.0], 0.0)),),
        BlockOperator(one, one, {(0, 0): [[1.0]]}),
    )


def _pinned_reference(p: CompositeProblem) -> ReferenceSolution:
    return ReferenceSolution(
        BlockVector(p.primal_layout, np.zeros(1)),
        BlockVector(p.dual_layout, np.ones(1)),
        -0.5,
    )


def _safe_step(p: CompositeProblem) -> float:
    return 1.0 / dual_lipschitz(p, operator_norm(p.A))


@dataclass(frozen=True, slots=True)
class _Frozen(DelaySchedule):
    """Never refreshes, yet claims a zero delay bound."""

    @property
    def kind(self) -> str:
        return "frozen"

    @property
    def tau(self) -> int:
        return 0

    def due(self, k, refreshed_at, rng):
        return np.zeros(refreshed_at.shape, dtype=bool)


# --------------------------------------------------------------------------
# Gradient table
# --------------------------------------------------------------------------


def test_table_refresh_matches_recomputation():
    p = random_instance(0)
    rng = np.random.default_rng(0)
    table = GradientTable.build(p, initial_dual(p))
    y = BlockVector(p.dual_layout, rng.standard_normal(p.dual_layout.total_dim))
    for i in range(p.num_primal):
        table.refresh(p, i, y, 1)
    fresh = p.A.apply(table.primal(p))
    assert np.allclose(table.aggregate.data, fresh.data, atol=1e-12)
    assert table.reconcile_error(p) <= 1e-12
    assert table.ages(4).tolist() == [3] * p.num_primal


def test_stale_snapshot_raises():
    p = random_instance(1)
    schedule = _Frozen()
    state = init_state(p, _safe_step(p), 0, schedule)
    rdciag_step(p, state, schedule)
    with pytest.raises(StalenessError):
        rdciag_step(p, state, schedule)


def test_table_methods_need_a_table():
    p = random_instance(2)
    state = init_state(p, _safe_step(p), 0, with_table=False)
    with pytest.raises(ValueError):
        piag_step(p, state, ZeroDelay())


def test_state_rejects_bad_step():
    with pytest.raises(ValueError):
        _ = init_state(_pinned(), 0.0, 0)


# --------------------------------------------------------------------------
# Reductions to the undelayed methods
# --------------------------------------------------------------------------


def test_zero_delay_rdciag_is_dual_block_coordinate_descent():
    p = random_instance(3)
    alpha = _safe_step(p)
    ours = init_state(p, alpha, 7, ZeroDelay())
    plain = init_state(p, alpha, 7, with_table=False)
    for _ in range(200):
        rdciag_step(p, ours, ZeroDelay())
        random_dbcd_step(p, plain)
        assert np.allclose(ours.y.data, plain.y.data, atol=1e-10)


def test_zero_delay_piag_is_dual_proximal_gradient():
    p = random_instance(4)
    alpha = _safe_step(p)
    state = init_state(p, alpha, 0, ZeroDelay())
    y = initial_dual(p)
    for _ in range(100):
        piag_step(p, state, ZeroDelay())
        y = dual_pg_step(p, y, alpha)
        assert np.allclose(state.y.data, y.data, atol=1e-10)


def test_single_block_rdciag_is_piag():
    p = random_instance(5, num_primal=4, num_dual=1)
    alpha = _safe_step(p)
    schedule = CyclicDelay(3)
    first = init_state(p, alpha, 0, schedule)
    second = init_state(p, alpha, 0, schedule)
    for _ in range(100):
        rdciag_step(p, first, schedule)
        piag_step(p, second, schedule)
        assert np.allclose(first.y.data, second.y.data, atol=1e-10)


def test_dual_pg_step_rejects_bad_step():
    p = _pinned()
    with pytest.raises(ValueError):
        _ = dual_pg_step(p, initial_dual(p), -1.0)


# --------------------------------------------------------------------------
# Runs
# --------------------------------------------------------------------------


def test_stop_rule_validation_and_cadence():
    assert StopRule(max_iter=50_000).cadence == 5
    assert StopRule(max_iter=10).cadence == 1
    assert StopRule(max_iter=10, record_every=4).cadence == 4
    with pytest.raises(ValueError):
        _ = StopRule(max_iter=-1)
    with pytest.raises(ValueError):
        _ = StopRule(max_iter=10, record_every=0)


def test_run_records_on_cadence_and_final_step():
    p = _pinned()
    trace = run(p, "dbcd", ZeroDelay(), 0.5, 3, StopRule(max_iter=22, record_every=5))
    assert trace.column("k") == [5, 10, 15, 20, 22]
    assert trace.meta["method"] == "dbcd"
    assert trace.meta["iterations"] == 22
    assert trace.meta["D0"] == 0.0
    assert trace.column("dist2") == [None] * 5


def test_run_with_reference_fills_distance_columns():
    p = _pinned()
    ref = _pinned_reference(p)
    trace = run(p, "dual_pg", ZeroDelay(), 1.0, 0, StopRule(max_iter=3), ref)
    first = trace.rows[0]
    assert first.D == pytest.approx(-0.5)
    assert first.dist2 == pytest.approx(0.0, abs=1e-24)
    assert first.gamma == pytest.approx(0.0, abs=1e-12)
    assert first.primal_err2 == pytest.approx(0.0, abs=1e-24)
    assert trace.meta["gamma0"] == pytest.approx(0.5 + 0.5)


def test_run_stops_at_gap_tolerance():
    p = _pinned()
    trace = run(p, "dual_pg", ZeroDelay(), 1.0, 0, StopRule(max_iter=100, gap_tol=1e-9))
    assert len(trace) == 1
    assert trace.meta["iterations"] == 1
    assert trace.rows[-1].gap <= 1e-9


def test_run_detects_divergence():
    with pytest.raises(DivergenceError):
        _ = run(_pinned(), "dual_pg", ZeroDelay(), 10.0, 0, StopRule(max_iter=50))


def test_run_rejects_unknown_method_and_bad_step():
    with pytest.raises(ValueError):
        _ = run(_pinned(), "newton", ZeroDelay(), 1.0, 0, StopRule(max_iter=1))
    with pytest.raises(ValueError):
        _ = run(_pinned(), "dbcd", ZeroDelay(), 0.0, 0, StopRule(max_iter=1))


def test_run_is_deterministic_per_seed():
    p = build_best_approximation(desk_best_approximation(0, n=4, m=3))
    schedule = CyclicDelay(2)
    stop = StopRule(max_iter=300, record_every=20)
    first = run(p, "rdciag", schedule, 0.05, 11, stop)
    second = run(p, "rdciag", schedule, 0.05, 11, stop)
    other = run(p, "rdciag", schedule, 0.05, 12, stop)
    assert first.rows == second.rows
    assert first.column("D") != other.column("D")


def test_random_delays_stay_within_bound():
    p = random_instance(6)
    schedule = RandomBoundedDelay(3, seed=1)
    trace = run(p, "rdciag", schedule, _safe_step(p), 0, StopRule(max_iter=300))
    assert max(trace.column("max_age")) <= 3
    assert trace.meta["delay"] == "random_bounded"


def test_rdciag_converges_on_best_approximation():
    spec = desk_best_approximation(1, n=3, m=2)
    p = build_best_approximation(spec)
    ref = solve_reference(p, 20_000)
    trace = run(p, "rdciag", CyclicDelay(2), 0.1, 0, StopRule(max_iter=20_000), ref)
    assert trace.rows[-1].gamma < 1e-3 * trace.meta["gamma0"]


def test_gap_stop_certifies_the_primal():
    p = build_best_approximation(desk_best_approximation())
    ref = solve_reference(p)
    stop = StopRule(max_iter=100_000, gap_tol=1e-6)
    trace = run(p, "rdciag", CyclicDelay(2), 0.05, 0, stop, ref)
    first, last = trace.rows[0], trace.rows[-1]
    assert first.gap == math.inf
    assert last.gap <= 1e-6
    assert last.primal_err2 is not None and last.primal_err2 <= 1e-4


def test_debug_run_reconciles_aggregate():
    p = random_instance(7)
    trace = run(
        p, "rdciag", CyclicDelay(3), _safe_step(p), 0, StopRule(max_iter=2000), debug=True
    )
    assert trace.meta["iterations"] == 2000


# --------------------------------------------------------------------------
# Sparse Kaczmarz
# --------------------------------------------------------------------------


def test_kaczmarz_step_fixes_the_drawn_row():
    matrix, b = np.array([[1.0, 2.0]]), np.array([3.0])
    state = init_kaczmarz(matrix, b, 0.0, 0)
    sparse_kaczmarz_step(matrix, b, 0.0, state)
    assert float(matrix[0] @ state.x) == pytest.approx(3.0)
    assert state.z.tolist() == pytest.approx([0.6])


def test_kaczmarz_step_is_a_dual_row_projection():
    matrix, b = np.array([[1.0, -1.0, 2.0]]), np.array([1.0])
    state = init_kaczmarz(matrix, b, 0.5, 0)
    for _ in range(5):
        before_dual = float(matrix[0] @ state.x_dual)
        residual = float(matrix[0] @ state.x) - 1.0
        sparse_kaczmarz_step(matrix, b, 0.5, state)
        assert float(matrix[0] @ state.x_dual) == pytest.approx(before_dual - residual)


def test_kaczmarz_solves_consistent_system():
    spec = desk_augmented_l1(0, m=5, n=10, sparsity=2)
    state = init_kaczmarz(spec.matrix, spec.b, spec.lam, 0)
    for _ in range(20_000):
        sparse_kaczmarz_step(spec.matrix, spec.b, spec.lam, state)
    assert np.linalg.norm(spec.matrix @ state.x - spec.b) <= 1e-4


def test_kaczmarz_validation():
    with pytest.raises(ValueError):
        _ = init_kaczmarz([[1.0, 0.0], [0.0, 0.0]], [1.0, 1.0], 0.1, 0)
    with pytest.raises(ValueError):
        _ = init_kaczmarz([[1.0, 0.0]], [1.0, 1.0], 0.1, 0)
    with pytest.raises(ValueError):
        _ = init_kaczmarz([[1.0, 0.0]], [1.0], -0.1, 0)


def test_kaczmarz_data_reads_augmented_l1():
    spec = AugL1Spec([[1.0, 2.0], [0.0, 1.0]], [1.0, 2.0], 0.3)
    matrix, b, lam = kaczmarz_data(build_augmented_l1(spec))
    assert np.array_equal(matrix, spec.matrix)
    assert b.tolist() == [1.0, 2.0]
    assert lam == 0.3


def test_kaczmarz_data_rejects_other_problems():
    spec = BestApproxSpec([2.0], Box([0.0], [1.0]), (Halfspace([1.0], 0.5),))
    with pytest.raises(ValueError):
        _ = kaczmarz_data(build_best_approximation(spec))


def test_run_sparse_kaczmarz():
    p = build_augmented_l1(AugL1Spec([[1.0, 2.0]], [3.0], 0.0001))
    trace = run(p, "sparse_kaczmarz", ZeroDelay(), 1.0, 0, StopRule(max_iter=10))
    assert trace.meta["method"] == "sparse_kaczmarz"
    assert trace.column("dist2") == [None] * 10
    assert trace.rows[-1].gap <= 1e-3


# --------------------------------------------------------------------------
# References and histories
# --------------------------------------------------------------------------


def test_reference_of_pinned_problem():
    ref = solve_reference(_pinned())
    assert ref.y_star.data == pytest.approx([1.0])
    assert ref.x_star.data == pytest.approx([0.0], abs=1e-12)
    assert ref.D_star == pytest.approx(-0.5)
    assert "dual proximal gradient" in ref.provenance


def test_reference_without_constraints_projects_onto_omega():
    spec = BestApproxSpec([2.0, -0.5, -3.0], Box([-1.0] * 3, [1.0] * 3))
    ref = solve_reference(build_best_approximation(spec), 100)
    assert ref.x_star.data.tolist() == pytest.approx([1.0, -0.5, -1.0])
    assert ref.y_star.data.tolist() == [0.0, 0.0, 0.0]


def test_record_history_shapes():
    p = random_instance(8)
    alpha = _safe_step(p)
    history = record_history(p, "rdciag", CyclicDelay(2), alpha, 0, 25)
    assert len(history.iterates) == 26
    assert len(history.candidates) == 25
    assert len(history.drawn) == 25
    assert history.tau == 1
    for k, j in enumerate(history.drawn):
        moved = history.iterates[k + 1]
        assert np.array_equal(moved.block(j), history.candidates[k].block(j))


def test_piag_history_follows_candidates():
    p = random_instance(9)
    history = record_history(p, "piag", CyclicDelay(2), _safe_step(p), 0, 10)
    assert history.drawn == []
    for cand, nxt in zip(history.candidates, history.iterates[1:]):
        assert np.array_equal(cand.data, nxt.data)


def test_record_history_rejects_kaczmarz():
    with pytest.raises(ValueError):
        _ = record_history(_pinned(), "sparse_kaczmarz", ZeroDelay(), 1.0, 0, 1)


def test_initial_dual_enters_conjugate_domain():
    # Halfspace conjugates live on y ≥ 0; zero is already inside.
    spec = BestApproxSpec([2.0], Box([0.0], [1.0]), (Halfspace([1.0], 0.5),))
    y = initial_dual(build_best_approximation(spec))
    assert y.data.tolist() == [0.0]
    assert math.isfinite(y.norm())
