import math

import numpy as np
import pytest

from .algorithms import record_history, solve_reference
from .checks import random_instance, synthetic_recurrence
from .diagnostics import (
    InsufficientDataError,
    check_descent,
    check_expected_descent,
    check_tail_recurrence,
    default_samples,
    estimate_sigma,
    fit_linear_rate,
    lyapunov_value,
    primal_error_bound,
    seed_average,
    tail_constants,
)
from .functions import IndicatorSet, QuadraticPlusIndicator
from .problem import CompositeProblem, ReferenceSolution, compute_constants
from .schedules import CyclicDelay, ZeroDelay
from .sets import Hyperplane, WholeSpace
from .spaces import BlockLayout, BlockOperator, BlockVector
from .trace import Trace, TraceRow


def _pinned() -> CompositeProblem:
    """min ½(x − 1)² subject to x = 0; D(y) = ½y² − y."""
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


def _gamma_trace(values, ks=None) -> Trace:
    trace = Trace()
    for k, value in zip(ks or range(len(values)), values):
        trace.append(TraceRow(k, 0.0, 0.0, None, value, None, 0))
    return trace


def test_lyapunov_value():
    assert lyapunov_value(1.0, 0.0, 2.0, 0.5) == 3.0
    with pytest.raises(ValueError):
        _ = lyapunov_value(1.0, 0.0, 2.0, 0.0)


# --------------------------------------------------------------------------
# Rate fits
# --------------------------------------------------------------------------


def test_fit_recovers_geometric_rate():
    report = fit_linear_rate(_gamma_trace([0.9**k for k in range(50)]), theoretical_rate=0.95)
    assert report.empirical_rate == pytest.approx(0.9, rel=1e-9)
    assert report.r_squared == pytest.approx(1.0, abs=1e-9)
    assert report.burn_in == 10
    assert report.rows_used == 40
    assert "theoretical_rate=0.94999999999999996" in report.as_lines()


def test_fit_stops_at_floor():
    report = fit_linear_rate(_gamma_trace([0.5**k for k in range(100)]), burn_in=0.0)
    assert report.rows_used == 47
    assert report.empirical_rate == pytest.approx(0.5, rel=1e-9)


def test_fit_caps_growth_at_one():
    report = fit_linear_rate(_gamma_trace([1.1**k for k in range(20)]), burn_in=0.0)
    assert report.empirical_rate == 1.0


def test_fit_on_other_column():
    trace = Trace()
    for k in range(20):
        trace.append(TraceRow(k, 0.0, 2.0 * 0.8**k, None, None, None, 0))
    assert fit_linear_rate(trace, field="gap", burn_in=0.0).empirical_rate == pytest.approx(0.8)


def test_fit_skips_gaps_of_infeasible_primals():
    trace = Trace()
    for k in range(5):
        trace.append(TraceRow(k, 0.0, math.inf, None, None, None, 0))
    for k in range(5, 25):
        trace.append(TraceRow(k, 0.0, 0.8**k, None, None, None, 0))
    report = fit_linear_rate(trace, field="gap", burn_in=0.0)
    assert report.rows_used == 20
    assert report.empirical_rate == pytest.approx(0.8)


def test_fit_needs_enough_rows():
    with pytest.raises(InsufficientDataError):
        _ = fit_linear_rate(_gamma_trace([0.5**k for k in range(8)]), burn_in=0.0)
    with pytest.raises(InsufficientDataError):
        _ = fit_linear_rate(_gamma_trace([None] * 30))


def test_fit_rejects_bad_arguments():
    trace = _gamma_trace([0.9**k for k in range(20)])
    with pytest.raises(ValueError):
        _ = fit_linear_rate(trace, field="k")
    with pytest.raises(ValueError):
        _ = fit_linear_rate(trace, burn_in=1.0)


def test_seed_average():
    first = Trace()
    first.append(TraceRow(1, 1.0, 2.0, 0.5, 1.0, None, 1))
    first.append(TraceRow(2, 3.0, 4.0, 0.5, 1.0, None, 0))
    first.append(TraceRow(3, 0.0, 0.0, 0.5, 1.0, None, 0))
    second = Trace()
    second.append(TraceRow(1, 3.0, 0.0, None, 3.0, None, 2))
    second.append(TraceRow(2, 5.0, 0.0, None, 3.0, None, 0))
    averaged = seed_average([first, second])
    assert averaged.column("k") == [1, 2]
    assert averaged.column("D") == [2.0, 4.0]
    assert averaged.column("gamma") == [2.0, 2.0]
    assert averaged.column("dist2") == [None, None]
    assert averaged.column("max_age") == [2, 0]
    assert averaged.meta["seeds"] == 2


def test_seed_average_stops_at_misaligned_rows():
    first = _gamma_trace([1.0, 1.0], ks=[1, 2])
    second = _gamma_trace([1.0, 1.0], ks=[1, 3])
    assert seed_average([first, second]).column("k") == [1]
    with pytest.raises(InsufficientDataError):
        _ = seed_average([])


# --------------------------------------------------------------------------
# Tail recurrence
# --------------------------------------------------------------------------


def test_geometric_sequence_passes():
    v = [0.5**k for k in range(30)]
    report = check_tail_recurrence(v, [0.0] * 29, 0.5, 1.0, 0.0, 2)
    assert report.passed
    assert report.hypothesis_fraction == 1.0


def test_growing_sequence_fails():
    report = check_tail_recurrence([1.0, 2.0, 1.0], [0.0, 0.0], 0.5, 1.0, 0.0, 0)
    assert not report.passed
    assert report.hypothesis_violation == 0
    assert report.conclusion_violation == 1
    assert report.hypothesis_fraction == 0.5


def test_step_condition():
    report = check_tail_recurrence([1.0, 0.5], [0.0], 0.5, 0.1, 1.0, 0)
    assert report.condition_value == pytest.approx(1.0)
    assert not report.condition_holds


def test_recurrence_input_validation():
    with pytest.raises(ValueError):
        _ = check_tail_recurrence([1.0], [], 1.0, 1.0, 0.0, 0)
    with pytest.raises(ValueError):
        _ = check_tail_recurrence([1.0, 0.5, 0.2], [0.0], 0.5, 1.0, 0.0, 0)


def test_synthetic_recurrences_pass():
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert check_tail_recurrence(*synthetic_recurrence(rng)).passed


def test_tail_constants():
    p = _pinned()
    constants = compute_constants(p, 0, sigma=1.0)
    a, b, c, k0 = tail_constants(0.1, constants, 1)
    assert a == pytest.approx(10.0 / 11.0)
    assert b == pytest.approx(2.5)
    assert c == pytest.approx(0.5)
    assert k0 == 0


# --------------------------------------------------------------------------
# Descent
# --------------------------------------------------------------------------


def test_descent_holds_on_random_instance():
    p = random_instance(0)
    schedule = CyclicDelay(2)
    constants = compute_constants(p, schedule.tau)
    alpha = 1.0 / (4.0 * (constants.eta1 + constants.eta2))
    history = record_history(p, "rdciag", schedule, alpha, 0, 200)
    report = check_descent(p, history, constants)
    assert report.passed
    assert report.checked == 200
    expected = check_expected_descent(p, history, constants)
    assert expected.passed
    assert expected.max_identity_error <= 1e-12


def test_descent_against_reference():
    p = _pinned()
    constants = compute_constants(p, 0)
    history = record_history(p, "dual_pg", ZeroDelay(), 0.5, 0, 20)
    report = check_descent(p, history, constants, _pinned_reference(p))
    assert report.passed
    assert report.checked == 40


def test_descent_holds_at_reference_on_random_instance():
    p = random_instance(0)
    ref = solve_reference(p, 20_000)
    schedule = CyclicDelay(2)
    constants = compute_constants(p, schedule.tau)
    alpha = 1.0 / (4.0 * (constants.eta1 + constants.eta2))
    history = record_history(p, "rdciag", schedule, alpha, 0, 100)
    report = check_descent(p, history, constants, ref)
    assert report.passed
    assert report.checked == 200


def test_descent_flags_a_bad_candidate():
    p = _pinned()
    constants = compute_constants(p, 0)
    history = record_history(p, "dual_pg", ZeroDelay(), 0.5, 0, 3)
    history.candidates[0] = BlockVector(p.dual_layout, np.array([10.0]))
    report = check_descent(p, history, constants)
    assert not report.passed
    assert report.max_violation > 100.0


# --------------------------------------------------------------------------
# Growth modulus and primal bound
# --------------------------------------------------------------------------


def test_sigma_of_quadratic_dual():
    p = _pinned()
    ref = _pinned_reference(p)
    sigma = estimate_sigma(p, ref, default_samples(p, ref))
    assert sigma == pytest.approx(1.0, rel=1e-6)


def test_sigma_needs_enough_samples():
    p = _pinned()
    ref = _pinned_reference(p)
    with pytest.raises(InsufficientDataError):
        _ = estimate_sigma(p, ref, [ref.y_star] * 500)


def test_primal_error_bound():
    p = _pinned()
    constants = compute_constants(p, 0, sigma=1.0)
    bound = primal_error_bound(0.1, 2.0, constants, p, 3, 0)
    assert bound == pytest.approx(0.4 * (10.0 / 11.0) ** 3)
    with pytest.raises(ValueError):
        _ = primal_error_bound(0.1, 2.0, constants, p, 0, 1)
    assert math.isfinite(bound)
