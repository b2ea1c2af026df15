import logging
import math
import typing as t
from dataclasses import dataclass

import numpy as np

from .functions import prox_conjugate
from .problem import (
    CompositeProblem,
    ProblemConstants,
    ReferenceSolution,
    distance_squared,
    dual_value,
)
from .spaces import BlockVector
from .trace import TRACE_HEADER, Trace, TraceRow

if t.TYPE_CHECKING:
    from .algorithms import History

logger = logging.getLogger(__name__)

FIT_FLOOR = 1e-14
MIN_FIT_ROWS = 10
DEFAULT_BURN_IN = 0.2
RECURRENCE_SLACK = 1e-10
DESCENT_SLACK = 1e-8
MIN_SAMPLES = 100
SAMPLE_DIST_FLOOR = 1e-12


class InsufficientDataError(ValueError):
    """Raised when a trace or sample set is too short to analyze."""


def lyapunov_value(D_y: float, D_star: float, dist2: float, alpha: float) -> float:
    """Γ = D(y) − D* + dist2/(2α)."""
    if not alpha > 0:
        raise ValueError(f"Step size must be positive, got {alpha}.")
    return D_y - D_star + dist2 / (2.0 * alpha)


# --------------------------------------------------------------------------
# Rate fitting
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RateReport:
    empirical_rate: float
    r_squared: float
    theoretical_rate: float | None
    burn_in: int
    rows_used: int
    field: str = "gamma"

    def as_lines(self) -> list[str]:
        theory = "" if self.theoretical_rate is None else f"{self.theoretical_rate:.17g}"
        return [
            f"field={self.field}",
            f"empirical_rate={self.empirical_rate:.17g}",
            f"r_squared={self.r_squared:.17g}",
            f"theoretical_rate={theory}",
            f"burn_in={self.burn_in}",
            f"rows_used={self.rows_used}",
        ]


def fit_linear_rate(
    trace: Trace,
    field: str = "gamma",
    burn_in: float = DEFAULT_BURN_IN,
    theoretical_rate: float | None = None,
) -> RateReport:
    """
    Least-squares fit of log(field) against k.

    The first `burn_in` fraction of rows is dropped, infinite values (a gap
    taken before the primal is feasible) are skipped, and the fit stops at
    the first row whose value is missing or at most FIT_FLOOR.
    """
    if field not in TRACE_HEADER or field in ("k", "max_age", "seconds"):
        raise ValueError(f"Cannot fit a rate to column {field!r}.")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError(f"burn_in must lie in [0, 1), got {burn_in}.")
    dropped = int(burn_in * len(trace.rows))
    ks: list[int] = []
    values: list[float] = []
    for row in trace.rows[dropped:]:
        value = getattr(row, field)
        if value is None or not value > FIT_FLOOR:
            break
        if value == math.inf:
            continue
        ks.append(row.k)
        values.append(value)
    if len(values) < MIN_FIT_ROWS:
        raise InsufficientDataError(
            f"Only {len(values)} usable rows of {field!r} after burn-in; "
            f"need {MIN_FIT_ROWS}."
        )
    k_arr = np.asarray(ks, dtype=np.float64)
    logs = np.log(np.asarray(values))
    slope, intercept = np.polyfit(k_arr, logs, 1)
    residual = logs - (slope * k_arr + intercept)
    spread = logs - logs.mean()
    ss_tot = float(spread @ spread)
    if ss_tot <= 1e-300:
        r_squared = 1.0
    else:
        r_squared = min(1.0, max(0.0, 1.0 - float(residual @ residual) / ss_tot))
    if slope > 1e-12:
        logger.warning("Column %s grows at rate %.6g per iteration.", field, math.exp(slope))
    return RateReport(
        empirical_rate=min(1.0, math.exp(slope)),
        r_squared=r_squared,
        theoretical_rate=theoretical_rate,
        burn_in=dropped,
        rows_used=len(values),
        field=field,
    )


def seed_average(traces: t.Sequence[Trace]) -> Trace:
    """
    Average the numeric columns of several traces row by row.

    Traces are truncated to their common prefix of k values. A column missing
    from any trace stays missing in the average.
    """
    if not traces:
        raise InsufficientDataError("No traces to average.")
    length = min(len(tr.rows) for tr in traces)
    averaged = Trace(meta={"seeds": len(traces)})
    for r in range(length):
        rows = [tr.rows[r] for tr in traces]
        k = rows[0].k
        if any(row.k != k for row in rows):
            break

        def mean(name: str) -> float | None:
            vals = [getattr(row, name) for row in rows]
            if any(v is None for v in vals):
                return None
            return float(np.mean(vals))

        averaged.append(
            TraceRow(
                k=k,
                D=t.cast(float, mean("D")),
                gap=t.cast(float, mean("gap")),
                dist2=mean("dist2"),
                gamma=mean("gamma"),
                primal_err2=mean("primal_err2"),
                max_age=max(row.max_age for row in rows),
                seconds=t.cast(float, mean("seconds")),
            )
        )
    return averaged


# --------------------------------------------------------------------------
# Tail recurrence
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TailReport:
    """First failing index per clause, None when the clause holds."""

    hypothesis_violation: int | None
    hypothesis_fraction: float
    condition_value: float
    condition_holds: bool
    conclusion_violation: int | None

    @property
    def passed(self) -> bool:
        return (
            self.hypothesis_violation is None
            and self.condition_holds
            and self.conclusion_violation is None
        )


def check_tail_recurrence(
    V: t.Sequence[float],
    w: t.Sequence[float],
    a: float,
    b: float,
    c: float,
    k0: int,
) -> TailReport:
    """
    Check V_{k+1} ≤ aV_k − bw_k + cΣ_{j=k−k0}^{k} w_j, the step condition
    (c/(1−a))·(1−a^{k0+1})/a^{k0} ≤ b, and the conclusion V_k ≤ a^k V_0.
    """
    if not 0.0 < a < 1.0 or b < 0 or c < 0 or k0 < 0:
        raise ValueError(f"Invalid recurrence constants a={a}, b={b}, c={c}, k0={k0}.")
    v = np.asarray(V, dtype=np.float64)
    w_arr = np.asarray(w, dtype=np.float64)
    steps = max(len(v) - 1, 0)
    if w_arr.shape[0] < steps:
        raise ValueError(f"Need {steps} w values, got {w_arr.shape[0]}.")
    prefix = np.concatenate([[0.0], np.cumsum(w_arr[:steps])])

    first_bad: int | None = None
    holds = 0
    for k in range(steps):
        window = prefix[k + 1] - prefix[max(0, k - k0)]
        bound = a * v[k] - b * w_arr[k] + c * window
        if v[k + 1] <= bound + RECURRENCE_SLACK * max(1.0, abs(v[k])):
            holds += 1
        elif first_bad is None:
            first_bad = k
    condition = (c / (1.0 - a)) * (1.0 - a ** (k0 + 1)) / a**k0

    conclusion_bad: int | None = None
    for k in range(len(v)):
        if v[k] > a**k * v[0] + RECURRENCE_SLACK * max(1.0, abs(v[0])):
            conclusion_bad = k
            break
    return TailReport(
        hypothesis_violation=first_bad,
        hypothesis_fraction=holds / steps if steps else 1.0,
        condition_value=condition,
        condition_holds=condition <= b,
        conclusion_violation=conclusion_bad,
    )


def tail_constants(
    alpha: float, constants: ProblemConstants, num_dual: int
) -> tuple[float, float, float, int]:
    """(a, b, c, k0) = (rate, 1/(4α), η₂/|J|, τ) for the Lyapunov recurrence."""
    return (
        constants.rate(alpha, num_dual),
        1.0 / (4.0 * alpha),
        constants.eta2 / num_dual,
        constants.tau,
    )


# --------------------------------------------------------------------------
# Descent checks on recorded histories
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class DescentReport:
    checked: int
    violations: int
    max_violation: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _sq(a: BlockVector, b: BlockVector) -> float:
    diff = a.data - b.data
    return float(diff @ diff)


def check_descent(
    p: CompositeProblem,
    history: "History",
    constants: ProblemConstants,
    ref: ReferenceSolution | None = None,
) -> DescentReport:
    """
    Evaluate the per-step descent inequality of the candidate ỹᵏ⁺¹:

        D(ỹ) ≤ D(y) + ‖y − yᵏ‖²/(2α) − ‖y − ỹ‖²/(2α) − ‖ỹ − yᵏ‖²/(2α)
               + η₂(‖ỹ − yᵏ‖² + Σ_{s=k−τ}^{k−1} ‖yˢ⁺¹ − yˢ‖²)

    at y = yᵏ and, given a reference, at y = y_star.
    """
    alpha, tau = history.alpha, history.tau
    half = 1.0 / (2.0 * alpha)
    moves = [_sq(history.iterates[s + 1], history.iterates[s]) for s in range(len(history.candidates))]
    checked = violations = 0
    worst = -math.inf
    for k, cand in enumerate(history.candidates):
        yk = history.iterates[k]
        d_cand = dual_value(p, cand)
        step = _sq(cand, yk)
        past = sum(moves[max(0, k - tau) : k])
        anchors = [yk] if ref is None else [yk, ref.y_star]
        for y in anchors:
            d_y = dual_value(p, y)
            rhs = (
                d_y
                + half * _sq(y, yk)
                - half * _sq(y, cand)
                - half * step
                + constants.eta2 * (step + past)
            )
            excess = d_cand - rhs
            worst = max(worst, excess)
            checked += 1
            if excess > DESCENT_SLACK * max(1.0, abs(d_y)):
                violations += 1
    logger.info("Descent check: %d evaluations, %d violations", checked, violations)
    return DescentReport(checked, violations, worst if checked else 0.0)


@dataclass(frozen=True, slots=True)
class ExpectedDescentReport:
    checked: int
    violations: int
    max_violation: float
    max_identity_error: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_expected_descent(
    p: CompositeProblem, history: "History", constants: ProblemConstants
) -> ExpectedDescentReport:
    """
    Average D over the |J| possible single-block moves from yᵏ toward ỹᵏ⁺¹
    and compare with ((|J|−1)/|J|)D(yᵏ) + (1/|J|)D(ỹ) + (η₁/|J|)‖ỹ − yᵏ‖².
    Also measures the identity 𝔼‖yᵏ⁺¹ − yᵏ‖² = ‖ỹ − yᵏ‖²/|J|.
    """
    n = p.num_dual
    checked = violations = 0
    worst = -math.inf
    identity_error = 0.0
    for k, cand in enumerate(history.candidates):
        yk = history.iterates[k]
        step = _sq(cand, yk)
        total_d = total_move = 0.0
        for j in range(n):
            moved = yk.copy()
            moved.set_block(j, cand.block(j))
            total_d += dual_value(p, moved)
            total_move += _sq(moved, yk)
        d_k = dual_value(p, yk)
        bound = ((n - 1) / n) * d_k + dual_value(p, cand) / n + constants.eta1 * step / n
        excess = total_d / n - bound
        worst = max(worst, excess)
        identity_error = max(identity_error, abs(total_move / n - step / n))
        checked += 1
        if excess > DESCENT_SLACK * max(1.0, abs(d_k)):
            violations += 1
    return ExpectedDescentReport(
        checked, violations, worst if checked else 0.0, identity_error
    )


# --------------------------------------------------------------------------
# Growth modulus and primal bound
# --------------------------------------------------------------------------


def estimate_sigma(
    p: CompositeProblem,
    ref: ReferenceSolution,
    samples: t.Iterable[BlockVector],
) -> float:
    """σ̂ = min over samples of 2(D(y) − D*)/‖y − y_star‖², skipping samples at y_star."""
    ratios = []
    for y in samples:
        dist2 = t.cast(float, distance_squared(y, ref))
        if dist2 <= SAMPLE_DIST_FLOOR:
            continue
        ratios.append(2.0 * (dual_value(p, y) - ref.D_star) / dist2)
    if len(ratios) < MIN_SAMPLES:
        raise InsufficientDataError(
            f"{len(ratios)} usable sample points; need at least {MIN_SAMPLES}."
        )
    sigma = min(ratios)
    logger.info("Estimated sigma %.6g from %d samples", sigma, len(ratios))
    return sigma


def default_samples(
    p: CompositeProblem,
    ref: ReferenceSolution,
    count: int = 200,
    scale: float = 1.0,
    seed: int = 0,
) -> list[BlockVector]:
    """Gaussian perturbations of y_star pulled back into dom g* blockwise."""
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(count):
        noisy = ref.y_star.data + scale * rng.standard_normal(ref.y_star.data.shape[0])
        point = BlockVector(p.dual_layout, noisy)
        for j, g in enumerate(p.g_components):
            point.set_block(j, prox_conjugate(g, point.block(j), 1.0))
        samples.append(point)
    return samples


def primal_error_bound(
    alpha: float,
    gamma0: float,
    constants: ProblemConstants,
    p: CompositeProblem,
    k: int,
    tau: int,
) -> float:
    """2αΓ₀·ΣᵢΣⱼ(‖𝒜ⱼᵢ‖²/μᵢ²)·rate^{k−τ}."""
    if k < tau:
        raise ValueError(f"The bound starts at k = tau = {tau}, got k = {k}.")
    weight = sum(
        p.A.norm(j, i) ** 2 / p.f_components[i].mu ** 2 for (j, i) in p.A.entries
    )
    rate = constants.rate(alpha, p.num_dual)
    return 2.0 * alpha * gamma0 * weight * rate ** (k - tau)
