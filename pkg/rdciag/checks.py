"""
Executable property suite behind `rdciag check`.

Every check is a plain function returning a CheckResult; `CHECKS` maps the
names accepted by `--filter` to them.
"""

import logging
import math
import typing as t
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .algorithms import (
    GradientTable,
    StopRule,
    dual_pg_step,
    init_state,
    piag_step,
    random_dbcd_step,
    rdciag_step,
    record_history,
    run,
    solve_reference,
)
from .applications import (
    AugL1Spec,
    build_augmented_l1,
    build_best_approximation,
    build_num,
    desk_augmented_l1,
    desk_best_approximation,
    desk_num,
    link_loads,
)
from .diagnostics import (
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
from .functions import (
    ElasticNetScalar,
    IndicatorSet,
    LogUtility,
    NegUtilityBoxed,
    QuadraticPlusIndicator,
    QuadraticUtility,
    SeparableComponent,
    conjugate_grad,
    pair_values,
    prox,
    prox_conjugate,
)
from .problem import (
    CompositeProblem,
    ProblemConstants,
    ReferenceSolution,
    component_dual_gradient,
    compute_constants,
    distance_squared,
    dual_lipschitz,
    dual_value,
    duality_gap,
    lipschitz_constants,
    primal_from_dual,
    solve_z0,
)
from .schedules import CyclicDelay, DelaySchedule, ZeroDelay
from .sets import Box, ConvexSet, EuclideanBall, Halfspace, Hyperplane, WholeSpace
from .spaces import BlockLayout, BlockOperator, BlockVector, operator_norm
from .trace import format_trace_csv

logger = logging.getLogger(__name__)

CALCULUS_TOL = 1e-9
REDUCTION_TOL = 1e-12
DESK_GAP_TOL = 1e-8
PRIMAL_AGREEMENT = 1e-6
AGREEMENT_GAP_TOL = 1e-10
AUG_L1_AGREEMENT = 1e-5
NUM_GAP_TOL = 1e-6
LOAD_SLACK = 1e-8
MIN_R_SQUARED = 0.98
MIN_HYPOTHESIS_FRACTION = 0.99


@dataclass(frozen=True, slots=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}" + (f" ({self.detail})" if self.detail else "")


# --------------------------------------------------------------------------
# Random instances
# --------------------------------------------------------------------------


def random_set(rng: np.random.Generator, dim: int) -> ConvexSet:
    match int(rng.integers(5)):
        case 0:
            return WholeSpace(dim)
        case 1:
            lo = rng.uniform(-2.0, 0.0, dim)
            return Box(lo, lo + rng.uniform(0.1, 2.0, dim))
        case 2:
            return Hyperplane(rng.standard_normal(dim) + 0.1, float(rng.standard_normal()))
        case 3:
            return Halfspace(rng.standard_normal(dim) + 0.1, float(rng.standard_normal()))
        case _:
            return EuclideanBall(rng.standard_normal(dim), float(rng.uniform(0.5, 2.0)))


def random_component(rng: np.random.Generator, dim: int) -> SeparableComponent:
    """Any shipped kind; scalar kinds are used only when dim is 1."""
    options = 2 if dim > 1 else 5
    match int(rng.integers(options)):
        case 0:
            return QuadraticPlusIndicator(rng.standard_normal(dim), random_feasible_set(rng, dim))
        case 1:
            return IndicatorSet(random_set(rng, dim))
        case 2:
            return ElasticNetScalar(float(rng.uniform(0.0, 2.0)))
        case 3:
            return NegUtilityBoxed(LogUtility(), float(rng.uniform(0.5, 5.0)), float(rng.uniform(0.1, 2.0)))
        case _:
            utility = QuadraticUtility(float(rng.uniform(0.0, 3.0)), float(rng.uniform(0.0, 1.0)))
            return NegUtilityBoxed(utility, float(rng.uniform(0.5, 5.0)), float(rng.uniform(0.1, 2.0)))


def random_feasible_set(rng: np.random.Generator, dim: int) -> ConvexSet:
    """A set with a nonempty interior, usable as a strongly convex domain."""
    match int(rng.integers(3)):
        case 0:
            return WholeSpace(dim)
        case 1:
            lo = rng.uniform(-2.0, 0.0, dim)
            return Box(lo, lo + rng.uniform(0.5, 2.0, dim))
        case _:
            return EuclideanBall(rng.standard_normal(dim), float(rng.uniform(0.5, 2.0)))


def random_strongly_convex(rng: np.random.Generator, dim: int) -> SeparableComponent:
    if dim > 1:
        return QuadraticPlusIndicator(rng.standard_normal(dim), random_feasible_set(rng, dim))
    while True:
        phi = random_component(rng, 1)
        if phi.mu > 0:
            return phi


def random_operator(
    rng: np.random.Generator, row_dims: t.Sequence[int], col_dims: t.Sequence[int], density: float = 0.6
) -> BlockOperator:
    entries = {}
    for j, rd in enumerate(row_dims):
        for i, cd in enumerate(col_dims):
            if rng.random() < density:
                entries[(j, i)] = rng.standard_normal((rd, cd))
    return BlockOperator(BlockLayout(tuple(row_dims)), BlockLayout(tuple(col_dims)), entries)


def random_instance(
    seed: int, num_primal: int = 3, num_dual: int = 3, max_dim: int = 2
) -> CompositeProblem:
    """Strongly convex fᵢ, indicator gⱼ with 0 in their interior, dense random 𝒜."""
    rng = np.random.default_rng(seed)
    col_dims = [int(d) for d in rng.integers(1, max_dim + 1, num_primal)]
    row_dims = [int(d) for d in rng.integers(1, max_dim + 1, num_dual)]
    a = random_operator(rng, row_dims, col_dims, density=1.0)
    fs = [random_strongly_convex(rng, d) for d in col_dims]
    gs = []
    for d in row_dims:
        match int(rng.integers(3)):
            case 0:
                gs.append(IndicatorSet(Box(-rng.uniform(0.5, 2.0, d), rng.uniform(0.5, 2.0, d))))
            case 1:
                gs.append(IndicatorSet(Halfspace(rng.standard_normal(d) + 0.1, float(rng.uniform(0.5, 2.0)))))
            case _:
                gs.append(IndicatorSet(EuclideanBall(np.zeros(d), float(rng.uniform(0.5, 2.0)))))
    return CompositeProblem(tuple(fs), tuple(gs), a)


def desk_problems() -> dict[str, CompositeProblem]:
    return {
        "best_approx": build_best_approximation(desk_best_approximation()),
        "aug_l1": build_augmented_l1(desk_augmented_l1()),
        "num": build_num(desk_num()),
    }


# --------------------------------------------------------------------------
# Operator calculus
# --------------------------------------------------------------------------


def check_moreau(cases: int = 1000, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        dim = int(rng.integers(1, 4))
        phi = random_component(rng, dim)
        y = 3.0 * rng.standard_normal(dim)
        alpha = float(rng.uniform(0.1, 5.0))
        recon = prox(phi, y, alpha) + alpha * prox_conjugate(phi, y / alpha, 1.0 / alpha)
        worst = max(worst, float(np.max(np.abs(recon - y))))
    return CheckResult("moreau", worst <= CALCULUS_TOL, f"max error {worst:.3g}")


def check_fenchel_young(cases: int = 1000, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_eq = 0.0
    worst_ineq = 0.0
    for _ in range(cases):
        dim = int(rng.integers(1, 4))
        phi = random_strongly_convex(rng, dim)
        u = 3.0 * rng.standard_normal(dim)
        x_star = conjugate_grad(phi, u)
        value, conj = pair_values(phi, x_star, u)
        worst_eq = max(worst_eq, abs(value + conj - float(x_star @ u)))
        x = phi_point(rng, phi)
        value, conj = pair_values(phi, x, u)
        worst_ineq = max(worst_ineq, float(x @ u) - (value + conj))
    passed = worst_eq <= CALCULUS_TOL and worst_ineq <= CALCULUS_TOL
    return CheckResult(
        "fenchel_young", passed, f"equality {worst_eq:.3g}, inequality {worst_ineq:.3g}"
    )


def phi_point(rng: np.random.Generator, phi: SeparableComponent) -> np.ndarray:
    """A random point in the domain of phi."""
    return prox(phi, 3.0 * rng.standard_normal(phi.dim), 1.0)


def check_prox_firm(cases: int = 1000, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(cases):
        dim = int(rng.integers(1, 4))
        phi = random_component(rng, dim)
        alpha = float(rng.uniform(0.1, 5.0))
        y, w = 3.0 * rng.standard_normal(dim), 3.0 * rng.standard_normal(dim)
        p, q = prox(phi, y, alpha), prox(phi, w, alpha)
        worst = max(worst, float((p - q) @ (p - q)) - float((p - q) @ (y - w)))
    return CheckResult("prox_firm", worst <= 1e-12 + CALCULUS_TOL, f"max excess {worst:.3g}")


def check_projections(cases: int = 1000, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_idem = worst_expand = 0.0
    for _ in range(cases):
        dim = int(rng.integers(1, 4))
        s = random_set(rng, dim)
        x, z = 3.0 * rng.standard_normal(dim), 3.0 * rng.standard_normal(dim)
        px, pz = s.project(x), s.project(z)
        worst_idem = max(worst_idem, float(np.max(np.abs(s.project(px) - px))))
        worst_expand = max(
            worst_expand, float(np.linalg.norm(px - pz) - np.linalg.norm(x - z))
        )
    passed = worst_idem <= CALCULUS_TOL and worst_expand <= 1e-12
    return CheckResult(
        "projections", passed, f"idempotence {worst_idem:.3g}, expansion {worst_expand:.3g}"
    )


def check_adjoint(cases: int = 1000, seed: int = 5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        rows = [int(d) for d in rng.integers(1, 5, int(rng.integers(1, 5)))]
        cols = [int(d) for d in rng.integers(1, 5, int(rng.integers(1, 5)))]
        a = random_operator(rng, rows, cols)
        x = BlockVector(a.col_layout, rng.standard_normal(a.col_layout.total_dim))
        y = BlockVector(a.row_layout, rng.standard_normal(a.row_layout.total_dim))
        lhs, rhs = a.apply(x).inner(y), x.inner(a.adjoint_apply(y))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))
    return CheckResult("adjoint", worst <= 1e-10, f"max relative error {worst:.3g}")


# --------------------------------------------------------------------------
# Algorithm reductions
# --------------------------------------------------------------------------


def _deviation(a: BlockVector, b: BlockVector) -> float:
    return float(np.max(np.abs(a.data - b.data), initial=0.0))


def _safe_step(p: CompositeProblem) -> float:
    return 1.0 / dual_lipschitz(p, operator_norm(p.A))


def check_reductions(steps: int = 1000, seed: int = 6) -> CheckResult:
    """Identical seeds make the special cases of the method coincide on 6-block instances."""
    p = random_instance(seed, num_primal=3, num_dual=3)
    single = random_instance(seed + 1, num_primal=5, num_dual=1)
    alpha = min(_safe_step(p), _safe_step(single))
    zero = ZeroDelay()
    cyclic = CyclicDelay(3)

    worst = {}
    a = init_state(p, alpha, seed)
    b = init_state(p, alpha, seed, with_table=False)
    dev = 0.0
    for _ in range(steps):
        rdciag_step(p, a, zero)
        random_dbcd_step(p, b)
        dev = max(dev, _deviation(a.y, b.y))
    worst["rdciag=dbcd"] = dev

    for name, problem in (("rdciag=dual_pg", single), ("piag=dual_pg", p)):
        state = init_state(problem, alpha, seed)
        y = state.y.copy()
        dev = 0.0
        for _ in range(steps):
            if name.startswith("rdciag"):
                rdciag_step(problem, state, zero)
            else:
                piag_step(problem, state, zero)
            y = dual_pg_step(problem, y, alpha)
            dev = max(dev, _deviation(state.y, y))
        worst[name] = dev

    c = init_state(single, alpha, seed, cyclic)
    d = init_state(single, alpha, seed + 99, cyclic)
    dev = 0.0
    for _ in range(steps):
        piag_step(single, c, cyclic)
        rdciag_step(single, d, cyclic)
        dev = max(dev, _deviation(c.y, d.y))
    worst["piag=rdciag"] = dev

    passed = all(v <= REDUCTION_TOL for v in worst.values())
    detail = ", ".join(f"{k} {v:.3g}" for k, v in worst.items())
    return CheckResult("reductions", passed, detail)


# --------------------------------------------------------------------------
# Constants
# --------------------------------------------------------------------------


def check_lipschitz(samples: int = 10_000, seed: int = 7) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for problem in desk_problems().values():
        ells = lipschitz_constants(problem)
        dim = problem.dual_layout.total_dim
        for _ in range(samples):
            i = int(rng.integers(problem.num_primal))
            y = BlockVector(problem.dual_layout, rng.standard_normal(dim))
            z = BlockVector(problem.dual_layout, y.data + 0.5 * rng.standard_normal(dim))
            moved = component_dual_gradient(problem, i, y) - component_dual_gradient(problem, i, z)
            ratio = moved.norm() / (y - z).norm()
            worst = max(worst, ratio / ells[i] if ells[i] > 0 else ratio)
    return CheckResult("lipschitz", worst <= 1.0 + 1e-12, f"max ratio/ell {worst:.6g}")


def check_z0(seed: int = 8) -> CheckResult:
    root = solve_z0(1, 0.5, 1.0)
    ok = abs(root - math.sqrt(2.0)) <= 1e-10
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        tau = int(rng.integers(1, 10))
        beta = float(rng.uniform(0.0, 0.99))
        gamma = float(rng.uniform(1e-3, 10.0))
        z = solve_z0(tau, beta, gamma)
        residual = ((1 + z) / (1 + beta * z)) ** tau - 1 - gamma / (1 + z)
        worst = max(worst, abs(residual))
        ok = ok and z > 0
    return CheckResult("z0", ok and worst <= 1e-12, f"sqrt2 case {root:.17g}, residual {worst:.3g}")


# --------------------------------------------------------------------------
# Theory checkers
# --------------------------------------------------------------------------


def check_descent_inequality(steps: int = 10_000) -> CheckResult:
    problems = desk_problems()
    per = max(1, steps // len(problems))
    checked = violations = 0
    expected_violations = 0
    for name, problem in problems.items():
        schedule = CyclicDelay(2)
        constants = compute_constants(problem, schedule.tau)
        alpha = 1.0 / (4.0 * (constants.eta1 + constants.eta2))
        history = record_history(problem, "rdciag", schedule, alpha, 0, per)
        report = check_descent(problem, history, constants, desk_reference(name))
        checked += report.checked
        violations += report.violations
        expected = check_expected_descent(problem, history, constants)
        expected_violations += expected.violations
        logger.info("%s: descent %s, expected %s", name, report, expected)
    passed = violations == 0 and expected_violations == 0
    return CheckResult(
        "descent",
        passed,
        f"{checked} evaluations, {violations} violations, {expected_violations} expected-form violations",
    )


def synthetic_recurrence(
    rng: np.random.Generator, length: int = 40
) -> tuple[list[float], list[float], float, float, float, int]:
    """A sequence satisfying the tail recurrence and step condition by construction."""
    a = float(rng.uniform(0.3, 0.95))
    k0 = int(rng.integers(0, 4))
    b = float(rng.uniform(0.5, 2.0))
    limit = b * (1 - a) * a**k0 / (1 - a ** (k0 + 1))
    c = float(rng.uniform(0.0, 1.0)) * limit
    v = [float(rng.uniform(0.5, 2.0))]
    w: list[float] = []
    for k in range(length):
        wk = float(rng.uniform(0.0, 1.0)) * a * v[k] / (2.0 * (b + 1.0))
        w.append(wk)
        window = sum(w[max(0, k - k0) : k + 1])
        bound = a * v[k] - b * wk + c * window
        v.append(float(rng.uniform(0.0, 1.0)) * bound)
    return v, w, a, b, c, k0


def check_tail(cases: int = 1000, seed: int = 9) -> CheckResult:
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(cases):
        v, w, a, b, c, k0 = synthetic_recurrence(rng)
        report = check_tail_recurrence(v, w, a, b, c, k0)
        if not report.passed:
            failures += 1
    return CheckResult("tail", failures == 0, f"{failures} of {cases} synthetic cases failed")


def check_determinism(seed: int = 10) -> CheckResult:
    problem = build_best_approximation(desk_best_approximation())
    stop = StopRule(max_iter=200, record_every=10)
    texts = [
        format_trace_csv(run(problem, "rdciag", CyclicDelay(2), 0.05, seed, stop))
        for _ in range(2)
    ]
    return CheckResult("determinism", texts[0] == texts[1])


def check_num_update(seed: int = 11) -> CheckResult:
    """One zero-delay full step equals the projected price update [y + α(load − c)]₊."""
    spec = desk_num(seed)
    problem = build_num(spec)
    alpha = 0.3
    prices = np.random.default_rng(seed).uniform(0.0, 1.0, spec.num_links)
    state = init_state(problem, alpha, seed)
    state.y = BlockVector(problem.dual_layout, prices.copy())
    state.table = GradientTable.build(problem, state.y)
    piag_step(problem, state, ZeroDelay())
    rates = primal_from_dual(problem, BlockVector(problem.dual_layout, prices)).data
    expected = np.maximum(prices + alpha * (link_loads(spec, rates) - spec.capacities), 0.0)
    dev = float(np.max(np.abs(state.y.data - expected)))
    return CheckResult("num_update", dev <= 1e-12, f"max deviation {dev:.3g}")


# --------------------------------------------------------------------------
# Desk runs
# --------------------------------------------------------------------------


@lru_cache()
def desk_reference(name: str) -> ReferenceSolution:
    """Reference solution of one of the `desk_problems`, solved once per process."""
    return solve_reference(desk_problems()[name])


def theory_constants(
    problem: CompositeProblem,
    ref: ReferenceSolution,
    schedule: DelaySchedule,
    path_steps: int = 50,
) -> ProblemConstants:
    """
    Constants at σ̂ taken over perturbations of y_star and the first
    `path_steps` iterates of a dual proximal gradient run from y⁰.
    """
    lipschitz = dual_lipschitz(problem, operator_norm(problem.A))
    path = record_history(problem, "dual_pg", ZeroDelay(), 1.0 / lipschitz, 0, path_steps)
    sigma = estimate_sigma(problem, ref, [*default_samples(problem, ref), *path.iterates])
    return compute_constants(problem, schedule.tau, sigma)


def _alpha_max(constants: ProblemConstants) -> float:
    return t.cast(float, constants.alpha_max)


def check_best_approx_run(max_iter: int = 100_000, seed: int = 0) -> CheckResult:
    """RDCIAG at alpha_max reaches the gap tolerance, close to x_star and inside Ω₀."""
    spec = desk_best_approximation()
    problem = build_best_approximation(spec)
    ref = desk_reference("best_approx")
    schedule = CyclicDelay(2)
    alpha = _alpha_max(theory_constants(problem, ref, schedule))
    trace = run(problem, "rdciag", schedule, alpha, seed, StopRule(max_iter, DESK_GAP_TOL), ref)
    last = trace.rows[-1]
    error = math.sqrt(t.cast(float, last.primal_err2))
    history = record_history(problem, "rdciag", schedule, alpha, seed, 500)
    outside = sum(
        not spec.omega0.contains(primal_from_dual(problem, y).data) for y in history.iterates
    )
    return CheckResult(
        "best_approx_run",
        last.gap <= DESK_GAP_TOL and error <= PRIMAL_AGREEMENT and outside == 0,
        f"gap {last.gap:.3g} after {trace.meta['iterations']} iterations at alpha {alpha:.3g}, "
        f"|x - x_star| {error:.3g}, {outside} iterates outside omega0",
    )


def check_aug_l1_agreement(
    spec: AugL1Spec | None = None, max_iter: int = 200_000, seed: int = 0
) -> CheckResult:
    """RDCIAG, DBCD and sparse Kaczmarz all recover the reference x."""
    if spec is None:
        problem, ref = _problem_and_reference(None)
    else:
        problem = build_augmented_l1(spec)
        ref = solve_reference(problem)
    lipschitz = dual_lipschitz(problem, operator_norm(problem.A))
    schedule = CyclicDelay(2)
    steps = {
        "rdciag": 1.0 / ((2 * schedule.tau + 1) * lipschitz),
        "dbcd": 1.0 / lipschitz,
        "sparse_kaczmarz": 1.0,
    }
    errors = {}
    for method, alpha in steps.items():
        stop = StopRule(max_iter, AGREEMENT_GAP_TOL)
        trace = run(problem, method, schedule, alpha, seed, stop, ref)
        errors[method] = math.sqrt(t.cast(float, trace.rows[-1].primal_err2))
    worst = max(errors.values())
    return CheckResult(
        "aug_l1_agreement",
        worst <= AUG_L1_AGREEMENT,
        ", ".join(f"{method} {error:.3g}" for method, error in errors.items()),
    )


def check_rate_fit(
    problem: CompositeProblem | None = None,
    seeds: int = 50,
    max_iter: int = 5000,
    record_every: int = 50,
    schedule: DelaySchedule | None = None,
) -> CheckResult:
    """The seed-mean Γ decays log-linearly, no slower than the theoretical rate at σ̂."""
    problem, ref = _problem_and_reference(problem)
    schedule = schedule or CyclicDelay(2)
    constants = theory_constants(problem, ref, schedule)
    alpha = _alpha_max(constants)
    stop = StopRule(max_iter, record_every=record_every)
    traces = [run(problem, "rdciag", schedule, alpha, seed, stop, ref) for seed in range(seeds)]
    report = fit_linear_rate(
        seed_average(traces),
        theoretical_rate=constants.rate(alpha, problem.num_dual),
    )
    theory = t.cast(float, report.theoretical_rate)
    return CheckResult(
        "rate_fit",
        report.r_squared >= MIN_R_SQUARED and report.empirical_rate <= theory,
        f"empirical {report.empirical_rate:.6g}, theoretical {theory:.6g}, "
        f"r^2 {report.r_squared:.4f} over {report.rows_used} rows",
    )


def check_num_run(max_iter: int = 100_000, seed: int = 0) -> CheckResult:
    """Zero-delay RDCIAG on the desk NUM instance: gap, rate bounds and link loads at termination."""
    spec = desk_num()
    problem = build_num(spec)
    alpha = 1.0 / dual_lipschitz(problem, operator_norm(problem.A))
    schedule = ZeroDelay()
    state = init_state(problem, alpha, seed, schedule)
    x = primal_from_dual(problem, state.y)
    gap = math.inf
    while state.k < max_iter and not gap <= NUM_GAP_TOL:
        rdciag_step(problem, state, schedule)
        if state.k % 100 == 0 or state.k == max_iter:
            x = primal_from_dual(problem, state.y)
            gap = duality_gap(problem, x, state.y)
    rates = x.data
    in_range = bool(np.all(rates >= 0.0) and np.all(rates <= spec.caps))
    overload = float(np.max(link_loads(spec, rates) - spec.capacities))
    return CheckResult(
        "num_run",
        gap <= NUM_GAP_TOL and in_range and overload <= LOAD_SLACK,
        f"gap {gap:.3g} after {state.k} iterations, rates in range: {in_range}, "
        f"worst overload {overload:.3g}",
    )


def check_tail_hypothesis(
    problem: CompositeProblem | None = None,
    seeds: int = 50,
    steps: int = 1000,
    schedule: DelaySchedule | None = None,
) -> CheckResult:
    """The tail recurrence hypothesis on seed-averaged Γ and step lengths."""
    problem, ref = _problem_and_reference(problem)
    schedule = schedule or CyclicDelay(2)
    constants = theory_constants(problem, ref, schedule)
    alpha = _alpha_max(constants)
    V = np.zeros(steps + 1)
    w = np.zeros(steps)
    for seed in range(seeds):
        history = record_history(problem, "rdciag", schedule, alpha, seed, steps)
        ys = history.iterates
        V += [
            lyapunov_value(
                dual_value(problem, y), ref.D_star, t.cast(float, distance_squared(y, ref)), alpha
            )
            for y in ys
        ]
        w += [float(np.sum((ys[k + 1].data - ys[k].data) ** 2)) for k in range(steps)]
    report = check_tail_recurrence(
        V / seeds, w / seeds, *tail_constants(alpha, constants, problem.num_dual)
    )
    return CheckResult(
        "tail_hypothesis",
        report.hypothesis_fraction >= MIN_HYPOTHESIS_FRACTION,
        f"hypothesis holds on {report.hypothesis_fraction:.2%} of {steps} steps",
    )


def check_primal_bound(
    problem: CompositeProblem | None = None,
    seeds: int = 50,
    max_iter: int = 2000,
    record_every: int = 50,
    schedule: DelaySchedule | None = None,
) -> CheckResult:
    """The seed-averaged ‖x − x_star‖² stays under the primal error bound at every recorded k."""
    problem, ref = _problem_and_reference(problem)
    schedule = schedule or CyclicDelay(2)
    constants = theory_constants(problem, ref, schedule)
    alpha = _alpha_max(constants)
    stop = StopRule(max_iter, record_every=record_every)
    traces = [run(problem, "rdciag", schedule, alpha, seed, stop, ref) for seed in range(seeds)]
    gamma0 = t.cast(float, traces[0].meta["gamma0"])
    averaged = seed_average(traces)
    violations = checked = 0
    for row in averaged.rows:
        if row.k < schedule.tau:
            continue
        bound = primal_error_bound(alpha, gamma0, constants, problem, row.k, schedule.tau)
        checked += 1
        if t.cast(float, row.primal_err2) > bound * (1.0 + 1e-12):
            violations += 1
    return CheckResult(
        "primal_bound", violations == 0, f"{violations} of {checked} recorded rows above the bound"
    )


def check_sigma() -> CheckResult:
    problem = build_best_approximation(desk_best_approximation())
    ref = desk_reference("best_approx")
    sigma = estimate_sigma(problem, ref, default_samples(problem, ref))
    return CheckResult("sigma", sigma > 0, f"sigma {sigma:.6g}")


def _problem_and_reference(
    problem: CompositeProblem | None,
) -> tuple[CompositeProblem, ReferenceSolution]:
    if problem is None:
        return build_augmented_l1(desk_augmented_l1()), desk_reference("aug_l1")
    return problem, solve_reference(problem)


CHECKS: dict[str, t.Callable[[], CheckResult]] = {
    "moreau": check_moreau,
    "fenchel_young": check_fenchel_young,
    "prox_firm": check_prox_firm,
    "projections": check_projections,
    "adjoint": check_adjoint,
    "reductions": check_reductions,
    "lipschitz": check_lipschitz,
    "z0": check_z0,
    "descent": check_descent_inequality,
    "tail": check_tail,
    "determinism": check_determinism,
    "num_update": check_num_update,
    "best_approx_run": check_best_approx_run,
    "aug_l1_agreement": check_aug_l1_agreement,
    "rate_fit": check_rate_fit,
    "num_run": check_num_run,
    "tail_hypothesis": check_tail_hypothesis,
    "primal_bound": check_primal_bound,
    "sigma": check_sigma,
}


def run_checks(name_filter: str | None = None) -> list[CheckResult]:
    """Run every check whose name contains `name_filter`."""
    selected = [name for name in CHECKS if name_filter is None or name_filter in name]
    if not selected:
        raise ValueError(f"No check matches {name_filter!r}; known: {', '.join(CHECKS)}.")
    results = []
    for name in selected:
        logger.info("Running check %s", name)
        results.append(CHECKS[name]())
    return results
