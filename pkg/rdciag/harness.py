import logging
import os
import typing as t
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algorithms import TABLE_METHODS, StopRule, run, solve_reference
from .applications import (
    AugL1Spec,
    BestApproxSpec,
    NumSpec,
    build_augmented_l1,
    build_best_approximation,
    build_num,
    desk_augmented_l1,
    desk_best_approximation,
    desk_num,
)
from .config import ExperimentConfig
from .diagnostics import (
    InsufficientDataError,
    RateReport,
    default_samples,
    estimate_sigma,
    fit_linear_rate,
    seed_average,
)
from .functions import parse_utility
from .problem import (
    CompositeProblem,
    ProblemConstants,
    ReferenceSolution,
    compute_constants,
    load_reference,
    save_reference,
)
from .sets import parse_set
from .trace import Trace, read_trace_csv, write_trace_csv

logger = logging.getLogger(__name__)

THREADS_ENV = "RDCIAG_THREADS"
REPORT_NAME = "report.txt"

type Spec = BestApproxSpec | AugL1Spec | NumSpec


# --------------------------------------------------------------------------
# Instances and references
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class Instance:
    spec: Spec
    problem: CompositeProblem


def _load_array(config: ExperimentConfig, path: str, ndmin: int) -> np.ndarray:
    resolved = config.resolve(path)
    try:
        return np.loadtxt(resolved, dtype=np.float64, ndmin=ndmin)
    except OSError as exc:
        raise OSError(f"Cannot read {resolved}: {exc}") from exc
    except ValueError as exc:
        raise ValueError(f"Malformed numeric file {resolved}: {exc}") from exc


def build_spec(config: ExperimentConfig) -> Spec:
    pc = config.problem
    seed = pc.instance_seed
    match pc.kind:
        case "best_approx" if pc.generate:
            return desk_best_approximation(seed, pc.n or 5, pc.m or 3)
        case "best_approx":
            return BestApproxSpec(
                np.asarray(pc.v),
                parse_set(t.cast(str, pc.omega0)),
                tuple(parse_set(text) for text in pc.constraints),
            )
        case "aug_l1" if pc.generate:
            return desk_augmented_l1(
                seed, pc.m or 10, pc.n or 30, pc.sparsity or 3, pc.lam or 0.1
            )
        case "aug_l1":
            return AugL1Spec(
                _load_array(config, t.cast(str, pc.matrix), 2),
                _load_array(config, t.cast(str, pc.rhs), 1),
                t.cast(float, pc.lam),
            )
        case "num" if pc.generate:
            return desk_num(seed, pc.sources or 4, pc.links or 3, pc.lam or 0.1)
        case "num":
            return NumSpec(
                utilities=tuple(parse_utility(text) for text in pc.utilities),
                caps=np.asarray(pc.caps),
                capacities=np.asarray(pc.capacities),
                routing=_load_array(config, t.cast(str, pc.routing), 2),
                lam=t.cast(float, pc.lam),
            )
        case _:
            raise ValueError(f"Unknown problem kind {pc.kind!r}.")


def build_problem(spec: Spec) -> CompositeProblem:
    match spec:
        case BestApproxSpec():
            return build_best_approximation(spec)
        case AugL1Spec():
            return build_augmented_l1(spec)
        case NumSpec():
            return build_num(spec)
        case _:
            raise TypeError(f"Unknown instance spec {type(spec).__name__}.")


def build_instance(config: ExperimentConfig) -> Instance:
    spec = build_spec(config)
    return Instance(spec, build_problem(spec))


def obtain_reference(
    config: ExperimentConfig, problem: CompositeProblem
) -> ReferenceSolution | None:
    """
    `auto` solves in memory. A path is loaded when it exists and otherwise
    solved and written there for later runs.
    """
    where = config.run.reference
    if where is None and config.method.sigma != "estimate":
        return None
    if where is not None and where != "auto":
        path = config.resolve(where)
        if path.exists():
            logger.info("Loading reference from %s", path)
            return load_reference(path, problem)
        ref = solve_reference(problem, config.run.reference_iter)
        save_reference(ref, path)
        logger.info("Saved reference to %s", path)
        return ref
    return solve_reference(problem, config.run.reference_iter)


# --------------------------------------------------------------------------
# Step size selection
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class StepChoice:
    alpha: float
    sigma: float | None
    constants: ProblemConstants
    theoretical_rate: float | None


def effective_tau(config: ExperimentConfig) -> int:
    if config.method.name in TABLE_METHODS:
        return config.delay.to_schedule().tau
    return 0


def choose_step(
    config: ExperimentConfig, problem: CompositeProblem, ref: ReferenceSolution | None
) -> StepChoice:
    sigma_setting = config.method.sigma
    match sigma_setting:
        case "estimate":
            if ref is None:
                raise ValueError("sigma = estimate needs a reference solution.")
            sigma: float | None = estimate_sigma(problem, ref, default_samples(problem, ref))
            if not t.cast(float, sigma) > 0:
                raise ValueError(f"Estimated sigma {sigma:.6g} is not positive.")
        case None:
            sigma = None
        case _:
            sigma = float(sigma_setting)
    constants = compute_constants(problem, effective_tau(config), sigma)
    alpha_setting = config.method.alpha
    if alpha_setting == "auto":
        if constants.alpha_max is None:
            raise ValueError("alpha = auto needs sigma.")
        alpha = constants.alpha_max
    else:
        alpha = float(alpha_setting)
    rate = constants.rate(alpha, problem.num_dual) if sigma is not None else None
    return StepChoice(alpha, sigma, constants, rate)


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


@dataclass(slots=True, eq=False)
class SeedResult:
    seed: int
    trace: Trace
    report: RateReport | None
    path: Path | None = None


@dataclass(slots=True, eq=False)
class ExperimentResult:
    method: str
    step: StepChoice
    seeds: list[SeedResult] = field(default_factory=list)
    mean_report: RateReport | None = None
    report_lines: list[str] = field(default_factory=list)


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        count = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}.") from None
    if count < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {count}.")
    return count


def run_seeds(
    config: ExperimentConfig,
    problem: CompositeProblem,
    step: StepChoice,
    ref: ReferenceSolution | None,
) -> list[Trace]:
    """Run every configured seed, at most RDCIAG_THREADS at a time, in seed order."""
    stop = StopRule(config.run.max_iter, config.run.gap_tol, config.run.record_every)
    schedule = config.delay.to_schedule()

    def one(seed: int) -> Trace:
        return run(
            problem,
            config.method.name,
            schedule,
            step.alpha,
            seed,
            stop,
            ref,
            record_time=config.run.record_time,
            debug=config.run.debug,
        )

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        return list(pool.map(one, config.run.seeds))


def rate_field(trace: Trace) -> str:
    """Fit Γ when the trace has it, otherwise the duality gap."""
    if trace.rows and trace.rows[0].gamma is not None:
        return "gamma"
    return "gap"


def _try_fit(
    trace: Trace, burn_in: float, theoretical_rate: float | None
) -> RateReport | None:
    try:
        return fit_linear_rate(trace, rate_field(trace), burn_in, theoretical_rate)
    except InsufficientDataError as exc:
        logger.info("No rate fitted: %s", exc)
        return None


def _fmt(value: float | int | str | None) -> str:
    match value:
        case None:
            return ""
        case float():
            return f"{value:.17g}"
        case _:
            return str(value)


def _report_lines(
    config: ExperimentConfig,
    problem: CompositeProblem,
    result: ExperimentResult,
    ref: ReferenceSolution | None,
) -> list[str]:
    c = result.step.constants
    lines = [
        f"problem={config.problem.kind}",
        f"method={result.method}",
        f"delay={config.delay.kind}",
        f"tau={c.tau}",
        f"num_primal={problem.num_primal}",
        f"num_dual={problem.num_dual}",
        f"seeds={','.join(str(s.seed) for s in result.seeds)}",
        f"alpha={_fmt(result.step.alpha)}",
        f"alpha_max={_fmt(c.alpha_max)}",
        f"sigma={_fmt(result.step.sigma)}",
        f"ell_min={_fmt(min(c.ell))}",
        f"ell_max={_fmt(c.ell_max)}",
        f"ell_mean={_fmt(float(np.mean(c.ell)))}",
        f"eta1={_fmt(c.eta1)}",
        f"eta2={_fmt(c.eta2)}",
        f"z0={_fmt(c.z0)}",
        f"theoretical_rate={_fmt(result.step.theoretical_rate)}",
        f"D_star={_fmt(None if ref is None else ref.D_star)}",
        "distance_surrogate=norm(y - y_star)",
    ]
    for s in result.seeds:
        last = s.trace.rows[-1] if s.trace.rows else None
        prefix = f"seed.{s.seed}"
        lines += [
            f"{prefix}.iterations={s.trace.meta.get('iterations', 0)}",
            f"{prefix}.final_gap={_fmt(None if last is None else last.gap)}",
            f"{prefix}.final_primal_err2={_fmt(None if last is None else last.primal_err2)}",
            f"{prefix}.max_y_norm={_fmt(s.trace.meta.get('max_y_norm'))}",
            f"{prefix}.empirical_rate={_fmt(None if s.report is None else s.report.empirical_rate)}",
            f"{prefix}.r_squared={_fmt(None if s.report is None else s.report.r_squared)}",
        ]
    mean = result.mean_report
    lines += [
        f"mean.field={'' if mean is None else mean.field}",
        f"mean.empirical_rate={_fmt(None if mean is None else mean.empirical_rate)}",
        f"mean.r_squared={_fmt(None if mean is None else mean.r_squared)}",
    ]
    return lines


def execute(
    config: ExperimentConfig,
    instance: Instance,
    ref: ReferenceSolution | None,
    out_dir: Path | None,
) -> ExperimentResult:
    """Run all seeds of one configured method and write traces plus a report."""
    problem = instance.problem
    step = choose_step(config, problem, ref)
    logger.info("Using alpha=%.6g (theoretical rate %s)", step.alpha, step.theoretical_rate)
    traces = run_seeds(config, problem, step, ref)
    result = ExperimentResult(config.method.name, step)
    for seed, trace in zip(config.run.seeds, traces):
        report = _try_fit(trace, config.run.burn_in, step.theoretical_rate)
        result.seeds.append(SeedResult(seed, trace, report))
    result.mean_report = _try_fit(
        seed_average(traces), config.run.burn_in, step.theoretical_rate
    )
    result.report_lines = _report_lines(config, problem, result, ref)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"Cannot create output directory {out_dir}: {exc}") from exc
        for s in result.seeds:
            s.path = out_dir / f"{result.method}_seed{s.seed}.csv"
            write_trace_csv(s.trace, s.path)
        report_path = out_dir / REPORT_NAME
        try:
            report_path.write_text("\n".join(result.report_lines) + "\n")
        except OSError as exc:
            raise OSError(f"Cannot write report {report_path}: {exc}") from exc
    return result


def run_experiment(config: ExperimentConfig, out_dir: Path | None = None) -> ExperimentResult:
    instance = build_instance(config)
    ref = obtain_reference(config, instance.problem)
    return execute(config, instance, ref, out_dir)


def compare(
    config: ExperimentConfig, methods: t.Sequence[str], out_dir: Path | None = None
) -> dict[str, ExperimentResult]:
    """
    Run several methods on one problem with a shared reference. Each method
    writes into its own subdirectory of `out_dir`.
    """
    instance = build_instance(config)
    ref = obtain_reference(config, instance.problem)
    results = {}
    for method in methods:
        method_config = config.with_method(method)
        subdir = None if out_dir is None else out_dir / method
        results[method] = execute(method_config, instance, ref, subdir)
    return results


def compare_lines(results: t.Mapping[str, ExperimentResult]) -> list[str]:
    """Per method: final gap and ‖x − x_star‖² of the first seed, and the mean fitted rate."""
    lines = []
    for method, result in results.items():
        rows = result.seeds[0].trace.rows if result.seeds else []
        first = rows[-1] if rows else None
        rate = result.mean_report.empirical_rate if result.mean_report else None
        lines += [
            f"{method}.final_gap={_fmt(None if first is None else first.gap)}",
            f"{method}.final_primal_err2={_fmt(None if first is None else first.primal_err2)}",
            f"{method}.empirical_rate={_fmt(rate)}",
        ]
    return lines


def rate_lines(paths: t.Sequence[Path], burn_in: float = 0.2) -> list[str]:
    """Fit a rate to each stored trace and emit key=value lines per file."""
    lines = []
    for path in paths:
        trace = read_trace_csv(path)
        name = path.stem
        try:
            report = fit_linear_rate(trace, rate_field(trace), burn_in)
        except InsufficientDataError as exc:
            lines.append(f"{name}.error={exc}")
            continue
        lines.extend(f"{name}.{line}" for line in report.as_lines())
    return lines


def summary_value(lines: t.Iterable[str], key: str) -> str | None:
    """Look up one key in key=value report lines."""
    for line in lines:
        name, sep, value = line.partition("=")
        if sep and name == key:
            return value
    return None

