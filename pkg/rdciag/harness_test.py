import numpy as np
import pytest

from .applications import AugL1Spec, BestApproxSpec, NumSpec
from .config import parse_config
from .harness import (
    REPORT_NAME,
    build_problem,
    build_spec,
    choose_step,
    compare,
    compare_lines,
    effective_tau,
    obtain_reference,
    rate_lines,
    run_experiment,
    summary_value,
    thread_count,
)
from .problem import ReferenceSolution
from .trace import Trace, TraceRow, read_trace_csv, write_trace_csv

GENERATED = """\
[problem]
kind = best_approx
generate = true
instance_seed = 2
n = 3
m = 2

[method]
name = rdciag
alpha = 0.1

[delay]
kind = cyclic
period = 2

[run]
seeds = 0, 1
max_iter = 200
record_every = 10
reference = auto
reference_iter = 50000
"""


def _config(text: str = GENERATED, base_dir=None):
    if base_dir is None:
        return parse_config(text)
    return parse_config(text, base_dir)


# --------------------------------------------------------------------------
# Instances
# --------------------------------------------------------------------------


def test_generated_specs():
    spec = build_spec(_config())
    assert isinstance(spec, BestApproxSpec)
    assert spec.dim == 3
    assert len(spec.constraints) == 2
    aug = build_spec(
        _config("[problem]\nkind = aug_l1\ngenerate = true\nm = 2\nn = 5\n[method]\nalpha = 1\n")
    )
    assert isinstance(aug, AugL1Spec)
    assert aug.shape == (2, 5)
    num = build_spec(
        _config("[problem]\nkind = num\ngenerate = true\nsources = 3\n[method]\nalpha = 1\n")
    )
    assert isinstance(num, NumSpec)
    assert num.num_sources == 3


def test_literal_best_approximation():
    config = _config(
        "[problem]\nkind = best_approx\nv = 2, 0\nomega0 = box lo=-1,-1 hi=1,1\n"
        "constraint = halfspace a=1,0 c=0.5\n[method]\nalpha = 0.5\n"
    )
    p = build_problem(build_spec(config))
    assert p.num_dual == 1
    assert p.primal_layout.block_dims == (2,)


def test_specs_from_files(tmp_path):
    np.savetxt(tmp_path / "a.txt", [[1.0, 2.0], [0.0, 1.0]])
    np.savetxt(tmp_path / "b.txt", [1.0, 2.0])
    np.savetxt(tmp_path / "routing.txt", [[1.0, 1.0]])
    aug = build_spec(
        _config(
            "[problem]\nkind = aug_l1\nmatrix = a.txt\nrhs = b.txt\nlambda = 0.5\n[method]\nalpha = 1\n",
            tmp_path,
        )
    )
    assert aug.matrix.tolist() == [[1.0, 2.0], [0.0, 1.0]]
    assert aug.b.tolist() == [1.0, 2.0]
    num = build_spec(
        _config(
            "[problem]\nkind = num\nrouting = routing.txt\nutilities = log, quadratic:2:0\n"
            "caps = 2, 3\ncapacities = 1.5\nlambda = 0.1\n[method]\nalpha = 1\n",
            tmp_path,
        )
    )
    assert num.sources_of == ((0, 1),)


def test_malformed_and_missing_files(tmp_path):
    (tmp_path / "a.txt").write_text("1 2\nthree 4\n")
    (tmp_path / "b.txt").write_text("1\n2\n")
    text = "[problem]\nkind = aug_l1\nmatrix = a.txt\nrhs = b.txt\nlambda = 0.5\n[method]\nalpha = 1\n"
    with pytest.raises(ValueError):
        _ = build_spec(_config(text, tmp_path))
    with pytest.raises(OSError):
        _ = build_spec(_config(text.replace("a.txt", "nothing.txt"), tmp_path))


def test_build_problem_rejects_unknown_spec():
    with pytest.raises(TypeError):
        _ = build_problem("not a spec")


# --------------------------------------------------------------------------
# References and steps
# --------------------------------------------------------------------------


def test_no_reference_unless_requested():
    config = _config(GENERATED.replace("reference = auto\n", ""))
    assert obtain_reference(config, build_problem(build_spec(config))) is None


def test_reference_is_cached_at_its_path(tmp_path):
    text = GENERATED.replace("reference = auto", "reference = ref.txt")
    config = _config(text, tmp_path)
    p = build_problem(build_spec(config))
    first = obtain_reference(config, p)
    assert (tmp_path / "ref.txt").exists()
    second = obtain_reference(config, p)
    assert isinstance(second, ReferenceSolution)
    assert second.D_star == first.D_star
    assert np.array_equal(second.y_star.data, first.y_star.data)


def test_effective_tau():
    config = _config()
    assert effective_tau(config) == 1
    assert effective_tau(config.with_method("dbcd")) == 0


def test_explicit_step():
    config = _config()
    step = choose_step(config, build_problem(build_spec(config)), None)
    assert step.alpha == 0.1
    assert step.sigma is None
    assert step.theoretical_rate is None


def test_auto_step_uses_alpha_max():
    config = _config(GENERATED.replace("alpha = 0.1", "alpha = auto\nsigma = 0.5"))
    step = choose_step(config, build_problem(build_spec(config)), None)
    assert step.alpha == step.constants.alpha_max
    assert step.sigma == 0.5
    assert 0.0 < step.theoretical_rate < 1.0


def test_estimated_sigma_needs_reference():
    config = _config(GENERATED.replace("alpha = 0.1", "alpha = auto\nsigma = estimate"))
    with pytest.raises(ValueError):
        _ = choose_step(config, build_problem(build_spec(config)), None)


def test_thread_count(monkeypatch):
    monkeypatch.delenv("RDCIAG_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("RDCIAG_THREADS", "4")
    assert thread_count() == 4
    for bad in ("0", "many"):
        monkeypatch.setenv("RDCIAG_THREADS", bad)
        with pytest.raises(ValueError):
            _ = thread_count()


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


def test_run_experiment_writes_traces_and_report(tmp_path):
    result = run_experiment(_config(), tmp_path)
    assert [s.seed for s in result.seeds] == [0, 1]
    for s in result.seeds:
        assert s.path == tmp_path / f"rdciag_seed{s.seed}.csv"
        trace = read_trace_csv(s.path)
        assert trace.column("k") == list(range(10, 201, 10))
        assert all(g is not None for g in trace.column("gamma"))
    report = (tmp_path / REPORT_NAME).read_text().splitlines()
    assert report == result.report_lines
    assert summary_value(report, "method") == "rdciag"
    assert summary_value(report, "seeds") == "0,1"
    assert summary_value(report, "tau") == "1"
    assert summary_value(report, "seed.1.iterations") == "200"


def test_threads_do_not_change_results(monkeypatch):
    monkeypatch.setenv("RDCIAG_THREADS", "1")
    serial = run_experiment(_config())
    monkeypatch.setenv("RDCIAG_THREADS", "2")
    threaded = run_experiment(_config())
    for a, b in zip(serial.seeds, threaded.seeds):
        assert a.trace.rows == b.trace.rows


def test_compare_shares_one_problem(tmp_path):
    results = compare(_config(), ["rdciag", "dbcd", "piag"], tmp_path)
    assert list(results) == ["rdciag", "dbcd", "piag"]
    assert (tmp_path / "dbcd" / "dbcd_seed0.csv").exists()
    assert (tmp_path / "piag" / REPORT_NAME).exists()
    lines = compare_lines(results)
    assert len(lines) == 9
    assert summary_value(lines, "dbcd.final_gap") is not None


def test_compare_with_kaczmarz():
    text = (
        "[problem]\nkind = aug_l1\ngenerate = true\nm = 3\nn = 6\nsparsity = 2\n"
        "[method]\nalpha = 0.05\n[run]\nmax_iter = 100\n"
    )
    results = compare(_config(text), ["dbcd", "sparse_kaczmarz"])
    assert results["sparse_kaczmarz"].seeds[0].trace.meta["method"] == "sparse_kaczmarz"
    assert summary_value(compare_lines(results), "sparse_kaczmarz.final_primal_err2") == ""


def test_rate_lines(tmp_path):
    good = Trace()
    for k in range(1, 41):
        good.append(TraceRow(k, 0.0, 0.8**k, None, None, None, 0))
    short = Trace()
    short.append(TraceRow(1, 0.0, 1.0, None, None, None, 0))
    write_trace_csv(good, tmp_path / "good.csv")
    write_trace_csv(short, tmp_path / "short.csv")
    lines = rate_lines([tmp_path / "good.csv", tmp_path / "short.csv"], burn_in=0.0)
    assert summary_value(lines, "good.field") == "gap"
    rate = float(summary_value(lines, "good.empirical_rate") or "nan")
    assert rate == pytest.approx(0.8, rel=1e-9)
    assert summary_value(lines, "short.error") is not None


def test_summary_value():
    lines = ["a=1", "b=", "c=x=y"]
    assert summary_value(lines, "a") == "1"
    assert summary_value(lines, "b") == ""
    assert summary_value(lines, "c") == "x=y"
    assert summary_value(lines, "d") is None
