import math
import re
import typing as t
from dataclasses import dataclass, field, replace
from pathlib import Path

from .algorithms import METHODS
from .functions import parse_utility
from .schedules import DelaySchedule, make_schedule
from .sets import parse_set

PROBLEM_KINDS = ("best_approx", "aug_l1", "num")
DELAY_KINDS = ("zero", "cyclic", "random_bounded")
SECTIONS = ("problem", "method", "delay", "run")
MAX_SEED = 2**64
# `#` starts a comment at the start of a line or after whitespace.
COMMENT = re.compile(r"(?:^|(?<=\s))#")


@dataclass(frozen=True, slots=True)
class ConfigIssue:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


class ConfigError(ValueError):
    """Every problem found in one pass over a config file."""

    issues: tuple[ConfigIssue, ...]

    def __init__(self, issues: t.Iterable[ConfigIssue]):
        self.issues = tuple(issues)
        super().__init__("\n".join(str(issue) for issue in self.issues))


# --------------------------------------------------------------------------
# Config values
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ProblemConfig:
    """
    Instance data. Set literals, utilities, and file paths are kept as
    written; builders parse them.
    """

    kind: str = "best_approx"
    generate: bool = False
    instance_seed: int = 0
    v: tuple[float, ...] = ()
    omega0: str | None = None
    constraints: tuple[str, ...] = ()
    n: int | None = None
    m: int | None = None
    matrix: str | None = None
    rhs: str | None = None
    lam: float | None = None
    sparsity: int | None = None
    routing: str | None = None
    utilities: tuple[str, ...] = ()
    caps: tuple[float, ...] = ()
    capacities: tuple[float, ...] = ()
    sources: int | None = None
    links: int | None = None


@dataclass(frozen=True, slots=True)
class MethodConfig:
    name: str = "rdciag"
    alpha: float | t.Literal["auto"] = "auto"
    sigma: float | t.Literal["estimate"] | None = None


@dataclass(frozen=True, slots=True)
class DelayConfig:
    kind: str = "zero"
    period: int = 1
    tau: int = 0
    seed: int = 0

    def to_schedule(self) -> DelaySchedule:
        return make_schedule(self.kind, period=self.period, tau=self.tau, seed=self.seed)


@dataclass(frozen=True, slots=True)
class RunConfig:
    seeds: tuple[int, ...] = (0,)
    max_iter: int = 10_000
    gap_tol: float = math.inf
    record_every: int | None = None
    reference: str | None = None
    reference_iter: int = 1_000_000
    burn_in: float = 0.2
    record_time: bool = False
    debug: bool = False


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    problem: ProblemConfig
    method: MethodConfig = MethodConfig()
    delay: DelayConfig = DelayConfig()
    run: RunConfig = RunConfig()
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, path: str) -> Path:
        """Resolve a path from the config against the config's directory."""
        candidate = Path(path)
        return candidate if candidate.is_absolute() else self.base_dir / candidate

    def with_method(self, name: str) -> "ExperimentConfig":
        return replace(self, method=replace(self.method, name=name))


# --------------------------------------------------------------------------
# Value converters
# --------------------------------------------------------------------------


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError(f"expected a nonnegative integer, got {value}")
    return value


def _pos_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError(f"expected a positive integer, got {value}")
    return value


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {text}")
    return value


def _pos_float(text: str) -> float:
    value = _float(text)
    if not value > 0:
        raise ValueError(f"expected a positive number, got {value!r}")
    return value


def _tolerance(text: str) -> float:
    value = float(text)
    if math.isnan(value) or value < 0:
        raise ValueError(f"expected a nonnegative tolerance or inf, got {text}")
    return value


def _fraction(text: str) -> float:
    value = _float(text)
    if not 0.0 <= value < 1.0:
        raise ValueError(f"expected a fraction in [0, 1), got {value!r}")
    return value


def _bool(text: str) -> bool:
    match text.lower():
        case "true" | "yes" | "1":
            return True
        case "false" | "no" | "0":
            return False
        case _:
            raise ValueError(f"expected true or false, got {text!r}")


def _split(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _floats(text: str) -> tuple[float, ...]:
    values = tuple(_float(part) for part in _split(text))
    if not values:
        raise ValueError("expected a comma-separated list of numbers")
    return values


def _seeds(text: str) -> tuple[int, ...]:
    seeds = tuple(int(part) for part in _split(text))
    if not seeds:
        raise ValueError("seeds must not be empty")
    for seed in seeds:
        if not 0 <= seed < MAX_SEED:
            raise ValueError(f"seed {seed} is not a 64-bit unsigned integer")
    if len(set(seeds)) != len(seeds):
        repeated = sorted({seed for seed in seeds if seeds.count(seed) > 1})
        raise ValueError(f"duplicate seeds {repeated}; each seed writes its own trace")
    return seeds


def _set_literal(text: str) -> str:
    parse_set(text)
    return " ".join(text.split())


def _utilities(text: str) -> tuple[str, ...]:
    items = tuple(_split(text))
    for item in items:
        parse_utility(item)
    if not items:
        raise ValueError("expected a comma-separated list of utilities")
    return items


def _choice(options: tuple[str, ...]) -> t.Callable[[str], str]:
    def convert(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return convert


def _alpha(text: str) -> float | str:
    return "auto" if text == "auto" else _pos_float(text)


def _sigma(text: str) -> float | str:
    return "estimate" if text == "estimate" else _pos_float(text)


def _path(text: str) -> str:
    if not text:
        raise ValueError("expected a path")
    return text


class _Key(t.NamedTuple):
    attr: str
    convert: t.Callable[[str], t.Any]
    repeatable: bool = False


KEYS: dict[str, dict[str, _Key]] = {
    "problem": {
        "kind": _Key("kind", _choice(PROBLEM_KINDS)),
        "generate": _Key("generate", _bool),
        "instance_seed": _Key("instance_seed", _nonneg_int),
        "v": _Key("v", _floats),
        "omega0": _Key("omega0", _set_literal),
        "constraint": _Key("constraints", _set_literal, repeatable=True),
        "n": _Key("n", _pos_int),
        "m": _Key("m", _pos_int),
        "matrix": _Key("matrix", _path),
        "rhs": _Key("rhs", _path),
        "lambda": _Key("lam", _pos_float),
        "sparsity": _Key("sparsity", _pos_int),
        "routing": _Key("routing", _path),
        "utilities": _Key("utilities", _utilities),
        "caps": _Key("caps", _floats),
        "capacities": _Key("capacities", _floats),
        "sources": _Key("sources", _pos_int),
        "links": _Key("links", _pos_int),
    },
    "method": {
        "name": _Key("name", _choice(METHODS)),
        "alpha": _Key("alpha", _alpha),
        "sigma": _Key("sigma", _sigma),
    },
    "delay": {
        "kind": _Key("kind", _choice(DELAY_KINDS)),
        "period": _Key("period", _pos_int),
        "tau": _Key("tau", _nonneg_int),
        "seed": _Key("seed", _nonneg_int),
    },
    "run": {
        "seeds": _Key("seeds", _seeds),
        "max_iter": _Key("max_iter", _nonneg_int),
        "gap_tol": _Key("gap_tol", _tolerance),
        "record_every": _Key("record_every", _pos_int),
        "reference": _Key("reference", _path),
        "reference_iter": _Key("reference_iter", _pos_int),
        "burn_in": _Key("burn_in", _fraction),
        "record_time": _Key("record_time", _bool),
        "debug": _Key("debug", _bool),
    },
}

SECTION_TYPES = {
    "problem": ProblemConfig,
    "method": MethodConfig,
    "delay": DelayConfig,
    "run": RunConfig,
}


# --------------------------------------------------------------------------
# Reader
# --------------------------------------------------------------------------


class ConfigReader:
    """
    Line-at-a-time reader for `[section]` / `key = value` experiment files.

    `feed()` takes one line at a time and records every problem instead of
    stopping at the first; `close()` runs the cross-key checks and
    `get_config()` raises a ConfigError carrying all of them.
    """

    section: str | None
    values: dict[str, dict[str, t.Any]]
    lines: dict[tuple[str, str], int]
    issues: list[ConfigIssue]

    def __init__(self):
        self.section = None
        self.values = {name: {} for name in SECTIONS}
        self.lines = {}
        self.section_lines: dict[str, int] = {}
        self.issues = []
        self.lineno = 0
        self.closed = False

    def error(self, message: str, line: int | None = None) -> None:
        self.issues.append(ConfigIssue(self.lineno if line is None else line, message))

    def feed(self, line: str) -> None:
        self.lineno += 1
        text = COMMENT.split(line, maxsplit=1)[0].strip()
        if not text:
            return
        if text.startswith("["):
            name = text.strip("[]").strip()
            if not text.endswith("]") or name not in SECTIONS:
                self.error(f"unknown section {text!r}")
                self.section = None
                return
            if name in self.section_lines:
                self.error(f"section [{name}] appears twice")
            self.section = name
            self.section_lines.setdefault(name, self.lineno)
            return
        key, sep, raw = text.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            self.error(f"expected key = value, got {text!r}")
            return
        if self.section is None:
            self.error(f"key {key!r} outside of a known section")
            return
        spec = KEYS[self.section].get(key)
        if spec is None:
            self.error(f"unknown key {key!r} in [{self.section}]")
            return
        try:
            value = spec.convert(raw)
        except ValueError as exc:
            self.error(f"{key}: {exc}")
            return
        bucket = self.values[self.section]
        if spec.repeatable:
            bucket[spec.attr] = (*bucket.get(spec.attr, ()), value)
        elif spec.attr in bucket:
            self.error(f"duplicate key {key!r} in [{self.section}]")
            return
        else:
            bucket[spec.attr] = value
        self.lines.setdefault((self.section, key), self.lineno)

    def line_of(self, section: str, key: str | None = None) -> int:
        if key is not None and (section, key) in self.lines:
            return self.lines[(section, key)]
        return self.section_lines.get(section, 0)

    def close(self) -> None:
        self.closed = True
        problem = self.values["problem"]
        method = self.values["method"]
        delay = self.values["delay"]
        if "kind" not in problem:
            self.error("[problem] needs a kind", self.line_of("problem"))
        else:
            self._check_problem(problem)
        if method.get("alpha", "auto") == "auto" and method.get("sigma") is None:
            self.error(
                "alpha = auto needs sigma (a number or estimate)",
                self.line_of("method", "alpha"),
            )
        if method.get("name") == "sparse_kaczmarz" and problem.get("kind", "aug_l1") != "aug_l1":
            self.error(
                "sparse_kaczmarz only applies to aug_l1 problems", self.line_of("method", "name")
            )
        kind = delay.get("kind", "zero")
        if kind != "cyclic" and "period" in delay:
            self.error("period only applies to cyclic delays", self.line_of("delay", "period"))
        if kind != "random_bounded" and ("tau" in delay or "seed" in delay):
            self.error(
                "tau and seed only apply to random_bounded delays", self.line_of("delay")
            )

    def _require(self, problem: dict[str, t.Any], *keys: str) -> None:
        attrs = {key: KEYS["problem"][key].attr for key in keys}
        for key, attr in attrs.items():
            if attr not in problem:
                self.error(
                    f"{problem['kind']} needs {key} unless generate = true",
                    self.line_of("problem", "kind"),
                )

    def _check_problem(self, problem: dict[str, t.Any]) -> None:
        if problem.get("generate", False):
            return
        match problem["kind"]:
            case "best_approx":
                self._require(problem, "v", "omega0")
                n = len(problem.get("v", ()))
                if "omega0" in problem and n and parse_set(problem["omega0"]).dim != n:
                    self.error(
                        f"omega0 does not have dimension {n}", self.line_of("problem", "omega0")
                    )
                for literal in problem.get("constraints", ()):
                    if n and parse_set(literal).dim != n:
                        self.error(
                            f"constraint {literal!r} does not have dimension {n}",
                            self.line_of("problem", "constraint"),
                        )
            case "aug_l1":
                self._require(problem, "matrix", "rhs", "lambda")
            case _:
                self._require(problem, "routing", "utilities", "caps", "capacities", "lambda")
                sources = len(problem.get("utilities", ()))
                if "caps" in problem and sources and len(problem["caps"]) != sources:
                    self.error(
                        f"caps lists {len(problem['caps'])} values for {sources} utilities",
                        self.line_of("problem", "caps"),
                    )

    def get_config(self, base_dir: Path = Path(".")) -> ExperimentConfig:
        assert self.closed, "Did you forget to call close()?"
        if self.issues:
            raise ConfigError(sorted(self.issues, key=lambda issue: issue.line))
        return ExperimentConfig(
            problem=ProblemConfig(**self.values["problem"]),
            method=MethodConfig(**self.values["method"]),
            delay=DelayConfig(**self.values["delay"]),
            run=RunConfig(**self.values["run"]),
            base_dir=base_dir,
        )


def parse_config(text: str | t.Iterable[str], base_dir: Path = Path(".")) -> ExperimentConfig:
    """Parse a whole config, raising ConfigError with every issue found."""
    reader = ConfigReader()
    lines = text.splitlines() if isinstance(text, str) else text
    for line in lines:
        reader.feed(line)
    reader.close()
    return reader.get_config(base_dir)


def load_config(path: Path) -> ExperimentConfig:
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"Cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


# --------------------------------------------------------------------------
# Canonical serialization
# --------------------------------------------------------------------------


def _format_value(value: t.Any) -> str:
    match value:
        case bool():
            return "true" if value else "false"
        case float():
            return repr(value)
        case tuple():
            return ", ".join(_format_value(item) for item in value)
        case _:
            return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    """Write a config in canonical form, omitting values left at their defaults."""
    out: list[str] = []
    for section in SECTIONS:
        current = getattr(config, section)
        default = SECTION_TYPES[section]()
        lines: list[str] = []
        for key, spec in KEYS[section].items():
            value = getattr(current, spec.attr)
            if value == getattr(default, spec.attr) and not (section == "problem" and key == "kind"):
                continue
            if spec.repeatable:
                lines.extend(f"{key} = {item}" for item in value)
            else:
                lines.append(f"{key} = {_format_value(value)}")
        if lines:
            out.append(f"[{section}]")
            out.extend(lines)
            out.append("")
    return "\n".join(out)

