import math
import typing as t
from dataclasses import dataclass, field

import numpy as np

type Array = np.ndarray

FEASIBILITY_TOL = 1e-9
"""Relative slack when testing membership of points produced by projections."""

SPAN_TOL = 1e-8
"""Relative slack when testing whether a dual block lies on a normal ray."""


def _vector(values: t.Any) -> Array:
    array = np.atleast_1d(np.asarray(values, dtype=np.float64)).copy()
    array.setflags(write=False)
    return array


@dataclass(frozen=True, slots=True, eq=False)
class ConvexSet:
    """
    A closed convex set with a closed-form Euclidean projection.

    Subclasses provide `project`, `contains`, and `support` (the conjugate of
    the set's indicator). `support` returns `math.inf` off its domain.
    """

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def project(self, x: Array) -> Array:
        raise NotImplementedError

    def contains(self, x: Array) -> bool:
        raise NotImplementedError

    def support(self, y: Array) -> float:
        raise NotImplementedError

    def distance(self, x: Array) -> float:
        return float(np.linalg.norm(x - self.project(x)))


@dataclass(frozen=True, slots=True, eq=False)
class WholeSpace(ConvexSet):
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("Whole space dimension must be positive.")

    @property
    def dim(self) -> int:
        return self.size

    def project(self, x: Array) -> Array:
        return np.array(x, dtype=np.float64)

    def contains(self, x: Array) -> bool:
        return bool(np.all(np.isfinite(x)))

    def support(self, y: Array) -> float:
        return 0.0 if float(np.linalg.norm(y)) <= SPAN_TOL else math.inf


@dataclass(frozen=True, slots=True, eq=False)
class Box(ConvexSet):
    lo: Array
    hi: Array

    def __post_init__(self):
        """Ensure all preconditions are met."""
        lo, hi = _vector(self.lo), _vector(self.hi)
        if lo.shape != hi.shape:
            raise ValueError("Box bounds must have the same length.")
        if np.any(lo > hi):
            raise ValueError("Box requires lo <= hi componentwise.")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def project(self, x: Array) -> Array:
        return np.clip(x, self.lo, self.hi)

    def contains(self, x: Array) -> bool:
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def support(self, y: Array) -> float:
        with np.errstate(invalid="ignore"):
            terms = np.where(y > 0, self.hi * y, np.where(y < 0, self.lo * y, 0.0))
        return float(np.sum(terms))


@dataclass(frozen=True, slots=True, eq=False)
class Hyperplane(ConvexSet):
    """{x : ⟨a, x⟩ = b}."""

    a: Array
    b: float
    a_norm2: float = field(init=False, repr=False)

    def __post_init__(self):
        a = _vector(self.a)
        norm2 = float(a @ a)
        if norm2 == 0.0:
            raise ValueError("Hyperplane normal must be nonzero.")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "a_norm2", norm2)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def project(self, x: Array) -> Array:
        return x - ((float(self.a @ x) - self.b) / self.a_norm2) * self.a

    def contains(self, x: Array) -> bool:
        scale = math.sqrt(self.a_norm2) * float(np.linalg.norm(x)) + abs(self.b)
        return abs(float(self.a @ x) - self.b) <= FEASIBILITY_TOL * max(scale, 1.0)

    def support(self, y: Array) -> float:
        ray = _ray_coefficient(self.a, self.a_norm2, y)
        return math.inf if ray is None else self.b * ray


@dataclass(frozen=True, slots=True, eq=False)
class Halfspace(ConvexSet):
    """{x : ⟨a, x⟩ ≤ c}."""

    a: Array
    c: float
    a_norm2: float = field(init=False, repr=False)

    def __post_init__(self):
        a = _vector(self.a)
        norm2 = float(a @ a)
        if norm2 == 0.0:
            raise ValueError("Halfspace normal must be nonzero.")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "a_norm2", norm2)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def project(self, x: Array) -> Array:
        excess = float(self.a @ x) - self.c
        if excess <= 0.0:
            return np.array(x, dtype=np.float64)
        return x - (excess / self.a_norm2) * self.a

    def contains(self, x: Array) -> bool:
        scale = math.sqrt(self.a_norm2) * float(np.linalg.norm(x)) + abs(self.c)
        return float(self.a @ x) - self.c <= FEASIBILITY_TOL * max(scale, 1.0)

    def support(self, y: Array) -> float:
        ray = _ray_coefficient(self.a, self.a_norm2, y)
        if ray is None:
            return math.inf
        if ray < 0.0:
            if -ray * math.sqrt(self.a_norm2) > SPAN_TOL * max(float(np.linalg.norm(y)), 1e-300):
                return math.inf
            return 0.0
        return self.c * ray


@dataclass(frozen=True, slots=True, eq=False)
class EuclideanBall(ConvexSet):
    center: Array
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("Ball radius must be positive.")
        object.__setattr__(self, "center", _vector(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def project(self, x: Array) -> Array:
        offset = x - self.center
        dist = float(np.linalg.norm(offset))
        if dist <= self.radius:
            return np.array(x, dtype=np.float64)
        return self.center + (self.radius / dist) * offset

    def contains(self, x: Array) -> bool:
        dist = float(np.linalg.norm(x - self.center))
        return dist <= self.radius * (1.0 + FEASIBILITY_TOL)

    def support(self, y: Array) -> float:
        return float(self.center @ y) + self.radius * float(np.linalg.norm(y))


def _ray_coefficient(a: Array, a_norm2: float, y: Array) -> float | None:
    """Return t when y = t·a up to SPAN_TOL·‖y‖, else None."""
    ray = float(a @ y) / a_norm2
    residual = float(np.linalg.norm(y - ray * a))
    if residual > SPAN_TOL * float(np.linalg.norm(y)):
        return None
    return ray


def project_set(s: ConvexSet, x: t.Any) -> Array:
    """Euclidean projection of x onto s."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (s.dim,):
        raise ValueError(f"Point of shape {x.shape} does not match set dimension {s.dim}.")
    return s.project(x)


# --------------------------------------------------------------------------
# Set literals
# --------------------------------------------------------------------------


def _parse_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def parse_set(text: str) -> ConvexSet:
    """
    Parse a set literal such as `halfspace a=1,1 c=2`.

    Accepted forms: `whole <dim>`, `box lo=<list> hi=<list>`,
    `hyperplane a=<list> b=<float>`, `halfspace a=<list> c=<float>`,
    `ball center=<list> radius=<float>`. Raises ValueError on bad input.
    """
    kind, *rest = text.split()
    if kind == "whole":
        if len(rest) != 1:
            raise ValueError("whole takes exactly one dimension")
        return WholeSpace(int(rest[0]))
    params: dict[str, str] = {}
    for token in rest:
        key, sep, value = token.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {token!r}")
        params[key] = value
    expected = {
        "box": {"lo", "hi"},
        "hyperplane": {"a", "b"},
        "halfspace": {"a", "c"},
        "ball": {"center", "radius"},
    }.get(kind)
    if expected is None:
        raise ValueError(f"unknown set kind {kind!r}")
    if set(params) != expected:
        raise ValueError(f"{kind} needs exactly {', '.join(sorted(expected))}")
    match kind:
        case "box":
            return Box(_parse_list(params["lo"]), _parse_list(params["hi"]))
        case "hyperplane":
            return Hyperplane(_parse_list(params["a"]), float(params["b"]))
        case "halfspace":
            return Halfspace(_parse_list(params["a"]), float(params["c"]))
        case _:
            return EuclideanBall(_parse_list(params["center"]), float(params["radius"]))


def _format_list(values: Array) -> str:
    return ",".join(repr(float(v)) for v in values)


def format_set(s: ConvexSet) -> str:
    """Inverse of parse_set."""
    match s:
        case WholeSpace(size=size):
            return f"whole {size}"
        case Box(lo=lo, hi=hi):
            return f"box lo={_format_list(lo)} hi={_format_list(hi)}"
        case Hyperplane(a=a, b=b):
            return f"hyperplane a={_format_list(a)} b={b!r}"
        case Halfspace(a=a, c=c):
            return f"halfspace a={_format_list(a)} c={c!r}"
        case EuclideanBall(center=center, radius=radius):
            return f"ball center={_format_list(center)} radius={radius!r}"
        case _:
            raise TypeError(f"Cannot format set of type {type(s).__name__}")
