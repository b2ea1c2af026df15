import math
import typing as t
from dataclasses import dataclass

import numpy as np

from .sets import ConvexSet, Halfspace, Hyperplane, WholeSpace

type Array = np.ndarray

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100


class UnsupportedComponentError(ValueError):
    """Raised when an operation needs strong convexity the component lacks."""


def _vec(values: t.Any) -> Array:
    return np.atleast_1d(np.asarray(values, dtype=np.float64))


# --------------------------------------------------------------------------
# Scalar root finding
# --------------------------------------------------------------------------


def solve_increasing(
    g: t.Callable[[float], float],
    dg: t.Callable[[float], float],
    lo: float,
    hi: float,
) -> float:
    """
    Root of a nondecreasing scalar function on [lo, hi], clamped to the ends.

    Newton steps are taken from the bracket midpoint and replaced by bisection
    whenever they leave the current bracket.
    """
    g_lo = g(lo)
    if g_lo >= 0.0:
        return lo
    g_hi = g(hi)
    if g_hi <= 0.0:
        return hi
    a, b = lo, hi
    x = 0.5 * (a + b)
    for _ in range(NEWTON_MAX_ITER):
        gx = g(x)
        if gx < 0.0:
            a = x
        elif gx > 0.0:
            b = x
        else:
            return x
        slope = dg(x)
        candidate = x - gx / slope if slope > 0.0 else math.nan
        if not a < candidate < b:
            candidate = 0.5 * (a + b)
        if abs(candidate - x) <= NEWTON_TOL * max(1.0, abs(x)):
            return candidate
        x = candidate
    return x


# --------------------------------------------------------------------------
# Utilities for network sources
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class LogUtility:
    """u(x) = log(1 + x)."""

    def value(self, x: float) -> float:
        return math.log1p(x)

    def derivative(self, x: float) -> float:
        return 1.0 / (1.0 + x)

    def curvature(self, x: float) -> float:
        return -1.0 / (1.0 + x) ** 2


@dataclass(frozen=True, slots=True)
class QuadraticUtility:
    """u(x) = q·x − ½·p·x² with p ≥ 0."""

    q: float
    p: float = 0.0

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("Quadratic utility needs p >= 0 to stay concave.")

    def value(self, x: float) -> float:
        return self.q * x - 0.5 * self.p * x * x

    def derivative(self, x: float) -> float:
        return self.q - self.p * x

    def curvature(self, x: float) -> float:
        return -self.p


type Utility = LogUtility | QuadraticUtility


def parse_utility(text: str) -> Utility:
    """Parse `log` or `quadratic:q:p`."""
    match text.strip().split(":"):
        case ["log"]:
            return LogUtility()
        case ["quadratic", q, p]:
            return QuadraticUtility(float(q), float(p))
        case ["quadratic", q]:
            return QuadraticUtility(float(q))
        case _:
            raise ValueError(f"unknown utility {text!r}")


def format_utility(utility: Utility) -> str:
    match utility:
        case LogUtility():
            return "log"
        case QuadraticUtility(q=q, p=p):
            return f"quadratic:{q!r}:{p!r}"
        case _:
            raise TypeError(f"Cannot format utility {utility!r}")


# --------------------------------------------------------------------------
# Components
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class SeparableComponent:
    """
    A closed convex piece fᵢ or gⱼ of a composite problem.

    Values are `math.inf` outside the effective domain. `mu` is the strong
    convexity modulus; only components with mu > 0 may play an fᵢ role.
    """

    @property
    def kind(self) -> str:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def mu(self) -> float:
        return 0.0

    def value(self, x: Array) -> float:
        raise NotImplementedError

    def prox(self, y: Array, alpha: float) -> Array:
        raise NotImplementedError

    def conjugate_grad(self, u: Array) -> Array:
        raise UnsupportedComponentError(
            f"{self.kind} is not strongly convex; its conjugate has no gradient."
        )

    def conjugate(self, u: Array) -> float:
        """φ*(u) through the maximizer: φ*(u) = ⟨x*, u⟩ − φ(x*)."""
        x_star = self.conjugate_grad(u)
        return float(x_star @ u) - self.value(x_star)


@dataclass(frozen=True, slots=True, eq=False)
class QuadraticPlusIndicator(SeparableComponent):
    """f(x) = ½‖x − v‖² + δ_Ω(x)."""

    v: Array
    omega: ConvexSet

    def __post_init__(self):
        v = _vec(self.v).copy()
        v.setflags(write=False)
        if v.shape != (self.omega.dim,):
            raise ValueError("Anchor point and set dimensions differ.")
        object.__setattr__(self, "v", v)

    @property
    def kind(self) -> str:
        return "quadratic_plus_indicator"

    @property
    def dim(self) -> int:
        return self.v.shape[0]

    @property
    def mu(self) -> float:
        return 1.0

    def value(self, x: Array) -> float:
        if not self.omega.contains(x):
            return math.inf
        diff = x - self.v
        return 0.5 * float(diff @ diff)

    def prox(self, y: Array, alpha: float) -> Array:
        return self.omega.project((alpha * self.v + y) / (1.0 + alpha))

    def conjugate_grad(self, u: Array) -> Array:
        return self.omega.project(self.v + u)


@dataclass(frozen=True, slots=True, eq=False)
class ElasticNetScalar(SeparableComponent):
    """f(x) = λ|x| + ½x² on a scalar block."""

    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("Elastic net weight must be nonnegative.")

    @property
    def kind(self) -> str:
        return "elastic_net_scalar"

    @property
    def dim(self) -> int:
        return 1

    @property
    def mu(self) -> float:
        return 1.0

    def value(self, x: Array) -> float:
        x0 = float(x[0])
        return self.lam * abs(x0) + 0.5 * x0 * x0

    def prox(self, y: Array, alpha: float) -> Array:
        return soft_threshold(y, alpha * self.lam) / (1.0 + alpha)

    def conjugate_grad(self, u: Array) -> Array:
        return soft_threshold(u, self.lam)

    def conjugate(self, u: Array) -> float:
        shrunk = soft_threshold(u, self.lam)
        return 0.5 * float(shrunk @ shrunk)


@dataclass(frozen=True, slots=True, eq=False)
class NegUtilityBoxed(SeparableComponent):
    """f(x) = −u(x) + δ_[0, cap](x) + (λ/2)x² for a concave utility u."""

    utility: Utility
    cap: float
    lam: float

    def __post_init__(self):
        if not self.cap > 0:
            raise ValueError("Rate cap must be positive.")
        if self.lam < 0:
            raise ValueError("Regularization weight must be nonnegative.")

    @property
    def kind(self) -> str:
        return "neg_utility_boxed"

    @property
    def dim(self) -> int:
        return 1

    @property
    def mu(self) -> float:
        return self.lam

    def value(self, x: Array) -> float:
        x0 = float(x[0])
        if not 0.0 <= x0 <= self.cap:
            return math.inf
        return -self.utility.value(x0) + 0.5 * self.lam * x0 * x0

    def prox(self, y: Array, alpha: float) -> Array:
        y0 = float(y[0])
        u = self.utility
        lam = self.lam
        root = solve_increasing(
            lambda z: -u.derivative(z) + lam * z + (z - y0) / alpha,
            lambda z: -u.curvature(z) + lam + 1.0 / alpha,
            0.0,
            self.cap,
        )
        return np.array([root])

    def conjugate_grad(self, u: Array) -> Array:
        if self.lam <= 0.0:
            raise UnsupportedComponentError(
                "neg_utility_boxed with lambda = 0 is not strongly convex."
            )
        u0 = float(u[0])
        util = self.utility
        lam = self.lam
        root = solve_increasing(
            lambda z: lam * z - util.derivative(z) - u0,
            lambda z: lam - util.curvature(z),
            0.0,
            self.cap,
        )
        return np.array([root])


@dataclass(frozen=True, slots=True, eq=False)
class IndicatorSet(SeparableComponent):
    """δ_S, whose conjugate is the support function of S."""

    s: ConvexSet

    @property
    def kind(self) -> str:
        return "indicator_set"

    @property
    def dim(self) -> int:
        return self.s.dim

    def value(self, x: Array) -> float:
        return 0.0 if self.s.contains(x) else math.inf

    def prox(self, y: Array, alpha: float) -> Array:
        return self.s.project(y)

    def conjugate(self, u: Array) -> float:
        return self.s.support(u)


def soft_threshold(u: Array, threshold: float) -> Array:
    return np.sign(u) * np.maximum(np.abs(u) - threshold, 0.0)


# --------------------------------------------------------------------------
# Public operations
# --------------------------------------------------------------------------


def _checked(phi: SeparableComponent, x: t.Any) -> Array:
    x = _vec(x)
    if x.shape != (phi.dim,):
        raise ValueError(
            f"Vector of shape {x.shape} does not match {phi.kind} of dimension {phi.dim}."
        )
    return x


def pair_values(phi: SeparableComponent, x: t.Any, u: t.Any) -> tuple[float, float]:
    """Return (φ(x), φ*(u))."""
    return phi.value(_checked(phi, x)), phi.conjugate(_checked(phi, u))


def prox(phi: SeparableComponent, y: t.Any, alpha: float) -> Array:
    """argmin_z φ(z) + ‖z − y‖²/(2α)."""
    if not alpha > 0:
        raise ValueError(f"Proximal parameter must be positive, got {alpha}.")
    return phi.prox(_checked(phi, y), alpha)


def prox_conjugate(phi: SeparableComponent, y: t.Any, alpha: float) -> Array:
    """prox of αφ* through the Moreau decomposition y − α·prox_{φ/α}(y/α)."""
    if not alpha > 0:
        raise ValueError(f"Proximal parameter must be positive, got {alpha}.")
    y = _checked(phi, y)
    match phi:
        case IndicatorSet(s=WholeSpace()):
            # Conjugate of the zero function is the indicator of {0}.
            return np.zeros_like(y)
        case IndicatorSet(s=Hyperplane(a=a, b=b, a_norm2=norm2)):
            # Exact multiples of the normal keep the support function finite.
            return ((float(a @ y) - alpha * b) / norm2) * a
        case IndicatorSet(s=Halfspace(a=a, c=c, a_norm2=norm2)):
            return max((float(a @ y) - alpha * c) / norm2, 0.0) * a
        case _:
            return y - alpha * phi.prox(y / alpha, 1.0 / alpha)


def conjugate_grad(phi: SeparableComponent, u: t.Any) -> Array:
    """∇φ*(u) = argmax_x ⟨x, u⟩ − φ(x)."""
    return phi.conjugate_grad(_checked(phi, u))
