import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np

from .functions import (
    ElasticNetScalar,
    IndicatorSet,
    LogUtility,
    NegUtilityBoxed,
    QuadraticPlusIndicator,
    UnsupportedComponentError,
    Utility,
)
from .problem import CompositeProblem
from .sets import Box, ConvexSet, Halfspace, Hyperplane, WholeSpace
from .spaces import BlockLayout, BlockOperator

logger = logging.getLogger(__name__)

type Array = np.ndarray

CERTIFY_SWEEPS = 10_000
CERTIFY_TOL = 1e-8
CONSISTENCY_TOL = 1e-8


class BuildError(ValueError):
    """Raised when instance data cannot form a valid problem."""


def _matrix(values: t.Any) -> Array:
    m = np.atleast_2d(np.asarray(values, dtype=np.float64)).copy()
    m.setflags(write=False)
    return m


def _vector(values: t.Any) -> Array:
    v = np.atleast_1d(np.asarray(values, dtype=np.float64)).copy()
    v.setflags(write=False)
    return v


# --------------------------------------------------------------------------
# Best approximation
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class BestApproxSpec:
    """Project v onto Ω₀ ∩ Ω₁ ∩ … ∩ Ωₘ."""

    v: Array
    omega0: ConvexSet
    constraints: tuple[ConvexSet, ...] = ()

    def __post_init__(self):
        """Ensure all preconditions are met."""
        v = _vector(self.v)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        n = v.shape[0]
        if self.omega0.dim != n:
            raise BuildError(f"omega0 has dimension {self.omega0.dim}, v has {n}.")
        for q, s in enumerate(self.constraints):
            if s.dim != n:
                raise BuildError(f"Constraint {q} has dimension {s.dim}, v has {n}.")

    @property
    def dim(self) -> int:
        return self.v.shape[0]


def certify_intersection(
    sets: t.Sequence[ConvexSet], start: Array, sweeps: int = CERTIFY_SWEEPS
) -> bool:
    """Cyclic projections from `start`; True once a point lies within tolerance of every set."""
    x = np.asarray(start, dtype=np.float64)
    for _ in range(sweeps):
        for s in sets:
            x = s.project(x)
        if max(s.distance(x) for s in sets) <= CERTIFY_TOL:
            return True
    return False


def build_best_approximation(spec: BestApproxSpec) -> CompositeProblem:
    """
    One primal block with f = ½‖x − v‖² + δ_Ω₀ and one identity row per
    constraint. Without constraints a single whole-space row is used, so the
    solution is 𝒫_Ω₀(v).
    """
    constraints = spec.constraints or (WholeSpace(spec.dim),)
    if not certify_intersection((spec.omega0, *constraints), spec.v):
        logger.warning(
            "Could not certify a common point of omega0 and %d constraints.",
            len(constraints),
        )
    col = BlockLayout((spec.dim,))
    row = BlockLayout((spec.dim,) * len(constraints))
    return CompositeProblem(
        f_components=(QuadraticPlusIndicator(spec.v, spec.omega0),),
        g_components=tuple(IndicatorSet(s) for s in constraints),
        A=BlockOperator.identity_grid(row, col),
    )


# --------------------------------------------------------------------------
# Augmented l1
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class AugL1Spec:
    """min λ‖x‖₁ + ½‖x‖² subject to Ax = b."""

    matrix: Array
    b: Array
    lam: float

    def __post_init__(self):
        """Ensure all preconditions are met."""
        matrix, b = _matrix(self.matrix), _vector(self.b)
        if b.shape != (matrix.shape[0],):
            raise BuildError(f"b has shape {b.shape} for {matrix.shape[0]} rows.")
        zero = np.flatnonzero(~np.any(matrix, axis=1))
        if zero.size:
            raise BuildError(f"Row {int(zero[0])} of A is zero.")
        if not self.lam > 0:
            raise BuildError(f"lambda must be positive, got {self.lam}.")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "b", b)

    @property
    def shape(self) -> tuple[int, int]:
        m, n = self.matrix.shape
        return m, n


def build_augmented_l1(spec: AugL1Spec) -> CompositeProblem:
    """
    n scalar primal blocks with elastic net pieces and m dual blocks of
    dimension n, one hyperplane ⟨aⱼ, ·⟩ = bⱼ each. 𝒜ⱼᵢ is the selector of
    coordinate i into block j, so (𝒜*y)ᵢ = Σⱼ yⱼᵢ.
    """
    m, n = spec.shape
    solution, *_ = np.linalg.lstsq(spec.matrix, spec.b, rcond=None)
    residual = float(np.linalg.norm(spec.matrix @ solution - spec.b))
    if residual > CONSISTENCY_TOL * max(1.0, float(np.linalg.norm(spec.b))):
        logger.warning("Linear system looks inconsistent: residual %.3g.", residual)
    entries = {}
    for i in range(n):
        selector = np.zeros((n, 1))
        selector[i, 0] = 1.0
        for j in range(m):
            entries[(j, i)] = selector
    return CompositeProblem(
        f_components=tuple(ElasticNetScalar(spec.lam) for _ in range(n)),
        g_components=tuple(
            IndicatorSet(Hyperplane(spec.matrix[j], float(spec.b[j]))) for j in range(m)
        ),
        A=BlockOperator(BlockLayout((n,) * m), BlockLayout.scalars(n), entries),
    )


# --------------------------------------------------------------------------
# Network utility maximization
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class NumSpec:
    """
    Sources with concave utilities and rate caps sharing capacitated links.

    `routing[l, s]` is 1 when source s sends over link l.
    """

    utilities: tuple[Utility, ...]
    caps: Array
    capacities: Array
    routing: Array
    lam: float
    links_of: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    sources_of: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        """Ensure all preconditions are met."""
        utilities = tuple(self.utilities)
        caps, capacities = _vector(self.caps), _vector(self.capacities)
        routing = _matrix(self.routing)
        n_links, n_sources = routing.shape
        if len(utilities) != n_sources or caps.shape != (n_sources,):
            raise BuildError(
                f"Routing has {n_sources} sources but {len(utilities)} utilities "
                f"and {caps.shape[0]} caps."
            )
        if capacities.shape != (n_links,):
            raise BuildError(f"Routing has {n_links} links but {capacities.shape[0]} capacities.")
        if not np.all(np.isin(routing, (0.0, 1.0))):
            raise BuildError("Routing entries must be 0 or 1.")
        if np.any(caps <= 0):
            raise BuildError("Every rate cap must be positive.")
        if np.any(capacities <= 0):
            raise BuildError("Every link capacity must be positive.")
        links_of = tuple(
            tuple(int(link) for link in np.flatnonzero(routing[:, s]))
            for s in range(n_sources)
        )
        for s, links in enumerate(links_of):
            if not links:
                raise BuildError(f"Source {s} uses no link.")
        sources_of = tuple(
            tuple(int(s) for s in np.flatnonzero(routing[link])) for link in range(n_links)
        )
        object.__setattr__(self, "utilities", utilities)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "capacities", capacities)
        object.__setattr__(self, "routing", routing)
        object.__setattr__(self, "links_of", links_of)
        object.__setattr__(self, "sources_of", sources_of)

    @property
    def num_sources(self) -> int:
        return self.routing.shape[1]

    @property
    def num_links(self) -> int:
        return self.routing.shape[0]


def build_num(spec: NumSpec) -> CompositeProblem:
    """Sources are primal scalars, links are dual scalars with halfspace caps."""
    if not spec.lam > 0:
        raise UnsupportedComponentError(
            f"Network utility problems need lambda > 0 for strong convexity, got {spec.lam}."
        )
    entries = {
        (link, s): np.ones((1, 1)) for link, sources in enumerate(spec.sources_of) for s in sources
    }
    return CompositeProblem(
        f_components=tuple(
            NegUtilityBoxed(u, float(cap), spec.lam)
            for u, cap in zip(spec.utilities, spec.caps)
        ),
        g_components=tuple(
            IndicatorSet(Halfspace((1.0,), float(c))) for c in spec.capacities
        ),
        A=BlockOperator(
            BlockLayout.scalars(spec.num_links), BlockLayout.scalars(spec.num_sources), entries
        ),
    )


def link_loads(spec: NumSpec, rates: t.Any) -> Array:
    """Σ_{s ∈ 𝒮(l)} x_s for every link l."""
    return spec.routing @ np.asarray(rates, dtype=np.float64).reshape(-1)


# --------------------------------------------------------------------------
# Desk instances
# --------------------------------------------------------------------------


def desk_best_approximation(seed: int = 0, n: int = 5, m: int = 3) -> BestApproxSpec:
    """
    A point outside the box [−1, 1]ⁿ and m halfspaces that all keep a
    common interior point of the box strictly feasible.
    """
    rng = np.random.default_rng(seed)
    anchor = rng.uniform(-0.5, 0.5, n)
    constraints = []
    for _ in range(m):
        a = rng.standard_normal(n)
        a /= np.linalg.norm(a)
        constraints.append(Halfspace(a, float(a @ anchor) + rng.uniform(0.05, 0.3)))
    v = 2.0 * rng.standard_normal(n)
    return BestApproxSpec(v, Box(-np.ones(n), np.ones(n)), tuple(constraints))


def desk_augmented_l1(
    seed: int = 0, m: int = 10, n: int = 30, sparsity: int = 3, lam: float = 0.1
) -> AugL1Spec:
    """Gaussian A with unit-scale columns and b = Ax♮ for a sparse x♮."""
    if not 0 < sparsity <= n:
        raise BuildError(f"sparsity must lie in [1, {n}], got {sparsity}.")
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((m, n)) / np.sqrt(m)
    truth = np.zeros(n)
    support = rng.choice(n, size=sparsity, replace=False)
    truth[support] = rng.standard_normal(sparsity)
    return AugL1Spec(matrix, matrix @ truth, lam)


def desk_num(
    seed: int = 0, sources: int = 4, links: int = 3, lam: float = 0.1
) -> NumSpec:
    """Log utilities over a random routing where every source uses at least one link."""
    rng = np.random.default_rng(seed)
    routing = (rng.random((links, sources)) < 0.5).astype(np.float64)
    for s in range(sources):
        if not routing[:, s].any():
            routing[rng.integers(links), s] = 1.0
    return NumSpec(
        utilities=tuple(LogUtility() for _ in range(sources)),
        caps=rng.uniform(2.0, 5.0, sources),
        capacities=rng.uniform(1.0, 3.0, links),
        routing=routing,
        lam=lam,
    )
