import logging
import math
import typing as t
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .functions import IndicatorSet, SeparableComponent, UnsupportedComponentError
from .spaces import BlockLayout, BlockOperator, BlockVector, DimensionError

logger = logging.getLogger(__name__)

Z0_TOL = 1e-12
Z0_MAX_ITER = 400
REFERENCE_GAP_TOL = 1e-8
GAP_FEASIBILITY_TOL = 1e-9


# --------------------------------------------------------------------------
# The primal/dual pair
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class CompositeProblem:
    """
    min Σᵢ fᵢ(xᵢ) + Σⱼ gⱼ(𝒜ⱼx) and its dual min Σᵢ fᵢ*(−(𝒜*y)ᵢ) + Σⱼ gⱼ*(yⱼ).

    Every fᵢ must be strongly convex so the dual is differentiable in y.
    """

    f_components: tuple[SeparableComponent, ...]
    g_components: tuple[SeparableComponent, ...]
    A: BlockOperator

    def __post_init__(self):
        """Ensure all preconditions are met."""
        object.__setattr__(self, "f_components", tuple(self.f_components))
        object.__setattr__(self, "g_components", tuple(self.g_components))
        cols, rows = self.A.col_layout, self.A.row_layout
        if len(self.f_components) != cols.num_blocks:
            raise DimensionError(
                f"{len(self.f_components)} f components for {cols.num_blocks} column blocks."
            )
        if len(self.g_components) != rows.num_blocks:
            raise DimensionError(
                f"{len(self.g_components)} g components for {rows.num_blocks} row blocks."
            )
        for i, (f, dim) in enumerate(zip(self.f_components, cols.block_dims)):
            if f.dim != dim:
                raise DimensionError(f"f[{i}] has dimension {f.dim}, block has {dim}.")
            if not f.mu > 0:
                raise UnsupportedComponentError(
                    f"f[{i}] ({f.kind}) must be strongly convex, got mu = {f.mu}."
                )
        for j, (g, dim) in enumerate(zip(self.g_components, rows.block_dims)):
            if g.dim != dim:
                raise DimensionError(f"g[{j}] has dimension {g.dim}, block has {dim}.")

    @property
    def primal_layout(self) -> BlockLayout:
        return self.A.col_layout

    @property
    def dual_layout(self) -> BlockLayout:
        return self.A.row_layout

    @property
    def num_primal(self) -> int:
        """|I|."""
        return self.A.col_layout.num_blocks

    @property
    def num_dual(self) -> int:
        """|J|."""
        return self.A.row_layout.num_blocks


def primal_from_dual(p: CompositeProblem, y: BlockVector) -> BlockVector:
    """x = ∇f*(−𝒜*y), block by block."""
    u = p.A.adjoint_apply(y)
    x = BlockVector.zeros(p.primal_layout)
    for i, f in enumerate(p.f_components):
        x.set_block(i, f.conjugate_grad(-u.block(i)))
    return x


def dual_value(p: CompositeProblem, y: BlockVector) -> float:
    """D(y) = Σᵢ fᵢ*(−(𝒜*y)ᵢ) + Σⱼ gⱼ*(yⱼ), `math.inf` off the domain."""
    u = p.A.adjoint_apply(y)
    total = 0.0
    for j, g in enumerate(p.g_components):
        total += g.conjugate(y.block(j))
        if total == math.inf:
            return math.inf
    for i, f in enumerate(p.f_components):
        total += f.conjugate(-u.block(i))
    return total


def primal_value(p: CompositeProblem, x: BlockVector) -> float:
    """F(x) = Σᵢ fᵢ(xᵢ) + Σⱼ gⱼ((𝒜x)ⱼ), `math.inf` when infeasible."""
    z = p.A.apply(x)
    total = sum(f.value(x.block(i)) for i, f in enumerate(p.f_components))
    total += sum(g.value(z.block(j)) for j, g in enumerate(p.g_components))
    return float(total)


def duality_gap(
    p: CompositeProblem,
    x: BlockVector,
    y: BlockVector,
    *,
    exact: bool = False,
    feas_tol: float = GAP_FEASIBILITY_TOL,
) -> float:
    """
    F(x) + D(y) as an optimality certificate.

    Each indicator gⱼ contributes dist(𝒜ⱼx, Ωⱼ)·‖yⱼ‖ while 𝒜ⱼx lies within
    `feas_tol`·max(1, ‖𝒜ⱼx‖) of Ωⱼ, and `math.inf` beyond that. The result is
    nonnegative by Fenchel–Young and equals the exact gap on feasible x. A
    finite value bounds D(y) − D* up to ‖y_star‖ times the tolerance, so it
    certifies the dual iterate as well as x. `exact=True` returns the literal
    F(x) + D(y).
    """
    d = dual_value(p, y)
    if d == math.inf:
        return math.inf
    z = p.A.apply(x)
    total = d + sum(f.value(x.block(i)) for i, f in enumerate(p.f_components))
    for j, g in enumerate(p.g_components):
        zj = z.block(j)
        match g:
            case IndicatorSet(s=s) if not exact:
                dist = s.distance(zj)
                if dist > feas_tol * max(1.0, float(np.linalg.norm(zj))):
                    return math.inf
                total += dist * float(np.linalg.norm(y.block(j)))
            case _:
                total += g.value(zj)
    return float(total)


def component_dual_gradient(p: CompositeProblem, i: int, y: BlockVector) -> BlockVector:
    """∇hᵢ(y) for hᵢ(y) = fᵢ*(−(𝒜*y)ᵢ): block j is −𝒜ⱼᵢ∇fᵢ*(−(𝒜*y)ᵢ)."""
    xi = p.f_components[i].conjugate_grad(-p.A.adjoint_block(i, y))
    grad = BlockVector.zeros(p.dual_layout)
    for j, matrix in p.A.column(i):
        grad.set_block(j, -(matrix @ xi))
    return grad


# --------------------------------------------------------------------------
# Theoretical constants
# --------------------------------------------------------------------------


def lipschitz_constants(p: CompositeProblem) -> tuple[float, ...]:
    """ℓᵢ = ((Σⱼ‖𝒜ⱼᵢ‖²/μᵢ²)·|J|·maxⱼ‖𝒜ⱼᵢ‖²)^½ for every i."""
    n_dual = p.num_dual
    ells = []
    for i, f in enumerate(p.f_components):
        if not f.mu > 0:
            raise UnsupportedComponentError(f"f[{i}] has mu = {f.mu}.")
        sq = [p.A.norm(j, i) ** 2 for j in p.A.columns.get(i, ())]
        total = sum(sq) / f.mu**2
        ells.append(math.sqrt(total * n_dual * max(sq, default=0.0)))
    return tuple(ells)


def solve_z0(tau: int, beta: float, gamma: float) -> float:
    """
    Positive root of ((1+z)/(1+βz))^τ = 1 + γ/(1+z).

    The left side starts at 1 and increases, the right side starts above 1 and
    decreases, so the root is unique. For τ = 0 the left side is identically 1
    and `math.inf` is returned.
    """
    if tau < 0 or not 0.0 <= beta < 1.0 or not gamma > 0:
        raise ValueError(f"Invalid z0 inputs: tau={tau}, beta={beta}, gamma={gamma}.")
    if tau == 0:
        return math.inf

    def residual(z: float) -> float:
        return ((1.0 + z) / (1.0 + beta * z)) ** tau - 1.0 - gamma / (1.0 + z)

    lo, hi = 1e-12, 1.0
    doublings = 0
    while residual(hi) <= 0.0:
        lo, hi = hi, 2.0 * hi
        doublings += 1
        if doublings > 1000:
            raise ValueError("No root found for the step-size equation.")
    for _ in range(Z0_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if residual(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-16 * hi:
            break
    root = 0.5 * (lo + hi)
    logger.debug("z0 = %.17g, residual %.3g", root, residual(root))
    return root


def contraction_rate(alpha: float, sigma: float, num_dual: int) -> float:
    """1 − ασ/(|J|(1+ασ))."""
    return 1.0 - alpha * sigma / (num_dual * (1.0 + alpha * sigma))


@dataclass(frozen=True, slots=True)
class ProblemConstants:
    """
    Constants of the step-size rule for one problem and delay bound τ.

    The σ-dependent entries (gamma, z0, alpha_max) are None when no growth
    modulus was supplied.
    """

    ell: tuple[float, ...]
    ell_max: float
    eta1: float
    eta2: float
    tau: int
    beta: float
    sigma: float | None = None
    gamma: float | None = None
    z0: float | None = None
    alpha_max: float | None = None

    def rate(self, alpha: float, num_dual: int) -> float:
        if self.sigma is None:
            raise ValueError("A growth modulus sigma is needed for the rate.")
        return contraction_rate(alpha, self.sigma, num_dual)


def _alpha_max(eta1: float, eta2: float, num_dual: int, z0: float, sigma: float) -> float:
    bounds = [eta2 / (8.0 * num_dual), 1.0 / (4.0 * (eta1 + eta2))]
    if z0 != math.inf:
        bounds.append(z0 / sigma)
    return min(bounds)


def compute_constants(
    p: CompositeProblem, tau: int, sigma: float | None = None
) -> ProblemConstants:
    ell = lipschitz_constants(p)
    n_primal, n_dual = p.num_primal, p.num_dual
    ell_max = max(ell)
    eta1 = (n_dual - 1) * sum(ell) / n_dual
    eta2 = ell_max * n_primal * (tau + 1) / 2.0
    beta = 1.0 - 1.0 / n_dual
    if sigma is None:
        return ProblemConstants(ell, ell_max, eta1, eta2, tau, beta)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}.")
    gamma = (eta2 / n_dual) * sigma * (1.0 - beta) / 8.0
    z0 = solve_z0(tau, beta, gamma)
    alpha_max = _alpha_max(eta1, eta2, n_dual, z0, sigma)
    logger.info(
        "Constants: eta1=%.6g eta2=%.6g z0=%.6g alpha_max=%.6g", eta1, eta2, z0, alpha_max
    )
    return ProblemConstants(
        ell, ell_max, eta1, eta2, tau, beta, sigma, gamma, z0, alpha_max
    )


def max_stepsize_and_rate(
    p: CompositeProblem,
    constants: ProblemConstants,
    sigma: float,
    alpha: float | None = None,
) -> tuple[float, float]:
    """
    Return (alpha_max, rate) for the step-size rule.

    alpha_max = min{z0/σ, η₂/(8|J|), 1/(4(η₁+η₂))}, the first term dropped when
    z0 is infinite. The rate is evaluated at `alpha`, or at alpha_max when no
    step is given.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}.")
    z0 = constants.z0 if constants.z0 is not None else math.inf
    alpha_max = _alpha_max(constants.eta1, constants.eta2, p.num_dual, z0, sigma)
    chosen = alpha_max if alpha is None else alpha
    return alpha_max, contraction_rate(chosen, sigma, p.num_dual)


def dual_lipschitz(p: CompositeProblem, operator_norm: float) -> float:
    """L = ‖𝒜‖²/minᵢμᵢ, a Lipschitz constant of the full dual gradient."""
    mu_min = min(f.mu for f in p.f_components)
    return operator_norm**2 / mu_min


# --------------------------------------------------------------------------
# Reference solutions
# --------------------------------------------------------------------------


@dataclass(slots=True, eq=False)
class ReferenceSolution:
    x_star: BlockVector
    y_star: BlockVector
    D_star: float
    provenance: str = ""


def format_reference(ref: ReferenceSolution) -> str:
    lines = []
    if ref.provenance:
        lines.extend(f"# {line}" for line in ref.provenance.splitlines())
    lines.append(f"D_star {ref.D_star:.17g}")
    for name, vec in (("x", ref.x_star), ("y", ref.y_star)):
        for q, block in enumerate(vec.blocks):
            values = " ".join(f"{v:.17g}" for v in block)
            lines.append(f"{name} {q} {values}")
    return "\n".join(lines) + "\n"


def parse_reference(text: str, p: CompositeProblem) -> ReferenceSolution:
    """Read the flat reference format against the problem's layouts."""
    d_star: float | None = None
    blocks: dict[str, dict[int, list[float]]] = {"x": {}, "y": {}}
    provenance: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            provenance.append(line[1:].strip())
            continue
        head, *rest = line.split()
        try:
            if head == "D_star" and len(rest) == 1:
                d_star = float(rest[0])
            elif head in blocks and rest:
                blocks[head][int(rest[0])] = [float(v) for v in rest[1:]]
            else:
                raise ValueError(f"unexpected record {head!r}")
        except ValueError as exc:
            raise ValueError(f"Reference line {lineno}: {exc}") from None
    if d_star is None:
        raise ValueError("Reference is missing its D_star line.")
    vectors = {}
    for name, layout in (("x", p.primal_layout), ("y", p.dual_layout)):
        found = blocks[name]
        if sorted(found) != list(range(layout.num_blocks)):
            raise DimensionError(f"Reference {name} blocks do not match the problem.")
        vectors[name] = BlockVector.from_blocks(
            layout, [found[q] for q in range(layout.num_blocks)]
        )
    return ReferenceSolution(vectors["x"], vectors["y"], d_star, "\n".join(provenance))


def save_reference(ref: ReferenceSolution, path: Path) -> None:
    try:
        path.write_text(format_reference(ref))
    except OSError as exc:
        raise OSError(f"Cannot write reference to {path}: {exc}") from exc


def load_reference(path: Path, p: CompositeProblem) -> ReferenceSolution:
    """Load a reference and check that it certifies optimality."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"Cannot read reference {path}: {exc}") from exc
    ref = parse_reference(text, p)
    gap = duality_gap(p, ref.x_star, ref.y_star)
    if not gap <= REFERENCE_GAP_TOL:
        raise ValueError(f"Reference {path} has duality gap {gap:.3g}.")
    d = dual_value(p, ref.y_star)
    if not abs(d - ref.D_star) <= REFERENCE_GAP_TOL * max(1.0, abs(d)):
        raise ValueError(
            f"Reference {path} records D_star {ref.D_star:.17g}, but D(y_star) = {d:.17g}."
        )
    return ref


def distance_squared(y: BlockVector, ref: ReferenceSolution | None) -> float | None:
    """‖y − y_star‖², the surrogate for d²(y, 𝒴); None without a reference."""
    if ref is None:
        return None
    diff = y.data - ref.y_star.data
    return float(diff @ diff)


def iterate_bound(ys: t.Iterable[BlockVector]) -> float:
    """max‖yᵏ‖ over a sequence, the observed radius of the iterate ball."""
    return max((y.norm() for y in ys), default=0.0)
