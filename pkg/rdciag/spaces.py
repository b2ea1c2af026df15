import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

type Array = np.ndarray
type EntryKey = tuple[int, int]
"""A (j, i) key into the grid of a BlockOperator: row block j, column block i."""

POWER_MAX_ITER = 200
POWER_TOL = 1e-12
POWER_SEED = 0
SVD_MAX_DIM = 64


class DimensionError(ValueError):
    """Raised when blocks, layouts, or matrices do not line up."""


# --------------------------------------------------------------------------
# Layouts and block vectors
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class BlockLayout:
    block_dims: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        """Ensure all preconditions are met."""
        dims = tuple(int(d) for d in self.block_dims)
        if any(d < 1 for d in dims):
            raise ValueError(f"Block dimensions must be positive, got {dims}.")
        object.__setattr__(self, "block_dims", dims)
        offsets = [0]
        for d in dims:
            offsets.append(offsets[-1] + d)
        object.__setattr__(self, "offsets", tuple(offsets))

    @classmethod
    def scalars(cls, count: int) -> "BlockLayout":
        return cls((1,) * count)

    @property
    def total_dim(self) -> int:
        return self.offsets[-1]

    @property
    def num_blocks(self) -> int:
        return len(self.block_dims)

    def slice(self, q: int) -> slice:
        """Return the slice of the flat representation holding block q."""
        if not 0 <= q < len(self.block_dims):
            raise DimensionError(
                f"Block index {q} out of range for {len(self.block_dims)} blocks."
            )
        return slice(self.offsets[q], self.offsets[q + 1])


@dataclass(slots=True, eq=False)
class BlockVector:
    """
    An element of a product of Euclidean blocks.

    The blocks are stored back to back in one flat float64 array; `block(q)`
    returns a view into it. Inner products and norms are the flat ones, which
    equal the sums of the per-block ones.
    """

    layout: BlockLayout
    data: Array

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.layout.total_dim,):
            raise DimensionError(
                f"Flat data of shape {self.data.shape} does not match "
                f"layout of total dimension {self.layout.total_dim}."
            )

    @classmethod
    def zeros(cls, layout: BlockLayout) -> "BlockVector":
        return cls(layout, np.zeros(layout.total_dim))

    @classmethod
    def from_blocks(
        cls, layout: BlockLayout, blocks: t.Sequence[t.Any]
    ) -> "BlockVector":
        if len(blocks) != layout.num_blocks:
            raise DimensionError(
                f"Expected {layout.num_blocks} blocks, got {len(blocks)}."
            )
        parts = [np.atleast_1d(np.asarray(b, dtype=np.float64)) for b in blocks]
        for q, (part, dim) in enumerate(zip(parts, layout.block_dims)):
            if part.shape != (dim,):
                raise DimensionError(
                    f"Block {q} has shape {part.shape}, expected ({dim},)."
                )
        return cls(layout, np.concatenate(parts) if parts else np.zeros(0))

    @property
    def blocks(self) -> list[Array]:
        return [self.data[self.layout.slice(q)] for q in range(self.layout.num_blocks)]

    def block(self, q: int) -> Array:
        return self.data[self.layout.slice(q)]

    def set_block(self, q: int, value: Array) -> None:
        self.data[self.layout.slice(q)] = value

    def copy(self) -> "BlockVector":
        return BlockVector(self.layout, self.data.copy())

    def inner(self, other: "BlockVector") -> float:
        _require_same_layout(self.layout, other.layout)
        return float(self.data @ other.data)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __add__(self, other: "BlockVector") -> "BlockVector":
        _require_same_layout(self.layout, other.layout)
        return BlockVector(self.layout, self.data + other.data)

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        _require_same_layout(self.layout, other.layout)
        return BlockVector(self.layout, self.data - other.data)

    def __mul__(self, scalar: float) -> "BlockVector":
        return BlockVector(self.layout, self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "BlockVector":
        return BlockVector(self.layout, -self.data)


def _require_same_layout(expected: BlockLayout, actual: BlockLayout) -> None:
    if expected != actual:
        raise DimensionError(
            f"Layout mismatch: expected blocks {expected.block_dims}, "
            f"got {actual.block_dims}."
        )


def embed_block(layout: BlockLayout, q: int, v: t.Any) -> BlockVector:
    """Return the block vector holding v at block q and zeros elsewhere."""
    sl = layout.slice(q)
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if v.shape != (sl.stop - sl.start,):
        raise DimensionError(
            f"Vector of shape {v.shape} cannot fill block {q} of "
            f"dimension {sl.stop - sl.start}."
        )
    result = BlockVector.zeros(layout)
    result.data[sl] = v
    return result


# --------------------------------------------------------------------------
# Spectral norms
# --------------------------------------------------------------------------


def _power_iteration(
    gram: t.Callable[[Array], Array],
    dim: int,
    *,
    max_iter: int,
    tol: float,
    start: Array | None = None,
) -> float:
    """
    Largest eigenvalue of a positive semidefinite map given by its action.

    Starts from `start`, or the normalized all-ones vector, so the result is
    deterministic.
    """
    x = np.full(dim, 1.0) if start is None else np.asarray(start, dtype=np.float64)
    x = x / np.linalg.norm(x)
    estimate = 0.0
    for iteration in range(max_iter):
        y = gram(x)
        new_estimate = float(x @ y)
        y_norm = float(np.linalg.norm(y))
        if y_norm == 0.0:
            return 0.0
        x = y / y_norm
        if abs(new_estimate - estimate) <= tol * max(new_estimate, 1e-300):
            logger.debug("Power iteration settled after %d steps.", iteration + 1)
            return new_estimate
        estimate = new_estimate
    # Rayleigh quotient at the final vector is the tightest lower estimate.
    return float(x @ gram(x))


def operator_block_norm(m: t.Any) -> float:
    """
    Spectral norm of a dense matrix.

    Blocks whose smaller side is at most `SVD_MAX_DIM` use an exact SVD.
    Larger ones use power iteration on MᵀM from a seeded random start, which
    is orthogonal to the top singular direction with probability zero.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.size == 0:
        raise DimensionError("Cannot take the norm of an empty matrix.")
    if not np.any(m):
        return 0.0
    if min(m.shape) <= SVD_MAX_DIM:
        return float(np.linalg.norm(m, 2))
    start = np.random.default_rng(POWER_SEED).standard_normal(m.shape[1])
    eig = _power_iteration(
        lambda x: m.T @ (m @ x), m.shape[1], max_iter=POWER_MAX_ITER, tol=POWER_TOL, start=start
    )
    return float(np.sqrt(max(eig, 0.0)))


# --------------------------------------------------------------------------
# Block operators
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class BlockOperator:
    """
    A sparse grid of dense maps 𝒜ⱼᵢ from column block i to row block j.

    Absent (j, i) entries are zero maps. Spectral norms of the stored entries
    are computed once at construction.
    """

    row_layout: BlockLayout
    col_layout: BlockLayout
    entries: t.Mapping[EntryKey, Array]
    norms: dict[EntryKey, float] = field(init=False, repr=False)
    rows: dict[int, tuple[int, ...]] = field(init=False, repr=False)
    columns: dict[int, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        """Ensure all preconditions are met."""
        entries: dict[EntryKey, Array] = {}
        rows: dict[int, list[int]] = {}
        columns: dict[int, list[int]] = {}
        for (j, i), matrix in sorted(self.entries.items()):
            if not (0 <= j < self.row_layout.num_blocks) or not (
                0 <= i < self.col_layout.num_blocks
            ):
                raise DimensionError(f"Entry ({j}, {i}) lies outside the grid.")
            shape = (self.row_layout.block_dims[j], self.col_layout.block_dims[i])
            matrix = np.array(np.atleast_2d(matrix), dtype=np.float64)
            if matrix.shape != shape:
                raise DimensionError(
                    f"Entry ({j}, {i}) has shape {matrix.shape}, expected {shape}."
                )
            matrix.setflags(write=False)
            entries[(j, i)] = matrix
            rows.setdefault(j, []).append(i)
            columns.setdefault(i, []).append(j)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(
            self, "norms", {key: operator_block_norm(m) for key, m in entries.items()}
        )
        object.__setattr__(self, "rows", {j: tuple(v) for j, v in rows.items()})
        object.__setattr__(self, "columns", {i: tuple(v) for i, v in columns.items()})

    @classmethod
    def identity_grid(
        cls, row_layout: BlockLayout, col_layout: BlockLayout
    ) -> "BlockOperator":
        """Every row block is an identity copy of the single column block."""
        if col_layout.num_blocks != 1:
            raise DimensionError("An identity grid needs exactly one column block.")
        n = col_layout.block_dims[0]
        if any(d != n for d in row_layout.block_dims):
            raise DimensionError("Every row block must match the column block.")
        eye = np.eye(n)
        return cls(row_layout, col_layout, {(j, 0): eye for j in range(row_layout.num_blocks)})

    def norm(self, j: int, i: int) -> float:
        """Cached ‖𝒜ⱼᵢ‖, zero for absent entries."""
        return self.norms.get((j, i), 0.0)

    def column(self, i: int) -> t.Iterator[tuple[int, Array]]:
        """Yield (j, 𝒜ⱼᵢ) for the stored entries of column block i."""
        for j in self.columns.get(i, ()):
            yield j, self.entries[(j, i)]

    def row(self, j: int) -> t.Iterator[tuple[int, Array]]:
        """Yield (i, 𝒜ⱼᵢ) for the stored entries of row block j."""
        for i in self.rows.get(j, ()):
            yield i, self.entries[(j, i)]

    def apply(self, x: BlockVector) -> BlockVector:
        """𝒜x, whose block j is Σᵢ 𝒜ⱼᵢxᵢ."""
        _require_same_layout(self.col_layout, x.layout)
        result = BlockVector.zeros(self.row_layout)
        for (j, i), matrix in self.entries.items():
            result.data[self.row_layout.slice(j)] += matrix @ x.block(i)
        return result

    def adjoint_apply(self, y: BlockVector) -> BlockVector:
        """𝒜*y, whose block i is Σⱼ 𝒜ⱼᵢᵀyⱼ."""
        _require_same_layout(self.row_layout, y.layout)
        result = BlockVector.zeros(self.col_layout)
        for (j, i), matrix in self.entries.items():
            result.data[self.col_layout.slice(i)] += matrix.T @ y.block(j)
        return result

    def adjoint_block(self, i: int, y: BlockVector) -> Array:
        """Block i of 𝒜*y, touching only the stored entries of column i."""
        out = np.zeros(self.col_layout.block_dims[i])
        for j, matrix in self.column(i):
            out += matrix.T @ y.block(j)
        return out

    def to_dense(self) -> Array:
        """Assemble the full matrix of 𝒜."""
        dense = np.zeros((self.row_layout.total_dim, self.col_layout.total_dim))
        for (j, i), matrix in self.entries.items():
            dense[self.row_layout.slice(j), self.col_layout.slice(i)] = matrix
        return dense

    def norm_bound(self) -> float:
        """(Σⱼ(Σᵢ‖𝒜ⱼᵢ‖)²)^½, an upper bound on ‖𝒜‖ from the cached norms."""
        row_sums = np.zeros(self.row_layout.num_blocks)
        for (j, _), value in self.norms.items():
            row_sums[j] += value
        return float(np.sqrt(np.sum(row_sums**2)))


def apply(a: BlockOperator, x: BlockVector) -> BlockVector:
    return a.apply(x)


def adjoint_apply(a: BlockOperator, y: BlockVector) -> BlockVector:
    return a.adjoint_apply(y)


def operator_norm(a: BlockOperator) -> float:
    """‖𝒜‖ by matrix-free power iteration on 𝒜*𝒜."""
    if not a.entries:
        return 0.0
    layout = a.col_layout

    def gram(x: Array) -> Array:
        return a.adjoint_apply(a.apply(BlockVector(layout, x))).data

    eig = _power_iteration(gram, layout.total_dim, max_iter=POWER_MAX_ITER, tol=POWER_TOL)
    value = float(np.sqrt(max(eig, 0.0)))
    logger.info("Operator norm estimate %.6g.", value)
    return value
