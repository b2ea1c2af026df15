import math
import typing as t

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from .spaces import (
    SVD_MAX_DIM,
    BlockLayout,
    BlockOperator,
    BlockVector,
    DimensionError,
    adjoint_apply,
    apply,
    embed_block,
    operator_block_norm,
    operator_norm,
)


def _operator(seed: int, rows=(2, 1, 3), cols=(1, 2), density=0.7) -> BlockOperator:
    rng = np.random.default_rng(seed)
    entries = {}
    for j, rd in enumerate(rows):
        for i, cd in enumerate(cols):
            if rng.random() < density:
                entries[(j, i)] = rng.standard_normal((rd, cd))
    return BlockOperator(BlockLayout(rows), BlockLayout(cols), entries)


# --------------------------------------------------------------------------
# Layouts and vectors
# --------------------------------------------------------------------------


def test_layout_offsets_and_slices():
    layout = BlockLayout((2, 1, 3))
    assert layout.total_dim == 6
    assert layout.num_blocks == 3
    assert layout.slice(2) == slice(3, 6)


def test_layout_rejects_nonpositive_block():
    with pytest.raises(ValueError):
        _ = BlockLayout((2, 0))


def test_layout_slice_out_of_range():
    with pytest.raises(DimensionError):
        _ = BlockLayout((1, 1)).slice(2)


def test_scalars_layout():
    assert BlockLayout.scalars(4).block_dims == (1, 1, 1, 1)


def test_self_referencing_annotations_resolve():
    assert t.get_type_hints(BlockVector.__add__)["return"] is BlockVector
    assert t.get_type_hints(BlockLayout.scalars)["return"] is BlockLayout
    assert t.get_type_hints(BlockOperator.identity_grid)["return"] is BlockOperator


def test_vector_blocks_are_views():
    v = BlockVector.zeros(BlockLayout((2, 1)))
    v.block(0)[:] = [1.0, 2.0]
    assert v.data.tolist() == [1.0, 2.0, 0.0]


def test_vector_from_blocks_rejects_wrong_shape():
    with pytest.raises(DimensionError):
        _ = BlockVector.from_blocks(BlockLayout((2, 1)), [[1.0], [2.0]])


def test_vector_rejects_wrong_flat_length():
    with pytest.raises(DimensionError):
        _ = BlockVector(BlockLayout((2,)), np.zeros(3))


def test_vector_arithmetic_and_inner():
    layout = BlockLayout((1, 2))
    a = BlockVector.from_blocks(layout, [[1.0], [2.0, 3.0]])
    b = BlockVector.from_blocks(layout, [[1.0], [0.0, -1.0]])
    assert (a + b).data.tolist() == [2.0, 2.0, 2.0]
    assert (a - b).data.tolist() == [0.0, 2.0, 4.0]
    assert (2.0 * a).data.tolist() == [2.0, 4.0, 6.0]
    assert (-a).data.tolist() == [-1.0, -2.0, -3.0]
    assert a.inner(b) == -2.0
    assert math.isclose(a.norm(), math.sqrt(14.0))


def test_vector_layout_mismatch():
    a = BlockVector.zeros(BlockLayout((1, 2)))
    b = BlockVector.zeros(BlockLayout((2, 1)))
    with pytest.raises(DimensionError):
        _ = a + b


def test_embed_block():
    v = embed_block(BlockLayout((1, 2)), 1, [4.0, 5.0])
    assert v.data.tolist() == [0.0, 4.0, 5.0]
    with pytest.raises(DimensionError):
        _ = embed_block(BlockLayout((1, 2)), 1, [4.0])


# --------------------------------------------------------------------------
# Block operators
# --------------------------------------------------------------------------


def test_operator_rejects_misshapen_entry():
    with pytest.raises(DimensionError):
        _ = BlockOperator(BlockLayout((2,)), BlockLayout((1,)), {(0, 0): np.ones((1, 1))})


def test_operator_rejects_entry_outside_grid():
    with pytest.raises(DimensionError):
        _ = BlockOperator(BlockLayout((1,)), BlockLayout((1,)), {(1, 0): np.ones((1, 1))})


def test_apply_matches_dense():
    a = _operator(0)
    rng = np.random.default_rng(1)
    x = BlockVector(a.col_layout, rng.standard_normal(a.col_layout.total_dim))
    assert np.allclose(apply(a, x).data, a.to_dense() @ x.data, atol=1e-12)


def test_adjoint_block_matches_full_adjoint():
    a = _operator(2)
    rng = np.random.default_rng(3)
    y = BlockVector(a.row_layout, rng.standard_normal(a.row_layout.total_dim))
    full = adjoint_apply(a, y)
    for i in range(a.col_layout.num_blocks):
        assert np.allclose(a.adjoint_block(i, y), full.block(i), atol=1e-12)


def test_rows_and_columns_index_stored_entries():
    a = BlockOperator(
        BlockLayout((1, 1)),
        BlockLayout((1, 1)),
        {(0, 1): np.ones((1, 1)), (1, 0): 2 * np.ones((1, 1))},
    )
    assert [i for i, _ in a.row(0)] == [1]
    assert [j for j, _ in a.column(0)] == [1]
    assert list(a.row(5)) == []
    assert a.norm(0, 0) == 0.0
    assert a.norm(1, 0) == pytest.approx(2.0)


def test_identity_grid():
    a = BlockOperator.identity_grid(BlockLayout((2, 2, 2)), BlockLayout((2,)))
    x = BlockVector.from_blocks(a.col_layout, [[1.0, -1.0]])
    assert a.apply(x).data.tolist() == [1.0, -1.0] * 3
    assert operator_norm(a) == pytest.approx(math.sqrt(3.0), rel=1e-9)


def test_identity_grid_needs_one_column():
    with pytest.raises(DimensionError):
        _ = BlockOperator.identity_grid(BlockLayout((1,)), BlockLayout((1, 1)))


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_adjoint_identity(seed):
    a = _operator(seed)
    rng = np.random.default_rng(seed)
    x = BlockVector(a.col_layout, rng.standard_normal(a.col_layout.total_dim))
    y = BlockVector(a.row_layout, rng.standard_normal(a.row_layout.total_dim))
    lhs, rhs = a.apply(x).inner(y), x.inner(a.adjoint_apply(y))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


# --------------------------------------------------------------------------
# Norms
# --------------------------------------------------------------------------


def test_block_norm_matches_svd():
    rng = np.random.default_rng(4)
    for _ in range(20):
        m = rng.standard_normal((3, 4))
        assert operator_block_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-8)


def test_block_norm_start_orthogonal_to_top_direction():
    # All-ones is orthogonal to the dominant right singular vector.
    m = np.diag([1.0, 3.0]) @ np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    assert operator_block_norm(m) == pytest.approx(3.0, rel=1e-9)


def test_block_norm_of_large_block_uses_power_iteration():
    rng = np.random.default_rng(5)
    u, _ = np.linalg.qr(rng.standard_normal((90, 80)))
    v, _ = np.linalg.qr(rng.standard_normal((80, 80)))
    singular = np.concatenate([[5.0, 2.0], rng.uniform(0.0, 1.0, 78)])
    m = (u * singular) @ v.T
    assert min(m.shape) > SVD_MAX_DIM
    assert operator_block_norm(m) == pytest.approx(5.0, rel=1e-8)


def test_block_norm_of_zero_matrix():
    assert operator_block_norm(np.zeros((2, 2))) == 0.0


def test_operator_norm_matches_dense_and_bound():
    a = _operator(5, density=1.0)
    dense = np.linalg.norm(a.to_dense(), 2)
    assert operator_norm(a) == pytest.approx(dense, rel=1e-6)
    assert a.norm_bound() >= dense - 1e-9


def test_operator_norm_of_empty_operator():
    assert operator_norm(BlockOperator(BlockLayout((1,)), BlockLayout((1,)), {})) == 0.0
