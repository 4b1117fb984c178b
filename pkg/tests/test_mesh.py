import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlident.mesh import Mesh1D, MeshError, build_uniform, from_description


def test_eps_equal_to_h_gives_one_side_element():
    m = build_uniform(0.0, 1.0, 2**-4, 16)
    assert m.n_elems == 18
    assert m.h == pytest.approx(1 / 16)
    assert m.constraint_elem_count_per_side == 1
    assert m.widths[0] == pytest.approx(2**-4)
    assert m.widths[-1] == pytest.approx(2**-4)


def test_small_eps_gives_single_narrow_side_element():
    m = build_uniform(0.0, 1.0, 2**-9, 16)
    assert m.n_elems == 18
    assert m.widths[0] == pytest.approx(2**-9)
    assert m.widths[-1] == pytest.approx(2**-9)
    assert np.allclose(m.widths[1:-1], 1 / 16)


def test_eps_below_h_on_wider_domain():
    m = build_uniform(-1.0, 1.0, 2**-4, 16)
    assert np.allclose(m.widths[1:-1], 1 / 8)
    assert m.constraint_elem_count_per_side == 1
    assert m.widths[0] == pytest.approx(1 / 16)


def test_eps_multiple_of_h_is_split():
    m = build_uniform(0.0, 1.0, 0.25, 16)
    assert m.constraint_elem_count_per_side == 4
    assert np.allclose(m.widths, 1 / 16)


def test_zero_eps_has_no_layer():
    m = build_uniform(0.0, 1.0, 0.0, 4)
    assert m.n_elems == 4
    assert m.constraint_elem_count_per_side == 0


@pytest.mark.parametrize("args", [(1.0, 0.0, 0.1, 4), (0.0, 1.0, -0.1, 4), (0.0, 1.0, 0.1, 1)])
def test_invalid_geometry_rejected(args):
    with pytest.raises(MeshError):
        build_uniform(*args)


def test_locate_examples():
    m = build_uniform(0.0, 1.0, 0.0, 4)
    assert m.locate(0.3) == 1
    assert m.locate(0.25) == 0
    assert m.locate(0.0) == 0
    assert m.locate(1.0) == 3
    with pytest.raises(MeshError):
        m.locate(1.5)


def test_node_classification():
    m = build_uniform(0.0, 1.0, 0.25, 8)
    x = m.nodes
    assert np.all((x[m.interior_nodes] > 0) & (x[m.interior_nodes] < 1))
    c = x[m.constraint_nodes]
    assert np.all((c <= 0) | (c >= 1))
    assert m.interior_nodes.size + m.constraint_nodes.size == m.n_nodes


def test_inconsistent_nodes_rejected():
    with pytest.raises(MeshError):
        Mesh1D(0.0, 1.0, 0.1, np.array([-0.1, 0.0, 0.6, 0.5, 1.1]), 3, 1)


def test_description_round_trip():
    m = build_uniform(-1.0, 1.0, 2**-4, 32)
    assert np.array_equal(from_description(m.describe()).nodes, m.nodes)


eps_st = st.sampled_from([0.0, 2**-9, 2**-6, 2**-4, 0.1, 0.25])


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-2, 2), length=st.floats(0.1, 3), eps=eps_st, n=st.integers(2, 200))
def test_mesh_invariants(a, length, eps, n):
    b = a + length
    m = build_uniform(a, b, eps, n)
    assert np.all(np.diff(m.nodes) > 0)
    assert m.widths.sum() == pytest.approx(length + 2 * eps, rel=1e-12)
    assert m.nodes[0] == pytest.approx(a - eps) and m.nodes[-1] == pytest.approx(b + eps)
    k = m.constraint_elem_count_per_side
    assert m.nodes[k] == a and m.nodes[k + n] == pytest.approx(b, abs=1e-14)
    if k > 1 or (k == 1 and abs(m.widths[0] - m.h) < 1e-12 * m.h):
        # aligned layer: every element has the interior width
        assert np.allclose(m.widths, m.h, rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 64), j=st.integers(0, 63), frac=st.floats(0.001, 0.999))
def test_locate_inside_element(n, j, frac):
    m = build_uniform(0.0, 1.0, 0.0, n)
    j = j % n
    x = m.nodes[j] + (m.nodes[j + 1] - m.nodes[j]) * frac
    assert m.locate(x) == j


@pytest.mark.parametrize("n", [4, 16, 64])
def test_refinement_nests_nodes(n):
    coarse = build_uniform(0.0, 1.0, 2**-4, n)
    fine = build_uniform(0.0, 1.0, 2**-4, 2 * n)
    if 2**-4 >= coarse.h:
        assert np.all(np.isin(np.round(coarse.nodes, 14), np.round(fine.nodes, 14)))
