from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import connected_components

from conftest import mesh_of
from helmholtz_dd.partition import (PouKind, build_decomposition, build_partition_of_unity, dual_graph,
                                    extend_overlap, graph_bisection_partition, partition_of_unity_sum,
                                    uniform_partition)


def _edge_cut(mesh, owner):
    ee = mesh.edge_elements
    inner = ee[ee[:, 1] >= 0]
    return int((owner[inner[:, 0]] != owner[inner[:, 1]]).sum())


def _connected(mesh, elements):
    g = dual_graph(mesh)[elements][:, elements]
    return connected_components(g, directed=False)[0] == 1


def _brute_force_extension(mesh, owned, rounds):
    elems = set(int(e) for e in owned)
    for _ in range(rounds):
        nodes = {int(v) for e in elems for v in mesh.triangles[e]}
        elems |= {e for e in range(mesh.n_elements) if nodes & set(int(v) for v in mesh.triangles[e])}
    return np.array(sorted(elems))


# -- uniform ------------------------------------------------------------------

def test_uniform_block_layout():
    mesh = mesh_of(8)
    dec = uniform_partition(mesh, 2, 2)
    assert dec.n_subdomains == 4
    assert np.all(np.bincount(dec.owner) == mesh.n_elements // 4)
    c = mesh.centroids
    for s in range(4):
        xs = c[dec.owner == s]
        i, j = s % 2, s // 2
        assert np.all((xs[:, 0] > i / 2) & (xs[:, 0] < (i + 1) / 2))
        assert np.all((xs[:, 1] > j / 2) & (xs[:, 1] < (j + 1) / 2))


def test_uniform_rejects_non_dividing_grid():
    with pytest.raises(ValueError):
        uniform_partition(mesh_of(8), 3, 3)
    with pytest.raises(ValueError):
        uniform_partition(mesh_of(8), 10, 1)


def test_uniform_uneven_blocks_differ_by_one_cell():
    mesh = mesh_of(10)
    dec = uniform_partition(mesh, 3, 3, uneven=True)
    cells = np.bincount(dec.owner) // 2
    widths = sorted(set(cells.tolist()))
    assert widths[-1] - widths[0] <= 2 * 3 + 1  # (w+1)^2 - w^2 with w = 3
    assert cells.sum() == 100


# -- graph --------------------------------------------------------------------

def test_graph_partition_balance_and_connectivity():
    mesh = mesh_of(20)
    dec = graph_bisection_partition(mesh, 7)
    sizes = np.bincount(dec.owner, minlength=7)
    assert sizes.size == 7 and sizes.sum() == mesh.n_elements
    assert np.abs(sizes / sizes.mean() - 1).max() <= 0.03
    for s in range(7):
        assert _connected(mesh, np.flatnonzero(dec.owner == s))


def test_graph_partition_cut_comparable_to_uniform():
    mesh = mesh_of(16)
    assert _edge_cut(mesh, graph_bisection_partition(mesh, 4).owner) <= 1.2 * _edge_cut(mesh, uniform_partition(mesh, 2, 2).owner)


def test_graph_partition_deterministic():
    mesh = mesh_of(12)
    a = graph_bisection_partition(mesh, 5).owner
    b = graph_bisection_partition(mesh, 5).owner
    assert np.array_equal(a, b)


def test_graph_partition_errors():
    with pytest.raises(ValueError):
        graph_bisection_partition(mesh_of(2), 0)
    with pytest.raises(ValueError):
        graph_bisection_partition(mesh_of(2), 9)


# -- overlap ------------------------------------------------------------------

@pytest.mark.parametrize("width", [2, 4])
def test_overlap_matches_brute_force_enumeration(width):
    mesh = mesh_of(8)
    base = uniform_partition(mesh, 2, 2)
    dec = extend_overlap(base, width)
    for s, sub in enumerate(dec.subdomains):
        assert np.array_equal(sub.elements, _brute_force_extension(mesh, base.subdomains[s].owned, width // 2))
        nodes = np.unique(mesh.triangles[sub.elements])
        dofs = mesh.dof_map[nodes]
        assert np.array_equal(sub.dofs, np.sort(dofs[dofs >= 0]))


def test_overlap_monotone_in_width():
    mesh = mesh_of(12)
    base = uniform_partition(mesh, 3, 3)
    prev = None
    for width in (0, 2, 4, 6):
        dec = extend_overlap(base, width)
        if prev is not None:
            for a, b in zip(prev.subdomains, dec.subdomains):
                assert np.isin(a.elements, b.elements).all()
                assert a.size < b.size
        prev = dec


def test_overlap_rejects_odd_width():
    with pytest.raises(ValueError):
        extend_overlap(uniform_partition(mesh_of(8), 2, 2), 3)


def test_interface_and_interior_split_dofs():
    dec = build_decomposition(mesh_of(12), "uniform", grid=(2, 2))
    for sub in dec.subdomains:
        both = np.concatenate([sub.interface, sub.interior])
        assert np.array_equal(np.sort(both), np.arange(sub.size))
        assert sub.interface.size > 0
        # interface dofs are exactly those in the outermost layer
        assert np.all(sub.layer[sub.interface] == 1)
        assert np.all(sub.layer[sub.interior] == 0)


def test_overlap_positions_are_shared_dofs():
    dec = build_decomposition(mesh_of(8), "uniform", grid=(2, 2))
    count = np.zeros(dec.mesh.n_dofs, int)
    for sub in dec.subdomains:
        count[sub.dofs] += 1
    for sub in dec.subdomains:
        assert np.array_equal(sub.overlap, np.flatnonzero(count[sub.dofs] > 1))


# -- restriction and partition of unity ---------------------------------------

def test_restriction_orthonormal_rows():
    dec = build_decomposition(mesh_of(8), "uniform", grid=(2, 2))
    for s in range(4):
        r = dec.restriction(s)
        assert np.array_equal((r @ r.T).toarray(), np.eye(r.shape[0]))


@pytest.mark.parametrize("kind", list(PouKind))
@pytest.mark.parametrize("grid", [(2, 2), (3, 1), (2, 3)])
@pytest.mark.parametrize("width", [2, 4])
def test_partition_of_unity_exact(kind, grid, width):
    dec = build_decomposition(mesh_of(12), "uniform", grid=grid, overlap=width, pou=kind)
    acc = partition_of_unity_sum(dec)
    assert np.abs(acc - 1).max() <= 1e-15
    for sub in dec.subdomains:
        assert np.all((sub.pou >= 0) & (sub.pou <= 1))


def test_partition_of_unity_fraction_route():
    dec = build_decomposition(mesh_of(8), "uniform", grid=(2, 2), pou="multiplicity")
    assert all(v == Fraction(1) for v in partition_of_unity_sum(dec, exact=True))


@settings(max_examples=15, deadline=None)
@given(m=st.sampled_from([6, 8, 10]), parts=st.integers(2, 6), width=st.sampled_from([2, 4]),
       kind=st.sampled_from(list(PouKind)))
def test_partition_of_unity_property_graph(m, parts, width, kind):
    dec = build_decomposition(mesh_of(m), "graph", parts, overlap=width, pou=kind)
    assert np.abs(partition_of_unity_sum(dec) - 1).max() <= 1e-15


def test_smooth_pou_vanishes_on_interface():
    dec = build_decomposition(mesh_of(12), "uniform", grid=(3, 3), pou="smooth")
    for sub in dec.subdomains:
        assert np.all(sub.pou[sub.interface] == 0)


def test_ownership_pou_is_boolean():
    dec = build_decomposition(mesh_of(12), "uniform", grid=(2, 2), pou="ownership")
    for sub in dec.subdomains:
        assert set(np.unique(sub.pou)) <= {0.0, 1.0}


def test_pou_rebuild_keeps_index_data():
    dec = build_decomposition(mesh_of(8), "uniform", grid=(2, 2), pou="smooth")
    other = build_partition_of_unity(dec, "multiplicity")
    assert other.pou_kind is PouKind.MULTIPLICITY
    for a, b in zip(dec.subdomains, other.subdomains):
        assert np.array_equal(a.dofs, b.dofs)


def test_build_decomposition_square_parts():
    dec = build_decomposition(mesh_of(12), "uniform", 9)
    assert dec.n_subdomains == 9
    with pytest.raises(ValueError):
        build_decomposition(mesh_of(12), "uniform", 6)
    with pytest.raises(ValueError):
        build_decomposition(mesh_of(12), "metis", 4)


def test_dump_lists_owner_per_element(tmp_path):
    dec = build_decomposition(mesh_of(4), "uniform", grid=(2, 2))
    dec.dump(tmp_path / "p.txt")
    lines = (tmp_path / "p.txt").read_text().splitlines()
    assert len(lines) == dec.mesh.n_elements
    assert lines[0] == f"0 {dec.owner[0]}"
