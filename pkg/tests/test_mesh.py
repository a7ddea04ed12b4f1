import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helmholtz_dd.mesh import (BoundaryTag, InvalidResolutionError, NodeKind, build_unit_square_mesh,
                               resolution_for_wavenumber, wavenumber_for_resolution)


def test_counts_m4():
    mesh = build_unit_square_mesh(4)
    assert mesh.n_nodes == 25
    assert mesh.n_elements == 32
    tags = mesh.boundary_edges[:, 2]
    assert np.count_nonzero(tags == BoundaryTag.DIRICHLET) == 8
    assert np.count_nonzero(tags == BoundaryTag.ROBIN) == 8


def test_m2_area():
    mesh = build_unit_square_mesh(2)
    assert (mesh.n_nodes, mesh.n_elements) == (9, 8)
    assert np.isclose(mesh.signed_areas.sum(), 1.0, atol=1e-14)


@pytest.mark.parametrize("m", [0, 1, -3, 2.5])
def test_invalid_resolution(m):
    with pytest.raises(InvalidResolutionError):
        build_unit_square_mesh(m)


def test_valence_m100_brute_force():
    m = 100
    mesh = build_unit_square_mesh(m)
    assert mesh.n_nodes == 10201
    valence = np.zeros(mesh.n_nodes, dtype=int)
    for tri in mesh.triangles:
        for v in tri:
            valence[v] += 1
    x, y = mesh.nodes.T
    interior = (x > 0) & (x < 1) & (y > 0) & (y < 1)
    assert set(np.unique(valence[interior])) <= {4, 6, 8}
    # checkerboard: interior nodes alternate between valence 4 and 8
    i = np.rint(x * m).astype(int)
    j = np.rint(y * m).astype(int)
    even = (i + j) % 2 == 0
    assert np.all(valence[interior & even] == 8)
    assert np.all(valence[interior & ~even] == 4)


@pytest.mark.parametrize("m", [2, 3, 7, 16])
def test_positive_areas(m):
    mesh = build_unit_square_mesh(m)
    assert np.allclose(mesh.signed_areas, 0.5 / m**2, rtol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 60))
def test_area_sum(m):
    mesh = build_unit_square_mesh(m)
    assert abs(np.abs(mesh.signed_areas).sum() - 1.0) <= 1e-12
    assert mesh.n_nodes == (m + 1) ** 2 and mesh.n_elements == 2 * m * m


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 20))
def test_edge_incidence_by_hashing(m):
    mesh = build_unit_square_mesh(m)
    count = {}
    for tri in mesh.triangles.tolist():
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    boundary = {(min(a, b), max(a, b)) for a, b, _ in mesh.boundary_edges.tolist()}
    for key, c in count.items():
        assert c == (1 if key in boundary else 2)
    assert len(boundary) == 4 * m


def test_boundary_edge_positions():
    mesh = build_unit_square_mesh(6)
    for a, b, tag in mesh.boundary_edges:
        p, q = mesh.nodes[a], mesh.nodes[b]
        if tag == BoundaryTag.DIRICHLET:
            assert p[0] == q[0] and p[0] in (0.0, 1.0)
        else:
            assert p[1] == q[1] and p[1] in (0.0, 1.0)


def test_corners_are_dirichlet():
    m = 5
    mesh = build_unit_square_mesh(m)
    for c in (0, m, m * (m + 1), (m + 1) ** 2 - 1):
        assert mesh.node_kind[c] == NodeKind.DIRICHLET
    assert mesh.node_kind[2] == NodeKind.ROBIN


def test_diagonal_convention():
    mesh = build_unit_square_mesh(4)
    # cell (0, 0) is even: its diagonal joins nodes 0 and 6
    first = {frozenset(t) for t in mesh.triangles[:2].tolist()}
    assert all({0, 6} <= t for t in first)
    # cell (1, 0) is odd: diagonal joins nodes 2 and 6
    second = mesh.triangles[2:4].tolist()
    assert all({2, 6} <= set(t) for t in second)


def test_centre_node_exists_for_even_m():
    mesh = build_unit_square_mesh(10)
    assert np.any(np.all(mesh.nodes == 0.5, axis=1))


def test_deterministic():
    a, b = build_unit_square_mesh(9), build_unit_square_mesh(9)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.triangles, b.triangles)


@pytest.mark.parametrize("m, k", [(100, 18.5), (800, 73.8), (3200, 186.0)])
def test_wavenumber_rule(m, k):
    assert round(wavenumber_for_resolution(m), 1) == k


def test_wavenumber_rule_values():
    assert wavenumber_for_resolution(100) == pytest.approx(18.453, abs=1e-3)
    assert wavenumber_for_resolution(800) == pytest.approx(73.811, abs=1e-3)
    assert wavenumber_for_resolution(3200) == pytest.approx(185.992, abs=1e-3)
    for m in (100, 200, 400, 800):
        k = wavenumber_for_resolution(m)
        assert k**3 / m**2 == pytest.approx(2 * np.pi / 10)
        assert resolution_for_wavenumber(k) == m


def test_dump(tmp_path):
    mesh = build_unit_square_mesh(2)
    mesh.dump(tmp_path / "mesh.txt")
    lines = (tmp_path / "mesh.txt").read_text().splitlines()
    assert sum(l.startswith("v ") for l in lines) == 9
    assert sum(l.startswith("t ") for l in lines) == 8
    assert sum(l.startswith("e ") for l in lines) == 8
    assert "e 0 1 ROBIN" in lines
