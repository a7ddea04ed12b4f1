"""Structured triangulation of the unit square for the wave-guide problem.

Nodes are numbered lexicographically, ``index = j*(m+1) + i`` for the node at
``(i*h, j*h)``.  Cell ``(i, j)`` is split along the diagonal bottom-left to
top-right when ``i + j`` is even and along top-left to bottom-right otherwise,
which produces the crossing pattern of the classic "alternating diagonals"
mesh.  The sides ``x = 0`` and ``x = 1`` carry Dirichlet conditions and the
sides ``y = 0`` and ``y = 1`` carry Robin conditions; corners are Dirichlet.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np


class NodeKind(IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    ROBIN = 2


class BoundaryTag(IntEnum):
    DIRICHLET = 1
    ROBIN = 2


class InvalidResolutionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangular mesh of the unit square with tagged boundary edges.

    Attributes
    ----------
    m : int
        Cells per side, ``h = 1/m``.
    nodes : (n_nodes, 2) float array
    triangles : (n_elements, 3) int array, counter-clockwise
    boundary_edges : (n_bedges, 3) int array of ``(node, node, tag)``
    node_kind : (n_nodes,) int array of :class:`NodeKind`
    """

    m: int
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    node_kind: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def dof_map(self) -> np.ndarray:
        """Node -> global dof, ``-1`` for eliminated Dirichlet nodes."""
        free = self.node_kind != NodeKind.DIRICHLET
        dof_map = np.full(self.n_nodes, -1, dtype=np.int64)
        dof_map[free] = np.arange(free.sum())
        return dof_map

    @cached_property
    def dof_nodes(self) -> np.ndarray:
        """Global dof -> node."""
        return np.flatnonzero(self.dof_map >= 0)

    @property
    def n_dofs(self) -> int:
        return self.dof_nodes.size

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted node pairs, shape (n_edges, 2)."""
        return self._edge_data[0]

    @cached_property
    def element_edges(self) -> np.ndarray:
        """Edge ids of each element; column ``c`` is the edge opposite vertex ``c``."""
        return self._edge_data[1]

    @cached_property
    def edge_elements(self) -> np.ndarray:
        """The (up to two) elements adjacent to each edge, ``-1`` when absent."""
        n_edges = self.edges.shape[0]
        out = np.full((n_edges, 2), -1, dtype=np.int64)
        ee = self.element_edges.ravel()
        elem = np.repeat(np.arange(self.n_elements), 3)
        order = np.argsort(ee, kind="stable")
        ee, elem = ee[order], elem[order]
        first = np.ones(ee.size, dtype=bool)
        first[1:] = ee[1:] != ee[:-1]
        out[ee[first], 0] = elem[first]
        out[ee[~first], 1] = elem[~first]
        return out

    @cached_property
    def _edge_data(self):
        t = self.triangles
        # edge c is opposite vertex c
        pairs = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @cached_property
    def node_elements(self):
        """CSR-style node -> incident elements as ``(offsets, elements)``."""
        flat = self.triangles.ravel()
        elem = np.repeat(np.arange(self.n_elements), 3)
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_nodes)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return offsets, elem[order]

    def boundary_edge_elements(self) -> np.ndarray:
        """Adjacent element of every entry of :attr:`boundary_edges`."""
        key = self.boundary_edges[:, :2].min(axis=1) * self.n_nodes + self.boundary_edges[:, :2].max(axis=1)
        ekey = self.edges[:, 0] * self.n_nodes + self.edges[:, 1]
        order = np.argsort(ekey)
        pos = order[np.searchsorted(ekey, key, sorter=order)]
        return self.edge_elements[pos, 0]

    def dump(self, path) -> None:
        """Write a plain-text ``v``/``t``/``e`` dump of the mesh."""
        names = {BoundaryTag.DIRICHLET: "DIRICHLET", BoundaryTag.ROBIN: "ROBIN"}
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for x, y in self.nodes:
                fh.write(f"v {x:.17g} {y:.17g}\n")
            for i, j, k in self.triangles:
                fh.write(f"t {i} {j} {k}\n")
            for i, j, tag in self.boundary_edges:
                fh.write(f"e {i} {j} {names[BoundaryTag(tag)]}\n")


def build_unit_square_mesh(m: int) -> Mesh:
    """Triangulate the unit square with ``m`` cells per side."""
    if int(m) != m or m < 2:
        raise InvalidResolutionError(f"mesh resolution must be an integer >= 2, got {m!r}")
    m = int(m)
    h = 1.0 / m
    idx = np.arange(m + 1)
    xx, yy = np.meshgrid(idx * h, idx * h)  # row j, column i
    nodes = np.column_stack([xx.ravel(), yy.ravel()])
    # pin boundary coordinates exactly
    nodes[np.isclose(nodes, 1.0)] = 1.0

    ii, jj = np.meshgrid(np.arange(m), np.arange(m))
    ii, jj = ii.ravel(), jj.ravel()
    n00 = jj * (m + 1) + ii
    n10 = n00 + 1
    n01 = n00 + m + 1
    n11 = n01 + 1
    even = (ii + jj) % 2 == 0
    t0 = np.where(even[:, None], np.column_stack([n00, n10, n11]), np.column_stack([n00, n10, n01]))
    t1 = np.where(even[:, None], np.column_stack([n00, n11, n01]), np.column_stack([n10, n11, n01]))
    triangles = np.stack([t0, t1], axis=1).reshape(-1, 3).astype(np.int64)

    bottom = np.column_stack([idx[:-1], idx[1:]])
    top = m * (m + 1) + np.column_stack([idx[1:], idx[:-1]])
    right = np.column_stack([idx[:-1] * (m + 1) + m, idx[1:] * (m + 1) + m])
    left = np.column_stack([idx[1:] * (m + 1), idx[:-1] * (m + 1)])
    robin = np.vstack([bottom, top])
    dirichlet = np.vstack([right, left])
    boundary_edges = np.vstack([
        np.column_stack([robin, np.full(len(robin), BoundaryTag.ROBIN)]),
        np.column_stack([dirichlet, np.full(len(dirichlet), BoundaryTag.DIRICHLET)]),
    ]).astype(np.int64)

    node_kind = np.full((m + 1) ** 2, NodeKind.INTERIOR, dtype=np.int64)
    node_kind[robin.ravel()] = NodeKind.ROBIN
    node_kind[dirichlet.ravel()] = NodeKind.DIRICHLET

    for arr in (nodes, triangles, boundary_edges, node_kind):
        arr.setflags(write=False)
    return Mesh(m, nodes, triangles, boundary_edges, node_kind)


def wavenumber_for_resolution(m: int) -> float:
    """Wave number keeping ``k**3 * h**2 = 2*pi/10`` fixed for ``h = 1/m``."""
    return float((2.0 * np.pi / 10.0 * m * m) ** (1.0 / 3.0))


def resolution_for_wavenumber(k: float) -> int:
    """Inverse of :func:`wavenumber_for_resolution`, rounded to an even ``m``."""
    m = np.sqrt(k**3 * 10.0 / (2.0 * np.pi))
    return int(2 * round(m / 2))
