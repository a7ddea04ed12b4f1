"""P1 finite element assembly of the Helmholtz system and its local variants.

The sesquilinear form is

    a(u, v) = int grad u . grad conj(v) - k^2 u conj(v)  +  int_{Gamma_R} i k u conj(v)

with ``k`` constant per element.  Dirichlet nodes are eliminated from the
numbering, so every matrix here lives on free dofs only.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .linalg import as_csr
from .media import MediumSpec, wavenumber_field
from .mesh import BoundaryTag, Mesh

_EDGE_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_TRI_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


class Operator(str, Enum):
    HELMHOLTZ = "helmholtz"
    LAPLACE = "laplace"


class InterfaceBC(str, Enum):
    DIRICHLET_TRACE = "dirichlet_trace"
    NEUMANN = "neumann"
    ROBIN = "robin"


@dataclass(frozen=True)
class LocalMatrixRequest:
    subdomain: int
    operator: Operator = Operator.HELMHOLTZ
    interface_bc: InterfaceBC = InterfaceBC.NEUMANN


def element_matrices(mesh: Mesh):
    """P1 stiffness and mass matrices of every element, each ``(E, 3, 3)``."""
    p = mesh.nodes[mesh.triangles]
    area = np.abs(mesh.signed_areas)
    # gradient of barycentric coordinate c is perp(edge opposite c) / (2 area)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    stiff = np.einsum("eid,ejd->eij", e, e) / (4.0 * area)[:, None, None]
    mass = area[:, None, None] * _TRI_MASS[None]
    return stiff, mass


def edge_mass(mesh: Mesh, edges) -> np.ndarray:
    """1D P1 mass matrices ``(n, 2, 2)`` of the given node pairs."""
    edges = np.asarray(edges).reshape(-1, 2)
    length = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    return length[:, None, None] * _EDGE_MASS[None]


def _scatter(nodes_local, blocks, index_of_node, n):
    """Sum local blocks into an ``n x n`` CSR matrix, dropping unmapped nodes."""
    idx = index_of_node[nodes_local]
    q = nodes_local.shape[1]
    rows = np.repeat(idx, q, axis=1).ravel()
    cols = np.tile(idx, (1, q)).ravel()
    vals = blocks.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))
    return as_csr(mat)


def assemble_form(mesh: Mesh, elements, k_elem, robin_edges=(), robin_k=(), index_of_node=None, n=None):
    """Assemble ``K - k^2 M + i k M_edge`` over an element subset.

    Parameters
    ----------
    elements : int array
        Element ids to integrate over.
    k_elem : float array
        Wave number per element of the whole mesh (zeros give the Laplacian).
    robin_edges, robin_k : node pairs and their wave numbers for ``i k`` edge terms.
    index_of_node : int array
        Node -> row index, ``-1`` for nodes not in the system.
    """
    if index_of_node is None:
        index_of_node = mesh.dof_map
        n = mesh.n_dofs
    stiff, mass = _element_cache(mesh)
    elements = np.asarray(elements, dtype=np.int64)
    kk = np.asarray(k_elem, dtype=float)[elements] ** 2
    blocks = (stiff[elements] - kk[:, None, None] * mass[elements]).astype(complex)
    a = _scatter(mesh.triangles[elements], blocks, index_of_node, n)
    robin_edges = np.asarray(robin_edges, dtype=np.int64).reshape(-1, 2)
    robin_k = np.asarray(robin_k, dtype=float)
    if robin_edges.size and np.any(robin_k != 0):
        eb = 1j * robin_k[:, None, None] * edge_mass(mesh, robin_edges)
        a = a + _scatter(robin_edges, eb, index_of_node, n)
        a = as_csr(a)
    return a


_ELEMENT_CACHE: "weakref.WeakKeyDictionary[Mesh, tuple]" = weakref.WeakKeyDictionary()


def _element_cache(mesh):
    if mesh not in _ELEMENT_CACHE:
        _ELEMENT_CACHE[mesh] = element_matrices(mesh)
    return _ELEMENT_CACHE[mesh]


@dataclass(eq=False)
class GlobalSystem:
    """Global Helmholtz system ``A u = f`` on free dofs."""

    mesh: Mesh
    medium: MediumSpec
    k_elem: np.ndarray
    A: sp.csr_matrix
    f: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def dof_map(self) -> np.ndarray:
        return self.mesh.dof_map

    @property
    def laplace(self) -> sp.csr_matrix:
        lap = self.__dict__.get("_laplace")
        if lap is None:
            lap = assemble_form(self.mesh, np.arange(self.mesh.n_elements), np.zeros(self.mesh.n_elements))
            self.__dict__["_laplace"] = lap
        return lap


def robin_boundary(mesh: Mesh, k_elem):
    """Robin edges of the global boundary with their adjacent-element wave number."""
    tags = mesh.boundary_edges[:, 2]
    sel = tags == BoundaryTag.ROBIN
    edges = mesh.boundary_edges[sel, :2]
    elems = mesh.boundary_edge_elements()[sel]
    return edges, np.asarray(k_elem)[elems], elems


def point_source_load(mesh: Mesh) -> np.ndarray:
    """Unit nodal load at the centre node ``(1/2, 1/2)``."""
    if mesh.m % 2:
        raise ValueError(f"point source needs an even resolution so (1/2, 1/2) is a node, got m={mesh.m}")
    half = mesh.m // 2
    node = half * (mesh.m + 1) + half
    f = np.zeros(mesh.n_dofs, dtype=complex)
    f[mesh.dof_map[node]] = 1.0
    return f


def assemble_global(mesh: Mesh, medium: MediumSpec, with_source=True) -> GlobalSystem:
    k_elem = wavenumber_field(medium, mesh)
    edges, k_edge, _ = robin_boundary(mesh, k_elem)
    a = assemble_form(mesh, np.arange(mesh.n_elements), k_elem, edges, k_edge)
    f = point_source_load(mesh) if with_source and mesh.m % 2 == 0 else np.zeros(mesh.n_dofs, complex)
    return GlobalSystem(mesh, medium, k_elem, a, f)


def interface_mass_matrix(mesh: Mesh, decomposition, s: int) -> sp.csr_matrix:
    """1D P1 mass matrix on the interface of subdomain ``s``, indexed like ``Gamma_s``."""
    sub = decomposition.subdomains[s]
    if sub.interface.size == 0:
        raise ValueError(f"subdomain {s} has an empty interface")
    index = np.full(mesh.n_nodes, -1, dtype=np.int64)
    index[mesh.dof_nodes[sub.dofs[sub.interface]]] = np.arange(sub.interface.size)
    blocks = edge_mass(mesh, sub.interface_edges)
    return _scatter(sub.interface_edges, blocks.astype(complex), index, sub.interface.size).real.tocsr()


def assemble_local(system: GlobalSystem, decomposition, request: LocalMatrixRequest) -> sp.csr_matrix:
    """Local matrix of one subdomain for the requested operator and interface condition."""
    mesh = system.mesh
    if not 0 <= request.subdomain < decomposition.n_subdomains:
        raise IndexError(f"unknown subdomain {request.subdomain}")
    sub = decomposition.subdomains[request.subdomain]
    op = Operator(request.operator)
    bc = InterfaceBC(request.interface_bc)

    if bc is InterfaceBC.DIRICHLET_TRACE:
        glob = system.A if op is Operator.HELMHOLTZ else system.laplace
        return as_csr(glob[sub.dofs][:, sub.dofs])

    k_elem = system.k_elem if op is Operator.HELMHOLTZ else np.zeros(mesh.n_elements)
    index = np.full(mesh.n_nodes, -1, dtype=np.int64)
    index[mesh.dof_nodes[sub.dofs]] = np.arange(sub.dofs.size)

    edges, k_edge, elems = robin_boundary(mesh, k_elem)
    inside = np.isin(elems, sub.elements)
    edges, k_edge = edges[inside], k_edge[inside]
    if bc is InterfaceBC.ROBIN:
        edges = np.vstack([edges, sub.interface_edges])
        k_edge = np.concatenate([k_edge, k_elem[sub.interface_edge_elements]])
    return assemble_form(mesh, sub.elements, k_elem, edges, k_edge, index, sub.dofs.size)
