"""Non-overlapping partitions, overlap extension and partitions of unity."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .mesh import Mesh


class PouKind(str, Enum):
    MULTIPLICITY = "multiplicity"
    OWNERSHIP = "ownership"
    SMOOTH = "smooth"


@dataclass(eq=False)
class Subdomain:
    """Index data of one (possibly overlapping) subdomain.

    ``dofs`` are sorted global dof ids and define the restriction ``R_s``;
    ``interface``, ``interior`` and ``overlap`` are positions into ``dofs``.
    ``layer`` is the number of extension rounds after which each dof joined the
    subdomain (0 for dofs of the owned elements).
    """

    owned: np.ndarray
    elements: np.ndarray
    dofs: np.ndarray
    interface: np.ndarray
    interior: np.ndarray
    interface_edges: np.ndarray
    interface_edge_elements: np.ndarray
    layer: np.ndarray
    overlap: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    pou: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.dofs.size

    def restrict(self, v):
        return v[self.dofs]

    def extend(self, v_local, n):
        out = np.zeros(n, dtype=np.result_type(v_local, float))
        out[self.dofs] = v_local
        return out


@dataclass(eq=False)
class Decomposition:
    mesh: Mesh
    owner: np.ndarray
    subdomains: list
    overlap_width: int = 0
    pou_kind: PouKind | None = None

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)

    def __len__(self):
        return len(self.subdomains)

    def restriction(self, s) -> sp.csr_matrix:
        """Boolean restriction matrix ``R_s`` of shape ``(n_s, n)``."""
        dofs = self.subdomains[s].dofs
        n = self.mesh.n_dofs
        return sp.csr_matrix((np.ones(dofs.size), (np.arange(dofs.size), dofs)), shape=(dofs.size, n))

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for e, s in enumerate(self.owner):
                fh.write(f"{e} {s}\n")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _incidence(mesh: Mesh) -> sp.csr_matrix:
    e = np.repeat(np.arange(mesh.n_elements), 3)
    return sp.csr_matrix((np.ones(e.size, dtype=np.int8), (e, mesh.triangles.ravel())),
                         shape=(mesh.n_elements, mesh.n_nodes))


def dual_graph(mesh: Mesh) -> sp.csr_matrix:
    """Element adjacency through shared edges."""
    ee = mesh.edge_elements
    inner = ee[ee[:, 1] >= 0]
    n = mesh.n_elements
    g = sp.coo_matrix((np.ones(len(inner), dtype=np.int32), (inner[:, 0], inner[:, 1])), shape=(n, n))
    return (g + g.T).tocsr()


def _subdomain(mesh: Mesh, owned, elements, layer_of_node):
    elements = np.unique(elements)
    nodes = np.unique(mesh.triangles[elements])
    dof_map = mesh.dof_map
    dofs = np.sort(dof_map[nodes[dof_map[nodes] >= 0]])

    # interface edges: on the boundary of the element set but not of the square
    in_sub = np.zeros(mesh.n_elements, dtype=bool)
    in_sub[elements] = True
    ee = mesh.edge_elements
    a = in_sub[ee[:, 0]]
    b = np.where(ee[:, 1] >= 0, in_sub[np.maximum(ee[:, 1], 0)], False)
    iface = np.flatnonzero((ee[:, 1] >= 0) & (a ^ b))
    iface_edges = mesh.edges[iface]
    iface_elems = np.where(a[iface], ee[iface, 0], ee[iface, 1])

    local = np.full(mesh.n_dofs, -1, dtype=np.int64)
    local[dofs] = np.arange(dofs.size)
    inodes = np.unique(iface_edges)
    idofs = dof_map[inodes]
    interface = np.sort(local[idofs[idofs >= 0]])
    mask = np.ones(dofs.size, dtype=bool)
    mask[interface] = False
    interior = np.flatnonzero(mask)
    layer = layer_of_node[mesh.dof_nodes[dofs]]
    return Subdomain(np.sort(np.asarray(owned)), elements, dofs, interface, interior,
                     iface_edges, iface_elems, layer)


def _from_owner(mesh: Mesh, owner) -> Decomposition:
    owner = np.asarray(owner, dtype=np.int64)
    n_sub = int(owner.max()) + 1
    subs = []
    for s in range(n_sub):
        owned = np.flatnonzero(owner == s)
        subs.append(_subdomain(mesh, owned, owned, np.zeros(mesh.n_nodes, np.int64)))
    dec = Decomposition(mesh, owner, subs, 0)
    _mark_overlap(dec)
    return dec


def _mark_overlap(dec: Decomposition) -> None:
    count = np.zeros(dec.mesh.n_dofs, dtype=np.int64)
    for sub in dec.subdomains:
        count[sub.dofs] += 1
    for sub in dec.subdomains:
        sub.overlap = np.flatnonzero(count[sub.dofs] > 1)


# ---------------------------------------------------------------------------
# non-overlapping partitions
# ---------------------------------------------------------------------------

def uniform_partition(mesh: Mesh, p: int, q: int, uneven=False) -> Decomposition:
    """Split the cells into a ``p x q`` grid of equal blocks (x index fastest).

    With ``uneven`` a ``p`` that does not divide ``m`` is accepted and block
    widths differ by at most one cell.
    """
    m = mesh.m
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    if p > m or q > m:
        raise ValueError(f"p={p} and q={q} cannot exceed the resolution m={m}")
    if not uneven and (m % p or m % q):
        raise ValueError(f"p={p} and q={q} must divide the resolution m={m}")
    cell = np.arange(mesh.n_elements) // 2
    i, j = cell % m, cell // m
    owner = (j * q // m) * p + i * p // m
    return _from_owner(mesh, owner)


def _cut(graph, side):
    g = graph.tocoo()
    return int(np.count_nonzero(side[g.row] != side[g.col]) // 2)


def _fm_refine(graph, side, lo, hi, max_passes=4, stall=64):
    """Fiduccia-Mattheyses style boundary refinement of a 0/1 labelling.

    The size of side 0 is kept in ``[lo, hi]``.  Ties are broken by lowest
    vertex index.
    """
    indptr, indices = graph.indptr, graph.indices
    n = side.size
    side = side.copy()
    for _ in range(max_passes):
        ext = np.zeros(n, dtype=np.int64)
        deg = np.diff(indptr)
        nbr_side = side[indices]
        own = np.repeat(side, deg)
        np.add.at(ext, np.repeat(np.arange(n), deg), (nbr_side != own).astype(np.int64))
        gain = 2 * ext - deg
        size0 = int(np.count_nonzero(side == 0))
        locked = np.zeros(n, dtype=bool)
        heap = [(-gain[v], v) for v in np.flatnonzero(ext > 0)]
        heapq.heapify(heap)
        moves, total, best, best_at = [], 0, 0, 0
        while heap and len(moves) - best_at < stall:
            g, v = heapq.heappop(heap)
            if locked[v] or -g != gain[v]:
                continue
            new0 = size0 + (1 if side[v] == 1 else -1)
            if not lo <= new0 <= hi:
                continue
            locked[v] = True
            total += gain[v]
            side[v] ^= 1
            size0 = new0
            moves.append(v)
            for u in indices[indptr[v]:indptr[v + 1]]:
                if locked[u]:
                    continue
                gain[u] += -2 if side[u] == side[v] else 2
                heapq.heappush(heap, (-gain[u], u))
            if total > best:
                best, best_at = total, len(moves)
        for v in moves[best_at:]:
            side[v] ^= 1
        if best <= 0:
            break
    return side


def _bisect(graph, coords, target, slack):
    """Split vertices into a side-0 set of about ``target`` vertices."""
    n = graph.shape[0]
    lo, hi = max(1, target - slack), min(n - 1, target + slack)
    candidates = []
    ext = coords.max(axis=0) - coords.min(axis=0)
    axes = [0, 1] if ext[0] >= ext[1] else [1, 0]
    for ax in axes:
        order = np.lexsort((np.arange(n), coords[:, 1 - ax], coords[:, ax]))
        side = np.ones(n, dtype=np.int8)
        side[order[:target]] = 0
        candidates.append(side)
    # greedy growing from a pseudo-peripheral vertex
    start = 0
    for _ in range(2):
        order = breadth_first_order(graph, start, directed=False, return_predecessors=False)
        start = int(order[-1])
    order = breadth_first_order(graph, start, directed=False, return_predecessors=False)
    side = np.ones(n, dtype=np.int8)
    side[order[:target]] = 0
    candidates.append(side)

    best, best_cut = None, None
    for side in candidates:
        side = _fm_refine(graph, side, lo, hi)
        c = _cut(graph, side)
        if best_cut is None or c < best_cut:
            best, best_cut = side, c
    return best


def _repair_connectivity(graph, owner, n_parts):
    owner = owner.copy()
    for _ in range(8):
        changed = False
        for s in range(n_parts):
            idx = np.flatnonzero(owner == s)
            if idx.size == 0:
                continue
            sub = graph[idx][:, idx]
            ncomp, labels = connected_components(sub, directed=False)
            if ncomp == 1:
                continue
            keep = np.argmax(np.bincount(labels))
            for c in range(ncomp):
                if c == keep:
                    continue
                comp = idx[labels == c]
                nbrs = owner[graph[comp].indices]
                nbrs = nbrs[nbrs != s]
                if nbrs.size == 0:
                    continue
                counts = np.bincount(nbrs, minlength=n_parts)
                owner[comp] = int(np.argmax(counts))
                changed = True
        if not changed:
            break
    return owner


def graph_bisection_partition(mesh: Mesh, n_parts: int, imbalance: float = 0.03) -> Decomposition:
    """Recursive bisection of the element dual graph into ``n_parts`` parts.

    Each bisection takes the best edge cut among coordinate splits and a
    breadth-first grown region, after boundary refinement that keeps every
    level within its share of the ``imbalance`` budget.
    """
    n_el = mesh.n_elements
    if n_parts < 1:
        raise ValueError("number of parts must be >= 1")
    if n_parts > n_el:
        raise ValueError(f"cannot split {n_el} elements into {n_parts} parts")
    graph = dual_graph(mesh)
    coords = mesh.centroids
    owner = np.zeros(n_el, dtype=np.int64)
    levels = max(1, math.ceil(math.log2(n_parts)))
    per_level = imbalance / levels

    stack = [(np.arange(n_el), n_parts, 0)]
    while stack:
        verts, parts, first = stack.pop()
        if parts == 1:
            owner[verts] = first
            continue
        left = parts // 2
        target = int(round(verts.size * left / parts))
        part_size = verts.size / parts
        slack = int(per_level * part_size * min(left, parts - left))
        side = _bisect(graph[verts][:, verts], coords[verts], target, slack)
        stack.append((verts[side == 1], parts - left, first + left))
        stack.append((verts[side == 0], left, first))
    owner = _repair_connectivity(graph, owner, n_parts)
    return _from_owner(mesh, owner)


# ---------------------------------------------------------------------------
# overlap and partition of unity
# ---------------------------------------------------------------------------

def extend_overlap(decomposition: Decomposition, layers: int) -> Decomposition:
    """Grow every subdomain by ``layers // 2`` rounds of node-adjacent elements.

    ``layers`` is the overlap width in elements; 2 is minimal overlap.
    """
    if layers % 2 or layers < 0:
        raise ValueError(f"overlap width must be an even non-negative integer, got {layers}")
    mesh = decomposition.mesh
    inc = _incidence(mesh)
    rounds = layers // 2
    subs = []
    for sub in decomposition.subdomains:
        in_el = np.zeros(mesh.n_elements, dtype=bool)
        in_el[sub.owned] = True
        layer = np.full(mesh.n_nodes, np.iinfo(np.int64).max, dtype=np.int64)
        node_in = (inc.T @ in_el.astype(np.int8)) > 0
        layer[node_in] = 0
        for r in range(1, rounds + 1):
            in_el = (inc @ node_in.astype(np.int8)) > 0
            node_in_new = (inc.T @ in_el.astype(np.int8)) > 0
            layer[node_in_new & ~node_in] = r
            node_in = node_in_new
        subs.append(_subdomain(mesh, sub.owned, np.flatnonzero(in_el), layer))
    dec = Decomposition(mesh, decomposition.owner, subs, layers)
    _mark_overlap(dec)
    if decomposition.pou_kind is not None:
        dec = build_partition_of_unity(dec, decomposition.pou_kind)
    return dec


def build_partition_of_unity(decomposition: Decomposition, kind=PouKind.SMOOTH) -> Decomposition:
    """Attach diagonal partition-of-unity weights ``D_s`` to every subdomain.

    ``multiplicity``: ``1 / #subdomains containing the dof``.
    ``ownership``: 1 on dofs whose node is owned by ``s`` (lowest owner among
    the incident owned elements), else 0.
    ``smooth``: ``1 - layer/rounds`` clipped at 0, normalised to sum to one;
    with minimal overlap this averages over the owned closures and vanishes
    on the interface.
    """
    kind = PouKind(kind)
    mesh = decomposition.mesh
    n = mesh.n_dofs
    subs = decomposition.subdomains
    if kind is PouKind.MULTIPLICITY:
        count = np.zeros(n, dtype=np.int64)
        for sub in subs:
            count[sub.dofs] += 1
        weights = [1.0 / count[sub.dofs] for sub in subs]
    elif kind is PouKind.OWNERSHIP:
        node_owner = np.full(mesh.n_nodes, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(node_owner, mesh.triangles.ravel(), np.repeat(decomposition.owner, 3))
        dof_owner = node_owner[mesh.dof_nodes]
        weights = [(dof_owner[sub.dofs] == s).astype(float) for s, sub in enumerate(subs)]
    else:
        rounds = max(1, decomposition.overlap_width // 2)
        chi = [np.clip(1.0 - sub.layer / rounds, 0.0, 1.0) for sub in subs]
        total = np.zeros(n)
        for sub, c in zip(subs, chi):
            total[sub.dofs] += c
        weights = [c / total[sub.dofs] for sub, c in zip(subs, chi)]
    new = [replace(sub, pou=w) for sub, w in zip(subs, weights)]
    return Decomposition(mesh, decomposition.owner, new, decomposition.overlap_width, kind)


def partition_of_unity_sum(decomposition: Decomposition, exact=False):
    """Diagonal of ``sum_s R_s^T D_s R_s`` (as Fractions when ``exact``)."""
    n = decomposition.mesh.n_dofs
    if exact:
        acc = [Fraction(0)] * n
        for sub in decomposition.subdomains:
            for j, w in zip(sub.dofs, sub.pou):
                acc[j] += Fraction(w)
        return acc
    acc = np.zeros(n)
    for sub in decomposition.subdomains:
        acc[sub.dofs] += sub.pou
    return acc


def build_decomposition(mesh: Mesh, partition="uniform", n_parts=None, grid=None, overlap=2,
                        pou=PouKind.SMOOTH) -> Decomposition:
    """Partition, extend by ``overlap`` and attach a partition of unity.

    Uniform grids whose block count does not divide ``m`` get blocks that
    differ by at most one cell.
    """
    if partition == "uniform":
        if grid is None:
            r = int(round(math.sqrt(n_parts)))
            if r * r != n_parts:
                raise ValueError(f"uniform partition needs a square number of parts, got {n_parts}")
            grid = (r, r)
        dec = uniform_partition(mesh, *grid, uneven=True)
    elif partition == "graph":
        dec = graph_bisection_partition(mesh, n_parts)
    else:
        raise ValueError(f"unknown partition kind {partition!r}")
    if overlap:
        dec = extend_overlap(dec, overlap)
    return build_partition_of_unity(dec, pou)
