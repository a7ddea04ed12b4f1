"""One- and two-level ORAS preconditioners."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import GlobalSystem, InterfaceBC, LocalMatrixRequest, Operator, assemble_local
from .coarse import CoarseSpace, SubdomainError
from .linalg import SingularMatrixError, sparse_lu
from .partition import Decomposition, PouKind, build_partition_of_unity


class OrasPreconditioner:
    """``M^-1 v = sum_s R_s^T D_s A^_s^-1 R_s v``, optionally deflated.

    With a coarse space the application is ``M^-1 (I - A Q) v + Q v``.  Local
    contributions are summed in subdomain order, so results do not depend on
    the number of workers.

    ``pou`` selects the weights used in the one-level sum; by default those
    attached to the decomposition are used.  Passing ``ownership`` gives the
    classical Boolean restricted prolongation while the coarse space keeps the
    decomposition's own weights.
    """

    def __init__(self, system: GlobalSystem, decomposition: Decomposition,
                 coarse: CoarseSpace | None = None, workers: int = 1, pou=None):
        self.A = system.A
        self.n = system.n
        self.coarse = coarse
        self.workers = max(1, int(workers))
        self._dofs = []
        self._pou = []
        self._lu = []
        self.solve_counts = np.zeros(decomposition.n_subdomains, dtype=np.int64)
        if pou is not None and PouKind(pou) is not decomposition.pou_kind:
            decomposition = build_partition_of_unity(decomposition, pou)
        self.pou_kind = decomposition.pou_kind
        for s, sub in enumerate(decomposition.subdomains):
            if sub.pou is None:
                raise ValueError("decomposition has no partition of unity")
            a_hat = assemble_local(system, decomposition, LocalMatrixRequest(s, Operator.HELMHOLTZ, InterfaceBC.ROBIN))
            try:
                self._lu.append(sparse_lu(a_hat))
            except SingularMatrixError as exc:
                raise SubdomainError(s, f"local Robin matrix is singular ({exc})") from None
            self._dofs.append(sub.dofs)
            self._pou.append(sub.pou)
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def _local(self, s, v):
        self.solve_counts[s] += 1
        return self._pou[s] * self._lu[s].solve(v[self._dofs[s]])

    def one_level(self, v):
        v = np.asarray(v, dtype=complex)
        out = np.zeros(self.n, dtype=complex)
        if self._pool is not None:
            parts = list(self._pool.map(lambda s: self._local(s, v), range(len(self._lu))))
        else:
            parts = [self._local(s, v) for s in range(len(self._lu))]
        for dofs, part in zip(self._dofs, parts):
            out[dofs] += part
        return out

    def apply(self, v):
        v = np.asarray(v)
        if v.shape != (self.n,):
            raise ValueError(f"vector has shape {v.shape}, expected ({self.n},)")
        if self.coarse is None:
            return self.one_level(v)
        qv = self.coarse.apply_q(v)
        return self.one_level(v - self.A @ qv) + qv

    __call__ = apply

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.n, self.n), matvec=self.apply, dtype=complex)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def build_oras(system: GlobalSystem, decomposition: Decomposition, coarse: CoarseSpace | None = None,
               workers: int = 1, pou=None) -> OrasPreconditioner:
    return OrasPreconditioner(system, decomposition, coarse, workers, pou)
