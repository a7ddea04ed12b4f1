"""Spectral coarse spaces (DtN and the GenEO family) and the deflation operators."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from .assembly import (GlobalSystem, InterfaceBC, LocalMatrixRequest, Operator, assemble_local,
                       interface_mass_matrix)
from .linalg import (ORDERINGS, EigenSolverError, SingularMatrixError, dense_generalized_eigen,
                     real_part_below, shift_invert_arnoldi, sparse_lu, value_below)
from .partition import Decomposition

log = logging.getLogger(__name__)


class CoarseKind(str, Enum):
    NONE = "none"
    DTN = "dtn"
    GENEO = "geneo"
    DELTA_GENEO = "delta_geneo"
    H_GENEO = "h_geneo"
    IMPEDANCE_H_GENEO = "impedance_h_geneo"


DTN_RULES = {"k": 1.0, "k^4/3": 4.0 / 3.0, "k^3/2": 1.5}
GENEO_FAMILY = (CoarseKind.GENEO, CoarseKind.DELTA_GENEO, CoarseKind.H_GENEO, CoarseKind.IMPEDANCE_H_GENEO)


class CoarseSpaceError(RuntimeError):
    pass


class SubdomainError(RuntimeError):
    def __init__(self, subdomain, message):
        super().__init__(f"subdomain {subdomain}: {message}")
        self.subdomain = subdomain


@dataclass(frozen=True)
class CoarseSpec:
    """Which coarse space to build and how to threshold its eigenvalues.

    ``threshold`` is a rule name from :data:`DTN_RULES` for DtN and a number
    (``lambda_max`` or ``eta_max``, default 1/2) for the GenEO family.
    ``ordering`` is passed to the GenEO-family eigensolver; ``nearest`` keeps
    only accepted eigenvalues found before the guard band around the origin.
    """

    kind: CoarseKind = CoarseKind.NONE
    threshold: float | str | None = None
    max_vectors: int = 512
    conjugate: bool = True
    ordering: str = "half_plane"

    def __post_init__(self):
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}, got {self.ordering!r}")
        kind = CoarseKind(self.kind)
        object.__setattr__(self, "kind", kind)
        thr = self.threshold
        if kind is CoarseKind.DTN:
            thr = "k" if thr is None else str(thr)
            if thr not in DTN_RULES:
                raise ValueError(f"DtN threshold rule must be one of {sorted(DTN_RULES)}, got {thr!r}")
        elif kind in GENEO_FAMILY:
            thr = 0.5 if thr is None else float(thr)
        else:
            thr = None
        object.__setattr__(self, "threshold", thr)

    @property
    def rule_label(self) -> str:
        if self.threshold is None:
            return ""
        if self.ordering != "half_plane" and self.kind in GENEO_FAMILY:
            return f"{self.threshold}/{self.ordering}"
        return str(self.threshold)

    @property
    def label(self) -> str:
        if self.kind is CoarseKind.NONE:
            return "one-level"
        return f"{self.kind.value}({self.rule_label})"


def dtn_threshold(k_s: float, rule: str = "k") -> float:
    if k_s <= 0:
        raise ValueError("k_s must be positive")
    return float(k_s ** DTN_RULES[rule])


@dataclass
class LocalCoarse:
    """Selected eigenpairs of one subdomain; ``vectors`` are local (``n_s x p``)."""

    subdomain: int
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def count(self) -> int:
        return self.values.size

    def summary(self) -> dict:
        re = self.values.real
        return {"subdomain": self.subdomain, "count": self.count,
                "min_re": float(re.min()) if re.size else None,
                "max_re": float(re.max()) if re.size else None}


def local_wavenumber(system: GlobalSystem, decomposition: Decomposition, s: int) -> float:
    """``k_s``, the largest element wave number in subdomain ``s``."""
    return float(system.k_elem[decomposition.subdomains[s].elements].max())


def _dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a)


def dtn_pencil(system: GlobalSystem, decomposition: Decomposition, s: int):
    """Schur complement pencil on ``Gamma_s`` plus the data for Helmholtz extension.

    Returns ``(S, M_gamma, X)`` with ``X = A_II^-1 A_I,Gamma`` so that the
    extension of ``u_Gamma`` is ``u_I = -X u_Gamma``.
    """
    sub = decomposition.subdomains[s]
    if sub.interface.size == 0:
        raise SubdomainError(s, "DtN needs a nonempty interface")
    a_dir = assemble_local(system, decomposition, LocalMatrixRequest(s, Operator.HELMHOLTZ, InterfaceBC.DIRICHLET_TRACE))
    a_neu = assemble_local(system, decomposition, LocalMatrixRequest(s, Operator.HELMHOLTZ, InterfaceBC.NEUMANN))
    g, i = sub.interface, sub.interior
    try:
        lu = sparse_lu(a_dir[i][:, i])
    except SingularMatrixError as exc:
        raise SubdomainError(s, f"interior Dirichlet problem is singular ({exc})") from None
    x = lu.solve(_dense(a_dir[i][:, g]).astype(complex))
    schur = _dense(a_neu[g][:, g]) - a_dir[g][:, i] @ x
    return schur, interface_mass_matrix(system.mesh, decomposition, s), x


def build_dtn_local(s: int, system: GlobalSystem, decomposition: Decomposition, rule="k",
                    max_vectors=512) -> LocalCoarse:
    """DtN eigenvectors with ``Re(lambda) < eta_max(k_s)``, Helmholtz-extended to ``Omega_s``."""
    sub = decomposition.subdomains[s]
    schur, mass, x = dtn_pencil(system, decomposition, s)
    eta = dtn_threshold(local_wavenumber(system, decomposition, s), rule)
    # reduce to a standard eigenproblem with the Cholesky factor of M_Gamma
    chol = np.linalg.cholesky(_dense(mass))
    c = scipy.linalg.solve_triangular(chol, schur, lower=True)
    c = scipy.linalg.solve_triangular(chol, c.T, lower=True).T
    lam, w = np.linalg.eig(c)
    u_g = scipy.linalg.solve_triangular(chol.T, w, lower=False)
    keep = np.flatnonzero(lam.real < eta)
    keep = keep[np.lexsort((lam[keep].imag, lam[keep].real))][:max_vectors]
    lam, u_g = lam[keep], u_g[:, keep]
    u = np.zeros((sub.size, keep.size), dtype=complex)
    u[sub.interface] = u_g
    u[sub.interior] = -x @ u_g
    res = np.linalg.norm(schur @ u_g - (mass @ u_g) * lam, axis=0) / np.maximum(np.linalg.norm(u_g, axis=0), 1e-300)
    return LocalCoarse(s, lam, u, res)


def geneo_pencil(system: GlobalSystem, decomposition: Decomposition, s: int, kind: CoarseKind):
    """Left and right matrices of the GenEO-family pencil on subdomain ``s``."""
    kind = CoarseKind(kind)
    sub = decomposition.subdomains[s]
    if sub.pou is None:
        raise ValueError("decomposition has no partition of unity")
    if kind is CoarseKind.DELTA_GENEO:
        left = LocalMatrixRequest(s, Operator.LAPLACE, InterfaceBC.NEUMANN)
    elif kind is CoarseKind.IMPEDANCE_H_GENEO:
        left = LocalMatrixRequest(s, Operator.HELMHOLTZ, InterfaceBC.ROBIN)
    else:
        left = LocalMatrixRequest(s, Operator.HELMHOLTZ, InterfaceBC.NEUMANN)
    right_op = Operator.HELMHOLTZ if kind is CoarseKind.GENEO else Operator.LAPLACE
    k = assemble_local(system, decomposition, left)
    b = assemble_local(system, decomposition, LocalMatrixRequest(s, right_op, InterfaceBC.DIRICHLET_TRACE))
    d = sp.diags(sub.pou)
    return k, (d @ b @ d).tocsr()


def build_geneo_family_local(s: int, system: GlobalSystem, decomposition: Decomposition, kind,
                             threshold=0.5, max_vectors=512, ordering="half_plane") -> LocalCoarse:
    kind = CoarseKind(kind)
    if kind not in GENEO_FAMILY:
        raise ValueError(f"{kind} is not a GenEO-family coarse space")
    k, m = geneo_pencil(system, decomposition, s, kind)
    select = value_below(threshold) if kind is CoarseKind.DELTA_GENEO else real_part_below(threshold)
    try:
        pairs = shift_invert_arnoldi(k, m, select, max_pairs=max_vectors, ordering=ordering)
    except (EigenSolverError, SingularMatrixError) as exc:
        raise SubdomainError(s, f"{kind.value} eigensolve failed: {exc}") from exc
    return LocalCoarse(s, pairs.values, pairs.vectors, pairs.residuals)


def build_local(s, system, decomposition, spec: CoarseSpec) -> LocalCoarse:
    if spec.kind is CoarseKind.DTN:
        return build_dtn_local(s, system, decomposition, spec.threshold, spec.max_vectors)
    return build_geneo_family_local(s, system, decomposition, spec.kind, spec.threshold, spec.max_vectors,
                                    spec.ordering)


@dataclass(eq=False)
class CoarseSpace:
    """Coarse basis ``Z`` with the factorised coarse operator ``E = Z^H A Z``."""

    Z: sp.csc_matrix
    E: np.ndarray
    lu: tuple
    counts: list
    locals: list
    conjugate: bool = True
    dropped: int = 0

    @property
    def size(self) -> int:
        return self.Z.shape[1]

    def _zh(self, v):
        return self.Z.conj().T @ v if self.conjugate else self.Z.T @ v

    def solve_coarse(self, r):
        return scipy.linalg.lu_solve(self.lu, r)

    def apply_q(self, v):
        """``Q v = Z E^-1 Z^H v``."""
        return self.Z @ self.solve_coarse(self._zh(v))

    def summary(self) -> list:
        return [loc.summary() for loc in self.locals]


def _rank_filter(z, az, conjugate, tol=1e-12):
    zh = z.conj().T if conjugate else z.T
    e = np.asarray((zh @ az).todense()) if sp.issparse(az) else zh @ az
    _, r, piv = scipy.linalg.qr(e, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    keep = np.sort(piv[d > tol * d[0]]) if d.size else piv
    return keep


def assemble_coarse(system: GlobalSystem, decomposition: Decomposition, spec: CoarseSpec,
                    workers: int = 1, locals_=None) -> CoarseSpace:
    """Build ``Z = [R_s^T D_s u_s]`` over all subdomains and factorise ``E``."""
    if spec.kind is CoarseKind.NONE:
        raise CoarseSpaceError("coarse kind NONE has no coarse space")
    n_sub = decomposition.n_subdomains
    if locals_ is None:
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                locals_ = list(pool.map(lambda s: build_local(s, system, decomposition, spec), range(n_sub)))
        else:
            locals_ = [build_local(s, system, decomposition, spec) for s in range(n_sub)]

    rows, cols, vals = [], [], []
    col = 0
    for loc in locals_:
        sub = decomposition.subdomains[loc.subdomain]
        if loc.count == 0:
            continue
        w = sub.pou[:, None] * loc.vectors
        nz = np.nonzero(w)
        rows.append(sub.dofs[nz[0]])
        cols.append(col + nz[1])
        vals.append(w[nz])
        col += loc.count
    if col == 0:
        raise CoarseSpaceError("no eigenvectors were selected in any subdomain")
    z = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(system.n, col), dtype=complex)
    counts = [loc.count for loc in locals_]

    az = system.A @ z
    zh = z.conj().T if spec.conjugate else z.T
    e = np.asarray((zh @ az).todense())
    with warnings.catch_warnings():
        # singularity is detected below from the pivots
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu = scipy.linalg.lu_factor(e, check_finite=True)
    udiag = np.abs(np.diag(lu[0]))
    dropped = 0
    if udiag.min() <= 1e-12 * udiag.max():
        keep = _rank_filter(z, az, spec.conjugate)
        dropped = col - keep.size
        log.warning("coarse operator is numerically singular; dropping %d of %d columns", dropped, col)
        z = z[:, keep]
        e = e[np.ix_(keep, keep)]
        lu = scipy.linalg.lu_factor(e)
        udiag = np.abs(np.diag(lu[0]))
        if udiag.min() <= 1e-12 * udiag.max():
            raise CoarseSpaceError("coarse operator E is singular even after rank filtering")
    return CoarseSpace(z.tocsc(), e, lu, counts, locals_, spec.conjugate, dropped)


# ---------------------------------------------------------------------------
# DtN <-> GenEO link
# ---------------------------------------------------------------------------

@dataclass
class LinkReport:
    passed: bool
    tolerance: float
    subdomains: list

    def to_dict(self) -> dict:
        return {"passed": self.passed, "tolerance": self.tolerance, "subdomains": self.subdomains}


def _match(a, b, tol):
    if a.size != b.size:
        return False, np.inf
    if a.size == 0:
        return True, 0.0
    cost = np.abs(a[:, None] - b[None, :]) / np.maximum(1.0, np.abs(a))[:, None]
    r, c = linear_sum_assignment(cost)
    err = float(cost[r, c].max())
    return err <= tol, err


def verify_dtn_geneo_link(system: GlobalSystem, decomposition: Decomposition, subdomains=None,
                          tol=1e-8, cap=1e4, use_interface_mass=False) -> LinkReport:
    """Check the Schur-complement link between the GenEO and DtN-type pencils.

    For each subdomain the eigenvalues ``lambda`` of ``(A~_s, A_s)`` are
    mapped through ``mu = lambda / (1 - lambda)`` and compared with the
    eigenvalues of ``(A~_OO - A_OI A_II^-1 A_IO, A_OO - A~_OO)`` where ``O`` are
    the overlap dofs.  Both sides are computed with the dense QZ solver; only
    values with ``|mu| <= cap`` are compared, since ``lambda`` near 1 loses
    relative accuracy under the map.  ``use_interface_mass`` swaps the right
    matrix for the interface mass matrix, which must make the check fail.
    """
    if subdomains is None:
        subdomains = range(decomposition.n_subdomains)
    results = []
    ok_all = True
    for s in subdomains:
        sub = decomposition.subdomains[s]
        a_dir = _dense(assemble_local(system, decomposition, LocalMatrixRequest(s, Operator.HELMHOLTZ, InterfaceBC.DIRICHLET_TRACE)))
        a_neu = _dense(assemble_local(system, decomposition, LocalMatrixRequest(s, Operator.HELMHOLTZ, InterfaceBC.NEUMANN)))
        o = sub.overlap
        i = np.setdiff1d(np.arange(sub.size), o)
        lam = dense_generalized_eigen(a_neu, a_dir).values
        far = np.abs(1.0 - lam) > 1e-8
        mapped = lam[far] / (1.0 - lam[far])

        schur = a_neu[np.ix_(o, o)] - a_dir[np.ix_(o, i)] @ np.linalg.solve(a_dir[np.ix_(i, i)], a_dir[np.ix_(i, o)])
        if use_interface_mass:
            rhs = np.zeros((o.size, o.size))
            pos = np.searchsorted(o, sub.interface)
            rhs[np.ix_(pos, pos)] = _dense(interface_mass_matrix(system.mesh, decomposition, s))
        else:
            rhs = a_dir[np.ix_(o, o)] - a_neu[np.ix_(o, o)]
        mu = dense_generalized_eigen(schur, rhs).values

        mapped = mapped[np.abs(mapped) <= cap]
        mu = mu[np.abs(mu) <= cap]
        ok, err = _match(np.sort_complex(mapped), np.sort_complex(mu), tol)
        ok_all &= ok
        results.append({"subdomain": int(s), "passed": bool(ok), "max_rel_error": err,
                        "n_geneo": int(mapped.size), "n_schur": int(mu.size)})
    return LinkReport(bool(ok_all), tol, results)
