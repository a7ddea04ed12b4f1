"""Complex sparse/dense kernels used throughout the solver.

Sparse matrices are ``scipy.sparse.csr_matrix`` objects with canonical
(sorted, duplicate-free) index structure.  Factorisations are SuperLU with
partial pivoting; GMRES and the eigensolver drivers live here as well.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

EIG_TOL = 1e-8
PIVOT_TOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class GmresBreakdownError(RuntimeError):
    pass


class EigenSolverError(RuntimeError):
    def __init__(self, message, n_converged=0):
        super().__init__(message)
        self.n_converged = n_converged


def as_csr(a, dtype=complex) -> sp.csr_matrix:
    """Canonical CSR copy of ``a`` (sorted indices, duplicates summed)."""
    out = sp.csr_matrix(a, dtype=dtype)
    out.sum_duplicates()
    out.sort_indices()
    return out


# ---------------------------------------------------------------------------
# sparse LU
# ---------------------------------------------------------------------------

class SparseLU:
    """LU factorisation of a square sparse matrix, ``P_r A P_c = L U``."""

    def __init__(self, a):
        a = sp.csc_matrix(a)
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got shape {a.shape}")
        self.shape = a.shape
        self.dtype = np.result_type(a.dtype, np.float64)
        if a.shape[0] == 0:
            self._lu = None
            return
        try:
            self._lu = spla.splu(
                a.astype(self.dtype),
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=1.0,
                options={"SymmetricMode": False},
            )
        except RuntimeError as exc:
            row = _singular_row(a)
            where = "" if row is None else f" at pivot row {row}"
            raise SingularMatrixError(f"matrix is exactly singular{where} ({exc})", row=row) from None
        udiag = np.abs(self._lu.U.diagonal())
        scale = max(udiag.max(), abs(a).max())
        bad = np.flatnonzero(udiag <= PIVOT_TOL * scale)
        if bad.size:
            row = int(self._lu.perm_r.argsort()[bad[0]]) if bad[0] < self._lu.perm_r.size else int(bad[0])
            raise SingularMatrixError(
                f"zero pivot (|u| = {udiag[bad[0]]:.3e}) at pivot row {row}", row=row)

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {self.shape[0]}")
        if self._lu is None:
            return np.zeros(b.shape, dtype=np.result_type(b.dtype, self.dtype))
        if np.iscomplexobj(b) and not np.iscomplexobj(np.empty(0, self.dtype)):
            return self._lu.solve(np.ascontiguousarray(b.real)) + 1j * self._lu.solve(np.ascontiguousarray(b.imag))
        return self._lu.solve(np.ascontiguousarray(b, dtype=self.dtype))

    @property
    def nnz(self) -> int:
        return 0 if self._lu is None else self._lu.L.nnz + self._lu.U.nnz


def _singular_row(a, limit=4000):
    """Row of the first vanishing pivot of a dense partial-pivoting LU, if affordable."""
    if a.shape[0] > limit:
        return None
    p, _, u = scipy.linalg.lu(a.toarray())
    d = np.abs(np.diag(u))
    bad = np.flatnonzero(d <= PIVOT_TOL * max(d.max(initial=0.0), 1.0))
    if not bad.size:
        return None
    return int(np.argmax(p[:, bad[0]]))


def sparse_lu(a) -> SparseLU:
    return SparseLU(a)


def export_matrix_market(a, path, comment="") -> None:
    """Write ``a`` as a complex general MatrixMarket coordinate file."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(a, dtype=complex), comment=comment,
                     field="complex", symmetry="general")


# ---------------------------------------------------------------------------
# GMRES
# ---------------------------------------------------------------------------

@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    residual_history: list = field(default_factory=list)
    recurrence_residual: float = np.nan


def _as_op(a):
    if a is None:
        return lambda v: v
    if callable(a) and not sp.issparse(a) and not isinstance(a, (np.ndarray, spla.LinearOperator)):
        return a
    if isinstance(a, spla.LinearOperator):
        return a.matvec
    return lambda v: a @ v


def gmres_right_preconditioned(a, precond, b, tol=1e-6, maxit=500) -> GmresResult:
    """Full (unrestarted) GMRES on ``A M^-1 y = b`` with ``x = M^-1 y``.

    The iteration count is the Krylov dimension at termination.  Arnoldi uses
    modified Gram-Schmidt with a second pass when the norm drops below 0.7 of
    its value before orthogonalisation.  Convergence is declared on the true
    residual ``||b - A x|| / ||b||``; if the recurrence estimate is below
    ``tol`` but the true residual is not, the iteration continues.
    """
    matvec = _as_op(a)
    apply_m = _as_op(precond)
    b = np.asarray(b, dtype=complex)
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        raise ValueError("right-hand side must be nonzero")

    maxit = int(min(maxit, n)) if n > 0 else 0
    V = np.zeros((maxit + 1, n), dtype=complex)
    H = np.zeros((maxit + 1, maxit), dtype=complex)
    cs = np.zeros(maxit, dtype=complex)
    sn = np.zeros(maxit, dtype=complex)
    g = np.zeros(maxit + 1, dtype=complex)
    V[0] = b / bnorm
    g[0] = bnorm
    history = [1.0]
    x = np.zeros(n, dtype=complex)
    true_res = 1.0
    est = 1.0
    j = 0

    def solution(k):
        y = scipy.linalg.solve_triangular(H[:k, :k], g[:k])
        return apply_m(V[:k].T @ y)

    while j < maxit:
        w = np.asarray(matvec(apply_m(V[j])), dtype=complex)
        before = np.linalg.norm(w)
        for i in range(j + 1):
            H[i, j] = np.vdot(V[i], w)
            w = w - H[i, j] * V[i]
        after = np.linalg.norm(w)
        if after < 0.7 * before:
            for i in range(j + 1):
                c = np.vdot(V[i], w)
                H[i, j] += c
                w = w - c * V[i]
            after = np.linalg.norm(w)
        H[j + 1, j] = after
        for i in range(j):
            hij = H[i, j]
            H[i, j] = np.conj(cs[i]) * hij + np.conj(sn[i]) * H[i + 1, j]
            H[i + 1, j] = -sn[i] * hij + cs[i] * H[i + 1, j]
        # Givens rotation eliminating H[j+1, j]
        hjj, hj1 = H[j, j], H[j + 1, j]
        r = np.hypot(abs(hjj), abs(hj1))
        if r == 0:
            raise GmresBreakdownError("zero column in the Hessenberg matrix")
        cs[j] = hjj / r
        sn[j] = hj1 / r
        H[j, j] = np.conj(cs[j]) * hjj + np.conj(sn[j]) * hj1
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = np.conj(cs[j]) * g[j]
        j += 1
        est = abs(g[j]) / bnorm
        history.append(float(est))

        breakdown = after <= 1e-14 * before
        if est <= tol or breakdown:
            x = solution(j)
            true_res = np.linalg.norm(b - matvec(x)) / bnorm
            if true_res <= tol:
                return GmresResult(x, j, float(true_res), True, history, float(est))
            if breakdown:
                raise GmresBreakdownError(
                    f"Arnoldi breakdown at iteration {j} with residual {true_res:.3e} > {tol:g}")
            log.debug("recurrence residual %.3e but true residual %.3e; continuing", est, true_res)
        V[j] = w / after

    if j:
        x = solution(j)
        true_res = np.linalg.norm(b - matvec(x)) / bnorm
    return GmresResult(x, j, float(true_res), bool(true_res <= tol), history, float(est))


# ---------------------------------------------------------------------------
# eigensolvers
# ---------------------------------------------------------------------------

@dataclass
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    n_infinite: int = 0

    def __len__(self):
        return self.values.size

    def subset(self, mask):
        return EigenPairs(self.values[mask], self.vectors[:, mask], self.residuals[mask], self.n_infinite)


def eigen_residuals(k, m, values, vectors) -> np.ndarray:
    """``||K v - lambda M v|| / ||v||`` for each pair."""
    if values.size == 0:
        return np.zeros(0)
    r = k @ vectors - (m @ vectors) * values[None, :]
    return np.linalg.norm(r, axis=0) / np.linalg.norm(vectors, axis=0)


def dense_generalized_eigen(k, m) -> EigenPairs:
    """All finite eigenpairs of ``K v = lambda M v`` by the QZ algorithm.

    Infinite eigenvalues (directions in the null space of ``M``) are counted in
    ``n_infinite`` and dropped.
    """
    k = k.toarray() if sp.issparse(k) else np.asarray(k)
    m = m.toarray() if sp.issparse(m) else np.asarray(m)
    if k.shape != m.shape or k.shape[0] != k.shape[1]:
        raise ValueError("K and M must be square with equal shape")
    mnorm = np.linalg.norm(m)
    if mnorm == 0:
        raise ValueError("M is identically zero")
    knorm = max(np.linalg.norm(k), np.finfo(float).tiny)
    w, vr = scipy.linalg.eig(k.astype(complex), m.astype(complex), homogeneous_eigvals=True)
    alpha, beta = w
    eps = np.finfo(float).eps
    finite = np.abs(beta) > 1e3 * eps * mnorm * np.maximum(np.abs(alpha) / knorm, 1e-3)
    values = alpha[finite] / beta[finite]
    vectors = vr[:, finite]
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    order = np.lexsort((values.imag, values.real))
    values, vectors = values[order], vectors[:, order]
    return EigenPairs(values, vectors, eigen_residuals(k, m, values, vectors), int((~finite).sum()))


class FilterKind(str, Enum):
    REAL_PART_BELOW = "real_part_below"
    VALUE_BELOW = "value_below"


@dataclass(frozen=True)
class SpectralFilter:
    """Eigenvalue selection ``Re(lambda) < bound``.

    ``VALUE_BELOW`` is meant for pencils with a real spectrum; eigenvalues whose
    imaginary part exceeds ``imag_tol`` relative to their modulus are rejected.
    """

    kind: FilterKind
    bound: float
    imag_tol: float = 1e-6

    def accepts(self, values) -> np.ndarray:
        values = np.asarray(values)
        ok = values.real < self.bound
        if self.kind is FilterKind.VALUE_BELOW:
            ok &= np.abs(values.imag) <= self.imag_tol * np.maximum(1.0, np.abs(values))
        return ok


def real_part_below(bound) -> SpectralFilter:
    return SpectralFilter(FilterKind.REAL_PART_BELOW, float(bound))


def value_below(bound) -> SpectralFilter:
    return SpectralFilter(FilterKind.VALUE_BELOW, float(bound))


def _factor_shifted(k, m, sigma, retries=3):
    shift = sigma
    for attempt in range(retries + 1):
        try:
            return shift, sparse_lu((k - shift * m).tocsc())
        except SingularMatrixError:
            if attempt == retries:
                raise
            shift = shift + 1e-6 * (1 + abs(shift)) * (1 + 1j)
            log.debug("singular shifted matrix, retrying with shift %s", shift)


ORDERINGS = ("half_plane", "nearest")


def shift_invert_arnoldi(k, m, select: SpectralFilter, max_pairs=512, sigma=None,
                         eig_tol=EIG_TOL, nev=16, guard=3, seed=0, ordering="half_plane") -> EigenPairs:
    """Eigenpairs of ``K v = lambda M v`` passing ``select``.

    The pencil is factorised once at the shift ``sigma`` (default
    ``c - max(1, |c|)`` for the bound ``c``) and ARPACK runs on the Cayley operator
    ``(K - sigma M)^-1 (K - tau M) = I + (sigma - tau) (K - sigma M)^-1 M`` with
    ``tau = 2 c - sigma``.  This spans the same Krylov
    space as plain shift-invert but orders the spectrum by
    ``|mu| = |lambda - tau| / |lambda - sigma|``, which exceeds 1 exactly on the
    half plane ``Re(lambda) < c``; infinite eigenvalues sit on ``|mu| = 1``.
    The number of requested pairs is doubled until at least ``guard`` converged
    values fall outside the half plane (then the accepted set is complete) or
    ``max_pairs`` accepted pairs are found.  When the request approaches the
    dimension, the dense operator is used instead.  Results are sorted by
    ascending real part.

    ``ordering="nearest"`` runs plain shift-invert ``(K - sigma M)^-1 M`` with
    ``sigma = 0`` by default, so the guard band only certifies eigenvalues
    closer to ``sigma`` than the violators; accepted values further out can
    be missed.
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"ordering must be one of {ORDERINGS}, got {ordering!r}")
    nearest = ordering == "nearest"
    k = sp.csr_matrix(k)
    m = sp.csr_matrix(m)
    n = k.shape[0]
    if k.shape != m.shape or n != k.shape[1]:
        raise ValueError("K and M must be square with equal shape")
    if n == 0:
        return EigenPairs(np.zeros(0, complex), np.zeros((0, 0), complex), np.zeros(0))
    if nearest:
        sigma = 0.0 if sigma is None else sigma
    elif sigma is None or select.bound <= sigma:
        sigma = select.bound - max(1.0, abs(select.bound))
    sigma, lu = _factor_shifted(k, m, sigma)
    # keep the half plane boundary halfway between sigma and tau after a retry
    tau = 2 * select.bound - sigma.real
    scale = sigma - tau
    if nearest:
        tau, scale = np.inf, 0.0

    # Rows and columns where M vanishes only carry infinite eigenvalues; the
    # operator restricted to the others is the Cayley operator of the
    # condensed pencil, which drops that (possibly large) cluster at |mu| = 1.
    keep = np.flatnonzero(np.diff(m.indptr) + np.diff(m.tocsc().indptr) > 0)
    m_cols = m[:, keep]
    p = keep.size
    if p == 0:
        return EigenPairs(np.zeros(0, complex), np.zeros((n, 0), complex), np.zeros(0), n)

    def t_op(x):
        return lu.solve(m_cols @ x)

    if nearest:
        op = spla.LinearOperator((p, p), matvec=lambda x: t_op(x)[keep], dtype=complex)
    else:
        op = spla.LinearOperator((p, p), matvec=lambda x: x + scale * t_op(x)[keep], dtype=complex)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(p) + 1j * rng.standard_normal(p)

    nev = max(1, min(nev, max_pairs + guard))
    retried = False
    while True:
        if nev >= p - 2:
            nu, vecs = np.linalg.eig(lu.solve(m_cols.toarray().astype(complex))[keep])
            complete = True
        else:
            ncv = min(p, max(2 * nev + 1, nev + 20))
            try:
                theta, vecs = spla.eigs(op, k=nev, which="LM", v0=v0, ncv=ncv, tol=0.0,
                                        maxiter=max(1000, 20 * p))
            except spla.ArpackNoConvergence as exc:
                # a request that cuts through a cluster can stall; widen it once
                if retried:
                    raise EigenSolverError(
                        f"ARPACK did not converge ({len(exc.eigenvalues)} of {nev} pairs)",
                        n_converged=len(exc.eigenvalues)) from None
                retried = True
                nev = min(2 * nev, p)
                continue
            nu = theta if nearest else (theta - 1.0) / scale
            complete = False
        if nearest:
            finite = np.abs(nu) > 1e3 * np.finfo(float).eps * np.abs(nu).max(initial=0.0)
            lam = sigma + 1.0 / nu[finite]
        else:
            mu = 1.0 + scale * nu
            gap = np.abs(mu - 1.0)
            finite = gap > 1e3 * np.finfo(float).eps * max(gap.max(initial=0.0), 1.0)
            lam = (tau - sigma * mu[finite]) / (1.0 - mu[finite])
        ok = select.accepts(lam)
        outside = (~ok).sum() + (~finite).sum()
        if complete or outside >= guard or ok.sum() >= max_pairs:
            break
        nev = min(2 * nev, p)

    lam = lam[ok]
    nu = nu[finite][ok]
    order = np.lexsort((lam.imag, lam.real))[:max_pairs]
    lam, nu = lam[order], nu[order]
    # full eigenvectors from the condensed ones: v = T v / nu
    reduced = vecs[:, finite][:, ok][:, order]
    vecs = t_op(reduced) / nu[None, :] if lam.size else np.zeros((n, 0), complex)
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    res = eigen_residuals(k, m, lam, vecs)
    bad = res > eig_tol * max(1.0, spla.norm(k, 1))
    if bad.any():
        log.warning("%d eigenpairs with residual above %.1e (max %.2e)", bad.sum(), eig_tol, res.max())
    return EigenPairs(lam, vecs, res, int(n - p + (~finite).sum()))
