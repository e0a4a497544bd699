"""Sparse Cholesky for repeated screened-Poisson solves and a dense
generalized eigensolver for verification-scale meshes."""
from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from os import PathLike

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, reverse_cuthill_mckee

from .fem import MassMatrix, ScreenedOperator

DENSE_EIG_LIMIT = 4000

_counter_lock = threading.Lock()
_n_factorizations = 0


class NotSPDError(np.linalg.LinAlgError):
    """Cholesky pivot failure: the operator is not symmetric positive definite."""


class VerificationScaleError(ValueError):
    """Mesh too large for the dense eigensolver."""


def factorization_count() -> int:
    """Number of factorizations performed so far in this process."""
    return _n_factorizations


class SPDFactor:
    """Cholesky factor of a sparse SPD matrix under a bandwidth-reducing permutation.

    The matrix is reordered with reverse Cuthill-McKee and factored as a banded
    matrix with LAPACK (``pbtrf``); solves run ``pbtrs`` and allocate their own
    workspace, so one factor can serve concurrent callers.
    """

    def __init__(self, perm: np.ndarray, band: np.ndarray):
        self.perm = perm
        self.inv_perm = np.empty_like(perm)
        self.inv_perm[perm] = np.arange(len(perm))
        self._band = band
        self.n_solves = 0

    @property
    def n(self) -> int:
        return len(self.perm)

    @property
    def bandwidth(self) -> int:
        return self._band.shape[0] - 1

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs for a length-n vector or an (n, k) block of right-hand sides."""
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape[0] != self.n or rhs.ndim > 2:
            raise ValueError(f"right-hand side of shape {rhs.shape} does not match n = {self.n}")
        x = sla.cho_solve_banded((self._band, False), rhs[self.perm], check_finite=False)
        with _counter_lock:
            self.n_solves += 1
        return x[self.inv_perm]


def factorize(A: ScreenedOperator | sp.spmatrix | np.ndarray) -> SPDFactor:
    global _n_factorizations
    mat = A.matrix if isinstance(A, ScreenedOperator) else A
    mat = sp.csr_matrix(mat, dtype=np.float64)
    n = mat.shape[0]
    if mat.shape != (n, n):
        raise ValueError(f"matrix must be square, got {mat.shape}")
    perm = np.asarray(reverse_cuthill_mckee(mat, symmetric_mode=True), dtype=np.int64)
    P = sp.triu(mat[perm][:, perm], format="coo")
    u = int((P.col - P.row).max()) if P.nnz else 0
    band = np.zeros((u + 1, n))
    band[u + P.row - P.col, P.col] = P.data
    try:
        cb = sla.cholesky_banded(band, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(
            f"Cholesky pivot failure ({exc}); check tau > 0 and mesh validity"
        ) from None
    with _counter_lock:
        _n_factorizations += 1
    return SPDFactor(perm, cb)


def solve(factor: SPDFactor, rhs: np.ndarray) -> np.ndarray:
    return factor.solve(rhs)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending generalized eigenpairs with M-orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def complete(self) -> bool:
        return self.k == self.n

    def truncated(self, k: int) -> "Spectrum":
        return Spectrum(self.eigenvalues[:k], self.eigenvectors[:, :k])


def generalized_eigs(L: sp.spmatrix, M: MassMatrix, k: int | None = None) -> Spectrum:
    """Smallest ``k`` eigenpairs of L phi = lambda M phi by dense symmetric reduction.

    Solves the symmetric problem for M^-1/2 L M^-1/2 and maps back with
    phi = M^-1/2 u. Eigenvectors are sign-fixed so that their largest-magnitude
    entry is positive.
    """
    n = M.n
    k = n if k is None else int(k)
    if n > DENSE_EIG_LIMIT:
        raise VerificationScaleError(
            f"{n} vertices exceeds the dense eigensolver limit of {DENSE_EIG_LIMIT} "
            "(verification-scale only)"
        )
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    n_comp, _ = connected_components(sp.csr_matrix(L), directed=False)
    if n_comp > 1:
        raise ValueError(f"mesh has {n_comp} connected components; spectrum needs exactly one")

    s = 1.0 / np.sqrt(M.diag)
    S = sp.csr_matrix(L).toarray()
    S *= s[:, None]
    S *= s[None, :]
    S = 0.5 * (S + S.T)
    if k < n:
        vals, vecs = sla.eigh(S, subset_by_index=[0, k - 1], driver="evr")
    else:
        vals, vecs = sla.eigh(S, driver="evd")
    phi = vecs * s[:, None]

    idx = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    phi *= signs

    # the kernel eigenvalue comes back as +-1e-15 noise
    tol = 1e-12 * max(abs(vals[-1]), 1.0)
    vals = np.where(np.abs(vals) < tol, 0.0, vals)
    vals.setflags(write=False)
    phi.setflags(write=False)
    return Spectrum(vals, phi)


def dump_eigenvalues_csv(spectrum: Spectrum, path: str | PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        for i, lam in enumerate(spectrum.eigenvalues, start=1):
            w.writerow([i, repr(float(lam))])
