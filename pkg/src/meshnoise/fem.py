"""Linear FEM operators on triangle meshes: lumped mass, cotangent stiffness,
the screened operator L + tau*M and the spectral normalization factor."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from os import PathLike
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import DEGENERATE_REL_AREA, DegenerateFaceError, TriMesh

DEFAULT_TAU = 100.0


@dataclass(frozen=True, eq=False)
class MassMatrix:
    """Diagonal (lumped) mass matrix stored as its diagonal."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.array(self.diag, dtype=np.float64).ravel()
        if np.any(~np.isfinite(d)) or np.any(d <= 0):
            bad = int(np.flatnonzero(~(d > 0))[0])
            raise ValueError(f"mass entry {bad} is not positive ({d[bad]})")
        d.setflags(write=False)
        object.__setattr__(self, "diag", d)

    @property
    def n(self) -> int:
        return len(self.diag)

    def total(self) -> float:
        return float(self.diag.sum())

    def sqrt(self) -> np.ndarray:
        return np.sqrt(self.diag)

    def as_sparse(self) -> sp.csr_matrix:
        return sp.diags(self.diag, format="csr")

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class ScreenedOperator:
    matrix: sp.csr_matrix
    tau: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class NoiseParams:
    """Screening choice: a fixed ``tau`` or the normalized factor ``c`` (tau = c * Gamma)."""

    tau: Optional[float] = None
    c: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if (self.tau is None) == (self.c is None):
            raise ValueError("exactly one of tau and c must be given")
        value = self.tau if self.tau is not None else self.c
        if not value > 0:
            raise ValueError(f"screening parameter must be positive, got {value}")

    @property
    def normalized(self) -> bool:
        return self.c is not None


def _checked_areas(mesh: TriMesh) -> np.ndarray:
    areas = mesh.face_areas()
    threshold = DEGENERATE_REL_AREA * mesh.bbox_diagonal() ** 2
    bad = np.flatnonzero(~(areas > threshold))
    if len(bad):
        raise DegenerateFaceError(int(bad[0]), float(areas[bad[0]]))
    return areas


def lumped_mass(mesh: TriMesh) -> MassMatrix:
    """Barycentric lumped mass: one third of the area of each incident face."""
    areas = _checked_areas(mesh)
    diag = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(diag, mesh.faces[:, k], areas / 3.0)
    unused = np.flatnonzero(diag == 0)
    if len(unused):
        raise ValueError(f"vertex {int(unused[0])} belongs to no face")
    return MassMatrix(diag)


def cotan_laplacian(mesh: TriMesh) -> sp.csr_matrix:
    """Positive semidefinite cotangent stiffness matrix.

    Off-diagonals are ``-(cot a + cot b) / 2`` over the angles opposite each
    edge (a single term on boundary edges); the diagonal makes rows sum to zero.
    Obtuse angles give negative weights and are kept as is.
    """
    _checked_areas(mesh)
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = f[:, (k + 1) % 3], f[:, (k + 2) % 3], f[:, k]
        a = v[i] - v[o]
        b = v[j] - v[o]
        cot = np.einsum("ij,ij->i", a, b) / np.linalg.norm(np.cross(a, b), axis=1)
        w = -0.5 * cot
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    L = (off + sp.diags(diag)).tocsr()
    L.sum_duplicates()
    L.sort_indices()
    return L


def screened_operator(L: sp.spmatrix, M: MassMatrix, tau: float) -> ScreenedOperator:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if L.shape != (M.n, M.n):
        raise ValueError(f"Laplacian shape {L.shape} does not match mass size {M.n}")
    A = (sp.csr_matrix(L) + sp.diags(tau * M.diag)).tocsr()
    A.sort_indices()
    return ScreenedOperator(A, float(tau))


def normalization_gamma(L: sp.spmatrix, M: MassMatrix) -> float:
    """Frobenius norm of M^-1/2 L M^-1/2, so that Gamma^2 equals the sum of squared eigenvalues."""
    if L.shape != (M.n, M.n):
        raise ValueError(f"Laplacian shape {L.shape} does not match mass size {M.n}")
    C = sp.coo_matrix(L)
    d = M.diag
    return float(np.sqrt(np.sum(C.data**2 / (d[C.row] * d[C.col]))))


def assemble(mesh: TriMesh) -> tuple[sp.csr_matrix, MassMatrix]:
    """Laplacian and mass matrix of ``mesh``."""
    return cotan_laplacian(mesh), lumped_mass(mesh)


def dump_mass_csv(M: MassMatrix, path: str | PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "mass"])
        for i, m in enumerate(M.diag):
            w.writerow([i, repr(float(m))])


def dump_laplacian_csv(L: sp.spmatrix, path: str | PathLike) -> None:
    C = sp.coo_matrix(L)
    order = np.lexsort((C.col, C.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for r, c, x in zip(C.row[order], C.col[order], C.data[order]):
            w.writerow([int(r), int(c), repr(float(x))])
