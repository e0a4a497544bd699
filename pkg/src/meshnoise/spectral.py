"""Spectral coefficients, reconstruction, and the Matern spectral law.

Mode indices are 1-based in user-facing APIs: index 1 is the constant mode
with eigenvalue 0, so the first non-constant mode is index 2.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from os import PathLike

import numpy as np

from .fem import MassMatrix
from .linalg import Spectrum


def inner_product_m(f: np.ndarray, g: np.ndarray, M: MassMatrix) -> float:
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape or f.shape[0] != M.n:
        raise ValueError(f"length mismatch: {f.shape}, {g.shape}, mass {M.n}")
    return float(np.dot(M.diag * f, g))


def spectral_coeffs(f: np.ndarray, spectrum: Spectrum, M: MassMatrix) -> np.ndarray:
    """Project ``f`` onto the eigenbasis: f_hat_i = f^T M phi_i.

    ``f`` may be a single field (n,) or a batch (N, n); the result has shape
    (k,) or (N, k) accordingly.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != spectrum.n or M.n != spectrum.n:
        raise ValueError(
            f"field length {f.shape[-1]} / mass {M.n} do not match spectrum size {spectrum.n}"
        )
    return (f * M.diag) @ spectrum.eigenvectors


def reconstruct(coeffs: np.ndarray, spectrum: Spectrum) -> np.ndarray:
    """Linear combination of the first len(coeffs) eigenvectors (batched over leading axes)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    k = coeffs.shape[-1]
    if k > spectrum.k:
        raise ValueError(f"{k} coefficients for a spectrum with {spectrum.k} modes")
    return coeffs @ spectrum.eigenvectors[:, :k].T


def theoretical_variance(lam, tau: float):
    """Variance 1 / (lambda + tau)^2 of a Matern spectral coefficient."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return 1.0 / (np.asarray(lam, dtype=np.float64) + tau) ** 2


@dataclass(frozen=True)
class WeylTail:
    k: int
    tail: float
    bound: float


def weyl_tail(eigenvalues: np.ndarray, k: int, tau: float, area: float) -> WeylTail:
    """Tail variance sum_{i>=k} 1/(lambda_i + tau)^2 and its A^2 / i^2 over-bound.

    ``k`` is 1-based; k past the end of the spectrum gives an empty (zero) tail.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    n = len(lam)
    if n == 0:
        raise ValueError("empty spectrum")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        return WeylTail(k, 0.0, 0.0)
    i = np.arange(k, n + 1, dtype=np.float64)
    tail = float(np.sum(theoretical_variance(lam[k - 1 :], tau)))
    bound = float(np.sum(area**2 / i**2))
    return WeylTail(k, tail, bound)


def weyl_slope(eigenvalues: np.ndarray, lo: int = 20, hi: int = 100) -> float:
    """Least-squares slope of lambda_j against j over the 1-based index range [lo, hi]."""
    j = np.arange(lo, hi + 1)
    lam = np.asarray(eigenvalues)[lo - 1 : hi]
    return float(np.polyfit(j, lam, 1)[0])


def dump_spectrum_csv(
    spectrum: Spectrum, coeffs: np.ndarray | None, path: str | PathLike
) -> None:
    """CSV of (index, eigenvalue, coefficient); coefficient column left blank when absent."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue", "coefficient"])
        for i, lam in enumerate(spectrum.eigenvalues):
            c = "" if coeffs is None else repr(float(coeffs[i]))
            w.writerow([i + 1, repr(float(lam)), c])
