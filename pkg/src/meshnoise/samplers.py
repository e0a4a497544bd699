"""Noise models on triangle meshes.

* naive: iid N(0, 1) per vertex
* white: N(0, M^-1), i.e. n / sqrt(M)
* matern: solve (L + tau M) f = sqrt(M) n
* matern-normalized: tau = c * Gamma, output sqrt(Gamma) * f
* explicit: sum_{i<=k} chi_i / (lambda_i + tau) phi_i from a truncated eigenbasis
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .fem import (
    DEFAULT_TAU,
    MassMatrix,
    assemble,
    normalization_gamma,
    screened_operator,
)
from .linalg import SPDFactor, Spectrum, factorize, generalized_eigs
from .mesh import TriMesh
from .rng import RngStream, normal_block

MODELS = ("naive", "white", "matern", "matern-normalized", "explicit")
NO_SCREENING_FLOOR = 1e-8

_CHUNK = 256


def _noise(rng: Optional[RngStream], n: int, noise: Optional[np.ndarray]) -> np.ndarray:
    if noise is not None:
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != (n,):
            raise ValueError(f"injected noise has shape {noise.shape}, expected ({n},)")
        return noise
    if rng is None:
        raise ValueError("either rng or noise must be given")
    return rng.normal(n)


def sample_naive(n: int, rng: RngStream) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.normal(n)


def sample_white(M: MassMatrix, rng: Optional[RngStream] = None, noise=None) -> np.ndarray:
    return _noise(rng, M.n, noise) / M.sqrt()


def sample_matern(
    factor: SPDFactor, M: MassMatrix, rng: Optional[RngStream] = None, noise=None
) -> np.ndarray:
    if factor.n != M.n:
        raise ValueError(f"factor size {factor.n} does not match mass size {M.n}")
    return factor.solve(M.sqrt() * _noise(rng, M.n, noise))


def sample_matern_normalized(
    mesh: TriMesh, c: float, rng: Optional[RngStream] = None, noise=None
) -> np.ndarray:
    """Scale-invariant Matern noise (tau = c * Gamma, output scaled by sqrt(Gamma))."""
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    L, M = assemble(mesh)
    gamma = normalization_gamma(L, M)
    factor = factorize(screened_operator(L, M, c * gamma))
    return np.sqrt(gamma) * sample_matern(factor, M, rng, noise)


def sample_explicit(
    spectrum: Spectrum, tau: float, k: int, rng: Optional[RngStream] = None, chi=None
) -> np.ndarray:
    if not 0 <= k <= spectrum.k:
        raise ValueError(f"k must be in 0..{spectrum.k}, got {k}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if k == 0:
        return np.zeros(spectrum.n)
    chi = _noise(rng, k, chi)
    w = chi / (spectrum.eigenvalues[:k] + tau)
    return spectrum.eigenvectors[:, :k] @ w


class NoiseSampler:
    """A noise model bound to one mesh, with operators built and factored once.

    ``batch`` draws samples for consecutive stream indices; chunks may run on
    several threads against the shared factor and are collected in order, so
    the result does not depend on ``threads``.
    """

    def __init__(
        self,
        model: str,
        mesh: TriMesh,
        tau: Optional[float] = None,
        c: Optional[float] = None,
        k: Optional[int] = None,
        no_screening: bool = False,
        gain: float = 1.0,
        spectrum: Optional[Spectrum] = None,
        operators: Optional[tuple[sp.csr_matrix, MassMatrix]] = None,
    ):
        if model not in MODELS:
            raise ValueError(f"unknown noise model {model!r}; choose from {MODELS}")
        if tau is not None and c is not None:
            raise ValueError("tau and c are mutually exclusive")
        self.model = model
        self.mesh = mesh
        self.gain = float(gain)
        self.L, self.M = operators if operators is not None else assemble(mesh)
        self.n = mesh.n_vertices
        self.gamma = None
        self.scale = 1.0
        self.factor = None
        self.spectrum = spectrum
        self.k = k

        if model == "matern-normalized":
            if c is None:
                raise ValueError("matern-normalized needs c")
            self.gamma = normalization_gamma(self.L, self.M)
            self.tau = c * self.gamma
            self.scale = np.sqrt(self.gamma)
        elif model in ("matern", "explicit"):
            if no_screening:
                self.gamma = normalization_gamma(self.L, self.M)
                self.tau = NO_SCREENING_FLOOR * self.gamma
            else:
                self.tau = DEFAULT_TAU if tau is None else float(tau)
        else:
            self.tau = tau if tau is not None else DEFAULT_TAU
        if model in ("matern", "explicit", "matern-normalized") and not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

        if model in ("matern", "matern-normalized"):
            self.factor = factorize(screened_operator(self.L, self.M, self.tau))
        if model == "explicit":
            if self.spectrum is None:
                self.spectrum = generalized_eigs(self.L, self.M, k)
            self.k = self.spectrum.k if k is None else int(k)

    @property
    def noise_size(self) -> int:
        return self.k if self.model == "explicit" else self.n

    def from_noise(self, noise: np.ndarray) -> np.ndarray:
        """Map standard-normal draws of shape (..., noise_size) to fields (..., n)."""
        noise = np.asarray(noise, dtype=np.float64)
        if self.model == "naive":
            out = noise
        elif self.model == "white":
            out = noise / self.M.sqrt()
        elif self.model == "explicit":
            w = noise / (self.spectrum.eigenvalues[: self.k] + self.tau)
            out = w @ self.spectrum.eigenvectors[:, : self.k].T
        else:
            rhs = (noise * self.M.sqrt()).T
            out = self.scale * self.factor.solve(rhs).T
        return self.gain * out

    def sample(self, rng: RngStream) -> np.ndarray:
        return self.from_noise(rng.normal(self.noise_size))

    def batch(
        self, seed: int, count: int, start: int = 0, threads: int = 1, substream: int = 0
    ) -> np.ndarray:
        """Samples for streams start .. start+count-1 as a (count, n) array."""
        bounds = [(s, min(s + _CHUNK, start + count)) for s in range(start, start + count, _CHUNK)]

        def work(span):
            noise = normal_block(seed, range(*span), self.noise_size, substream)
            return self.from_noise(noise)

        if threads > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(work, bounds))
        else:
            parts = [work(b) for b in bounds]
        if not parts:
            return np.empty((0, self.n))
        return np.vstack(parts)
