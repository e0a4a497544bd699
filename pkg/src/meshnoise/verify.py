"""Monte-Carlo checks that a noise model is triangulation agnostic.

Three spectral properties are tested on sampled noise:

1. spectral coefficients of different modes are uncorrelated;
2. modes with matching eigenvalues on two triangulations of one surface have
   matching distributions (2-Wasserstein distance of fitted Gaussians);
3. the variance carried by modes above some index k is small.

A fourth check runs the normalized sampler on rescaled copies of a mesh.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from os import PathLike
from typing import Iterable, Optional, Sequence

import numpy as np

from .fem import assemble
from .linalg import Spectrum, generalized_eigs
from .mesh import TriMesh, scale
from .rng import RngStream
from .samplers import NoiseSampler, sample_matern_normalized
from .spectral import theoretical_variance, weyl_tail

DEFAULT_HIST_INDICES = (2, 10, 30)
DEFAULT_BINS = 64
CORRELATION_THRESHOLD = 0.03
SCALE_THRESHOLD = 1e-8
SLACK_SIGMAS = 3.0
MIN_SAMPLES = 100


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class IndexStats:
    index: int
    eigenvalue: float
    sample_count: int
    empirical_mean: float
    empirical_variance: float
    bin_edges: list[float] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)


@dataclass
class SpectralStats:
    """Per-mode moments of projected samples, plus the retained joint samples.

    ``total_variance`` is the summed empirical variance over *all* modes,
    obtained from the M-norm of the samples (valid only for a complete
    spectrum); it lets tail sums be formed without projecting onto every mode.
    """

    records: list[IndexStats]
    samples: np.ndarray
    all_eigenvalues: np.ndarray
    total_variance: Optional[float]
    sample_count: int
    area: float

    @property
    def n_modes(self) -> int:
        return len(self.all_eigenvalues)

    @property
    def indices(self) -> list[int]:
        return [r.index for r in self.records]

    def record(self, index: int) -> IndexStats:
        for r in self.records:
            if r.index == index:
                return r
        raise KeyError(index)

    def variances(self) -> np.ndarray:
        return np.array([r.empirical_variance for r in self.records])

    def eigenvalues(self) -> np.ndarray:
        return np.array([r.eigenvalue for r in self.records])


def _histogram(x: np.ndarray, bins: int) -> tuple[list[float], list[int]]:
    mu, sd = x.mean(), x.std()
    if sd == 0:
        sd = 1.0
    edges = np.linspace(mu - 4 * sd, mu + 4 * sd, bins + 1)
    # outliers land in the edge bins so counts always sum to the sample count
    counts, _ = np.histogram(np.clip(x, edges[0], edges[-1]), bins=edges)
    return edges.tolist(), counts.astype(int).tolist()


def empirical_spectral_stats(
    sampler: NoiseSampler,
    spectrum: Spectrum,
    N: int,
    indices: Iterable[int],
    seed: int = 0,
    start: int = 0,
    threads: int = 1,
    bins: int = DEFAULT_BINS,
    histogram_indices: Optional[Iterable[int]] = None,
    chunk: int = 2000,
) -> SpectralStats:
    """Draw N samples and accumulate per-mode statistics for 1-based ``indices``.

    Histograms (``bins`` bins over +-4 empirical sigma) are built for
    ``histogram_indices`` (default: all requested indices).
    """
    indices = sorted(set(int(i) for i in indices))
    if N < MIN_SAMPLES:
        raise InsufficientSamplesError(f"need at least {MIN_SAMPLES} samples, got {N}")
    if not indices or indices[0] < 1 or indices[-1] > spectrum.k:
        raise ValueError(f"indices must lie in 1..{spectrum.k}")
    hist_set = set(indices if histogram_indices is None else histogram_indices)

    cols = np.array(indices) - 1
    basis = spectrum.eigenvectors[:, cols]
    mass = sampler.M.diag
    coeffs = np.empty((N, len(indices)))
    energy = 0.0
    field_sum = np.zeros(spectrum.n)
    for lo in range(0, N, chunk):
        hi = min(lo + chunk, N)
        f = sampler.batch(seed, hi - lo, start=start + lo, threads=threads)
        coeffs[lo:hi] = (f * mass) @ basis
        energy += float(np.einsum("ij,ij,j->", f, f, mass))
        field_sum += f.sum(axis=0)

    total = None
    if spectrum.complete:
        mean_field = field_sum / N
        total = (energy / N - float(mean_field @ (mass * mean_field))) * N / (N - 1)

    records = []
    for col, idx in enumerate(indices):
        x = coeffs[:, col]
        edges, counts = _histogram(x, bins) if idx in hist_set else ([], [])
        records.append(
            IndexStats(
                index=idx,
                eigenvalue=float(spectrum.eigenvalues[idx - 1]),
                sample_count=N,
                empirical_mean=float(x.mean()),
                empirical_variance=float(x.var(ddof=1)),
                bin_edges=edges,
                counts=counts,
            )
        )
    return SpectralStats(
        records, coeffs, np.asarray(spectrum.eigenvalues), total, N, sampler.M.total()
    )


# --------------------------------------------------------------------------
# property checks


def check_property1(
    stats: SpectralStats, block: int = 30, threshold: float = CORRELATION_THRESHOLD
) -> dict:
    """Max off-diagonal |Pearson correlation| among the first ``block`` recorded modes."""
    if stats.sample_count < MIN_SAMPLES:
        raise InsufficientSamplesError(
            f"need at least {MIN_SAMPLES} samples, got {stats.sample_count}"
        )
    x = stats.samples[:, :block]
    if x.shape[1] < 2:
        raise ValueError("need at least two modes for a correlation check")
    corr = np.corrcoef(x, rowvar=False)
    off = np.abs(corr[~np.eye(len(corr), dtype=bool)])
    worst = float(off.max())
    flat = int(np.argmax(np.where(np.eye(len(corr), dtype=bool), -1.0, np.abs(corr))))
    i, j = divmod(flat, len(corr))
    return {
        "max_abs_correlation": worst,
        "worst_pair": [stats.indices[i], stats.indices[j]],
        "threshold": threshold,
        "block": int(x.shape[1]),
        "sample_count": stats.sample_count,
        "pass": bool(worst <= threshold),
    }


def match_eigenvalues(
    lam_a: Sequence[float], lam_b: Sequence[float], match_tol: float
) -> list[tuple[int, int]]:
    """Greedy value-based matching; returns positions (a, b) into the two lists.

    Each ``a`` in order takes the closest unmatched ``b`` if
    |lam_a - lam_b| <= match_tol * max(lam_a, lam_b), with a small absolute
    floor so the zero eigenvalues of the constant modes can match.
    """
    lam_a = np.asarray(lam_a, dtype=np.float64)
    lam_b = np.asarray(lam_b, dtype=np.float64)
    floor = 1e-8 * max(np.abs(lam_a).max(initial=0), np.abs(lam_b).max(initial=0), 1.0)
    used = np.zeros(len(lam_b), dtype=bool)
    pairs = []
    for a, la in enumerate(lam_a):
        d = np.abs(lam_b - la)
        d[used] = np.inf
        if not np.isfinite(d).any():
            break
        b = int(np.argmin(d))
        if d[b] <= match_tol * max(la, lam_b[b]) + floor:
            used[b] = True
            pairs.append((a, b))
    return pairs


def check_property2(
    stats_a: SpectralStats,
    stats_b: SpectralStats,
    tau: float,
    match_tol: float = 0.1,
    max_pairs: Optional[int] = 30,
) -> dict:
    """Compare fitted zero-mean Gaussians of eigenvalue-matched modes.

    For each pair the empirical distance is W2 = |sigma_a - sigma_b|, the
    theoretical bound |lam_a - lam_b| / tau^2, and the Monte-Carlo slack is
    three standard errors of the sigma difference (variance standard error
    Var * sqrt(2 / (N - 1)), propagated to sigma). The squared quantities are
    recorded as well.
    """
    pairs = match_eigenvalues(stats_a.eigenvalues(), stats_b.eigenvalues(), match_tol)
    if max_pairs is not None:
        pairs = pairs[:max_pairs]
    if not pairs:
        raise ValueError("no eigenvalue pairs matched within tolerance")
    out = []
    for a, b in pairs:
        ra, rb = stats_a.records[a], stats_b.records[b]
        sa = np.sqrt(ra.empirical_variance)
        sb = np.sqrt(rb.empirical_variance)
        se_a = ra.empirical_variance * np.sqrt(2.0 / (ra.sample_count - 1)) / (2 * sa) if sa > 0 else 0.0
        se_b = rb.empirical_variance * np.sqrt(2.0 / (rb.sample_count - 1)) / (2 * sb) if sb > 0 else 0.0
        slack = SLACK_SIGMAS * float(np.hypot(se_a, se_b))
        w2 = float(abs(sa - sb))
        bound = float(abs(ra.eigenvalue - rb.eigenvalue) / tau**2)
        theory = float(abs(1.0 / (ra.eigenvalue + tau) - 1.0 / (rb.eigenvalue + tau)))
        out.append(
            {
                "index_a": ra.index,
                "index_b": rb.index,
                "lambda_a": ra.eigenvalue,
                "lambda_b": rb.eigenvalue,
                "sigma_a": float(sa),
                "sigma_b": float(sb),
                "w2": w2,
                "w2_squared": w2**2,
                "theoretical_w2": theory,
                "bound": bound,
                "bound_squared": bound**2,
                "slack": slack,
                "pass": bool(w2 <= bound + slack),
            }
        )
    return {
        "tau": float(tau),
        "match_tol": float(match_tol),
        "pairs": out,
        "n_pairs": len(out),
        "n_failed": sum(not p["pass"] for p in out),
        "pass": all(p["pass"] for p in out),
    }


def empirical_tail_variance(stats: SpectralStats, k: int) -> float:
    """Summed empirical variance of modes k..n (1-based)."""
    if k > stats.n_modes:
        return 0.0
    if stats.total_variance is not None:
        head = [r.empirical_variance for r in stats.records if r.index < k]
        if len(head) != k - 1:
            raise ValueError(f"stats must cover modes 1..{k - 1} to form the tail at k = {k}")
        return float(stats.total_variance - sum(head))
    tail = [r.empirical_variance for r in stats.records if r.index >= k]
    if len(tail) != stats.n_modes - k + 1:
        raise ValueError(f"stats must cover modes {k}..{stats.n_modes} for a truncated spectrum")
    return float(sum(tail))


def choose_tail_index(eigenvalues: np.ndarray, tau: float, epsilon: float) -> int:
    """Smallest 1-based k whose theoretical Matern tail is below epsilon / 2."""
    var = theoretical_variance(eigenvalues, tau)
    tails = np.cumsum(var[::-1])[::-1]
    below = np.flatnonzero(tails < epsilon / 2)
    return int(below[0]) + 1 if len(below) else len(eigenvalues) + 1


def check_property3(
    stats: SpectralStats, k: int, epsilon: float, tau: Optional[float] = None
) -> dict:
    """Pass iff the empirical variance of modes k..n is below ``epsilon``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    tail = empirical_tail_variance(stats, k)
    report = {
        "k": int(k),
        "tail_variance": tail,
        "threshold": float(epsilon),
        "pass": bool(tail < epsilon),
    }
    if tau is not None:
        theory = weyl_tail(stats.all_eigenvalues, k, tau, stats.area)
        report["theoretical_tail"] = theory.tail
        report["analytic_bound"] = theory.bound
    return report


# --------------------------------------------------------------------------
# scale invariance


def scale_invariance_test(
    mesh: TriMesh,
    c: float,
    scales: Iterable[float],
    seed: int = 0,
    stream: int = 0,
    fixed_tau: Optional[float] = None,
    threshold: float = SCALE_THRESHOLD,
) -> dict:
    """Normalized Matern noise with one noise draw on rescaled copies of ``mesh``.

    Deviation is max |f_k - f_1| / max |f_1| against the unscaled field. With
    ``fixed_tau`` the same experiment is repeated without normalization, for
    reporting only.
    """
    scales = [float(s) for s in scales]
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    noise = RngStream(seed, stream).normal(mesh.n_vertices)
    ref = sample_matern_normalized(mesh, c, noise=noise)
    per_scale = []
    for s in scales:
        f = sample_matern_normalized(scale(mesh, s), c, noise=noise)
        per_scale.append(float(np.abs(f - ref).max() / np.abs(ref).max()))
    worst = max(per_scale) if per_scale else 0.0
    report = {
        "c": float(c),
        "scales": scales,
        "relative_deviation": per_scale,
        "max_relative_deviation": worst,
        "threshold": threshold,
        "pass": bool(worst <= threshold),
    }
    if fixed_tau is not None:
        fixed = []
        base = NoiseSampler("matern", mesh, tau=fixed_tau).from_noise(noise)
        for s in scales:
            f = NoiseSampler("matern", scale(mesh, s), tau=fixed_tau).from_noise(noise)
            fixed.append(float(np.abs(f - base).max() / np.abs(base).max()))
        report["fixed_tau"] = float(fixed_tau)
        report["fixed_tau_relative_deviation"] = fixed
    return report


# --------------------------------------------------------------------------
# full runs


@dataclass
class VerifyConfig:
    model: str = "matern"
    tau: Optional[float] = None
    c: Optional[float] = None
    samples: int = 20000
    seed: int = 0
    block: int = 30
    n_pairs: int = 30
    match_tol: float = 0.1
    correlation_threshold: float = CORRELATION_THRESHOLD
    epsilon: Optional[float] = None
    epsilon_rel: float = 0.5
    k: Optional[int] = None
    histogram_indices: tuple[int, ...] = DEFAULT_HIST_INDICES
    bins: int = DEFAULT_BINS
    scales: Optional[tuple[float, ...]] = None
    no_screening: bool = False
    threads: int = 1

    def as_dict(self) -> dict:
        d = asdict(self)
        d["histogram_indices"] = list(self.histogram_indices)
        d["scales"] = None if self.scales is None else list(self.scales)
        return d


@dataclass
class AgnosticismReport:
    property1: dict
    property2: Optional[dict]
    property3: dict
    scale: Optional[dict]
    config: dict = field(default_factory=dict)
    meshes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        parts = [self.property1, self.property2, self.property3, self.scale]
        return all(p["pass"] for p in parts if p is not None)

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "meshes": self.meshes,
            "property1": self.property1,
            "property2": self.property2,
            "property3": self.property3,
            "scale": self.scale,
            "pass": self.passed,
        }


def run_verification(
    meshes: Sequence[TriMesh], cfg: VerifyConfig
) -> tuple[AgnosticismReport, list[SpectralStats]]:
    """Sample every mesh, compute spectral statistics and run all property checks.

    The first mesh is the reference for property 2 and for epsilon (by default
    ``epsilon_rel`` times its total theoretical variance). Unless given, k is
    the smallest index whose theoretical tail is below epsilon / 2 on every mesh.
    """
    if not meshes:
        raise ValueError("need at least one mesh")
    prepared = []
    for mesh in meshes:
        L, M = assemble(mesh)
        sampler = NoiseSampler(
            cfg.model, mesh, tau=cfg.tau, c=cfg.c, no_screening=cfg.no_screening,
            operators=(L, M),
        )
        spectrum = (
            sampler.spectrum
            if sampler.spectrum is not None and sampler.spectrum.complete
            else generalized_eigs(L, M)
        )
        prepared.append((mesh, sampler, spectrum))

    ref_sampler, ref_spectrum = prepared[0][1], prepared[0][2]
    tau = ref_sampler.tau
    theory_total = float(np.sum(theoretical_variance(ref_spectrum.eigenvalues, tau)))
    epsilon = cfg.epsilon if cfg.epsilon is not None else cfg.epsilon_rel * theory_total
    k = cfg.k
    if k is None:
        k = max(choose_tail_index(sp.eigenvalues, tau, epsilon) for _, _, sp in prepared)

    stats_list = []
    for mesh, sampler, spectrum in prepared:
        top = max(cfg.block, cfg.n_pairs + 10, k - 1, max(cfg.histogram_indices, default=1))
        top = min(top, spectrum.k)
        stats_list.append(
            empirical_spectral_stats(
                sampler, spectrum, cfg.samples, range(1, top + 1), seed=cfg.seed,
                threads=cfg.threads, bins=cfg.bins,
                histogram_indices=[i for i in cfg.histogram_indices if i <= top],
            )
        )

    p1_each = [check_property1(s, cfg.block, cfg.correlation_threshold) for s in stats_list]
    worst = max(p1_each, key=lambda r: r["max_abs_correlation"])
    property1 = {
        "max_abs_correlation": worst["max_abs_correlation"],
        "threshold": cfg.correlation_threshold,
        "block": cfg.block,
        "per_mesh": p1_each,
        "pass": all(r["pass"] for r in p1_each),
    }

    property2 = None
    if len(stats_list) > 1:
        comparisons = []
        for j, stats in enumerate(stats_list[1:], start=1):
            frag = check_property2(stats_list[0], stats, tau, cfg.match_tol, cfg.n_pairs)
            frag["meshes"] = [0, j]
            comparisons.append(frag)
        property2 = {
            "tau": tau,
            "match_tol": cfg.match_tol,
            "comparisons": comparisons,
            "pass": all(c["pass"] for c in comparisons),
        }

    p3_each = [check_property3(s, k, epsilon, tau) for s in stats_list]
    property3 = {
        "k": k,
        "epsilon": epsilon,
        "tail_variance": max(r["tail_variance"] for r in p3_each),
        "per_mesh": p3_each,
        "pass": all(r["pass"] for r in p3_each),
    }

    scale_report = None
    if cfg.scales:
        c = cfg.c
        if c is None:
            c = tau / ref_sampler.gamma if ref_sampler.gamma else tau / _gamma_of(meshes[0])
        scale_report = scale_invariance_test(
            meshes[0], c, cfg.scales, seed=cfg.seed,
            fixed_tau=cfg.tau if cfg.tau is not None else tau,
        )

    report = AgnosticismReport(
        property1=property1,
        property2=property2,
        property3=property3,
        scale=scale_report,
        config=cfg.as_dict(),
        meshes=[
            {"n_vertices": m.n_vertices, "n_faces": m.n_faces, "tau": s.tau,
             "area": s.M.total()}
            for m, s, _ in prepared
        ],
    )
    return report, stats_list


def _gamma_of(mesh: TriMesh) -> float:
    from .fem import normalization_gamma

    return normalization_gamma(*assemble(mesh))


def write_histograms_csv(stats: SpectralStats, path: str | PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "bin_left", "bin_right", "count"])
        for r in stats.records:
            for b, count in enumerate(r.counts):
                w.writerow([r.index, repr(r.bin_edges[b]), repr(r.bin_edges[b + 1]), count])
