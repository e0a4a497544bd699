"""Command-line front end.

Exit codes: 0 success / all checks pass, 1 a check failed, 2 usage or I/O
error, 3 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .fem import DEFAULT_TAU, assemble, dump_laplacian_csv, dump_mass_csv
from .flow import run_fmdemo
from .linalg import (
    DENSE_EIG_LIMIT,
    NotSPDError,
    VerificationScaleError,
    dump_eigenvalues_csv,
    generalized_eigs,
)
from .mesh import MeshError, TriMesh, bisect_edges, load_obj, load_ply, save_ply, subdivide_midpoint, validate
from .primitives import builtin
from .samplers import MODELS, NoiseSampler
from .verify import DEFAULT_HIST_INDICES, VerifyConfig, run_verification, write_histograms_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_ENV = "MESHNOISE_OUTPUT_DIR"


class UsageError(Exception):
    pass


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value

    return parse


def load_mesh(spec: str) -> TriMesh:
    """Load ``path.obj``, ``path.ply`` or a ``builtin:<name>[:arg]`` mesh."""
    if spec.startswith("builtin:"):
        try:
            return builtin(spec[len("builtin:") :])
        except ValueError as exc:
            raise UsageError(str(exc))
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"mesh file not found: {path}")
    if path.suffix.lower() == ".ply":
        return load_ply(path)[0]
    return load_obj(path)


def _checked(mesh: TriMesh, label: str) -> TriMesh:
    report = validate(mesh)
    if not report.is_manifold:
        raise UsageError(f"{label}: mesh is not edge-manifold")
    if report.degenerate_faces:
        raise UsageError(f"{label}: degenerate face {report.degenerate_faces[0]}")
    return mesh


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _config(args) -> dict:
    # scheduling and destination do not affect results; keep them out so reruns are byte-identical
    skip = {"func", "out", "threads"}
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items() if k not in skip}


# --------------------------------------------------------------------------
# subcommands


def cmd_sample(args) -> int:
    if args.model == "matern-normalized" and args.c is None:
        raise UsageError("--model matern-normalized requires --c")
    if args.c is not None and args.model != "matern-normalized":
        raise UsageError("--c only applies to --model matern-normalized")
    mesh = _checked(load_mesh(args.mesh), args.mesh)
    out = _out_dir(args)
    tau = args.tau if args.tau is not None or args.c is not None else DEFAULT_TAU
    t0 = time.perf_counter()
    sampler = NoiseSampler(
        args.model, mesh, tau=tau if args.c is None else None, c=args.c, k=args.k,
        no_screening=args.no_screening, gain=args.gain,
    )
    t_setup = time.perf_counter() - t0

    t0 = time.perf_counter()
    samples = np.stack(
        [sampler.batch(args.seed, args.n, substream=c, threads=args.threads) for c in range(args.channels)],
        axis=-1,
    )
    t_sample = (time.perf_counter() - t0) / max(args.n * args.channels, 1)

    names = ["noise"] if args.channels == 1 else [f"noise{c}" for c in range(args.channels)]
    for i in range(args.n):
        stem = out / f"{args.prefix}_{i:04d}"
        fields = {name: samples[i, :, c] for c, name in enumerate(names)}
        if args.format in ("ply", "both"):
            save_ply(mesh, fields, stem.with_suffix(".ply"))
        if args.format in ("csv", "both"):
            with open(stem.with_suffix(".csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["vertex"] + names)
                for v in range(mesh.n_vertices):
                    w.writerow([v] + [repr(float(samples[i, v, c])) for c in range(args.channels)])
    _write_json(
        out / f"{args.prefix}_run.json",
        {"config": _config(args), "tau": sampler.tau, "gamma": sampler.gamma,
         "n_vertices": mesh.n_vertices},
    )
    label = "factorization" if sampler.factor is not None else "setup"
    print(f"{label} time: {t_setup:.6f} s")
    print(f"per-sample time: {t_sample:.6f} s")
    print(f"wrote {args.n} sample(s) to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    meshes = [_checked(load_mesh(m), m) for m in args.mesh]
    base = meshes[0]
    refined = base
    for _ in range(args.subdivide):
        refined = subdivide_midpoint(refined)
        meshes.append(refined)
    if args.bisect_above is not None:
        edges = base.edges()
        mid = 0.5 * (base.vertices[edges[:, 0]] + base.vertices[edges[:, 1]])
        chosen = edges[mid[:, args.bisect_axis] > args.bisect_above]
        meshes.append(bisect_edges(base, map(tuple, chosen)))
    for m in meshes:
        if m.n_vertices > DENSE_EIG_LIMIT:
            raise VerificationScaleError(
                f"{m.n_vertices} vertices exceeds the dense eigensolver limit of {DENSE_EIG_LIMIT}"
            )

    cfg = VerifyConfig(
        model=args.model, tau=args.tau, c=args.c, samples=args.n, seed=args.seed,
        block=args.block, n_pairs=args.pairs, match_tol=args.match_tol,
        epsilon=args.epsilon, epsilon_rel=args.epsilon_rel, k=args.k,
        histogram_indices=args.indices, scales=args.scales,
        no_screening=args.no_screening, threads=args.threads,
    )
    if cfg.model == "matern-normalized" and cfg.c is None:
        raise UsageError("--model matern-normalized requires --c")
    report, stats = run_verification(meshes, cfg)
    out = _out_dir(args)
    payload = report.as_dict()
    payload["config"] = {**payload["config"], "cli": _config(args)}
    _write_json(out / "report.json", payload)
    for i, s in enumerate(stats):
        write_histograms_csv(s, out / f"histograms_mesh{i}.csv")

    for name in ("property1", "property2", "property3", "scale"):
        frag = payload[name]
        if frag is not None:
            print(f"{name}: {'PASS' if frag['pass'] else 'FAIL'}")
    print(f"report: {out / 'report.json'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_spectrum(args) -> int:
    mesh = _checked(load_mesh(args.mesh), args.mesh)
    out = _out_dir(args)
    L, M = assemble(mesh)
    spectrum = generalized_eigs(L, M, args.k)
    dump_eigenvalues_csv(spectrum, out / "eigenvalues.csv")
    if args.eigenvectors:
        count = min(args.eigenvectors, spectrum.k)
        fields = {f"phi_{i + 1}": spectrum.eigenvectors[:, i] for i in range(count)}
        save_ply(mesh, fields, out / "eigenvectors.ply")
    if args.dump_operators:
        dump_mass_csv(M, out / "mass.csv")
        dump_laplacian_csv(L, out / "laplacian.csv")
    print(f"lambda_1 = {spectrum.eigenvalues[0]:.3e}, lambda_{spectrum.k} = {spectrum.eigenvalues[-1]:.6g}")
    print(f"wrote {out / 'eigenvalues.csv'}")
    return EXIT_OK


def cmd_fmdemo(args) -> int:
    mesh = _checked(load_mesh(args.mesh), args.mesh)
    if mesh.n_vertices > DENSE_EIG_LIMIT:
        raise VerificationScaleError(
            f"{mesh.n_vertices} vertices exceeds the dense eigensolver limit of {DENSE_EIG_LIMIT}"
        )
    out = _out_dir(args)
    result = run_fmdemo(
        mesh, tau=args.tau, tau_target=args.tau_target, samples=args.n, steps=args.steps,
        seed=args.seed, n_modes=args.modes, metric_samples=args.metric_samples,
        gain=args.gain, threads=args.threads,
    )
    metrics = result.metrics()
    checks = {
        "variance": metrics["per_mode_variance_error"] <= args.variance_tol,
        "mmd": metrics["mmd_ratio"] <= args.mmd_ratio_max,
    }
    payload = {
        "config": _config(args),
        "metrics": metrics,
        "per_mode_variance": result.per_mode_variance,
        "target_variance": result.target_variance,
        "convergence": result.convergence,
        "oracle_convergence": result.oracle_convergence,
        "thresholds": {"variance_tol": args.variance_tol, "mmd_ratio_max": args.mmd_ratio_max},
        "checks": checks,
        "pass": all(checks.values()),
    }
    _write_json(out / "metrics.json", payload)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["table", "steps", "error", "ratio_to_next"])
        for name, rows in (("mesh", result.convergence), ("oracle", result.oracle_convergence)):
            for r in rows:
                w.writerow([name, r["steps"], repr(r["error"]), repr(r.get("ratio_to_next", ""))])
    for i in range(min(args.save_samples, args.n)):
        save_ply(mesh, {"value": result.generated[i]}, out / f"generated_{i:04d}.ply")

    print(f"per-mode variance error: {metrics['per_mode_variance_error']:.4f} "
          f"({'PASS' if checks['variance'] else 'FAIL'}, tol {args.variance_tol})")
    print(f"MMD {metrics['mmd']:.5f} vs reference {metrics['mmd_reference']:.5f} "
          f"({'PASS' if checks['mmd'] else 'FAIL'}); COV {metrics['cov']:.3f}")
    for r in result.convergence:
        print(f"steps {r['steps']:4d}  error {r['error']:.3e}  ratio {r.get('ratio_to_next', float('nan')):.2f}")
    return EXIT_OK if payload["pass"] else EXIT_FAIL


def cmd_validate(args) -> int:
    mesh = load_mesh(args.mesh)
    report = validate(mesh)
    print(json.dumps(report.as_dict(), indent=2))
    ok = report.is_manifold and not report.degenerate_faces
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, multi_mesh: bool = False) -> None:
    if multi_mesh:
        p.add_argument("--mesh", action="append", required=True,
                       help="mesh file (.obj/.ply) or builtin:icosphere:3; repeat for more meshes of the same surface")
    else:
        p.add_argument("--mesh", required=True, help="mesh file (.obj/.ply) or builtin:icosphere:3")
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or .)")
    p.add_argument("--threads", type=_positive(int), default=1, help="worker threads for sampling")


def _add_screening(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", type=_positive(float), default=None, help=f"screening term (default {DEFAULT_TAU:g})")
    g.add_argument("--c", type=_positive(float), default=None, help="normalized screening: tau = c * Gamma")
    p.add_argument("--no-screening", action="store_true",
                   help="ablation: tau = 1e-8 * Gamma instead of a user value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshnoise", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw noise fields on a mesh")
    _add_common(p)
    _add_screening(p)
    p.add_argument("--model", choices=MODELS, default="matern", help="noise model")
    p.add_argument("--n", type=_positive(int), default=1, help="number of samples")
    p.add_argument("--k", type=_positive(int), default=None, help="eigenmodes for --model explicit")
    p.add_argument("--gain", type=_positive(float), default=1.0, help="amplitude multiplier")
    p.add_argument("--channels", type=_positive(int), default=1, help="independent channels per sample")
    p.add_argument("--format", choices=("ply", "csv", "both"), default="ply", help="output format")
    p.add_argument("--prefix", default="sample", help="output file prefix")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("verify", help="check the triangulation-agnosticism properties")
    _add_common(p, multi_mesh=True)
    _add_screening(p)
    p.add_argument("--model", choices=MODELS[:4], default="matern", help="noise model")
    p.add_argument("--n", type=_positive(int), default=20000, help="Monte-Carlo sample count")
    p.add_argument("--subdivide", type=int, default=0, help="append this many midpoint subdivisions of the first mesh")
    p.add_argument("--bisect-above", type=float, default=None,
                   help="append a copy of the first mesh with every edge whose midpoint coordinate exceeds this value bisected")
    p.add_argument("--bisect-axis", type=int, choices=(0, 1, 2), default=2, help="axis for --bisect-above")
    p.add_argument("--indices", type=_int_list, default=DEFAULT_HIST_INDICES, help="histogram mode indices (1-based)")
    p.add_argument("--block", type=int, default=30, help="modes in the independence check")
    p.add_argument("--pairs", type=int, default=30, help="matched modes compared across meshes")
    p.add_argument("--match-tol", type=float, default=0.1, help="relative eigenvalue matching tolerance")
    p.add_argument("--epsilon", type=float, default=None, help="tail variance threshold")
    p.add_argument("--epsilon-rel", type=float, default=0.5,
                   help="tail threshold as a fraction of total theoretical variance (when --epsilon unset)")
    p.add_argument("--k", type=int, default=None, help="tail start index (default: chosen from theory)")
    p.add_argument("--scales", type=_float_list, default=None, help="run the scale-invariance check, e.g. 0.1,2.0")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("spectrum", help="generalized Laplacian eigenvalues (dense, small meshes)")
    _add_common(p)
    p.add_argument("--k", type=_positive(int), default=None, help="number of modes (default all)")
    p.add_argument("--eigenvectors", type=int, default=0, help="write the first N eigenvectors to eigenvectors.ply")
    p.add_argument("--dump-operators", action="store_true", help="write mass.csv and laplacian.csv")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("fmdemo", help="flow matching from Matern noise with the exact velocity")
    _add_common(p)
    p.add_argument("--tau", type=_positive(float), default=DEFAULT_TAU, help="source screening term")
    p.add_argument("--tau-target", type=_positive(float), default=10.0, help="target screening term")
    p.add_argument("--n", type=_positive(int), default=5000, help="generated samples")
    p.add_argument("--steps", type=_positive(int), default=100, help="midpoint steps")
    p.add_argument("--modes", type=_positive(int), default=30, help="modes in the variance check")
    p.add_argument("--metric-samples", type=_positive(int), default=500, help="set size for MMD/COV")
    p.add_argument("--variance-tol", type=float, default=0.05, help="max relative per-mode variance error")
    p.add_argument("--mmd-ratio-max", type=float, default=1.2, help="max MMD(gen, ref) / MMD(ref, ref)")
    p.add_argument("--gain", type=_positive(float), default=1.0, help="noise amplitude multiplier")
    p.add_argument("--save-samples", type=int, default=0, help="write this many generated fields as PLY")
    p.set_defaults(func=cmd_fmdemo)

    p = sub.add_parser("validate", help="print a mesh validation report")
    p.add_argument("--mesh", required=True, help="mesh file or builtin:<name>")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, MeshError, VerificationScaleError, OSError) as exc:
        print(f"meshnoise: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NotSPDError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"meshnoise: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"meshnoise: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
