"""Command-line frontend.

Subcommands:
  pies synth      synthesize degraded HR/LR patch subsets
  features probe  extract probe-network features from an LR patch directory
  score           score test feature files against a reference feature file
  fit             fit distribution parameters to one feature file

Exit codes: 0 success, 2 validation error, 3 numeric/degenerate error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import (DEFAULT_COMPONENTS, DEFAULT_DELTA, PCA_MODES, SrgaScorer,
                   format_float, write_csv)
from .degrade import (BLUR_WIDTHS, BLURNOISE_GRID, NOISE_LEVELS,
                      DegradationSpec, blur_presets, blurnoise_presets,
                      noise_presets, read_image, synth_pies)
from .errors import NumericError, ValidationError
from .featstore import FeatureSet, flatten, read_feature_file, write_feature_file
from .probe import ProbeNet
from .stats import PcaCompressor, fit_ggd

_PRESET_HELP = f"""\
preset grids (synthetic subsets):
  blur:W       isotropic blur, widths {list(BLUR_WIDTHS)}
  noise:L      additive Gaussian noise, levels {list(NOISE_LEVELS)}
  blurnoise:W,L  blur+noise grid {list(BLURNOISE_GRID)}
  aniso:S1,S2,THETA  anisotropic blur, widths in [0.6, 5], rotation in [0, pi]
  lum:D        global luminance shift (jitter range [-10, +20])
  clean        bicubic downsampling only
"""


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("SRGA_THREADS")
    return max(1, int(env)) if env else 1


def _write_provenance(out_dir: Path, argv: list[str], seed: int | None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    provenance = {
        "argv": argv,
        "seed": seed,
        "versions": {
            "srga": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    (out_dir / "provenance.json").write_text(
        json.dumps(provenance, indent=2) + "\n")


def _cmd_pies_synth(args, argv) -> int:
    specs: list[DegradationSpec] = []
    for text in args.spec or []:
        specs.append(DegradationSpec.parse(text, seed=args.seed))
    if args.all_blur:
        specs.extend(blur_presets(seed=args.seed))
    if args.all_noise:
        specs.extend(noise_presets(seed=args.seed))
    if args.all_blurnoise:
        specs.extend(blurnoise_presets(seed=args.seed))
    if args.all_blur or args.all_noise or args.all_blurnoise:
        # the clean subset is the baseline every degraded subset refers to
        specs.append(DegradationSpec(kind="clean", seed=args.seed))
    if not specs:
        raise ValidationError(
            "nothing to synthesize: pass --spec and/or --all-* flags")
    seen = set()
    unique = []
    for spec in specs:
        if spec.name not in seen:
            seen.add(spec.name)
            unique.append(spec)
    out_dir = Path(args.out)
    _write_provenance(out_dir, argv, args.seed)
    threads = _threads(args)
    for spec in unique:
        manifest = synth_pies(args.hr_dir, out_dir, spec, args.count,
                              threads=threads)
        print(f"{spec.name}: {len(manifest['entries'])} pairs "
              f"-> {out_dir / (spec.name + '.manifest.json')}")
    return 0


def _load_lr_dir(lr_dir: Path) -> list[np.ndarray]:
    if not lr_dir.is_dir():
        raise ValidationError(f"patch directory {lr_dir} does not exist")
    files = sorted(p for p in lr_dir.iterdir()
                   if p.suffix.lower() == ".png")
    if not files:
        raise ValidationError(f"no PNG patches found in {lr_dir}")
    return [read_image(p) for p in files]


def _cmd_features_probe(args, argv) -> int:
    patches = _load_lr_dir(Path(args.lr_dir))
    net = ProbeNet(seed=args.seed)
    dataset_id = args.dataset_id or Path(args.lr_dir).name
    features = net.extract(patches, model_id=args.model_id,
                           dataset_id=dataset_id)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_file(features, out)
    print(f"{features.n} tensors of shape {features.tensor_shape} -> {out}")
    return 0


def _rank_table(report) -> str:
    ordered = sorted(report.entries, key=lambda e: e.srga)
    lines = [f"{'rank':>4}  {'test dataset':<24} {'srga':>10} {'fdd':>12}"]
    for rank, entry in enumerate(ordered, start=1):
        lines.append(f"{rank:>4}  {entry.test_id:<24} "
                     f"{entry.srga:>10.4f} {entry.fdd:>12.6g}")
    lines.append(f"mSRGA = {report.msrga:.4f} over {len(ordered)} test sets "
                 f"(reference {report.reference_id!r} excluded)")
    return "\n".join(lines)


def _cmd_score(args, argv) -> int:
    ref_path = Path(args.ref).resolve()
    test_paths = [Path(p).resolve() for p in args.test]
    if ref_path in test_paths:
        raise ValidationError(
            f"reference file {ref_path} also given as a test file; the "
            "reference is excluded from scoring")
    ref = read_feature_file(ref_path)
    tests = [read_feature_file(p) for p in test_paths]
    scorer = SrgaScorer(n_components=args.dim, delta=args.delta,
                        pca_mode=args.pca_mode).fit(ref)
    report = scorer.report(tests, model_id=args.model_id)
    out_dir = Path(args.out)
    _write_provenance(out_dir, argv, None)
    (out_dir / "report.json").write_text(report.to_json())
    rows = [(e.test_id, e.srga, e.fdd, e.ggd_test.alpha, e.ggd_test.sigma)
            for e in report.entries]
    (out_dir / "scores.csv").write_text(
        write_csv(rows, ("test_id", "srga", "fdd", "alpha", "sigma")))
    print(_rank_table(report))
    return 0


def _cmd_fit(args, argv) -> int:
    features = read_feature_file(Path(args.features))
    y = flatten(features)
    dim = min(args.dim, y.shape[0] - 1, y.shape[1])
    pca = PcaCompressor(dim).fit(y, dataset_id=features.dataset_id)
    params = fit_ggd(pca.transform(y).ravel())
    payload = {
        "dataset_id": features.dataset_id,
        "model_id": features.model_id,
        "alpha": params.alpha,
        "sigma": params.sigma,
        "D": dim,
        "n_samples": y.shape[0] * dim,
        "pca_mode": "per-dataset",
    }
    text = json.dumps(
        {k: (format_float(v) if isinstance(v, float) else v)
         for k, v in payload.items()}, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(f"{features.dataset_id}: sigma={params.sigma:.4f} "
          f"alpha={params.alpha:.4f} (D={dim}, N={features.n})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srga",
        description="Generalization assessment toolkit for super-resolution "
                    "models: degraded patch synthesis, feature statistics, "
                    "and the SRGA index.",
        epilog=_PRESET_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pies = sub.add_parser("pies", help="synthetic dataset commands")
    pies_sub = pies.add_subparsers(dest="pies_command", required=True)
    synth = pies_sub.add_parser(
        "synth", help="synthesize degraded HR/LR patch subsets",
        epilog=_PRESET_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    synth.add_argument("--hr-dir", required=True,
                       help="directory of source images")
    synth.add_argument("--out", required=True, help="output dataset directory")
    synth.add_argument("--spec", action="append",
                       help="degradation spec 'kind:params' (repeatable)")
    synth.add_argument("--all-blur", action="store_true",
                       help=f"all {len(BLUR_WIDTHS)} blur presets")
    synth.add_argument("--all-noise", action="store_true",
                       help=f"all {len(NOISE_LEVELS)} noise presets")
    synth.add_argument("--all-blurnoise", action="store_true",
                       help=f"all {len(BLURNOISE_GRID)} blur+noise presets")
    synth.add_argument("--count", type=int, default=800,
                       help="patches per subset (default 800)")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--threads", type=int, default=None,
                       help="worker threads (default $SRGA_THREADS or 1)")

    features = sub.add_parser("features", help="feature extraction commands")
    features_sub = features.add_subparsers(dest="features_command",
                                           required=True)
    probe = features_sub.add_parser(
        "probe", help="extract deterministic probe-network features")
    probe.add_argument("--seed", type=int, default=0)
    probe.add_argument("--lr-dir", required=True,
                       help="directory of LR patches (PNG)")
    probe.add_argument("--out", required=True, help="output feature file")
    probe.add_argument("--model-id", default=None)
    probe.add_argument("--dataset-id", default=None)

    score = sub.add_parser("score", help="score test sets against a reference")
    score.add_argument("--ref", required=True, help="reference feature file")
    score.add_argument("--test", required=True, nargs="+",
                       help="test feature files")
    score.add_argument("--out", required=True, help="output directory")
    score.add_argument("--dim", type=int, default=DEFAULT_COMPONENTS,
                       help="projection dimension (default 300)")
    score.add_argument("--delta", type=float, default=DEFAULT_DELTA,
                       help="log-shift constant (default 5)")
    score.add_argument("--pca-mode", choices=PCA_MODES, default="ref")
    score.add_argument("--model-id", default=None)

    fit = sub.add_parser("fit", help="fit distribution parameters to features")
    fit.add_argument("--features", required=True, help="feature file")
    fit.add_argument("--out", default=None, help="optional output JSON path")
    fit.add_argument("--dim", type=int, default=DEFAULT_COMPONENTS)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "pies":
            return _cmd_pies_synth(args, argv)
        if args.command == "features":
            return _cmd_features_probe(args, argv)
        if args.command == "score":
            return _cmd_score(args, argv)
        if args.command == "fit":
            return _cmd_fit(args, argv)
        parser.error(f"unknown command {args.command!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
