"""Command-line entry point: ``hsiclass <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import harness
from .classify import BandEnsemble, SvmTrainConfig, majority_vote, train_band_ensemble
from .colorimetry import hsi_to_rgb
from .cube_io import DatasetManifest, SyntheticSpec, generate_synthetic, load_cube, write_cube
from .descriptors import HogConfig, LbpConfig, SiftConfig, extract_cube, load_features, save_features
from .encoding import EmConfig, GmmModel, encode
from .preprocess import PreprocessConfig, preprocess_cube

FEATURE_SUFFIX = ".feat"
_DESCRIPTOR_CONFIGS = {"HOG": HogConfig, "LBP": LbpConfig, "DSIFT": SiftConfig}


def _kind(method: str) -> str:
    return {"hog": "HOG", "lbp": "LBP", "dsift": "DSIFT", "dsift-fv": "DSIFT"}[method.lower()]


def cmd_synth(args):
    spec = SyntheticSpec.from_dict(json.loads(Path(args.spec).read_text()))
    manifest = generate_synthetic(spec, args.out)
    print(f"wrote {len(manifest.samples)} cubes for {len(manifest.subjects)} subjects to {args.out}")


def cmd_preprocess(args):
    cfg = PreprocessConfig(args.target, args.window, args.drop_first, args.drop_last)
    out = preprocess_cube(load_cube(args.input), cfg)
    write_cube(out, args.out)
    print(f"{out.height}x{out.width}x{out.bands} -> {args.out}")


def cmd_extract(args):
    kind = _kind(args.method)
    cube = load_cube(args.cube)
    sets = extract_cube(cube, kind, _DESCRIPTOR_CONFIGS[kind](), args.jobs)
    save_features(sets, args.out)
    print(f"{kind}: {len(sets)} bands x {sets[0].vectors.shape} -> {args.out}")


def _feature_files(directory):
    files = sorted(Path(directory).glob("*" + FEATURE_SUFFIX))
    if not files:
        raise SystemExit(f"no *{FEATURE_SUFFIX} files in {directory}")
    return files


def cmd_train_gmm(args):
    descs = []
    for f in _feature_files(args.features):
        sets = load_features(f)
        if sets[0].kind != "DSIFT":
            raise SystemExit(f"{f} holds {sets[0].kind} features; GMMs are trained on DSIFT")
        descs += [s.vectors for s in sets]
    cfg = harness.PipelineConfig(
        em=EmConfig(k=args.k, seed=args.seed, max_iters=args.max_iters),
        gmm_max_descriptors=args.max_descriptors,
    )
    gmm = harness.fit_dictionary(descs, cfg)
    gmm.save(args.out)
    print(f"GMM k={gmm.k} dim={gmm.dim} after {len(gmm.history)} EM evaluations -> {args.out}")


def cmd_train(args):
    manifest = DatasetManifest.load(args.labels)
    labels = manifest.labels()
    features_dir = Path(args.features)
    per_sample = []
    for sample in manifest.samples:
        stem = Path(sample.path).name.rsplit(".", 1)[0]
        per_sample.append(load_features(features_dir / (stem + FEATURE_SUFFIX)))
    kind = per_sample[0][0].kind
    gmm = None
    if kind == "DSIFT":
        if not args.gmm:
            raise SystemExit("DSIFT features need --gmm (see train-gmm)")
        gmm = GmmModel.load(args.gmm)
        rows = [[encode(s.vectors, gmm, args.power_norm) for s in sets] for sets in per_sample]
    else:
        rows = [[s.vectors.ravel() for s in sets] for sets in per_sample]
    n_bands = len(rows[0])
    per_band = [np.stack([r[b] for r in rows]) for b in range(n_bands)]
    provenance = {
        "kind": kind,
        "descriptor": dataclasses.asdict(_DESCRIPTOR_CONFIGS[kind]()),
        "subjects": manifest.subjects,
        "power_norm": args.power_norm,
    }
    ensemble = train_band_ensemble(per_band, labels, SvmTrainConfig(c=args.c), provenance=provenance)
    out = Path(args.out)
    if gmm is not None:
        out.mkdir(parents=True, exist_ok=True)
        for suffix in ("", ".raw"):
            shutil.copyfile(args.gmm + suffix, out / ("gmm.model" + suffix))
        ensemble.provenance["gmm"] = "gmm.model"
    ensemble.save(out)
    print(f"{ensemble.bands} bands x {len(ensemble.classes)} classes -> {out}")


def cmd_predict(args):
    model = Path(args.model)
    ensemble = BandEnsemble.load(model)
    prov = ensemble.provenance
    kind = prov["kind"]
    cube = load_cube(args.cube)
    if cube.bands != ensemble.bands:
        raise SystemExit(f"cube has {cube.bands} bands, model expects {ensemble.bands}")
    sets = extract_cube(cube, kind, _DESCRIPTOR_CONFIGS[kind](**prov["descriptor"]))
    if kind == "DSIFT":
        gmm = GmmModel.load(model / prov["gmm"])
        feats = [encode(s.vectors, gmm, prov.get("power_norm", False)) for s in sets]
    else:
        feats = [s.vectors.ravel() for s in sets]
    label = majority_vote(ensemble, feats)
    subjects = prov.get("subjects")
    print(subjects[label] if subjects else label)


def cmd_to_rgb(args):
    rgb = hsi_to_rgb(load_cube(args.cube))
    write_cube(rgb, args.out)
    print(f"{rgb.height}x{rgb.width} RGB (bands stored B,G,R) -> {args.out}")


def _pipeline_config(args) -> harness.PipelineConfig:
    cfg = harness.PipelineConfig()
    if args.config:
        cfg = harness.PipelineConfig.from_dict(json.loads(Path(args.config).read_text()))
    if args.target is not None:
        cfg = dataclasses.replace(cfg, preprocess=dataclasses.replace(cfg.preprocess, target_size=args.target))
    return cfg


def cmd_evaluate(args):
    manifest = DatasetManifest.load(args.manifest)
    protocol = harness.ProtocolConfig(
        repetitions=args.repetitions, seed=args.seed, subjects_limit=args.subjects_limit
    )
    cfg = _pipeline_config(args)
    if args.compare_rgb:
        hsi, rgb = harness.compare_hsi_vs_rgb(manifest, args.method, protocol, cfg)
        text = json.dumps({"all_bands": hsi.to_dict(), "rgb": rgb.to_dict()}, indent=2, sort_keys=True) + "\n"
        summary = f"all-bands {hsi.mean_accuracy:.4f}  rgb {rgb.mean_accuracy:.4f}"
    else:
        report = harness.run_experiment(manifest, args.method, protocol, cfg)
        text = report.to_json()
        summary = f"mean accuracy {report.mean_accuracy:.4f}"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"{args.method}: {summary}", file=sys.stderr)


def cmd_report(args):
    reports = harness.load_reports(args.reports)
    if args.format == "table":
        print(harness.render_table(reports, args.dataset))
    else:
        print(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hsiclass", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--spec", required=True, help="JSON file with SyntheticSpec fields")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="band exclusion, median filter, resize")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--drop-first", type=int, default=0)
    s.add_argument("--drop-last", type=int, default=0)
    s.add_argument("--target", type=int, default=263)
    s.add_argument("--window", type=int, default=3)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("extract", help="per-band descriptors of one cube")
    s.add_argument("--method", required=True, choices=["hog", "lbp", "dsift"])
    s.add_argument("--cube", required=True)
    s.add_argument("--out", required=True, help=f"feature file (use the cube stem + {FEATURE_SUFFIX})")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train-gmm", help="fit the Fisher-vector dictionary on DSIFT feature files")
    s.add_argument("--features", required=True)
    s.add_argument("--k", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iters", type=int, default=100)
    s.add_argument("--max-descriptors", type=int, default=50_000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_gmm)

    s = sub.add_parser("train", help="train a band ensemble from feature files")
    s.add_argument("--features", required=True)
    s.add_argument("--labels", required=True, help="manifest JSON of the training samples")
    s.add_argument("--c", type=float, default=10.0)
    s.add_argument("--gmm", help="GMM model file (DSIFT features only)")
    s.add_argument("--power-norm", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="classify one cube with a trained ensemble")
    s.add_argument("--model", required=True)
    s.add_argument("--cube", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("to-rgb", help="render a cube as linear sRGB")
    s.add_argument("--cube", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_to_rgb)

    s = sub.add_parser("evaluate", help="run the gallery/probe protocol")
    s.add_argument("--manifest", required=True)
    s.add_argument("--method", required=True, choices=list(harness.METHODS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--repetitions", type=int, default=5)
    s.add_argument("--subjects-limit", type=int)
    s.add_argument("--target", type=int, help="override the resize target")
    s.add_argument("--config", help="PipelineConfig JSON")
    s.add_argument("--compare-rgb", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="render report JSON files")
    s.add_argument("reports", nargs="+")
    s.add_argument("--format", choices=["table", "json"], default="table")
    s.add_argument("--dataset", default="Synthetic")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
