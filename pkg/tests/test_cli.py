import json

import pytest

from hsiclass.cli import main
from hsiclass.cube_io import DatasetManifest, load_cube


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.json"
    spec.write_text(json.dumps({"n_subjects": 3, "samples_per_subject": 3, "height": 24, "width": 24,
                                "bands": 3, "noise_sigma": 0.0, "seed": 4}))
    assert main(["synth", "--spec", str(spec), "--out", str(root / "data")]) == 0
    return root


def test_preprocess_and_to_rgb(dataset, capsys):
    cube = dataset / "data" / "cubes" / "s000_00.hdr"
    main(["preprocess", "--in", str(cube), "--out", str(dataset / "pre"), "--target", "32", "--drop-first", "1"])
    out = load_cube(dataset / "pre")
    assert (out.height, out.width, out.bands) == (32, 32, 2)
    main(["to-rgb", "--cube", str(cube), "--out", str(dataset / "rgb")])
    assert load_cube(dataset / "rgb").bands == 3
    assert "RGB" in capsys.readouterr().out


@pytest.mark.parametrize("method", ["hog", "dsift"])
def test_extract_train_predict(dataset, capsys, method):
    manifest = DatasetManifest.load(dataset / "data" / "manifest.json")
    feats = dataset / f"feats_{method}"
    feats.mkdir()
    for i, sample in enumerate(manifest.samples):
        stem = sample.path.split("/")[-1].rsplit(".", 1)[0]
        main(["extract", "--method", method, "--cube", str(manifest.sample_path(i)),
              "--out", str(feats / f"{stem}.feat")])
    train = ["train", "--features", str(feats), "--labels", str(dataset / "data" / "manifest.json"),
             "--out", str(dataset / f"model_{method}")]
    if method == "dsift":
        gmm = str(dataset / "gmm.model")
        main(["train-gmm", "--features", str(feats), "--k", "2", "--out", gmm])
        train += ["--gmm", gmm]
    main(train)
    capsys.readouterr()
    main(["predict", "--model", str(dataset / f"model_{method}"), "--cube", str(manifest.sample_path(4))])
    assert capsys.readouterr().out.strip() == manifest.samples[4].subject


def test_evaluate_and_report(dataset, capsys):
    manifest = str(dataset / "data" / "manifest.json")
    single = dataset / "hog.json"
    pair = dataset / "pair.json"
    main(["evaluate", "--manifest", manifest, "--method", "hog", "--repetitions", "2",
          "--target", "24", "--out", str(single)])
    main(["evaluate", "--manifest", manifest, "--method", "lbp", "--repetitions", "2",
          "--target", "24", "--compare-rgb", "--out", str(pair)])
    assert len(json.loads(single.read_text())["accuracies"]) == 2
    assert set(json.loads(pair.read_text())) == {"all_bands", "rgb"}
    capsys.readouterr()
    main(["report", str(single), str(pair), "--dataset", "Toy"])
    table = capsys.readouterr().out
    assert "Toy_All-Bands" in table and "Toy_RGB" in table and "HOG" in table and "LBP" in table


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["bogus"])
