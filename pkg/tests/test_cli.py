import csv
import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from glyphgen.checkpoint import save_config
from glyphgen.cli import build_parser, main
from glyphgen.dataset import load_corpus
from glyphgen.service import load_bundle
from glyphgen.svg_decoder import DecoderConfig
from glyphgen.training import TrainRunConfig
from glyphgen.vae import VaeConfig

SQUARE = "M 0.2 0.2 L 0.8 0.2 L 0.8 0.8 L 0.2 0.8 Z"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> split -> train-vae -> train-decoder -> eval -> bundle, all via main()."""
    root = tmp_path_factory.mktemp("cli")
    paths = {
        "corpus": str(root / "corpus"),
        "train": str(root / "train"),
        "test": str(root / "test"),
        "vae": str(root / "vae_run"),
        "decoder": str(root / "decoder_run"),
        "eval": str(root / "eval_out"),
        "bundle": str(root / "bundle"),
    }
    specs = root / "specs.json"
    specs.write_text(json.dumps([{"stroke_weight": 0.06}, {"stroke_weight": 0.14}]))
    run_cfg = root / "run.cfg"
    save_config(str(run_cfg), TrainRunConfig(epochs=5, vae_batch=8, decoder_batch=8, lr=3e-3))
    vae_cfg = root / "vae_config.cfg"
    save_config(str(vae_cfg), VaeConfig.small())
    dec_cfg = root / "decoder_config.cfg"
    save_config(
        str(dec_cfg),
        DecoderConfig(num_layers=1, hidden_dim=16, mixture_count=2, keep_prob=1.0, z_dim=8),
    )
    concepts = root / "concepts.json"
    concepts.write_text(json.dumps({"bold": [0.1] * 8}))
    source = root / "source.svg"
    source.write_text(SQUARE)
    paths["source"] = str(source)

    assert main(["synth", "--out", paths["corpus"], "--labels", "0123", "--specs", str(specs), "--seed", "0"]) == 0
    assert main([
        "split", "--corpus", paths["corpus"], "--train-out", paths["train"],
        "--test-out", paths["test"], "--ratio", "0.5", "--seed", "0",
    ]) == 0
    assert main([
        "train-vae", "--corpus", paths["corpus"], "--out", paths["vae"],
        "--config", str(run_cfg), "--vae-config", str(vae_cfg), "--max-steps", "2",
    ]) == 0
    assert main([
        "train-decoder", "--corpus", paths["corpus"], "--vae", paths["vae"],
        "--out", paths["decoder"], "--config", str(run_cfg),
        "--decoder-config", str(dec_cfg), "--max-steps", "2",
    ]) == 0
    assert main([
        "eval", "--corpus", paths["corpus"], "--vae", paths["vae"],
        "--decoder", paths["decoder"], "--out", paths["eval"],
    ]) == 0
    assert main([
        "bundle", "--vae", paths["vae"], "--decoder", paths["decoder"],
        "--corpus", paths["corpus"], "--out", paths["bundle"], "--concepts", str(concepts),
    ]) == 0
    return paths


def test_synth_corpus_loads(pipeline):
    corpus = load_corpus(pipeline["corpus"])
    assert len(corpus) == 8
    assert len(corpus.font_ids()) == 2


def test_split_partitions_fonts(pipeline):
    train = load_corpus(pipeline["train"])
    test = load_corpus(pipeline["test"])
    assert len(train) + len(test) == 8
    assert not (set(train.font_ids()) & set(test.font_ids()))


def test_train_artifacts_exist(pipeline):
    assert sorted(os.listdir(pipeline["vae"])) == ["losses.csv", "run.cfg", "vae.cfg", "vae.ckpt"]
    assert sorted(os.listdir(pipeline["decoder"])) == ["decoder.cfg", "decoder.ckpt", "losses.csv"]
    with open(os.path.join(pipeline["vae"], "losses.csv")) as f:
        rows = list(csv.reader(f))
    assert len(rows) == 3  # header + 2 steps


def test_eval_artifacts(pipeline):
    names = sorted(os.listdir(pipeline["eval"]))
    assert "nll_by_class.csv" in names
    assert "length_variance.csv" in names
    curves = [n for n in names if n.startswith("nll_vs_length_")]
    assert len(curves) == 4
    with open(os.path.join(pipeline["eval"], "nll_by_class.csv")) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["label", "char", "mean_nll", "count"]
    assert len(rows) == 5
    assert all(np.isfinite(float(r[2])) for r in rows[1:])
    with open(os.path.join(pipeline["eval"], curves[0])) as f:
        curve = list(csv.reader(f))
    assert curve[0] == ["length", "nll"]
    assert all(np.isfinite(float(r[1])) for r in curve[1:])


def test_bundle_loads_and_has_concepts(pipeline):
    bundle = load_bundle(pipeline["bundle"])
    assert sorted(bundle.concepts) == ["bold"]
    assert bundle.vae.config.z_dim == 8
    corpus = load_corpus(pipeline["corpus"])
    assert bundle.viewbox == corpus.viewbox


def test_propagate_emits_files_and_is_seeded(pipeline, tmp_path):
    out1, out2 = str(tmp_path / "p1"), str(tmp_path / "p2")
    for out in (out1, out2):
        assert main([
            "propagate", "--bundle", pipeline["bundle"], "--svg", pipeline["source"],
            "--label", "0", "--targets", "01", "--out", out, "--n", "2", "--seed", "5",
        ]) == 0
    names = sorted(os.listdir(out1))
    assert names == ["contact_sheet.svg", "digit_0.svg", "digit_1.svg", "report.json"]
    with open(os.path.join(out1, "digit_0.svg")) as f:
        doc = f.read()
    root = ET.fromstring(doc)
    assert root.tag.endswith("svg")
    with open(os.path.join(out1, "report.json")) as f:
        report = json.load(f)
    assert len(report["z"]) == 8
    assert report["targets"] == ["0", "1"]
    assert len(report["confidences"]) == 2
    for name in ("digit_0.svg", "contact_sheet.svg"):
        with open(os.path.join(out1, name)) as a, open(os.path.join(out2, name)) as b:
            assert a.read() == b.read()


def test_propagate_contact_sheet_has_one_cell_per_target(pipeline, tmp_path):
    out = str(tmp_path / "sheet")
    assert main([
        "propagate", "--bundle", pipeline["bundle"], "--svg", pipeline["source"],
        "--label", "0", "--targets", "0123", "--out", out, "--n", "1", "--seed", "1",
    ]) == 0
    root = ET.fromstring(open(os.path.join(out, "contact_sheet.svg")).read())
    cells = [el for el in root.iter() if el.tag.endswith("}g")]
    assert len(cells) == 4


def test_apply_concept_sweep(pipeline, tmp_path):
    z_file = tmp_path / "z.json"
    z_file.write_text(json.dumps([0.0] * 8))
    out = str(tmp_path / "sweep")
    assert main([
        "apply_concept", "--bundle", pipeline["bundle"], "--concept", "bold",
        "--alphas=-1,0,1", "--z-file", str(z_file), "--targets", "0",
        "--out", out, "--n", "1", "--seed", "3",
    ]) == 0
    names = sorted(os.listdir(out))
    assert names == ["alpha0_digit_0.svg", "alpha1_digit_0.svg", "alpha2_digit_0.svg", "contact_sheet.svg"]


def test_apply_concept_accepts_svg_source_and_dash_alias(pipeline, tmp_path):
    out = str(tmp_path / "alias")
    assert main([
        "apply-concept", "--bundle", pipeline["bundle"], "--concept", "bold",
        "--alphas", "0", "--svg", pipeline["source"], "--label", "0",
        "--out", out, "--n", "1", "--seed", "0",
    ]) == 0
    assert "alpha0_digit_0.svg" in os.listdir(out)


def test_apply_concept_rejects_unknown_concept_and_bad_sources(pipeline, tmp_path):
    z_file = tmp_path / "z.json"
    z_file.write_text(json.dumps([0.0] * 8))
    out = str(tmp_path / "bad")
    assert main([
        "apply_concept", "--bundle", pipeline["bundle"], "--concept", "spicy",
        "--z-file", str(z_file), "--out", out,
    ]) == 1
    assert main([
        "apply_concept", "--bundle", pipeline["bundle"], "--concept", "bold", "--out", out,
    ]) == 1


def test_ingest_rejects_empty_directory(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["ingest", "--svg-dir", str(empty), "--out", str(tmp_path / "c")]) == 1


def test_ingest_builds_corpus(tmp_path):
    svg_dir = tmp_path / "svgs"
    svg_dir.mkdir()
    (svg_dir / "fontA_a.svg").write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg"><path d="{SQUARE}"/></svg>'
    )
    out = str(tmp_path / "ingested")
    assert main(["ingest", "--svg-dir", str(svg_dir), "--out", out]) == 0
    corpus = load_corpus(out)
    assert len(corpus) == 1


def test_propagate_reads_svg_documents(pipeline, tmp_path):
    doc = tmp_path / "doc.svg"
    doc.write_text(f'<svg xmlns="http://www.w3.org/2000/svg"><path d="{SQUARE}"/></svg>')
    out = str(tmp_path / "from_doc")
    assert main([
        "propagate", "--bundle", pipeline["bundle"], "--svg", str(doc),
        "--label", "0", "--targets", "0", "--out", out, "--n", "1", "--seed", "0",
    ]) == 0
    assert "digit_0.svg" in os.listdir(out)


def test_serve_parser_wiring():
    args = build_parser().parse_args(["serve", "--bundle", "x", "--port", "9000"])
    assert args.port == 9000
    assert args.fn.__name__ == "cmd_serve"


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
