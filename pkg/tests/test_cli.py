import json
import subprocess
import sys

import numpy as np
import pytest

from sinoforge.cli import main
from sinoforge.grid import read_image, read_mask, read_sinogram, write_image


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def phantom(tmp_path, capsys):
    code, _, _ = run(capsys, "phantom", "--kind", "diaphyseal", "--size", 48, "--seed", 1,
                     "--out", tmp_path / "ph", "--png", tmp_path / "ph.png")
    assert code == 0
    return tmp_path / "ph"


@pytest.fixture
def sinogram(tmp_path, phantom, capsys):
    assert run(capsys, "project", "--in", phantom, "--angles", 60, "--out", tmp_path / "s")[0] == 0
    return tmp_path / "s"


def test_phantom_and_project(tmp_path, phantom, sinogram):
    assert read_image(phantom).shape == (48, 48)
    assert (tmp_path / "ph.png").exists()
    assert read_sinogram(sinogram).n_angles == 60


def test_corrupt_and_score(tmp_path, phantom, sinogram, capsys):
    code, out, _ = run(capsys, "corrupt", "--in", sinogram, "--image", phantom, "--angle-deg", -5,
                       "--span", 10, "--out", tmp_path / "c")
    assert code == 0
    ev = json.loads(out)["event"]
    assert ev["start_view"] == 50 and ev["span_views"] == 10
    _, clean, _ = run(capsys, "score-motion", "--in", sinogram)
    _, moved, _ = run(capsys, "score-motion", "--in", tmp_path / "c")
    assert json.loads(moved)["ncc"] < json.loads(clean)["ncc"]

    code, out, _ = run(capsys, "corrupt", "--in", sinogram, "--image", phantom, "--sample",
                       "--seed", 3, "--span", 10, "--start", 5, "--out", tmp_path / "c2")
    assert code == 0 and json.loads(out)["event"]["start_view"] == 5


def test_corrupt_needs_angle(tmp_path, phantom, sinogram, capsys):
    code, _, err = run(capsys, "corrupt", "--in", sinogram, "--image", phantom, "--out", tmp_path / "x")
    assert code == 2 and "angle" in err


def test_reconstruct_and_metrics(tmp_path, phantom, sinogram, capsys):
    for algo in ("sirt", "fbp"):
        code, _, _ = run(capsys, "reconstruct", "--in", sinogram, "--algo", algo, "--iters", 5,
                         "--size", 48, "--spacing", 0.0607, "--out", tmp_path / algo)
        assert code == 0
        assert read_image(tmp_path / algo).shape == (48, 48)
    code, out, _ = run(capsys, "metrics", "--ref", phantom, "--test", tmp_path / "sirt")
    report = json.loads(out)
    assert code == 0 and set(report) == {"psnr_db", "ssim", "vif"}
    _, out, _ = run(capsys, "metrics", "--ref", phantom, "--test", phantom)
    assert json.loads(out)["psnr_db"] == "inf"


def test_segment_morpho_segmetrics(tmp_path, phantom, capsys):
    code, out, _ = run(capsys, "segment", "--in", phantom, "--threshold", 0.5,
                       "--out-cortical", tmp_path / "cm", "--out-trabecular", tmp_path / "tm")
    assert code == 0 and json.loads(out)["cortical_px"] == read_mask(tmp_path / "cm").count()
    code, out, _ = run(capsys, "morpho", "--image", phantom, "--cortical", tmp_path / "cm",
                       "--trabecular", tmp_path / "tm", "--slope", 2, "--intercept", 0.1)
    assert code == 0 and json.loads(out)["ct_th_mm"] > 0
    code, out, _ = run(capsys, "segmetrics", "--a", tmp_path / "cm", "--b", tmp_path / "cm")
    assert code == 0 and json.loads(out)["dice"] == 1.0


def test_edges_and_png(tmp_path, phantom, capsys):
    assert run(capsys, "edges", "--in", phantom, "--out", tmp_path / "e")[0] == 0
    assert read_image(tmp_path / "e").values.max() > 0
    assert run(capsys, "export-png", "--in", phantom, "--min", 0, "--max", 1,
               "--out", tmp_path / "x.png")[0] == 0
    assert run(capsys, "export-png", "--in", phantom, "--min", 1, "--max", 1,
               "--out", tmp_path / "y.png")[0] == 2


def test_exit_codes(tmp_path, phantom, capsys):
    assert run(capsys, "metrics", "--ref", phantom, "--test", tmp_path / "missing")[0] == 3
    assert run(capsys, "rotate", "--in", phantom, "--angle-deg", "nan", "--out", tmp_path / "r")[0] == 2
    huge = tmp_path / "huge"
    write_image(read_image(phantom).with_values(np.full((48, 48), 1e38)), huge)
    code, _, err = run(capsys, "project", "--in", huge, "--angles", 10, "--out", tmp_path / "hs")
    assert code == 4 and "overflow" in err


def test_gen_dataset_and_evaluate(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("SINOFORGE_WORKERS", raising=False)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_pairs": 2, "n_angles": 40, "phantom": {"kind": "distal", "size_px": 48},
                               "motion": {"span_views": 8}, "sirt_reduced": {"n_iterations": 3}}))
    code, _, _ = run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / "ds", "--workers", 1)
    assert code == 0
    code, out, _ = run(capsys, "evaluate", "--manifest", tmp_path / "ds" / "manifest.json",
                       "--which", "blur_matched")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "item_id,rotation_deg,psnr_db,ssim,vif" and len(lines) == 5
    code, out2, _ = run(capsys, "metrics", "--manifest", tmp_path / "ds", "--which", "blur_matched")
    assert out2 == out
    code, _, err = run(capsys, "evaluate", "--manifest", tmp_path / "ds" / "manifest.json",
                       "--which", "external", "--dir", tmp_path)
    assert code == 3 and "item_00000: missing" in err


def test_bad_config_exit_code(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"n_pairs": -1}')
    assert run(capsys, "gen-dataset", "--config", tmp_path / "bad.json", "--out", tmp_path / "o")[0] == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sinoforge", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sinoforge" in proc.stdout
