import json

import numpy as np
import pytest

from ipssd.cli import EXIT_CONTRACT, EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from ipssd.dataio import write_pnm
from ipssd.selfcheck import hand_fixture

GT = "15 15 25 15 25 25 15 25 plane 0\n55 55 65 55 65 65 55 65 plane 0\n"
DETS = ("img plane 0.900000 20.000000 20.000000 10.000000 10.000000 0.000000\n"
        "img plane 0.800000 100.000000 100.000000 10.000000 10.000000 0.000000\n"
        "img plane 0.700000 60.000000 60.000000 10.000000 10.000000 0.000000\n")


@pytest.fixture
def eval_files(tmp_path):
    (tmp_path / "img.txt").write_text(GT)
    (tmp_path / "dets.txt").write_text(DETS)
    return tmp_path


def test_eval_text(eval_files, capsys):
    rc = main(["eval", str(eval_files / "dets.txt"), str(eval_files / "img.txt")])
    out = capsys.readouterr().out
    assert rc == EXIT_OK
    assert "mAP = 0.833333" in out and "class.plane.tp = 2" in out
    assert "interpolation = all-point" in out


def test_eval_json_hbb(eval_files):
    out = eval_files / "r.json"
    rc = main(["eval", str(eval_files / "dets.txt"), str(eval_files / "img.txt"), "--mode", "hbb",
               "--format", "json", "--out", str(out)])
    rep = json.loads(out.read_text())
    assert rc == EXIT_OK and rep["mode"] == "hbb"
    assert rep["mAP"] == pytest.approx(5 / 6)


def test_eval_matches_library_fixture():
    dets, gts = hand_fixture()
    assert [(d.score, d.box.x) for d in dets] == [(0.9, 20), (0.8, 100), (0.7, 60)]
    assert [g.box.x for g in gts] == [20, 60]


def test_usage_errors(capsys):
    assert main_exit([]) == EXIT_USAGE
    assert main_exit(["frobnicate"]) == EXIT_USAGE
    assert main_exit(["eval", "a", "b", "--iou", "1.5"]) == EXIT_USAGE
    assert main_exit(["patch", "img.pgm"]) == EXIT_USAGE
    capsys.readouterr()


def main_exit(argv):
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


def test_data_errors(eval_files, capsys):
    assert main(["eval", str(eval_files / "missing.txt"), str(eval_files / "img.txt")]) == EXIT_DATA
    (eval_files / "bad.txt").write_text("1 2 3 plane\n")
    assert main(["eval", str(eval_files / "dets.txt"), str(eval_files / "bad.txt")]) == EXIT_DATA
    assert main(["detect", str(eval_files / "none.pgm"), "--config",
                 str(eval_files / "none.cfg")]) == EXIT_DATA
    assert "error:" in capsys.readouterr().err


def test_contract_violation_exit(tmp_path, capsys):
    from ipssd.synthetic import write_template_bundle

    cfg = write_template_bundle(tmp_path, seeds=())
    write_pnm(tmp_path / "odd.pgm", np.zeros((100, 100), np.uint8))  # not divisible by 8
    assert main(["detect", str(tmp_path / "odd.pgm"), "--config", str(cfg)]) == EXIT_CONTRACT
    assert "contract violation" in capsys.readouterr().err


def test_patch(tmp_path, capsys):
    img = np.arange(700 * 1100, dtype=np.int64).reshape(700, 1100).astype(np.uint8)
    write_pnm(tmp_path / "big.pgm", img)
    (tmp_path / "big.txt").write_text("540 40 560 40 560 50 540 50 car 0\n")
    out = tmp_path / "patches"
    rc = main(["patch", str(tmp_path / "big.pgm"), "--annotations", str(tmp_path / "big.txt"),
               "--out", str(out)])
    lines = capsys.readouterr().out.splitlines()
    assert rc == EXIT_OK and len(lines) == 4
    assert (out / "big__500__100.pgm").exists()
    assert (out / "big__500__0.txt").read_text().split()[-2:] == ["car", "0"]
    assert (out / "big__0__0.txt").read_text().split()[-2:] == ["car", "0"]
    assert (out / "big__0__100.txt").read_text() == ""


def test_selfcheck_only(tmp_path, capsys):
    report = tmp_path / "sc.txt"
    rc = main(["selfcheck", "--only", "tiling", "delta", "--out", str(report)])
    assert rc == EXIT_OK
    assert report.read_text().strip().endswith("2/2 suites passed")
    capsys.readouterr()
