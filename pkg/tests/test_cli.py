import json

import numpy as np
import pytest

from mtpscnn.cli import error_map_image, main, parse_args
from mtpscnn.io import load_checkpoint, load_object_dir


def _render(path, *extra):
    return main(["render", "-o", str(path), "--size", "24", "--lights", "6", "--seed", "3", *extra])


def test_render_is_byte_identical(tmp_path):
    assert _render(tmp_path / "a", "--brdf", "blinn_phong", "--specular", "0.5") == 0
    assert _render(tmp_path / "b", "--brdf", "blinn_phong", "--specular", "0.5") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "frame_005.png" in names and "manifest.json" in names and "normal.png" in names
    for name in names:
        if name != "manifest.json":
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["subcommand"] == "render" and manifest["seed"] == 3
    assert manifest["config"]["lights"] == 6


def test_render_random_batch(tmp_path):
    assert main(["render", "--random", "--count", "3", "--size", "16", "--lights", "4", "-o", str(tmp_path)]) == 0
    subdirs = sorted(p for p in tmp_path.iterdir() if p.is_dir())
    assert len(subdirs) == 3
    assert load_object_dir(subdirs[0]).num_frames == 4


def test_render_rejects_zero_lights(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        _render(tmp_path, "--lights", "0")
    assert exc.value.code == 2
    assert "--lights" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_eval_baseline_writes_report(tmp_path, capsys):
    _render(tmp_path / "data" / "sphere", "--max-polar", "20")
    assert main(["eval", "--method", "baseline", "--data", str(tmp_path / "data"), "-o", str(tmp_path / "ev")]) == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["mae"]["sphere"] < 1.0
    assert (tmp_path / "ev" / "sphere_error.png").is_file()
    assert "mean" in capsys.readouterr().out


def test_eval_needs_checkpoint(tmp_path):
    _render(tmp_path / "d")
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--data", str(tmp_path / "d")])
    assert exc.value.code == 2


def test_missing_data_exits_nonzero(tmp_path, capsys):
    assert main(["eval", "--method", "baseline", "--data", str(tmp_path / "absent")]) == 1
    assert "MissingData" in capsys.readouterr().err


def test_train_then_predict_and_eval(tmp_path):
    _render(tmp_path / "data" / "obj")
    tiny = ["--C", "2", "--K", "1", "--L", "1", "--M", "1", "--N", "1"]
    assert main(["train", "--data", str(tmp_path / "data"), "-o", str(tmp_path / "run"), "--epochs", "2",
                 "--batch-size", "1", "--frames", "4", *tiny]) == 0
    model = load_checkpoint(tmp_path / "run" / "model.ckpt")
    assert model.config.C == 2 and model.step == 2
    assert len((tmp_path / "run" / "loss_history.txt").read_text().splitlines()) == 2
    assert main(["predict", "--checkpoint", str(tmp_path / "run" / "model.ckpt"), "--data", str(tmp_path / "data"),
                 "-o", str(tmp_path / "pred")]) == 0
    assert (tmp_path / "pred" / "obj_normal.png").is_file()
    assert main(["eval", "--checkpoint", str(tmp_path / "run" / "model.ckpt"), "--data", str(tmp_path / "data")]) == 0


def test_gradcheck_subset(tmp_path, capsys):
    assert main(["gradcheck", "--op", "conv3d", "--op", "maxpool", "--seeds", "3", "-o", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "conv3d" in out and "maxpool" in out and "PASS" in out
    assert set(json.loads((tmp_path / "gradcheck.json").read_text())) == {"conv3d", "maxpool"}
    with pytest.raises(SystemExit):
        main(["gradcheck", "--op", "softmax"])


def test_config_file_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[DEFAULT]\nseed = 7\n\n[render]\nlights = 5\nsize = 12\n")
    args = parse_args(["render", "-o", "x", "--config", str(ini)])
    assert (args.seed, args.lights, args.size) == (7, 5, 12)
    args = parse_args(["render", "--config", str(ini), "-o", "x", "--lights", "9"])
    assert (args.seed, args.lights) == (7, 9)
    ini.write_text("[render]\nbogus = 1\n")
    with pytest.raises(SystemExit):
        parse_args(["render", "--config", str(ini), "-o", "x"])


def test_error_map_image_scale():
    err = np.array([[0.0, 45.0, 90.0, 120.0]])
    mask = np.array([[True, True, True, False]])
    np.testing.assert_array_equal(error_map_image(err, mask), [[0.0, 0.5, 1.0, 0.0]])
