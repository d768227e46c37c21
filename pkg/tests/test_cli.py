import json

import numpy as np

from nsgen import nsf1
from nsgen.cli import main
from nsgen.model import ModelConfig, build, save_checkpoint


def test_solve_writes_field(tmp_path, capsys):
    out = tmp_path / "field.nsf1"
    rc = main(["solve", "--problem", "cavity", "--n", "32", "--u0", "0.5", "--out", str(out)])
    assert rc == 0
    channels, bc, _ = nsf1.read_field(out)
    assert channels.shape == (3, 32, 32)
    assert bc.reynolds == 10.0
    assert "converged=True" in capsys.readouterr().out


def test_solve_internal_with_shapes(tmp_path):
    shapes = tmp_path / "shapes.json"
    shapes.write_text(json.dumps([{"kind": "rectangle", "x": 12, "y": 12, "width": 5, "height": 5}]))
    out = tmp_path / "b.nsf1"
    rc = main([
        "solve", "--problem", "internal", "--n", "32", "--u0", "0.05", "--v0", "0.5",
        "--shapes", str(shapes), "--out", str(out),
    ])
    assert rc == 0
    channels, _, back_shapes = nsf1.read_field(out)
    assert len(back_shapes) == 1
    solid_u = channels[0][14, 14]
    assert solid_u == 0.0


def test_gen_data_and_train_and_eval(tmp_path, capsys):
    ds = tmp_path / "ds"
    rc = main(["gen-data", "--stage", "A0", "--n", "6", "--seed", "3", "--out", str(ds)])
    assert rc == 0
    run = tmp_path / "run"
    rc = main([
        "train", "--stage", "A0", "--data", str(ds), "--out", str(run),
        "--epochs", "1", "--lr", "1e-4", "--batch-size", "3", "--base-width", "8",
    ])
    assert rc == 0
    report_path = tmp_path / "report.json"
    rc = main([
        "eval", "--checkpoint", str(run / "final.ckpt"), "--out", str(report_path),
        "--cache-dir", str(tmp_path / "cache"),
    ])
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert report["cases"][0]["case"] == "cavity-u0.5"


def test_bench_solver(capsys):
    rc = main(["bench", "--solver", "--n", "32"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "native" in out and "numpy" in out


def test_bench_latency(tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, build(ModelConfig(input_size=32, base_width=8)), {"stage": "A0"})
    rc = main(["bench", "--checkpoint", str(ckpt), "--runs", "30"])
    assert rc == 0
    assert "median" in capsys.readouterr().out


def test_profiles_roundtrip(tmp_path):
    out_field = tmp_path / "f.nsf1"
    main(["solve", "--problem", "cavity", "--n", "32", "--u0", "0.3", "--out", str(out_field)])
    csv_out = tmp_path / "profiles.csv"
    rc = main(["profiles", "--field", str(out_field), "--lines", "centerline,row:16,outlet",
               "--out", str(csv_out)])
    assert rc == 0
    rows = csv_out.read_text().strip().splitlines()
    assert len(rows) == 1 + 3 * 32
