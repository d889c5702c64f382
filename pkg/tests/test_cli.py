import json
from pathlib import Path

import pytest

from strider.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen-data -> train once; downstream commands reuse the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main([
        "gen-data", "--gait", "walking", "--frames", "240",
        "--seed", "7", "--out", str(data),
    ]) == 0
    ckpt = root / "model.ckpt"
    assert main([
        "train", str(data), "--out", str(ckpt), "--tiny",
        "--dropout", "0", "--mpn-dropout", "0",
        "--epochs", "1", "--max-steps", "6", "--lr", "1e-3",
        "--val-fraction", "0", "--seed", "1",
    ]) == 0
    return root


def test_gen_data_deterministic(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main([
            "gen-data", "--gait", "walking", "--frames", "150",
            "--seed", "9", "--out", str(out),
        ]) == 0
    f1 = sorted(out1.glob("*.mclip"))[0]
    f2 = sorted(out2.glob("*.mclip"))[0]
    assert f1.read_bytes() == f2.read_bytes()
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["clips"][0]["frames"] == 150


def test_train_writes_checkpoint_and_trace(workspace):
    ckpt = workspace / "model.ckpt"
    trace = Path(str(ckpt) + ".trace.json")
    assert ckpt.exists() and trace.exists()
    from strider.checkpoint import load_checkpoint

    params, skel_hash, meta = load_checkpoint(ckpt)
    assert params.config.width == 24
    assert len(json.loads(trace.read_text())) >= 1


def test_simulate_and_eval(workspace, tmp_path, capsys):
    ckpt = workspace / "model.ckpt"
    roll = tmp_path / "run.roll"
    warm = next((workspace / "data").glob("*.mclip"))
    assert main([
        "simulate", "--checkpoint", str(ckpt), "--ticks", "30",
        "--warm-clip", str(warm), "--out", str(roll), "--seed", "3",
    ]) == 0
    capsys.readouterr()
    assert main(["eval", str(roll), "--label", "tiny"]) == 0
    out = capsys.readouterr().out
    assert "Full" in out and "tiny" in out


def test_eval_constant_rotation_rollout_is_zero(tmp_path, capsys):
    # a clip with frozen rotations must read 0 deg/s
    from strider.synth import generate_clip
    from strider.data import save_clip

    clip = generate_clip("standing", "line", "flat", 130, 60.0, seed=0)
    path = tmp_path / "still.mclip"
    save_clip(path, clip)
    assert main(["eval", str(path)]) == 0
    out = capsys.readouterr().out
    assert "0.0" in out


def test_eval_ttest(workspace, tmp_path, capsys):
    ckpt = workspace / "model.ckpt"
    warm = next((workspace / "data").glob("*.mclip"))
    rolls = []
    for seed, ticks in ((1, 124), (2, 124)):
        roll = tmp_path / f"r{seed}.roll"
        assert main([
            "simulate", "--checkpoint", str(ckpt), "--ticks", str(ticks),
            "--warm-clip", str(warm), "--out", str(roll), "--seed", str(seed),
            "--speed", str(1.0 + 0.3 * seed),
        ]) == 0
        rolls.append(str(roll))
    capsys.readouterr()
    code = main(["eval", "--ttest"] + rolls)
    out = capsys.readouterr().out + capsys.readouterr().err
    assert code in (0, 1)  # degenerate (zero-variance) pairs exit nonzero with a message
    if code == 0:
        assert "t=" in out


def test_inspect(workspace, capsys):
    ckpt = workspace / "model.ckpt"
    assert main(["inspect", "--checkpoint", str(ckpt)]) == 0
    out = capsys.readouterr().out
    assert "parameters:" in out and "memory tokens: 10" in out


def test_inspect_attention(workspace, capsys):
    ckpt = workspace / "model.ckpt"
    clip = next((workspace / "data").glob("*.mclip"))
    assert main([
        "inspect", "--checkpoint", str(ckpt), "--clip", str(clip), "--frame", "60",
    ]) == 0
    out = capsys.readouterr().out
    assert "layer 0 head 0:" in out and "fine+1" in out


def test_unknown_subcommand_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_failures_are_one_line_errors(tmp_path, capsys):
    code = main(["simulate", "--checkpoint", str(tmp_path / "nope.ckpt"), "--out", str(tmp_path / "x.roll")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ") and err.count("\n") == 1
