import json

import numpy as np
import pytest

from autofm import fileio
from autofm.cli import main
from autofm.features import SAMPLE_RATE
from autofm.fm import Waveform, nested_fm_patch
from autofm.synthdata import notes_performance, pitch_cycle, write_note_corpus

GENERATOR = nested_fm_patch(1, 2, 3)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    pitches = pitch_cycle([64, 67, 71], 16, seed=5)
    write_note_corpus(corpus, GENERATOR, [pitches[:8], pitches[8:]], note_seconds=2.0)
    config = root / "config.json"
    config.write_text(json.dumps({
        "corpus": [str(corpus)],
        "output_dir": str(root / "out"),
        "seed": 5,
        "supernet": {"carrier_ratios": 3, "mod1_ratios": 3, "mod2_ratios": 3,
                     "learning_rate": 1e-3, "batch_size": 2, "total_steps": 20,
                     "crop_frames": 125, "val_every": 10, "log_every": 10, "seed": 5,
                     "trunk": {"context_radius": 2, "hidden_width": 8, "depth": 2}},
        "search": {"population": 4, "max_iterations": 2, "seed": 5, "active_count": 3,
                   "layer_sizes": [2, 2, 2], "ratio_counts": [3, 3, 3]},
    }))
    return root, config


def test_cli_pipeline_end_to_end(workspace, capsys):
    root, config = workspace
    assert main(["--config", str(config), "prepare"]) == 0
    assert "prepared 8 segments" in capsys.readouterr().out
    assert main(["--config", str(config), "train"]) == 0
    assert (root / "out" / "checkpoint.npz").exists()
    assert main(["--config", str(config), "search"]) == 0
    results = json.loads((root / "out" / "search_results.json").read_text())
    patch = root / "out" / "patches" / results[0]["patch"]
    assert main(["--config", str(config), "eval", "--patch", str(patch), "--split", "val"]) == 0
    assert main(["--config", str(config), "export", "--patch", str(patch)]) == 0
    assert (root / "out" / "store" / "store.json").exists()


def test_cli_render_and_morph(workspace, tmp_path):
    patch_path = tmp_path / "patch.json"
    perf_path = tmp_path / "perf.npz"
    fileio.save_patch(patch_path, GENERATOR, SAMPLE_RATE)
    fileio.save_performance(perf_path, notes_performance(GENERATOR, [392.0], note_seconds=1.0))
    wav = tmp_path / "out.wav"
    assert main(["render", "--patch", str(patch_path), "--performance", str(perf_path),
                 "--wav", str(wav)]) == 0
    assert wav.exists()
    assert main(["morph", "--patch", str(patch_path), "--performance", str(perf_path),
                 "--edit", "1:3", "--dir", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m" / "after.wav").exists()


def test_cli_exit_codes(workspace, tmp_path):
    root, config = workspace
    # 2: configuration problems
    assert main(["prepare"]) == 2                                   # no --config
    missing = tmp_path / "missing.json"
    assert main(["--config", str(missing), "prepare"]) == 2
    bad_split = tmp_path / "bad.json"
    bad_split.write_text(json.dumps({
        "corpus": [str(root / "corpus")], "output_dir": str(tmp_path / "o"),
        "split": [0.5, 0.3, 0.3],
    }))
    assert main(["--config", str(bad_split), "prepare"]) == 2
    # 3: data problems
    silent_dir = tmp_path / "silent"
    silent_dir.mkdir()
    fileio.write_wav(silent_dir / "z.wav", Waveform(np.zeros(4 * SAMPLE_RATE), SAMPLE_RATE))
    silent_cfg = tmp_path / "silent.json"
    silent_cfg.write_text(json.dumps({
        "corpus": [str(silent_dir)], "output_dir": str(tmp_path / "so"),
    }))
    assert main(["--config", str(silent_cfg), "prepare"]) == 3
    # 3: search before train
    fresh = tmp_path / "fresh.json"
    fresh.write_text(json.dumps({
        "corpus": [str(root / "corpus")], "output_dir": str(tmp_path / "fresh_out"),
    }))
    assert main(["--config", str(fresh), "search"]) == 3


def test_cli_seed_and_out_overrides(workspace, tmp_path):
    root, config = workspace
    out = tmp_path / "override_out"
    assert main(["--config", str(config), "--seed", "9", "--out", str(out), "prepare"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 9


def test_cli_fine_tune_flag_is_reserved(workspace):
    root, config = workspace
    assert main(["--config", str(config), "search", "--fine-tune"]) == 2
