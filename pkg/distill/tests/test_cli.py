"""CLI: corpus-teacher training and corpus export round trip."""

import numpy as np

from gandistill.cli import main


def write_corpus(tmp_path, n=12, classes=3):
    from quantcal.data import Dataset, LabeledImage, save_image_dir

    rng = np.random.default_rng(0)
    images = tuple(
        LabeledImage(rng.uniform(0, 1, (3, 32, 32)).astype(np.float32),
                     i % classes, f"i{i}") for i in range(n))
    save_image_dir(Dataset(images, num_classes=classes), tmp_path)
    return tmp_path


def test_train_and_export_round_trip(tmp_path, capsys):
    corpus = write_corpus(tmp_path / "teacher")
    run = tmp_path / "run"
    assert main(["train", "--teacher-corpus", str(corpus), "--pairs", "6",
                 "--classes", "3", "--steps", "2", "--seed", "1",
                 "--out", str(run)]) == 0
    assert (run / "final" / "generator.pt").is_file()

    out = tmp_path / "synth"
    assert main(["export-images", "--checkpoint", str(run / "final" / "generator.pt"),
                 "--classes", "3", "--per-class", "2", "--seed", "4",
                 "--out", str(out)]) == 0
    from quantcal import load_image_dir

    loaded = load_image_dir(out)
    assert len(loaded) == 6
    assert loaded.fully_labeled


def test_train_respects_config(tmp_path):
    import json

    corpus = write_corpus(tmp_path / "teacher")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "weights": {"pixel": 1.0, "adv_teacher": 0.0, "adv_real": 0.0,
                    "disc_real": 0.0},
        "schedule": {"steps": 99, "batch_size": 4, "seed": 2},
    }))
    run = tmp_path / "run"
    # --steps overrides the config's step count
    assert main(["train", "--teacher-corpus", str(corpus), "--pairs", "6",
                 "--classes", "3", "--config", str(cfg), "--steps", "3",
                 "--out", str(run)]) == 0
    history = json.loads((run / "final" / "history.json").read_text())
    assert len(history["history"]) == 3
    assert history["schedule"]["batch_size"] == 4
