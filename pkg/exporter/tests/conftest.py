import numpy as np
import pytest
import torch

from lpcam_exporter import build_classifier, save_checkpoint

from voc_toy import NUM_CLASSES, write_palette_mask, write_rgb


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Two-image VOC-style dataset with palette masks and a classes list."""
    root = tmp_path_factory.mktemp("voc_toy")
    (root / "JPEGImages").mkdir()
    (root / "SegmentationClass").mkdir()
    (root / "classes.txt").write_text("aeroplane\nbicycle\nbird\n")
    rng = np.random.default_rng(0)

    write_rgb(root / "JPEGImages" / "img_0.png", rng)
    mask0 = np.zeros((64, 64), dtype=np.uint8)
    mask0[8:40, 8:40] = 1  # class index 0
    mask0[0:4, :] = 255  # ignore strip
    write_palette_mask(root / "SegmentationClass" / "img_0.png", mask0)

    write_rgb(root / "JPEGImages" / "img_1.png", rng)
    mask1 = np.zeros((64, 64), dtype=np.uint8)
    mask1[4:24, 4:30] = 2  # class index 1
    mask1[36:60, 30:60] = 3  # class index 2
    write_palette_mask(root / "SegmentationClass" / "img_1.png", mask1)
    return root


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """Random-weight classifier checkpoint with a fixed seed."""
    torch.manual_seed(1234)
    model = build_classifier(NUM_CLASSES)
    path = tmp_path_factory.mktemp("ckpt") / "classifier.pth"
    save_checkpoint(model, NUM_CLASSES, path)
    return path
