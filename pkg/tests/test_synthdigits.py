import numpy as np

from steernet.data import load_idx
from steernet.synthdigits import NUM_CLASSES, make_digits, render_glyph, write_digit_files


class TestGenerator:
    def test_shapes_and_range(self):
        images, labels = make_digits(50, 16, seed=0)
        assert images.shape == (50, 1, 16, 16)
        assert images.min() >= 0.0 and images.max() <= 1.0
        assert labels.shape == (50,)
        assert set(labels) <= set(range(NUM_CLASSES))

    def test_deterministic(self):
        a = make_digits(30, 16, seed=5)
        b = make_digits(30, 16, seed=5)
        assert a[0].tobytes() == b[0].tobytes()
        assert a[1].tobytes() == b[1].tobytes()

    def test_balanced_labels(self):
        _, labels = make_digits(200, 12, seed=1)
        counts = np.bincount(labels, minlength=NUM_CLASSES)
        assert counts.min() == counts.max() == 20

    def test_content_inside_disk(self):
        # rotation must not clip glyph content: the border ring stays dark
        images, _ = make_digits(40, 16, seed=2)
        border = np.concatenate(
            [images[:, 0, 0, :].ravel(), images[:, 0, -1, :].ravel(),
             images[:, 0, :, 0].ravel(), images[:, 0, :, -1].ravel()]
        )
        assert border.max() < 0.35

    def test_classes_differ(self):
        rng = np.random.default_rng(0)
        clean = [render_glyph(c, 16, rng, jitter=False) for c in range(NUM_CLASSES)]
        for i in range(NUM_CLASSES):
            for j in range(i + 1, NUM_CLASSES):
                assert np.abs(clean[i] - clean[j]).mean() > 0.02, (i, j)

    def test_written_files_load(self, tmp_path):
        paths = write_digit_files(tmp_path, n=60, size=14, seed=3)
        train = load_idx(paths["train_images"], paths["train_labels"])
        test = load_idx(paths["test_images"], paths["test_labels"])
        assert len(train) == 60 and len(test) == 30
        assert (tmp_path / "provenance.json").exists()
