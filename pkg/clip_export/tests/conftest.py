import numpy as np
import pytest
from PIL import Image


@pytest.fixture()
def toy_folder(tmp_path):
    """Ten decodable images (img_9 duplicates img_0) plus one corrupt file."""
    image_dir = tmp_path / "images"
    image_dir.mkdir()
    rng = np.random.default_rng(0)
    for i in range(9):
        pixels = rng.integers(0, 255, size=(24, 24, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(image_dir / f"img_{i}.png")
    first = Image.open(image_dir / "img_0.png")
    first.save(image_dir / "img_9.png")
    (image_dir / "not_an_image.png").write_bytes(b"this is not a png")
    return image_dir


@pytest.fixture()
def label_file(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("cat\ndog\nbird\ncar\ntree\nboat\n")
    return path
