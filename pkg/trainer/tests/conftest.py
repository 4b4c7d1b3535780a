import numpy as np
import pytest
from PIL import Image

# Flat-color shapes from a fixed palette, with every edge sitting on the
# upscale grid.  The low-resolution image then determines the high-resolution
# one almost exactly, so a trained upscaler keeps improving where bicubic is
# stuck blurring edges - which is the regime the toy acceptance run needs.
PALETTE = np.array([
    [245, 245, 240], [30, 30, 35], [200, 40, 45], [45, 120, 200],
    [240, 200, 60], [60, 170, 90], [150, 80, 160], [240, 130, 50]],
    dtype=np.float32)


def gen_toy_image(rng, size=96, grid=2):
    img = np.full((size, size, 3), PALETTE[0], dtype=np.float32)
    g = grid
    for _ in range(rng.integers(8, 14)):
        kind = rng.integers(3)
        color = PALETTE[rng.integers(1, len(PALETTE))]
        if kind == 0:      # rectangle
            y0 = int(rng.integers(0, (size - 12) // g)) * g
            x0 = int(rng.integers(0, (size - 12) // g)) * g
            hh = int(rng.integers(6 // g, (size // 2) // g)) * g
            ww = int(rng.integers(6 // g, (size // 2) // g)) * g
            img[y0:y0 + hh, x0:x0 + ww] = color
        elif kind == 1:    # horizontal bar
            t = int(rng.integers(1, 4)) * g
            pos = int(rng.integers(0, (size - t) // g)) * g
            img[pos:pos + t, :] = color
        else:              # vertical bar
            t = int(rng.integers(1, 4)) * g
            pos = int(rng.integers(0, (size - t) // g)) * g
            img[:, pos:pos + t] = color
    return img.clip(0, 255).astype(np.uint8)


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Fourteen training images on disk plus four held-out arrays from the
    same distribution."""
    root = tmp_path_factory.mktemp("toyset")
    rng = np.random.default_rng(5)
    for i in range(14):
        Image.fromarray(gen_toy_image(rng)).save(root / f"img_{i:02d}.png")
    held_rng = np.random.default_rng(99)
    held_out = [gen_toy_image(held_rng) for _ in range(4)]
    return root, held_out


def psnr_rgb_uint8(a: np.ndarray, b: np.ndarray) -> float:
    mse = np.mean((a.astype(np.float64) / 255 - b.astype(np.float64) / 255) ** 2)
    return float(10 * np.log10(1.0 / mse))
