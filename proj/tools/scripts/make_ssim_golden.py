"""Regenerates tests/golden/ssim: two grey images and their SSIM from scikit-image."""
import json
import pathlib

import numpy as np
from scipy.ndimage import gaussian_filter
from skimage.metrics import structural_similarity

out = pathlib.Path(__file__).resolve().parents[2] / "tests" / "golden" / "ssim"
out.mkdir(parents=True, exist_ok=True)

rng = np.random.default_rng(20240611)
a = gaussian_filter(rng.random((48, 64)), 1.5)
a = (a - a.min()) / (a.max() - a.min()) * 0.8 + 0.1
b = np.clip(gaussian_filter(a, 0.8) + rng.normal(0, 0.03, a.shape), 0, 1)
a, b = a.astype(np.float32), b.astype(np.float32)


def write_pfm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode())
        f.write(np.ascontiguousarray(img[::-1]).astype("<f4").tobytes())


write_pfm(out / "a.pfm", a)
write_pfm(out / "b.pfm", b)

golden = {}
for win in (3, 7, 11):
    golden[f"window_{win}"] = float(structural_similarity(
        a.astype(np.float64), b.astype(np.float64), win_size=win, data_range=1.0,
        gaussian_weights=False, use_sample_covariance=False, K1=0.01, K2=0.03))
(out / "ssim.json").write_text(json.dumps(golden, indent=2) + "\n")
print(golden)
