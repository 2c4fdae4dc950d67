#!/usr/bin/env python3
"""Windowed structural similarity between two images.

SSIM compares luminance, contrast and structure over sliding 8x8 windows.
Identical images score exactly 1.0; noise and blur pull the score down in
ways a plain pixel MSE does not capture.
"""

import numpy as np

from dsvd import ssim

rng = np.random.default_rng(3)

# a synthetic "photo": smooth gradient plus a bright square
size = 64
yy, xx = np.mgrid[0:size, 0:size]
image = 0.3 + 0.4 * (xx / size) + 0.2 * (yy / size)
image[20:44, 20:44] += 0.25
image = np.clip(image, 0.0, 1.0)

print(f"self-similarity                : {ssim(image, image, 1.0):.6f}")

for noise_scale in [0.01, 0.05, 0.15]:
    noisy = np.clip(image + rng.normal(0, noise_scale, image.shape), 0.0, 1.0)
    mse = float(np.mean((noisy - image) ** 2))
    print(
        f"gaussian noise sigma={noise_scale:<5}: "
        f"ssim={ssim(image, noisy, 1.0):.4f}  (mse={mse:.5f})"
    )

# box blur: large structural change, tiny mean shift
kernel = 5
blurred = image.copy()
for axis in (0, 1):
    blurred = np.apply_along_axis(
        lambda row: np.convolve(row, np.ones(kernel) / kernel, mode="same"), axis, blurred
    )
mse = float(np.mean((blurred - image) ** 2))
print(f"5x5 box blur                   : ssim={ssim(image, blurred, 1.0):.4f}  (mse={mse:.5f})")

contrast = np.clip((image - 0.5) * 0.5 + 0.5, 0.0, 1.0)
print(f"halved contrast                : ssim={ssim(image, contrast, 1.0):.4f}")
