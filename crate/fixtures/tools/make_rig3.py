"""Regenerates fixtures/rig3: three pinhole cameras pitched +30, 0 and -30
degrees about the world x axis (world up is -y), with smooth mid-tone
backgrounds."""
import math
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent.parent / "rig3"
W, H, F = 320, 240, 300.0
VIEWS = [  # name, pitch (deg, positive looks up), camera center
    ("up30.png", 30.0, (-0.5, 0.0, 0.0)),
    ("level.png", 0.0, (0.0, 0.0, 0.0)),
    ("down30.png", -30.0, (0.5, 0.0, 0.0)),
]


def pose(pitch_deg, center):
    a = math.radians(pitch_deg)
    s, c = math.sin(a), math.cos(a)
    r = np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    q = (math.cos(a / 2), -math.sin(a / 2), 0.0, 0.0)
    t = -r @ np.asarray(center)
    return q, t


def background(seed):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:H, 0:W].astype(float)
    base = 0.35 + 0.25 * (x / W) + 0.1 * np.sin(y / 17.0 + seed)
    img = np.stack([base, base * 0.95 + 0.03, base * 0.9 + 0.05], axis=-1)
    img += rng.normal(0.0, 0.01, img.shape)
    return (np.clip(img, 0.2, 0.8) * 255).round().astype(np.uint8)


def main():
    (ROOT / "sparse").mkdir(parents=True, exist_ok=True)
    (ROOT / "images").mkdir(exist_ok=True)
    (ROOT / "sparse" / "cameras.txt").write_text(
        "# Camera list with one line of data per camera:\n"
        "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
        f"1 PINHOLE {W} {H} {F} {F} {W / 2} {H / 2}\n"
    )
    lines = [
        "# Image list with two lines of data per image:\n",
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n",
        "#   POINTS2D[] as (X, Y, POINT3D_ID)\n",
    ]
    for i, (name, pitch, center) in enumerate(VIEWS, start=1):
        q, t = pose(pitch, center)
        vals = " ".join(repr(float(v)) for v in (*q, *t))
        lines.append(f"{i} {vals} 1 {name}\n\n")
        Image.fromarray(background(i), "RGB").save(ROOT / "images" / name)
    (ROOT / "sparse" / "images.txt").write_text("".join(lines))


if __name__ == "__main__":
    main()
