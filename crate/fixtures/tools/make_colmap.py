"""Regenerates fixtures/colmap: one small reconstruction in COLMAP text and
binary form (written independently of the Rust serializers), plus malformed
inputs."""
import struct
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "colmap"
MODEL_IDS = {"SIMPLE_PINHOLE": 0, "PINHOLE": 1, "SIMPLE_RADIAL": 2, "OPENCV": 4}

CAMERAS = [
    (1, "PINHOLE", 1000, 800, [900.0, 900.0, 500.0, 400.0]),
    (2, "SIMPLE_PINHOLE", 640, 480, [525.5, 320.0, 240.0]),
    (3, "OPENCV", 1920, 1080, [1500.0, 1490.5, 960.0, 540.0, -0.1, 0.01, 0.001, -0.0005]),
    (7, "SIMPLE_RADIAL", 320, 240, [300.0, 160.0, 120.0, 0.05]),
]
IMAGES = [
    (1, [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0], 1, "img0.png", []),
    (2, [0.9659258262890683, -0.25881904510252074, 0.0, 0.0], [0.5, -0.25, 1.0], 2, "sub/img1.jpg",
     [(10.5, 20.25, 5), (300.125, 1.0, -1)]),
    (5, [0.5, 0.5, 0.5, 0.5], [-1.5, 2.0, 3.25], 3, "img5.png", [(0.1, 0.2, 123456789012)]),
    (9, [0.7071067811865476, 0.0, 0.7071067811865475, 0.0], [1e-3, -2e3, 0.3333333333333333], 1, "img9.png", []),
]


def write_text():
    cams = ["# Camera list with one line of data per camera:\n",
            "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"]
    for cid, model, w, h, params in CAMERAS:
        cams.append(" ".join([str(cid), model, str(w), str(h)] + [repr(p) for p in params]) + "\n")
    (ROOT / "text" / "cameras.txt").write_text("".join(cams))
    imgs = ["# Image list with two lines of data per image:\n",
            "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n",
            "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"]
    for iid, q, t, cid, name, pts in IMAGES:
        imgs.append(" ".join([str(iid)] + [repr(v) for v in q + t] + [str(cid), name]) + "\n")
        imgs.append(" ".join(f"{x!r} {y!r} {p}" for x, y, p in pts) + "\n")
    (ROOT / "text" / "images.txt").write_text("".join(imgs))


def cameras_bin():
    out = struct.pack("<Q", len(CAMERAS))
    for cid, model, w, h, params in CAMERAS:
        out += struct.pack("<iiQQ", cid, MODEL_IDS[model], w, h)
        out += struct.pack(f"<{len(params)}d", *params)
    return out


def images_bin():
    out = struct.pack("<Q", len(IMAGES))
    for iid, q, t, cid, name, pts in IMAGES:
        out += struct.pack("<i7di", iid, *q, *t, cid)
        out += name.encode() + b"\0"
        out += struct.pack("<Q", len(pts))
        for x, y, p in pts:
            out += struct.pack("<ddq", x, y, p)
    return out


def main():
    for d in ("text", "bin", "malformed"):
        (ROOT / d).mkdir(parents=True, exist_ok=True)
    write_text()
    cb, ib = cameras_bin(), images_bin()
    (ROOT / "bin" / "cameras.bin").write_bytes(cb)
    (ROOT / "bin" / "images.bin").write_bytes(ib)
    m = ROOT / "malformed"
    (m / "cameras_arity.txt").write_text("1 PINHOLE 1000 800 900\n")
    (m / "cameras_bad_number.txt").write_text("1 PINHOLE 1000 800 900 nine 500 400\n")
    (m / "images_missing_line.txt").write_text("1 1 0 0 0 0 0 0 1 img0.png")
    (m / "images_bad_points.txt").write_text("1 1 0 0 0 0 0 0 1 img0.png\n1.0 2.0\n")
    (m / "cameras_truncated.bin").write_bytes(cb[: len(cb) - 13])
    (m / "images_truncated.bin").write_bytes(ib[:40])
    (m / "cameras_unknown_model.bin").write_bytes(
        struct.pack("<QiiQQ", 1, 1, 42, 10, 10) + struct.pack("<3d", 1.0, 5.0, 5.0))


if __name__ == "__main__":
    main()
