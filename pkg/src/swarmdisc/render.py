"""Collapse the tail of a rollout into the 50x50 grayscale behavior image.

Each agent in each of the final frames is stamped as a filled disk scaled to
image resolution; frames are composed by per-pixel maximum, giving white
trails on black. Augmentation (random crop + right-angle rotation) supplies
the positive samples for self-supervised training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .sim import Trajectory

IMAGE_SIZE = 50
RENDER_WINDOW = 160
MIN_RADIUS_PX = 0.5
CROP_SCALE_RANGE = (0.6, 1.0)


@dataclass
class TrajectoryImage:
    """A single-channel image with intensities in [0, 1]."""

    pixels: np.ndarray
    source_id: str | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 2:
            raise ContractError("image must be 2D")


def _stamp_disks(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, radius: float) -> None:
    """Set pixels whose centers fall within `radius` of each point; the pixel
    containing the point is always set so sub-pixel agents stay visible."""
    h, w = img.shape
    cols = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    rows = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    img[rows, cols] = 1.0
    reach = int(np.ceil(radius + 0.5))
    offsets = np.arange(-reach, reach + 1)
    dr, dc = np.meshgrid(offsets, offsets, indexing="ij")
    dr = dr.ravel()
    dc = dc.ravel()
    cand_r = rows[:, None] + dr[None, :]
    cand_c = cols[:, None] + dc[None, :]
    px = cand_c + 0.5
    py = cand_r + 0.5
    inside = (px - xs[:, None]) ** 2 + (py - ys[:, None]) ** 2 <= radius * radius
    inside &= (cand_r >= 0) & (cand_r < h) & (cand_c >= 0) & (cand_c < w)
    img[cand_r[inside], cand_c[inside]] = 1.0


def render(traj: Trajectory, window: int = RENDER_WINDOW,
           out_size: int = IMAGE_SIZE, source_id: str | None = None) -> TrajectoryImage:
    """Rasterize the last `window` frames into one max-composited image."""
    if len(traj) < window:
        raise ContractError(f"trajectory has {len(traj)} frames, window needs {window}")
    img = np.zeros((out_size, out_size), dtype=np.float32)
    n = traj.frames.shape[1]
    if n == 0 or window == 0:
        return TrajectoryImage(img, source_id)
    sx = out_size / traj.width
    sy = out_size / traj.height
    radius = max(traj.model.agent_radius * (out_size / traj.width), MIN_RADIUS_PX)
    tail = traj.frames[len(traj) - window:]
    xs = (tail[:, :, 0] * sx).ravel()
    ys = (tail[:, :, 1] * sy).ravel()
    _stamp_disks(img, xs, ys, radius)
    return TrajectoryImage(img, source_id)


def bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel alignment; identity when sizes match."""
    in_h, in_w = arr.shape
    arr = np.asarray(arr, dtype=np.float32)
    ry = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    rx = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ry = np.clip(ry, 0.0, in_h - 1.0)
    rx = np.clip(rx, 0.0, in_w - 1.0)
    y0 = np.floor(ry).astype(np.int64)
    x0 = np.floor(rx).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ry - y0).astype(np.float32)[:, None]
    wx = (rx - x0).astype(np.float32)[None, :]
    top = arr[y0][:, x0] * (1 - wx) + arr[y0][:, x1] * wx
    bot = arr[y1][:, x0] * (1 - wx) + arr[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def rotate_quarter(arr: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Exact 90-degree-multiple rotation (pure pixel permutation)."""
    return np.ascontiguousarray(np.rot90(arr, k=quarter_turns % 4))


def crop_resize(arr: np.ndarray, row0: int, col0: int, crop_h: int, crop_w: int,
                out_size: int) -> np.ndarray:
    crop = arr[row0:row0 + crop_h, col0:col0 + crop_w]
    return bilinear_resize(crop, out_size, out_size)


def augment(img: TrajectoryImage, rng: np.random.Generator) -> TrajectoryImage:
    """Random crop to [0.6, 1.0] scale, resize back, rotate by 90/180/270 degrees."""
    arr = img.pixels
    h, w = arr.shape
    scale = rng.uniform(*CROP_SCALE_RANGE)
    crop_h = max(1, min(h, round(scale * h)))
    crop_w = max(1, min(w, round(scale * w)))
    row0 = int(rng.integers(0, h - crop_h + 1))
    col0 = int(rng.integers(0, w - crop_w + 1))
    quarter = int(rng.integers(1, 4))
    out = crop_resize(arr, row0, col0, crop_h, crop_w, h)
    out = rotate_quarter(out, quarter)
    return TrajectoryImage(np.clip(out, 0.0, 1.0), img.source_id)


def save_pgm(img: TrajectoryImage, path) -> None:
    """Binary PGM (P5), maxval 255."""
    data = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def load_pgm(path, source_id: str | None = None) -> TrajectoryImage:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ContractError(f"{path}: not a binary PGM")
        fields: list[int] = []
        while len(fields) < 3:
            line = fh.readline()
            if not line:
                raise ContractError(f"{path}: truncated PGM header")
            if line.startswith(b"#"):
                continue
            fields.extend(int(tok) for tok in line.split())
        w, h, maxval = fields[:3]
        data = np.frombuffer(fh.read(w * h), dtype=np.uint8)
        if data.size != w * h:
            raise ContractError(f"{path}: truncated PGM payload")
    pixels = data.reshape(h, w).astype(np.float32) / float(maxval)
    return TrajectoryImage(pixels, source_id)
