"""Cubemap environments: direction/solid-angle tables and image loading.

Face order is +X,-X,+Y,-Y,+Z,-Z; texel (row i, col j) of a side-s face maps
to u = 2(j+.5)/s-1, v = 2(i+.5)/s-1 with the axis conventions in
docs/format.md. Accepted inputs: a horizontal-cross PNG (4s x 3s), six
per-face PNGs, or a Radiance RGBE .hdr in latlong-free cube layout is NOT
supported -- .hdr files are read as a horizontal cross too.
"""

import re
from dataclasses import dataclass

import numpy as np

FACE_NAMES = ("px", "nx", "py", "ny", "pz", "nz")


@dataclass(frozen=True)
class Cubemap:
    faces: np.ndarray  # (6, s, s, 3) linear radiance

    def __post_init__(self):
        f = self.faces
        if f.ndim != 4 or f.shape[0] != 6 or f.shape[1] != f.shape[2] or f.shape[3] != 3:
            raise ValueError("cubemap faces must be (6, s, s, 3)")
        s = f.shape[1]
        if s < 1 or s & (s - 1):
            raise ValueError("cubemap face side must be a power of two")

    @property
    def side(self) -> int:
        return int(self.faces.shape[1])

    @property
    def direction_count(self) -> int:
        return 6 * self.side * self.side

    @classmethod
    def constant(cls, radiance, side: int = 16) -> "Cubemap":
        rad = np.broadcast_to(np.asarray(radiance, np.float64), (3,))
        faces = np.tile(rad, (6, side, side, 1)).astype(np.float64)
        return cls(faces=faces)


def face_directions(side: int) -> np.ndarray:
    """Unit directions for all texels, shape (6, s, s, 3)."""
    t = (np.arange(side) + 0.5) / side * 2.0 - 1.0
    v, u = np.meshgrid(t, t, indexing="ij")  # v varies with row, u with col
    one = np.ones_like(u)
    raw = np.stack([
        np.stack([one, -v, -u], axis=-1),    # +X
        np.stack([-one, -v, u], axis=-1),    # -X
        np.stack([u, one, v], axis=-1),      # +Y
        np.stack([u, -one, -v], axis=-1),    # -Y
        np.stack([u, -v, one], axis=-1),     # +Z
        np.stack([-u, -v, -one], axis=-1),   # -Z
    ])
    return raw / np.linalg.norm(raw, axis=-1, keepdims=True)


def face_solid_angles(side: int) -> np.ndarray:
    """Per-texel solid angles, shape (6, s, s); sums to 4*pi."""
    t = (np.arange(side) + 0.5) / side * 2.0 - 1.0
    v, u = np.meshgrid(t, t, indexing="ij")
    w = 4.0 / (side * side) / np.power(u * u + v * v + 1.0, 1.5)
    return np.tile(w, (6, 1, 1))


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, x * 12.92, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


_CROSS_SLOTS = {  # (row block, col block) in the horizontal cross
    "py": (0, 1), "nx": (1, 0), "pz": (1, 1), "px": (1, 2), "nz": (1, 3), "ny": (2, 1),
}


def _faces_from_cross(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    if w % 4 or h % 3 or w // 4 != h // 3:
        raise ValueError(f"not a 4:3 horizontal-cross layout: {w}x{h}")
    s = w // 4
    faces = np.empty((6, s, s, 3), np.float64)
    for idx, name in enumerate(FACE_NAMES):
        r, c = _CROSS_SLOTS[name]
        faces[idx] = img[r * s:(r + 1) * s, c * s:(c + 1) * s, :3]
    return faces


def load_cross_png(path) -> Cubemap:
    from PIL import Image

    img = np.asarray(Image.open(path).convert("RGB"), np.float64) / 255.0
    return Cubemap(faces=_faces_from_cross(srgb_to_linear(img)))


def load_face_pngs(paths) -> Cubemap:
    """Six PNGs ordered +X,-X,+Y,-Y,+Z,-Z."""
    from PIL import Image

    if len(paths) != 6:
        raise ValueError("need exactly six face images")
    faces = []
    for p in paths:
        img = np.asarray(Image.open(p).convert("RGB"), np.float64) / 255.0
        if img.shape[0] != img.shape[1]:
            raise ValueError(f"{p}: cubemap faces must be square")
        faces.append(srgb_to_linear(img))
    faces = np.stack(faces)
    if faces.shape[1] & (faces.shape[1] - 1):
        raise ValueError("face side must be a power of two")
    return Cubemap(faces=faces)


def load_hdr(path) -> Cubemap:
    """Radiance RGBE .hdr holding a horizontal-cross cube layout."""
    img = _read_rgbe(path)
    return Cubemap(faces=_faces_from_cross(img))


def _read_rgbe(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline()
        if not magic.startswith(b"#?"):
            raise ValueError(f"{path}: not a Radiance RGBE file")
        while True:
            line = fh.readline()
            if line in (b"\n", b""):
                break
        dims = fh.readline().decode("ascii").strip()
        m = re.match(r"-Y (\d+) \+X (\d+)", dims)
        if not m:
            raise ValueError(f"{path}: unsupported RGBE orientation {dims!r}")
        height, width = int(m.group(1)), int(m.group(2))
        data = fh.read()
    rgbe = np.zeros((height, width, 4), np.uint8)
    pos = 0
    for y in range(height):
        if (pos + 4 <= len(data) and data[pos] == 2 and data[pos + 1] == 2
                and (data[pos + 2] << 8 | data[pos + 3]) == width):
            pos += 4
            for ch in range(4):
                x = 0
                while x < width:
                    count = data[pos]
                    pos += 1
                    if count > 128:  # run
                        rgbe[y, x:x + count - 128, ch] = data[pos]
                        x += count - 128
                        pos += 1
                    else:  # literal
                        rgbe[y, x:x + count, ch] = np.frombuffer(
                            data, np.uint8, count, pos)
                        x += count
                        pos += count
        else:  # flat scanline
            row = np.frombuffer(data, np.uint8, width * 4, pos).reshape(width, 4)
            rgbe[y] = row
            pos += width * 4
    exp = rgbe[..., 3].astype(np.int32)
    scale = np.where(exp == 0, 0.0, np.ldexp(1.0, exp - 136))
    return rgbe[..., :3].astype(np.float64) * scale[..., None]


def write_cross_png(cubemap: Cubemap, path) -> None:
    from PIL import Image

    s = cubemap.side
    canvas = np.zeros((3 * s, 4 * s, 3), np.float64)
    for idx, name in enumerate(FACE_NAMES):
        r, c = _CROSS_SLOTS[name]
        canvas[r * s:(r + 1) * s, c * s:(c + 1) * s] = cubemap.faces[idx]
    out = (linear_to_srgb(canvas) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(out).save(path)
