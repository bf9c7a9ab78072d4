"""Images, datasets, and their file formats.

Pixel convention used everywhere in this package: image values live in the
signed unit interval [-1, 1]. The fixed conversion to and from 8-bit pixel
space is

    x = p / 127.5 - 1            (import, so 0 -> -1.0 and 255 -> +1.0)
    p = clamp(round((x + 1) * 127.5), 0, 255)   (export)

where round is IEEE round-half-to-even. One import/export round trip is the
identity on {0..255}.
"""

from __future__ import annotations

import hashlib
import struct
from functools import cached_property
from pathlib import Path

import numpy as np

from .rng import SeededRng
from .tensorio import read_tensor, write_tensor

PIXEL_SCALE = 127.5

_IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")


class DataError(ValueError):
    """Raised for malformed images, datasets, or image files."""


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit pixel values to [-1, 1]."""
    return np.asarray(pixels, dtype=np.float64) / PIXEL_SCALE - 1.0


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Map real values to 8-bit pixels with the canonical clamp-and-round rule."""
    scaled = (np.asarray(values, dtype=np.float64) + 1.0) * PIXEL_SCALE
    return np.clip(np.rint(scaled), 0.0, 255.0).astype(np.uint8)


class Image:
    """An immutable flat image with an explicit (H, W, C) shape.

    ``data`` is a read-only float64 vector of length H*W*C holding finite
    values. ``key`` is an optional identifier used by embedding-table
    similarity backends; it does not participate in equality of pixel data.
    """

    __slots__ = ("data", "shape", "key")

    def __init__(self, data, shape: tuple[int, int, int], key: str | None = None):
        shape = tuple(int(v) for v in shape)
        if len(shape) != 3 or any(v < 1 for v in shape):
            raise DataError(f"image shape must be (H, W, C) with positive entries, got {shape}")
        arr = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
        h, w, c = shape
        if arr.size != h * w * c:
            raise DataError(f"data length {arr.size} does not match shape {shape}")
        if not np.isfinite(arr).all():
            raise DataError("image contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "key", key)

    def __setattr__(self, name, value):
        raise AttributeError("Image is immutable")

    @classmethod
    def from_grid(cls, grid: np.ndarray, key: str | None = None) -> "Image":
        """Build from an (H, W, C) or (H, W) array; 2-D input gets C=1."""
        grid = np.asarray(grid)
        if grid.ndim == 2:
            grid = grid[:, :, None]
        if grid.ndim != 3:
            raise DataError(f"expected a 2-D or 3-D pixel grid, got ndim={grid.ndim}")
        return cls(grid.reshape(-1), grid.shape, key=key)

    def grid(self) -> np.ndarray:
        """Read-only (H, W, C) view of the data."""
        return self.data.reshape(self.shape)

    @property
    def size(self) -> int:
        return self.data.size

    def with_key(self, key: str) -> "Image":
        return Image(self.data, self.shape, key=key)

    def __repr__(self) -> str:
        return f"Image(shape={self.shape}, key={self.key!r})"


def _content_digest(seed: int, payload: bytes) -> bytes:
    return hashlib.sha256(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF) + payload).digest()


class Dataset:
    """A finite collection of same-shape images, optionally class-labeled.

    The images are the support points of the delta-mixture data distribution
    every downstream evaluation is defined over.
    """

    def __init__(self, images: list[Image], labels: list[int] | None = None):
        if not images:
            raise DataError("dataset needs at least one image")
        shape = images[0].shape
        for i, img in enumerate(images):
            if img.shape != shape:
                raise DataError(f"image {i} has shape {img.shape}, expected {shape}")
        if labels is not None:
            labels = [int(v) for v in labels]
            if len(labels) != len(images):
                raise DataError(f"{len(labels)} labels for {len(images)} images")
        self.images = list(images)
        self.labels = labels
        self.shape = shape

    def __len__(self) -> int:
        return len(self.images)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Stacked (N, d) float64 matrix of flattened images (read-only)."""
        mat = np.stack([img.data for img in self.images])
        mat.flags.writeable = False
        return mat

    def subset(self, count: int, seed: int) -> "Dataset":
        """Deterministic pseudo-random subset of ``count`` images.

        Selection sorts images by a content digest keyed on ``seed`` and keeps
        the first ``count``. Because the order depends only on (seed, pixel
        content), taking a subset of a subset with the same seed equals taking
        the smaller subset directly.
        """
        if not 1 <= count <= len(self):
            raise DataError(f"subset size {count} out of range 1..{len(self)}")
        keys = [
            (_content_digest(seed, img.data.tobytes()), i)
            for i, img in enumerate(self.images)
        ]
        keys.sort()
        picked = [i for _, i in keys[:count]]
        images = [self.images[i] for i in picked]
        labels = [self.labels[i] for i in picked] if self.labels is not None else None
        return Dataset(images, labels)

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, shape={self.shape}, labeled={self.labels is not None})"


def sample_standard_normal(rng: SeededRng, shape: tuple[int, int, int]) -> Image:
    """Draw an i.i.d. standard-normal image, advancing ``rng``."""
    h, w, c = (int(v) for v in shape)
    if h < 1 or w < 1 or c < 1:
        raise DataError(f"invalid shape {shape}")
    return Image(rng.normal(h * w * c), (h, w, c))


# ---------------------------------------------------------------------------
# Image files: PNG via Pillow, PGM/PPM natively (binary P5/P6, 8-bit).

def _read_pnm(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    # Header tokens may be separated by whitespace and '#' comments.
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(blob):
        ch = blob[pos:pos + 1]
        if ch == b"#":
            pos = blob.find(b"\n", pos)
            if pos < 0:
                break
            pos += 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(blob) and not blob[end:end + 1].isspace():
                end += 1
            tokens.append(blob[pos:end])
            pos = end
    if len(tokens) < 4 or tokens[0] not in (b"P5", b"P6"):
        raise DataError(f"{path}: not a binary PGM/PPM file")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PGM/PPM supported, maxval={maxval}")
    channels = 1 if tokens[0] == b"P5" else 3
    pos += 1  # single whitespace byte after maxval
    raster = blob[pos:]
    need = width * height * channels
    if len(raster) != need:
        raise DataError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)


def _write_pnm(path: Path, pixels: np.ndarray) -> None:
    h, w, c = pixels.shape
    if c == 1:
        header = f"P5\n{w} {h}\n255\n".encode()
        raster = pixels[:, :, 0].tobytes()
    elif c == 3:
        header = f"P6\n{w} {h}\n255\n".encode()
        raster = pixels.tobytes()
    else:
        raise DataError(f"PGM/PPM export needs 1 or 3 channels, got {c}")
    path.write_bytes(header + raster)


def load_image(path: str | Path) -> Image:
    """Load an 8-bit PNG/PGM/PPM file into the canonical value domain."""
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix in (".pgm", ".ppm"):
            pixels = _read_pnm(path)
        elif suffix == ".png":
            from PIL import Image as PILImage

            with PILImage.open(path) as im:
                if im.mode not in ("L", "RGB"):
                    im = im.convert("RGB" if im.mode not in ("1", "I;16") else "L")
                pixels = np.asarray(im, dtype=np.uint8)
            if pixels.ndim == 2:
                pixels = pixels[:, :, None]
        else:
            raise DataError(f"{path}: unsupported image extension {suffix!r}")
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"{path}: unreadable image file ({exc})") from exc
    return Image(from_uint8(pixels).reshape(-1), pixels.shape, key=path.stem)


def save_image(path: str | Path, image: Image) -> None:
    """Export with the canonical clamp-and-round rule; format from extension."""
    path = Path(path)
    pixels = to_uint8(image.grid())
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm"):
        _write_pnm(path, pixels)
    elif suffix == ".png":
        from PIL import Image as PILImage

        h, w, c = pixels.shape
        if c == 1:
            PILImage.fromarray(pixels[:, :, 0], mode="L").save(path)
        elif c == 3:
            PILImage.fromarray(pixels, mode="RGB").save(path)
        else:
            raise DataError(f"PNG export needs 1 or 3 channels, got {c}")
    else:
        raise DataError(f"{path}: unsupported image extension {suffix!r}")


def load_dataset(
    path: str | Path,
    limit: int | None = None,
    shuffle_seed: int | None = None,
) -> Dataset:
    """Load a dataset from an image directory or a single tensor file.

    A directory is scanned for PNG/PGM/PPM files in sorted-name order; a
    tensor file must hold an (N, H, W, C) stack already in [-1, 1]. With
    ``shuffle_seed`` the kept subset is chosen by the content-keyed
    permutation of :meth:`Dataset.subset`, so the selection is stable across
    runs and platforms; without it the first ``limit`` images in order are
    kept.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file or directory")
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
        if not files:
            raise DataError(f"{path}: no PNG/PGM/PPM files found")
        images = [load_image(p) for p in files]
        dataset = Dataset(images)
    else:
        stack = np.asarray(read_tensor(path), dtype=np.float64)
        if stack.ndim == 3:
            stack = stack[:, :, :, None]
        if stack.ndim != 4:
            raise DataError(f"{path}: expected an (N, H, W, C) tensor, got shape {stack.shape}")
        images = [
            Image(stack[i].reshape(-1), stack[i].shape, key=f"{path.stem}:{i}")
            for i in range(stack.shape[0])
        ]
        dataset = Dataset(images)
    if limit is not None:
        if not 1 <= limit <= len(dataset):
            raise DataError(f"{path}: limit {limit} out of range 1..{len(dataset)}")
    if shuffle_seed is not None:
        dataset = dataset.subset(limit if limit is not None else len(dataset), shuffle_seed)
    elif limit is not None:
        dataset = Dataset(dataset.images[:limit], None)
    return dataset


def save_dataset(path: str | Path, dataset: Dataset) -> None:
    """Write a dataset as one (N, H, W, C) tensor file."""
    h, w, c = dataset.shape
    write_tensor(path, dataset.matrix.reshape(len(dataset), h, w, c))
