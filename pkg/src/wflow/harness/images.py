"""Binary PGM (P5) reading and sampling point targets from grayscale drawings."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..measures import ParticleCloud, RandomSource

__all__ = ["PgmError", "read_pgm", "write_pgm", "sample_image_target"]

_WHITESPACE = b" \t\n\r\v\f"


class PgmError(ValueError):
    def __init__(self, path, offset, message):
        self.offset = offset
        super().__init__(f"{path}: byte {offset}: {message}")


def _header_fields(data: bytes, path, count: int):
    """Read ``count`` whitespace-separated header tokens after the magic number, skipping comments."""
    pos = 2
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        token = data[start:pos]
        if not token:
            raise PgmError(path, start, "header ended early")
        if not token.isdigit():
            raise PgmError(path, start, f"expected a decimal integer, found {token[:16]!r}")
        tokens.append(int(token))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PgmError(path, pos, "expected one whitespace byte before the raster")
    return tokens, pos + 1


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Return ``(image, maxval)``; ``image[row, col]`` with row 0 at the top."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise PgmError(path, 0, f"not a binary PGM (magic {data[:2]!r}, expected b'P5')")
    (width, height, maxval), offset = _header_fields(data, path, 3)
    if width < 1 or height < 1:
        raise PgmError(path, offset, f"empty image {width}x{height}")
    if not 0 < maxval <= 65535:
        raise PgmError(path, offset, f"maxval {maxval} outside 1..65535")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    size = width * height * dtype.itemsize
    if len(data) - offset < size:
        raise PgmError(path, len(data), f"truncated raster: need {size} bytes from offset {offset}, have {len(data) - offset}")
    image = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset).reshape(height, width)
    if image.max() > maxval:
        bad = int(np.argmax(image.ravel() > maxval))
        raise PgmError(path, offset + bad * dtype.itemsize, f"sample exceeds maxval {maxval}")
    return image.astype(np.int64), maxval


def write_pgm(path, image, maxval: int = 255) -> None:
    image = np.asarray(image)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode()
    Path(path).write_bytes(header + image.astype(dtype).tobytes())


def sample_image_target(path, n: int, rng: RandomSource) -> ParticleCloud:
    """Sample ``n`` points with density proportional to darkness (``maxval - intensity``).

    Pixels are drawn by rejection, jittered uniformly within the pixel and
    mapped to ``[-1, 1]`` along the longer side, keeping the aspect ratio and
    pointing the y-axis up.
    """
    image, maxval = read_pgm(path)
    weight = (maxval - image).ravel().astype(np.float64)
    if weight.sum() == 0:
        raise ValueError(f"{path}: zero total mass (the image is white everywhere)")
    top = weight.max()
    chosen = []
    have = 0
    while have < n:
        proposal = rng.integers(0, weight.size, 2 * (n - have) + 16)
        keep = proposal[rng.uniform(0.0, 1.0, proposal.size) * top < weight[proposal]]
        chosen.append(keep[: n - have])
        have += chosen[-1].size
    idx = np.concatenate(chosen)
    height, width = image.shape
    rows, cols = np.divmod(idx, width)
    jitter = rng.uniform(0.0, 1.0, (n, 2))
    scale = 2.0 / max(width, height)
    x = (cols + jitter[:, 0] - width / 2) * scale
    y = (height / 2 - rows - jitter[:, 1]) * scale
    return ParticleCloud(np.column_stack([x, y]))
