"""PNG decoding/encoding, value normalization, paired datasets and patch sampling."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "PNGError",
    "MissingImageError",
    "UnsupportedPNGError",
    "CorruptPNGError",
    "ImageBuffer",
    "load_png",
    "save_png",
    "png_size",
    "normalize",
    "denormalize",
    "PairedDataset",
    "crop_window",
    "sample_patch_pair",
    "make_batch",
    "list_pngs",
]

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_CHANNELS = {0: 1, 2: 3, 4: 2, 6: 4}


class PNGError(Exception):
    pass


class MissingImageError(PNGError, FileNotFoundError):
    pass


class UnsupportedPNGError(PNGError):
    pass


class CorruptPNGError(PNGError):
    pass


@dataclass(frozen=True)
class ImageBuffer:
    """``[C, H, W]`` float64 pixels in ``[0, 1]`` plus the source bit depth."""

    data: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[0] not in (1, 3) or min(d.shape) < 1:
            raise ValueError(f"image data must be [1|3, H, W] with positive extents, got {d.shape}")
        if d.size and (d.min() < 0.0 or d.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def _chunks(raw: bytes, path):
    if raw[:8] != _SIGNATURE:
        raise CorruptPNGError(f"{path}: not a PNG (bad signature)")
    pos = 8
    while pos < len(raw):
        if pos + 8 > len(raw):
            raise CorruptPNGError(f"{path}: truncated chunk header at byte {pos}")
        length, ctype = struct.unpack(">I4s", raw[pos : pos + 8])
        body = raw[pos + 8 : pos + 8 + length]
        crc_bytes = raw[pos + 8 + length : pos + 12 + length]
        if len(body) != length or len(crc_bytes) != 4:
            raise CorruptPNGError(f"{path}: truncated {ctype!r} chunk")
        if zlib.crc32(ctype + body) != struct.unpack(">I", crc_bytes)[0]:
            raise CorruptPNGError(f"{path}: CRC mismatch in {ctype!r} chunk")
        yield ctype, body
        pos += 12 + length
        if ctype == b"IEND":
            return
    raise CorruptPNGError(f"{path}: missing IEND chunk")


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = np.abs(p - a), np.abs(p - b), np.abs(p - c)
    return np.where((pa <= pb) & (pa <= pc), a, np.where(pb <= pc, b, c))


def _unfilter(data: bytes, height: int, stride: int, bpp: int, path) -> np.ndarray:
    buf = np.frombuffer(data, dtype=np.uint8)
    if buf.size != height * (stride + 1):
        raise CorruptPNGError(f"{path}: decompressed size {buf.size} != expected {height * (stride + 1)}")
    rows = buf.reshape(height, stride + 1)
    out = np.zeros((height, stride), dtype=np.int64)
    prev = np.zeros(stride, dtype=np.int64)
    for y in range(height):
        ftype = rows[y, 0]
        line = rows[y, 1:].astype(np.int64)
        if ftype == 0:
            cur = line
        elif ftype == 1:
            cur = np.cumsum(line.reshape(-1, bpp), axis=0).reshape(-1) % 256
        elif ftype == 2:
            cur = (line + prev) % 256
        elif ftype in (3, 4):
            cur = np.zeros(stride, dtype=np.int64)
            px = line.reshape(-1, bpp)
            up = prev.reshape(-1, bpp)
            left = np.zeros(bpp, dtype=np.int64)
            upleft = np.zeros(bpp, dtype=np.int64)
            res = cur.reshape(-1, bpp)
            for i in range(px.shape[0]):
                if ftype == 3:
                    left = (px[i] + (left + up[i]) // 2) % 256
                else:
                    left = (px[i] + _paeth(left, up[i], upleft)) % 256
                    upleft = up[i]
                res[i] = left
        else:
            raise CorruptPNGError(f"{path}: unknown filter type {ftype} on row {y}")
        out[y] = cur
        prev = cur
    return out


def load_png(path) -> ImageBuffer:
    """Decode an 8- or 16-bit grayscale/RGB PNG (alpha is discarded)."""
    path = Path(path)
    if not path.is_file():
        raise MissingImageError(f"{path}: no such file")
    raw = path.read_bytes()
    header = None
    idat = []
    for ctype, body in _chunks(raw, path):
        if ctype == b"IHDR":
            if len(body) != 13:
                raise CorruptPNGError(f"{path}: malformed IHDR")
            header = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            idat.append(body)
    if header is None:
        raise CorruptPNGError(f"{path}: missing IHDR")
    width, height, depth, ctype, _comp, _filt, interlace = header
    if ctype not in _CHANNELS:
        raise UnsupportedPNGError(f"{path}: color type {ctype} (palette) is not supported")
    if depth not in (8, 16):
        raise UnsupportedPNGError(f"{path}: bit depth {depth} is not supported (8 or 16 only)")
    if interlace:
        raise UnsupportedPNGError(f"{path}: interlaced PNGs are not supported")
    if width == 0 or height == 0:
        raise CorruptPNGError(f"{path}: zero image extent")
    nch = _CHANNELS[ctype]
    bpp = nch * depth // 8
    try:
        data = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise CorruptPNGError(f"{path}: corrupt image stream ({exc})") from None
    rows = _unfilter(data, height, width * bpp, bpp, path)
    if depth == 16:
        rows = rows[:, 0::2] * 256 + rows[:, 1::2]
    maxval = float(2**depth - 1)
    px = rows.reshape(height, width, nch).transpose(2, 0, 1) / maxval
    if nch in (2, 4):
        px = px[:-1]
    return ImageBuffer(px.astype(np.float64), depth)


def _chunk(ctype: bytes, body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + ctype + body + struct.pack(">I", zlib.crc32(ctype + body))


def save_png(path, img, bit_depth: int = 8) -> None:
    """Write ``img`` (ImageBuffer or ``[C, H, W]`` array in [0, 1]) without filtering."""
    data = img.data if isinstance(img, ImageBuffer) else np.asarray(img, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    c, h, w = data.shape
    if c not in (1, 3):
        raise ValueError(f"can only write 1 or 3 channels, got {c}")
    maxval = 2**bit_depth - 1
    q = np.round(np.clip(data, 0.0, 1.0) * maxval).astype(">u2" if bit_depth == 16 else np.uint8)
    rows = q.transpose(1, 2, 0).reshape(h, -1).view(np.uint8).reshape(h, -1)
    raw = np.concatenate([np.zeros((h, 1), dtype=np.uint8), rows], axis=1).tobytes()
    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, 0 if c == 1 else 2, 0, 0, 0)
    blob = _SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", zlib.compress(raw, 6)) + _chunk(b"IEND", b"")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(blob)


def png_size(path) -> tuple[int, int]:
    """``(height, width)`` read from the IHDR chunk only."""
    path = Path(path)
    if not path.is_file():
        raise MissingImageError(f"{path}: no such file")
    with open(path, "rb") as fh:
        head = fh.read(33)
    if head[:8] != _SIGNATURE or head[12:16] != b"IHDR":
        raise CorruptPNGError(f"{path}: not a PNG")
    w, h = struct.unpack(">II", head[16:24])
    return h, w


def normalize(img, mode: str = "sym") -> np.ndarray:
    """Map [0, 1] pixels to ``zero_one`` (unchanged) or ``sym`` ([-1, 1])."""
    data = img.data if isinstance(img, ImageBuffer) else np.asarray(img, dtype=np.float64)
    if mode == "sym":
        return data * 2.0 - 1.0
    if mode == "zero_one":
        return np.array(data, copy=True)
    raise ValueError(f"unknown normalization mode {mode!r}")


def denormalize(x, mode: str = "sym") -> np.ndarray:
    x = np.asarray(x)
    if mode == "sym":
        return (x + 1.0) * 0.5
    if mode == "zero_one":
        return np.array(x, copy=True)
    raise ValueError(f"unknown normalization mode {mode!r}")


class PairedDataset:
    """``root/low/NAME.png`` paired with ``root/high/NAME.png``, sorted by name."""

    def __init__(self, root, split: str = ""):
        base = Path(root) / split if split else Path(root)
        low_dir, high_dir = base / "low", base / "high"
        if not low_dir.is_dir() or not high_dir.is_dir():
            raise FileNotFoundError(f"dataset at {base} needs 'low' and 'high' subdirectories")
        self.root = base
        self.split = split
        lows = sorted(p.name for p in low_dir.glob("*.png"))
        highs = set(p.name for p in high_dir.glob("*.png"))
        unmatched = [n for n in lows if n not in highs] + sorted(highs - set(lows))
        if unmatched:
            raise ValueError(f"unpaired images in {base}: {', '.join(unmatched)}")
        self.records = [(low_dir / n, high_dir / n) for n in lows]
        for lo, hi in self.records:
            if png_size(lo) != png_size(hi):
                raise ValueError(f"{lo.name}: low {png_size(lo)} and high {png_size(hi)} sizes differ")
        self._cache: dict[int, tuple[ImageBuffer, ImageBuffer]] = {}

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> tuple[ImageBuffer, ImageBuffer]:
        if i not in self._cache:
            lo, hi = self.records[i]
            self._cache[i] = (load_png(lo), load_png(hi))
        return self._cache[i]


def crop_window(height: int, width: int, size: int, rng: np.random.Generator) -> tuple[int, int]:
    if height < size or width < size:
        raise ValueError(
            f"image {height}x{width} is smaller than the {size}x{size} patch; resize it or lower the patch size"
        )
    return int(rng.integers(0, height - size + 1)), int(rng.integers(0, width - size + 1))


def sample_patch_pair(pair, size: int, rng: np.random.Generator):
    """Crop the same uniformly placed ``size x size`` window out of both images."""
    low, high = (p.data if isinstance(p, ImageBuffer) else np.asarray(p) for p in pair)
    top, left = crop_window(low.shape[-2], low.shape[-1], size, rng)
    window = (..., slice(top, top + size), slice(left, left + size))
    return low[window], high[window]


def make_batch(dataset, batch: int, size: int, rng: np.random.Generator, mode: str = "sym",
               dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """``(x0, y)``: normal-light targets and low-light conditions, normalized."""
    idx = rng.integers(0, len(dataset), size=batch)
    lows, highs = [], []
    for i in idx:
        lo, hi = sample_patch_pair(dataset[int(i)], size, rng)
        lows.append(lo)
        highs.append(hi)
    y = normalize(np.stack(lows), mode).astype(dtype)
    x0 = normalize(np.stack(highs), mode).astype(dtype)
    lo_bound = -1.0 if mode == "sym" else 0.0
    for arr in (x0, y):
        assert arr.min() >= lo_bound and arr.max() <= 1.0, "batch values left the normalized range"
    return x0, y


def list_pngs(directory) -> list[Path]:
    return sorted(Path(directory).glob("*.png"))

