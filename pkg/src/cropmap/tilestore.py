"""Quantized raster tiles: storage, codec, and point sampling.

One binary container carries both D-dimensional embedding tiles and
single-band class/probability maps. All values are little-endian.

File layout (byte offsets):

    0   magic "EMBT" (4 bytes)
    4   version u16 = 1
    6   kind u8: 0 embedding, 1 cluster, 2 probability, 3 binary
    7   dtype u8: 0 u16, 1 f64, 2 u8
    8   width u32
    12  height u32
    16  dims u32
    20  origin_lon f64
    28  origin_lat f64
    36  pixel_size f64
    44  scale f64
    52  offset f64
    60  reserved (zeros) to byte 64
    64  payload, row-major height x width x dims stored values
    ..  validity mask, packed bits (row-major, MSB first, padded to a byte)
    ..  CRC32 of all preceding bytes (u32)

Quantization is affine: real = stored * scale + offset. Masked-out
pixels stay in the payload but are excluded from every downstream
statistic.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    FileFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .forest import TrainingSet
from .geometry import GeoTransform, lonlat_to_pixel

MAGIC = b"EMBT"
VERSION = 1
HEADER_SIZE = 64
_HEADER = struct.Struct("<4sHBBIII5d")  # 60 bytes, padded with 4 reserved

DTYPES = ("u16", "f64", "u8")
_DTYPE_CODE = {"u16": 0, "f64": 1, "u8": 2}
_CODE_DTYPE = {v: k for k, v in _DTYPE_CODE.items()}
_DTYPE_NP = {"u16": np.dtype("<u2"), "f64": np.dtype("<f8"), "u8": np.dtype("u1")}
_DTYPE_SIZE = {"u16": 2, "f64": 8, "u8": 1}
_DTYPE_MAX = {"u16": 65535, "u8": 255}

KINDS = ("embedding", "cluster", "probability", "binary")
_KIND_CODE = {"embedding": 0, "cluster": 1, "probability": 2, "binary": 3}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}

NODATA = 255  # sentinel for cluster and binary maps; probability maps use NaN


@dataclass(frozen=True)
class QuantizationParams:
    """Affine mapping between real embedding values and stored units.

    scale is embedding units per stored unit, offset is the real value of
    stored 0. dtype "f64" stores reals directly and must use the identity
    mapping (scale 1, offset 0).
    """

    dtype: str
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {DTYPES}, got {self.dtype!r}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not np.isfinite(self.offset):
            raise ValueError("offset must be finite")
        if self.dtype == "f64" and (self.scale != 1.0 or self.offset != 0.0):
            raise ValueError("f64 storage must use the identity mapping (scale=1, offset=0)")


IDENTITY_F64 = QuantizationParams("f64")


def quantize(values, q: QuantizationParams):
    """Map real values to stored units: round((v - offset) / scale), clamped.

    Rounding is ties-to-even (np.rint). Clamping to the dtype range is
    silent; use saturation_count for diagnostics. f64 is the identity.
    Accepts scalars or arrays and returns the matching shape.
    """
    arr = np.asarray(values, dtype=np.float64)
    if q.dtype == "f64":
        out = arr.astype(_DTYPE_NP["f64"])
    else:
        stored = np.rint((arr - q.offset) / q.scale)
        stored = np.clip(stored, 0, _DTYPE_MAX[q.dtype])
        out = stored.astype(_DTYPE_NP[q.dtype])
    return out if out.ndim else out[()]


def dequantize(stored, q: QuantizationParams):
    """Map stored units back to real values: stored * scale + offset."""
    arr = np.asarray(stored, dtype=np.float64)
    if q.dtype == "f64":
        out = arr
    else:
        out = arr * q.scale + q.offset
    return out if out.ndim else float(out)


def saturation_count(values, q: QuantizationParams) -> int:
    """How many values fall outside the representable range and would clamp."""
    if q.dtype == "f64":
        return 0
    arr = np.asarray(values, dtype=np.float64)
    lo = q.offset
    hi = q.offset + _DTYPE_MAX[q.dtype] * q.scale
    return int(((arr < lo) | (arr > hi)).sum())


def bytes_per_pixel(dims: int, q: QuantizationParams) -> int:
    """Storage cost of one pixel: dims values at the dtype's width."""
    if dims < 1:
        raise ValueError(f"dims must be >= 1, got {dims}")
    return dims * _DTYPE_SIZE[q.dtype]


@dataclass
class EmbeddingTile:
    """A georeferenced (height, width, dims) grid of stored embedding values.

    data holds stored units in the quantization dtype; mask is True on
    valid pixels (inside the ROI). Tiles are immutable by convention:
    nothing in this package mutates one after construction.
    """

    geo: GeoTransform
    quant: QuantizationParams
    data: np.ndarray
    mask: np.ndarray
    saturated: int = 0  # pixels clamped during quantization, for diagnostics

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"data must be (height, width, dims), got shape {self.data.shape}")
        expected = _DTYPE_NP[self.quant.dtype]
        if self.data.dtype != expected:
            self.data = self.data.astype(expected)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.data.shape[:2]:
            raise ValueError(
                f"mask shape {self.mask.shape} does not match grid {self.data.shape[:2]}"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def dims(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_real(
        cls,
        values,
        geo: GeoTransform,
        quant: QuantizationParams | None = None,
        mask: np.ndarray | None = None,
    ) -> "EmbeddingTile":
        """Quantize real (height, width, dims) values into a tile.

        When quant is omitted, u16 storage is fitted to the valid-pixel
        value range: offset = min, scale = (max - min) / 65535. A
        degenerate (constant) range falls back to scale 1 so constant
        scenes round-trip exactly.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError(f"values must be (height, width, dims), got shape {values.shape}")
        if mask is None:
            mask = np.ones(values.shape[:2], dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if quant is None:
            pool = values[mask] if mask.any() else values
            vmin = float(pool.min())
            vmax = float(pool.max())
            span = vmax - vmin
            scale = span / _DTYPE_MAX["u16"] if span > 0 else 1.0
            quant = QuantizationParams("u16", scale=scale, offset=vmin)
        return cls(
            geo=geo,
            quant=quant,
            data=quantize(values, quant),
            mask=mask,
            saturated=saturation_count(values[mask], quant),
        )

    def vectors(self) -> np.ndarray:
        """Dequantized (height, width, dims) float64 view of the whole tile."""
        return dequantize(self.data, self.quant)

    def vectors_at(self, rows, cols) -> np.ndarray:
        """Dequantized vectors for the given pixel index arrays."""
        return dequantize(self.data[rows, cols], self.quant)


@dataclass
class ClassMap:
    """Single-band map: cluster ids, crop probabilities, or a binary mask.

    Cluster and binary maps store uint8 with 255 as nodata; probability
    maps store float64 with NaN as nodata.
    """

    geo: GeoTransform
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("cluster", "probability", "binary"):
            raise ValueError(f"kind must be cluster, probability, or binary, got {self.kind!r}")
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError(f"values must be (height, width), got shape {self.values.shape}")
        if self.kind == "probability":
            self.values = self.values.astype(np.float64)
            valid = self.values[~np.isnan(self.values)]
            if valid.size and (valid.min() < 0.0 or valid.max() > 1.0):
                raise ValueError("probability values must lie in [0, 1]")
        else:
            if not np.issubdtype(self.values.dtype, np.integer):
                raise ValueError(f"{self.kind} maps store integer class ids")
            self.values = self.values.astype(np.uint8)
            if self.kind == "binary":
                bad = ~np.isin(self.values, (0, 1, NODATA))
                if bad.any():
                    raise ValueError("binary maps may only contain 0, 1, and nodata")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def valid_mask(self) -> np.ndarray:
        if self.kind == "probability":
            return ~np.isnan(self.values)
        return self.values != NODATA


def _payload_quant(obj) -> QuantizationParams:
    if isinstance(obj, EmbeddingTile):
        return obj.quant
    if obj.kind == "probability":
        return IDENTITY_F64
    return QuantizationParams("u8")


def write_tile(obj, path) -> None:
    """Write an EmbeddingTile or ClassMap in the container format."""
    if isinstance(obj, EmbeddingTile):
        kind = "embedding"
        payload_arr = obj.data
        dims = obj.dims
        mask = obj.mask
    elif isinstance(obj, ClassMap):
        kind = obj.kind
        payload_arr = obj.values[:, :, np.newaxis]
        dims = 1
        mask = obj.valid_mask()
    else:
        raise TypeError(f"write_tile expects an EmbeddingTile or ClassMap, got {type(obj)!r}")
    q = _payload_quant(obj)
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        _KIND_CODE[kind],
        _DTYPE_CODE[q.dtype],
        payload_arr.shape[1],
        payload_arr.shape[0],
        dims,
        obj.geo.origin_lon,
        obj.geo.origin_lat,
        obj.geo.pixel_size,
        q.scale,
        q.offset,
    ) + b"\x00" * (HEADER_SIZE - _HEADER.size)
    payload = np.ascontiguousarray(payload_arr, dtype=_DTYPE_NP[q.dtype]).tobytes()
    mask_bits = np.packbits(mask.ravel()).tobytes()
    body = header + payload + mask_bits
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def read_tile(path):
    """Read a container file back into an EmbeddingTile or ClassMap.

    Raises BadMagicError, VersionMismatchError, TruncatedFileError, or
    ChecksumError for the corresponding defects.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) >= 4 and blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a tile file (bad magic)")
    if len(blob) < HEADER_SIZE:
        raise TruncatedFileError(f"{path}: shorter than the {HEADER_SIZE}-byte header")
    (
        _magic,
        version,
        kind_code,
        dtype_code,
        width,
        height,
        dims,
        origin_lon,
        origin_lat,
        pixel_size,
        scale,
        offset,
    ) = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {VERSION}")
    if kind_code not in _CODE_KIND:
        raise FileFormatError(f"{path}: unknown kind code {kind_code}")
    if dtype_code not in _CODE_DTYPE:
        raise FileFormatError(f"{path}: unknown dtype code {dtype_code}")
    kind = _CODE_KIND[kind_code]
    dtype = _CODE_DTYPE[dtype_code]
    n_pixels = width * height
    payload_bytes = n_pixels * dims * _DTYPE_SIZE[dtype]
    mask_bytes = (n_pixels + 7) // 8
    expected = HEADER_SIZE + payload_bytes + mask_bytes + 4
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{path}: {len(blob)} bytes, expected {expected} for a {width}x{height}x{dims} {dtype} tile"
        )
    if len(blob) > expected:
        raise FileFormatError(f"{path}: {len(blob) - expected} trailing bytes")
    body = blob[:-4]
    if struct.unpack("<I", blob[-4:])[0] != zlib.crc32(body):
        raise ChecksumError(f"{path}: CRC32 mismatch")
    payload = np.frombuffer(body, dtype=_DTYPE_NP[dtype], count=n_pixels * dims, offset=HEADER_SIZE)
    payload = payload.reshape(height, width, dims).copy()
    bits = np.frombuffer(body, dtype=np.uint8, count=mask_bytes, offset=HEADER_SIZE + payload_bytes)
    mask = np.unpackbits(bits, count=n_pixels).astype(bool).reshape(height, width)
    geo = GeoTransform(origin_lon, origin_lat, pixel_size)
    if kind == "embedding":
        quant = QuantizationParams(dtype, scale=scale, offset=offset)
        return EmbeddingTile(geo=geo, quant=quant, data=payload, mask=mask)
    values = payload[:, :, 0]
    if kind == "probability":
        values = values.astype(np.float64)
        values[~mask] = np.nan
    else:
        values = values.astype(np.uint8)
        values[~mask] = NODATA
    return ClassMap(geo=geo, values=values, kind=kind)


def sample_at_points(tiles, pts) -> tuple[TrainingSet, int]:
    """Pair labeled points with the embedding vector of the pixel containing them.

    Nearest-pixel means the pixel whose cell contains the point (floor of
    the geo transform). Points outside every tile or on masked pixels are
    dropped; the count of drops is returned alongside the TrainingSet.
    """
    tiles = list(tiles)
    if not tiles:
        raise ValueError("no tiles given")
    dims = tiles[0].dims
    for t in tiles:
        if t.dims != dims:
            raise ValueError("all tiles must share one embedding dimensionality")
    feats = []
    labels = []
    dropped = 0
    for p in pts:
        vec = None
        for t in tiles:
            col, row = lonlat_to_pixel(t.geo, p.lon, p.lat)
            if 0 <= col < t.width and 0 <= row < t.height and t.mask[row, col]:
                vec = dequantize(t.data[row, col], t.quant)
                break
        if vec is None:
            dropped += 1
        else:
            feats.append(vec)
            labels.append(p.is_crop)
    if not feats:
        raise ValueError("no points sampled: all points fell outside the tiles or on masked pixels")
    return TrainingSet(np.asarray(feats), np.asarray(labels)), dropped


def sample_vectors(tile: EmbeddingTile, n: int, seed: int) -> np.ndarray:
    """Dequantized vectors of n distinct valid pixels chosen uniformly."""
    valid = np.flatnonzero(tile.mask.ravel())
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > len(valid):
        raise ValueError(f"requested {n} samples but only {len(valid)} valid pixels exist")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(valid, size=n, replace=False)
    rows, cols = np.unravel_index(chosen, tile.mask.shape)
    return tile.vectors_at(rows, cols)
