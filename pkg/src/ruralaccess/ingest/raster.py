"""Raster readers: ESRI ASCII Grid and a narrow GeoTIFF subset.

GeoTIFF support covers classic (non-Big) TIFF in either byte order with
one band, no compression or Deflate, strips or tiles, the sample types
u8/u16/i16/u32/i32/f32/f64 and ModelPixelScale + ModelTiepoint
georeferencing.  Everything else is refused with an error naming the tag.
"""

from __future__ import annotations

import math
import struct
import zlib
from pathlib import Path

import numpy as np

from ..geo_core import GeoPoint, GeometryError, RasterGrid
from .errors import IngestError

TAG_NAMES = {
    256: "ImageWidth",
    257: "ImageLength",
    258: "BitsPerSample",
    259: "Compression",
    262: "PhotometricInterpretation",
    273: "StripOffsets",
    277: "SamplesPerPixel",
    278: "RowsPerStrip",
    279: "StripByteCounts",
    284: "PlanarConfiguration",
    317: "Predictor",
    322: "TileWidth",
    323: "TileLength",
    324: "TileOffsets",
    325: "TileByteCounts",
    339: "SampleFormat",
    33550: "ModelPixelScale",
    33922: "ModelTiepoint",
    34264: "ModelTransformation",
    34735: "GeoKeyDirectory",
    42113: "GDAL_NODATA",
}

# TIFF field type -> (struct code, byte size)
_FIELD_TYPES = {
    1: ("B", 1),
    2: ("c", 1),
    3: ("H", 2),
    4: ("I", 4),
    5: ("II", 8),
    6: ("b", 1),
    7: ("B", 1),
    8: ("h", 2),
    9: ("i", 4),
    10: ("ii", 8),
    11: ("f", 4),
    12: ("d", 8),
}

_COMPRESSION = {1: "none", 8: "deflate", 32946: "deflate"}
_COMPRESSION_NAMES = {5: "LZW", 6: "old-JPEG", 7: "JPEG", 32773: "PackBits", 34887: "LERC", 50000: "ZSTD", 50001: "WEBP"}

# (SampleFormat, BitsPerSample) -> numpy dtype
_SAMPLE_DTYPES = {
    (1, 8): "u1",
    (1, 16): "u2",
    (2, 16): "i2",
    (1, 32): "u4",
    (2, 32): "i4",
    (3, 32): "f4",
    (3, 64): "f8",
}

_PIXEL_IS_POINT = 2


def load_raster(path) -> RasterGrid:
    """Read an ASCII grid (``.asc``/``.txt``) or GeoTIFF (``.tif``/``.tiff``)."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"raster file not found: {path}", path=str(path))
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic[:2] in (b"II", b"MM"):
        return read_geotiff(path)
    return read_ascii_grid(path)


# ---------------------------------------------------------------------------
# ESRI ASCII Grid
# ---------------------------------------------------------------------------

_ASCII_KEYS = ("ncols", "nrows", "xllcorner", "xllcenter", "yllcorner", "yllcenter", "cellsize", "nodata_value")


def read_ascii_grid(path) -> RasterGrid:
    path = Path(path)
    text = path.read_text(encoding="ascii", errors="strict")
    lines = text.splitlines()
    header: dict[str, str] = {}
    n_header = 0
    for line in lines:
        parts = line.split()
        if len(parts) == 2 and parts[0].lower() in _ASCII_KEYS:
            header[parts[0].lower()] = parts[1]
            n_header += 1
        elif not parts and not header:
            n_header += 1
        else:
            break
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise IngestError(f"ASCII grid header missing '{key}'", path=str(path))
    if not ({"xllcorner", "xllcenter"} & header.keys() and {"yllcorner", "yllcenter"} & header.keys()):
        raise IngestError("ASCII grid header missing xllcorner/yllcorner georeferencing", path=str(path))
    try:
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
        cs = float(header["cellsize"])
        nodata = float(header["nodata_value"]) if "nodata_value" in header else None
        if "xllcorner" in header:
            west = float(header["xllcorner"])
        else:
            west = float(header["xllcenter"]) - cs / 2
        if "yllcorner" in header:
            south = float(header["yllcorner"])
        else:
            south = float(header["yllcenter"]) - cs / 2
    except ValueError as exc:
        raise IngestError(f"malformed ASCII grid header: {exc}", path=str(path)) from None
    if ncols <= 0 or nrows <= 0:
        raise IngestError(f"ASCII grid has non-positive size {nrows}x{ncols}", path=str(path))

    body = " ".join(lines[n_header:])
    try:
        values = np.array(body.split(), dtype=np.float64)
    except ValueError as exc:
        raise IngestError(f"non-numeric ASCII grid value: {exc}", path=str(path)) from None
    if values.size != nrows * ncols:
        raise IngestError(
            f"ASCII grid expects {nrows * ncols} values, found {values.size}", path=str(path)
        )
    try:
        origin = GeoPoint(west, south + nrows * cs)
        return RasterGrid(origin, cs, values.reshape(nrows, ncols), nodata)
    except GeometryError as exc:
        raise IngestError(str(exc), path=str(path)) from None


def _ascii_south(origin_lat: float, nrows: int, cs: float) -> float:
    # pick a yllcorner that re-reads to exactly the same origin latitude
    y = origin_lat - nrows * cs
    if y + nrows * cs == origin_lat:
        return y
    lo = hi = y
    for _ in range(256):
        lo = math.nextafter(lo, -math.inf)
        hi = math.nextafter(hi, math.inf)
        for cand in (lo, hi):
            if cand + nrows * cs == origin_lat:
                return cand
    return y


def _fmt_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def write_ascii_grid(grid: RasterGrid, path) -> None:
    """Write ``grid`` so that :func:`read_ascii_grid` restores it exactly."""
    south = _ascii_south(grid.origin.lat, grid.n_rows, grid.cell_size)
    out = [
        f"ncols {grid.n_cols}",
        f"nrows {grid.n_rows}",
        f"xllcorner {grid.origin.lon!r}",
        f"yllcorner {south!r}",
        f"cellsize {grid.cell_size!r}",
    ]
    if grid.nodata is not None:
        out.append(f"NODATA_value {_fmt_value(grid.nodata)}")
    vals = grid.values
    if vals.dtype.kind in "iu":
        rows = (" ".join(map(str, row)) for row in vals.tolist())
    else:
        rows = (" ".join(_fmt_value(v) for v in row) for row in vals.tolist())
    Path(path).write_text("\n".join([*out, *rows]) + "\n", encoding="ascii")


# ---------------------------------------------------------------------------
# GeoTIFF
# ---------------------------------------------------------------------------


def _read_ifd(buf: bytes, bo: str, offset: int) -> dict[int, tuple]:
    if offset + 2 > len(buf):
        raise IngestError("truncated TIFF: IFD offset beyond end of file")
    (n,) = struct.unpack_from(bo + "H", buf, offset)
    tags: dict[int, tuple] = {}
    for k in range(n):
        pos = offset + 2 + 12 * k
        if pos + 12 > len(buf):
            raise IngestError("truncated TIFF: IFD entry beyond end of file")
        tag, ftype, count = struct.unpack_from(bo + "HHI", buf, pos)
        if ftype not in _FIELD_TYPES:
            continue
        code, size = _FIELD_TYPES[ftype]
        nbytes = size * count
        data_pos = pos + 8 if nbytes <= 4 else struct.unpack_from(bo + "I", buf, pos + 8)[0]
        if data_pos + nbytes > len(buf):
            raise IngestError(f"truncated TIFF: tag {TAG_NAMES.get(tag, tag)} data beyond end of file")
        raw = buf[data_pos:data_pos + nbytes]
        if ftype == 2:
            tags[tag] = (raw.split(b"\0", 1)[0].decode("latin-1"),)
        elif ftype in (5, 10):
            nums = struct.unpack(bo + code[0] * (2 * count), raw)
            tags[tag] = tuple(nums[i] / nums[i + 1] if nums[i + 1] else math.nan for i in range(0, len(nums), 2))
        else:
            tags[tag] = struct.unpack(bo + code * count, raw)
    return tags


def _single(tags, code, default=None):
    if code not in tags:
        return default
    vals = tags[code]
    if len(set(vals)) != 1:
        raise IngestError(f"unsupported {TAG_NAMES[code]}={list(vals)} (per-sample values differ)")
    return vals[0]


def _reject(tag: int, value, why: str):
    raise IngestError(f"unsupported {TAG_NAMES[tag]}={value}: {why}")


def read_geotiff(path) -> RasterGrid:
    """Read the first image of a single-band GeoTIFF.

    Raises
    ------
    IngestError
        For any tag outside the supported subset; the message names it.
    """
    path = Path(path)
    buf = path.read_bytes()
    try:
        return _decode_geotiff(buf)
    except IngestError as exc:
        exc.path = str(path)
        raise


def _decode_geotiff(buf: bytes) -> RasterGrid:
    if len(buf) < 8:
        raise IngestError("truncated TIFF header")
    bo = {b"II": "<", b"MM": ">"}.get(buf[:2])
    if bo is None:
        raise IngestError("not a TIFF file (bad byte-order mark)")
    (version,) = struct.unpack_from(bo + "H", buf, 2)
    if version == 43:
        raise IngestError("unsupported TIFF version 43 (BigTIFF)")
    if version != 42:
        raise IngestError(f"not a TIFF file (version {version})")
    (ifd_offset,) = struct.unpack_from(bo + "I", buf, 4)
    tags = _read_ifd(buf, bo, ifd_offset)

    for req in (256, 257):
        if req not in tags:
            raise IngestError(f"missing required tag {TAG_NAMES[req]}")
    width, height = tags[256][0], tags[257][0]

    spp = _single(tags, 277, 1)
    if spp != 1:
        _reject(277, spp, "only single-band rasters are supported")
    bits = _single(tags, 258, 1)
    fmt = _single(tags, 339, 1)
    dtype = _SAMPLE_DTYPES.get((fmt, bits))
    if dtype is None:
        if fmt not in (1, 2, 3):
            _reject(339, fmt, "only unsigned/signed integer and IEEE float samples are supported")
        _reject(258, bits, f"sample type (SampleFormat={fmt}, {bits} bits) not supported")
    compression = _single(tags, 259, 1)
    if compression not in _COMPRESSION:
        name = _COMPRESSION_NAMES.get(compression, "unknown")
        _reject(259, f"{compression} ({name})", "only uncompressed and Deflate are supported")
    photometric = _single(tags, 262, 1)
    if photometric not in (0, 1):
        _reject(262, photometric, "only MinIsWhite/MinIsBlack greyscale is supported")
    predictor = _single(tags, 317, 1)
    if predictor != 1:
        _reject(317, predictor, "predictors are not supported")

    if 33550 not in tags or 33922 not in tags:
        missing = [TAG_NAMES[t] for t in (33550, 33922) if t not in tags]
        raise IngestError(f"missing georeferencing: no {' / '.join(missing)} tag")
    sx, sy = tags[33550][0], tags[33550][1]
    if not (sx > 0 and sy > 0) or sx != sy:
        _reject(33550, (sx, sy), "pixel scale must be positive and equal in x and y")
    tie = tags[33922]
    if len(tie) < 6:
        _reject(33922, tie, "tiepoint needs 6 values")
    i, j, _, x, y, _ = tie[:6]
    west = x - i * sx
    north = y + j * sy
    if 34735 in tags and _raster_type(tags[34735]) == _PIXEL_IS_POINT:
        west -= sx / 2
        north += sy / 2

    nodata = None
    if 42113 in tags:
        text = tags[42113][0].strip()
        try:
            nodata = float(text)
        except ValueError:
            raise IngestError(f"unparseable GDAL_NODATA value {text!r}") from None

    np_dtype = np.dtype(dtype).newbyteorder(bo)
    if 322 in tags:
        values = _read_tiled(buf, tags, width, height, np_dtype, _COMPRESSION[compression])
    elif 273 in tags:
        values = _read_stripped(buf, tags, width, height, np_dtype, _COMPRESSION[compression])
    else:
        raise IngestError("missing StripOffsets/TileOffsets: no image data")
    values = values.astype(np.dtype(dtype).newbyteorder("="), copy=False)
    if nodata is not None and values.dtype.kind in "iu" and nodata.is_integer():
        nodata = int(nodata)
    try:
        return RasterGrid(GeoPoint(west, north), float(sx), values, nodata)
    except GeometryError as exc:
        raise IngestError(str(exc)) from None


def _raster_type(keys) -> int | None:
    # header is (version, revision, minor, count), then 4-short entries
    n = keys[3] if len(keys) >= 4 else 0
    for k in range(n):
        key_id, loc, _count, value = keys[4 + 4 * k: 8 + 4 * k]
        if key_id == 1025 and loc == 0:
            return value
    return None


def _chunk(buf, offset, nbytes, compression, expected, what):
    raw = buf[offset:offset + nbytes]
    if len(raw) != nbytes:
        raise IngestError(f"truncated TIFF: {what} extends beyond end of file")
    if compression == "deflate":
        try:
            raw = zlib.decompress(raw)
        except zlib.error as exc:
            raise IngestError(f"corrupt Deflate stream in {what}: {exc}") from None
    if len(raw) < expected:
        raise IngestError(f"{what} holds {len(raw)} bytes, expected {expected}")
    return raw[:expected]


def _read_stripped(buf, tags, width, height, dtype, compression):
    offsets = tags[273]
    counts = tags.get(279)
    if counts is None:
        raise IngestError("missing StripByteCounts")
    rps = min(_single(tags, 278, height), height)
    n_strips = math.ceil(height / rps)
    if len(offsets) < n_strips or len(counts) < n_strips:
        raise IngestError(f"StripOffsets lists {len(offsets)} strips, image needs {n_strips}")
    out = np.empty((height, width), dtype=dtype)
    for s in range(n_strips):
        r0 = s * rps
        rows = min(rps, height - r0)
        expected = rows * width * dtype.itemsize
        raw = _chunk(buf, offsets[s], counts[s], compression, expected, f"strip {s}")
        out[r0:r0 + rows] = np.frombuffer(raw, dtype=dtype).reshape(rows, width)
    return out


def _read_tiled(buf, tags, width, height, dtype, compression):
    tw, th = _single(tags, 322), _single(tags, 323)
    offsets, counts = tags.get(324), tags.get(325)
    if offsets is None or counts is None:
        raise IngestError("missing TileOffsets/TileByteCounts")
    across, down = math.ceil(width / tw), math.ceil(height / th)
    if len(offsets) < across * down or len(counts) < across * down:
        raise IngestError(f"TileOffsets lists {len(offsets)} tiles, image needs {across * down}")
    out = np.empty((height, width), dtype=dtype)
    expected = tw * th * dtype.itemsize
    for t in range(across * down):
        tr, tc = divmod(t, across)
        raw = _chunk(buf, offsets[t], counts[t], compression, expected, f"tile {t}")
        tile = np.frombuffer(raw, dtype=dtype).reshape(th, tw)
        r0, c0 = tr * th, tc * tw
        rows, cols = min(th, height - r0), min(tw, width - c0)
        out[r0:r0 + rows, c0:c0 + cols] = tile[:rows, :cols]
    return out
