"""Edge-side encoders and server-side decoders.

Covers everything that turns tensors/images into payload bytes and back:
random sampling of patch features, 8-bit tiling of feature maps for a
still-image codec, image compression behind a pluggable codec interface,
and raw passthrough. Product-quantization payloads live in ``pq``.
"""

from __future__ import annotations

import math
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .binio import FormatError, Reader, Writer
from .model import FeatureTensor, PatchFeature, PatchGrid

PAYLOAD_MAGIC = b"VPLD"
PAYLOAD_VERSION = 1

KIND_RAW_IMAGE = "raw_image"
KIND_COMPRESSED_IMAGE = "compressed_image"
KIND_RAW_FEATURES = "raw_features"
KIND_SAMPLED_FEATURES = "sampled_features"
KIND_PQ_CODES = "pq_codes"
KIND_TILED_FEATURES = "tiled_features"

_KIND_CODES = {
    KIND_RAW_IMAGE: 0,
    KIND_COMPRESSED_IMAGE: 1,
    KIND_RAW_FEATURES: 2,
    KIND_SAMPLED_FEATURES: 3,
    KIND_PQ_CODES: 4,
    KIND_TILED_FEATURES: 5,
}
_CODES_KIND = {v: k for k, v in _KIND_CODES.items()}

# Grid coordinates travel as u16; anything larger is out of scope.
_COORD_MAX = 0xFFFF


@dataclass(frozen=True)
class Payload:
    """Encoded bytes plus codec metadata; the unit of the communication cost.

    ``size_bytes`` counts meta + body — the content an edge device must
    push through the uplink. ``serialize`` adds the 14-byte framing
    (magic, version, kind, two length fields) used on disk and in
    multi-frame streams.
    """

    kind: str
    meta: bytes
    body: bytes

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown payload kind {self.kind!r}")

    @property
    def size_bytes(self) -> int:
        return len(self.meta) + len(self.body)

    def serialize(self) -> bytes:
        w = Writer()
        w.raw(PAYLOAD_MAGIC)
        w.u8(PAYLOAD_VERSION)
        w.u8(_KIND_CODES[self.kind])
        w.u32(len(self.meta))
        w.raw(self.meta)
        w.u32(len(self.body))
        w.raw(self.body)
        return w.getvalue()


def read_payload(data: bytes) -> Payload:
    """Parse one serialized payload frame; rejects trailing bytes."""
    r = Reader(data)
    p = _read_payload_frame(r)
    r.expect_end()
    return p


def read_payload_stream(data: bytes) -> list:
    """Parse back-to-back payload frames until the buffer is exhausted."""
    r = Reader(data)
    frames = []
    while r.remaining() > 0:
        frames.append(_read_payload_frame(r))
    return frames


def _read_payload_frame(r: Reader) -> Payload:
    r.expect_magic(PAYLOAD_MAGIC)
    r.expect_version(PAYLOAD_VERSION)
    code = r.u8()
    if code not in _CODES_KIND:
        raise FormatError(f"unknown payload kind code {code}")
    meta = r.take(r.u32())
    body = r.take(r.u32())
    return Payload(kind=_CODES_KIND[code], meta=bytes(meta), body=bytes(body))


def measure_payload(p: Payload) -> int:
    return p.size_bytes


# ---------------------------------------------------------------------------
# Pluggable still-image codec


class ImageCodec(ABC):
    """Lossy/lossless codec for 8-bit planes and 3-channel images.

    Implementations must be safe for concurrent independent calls.
    """

    codec_id: int
    name: str
    lossless: bool

    @abstractmethod
    def encode(self, array: np.ndarray, quality: int) -> bytes:
        """Compress a (H, W) or (H, W, 3) uint8 array."""

    @abstractmethod
    def decode(self, data: bytes, shape: tuple) -> np.ndarray:
        """Restore the uint8 array with the given shape."""


class RawCodec(ImageCodec):
    """Identity codec: the plane's own bytes, no compression at all."""

    codec_id = 2
    name = "raw"
    lossless = True

    def encode(self, array: np.ndarray, quality: int) -> bytes:
        return np.ascontiguousarray(array, dtype=np.uint8).tobytes()

    def decode(self, data: bytes, shape: tuple) -> np.ndarray:
        expected = int(np.prod(shape))
        if len(data) != expected:
            raise FormatError(
                f"raw plane is {len(data)} bytes, expected {expected} for shape {shape}"
            )
        return np.frombuffer(data, dtype=np.uint8).reshape(shape)


class DeflateCodec(ImageCodec):
    """Reference lossless codec (deflate). The quality knob is ignored."""

    codec_id = 0
    name = "deflate"
    lossless = True

    def encode(self, array: np.ndarray, quality: int) -> bytes:
        arr = np.ascontiguousarray(array, dtype=np.uint8)
        return zlib.compress(arr.tobytes(), 6)

    def decode(self, data: bytes, shape: tuple) -> np.ndarray:
        try:
            raw = zlib.decompress(data)
        except zlib.error as exc:
            raise FormatError(f"deflate stream corrupt: {exc}") from exc
        expected = int(np.prod(shape))
        if len(raw) != expected:
            raise FormatError(
                f"decoded {len(raw)} bytes, expected {expected} for shape {shape}"
            )
        return np.frombuffer(raw, dtype=np.uint8).reshape(shape)


class WebpCodec(ImageCodec):
    """WebP adapter backed by Pillow; available only when Pillow is installed."""

    codec_id = 1
    name = "webp"
    lossless = False

    def encode(self, array: np.ndarray, quality: int) -> bytes:
        from io import BytesIO

        from PIL import Image

        arr = np.ascontiguousarray(array, dtype=np.uint8)
        mode = "L" if arr.ndim == 2 else "RGB"
        img = Image.fromarray(arr, mode=mode)
        buf = BytesIO()
        img.save(buf, format="WEBP", quality=int(quality), method=4)
        return buf.getvalue()

    def decode(self, data: bytes, shape: tuple) -> np.ndarray:
        from io import BytesIO

        from PIL import Image

        try:
            img = Image.open(BytesIO(data))
            img.load()
        except Exception as exc:  # Pillow raises several unrelated types
            raise FormatError(f"webp stream corrupt: {exc}") from exc
        arr = np.asarray(img.convert("L" if len(shape) == 2 else "RGB"), dtype=np.uint8)
        if arr.shape != tuple(shape):
            raise FormatError(f"decoded shape {arr.shape}, expected {tuple(shape)}")
        return arr


def _webp_available() -> bool:
    try:
        from PIL import features

        return bool(features.check("webp"))
    except Exception:
        return False


def available_codecs() -> dict:
    """Name → codec instance for every codec usable in this environment."""
    codecs = {DeflateCodec.name: DeflateCodec(), RawCodec.name: RawCodec()}
    if _webp_available():
        codecs[WebpCodec.name] = WebpCodec()
    return codecs


def get_codec(name_or_id) -> ImageCodec:
    codecs = available_codecs()
    if isinstance(name_or_id, str):
        if name_or_id in codecs:
            return codecs[name_or_id]
        raise ValueError(f"codec {name_or_id!r} not available (have {sorted(codecs)})")
    for codec in codecs.values():
        if codec.codec_id == name_or_id:
            return codec
    raise ValueError(f"no codec with id {name_or_id}")


# ---------------------------------------------------------------------------
# Random sampling of patch features


@dataclass(frozen=True)
class SampledPatchSet:
    """Random subset of a patch grid, keeping grid coordinates."""

    patches: tuple
    source_rows: int
    source_cols: int
    d: int

    def __post_init__(self):
        patches = tuple(self.patches)
        if not patches:
            raise ValueError("sampled set must not be empty")
        if self.source_rows <= 0 or self.source_cols <= 0 or self.d <= 0:
            raise ValueError("source dims and d must be positive")
        seen = set()
        for p in patches:
            if p.vector.size != self.d:
                raise ValueError("inconsistent patch dimensionality")
            if p.grid_row >= self.source_rows or p.grid_col >= self.source_cols:
                raise ValueError("patch coordinate outside source grid")
            key = (p.grid_row, p.grid_col)
            if key in seen:
                raise ValueError(f"duplicate coordinate {key}")
            seen.add(key)
        object.__setattr__(self, "patches", patches)

    def to_matrix(self) -> np.ndarray:
        return np.stack([p.vector for p in self.patches])

    def coords(self) -> np.ndarray:
        return np.array(
            [(p.grid_row, p.grid_col) for p in self.patches], dtype=np.int64
        )


def rs_encode(grid: PatchGrid, alpha: float, seed: int) -> SampledPatchSet:
    """Keep ⌈alpha·N⌉ grid locations, drawn uniformly without replacement.

    Selection is deterministic per seed; surviving patches stay in
    row-major grid order (alpha=1 keeps the whole grid untouched).
    """
    if not grid.is_full:
        raise ValueError("random sampling requires a full grid")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    n = grid.rows * grid.cols
    k = math.ceil(alpha * n)
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(n, size=k, replace=False))
    patches = tuple(grid.patches[i] for i in keep)
    return SampledPatchSet(
        patches=patches, source_rows=grid.rows, source_cols=grid.cols, d=grid.d
    )


def rs_payload(sampled: SampledPatchSet) -> Payload:
    """Serialize a sampled set: coordinates as u16 pairs, vectors as f32."""
    if sampled.source_rows > _COORD_MAX or sampled.source_cols > _COORD_MAX:
        raise ValueError("grid too large for 16-bit coordinates")
    meta = Writer()
    meta.u16(sampled.source_rows)
    meta.u16(sampled.source_cols)
    meta.u16(sampled.d)
    meta.u32(len(sampled.patches))
    body = Writer()
    for p in sampled.patches:
        body.u16(p.grid_row)
        body.u16(p.grid_col)
        body.raw(p.vector.astype("<f4").tobytes())
    return Payload(
        kind=KIND_SAMPLED_FEATURES, meta=meta.getvalue(), body=body.getvalue()
    )


def parse_rs_payload(p: Payload) -> SampledPatchSet:
    if p.kind != KIND_SAMPLED_FEATURES:
        raise FormatError(f"expected sampled_features payload, got {p.kind}")
    mr = Reader(p.meta)
    rows, cols, d, n = mr.u16(), mr.u16(), mr.u16(), mr.u32()
    mr.expect_end()
    br = Reader(p.body)
    patches = []
    for _ in range(n):
        r, c = br.u16(), br.u16()
        vec = np.frombuffer(br.take(4 * d), dtype="<f4")
        patches.append(PatchFeature(vector=vec, grid_row=r, grid_col=c))
    br.expect_end()
    return SampledPatchSet(
        patches=tuple(patches), source_rows=rows, source_cols=cols, d=d
    )


# ---------------------------------------------------------------------------
# Raw feature / raw image passthrough


def raw_features_payload(layers) -> Payload:
    """Serialize a stack of feature tensors verbatim (f32 little-endian)."""
    layers = tuple(layers)
    if not layers:
        raise ValueError("no layers to serialize")
    meta = Writer()
    meta.u8(len(layers))
    body = Writer()
    for t in layers:
        meta.u8(t.layer_index)
        meta.u16(t.channels)
        meta.u16(t.height)
        meta.u16(t.width)
        body.raw(t.values.astype("<f4").tobytes())
    return Payload(kind=KIND_RAW_FEATURES, meta=meta.getvalue(), body=body.getvalue())


def parse_raw_features_payload(p: Payload) -> tuple:
    if p.kind != KIND_RAW_FEATURES:
        raise FormatError(f"expected raw_features payload, got {p.kind}")
    mr = Reader(p.meta)
    count = mr.u8()
    shapes = [(mr.u8(), mr.u16(), mr.u16(), mr.u16()) for _ in range(count)]
    mr.expect_end()
    br = Reader(p.body)
    layers = []
    for layer_index, c, h, w in shapes:
        vals = np.frombuffer(br.take(4 * c * h * w), dtype="<f4")
        layers.append(FeatureTensor(c, h, w, vals, layer_index))
    br.expect_end()
    return tuple(layers)


def raw_image_payload(pixels: np.ndarray) -> Payload:
    """Uncompressed 8-bit image (or single plane) with dims in the meta."""
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    if arr.ndim == 2:
        h, w, ch = arr.shape[0], arr.shape[1], 1
    elif arr.ndim == 3 and arr.shape[2] == 3:
        h, w, ch = arr.shape
    else:
        raise ValueError(f"expected (H, W) or (H, W, 3) uint8 array, got {arr.shape}")
    meta = Writer()
    meta.u16(h)
    meta.u16(w)
    meta.u8(ch)
    return Payload(kind=KIND_RAW_IMAGE, meta=meta.getvalue(), body=arr.tobytes())


def parse_raw_image_payload(p: Payload) -> np.ndarray:
    if p.kind != KIND_RAW_IMAGE:
        raise FormatError(f"expected raw_image payload, got {p.kind}")
    mr = Reader(p.meta)
    h, w, ch = mr.u16(), mr.u16(), mr.u8()
    mr.expect_end()
    expected = h * w * ch
    if len(p.body) != expected:
        raise FormatError(f"raw image body is {len(p.body)} bytes, expected {expected}")
    shape = (h, w) if ch == 1 else (h, w, ch)
    return np.frombuffer(p.body, dtype=np.uint8).reshape(shape)


# ---------------------------------------------------------------------------
# Compressed images


def image_encode(array: np.ndarray, quality: int, codec: ImageCodec) -> Payload:
    """Compress an 8-bit image/plane; dims, codec id and quality ride in meta."""
    if not 0 <= int(quality) <= 100:
        raise ValueError(f"quality must be in [0, 100], got {quality}")
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    if arr.ndim == 2:
        h, w, ch = arr.shape[0], arr.shape[1], 1
    elif arr.ndim == 3 and arr.shape[2] == 3:
        h, w, ch = arr.shape
    else:
        raise ValueError(f"expected (H, W) or (H, W, 3) uint8 array, got {arr.shape}")
    try:
        data = codec.encode(arr, int(quality))
    except Exception as exc:
        raise RuntimeError(f"{codec.name} encode failed: {exc}") from exc
    meta = Writer()
    meta.u16(h)
    meta.u16(w)
    meta.u8(ch)
    meta.u8(codec.codec_id)
    meta.u8(int(quality))
    return Payload(kind=KIND_COMPRESSED_IMAGE, meta=meta.getvalue(), body=data)


def image_decode(p: Payload) -> np.ndarray:
    if p.kind != KIND_COMPRESSED_IMAGE:
        raise FormatError(f"expected compressed_image payload, got {p.kind}")
    mr = Reader(p.meta)
    h, w, ch = mr.u16(), mr.u16(), mr.u8()
    codec_id = mr.u8()
    mr.u8()  # quality; informational on the decode side
    mr.expect_end()
    codec = get_codec(codec_id)
    shape = (h, w) if ch == 1 else (h, w, ch)
    return codec.decode(p.body, shape)


# ---------------------------------------------------------------------------
# 8-bit tiling of feature tensors


@dataclass(frozen=True)
class TilePlan:
    """Layout + quantization range for one tensor packed into a 2-D mosaic."""

    tiles_per_row: int
    tiles_per_col: int
    channel_count: int
    tile_h: int
    tile_w: int
    value_min: float
    value_max: float

    def __post_init__(self):
        if self.tiles_per_row <= 0 or self.tiles_per_col <= 0:
            raise ValueError("tile grid dims must be positive")
        if self.tiles_per_row * self.tiles_per_col < self.channel_count:
            raise ValueError("tile grid too small for channel count")
        if self.channel_count <= 0 or self.tile_h <= 0 or self.tile_w <= 0:
            raise ValueError("channel count and tile dims must be positive")
        if not (self.value_min <= self.value_max):
            raise ValueError("value_min must not exceed value_max")

    @property
    def plane_shape(self) -> tuple:
        return (self.tiles_per_col * self.tile_h, self.tiles_per_row * self.tile_w)


def tile_pack(tensor: FeatureTensor) -> tuple:
    """Quantize a tensor to 8 bits and lay channels into a near-square mosaic.

    Values map to q = round(255·(x−min)/(max−min)) with the per-tensor range
    recorded in the plan; channels fill the tile grid row-major and unused
    tiles stay zero.
    """
    arr = tensor.as_array()
    vmin = float(arr.min())
    vmax = float(arr.max())
    if vmax > vmin:
        q = np.rint(
            255.0 * (arr.astype(np.float64) - vmin) / (vmax - vmin)
        ).astype(np.uint8)
    else:
        q = np.zeros(arr.shape, dtype=np.uint8)
    c, h, w = arr.shape
    tpr = math.ceil(math.sqrt(c))
    tpc = math.ceil(c / tpr)
    plane = np.zeros((tpc * h, tpr * w), dtype=np.uint8)
    for k in range(c):
        tr, tc = divmod(k, tpr)
        plane[tr * h : (tr + 1) * h, tc * w : (tc + 1) * w] = q[k]
    plan = TilePlan(
        tiles_per_row=tpr,
        tiles_per_col=tpc,
        channel_count=c,
        tile_h=h,
        tile_w=w,
        value_min=vmin,
        value_max=vmax,
    )
    return plane, plan


def tile_unpack(plane: np.ndarray, plan: TilePlan, layer_index: int = 1) -> FeatureTensor:
    """Invert tile_pack: x̂ = min + q/255·(max−min), per-element error ≤ range/510."""
    plane = np.asarray(plane, dtype=np.uint8)
    if plane.shape != plan.plane_shape:
        raise ValueError(
            f"plane shape {plane.shape} does not match plan {plan.plane_shape}"
        )
    c, h, w = plan.channel_count, plan.tile_h, plan.tile_w
    q = np.empty((c, h, w), dtype=np.float64)
    for k in range(c):
        tr, tc = divmod(k, plan.tiles_per_row)
        q[k] = plane[tr * h : (tr + 1) * h, tc * w : (tc + 1) * w]
    span = plan.value_max - plan.value_min
    values = plan.value_min + q / 255.0 * span if span > 0 else np.full_like(q, plan.value_min)
    return FeatureTensor.from_array(values.astype(np.float32), layer_index)


def serialize_tile_plan(plan: TilePlan) -> bytes:
    """Fixed 18-byte plan header: five u16 fields then two f32 range bounds."""
    w = Writer()
    w.u16(plan.tiles_per_row)
    w.u16(plan.tiles_per_col)
    w.u16(plan.channel_count)
    w.u16(plan.tile_h)
    w.u16(plan.tile_w)
    w.f32(plan.value_min)
    w.f32(plan.value_max)
    return w.getvalue()


def parse_tile_plan(data: bytes) -> TilePlan:
    r = Reader(data)
    plan = TilePlan(
        tiles_per_row=r.u16(),
        tiles_per_col=r.u16(),
        channel_count=r.u16(),
        tile_h=r.u16(),
        tile_w=r.u16(),
        value_min=r.f32(),
        value_max=r.f32(),
    )
    r.expect_end()
    return plan


def tiled_payload(
    plane: np.ndarray, plan: TilePlan, quality: int, codec: ImageCodec
) -> Payload:
    """Image-codec-compressed mosaic of one tensor; meta is the 18-byte plan."""
    plane = np.ascontiguousarray(plane, dtype=np.uint8)
    if plane.shape != plan.plane_shape:
        raise ValueError(
            f"plane shape {plane.shape} does not match plan {plan.plane_shape}"
        )
    try:
        data = codec.encode(plane, int(quality))
    except Exception as exc:
        raise RuntimeError(f"{codec.name} encode failed: {exc}") from exc
    return Payload(
        kind=KIND_TILED_FEATURES, meta=serialize_tile_plan(plan), body=data
    )


def parse_tiled_payload(p: Payload, codec: ImageCodec) -> tuple:
    """Decode a tiled_features payload back to (plane, plan).

    The codec is not named in the meta — edge and server agree on it as
    part of the scenario configuration.
    """
    if p.kind != KIND_TILED_FEATURES:
        raise FormatError(f"expected tiled_features payload, got {p.kind}")
    plan = parse_tile_plan(p.meta)
    plane = codec.decode(p.body, plan.plane_shape)
    return plane, plan
