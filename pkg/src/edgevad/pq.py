"""Product quantization: codebook training, encoding, decoding, payloads.

A d-dim vector is split into m contiguous sub-vectors; each sub-vector is
replaced by the index of its nearest centroid from a per-subspace codebook
of K entries (K a power of two, so codes bit-pack exactly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .binio import FormatError, Reader, TruncatedError, Writer
from .codecs import KIND_PQ_CODES, Payload

CODEBOOK_MAGIC = b"VPQC"
CODEBOOK_VERSION = 1


def _is_power_of_two(k: int) -> bool:
    return k >= 1 and (k & (k - 1)) == 0


def code_bits(k: int) -> int:
    """Bits per code for K centroids (log2 K; K=1 needs none)."""
    if not _is_power_of_two(k):
        raise ValueError(f"K must be a power of two, got {k}")
    return k.bit_length() - 1


@dataclass(frozen=True)
class Codebook:
    """Per-subspace centroids defining the quantization map."""

    m: int
    K: int
    sub_dim: int
    centroids: np.ndarray  # (m, K, sub_dim) float32
    trained_on: int
    seed: int

    def __post_init__(self):
        if self.m <= 0 or self.sub_dim <= 0:
            raise ValueError("m and sub_dim must be positive")
        if not _is_power_of_two(self.K):
            raise ValueError(f"K must be a power of two, got {self.K}")
        cents = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if cents.shape != (self.m, self.K, self.sub_dim):
            raise ValueError(
                f"centroids shape {cents.shape} != ({self.m}, {self.K}, {self.sub_dim})"
            )
        if not np.all(np.isfinite(cents)):
            raise ValueError("centroids must be finite")
        cents.setflags(write=False)
        object.__setattr__(self, "centroids", cents)

    @property
    def d(self) -> int:
        return self.m * self.sub_dim


@dataclass(frozen=True)
class PqCodes:
    """Centroid indices for n vectors, one u-int per subspace, each < K."""

    codes: np.ndarray  # (n, m)
    K: int

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.uint32)
        if codes.ndim != 2:
            raise ValueError(f"codes must be 2-D (n, m), got shape {codes.shape}")
        if not _is_power_of_two(self.K):
            raise ValueError(f"K must be a power of two, got {self.K}")
        if codes.size and codes.max() >= self.K:
            raise ValueError(f"code {codes.max()} out of range for K={self.K}")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def m(self) -> int:
        return self.codes.shape[1]


# ---------------------------------------------------------------------------
# Training


def _kmeans_plusplus_init(data: np.ndarray, k: int, rng) -> np.ndarray:
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]), dtype=np.float64)
    centers[0] = data[rng.integers(n)]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[i] = data[idx]
        d2 = np.minimum(d2, np.sum((data - centers[i]) ** 2, axis=1))
    return centers


def _lloyd(data: np.ndarray, centers: np.ndarray, max_iters: int) -> np.ndarray:
    assign = None
    mean = data.mean(axis=0)
    far_from_mean = data[np.argmax(np.sum((data - mean) ** 2, axis=1))]
    for _ in range(max_iters):
        new_assign = np.argmin(cdist(data, centers, "sqeuclidean"), axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(centers.shape[0]):
            members = data[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:
                centers[c] = far_from_mean
    return centers


def pq_train(vectors, m: int, K: int, max_iters: int = 50, seed: int = 0) -> Codebook:
    """Train one k-means codebook per subspace on the vectors' sub-slices.

    Each subspace j gets its own generator seeded with (seed, j), so
    training is deterministic and subspaces stay independent. Iterations
    stop at assignment fixpoint or max_iters.
    """
    data = np.asarray(vectors, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"expected (n, d) vectors, got shape {data.shape}")
    n, d = data.shape
    if d % m != 0:
        raise ValueError(f"m={m} does not divide d={d}")
    if not _is_power_of_two(K):
        raise ValueError(f"K must be a power of two, got {K}")
    if n < K:
        raise ValueError(f"need at least K={K} training vectors, got {n}")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    sub_dim = d // m
    centroids = np.empty((m, K, sub_dim), dtype=np.float64)
    for j in range(m):
        rng = np.random.default_rng((seed, j))
        sub = data[:, j * sub_dim : (j + 1) * sub_dim]
        centers = _kmeans_plusplus_init(sub, K, rng)
        centroids[j] = _lloyd(sub, centers, max_iters)
    return Codebook(
        m=m,
        K=K,
        sub_dim=sub_dim,
        centroids=centroids.astype(np.float32),
        trained_on=n,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Encode / decode


def pq_encode(vectors, cb: Codebook) -> PqCodes:
    """Nearest centroid per subspace (squared Euclidean; ties → lowest index)."""
    data = np.asarray(vectors, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != cb.d:
        raise ValueError(f"expected (n, {cb.d}) vectors, got shape {data.shape}")
    n = data.shape[0]
    codes = np.empty((n, cb.m), dtype=np.uint32)
    cents = cb.centroids.astype(np.float64)
    for j in range(cb.m):
        sub = data[:, j * cb.sub_dim : (j + 1) * cb.sub_dim]
        codes[:, j] = np.argmin(cdist(sub, cents[j], "sqeuclidean"), axis=1)
    return PqCodes(codes=codes, K=cb.K)


def pq_decode(codes: PqCodes, cb: Codebook) -> np.ndarray:
    """Concatenate the selected centroids back into (n, d) float32 vectors."""
    if codes.m != cb.m:
        raise ValueError(f"codes have m={codes.m}, codebook m={cb.m}")
    if codes.K != cb.K:
        raise ValueError(f"codes assume K={codes.K}, codebook K={cb.K}")
    if codes.codes.size and codes.codes.max() >= cb.K:
        raise ValueError("code out of range for codebook")
    out = np.empty((codes.n, cb.d), dtype=np.float32)
    for j in range(cb.m):
        out[:, j * cb.sub_dim : (j + 1) * cb.sub_dim] = cb.centroids[j][
            codes.codes[:, j]
        ]
    return out


# ---------------------------------------------------------------------------
# Bit packing


def packed_size(n: int, m: int, K: int) -> int:
    return math.ceil(n * m * code_bits(K) / 8)


def pack_codes(codes: PqCodes) -> bytes:
    """MSB-first bit packing: n·m·log2(K) bits, zero-padded to a byte."""
    bits = code_bits(codes.K)
    if bits == 0:
        return b""
    flat = codes.codes.reshape(-1).astype(np.uint32)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint32)
    bitmat = ((flat[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bitmat.reshape(-1)).tobytes()


def unpack_codes(data: bytes, n: int, m: int, K: int) -> PqCodes:
    bits = code_bits(K)
    expected = packed_size(n, m, K)
    if len(data) != expected:
        raise TruncatedError(
            f"packed codes are {len(data)} bytes, expected {expected}"
        )
    if bits == 0:
        return PqCodes(codes=np.zeros((n, m), dtype=np.uint32), K=K)
    raw = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[: n * m * bits]
    bitmat = raw.reshape(n * m, bits).astype(np.uint32)
    weights = 1 << np.arange(bits - 1, -1, -1, dtype=np.uint32)
    flat = (bitmat * weights).sum(axis=1, dtype=np.uint32)
    return PqCodes(codes=flat.reshape(n, m), K=K)


# ---------------------------------------------------------------------------
# Payloads


@dataclass(frozen=True)
class PqTransmission:
    """Server-side view of a parsed pq_codes payload."""

    codes: PqCodes
    source_rows: int
    source_cols: int
    coords: object  # (n, 2) int array when a sampled subset was sent, else None
    codebook: object  # Codebook when it rode along, else None


def pq_payload(
    codes: PqCodes,
    include_codebook: bool = False,
    *,
    source_rows: int,
    source_cols: int,
    codebook: Codebook = None,
    coords=None,
) -> Payload:
    """Bit-packed codes, optionally preceded by u16 coordinate pairs.

    Without coordinates the codes cover the full source grid in row-major
    order. The codebook is pre-shared and excluded by default; setting
    include_codebook appends its full serialization to the body.
    """
    if include_codebook and codebook is None:
        raise ValueError("include_codebook requires the codebook")
    flags = 0
    body = Writer()
    if coords is not None:
        coords = np.asarray(coords, dtype=np.int64)
        if coords.shape != (codes.n, 2):
            raise ValueError(f"coords shape {coords.shape} != ({codes.n}, 2)")
        flags |= 1
        for r, c in coords:
            body.u16(int(r))
            body.u16(int(c))
    elif codes.n != source_rows * source_cols:
        raise ValueError(
            f"{codes.n} codes cannot cover a full {source_rows}x{source_cols} grid"
        )
    body.raw(pack_codes(codes))
    if include_codebook:
        flags |= 2
        body.raw(serialize_codebook(codebook))
    meta = Writer()
    meta.u16(codes.m)
    meta.u32(codes.K)
    meta.u32(codes.n)
    meta.u16(source_rows)
    meta.u16(source_cols)
    meta.u8(flags)
    return Payload(kind=KIND_PQ_CODES, meta=meta.getvalue(), body=body.getvalue())


def parse_pq_payload(p: Payload) -> PqTransmission:
    if p.kind != KIND_PQ_CODES:
        raise FormatError(f"expected pq_codes payload, got {p.kind}")
    mr = Reader(p.meta)
    m, K, n = mr.u16(), mr.u32(), mr.u32()
    source_rows, source_cols = mr.u16(), mr.u16()
    flags = mr.u8()
    mr.expect_end()
    br = Reader(p.body)
    coords = None
    if flags & 1:
        pairs = [(br.u16(), br.u16()) for _ in range(n)]
        coords = np.array(pairs, dtype=np.int64).reshape(n, 2)
    codes = unpack_codes(bytes(br.take(packed_size(n, m, K))), n, m, K)
    codebook = None
    if flags & 2:
        codebook = read_codebook(bytes(br.take(br.remaining())))
    br.expect_end()
    return PqTransmission(
        codes=codes,
        source_rows=source_rows,
        source_cols=source_cols,
        coords=coords,
        codebook=codebook,
    )


# ---------------------------------------------------------------------------
# Codebook wire format


def serialize_codebook(cb: Codebook) -> bytes:
    w = Writer()
    w.raw(CODEBOOK_MAGIC)
    w.u8(CODEBOOK_VERSION)
    w.u16(cb.m)
    w.u32(cb.K)
    w.u16(cb.sub_dim)
    w.u64(cb.seed)
    w.raw(cb.centroids.astype("<f4").tobytes())
    return w.getvalue()


def read_codebook(data: bytes) -> Codebook:
    r = Reader(data)
    r.expect_magic(CODEBOOK_MAGIC)
    r.expect_version(CODEBOOK_VERSION)
    m, K, sub_dim, seed = r.u16(), r.u32(), r.u16(), r.u64()
    cents = np.frombuffer(r.take(4 * m * K * sub_dim), dtype="<f4")
    r.expect_end()
    return Codebook(
        m=m,
        K=K,
        sub_dim=sub_dim,
        centroids=cents.reshape(m, K, sub_dim),
        trained_on=0,
        seed=seed,
    )
