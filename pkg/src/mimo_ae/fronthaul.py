"""Radio-head to CPU link: wire frames and bandwidth accounting.

Wire format (normative, little-endian throughout):

    offset  size  field
    0       4     magic "MAEF"
    4       2     version (uint16, currently 1)
    6       1     kind (uint8): 1 latent grid, 2 decoder part, 3 encoder part
    7       8     block_id (uint64)
    15      16    dims: rows, cols, M, n_div (four uint32)
    31      4*R*C payload: rows*cols float32 values, row-major
    ...     4     CRC-32 (zlib) over everything above

Payload composition per kind:

    kind 1: the latent grid itself, rows = latent_dim, cols = n_re.
    kind 2: rows = 1, cols = total count; w_dec row-major, then b_dec,
            feat_min, feat_max.
    kind 3: rows = 1, cols = total count; w_enc row-major, then b_enc,
            feat_min, feat_max.

Layer sizes are recovered from M and n_div (input_dim = 2M,
latent_dim = 2M / n_div).  Files of concatenated frames use the
extension ``.maef``.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .autoencoder import AutoencoderModel, DecoderPart, EncoderPart, LatentGrid
from .errors import ConfigurationError, DimensionError, MalformedFrame

MAGIC = b"MAEF"
VERSION = 1
KIND_LATENT = 1
KIND_DECODER = 2
KIND_ENCODER = 3

_HEADER = struct.Struct("<4sHBQIIII")
_CRC = struct.Struct("<I")

PAPER_MODE = "paper"
ACTUAL_MODE = "actual"


@dataclass
class BandwidthLedger:
    """Real-valued sample counts crossing the fronthaul.

    ``paper`` mode counts the decoder overhead with the published
    latent-block arithmetic; ``actual`` mode counts every transferred
    parameter (weights, biases and scaling vectors).
    """

    mode: str
    full_samples: int = 0
    latent_samples: int = 0
    overhead_samples: int = 0

    def __post_init__(self):
        if self.mode not in (PAPER_MODE, ACTUAL_MODE):
            raise ConfigurationError(f"unknown ledger mode {self.mode!r}")
        if min(self.full_samples, self.latent_samples, self.overhead_samples) < 0:
            raise ConfigurationError("ledger counts must be non-negative")

    @property
    def transferred_samples(self) -> int:
        return self.latent_samples + self.overhead_samples

    @property
    def effective_factor(self) -> float:
        """Full sample count divided by what actually crosses the link."""
        return self.full_samples / self.transferred_samples

    def merge(self, other: "BandwidthLedger") -> "BandwidthLedger":
        if other.mode != self.mode:
            raise ConfigurationError("cannot merge ledgers of different modes")
        return BandwidthLedger(
            mode=self.mode,
            full_samples=self.full_samples + other.full_samples,
            latent_samples=self.latent_samples + other.latent_samples,
            overhead_samples=self.overhead_samples + other.overhead_samples,
        )


def paper_sample_count(m: int, n_cbw: int, n_slot: int, n_div: int) -> BandwidthLedger:
    """Per-block sample counts under the published arithmetic.

    latent = 2M * n_cbw * n_slot / n_div, overhead = n_cbw * 2M / n_div,
    so the effective factor reduces to n_slot * n_div / (n_slot + 1).
    """
    if n_div < 1 or (2 * m) % n_div != 0:
        raise ConfigurationError(f"n_div ({n_div}) must divide 2M ({2 * m})")
    full = 2 * m * n_cbw * n_slot
    return BandwidthLedger(
        mode=PAPER_MODE,
        full_samples=full,
        latent_samples=full // n_div,
        overhead_samples=n_cbw * 2 * m // n_div,
    )


def actual_sample_count(
    model: AutoencoderModel, n_cbw: int, n_slot: int
) -> BandwidthLedger:
    """Per-block counts with every decoder-side parameter included."""
    d, latent = model.input_dim, model.latent_dim
    return BandwidthLedger(
        mode=ACTUAL_MODE,
        full_samples=d * n_cbw * n_slot,
        latent_samples=latent * n_cbw * n_slot,
        overhead_samples=model.w_dec.size + model.b_dec.size + 2 * d,
    )


@dataclass
class WireFrame:
    """One decoded frame: header fields plus float32 payload values."""

    kind: int
    block_id: int
    rows: int
    cols: int
    m: int
    n_div: int
    values: np.ndarray


def encode_frame(frame: WireFrame) -> bytes:
    """Serialize a frame to its normative byte layout."""
    values = np.ascontiguousarray(frame.values, dtype="<f4")
    if values.size != frame.rows * frame.cols:
        raise DimensionError(
            f"payload has {values.size} values, dims say {frame.rows}x{frame.cols}"
        )
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        frame.kind,
        frame.block_id,
        frame.rows,
        frame.cols,
        frame.m,
        frame.n_div,
    )
    body = header + values.tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def decode_frame(buf: bytes, offset: int = 0):
    """Parse one frame at ``offset``; returns (frame, next_offset)."""
    if len(buf) - offset < _HEADER.size:
        raise MalformedFrame("truncated header")
    magic, version, kind, block_id, rows, cols, m, n_div = _HEADER.unpack_from(
        buf, offset
    )
    if magic != MAGIC:
        raise MalformedFrame(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedFrame(f"unsupported version {version}")
    if kind not in (KIND_LATENT, KIND_DECODER, KIND_ENCODER):
        raise MalformedFrame(f"unknown kind {kind}")
    payload_len = 4 * rows * cols
    end = offset + _HEADER.size + payload_len + _CRC.size
    if len(buf) < end:
        raise MalformedFrame("truncated payload")
    body = buf[offset : offset + _HEADER.size + payload_len]
    (crc_stored,) = _CRC.unpack_from(buf, offset + _HEADER.size + payload_len)
    if zlib.crc32(body) != crc_stored:
        raise MalformedFrame("crc mismatch")
    values = np.frombuffer(
        buf, dtype="<f4", count=rows * cols, offset=offset + _HEADER.size
    ).reshape(rows, cols)
    return WireFrame(kind, block_id, rows, cols, m, n_div, values), end


def decode_frames(buf: bytes) -> list:
    """Parse a whole ``.maef`` buffer of concatenated frames."""
    frames = []
    offset = 0
    while offset < len(buf):
        frame, offset = decode_frame(buf, offset)
        frames.append(frame)
    return frames


def latent_frame(grid: LatentGrid, m: int, n_div: int) -> WireFrame:
    rows, cols = grid.values.shape
    return WireFrame(KIND_LATENT, grid.block_id, rows, cols, m, n_div, grid.values)


def latent_from_frame(frame: WireFrame) -> LatentGrid:
    if frame.kind != KIND_LATENT:
        raise MalformedFrame(f"expected latent frame, got kind {frame.kind}")
    return LatentGrid(block_id=frame.block_id, values=frame.values.astype(float))


def decoder_frame(dec: DecoderPart, block_id: int, m: int, n_div: int) -> WireFrame:
    flat = np.concatenate(
        [dec.w_dec.ravel(), dec.b_dec, dec.feat_min, dec.feat_max]
    )
    return WireFrame(
        KIND_DECODER, block_id, 1, flat.size, m, n_div, flat.reshape(1, -1)
    )


def decoder_from_frame(frame: WireFrame) -> DecoderPart:
    if frame.kind != KIND_DECODER:
        raise MalformedFrame(f"expected decoder frame, got kind {frame.kind}")
    d = 2 * frame.m
    latent = d // frame.n_div
    expected = d * latent + 3 * d
    flat = frame.values.astype(float).ravel()
    if flat.size != expected:
        raise MalformedFrame(
            f"decoder payload has {flat.size} values, expected {expected}"
        )
    w = flat[: d * latent].reshape(d, latent)
    rest = flat[d * latent :]
    return DecoderPart(
        w_dec=w,
        b_dec=rest[:d],
        feat_min=rest[d : 2 * d],
        feat_max=rest[2 * d :],
    )


def encoder_frame(enc: EncoderPart, block_id: int, m: int, n_div: int) -> WireFrame:
    flat = np.concatenate(
        [enc.w_enc.ravel(), enc.b_enc, enc.feat_min, enc.feat_max]
    )
    return WireFrame(
        KIND_ENCODER, block_id, 1, flat.size, m, n_div, flat.reshape(1, -1)
    )


def encoder_from_frame(frame: WireFrame) -> EncoderPart:
    if frame.kind != KIND_ENCODER:
        raise MalformedFrame(f"expected encoder frame, got kind {frame.kind}")
    d = 2 * frame.m
    latent = d // frame.n_div
    expected = latent * d + latent + 2 * d
    flat = frame.values.astype(float).ravel()
    if flat.size != expected:
        raise MalformedFrame(
            f"encoder payload has {flat.size} values, expected {expected}"
        )
    w = flat[: latent * d].reshape(latent, d)
    rest = flat[latent * d :]
    return EncoderPart(
        w_enc=w,
        b_enc=rest[:latent],
        feat_min=rest[latent : latent + d],
        feat_max=rest[latent + d :],
    )


def transfer_block(
    latent: LatentGrid,
    dec: DecoderPart,
    ledger: BandwidthLedger,
    quantize: bool = True,
):
    """Push a latent grid and decoder part through the link.

    Serializes and deserializes both payloads, so the returned values carry
    32-bit rounding exactly as a real link would, and accumulates the
    transferred counts into ``ledger`` (one count per payload value).  With
    ``quantize=False`` the link is bypassed (ablation mode) and only the
    accounting happens.
    """
    d, latent_dim = dec.w_dec.shape
    if latent.values.shape[0] != latent_dim:
        raise DimensionError(
            f"latent grid has {latent.values.shape[0]} rows, decoder expects {latent_dim}"
        )
    m = d // 2
    n_div = d // latent_dim
    ledger.latent_samples += latent.values.size
    ledger.overhead_samples += dec.w_dec.size + dec.b_dec.size + 2 * d
    ledger.full_samples += d * latent.values.shape[1]
    if not quantize:
        return latent, dec
    latent_out, _ = decode_frame(encode_frame(latent_frame(latent, m, n_div)))
    dec_out, _ = decode_frame(encode_frame(decoder_frame(dec, latent.block_id, m, n_div)))
    return latent_from_frame(latent_out), decoder_from_frame(dec_out)
