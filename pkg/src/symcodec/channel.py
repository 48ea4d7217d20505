"""Packetized BPSK-AWGN link: framing, CRC32, bit corruption, reassembly.

Frame wire format (``packet_bits`` total)::

    stream_id u32 | layer_id u16 | seq_idx u32 | body | crc32 u32     (big-endian)

The CRC (CRC-32/ISO-HDLC, as in zlib) covers header and body.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import InvariantError

HEADER = struct.Struct(">IHI")
HEADER_BITS = 8 * HEADER.size
CRC_BITS = 32
OVERHEAD_BITS = HEADER_BITS + CRC_BITS
DEFAULT_PACKET_BITS = 2048


def ber_from_snr(snr_db: float) -> float:
    """BPSK bit error rate Q(sqrt(2 * snr)), with Q(x) = erfc(x / sqrt 2) / 2."""
    if not math.isfinite(snr_db):
        raise InvariantError(f"snr_db must be finite, got {snr_db}")
    return 0.5 * math.erfc(math.sqrt(10.0 ** (snr_db / 10.0)))


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float = 10.0
    packet_bits: int = DEFAULT_PACKET_BITS
    p_loss: float = 0.0
    seed: int = 0
    pin_metadata: bool = False

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise InvariantError(f"snr_db must be finite, got {self.snr_db}")
        if self.packet_bits <= OVERHEAD_BITS or self.packet_bits % 8:
            raise InvariantError(
                f"packet_bits must be a whole number of bytes above {OVERHEAD_BITS}"
            )
        if not 0.0 <= self.p_loss <= 1.0:
            raise InvariantError(f"p_loss must be in [0, 1], got {self.p_loss}")
        if not 0 <= self.seed < 2**64:
            raise InvariantError("seed must be a 64-bit unsigned integer")

    @property
    def ber(self) -> float:
        return ber_from_snr(self.snr_db)

    @property
    def frame_bytes(self) -> int:
        return self.packet_bits // 8

    @property
    def body_bytes(self) -> int:
        return (self.packet_bits - OVERHEAD_BITS) // 8

    def packets_for(self, payload_bytes: int) -> int:
        return -(-payload_bytes // self.body_bytes)

    @property
    def packet_success(self) -> float:
        """Probability a single frame arrives with no bit errors and is not erased."""
        return (1.0 - self.ber) ** self.packet_bits * (1.0 - self.p_loss)


@dataclass(frozen=True)
class Packet:
    stream_id: int
    layer_id: int
    seq_idx: int
    body: bytes

    @property
    def header(self) -> bytes:
        return HEADER.pack(self.stream_id, self.layer_id, self.seq_idx)

    @property
    def crc(self) -> int:
        return zlib.crc32(self.header + self.body)

    def to_bytes(self) -> bytes:
        head = self.header + self.body
        return head + struct.pack(">I", zlib.crc32(head))

    @classmethod
    def parse(cls, frame: bytes) -> "Packet | None":
        """Decode a frame, or None when its CRC does not verify."""
        if len(frame) < HEADER.size + 4:
            return None
        head, (crc,) = frame[:-4], struct.unpack(">I", frame[-4:])
        if zlib.crc32(head) != crc:
            return None
        stream_id, layer_id, seq_idx = HEADER.unpack_from(head, 0)
        return cls(stream_id, layer_id, seq_idx, bytes(head[HEADER.size:]))


def verify_frame(frame: bytes) -> bool:
    return Packet.parse(frame) is not None


def packetize(payload: bytes, stream_id: int, layer_id: int, cfg: ChannelConfig) -> list[Packet]:
    if not payload:
        raise InvariantError("cannot packetize an empty payload")
    cap = cfg.body_bytes
    packets = []
    for seq, start in enumerate(range(0, len(payload), cap)):
        body = payload[start:start + cap].ljust(cap, b"\x00")
        packets.append(Packet(stream_id, layer_id, seq, body))
    return packets


def packet_rng(seed: int, stream_id: int, layer_id: int, seq_idx: int) -> np.random.Generator:
    """Philox stream keyed by packet identity, so corruption is order-independent."""
    ss = np.random.SeedSequence([seed, stream_id, layer_id, seq_idx])
    return np.random.Generator(np.random.Philox(ss))


def corrupt_frame(frame: bytes, ber: float, rng: np.random.Generator, protect: slice | None = None) -> bytes:
    """Flip each bit independently with probability ``ber``."""
    nbits = 8 * len(frame)
    flips = rng.random(nbits) < ber
    if protect is not None:
        flips.reshape(len(frame), 8)[protect] = False
    if not flips.any():
        return bytes(frame)
    mask = np.packbits(flips)
    return (np.frombuffer(frame, dtype=np.uint8) ^ mask).tobytes()


def transmit(
    packets: list[Packet], cfg: ChannelConfig, pinned_bytes: int = 0
) -> list[bytes | None]:
    """Send frames through the channel; erased frames come back as None.

    With ``cfg.pin_metadata`` the first ``pinned_bytes`` of the payload
    (the start of the seq 0 body) are exempt from bit flips.
    """
    ber = cfg.ber
    out: list[bytes | None] = []
    for pkt in packets:
        rng = packet_rng(cfg.seed, pkt.stream_id, pkt.layer_id, pkt.seq_idx)
        if rng.random() < cfg.p_loss:
            out.append(None)
            continue
        protect = None
        if cfg.pin_metadata and pinned_bytes and pkt.seq_idx == 0:
            protect = slice(HEADER.size, HEADER.size + min(pinned_bytes, cfg.body_bytes))
        out.append(corrupt_frame(pkt.to_bytes(), ber, rng, protect))
    return out


@dataclass
class LinkStats:
    """Mergeable transmission counters."""

    packets_sent: int = 0
    packets_failed_crc: int = 0
    packets_lost: int = 0
    anomalies: int = 0
    bits_sent: int = 0
    delivered_bytes: int = 0
    payload_bytes: int = 0

    @property
    def per(self) -> float:
        if not self.packets_sent:
            return 0.0
        return (self.packets_failed_crc + self.packets_lost) / self.packets_sent

    @property
    def delivered_fraction(self) -> float:
        if not self.payload_bytes:
            return 1.0
        return self.delivered_bytes / self.payload_bytes

    @property
    def clean(self) -> bool:
        return self.packets_failed_crc == 0 and self.packets_lost == 0

    def __add__(self, other: "LinkStats") -> "LinkStats":
        return LinkStats(
            self.packets_sent + other.packets_sent,
            self.packets_failed_crc + other.packets_failed_crc,
            self.packets_lost + other.packets_lost,
            self.anomalies + other.anomalies,
            self.bits_sent + other.bits_sent,
            self.delivered_bytes + other.delivered_bytes,
            self.payload_bytes + other.payload_bytes,
        )


def reassemble(
    received: list[bytes | None],
    expected_len: int,
    cfg: ChannelConfig,
    stream_id: int | None = None,
    layer_id: int | None = None,
    pinned_prefix: bytes | None = None,
) -> tuple[bytes, LinkStats]:
    """Place CRC-valid bodies by sequence number; zero-fill everything else.

    Frames that verify but carry an unexpected stream/layer id, an
    out-of-range sequence number, or a duplicate sequence number are counted
    as anomalies and ignored (first copy wins).
    """
    cap = cfg.body_bytes
    n_expected = cfg.packets_for(expected_len)
    buf = bytearray(n_expected * cap)
    stats = LinkStats(packets_sent=len(received), bits_sent=len(received) * cfg.packet_bits,
                      payload_bytes=expected_len)
    seen: set[int] = set()
    for frame in received:
        if frame is None:
            stats.packets_lost += 1
            continue
        pkt = Packet.parse(frame)
        if pkt is None:
            stats.packets_failed_crc += 1
            continue
        if (
            (stream_id is not None and pkt.stream_id != stream_id)
            or (layer_id is not None and pkt.layer_id != layer_id)
            or pkt.seq_idx >= n_expected
            or pkt.seq_idx in seen
        ):
            stats.anomalies += 1
            continue
        seen.add(pkt.seq_idx)
        start = pkt.seq_idx * cap
        buf[start:start + cap] = pkt.body
        stats.delivered_bytes += min(cap, expected_len - start)
    out = bytes(buf[:expected_len])
    if cfg.pin_metadata and pinned_prefix:
        out = bytes(pinned_prefix) + out[len(pinned_prefix):]
    return out, stats


def send_stream(
    payload: bytes,
    cfg: ChannelConfig,
    stream_id: int = 0,
    layer_id: int = 0,
    metadata_bytes: int = 0,
) -> tuple[bytes, LinkStats]:
    """Packetize, transmit and reassemble one layer stream."""
    packets = packetize(payload, stream_id, layer_id, cfg)
    received = transmit(packets, cfg, pinned_bytes=metadata_bytes)
    prefix = payload[:metadata_bytes] if cfg.pin_metadata and metadata_bytes else None
    return reassemble(received, len(payload), cfg, stream_id, layer_id, prefix)
