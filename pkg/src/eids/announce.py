"""Authenticated node-status datagrams and their verification.

Wire format, exactly 48 octets, all integers big-endian:

    offset  size  field
    0       4     magic "EIDS"
    4       1     version, 0x01
    5       2     node id
    7       6     message time, milliseconds since epoch
    13      1     flags: bit0 intrusion-since-last, bit1 active mode
    14      2     events since last message
    16      32    HMAC-SHA-256 over octets 0..15 under the shared PSK

The message time is the replay-protection variable: a receiver accepts
a node's message only if its time is strictly greater than the last
accepted one. There is no encryption; the status bits are not secret,
only their authenticity matters.
"""

import hmac
import struct
from dataclasses import dataclass
from hashlib import sha256

MAGIC = b"EIDS"
VERSION = 1
WIRE_LEN = 48
HEADER_LEN = 16
DEFAULT_PORT = 47808
KEEPALIVE_PERIOD_MS = 10_000

FLAG_INTRUSION = 0x01
FLAG_ACTIVE = 0x02

_HEAD = struct.Struct(">4sBH6sBH")
_TIME_MAX = (1 << 48) - 1


class AnnounceError(ValueError):
    pass


class BadLength(AnnounceError):
    pass


class BadMagic(AnnounceError):
    pass


class BadVersion(AnnounceError):
    pass


class BadHmac(AnnounceError):
    pass


class ReplayRejected(AnnounceError):
    pass


class SkewRejected(AnnounceError):
    """Message time implausibly far in the receiver's future."""


@dataclass(frozen=True)
class StatusMessage:
    node_id: int
    msg_time_ms: int
    intrusion: bool
    active: bool
    event_count: int

    @property
    def flags(self) -> int:
        return (FLAG_INTRUSION if self.intrusion else 0) | (
            FLAG_ACTIVE if self.active else 0
        )


class ReplayState:
    """Last accepted message time per node, strictly increasing."""

    def __init__(self) -> None:
        self._last: dict[int, int] = {}

    def accept(self, node_id: int, msg_time_ms: int) -> None:
        last = self._last.get(node_id)
        if last is not None and msg_time_ms <= last:
            raise ReplayRejected(
                "node %d time %d not after %d" % (node_id, msg_time_ms, last)
            )
        self._last[node_id] = msg_time_ms

    def last_time(self, node_id: int) -> int | None:
        return self._last.get(node_id)


def encode(msg: StatusMessage, psk: bytes) -> bytes:
    """Serialize and sign a status message; deterministic bytes."""
    if not psk:
        raise ValueError("empty PSK")
    if not 0 <= msg.node_id <= 0xFFFF:
        raise ValueError("node id out of range")
    if not 0 <= msg.msg_time_ms <= _TIME_MAX:
        raise ValueError("message time out of range")
    if not 0 <= msg.event_count <= 0xFFFF:
        raise ValueError("event count out of range")
    header = _HEAD.pack(
        MAGIC,
        VERSION,
        msg.node_id,
        msg.msg_time_ms.to_bytes(6, "big"),
        msg.flags,
        msg.event_count,
    )
    return header + hmac.new(psk, header, sha256).digest()


def decode_verify(
    data: bytes,
    psk: bytes,
    replay: ReplayState,
    now_ms: int | None = None,
    max_future_skew_ms: int = 120_000,
) -> StatusMessage:
    """Verify and decode one datagram, updating the replay state.

    Checks run in order: length, magic, version, HMAC, future skew
    (only when the caller supplies its clock), replay. Only a fully
    accepted message advances the per-node replay floor.
    """
    if len(data) != WIRE_LEN:
        raise BadLength("%d octets, want %d" % (len(data), WIRE_LEN))
    magic, version, node_id, time_raw, flags, event_count = _HEAD.unpack(
        data[:HEADER_LEN]
    )
    if magic != MAGIC:
        raise BadMagic(repr(magic))
    if version != VERSION:
        raise BadVersion("version %d" % version)
    tag = hmac.new(psk, data[:HEADER_LEN], sha256).digest()
    if not hmac.compare_digest(tag, data[HEADER_LEN:]):
        raise BadHmac("signature mismatch")
    msg_time_ms = int.from_bytes(time_raw, "big")
    if now_ms is not None and msg_time_ms > now_ms + max_future_skew_ms:
        raise SkewRejected("message time %d vs clock %d" % (msg_time_ms, now_ms))
    replay.accept(node_id, msg_time_ms)
    return StatusMessage(
        node_id=node_id,
        msg_time_ms=msg_time_ms,
        intrusion=bool(flags & FLAG_INTRUSION),
        active=bool(flags & FLAG_ACTIVE),
        event_count=event_count,
    )


def keepalive_due(
    last_sent_ms: int | None, now_ms: int, period_ms: int = KEEPALIVE_PERIOD_MS
) -> bool:
    """Whether a status message should be sent now.

    A clock step backwards counts as zero elapsed time rather than
    triggering a send or an error.
    """
    if last_sent_ms is None:
        return True
    return max(0, now_ms - last_sent_ms) >= period_ms
