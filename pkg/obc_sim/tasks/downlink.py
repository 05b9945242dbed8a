"""
Downlink preparation: frames stored telemetry and the compressed image into
fixed 256-byte packets in the downlink buffer.

Packet layout: ``<HB`` header (sequence, payload length), the payload
zero-padded to 251 bytes, then a CRC-16/CCITT over everything before it.
"""
from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass
from typing import Iterable, List

from obc_sim.devices import IMAGE_STORE, PACKET_SIZE
from obc_sim.errors import StreamError
from obc_sim.flightplan import ExitStatus, TaskHandle
from obc_sim.helpers import get_logger
from obc_sim.tasks.registry import TaskContext, task_body

log = get_logger(__name__)

_HEADER = struct.Struct('<HB')
_CRC = struct.Struct('<H')
PAYLOAD_SIZE = PACKET_SIZE - _HEADER.size - _CRC.size


def frame(data: bytes, first_seq: int = 0) -> List[bytes]:
    """
    Split ``data`` into packets, numbering them from ``first_seq``.

    Usage Example:
        >>> packets = frame(bytes(1000))
        >>> len(packets), len(packets[0])
        (4, 256)
        >>> frame(b'')
        []
    """
    packets = []
    for n, offset in enumerate(range(0, len(data), PAYLOAD_SIZE)):
        chunk = data[offset:offset + PAYLOAD_SIZE]
        body = _HEADER.pack((first_seq + n) & 0xFFFF, len(chunk)) + chunk.ljust(PAYLOAD_SIZE, b'\x00')
        packets.append(body + _CRC.pack(binascii.crc_hqx(body, 0xFFFF)))
    return packets


def deframe(packets: Iterable[bytes]) -> bytes:
    """
    Reassemble the payloads of ``packets``.

    Raises:
        StreamError: On a wrong packet size or a CRC mismatch.
    """
    out = bytearray()
    for n, packet in enumerate(packets):
        if len(packet) != PACKET_SIZE:
            raise StreamError(f'packet {n} is {len(packet)} bytes', offset=n * PACKET_SIZE)
        body, (crc,) = packet[:-_CRC.size], _CRC.unpack(packet[-_CRC.size:])
        if binascii.crc_hqx(body, 0xFFFF) != crc:
            raise StreamError(f'CRC mismatch in packet {n}', offset=n * PACKET_SIZE)
        _, length = _HEADER.unpack(body[:_HEADER.size])
        out += body[_HEADER.size:_HEADER.size + length]
    return bytes(out)


@dataclass
class DownlinkQueue:
    """
    What is still waiting to be framed.

    ``backlog`` counts compressed image bytes only; telemetry is framed
    opportunistically ahead of them.
    """
    telemetry_cursor: int = 0
    image_bytes: int = 0
    image_offset: int = 0
    packet_seq: int = 0
    packets_per_activation: int = 16

    @property
    def backlog(self) -> int:
        return self.image_bytes - self.image_offset

    def queue_image(self, size: int) -> None:
        """A new image record of ``size`` bytes now sits at the start of the image store."""
        if self.backlog:
            log.warning(f'Image overwritten with {self.backlog} bytes not yet framed')
        self.image_bytes = size
        self.image_offset = 0


@task_body('downlink-prep')
def downlink_prep(ctx: TaskContext, handle: TaskHandle) -> ExitStatus:
    """Frame up to one activation's packet budget: telemetry first, then the image."""
    queue = ctx.downlink
    budget = queue.packets_per_activation * PAYLOAD_SIZE
    payload = bytearray()

    records = 0
    for seq, record in ctx.access.read_telemetry_since(queue.telemetry_cursor):
        entry = bytes([len(record)]) + record
        if len(payload) + len(entry) > budget:
            break
        payload += entry
        queue.telemetry_cursor = seq + 1
        records += 1

    image_chunk = min(queue.backlog, budget - len(payload))
    if image_chunk > 0:
        payload += ctx.access.flash_read(IMAGE_STORE, queue.image_offset, image_chunk)
        queue.image_offset += image_chunk

    packets = frame(bytes(payload), queue.packet_seq)
    for packet in packets:
        ctx.access.write_downlink(packet)
    queue.packet_seq = (queue.packet_seq + len(packets)) & 0xFFFF

    ctx.telemetry.emit('downlink', handle.now, packets=len(packets), records=records,
                       image_bytes=max(image_chunk, 0), backlog=queue.backlog)
    return ExitStatus.OK
