"""
V2V data distribution: identifier-tagged 8-byte UDP packages, their one-to-one bridge onto 11-bit CAN frames, and
a seeded channel with latency, jitter and independent loss.

The byte layout is documented in docs/wire-format.md.
"""
import heapq
import itertools
import logging
import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.lcv_auto.exceptions import (ConfigurationError, EncodingError, FramingError, InputDomainError,
                                     MappingError)
from src.lcv_auto.parameters import DATA_DIR

logger = logging.getLogger(__name__)

WIRE_VERSION = 1
PAYLOAD_SIZE = 8
MAX_CAN_ID = 0x7FF
DEFAULT_CAN_BASE = 0x300
DEFAULT_CAN_MAPPING_FILE = DATA_DIR / "comms" / "can_mapping.csv"

_DOUBLE = struct.Struct("<d")
_UINT64 = struct.Struct("<Q")


class FieldId(IntEnum):
    VERSION = 0x00
    ACCELERATION = 0x01
    LATITUDE = 0x02
    LONGITUDE = 0x03
    TIMESTAMP = 0x04
    SENDER_ID = 0x05
    GPS_HEADING = 0x10
    COMPASS_HEADING = 0x11
    LIDAR_NEAREST = 0x12


MANDATORY_FIELDS = frozenset({FieldId.ACCELERATION, FieldId.LATITUDE, FieldId.LONGITUDE})
INTEGER_FIELDS = frozenset({FieldId.VERSION, FieldId.SENDER_ID})


# ---------------------------------------------------------------------------------------------------------- #
# Wire types
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class V2VMessage:
    """
    Lead vehicle broadcast.

    :param acceleration: measured longitudinal acceleration (m/s^2)
    :param latitude: GPS latitude (deg)
    :param longitude: GPS longitude (deg)
    :param timestamp: send time (s)
    :param sender_id: unsigned 64-bit sender identifier
    """

    acceleration: float
    latitude: float
    longitude: float
    timestamp: float = 0.0
    sender_id: int = 0

    def validate(self):
        for name in ("acceleration", "latitude", "longitude", "timestamp"):
            if not math.isfinite(getattr(self, name)):
                raise EncodingError(f"Field {name} is not finite: {getattr(self, name)}.")

        if abs(self.latitude) > 90.0:
            raise EncodingError(f"Latitude {self.latitude} outside [-90, 90].")

        if abs(self.longitude) > 180.0:
            raise EncodingError(f"Longitude {self.longitude} outside [-180, 180].")

        if not 0 <= self.sender_id < 2 ** 64:
            raise EncodingError(f"Sender id {self.sender_id} does not fit in 64 bits.")


@dataclass(frozen=True)
class UdpPackage:
    identifier: int
    payload: bytes

    def __post_init__(self):
        if not 0 <= self.identifier <= 0xFF:
            raise FramingError(f"UDP identifier {self.identifier} does not fit in one byte.")

        if len(self.payload) != PAYLOAD_SIZE:
            raise FramingError(f"UDP payload of identifier {self.identifier:#04x} has {len(self.payload)} bytes, "
                               f"expected {PAYLOAD_SIZE}.")

    def to_bytes(self) -> bytes:
        """
        Datagram layout: one identifier byte followed by the payload.
        """
        return bytes([self.identifier]) + bytes(self.payload)

    @classmethod
    def from_bytes(cls, datagram: bytes):
        if len(datagram) != PAYLOAD_SIZE + 1:
            raise FramingError(f"Datagram has {len(datagram)} bytes, expected {PAYLOAD_SIZE + 1}.")

        return cls(datagram[0], bytes(datagram[1:]))


@dataclass(frozen=True)
class CanFrame:
    can_id: int
    data: bytes
    dlc: int = None

    def __post_init__(self):
        if self.dlc is None:
            object.__setattr__(self, "dlc", len(self.data))

        if not 0 <= self.can_id <= MAX_CAN_ID:
            raise FramingError(f"CAN identifier {self.can_id:#x} is not an 11-bit identifier.")

        if not 0 <= self.dlc <= PAYLOAD_SIZE or self.dlc != len(self.data):
            raise FramingError(f"DLC {self.dlc} does not match {len(self.data)} data bytes.")


# ---------------------------------------------------------------------------------------------------------- #
# Codec
# ---------------------------------------------------------------------------------------------------------- #
def _pack(field_id: FieldId, value) -> UdpPackage:
    if field_id in INTEGER_FIELDS:
        if not 0 <= int(value) < 2 ** 64:
            raise EncodingError(f"{field_id.name} value {value} does not fit in 64 bits.")
        return UdpPackage(int(field_id), _UINT64.pack(int(value)))

    value = float(value)
    if not math.isfinite(value):
        raise EncodingError(f"{field_id.name} value {value} is not finite.")

    return UdpPackage(int(field_id), _DOUBLE.pack(value))


def _unpack(package: UdpPackage):
    field_id = FieldId(package.identifier)
    if field_id in INTEGER_FIELDS:
        return _UINT64.unpack(package.payload)[0]
    return _DOUBLE.unpack(package.payload)[0]


def encode_fields(values: Mapping[FieldId, Any]) -> List[UdpPackage]:
    """
    One package per field, in identifier order. Used for in-vehicle signals as well as for V2V.
    """
    return [_pack(FieldId(field_id), value) for field_id, value in sorted(values.items())]


def encode_v2v(msg: V2VMessage) -> List[UdpPackage]:
    """
    :return: the version package followed by one package per message field
    """
    msg.validate()

    return encode_fields({FieldId.VERSION: WIRE_VERSION, FieldId.ACCELERATION: msg.acceleration,
                          FieldId.LATITUDE: msg.latitude, FieldId.LONGITUDE: msg.longitude,
                          FieldId.TIMESTAMP: msg.timestamp, FieldId.SENDER_ID: msg.sender_id})


@dataclass
class DecodeResult:
    """
    :param message: reassembled message, None until the mandatory fields are present
    :param fields: latest value per known identifier
    :param unknown: number of packages with an unknown identifier
    """

    message: Optional[V2VMessage]
    fields: Dict[FieldId, Any]
    unknown: int = 0

    @property
    def complete(self) -> bool:
        return self.message is not None


class V2VDecoder:
    """
    Streaming decoder: packages may arrive one at a time and the latest value per identifier wins.
    """

    def __init__(self):
        self.fields: Dict[FieldId, Any] = {}
        self.unknown = 0

    def feed(self, package: Union[UdpPackage, bytes]):
        """
        Take one package, or one raw datagram that is framed first.
        """
        if isinstance(package, (bytes, bytearray)):
            package = UdpPackage.from_bytes(package)

        try:
            field_id = FieldId(package.identifier)
        except ValueError:
            self.unknown += 1
            logger.debug("Skipping unknown identifier %#04x", package.identifier)
            return

        value = _unpack(package)
        if field_id is FieldId.VERSION and value != WIRE_VERSION:
            raise FramingError(f"Unsupported wire version {value}.")

        self.fields[field_id] = value

    def result(self) -> DecodeResult:
        message = None
        if MANDATORY_FIELDS <= self.fields.keys():
            message = V2VMessage(acceleration=self.fields[FieldId.ACCELERATION],
                                 latitude=self.fields[FieldId.LATITUDE],
                                 longitude=self.fields[FieldId.LONGITUDE],
                                 timestamp=self.fields.get(FieldId.TIMESTAMP, 0.0),
                                 sender_id=self.fields.get(FieldId.SENDER_ID, 0))

        return DecodeResult(message=message, fields=dict(self.fields), unknown=self.unknown)


def decode_v2v(packages: Iterable[Union[UdpPackage, bytes]]) -> DecodeResult:
    decoder = V2VDecoder()
    for package in packages:
        decoder.feed(package)

    return decoder.result()


# ---------------------------------------------------------------------------------------------------------- #
# UDP to CAN bridge
# ---------------------------------------------------------------------------------------------------------- #
class CanMapping:
    """
    One-to-one table from UDP identifiers to CAN identifiers.
    """

    def __init__(self, table: Mapping[int, int]):
        self.udp_to_can = {int(k): int(v) for k, v in table.items()}
        self.validate()
        self.can_to_udp = {v: k for k, v in self.udp_to_can.items()}

    def validate(self):
        if not self.udp_to_can:
            raise ConfigurationError("CAN mapping is empty.")

        for udp_id, can_id in self.udp_to_can.items():
            if not 0 <= udp_id <= 0xFF:
                raise ConfigurationError(f"UDP identifier {udp_id} does not fit in one byte.")
            if not 0 <= can_id <= MAX_CAN_ID:
                raise ConfigurationError(f"CAN identifier {can_id:#x} is not an 11-bit identifier.")

        if len(set(self.udp_to_can.values())) != len(self.udp_to_can):
            raise ConfigurationError("CAN mapping is not one-to-one.")

    @classmethod
    def default(cls):
        return cls({int(f): DEFAULT_CAN_BASE + int(f) for f in FieldId})

    @classmethod
    def from_file(cls, path):
        """
        Read a ``udp_id,can_id`` table; identifiers may be decimal or 0x-prefixed hexadecimal.
        """
        path = Path(path)
        try:
            frame = pd.read_csv(path, comment="#", dtype=str, skipinitialspace=True)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ConfigurationError(f"Cannot read CAN mapping {path}: {e}") from e

        if list(frame.columns) != ["udp_id", "can_id"]:
            raise ConfigurationError(f"CAN mapping {path} must have the columns udp_id,can_id.")

        try:
            udp_ids = [int(v, 0) for v in frame["udp_id"]]
            can_ids = [int(v, 0) for v in frame["can_id"]]
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"CAN mapping {path} holds a non-integer identifier: {e}") from e

        if len(set(udp_ids)) != len(udp_ids):
            raise ConfigurationError(f"CAN mapping {path} lists a UDP identifier twice.")

        return cls(dict(zip(udp_ids, can_ids)))

    def __len__(self):
        return len(self.udp_to_can)


def udp_to_can(pkg: UdpPackage, mapping: CanMapping) -> CanFrame:
    try:
        can_id = mapping.udp_to_can[pkg.identifier]
    except KeyError:
        raise MappingError(f"UDP identifier {pkg.identifier:#04x} is not mapped to a CAN identifier.") from None

    return CanFrame(can_id=can_id, data=bytes(pkg.payload), dlc=PAYLOAD_SIZE)


def can_to_udp(frame: CanFrame, mapping: CanMapping) -> UdpPackage:
    """
    Controller-side inverse lookup of ``udp_to_can``.
    """
    try:
        udp_id = mapping.can_to_udp[frame.can_id]
    except KeyError:
        raise MappingError(f"CAN identifier {frame.can_id:#x} is not mapped to a UDP identifier.") from None

    if frame.dlc != PAYLOAD_SIZE:
        raise FramingError(f"CAN frame {frame.can_id:#x} carries {frame.dlc} bytes, expected {PAYLOAD_SIZE}.")

    return UdpPackage(udp_id, bytes(frame.data))


# ---------------------------------------------------------------------------------------------------------- #
# Channel
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class ChannelParams:
    """
    :param latency: fixed delay (s)
    :param jitter: bound of the extra delay, drawn uniformly from [0, jitter] (s)
    :param loss: independent drop probability per message
    :param seed: seed of the channel generator
    """

    latency: float = 0.0
    jitter: float = 0.0
    loss: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.latency >= 0 and self.jitter >= 0):
            raise ConfigurationError("Channel latency and jitter must be non-negative.")

        if not 0.0 <= self.loss < 1.0:
            raise ConfigurationError(f"Loss probability must lie in [0, 1), got {self.loss}.")

        if self.seed < 0:
            raise ConfigurationError("Seed must be non-negative.")


@dataclass(frozen=True)
class Transmission:
    sent_at: float
    sender: int
    payload: Any


@dataclass(frozen=True)
class Delivery:
    sent_at: float
    delivered_at: float
    sender: int
    payload: Any


@dataclass(order=True)
class _Pending:
    due: float
    seq: int
    transmission: Transmission = field(compare=False)


class Channel:
    """
    Event queue between senders and one receiver. Every submission draws a loss sample and a jitter sample, so the
    random stream depends only on the number of submissions. A sender's messages never overtake each other.
    """

    def __init__(self, params: ChannelParams, seed_sequence: np.random.SeedSequence = None):
        self.params = params
        self.rng = np.random.default_rng(seed_sequence if seed_sequence is not None else params.seed)

        self._queue: List[_Pending] = []
        self._seq = itertools.count()
        self._last_due: Dict[int, float] = {}
        self.now = -math.inf

        self.submitted = 0
        self.dropped = 0
        self.delivered = 0

    def submit(self, transmission: Transmission):
        lost = self.rng.random() < self.params.loss
        jitter = self.rng.uniform(0.0, self.params.jitter)
        self.submitted += 1

        if lost:
            self.dropped += 1
            return

        due = max(transmission.sent_at + self.params.latency + jitter,
                  self._last_due.get(transmission.sender, -math.inf))
        self._last_due[transmission.sender] = due

        heapq.heappush(self._queue, _Pending(due, next(self._seq), transmission))

    def step(self, now: float, inbox: Sequence[Transmission] = ()) -> List[Delivery]:
        """
        Submit ``inbox`` and release every message due at or before ``now``, in delivery order.
        """
        if now < self.now:
            raise InputDomainError(f"Channel time went backwards: {now} < {self.now}.")
        self.now = now

        for transmission in inbox:
            self.submit(transmission)

        delivered = []
        while self._queue and self._queue[0].due <= now:
            pending = heapq.heappop(self._queue)
            t = pending.transmission
            delivered.append(Delivery(sent_at=t.sent_at, delivered_at=now, sender=t.sender, payload=t.payload))

        self.delivered += len(delivered)
        return delivered

    @property
    def in_flight(self) -> int:
        return len(self._queue)


def channel_step(channel: Channel, now: float, inbox: Sequence[Transmission] = ()) -> List[Delivery]:
    return channel.step(now, inbox)
