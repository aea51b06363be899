"""Bit-exact wire protocol: value codec, message variants, and framing.

Every host-to-host exchange is one framed request answered by exactly one
framed response. A frame is a 4-byte big-endian body length followed by the
body; the body is a 1-byte variant tag followed by the variant's fields in
declared order. Trailing bytes after a frame belong to the next frame.

Value codec ("rv1"), tag byte then payload:

    0x01  integer   signed 64-bit big-endian
    0x02  float     IEEE-754 binary64 big-endian
    0x03  boolean   one byte, 0x00 or 0x01
    0x04  text      u32 length + UTF-8 bytes
    0x05  blob      u32 length + raw bytes
    0x06  list      u32 count + element encodings, all sharing one tag

Sub-encodings used inside message bodies:

    name        u16 length + UTF-8 (Rebind/Lookup names, error text)
    object id   u64 incarnation + u64 serial
    descriptor  "host:port" as an rv1 text + object id
    payload     u16 codec-id length + codec id + u32 length + value bytes
    capture     u8 kind (0x01 inline, 0x02 reference) + payload or descriptor
    stage       fn id as an rv1 text + u16 capture count + captures
    pipeline    u16 stage count + stages

Encodings are canonical: equal values produce byte-equal frames, and
re-encoding a decoded message reproduces the original bytes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Union

from .errors import NotSerializableError, ProtocolError
from .model import EndpointAddr, ObjectId, RemoteRefDescriptor
from .shipping import Capture, InlineValue, RemoteRef, ShippedFn, Stage

CODEC_RV1 = "rv1"
DEFAULT_PORT = 7099
MAX_BODY_LEN = 2**32 - 1

_INT64_MIN = -(2**63)
_INT64_MAX = 2**63 - 1

TAG_INT = 0x01
TAG_FLOAT = 0x02
TAG_BOOL = 0x03
TAG_TEXT = 0x04
TAG_BLOB = 0x05
TAG_LIST = 0x06

_CAPTURE_INLINE = 0x01
_CAPTURE_REF = 0x02

_U8 = struct.Struct(">B")
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")


@dataclass(frozen=True)
class ValuePayload:
    """Encoded bytes of one value plus the codec that produced them."""

    codec_id: str
    data: bytes


# --------------------------------------------------------------------------
# Message variants. Tags are assigned in declaration order and are frozen
# protocol; requests and responses are disjoint sets.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Rebind:
    name: str
    descriptor: RemoteRefDescriptor


@dataclass(frozen=True)
class Lookup:
    name: str


@dataclass(frozen=True)
class Map:
    target: ObjectId
    fn: ShippedFn


@dataclass(frozen=True)
class FlatMap:
    target: ObjectId
    fn: ShippedFn


@dataclass(frozen=True)
class Get:
    target: ObjectId


@dataclass(frozen=True)
class Export:
    payload: ValuePayload


@dataclass(frozen=True)
class Stats:
    target: ObjectId


@dataclass(frozen=True)
class RespDescriptor:
    descriptor: RemoteRefDescriptor


@dataclass(frozen=True)
class RespValue:
    payload: ValuePayload


@dataclass(frozen=True)
class RespStats:
    serialization_count: int
    get_count: int


@dataclass(frozen=True)
class RespAck:
    pass


@dataclass(frozen=True)
class RespError:
    code: int
    text: str


Message = Union[
    Rebind, Lookup, Map, FlatMap, Get, Export, Stats,
    RespDescriptor, RespValue, RespStats, RespAck, RespError,
]

_MESSAGE_TAGS: dict[type, int] = {
    Rebind: 1, Lookup: 2, Map: 3, FlatMap: 4, Get: 5, Export: 6, Stats: 7,
    RespDescriptor: 8, RespValue: 9, RespStats: 10, RespAck: 11, RespError: 12,
}
_REQUEST_TYPES = (Rebind, Lookup, Map, FlatMap, Get, Export, Stats)


def is_request(message: Message) -> bool:
    return isinstance(message, _REQUEST_TYPES)


# --------------------------------------------------------------------------
# Value codec
# --------------------------------------------------------------------------


def _tag_for(value: Any) -> int:
    if isinstance(value, bool):
        return TAG_BOOL
    if isinstance(value, int):
        return TAG_INT
    if isinstance(value, float):
        return TAG_FLOAT
    if isinstance(value, str):
        return TAG_TEXT
    if isinstance(value, (bytes, bytearray)):
        return TAG_BLOB
    if isinstance(value, list):
        return TAG_LIST
    raise NotSerializableError(f"no codec binding for {type(value).__name__}")


def _encode_raw(value: Any, out: bytearray) -> None:
    tag = _tag_for(value)
    out.append(tag)
    if tag == TAG_BOOL:
        out.append(0x01 if value else 0x00)
    elif tag == TAG_INT:
        if not _INT64_MIN <= value <= _INT64_MAX:
            raise NotSerializableError(f"integer out of 64-bit range: {value}")
        out += _I64.pack(value)
    elif tag == TAG_FLOAT:
        out += _F64.pack(value)
    elif tag == TAG_TEXT:
        encoded = value.encode("utf-8")
        out += _U32.pack(len(encoded))
        out += encoded
    elif tag == TAG_BLOB:
        out += _U32.pack(len(value))
        out += bytes(value)
    elif tag == TAG_LIST:
        out += _U32.pack(len(value))
        element_tag = None
        for element in value:
            found = _tag_for(element)
            if element_tag is None:
                element_tag = found
            elif found != element_tag:
                raise NotSerializableError("list elements must share one codec tag")
            _encode_raw(element, out)


def encode_value(value: Any) -> ValuePayload:
    """Encode a codec-supported value; equal values give byte-equal payloads."""
    out = bytearray()
    _encode_raw(value, out)
    return ValuePayload(CODEC_RV1, bytes(out))


class _Cursor:
    """Sequential reader over one frame body; failures carry the byte offset."""

    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes, pos: int = 0) -> None:
        self.buf = buf
        self.pos = pos

    def take(self, count: int) -> bytes:
        end = self.pos + count
        if end > len(self.buf):
            raise ProtocolError(
                f"short body: need {count} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        chunk = self.buf[self.pos:end]
        self.pos = end
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def done(self) -> bool:
        return self.pos == len(self.buf)


def _decode_raw(cursor: _Cursor) -> Any:
    offset = cursor.pos
    tag = cursor.u8()
    if tag == TAG_INT:
        return _I64.unpack(cursor.take(8))[0]
    if tag == TAG_FLOAT:
        return _F64.unpack(cursor.take(8))[0]
    if tag == TAG_BOOL:
        flag = cursor.u8()
        if flag > 1:
            raise ProtocolError(f"bad boolean byte 0x{flag:02x} at offset {offset}")
        return flag == 1
    if tag == TAG_TEXT:
        length = cursor.u32()
        try:
            return cursor.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"bad UTF-8 in text at offset {offset}: {exc}") from exc
    if tag == TAG_BLOB:
        return cursor.take(cursor.u32())
    if tag == TAG_LIST:
        count = cursor.u32()
        items = []
        element_tag = None
        for _ in range(count):
            if cursor.pos >= len(cursor.buf):
                raise ProtocolError(f"truncated list at offset {cursor.pos}")
            found = cursor.buf[cursor.pos]
            if element_tag is None:
                element_tag = found
            elif found != element_tag:
                raise ProtocolError(f"heterogeneous list at offset {cursor.pos}")
            items.append(_decode_raw(cursor))
        return items
    raise ProtocolError(f"unknown value tag 0x{tag:02x} at offset {offset}")


def decode_value(payload: ValuePayload) -> Any:
    """Inverse of encode_value; rejects unknown codecs and malformed bytes."""
    if payload.codec_id != CODEC_RV1:
        raise ProtocolError(f"unknown codec id {payload.codec_id!r}")
    cursor = _Cursor(payload.data)
    value = _decode_raw(cursor)
    if not cursor.done():
        raise ProtocolError(
            f"{len(payload.data) - cursor.pos} trailing bytes after value"
        )
    return value


# --------------------------------------------------------------------------
# Message bodies
# --------------------------------------------------------------------------


def _put_name(text: str, out: bytearray) -> None:
    encoded = text.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise ProtocolError(f"name too long: {len(encoded)} bytes")
    out += _U16.pack(len(encoded))
    out += encoded


def _take_name(cursor: _Cursor) -> str:
    offset = cursor.pos
    length = cursor.u16()
    try:
        return cursor.take(length).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"bad UTF-8 in name at offset {offset}: {exc}") from exc


def _put_object_id(object_id: ObjectId, out: bytearray) -> None:
    out += _U64.pack(object_id.incarnation)
    out += _U64.pack(object_id.serial)


def _take_object_id(cursor: _Cursor) -> ObjectId:
    offset = cursor.pos
    incarnation = cursor.u64()
    serial = cursor.u64()
    try:
        return ObjectId(incarnation, serial)
    except ValueError as exc:
        raise ProtocolError(f"bad object id at offset {offset}: {exc}") from exc


def _put_descriptor(descriptor: RemoteRefDescriptor, out: bytearray) -> None:
    _encode_raw(str(descriptor.endpoint), out)
    _put_object_id(descriptor.id, out)


def _take_descriptor(cursor: _Cursor) -> RemoteRefDescriptor:
    offset = cursor.pos
    rendered = _decode_raw(cursor)
    if not isinstance(rendered, str):
        raise ProtocolError(f"descriptor endpoint is not text at offset {offset}")
    try:
        endpoint = EndpointAddr.parse(rendered)
    except ValueError as exc:
        raise ProtocolError(f"bad endpoint at offset {offset}: {exc}") from exc
    return RemoteRefDescriptor(endpoint, _take_object_id(cursor))


def _put_payload(payload: ValuePayload, out: bytearray) -> None:
    _put_name(payload.codec_id, out)
    out += _U32.pack(len(payload.data))
    out += payload.data


def _take_payload(cursor: _Cursor) -> ValuePayload:
    codec_id = _take_name(cursor)
    return ValuePayload(codec_id, cursor.take(cursor.u32()))


def _put_capture(capture: Capture, where: str, out: bytearray) -> None:
    if isinstance(capture, InlineValue):
        out.append(_CAPTURE_INLINE)
        try:
            _put_payload(encode_value(capture.value), out)
        except NotSerializableError as exc:
            raise NotSerializableError(f"{where}: {exc}") from exc
    elif isinstance(capture, RemoteRef):
        out.append(_CAPTURE_REF)
        _put_descriptor(capture.descriptor, out)
    else:
        raise ProtocolError(f"{where}: unknown capture kind {type(capture).__name__}")


def _take_capture(cursor: _Cursor, where: str) -> Capture:
    offset = cursor.pos
    kind = cursor.u8()
    if kind == _CAPTURE_INLINE:
        payload = _take_payload(cursor)
        try:
            return InlineValue(decode_value(payload))
        except ProtocolError as exc:
            raise ProtocolError(f"{where}: {exc}") from exc
    if kind == _CAPTURE_REF:
        return RemoteRef(_take_descriptor(cursor))
    raise ProtocolError(f"{where}: unknown capture kind 0x{kind:02x} at offset {offset}")


def _put_stage(stage: Stage, index: int, out: bytearray) -> None:
    _encode_raw(stage.fn_id, out)
    if len(stage.captures) > 0xFFFF:
        raise ProtocolError("too many captures in one stage")
    out += _U16.pack(len(stage.captures))
    for ci, capture in enumerate(stage.captures):
        _put_capture(capture, f"stage {index} capture {ci}", out)


def _take_stage(cursor: _Cursor, index: int) -> Stage:
    offset = cursor.pos
    fn_id = _decode_raw(cursor)
    if not isinstance(fn_id, str) or not fn_id:
        raise ProtocolError(f"stage {index}: bad fn id at offset {offset}")
    count = cursor.u16()
    captures = tuple(
        _take_capture(cursor, f"stage {index} capture {ci}") for ci in range(count)
    )
    return Stage(fn_id, captures)


def _put_pipeline(pipeline: ShippedFn, out: bytearray) -> None:
    if len(pipeline.stages) > 0xFFFF:
        raise ProtocolError("too many stages in one pipeline")
    out += _U16.pack(len(pipeline.stages))
    for index, stage in enumerate(pipeline.stages):
        _put_stage(stage, index, out)


def _take_pipeline(cursor: _Cursor) -> ShippedFn:
    count = cursor.u16()
    if count == 0:
        raise ProtocolError(f"empty pipeline at offset {cursor.pos - 2}")
    return ShippedFn(tuple(_take_stage(cursor, i) for i in range(count)))


# --------------------------------------------------------------------------
# Framing
# --------------------------------------------------------------------------


def encode_message(message: Message) -> bytes:
    """Encode one message as a complete frame (length prefix included)."""
    tag = _MESSAGE_TAGS.get(type(message))
    if tag is None:
        raise ProtocolError(f"not a protocol message: {type(message).__name__}")
    body = bytearray((tag,))
    if isinstance(message, Rebind):
        _put_name(message.name, body)
        _put_descriptor(message.descriptor, body)
    elif isinstance(message, Lookup):
        _put_name(message.name, body)
    elif isinstance(message, (Map, FlatMap)):
        _put_object_id(message.target, body)
        _put_pipeline(message.fn, body)
    elif isinstance(message, (Get, Stats)):
        _put_object_id(message.target, body)
    elif isinstance(message, Export):
        _put_payload(message.payload, body)
    elif isinstance(message, RespDescriptor):
        _put_descriptor(message.descriptor, body)
    elif isinstance(message, RespValue):
        _put_payload(message.payload, body)
    elif isinstance(message, RespStats):
        body += _U64.pack(message.serialization_count)
        body += _U64.pack(message.get_count)
    elif isinstance(message, RespError):
        body += _U8.pack(message.code)
        _put_name(message.text, body)
    # RespAck has no fields.
    if len(body) > MAX_BODY_LEN:
        raise ProtocolError(f"message body too large: {len(body)} bytes")
    return _U32.pack(len(body)) + bytes(body)


def decode_message(buf: bytes) -> tuple[Message, int] | None:
    """Decode one message from the front of a buffer.

    Returns (message, bytes consumed) so callers can keep trailing bytes for
    the next frame, or None when the buffer does not yet hold a complete
    frame. Malformed complete frames raise ProtocolError.
    """
    if len(buf) < 4:
        return None
    (body_len,) = _U32.unpack(buf[:4])
    end = 4 + body_len
    if len(buf) < end:
        return None
    if body_len == 0:
        raise ProtocolError("empty frame body")
    cursor = _Cursor(buf[4:end])
    tag = cursor.u8()
    message: Message
    if tag == _MESSAGE_TAGS[Rebind]:
        message = Rebind(_take_name(cursor), _take_descriptor(cursor))
    elif tag == _MESSAGE_TAGS[Lookup]:
        message = Lookup(_take_name(cursor))
    elif tag == _MESSAGE_TAGS[Map]:
        message = Map(_take_object_id(cursor), _take_pipeline(cursor))
    elif tag == _MESSAGE_TAGS[FlatMap]:
        message = FlatMap(_take_object_id(cursor), _take_pipeline(cursor))
    elif tag == _MESSAGE_TAGS[Get]:
        message = Get(_take_object_id(cursor))
    elif tag == _MESSAGE_TAGS[Export]:
        message = Export(_take_payload(cursor))
    elif tag == _MESSAGE_TAGS[Stats]:
        message = Stats(_take_object_id(cursor))
    elif tag == _MESSAGE_TAGS[RespDescriptor]:
        message = RespDescriptor(_take_descriptor(cursor))
    elif tag == _MESSAGE_TAGS[RespValue]:
        message = RespValue(_take_payload(cursor))
    elif tag == _MESSAGE_TAGS[RespStats]:
        message = RespStats(cursor.u64(), cursor.u64())
    elif tag == _MESSAGE_TAGS[RespAck]:
        message = RespAck()
    elif tag == _MESSAGE_TAGS[RespError]:
        message = RespError(cursor.u8(), _take_name(cursor))
    else:
        raise ProtocolError(f"unknown message tag 0x{tag:02x} at offset 4")
    if not cursor.done():
        raise ProtocolError(
            f"{len(cursor.buf) - cursor.pos} unconsumed bytes inside frame body"
        )
    return message, end
