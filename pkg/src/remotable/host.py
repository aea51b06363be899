"""The serving side: dispatch protocol requests against a host table.

A Host owns the name registry (rebind/lookup bindings) and turns each request
variant into the matching table or evaluation operation. It is transport
agnostic: the TCP server below and the in-process loopback fabric both feed it
one decoded request and relay back the single response.

Request handling rules: every request gets exactly one response; request-level
failures answer RespError and leave the connection usable; protocol-level
failures (garbage bytes, unknown tags) answer RespError and then drop that
connection, without disturbing other clients.
"""
from __future__ import annotations

import socketserver
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import (
    ContractViolationError,
    ErrorCode,
    NotFoundError,
    ProtocolError,
    RemoteError,
)
from .model import EndpointAddr, HostTable, ObjectId, RemoteRefDescriptor
from .protocol import (
    Export,
    FlatMap,
    Get,
    Lookup,
    Map,
    Message,
    Rebind,
    RespAck,
    RespDescriptor,
    RespError,
    RespStats,
    RespValue,
    Stats,
    ValuePayload,
    decode_message,
    decode_value,
    encode_message,
    encode_value,
)
from .shipping import FnRegistry, PlainValue, RemoteValue, ShippedFn, evaluate


@dataclass
class HostConfig:
    """Serving configuration: where to listen and what to pre-bind."""

    listen: EndpointAddr
    locality_replacement: bool = True
    registry_bindings: dict[str, ObjectId] = field(default_factory=dict)
    idle_timeout: Optional[float] = None


class Host:
    """Executes requests against one host table and function registry.

    ``context_factory(subject_id, subject_value)`` supplies the evaluation
    context handed to shipped function bodies; it is the hook through which
    nested remote calls and locality replacement reach the client API. The
    name registry lives in ``config.registry_bindings``.
    """

    def __init__(
        self,
        table: HostTable,
        registry: FnRegistry,
        context_factory: Callable[[ObjectId, Any], Any],
        config: Optional[HostConfig] = None,
    ) -> None:
        self.table = table
        self.registry = registry
        self.config = config if config is not None else HostConfig(listen=table.self_endpoint)
        self._context_factory = context_factory
        self._bindings = self.config.registry_bindings
        self._bind_lock = threading.Lock()

    # -- request handlers ---------------------------------------------------

    def handle_map(self, target: ObjectId, fn: ShippedFn) -> RemoteRefDescriptor:
        """Apply a shipped function to the target's value and re-host the result here.

        The subject is handed to the function without serialization; the plain
        result is exported at this host, so a map result always lives at the
        target's home endpoint.
        """
        entry = self.table.require(target)
        ctx = self._context_factory(target, entry.value)
        result = evaluate(self.registry, fn, entry.value, ctx)
        if not isinstance(result, PlainValue):
            raise ContractViolationError(
                "map function must yield a plain value, got a remote reference"
            )
        return self.table.export(result.value)

    def handle_flatmap(self, target: ObjectId, fn: ShippedFn) -> RemoteRefDescriptor:
        """Apply a shipped function that itself places its result somewhere.

        The returned descriptor is passed through as-is; the result stays
        hosted wherever the function put it, possibly a third host.
        """
        entry = self.table.require(target)
        ctx = self._context_factory(target, entry.value)
        result = evaluate(self.registry, fn, entry.value, ctx)
        if not isinstance(result, RemoteValue):
            raise ContractViolationError(
                "flat_map function must yield a remote reference, got a plain value"
            )
        return result.descriptor

    def handle_get(self, target: ObjectId) -> ValuePayload:
        """Produce the target value's bytes; the one place forcing requires a codec."""
        entry = self.table.require(target)
        payload = encode_value(entry.value)
        self.table.record_serialization(target)
        self.table.record_get(target)
        return payload

    def handle_rebind(self, name: str, object_id: ObjectId) -> None:
        self.table.require(object_id)
        with self._bind_lock:
            self._bindings[name] = object_id

    def handle_lookup(self, name: str) -> RemoteRefDescriptor:
        with self._bind_lock:
            object_id = self._bindings.get(name)
        if object_id is None:
            raise NotFoundError(f"no binding named {name!r}")
        return RemoteRefDescriptor(self.table.self_endpoint, object_id)

    def handle_export(self, payload: ValuePayload) -> RemoteRefDescriptor:
        return self.table.export(decode_value(payload))

    def handle_stats(self, target: ObjectId) -> tuple[int, int]:
        return self.table.stats(target)

    # -- dispatch -----------------------------------------------------------

    def dispatch(self, message: Message) -> Message:
        """Run one request and build its response. Never raises."""
        try:
            if isinstance(message, Rebind):
                self.handle_rebind(message.name, message.descriptor.id)
                return RespAck()
            if isinstance(message, Lookup):
                return RespDescriptor(self.handle_lookup(message.name))
            if isinstance(message, Map):
                return RespDescriptor(self.handle_map(message.target, message.fn))
            if isinstance(message, FlatMap):
                return RespDescriptor(self.handle_flatmap(message.target, message.fn))
            if isinstance(message, Get):
                return RespValue(self.handle_get(message.target))
            if isinstance(message, Export):
                return RespDescriptor(self.handle_export(message.payload))
            if isinstance(message, Stats):
                serialization_count, get_count = self.handle_stats(message.target)
                return RespStats(serialization_count, get_count)
            return RespError(
                int(ErrorCode.PROTOCOL_ERROR),
                f"{type(message).__name__} is not a request",
            )
        except RemoteError as exc:
            return RespError(int(exc.code), str(exc))
        except Exception as exc:  # defensive: a request must never kill the host
            return RespError(int(ErrorCode.EXECUTION_ERROR), f"internal error: {exc}")

    def handle_frame(self, frame: bytes) -> bytes:
        """Decode one complete request frame and return the response frame."""
        try:
            decoded = decode_message(frame)
            if decoded is None or decoded[1] != len(frame):
                raise ProtocolError("frame length does not match its declared body")
            response = self.dispatch(decoded[0])
        except ProtocolError as exc:
            response = RespError(int(ErrorCode.PROTOCOL_ERROR), str(exc))
        return encode_message(response)


class _HostTCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    remotable_host: Optional[Host] = None
    idle_timeout: Optional[float] = None


class _ConnectionHandler(socketserver.BaseRequestHandler):
    """Per-connection loop: frames in, responses out, FIFO per connection."""

    def handle(self) -> None:
        server: _HostTCPServer = self.server  # type: ignore[assignment]
        conn = self.request
        if server.idle_timeout is not None:
            conn.settimeout(server.idle_timeout)
        buffer = b""
        while True:
            try:
                chunk = conn.recv(65536)
            except (TimeoutError, OSError):
                return
            if not chunk:
                return
            buffer += chunk
            while True:
                host = server.remotable_host
                if host is None:
                    return
                try:
                    decoded = decode_message(buffer)
                except ProtocolError as exc:
                    self._send(RespError(int(ErrorCode.PROTOCOL_ERROR), str(exc)))
                    return
                if decoded is None:
                    break
                message, consumed = decoded
                buffer = buffer[consumed:]
                response = host.dispatch(message)
                if not self._send(response):
                    return
                if isinstance(response, RespError) and response.code == int(
                    ErrorCode.PROTOCOL_ERROR
                ):
                    return

    def _send(self, response: Message) -> bool:
        try:
            self.request.sendall(encode_message(response))
            return True
        except OSError:
            return False


class TcpHostServer:
    """Listening TCP front of one Host; binds eagerly, serves on a daemon thread.

    Binding to port 0 picks an ephemeral port; ``endpoint`` reports the actual
    address, which is what goes into the host table and all descriptors.
    """

    def __init__(self, bind_host: str, bind_port: int, idle_timeout: Optional[float] = None):
        self._server = _HostTCPServer((bind_host, bind_port), _ConnectionHandler)
        self._server.idle_timeout = idle_timeout
        actual_host, actual_port = self._server.server_address[:2]
        self.endpoint = EndpointAddr(bind_host if bind_host else str(actual_host), actual_port)
        self._thread: Optional[threading.Thread] = None

    def attach(self, host: Host) -> None:
        self._server.remotable_host = host

    def start(self) -> None:
        if self._server.remotable_host is None:
            raise RuntimeError("no host attached to server")
        self._thread = threading.Thread(
            target=self._server.serve_forever,
            name=f"remotable-serve-{self.endpoint}",
            daemon=True,
        )
        self._thread.start()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
