"""Request/response transports between nodes.

A transport delivers one encoded request frame to an endpoint and returns the
endpoint's single response frame. Both implementations move real protocol
bytes, so the codec is exercised identically whether traffic stays in process
or crosses TCP.

The loopback transport routes frames between nodes registered in one
LoopbackNetwork, with an optional injected per-call delay for latency
experiments. Every transport counts its outbound request frames by message
variant, which is how the deferred-application economy is measured.
"""
from __future__ import annotations

import socket
import threading
import time
from collections import Counter
from typing import Callable

from .errors import ProtocolError, TransportError
from .model import EndpointAddr
from .protocol import Message, decode_message, encode_message


class Transport:
    """One logical call: ship a request frame, wait for the response frame."""

    def __init__(self) -> None:
        self.frame_counts: Counter[str] = Counter()
        self._count_lock = threading.Lock()

    def _count(self, message: Message) -> None:
        with self._count_lock:
            self.frame_counts[type(message).__name__] += 1

    @property
    def request_frames(self) -> int:
        with self._count_lock:
            return sum(self.frame_counts.values())

    def reset_frame_counts(self) -> None:
        with self._count_lock:
            self.frame_counts.clear()

    def call(self, endpoint: EndpointAddr, message: Message) -> Message:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LoopbackNetwork:
    """An in-process fabric of hosts addressed by synthetic endpoints."""

    def __init__(self, host_label: str = "loop") -> None:
        self._label = host_label
        self._dispatchers: dict[EndpointAddr, Callable[[bytes], bytes]] = {}
        self._next_port = 1
        self._lock = threading.Lock()

    def allocate_endpoint(self) -> EndpointAddr:
        with self._lock:
            port = self._next_port
            self._next_port += 1
        return EndpointAddr(self._label, port)

    def attach(self, endpoint: EndpointAddr, dispatcher: Callable[[bytes], bytes]) -> None:
        with self._lock:
            if endpoint in self._dispatchers:
                raise ValueError(f"endpoint already attached: {endpoint}")
            self._dispatchers[endpoint] = dispatcher

    def detach(self, endpoint: EndpointAddr) -> None:
        with self._lock:
            self._dispatchers.pop(endpoint, None)

    def deliver(self, endpoint: EndpointAddr, frame: bytes) -> bytes:
        with self._lock:
            dispatcher = self._dispatchers.get(endpoint)
        if dispatcher is None:
            raise TransportError(f"no host attached at {endpoint}")
        return dispatcher(frame)


class LoopbackTransport(Transport):
    """Frame delivery inside one process, silently re-entrant and deadlock-free."""

    def __init__(self, network: LoopbackNetwork, delay: float = 0.0) -> None:
        super().__init__()
        self.network = network
        self.delay = delay

    def call(self, endpoint: EndpointAddr, message: Message) -> Message:
        frame = encode_message(message)
        self._count(message)
        if self.delay > 0:
            time.sleep(self.delay)
        response = self.network.deliver(endpoint, frame)
        decoded = decode_message(response)
        if decoded is None:
            raise ProtocolError("incomplete response frame from loopback host")
        reply, consumed = decoded
        if consumed != len(response):
            raise ProtocolError("trailing bytes after loopback response frame")
        return reply


def recv_exact(sock: socket.socket, count: int) -> bytes:
    chunks = bytearray()
    while len(chunks) < count:
        chunk = sock.recv(count - len(chunks))
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks += chunk
    return bytes(chunks)


def read_frame(sock: socket.socket) -> bytes:
    header = recv_exact(sock, 4)
    body_len = int.from_bytes(header, "big")
    return header + recv_exact(sock, body_len)


class TcpTransport(Transport):
    """Pooled TCP connections, one per endpoint, requests serialized per connection."""

    def __init__(self, connect_timeout: float = 10.0) -> None:
        super().__init__()
        self._connect_timeout = connect_timeout
        self._connections: dict[EndpointAddr, socket.socket] = {}
        self._locks: dict[EndpointAddr, threading.Lock] = {}
        self._pool_lock = threading.Lock()

    def _lock_for(self, endpoint: EndpointAddr) -> threading.Lock:
        with self._pool_lock:
            lock = self._locks.get(endpoint)
            if lock is None:
                lock = self._locks[endpoint] = threading.Lock()
            return lock

    def _connection(self, endpoint: EndpointAddr) -> socket.socket:
        conn = self._connections.get(endpoint)
        if conn is not None:
            return conn
        try:
            conn = socket.create_connection(
                (endpoint.host, endpoint.port), timeout=self._connect_timeout
            )
        except OSError as exc:
            raise TransportError(f"cannot connect to {endpoint}: {exc}") from exc
        conn.settimeout(None)
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._connections[endpoint] = conn
        return conn

    def _drop(self, endpoint: EndpointAddr) -> None:
        conn = self._connections.pop(endpoint, None)
        if conn is not None:
            try:
                conn.close()
            except OSError:
                pass

    def call(self, endpoint: EndpointAddr, message: Message) -> Message:
        frame = encode_message(message)
        with self._lock_for(endpoint):
            conn = self._connection(endpoint)
            self._count(message)
            try:
                conn.sendall(frame)
                response = read_frame(conn)
            except (OSError, TransportError) as exc:
                self._drop(endpoint)
                if isinstance(exc, TransportError):
                    raise
                raise TransportError(f"call to {endpoint} failed: {exc}") from exc
        decoded = decode_message(response)
        if decoded is None:
            raise ProtocolError("incomplete response frame")
        reply, consumed = decoded
        if consumed != len(response):
            raise ProtocolError("trailing bytes after response frame")
        return reply

    def close(self) -> None:
        with self._pool_lock:
            endpoints = list(self._connections)
        for endpoint in endpoints:
            self._drop(endpoint)
