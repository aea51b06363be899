"""A node: one peer that both hosts values and invokes operations on others.

Every node owns a host table, a function registry, and a transport. Handles
(`RemoteHandle`) are the client-side face of hosted values: composing with
``map``/``flat_map`` ships a named function to the value's home, while ``get``
forces the value back across the wire. A handle whose descriptor points at
this very node resolves to the local table entry instead — operations on it
run in-process with zero frames and zero serialization — unless locality
replacement is switched off, in which case even self-addressed handles take
the full network path (that switch exists so the difference is measurable).
"""
from __future__ import annotations

import random
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Optional, Union

from .errors import error_for_code
from .funcs import Token, default_registry
from .host import Host, HostConfig, TcpHostServer
from .model import EndpointAddr, HostedValue, HostTable, ObjectId, RemoteRefDescriptor
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
    decode_value,
    encode_value,
)
from .shipping import (
    Capture,
    FnRegistry,
    InlineValue,
    RemoteRef,
    ShippedFn,
    Stage,
)
from .transport import LoopbackNetwork, LoopbackTransport, TcpTransport, Transport


class RemoteHandle:
    """Client-side reference to a value hosted somewhere.

    ``_entry`` is the local table entry when the descriptor resolved to this
    node (locality replacement); operations on such a handle never touch the
    transport. ``_subject_ctx`` ties handles materialized inside a shipped
    function body back to the evaluation subject, so that re-shipping the
    subject as a capture is charged to the right serialization counter.
    """

    __slots__ = ("descriptor", "_node", "_entry", "_subject_ctx")

    def __init__(
        self,
        descriptor: RemoteRefDescriptor,
        node: "Node",
        entry: Optional[HostedValue] = None,
        subject_ctx: Optional["HostContext"] = None,
    ) -> None:
        self.descriptor = descriptor
        self._node = node
        self._entry = entry
        self._subject_ctx = subject_ctx

    @property
    def is_local(self) -> bool:
        return self._entry is not None

    def map(self, fn: Union[Stage, ShippedFn]) -> "RemoteHandle":
        return self._node.map(self, fn)

    def flat_map(self, fn: Union[Stage, ShippedFn]) -> "RemoteHandle":
        return self._node.flat_map(self, fn)

    def get(self) -> Any:
        return self._node.get(self)

    def stats(self) -> tuple[int, int]:
        return self._node.stats(self)

    def __repr__(self) -> str:
        return f"remote[endpoint={self.descriptor.endpoint} id={self.descriptor.id}]"


class HostContext:
    """What a shipped function body sees while it runs at the subject's home."""

    __slots__ = ("node", "subject_id", "subject_value")

    def __init__(self, node: "Node", subject_id: ObjectId, subject_value: Any) -> None:
        self.node = node
        self.subject_id = subject_id
        self.subject_value = subject_value

    def resolve_ref(self, descriptor: RemoteRefDescriptor) -> RemoteHandle:
        return self.node._materialize(descriptor, subject_ctx=self)

    def apply(self, value: Any) -> RemoteHandle:
        return self.node.apply(value)

    def new_token(self) -> Token:
        return self.node.new_token()


class Node:
    """One process-local peer: host table + registry + transport + server glue."""

    def __init__(
        self,
        endpoint: EndpointAddr,
        transport: Transport,
        *,
        registry: Optional[FnRegistry] = None,
        locality_replacement: bool = True,
        incarnation: Optional[int] = None,
        rng: Optional[random.Random] = None,
        async_workers: int = 8,
    ) -> None:
        if incarnation is None:
            incarnation = (rng.getrandbits(64) if rng is not None else random.getrandbits(64))
        self.endpoint = endpoint
        self.transport = transport
        self.registry = registry if registry is not None else default_registry()
        self.table = HostTable(endpoint, incarnation=incarnation)
        self.config = HostConfig(listen=endpoint, locality_replacement=locality_replacement)
        self.host = Host(self.table, self.registry, self._make_context, config=self.config)
        self._token_lock = threading.Lock()
        self._next_token_serial = 1
        self._async_workers = async_workers
        self._executor: Optional[ThreadPoolExecutor] = None
        self._executor_lock = threading.Lock()
        self._server: Optional[TcpHostServer] = None
        self._loopback: Optional[LoopbackNetwork] = None

    # -- construction -------------------------------------------------------

    @classmethod
    def tcp(
        cls,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        registry: Optional[FnRegistry] = None,
        locality_replacement: bool = True,
        incarnation: Optional[int] = None,
        rng: Optional[random.Random] = None,
        connect_timeout: float = 10.0,
        idle_timeout: Optional[float] = None,
    ) -> "Node":
        """Start a serving node on ``host:port`` (port 0 picks a free port)."""
        server = TcpHostServer(host, port, idle_timeout=idle_timeout)
        node = cls(
            server.endpoint,
            TcpTransport(connect_timeout=connect_timeout),
            registry=registry,
            locality_replacement=locality_replacement,
            incarnation=incarnation,
            rng=rng,
        )
        server.attach(node.host)
        server.start()
        node._server = server
        return node

    @classmethod
    def loopback(
        cls,
        network: LoopbackNetwork,
        *,
        registry: Optional[FnRegistry] = None,
        locality_replacement: bool = True,
        incarnation: Optional[int] = None,
        rng: Optional[random.Random] = None,
        delay: float = 0.0,
    ) -> "Node":
        """Join an in-process fabric; frames are real bytes, delivery is a call."""
        endpoint = network.allocate_endpoint()
        node = cls(
            endpoint,
            LoopbackTransport(network, delay=delay),
            registry=registry,
            locality_replacement=locality_replacement,
            incarnation=incarnation,
            rng=rng,
        )
        network.attach(endpoint, node.host.handle_frame)
        node._loopback = network
        return node

    def close(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server = None
        if self._loopback is not None:
            self._loopback.detach(self.endpoint)
            self._loopback = None
        self.transport.close()
        with self._executor_lock:
            if self._executor is not None:
                self._executor.shutdown(wait=False)
                self._executor = None

    def __enter__(self) -> "Node":
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()

    @property
    def locality_replacement(self) -> bool:
        return self.config.locality_replacement

    # -- internals ----------------------------------------------------------

    def _make_context(self, subject_id: ObjectId, subject_value: Any) -> HostContext:
        return HostContext(self, subject_id, subject_value)

    def _materialize(
        self,
        descriptor: RemoteRefDescriptor,
        subject_ctx: Optional[HostContext] = None,
    ) -> RemoteHandle:
        entry = None
        if self.locality_replacement:
            entry = self.table.resolve_local(descriptor)
        return RemoteHandle(descriptor, self, entry, subject_ctx)

    def _call(
        self,
        endpoint: EndpointAddr,
        message: Message,
        attribution: Optional[HostContext] = None,
    ) -> Message:
        reply = self.transport.call(endpoint, message)
        if attribution is not None:
            self._attribute_shipment(message, attribution)
        if isinstance(reply, RespError):
            raise error_for_code(reply.code, reply.text)
        return reply

    def _attribute_shipment(self, message: Message, ctx: HostContext) -> None:
        """Charge serializations of the evaluation subject once it actually shipped."""
        if not isinstance(message, (Map, FlatMap)):
            return
        for stage in message.fn.stages:
            for capture in stage.captures:
                if isinstance(capture, InlineValue) and capture.value is ctx.subject_value:
                    self.table.record_serialization(ctx.subject_id)

    @property
    def executor(self) -> ThreadPoolExecutor:
        with self._executor_lock:
            if self._executor is None:
                self._executor = ThreadPoolExecutor(
                    max_workers=self._async_workers,
                    thread_name_prefix=f"remotable-{self.endpoint.port}",
                )
            return self._executor

    # -- building blocks ----------------------------------------------------

    def new_token(self) -> Token:
        with self._token_lock:
            serial = self._next_token_serial
            self._next_token_serial += 1
        return Token(serial)

    def stage(self, fn_id: str, *captures: Any) -> Stage:
        """Build one pipeline stage; handles become references, the rest inlines.

        Arity is pre-checked when the function is registered here too, which
        catches typos before anything goes on the wire.
        """
        if fn_id in self.registry:
            expected = self.registry.arity(fn_id)
            if expected != len(captures):
                raise ValueError(
                    f"{fn_id} takes {expected} capture(s), got {len(captures)}"
                )
        converted: list[Capture] = []
        for capture in captures:
            if isinstance(capture, RemoteHandle):
                converted.append(RemoteRef(capture.descriptor))
            elif isinstance(capture, RemoteRefDescriptor):
                converted.append(RemoteRef(capture))
            elif isinstance(capture, (InlineValue, RemoteRef)):
                converted.append(capture)
            else:
                converted.append(InlineValue(capture))
        return Stage(fn_id, tuple(converted))

    # -- value placement ----------------------------------------------------

    def apply(self, value: Any) -> RemoteHandle:
        """Host a value here and hand back its (always-local) handle."""
        descriptor = self.table.export(value)
        return RemoteHandle(descriptor, self, self.table.entry(descriptor.id))

    def export_to(self, endpoint: EndpointAddr, value: Any) -> RemoteHandle:
        """Serialize a value and host it at another endpoint."""
        if endpoint == self.endpoint:
            return self.apply(value)
        reply = self._call(endpoint, Export(encode_value(value)))
        assert isinstance(reply, RespDescriptor)
        return self._materialize(reply.descriptor)

    def rebind(self, name: str, value: Any) -> RemoteHandle:
        """Bind a name (locally unless given a handle hosted elsewhere)."""
        if isinstance(value, RemoteHandle):
            handle = value
        else:
            handle = self.apply(value)
        descriptor = handle.descriptor
        if descriptor.endpoint == self.endpoint:
            self.host.handle_rebind(name, descriptor.id)
        else:
            reply = self._call(descriptor.endpoint, Rebind(name, descriptor))
            assert isinstance(reply, RespAck)
        return handle

    def lookup(self, endpoint: EndpointAddr, name: str) -> RemoteHandle:
        if endpoint == self.endpoint:
            return self._materialize(self.host.handle_lookup(name))
        reply = self._call(endpoint, Lookup(name))
        assert isinstance(reply, RespDescriptor)
        return self._materialize(reply.descriptor)

    # -- the remote operations ------------------------------------------------

    def map(self, handle: RemoteHandle, fn: Union[Stage, ShippedFn]) -> RemoteHandle:
        pipeline = ShippedFn.single(fn) if isinstance(fn, Stage) else fn
        if handle._entry is not None:
            descriptor = self.host.handle_map(handle.descriptor.id, pipeline)
            return self._materialize(descriptor)
        reply = self._call(
            handle.descriptor.endpoint,
            Map(handle.descriptor.id, pipeline),
            attribution=handle._subject_ctx,
        )
        assert isinstance(reply, RespDescriptor)
        return self._materialize(reply.descriptor)

    def flat_map(self, handle: RemoteHandle, fn: Union[Stage, ShippedFn]) -> RemoteHandle:
        pipeline = ShippedFn.single(fn) if isinstance(fn, Stage) else fn
        if handle._entry is not None:
            descriptor = self.host.handle_flatmap(handle.descriptor.id, pipeline)
            return self._materialize(descriptor)
        reply = self._call(
            handle.descriptor.endpoint,
            FlatMap(handle.descriptor.id, pipeline),
            attribution=handle._subject_ctx,
        )
        assert isinstance(reply, RespDescriptor)
        return self._materialize(reply.descriptor)

    def get(self, handle: RemoteHandle) -> Any:
        if handle._entry is not None:
            # co-located force: hand the value over, nothing crosses a codec
            return handle._entry.value
        reply = self._call(handle.descriptor.endpoint, Get(handle.descriptor.id))
        assert isinstance(reply, RespValue)
        return decode_value(reply.payload)

    def stats(self, handle: RemoteHandle) -> tuple[int, int]:
        if handle.descriptor.endpoint == self.endpoint:
            return self.table.stats(handle.descriptor.id)
        reply = self._call(handle.descriptor.endpoint, Stats(handle.descriptor.id))
        assert isinstance(reply, RespStats)
        return (reply.serialization_count, reply.get_count)
