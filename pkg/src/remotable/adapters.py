"""Two composition styles layered over the synchronous core.

``AsyncHandle`` makes composition non-blocking: each map/flat_map schedules
the underlying remote call on the node's worker pool and returns at once;
results and errors alike materialize when the caller forces. ``DeferredHandle``
goes the other way and does nothing at composition time: stages pile up in a
client-side pipeline and ship as one Map when the value is finally forced, so
an n-stage chain crosses the wire in two frames instead of n+1.
"""
from __future__ import annotations

from concurrent.futures import Future
from typing import Any, Callable, Optional, Union

from .node import Node, RemoteHandle
from .shipping import ShippedFn, Stage, compose


class AsyncHandle:
    """A remote handle that is still arriving.

    Wraps a future of a RemoteHandle. Composition chains through the node's
    executor via completion callbacks, so no caller ever waits on the network;
    only ``force`` (or resolving one of the returned futures) blocks.
    """

    __slots__ = ("_node", "_future")

    def __init__(self, node: Node, future: "Future[RemoteHandle]") -> None:
        self._node = node
        self._future = future

    @classmethod
    def wrap(cls, handle: RemoteHandle) -> "AsyncHandle":
        done: "Future[RemoteHandle]" = Future()
        done.set_result(handle)
        return cls(handle._node, done)

    def _chain(self, step: Callable[[RemoteHandle], Any]) -> "Future[Any]":
        nxt: "Future[Any]" = Future()

        def run(handle: RemoteHandle) -> None:
            try:
                nxt.set_result(step(handle))
            except BaseException as exc:
                nxt.set_exception(exc)

        def on_done(prev: "Future[RemoteHandle]") -> None:
            exc = prev.exception()
            if exc is not None:
                nxt.set_exception(exc)
                return
            try:
                self._node.executor.submit(run, prev.result())
            except RuntimeError as submit_exc:  # pool already shut down
                nxt.set_exception(submit_exc)

        self._future.add_done_callback(on_done)
        return nxt

    def map(self, fn: Union[Stage, ShippedFn]) -> "AsyncHandle":
        return AsyncHandle(self._node, self._chain(lambda h: self._node.map(h, fn)))

    def flat_map(self, fn: Union[Stage, ShippedFn]) -> "AsyncHandle":
        return AsyncHandle(self._node, self._chain(lambda h: self._node.flat_map(h, fn)))

    def get(self) -> "Future[Any]":
        """Begin forcing; the returned future carries the value or the error."""
        return self._chain(lambda h: self._node.get(h))

    def force(self, timeout: Optional[float] = None) -> Any:
        return self.get().result(timeout)

    def handle(self, timeout: Optional[float] = None) -> RemoteHandle:
        """Wait for the underlying remote handle itself (not its value)."""
        return self._future.result(timeout)


class DeferredHandle:
    """A remote handle plus a pipeline of not-yet-applied stages.

    map is pure bookkeeping — the pipeline grows, nothing ships. get applies
    the whole pipeline in a single Map request and forces the result with a
    single Get. flat_map is the odd one out: it must force first (that is its
    contract), then hands the forced value to a local continuation.
    """

    __slots__ = ("remote", "pipeline")

    def __init__(self, remote: RemoteHandle, pipeline: ShippedFn) -> None:
        self.remote = remote
        self.pipeline = pipeline

    @classmethod
    def wrap(cls, handle: RemoteHandle) -> "DeferredHandle":
        return cls(handle, ShippedFn.single(Stage("identity")))

    def map(self, stage: Stage) -> "DeferredHandle":
        return DeferredHandle(self.remote, compose(self.pipeline, stage))

    def get(self) -> Any:
        return self.remote.map(self.pipeline).get()

    def flat_map(self, fn: Callable[[Any], "DeferredHandle"]) -> "DeferredHandle":
        return fn(self.get())
