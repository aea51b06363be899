import random
import time

import pytest

from remotable import (
    AsyncHandle,
    DeferredHandle,
    LoopbackNetwork,
    Node,
    NotSerializableError,
    Stage,
    UnknownFunctionError,
)

from helpers import random_ops, run_int_pipeline, stages_for_ops


# -- async ---------------------------------------------------------------------


def test_wrap_then_force(loop_pair):
    server, client = loop_pair
    handle = client.export_to(server.endpoint, 5)
    assert AsyncHandle.wrap(handle).force(10) == 5


def test_async_chain_computes_like_sync(loop_pair):
    server, client = loop_pair
    handle = client.export_to(server.endpoint, 5)
    result = (
        AsyncHandle.wrap(handle)
        .map(client.stage("inc"))
        .map(client.stage("mul", 3))
        .force(10)
    )
    assert result == 18


def test_async_flat_map(loop_pair):
    server, client = loop_pair
    handle = client.export_to(server.endpoint, 5)
    assert AsyncHandle.wrap(handle).flat_map(client.stage("pure")).force(10) == 5


def test_async_two_object_composition(loop_pair):
    server, client = loop_pair
    # tokens cannot be exported across the wire; mint them at their home
    seed = client.export_to(server.endpoint, 0)
    ra = seed.map(client.stage("new_token"))
    rb = seed.map(client.stage("new_token"))
    forced = (
        AsyncHandle.wrap(ra)
        .flat_map(client.stage("pair_equals_outer", rb))
        .force(10)
    )
    assert forced is False


def test_async_errors_materialize_at_force_not_composition(loop_pair):
    server, client = loop_pair
    handle = client.export_to(server.endpoint, 5)
    chained = AsyncHandle.wrap(handle).map(Stage("no_such_fn"))
    later = chained.map(client.stage("inc"))  # composing is still fine
    with pytest.raises(UnknownFunctionError):
        later.force(10)


def test_async_get_of_opaque_token_fails_in_the_future(loop_pair):
    server, client = loop_pair
    token = client.export_to(server.endpoint, 0).map(client.stage("new_token"))
    future = AsyncHandle.wrap(token).get()
    with pytest.raises(NotSerializableError):
        future.result(10)


def test_async_get_twice_agrees(loop_pair):
    server, client = loop_pair
    wrapped = AsyncHandle.wrap(client.export_to(server.endpoint, 8))
    assert wrapped.get().result(10) == wrapped.get().result(10) == 8


def test_async_equals_sync_on_random_pipelines(loop_pair):
    server, client = loop_pair
    rng = random.Random(3)
    for _ in range(30):
        x = rng.randint(-100, 100)
        ops = random_ops(rng, min_len=1)
        sync_handle = client.export_to(server.endpoint, x)
        async_handle = AsyncHandle.wrap(sync_handle)
        for stage in stages_for_ops(ops):
            sync_handle = sync_handle.map(stage)
            async_handle = async_handle.map(stage)
        assert async_handle.force(30) == sync_handle.get() == run_int_pipeline(ops, x)


def test_composition_does_not_wait_for_the_network():
    network = LoopbackNetwork()
    server = Node.loopback(network)
    client = Node.loopback(network, delay=0.15)
    try:
        server.rebind("n", 5)
        handle = client.lookup(server.endpoint, "n")  # pays the delay once, eagerly
        wrapped = AsyncHandle.wrap(handle)
        started = time.perf_counter()
        for _ in range(5):
            wrapped = wrapped.map(client.stage("inc"))
        future = wrapped.get()
        compose_elapsed = time.perf_counter() - started
        assert compose_elapsed < 0.05
        assert future.result(30) == 10
        assert time.perf_counter() - started >= 0.15
    finally:
        client.close()
        server.close()


# -- deferred -------------------------------------------------------------------


def test_deferred_wrap_and_map_cost_nothing(loop_pair):
    server, client = loop_pair
    handle = client.export_to(server.endpoint, 5)
    before = client.transport.request_frames
    deferred = DeferredHandle.wrap(handle).map(client.stage("inc")).map(client.stage("mul", 3))
    assert client.transport.request_frames == before
    assert [s.fn_id for s in deferred.pipeline.stages] == ["identity", "inc", "mul"]


def test_deferred_map_does_not_mutate_its_input(loop_pair):
    server, client = loop_pair
    base = DeferredHandle.wrap(client.export_to(server.endpoint, 5))
    longer = base.map(client.stage("inc"))
    assert len(base.pipeline.stages) == 1
    assert len(longer.pipeline.stages) == 2


def test_deferred_get_ships_once_and_forces_once(loop_pair):
    server, client = loop_pair
    handle = client.export_to(server.endpoint, 5)
    deferred = DeferredHandle.wrap(handle)
    for stage in (client.stage("inc"), client.stage("mul", 3)):
        deferred = deferred.map(stage)
    before = client.transport.request_frames
    assert deferred.get() == 18
    assert client.transport.request_frames - before == 2
    assert client.transport.frame_counts["Map"] >= 1


def test_deferred_identity_pipeline(loop_pair):
    server, client = loop_pair
    handle = client.export_to(server.endpoint, 7)
    before = client.transport.request_frames
    assert DeferredHandle.wrap(handle).get() == 7
    assert client.transport.request_frames - before == 2


def test_deferred_validation_happens_at_get(loop_pair):
    server, client = loop_pair
    handle = client.export_to(server.endpoint, 5)
    deferred = DeferredHandle.wrap(handle).map(Stage("no_such_fn"))  # no error yet
    with pytest.raises(UnknownFunctionError):
        deferred.get()


def test_deferred_flat_map_forces_eagerly(loop_pair):
    server, client = loop_pair
    handle = client.export_to(server.endpoint, 5)
    deferred = DeferredHandle.wrap(handle).map(client.stage("inc"))
    before = client.transport.request_frames
    continued = deferred.flat_map(
        lambda v: DeferredHandle.wrap(client.export_to(server.endpoint, v + 10))
    )
    assert client.transport.request_frames > before  # forcing happened at call time
    assert continued.get() == 16


def test_deferred_flat_map_needs_a_serializable_value(loop_pair):
    server, client = loop_pair
    token = client.export_to(server.endpoint, 0).map(client.stage("new_token"))
    deferred = DeferredHandle.wrap(token)
    with pytest.raises(NotSerializableError):
        deferred.flat_map(lambda v: deferred)


def test_deferred_equals_eager_on_random_pipelines(loop_pair):
    server, client = loop_pair
    rng = random.Random(5)
    for _ in range(30):
        x = rng.randint(-100, 100)
        ops = random_ops(rng)
        eager = client.export_to(server.endpoint, x)
        deferred = DeferredHandle.wrap(eager)
        for stage in stages_for_ops(ops):
            eager = eager.map(stage)
            deferred = deferred.map(stage)
        assert deferred.get() == eager.get() == run_int_pipeline(ops, x)


def test_deferred_over_local_handle_never_touches_the_wire(loop_pair):
    _, client = loop_pair
    deferred = DeferredHandle.wrap(client.apply(4)).map(client.stage("inc"))
    assert deferred.get() == 5
    assert client.transport.request_frames == 0
