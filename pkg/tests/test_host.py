import socket
from concurrent.futures import ThreadPoolExecutor

import pytest

from remotable import (
    EndpointAddr,
    ErrorCode,
    LoopbackNetwork,
    Node,
    ObjectId,
    RemoteRefDescriptor,
    ShippedFn,
    Stage,
    decode_message,
    encode_message,
    encode_value,
)
from remotable.protocol import (
    Export,
    FlatMap,
    Get,
    Lookup,
    Map,
    Rebind,
    RespAck,
    RespDescriptor,
    RespError,
    RespStats,
    RespValue,
    Stats,
)
from remotable.transport import read_frame


@pytest.fixture
def node():
    n = Node.loopback(LoopbackNetwork())
    yield n
    n.close()


def _pipeline(*stages):
    return ShippedFn(tuple(stages))


def test_rebind_then_lookup_returns_home_descriptor(node):
    descriptor = node.table.export(5)
    assert node.host.dispatch(Rebind("n", RemoteRefDescriptor(node.endpoint, descriptor.id))) == RespAck()
    response = node.host.dispatch(Lookup("n"))
    assert response == RespDescriptor(descriptor)


def test_lookup_of_unbound_name(node):
    response = node.host.dispatch(Lookup("ghost"))
    assert isinstance(response, RespError)
    assert response.code == ErrorCode.NOT_FOUND


def test_rebind_of_unknown_object(node):
    foreign = RemoteRefDescriptor(node.endpoint, ObjectId(123, 9))
    response = node.host.dispatch(Rebind("n", foreign))
    assert response.code == ErrorCode.UNKNOWN_OBJECT


def test_map_runs_pipeline_and_rehosts_here(node):
    descriptor = node.table.export(5)
    response = node.host.dispatch(Map(descriptor.id, _pipeline(Stage("inc"), Stage("inc"))))
    assert isinstance(response, RespDescriptor)
    assert response.descriptor.endpoint == node.endpoint
    assert node.table.entry(response.descriptor.id).value == 7


def test_map_with_unknown_target(node):
    response = node.host.dispatch(Map(ObjectId(1, 1), _pipeline(Stage("inc"))))
    assert response.code == ErrorCode.UNKNOWN_OBJECT


def test_map_with_unknown_function_names_it(node):
    descriptor = node.table.export(5)
    response = node.host.dispatch(Map(descriptor.id, _pipeline(Stage("frobnicate"))))
    assert response.code == ErrorCode.UNKNOWN_FUNCTION
    assert "frobnicate" in response.text


def test_map_result_must_be_plain(node):
    descriptor = node.table.export(5)
    response = node.host.dispatch(Map(descriptor.id, _pipeline(Stage("pure"))))
    assert response.code == ErrorCode.CONTRACT_VIOLATION


def test_flatmap_result_must_be_remote(node):
    descriptor = node.table.export(5)
    response = node.host.dispatch(FlatMap(descriptor.id, _pipeline(Stage("inc"))))
    assert response.code == ErrorCode.CONTRACT_VIOLATION


def test_flatmap_passes_descriptor_through(node):
    somewhere = RemoteRefDescriptor(EndpointAddr("10.1.1.1", 7099), ObjectId(5, 5))
    descriptor = node.table.export(0)
    held = node._materialize(somewhere)
    response = node.host.dispatch(
        FlatMap(descriptor.id, _pipeline(node.stage("const_ref", held)))
    )
    assert response == RespDescriptor(somewhere)


def test_failing_body_reports_execution_error(node):
    descriptor = node.table.export("text")
    response = node.host.dispatch(Map(descriptor.id, _pipeline(Stage("inc"))))
    assert response.code == ErrorCode.EXECUTION_ERROR
    assert "inc" in response.text


def test_get_serializes_and_counts(node):
    descriptor = node.table.export(41)
    response = node.host.dispatch(Get(descriptor.id))
    assert response == RespValue(encode_value(41))
    assert node.table.stats(descriptor.id) == (1, 1)


def test_get_of_opaque_value(node):
    descriptor = node.table.export(node.new_token())
    response = node.host.dispatch(Get(descriptor.id))
    assert response.code == ErrorCode.NOT_SERIALIZABLE
    # the failed attempt is not billed as a serialization
    assert node.table.stats(descriptor.id) == (0, 0)


def test_export_hosts_decoded_value(node):
    response = node.host.dispatch(Export(encode_value([1, 2])))
    assert node.table.entry(response.descriptor.id).value == [1, 2]


def test_stats_roundtrip(node):
    descriptor = node.table.export(1)
    node.table.record_serialization(descriptor.id)
    assert node.host.dispatch(Stats(descriptor.id)) == RespStats(1, 0)


def test_response_variant_is_not_a_request(node):
    response = node.host.dispatch(RespAck())
    assert response.code == ErrorCode.PROTOCOL_ERROR


def test_handle_frame_rejects_garbage_with_error_frame(node):
    raw = node.host.handle_frame(b"\x00\x00\x00\x01\xff")
    decoded, _ = decode_message(raw)
    assert decoded.code == ErrorCode.PROTOCOL_ERROR


# -- the TCP front ------------------------------------------------------------


@pytest.fixture
def tcp_node():
    n = Node.tcp()
    yield n
    n.close()


def _raw_call(endpoint, payload):
    with socket.create_connection((endpoint.host, endpoint.port), timeout=5) as sock:
        sock.sendall(payload)
        return read_frame(sock)


def test_tcp_answers_framed_requests(tcp_node):
    descriptor = tcp_node.table.export(5)
    frame = _raw_call(tcp_node.endpoint, encode_message(Get(descriptor.id)))
    decoded, _ = decode_message(frame)
    assert decoded == RespValue(encode_value(5))


def test_tcp_pipelined_requests_answer_in_order(tcp_node):
    d1 = tcp_node.table.export(1)
    d2 = tcp_node.table.export(2)
    with socket.create_connection((tcp_node.endpoint.host, tcp_node.endpoint.port), timeout=5) as sock:
        sock.sendall(encode_message(Get(d1.id)) + encode_message(Get(d2.id)))
        first = read_frame(sock)
        second = read_frame(sock)
    assert decode_message(first)[0] == RespValue(encode_value(1))
    assert decode_message(second)[0] == RespValue(encode_value(2))


def test_tcp_garbage_gets_error_then_close_without_hurting_others(tcp_node):
    descriptor = tcp_node.table.export(9)
    frame = _raw_call(tcp_node.endpoint, b"\x00\x00\x00\x02\xff\xff")
    decoded, _ = decode_message(frame)
    assert isinstance(decoded, RespError)
    assert decoded.code == ErrorCode.PROTOCOL_ERROR
    # the host is still alive for everyone else
    frame = _raw_call(tcp_node.endpoint, encode_message(Get(descriptor.id)))
    decoded, _ = decode_message(frame)
    assert decoded == RespValue(encode_value(9))


def test_tcp_closes_connection_after_protocol_error(tcp_node):
    with socket.create_connection((tcp_node.endpoint.host, tcp_node.endpoint.port), timeout=5) as sock:
        sock.sendall(b"\x00\x00\x00\x01\xff")
        read_frame(sock)  # the error response
        sock.settimeout(5)
        assert sock.recv(1) == b""  # server hung up


def test_concurrent_clients_get_distinct_results(tcp_node):
    subject = tcp_node.table.export(100)

    def one_map(_):
        client = Node.tcp()
        try:
            handle = client._materialize(RemoteRefDescriptor(tcp_node.endpoint, subject.id))
            result = handle.map(client.stage("inc"))
            assert result.get() == 101
            return result.descriptor.id
        finally:
            client.close()

    with ThreadPoolExecutor(max_workers=6) as pool:
        ids = list(pool.map(one_map, range(12)))
    assert len(set(ids)) == 12
