import socket
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairmpc.errors import BadTag, PeerAborted, PeerDesync, TransportError
from fairmpc.transport import Frame, LocalTransport, SocketTransport, Tag, parse_endpoint

ROUNDS = 10_000


def both(fn1, fn2):
    out, err = [None, None], [None, None]

    def go(i, fn):
        try:
            out[i] = fn()
        except Exception as exc:
            err[i] = exc
    th = [threading.Thread(target=go, args=(i, f)) for i, f in enumerate((fn1, fn2))]
    for t in th:
        t.start()
    for t in th:
        t.join(60)
    return out, err


def ping(t, party, rounds=ROUNDS):
    got = []
    for k in range(rounds):
        got.append(t.exchange(Tag.OPEN, [k, party]).payload.tolist())
    return got


def socket_pair(record=True):
    ports = []
    ready = threading.Event()
    box = {}

    def serve():
        box["srv"] = SocketTransport.listen("127.0.0.1", 0, timeout=30, record=record,
                                           ready=lambda p: (ports.append(p), ready.set()))
    th = threading.Thread(target=serve)
    th.start()
    ready.wait(10)
    cli = SocketTransport.connect("127.0.0.1", ports[0], timeout=30, retries=5, record=record)
    th.join(10)
    return box["srv"], cli


@given(st.sampled_from(list(Tag)), st.integers(0, 2**40), st.lists(st.integers(0, 2**64 - 1), max_size=8))
def test_frame_roundtrip(tag, step, payload):
    f = Frame(tag, step, np.array(payload, dtype=np.uint64))
    raw = f.to_bytes()
    assert int.from_bytes(raw[:4], "little") == len(raw) - 4
    back = Frame.from_body(raw[4:])
    assert back.tag == tag and back.step == step and back.payload.tolist() == payload


def test_malformed_frames():
    with pytest.raises(BadTag):
        Frame.from_body(b"\x01")
    with pytest.raises(BadTag):
        Frame.from_body(bytes([77]) + bytes(8))


def test_symmetric_exchange():
    a, b = LocalTransport.pair(timeout=5)
    (ra, rb), err = both(lambda: a.exchange(Tag.OPEN, [1]), lambda: b.exchange(Tag.OPEN, [2]))
    assert err == [None, None]
    assert ra.payload.tolist() == [2] and rb.payload.tolist() == [1]


def test_local_and_tcp_transcripts_identical():
    la, lb = LocalTransport.pair(timeout=30, record=True)
    (l1, l2), err = both(lambda: ping(la, 1), lambda: ping(lb, 2))
    assert err == [None, None]
    sa, sb = socket_pair()
    (s1, s2), err = both(lambda: ping(sa, 1), lambda: ping(sb, 2))
    assert err == [None, None]
    assert l1 == s1 and l2 == s2
    assert la.sent == sa.sent and la.received == sa.received
    assert lb.sent == sb.sent
    assert la.transcript_digest() == sa.transcript_digest()
    assert lb.transcript_digest() == sb.transcript_digest()
    sa.close()
    sb.close()


def test_step_desync_aborts_both():
    a, b = LocalTransport.pair(timeout=5)
    b.step = 3
    _, err = both(lambda: a.exchange(Tag.OPEN, [1]), lambda: b.exchange(Tag.OPEN, [2]))
    assert isinstance(err[0], PeerDesync) and isinstance(err[1], PeerDesync)


def test_unexpected_tag():
    a, b = LocalTransport.pair(timeout=5)
    _, err = both(lambda: a.exchange(Tag.OPEN, [1]), lambda: b.exchange(Tag.RESULT, [2]))
    assert isinstance(err[0], BadTag) and isinstance(err[1], BadTag)


def test_abort_carries_code():
    a, b = LocalTransport.pair(timeout=5)
    a.abort(6)
    with pytest.raises(PeerAborted) as info:
        b.exchange(Tag.OPEN, [0])
    assert info.value.code == 6


def test_timeout_and_connect_failure():
    a, _ = LocalTransport.pair(timeout=0.05)
    with pytest.raises(TransportError):
        a.exchange(Tag.OPEN, [0])
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(TransportError):
        SocketTransport.connect("127.0.0.1", port, timeout=1)


def test_connection_loss():
    sa, sb = socket_pair(record=False)
    sb.close()
    with pytest.raises(TransportError):
        sa.exchange(Tag.OPEN, [1])
    sa.close()


def test_parse_endpoint():
    assert parse_endpoint("127.0.0.1:9000") == ("127.0.0.1", 9000)
    with pytest.raises(ValueError):
        parse_endpoint("nope")
