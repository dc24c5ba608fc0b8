import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from herosim.protocol import messages
from herosim.protocol.budget import (
    REFERENCE_TOPICS,
    BandwidthBudget,
    RegistryError,
    TopicSpec,
    fleet_capacity,
    load_registry,
    mbps_to_kbps,
    per_robot_total,
    registry_from_config,
    topic_bandwidth,
)
from herosim.protocol.framing import FRAME_OVERHEAD, FrameDecoder, FrameTooLargeError, decode_frame, encode_frame
from herosim.scenario import resolve_path


def _frame_by_hand(topic, payload):
    """Independent byte-by-byte construction of a frame."""
    n = len(payload)
    lo, hi = n % 256, n // 256
    tlo, thi = topic % 256, topic // 256
    out = [0xFF, 0xFE, lo, hi, 255 - (lo + hi) % 256, tlo, thi, *payload]
    out.append(255 - (tlo + thi + sum(payload)) % 256)
    return bytes(out)


def test_encode_examples():
    assert encode_frame(0, b"") == bytes.fromhex("FFFE0000FF0000FF")
    assert encode_frame(1, b"\x01")[-1] == 253
    assert len(encode_frame(7, b"x" * 40)) == 40 + FRAME_OVERHEAD


@given(st.integers(0, 0xFFFF), st.binary(max_size=600))
def test_encode_matches_hand_construction(topic, payload):
    assert encode_frame(topic, payload) == _frame_by_hand(topic, payload)


def test_encode_limits():
    with pytest.raises(FrameTooLargeError):
        encode_frame(1, bytes(0x10000))
    with pytest.raises(ValueError):
        encode_frame(0x10000, b"")
    big = bytes(range(256)) * 255 + bytes(255)
    assert len(big) == 0xFFFF
    assert decode_frame(encode_frame(3, big)) == (3, big)


def test_round_trip_ten_thousand_seeded_payloads():
    rng = np.random.default_rng(7)
    decoder = FrameDecoder()
    for _ in range(10_000):
        topic = int(rng.integers(0, 0x10000))
        payload = rng.bytes(int(rng.integers(0, 300)))
        assert decoder.feed(encode_frame(topic, payload)) == [(topic, payload)]
    assert decoder.stats.corrupted == 0 and decoder.pending == 0


no_sync = st.lists(st.integers(0, 0xFE), max_size=50).map(bytes)


@given(no_sync, st.lists(st.tuples(st.integers(1, 500), st.binary(max_size=80)), max_size=8), st.integers(1, 17))
def test_garbage_prefix_and_arbitrary_chunking(garbage, frames, chunk):
    stream = garbage + b"".join(encode_frame(t, p) for t, p in frames)
    decoder = FrameDecoder()
    got = []
    for i in range(0, len(stream), chunk):
        got += decoder.feed(stream[i : i + chunk])
    assert got == frames
    assert decoder.pending == 0
    assert decoder.stats.skipped_bytes == len(garbage)


def test_truncated_stream_needs_more_bytes():
    frame = encode_frame(4, b"hello")
    assert decode_frame(frame[:-1]) is None
    decoder = FrameDecoder()
    assert decoder.feed(frame[:5]) == []
    assert decoder.pending == 5
    assert decoder.feed(frame[5:]) == [(4, b"hello")]


def test_leading_garbage_skipped():
    decoder = FrameDecoder()
    assert decoder.feed(b"\x13\x37\xff\x00" + encode_frame(2, b"ok")) == [(2, b"ok")]
    assert decoder.stats.skipped_bytes == 4


def test_exhaustive_single_byte_corruption():
    reference = encode_frame(5, messages.pack_cmd_vel(0.0675, -0.5))
    follower = encode_frame(9, b"after")
    cases = 0
    for pos in range(len(reference)):
        for value in range(256):
            if value == reference[pos]:
                continue
            bad = bytearray(reference)
            bad[pos] = value
            decoder = FrameDecoder()
            assert decoder.feed(bytes(bad) + follower) == [(9, b"after")], (pos, value)
            cases += 1
    assert cases == len(reference) * 255


def test_corruption_is_counted():
    bad = bytearray(encode_frame(5, b"abc"))
    bad[8] ^= 0x40
    decoder = FrameDecoder()
    assert decoder.feed(bytes(bad)) == []
    assert decoder.stats.corrupted == 1


def test_reference_table_bandwidth():
    led = next(t for t in REFERENCE_TOPICS if t.name == "/led")
    cmd = next(t for t in REFERENCE_TOPICS if t.name == "/cmd_vel")
    assert topic_bandwidth(led) == 0.32
    assert topic_bandwidth(cmd) == 0.96
    assert topic_bandwidth(TopicSpec("/idle", 9, 0.1, nominal_rate=0.0)) == 0.0
    assert per_robot_total(REFERENCE_TOPICS) == 23.44


def test_fleet_capacity():
    budget = BandwidthBudget()
    assert budget.link_capacity == 19200.0 == mbps_to_kbps(150)
    assert fleet_capacity(23.44) == 819
    assert fleet_capacity(budget.link_capacity) == 1
    assert fleet_capacity(2 * budget.link_capacity) == 0
    with pytest.raises(ValueError):
        fleet_capacity(0.0)


def test_packet_size_accounting():
    assert BandwidthBudget().packet_size_kb(16) == pytest.approx(44 / 1024)
    with pytest.raises(ValueError):
        BandwidthBudget(transport_overhead=-1)


def test_registry_validation():
    good = [{"name": "/a", "topic_id": 1, "packet_size_kb": 0.1}]
    assert registry_from_config(good)[0].nominal_rate == 20.0
    with pytest.raises(RegistryError, match="duplicate"):
        registry_from_config(good * 2)
    with pytest.raises(RegistryError, match="missing"):
        registry_from_config([{"name": "/a", "topic_id": 1}])
    with pytest.raises(RegistryError):
        registry_from_config([{"name": "/a", "topic_id": 1, "packet_size_kb": 0}])
    with pytest.raises(RegistryError):
        registry_from_config([{"name": "/a", "topic_id": 1, "packet_size_kb": 0.1, "direction": "both"}])


def test_bundled_registry_matches_reference_table():
    specs = load_registry(resolve_path("topics_reference"))
    assert specs == list(REFERENCE_TOPICS)


def test_message_schemas_round_trip():
    assert messages.CMD_VEL.size == 16 and messages.LASER.size == 48
    assert messages.ODOM.size == 48 and messages.LED.size == 6 and messages.IMU.size == 24
    assert messages.unpack_cmd_vel(messages.pack_cmd_vel(0.1, -2.0)) == (0.1, -2.0)
    ranges, raw = messages.unpack_laser(messages.pack_laser([0.5] * 8, list(range(8))))
    assert ranges == (0.5,) * 8 and raw == tuple(range(8))
    assert messages.unpack_odom(messages.pack_odom((1.0, 2.0, 3.0), (4.0, 5.0, 6.0))) == ((1.0, 2.0, 3.0), (4.0, 5.0, 6.0))
    assert messages.unpack_imu(messages.pack_imu((0.5, 0.0, 9.75), (0.0, 0.0, 0.25))) == ((0.5, 0.0, 9.75), (0.0, 0.0, 0.25))
    assert messages.pack_led((255, 0, 0), (0, 0, 255)) == bytes((255, 0, 0, 0, 0, 255))
