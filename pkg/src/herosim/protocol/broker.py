"""Publish/subscribe broker over framed byte streams.

Topic id 0 is the control channel. Control payloads start with an opcode
byte followed by a little-endian u16 topic id and a UTF-8 topic name (or
error text)::

    0x01 ADVERTISE | 0x02 SUBSCRIBE | 0x03 ERROR | 0x04 ACK

Every other topic id carries message payloads. The broker relays each
data frame to all current subscribers of that topic.
"""
from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
from collections import deque
from typing import Callable

from .framing import FrameDecoder, encode_frame

log = logging.getLogger(__name__)

CONTROL_TOPIC = 0
OP_ADVERTISE = 0x01
OP_SUBSCRIBE = 0x02
OP_ERROR = 0x03
OP_ACK = 0x04

_U16 = struct.Struct("<H")


class UnknownTopicError(KeyError):
    pass


class TopicConflictError(ValueError):
    pass


def control_payload(op: int, topic_id: int, text: str = "") -> bytes:
    return bytes((op,)) + _U16.pack(topic_id) + text.encode("utf-8")


def parse_control(payload: bytes) -> tuple[int, int, str]:
    if len(payload) < 3:
        raise ValueError("short control payload")
    return payload[0], _U16.unpack_from(payload, 1)[0], payload[3:].decode("utf-8", errors="replace")


class Subscription:
    """Bounded per-subscriber queue; the oldest message is dropped on overflow."""

    def __init__(self, broker: "Broker", topic: str, maxlen: int = 1024, callback: Callable[[str, bytes], None] | None = None):
        self.broker = broker
        self.topic = topic
        self.callback = callback
        self.queue: deque[bytes] = deque(maxlen=maxlen)
        self.received = 0
        self.dropped = 0
        self.closed = False
        self._ready = threading.Condition(threading.Lock())

    def _deliver(self, payload: bytes) -> None:
        if self.callback is not None:
            self.callback(self.topic, payload)
            self.received += 1
            return
        with self._ready:
            if len(self.queue) == self.queue.maxlen:
                self.dropped += 1
            self.queue.append(payload)
            self.received += 1
            self._ready.notify()

    def drain(self) -> list[bytes]:
        with self._ready:
            items = list(self.queue)
            self.queue.clear()
        return items

    def get(self, timeout: float | None = None) -> bytes | None:
        with self._ready:
            if not self.queue:
                self._ready.wait(timeout)
            return self.queue.popleft() if self.queue else None

    def close(self) -> None:
        self.broker.unsubscribe(self)


class Broker:
    """Thread-safe topic registry and fan-out."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._ids: dict[str, int] = {}
        self._names: dict[int, str] = {}
        self._subs: dict[str, list[Subscription]] = {}
        self.published: dict[str, int] = {}

    def advertise(self, name: str, topic_id: int | None = None) -> int:
        with self._lock:
            if name in self._ids:
                if topic_id is not None and self._ids[name] != topic_id:
                    raise TopicConflictError(f"{name} already advertised with id {self._ids[name]}")
                return self._ids[name]
            if topic_id is None:
                topic_id = max(self._names, default=CONTROL_TOPIC) + 1
            if topic_id == CONTROL_TOPIC or topic_id in self._names:
                raise TopicConflictError(f"topic id {topic_id} is reserved or taken")
            self._ids[name] = topic_id
            self._names[topic_id] = name
            self._subs.setdefault(name, [])
            self.published.setdefault(name, 0)
            return topic_id

    def topic_id(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise UnknownTopicError(name) from None

    def topic_name(self, topic_id: int) -> str:
        try:
            return self._names[topic_id]
        except KeyError:
            raise UnknownTopicError(topic_id) from None

    def subscribe(self, name: str, maxlen: int = 1024, callback: Callable[[str, bytes], None] | None = None) -> Subscription:
        sub = Subscription(self, name, maxlen, callback)
        with self._lock:
            self._subs.setdefault(name, []).append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            subs = self._subs.get(sub.topic, [])
            if sub in subs:
                subs.remove(sub)
            sub.closed = True

    def subscribers(self, name: str) -> int:
        return len(self._subs.get(name, ()))

    def publish(self, topic: str | int, payload: bytes) -> int:
        """Deliver ``payload`` to every subscriber; returns the delivery count.

        A subscriber whose delivery raises is treated as disconnected and
        removed without affecting the others.
        """
        with self._lock:
            name = self.topic_name(topic) if isinstance(topic, int) else topic
            if name not in self._ids:
                raise UnknownTopicError(name)
            self.published[name] += 1
            delivered = 0
            for sub in list(self._subs[name]):
                try:
                    sub._deliver(payload)
                    delivered += 1
                except Exception:
                    log.warning("dropping subscriber on %s after delivery failure", name, exc_info=True)
                    self.unsubscribe(sub)
            return delivered


class BrokerSession:
    """Broker side of one byte-stream connection.

    ``send`` writes outbound bytes to the peer; it must not block the
    broker (queue or buffer as needed).
    """

    def __init__(self, broker: Broker, send: Callable[[bytes], None]):
        self.broker = broker
        self.send = send
        self.decoder = FrameDecoder()
        self.subscriptions: list[Subscription] = []
        self.errors = 0

    def _forward(self, topic: str, payload: bytes) -> None:
        self.send(encode_frame(self.broker.topic_id(topic), payload))

    def _error(self, topic_id: int, message: str) -> None:
        self.errors += 1
        self.send(encode_frame(CONTROL_TOPIC, control_payload(OP_ERROR, topic_id, message)))

    def receive(self, data: bytes) -> None:
        for topic_id, payload in self.decoder.feed(data):
            if topic_id == CONTROL_TOPIC:
                self._control(payload)
                continue
            try:
                self.broker.publish(topic_id, payload)
            except UnknownTopicError:
                self._error(topic_id, "unknown topic")

    def _control(self, payload: bytes) -> None:
        try:
            op, topic_id, name = parse_control(payload)
        except ValueError:
            self._error(CONTROL_TOPIC, "malformed control frame")
            return
        try:
            if op == OP_ADVERTISE:
                topic_id = self.broker.advertise(name, topic_id or None)
            elif op == OP_SUBSCRIBE:
                topic_id = self.broker.advertise(name, topic_id or None)
                self.subscriptions.append(self.broker.subscribe(name, callback=self._forward))
            else:
                self._error(topic_id, f"unsupported opcode {op}")
                return
        except TopicConflictError as exc:
            self._error(topic_id, str(exc))
            return
        self.send(encode_frame(CONTROL_TOPIC, control_payload(OP_ACK, topic_id, name)))

    def close(self) -> None:
        for sub in self.subscriptions:
            sub.close()
        self.subscriptions.clear()


class ClientProtocol:
    """Client end of a stream: frames outgoing calls, decodes incoming bytes."""

    def __init__(self, send: Callable[[bytes], None]):
        self.send = send
        self.decoder = FrameDecoder()
        self.ids: dict[str, int] = {}
        self.names: dict[int, str] = {}
        self.errors: list[tuple[int, str]] = []
        self.acks: list[tuple[int, str]] = []
        self.bytes_sent = 0
        self.bytes_received = 0
        self.frames_sent = 0
        self.frames_received = 0

    def _write(self, frame: bytes) -> None:
        self.bytes_sent += len(frame)
        self.frames_sent += 1
        self.send(frame)

    def advertise(self, name: str, topic_id: int) -> None:
        self.ids[name] = topic_id
        self.names[topic_id] = name
        self._write(encode_frame(CONTROL_TOPIC, control_payload(OP_ADVERTISE, topic_id, name)))

    def subscribe(self, name: str, topic_id: int) -> None:
        self.ids[name] = topic_id
        self.names[topic_id] = name
        self._write(encode_frame(CONTROL_TOPIC, control_payload(OP_SUBSCRIBE, topic_id, name)))

    def publish(self, name: str, payload: bytes) -> int:
        """Send one message; returns the frame size in bytes."""
        try:
            topic_id = self.ids[name]
        except KeyError:
            raise UnknownTopicError(name) from None
        frame = encode_frame(topic_id, payload)
        self._write(frame)
        return len(frame)

    def receive(self, data: bytes) -> list[tuple[str, bytes]]:
        out = []
        self.bytes_received += len(data)
        for topic_id, payload in self.decoder.feed(data):
            self.frames_received += 1
            if topic_id == CONTROL_TOPIC:
                op, tid, text = parse_control(payload)
                (self.errors if op == OP_ERROR else self.acks).append((tid, text))
                continue
            out.append((self.names.get(topic_id, str(topic_id)), payload))
        return out


class LoopbackLink:
    """In-process duplex byte pipe between one client and a broker session.

    Deterministic and synchronous: bytes written by the client are handed to
    the session immediately; bytes for the client wait in an inbox until
    :meth:`poll`.
    """

    def __init__(self, broker: Broker):
        self._inbox = bytearray()
        self.session = BrokerSession(broker, self._inbox.extend)
        self.client = ClientProtocol(self.session.receive)
        self.connected = True

    def poll(self) -> list[tuple[str, bytes]]:
        data = bytes(self._inbox)
        self._inbox.clear()
        return self.client.receive(data)

    def close(self) -> None:
        self.connected = False
        self.session.close()


class _SessionHandler(socketserver.BaseRequestHandler):
    server: "BrokerServer"

    def handle(self) -> None:
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        outbox: deque[bytes] = deque(maxlen=self.server.outbox_limit)
        ready = threading.Condition()
        alive = threading.Event()
        alive.set()
        dropped = [0]

        def send(data: bytes) -> None:
            with ready:
                if len(outbox) == outbox.maxlen:
                    dropped[0] += 1
                outbox.append(data)
                ready.notify()

        def writer() -> None:
            while alive.is_set():
                with ready:
                    while not outbox and alive.is_set():
                        ready.wait(0.1)
                    chunk = b"".join(outbox)
                    outbox.clear()
                if not chunk:
                    continue
                try:
                    sock.sendall(chunk)
                except OSError:
                    alive.clear()

        session = BrokerSession(self.server.broker, send)
        thread = threading.Thread(target=writer, daemon=True)
        thread.start()
        try:
            while alive.is_set():
                try:
                    data = sock.recv(65536)
                except OSError:
                    break
                if not data:
                    break
                session.receive(data)
        finally:
            alive.clear()
            session.close()
            thread.join(timeout=1.0)
            if dropped[0]:
                log.warning("session dropped %d outbound frames", dropped[0])


class BrokerServer(socketserver.ThreadingTCPServer):
    """TCP front end; one thread per connection plus one writer per connection."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int] = ("127.0.0.1", 11411), broker: Broker | None = None, outbox_limit: int = 4096):
        self.broker = broker or Broker()
        self.outbox_limit = outbox_limit
        super().__init__(address, _SessionHandler)

    def start(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class TcpClient:
    """Blocking TCP client with a background reader thread."""

    def __init__(self, address: tuple[str, int], timeout: float = 5.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._lock = threading.Lock()
        self.protocol = ClientProtocol(self._send)
        self.inbox: deque[tuple[str, bytes]] = deque()
        self._ready = threading.Condition()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _send(self, data: bytes) -> None:
        with self._lock:
            self.sock.sendall(data)

    def _read_loop(self) -> None:
        while True:
            try:
                data = self.sock.recv(65536)
            except OSError:
                break
            if not data:
                break
            with self._ready:
                self.inbox.extend(self.protocol.receive(data))
                self._ready.notify_all()

    def advertise(self, name: str, topic_id: int) -> None:
        self.protocol.advertise(name, topic_id)

    def subscribe(self, name: str, topic_id: int) -> None:
        self.protocol.subscribe(name, topic_id)

    def publish(self, name: str, payload: bytes) -> int:
        return self.protocol.publish(name, payload)

    def wait_for(self, predicate: Callable[["TcpClient"], bool], timeout: float = 5.0) -> bool:
        with self._ready:
            return self._ready.wait_for(lambda: predicate(self), timeout)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
