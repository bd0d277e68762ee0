"""Wire protocol for external model servers.

Newline-delimited JSON over a byte stream (a child process's stdio or a
TCP connection). The server speaks first with a hello message; afterwards
the client sends ``query`` requests with base64-encoded float32 image
payloads and receives ``probs`` responses. Request ids are strictly
increasing per connection and one request is always matched to one
response.
"""
from __future__ import annotations

import base64
import json
import shlex
import socket
import subprocess
import sys
import threading
from dataclasses import dataclass

import numpy as np

from .core import ImageTensor
from .errors import HandshakeError, OracleError, ProtocolError
from .oracle import Oracle

PROTOCOL_VERSION = 1


def encode_image_payload(image: ImageTensor) -> str:
    """Base64 of the tensor's float32 little-endian channel-major bytes."""
    raw = np.ascontiguousarray(image.data.astype("<f4", copy=False))
    return base64.b64encode(raw.tobytes()).decode("ascii")


def decode_image_payload(payload: str, shape: tuple[int, int, int]) -> ImageTensor:
    """Inverse of :func:`encode_image_payload`; bit-exact round trip."""
    try:
        raw = base64.b64decode(payload, validate=True)
    except Exception as exc:
        raise ProtocolError(f"invalid base64 image payload: {exc}") from exc
    c, h, w = shape
    if len(raw) != 4 * c * h * w:
        raise ProtocolError(
            f"payload holds {len(raw)} bytes, shape {shape} needs {4 * c * h * w}"
        )
    arr = np.frombuffer(raw, dtype="<f4").reshape(c, h, w).copy()
    return ImageTensor(arr.astype(np.float32))


@dataclass(frozen=True)
class Hello:
    version: int
    classes: int
    shape: tuple[int, int, int]
    concurrent: bool


def parse_hello(message: dict) -> Hello:
    if not isinstance(message, dict) or message.get("type") != "hello":
        raise HandshakeError(f"expected a hello message, got {message!r}")
    version = message.get("version")
    if version != PROTOCOL_VERSION:
        raise HandshakeError(
            f"protocol version {version} not supported (client speaks {PROTOCOL_VERSION})"
        )
    classes = message.get("classes")
    if not isinstance(classes, int) or classes < 2:
        raise HandshakeError(f"invalid model: classes must be >= 2, got {classes!r}")
    shape = message.get("shape")
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or not all(isinstance(s, int) and s > 0 for s in shape)
    ):
        raise HandshakeError(f"invalid input shape {shape!r}")
    return Hello(version, classes, (shape[0], shape[1], shape[2]), bool(message.get("concurrent", False)))


class _LineTransport:
    """One readable/writable stream of UTF-8 lines."""

    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def recv_line(self) -> str:
        raise NotImplementedError

    def close(self) -> None:
        pass


class ProcessTransport(_LineTransport):
    """Talks to a child process over its stdin/stdout."""

    def __init__(self, command: str):
        self._proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=sys.stderr,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )

    def send_line(self, line: str) -> None:
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"oracle process pipe broken: {exc}") from exc

    def recv_line(self) -> str:
        assert self._proc.stdout is not None
        line = self._proc.stdout.readline()
        if line == "":
            raise ProtocolError("oracle process closed its output stream")
        return line.rstrip("\n")

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()


class TcpTransport(_LineTransport):
    """Talks to a server over one TCP connection."""

    def __init__(self, address: str):
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise ProtocolError(f"tcp address must be HOST:PORT, got {address!r}")
        try:
            self._sock = socket.create_connection((host, int(port)))
        except OSError as exc:
            raise ProtocolError(f"cannot connect to {address}: {exc}") from exc
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")
        self._writer = self._sock.makefile("w", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._writer.write(line + "\n")
            self._writer.flush()
        except OSError as exc:
            raise ProtocolError(f"tcp connection broken: {exc}") from exc

    def recv_line(self) -> str:
        line = self._reader.readline()
        if line == "":
            raise ProtocolError("tcp oracle closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self._reader.close()
            self._writer.close()
        finally:
            self._sock.close()


def handshake(transport: _LineTransport) -> Hello:
    """Read and validate the server's hello line."""
    line = transport.recv_line()
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise HandshakeError(f"malformed hello line: {exc}") from exc
    return parse_hello(message)


class RemoteOracle(Oracle):
    """Client side of the wire protocol, over any line transport.

    Requests are serialized internally, so a single connection is safe to
    share; ``concurrent_safe`` only reports whether the server declared
    itself capable of interleaved load.
    """

    def __init__(self, transport: _LineTransport):
        self._transport = transport
        try:
            hello = handshake(transport)
        except Exception:
            transport.close()
            raise
        self.hello = hello
        self.num_classes = hello.classes
        self.input_shape = hello.shape
        self.concurrent_safe = hello.concurrent
        self._lock = threading.Lock()
        self._next_id = 1

    def query(self, image: ImageTensor) -> np.ndarray:
        self.check_shape(image)
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            request = {
                "type": "query",
                "id": request_id,
                "image": encode_image_payload(image),
            }
            self._transport.send_line(json.dumps(request))
            line = self._transport.recv_line()
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed response line: {exc}") from exc
        kind = response.get("type")
        if kind == "error":
            raise OracleError(f"oracle error: {response.get('message', '<no message>')}")
        if kind != "probs":
            raise ProtocolError(f"unexpected response type {kind!r}")
        if response.get("id") != request_id:
            raise ProtocolError(
                f"response id {response.get('id')!r} does not match request {request_id}"
            )
        probs = response.get("probs")
        if not isinstance(probs, list) or len(probs) != self.num_classes:
            raise ProtocolError(
                f"expected {self.num_classes} probabilities, got {probs!r}"
            )
        values = []
        for p in probs:
            if not isinstance(p, (int, float)) or p < 0.0 or p > 1.0:
                raise ProtocolError(f"probability {p!r} outside [0, 1]")
            values.append(float(p))
        total = values[0]
        for v in values[1:]:
            total += v
        if abs(total - 1.0) > 1e-3:
            raise ProtocolError(f"probabilities sum to {total}, not 1")
        return np.array(values, dtype=np.float32)

    def close(self) -> None:
        self._transport.close()


class ProcessOracle(RemoteOracle):
    def __init__(self, command: str):
        super().__init__(ProcessTransport(command))


class TcpOracle(RemoteOracle):
    def __init__(self, address: str):
        super().__init__(TcpTransport(address))
