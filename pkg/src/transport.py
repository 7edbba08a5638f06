"""
Wire protocol and loopback cloud service

Every frame is a 4-byte big-endian length, a 1-byte type tag and a fixed
payload: the task id as an unsigned 64-bit integer followed by one IEEE-754
double (the input size in requests, the elapsed seconds in responses), all
big-endian. The length counts the tag plus payload and is always 17.
"""
from __future__ import annotations

import logging
import math
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

import config
from engine import ExecutorError
from workload import TargetProfile, calibrated_profile

logger = logging.getLogger('offload.transport')

HEADER = struct.Struct('>I')
BODY = struct.Struct('>BQd')
FRAME_LENGTH = BODY.size
FRAME_SIZE = HEADER.size + FRAME_LENGTH

REQUEST_TAG = 0x01
RESPONSE_TAG = 0x02
MAX_TASK_ID = 2 ** 64 - 1


class ProtocolError(Exception):
    pass


class IncompleteFrame(Exception):
    """More bytes are needed before the frame can be decoded."""

    def __init__(self, needed: int):
        super().__init__(f"need {needed} more bytes")
        self.needed = needed


@dataclass(frozen=True)
class ExecRequest:
    task_id: int
    d: float

    def __post_init__(self):
        if not 0 <= self.task_id <= MAX_TASK_ID:
            raise ValueError(f"task_id out of range: {self.task_id}")
        if not (math.isfinite(self.d) and self.d >= 0):
            raise ValueError(f"d must be finite and >= 0, got {self.d}")


@dataclass(frozen=True)
class ExecResponse:
    task_id: int
    elapsed: float

    def __post_init__(self):
        if not 0 <= self.task_id <= MAX_TASK_ID:
            raise ValueError(f"task_id out of range: {self.task_id}")
        if not self.elapsed > 0:
            raise ValueError(f"elapsed must be > 0, got {self.elapsed}")


Message = Union[ExecRequest, ExecResponse]


def encode_frame(msg: Message) -> bytes:
    if isinstance(msg, ExecRequest):
        body = BODY.pack(REQUEST_TAG, msg.task_id, msg.d)
    else:
        body = BODY.pack(RESPONSE_TAG, msg.task_id, msg.elapsed)
    return HEADER.pack(len(body)) + body


def decode_frame(data: bytes) -> Message:
    """
    Decodes one frame from the start of data.

    Raises:
        IncompleteFrame: data ends before the frame does
        ProtocolError: bad length, unknown tag, or field values out of range
    """
    if len(data) < HEADER.size:
        raise IncompleteFrame(HEADER.size - len(data))
    (length,) = HEADER.unpack_from(data)
    if length != FRAME_LENGTH:
        raise ProtocolError(f"declared length {length}, expected {FRAME_LENGTH}")
    if len(data) > HEADER.size and data[HEADER.size] not in (REQUEST_TAG, RESPONSE_TAG):
        raise ProtocolError(f"unknown type tag 0x{data[HEADER.size]:02x}")
    if len(data) < FRAME_SIZE:
        raise IncompleteFrame(FRAME_SIZE - len(data))

    tag, task_id, value = BODY.unpack_from(data, HEADER.size)
    try:
        if tag == REQUEST_TAG:
            return ExecRequest(task_id, value)
        return ExecResponse(task_id, value)
    except ValueError as e:
        raise ProtocolError(str(e))


def recv_frame(sock: socket.socket) -> Optional[Message]:
    """Reads one frame; None on a clean end of stream between frames."""
    data = b''
    while True:
        try:
            return decode_frame(data)
        except IncompleteFrame as e:
            chunk = sock.recv(e.needed)
            if not chunk:
                if data:
                    raise ProtocolError(f"connection closed mid-frame after {len(data)} bytes")
                return None
            data += chunk


def parse_address(address: str) -> Tuple[str, int]:
    host, _, port = address.rpartition(':')
    if not host or not port.isdigit():
        raise ValueError(f"address must be HOST:PORT, got {address!r}")
    return host, int(port)


@dataclass
class ServerConfig:
    bind_address: str = config.BIND_ADDR
    profile: TargetProfile = field(default_factory=lambda: calibrated_profile().cloud)
    injected_rtt: float = config.INJECTED_RTT
    seed: int = config.DEFAULT_SEED

    def __post_init__(self):
        if self.injected_rtt < 0:
            raise ValueError(f"injected_rtt must be >= 0, got {self.injected_rtt}")


class CloudRequestHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server: CloudServer = self.server
        peer = '%s:%s' % self.client_address[:2]
        while True:
            try:
                msg = recv_frame(self.request)
            except (ProtocolError, OSError) as e:
                logger.warning(f"Closing {peer}: {e}")
                return
            if msg is None:
                return
            if not isinstance(msg, ExecRequest):
                logger.warning(f"Closing {peer}: expected a request frame")
                return

            started = time.perf_counter()
            simulated = server.simulate(msg)
            time.sleep(simulated + server.settings.injected_rtt)
            elapsed = time.perf_counter() - started

            try:
                self.request.sendall(encode_frame(ExecResponse(msg.task_id, elapsed)))
            except OSError as e:
                logger.warning(f"Closing {peer}: {e}")
                return
            logger.info(f"{peer} task {msg.task_id} d={msg.d:.4f} simulated={simulated:.4f}s elapsed={elapsed:.4f}s")


class CloudServer(socketserver.ThreadingTCPServer):
    """Loopback stand-in for the cloud instance; one thread per connection."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, settings: ServerConfig):
        self.settings = settings
        self._rng = np.random.default_rng(settings.seed)
        self._rng_lock = threading.Lock()
        super().__init__(parse_address(settings.bind_address), CloudRequestHandler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def simulate(self, request: ExecRequest) -> float:
        with self._rng_lock:
            return self.settings.profile.sample(request.task_id, request.d, self._rng)


def serve(settings: ServerConfig) -> None:
    """Serves until interrupted; the caller handles KeyboardInterrupt."""
    with CloudServer(settings) as server:
        logger.info(f"Serving on {server.address} with injected RTT {settings.injected_rtt * 1000:.0f} ms")
        try:
            server.serve_forever()
        finally:
            logger.info("Cloud service shutting down")


class CloudClient:
    """One connection, one request in flight at a time."""

    def __init__(self, address: str = config.SERVER_ADDR, timeout: float = config.CLIENT_TIMEOUT):
        self.address = address
        self.timeout = timeout
        self.sock: Optional[socket.socket] = None
        self.last_server_elapsed: Optional[float] = None

    def connect(self) -> None:
        try:
            self.sock = socket.create_connection(parse_address(self.address), timeout=self.timeout)
        except OSError as e:
            raise ExecutorError(f"cannot connect to {self.address}: {e}")

    def close(self) -> None:
        if self.sock is not None:
            self.sock.close()
            self.sock = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, *exc):
        self.close()

    def remote_execute(self, task_id: int, d: float) -> float:
        """
        Runs one task remotely.

        Returns:
            Seconds from dispatch to response receipt, measured here

        Raises:
            ExecutorError: not connected, timed out, or the connection failed
            ProtocolError: the response is malformed or answers another task
        """
        if self.sock is None:
            self.connect()
        frame = encode_frame(ExecRequest(task_id, d))
        try:
            started = time.perf_counter()
            self.sock.sendall(frame)
            response = recv_frame(self.sock)
            elapsed = time.perf_counter() - started
        except socket.timeout:
            self.close()
            raise ExecutorError(f"task {task_id} timed out after {self.timeout}s")
        except (OSError, ProtocolError) as e:
            self.close()
            raise ExecutorError(f"task {task_id}: {e}")

        if response is None:
            self.close()
            raise ExecutorError(f"task {task_id}: server closed the connection")
        if not isinstance(response, ExecResponse) or response.task_id != task_id:
            self.close()
            raise ProtocolError(f"response does not match task {task_id}: {response}")

        self.last_server_elapsed = response.elapsed
        logger.debug(f"Task {task_id}: client {elapsed:.4f}s, server {response.elapsed:.4f}s")
        return elapsed


class RemoteExecutor:
    """Engine executor backed by a CloudClient."""

    def __init__(self, client: CloudClient):
        self.client = client

    def execute(self, task_id: int, d: float) -> float:
        try:
            return self.client.remote_execute(task_id, d)
        except ProtocolError as e:
            raise ExecutorError(str(e))
