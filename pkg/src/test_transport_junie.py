import unittest
import socket
import struct
import threading
import time

import numpy as np

import sys
import os
sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))

from engine import ExecutorError
from transport import (
    FRAME_SIZE,
    CloudClient,
    CloudServer,
    ExecRequest,
    ExecResponse,
    IncompleteFrame,
    ProtocolError,
    RemoteExecutor,
    ServerConfig,
    decode_frame,
    encode_frame,
    parse_address,
)
from workload import TargetProfile


def start_server(profile, rtt=0.0):
    server = CloudServer(ServerConfig(bind_address='127.0.0.1:0', profile=profile, injected_rtt=rtt, seed=1))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


def free_port():
    with socket.socket() as sock:
        sock.bind(('127.0.0.1', 0))
        return sock.getsockname()[1]


class TestFrameEncoding(unittest.TestCase):
    """Bit-exact wire format."""

    def test_golden_request(self):
        """Test the exact bytes of a request frame."""
        frame = encode_frame(ExecRequest(task_id=1, d=0.0))
        self.assertEqual(frame.hex(), '00000011' '01' '0000000000000001' '0000000000000000')
        self.assertEqual(len(frame), FRAME_SIZE)

    def test_float_is_big_endian_ieee754(self):
        """Test that floats are big-endian IEEE 754."""
        frame = encode_frame(ExecRequest(task_id=0, d=1.0))
        self.assertEqual(frame[-8:], bytes.fromhex('3ff0000000000000'))

    def test_response_tag(self):
        """Test the response frame tag."""
        frame = encode_frame(ExecResponse(task_id=7, elapsed=0.5))
        self.assertEqual(frame[4], 0x02)
        self.assertEqual(decode_frame(frame), ExecResponse(task_id=7, elapsed=0.5))

    def test_random_messages_survive_encoding(self):
        """Test that random messages decode to themselves."""
        rng = np.random.default_rng(12)
        for _ in range(1000):
            task_id = int(rng.integers(0, 2 ** 63))
            value = float(rng.exponential(10.0)) + 1e-9
            msg = ExecRequest(task_id, value) if rng.random() < 0.5 else ExecResponse(task_id, value)
            self.assertEqual(decode_frame(encode_frame(msg)), msg)

    def test_largest_task_id(self):
        """Test the largest task id."""
        msg = ExecRequest(task_id=2 ** 64 - 1, d=2.5)
        self.assertEqual(decode_frame(encode_frame(msg)), msg)


class TestFrameDecoding(unittest.TestCase):
    """Malformed and partial input."""

    def test_unknown_tag(self):
        """Test that an unknown tag is refused."""
        frame = bytearray(encode_frame(ExecRequest(1, 1.0)))
        frame[4] = 0x03
        with self.assertRaises(ProtocolError):
            decode_frame(bytes(frame))

    def test_wrong_length(self):
        """Test that a wrong length prefix is refused."""
        frame = struct.pack('>IB', 5, 0x01) + b'\x00' * 16
        with self.assertRaises(ProtocolError):
            decode_frame(frame)

    def test_truncated_frame_needs_more(self):
        """Test that a truncated frame asks for more bytes."""
        frame = encode_frame(ExecRequest(1, 1.0))
        with self.assertRaises(IncompleteFrame) as ctx:
            decode_frame(frame[:10])
        self.assertEqual(ctx.exception.needed, FRAME_SIZE - 10)

        with self.assertRaises(IncompleteFrame):
            decode_frame(b'')

    def test_invalid_values(self):
        """Test that invalid payload values are refused."""
        negative = struct.pack('>IBQd', 17, 0x01, 1, -1.0)
        with self.assertRaises(ProtocolError):
            decode_frame(negative)

        zero_elapsed = struct.pack('>IBQd', 17, 0x02, 1, 0.0)
        with self.assertRaises(ProtocolError):
            decode_frame(zero_elapsed)

    def test_message_validation(self):
        """Test message field validation."""
        with self.assertRaises(ValueError):
            ExecRequest(1, float('inf'))
        with self.assertRaises(ValueError):
            ExecRequest(-1, 1.0)

    def test_parse_address(self):
        """Test HOST:PORT parsing."""
        self.assertEqual(parse_address('127.0.0.1:7070'), ('127.0.0.1', 7070))
        with self.assertRaises(ValueError):
            parse_address('localhost')
        with self.assertRaises(ValueError):
            ServerConfig(bind_address='127.0.0.1:0', injected_rtt=-0.1)


class TestLoopbackService(unittest.TestCase):
    """Client and server over a real loopback socket."""

    def setUp(self):
        self.server, self.thread = start_server(TargetProfile(slope=0.02, intercept=0.01), rtt=0.0)

    def tearDown(self):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)

    def test_elapsed_matches_profile(self):
        """Test that reported times follow the cloud profile."""
        with CloudClient(self.server.address, timeout=2.0) as client:
            elapsed = client.remote_execute(1, 1.0)

        self.assertAlmostEqual(elapsed, 0.03, delta=0.02)
        self.assertGreaterEqual(elapsed, client.last_server_elapsed)
        self.assertLess(elapsed - client.last_server_elapsed, 0.02)

    def test_back_to_back_requests(self):
        """Test requests sent back to back on one connection."""
        with CloudClient(self.server.address, timeout=2.0) as client:
            sock = client.sock
            sock.sendall(encode_frame(ExecRequest(1, 0.1)) + encode_frame(ExecRequest(2, 0.1)))
            first = decode_frame(sock.recv(FRAME_SIZE, socket.MSG_WAITALL))
            second = decode_frame(sock.recv(FRAME_SIZE, socket.MSG_WAITALL))

        self.assertEqual([first.task_id, second.task_id], [1, 2])

    def test_many_sequential_calls(self):
        """Test many sequential calls."""
        with CloudClient(self.server.address, timeout=2.0) as client:
            for task_id in range(1, 101):
                client.remote_execute(task_id, 0.0)
                self.assertGreater(client.last_server_elapsed, 0)

    def test_malformed_connection_is_isolated(self):
        """Test that a bad connection does not affect others."""
        bad = socket.create_connection(parse_address(self.server.address), timeout=2.0)
        bad.sendall(struct.pack('>I', 5))
        self.assertEqual(bad.recv(1), b'')
        bad.close()

        with CloudClient(self.server.address, timeout=2.0) as client:
            self.assertGreater(client.remote_execute(1, 1.0), 0)

    def test_remote_executor(self):
        """Test the remote executor against the service."""
        with CloudClient(self.server.address, timeout=2.0) as client:
            self.assertGreater(RemoteExecutor(client).execute(3, 0.5), 0.01)


class TestClientFailures(unittest.TestCase):
    """Failures surface as executor errors the engine can fall back from."""

    def test_server_down(self):
        """Test that a missing service raises."""
        client = CloudClient(f'127.0.0.1:{free_port()}', timeout=0.5)
        with self.assertRaises(ExecutorError):
            client.remote_execute(1, 1.0)

    def test_unresponsive_server_times_out(self):
        """Test that a silent service times out."""
        listener = socket.socket()
        listener.bind(('127.0.0.1', 0))
        listener.listen(1)
        try:
            client = CloudClient('127.0.0.1:%d' % listener.getsockname()[1], timeout=0.2)
            started = time.perf_counter()
            with self.assertRaises(ExecutorError) as ctx:
                client.remote_execute(1, 1.0)
            self.assertIn("timed out", str(ctx.exception))
            self.assertLess(time.perf_counter() - started, 2.0)
            self.assertIsNone(client.sock)
        finally:
            listener.close()

    def test_mismatched_response(self):
        """Test that a response for another task is refused."""
        listener = socket.socket()
        listener.bind(('127.0.0.1', 0))
        listener.listen(1)

        def answer_wrong_task():
            conn, _ = listener.accept()
            with conn:
                conn.recv(FRAME_SIZE, socket.MSG_WAITALL)
                conn.sendall(encode_frame(ExecResponse(task_id=99, elapsed=0.1)))

        thread = threading.Thread(target=answer_wrong_task, daemon=True)
        thread.start()
        try:
            client = CloudClient('127.0.0.1:%d' % listener.getsockname()[1], timeout=2.0)
            with self.assertRaises(ProtocolError):
                client.remote_execute(1, 1.0)
            with self.assertRaises(ExecutorError):
                RemoteExecutor(CloudClient('127.0.0.1:%d' % free_port(), timeout=0.5)).execute(1, 1.0)
        finally:
            thread.join(timeout=2)
            listener.close()


if __name__ == '__main__':
    unittest.main()
