import json
import socket
from pathlib import Path

import numpy as np
import pytest

from cellopt import simulator
from cellopt.domain import LayoutVector
from cellopt.protocol import (
    EvaluationServer,
    RemoteEvaluationError,
    RemoteEvaluator,
    TransportError,
    encode_message,
    remote_evaluate,
)

from conftest import random_layouts

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_transcript.bin"

# Fixed request script used for the recorded transcript (mini scenario, D=8).
SCRIPT_LINES = [
    encode_message({"id": 1, "type": "eval",
                    "x": [0.1, 0.05, 0.3, 0.25, -0.3, 0.25, 0.0, -0.35]}),
    encode_message({"id": 2, "type": "eval", "x": [0.1]}),
    b"this is not json\n",
    encode_message({"id": 3, "type": "eval",
                    "x": [-0.2, 0.1, 0.3, 0.25, -0.3, 0.25, 0.0, -0.35]}),
    encode_message({"type": "bye"}),
]


@pytest.fixture()
def mini_server(mini_scenario):
    server = EvaluationServer(
        "127.0.0.1", 0, lambda x: simulator.evaluate(x, mini_scenario.cell),
        mini_scenario.entity_map(),
    )
    server.start_background()
    try:
        yield server, f"127.0.0.1:{server.address[1]}"
    finally:
        server.shutdown()


def scripted_session_bytes(endpoint: str) -> bytes:
    """Send SCRIPT_LINES and collect every byte the server answers.

    Regenerate the golden file by dumping this function's output for a
    mini-scenario server.
    """
    host, port = endpoint.split(":")
    out = bytearray()
    with socket.create_connection((host, int(port)), timeout=10) as sock:
        reader = sock.makefile("rb")
        out += reader.readline()  # hello
        for line in SCRIPT_LINES[:2]:
            sock.sendall(line)
            out += reader.readline()
        sock.sendall(SCRIPT_LINES[2])
        out += reader.readline()
        sock.sendall(SCRIPT_LINES[3])
        out += reader.readline()
        sock.sendall(SCRIPT_LINES[4])
        rest = reader.read()
        out += rest
    return bytes(out)


class TestHandshake:
    def test_hello_announces_dimension(self, mini_server, mini_scenario):
        _, endpoint = mini_server
        host, port = endpoint.split(":")
        with socket.create_connection((host, int(port)), timeout=10) as sock:
            line = sock.makefile("rb").readline()
        msg = json.loads(line)
        assert msg["type"] == "hello"
        assert msg["v"] == 1
        assert msg["dim"] == 2 * len(mini_scenario.entities)


class TestEvalRoundTrip:
    def test_result_echoes_id_with_positive_cycle_time(self, mini_server):
        _, endpoint = mini_server
        host, port = endpoint.split(":")
        with socket.create_connection((host, int(port)), timeout=10) as sock:
            reader = sock.makefile("rb")
            reader.readline()
            sock.sendall(encode_message({"id": 7, "type": "eval",
                                         "x": [0.0, 0.0, 0.3, 0.25, -0.3, 0.25, 0.0, -0.35]}))
            msg = json.loads(reader.readline())
        assert msg["type"] == "result"
        assert msg["id"] == 7
        assert msg["cycle_time"] > 0
        assert isinstance(msg["feasible"], bool)

    def test_wrong_dimension_is_recoverable(self, mini_server):
        _, endpoint = mini_server
        host, port = endpoint.split(":")
        with socket.create_connection((host, int(port)), timeout=10) as sock:
            reader = sock.makefile("rb")
            reader.readline()
            sock.sendall(encode_message({"id": 1, "type": "eval", "x": [1.0, 2.0]}))
            err = json.loads(reader.readline())
            assert err["type"] == "error" and err["code"] == "dim" and err["id"] == 1
            sock.sendall(encode_message({"id": 2, "type": "eval",
                                         "x": [0.0, 0.0, 0.3, 0.25, -0.3, 0.25, 0.0, -0.35]}))
            ok = json.loads(reader.readline())
        assert ok["type"] == "result" and ok["id"] == 2

    def test_parse_error_keeps_connection_open(self, mini_server):
        _, endpoint = mini_server
        host, port = endpoint.split(":")
        with socket.create_connection((host, int(port)), timeout=10) as sock:
            reader = sock.makefile("rb")
            reader.readline()
            sock.sendall(b"{broken\n")
            err = json.loads(reader.readline())
            assert err["type"] == "error" and err["code"] == "parse"
            sock.sendall(encode_message({"id": 0, "type": "eval",
                                         "x": [0.0, 0.0, 0.3, 0.25, -0.3, 0.25, 0.0, -0.35]}))
            ok = json.loads(reader.readline())
        assert ok["type"] == "result"


class TestRemoteEvaluator:
    def test_differential_against_embedded(self, mini_server, mini_scenario):
        _, endpoint = mini_server
        space = mini_scenario.search_space()
        em = mini_scenario.entity_map()
        layouts = random_layouts(space, em, 50, seed=33)
        with RemoteEvaluator(endpoint, em) as client:
            for x in layouts:
                remote = client.evaluate(x)
                embedded = simulator.evaluate(x, mini_scenario.cell)
                assert remote.objective == embedded.objective
                assert remote.feasible == embedded.feasible
                assert remote.penalized == embedded.penalized
                assert remote.timeline is None and embedded.timeline is None

    def test_one_shot_remote_evaluate(self, mini_server, mini_scenario):
        _, endpoint = mini_server
        em = mini_scenario.entity_map()
        x = LayoutVector((0.0, 0.0, 0.3, 0.25, -0.3, 0.25, 0.0, -0.35), em)
        result = remote_evaluate(endpoint, x)
        assert result.objective == simulator.evaluate(x, mini_scenario.cell).objective

    def test_ids_strictly_increase(self, mini_server, mini_scenario):
        _, endpoint = mini_server
        em = mini_scenario.entity_map()
        client = RemoteEvaluator(endpoint, em)
        try:
            assert client._next_id == 0
            x = LayoutVector((0.0, 0.0, 0.3, 0.25, -0.3, 0.25, 0.0, -0.35), em)
            seen = []
            for _ in range(4):
                seen.append(client._next_id)
                client.evaluate(x)
            assert seen == sorted(set(seen))
        finally:
            client.close()

    def test_server_down_is_transport_error(self, mini_scenario):
        em = mini_scenario.entity_map()
        x = LayoutVector((0.0, 0.0, 0.3, 0.25, -0.3, 0.25, 0.0, -0.35), em)
        with pytest.raises(TransportError):
            remote_evaluate("127.0.0.1:45999", x, timeout_s=1.0)

    def test_evaluator_exception_maps_to_eval_error(self, mini_scenario):
        def broken(_x):
            raise RuntimeError("boom")

        server = EvaluationServer("127.0.0.1", 0, broken, mini_scenario.entity_map())
        server.start_background()
        try:
            endpoint = f"127.0.0.1:{server.address[1]}"
            em = mini_scenario.entity_map()
            x = LayoutVector((0.0, 0.0, 0.3, 0.25, -0.3, 0.25, 0.0, -0.35), em)
            with pytest.raises(RemoteEvaluationError) as exc:
                remote_evaluate(endpoint, x)
            assert exc.value.code == "eval"
        finally:
            server.shutdown()


class TestGoldenTranscript:
    def test_transcript_is_byte_stable(self, mini_server):
        _, endpoint = mini_server
        got = scripted_session_bytes(endpoint)
        expected = GOLDEN_PATH.read_bytes()
        assert got == expected

    def test_wire_lines_have_sorted_keys_and_no_padding(self):
        data = GOLDEN_PATH.read_bytes()
        for line in data.splitlines():
            assert line == line.strip()
            msg = json.loads(line)
            assert json.dumps(msg, sort_keys=True, separators=(",", ":")).encode() == line
