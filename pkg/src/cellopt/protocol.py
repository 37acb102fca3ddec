"""Newline-delimited JSON evaluation channel over TCP.

One message per line, UTF-8, keys sorted, no trailing whitespace, floats in
shortest round-trip form. On connect the server announces the layout
dimension; the client then sends eval requests and receives a result or an
error per request, in order. Malformed input keeps the connection open.

    server -> client:  {"dim": D, "type": "hello", "v": 1}
    client -> server:  {"id": n, "type": "eval", "x": [..D floats..]}
    server -> client:  {"cycle_time": s, "feasible": b, "id": n, "type": "result"}
    server -> client:  {"code": c, "id": n?, "message": m, "type": "error"}
    client -> server:  {"type": "bye"}
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading

from .domain import EvaluationResult, LayoutVector

DEFAULT_PORT = 4780
ENDPOINT_ENV_VAR = "CELLOPT_ENDPOINT"


class TransportError(RuntimeError):
    """Connection-level failure: refused, dropped, or timed out."""


class RemoteEvaluationError(RuntimeError):
    """The server answered with an error message instead of a result."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def encode_message(payload: dict) -> bytes:
    return (json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host, int(port)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        server: EvaluationServer = self.server.owner  # type: ignore[attr-defined]
        dim = 2 * len(server.entity_map)
        self.wfile.write(encode_message({"dim": dim, "type": "hello", "v": 1}))
        while True:
            line = self.rfile.readline()
            if not line:
                return
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line.decode("utf-8"))
                if not isinstance(msg, dict):
                    raise ValueError("message is not an object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._send_error(None, "parse", str(exc))
                continue
            mtype = msg.get("type")
            if mtype == "bye":
                return
            if mtype != "eval":
                self._send_error(msg.get("id"), "parse", f"unexpected message type {mtype!r}")
                continue
            msg_id = msg.get("id")
            if not isinstance(msg_id, int) or msg_id < 0:
                self._send_error(None, "parse", "eval requires a non-negative integer id")
                continue
            x = msg.get("x")
            if (
                not isinstance(x, list)
                or len(x) != dim
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)
            ):
                self._send_error(msg_id, "dim", f"x must hold {dim} numbers")
                continue
            layout = LayoutVector(tuple(float(v) for v in x), server.entity_map)
            try:
                with server.eval_lock:
                    result = server.evaluator(layout)
            except Exception as exc:  # evaluator failures must not kill the link
                self._send_error(msg_id, "eval", str(exc))
                continue
            self.wfile.write(
                encode_message(
                    {
                        "cycle_time": result.objective,
                        "feasible": result.feasible,
                        "id": msg_id,
                        "type": "result",
                    }
                )
            )

    def _send_error(self, msg_id, code: str, message: str):
        payload: dict = {"code": code, "message": message, "type": "error"}
        if isinstance(msg_id, int):
            payload["id"] = msg_id
        self.wfile.write(encode_message(payload))


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class EvaluationServer:
    """TCP front end for one evaluator; evaluations run one at a time."""

    def __init__(self, host: str, port: int, evaluator, entity_map):
        self.evaluator = evaluator
        self.entity_map = tuple(entity_map)
        self.eval_lock = threading.Lock()
        self._server = _Server((host, port), _Handler)
        self._server.owner = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def serve_forever(self):
        self._server.serve_forever()

    def start_background(self):
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def shutdown(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve(endpoint: str, evaluator, entity_map) -> EvaluationServer:
    """Bind and serve until interrupted; returns only after shutdown."""
    host, port = parse_endpoint(endpoint)
    server = EvaluationServer(host, port, evaluator, entity_map)
    try:
        server.serve_forever()
    finally:
        server._server.server_close()
    return server


class RemoteEvaluator:
    """Blocking client that keeps one connection and increasing request ids."""

    def __init__(self, endpoint: str, entity_map, timeout_s: float = 30.0):
        self.entity_map = tuple(entity_map)
        self._next_id = 0
        host, port = parse_endpoint(endpoint)
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout_s)
            self._sock.settimeout(timeout_s)
            self._reader = self._sock.makefile("rb")
            hello = self._read_message()
        except (OSError, TransportError) as exc:
            raise TransportError(f"cannot reach evaluator at {endpoint}: {exc}") from exc
        if hello.get("type") != "hello" or hello.get("dim") != 2 * len(self.entity_map):
            self.close()
            raise TransportError(
                f"unexpected handshake {hello!r} for dimension {2 * len(self.entity_map)}"
            )

    def _read_message(self) -> dict:
        try:
            line = self._reader.readline()
        except OSError as exc:
            raise TransportError(f"connection lost: {exc}") from exc
        if not line:
            raise TransportError("connection closed by server")
        try:
            msg = json.loads(line.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise TransportError(f"unparseable server message: {exc}") from exc
        if not isinstance(msg, dict):
            raise TransportError("server message is not an object")
        return msg

    def evaluate(self, x: LayoutVector) -> EvaluationResult:
        msg_id = self._next_id
        self._next_id += 1
        try:
            self._sock.sendall(
                encode_message({"id": msg_id, "type": "eval", "x": list(x.coords)})
            )
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc
        msg = self._read_message()
        if msg.get("type") == "error":
            raise RemoteEvaluationError(str(msg.get("code")), str(msg.get("message")))
        if msg.get("type") != "result" or msg.get("id") != msg_id:
            raise TransportError(f"out-of-order reply {msg!r} to request {msg_id}")
        feasible = bool(msg["feasible"])
        return EvaluationResult(
            float(msg["cycle_time"]), feasible=feasible, penalized=not feasible
        )

    def close(self):
        try:
            self._sock.sendall(encode_message({"type": "bye"}))
        except OSError:
            pass
        try:
            self._reader.close()
        except OSError:
            pass
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def remote_evaluate(
    endpoint: str, x: LayoutVector, timeout_s: float = 30.0
) -> EvaluationResult:
    """One-shot evaluation over a fresh connection."""
    with RemoteEvaluator(endpoint, x.entity_map, timeout_s=timeout_s) as client:
        return client.evaluate(x)
