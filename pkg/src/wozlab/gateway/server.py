"""One-port TCP server: framed protocol, WebSocket, and static files.

The first bytes of each connection pick the treatment:

* an HTTP request line — ``GET /ws`` with an Upgrade header becomes a
  WebSocket carrying the framed protocol; any other request is served
  from the static web root (or the built-in placeholder page);
* anything else — the length-delimited frame protocol directly.

Each connection runs on its own thread; all shared mutation funnels
through the hub lock. A background timer drives coordinator timeouts.
"""
from __future__ import annotations

import importlib.resources
import logging
import mimetypes
import socket
import struct
import threading
from pathlib import Path

from wozlab.gateway import ws
from wozlab.gateway.config import ServerConfig
from wozlab.gateway.router import CloseConnection, Hub
from wozlab.scene.scenario import ScenarioRepo
from wozlab.session import Coordinator

log = logging.getLogger("wozlab.server")

_HTTP_METHODS = (b"GET ", b"HEAD", b"POST", b"PUT ", b"DELE", b"OPTI", b"PATC")
_RECV = 65536


class SocketChannel:
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send_bytes(self, data: bytes) -> None:
        self._sock.sendall(data)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class WebSocketChannel:
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send_bytes(self, data: bytes) -> None:
        self._sock.sendall(ws.encode_frame(data, ws.OP_BINARY))

    def close(self) -> None:
        try:
            self._sock.sendall(ws.encode_close())
        except OSError:
            pass
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class WozServer:
    """Accept loop plus per-connection protocol handling."""

    def __init__(self, config: ServerConfig):
        self.config = config
        repo = ScenarioRepo(config.scenario_dir)
        Path(config.log_dir).mkdir(parents=True, exist_ok=True)
        self.coordinator = Coordinator(
            repo,
            config.log_dir,
            topology=config.topology,
            default_mode=config.mode_default,
            disconnect_timeout_ms=config.disconnect_timeout_s * 1000,
            agent_turn_timeout_ms=config.turn_timeout_s * 1000,
            retention=config.retention,
            full_state_gap=config.full_state_gap,
        )
        self.hub = Hub(self.coordinator)
        self._listener = socket.create_server(
            (config.host, config.port), reuse_port=False
        )
        self._shutdown = threading.Event()
        self._threads: list[threading.Thread] = []
        self._ticker = threading.Thread(target=self._tick_loop, daemon=True)

    @property
    def port(self) -> int:
        return self._listener.getsockname()[1]

    # -- lifecycle ------------------------------------------------------

    def serve_forever(self) -> None:
        self._ticker.start()
        # Poll with a short timeout: a close() from another thread does not
        # reliably wake a blocked accept() on Linux.
        self._listener.settimeout(0.2)
        log.info("listening on %s:%d", self.config.host, self.port)
        try:
            while not self._shutdown.is_set():
                try:
                    sock, addr = self._listener.accept()
                except TimeoutError:
                    continue
                except OSError:
                    break  # listener closed during shutdown
                thread = threading.Thread(
                    target=self._serve_connection, args=(sock, addr), daemon=True
                )
                self._threads.append(thread)
                thread.start()
        finally:
            try:
                self._listener.close()
            except OSError:
                pass
        log.info("server stopped")

    def shutdown(self) -> None:
        self._shutdown.set()

    def _tick_loop(self) -> None:
        while not self._shutdown.wait(self.config.tick_interval_ms / 1000):
            try:
                self.hub.tick()
            except Exception:
                log.exception("tick failed")

    # -- per-connection -------------------------------------------------

    def _serve_connection(self, sock: socket.socket, addr) -> None:
        try:
            # Bound blocking writes so a stalled reader cannot wedge the
            # hub; a timed-out send surfaces as OSError and drops the peer.
            sock.setsockopt(
                socket.SOL_SOCKET, socket.SO_SNDTIMEO, struct.pack("ll", 5, 0)
            )
            sock.settimeout(10.0)
            first = sock.recv(_RECV)
            if not first:
                sock.close()
                return
            if first[:4] in _HTTP_METHODS:
                self._serve_http(sock, first)
                return
            sock.settimeout(None)
            self._run_framed(sock, SocketChannel(sock), first)
        except (OSError, TimeoutError):
            try:
                sock.close()
            except OSError:
                pass
        except Exception:
            log.exception("connection from %s crashed", addr)
            try:
                sock.close()
            except OSError:
                pass

    def _run_framed(self, sock: socket.socket, channel, first: bytes) -> None:
        connection = self.hub.new_connection(channel)
        try:
            connection.on_bytes(first)
            while True:
                data = sock.recv(_RECV)
                if not data:
                    break
                connection.on_bytes(data)
        except CloseConnection:
            pass
        except (OSError, TimeoutError):
            pass
        finally:
            connection.closed()
            try:
                sock.close()
            except OSError:
                pass

    # -- websocket ------------------------------------------------------

    def _run_websocket(self, sock: socket.socket, key: str, leftover: bytes = b"") -> None:
        sock.sendall(ws.handshake_response(key))
        sock.settimeout(None)
        channel = WebSocketChannel(sock)
        connection = self.hub.new_connection(channel)
        parser = ws.FrameParser()
        try:
            data = leftover
            while True:
                if not data:
                    data = sock.recv(_RECV)
                    if not data:
                        break
                for opcode, payload in parser.feed(data):
                    if opcode == ws.OP_CLOSE:
                        try:
                            sock.sendall(ws.encode_close())
                        except OSError:
                            pass
                        return
                    if opcode == ws.OP_PING:
                        sock.sendall(ws.encode_frame(payload, ws.OP_PONG))
                        continue
                    if opcode == ws.OP_PONG:
                        continue
                    connection.on_bytes(payload)
                data = b""
        except (CloseConnection, ws.WebSocketError):
            pass
        except (OSError, TimeoutError):
            pass
        finally:
            connection.closed()
            try:
                sock.close()
            except OSError:
                pass

    # -- http -----------------------------------------------------------

    def _serve_http(self, sock: socket.socket, first: bytes) -> None:
        try:
            request = self._read_http_head(sock, first)
            if request is None:
                sock.close()
                return
            method, path, headers, leftover = request
            if (
                path.split("?", 1)[0] == "/ws"
                and "websocket" in headers.get("upgrade", "").lower()
                and "sec-websocket-key" in headers
            ):
                self._run_websocket(sock, headers["sec-websocket-key"], leftover)
                return
            if method not in ("GET", "HEAD"):
                self._http_simple(sock, 405, "method not allowed")
                return
            self._serve_static(sock, method, path.split("?", 1)[0])
        finally:
            try:
                sock.close()
            except OSError:
                pass

    def _read_http_head(self, sock: socket.socket, first: bytes):
        data = bytearray(first)
        while b"\r\n\r\n" not in data:
            if len(data) > 65536:
                return None
            chunk = sock.recv(_RECV)
            if not chunk:
                return None
            data.extend(chunk)
        raw_head, leftover = bytes(data).split(b"\r\n\r\n", 1)
        lines = raw_head.decode("latin-1").split("\r\n")
        parts = lines[0].split(" ")
        if len(parts) < 3:
            return None
        method, path = parts[0], parts[1]
        headers: dict[str, str] = {}
        for line in lines[1:]:
            if ":" in line:
                name, value = line.split(":", 1)
                headers[name.strip().lower()] = value.strip()
        return method, path, headers, leftover

    def _http_simple(self, sock: socket.socket, status: int, text: str) -> None:
        reasons = {200: "OK", 404: "Not Found", 405: "Method Not Allowed", 400: "Bad Request"}
        body = (text + "\n").encode("utf-8")
        head = (
            f"HTTP/1.1 {status} {reasons.get(status, 'Status')}\r\n"
            "Content-Type: text/plain; charset=utf-8\r\n"
            f"Content-Length: {len(body)}\r\n"
            "Connection: close\r\n\r\n"
        ).encode("ascii")
        try:
            sock.sendall(head + body)
        except OSError:
            pass

    def _http_file(self, sock: socket.socket, method: str, body: bytes, content_type: str) -> None:
        head = (
            "HTTP/1.1 200 OK\r\n"
            f"Content-Type: {content_type}\r\n"
            f"Content-Length: {len(body)}\r\n"
            "Cache-Control: no-cache\r\n"
            "Connection: close\r\n\r\n"
        ).encode("ascii")
        try:
            sock.sendall(head + (body if method == "GET" else b""))
        except OSError:
            pass

    def _serve_static(self, sock: socket.socket, method: str, path: str) -> None:
        if path == "/":
            path = "/index.html"
        if self.config.web_root is None:
            if path == "/index.html":
                body = (
                    importlib.resources.files("wozlab.gateway")
                    .joinpath("fallback.html")
                    .read_bytes()
                )
                self._http_file(sock, method, body, "text/html; charset=utf-8")
            else:
                self._http_simple(sock, 404, "no web root configured")
            return
        root = Path(self.config.web_root).resolve()
        target = (root / path.lstrip("/")).resolve()
        if root not in target.parents and target != root:
            self._http_simple(sock, 404, "not found")
            return
        if not target.is_file():
            self._http_simple(sock, 404, "not found")
            return
        content_type = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        if content_type.startswith("text/") or content_type in (
            "application/javascript",
            "application/json",
            "image/svg+xml",
        ):
            content_type += "; charset=utf-8"
        self._http_file(sock, method, target.read_bytes(), content_type)
