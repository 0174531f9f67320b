"""Interactive simulation service for teleoperation.

One operator connection at a time; the service owns the vehicle state and
advances it at a wall-clock 20 Hz tick, applying the most recent command
each tick (command-hold).  Commands older than one second are replaced by
a zero-velocity safety stop.  Every tick streams a state message and a
depth frame; record on/off brackets write a demonstration directory.

The listening socket speaks three dialects, sniffed from the first bytes:
raw TCP with length-prefixed frames (scripted clients, conformance
tests), WebSocket (the browser UI; payloads identical, socket framing
replaces the length prefix), and plain HTTP GET for serving the UI's
static files.
"""

from __future__ import annotations

import base64
import hashlib
import socket
import struct
import threading
import time
from dataclasses import replace
from pathlib import Path

from . import protocol
from .dataset import RecordingSession
from .errors import BoundaryError, CrawlsimError
from .harness import (
    CAMERA_TARGET_PITCH,
    DEPTH_SIZE,
    build_arena,
    default_start_pose,
    observe,
)
from .protocol import FrameSplitter, ProtocolError
from .render import render_depth
from .terrain import CourseSpec, Difficulty
from .vehicle import (
    PRESETS,
    TICK_DT,
    Action,
    CameraTiltController,
    Status,
    initial_state,
    step,
)

COMMAND_HOLD_S = 1.0  # commands older than this are replaced by a stop
_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".ico": "image/x-icon",
    ".png": "image/png",
}


class _TcpTransport:
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._splitter = FrameSplitter()
        self._send_lock = threading.Lock()

    def recv_payloads(self) -> list[str] | None:
        try:
            data = self._sock.recv(65536)
        except socket.timeout:
            return []
        except OSError:
            return None
        if not data:
            return None
        return self._splitter.feed(data)

    def send_payload(self, payload: str) -> bool:
        try:
            with self._send_lock:
                self._sock.sendall(protocol.frame(payload))
            return True
        except OSError:
            return False


class _WsTransport:
    def __init__(self, sock: socket.socket, residue: bytes):
        self._sock = sock
        self._buf = bytearray(residue)
        self._send_lock = threading.Lock()
        self._closed = False

    def recv_payloads(self) -> list[str] | None:
        if self._closed:
            return None
        try:
            data = self._sock.recv(65536)
            if not data:
                return None
        except socket.timeout:
            data = b""
        except OSError:
            return None
        self._buf.extend(data)
        payloads: list[str] = []
        while True:
            frame = self._pop_frame()
            if frame is None:
                break
            opcode, payload = frame
            if opcode == 0x8:  # close
                self._closed = True
                return payloads if payloads else None
            if opcode == 0x9:  # ping -> pong
                self._send_raw(0xA, payload)
            elif opcode in (0x1, 0x2):
                payloads.append(payload.decode("utf-8"))
        return payloads

    def _pop_frame(self) -> tuple[int, bytes] | None:
        """Consume one complete frame from the buffer, or None if partial."""
        buf = self._buf
        if len(buf) < 2:
            return None
        opcode = buf[0] & 0x0F
        masked = bool(buf[1] & 0x80)
        length = buf[1] & 0x7F
        offset = 2
        if length == 126:
            if len(buf) < 4:
                return None
            length = struct.unpack(">H", buf[2:4])[0]
            offset = 4
        elif length == 127:
            if len(buf) < 10:
                return None
            length = struct.unpack(">Q", buf[2:10])[0]
            offset = 10
        mask = b"\x00" * 4
        if masked:
            if len(buf) < offset + 4:
                return None
            mask = bytes(buf[offset : offset + 4])
            offset += 4
        if len(buf) < offset + length:
            return None
        payload = bytes(buf[offset : offset + length])
        del buf[: offset + length]
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return opcode, payload

    def _send_raw(self, opcode: int, payload: bytes) -> bool:
        header = bytes([0x80 | opcode])
        n = len(payload)
        if n < 126:
            header += bytes([n])
        elif n < 65536:
            header += bytes([126]) + struct.pack(">H", n)
        else:
            header += bytes([127]) + struct.pack(">Q", n)
        try:
            with self._send_lock:
                self._sock.sendall(header + payload)
            return True
        except OSError:
            return False

    def send_payload(self, payload: str) -> bool:
        return self._send_raw(0x1, payload.encode("utf-8"))


class SimService:
    """Single-session simulation service; see module docstring."""

    def __init__(
        self,
        course_spec: CourseSpec | None = None,
        vehicle: str = "V6W",
        depth_size: int = DEPTH_SIZE,
        record_root=None,
        ui_dir=None,
        realtime: bool = True,
    ):
        self.spec = course_spec or CourseSpec(Difficulty.MEDIUM, 1)
        self.geom = PRESETS[vehicle]
        self.depth_size = depth_size
        self.record_root = Path(record_root) if record_root else None
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.realtime = realtime
        self._stop = threading.Event()
        self._lock = threading.RLock()  # guards sim + recording state
        self._listener: socket.socket | None = None
        self._record_counter = 0
        self._session: RecordingSession | None = None
        self._tilt = CameraTiltController()
        self._reset_sim(self.spec)
        self.port: int | None = None

    # -- simulation state ---------------------------------------------------

    def _reset_sim(self, spec: CourseSpec) -> None:
        self.spec = spec
        self.arena, self.course_length = build_arena(spec)
        pose = default_start_pose(self.course_length, spec.dims[1], 1)
        state = initial_state(self.arena, *pose, self.geom)
        tilt0 = CAMERA_TARGET_PITCH - state.pitch
        tilt0 = min(max(tilt0, -self._tilt.TILT_CLAMP), self._tilt.TILT_CLAMP)
        self.state = replace(state, camera_tilt=tilt0)
        self._tilt = CameraTiltController()
        self.command = Action(0.0, 0.0)
        self.command_time = time.monotonic()

    def _stop_recording(self):
        if self._session is not None:
            demo = self._session.close()
            self._session = None
            return str(demo.path)
        return None

    # -- networking ---------------------------------------------------------

    def start(self, port: int = 0) -> int:
        """Bind and start the accept loop in a background thread."""
        self._listener = socket.create_server(("0.0.0.0", port))
        self.port = self._listener.getsockname()[1]
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self.port

    def serve_forever(self, port: int) -> None:
        self.start(port)
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            self._stop_recording()

    def _accept_loop(self) -> None:
        self._listener.settimeout(0.3)
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                self._serve_connection(conn)
            except Exception:
                pass
            finally:
                with self._lock:
                    self.command = Action(0.0, 0.0)
                    self._stop_recording()
                try:
                    conn.close()
                except OSError:
                    pass

    def _serve_connection(self, conn: socket.socket) -> None:
        conn.settimeout(0.2)
        head = self._recv_head(conn)
        if head is None:
            return
        if head.startswith(b"GET "):
            self._serve_http(conn, head)
            return
        transport = _TcpTransport(conn)
        self._session_loop(transport, _pending=head)

    def _recv_head(self, conn: socket.socket, n: int = 4) -> bytes | None:
        buf = b""
        deadline = time.monotonic() + 5.0
        while len(buf) < n and time.monotonic() < deadline:
            try:
                data = conn.recv(n - len(buf))
            except socket.timeout:
                continue
            except OSError:
                return None
            if not data:
                return None
            buf += data
        return buf if buf else None

    def _serve_http(self, conn: socket.socket, head: bytes) -> None:
        data = head
        deadline = time.monotonic() + 5.0
        while b"\r\n\r\n" not in data and time.monotonic() < deadline:
            try:
                chunk = conn.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                return
            if not chunk:
                return
            data += chunk
        header_blob, _, residue = data.partition(b"\r\n\r\n")
        lines = header_blob.decode("latin-1").split("\r\n")
        path = lines[0].split(" ")[1] if len(lines[0].split(" ")) > 1 else "/"
        headers = {}
        for line in lines[1:]:
            key, _, value = line.partition(":")
            headers[key.strip().lower()] = value.strip()

        if headers.get("upgrade", "").lower() == "websocket":
            key = headers.get("sec-websocket-key", "")
            accept = base64.b64encode(
                hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()
            ).decode("ascii")
            conn.sendall(
                (
                    "HTTP/1.1 101 Switching Protocols\r\n"
                    "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                    f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
                ).encode("ascii")
            )
            self._session_loop(_WsTransport(conn, residue))
            return

        self._serve_static(conn, path)

    def _serve_static(self, conn: socket.socket, path: str) -> None:
        path = path.split("?")[0]
        if self.ui_dir is None:
            body = b"simulation service: connect via TCP frames or WebSocket\n"
            conn.sendall(
                b"HTTP/1.1 200 OK\r\nContent-Type: text/plain\r\n"
                + f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n".encode()
                + body
            )
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            conn.sendall(b"HTTP/1.1 404 Not Found\r\nConnection: close\r\n\r\n")
            return
        body = target.read_bytes()
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        conn.sendall(
            f"HTTP/1.1 200 OK\r\nContent-Type: {ctype}\r\n"
            f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n".encode()
            + body
        )

    # -- session ------------------------------------------------------------

    def _session_loop(self, transport, _pending: bytes = b"") -> None:
        """Reader loop; a paired ticker thread advances the simulation."""
        alive = threading.Event()
        alive.set()
        ticker = threading.Thread(
            target=self._tick_loop, args=(transport, alive), daemon=True
        )
        ticker.start()
        try:
            if _pending:
                if not self._handle_bytes_tcp(transport, _pending):
                    return
            while not self._stop.is_set():
                payloads = transport.recv_payloads()
                if payloads is None:
                    return
                for payload in payloads:
                    self._handle_payload(transport, payload)
        finally:
            alive.clear()
            ticker.join(timeout=2.0)

    def _handle_bytes_tcp(self, transport: _TcpTransport, data: bytes) -> bool:
        try:
            for payload in transport._splitter.feed(data):
                self._handle_payload(transport, payload)
            return True
        except ProtocolError as e:
            transport.send_payload(protocol.encode_payload("err", {"reason": str(e)}))
            return False

    def _handle_payload(self, transport, payload: str) -> None:
        try:
            msg_type, body = protocol.decode_payload(payload)
        except ProtocolError as e:
            transport.send_payload(protocol.encode_payload("err", {"reason": str(e)}))
            return
        try:
            if msg_type == "cmd":
                with self._lock:
                    self.command = Action(
                        v=body["v"],
                        omega=body["omega"],
                        d=(body["d_front"], body["d_rear"]),
                        s=body["low_gear"],
                    )
                    self.command_time = time.monotonic()
            elif msg_type == "reset":
                with self._lock:
                    spec = self.spec
                    if "seed" in body or "difficulty" in body:
                        difficulty = (
                            Difficulty(body["difficulty"])
                            if "difficulty" in body
                            else spec.difficulty
                        )
                        spec = CourseSpec(
                            difficulty, body.get("seed", spec.seed), spec.dims, spec.resolution
                        )
                    self._stop_recording()
                    self._reset_sim(spec)
                    transport.send_payload(protocol.encode_payload("ack", {"for": "reset"}))
                    transport.send_payload(protocol.map_message(self.arena))
                    transport.send_payload(protocol.state_message(self.state, False))
            elif msg_type == "record":
                with self._lock:
                    if body["on"]:
                        if self._session is None:
                            if self.record_root is None:
                                raise CrawlsimError("service started without a record directory")
                            path = self.record_root / f"rec_{self._record_counter:03d}"
                            self._record_counter += 1
                            self._session = RecordingSession(
                                path,
                                vehicle=self.geom.name,
                                course_seed=self.spec.seed,
                                course_difficulty=self.spec.difficulty.value,
                                trial_id=path.name,
                            )
                        transport.send_payload(
                            protocol.encode_payload(
                                "ack", {"for": "record", "path": str(self._session.path)}
                            )
                        )
                    else:
                        path = self._stop_recording()
                        ack = {"for": "record"}
                        if path:
                            ack["path"] = path
                        transport.send_payload(protocol.encode_payload("ack", ack))
            else:
                transport.send_payload(
                    protocol.encode_payload(
                        "err", {"reason": f"unexpected client message {msg_type!r}"}
                    )
                )
        except (CrawlsimError, ValueError) as e:
            transport.send_payload(protocol.encode_payload("err", {"reason": str(e)}))

    def _tick_loop(self, transport, alive: threading.Event) -> None:
        next_tick = time.monotonic()
        while alive.is_set() and not self._stop.is_set():
            if self.realtime:
                now = time.monotonic()
                if now < next_tick:
                    time.sleep(min(next_tick - now, TICK_DT))
                    continue
                next_tick += TICK_DT
                # never run ahead of wall time; do catch up if we fell behind
                next_tick = max(next_tick, time.monotonic() - TICK_DT)
            with self._lock:
                cmd = self.command
                if time.monotonic() - self.command_time > COMMAND_HOLD_S:
                    cmd = Action(0.0, 0.0, cmd.d, cmd.s)
                depth = render_depth(
                    self.arena, self.state, self.geom, self.depth_size, self.depth_size
                )
                if self.state.status is Status.RUNNING:
                    try:
                        new_state = step(self.state, cmd, self.arena, self.geom)
                        new_state = replace(
                            new_state,
                            camera_tilt=self._tilt.update(
                                new_state, CAMERA_TARGET_PITCH, TICK_DT
                            ),
                        )
                        self.state = new_state
                    except BoundaryError:
                        transport.send_payload(
                            protocol.encode_payload(
                                "err", {"reason": "boundary: command ignored at map edge"}
                            )
                        )
                if self._session is not None:
                    obs = observe(self.arena, self.state, self.geom, self.depth_size, False)
                    obs = replace(obs, depth=depth)
                    try:
                        self._session.record_frame(obs, cmd)
                    except CrawlsimError:
                        pass
                recording = self._session is not None
                state_payload = protocol.state_message(self.state, recording)
                depth_payload = protocol.depth_message(depth)
            if not transport.send_payload(state_payload):
                return
            if not transport.send_payload(depth_payload):
                return
            if not self.realtime:
                time.sleep(TICK_DT)
