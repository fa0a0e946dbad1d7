"""Teleoperation service: streams camera frames and vehicle state to one
client and applies the client's latest steering command each tick.

Wire protocol: newline-delimited JSON over one bidirectional socket.
Server -> client ``frame`` messages at a bounded rate; client -> server
``cmd`` and ``session`` messages; unknown types are ignored with a
logged warning.  Browsers cannot open raw TCP sockets, so the same port
also accepts a WebSocket upgrade carrying the identical JSON lines as
text messages.

Concurrency: exactly two roles - the tick loop (runs the episode) and
the client session handler - share a single-slot latest-command mailbox
and a bounded drop-oldest frame queue.
"""

import base64
import hashlib
import json
import logging
import select
import socket
import struct
import threading
import time
from collections import deque

from .config import Config, EpisodeConfig
from .episode import EpisodeRunner, TeleopController

log = logging.getLogger("lanekeeper.teleop")

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class Mailbox:
    """Single-slot latest-command store; writes overwrite, reads don't block."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = (0.0, 0.0, None)  # steer, speed, monotonic stamp

    def put(self, steer: float, speed: float, stamp: float):
        with self._lock:
            self._value = (steer, speed, stamp)

    def get(self):
        with self._lock:
            return self._value


class FrameQueue:
    """Bounded queue of outbound lines; oldest entries drop on overflow."""

    def __init__(self, maxlen: int = 3):
        self._lock = threading.Lock()
        self._items = deque(maxlen=maxlen)

    def put(self, line: str):
        with self._lock:
            self._items.append(line)

    def drain(self):
        with self._lock:
            items = list(self._items)
            self._items.clear()
        return items


class NdjsonTransport:
    def __init__(self, conn: socket.socket, initial: bytes = b""):
        self.conn = conn
        self._buf = bytearray(initial)

    def send_line(self, line: str):
        self.conn.sendall(line.encode() + b"\n")

    def recv_lines(self):
        """Non-blocking: returns decoded lines available right now, or
        None when the peer has closed."""
        try:
            data = self.conn.recv(65536)
        except (BlockingIOError, InterruptedError):
            data = b""
        except OSError:
            return None
        else:
            if data == b"":
                return None
        self._buf.extend(data)
        lines = []
        while b"\n" in self._buf:
            raw, _, rest = self._buf.partition(b"\n")
            self._buf = bytearray(rest)
            if raw.strip():
                lines.append(raw.decode())
        return lines

    def close(self):
        try:
            self.conn.close()
        except OSError:
            pass


class WebSocketTransport:
    """Server side of RFC 6455, text frames only; each message is one
    JSON line."""

    def __init__(self, conn: socket.socket):
        self.conn = conn
        self._buf = bytearray()

    @staticmethod
    def handshake(conn: socket.socket, request: bytes) -> "WebSocketTransport | None":
        try:
            head = request.decode("latin-1")
        except UnicodeDecodeError:
            return None
        key = None
        for line in head.split("\r\n"):
            if line.lower().startswith("sec-websocket-key:"):
                key = line.split(":", 1)[1].strip()
        if key is None:
            return None
        accept = base64.b64encode(
            hashlib.sha1((key + _WS_GUID).encode()).digest()).decode()
        conn.sendall(("HTTP/1.1 101 Switching Protocols\r\n"
                      "Upgrade: websocket\r\n"
                      "Connection: Upgrade\r\n"
                      f"Sec-WebSocket-Accept: {accept}\r\n\r\n").encode())
        return WebSocketTransport(conn)

    def send_line(self, line: str):
        payload = line.encode()
        n = len(payload)
        if n < 126:
            header = struct.pack("!BB", 0x81, n)
        elif n < 65536:
            header = struct.pack("!BBH", 0x81, 126, n)
        else:
            header = struct.pack("!BBQ", 0x81, 127, n)
        self.conn.sendall(header + payload)

    def _pump(self) -> bool:
        try:
            data = self.conn.recv(65536)
        except (BlockingIOError, InterruptedError):
            return True
        except OSError:
            return False
        if data == b"":
            return False
        self._buf.extend(data)
        return True

    def recv_lines(self):
        if not self._pump():
            return None
        lines = []
        while True:
            frame = self._parse_frame()
            if frame is None:
                break
            opcode, payload = frame
            if opcode == 0x8:  # close
                return None
            if opcode == 0x9:  # ping -> pong
                self.conn.sendall(struct.pack("!BB", 0x8A, len(payload)) + payload)
            elif opcode in (0x1, 0x2):
                text = payload.decode(errors="replace").strip()
                if text:
                    lines.append(text)
        return lines

    def _parse_frame(self):
        buf = self._buf
        if len(buf) < 2:
            return None
        opcode = buf[0] & 0x0F
        masked = bool(buf[1] & 0x80)
        length = buf[1] & 0x7F
        pos = 2
        if length == 126:
            if len(buf) < 4:
                return None
            length = struct.unpack("!H", buf[2:4])[0]
            pos = 4
        elif length == 127:
            if len(buf) < 10:
                return None
            length = struct.unpack("!Q", buf[2:10])[0]
            pos = 10
        mask = b"\x00" * 4
        if masked:
            if len(buf) < pos + 4:
                return None
            mask = bytes(buf[pos:pos + 4])
            pos += 4
        if len(buf) < pos + length:
            return None
        payload = bytes(buf[pos:pos + length])
        del self._buf[:pos + length]
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return opcode, payload

    def close(self):
        try:
            self.conn.close()
        except OSError:
            pass


def encode_frame_message(seq, frame, pose, laps, speed, steer) -> str:
    return json.dumps({
        "type": "frame",
        "seq": seq,
        "width": frame.width,
        "height": frame.height,
        "rgb_base64": base64.b64encode(frame.data.tobytes()).decode(),
        "pose": {"x": pose.x, "y": pose.y, "heading": pose.heading,
                 "odometer": pose.odometer},
        "laps": laps,
        "speed": speed,
        "steer": steer,
    }, separators=(",", ":"))


class TeleopServer:
    def __init__(self, ep: EpisodeConfig, cfg: Config, port: int,
                 host: str = "127.0.0.1", realtime: bool = True):
        self.cfg = cfg
        self.mailbox = Mailbox()
        self.queue = FrameQueue()
        self.record_flag = threading.Event()
        controller = TeleopController(cfg, self.mailbox)
        self.runner = EpisodeRunner(ep, cfg, controller,
                                    record_enabled=self.record_flag.is_set)
        self.realtime = realtime
        self.connected = threading.Event()
        self.done = threading.Event()
        self._warned_types = set()
        self.listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.listener.bind((host, port))
        self.listener.listen(1)
        self.listener.settimeout(0.2)
        self.port = self.listener.getsockname()[1]

    # ------------------------------------------------------------- session

    def _detect_transport(self, conn: socket.socket):
        conn.settimeout(2.0)
        first = conn.recv(4, socket.MSG_PEEK)
        if first.startswith(b"GET"):
            # read the whole HTTP request head
            head = b""
            while b"\r\n\r\n" not in head and len(head) < 65536:
                chunk = conn.recv(4096)
                if not chunk:
                    return None
                head += chunk
            ws = WebSocketTransport.handshake(conn, head)
            if ws is not None:
                conn.setblocking(False)
                return ws
            conn.sendall(b"HTTP/1.1 200 OK\r\nContent-Type: text/plain\r\n\r\n"
                         b"lanekeeper teleop endpoint; connect a teleop client\n")
            return None
        conn.setblocking(False)
        return NdjsonTransport(conn)

    def _handle_message(self, msg: dict):
        mtype = msg.get("type")
        if mtype == "cmd":
            steer = min(max(float(msg.get("steer", 0.0)), -1.0), 1.0)
            speed = min(max(float(msg.get("speed", 0.0)), 0.0), 1.0)
            self.mailbox.put(steer, speed, time.monotonic())
        elif mtype == "session":
            if bool(msg.get("record", False)):
                self.record_flag.set()
            else:
                self.record_flag.clear()
        else:
            if mtype not in self._warned_types:
                self._warned_types.add(mtype)
                log.warning("ignoring unknown message type %r", mtype)

    def _session_loop(self):
        while not self.done.is_set():
            try:
                conn, _ = self.listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                transport = self._detect_transport(conn)
            except OSError:
                transport = None
            if transport is None:
                try:
                    conn.close()
                except OSError:
                    pass
                continue
            self.connected.set()
            try:
                self._client_loop(transport)
            finally:
                self.connected.clear()
                transport.close()

    def _client_loop(self, transport):
        while not self.done.is_set():
            readable, _, _ = select.select([transport.conn], [], [], 0.02)
            if readable:
                lines = transport.recv_lines()
                if lines is None:
                    return
                for line in lines:
                    try:
                        msg = json.loads(line)
                    except json.JSONDecodeError:
                        log.warning("ignoring unparsable message %.80r", line)
                        continue
                    self._handle_message(msg)
            for line in self.queue.drain():
                try:
                    transport.send_line(line)
                except OSError:
                    return
        # episode over: flush the end-of-session message
        for line in self.queue.drain():
            try:
                transport.send_line(line)
            except OSError:
                return

    # ----------------------------------------------------------------- run

    def serve(self):
        session = threading.Thread(target=self._session_loop, daemon=True)
        session.start()
        runner = self.runner
        stream_period = 1.0 / self.cfg.frame_stream_hz
        next_stream = 0.0
        seq = 0
        next_tick = time.monotonic()
        try:
            while True:
                if not self.connected.is_set():
                    time.sleep(0.05)
                    next_tick = time.monotonic()
                    continue
                if not runner.tick():
                    break
                t = runner.tick_index * runner.ep.tick
                if runner.frame is not None and t >= next_stream:
                    next_stream = t + stream_period
                    seq += 1
                    self.queue.put(encode_frame_message(
                        seq, runner.frame, runner.pose,
                        runner.lap_state.laps_completed,
                        runner.cmd.linear_x, runner.cmd.angular_z))
                if self.realtime:
                    next_tick += runner.ep.tick
                    delay = next_tick - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
            metrics = runner.metrics()
            self.queue.put(json.dumps(
                {"type": "end", "metrics": metrics.to_json_dict()},
                separators=(",", ":")))
            time.sleep(0.3)  # give the session a chance to flush
            return metrics
        finally:
            self.done.set()
            self.listener.close()
            session.join(timeout=2.0)


def serve(ep: EpisodeConfig, cfg: Config, port: int, host: str = "127.0.0.1",
          realtime: bool = True):
    server = TeleopServer(ep, cfg, port, host, realtime)
    log.info("teleop server listening on %s:%d", host, server.port)
    metrics = server.serve()
    if server.runner.dataset is not None and ep.record_path:
        server.runner.dataset.save(ep.record_path)
    return metrics
