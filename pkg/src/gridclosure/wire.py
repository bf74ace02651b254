"""Newline-delimited JSON wire protocol for external agents.

Server-to-client lines carry ``kind`` (observation | settlement) and a
``protocol`` version field; client-to-server lines are raw Block-4 action
objects, exactly one per turn. One episode is served per connection. A
missed turn deadline counts as an invalid action (the episode continues);
a dropped transport settles the episode as aborted, reported separately
from FR/NR/IL.
"""

import socket
from typing import Optional

from .canon import canon_dumps
from .engine import PROTOCOL_VERSION, AgentDisconnect, AgentTimeout, RunConfig, run_episode
from .episodes import EpisodeSpec
from .settlement import Trace

DEFAULT_TURN_TIMEOUT = 30.0


def settlement_line(trace: Trace) -> str:
    payload = {
        "kind": "settlement",
        "protocol": PROTOCOL_VERSION,
        "episode_id": trace.episode_id,
    }
    payload.update(trace.settlement.to_dict())
    return canon_dumps(payload)


class _LineChannel:
    """Buffered line IO over a socket that stays usable after a read
    timeout (a plain makefile reader does not)."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.buffer = bytearray()

    def readline(self) -> bytes:
        while True:
            newline = self.buffer.find(b"\n")
            if newline >= 0:
                line = bytes(self.buffer[: newline + 1])
                del self.buffer[: newline + 1]
                return line
            chunk = self.sock.recv(65536)
            if not chunk:
                remainder = bytes(self.buffer)
                self.buffer.clear()
                return remainder
            self.buffer.extend(chunk)

    def writeline(self, text: str) -> None:
        self.sock.sendall((text + "\n").encode("utf-8"))


def serve_episode_on_channel(spec: EpisodeSpec, readline, writeline, config: RunConfig) -> Trace:
    """Serve one episode over any line-oriented channel.

    ``readline`` returns the next line without its terminator, or None on
    EOF, and may raise AgentTimeout when the transport arms deadlines;
    ``writeline`` sends one line. Works for sockets and standard streams
    alike.
    """

    def step(ctx) -> str:
        try:
            writeline(canon_dumps(ctx.payload))
        except OSError:
            raise AgentDisconnect()
        try:
            line = readline()
        except AgentTimeout:
            raise
        except (TimeoutError, socket.timeout):
            raise AgentTimeout()
        except OSError:
            raise AgentDisconnect()
        if line is None:
            raise AgentDisconnect()
        return line

    trace = run_episode(spec, step, config)
    try:
        writeline(settlement_line(trace))
    except OSError:
        pass
    return trace


def serve_episode_on_streams(spec: EpisodeSpec, rfile, wfile, config: RunConfig) -> Trace:
    """Serve one episode over a text-stream pair (for stdio transports)."""

    def readline():
        line = rfile.readline()
        if not line:
            return None
        return line.rstrip("\r\n")

    def writeline(text: str) -> None:
        wfile.write(text + "\n")
        wfile.flush()

    return serve_episode_on_channel(spec, readline, writeline, config)


def serve_episode_on_socket(
    spec: EpisodeSpec,
    conn: socket.socket,
    config: RunConfig,
    turn_timeout: Optional[float] = DEFAULT_TURN_TIMEOUT,
) -> Trace:
    """Serve one episode over a connected socket and return its trace."""
    conn.settimeout(turn_timeout)
    channel = _LineChannel(conn)

    def readline():
        line = channel.readline()
        if not line:
            return None
        return line.decode("utf-8").rstrip("\r\n")

    return serve_episode_on_channel(spec, readline, channel.writeline, config)


class WireServer:
    """Serves a fixed episode list, one episode per accepted connection."""

    def __init__(self, episodes, config_for, host: str = "127.0.0.1", port: int = 0,
                 turn_timeout: float = DEFAULT_TURN_TIMEOUT):
        self.episodes = list(episodes)
        self.config_for = config_for  # spec -> RunConfig
        self.turn_timeout = turn_timeout
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(8)

    @property
    def address(self):
        return self.sock.getsockname()

    def serve_all(self, on_trace=None) -> list:
        """Accept one connection per episode, in episode order."""
        traces = []
        try:
            for spec in self.episodes:
                conn, _ = self.sock.accept()
                try:
                    trace = serve_episode_on_socket(
                        spec, conn, self.config_for(spec), self.turn_timeout
                    )
                finally:
                    try:
                        conn.close()
                    except OSError:
                        pass
                traces.append(trace)
                if on_trace is not None:
                    on_trace(trace)
        finally:
            self.sock.close()
        return traces
