"""Newline-delimited JSON serving loop.

Frames are one JSON object per line.  The client opens with
{"type": "hello", "version": 1}; the server answers
{"type": "ready", "num_classes", "height", "width", "channels"} and then
answers each {"type": "query", "id", "pixels": base64 u8} with
{"type": "label", "id", "label"}.  Anything unparseable or out of order
gets {"type": "error", "id", "message"} and the connection stays open;
shape complaints are the only errors whose message starts with "shape".
"""

import base64
import binascii
import json
import logging
import socket
import sys

import numpy as np

log = logging.getLogger("par_oracle")

WIRE_VERSION = 1


def _frame(**fields):
    return (json.dumps(fields, sort_keys=True) + "\n").encode("utf-8")


def serve_connection(model, read_line, write_line):
    """Answer frames until EOF.  read_line() yields bytes, empty at EOF."""
    ready = False
    expected_bytes = int(np.prod(model.shape))
    while True:
        line = read_line()
        if not line:
            return
        line = line.strip()
        if not line:
            continue
        try:
            frame = json.loads(line.decode("utf-8"))
            if not isinstance(frame, dict):
                raise ValueError("frame is not an object")
        except (ValueError, UnicodeDecodeError):
            write_line(_frame(type="error", id=None,
                              message="malformed frame: expected one JSON object per line"))
            continue
        kind = frame.get("type")
        qid = frame.get("id")
        if not isinstance(qid, (int, type(None))):
            qid = None
        if kind == "hello":
            if frame.get("version") != WIRE_VERSION:
                write_line(_frame(type="error", id=None,
                                  message="unsupported protocol version %r"
                                          % (frame.get("version"),)))
                continue
            ready = True
            h, w, c = model.shape
            write_line(_frame(type="ready", num_classes=model.num_classes,
                              height=h, width=w, channels=c))
        elif kind == "query":
            if not ready:
                write_line(_frame(type="error", id=qid,
                                  message="handshake required before queries"))
                continue
            if qid is None:
                write_line(_frame(type="error", id=None,
                                  message="query frame needs an integer id"))
                continue
            try:
                raw = base64.b64decode(str(frame.get("pixels", "")),
                                       validate=True)
            except (binascii.Error, ValueError):
                write_line(_frame(type="error", id=qid,
                                  message="malformed frame: pixels must be base64"))
                continue
            if len(raw) != expected_bytes:
                write_line(_frame(
                    type="error", id=qid,
                    message="shape mismatch: expected %d bytes for %dx%dx%d, got %d"
                            % (expected_bytes, model.shape[0], model.shape[1],
                               model.shape[2], len(raw))))
                continue
            img = np.frombuffer(raw, dtype=np.uint8).reshape(model.shape)
            try:
                label = int(model.predict(img))
            except Exception as e:  # keep serving; one bad frame, one error
                log.warning("model failed on a query: %s", e)
                write_line(_frame(type="error", id=qid,
                                  message="model failure: %s" % e))
                continue
            write_line(_frame(type="label", id=qid, label=label))
        else:
            write_line(_frame(type="error", id=qid,
                              message="unknown frame type %r" % (kind,)))


def serve_stdio(model):
    """Protocol on stdin/stdout; logs belong on stderr only."""
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    def write_line(data):
        stdout.write(data)
        stdout.flush()

    serve_connection(model, stdin.readline, write_line)


def serve_tcp(model, port, announce=None):
    """One connection at a time; queued clients are accepted in order.

    announce(actual_port) runs once the socket listens, so callers using
    port 0 learn the ephemeral port.
    """
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind(("127.0.0.1", int(port)))
    srv.listen(8)
    if announce is not None:
        announce(srv.getsockname()[1])
    try:
        while True:
            conn, peer = srv.accept()
            log.info("client connected from %s:%d", *peer)
            reader = conn.makefile("rb")

            def write_line(data, _conn=conn):
                _conn.sendall(data)

            try:
                serve_connection(model, reader.readline, write_line)
            except OSError as e:
                log.warning("connection dropped: %s", e)
            finally:
                reader.close()
                conn.close()
                log.info("client disconnected")
    finally:
        srv.close()
