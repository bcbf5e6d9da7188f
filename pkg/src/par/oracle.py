"""Hard-label oracles: the contract, query accounting, synthetic oracles
with closed-form ground truth, and the wire-protocol client for external
model servers.

Every oracle answers only a class label.  QueryCounter meters calls and
refuses to exceed its cap.  PatchEnergyOracle flips labels when a weighted
sum of per-region noise norms crosses a threshold, which makes the minimum
compression ratio of any region analytic (energy_oracle_sens), so search
code can be validated against exact answers.
"""

import base64
import json
import os
import select
import socket
import subprocess
import threading

import numpy as np

from .core import is_rounded, round_for_query
from .errors import (BudgetExhausted, ContractViolation, OracleUnavailable,
                     ProtocolError, ShapeRejected, UnroundedInput)
from .kernels import patch_l2_norms, region_weighted_energy


class OracleContract:
    """Deterministic hard-label classifier interface.

    classify maps an (H, W, C) float64 image to an int label and never
    mutates its input.  concurrent_safe declares whether independent
    threads may call classify simultaneously.
    """

    num_classes = 2
    concurrent_safe = True

    def classify(self, img):
        raise NotImplementedError


class QueryCounter:
    """Counts oracle calls; trips BudgetExhausted before the cap is crossed.

    Calls are reserved before the oracle runs and rolled back if the oracle
    raises, so `used` equals the number of completed, labeled queries.
    """

    def __init__(self, limit=None):
        if limit is not None and limit < 1:
            raise ContractViolation("query limit must be positive, got %r" % (limit,))
        self.limit = limit
        self.used = 0
        self._lock = threading.Lock()

    @property
    def remaining(self):
        if self.limit is None:
            return None
        return self.limit - self.used

    def _reserve(self):
        with self._lock:
            if self.limit is not None and self.used >= self.limit:
                raise BudgetExhausted(
                    "query budget %d exhausted" % self.limit)
            self.used += 1

    def _rollback(self):
        with self._lock:
            self.used -= 1


def classify_counted(oracle, counter, img, require_rounded=True):
    """Route one classify call through the counter.

    require_rounded=False admits non-integral pixels; the sensitivity lab
    uses this to probe continuous-response oracles exactly.  The attack
    path always passes rounded images.
    """
    img = np.asarray(img, dtype=np.float64)
    if require_rounded and not is_rounded(img):
        raise UnroundedInput("query image has non-integral pixels")
    counter._reserve()
    try:
        label = oracle.classify(img)
    except BaseException:
        counter._rollback()
        raise
    return int(label)


class PatchEnergyOracle(OracleContract):
    """Synthetic classifier with controllable per-region noise sensitivity.

    Labels adversarial_label exactly when

        sum_r weights[r] * ||(q - reference) restricted to region r||_2 >= threshold

    (closed success set, so the minimal compression ratio is attained).
    quantize=True rounds the query first, mirroring a uint8 model input
    path; quantize=False responds to the raw float image, which the
    exact-agreement tests rely on.
    """

    def __init__(self, reference, region_grid, weights, threshold,
                 original_label=0, adversarial_label=1, quantize=True):
        reference = np.asarray(reference, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if tuple(reference.shape) != tuple(region_grid.image_shape):
            raise ContractViolation(
                "reference shape %r does not match region grid %r"
                % (reference.shape, region_grid.image_shape))
        if weights.shape != (region_grid.rows, region_grid.cols):
            raise ContractViolation(
                "weights must be %dx%d, got %r"
                % (region_grid.rows, region_grid.cols, weights.shape))
        if np.any(weights < 0):
            raise ContractViolation("region weights must be non-negative")
        if threshold <= 0:
            raise ContractViolation("threshold must be positive, got %r" % (threshold,))
        if original_label == adversarial_label:
            raise ContractViolation("labels must differ")
        self.reference = reference
        self.region_grid = region_grid
        self.weights = weights
        self.threshold = float(threshold)
        self.original_label = int(original_label)
        self.adversarial_label = int(adversarial_label)
        self.quantize = quantize
        self.num_classes = max(original_label, adversarial_label) + 1
        self.concurrent_safe = True

    def energy(self, img):
        img = np.asarray(img, dtype=np.float64)
        if self.quantize:
            img = round_for_query(img)
        return region_weighted_energy(img - self.reference,
                                      self.region_grid.patch_size, self.weights)

    def classify(self, img):
        if self.energy(img) >= self.threshold:
            return self.adversarial_label
        return self.original_label


def energy_oracle_sens(oracle, x, x_adv, row, col):
    """Closed-form minimal compression ratio of region (row, col).

    With e_r the per-region norms of x_adv - x and S their weighted sum,
    scaling region r's noise by k leaves the label adversarial iff
    S - w_r e_r + k w_r e_r >= theta, so k_min = (theta - S + w_r e_r) /
    (w_r e_r), clamped at 0.  Exact for Definition-1 purposes when x is the
    oracle's reference and quantize is off.
    """
    x = np.asarray(x, dtype=np.float64)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    grid = oracle.region_grid
    e = patch_l2_norms(x_adv - x, grid.patch_size)
    grid._check_index(row, col)
    s_total = float(np.sum(oracle.weights * e))
    w_e = float(oracle.weights[row, col] * e[row, col])
    if w_e == 0.0:
        return 0.0
    return max(0.0, (oracle.threshold - (s_total - w_e)) / w_e)


class LinearOracle(OracleContract):
    """Argmax of per-class affine scores; ties go to the smaller label."""

    def __init__(self, weights, biases, quantize=True):
        weights = np.asarray(weights, dtype=np.float64)
        biases = np.asarray(biases, dtype=np.float64)
        if weights.ndim != 2 or biases.ndim != 1 or weights.shape[0] != biases.shape[0]:
            raise ContractViolation(
                "need (num_classes, n_features) weights and (num_classes,) biases")
        if weights.shape[0] < 2:
            raise ContractViolation("need at least two classes")
        self.weights = weights
        self.biases = biases
        self.quantize = quantize
        self.num_classes = int(weights.shape[0])
        self.concurrent_safe = True

    def classify(self, img):
        img = np.asarray(img, dtype=np.float64)
        if self.quantize:
            img = round_for_query(img)
        flat = img.reshape(-1)
        if flat.shape[0] != self.weights.shape[1]:
            raise ContractViolation(
                "image has %d values, oracle expects %d"
                % (flat.shape[0], self.weights.shape[1]))
        return int(np.argmax(self.weights @ flat + self.biases))


# ---------------------------------------------------------------------------
# wire-protocol client
#
# Newline-delimited JSON over TCP or a child process's stdio:
#   client: {"type":"hello","version":1}
#   server: {"type":"ready","num_classes":N,"height":H,"width":W,"channels":C}
#   client: {"type":"query","id":k,"pixels":"<base64 u8, row-major, channel-last>"}
#   server: {"type":"label","id":k,"label":m}
#       or  {"type":"error","id":k,"message":s}

WIRE_VERSION = 1


class _TcpChannel:
    def __init__(self, host, port, timeout):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise OracleUnavailable("cannot connect to %s:%d: %s" % (host, port, e))
        self._buf = b""

    def send_line(self, data):
        try:
            self._sock.sendall(data + b"\n")
        except OSError as e:
            raise OracleUnavailable("send failed: %s" % e)

    def recv_line(self, timeout):
        self._sock.settimeout(timeout)
        while b"\n" not in self._buf:
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise OracleUnavailable("timed out after %gs waiting for reply" % timeout)
            except OSError as e:
                raise OracleUnavailable("receive failed: %s" % e)
            if not chunk:
                raise OracleUnavailable("server closed the connection")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class _StdioChannel:
    """Line transport over a child process's stdin/stdout."""

    def __init__(self, argv):
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as e:
            raise OracleUnavailable("cannot start %r: %s" % (argv, e))
        self._buf = b""
        self._fd = self._proc.stdout.fileno()

    def send_line(self, data):
        try:
            self._proc.stdin.write(data + b"\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as e:
            raise OracleUnavailable("send to child failed: %s" % e)

    def recv_line(self, timeout):
        while b"\n" not in self._buf:
            ready, _, _ = select.select([self._fd], [], [], timeout)
            if not ready:
                raise OracleUnavailable("timed out after %gs waiting for reply" % timeout)
            chunk = os.read(self._fd, 65536)
            if not chunk:
                raise OracleUnavailable("server process closed its output")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def close(self):
        proc = self._proc
        for stream in (proc.stdin, proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()


def _parse_frame(line):
    try:
        frame = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ProtocolError("malformed frame: %r" % line[:200])
    if not isinstance(frame, dict) or "type" not in frame:
        raise ProtocolError("frame without a type: %r" % line[:200])
    return frame


class WireOracle(OracleContract):
    """OracleContract view of a remote model speaking the wire protocol.

    One connection, one in-flight request; classify is serialized by a
    lock.  Timeouts and disconnects raise OracleUnavailable and are never
    retried, so a flaky server cannot silently double-spend query budget.
    """

    concurrent_safe = False

    def __init__(self, channel, timeout):
        self._chan = channel
        self._timeout = timeout
        self._next_id = 0
        self._lock = threading.Lock()
        self._closed = False
        self._chan.send_line(json.dumps(
            {"type": "hello", "version": WIRE_VERSION}).encode("utf-8"))
        frame = _parse_frame(self._chan.recv_line(timeout))
        if frame.get("type") == "error":
            raise ProtocolError("handshake rejected: %s" % frame.get("message"))
        if frame.get("type") != "ready":
            raise ProtocolError("expected ready frame, got %r" % frame.get("type"))
        try:
            self.num_classes = int(frame["num_classes"])
            self.height = int(frame["height"])
            self.width = int(frame["width"])
            self.channels = int(frame["channels"])
        except (KeyError, TypeError, ValueError):
            raise ProtocolError("ready frame missing shape fields: %r" % (frame,))

    @property
    def image_shape(self):
        return (self.height, self.width, self.channels)

    def classify(self, img):
        img = np.asarray(img, dtype=np.float64)
        if tuple(img.shape) != self.image_shape:
            raise ShapeRejected(
                "server expects %r, got %r" % (self.image_shape, img.shape))
        pixels = np.clip(round_for_query(img), 0, 255).astype(np.uint8)
        payload = base64.b64encode(pixels.tobytes()).decode("ascii")
        with self._lock:
            if self._closed:
                raise OracleUnavailable("connection already closed")
            qid = self._next_id
            self._next_id += 1
            self._chan.send_line(json.dumps(
                {"type": "query", "id": qid, "pixels": payload}).encode("utf-8"))
            frame = _parse_frame(self._chan.recv_line(self._timeout))
        kind = frame.get("type")
        if kind == "error":
            message = str(frame.get("message", ""))
            if message.lower().startswith("shape"):
                raise ShapeRejected(message)
            raise ProtocolError("server error: %s" % message)
        if kind != "label":
            raise ProtocolError("expected label frame, got %r" % kind)
        if frame.get("id") != qid:
            raise ProtocolError(
                "response id %r does not match request id %d" % (frame.get("id"), qid))
        try:
            return int(frame["label"])
        except (KeyError, TypeError, ValueError):
            raise ProtocolError("label frame without a label: %r" % (frame,))

    def close(self):
        with self._lock:
            if not self._closed:
                self._closed = True
                self._chan.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def external_oracle_connect(endpoint, timeout=30.0):
    """Open a wire-protocol oracle.

    endpoint is "tcp:HOST:PORT" for a network server, or an argv list to
    spawn a child process and speak over its stdio.
    """
    if isinstance(endpoint, str):
        parts = endpoint.split(":")
        if len(parts) == 3 and parts[0] == "tcp":
            return WireOracle(_TcpChannel(parts[1], int(parts[2]), timeout), timeout)
        raise ContractViolation(
            "endpoint string must look like tcp:HOST:PORT, got %r" % endpoint)
    if isinstance(endpoint, (list, tuple)):
        return WireOracle(_StdioChannel(list(endpoint)), timeout)
    raise ContractViolation("endpoint must be a tcp string or an argv list")
