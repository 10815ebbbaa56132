"""Line-delimited JSON adapter for models running in another process.

Harness -> model, once:   {"features": [name, ...]}
Harness -> model:         {"rows": [[v, ...], ...]}
Model -> harness:         {"preds": [p, ...]}      (one line per request)
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
from typing import Sequence

import numpy as np

from .errors import ModelError, ProtocolError
from .models import PredictionModel

MAX_BATCH = 4096
DEFAULT_TIMEOUT = 30.0


def encode_rows(X: np.ndarray) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps({"rows": [[float(v) for v in row] for row in X]}, allow_nan=False)


def decode_preds(line: str, expected: int) -> np.ndarray:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError:
        raise ProtocolError(f"malformed reply line: {line[:80]!r}") from None
    if not isinstance(msg, dict) or set(msg) != {"preds"} or not isinstance(msg["preds"], list):
        raise ProtocolError(f"reply must be exactly {{\"preds\": [...]}}: {line[:80]!r}")
    preds = msg["preds"]
    if len(preds) != expected:
        raise ProtocolError(f"sent {expected} rows, received {len(preds)} predictions")
    for p in preds:
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not math.isfinite(p):
            raise ProtocolError(f"prediction {p!r} is not a finite number")
    return np.asarray(preds, dtype=float)


class ExternalModel(PredictionModel):
    """PredictionModel backed by a subprocess speaking the wire protocol.

    Requests are serialised by a lock, so concurrent callers are safe.
    """

    def __init__(self, command, features: Sequence[str], timeout: float = DEFAULT_TIMEOUT,
                 batch_size: int = MAX_BATCH):
        self.features = tuple(features)
        self.timeout = timeout
        self.batch_size = min(int(batch_size), MAX_BATCH)
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.command = argv
        try:
            self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                          text=True, encoding="utf-8", bufsize=1)
        except OSError as exc:
            raise ModelError(f"cannot start external model {argv!r}: {exc}") from None
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._lock = threading.Lock()
        self._send(json.dumps({"features": list(self.features)}))

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _send(self, line: str):
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise ModelError(f"external model exited (status {self._proc.poll()})") from None

    def _receive(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close()
            raise ModelError(f"external model timed out after {self.timeout} s") from None
        if line is None:
            self._proc.wait(timeout=5)
            raise ModelError(f"external model exited (status {self._proc.returncode})")
        return line

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        if not np.all(np.isfinite(X)):
            raise ModelError("rows must be finite to cross the wire")
        out = []
        with self._lock:
            for start in range(0, X.shape[0], self.batch_size):
                chunk = X[start:start + self.batch_size]
                self._send(encode_rows(chunk))
                out.append(decode_preds(self._receive(), len(chunk)))
        return np.concatenate(out) if out else np.zeros(0)

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def external_model(command, features: Sequence[str], timeout: float = DEFAULT_TIMEOUT) -> ExternalModel:
    return ExternalModel(command, features, timeout)
