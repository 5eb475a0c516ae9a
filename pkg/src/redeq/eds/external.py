"""Adapter for equation discovery systems running as child processes.

The child reads one JSON request per line on stdin and answers each with
one JSON line on stdout::

    -> {"op": "fit", "columns": ["x0", "x1"], "rows": [[...], ...], "target": [...]}
    <- {"ok": true, "equation": "x0 * sin(x1)"}
    <- {"ok": false, "error": "message"}
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import threading

import numpy as np

from ..data import Dataset
from ..errors import EdsTimeout, FitFailed, ProtocolError
from ..expr import Expression, check_variables, parse_expression
from .base import EdsModel

__all__ = ["ExternalModel", "external_fit", "DEFAULT_TIMEOUT"]

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 120.0


def _argv(command):
    if isinstance(command, str):
        return shlex.split(command)
    return [str(c) for c in command]


class ExternalModel(EdsModel):
    """Keeps one child process alive across fits; restarts it after failures."""

    def __init__(self, command, timeout=DEFAULT_TIMEOUT):
        self.command = _argv(command)
        if not self.command:
            raise ValueError("empty launch command")
        self.timeout = float(timeout)
        self._proc = None
        self._lines = None
        self._lock = threading.Lock()

    def __repr__(self):
        return f"ExternalModel({shlex.join(self.command)!r}, timeout={self.timeout})"

    def __getstate__(self):
        # the child process stays with the parent; a copy starts its own
        return {"command": self.command, "timeout": self.timeout}

    def __setstate__(self, state):
        self.__init__(state["command"], state["timeout"])

    def _start(self):
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._lines = queue.Queue()
        threading.Thread(
            target=self._pump, args=(self._proc.stdout, self._lines), daemon=True
        ).start()

    @staticmethod
    def _pump(stream, lines):
        for line in stream:
            lines.put(line)
        lines.put(None)

    def close(self):
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def _kill(self):
        proc, self._proc = self._proc, None
        if proc is not None:
            proc.kill()
            proc.wait()

    def request(self, payload: dict) -> dict:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._start()
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except OSError as exc:
                self._kill()
                raise ProtocolError(f"child closed its input: {exc}") from None
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                self._kill()
                raise EdsTimeout(f"no reply within {self.timeout:g} s") from None
            if line is None:
                self._kill()
                raise ProtocolError("child exited without replying")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"reply is not JSON: {line.strip()[:80]!r}") from None
        if not isinstance(reply, dict) or not isinstance(reply.get("ok"), bool):
            raise ProtocolError(f"reply lacks a boolean 'ok': {line.strip()[:80]!r}")
        return reply

    def fit(self, data: Dataset, target=None) -> Expression:
        target = np.asarray(data.y if target is None else target, dtype=float)
        reply = self.request({
            "op": "fit",
            "columns": list(data.names),
            "rows": data.X.tolist(),
            "target": target.tolist(),
        })
        if not reply["ok"]:
            raise FitFailed(str(reply.get("error", "external model reported failure")))
        equation = reply.get("equation")
        if not isinstance(equation, str):
            raise ProtocolError("successful reply without an 'equation' string")
        expr = parse_expression(equation)
        check_variables(expr, data.n_vars)
        log.debug("external model proposed %s", expr)
        return expr


def external_fit(command, data: Dataset, target=None, timeout=DEFAULT_TIMEOUT) -> Expression:
    """One-shot fit through a freshly launched child process."""
    with ExternalModel(command, timeout) as model:
        return model.fit(data, target)
