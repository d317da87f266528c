"""Read-only HTTP editing service.

Endpoints (JSON in, JSON out; images travel as flat float lists plus a
shape):

* ``GET  /model-info`` — dimensions, attribute names, editing interval.
* ``POST /encode``     — {image} -> {y_hat, z}.
* ``POST /edit``       — {image, target_class | edits} ->
                         {image_out, y_hat, y_hat_edited}.
* ``POST /decode``     — {y_hat, z} -> {image_out}.

Malformed bodies get 400 with the offending field named; edit values
outside the configured interval get 422.  The handler works on a private
copy of the parameters taken at construction, so concurrent requests all
see the same immutable model.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .editing import (DEFAULT_EDIT_INTERVAL, EditRequest, IntervalError,
                      synthesize)
from .networks import Model, ModelParams


class RequestError(ValueError):
    """Client error; ``field`` names the bad part of the body."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(message)


def _float_list(body: dict, field: str, length: int) -> np.ndarray:
    if field not in body:
        raise RequestError(field, f"{field}: required field missing")
    raw = body[field]
    if not isinstance(raw, list):
        raise RequestError(field, f"{field}: expected a flat number array")
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise RequestError(field, f"{field}: expected a flat number array")
    if arr.ndim != 1 or arr.shape[0] != length:
        raise RequestError(
            field, f"{field}: expected {length} numbers, got shape "
                   f"{list(arr.shape)}")
    if not np.all(np.isfinite(arr)):
        raise RequestError(field, f"{field}: values must be finite")
    return arr


class EditingService:
    """Immutable model snapshot plus the request/response logic.

    Kept separate from the HTTP plumbing so tests can call the JSON-level
    methods directly.
    """

    def __init__(self, params: ModelParams, *, attribute_names=None,
                 interval=DEFAULT_EDIT_INTERVAL):
        self.params = params.copy()
        self.model = Model(self.params)
        spec = self.params.spec
        names = list(attribute_names or
                     (f"attr_{i}" for i in range(spec.target_dim)))
        if len(names) != spec.target_dim:
            raise ValueError(f"{len(names)} attribute names for "
                             f"{spec.target_dim} targets")
        self.attribute_names = [str(n) for n in names]
        lo, hi = float(interval[0]), float(interval[1])
        if not lo < hi:
            raise ValueError("editing interval must satisfy lo < hi")
        self.interval = (lo, hi)
        side = int(round(spec.image_dim ** 0.5))
        self.image_shape = ([side, side] if side * side == spec.image_dim
                            else [spec.image_dim])

    # -- endpoint bodies -------------------------------------------------

    def model_info(self) -> dict:
        spec = self.params.spec
        return {
            "image_dim": spec.image_dim,
            "image_shape": list(self.image_shape),
            "target_dim": spec.target_dim,
            "latent_dim": spec.latent_dim,
            "target_kind": spec.target_kind,
            "attribute_names": list(self.attribute_names),
            "editing_interval": list(self.interval),
            "image_range": list(self.params.spec.image_range),
        }

    def encode(self, body: dict) -> dict:
        spec = self.params.spec
        x = _float_list(body, "image", spec.image_dim)[None, :]
        return {
            "y_hat": self.model.soft_targets(x)[0].tolist(),
            "z": self.model.latent(x)[0].tolist(),
        }

    def decode(self, body: dict) -> dict:
        spec = self.params.spec
        y = _float_list(body, "y_hat", spec.target_dim)[None, :]
        z = _float_list(body, "z", spec.latent_dim)[None, :]
        image = self.model.decode(y, z)[0]
        return {"image_out": image.tolist(),
                "shape": list(self.image_shape)}

    def _edit_request(self, body: dict) -> EditRequest:
        spec = self.params.spec
        if spec.target_kind == "multiclass":
            if "target_class" not in body:
                raise RequestError("target_class",
                                   "target_class: required for a "
                                   "multiclass model")
            tc = body["target_class"]
            if not isinstance(tc, int) or isinstance(tc, bool):
                raise RequestError("target_class",
                                   "target_class: expected an integer")
            if not 0 <= tc < spec.target_dim:
                raise RequestError(
                    "target_class",
                    f"target_class: {tc} out of range for "
                    f"{spec.target_dim} classes")
            return EditRequest(mode="multiclass", target_class=tc,
                               interval=self.interval)
        if "edits" not in body:
            raise RequestError("edits",
                               "edits: required for a multilabel model")
        raw = body["edits"]
        if (not isinstance(raw, list)
                or not all(isinstance(p, list) and len(p) == 2
                           for p in raw)):
            raise RequestError("edits",
                               "edits: expected a list of [index, value] "
                               "pairs")
        pairs = []
        seen = set()
        for idx, value in raw:
            if not isinstance(idx, int) or isinstance(idx, bool):
                raise RequestError("edits",
                                   "edits: attribute index must be an "
                                   "integer")
            if not 0 <= idx < spec.target_dim:
                raise RequestError(
                    "edits", f"edits: attribute index {idx} out of range "
                             f"for {spec.target_dim} attributes")
            if idx in seen:
                raise RequestError(
                    "edits", f"edits: duplicate attribute index {idx}")
            seen.add(idx)
            if not isinstance(value, (int, float)) or isinstance(value,
                                                                 bool):
                raise RequestError("edits",
                                   "edits: values must be numbers")
            pairs.append((idx, float(value)))
        # EditRequest re-validates against the interval; out-of-range
        # values surface as IntervalError (HTTP 422), not a 400.
        return EditRequest(mode="multilabel", assignments=tuple(pairs),
                           interval=self.interval)

    def edit(self, body: dict) -> dict:
        spec = self.params.spec
        x = _float_list(body, "image", spec.image_dim)
        request = self._edit_request(body)
        result = synthesize(self.params, x, request)
        return {
            "image_out": result.image.tolist(),
            "shape": list(self.image_shape),
            "y_hat": result.soft_targets.tolist(),
            "y_hat_edited": result.edited_targets.tolist(),
        }


class _Handler(BaseHTTPRequestHandler):
    service: EditingService  # set on the subclass by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _send(self, status: int, payload: dict) -> None:
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(blob)

    def do_OPTIONS(self):
        # CORS preflight: browsers send this before a JSON POST from
        # another origin (the editor page is served separately).
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        if self.path.rstrip("/") == "/model-info":
            self._send(200, self.service.model_info())
        else:
            self._send(404, {"error": f"no such endpoint {self.path}"})

    def do_POST(self):
        routes = {"/encode": self.service.encode,
                  "/edit": self.service.edit,
                  "/decode": self.service.decode}
        handler = routes.get(self.path.rstrip("/"))
        if handler is None:
            self._send(404, {"error": f"no such endpoint {self.path}"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        try:
            body = json.loads(self.rfile.read(length) or b"")
        except json.JSONDecodeError as exc:
            self._send(400, {"error": f"body: invalid JSON ({exc})",
                             "field": "body"})
            return
        if not isinstance(body, dict):
            self._send(400, {"error": "body: expected a JSON object",
                             "field": "body"})
            return
        try:
            self._send(200, handler(body))
        except IntervalError as exc:
            self._send(422, {"error": str(exc), "field": "edits"})
        except RequestError as exc:
            self._send(400, {"error": str(exc), "field": exc.field})


def make_server(service: EditingService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    """Bind a threading HTTP server; port 0 picks a free port."""
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(service: EditingService, host: str, port: int) -> None:
    server = make_server(service, host, port)
    bound = server.server_address
    print(f"serving on http://{bound[0]}:{bound[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def run_in_thread(service: EditingService,
                  host: str = "127.0.0.1") -> tuple[ThreadingHTTPServer,
                                                    threading.Thread, str]:
    """Start a server on an ephemeral port; returns (server, thread, url)."""
    server = make_server(service, host, 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host_, port_ = server.server_address
    return server, thread, f"http://{host_}:{port_}"
