"""JSON-RPC 2.0 gateway: in-process service registry, method dispatch with
stable error codes, and an HTTP server exposing POST /rpc and GET /healthz.

Error codes: -32700 parse, -32601 method not found, -32602 invalid params;
application errors use the per-error codes >= 1000 from ``errors.ERROR_CODES``
(machine-readable via ``rpc.describe``).
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from .errors import DuplicateService, ERROR_CODES, GridHelmError, UnknownService

log = logging.getLogger(__name__)

PARSE_ERROR = -32700
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


class Registry:
    """In-process service lookup standing in for peer-to-peer discovery."""

    def __init__(self):
        self._services: dict[str, dict] = {}

    def register(self, service_name: str, methods: dict[str, Callable],
                 read_only: Optional[set[str]] = None, url: str = "local:/rpc") -> None:
        if service_name in self._services:
            raise DuplicateService(service_name)
        self._services[service_name] = {
            "methods": dict(methods),
            "read_only": set(read_only or ()),
            "url": url,
        }

    def lookup(self, service_name: str) -> dict:
        svc = self._services.get(service_name)
        if svc is None:
            raise UnknownService(service_name)
        return {"service": service_name, "methods": sorted(svc["methods"]), "url": svc["url"]}

    def list_services(self) -> list[str]:
        return sorted(self._services)

    def resolve(self, method: str) -> tuple[Callable, bool]:
        if "." not in method:
            raise UnknownService(method)
        service_name, method_name = method.split(".", 1)
        svc = self._services.get(service_name)
        if svc is None or method_name not in svc["methods"]:
            raise UnknownService(method)
        return svc["methods"][method_name], method_name in svc["read_only"]


class RpcGateway:
    def __init__(self, registry: Registry):
        self.registry = registry
        self._lock = threading.RLock()
        registry.register(
            "rpc",
            {
                "describe": self._describe,
                "lookup": lambda service_name: registry.lookup(service_name),
                "list": lambda: registry.list_services(),
            },
            read_only={"describe", "lookup", "list"},
        )

    def _describe(self) -> dict:
        return {
            "services": self.registry.list_services(),
            "error_codes": {
                str(PARSE_ERROR): "ParseError",
                str(METHOD_NOT_FOUND): "MethodNotFound",
                str(INVALID_PARAMS): "InvalidParams",
                **{str(code): name for code, name in sorted(ERROR_CODES.items())},
            },
        }

    def dispatch(self, request: dict) -> dict:
        req_id = request.get("id") if isinstance(request, dict) else None
        if not isinstance(request, dict) or request.get("jsonrpc") != "2.0" or "method" not in request:
            return _error(req_id, INVALID_PARAMS, "not a JSON-RPC 2.0 request")
        method = request["method"]
        params = request.get("params") or {}
        if not isinstance(params, dict):
            return _error(req_id, INVALID_PARAMS, "params must be an object")
        try:
            handler, read_only = self.registry.resolve(method)
        except UnknownService:
            return _error(req_id, METHOD_NOT_FOUND, f"method not found: {method}")
        try:
            if read_only:
                result = handler(**params)
            else:
                with self._lock:
                    result = handler(**params)
        except TypeError as exc:
            return _error(req_id, INVALID_PARAMS, str(exc))
        except GridHelmError as exc:
            return _error(req_id, exc.code, str(exc), data={"error": exc.name})
        except Exception as exc:  # pragma: no cover - defensive
            log.exception("internal error in %s", method)
            return _error(req_id, INTERNAL_ERROR, str(exc))
        return {"jsonrpc": "2.0", "result": result, "id": req_id}

    def dispatch_raw(self, body: bytes) -> dict:
        try:
            request = json.loads(body)
        except (ValueError, UnicodeDecodeError):
            return _error(None, PARSE_ERROR, "invalid JSON")
        return self.dispatch(request)


def _error(req_id, code: int, message: str, data: Optional[dict] = None) -> dict:
    err = {"code": code, "message": message}
    if data is not None:
        err["data"] = data
    return {"jsonrpc": "2.0", "error": err, "id": req_id}


class _Handler(BaseHTTPRequestHandler):
    gateway: RpcGateway = None
    protocol_version = "HTTP/1.1"  # keep-alive; every response carries Content-Length
    disable_nagle_algorithm = True  # headers and body go in separate writes

    def log_message(self, fmt, *args):  # quiet by default
        log.debug(fmt, *args)

    def do_GET(self):
        if self.path == "/healthz":
            body = b'{"status":"ok"}'
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            self.send_error(404)

    def do_POST(self):
        if self.path != "/rpc":
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        response = json.dumps(self.gateway.dispatch_raw(body)).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(response)))
        self.end_headers()
        self.wfile.write(response)


class _Server(ThreadingHTTPServer):
    request_queue_size = 128  # survive concurrent connection bursts


class GatewayServer:
    """Threaded HTTP server wrapper; start() binds, stop() shuts down."""

    def __init__(self, gateway: RpcGateway, host: str = "127.0.0.1", port: int = 0):
        handler = type("Handler", (_Handler,), {"gateway": gateway})
        self.httpd = _Server((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "GatewayServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


class RpcClient:
    """Minimal JSON-RPC client over a keep-alive HTTP connection."""

    def __init__(self, url: str, timeout: float = 30.0):
        import http.client
        import urllib.parse

        parsed = urllib.parse.urlsplit(url if "//" in url else f"http://{url}")
        self._host = parsed.hostname or "127.0.0.1"
        self._port = parsed.port or 80
        self.url = f"http://{self._host}:{self._port}"
        self.timeout = timeout
        self._id = 0
        self._http = http.client
        self._conn = None

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def _post(self, payload: str) -> bytes:
        if self._conn is None:
            self._conn = self._http.HTTPConnection(self._host, self._port, timeout=self.timeout)
        self._conn.request("POST", "/rpc", payload, {"Content-Type": "application/json"})
        return self._conn.getresponse().read()

    def call(self, method: str, **params):
        self._id += 1
        payload = json.dumps({"jsonrpc": "2.0", "method": method, "params": params, "id": self._id})
        try:
            body = self._post(payload)
        except (self._http.HTTPException, OSError):
            self.close()  # stale keep-alive connection; retry on a fresh one
            body = self._post(payload)
        doc = json.loads(body)
        if "error" in doc:
            raise RpcError(doc["error"])
        return doc["result"]


class RpcError(Exception):
    def __init__(self, error: dict):
        self.code = error.get("code")
        self.data = error.get("data") or {}
        super().__init__(f"rpc error {self.code}: {error.get('message')}")
