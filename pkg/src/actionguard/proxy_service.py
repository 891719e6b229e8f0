"""Transparent mediation proxy for JSON-RPC tool servers.

Downstream clients speak newline-delimited JSON-RPC 2.0 to the proxy as
if it were the tool server. Each connection gets its own guard session
and its own upstream (spawned process or TCP peer). tools/call requests
run through check_action before any bytes reach upstream: allowed calls
are forwarded verbatim and their responses redacted when secret-shaped
values appear; denied calls are answered with a structured error and the
upstream never sees them; ask-tier calls are held for operator
resolution and time out to deny.

A separate admin HTTP endpoint serves the operator console: a
server-sent-event feed of decisions and pending approvals, plus the
resolve action. Admin and tool listeners are always distinct endpoints.
"""

from __future__ import annotations

import argparse
import asyncio
import hmac
import itertools
import json
import logging
import os
import shlex
import sys
from dataclasses import dataclass, field
from typing import Any, Optional
from urllib.parse import parse_qs, urlsplit

from .action_model import Capability, RawToolCall, Substrate
from .authority import GrantSpec, Issuer, Ttl
from .enforcement import Decision
from .guard_core import (
    CheckResult,
    Disposition,
    EXECUTING_DISPOSITIONS,
    Session,
    TaskSpec,
    check_action,
    open_session,
    record_tool_output,
    redact,
    resolve_pending,
)
from .ledger_audit import entry_to_json
from .policy import Policy, load_policy
from .risk_sim import digest_of
from .trust_pool import ProvenanceLabel

logger = logging.getLogger(__name__)

GUARD_DENIED_CODE = -32050
UPSTREAM_UNAVAILABLE_CODE = -32051
PARSE_ERROR_CODE = -32700

DEFAULT_ASK_TIMEOUT_SECS = 120.0


class UpstreamUnavailable(RuntimeError):
    pass


@dataclass
class ProxyConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 0
    upstream_cmd: Optional[str] = None
    upstream_host: Optional[str] = None
    upstream_port: Optional[int] = None
    admin_host: str = "127.0.0.1"
    admin_port: int = 0
    admin_token: str = ""
    ask_timeout_secs: float = DEFAULT_ASK_TIMEOUT_SECS

    def validate(self) -> None:
        if bool(self.upstream_cmd) == bool(self.upstream_host):
            raise ValueError("configure exactly one of upstream_cmd or upstream_host/port")
        same_endpoint = (
            self.listen_host == self.admin_host
            and self.listen_port == self.admin_port
            and self.listen_port != 0
        )
        if same_endpoint:
            raise ValueError("admin and tool listeners must be distinct endpoints")


def _id_key(request_id: Any) -> str:
    return json.dumps(request_id, sort_keys=True)


class _Upstream:
    """One upstream peer per downstream connection; raw byte forwarding."""

    def __init__(self) -> None:
        self._futures: dict[str, asyncio.Future] = {}
        self._writer: Optional[asyncio.StreamWriter] = None
        self._reader_task: Optional[asyncio.Task] = None
        self._proc: Optional[asyncio.subprocess.Process] = None
        self.closed = False

    @classmethod
    async def spawn(cls, cmd: str) -> "_Upstream":
        up = cls()
        try:
            up._proc = await asyncio.create_subprocess_exec(
                *shlex.split(cmd),
                stdin=asyncio.subprocess.PIPE,
                stdout=asyncio.subprocess.PIPE,
            )
        except OSError as exc:
            raise UpstreamUnavailable(str(exc)) from exc
        up._writer = up._proc.stdin
        up._reader_task = asyncio.create_task(up._read_loop(up._proc.stdout))
        return up

    @classmethod
    async def connect(cls, host: str, port: int) -> "_Upstream":
        up = cls()
        try:
            reader, writer = await asyncio.open_connection(host, port)
        except OSError as exc:
            raise UpstreamUnavailable(str(exc)) from exc
        up._writer = writer
        up._reader_task = asyncio.create_task(up._read_loop(reader))
        return up

    async def _read_loop(self, reader: asyncio.StreamReader) -> None:
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                try:
                    message = json.loads(line)
                except json.JSONDecodeError:
                    continue
                future = self._futures.pop(_id_key(message.get("id")), None)
                if future is not None and not future.done():
                    future.set_result((message, line.rstrip(b"\n")))
        finally:
            self.closed = True
            for future in self._futures.values():
                if not future.done():
                    future.set_exception(UpstreamUnavailable("upstream closed"))
            self._futures.clear()

    async def roundtrip(self, request_id: Any, raw_line: bytes) -> tuple[dict, bytes]:
        """Send the exact request bytes; await the correlated response."""
        if self.closed or self._writer is None:
            raise UpstreamUnavailable("upstream closed")
        future: asyncio.Future = asyncio.get_running_loop().create_future()
        self._futures[_id_key(request_id)] = future
        try:
            self._writer.write(raw_line + b"\n")
            await self._writer.drain()
        except (ConnectionError, BrokenPipeError, RuntimeError) as exc:
            self._futures.pop(_id_key(request_id), None)
            raise UpstreamUnavailable(str(exc)) from exc
        return await future

    async def send_only(self, raw_line: bytes) -> None:
        if self.closed or self._writer is None:
            raise UpstreamUnavailable("upstream closed")
        self._writer.write(raw_line + b"\n")
        await self._writer.drain()

    async def close(self) -> None:
        if self._writer is not None:
            try:
                self._writer.close()
            except Exception:
                pass
        if self._proc is not None:
            try:
                self._proc.terminate()
            except ProcessLookupError:
                pass
            try:
                await self._proc.wait()
            except Exception:
                pass
        if self._reader_task is not None:
            self._reader_task.cancel()
            try:
                await self._reader_task
            except asyncio.CancelledError:
                pass
            except Exception:
                pass


@dataclass
class _Event:
    seq: int
    session_id: str
    payload: dict


class _EventHub:
    """Ordered event buffer feeding any number of admin subscribers."""

    def __init__(self) -> None:
        self.events: list[_Event] = []
        self._seq = itertools.count(1)
        self._condition: Optional[asyncio.Condition] = None

    def _cond(self) -> asyncio.Condition:
        if self._condition is None:
            self._condition = asyncio.Condition()
        return self._condition

    def publish(self, session_id: str, payload: dict) -> None:
        event = _Event(seq=next(self._seq), session_id=session_id, payload=payload)
        self.events.append(event)
        try:
            loop = asyncio.get_running_loop()
        except RuntimeError:
            return
        loop.create_task(self._notify())

    async def _notify(self) -> None:
        cond = self._cond()
        async with cond:
            cond.notify_all()

    async def wait_beyond(self, seq: int, timeout: float = 15.0) -> bool:
        cond = self._cond()
        try:
            async with cond:
                await asyncio.wait_for(
                    cond.wait_for(lambda: self.events and self.events[-1].seq > seq),
                    timeout=timeout,
                )
            return True
        except asyncio.TimeoutError:
            return False

    def since(self, seq: int) -> list[_Event]:
        return [e for e in self.events if e.seq > seq]


@dataclass
class _Connection:
    conn_id: int
    upstream: _Upstream
    session: Optional[Session] = None
    buffered_tool_docs: list[tuple[str, str]] = field(default_factory=list)


class GuardProxy:
    def __init__(self, config: ProxyConfig, policy: Policy) -> None:
        config.validate()
        self.config = config
        self.policy = policy
        self.hub = _EventHub()
        self.sessions: dict[str, Session] = {}
        self.pending_futures: dict[str, asyncio.Future] = {}
        self.resolved_ids: set[str] = set()
        self._conn_ids = itertools.count(1)
        self._tool_server: Optional[asyncio.AbstractServer] = None
        self._admin_server: Optional[asyncio.AbstractServer] = None
        self.tool_port = 0
        self.admin_port = 0

    # ----- lifecycle -----

    async def start(self) -> None:
        self._tool_server = await asyncio.start_server(
            self._handle_tool_conn, self.config.listen_host, self.config.listen_port
        )
        self.tool_port = self._tool_server.sockets[0].getsockname()[1]
        self._admin_server = await asyncio.start_server(
            self._handle_admin_conn, self.config.admin_host, self.config.admin_port
        )
        self.admin_port = self._admin_server.sockets[0].getsockname()[1]
        logger.info(
            "tool listener on %s:%d, admin on %s:%d",
            self.config.listen_host,
            self.tool_port,
            self.config.admin_host,
            self.admin_port,
        )

    async def stop(self) -> None:
        for future in self.pending_futures.values():
            if not future.done():
                future.set_result(("deny", "proxy shutting down"))
        for server in (self._tool_server, self._admin_server):
            if server is not None:
                server.close()
                await server.wait_closed()

    # ----- tool side -----

    async def _open_upstream(self) -> _Upstream:
        if self.config.upstream_cmd:
            return await _Upstream.spawn(self.config.upstream_cmd)
        return await _Upstream.connect(self.config.upstream_host, self.config.upstream_port)

    async def _handle_tool_conn(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        conn_id = next(self._conn_ids)
        try:
            upstream = await self._open_upstream()
        except UpstreamUnavailable as exc:
            writer.write(
                _error_line(None, UPSTREAM_UNAVAILABLE_CODE, f"upstream unavailable: {exc}") + b"\n"
            )
            await writer.drain()
            writer.close()
            return
        conn = _Connection(conn_id=conn_id, upstream=upstream)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                stripped = line.rstrip(b"\r\n")
                if not stripped.strip():
                    continue
                response = await self._handle_wire_message(conn, stripped)
                if response is not None:
                    writer.write(response + b"\n")
                    await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            if conn.session is not None:
                conn.session.close()
            await upstream.close()
            try:
                writer.close()
            except Exception:
                pass

    async def _handle_wire_message(self, conn: _Connection, raw_line: bytes) -> Optional[bytes]:
        try:
            message = json.loads(raw_line)
        except json.JSONDecodeError:
            return _error_line(None, PARSE_ERROR_CODE, "parse error")
        method = message.get("method")
        request_id = message.get("id")
        is_notification = "id" not in message
        if method == "guard/set_task":
            return self._set_task(conn, message)
        if method == "tools/call":
            if is_notification:
                # A side-effecting call with no reply channel cannot be held
                # or denied visibly; it is dropped, never forwarded.
                logger.warning("dropping tools/call notification (conn %d)", conn.conn_id)
                return None
            return await self._mediate_call(conn, message, raw_line)
        # Non-side-effecting traffic passes through unmediated.
        if is_notification:
            try:
                await conn.upstream.send_only(raw_line)
            except UpstreamUnavailable as exc:
                logger.warning("notification dropped, upstream unavailable: %s", exc)
            return None
        try:
            response, response_line = await conn.upstream.roundtrip(request_id, raw_line)
        except UpstreamUnavailable as exc:
            return _error_line(request_id, UPSTREAM_UNAVAILABLE_CODE, f"upstream unavailable: {exc}")
        if method == "tools/list":
            self._absorb_tool_docs(conn, response)
        return response_line

    def _set_task(self, conn: _Connection, message: dict) -> bytes:
        if conn.session is not None:
            return _error_line(
                message.get("id"), GUARD_DENIED_CODE, "task already set for this session"
            )
        try:
            task = _task_from_params(message.get("params") or {}, self.policy)
            session = self._ensure_session(conn, task)
        except (ValueError, KeyError) as exc:
            return _error_line(message.get("id"), GUARD_DENIED_CODE, f"invalid task spec: {exc}")
        return _result_line(message.get("id"), {"session_id": session.session_id})

    def _ensure_session(self, conn: _Connection, task: Optional[TaskSpec] = None) -> Session:
        if conn.session is not None:
            return conn.session
        if task is None:
            task = TaskSpec(
                task_text="(no task registered; default grant applies)",
                policy_ref="default",
                grant=self.policy.task_grant,
            )
        session_id = f"mcp-{conn.conn_id}"
        session = open_session(task, self.policy, session_id=session_id)

        def forward_event(payload: dict, sid: str = session_id) -> None:
            if payload.get("type") == "pending":
                payload = dict(payload)
                payload["ask_timeout_secs"] = self.config.ask_timeout_secs
            self.hub.publish(sid, payload)

        session.on_event = forward_event
        self.sessions[session_id] = session
        for name, description in conn.buffered_tool_docs:
            self._label_tool_doc(session, name, description)
        conn.buffered_tool_docs.clear()
        conn.session = session
        return session

    def _absorb_tool_docs(self, conn: _Connection, response: dict) -> None:
        tools = ((response.get("result") or {}).get("tools")) or []
        for tool in tools:
            if not isinstance(tool, dict):
                continue
            name = str(tool.get("name", ""))
            if not name:
                continue
            description = str(tool.get("description", ""))
            if conn.session is None:
                conn.buffered_tool_docs.append((name, description))
            else:
                self._label_tool_doc(conn.session, name, description)

    @staticmethod
    def _label_tool_doc(session: Session, name: str, description: str) -> None:
        session.pool.label_resource(
            origin=f"tooldesc:{name}",
            channel=ProvenanceLabel.TOOL_OUTPUT,
            content_digest=digest_of(description.encode("utf-8")),
            step=session.next_step,
            content=description,
        )

    async def _mediate_call(self, conn: _Connection, message: dict, raw_line: bytes) -> bytes:
        session = self._ensure_session(conn)
        params = message.get("params") or {}
        tool_name = str(params.get("name", ""))
        arguments = params.get("arguments") or {}
        if not tool_name:
            return _error_line(message.get("id"), GUARD_DENIED_CODE, "tools/call without a tool name")
        raw = RawToolCall(
            session_id=session.session_id,
            step_index=session.next_step,
            tool_name=tool_name,
            arguments=arguments,
            substrate=Substrate.MCP,
        )
        result = check_action(session, raw)
        if result.disposition in (Disposition.DEFERRED_ASK, Disposition.DEFERRED_INSPECT):
            result = await self._await_resolution(session, result)
        if result.disposition in EXECUTING_DISPOSITIONS:
            return await self._forward_call(conn, session, result, message, raw_line)
        return _denial_line(message.get("id"), result)

    async def _await_resolution(self, session: Session, result: CheckResult) -> CheckResult:
        """Hold a deferred call until the operator resolves it or the ask
        timeout denies it; the held request sends nothing upstream."""
        action_id = result.action_id
        future: asyncio.Future = asyncio.get_running_loop().create_future()
        self.pending_futures[action_id] = future
        try:
            verdict, note = await asyncio.wait_for(future, timeout=self.config.ask_timeout_secs)
        except asyncio.TimeoutError:
            verdict, note = "deny", "ask timed out"
        finally:
            self.pending_futures.pop(action_id, None)
        self.resolved_ids.add(action_id)
        if verdict == "approve_once":
            return resolve_pending(session, action_id, "approve_once", Issuer.EXPLICIT_CONSENT)
        return resolve_pending(session, action_id, "deny", Issuer.SYSTEM_POLICY, rationale=note)

    async def _forward_call(
        self,
        conn: _Connection,
        session: Session,
        result: CheckResult,
        message: dict,
        raw_line: bytes,
    ) -> bytes:
        raw = result.record.action.raw
        try:
            response, response_line = await conn.upstream.roundtrip(message.get("id"), raw_line)
        except UpstreamUnavailable as exc:
            return _error_line(
                message.get("id"), UPSTREAM_UNAVAILABLE_CODE, f"upstream unavailable: {exc}"
            )
        if "error" in response:
            record_tool_output(session, raw, json.dumps(response["error"], sort_keys=True))
            return response_line
        serialized = json.dumps(response.get("result"), sort_keys=True, separators=(",", ":"))
        redacted_text = record_tool_output(session, raw, serialized)
        if redacted_text == serialized:
            return response_line
        redacted_response = dict(response)
        redacted_response["result"] = _redact_json(response.get("result"))
        return json.dumps(redacted_response, separators=(",", ":")).encode("utf-8")

    # ----- admin side -----

    async def _handle_admin_conn(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        try:
            request = await _read_http_request(reader)
            if request is None:
                return
            method, path, headers, body = request
            parts = urlsplit(path)
            query = {k: v[-1] for k, v in parse_qs(parts.query).items()}
            if method == "OPTIONS":
                await _http_respond(writer, 204, b"", extra_headers=_CORS_HEADERS)
                return
            if not self._authorized(headers, query):
                await _http_json(writer, 401, {"error": "Unauthorized"})
                return
            route = (method, parts.path)
            if route == ("GET", "/events"):
                await self._serve_events(writer, headers, query)
            elif route == ("GET", "/pending"):
                await _http_json(writer, 200, {"pending": self._pending_snapshot()})
            elif route == ("GET", "/ledger"):
                await self._serve_ledger(writer, query)
            elif route == ("POST", "/resolve"):
                await self._serve_resolve(writer, body)
            elif route == ("GET", "/healthz"):
                await _http_json(writer, 200, {"ok": True})
            else:
                await _http_json(writer, 404, {"error": "not found"})
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            try:
                writer.close()
            except Exception:
                pass

    def _authorized(self, headers: dict[str, str], query: dict[str, str]) -> bool:
        expected = self.config.admin_token
        if not expected:
            return False
        supplied = query.get("token", "")
        auth = headers.get("authorization", "")
        if auth.lower().startswith("bearer "):
            supplied = auth[7:].strip()
        return hmac.compare_digest(supplied, expected)

    def _pending_snapshot(self) -> list[dict]:
        snapshot = []
        for session in self.sessions.values():
            for action_id, pending in session.pending.items():
                action = pending.result.record.action
                snapshot.append(
                    {
                        "action_id": action_id,
                        "session_id": session.session_id,
                        "step": pending.result.step,
                        "tool_name": action.raw.tool_name,
                        "capability": action.capability.value,
                        "target": action.target,
                        "risk_tags": sorted(t.value for t in pending.result.record.risk.tags),
                        "rationale": pending.result.record.rationale,
                        "ask_timeout_secs": self.config.ask_timeout_secs,
                    }
                )
        return snapshot

    async def _serve_ledger(self, writer: asyncio.StreamWriter, query: dict[str, str]) -> None:
        session_id = query.get("session", "")
        session = self.sessions.get(session_id)
        if session is None:
            await _http_json(writer, 404, {"error": f"unknown session {session_id!r}"})
            return
        entries = [entry_to_json(e) for e in session.ledger.entries]
        await _http_json(writer, 200, {"session_id": session_id, "entries": entries})

    async def _serve_resolve(self, writer: asyncio.StreamWriter, body: bytes) -> None:
        try:
            payload = json.loads(body or b"{}")
        except json.JSONDecodeError:
            await _http_json(writer, 400, {"error": "invalid JSON body"})
            return
        action_id = str(payload.get("action_id", ""))
        verdict = str(payload.get("verdict", ""))
        if verdict not in ("approve_once", "deny"):
            await _http_json(writer, 400, {"error": f"unknown verdict {verdict!r}"})
            return
        future = self.pending_futures.get(action_id)
        if future is None or future.done():
            if action_id in self.resolved_ids:
                await _http_json(writer, 409, {"error": "AlreadyResolved", "action_id": action_id})
            else:
                await _http_json(writer, 404, {"error": "unknown action", "action_id": action_id})
            return
        future.set_result((verdict, "resolved via admin endpoint"))
        await _http_json(writer, 200, {"ok": True, "action_id": action_id, "verdict": verdict})

    async def _serve_events(
        self, writer: asyncio.StreamWriter, headers: dict[str, str], query: dict[str, str]
    ) -> None:
        cursor = 0
        if "after" in query:
            cursor = int(query["after"])
        elif "last-event-id" in headers:
            cursor = int(headers["last-event-id"])
        head = (
            b"HTTP/1.1 200 OK\r\n"
            b"Content-Type: text/event-stream\r\n"
            b"Cache-Control: no-store\r\n"
            b"Connection: keep-alive\r\n" + _cors_bytes() + b"\r\n"
        )
        writer.write(head)
        await writer.drain()
        while True:
            for event in self.hub.since(cursor):
                cursor = event.seq
                kind = event.payload.get("type", "decision")
                data = json.dumps(event.payload, separators=(",", ":"))
                writer.write(f"id: {event.seq}\nevent: {kind}\ndata: {data}\n\n".encode("utf-8"))
            try:
                await writer.drain()
            except ConnectionError:
                return
            got_new = await self.hub.wait_beyond(cursor)
            if not got_new:
                try:
                    writer.write(b": keepalive\n\n")
                    await writer.drain()
                except (ConnectionError, RuntimeError):
                    return


# ----- small HTTP helpers -----

_CORS_HEADERS = (
    (b"Access-Control-Allow-Origin", b"*"),
    (b"Access-Control-Allow-Methods", b"GET, POST, OPTIONS"),
    (b"Access-Control-Allow-Headers", b"Authorization, Content-Type, Last-Event-ID"),
)


def _cors_bytes() -> bytes:
    return b"".join(k + b": " + v + b"\r\n" for k, v in _CORS_HEADERS)


async def _read_http_request(
    reader: asyncio.StreamReader,
) -> Optional[tuple[str, str, dict[str, str], bytes]]:
    request_line = await reader.readline()
    if not request_line:
        return None
    parts = request_line.decode("latin-1").strip().split(" ")
    if len(parts) < 2:
        return None
    method, path = parts[0], parts[1]
    headers: dict[str, str] = {}
    while True:
        line = await reader.readline()
        if line in (b"\r\n", b"\n", b""):
            break
        name, _, value = line.decode("latin-1").partition(":")
        headers[name.strip().lower()] = value.strip()
    body = b""
    length = int(headers.get("content-length", "0") or "0")
    if length:
        body = await reader.readexactly(length)
    return method, path, headers, body


async def _http_respond(
    writer: asyncio.StreamWriter,
    status: int,
    body: bytes,
    content_type: str = "application/json",
    extra_headers: tuple = (),
) -> None:
    reason = {200: "OK", 204: "No Content", 400: "Bad Request", 401: "Unauthorized",
              404: "Not Found", 409: "Conflict"}.get(status, "OK")
    head = [f"HTTP/1.1 {status} {reason}".encode("latin-1")]
    head.append(f"Content-Type: {content_type}".encode("latin-1"))
    head.append(f"Content-Length: {len(body)}".encode("latin-1"))
    head.append(b"Connection: close")
    for name, value in _CORS_HEADERS:
        head.append(name + b": " + value)
    writer.write(b"\r\n".join(head) + b"\r\n\r\n" + body)
    await writer.drain()


async def _http_json(writer: asyncio.StreamWriter, status: int, payload: dict) -> None:
    await _http_respond(writer, status, json.dumps(payload).encode("utf-8"))


# ----- wire helpers -----


def _redact_json(value: Any) -> Any:
    if isinstance(value, str):
        return redact(value)
    if isinstance(value, list):
        return [_redact_json(v) for v in value]
    if isinstance(value, dict):
        return {k: _redact_json(v) for k, v in value.items()}
    return value


def _task_from_params(params: dict, policy: Policy) -> TaskSpec:
    task_text = params.get("task_text") or "(proxy task)"
    grant_doc = params.get("grant")
    if grant_doc is None:
        grant = policy.task_grant
    else:
        ttl_doc = grant_doc.get("ttl", "task_scoped")
        if ttl_doc == "task_scoped":
            ttl = Ttl.task_scoped()
        elif isinstance(ttl_doc, dict) and "steps" in ttl_doc:
            ttl = Ttl.steps(int(ttl_doc["steps"]))
        else:
            raise ValueError(f"unsupported ttl: {ttl_doc!r}")
        grant = GrantSpec(
            capabilities=frozenset(Capability[c.upper()] for c in grant_doc["capabilities"]),
            targets=tuple(grant_doc["scope"]),
            lifetime=ttl,
            fallback=Decision.parse(grant_doc.get("fallback", "inspect")),
        )
    return TaskSpec(task_text=task_text, policy_ref="proxy", grant=grant)


def _result_line(request_id: Any, result: Any) -> bytes:
    return json.dumps(
        {"jsonrpc": "2.0", "id": request_id, "result": result}, separators=(",", ":")
    ).encode("utf-8")


def _error_line(request_id: Any, code: int, message: str, data: Optional[dict] = None) -> bytes:
    error: dict[str, Any] = {"code": code, "message": message}
    if data is not None:
        error["data"] = data
    return json.dumps(
        {"jsonrpc": "2.0", "id": request_id, "error": error}, separators=(",", ":")
    ).encode("utf-8")


def _denial_line(request_id: Any, result: CheckResult) -> bytes:
    record = result.record
    return _error_line(
        request_id,
        GUARD_DENIED_CODE,
        "blocked by guard",
        data={
            "outcome": record.outcome.label,
            "covered": record.covered,
            "risk_tags": sorted(t.value for t in record.risk.tags),
            "rationale": record.rationale,
        },
    )


# ----- CLI -----


def _parse_host_port(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host:
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="actionguard-proxy",
        description="Mediate a JSON-RPC tool server behind the action guard.",
    )
    parser.add_argument("--listen", default="127.0.0.1:8848", help="tool listener host:port")
    parser.add_argument("--upstream-cmd", default=None, help="command to spawn the upstream server")
    parser.add_argument("--upstream-addr", default=None, help="host:port of a running upstream")
    parser.add_argument("--policy", default=None, help="policy document path")
    parser.add_argument("--admin-listen", default="127.0.0.1:8849", help="admin endpoint host:port")
    parser.add_argument(
        "--admin-token-env",
        default="ACTIONGUARD_ADMIN_TOKEN",
        help="environment variable holding the admin token",
    )
    parser.add_argument(
        "--ask-timeout-secs", type=float, default=DEFAULT_ASK_TIMEOUT_SECS,
        help="seconds before a held ask-tier call is denied",
    )
    args = parser.parse_args(argv)

    token = os.environ.get(args.admin_token_env, "")
    if not token:
        print(f"error: admin token env var {args.admin_token_env} is empty", file=sys.stderr)
        return 2
    listen_host, listen_port = _parse_host_port(args.listen)
    admin_host, admin_port = _parse_host_port(args.admin_listen)
    upstream_host = upstream_port = None
    if args.upstream_addr:
        upstream_host, upstream_port = _parse_host_port(args.upstream_addr)
    config = ProxyConfig(
        listen_host=listen_host,
        listen_port=listen_port,
        upstream_cmd=args.upstream_cmd,
        upstream_host=upstream_host,
        upstream_port=upstream_port,
        admin_host=admin_host,
        admin_port=admin_port,
        admin_token=token,
        ask_timeout_secs=args.ask_timeout_secs,
    )
    try:
        policy = load_policy(args.policy)
        config.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=os.environ.get("LOGLEVEL", "INFO").upper())

    async def run() -> None:
        proxy = GuardProxy(config, policy)
        await proxy.start()
        print(
            f"tool listener: {config.listen_host}:{proxy.tool_port}  "
            f"admin: {config.admin_host}:{proxy.admin_port}"
        )
        await proxy.serve_forever()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
