"""Normalization of raw tool invocations into policy-facing actions.

Every substrate (CLI agent loop, MCP proxy, replay harness) produces raw
tool calls with its own tool names and argument shapes. This module maps
them onto a fixed capability vocabulary with a canonical target and an
expected-effect description, so a single authority policy can govern all
of them.
"""

from __future__ import annotations

import posixpath
import re
import shlex
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional
from urllib.parse import urlsplit

_URL_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*://")


class Substrate(str, Enum):
    CLI_AGENT = "cli_agent"
    MCP = "mcp"
    REPLAY = "replay"


class Capability(str, Enum):
    READ = "READ"
    WRITE = "WRITE"
    DELETE = "DELETE"
    EXEC = "EXEC"
    NET = "NET"
    SEND = "SEND"
    API_CALL = "API_CALL"
    CONFIG_WRITE = "CONFIG_WRITE"
    INSTALL = "INSTALL"
    RESPOND = "RESPOND"


class EffectKind(str, Enum):
    OBSERVE = "observe"
    CREATE = "create"
    MODIFY = "modify"
    DESTROY = "destroy"
    TRANSMIT = "transmit"
    EXECUTE = "execute"
    NONE = "none"


# Capabilities whose expected effect is irreversible by default.
_IRREVERSIBLE_KINDS = {EffectKind.DESTROY, EffectKind.TRANSMIT, EffectKind.EXECUTE}

_INTERPRETERS = {"python", "python3", "sh", "bash", "zsh", "node", "ruby", "perl"}
_DOWNLOADERS = {"curl", "wget"}
_ELEVATORS = {"sudo", "doas", "pkexec"}


class MalformedCall(ValueError):
    """Raw call is missing an argument required by the matched adapter rule."""


class DuplicateRule(ValueError):
    """An adapter rule for this (substrate, tool_name) already exists."""


@dataclass(frozen=True)
class RawToolCall:
    session_id: str
    step_index: int
    tool_name: str
    arguments: Mapping[str, Any]
    substrate: Substrate

    def __post_init__(self) -> None:
        if not self.tool_name:
            raise MalformedCall("tool_name must be non-empty")
        if self.step_index < 0:
            raise MalformedCall("step_index must be non-negative")


@dataclass(frozen=True)
class ExpectedEffect:
    kind: EffectKind
    summary: str
    reversible: bool


@dataclass(frozen=True)
class NormalizedAction:
    capability: Capability
    target: str
    effect: ExpectedEffect
    influencing_resource: Optional[str]
    raw: RawToolCall

    # Pre-canonicalization target and SEND recipient list, kept for
    # provenance containment checks and recipient screening.
    raw_target: str = ""
    recipients: tuple[str, ...] = ()


@dataclass(frozen=True)
class AdapterRule:
    capability: Capability
    target_from: Optional[str]  # argument name, "{...}" template, "recipients", or "shell:<arg>"
    effect_kind: EffectKind
    effect_summary: str = ""


@dataclass(frozen=True)
class AdapterTable:
    entries: Mapping[tuple[Substrate, str], AdapterRule] = field(default_factory=dict)

    def lookup(self, substrate: Substrate, tool_name: str) -> Optional[AdapterRule]:
        return self.entries.get((substrate, tool_name))


def register_adapter(
    table: AdapterTable, substrate: Substrate, tool_name: str, rule: AdapterRule
) -> AdapterTable:
    """Return a new table including `rule`; duplicate keys are rejected."""
    key = (substrate, tool_name)
    if key in table.entries:
        raise DuplicateRule(f"adapter rule already registered for {substrate.value}:{tool_name}")
    entries = dict(table.entries)
    entries[key] = rule
    return AdapterTable(entries)


def classify_unknown_tool(tool_name: str, substrate: Substrate) -> Capability:
    """Fallback capability for tools with no registered adapter rule.

    MCP tools default to API_CALL (domain servers mostly expose data
    reads); local substrates default to EXEC, the more conservative class.
    """
    if substrate is Substrate.MCP:
        return Capability.API_CALL
    return Capability.EXEC


def canonicalize_target(target: str, capability: Capability) -> str:
    """Pure string canonicalization; never touches filesystem or network."""
    target = target.strip()
    if not target:
        return ""
    if capability is Capability.SEND:
        return _canonicalize_recipients(target)
    if _URL_RE.match(target):
        return _canonicalize_url(target)
    return _canonicalize_path(target)


def _canonicalize_path(path: str) -> str:
    norm = posixpath.normpath(path)
    if norm == ".":
        return ""
    # normpath keeps a single leading slash and strips trailing ones.
    return norm


def _canonicalize_url(url: str) -> str:
    parts = urlsplit(url)
    scheme = parts.scheme.lower()
    host = (parts.hostname or "").lower()
    port = f":{parts.port}" if parts.port is not None and not _is_default_port(scheme, parts.port) else ""
    path = posixpath.normpath(parts.path) if parts.path else ""
    if path in (".", "/"):
        path = ""
    return f"{scheme}://{host}{port}{path}"


def _is_default_port(scheme: str, port: int) -> bool:
    return (scheme, port) in {("http", 80), ("https", 443)}


def _canonicalize_recipients(recipients: str) -> str:
    parts = [p.strip().lower() for p in recipients.split(",")]
    return ", ".join(p for p in parts if p)


def split_recipients(canonical: str) -> tuple[str, ...]:
    """Bare addresses from a canonical recipient target, markers stripped."""
    out = []
    for part in canonical.split(","):
        part = part.strip()
        for marker in ("bcc:", "cc:", "to:"):
            if part.startswith(marker):
                part = part[len(marker):].strip()
        if part:
            out.append(part)
    return tuple(out)


def url_host(target: str) -> Optional[str]:
    """Hostname of a canonical URL target, or None for non-network targets."""
    if not _URL_RE.match(target):
        return None
    host = urlsplit(target).hostname
    return host.lower() if host else None


@dataclass(frozen=True)
class ShellSummary:
    target: str
    markers: tuple[str, ...]
    stages: tuple[str, ...]


def parse_shell_command(cmd: str) -> ShellSummary:
    """Extract the decisive target and risk markers from a shell command.

    Minimal tokenizer: the command is split into pipeline stages; the
    decisive stage is the first one, except that a download stage piped
    into an interpreter makes the downloaded URL decisive. Elevation,
    recursive-remove, ownership and setuid idioms are surfaced as summary
    markers rather than parsed semantically.
    """
    try:
        tokens = shlex.split(cmd)
    except ValueError:
        tokens = cmd.split()
    stages: list[list[str]] = [[]]
    for tok in tokens:
        if tok in ("|", "&&", ";", "||"):
            if stages[-1]:
                stages.append([])
        else:
            stages[-1].append(tok)
    stages = [s for s in stages if s]
    markers: list[str] = []
    stage_names: list[str] = []
    target = ""
    download_url = ""
    saw_download = False
    download_then_exec = False
    for stage in stages:
        words = list(stage)
        while words and posixpath.basename(words[0]) in _ELEVATORS:
            if "elevation" not in markers:
                markers.append("elevation")
            words = words[1:]
        if not words:
            continue
        exe = posixpath.basename(words[0])
        stage_names.append(exe)
        args = [w for w in words[1:] if not w.startswith("-")]
        flags = [w for w in words[1:] if w.startswith("-")]
        if exe in _DOWNLOADERS:
            saw_download = True
            for a in args:
                if "://" in a:
                    download_url = a
        elif exe in _INTERPRETERS:
            if saw_download:
                download_then_exec = True
            if not target and args:
                target = args[0]
        elif exe == "rm":
            if any("r" in f.lstrip("-") for f in flags):
                if "recursive-remove" not in markers:
                    markers.append("recursive-remove")
            if not target and args:
                target = args[0]
        elif exe in ("chown", "chgrp"):
            if "ownership-change" not in markers:
                markers.append("ownership-change")
            if not target:
                target = words[0]
        elif exe == "chmod":
            if any("s" in a or a.startswith("4") or a.startswith("2") for a in words[1:2]):
                if "setuid" not in markers:
                    markers.append("setuid")
            if not target:
                target = words[0]
        else:
            if not target:
                target = words[0]
    if download_then_exec:
        markers.insert(0, "download-execute")
        target = download_url or target
    if not target and stages:
        target = stages[0][0]
    return ShellSummary(target=target, markers=tuple(markers), stages=tuple(stage_names))


def _extract_target(raw: RawToolCall, rule: AdapterRule) -> tuple[str, tuple[str, ...]]:
    """Raw (pre-canonical) target text for a matched rule, plus markers."""
    spec = rule.target_from
    if spec is None:
        return "", ()
    if spec.startswith("shell:"):
        arg = spec.split(":", 1)[1]
        if arg not in raw.arguments:
            raise MalformedCall(f"{raw.tool_name}: missing required argument '{arg}'")
        summary = parse_shell_command(str(raw.arguments[arg]))
        return summary.target, summary.markers
    if spec == "recipients":
        parts = []
        for key, marker in (("to", ""), ("cc", "cc:"), ("bcc", "bcc:")):
            value = raw.arguments.get(key)
            if value is None:
                continue
            addrs = value if isinstance(value, (list, tuple)) else [value]
            parts.extend(f"{marker}{a}" for a in addrs)
        if not parts and "recipients" in raw.arguments:
            value = raw.arguments["recipients"]
            addrs = value if isinstance(value, (list, tuple)) else [value]
            parts.extend(str(a) for a in addrs)
        if not parts:
            raise MalformedCall(f"{raw.tool_name}: no recipients given")
        return ", ".join(str(p) for p in parts), ()
    if "{" in spec:
        try:
            return spec.format(**raw.arguments), ()
        except KeyError as exc:
            raise MalformedCall(f"{raw.tool_name}: missing required argument {exc}") from exc
    if spec not in raw.arguments:
        raise MalformedCall(f"{raw.tool_name}: missing required argument '{spec}'")
    value = raw.arguments[spec]
    if isinstance(value, (list, tuple)):
        return ", ".join(str(v) for v in value), ()
    return str(value), ()


def normalize(raw: RawToolCall, table: AdapterTable, pool) -> NormalizedAction:
    """Map a raw tool call onto the capability vocabulary.

    `pool` is the session trust pool; it supplies the influencing-resource
    attribution (most recent low/medium-trust resource whose observed
    content contains the action's target).
    """
    rule = table.lookup(raw.substrate, raw.tool_name)
    markers: tuple[str, ...] = ()
    if rule is not None:
        capability = rule.capability
        raw_target, markers = _extract_target(raw, rule)
        effect_kind = rule.effect_kind
        base_summary = rule.effect_summary
    else:
        capability = classify_unknown_tool(raw.tool_name, raw.substrate)
        raw_target = raw.tool_name
        effect_kind = EffectKind.TRANSMIT if capability is Capability.API_CALL else EffectKind.EXECUTE
        base_summary = f"unregistered tool {raw.tool_name}"
    target = canonicalize_target(raw_target, capability)
    summary_parts = [p for p in (base_summary,) + markers if p]
    if not summary_parts:
        summary_parts = [f"{effect_kind.value} {target}".strip()]
    effect = ExpectedEffect(
        kind=effect_kind,
        summary="; ".join(summary_parts),
        reversible=effect_kind not in _IRREVERSIBLE_KINDS,
    )
    recipients = split_recipients(target) if capability is Capability.SEND else ()
    probes = [target, raw_target.strip()] + list(recipients)
    influencer = pool.attribute_influencer(probes) if pool is not None else None
    return NormalizedAction(
        capability=capability,
        target=target,
        effect=effect,
        influencing_resource=influencer,
        raw=raw,
        raw_target=raw_target.strip(),
        recipients=recipients,
    )
