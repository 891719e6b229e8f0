"""Policy configuration: one human-editable YAML document.

Sections: adapters, target_trust, labels, authority.task_grant, risk,
enforcement, audit.patterns, ledger.dir. Every section is validated at
load time against the composed YAML node tree, so errors carry the file
and line they came from. The ACTIONGUARD_POLICY environment variable
overrides the default path when no explicit path is given.
"""

from __future__ import annotations

import json
import os
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .action_model import (
    AdapterRule,
    AdapterTable,
    Capability,
    EffectKind,
    Substrate,
    register_adapter,
)
from .authority import GrantSpec, Ttl
from .enforcement import Decision, OverrideTable, validate_overrides
from .ledger_audit import (
    BUILTIN_PATTERNS,
    DEFAULT_WINDOW,
    SequencePattern,
    StagePredicate,
)
from .risk_sim import (
    DEFAULT_NETWORK_SIGNATURES,
    DEFAULT_SECRET_SIGNATURES,
    NormalizedAction,
    RiskLabel,
    RiskPolicy,
)
from .trust_pool import ProvenanceLabel, TargetTrustPolicy

ENV_POLICY_PATH = "ACTIONGUARD_POLICY"

DEFAULT_SECRET_PATTERNS = (
    ".env",
    "id_rsa",
    "id_dsa",
    "id_ed25519",
    "credentials*",
    "*token*",
    "*secret*",
    ".aws/**",
    ".ssh/**",
)

DEFAULT_PERSISTENCE_PATHS = (
    "*crontab*",
    "cron.d/**",
    "cron.daily/**",
    "*.bashrc",
    "*.zshrc",
    "*.profile",
    "*.bash_profile",
    "systemd/**",
    "init.d/**",
    "*rc.local",
    ".config/autostart/**",
    "Library/LaunchAgents/**",
    "startup/**",
)

DEFAULT_AGENT_CONFIG_PATHS = (
    "*CLAUDE.md",
    "*AGENTS.md",
    "*.mcp.json",
    "*mcp*config*",
    "*policy*.yaml",
    "*policy*.yml",
    "*adapters*.yaml",
)

DEFAULT_NETWORK_ALLOWLIST = ("api.corp.example", "*.corp.example")

DEFAULT_WORKSPACE_ROOT = "/workspace"


class PolicyError(ValueError):
    """Configuration problem, pointing at the offending file and line."""


@dataclass(frozen=True)
class OracleConfig:
    kind: str  # "none" | "stub" | "external"
    endpoint: str = ""
    timeout_secs: float = 10.0


@dataclass(frozen=True)
class Policy:
    adapters: AdapterTable
    trust: TargetTrustPolicy
    risk: RiskPolicy
    task_grant: GrantSpec
    overrides: OverrideTable
    patterns: tuple[SequencePattern, ...]
    ledger_dir: Optional[Path]
    oracle: OracleConfig
    source_path: Optional[Path] = None


def default_adapter_table() -> AdapterTable:
    """Adapter rules for the common file/shell/mail/web tools on every
    substrate; unknown tools fall through to the conservative fallback."""
    rules: list[tuple[str, AdapterRule]] = [
        ("read_file", AdapterRule(Capability.READ, "path", EffectKind.OBSERVE)),
        ("list_dir", AdapterRule(Capability.READ, "path", EffectKind.OBSERVE)),
        ("write_file", AdapterRule(Capability.WRITE, "path", EffectKind.CREATE)),
        ("edit_file", AdapterRule(Capability.WRITE, "path", EffectKind.MODIFY)),
        ("delete_file", AdapterRule(Capability.DELETE, "path", EffectKind.DESTROY)),
        ("bash", AdapterRule(Capability.EXEC, "shell:cmd", EffectKind.EXECUTE)),
        ("run_script", AdapterRule(Capability.EXEC, "path", EffectKind.EXECUTE)),
        ("respond", AdapterRule(Capability.RESPOND, None, EffectKind.NONE)),
        ("send_email", AdapterRule(Capability.SEND, "recipients", EffectKind.TRANSMIT)),
        ("fetch_url", AdapterRule(Capability.NET, "url", EffectKind.TRANSMIT)),
        ("http_post", AdapterRule(Capability.NET, "url", EffectKind.TRANSMIT)),
        ("install_package", AdapterRule(Capability.INSTALL, "package", EffectKind.MODIFY)),
        ("write_config", AdapterRule(Capability.CONFIG_WRITE, "path", EffectKind.MODIFY)),
    ]
    table = AdapterTable()
    for substrate in Substrate:
        for tool_name, rule in rules:
            table = register_adapter(table, substrate, tool_name, rule)
    return table


def default_task_grant() -> GrantSpec:
    return GrantSpec(
        capabilities=frozenset({Capability.READ, Capability.WRITE, Capability.RESPOND}),
        targets=(f"{DEFAULT_WORKSPACE_ROOT}/**",),
        lifetime=Ttl.task_scoped(),
        fallback=Decision.INSPECT,
    )


def default_policy() -> Policy:
    return Policy(
        adapters=default_adapter_table(),
        trust=TargetTrustPolicy(
            secret_patterns=DEFAULT_SECRET_PATTERNS,
            workspace_root=DEFAULT_WORKSPACE_ROOT,
            network_allowlist=DEFAULT_NETWORK_ALLOWLIST,
        ),
        risk=RiskPolicy(
            persistence_paths=DEFAULT_PERSISTENCE_PATHS,
            agent_config_paths=DEFAULT_AGENT_CONFIG_PATHS,
            secret_signatures=DEFAULT_SECRET_SIGNATURES,
            network_signatures=DEFAULT_NETWORK_SIGNATURES,
        ),
        task_grant=default_task_grant(),
        overrides={},
        patterns=BUILTIN_PATTERNS,
        ledger_dir=None,
        oracle=OracleConfig(kind="none"),
    )


# --- YAML node walking with line-precise errors ------------------------------


class _Walker:
    def __init__(self, filename: str) -> None:
        self.filename = filename

    def fail(self, node: yaml.Node, message: str) -> None:
        line = node.start_mark.line + 1 if node is not None else 0
        raise PolicyError(f"{self.filename}:{line}: {message}")

    def mapping(self, node: yaml.Node, where: str) -> dict[str, yaml.Node]:
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, f"{where} must be a mapping")
        out: dict[str, yaml.Node] = {}
        for key_node, value_node in node.value:
            key = key_node.value
            if key in out:
                self.fail(key_node, f"duplicate key {key!r} in {where}")
            out[key] = value_node
        return out

    def sequence(self, node: yaml.Node, where: str) -> list[yaml.Node]:
        if not isinstance(node, yaml.SequenceNode):
            self.fail(node, f"{where} must be a list")
        return list(node.value)

    def scalar(self, node: yaml.Node, where: str) -> str:
        if not isinstance(node, yaml.ScalarNode):
            self.fail(node, f"{where} must be a scalar")
        return node.value

    def string(self, node: yaml.Node, where: str) -> str:
        value = self.scalar(node, where)
        if node.tag.endswith(":null"):
            self.fail(node, f"{where} must be a string")
        return value

    def integer(self, node: yaml.Node, where: str) -> int:
        value = self.scalar(node, where)
        try:
            return int(value)
        except ValueError:
            self.fail(node, f"{where} must be an integer")
        raise AssertionError  # unreachable

    def number(self, node: yaml.Node, where: str) -> float:
        value = self.scalar(node, where)
        try:
            return float(value)
        except ValueError:
            self.fail(node, f"{where} must be a number")
        raise AssertionError

    def boolean(self, node: yaml.Node, where: str) -> bool:
        value = self.scalar(node, where).lower()
        if value in ("true", "yes", "on"):
            return True
        if value in ("false", "no", "off"):
            return False
        self.fail(node, f"{where} must be a boolean")
        raise AssertionError

    def string_list(self, node: yaml.Node, where: str) -> tuple[str, ...]:
        return tuple(self.string(item, where) for item in self.sequence(node, where))

    def require(self, fields: dict[str, yaml.Node], name: str, node: yaml.Node, where: str) -> yaml.Node:
        if name not in fields:
            self.fail(node, f"{where} is missing required key {name!r}")
        return fields[name]

    def reject_unknown(self, fields: dict[str, yaml.Node], allowed: set[str], node: yaml.Node, where: str) -> None:
        unknown = set(fields) - allowed
        if unknown:
            self.fail(node, f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _parse_capability(w: _Walker, node: yaml.Node, where: str) -> Capability:
    text = w.string(node, where)
    try:
        return Capability[text.upper()]
    except KeyError:
        w.fail(node, f"{where}: unknown capability {text!r}")
    raise AssertionError


def _parse_decision(w: _Walker, node: yaml.Node, where: str) -> Decision:
    text = w.string(node, where)
    try:
        return Decision.parse(text)
    except ValueError:
        w.fail(node, f"{where}: unknown enforcement tier {text!r}")
    raise AssertionError


def _parse_ttl(w: _Walker, node: yaml.Node, where: str) -> Ttl:
    if isinstance(node, yaml.ScalarNode):
        if node.value == "task_scoped":
            return Ttl.task_scoped()
        w.fail(node, f"{where} must be 'task_scoped' or a mapping with steps/deadline")
    fields = w.mapping(node, where)
    w.reject_unknown(fields, {"steps", "deadline"}, node, where)
    if "steps" in fields:
        return Ttl.steps(w.integer(fields["steps"], f"{where}.steps"))
    if "deadline" in fields:
        return Ttl.until(w.number(fields["deadline"], f"{where}.deadline"))
    w.fail(node, f"{where} must give steps or deadline")
    raise AssertionError


def _parse_grant(w: _Walker, node: yaml.Node, where: str) -> GrantSpec:
    fields = w.mapping(node, where)
    w.reject_unknown(fields, {"capabilities", "scope", "ttl", "fallback"}, node, where)
    caps_node = w.require(fields, "capabilities", node, where)
    caps = frozenset(
        _parse_capability(w, item, f"{where}.capabilities")
        for item in w.sequence(caps_node, f"{where}.capabilities")
    )
    scope = w.string_list(w.require(fields, "scope", node, where), f"{where}.scope")
    ttl = _parse_ttl(w, fields["ttl"], f"{where}.ttl") if "ttl" in fields else Ttl.task_scoped()
    fallback = (
        _parse_decision(w, fields["fallback"], f"{where}.fallback")
        if "fallback" in fields
        else Decision.INSPECT
    )
    if fallback == Decision.ALLOW:
        w.fail(fields["fallback"], f"{where}.fallback may not be 'allow'")
    try:
        return GrantSpec(capabilities=caps, targets=scope, lifetime=ttl, fallback=fallback)
    except ValueError as exc:
        w.fail(node, f"{where}: {exc}")
    raise AssertionError


def _parse_adapters(w: _Walker, node: yaml.Node, base: AdapterTable) -> AdapterTable:
    table = base
    for item in w.sequence(node, "adapters"):
        fields = w.mapping(item, "adapters entry")
        w.reject_unknown(
            fields,
            {"substrate", "tool_name", "capability", "target_from", "effect_kind", "effect_summary"},
            item,
            "adapters entry",
        )
        substrate_text = w.string(w.require(fields, "substrate", item, "adapters entry"), "substrate")
        try:
            substrate = Substrate(substrate_text)
        except ValueError:
            w.fail(fields["substrate"], f"unknown substrate {substrate_text!r}")
        tool_name = w.string(w.require(fields, "tool_name", item, "adapters entry"), "tool_name")
        capability = _parse_capability(w, w.require(fields, "capability", item, "adapters entry"), "capability")
        target_from: Optional[str] = None
        if "target_from" in fields and not fields["target_from"].tag.endswith(":null"):
            target_from = w.string(fields["target_from"], "target_from")
        kind_text = w.string(w.require(fields, "effect_kind", item, "adapters entry"), "effect_kind")
        try:
            effect_kind = EffectKind(kind_text)
        except ValueError:
            w.fail(fields["effect_kind"], f"unknown effect_kind {kind_text!r}")
        summary = w.string(fields["effect_summary"], "effect_summary") if "effect_summary" in fields else ""
        rule = AdapterRule(capability, target_from, effect_kind, summary)
        key = (substrate, tool_name)
        entries = dict(table.entries)
        entries[key] = rule  # config rules replace same-key defaults
        table = AdapterTable(entries)
    return table


def _parse_target_trust(w: _Walker, node: yaml.Node, base: TargetTrustPolicy) -> TargetTrustPolicy:
    fields = w.mapping(node, "target_trust")
    w.reject_unknown(
        fields, {"secret_patterns", "workspace_root", "network_allowlist"}, node, "target_trust"
    )
    secret = (
        w.string_list(fields["secret_patterns"], "target_trust.secret_patterns")
        if "secret_patterns" in fields
        else base.secret_patterns
    )
    root = (
        w.string(fields["workspace_root"], "target_trust.workspace_root")
        if "workspace_root" in fields
        else base.workspace_root
    )
    allow = (
        w.string_list(fields["network_allowlist"], "target_trust.network_allowlist")
        if "network_allowlist" in fields
        else base.network_allowlist
    )
    return TargetTrustPolicy(
        secret_patterns=secret,
        workspace_root=root,
        network_allowlist=allow,
        label_overrides=base.label_overrides,
    )


def _parse_labels(w: _Walker, node: yaml.Node, trust: TargetTrustPolicy) -> TargetTrustPolicy:
    fields = w.mapping(node, "labels")
    w.reject_unknown(fields, {"overrides"}, node, "labels")
    overrides: list[tuple[str, ProvenanceLabel]] = []
    if "overrides" in fields:
        for item in w.sequence(fields["overrides"], "labels.overrides"):
            entry = w.mapping(item, "labels.overrides entry")
            w.reject_unknown(entry, {"pattern", "label"}, item, "labels.overrides entry")
            pattern = w.string(w.require(entry, "pattern", item, "labels.overrides entry"), "pattern")
            label_text = w.string(w.require(entry, "label", item, "labels.overrides entry"), "label")
            try:
                label = ProvenanceLabel(label_text)
            except ValueError:
                w.fail(entry["label"], f"unknown provenance label {label_text!r}")
            overrides.append((pattern, label))
    return TargetTrustPolicy(
        secret_patterns=trust.secret_patterns,
        workspace_root=trust.workspace_root,
        network_allowlist=trust.network_allowlist,
        label_overrides=tuple(overrides),
    )


def _parse_risk(w: _Walker, node: yaml.Node, base: RiskPolicy) -> tuple[RiskPolicy, OracleConfig]:
    fields = w.mapping(node, "risk")
    w.reject_unknown(
        fields,
        {"persistence_paths", "agent_config_paths", "signature_sets", "oracle", "oracle_context_k"},
        node,
        "risk",
    )
    persistence = (
        w.string_list(fields["persistence_paths"], "risk.persistence_paths")
        if "persistence_paths" in fields
        else base.persistence_paths
    )
    agent_cfg = (
        w.string_list(fields["agent_config_paths"], "risk.agent_config_paths")
        if "agent_config_paths" in fields
        else base.agent_config_paths
    )
    secret_sigs = base.secret_signatures
    network_sigs = base.network_signatures
    if "signature_sets" in fields:
        sigs = w.mapping(fields["signature_sets"], "risk.signature_sets")
        w.reject_unknown(sigs, {"secrets", "network"}, fields["signature_sets"], "risk.signature_sets")
        if "secrets" in sigs:
            secret_sigs = w.string_list(sigs["secrets"], "risk.signature_sets.secrets")
        if "network" in sigs:
            network_sigs = w.string_list(sigs["network"], "risk.signature_sets.network")
    k = (
        w.integer(fields["oracle_context_k"], "risk.oracle_context_k")
        if "oracle_context_k" in fields
        else base.oracle_context_k
    )
    oracle = OracleConfig(kind="none")
    if "oracle" in fields:
        oracle_node = fields["oracle"]
        if isinstance(oracle_node, yaml.ScalarNode):
            kind = w.string(oracle_node, "risk.oracle")
            if kind not in ("none", "stub"):
                w.fail(oracle_node, "risk.oracle must be 'none', 'stub', or an external mapping")
            oracle = OracleConfig(kind=kind)
        else:
            entry = w.mapping(oracle_node, "risk.oracle")
            w.reject_unknown(entry, {"endpoint", "timeout_secs"}, oracle_node, "risk.oracle")
            endpoint = w.string(w.require(entry, "endpoint", oracle_node, "risk.oracle"), "endpoint")
            timeout = w.number(entry["timeout_secs"], "timeout_secs") if "timeout_secs" in entry else 10.0
            oracle = OracleConfig(kind="external", endpoint=endpoint, timeout_secs=timeout)
    policy = RiskPolicy(
        persistence_paths=persistence,
        agent_config_paths=agent_cfg,
        secret_signatures=secret_sigs,
        network_signatures=network_sigs,
        oracle_context_k=k,
    )
    return policy, oracle


def _parse_enforcement(w: _Walker, node: yaml.Node) -> OverrideTable:
    fields = w.mapping(node, "enforcement")
    w.reject_unknown(fields, {"table_overrides"}, node, "enforcement")
    table: dict[tuple[bool, RiskLabel, Capability], Decision] = {}
    if "table_overrides" in fields:
        for item in w.sequence(fields["table_overrides"], "enforcement.table_overrides"):
            entry = w.mapping(item, "table_overrides entry")
            w.reject_unknown(entry, {"covered", "risk", "capability", "decision"}, item, "table_overrides entry")
            covered = w.boolean(w.require(entry, "covered", item, "table_overrides entry"), "covered")
            risk_text = w.string(w.require(entry, "risk", item, "table_overrides entry"), "risk")
            try:
                risk = RiskLabel[risk_text.upper()]
            except KeyError:
                w.fail(entry["risk"], f"unknown risk label {risk_text!r}")
            capability = _parse_capability(w, w.require(entry, "capability", item, "table_overrides entry"), "capability")
            decision = _parse_decision(w, w.require(entry, "decision", item, "table_overrides entry"), "decision")
            table[(covered, risk, capability)] = decision
    try:
        return validate_overrides(table)
    except ValueError as exc:
        w.fail(node, str(exc))
    raise AssertionError


def _parse_patterns(w: _Walker, node: yaml.Node) -> tuple[SequencePattern, ...]:
    fields = w.mapping(node, "audit")
    w.reject_unknown(fields, {"patterns"}, node, "audit")
    custom: list[SequencePattern] = []
    if "patterns" in fields:
        for item in w.sequence(fields["patterns"], "audit.patterns"):
            entry = w.mapping(item, "audit.patterns entry")
            w.reject_unknown(
                entry, {"name", "window", "escalation", "same_target", "stages"}, item, "audit.patterns entry"
            )
            name = w.string(w.require(entry, "name", item, "audit.patterns entry"), "name")
            window = w.integer(entry["window"], "window") if "window" in entry else DEFAULT_WINDOW
            escalation = _parse_decision(w, w.require(entry, "escalation", item, "audit.patterns entry"), "escalation")
            same_target = w.boolean(entry["same_target"], "same_target") if "same_target" in entry else False
            stages: list[StagePredicate] = []
            for stage_node in w.sequence(w.require(entry, "stages", item, "audit.patterns entry"), "stages"):
                stage_fields = w.mapping(stage_node, "pattern stage")
                w.reject_unknown(stage_fields, {"capabilities", "tags_any", "decisions"}, stage_node, "pattern stage")
                caps = frozenset(
                    _parse_capability(w, c, "stage capabilities")
                    for c in w.sequence(stage_fields["capabilities"], "stage capabilities")
                ) if "capabilities" in stage_fields else frozenset()
                tags = frozenset()
                if "tags_any" in stage_fields:
                    from .risk_sim import RiskTag

                    names = w.string_list(stage_fields["tags_any"], "stage tags_any")
                    try:
                        tags = frozenset(RiskTag(t) for t in names)
                    except ValueError as exc:
                        w.fail(stage_fields["tags_any"], str(exc))
                decisions = frozenset(
                    _parse_decision(w, d, "stage decisions")
                    for d in w.sequence(stage_fields["decisions"], "stage decisions")
                ) if "decisions" in stage_fields else frozenset()
                stages.append(StagePredicate(capabilities=caps, tags_any=tags, decisions=decisions))
            try:
                custom.append(
                    SequencePattern(
                        name=name,
                        stages=tuple(stages),
                        window=window,
                        escalation=escalation,
                        same_target=same_target,
                    )
                )
            except ValueError as exc:
                w.fail(item, str(exc))
    return BUILTIN_PATTERNS + tuple(custom)


_SECTIONS = {"adapters", "target_trust", "labels", "authority", "risk", "enforcement", "audit", "ledger"}


def load_policy(path: Optional[str | Path] = None) -> Policy:
    """Load and validate the policy document; fall back to built-in defaults
    when neither a path nor the environment override is set."""
    if path is None:
        path = os.environ.get(ENV_POLICY_PATH) or None
    if path is None:
        return default_policy()
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_policy(text, filename=str(path), source_path=path)


def parse_policy(text: str, filename: str = "<policy>", source_path: Optional[Path] = None) -> Policy:
    w = _Walker(filename)
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise PolicyError(f"{filename}: {exc}") from exc
    base = default_policy()
    if root is None:
        return base
    sections = w.mapping(root, "policy document")
    w.reject_unknown(sections, _SECTIONS, root, "policy document")

    adapters = base.adapters
    if "adapters" in sections:
        adapters = _parse_adapters(w, sections["adapters"], base.adapters)
    trust = base.trust
    if "target_trust" in sections:
        trust = _parse_target_trust(w, sections["target_trust"], base.trust)
    if "labels" in sections:
        trust = _parse_labels(w, sections["labels"], trust)
    risk, oracle = base.risk, base.oracle
    if "risk" in sections:
        risk, oracle = _parse_risk(w, sections["risk"], base.risk)
    task_grant = base.task_grant
    if "authority" in sections:
        authority_fields = w.mapping(sections["authority"], "authority")
        w.reject_unknown(authority_fields, {"task_grant"}, sections["authority"], "authority")
        if "task_grant" in authority_fields:
            task_grant = _parse_grant(w, authority_fields["task_grant"], "authority.task_grant")
    overrides: OverrideTable = base.overrides
    if "enforcement" in sections:
        overrides = _parse_enforcement(w, sections["enforcement"])
    patterns = base.patterns
    if "audit" in sections:
        patterns = _parse_patterns(w, sections["audit"])
    ledger_dir = base.ledger_dir
    if "ledger" in sections:
        ledger_fields = w.mapping(sections["ledger"], "ledger")
        w.reject_unknown(ledger_fields, {"dir"}, sections["ledger"], "ledger")
        if "dir" in ledger_fields and not ledger_fields["dir"].tag.endswith(":null"):
            ledger_dir = Path(w.string(ledger_fields["dir"], "ledger.dir"))
    return Policy(
        adapters=adapters,
        trust=trust,
        risk=risk,
        task_grant=task_grant,
        overrides=overrides,
        patterns=patterns,
        ledger_dir=ledger_dir,
        oracle=oracle,
        source_path=source_path,
    )


def stub_oracle(action: NormalizedAction, task_text: str, recent: Any) -> str:
    """Built-in stand-in for an external risk oracle: always uncertain, so
    ambiguous cases escalate instead of defaulting toward allow."""
    return "uncertain"


def http_oracle(config: OracleConfig):
    """External oracle over HTTP: POSTs the action context, expects a JSON
    body {"label": "low" | "high" | "uncertain"}. Errors read as uncertain."""

    def call(action: NormalizedAction, task_text: str, recent: Any) -> str:
        payload = json.dumps(
            {
                "action": {
                    "capability": action.capability.value,
                    "target": action.target,
                    "effect_summary": action.effect.summary,
                },
                "task": task_text,
                "recent_steps": len(recent),
            }
        ).encode("utf-8")
        request = urllib.request.Request(
            config.endpoint, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=config.timeout_secs) as response:
                body = json.loads(response.read().decode("utf-8"))
        except Exception:
            return "uncertain"
        label = body.get("label")
        return label if label in ("low", "high") else "uncertain"

    return call


def make_oracle(config: OracleConfig):
    if config.kind == "none":
        return None
    if config.kind == "stub":
        return stub_oracle
    return http_oracle(config)
