"""Pre-execution risk labeling: deterministic tag detectors plus an
optional external oracle hook.

The rule engine runs eight high-severity tag detectors over the proposed
action, the task, the session history, and the trust summary. Any tag
forces a high label; sensitive capabilities suggested by low-trust
resources come out ambiguous; everything else is low. An external oracle
(when configured) may refine ambiguous labels, but an uncertain oracle
escalates rather than defaulting toward allow. Risk assessment can raise
enforcement; it has no path to grant authority.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Callable, Iterable, Optional, Sequence

from . import globmatch
from .action_model import Capability, NormalizedAction, url_host
from .trust_pool import TargetTrustPolicy, TrustSummary, TrustTier, in_workspace

logger = logging.getLogger(__name__)


class RiskTag(str, Enum):
    SECRETS = "secrets"
    PERSISTENCE = "persistence"
    DESTRUCTIVE_WRITE = "destructive_write"
    HIDDEN_RECIPIENT = "hidden_recipient"
    UNAUTHORIZED_NETWORK = "unauthorized_network"
    PRIVILEGE_ESCALATION = "privilege_escalation"
    DOWNLOAD_EXECUTE = "download_execute"
    CONFIG_POISONING = "config_poisoning"


class RiskLabel(IntEnum):
    LOW = 0
    AMBIGUOUS = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class RiskSource(str, Enum):
    RULES = "rules"
    ORACLE = "oracle"
    ORACLE_UNCERTAIN = "oracle_uncertain"


# Capabilities that warrant an ambiguous label when suggested by a
# low/medium-trust resource. API_CALL is deliberately absent: unknown
# domain tools default there, and treating every one as suspect recreates
# the false-positive pattern where read-style domain tools get blocked.
AMBIGUOUS_CAPABILITIES = frozenset(
    {
        Capability.EXEC,
        Capability.NET,
        Capability.SEND,
        Capability.CONFIG_WRITE,
        Capability.INSTALL,
        Capability.DELETE,
    }
)


@dataclass(frozen=True)
class RiskAssessment:
    label: RiskLabel
    tags: frozenset[RiskTag]
    source: RiskSource
    rationale: str


@dataclass(frozen=True)
class InspectionRecord:
    content_digest: str
    findings: frozenset[RiskTag]
    inspected_at_step: int

    @property
    def clean(self) -> bool:
        return not self.findings


class OracleTimeout(Exception):
    """External oracle did not answer in time; treated as uncertain."""


# Oracle contract: (action, task_text, recent ledger entries) -> "low" | "high" | "uncertain".
RiskOracle = Callable[[NormalizedAction, str, Sequence[object]], str]


@dataclass(frozen=True)
class RiskPolicy:
    persistence_paths: tuple[str, ...]
    agent_config_paths: tuple[str, ...]
    secret_signatures: tuple[str, ...]
    network_signatures: tuple[str, ...]
    oracle_context_k: int = 8


DEFAULT_SECRET_SIGNATURES = (
    r"\.aws/credentials",
    r"\.env\b",
    r"id_rsa",
    r"\.ssh/",
    r"(?i)api[_-]?key",
    r"(?i)secret",
    r"(?i)token",
    r"(?i)password",
)

DEFAULT_NETWORK_SIGNATURES = (
    r"requests\.(post|get|put)",
    r"urllib\.request",
    r"http\.client",
    r"socket\.connect",
    r"https?://",
    r"\bcurl\b",
    r"\bwget\b",
)

_PIPE_FROM_DOWNLOAD = re.compile(r"(curl|wget)[^\n|;]*\|\s*(sh|bash|python3?|zsh)")
_ELEVATION_WORDS = ("setuid", "ownership-change", "elevation")


def _detect_secrets(ctx: "_DetectorContext") -> bool:
    action = ctx.action
    if action.capability in (Capability.READ, Capability.WRITE) and ctx.rho.secret_target:
        return True
    # Exfiltration carry-over: a transmit following a secrets-tagged step
    # inherits the tag, so the send itself surfaces as secret-bearing.
    if action.capability in (Capability.NET, Capability.SEND, Capability.API_CALL):
        for entry in ctx.history:
            if RiskTag.SECRETS in entry.record.risk.tags:
                return True
    return False


def _detect_persistence(ctx: "_DetectorContext") -> bool:
    action = ctx.action
    if action.capability not in (Capability.WRITE, Capability.CONFIG_WRITE, Capability.INSTALL):
        return False
    return _matches_path_set(action.target, ctx.policy.persistence_paths)


def _detect_destructive_write(ctx: "_DetectorContext") -> bool:
    action = ctx.action
    if action.capability is Capability.DELETE:
        return True
    if "recursive-remove" in action.effect.summary:
        return True
    if action.capability is Capability.WRITE:
        return not in_workspace(action.target, ctx.trust_policy.workspace_root)
    return False


def _detect_hidden_recipient(ctx: "_DetectorContext") -> bool:
    action = ctx.action
    if action.capability is not Capability.SEND:
        return False
    task_text = ctx.task_text.lower()
    for addr in action.recipients:
        if addr in task_text:
            continue
        if any(globmatch.matches_any(scope, addr) for scope in ctx.scopes):
            continue
        return True
    return False


def _detect_unauthorized_network(ctx: "_DetectorContext") -> bool:
    action = ctx.action
    if action.capability not in (Capability.NET, Capability.API_CALL):
        return False
    host = url_host(action.target)
    if host is None:
        return False
    for entry in ctx.trust_policy.network_allowlist:
        if globmatch.matches(entry.lower(), host):
            return False
    if any(globmatch.matches_any(scope, action.target) for scope in ctx.scopes):
        return False
    return True


def _detect_privilege_escalation(ctx: "_DetectorContext") -> bool:
    action = ctx.action
    if action.capability is not Capability.EXEC:
        return False
    return any(word in action.effect.summary for word in _ELEVATION_WORDS)


def _detect_download_execute(ctx: "_DetectorContext") -> bool:
    action = ctx.action
    if "download-execute" in action.effect.summary:
        return True
    if action.capability is not Capability.EXEC:
        return False
    for entry in ctx.history:
        prior = entry.record.action
        if (
            prior.capability is Capability.WRITE
            and prior.target == action.target
            and entry.record.risk is not None
            and entry.trust.resource_trust is TrustTier.T0_LOW
        ):
            return True
    return False


def _detect_config_poisoning(ctx: "_DetectorContext") -> bool:
    action = ctx.action
    if action.capability not in (Capability.CONFIG_WRITE, Capability.WRITE):
        return False
    if action.influencing_resource is None or ctx.rho.resource_trust > TrustTier.T1_MEDIUM:
        return False
    return _matches_path_set(action.target, ctx.policy.agent_config_paths)


def _matches_path_set(target: str, patterns: Iterable[str]) -> bool:
    parts = [p for p in target.split("/") if p not in ("", "~")]
    candidates = [target] + ["/".join(parts[i:]) for i in range(len(parts))]
    return any(globmatch.matches(p, c) for p in patterns for c in candidates)


_DETECTORS: tuple[tuple[RiskTag, Callable[["_DetectorContext"], bool]], ...] = (
    (RiskTag.SECRETS, _detect_secrets),
    (RiskTag.PERSISTENCE, _detect_persistence),
    (RiskTag.DESTRUCTIVE_WRITE, _detect_destructive_write),
    (RiskTag.HIDDEN_RECIPIENT, _detect_hidden_recipient),
    (RiskTag.UNAUTHORIZED_NETWORK, _detect_unauthorized_network),
    (RiskTag.PRIVILEGE_ESCALATION, _detect_privilege_escalation),
    (RiskTag.DOWNLOAD_EXECUTE, _detect_download_execute),
    (RiskTag.CONFIG_POISONING, _detect_config_poisoning),
)


@dataclass
class _DetectorContext:
    action: NormalizedAction
    task_text: str
    history: Sequence[object]  # ledger entries
    scopes: tuple[tuple[str, ...], ...]
    rho: TrustSummary
    policy: RiskPolicy
    trust_policy: TargetTrustPolicy


class RiskSimulator:
    """Session-facing risk engine; detectors are pure, the oracle optional."""

    def __init__(self, policy: RiskPolicy, trust_policy: TargetTrustPolicy) -> None:
        self.policy = policy
        self.trust_policy = trust_policy
        self._oracle: Optional[RiskOracle] = None
        self._signatures = [
            (RiskTag.SECRETS, [re.compile(p) for p in policy.secret_signatures]),
            (RiskTag.UNAUTHORIZED_NETWORK, [re.compile(p) for p in policy.network_signatures]),
            (RiskTag.PERSISTENCE, [re.compile(_glob_to_regex(p)) for p in policy.persistence_paths]),
        ]

    def set_oracle(self, handle: Optional[RiskOracle]) -> "RiskSimulator":
        """Install the external oracle; consulted only for ambiguous cases."""
        self._oracle = handle
        return self

    def assess(
        self,
        action: NormalizedAction,
        task,
        history: Sequence[object],
        alpha: Sequence[object],
        rho: TrustSummary,
    ) -> RiskAssessment:
        task_text = getattr(task, "task_text", str(task or ""))
        scopes = tuple(tuple(a.scope) for a in alpha)
        ctx = _DetectorContext(
            action=action,
            task_text=task_text,
            history=history,
            scopes=scopes,
            rho=rho,
            policy=self.policy,
            trust_policy=self.trust_policy,
        )
        tags: set[RiskTag] = set()
        notes: list[str] = []
        degraded = False
        for tag, detector in _DETECTORS:
            try:
                if detector(ctx):
                    tags.add(tag)
            except Exception as exc:  # detector failures degrade, never allow
                degraded = True
                notes.append(f"detector {tag.value} failed: {exc}")
                logger.warning("risk detector %s failed: %s", tag.value, exc)
        if tags:
            label = RiskLabel.HIGH
            notes.insert(0, "high-risk tags: " + ", ".join(sorted(t.value for t in tags)))
        elif degraded:
            label = RiskLabel.AMBIGUOUS
        elif (
            action.capability in AMBIGUOUS_CAPABILITIES
            and rho.resource_trust <= TrustTier.T1_MEDIUM
            and not self._consented(action, alpha, rho)
        ):
            label = RiskLabel.AMBIGUOUS
            notes.append(
                f"sensitive capability {action.capability.value} suggested by "
                f"{rho.resource_trust.label} resource"
            )
        else:
            label = RiskLabel.LOW
            notes.append("routine")
        source = RiskSource.RULES
        if label is RiskLabel.AMBIGUOUS and not tags and self._oracle is not None:
            label, source, oracle_note = self._consult_oracle(ctx, label)
            notes.append(oracle_note)
        return RiskAssessment(
            label=label,
            tags=frozenset(tags),
            source=source,
            rationale="; ".join(notes),
        )

    def _consented(self, action: NormalizedAction, alpha: Sequence[object], rho: TrustSummary) -> bool:
        """Explicit consent resolves trust-based ambiguity for the exact
        action it covers; detector tags are unaffected by consent."""
        from .authority import Issuer, covered_with_reason

        for ctx in alpha:
            if getattr(ctx, "issuer", None) is not Issuer.EXPLICIT_CONSENT:
                continue
            ok, _ = covered_with_reason(action, ctx, rho, inspection_clear=True)
            if ok:
                return True
        return False

    def _consult_oracle(self, ctx: _DetectorContext, label: RiskLabel) -> tuple[RiskLabel, RiskSource, str]:
        k = self.policy.oracle_context_k
        recent = list(ctx.history)[-k:] if k > 0 else []
        try:
            answer = self._oracle(ctx.action, ctx.task_text, recent)
        except OracleTimeout:
            answer = "uncertain"
        except Exception as exc:
            logger.warning("risk oracle failed: %s", exc)
            answer = "uncertain"
        if answer == "low":
            return RiskLabel.LOW, RiskSource.ORACLE, "oracle: low"
        if answer == "high":
            return RiskLabel.HIGH, RiskSource.ORACLE, "oracle: high"
        return max(label, RiskLabel.AMBIGUOUS), RiskSource.ORACLE_UNCERTAIN, "oracle: uncertain"

    def inspect_script(self, content: bytes, digest: str, step: int = 0) -> InspectionRecord:
        """Static line scan of script content; never executes anything.

        Undecodable payloads are conventionally treated as a
        download-execute finding.
        """
        try:
            text = content.decode("utf-8")
        except UnicodeDecodeError:
            return InspectionRecord(
                content_digest=digest,
                findings=frozenset({RiskTag.DOWNLOAD_EXECUTE}),
                inspected_at_step=step,
            )
        findings: set[RiskTag] = set()
        for line in text.splitlines():
            for tag, patterns in self._signatures:
                if any(p.search(line) for p in patterns):
                    findings.add(tag)
            if _PIPE_FROM_DOWNLOAD.search(line):
                findings.add(RiskTag.DOWNLOAD_EXECUTE)
        return InspectionRecord(
            content_digest=digest,
            findings=frozenset(findings),
            inspected_at_step=step,
        )


def _glob_to_regex(pattern: str) -> str:
    out = []
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if pattern[i : i + 2] == "**":
            out.append(".*")
            i += 2
            continue
        if ch == "*":
            out.append("[^/]*")
        elif ch == "?":
            out.append("[^/]")
        else:
            out.append(re.escape(ch))
        i += 1
    return "".join(out)


def digest_of(content: bytes) -> str:
    return hashlib.sha256(content).hexdigest()
