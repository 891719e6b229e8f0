"""Per-session registry of resource provenance, trust tiers, and constraints.

Resources observed during a session (task text, tool outputs, fetched
documents, generated code) are labeled with a provenance channel and a
trust tier. The pool answers two questions per proposed action: how
trustworthy is the resource that suggested it, and how trustworthy is the
thing it acts on. Trust informs enforcement; it never grants authority.
"""

from __future__ import annotations

import posixpath
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Optional

from .action_model import Capability, NormalizedAction, url_host
from . import globmatch


class ProvenanceLabel(str, Enum):
    USER_INPUT = "user_input"
    SYSTEM_POLICY = "system_policy"
    ORG_POLICY = "org_policy"
    VERIFIED_REPO = "verified_repo"
    POPULAR_PACKAGE = "popular_package"
    UNKNOWN_WEB = "unknown_web"
    GENERATED_CODE = "generated_code"
    TOOL_OUTPUT = "tool_output"
    LOCAL_FILE = "local_file"
    MEMORY_ENTRY = "memory_entry"


class TrustTier(IntEnum):
    T0_LOW = 0
    T1_MEDIUM = 1
    T2_HIGH = 2
    T3_AUTHORITY = 3

    @property
    def label(self) -> str:
        return self.name


class Constraint(str, Enum):
    LOCAL_ONLY = "local_only"
    NO_SECRET_ACCESS = "no_secret_access"
    NO_PERSISTENCE = "no_persistence"
    NO_NETWORK = "no_network"
    INSPECT_BEFORE_EXEC = "inspect_before_exec"


LABEL_TIERS: dict[ProvenanceLabel, TrustTier] = {
    ProvenanceLabel.USER_INPUT: TrustTier.T3_AUTHORITY,
    ProvenanceLabel.SYSTEM_POLICY: TrustTier.T3_AUTHORITY,
    ProvenanceLabel.ORG_POLICY: TrustTier.T3_AUTHORITY,
    ProvenanceLabel.VERIFIED_REPO: TrustTier.T2_HIGH,
    ProvenanceLabel.POPULAR_PACKAGE: TrustTier.T2_HIGH,
    ProvenanceLabel.TOOL_OUTPUT: TrustTier.T1_MEDIUM,
    ProvenanceLabel.LOCAL_FILE: TrustTier.T1_MEDIUM,
    ProvenanceLabel.MEMORY_ENTRY: TrustTier.T1_MEDIUM,
    ProvenanceLabel.UNKNOWN_WEB: TrustTier.T0_LOW,
    ProvenanceLabel.GENERATED_CODE: TrustTier.T0_LOW,
}

DEFAULT_CONSTRAINTS: dict[ProvenanceLabel, frozenset[Constraint]] = {
    ProvenanceLabel.GENERATED_CODE: frozenset({Constraint.INSPECT_BEFORE_EXEC}),
    ProvenanceLabel.UNKNOWN_WEB: frozenset({Constraint.NO_NETWORK, Constraint.NO_PERSISTENCE}),
}

# Attribution considers only resources the guard does not already trust.
_ATTRIBUTABLE_MAX_TIER = TrustTier.T1_MEDIUM


class UnknownResource(KeyError):
    """An influencing-resource id does not resolve in the trust pool."""


@dataclass
class ResourceRecord:
    resource_id: str
    label: ProvenanceLabel
    tier: TrustTier
    constraints: set[Constraint]
    origin: str
    content_digest: str
    first_seen_step: int


@dataclass(frozen=True)
class TrustSummary:
    resource_trust: TrustTier
    target_trust: TrustTier
    active_constraints: frozenset[Constraint]
    # Derived flag: target trust is T0 because of a secret-path match
    # (distinguishes secret targets from merely unlisted network hosts).
    secret_target: bool = False


@dataclass(frozen=True)
class TargetTrustPolicy:
    secret_patterns: tuple[str, ...]
    workspace_root: str
    network_allowlist: tuple[str, ...]
    label_overrides: tuple[tuple[str, ProvenanceLabel], ...] = ()


@dataclass
class _Observation:
    seq: int
    step: int
    resource_id: str


class TrustPool:
    """Session-scoped pool of labeled resources and their observed content."""

    def __init__(self, policy: TargetTrustPolicy) -> None:
        self.policy = policy
        self.records: dict[str, ResourceRecord] = {}
        self._content: dict[str, str] = {}
        self._observations: list[_Observation] = []
        self._seq = 0

    def label_resource(
        self,
        origin: str,
        channel: ProvenanceLabel,
        content_digest: str,
        step: int,
        content: str = "",
    ) -> ResourceRecord:
        """Register (or re-observe) a resource under its provenance label.

        Tiers never upgrade within a session and constraints only
        accumulate, so attacker content cannot launder itself through a
        later, friendlier-looking observation.
        """
        channel = self._apply_overrides(origin, channel)
        tier = LABEL_TIERS[channel]
        constraints = set(DEFAULT_CONSTRAINTS.get(channel, frozenset()))
        record = self.records.get(origin)
        if record is None:
            record = ResourceRecord(
                resource_id=origin,
                label=channel,
                tier=tier,
                constraints=constraints,
                origin=origin,
                content_digest=content_digest,
                first_seen_step=step,
            )
            self.records[origin] = record
        else:
            record.tier = min(record.tier, tier)
            record.constraints |= constraints
            record.content_digest = content_digest
        if content:
            self._content[origin] = content
        self._observations.append(_Observation(self._seq, step, origin))
        self._seq += 1
        return record

    def _apply_overrides(self, origin: str, channel: ProvenanceLabel) -> ProvenanceLabel:
        for pattern, label in self.policy.label_overrides:
            if globmatch.matches(pattern, origin):
                return label
        return channel

    def get(self, resource_id: str) -> ResourceRecord:
        try:
            return self.records[resource_id]
        except KeyError:
            raise UnknownResource(resource_id) from None

    def content_of(self, resource_id: str) -> str:
        return self._content.get(resource_id, "")

    def attribute_influencer(self, probes: Iterable[str]) -> Optional[str]:
        """Most recently observed low/medium-trust resource whose content
        contains any of the probe strings; None for user-initiated actions."""
        probe_list = [p for p in probes if p]
        if not probe_list:
            return None
        for obs in reversed(self._observations):
            record = self.records[obs.resource_id]
            if record.tier > _ATTRIBUTABLE_MAX_TIER:
                continue
            content = self._content.get(obs.resource_id, "")
            if content and any(p in content for p in probe_list):
                return record.resource_id
        return None


def target_trust(target: str, capability: Capability, policy: TargetTrustPolicy) -> TrustTier:
    """Ordered first-match-wins tier rules for the action target."""
    if not target:
        # RESPOND and other targetless actions stay inside the session.
        return TrustTier.T2_HIGH
    if is_secret_target(target, policy):
        return TrustTier.T0_LOW
    host = url_host(target)
    if host is not None:
        if _host_allowed(host, policy.network_allowlist):
            return TrustTier.T2_HIGH
        return TrustTier.T0_LOW
    if in_workspace(target, policy.workspace_root):
        return TrustTier.T2_HIGH
    return TrustTier.T1_MEDIUM


def is_secret_target(target: str, policy: TargetTrustPolicy) -> bool:
    if url_host(target) is not None:
        return False
    suffixes = _path_suffixes(target)
    for pattern in policy.secret_patterns:
        if any(globmatch.matches(pattern, s) for s in suffixes):
            return True
    return False


def _path_suffixes(path: str) -> list[str]:
    """The path plus every segment-aligned suffix, so basename-style
    patterns like "id_rsa" or ".aws/**" match deep targets."""
    parts = [p for p in path.split("/") if p not in ("", "~")]
    out = [path]
    for i in range(len(parts)):
        out.append("/".join(parts[i:]))
    return out


def _host_allowed(host: str, allowlist: Iterable[str]) -> bool:
    for entry in allowlist:
        if globmatch.matches(entry.lower(), host):
            return True
    return False


def in_workspace(target: str, workspace_root: str) -> bool:
    """Absolute targets must sit under the workspace root; relative targets
    count as workspace-relative unless they climb out of it."""
    if url_host(target) is not None:
        return False
    if target.startswith("~"):
        return False
    if target.startswith("/"):
        root = workspace_root.rstrip("/")
        return target == root or target.startswith(root + "/")
    norm = posixpath.normpath(target)
    return not (norm == ".." or norm.startswith("../"))


def trust_summary(action: NormalizedAction, pool: TrustPool, policy: TargetTrustPolicy) -> TrustSummary:
    """Trust pair for one proposed action: influencing resource and target."""
    if action.influencing_resource is None:
        resource_trust = TrustTier.T3_AUTHORITY
        constraints: frozenset[Constraint] = frozenset()
    else:
        record = pool.get(action.influencing_resource)
        resource_trust = record.tier
        constraints = frozenset(record.constraints)
    tier = target_trust(action.target, action.capability, policy)
    return TrustSummary(
        resource_trust=resource_trust,
        target_trust=tier,
        active_constraints=constraints,
        secret_target=is_secret_target(action.target, policy),
    )
