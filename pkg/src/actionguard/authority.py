"""Scoped authority contexts and the coverage predicate.

Authority answers "who allowed this, for what, and for how long". It is
held separately from trust: resources can be arbitrarily convincing and
still never mint authority. Contexts derive only by narrowing, so no
chain of derivations can exceed the root grant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

from . import globmatch
from .action_model import Capability, NormalizedAction
from .enforcement import Decision
from .trust_pool import Constraint, TrustSummary


class Issuer(str, Enum):
    USER = "user"
    SYSTEM_POLICY = "system_policy"
    ORG_POLICY = "org_policy"
    EXPLICIT_CONSENT = "explicit_consent"


class InvalidFallback(ValueError):
    """A grant tried to default uncovered actions to allow."""


class ExpansionAttempt(ValueError):
    """A derived context tried to exceed its parent's authority."""


class _Expired:
    """Sentinel returned by tick() when a context's lifetime is spent."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "Expired"


EXPIRED = _Expired()


@dataclass(frozen=True)
class Ttl:
    kind: str  # "steps" | "deadline" | "task_scoped"
    remaining: int = 0
    deadline: float = 0.0

    @classmethod
    def steps(cls, remaining: int) -> "Ttl":
        if remaining < 0:
            raise ValueError("step count must be non-negative")
        return cls(kind="steps", remaining=remaining)

    @classmethod
    def until(cls, deadline: float) -> "Ttl":
        return cls(kind="deadline", deadline=deadline)

    @classmethod
    def task_scoped(cls) -> "Ttl":
        return cls(kind="task_scoped")

    def describe(self) -> str:
        if self.kind == "steps":
            return f"steps({self.remaining})"
        if self.kind == "deadline":
            return f"deadline({self.deadline})"
        return "task_scoped"


@dataclass(frozen=True)
class GrantSpec:
    capabilities: frozenset[Capability]
    targets: tuple[str, ...]
    lifetime: Ttl
    fallback: Decision

    def __post_init__(self) -> None:
        if not self.capabilities:
            raise ValueError("grant must name at least one capability")
        if not self.targets:
            raise ValueError("grant must name at least one target pattern")


_ids = itertools.count(1)


@dataclass(frozen=True)
class AuthorityContext:
    issuer: Issuer
    subject: str
    scope: tuple[str, ...]
    ttl: Ttl
    allow_set: frozenset[Capability]
    default_guard: Decision
    parent: Optional["AuthorityContext"] = None
    context_id: int = field(default_factory=lambda: next(_ids))

    def is_expired(self, now: float) -> bool:
        if self.ttl.kind == "steps":
            return self.ttl.remaining <= 0
        if self.ttl.kind == "deadline":
            return now >= self.ttl.deadline
        return False

    def summary(self) -> dict:
        return {
            "issuer": self.issuer.value,
            "subject": self.subject,
            "scope": list(self.scope),
            "ttl": self.ttl.describe(),
            "allow_set": sorted(c.value for c in self.allow_set),
            "default_guard": self.default_guard.label,
        }


def mint_task_authority(issuer: Issuer, subject: str, grant: GrantSpec) -> AuthorityContext:
    """Root authority context for a session; fallback may never be allow."""
    if not isinstance(issuer, Issuer):
        raise ValueError(f"issuer must be a trusted authority channel, got {issuer!r}")
    if grant.fallback == Decision.ALLOW:
        raise InvalidFallback("uncovered actions must never default to allow")
    return AuthorityContext(
        issuer=issuer,
        subject=subject,
        scope=tuple(grant.targets),
        ttl=grant.lifetime,
        allow_set=frozenset(grant.capabilities),
        default_guard=grant.fallback,
        parent=None,
    )


def derive_step_authority(parent: AuthorityContext, narrowing: GrantSpec) -> AuthorityContext:
    """Child context that narrows the parent; any widening is rejected."""
    extra_caps = narrowing.capabilities - parent.allow_set
    if extra_caps:
        names = ", ".join(sorted(c.value for c in extra_caps))
        raise ExpansionAttempt(f"capabilities not granted by parent: {names}")
    for pattern in narrowing.targets:
        if not globmatch.subsumed_by_any(parent.scope, pattern):
            raise ExpansionAttempt(f"scope pattern not subsumed by parent: {pattern!r}")
    return AuthorityContext(
        issuer=parent.issuer,
        subject=parent.subject,
        scope=tuple(narrowing.targets),
        ttl=narrowing.lifetime,
        allow_set=frozenset(narrowing.capabilities) & parent.allow_set,
        default_guard=max(parent.default_guard, narrowing.fallback),
        parent=parent,
    )


# Constraint -> capabilities it forbids outright.
_CONSTRAINT_FORBIDS: dict[Constraint, frozenset[Capability]] = {
    Constraint.NO_NETWORK: frozenset({Capability.NET, Capability.SEND}),
    Constraint.NO_PERSISTENCE: frozenset({Capability.CONFIG_WRITE, Capability.INSTALL}),
    Constraint.LOCAL_ONLY: frozenset({Capability.NET, Capability.SEND, Capability.API_CALL}),
}


def constraint_violation(
    action: NormalizedAction,
    rho: TrustSummary,
    inspection_clear: bool = False,
) -> Optional[str]:
    """Name of the violated active constraint, or None."""
    for constraint in sorted(rho.active_constraints, key=lambda c: c.value):
        forbidden = _CONSTRAINT_FORBIDS.get(constraint)
        if forbidden and action.capability in forbidden:
            return constraint.value
        if constraint is Constraint.INSPECT_BEFORE_EXEC:
            if action.capability is Capability.EXEC and not inspection_clear:
                return constraint.value
        if constraint is Constraint.NO_SECRET_ACCESS and rho.secret_target:
            return constraint.value
    return None


def covered(
    action: NormalizedAction,
    alpha: AuthorityContext,
    rho: TrustSummary,
    inspection_clear: bool = False,
) -> bool:
    """Coverage predicate: capability granted, target in scope, and no
    active constraint forbids it.

    `inspection_clear` reports whether a clean inspection record exists
    for the target's content, discharging inspect-before-exec.
    """
    ok, _ = covered_with_reason(action, alpha, rho, inspection_clear)
    return ok


def covered_with_reason(
    action: NormalizedAction,
    alpha: AuthorityContext,
    rho: TrustSummary,
    inspection_clear: bool = False,
) -> tuple[bool, str]:
    if action.capability not in alpha.allow_set:
        return False, f"capability {action.capability.value} not granted"
    targetless_respond = action.capability is Capability.RESPOND and not action.target
    if action.capability is Capability.SEND and action.recipients:
        # Every recipient is a target of its own; one out-of-scope address
        # makes the whole send uncovered.
        for recipient in action.recipients:
            if not globmatch.matches_any(alpha.scope, recipient):
                return False, f"target outside granted scope: {recipient}"
    elif not targetless_respond and not globmatch.matches_any(alpha.scope, action.target):
        return False, f"target outside granted scope: {action.target}"
    violation = constraint_violation(action, rho, inspection_clear)
    if violation is not None:
        return False, f"constraint {violation} forbids {action.capability.value}"
    return True, "covered"


def covered_by_any(
    action: NormalizedAction,
    contexts: Iterable[AuthorityContext],
    rho: TrustSummary,
    inspection_clear: bool = False,
) -> tuple[bool, str]:
    """Coverage across all active contexts; any one suffices.

    When none covers, the reported reason comes from the context that got
    furthest (constraint > scope > capability) so rationales stay useful.
    """
    best_reason = "no active authority context"
    best_rank = -1
    for alpha in contexts:
        ok, reason = covered_with_reason(action, alpha, rho, inspection_clear)
        if ok:
            return True, reason
        rank = 2 if reason.startswith("constraint") else 1 if reason.startswith("target") else 0
        if rank > best_rank:
            best_rank = rank
            best_reason = reason
    return False, best_reason


def tick(alpha: AuthorityContext, now: float) -> Union[AuthorityContext, _Expired]:
    """Advance a context's lifetime by one guarded action."""
    if alpha.ttl.kind == "steps":
        if alpha.ttl.remaining <= 1:
            return EXPIRED
        return AuthorityContext(
            issuer=alpha.issuer,
            subject=alpha.subject,
            scope=alpha.scope,
            ttl=Ttl.steps(alpha.ttl.remaining - 1),
            allow_set=alpha.allow_set,
            default_guard=alpha.default_guard,
            parent=alpha.parent,
            context_id=alpha.context_id,
        )
    if alpha.ttl.kind == "deadline":
        if now >= alpha.ttl.deadline:
            return EXPIRED
        return alpha
    return alpha
