"""Trajectory replay: drive scripted agent sessions through the guard.

Case files script an agent step by step (tool calls plus optionally
injected resource content), declare which steps are decisive for a
malicious case or required for a benign one, and run against a policy
inside a throwaway sandbox. The suite report computes attack success
rate, benign utility preservation, and overdefense from the recorded
dispositions.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .action_model import Capability, RawToolCall, Substrate
from .authority import GrantSpec, Ttl
from .enforcement import Decision
from .guard_core import (
    Disposition,
    EXECUTING_DISPOSITIONS,
    Session,
    TaskSpec,
    check_action,
    open_session,
    record_tool_output,
)
from .ledger_audit import ObservationRecord, record_observation
from .policy import Policy, load_policy
from .risk_sim import digest_of
from .trust_pool import ProvenanceLabel


class FixtureError(ValueError):
    """Case file is malformed or references a missing step."""


@dataclass(frozen=True)
class InjectedResource:
    origin: str
    channel: ProvenanceLabel
    content: str


@dataclass(frozen=True)
class ScriptStep:
    step_id: str
    tool: Optional[str]
    args: dict
    injects: tuple[InjectedResource, ...] = ()
    substrate: Substrate = Substrate.REPLAY


@dataclass(frozen=True)
class CaseFile:
    case_id: str
    kind: str  # "malicious" | "benign"
    task: TaskSpec
    files: dict[str, str]
    tool_outputs: dict[str, str]
    script: tuple[ScriptStep, ...]
    decisive: tuple[str, ...] = ()
    required: tuple[str, ...] = ()

    def validate(self) -> None:
        ids = {s.step_id for s in self.script if s.tool is not None}
        for ref in self.decisive + self.required:
            if ref not in ids:
                raise FixtureError(f"{self.case_id}: predicate references missing step {ref!r}")
        if self.kind == "malicious" and not self.decisive:
            raise FixtureError(f"{self.case_id}: malicious case declares no decisive steps")
        if self.kind == "benign" and not self.required:
            raise FixtureError(f"{self.case_id}: benign case declares no required steps")
        for path in self.files:
            if ".." in path.split("/"):
                raise FixtureError(f"{self.case_id}: environment path escapes sandbox: {path}")


@dataclass
class StepOutcome:
    step_id: str
    step: int
    capability: str
    target: str
    covered: bool
    outcome: str
    disposition: str

    @property
    def executed(self) -> bool:
        return self.disposition in (Disposition.EXECUTE.value, Disposition.EXECUTE_AUDITED.value)


@dataclass
class CaseOutcome:
    case_id: str
    kind: str
    steps: list[StepOutcome]
    ledger_path: Optional[str]

    def _by_id(self, step_id: str) -> StepOutcome:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise FixtureError(f"{self.case_id}: no outcome for step {step_id!r}")

    def attack_executed(self, decisive: Sequence[str]) -> bool:
        return any(self._by_id(sid).executed for sid in decisive)

    def all_required_executed(self, required: Sequence[str]) -> bool:
        return all(self._by_id(sid).executed for sid in required)

    def any_required_rejected(self, required: Sequence[str]) -> bool:
        return any(
            self._by_id(sid).disposition == Disposition.REJECTED.value for sid in required
        )


@dataclass
class SuiteReport:
    cases: list[dict]
    asr: Optional[float]
    upr: Optional[float]
    overdefense: Optional[float]


def load_case(path: Path) -> CaseFile:
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise FixtureError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise FixtureError(f"{path}: case file must be a mapping")
    try:
        task_doc = doc["task"]
        grant_doc = task_doc["grant"]
        grant = GrantSpec(
            capabilities=frozenset(Capability[c.upper()] for c in grant_doc["capabilities"]),
            targets=tuple(grant_doc["scope"]),
            lifetime=_parse_ttl(grant_doc.get("ttl", "task_scoped")),
            fallback=Decision.parse(grant_doc.get("fallback", "inspect")),
        )
        task = TaskSpec(
            task_text=task_doc["text"],
            policy_ref=task_doc.get("policy_ref", "default"),
            grant=grant,
        )
        env = doc.get("environment", {}) or {}
        steps = []
        for item in doc["script"]:
            injects = tuple(
                InjectedResource(
                    origin=inj["origin"],
                    channel=ProvenanceLabel(inj["channel"]),
                    content=inj.get("content", ""),
                )
                for inj in item.get("inject", [])
            )
            steps.append(
                ScriptStep(
                    step_id=str(item["id"]),
                    tool=item.get("tool"),
                    args=item.get("args", {}) or {},
                    injects=injects,
                    substrate=Substrate(item.get("substrate", "replay")),
                )
            )
        success = doc.get("success", {}) or {}
        case = CaseFile(
            case_id=str(doc["case_id"]),
            kind=doc["kind"],
            task=task,
            files={str(k): str(v) for k, v in (env.get("files") or {}).items()},
            tool_outputs={str(k): str(v) for k, v in (env.get("tool_outputs") or {}).items()},
            script=tuple(steps),
            decisive=tuple(success.get("decisive", [])),
            required=tuple(success.get("required", [])),
        )
    except (KeyError, ValueError) as exc:
        raise FixtureError(f"{path}: {exc}") from exc
    case.validate()
    return case


def _parse_ttl(value) -> Ttl:
    if value == "task_scoped":
        return Ttl.task_scoped()
    if isinstance(value, dict) and "steps" in value:
        return Ttl.steps(int(value["steps"]))
    if isinstance(value, dict) and "deadline" in value:
        return Ttl.until(float(value["deadline"]))
    raise FixtureError(f"unknown ttl spec: {value!r}")


class _SandboxTools:
    """Mock tool backends; every effect stays under the sandbox root."""

    def __init__(self, root: Path, workspace_root: str, canned: dict[str, str]) -> None:
        self.root = root.resolve()
        self.workspace_root = workspace_root
        self.canned = canned

    def materialize(self, files: dict[str, str]) -> None:
        for path, content in files.items():
            real = self._resolve(path)
            real.parent.mkdir(parents=True, exist_ok=True)
            real.write_text(content, encoding="utf-8")

    def _resolve(self, path: str) -> Path:
        if not path.startswith("/"):
            path = f"{self.workspace_root.rstrip('/')}/{path}"
        real = (self.root / path.lstrip("/")).resolve()
        if real != self.root and self.root not in real.parents:
            raise FixtureError(f"path escapes the sandbox: {path}")
        return real

    def apply(self, step: ScriptStep, capability: Capability, target: str) -> str:
        if step.step_id in self.canned:
            return self.canned[step.step_id]
        tool = step.tool or ""
        if tool in ("read_file", "list_dir"):
            real = self._resolve(target)
            if real.is_dir():
                names = sorted(p.name for p in real.iterdir())
                return "\n".join(names)
            if real.exists():
                return real.read_text(encoding="utf-8")
            return f"error: no such file {target}"
        if tool in ("write_file", "edit_file", "write_config"):
            real = self._resolve(target)
            real.parent.mkdir(parents=True, exist_ok=True)
            content = str(step.args.get("content", ""))
            real.write_text(content, encoding="utf-8")
            return f"wrote {len(content)} bytes to {target}"
        if tool == "delete_file":
            real = self._resolve(target)
            if real.exists():
                real.unlink()
            return f"deleted {target}"
        if tool == "respond":
            return str(step.args.get("text", ""))
        if tool == "send_email":
            return f"sent to {target}"
        if tool in ("fetch_url", "http_post"):
            return "HTTP/1.1 200 OK (replayed)"
        if tool == "install_package":
            return f"installed {target}"
        return "ok"

    def stage(self, step: ScriptStep, target: str) -> None:
        staged = self.root / ".staged" / step.step_id
        staged.parent.mkdir(parents=True, exist_ok=True)
        staged.write_text(
            json.dumps({"tool": step.tool, "target": target, "args": step.args}, sort_keys=True),
            encoding="utf-8",
        )


def run_case(
    case: CaseFile,
    policy: Policy,
    sandbox: Optional[Path] = None,
    ledger_dir: Optional[Path] = None,
) -> CaseOutcome:
    """Feed a scripted trajectory through the guard inside a sandbox."""
    case.validate()
    owns_sandbox = sandbox is None
    tmp = tempfile.TemporaryDirectory(prefix=f"replay-{case.case_id}-") if owns_sandbox else None
    root = Path(tmp.name) if owns_sandbox else sandbox
    try:
        if ledger_dir is not None:
            policy = dataclasses.replace(policy, ledger_dir=ledger_dir)
        tools = _SandboxTools(root, policy.trust.workspace_root, case.tool_outputs)
        tools.materialize(case.files)
        session = open_session(
            case.task, policy, session_id=case.case_id, clock=lambda: 0.0
        )
        outcomes: list[StepOutcome] = []
        for step in case.script:
            for inject in step.injects:
                _observe(session, inject)
            if step.tool is None:
                continue
            raw = RawToolCall(
                session_id=case.case_id,
                step_index=session.next_step,
                tool_name=step.tool,
                arguments=step.args,
                substrate=step.substrate,
            )
            result = check_action(session, raw)
            action = result.record.action
            if result.disposition in EXECUTING_DISPOSITIONS:
                output = tools.apply(step, action.capability, action.target)
                record_tool_output(session, action.raw, output)
            elif result.disposition in (
                Disposition.STAGED_SANDBOX,
                Disposition.STAGED_QUARANTINE,
            ):
                tools.stage(step, action.target)
            outcomes.append(
                StepOutcome(
                    step_id=step.step_id,
                    step=result.step,
                    capability=action.capability.value,
                    target=action.target,
                    covered=result.record.covered,
                    outcome=result.record.outcome.label,
                    disposition=result.disposition.value,
                )
            )
        session.close()
        ledger_path = str(session.writer.path) if session.writer else None
        return CaseOutcome(
            case_id=case.case_id, kind=case.kind, steps=outcomes, ledger_path=ledger_path
        )
    finally:
        if tmp is not None:
            tmp.cleanup()


def _observe(session: Session, inject: InjectedResource) -> None:
    digest = digest_of(inject.content.encode("utf-8"))
    session.pool.label_resource(
        origin=inject.origin,
        channel=inject.channel,
        content_digest=digest,
        step=session.next_step,
        content=inject.content,
    )
    record_observation(
        session.ledger,
        ObservationRecord(
            step=session.next_step,
            channel=inject.channel,
            resource_id=inject.origin,
            content_digest=digest,
        ),
        session.pool,
    )


def load_suite(suite_dir: Path) -> list[CaseFile]:
    paths = sorted(suite_dir.rglob("*.yaml")) + sorted(suite_dir.rglob("*.yml"))
    if not paths:
        raise FixtureError(f"no case files under {suite_dir}")
    return [load_case(p) for p in paths]


def run_suite(
    cases: Sequence[CaseFile],
    policy: Policy,
    ledger_dir: Optional[Path] = None,
) -> SuiteReport:
    """Run every case and compute the suite metrics.

    ASR counts malicious cases whose decisive action executed; UPR counts
    benign cases with every required action executed; overdefense counts
    benign cases with any required action rejected outright.
    """
    rows: list[dict] = []
    malicious = benign = 0
    attacks_succeeded = benign_succeeded = benign_rejected = 0
    for case in cases:
        outcome = run_case(case, policy, ledger_dir=ledger_dir)
        row = {
            "case_id": case.case_id,
            "kind": case.kind,
            "steps": [dataclasses.asdict(s) for s in outcome.steps],
            "ledger_path": outcome.ledger_path,
        }
        if case.kind == "malicious":
            malicious += 1
            succeeded = outcome.attack_executed(case.decisive)
            attacks_succeeded += succeeded
            row["attack_executed"] = succeeded
            row["status"] = "attack-executed" if succeeded else "contained"
        else:
            benign += 1
            completed = outcome.all_required_executed(case.required)
            rejected = outcome.any_required_rejected(case.required)
            benign_succeeded += completed
            benign_rejected += rejected
            row["completed"] = completed
            row["required_rejected"] = rejected
            row["status"] = "completed" if completed else "degraded"
        rows.append(row)
    return SuiteReport(
        cases=rows,
        asr=(attacks_succeeded / malicious) if malicious else None,
        upr=(benign_succeeded / benign) if benign else None,
        overdefense=(benign_rejected / benign) if benign else None,
    )


def _fmt_metric(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def emit_report(report: SuiteReport, fmt: str = "table") -> str:
    """Render the suite report; `lines` emits one JSON object per case."""
    if fmt == "lines":
        out = [json.dumps(row, sort_keys=True) for row in report.cases]
        out.append(
            json.dumps(
                {
                    "summary": {
                        "asr": report.asr,
                        "upr": report.upr,
                        "overdefense": report.overdefense,
                    }
                },
                sort_keys=True,
            )
        )
        return "\n".join(out)
    headers = ("case_id", "kind", "status", "ledger")
    table_rows = [
        (
            row["case_id"],
            row["kind"],
            row["status"],
            row.get("ledger_path") or "-",
        )
        for row in report.cases
    ]
    widths = [max(len(h), *(len(r[i]) for r in table_rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(r[i].ljust(widths[i]) for i in range(len(headers))) for r in table_rows]
    lines.append("")
    lines.append(
        f"ASR {_fmt_metric(report.asr)}  UPR {_fmt_metric(report.upr)}  "
        f"overdefense {_fmt_metric(report.overdefense)}"
    )
    return "\n".join(lines)


def parse_report_lines(text: str) -> SuiteReport:
    """Parse the `lines` format back into a report (round-trip support)."""
    rows = []
    summary = {"asr": None, "upr": None, "overdefense": None}
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if "summary" in obj:
            summary = obj["summary"]
        else:
            rows.append(obj)
    return SuiteReport(
        cases=rows, asr=summary["asr"], upr=summary["upr"], overdefense=summary["overdefense"]
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="actionguard-replay", description="Replay scripted trajectories through the guard."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a suite of case files")
    run_p.add_argument("--suite", required=True, type=Path, help="directory of case YAML files")
    run_p.add_argument("--policy", type=Path, default=None, help="policy document")
    run_p.add_argument("--case", default=None, help="run only this case id")
    run_p.add_argument("--report", choices=("table", "lines"), default="table")
    run_p.add_argument("--out", type=Path, default=None, help="write the report here")
    run_p.add_argument("--ledger-dir", type=Path, default=None, help="directory for decision logs")
    args = parser.parse_args(argv)

    try:
        policy = load_policy(args.policy)
        cases = load_suite(args.suite)
    except (FixtureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.case is not None:
        cases = [c for c in cases if c.case_id == args.case]
        if not cases:
            print(f"error: no case named {args.case!r}", file=sys.stderr)
            return 2
    report = run_suite(cases, policy, ledger_dir=args.ledger_dir)
    rendered = emit_report(report, args.report)
    if args.out is not None:
        args.out.write_text(rendered + "\n", encoding="utf-8")
    print(rendered)
    attack_executed = any(r.get("attack_executed") for r in report.cases)
    return 1 if attack_executed else 0


if __name__ == "__main__":
    sys.exit(main())
