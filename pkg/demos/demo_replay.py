"""Walkthrough: replay the bundled attack and benign suites.

Run with: python demos/demo_replay.py
Equivalent CLI: actionguard-replay run --suite cases/attacks --report table
"""

from pathlib import Path

from actionguard.policy import default_policy
from actionguard.replay_harness import emit_report, load_suite, run_suite

ROOT = Path(__file__).resolve().parent.parent


def main():
    policy = default_policy()

    print("== attack trajectories (decisive steps must never execute) ==")
    attacks = run_suite(load_suite(ROOT / "cases" / "attacks"), policy)
    print(emit_report(attacks, "table"))

    print()
    print("== benign trajectories (every required step must execute) ==")
    benign = run_suite(load_suite(ROOT / "cases" / "benign"), policy)
    print(emit_report(benign, "table"))


if __name__ == "__main__":
    main()
