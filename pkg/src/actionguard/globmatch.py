"""Segment-aware glob matching and pattern subsumption for scope checks.

Patterns are built from "/"-separated segments. Within a segment, "*"
matches any run of characters and "?" matches one character; neither
crosses a "/". A segment consisting of exactly "**" matches zero or more
whole segments, so "a/**" covers both "a" and everything under it.
A pattern prefixed with "=" matches only the literal remainder; it is
used for single-action consent grants whose target must not be widened
by glob metacharacters embedded in the target string.

Character classes ("[...]") are not part of the grammar and are treated
as literal text. Subsumption is decided exactly, as regular-language
inclusion over the pattern automata, so it agrees with brute-force
enumeration on any path universe.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

LITERAL_PREFIX = "="

GLOBSTAR = "**"

_ANY = "any"          # any character, including "/"
_NOSLASH = "noslash"  # any character except "/"
_EQ = "eq"

# A character that never appears in patterns, standing in for "every other
# character" during inclusion checks.
_OTHER = "\x01"


def _split(pattern: str) -> tuple[str, ...]:
    segments = pattern.split("/")
    # Consecutive globstars are equivalent to one.
    out: list[str] = []
    for seg in segments:
        if seg == GLOBSTAR and out and out[-1] == GLOBSTAR:
            continue
        out.append(seg)
    return tuple(out)


def _segment_matches(seg_pattern: str, segment: str) -> bool:
    """Match one path segment against a segment pattern ("*", "?", literals)."""
    sp, sg = seg_pattern, segment
    i = j = 0
    star = -1
    star_j = 0
    while j < len(sg):
        if i < len(sp) and (sp[i] == "?" or sp[i] == sg[j]):
            i += 1
            j += 1
        elif i < len(sp) and sp[i] == "*":
            star = i
            star_j = j
            i += 1
        elif star != -1:
            star_j += 1
            i = star + 1
            j = star_j
        else:
            return False
    while i < len(sp) and sp[i] == "*":
        i += 1
    return i == len(sp)


def matches(pattern: str, path: str) -> bool:
    """True when `path` is in the language of `pattern`."""
    if pattern.startswith(LITERAL_PREFIX):
        return path == pattern[len(LITERAL_PREFIX):]
    return _match_segments(_split(pattern), tuple(path.split("/")))


@lru_cache(maxsize=8192)
def _match_segments(pat: tuple[str, ...], segs: tuple[str, ...]) -> bool:
    if not pat:
        return not segs
    head = pat[0]
    if head == GLOBSTAR:
        if _match_segments(pat[1:], segs):
            return True
        return bool(segs) and _match_segments(pat, segs[1:])
    if not segs:
        return False
    return _segment_matches(head, segs[0]) and _match_segments(pat[1:], segs[1:])


def matches_any(patterns: Sequence[str], path: str) -> bool:
    return any(matches(p, path) for p in patterns)


class _Nfa:
    """Epsilon-NFA over characters for one glob pattern."""

    __slots__ = ("n_states", "eps", "trans", "accept", "literals")

    def __init__(self) -> None:
        self.n_states = 1
        self.eps: dict[int, list[int]] = {}
        self.trans: dict[int, list[tuple[str, str, int]]] = {}
        self.accept = 0
        self.literals: set[str] = set()

    def new_state(self) -> int:
        self.n_states += 1
        return self.n_states - 1

    def add_eps(self, a: int, b: int) -> None:
        self.eps.setdefault(a, []).append(b)

    def add(self, a: int, kind: str, arg: str, b: int) -> None:
        if kind == _EQ:
            self.literals.add(arg)
        self.trans.setdefault(a, []).append((kind, arg, b))

    def closure(self, states: frozenset[int]) -> frozenset[int]:
        seen = set(states)
        stack = list(states)
        while stack:
            s = stack.pop()
            for t in self.eps.get(s, ()):
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return frozenset(seen)

    def step(self, states: frozenset[int], ch: str) -> frozenset[int]:
        out: set[int] = set()
        for s in states:
            for kind, arg, t in self.trans.get(s, ()):
                if kind == _ANY or (kind == _NOSLASH and ch != "/") or (kind == _EQ and arg == ch):
                    out.add(t)
        return self.closure(frozenset(out))

    def start(self) -> frozenset[int]:
        return self.closure(frozenset({0}))

    def accepting(self, states: frozenset[int]) -> bool:
        return self.accept in states


def _chain_segment(nfa: _Nfa, cur: int, segment: str) -> int:
    for ch in segment:
        if ch == "*":
            hub = nfa.new_state()
            nfa.add_eps(cur, hub)
            nfa.add(hub, _NOSLASH, "", hub)
            cur = hub
        elif ch == "?":
            nxt = nfa.new_state()
            nfa.add(cur, _NOSLASH, "", nxt)
            cur = nxt
        else:
            nxt = nfa.new_state()
            nfa.add(cur, _EQ, ch, nxt)
            cur = nxt
    return cur


def _chain_segment_loop(nfa: _Nfa, cur: int) -> int:
    """Fragment for (segment "/")* starting at `cur`; returns the exit state."""
    out = nfa.new_state()
    entry = nfa.new_state()
    nfa.add_eps(cur, out)
    nfa.add_eps(cur, entry)
    nfa.add(entry, _NOSLASH, "", entry)
    exit_ = nfa.new_state()
    nfa.add(entry, _EQ, "/", exit_)
    nfa.add_eps(exit_, out)
    nfa.add_eps(exit_, entry)
    return out


@lru_cache(maxsize=2048)
def _build_nfa(pattern: str) -> _Nfa:
    nfa = _Nfa()
    cur = 0
    segments = _split(pattern)
    n = len(segments)
    skip_sep = False
    for i, seg in enumerate(segments):
        if seg == GLOBSTAR:
            last = i == n - 1
            if i == 0 and last:
                hub = nfa.new_state()
                out = nfa.new_state()
                nfa.add_eps(cur, hub)
                nfa.add(hub, _ANY, "", hub)
                nfa.add_eps(hub, out)
                cur = out
            elif i == 0:
                cur = _chain_segment_loop(nfa, cur)
            elif last:
                # (epsilon | "/" anything)
                out = nfa.new_state()
                hub = nfa.new_state()
                nfa.add_eps(cur, out)
                nfa.add(cur, _EQ, "/", hub)
                nfa.add(hub, _ANY, "", hub)
                nfa.add_eps(hub, out)
                cur = out
            else:
                # "/" (segment "/")*
                mid = nfa.new_state()
                nfa.add(cur, _EQ, "/", mid)
                cur = _chain_segment_loop(nfa, mid)
            skip_sep = True
            continue
        if i > 0 and not skip_sep:
            nxt = nfa.new_state()
            nfa.add(cur, _EQ, "/", nxt)
            cur = nxt
        skip_sep = False
        cur = _chain_segment(nfa, cur, seg)
    nfa.accept = cur
    return nfa


def nfa_matches(pattern: str, path: str) -> bool:
    """Automaton-based match; used to cross-check the segment matcher."""
    if pattern.startswith(LITERAL_PREFIX):
        return path == pattern[len(LITERAL_PREFIX):]
    nfa = _build_nfa(pattern)
    states = nfa.start()
    for ch in path:
        states = nfa.step(states, ch)
        if not states:
            return False
    return nfa.accepting(states)


@lru_cache(maxsize=8192)
def subsumes(parent: str, child: str) -> bool:
    """True when every path matched by `child` is also matched by `parent`.

    Decided exactly by searching the product of the child automaton with
    the parent automaton for a reachable configuration where the child
    accepts and the parent does not.
    """
    if child.startswith(LITERAL_PREFIX):
        return matches(parent, child[len(LITERAL_PREFIX):])
    if parent.startswith(LITERAL_PREFIX):
        return False
    c_nfa = _build_nfa(child)
    p_nfa = _build_nfa(parent)
    alphabet = c_nfa.literals | p_nfa.literals | {"/", _OTHER}
    start = (c_nfa.start(), p_nfa.start())
    seen = {start}
    queue = [start]
    while queue:
        c_states, p_states = queue.pop()
        if c_nfa.accepting(c_states) and not p_nfa.accepting(p_states):
            return False
        for ch in alphabet:
            nc = c_nfa.step(c_states, ch)
            if not nc:
                continue
            np = p_nfa.step(p_states, ch)
            nxt = (nc, np)
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return True


def subsumed_by_any(parents: Sequence[str], child: str) -> bool:
    return any(subsumes(p, child) for p in parents)
