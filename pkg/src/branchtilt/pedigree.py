"""Family-space bookkeeping for branching populations.

Individuals are addressed by descent labels: the founding ancestor is the
empty tuple ``()``, and ``x + (k,)`` is the k-th child (1-based) of ``x``.
A *line* is an antichain of labels, no member descending from another; a
line *covers* a realised population when every realised individual is an
ancestor or a descendant of some member, so the line separates the founder
from the far future of the population.

Labels are plain ``tuple[int, ...]`` values: immutable, hashable, and
cheap enough for event loops.  All operations here are pure functions.
"""

from __future__ import annotations

from typing import Collection, Iterable

Label = tuple[int, ...]

ROOT: Label = ()


def mother(x: Label) -> Label:
    """Label of x's mother; the root is her own mother."""
    return x[:-1] if x else ROOT


def rank(x: Label) -> int:
    """Birth rank of x among her siblings (1-based); 0 for the root.

    The root has no rank; 0 is a sentinel that no real rank takes.
    """
    return x[-1] if x else 0


def generation(x: Label) -> int:
    return len(x)


def concat(x: Label, y: Label) -> Label:
    """The individual addressed by following y's path below x."""
    return x + y


def stems_from(x: Label, y: Label) -> bool:
    """True iff x descends from y (reflexively: every label stems from itself)."""
    return x[: len(y)] == y


def in_direct_line(x: Label, y: Label) -> bool:
    """True iff one of x, y descends from the other."""
    return stems_from(x, y) or stems_from(y, x)


def sort_key(x: Label) -> tuple[int, Label]:
    """Total order on labels: generation first, then lexicographic."""
    return (len(x), x)


def validate_label(x: Label) -> None:
    """Raise ValueError unless x is a tuple of positive integers."""
    if not isinstance(x, tuple):
        raise ValueError(f"label must be a tuple, got {type(x).__name__}")
    for entry in x:
        if not isinstance(entry, int) or isinstance(entry, bool) or entry < 1:
            raise ValueError(f"label entries must be positive integers, got {x!r}")


def is_line(members: Collection[Label]) -> bool:
    """True iff no member is a proper descendant of another member."""
    member_set = set(members)
    if len(member_set) != len(members):
        return False
    for x in member_set:
        for i in range(len(x)):
            if x[:i] in member_set:
                return False
    return True


def _prefix_closure(labels: Iterable[Label]) -> set[Label]:
    closed: set[Label] = set()
    for x in labels:
        for i in range(len(x) + 1):
            closed.add(x[:i])
    return closed


def is_covering_on(members: Collection[Label], realised: Collection[Label]) -> bool:
    """True iff the line ``members`` covers the realised population.

    ``realised`` must be prefix-closed (it contains the root and the mother
    of each of its elements); anything else is not a realised population
    and raises ValueError.  ``members`` must pass :func:`is_line`.

    Covering means every realised label is in direct line with some member:
    each realised individual either already carries a member among her
    ancestors or can still produce one.
    """
    realised_set = set(realised)
    if ROOT not in realised_set:
        raise ValueError("realised set must contain the root")
    for x in realised_set:
        if x and mother(x) not in realised_set:
            raise ValueError(f"realised set is not prefix-closed: {x!r} lacks its mother")
    if not is_line(members):
        raise ValueError("members do not form a line")

    member_set = set(members)
    # x is covered iff some ancestor of x (x included) is a member, or some
    # member descends from x, i.e. x prefixes a member.
    member_prefixes = _prefix_closure(member_set)
    for x in realised_set:
        if x in member_prefixes:
            continue
        if any(x[:i] in member_set for i in range(len(x) + 1)):
            continue
        return False
    return True


def progeny_of(members: Collection[Label], universe: Collection[Label]) -> set[Label]:
    """All labels in ``universe`` that stem from some member (members included,
    when present in the universe)."""
    member_set = set(members)
    out: set[Label] = set()
    for x in universe:
        if any(x[:i] in member_set for i in range(len(x) + 1)):
            out.add(x)
    return out


def label_to_json(x: Label) -> list[int]:
    """Serialize a label as a plain integer array (root = [])."""
    return list(x)


def label_from_json(entries: Iterable[int]) -> Label:
    x = tuple(int(e) for e in entries)
    validate_label(x)
    return x
