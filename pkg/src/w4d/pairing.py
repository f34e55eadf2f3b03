"""Pairing table between modulation coefficients and link integrals.

The first-order NLI on polarization ``q`` of the channel under test is

    du_q = sum_{k,l,m} X_{klm} sum_p s_{k,p} conj(s_{l,p}) s_{m,q}

so its variance involves six symbol slots (k, l, m from du and k', l', m'
from its conjugate) and its correlation with the transmitted symbol involves
four (k, l, m and the reference slot o at time 0). For symbols that are
independent across time and channels, every expectation expands over set
partitions of the slots into blocks of equal time index (joint cumulants).
Each partition contributes ``coefficient(partition) * chi(partition)``:
the coefficient is a product of block cumulants summed over the
polarization labels, the chi term is the kernel contraction with the block
index identifications. Odd blocks vanish (sign-symmetric constellations).

Editing :data:`VARIANCE_SLOTS` / :data:`CORRELATION_SLOTS` or the block
filter below changes the model without touching the numerics.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

# component ids used in moment bookkeeping
X, XC, Y, YC = 0, 1, 2, 3


@dataclass(frozen=True)
class Slot:
    name: str
    tensor: int      # 0: du kernel, 1: conjugated kernel, -1: reference symbol
    axis: int        # axis of the kernel tensor (k, l, m) -> (0, 1, 2)
    conj: bool       # symbol appears conjugated
    pol: str         # 'p' (summed, first copy), 'pp' (summed, second copy), 'q' (target)
    channel_role: int  # index in the triplet (a, b, c); -1 for the reference slot


VARIANCE_SLOTS = (
    Slot("k", 0, 0, False, "p", 0),
    Slot("l", 0, 1, True, "p", 1),
    Slot("m", 0, 2, False, "q", 2),
    Slot("k'", 1, 0, True, "pp", 0),
    Slot("l'", 1, 1, False, "pp", 1),
    Slot("m'", 1, 2, True, "q", 2),
)

CORRELATION_SLOTS = VARIANCE_SLOTS[:3] + (Slot("o", -1, -1, True, "q", -1),)


def set_partitions(items: Sequence) -> Iterator[list[list]]:
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def component(slot: Slot, p: str, pp: str, q: str) -> int:
    pol = {"p": p, "pp": pp, "q": q}[slot.pol]
    base = X if pol == "x" else Y
    return base + (1 if slot.conj else 0)


def partition_key(blocks: Sequence[Sequence[int]], slots: Sequence[Slot]) -> str:
    return "|".join("".join(slots[i].name for i in b) for b in blocks)


def _block_parity_ok(comps: Sequence[int]) -> bool:
    nx = sum(1 for c in comps if c in (X, XC))
    ny = len(comps) - nx
    return nx % 2 == 0 and ny % 2 == 0


POLS = ("x", "y")


@lru_cache(maxsize=None)
def partitions(family: str) -> tuple[tuple[str, tuple[tuple[int, ...], ...]], ...]:
    """Partitions of the slot family that can carry a nonzero coefficient.

    ``family`` is ``"var"`` or ``"cor"``. Returns ``(key, blocks)`` pairs
    in a fixed order.
    """
    slots = VARIANCE_SLOTS if family == "var" else CORRELATION_SLOTS
    out = []
    for blocks in set_partitions(range(len(slots))):
        if any(len(b) % 2 for b in blocks):
            continue
        blocks = sorted((tuple(sorted(b)) for b in blocks))
        alive = False
        for p in POLS:
            for pp in POLS:
                for q in POLS:
                    if all(_block_parity_ok([component(slots[i], p, pp, q) for i in b])
                           for b in blocks):
                        alive = True
        if alive:
            out.append((partition_key(blocks, slots), tuple(blocks)))
    out.sort()
    return tuple(out)


def slots_for(family: str) -> tuple[Slot, ...]:
    return VARIANCE_SLOTS if family == "var" else CORRELATION_SLOTS


GN_KEY = "kk'|ll'|mm'"
