"""Sites, boxes and hyperoctahedral orbits on the integer lattice.

Sites are plain tuples of ints; a direction is the 0-based axis index of a
positive unit vector. Everything here is pure and cheap; the point is to fix
one deterministic convention (canonical orbit representatives, site ordering
inside lattice sums) that the rest of the package can rely on.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Iterator, Sequence, Tuple

Site = Tuple[int, ...]


def add(x: Site, y: Site) -> Site:
    return tuple(a + b for a, b in zip(x, y))


def sub(x: Site, y: Site) -> Site:
    return tuple(a - b for a, b in zip(x, y))


def neg(x: Site) -> Site:
    return tuple(-a for a in x)


def unit(d: int, axis: int) -> Site:
    """Positive unit vector along `axis` (0-based) in d dimensions."""
    if not 0 <= axis < d:
        raise ValueError(f"axis {axis} out of range for d={d}")
    return tuple(1 if k == axis else 0 for k in range(d))


def shift(x: Site, axis: int, step: int = 1) -> Site:
    return tuple(a + (step if k == axis else 0) for k, a in enumerate(x))


def sup_norm(x: Site) -> int:
    return max(abs(a) for a in x) if x else 0


def one_norm(x: Site) -> int:
    return sum(abs(a) for a in x)


def canonical_rep(x: Site) -> Site:
    """Representative of the orbit of x under permutations and sign flips.

    Convention: absolute coordinates sorted in descending order. Two sites
    share a representative iff one maps to the other by an element of the
    hyperoctahedral group (order 2^d * d!).
    """
    return tuple(sorted((abs(a) for a in x), reverse=True))


def orbit_reps(d: int, radius: int) -> list[Site]:
    """All canonical representatives inside the box |x|_inf <= radius."""
    reps = [
        tuple(reversed(c))
        for c in itertools.combinations_with_replacement(range(radius + 1), d)
    ]
    reps.sort()
    return reps


def orbit_size(rep: Site) -> int:
    """Number of distinct sites in the orbit of a canonical representative."""
    perms = math.factorial(len(rep))
    for v in set(rep):
        perms //= math.factorial(rep.count(v))
    signs = 2 ** sum(1 for a in rep if a != 0)
    return perms * signs


def orbit_count(d: int, radius: int) -> int:
    return math.comb(radius + d, d)


def box_sites(d: int, radius: int) -> list[Site]:
    """Sites of the box |x|_inf <= radius in summation order.

    Order is increasing sup-norm, ties broken lexicographically; lattice sums
    accumulate in exactly this order so results are reproducible.
    """
    sites = [x for x in itertools.product(range(-radius, radius + 1), repeat=d)]
    sites.sort(key=lambda x: (sup_norm(x), x))
    return sites


def signed_permutations(x: Site) -> Iterator[Site]:
    """Every image of x under the hyperoctahedral group (with repeats)."""
    d = len(x)
    for perm in itertools.permutations(range(d)):
        y = tuple(x[p] for p in perm)
        for signs in itertools.product((1, -1), repeat=d):
            yield tuple(s * a for s, a in zip(signs, y))


class NeumaierSum:
    """Compensated accumulator; one float of state plus a correction term."""

    __slots__ = ("s", "c")

    def __init__(self) -> None:
        self.s = 0.0
        self.c = 0.0

    def add(self, v: float) -> None:
        t = self.s + v
        if abs(self.s) >= abs(v):
            self.c += (self.s - t) + v
        else:
            self.c += (v - t) + self.s
        self.s = t

    @property
    def value(self) -> float:
        return self.s + self.c


def compensated_sum(values: Iterable[float]) -> float:
    acc = NeumaierSum()
    for v in values:
        acc.add(v)
    return acc.value
