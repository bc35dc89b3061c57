"""Exact modular arithmetic and exact accumulation of root-of-unity phases.

All exponential sums in this package are accumulated as integer
multiplicities of e(k/q) = exp(2*pi*i*k/q) over Z/qZ and converted to a
complex double only once, at the very end.  This keeps the combinatorial
part of every Kloosterman-type sum exact.
"""

from __future__ import annotations

from math import gcd

import numpy as np


def egcd(a: int, b: int) -> tuple[int, int, int]:
    """Extended Euclid: return (g, x, y) with a*x + b*y = g = gcd(a,b) > 0.

    Raises ValueError when a = b = 0.
    """
    if a == 0 and b == 0:
        raise ValueError("egcd(0, 0) is undefined")
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def solve_unimodular(B: int, C: int, D: int) -> tuple[int, int]:
    """Solve Y*B + Z*C = 1 (mod D) for one (Y, Z), D >= 1.

    Solvable exactly when gcd(B, C, D) = 1.  The construction is
    deterministic: pick Z inverting C modulo h = gcd(B, D), then solve the
    remaining congruence for Y modulo D/h.  Any valid solution is
    acceptable downstream (the exponential sums are solution independent).
    """
    if D < 1:
        raise ValueError("modulus D must be >= 1")
    if gcd(gcd(B, C), D) != 1:
        raise ValueError(f"no solution: gcd({B},{C},{D}) > 1")
    if D == 1:
        return 0, 0
    h = gcd(B, D)
    # C is invertible mod h because gcd(B,C,D)=1.
    Z = pow(C % h, -1, h) if h > 1 else 0
    rem = 1 - Z * C
    # h divides rem by construction; reduce and invert B/h mod D/h.
    Dh = D // h
    Y = (pow((B // h) % Dh, -1, Dh) * ((rem // h) % Dh)) % Dh if Dh > 1 else 0
    assert (Y * B + Z * C) % D == 1 % D
    return Y, Z


def all_unimodular_solutions(B: int, C: int, D: int) -> list[tuple[int, int]]:
    """All (Y, Z) in [0,D)^2 with Y*B + Z*C = 1 (mod D).  Small D only."""
    out = []
    for Y in range(D):
        for Z in range(D):
            if (Y * B + Z * C) % D == 1 % D:
                out.append((Y, Z))
    return out


class RootOfUnityAccumulator:
    """Integer multiplicities of e(k/q) over Z/qZ, q >= 1.

    counts[k] is the signed multiplicity of the term e(k/q); indices are
    always reduced mod q on entry, so adding k and k+q is bit-identical.
    """

    __slots__ = ("q", "counts")

    def __init__(self, q: int):
        if q < 1:
            raise ValueError("modulus q must be >= 1")
        self.q = q
        self.counts: dict[int, int] = {}

    def add(self, k: int, mult: int = 1) -> "RootOfUnityAccumulator":
        k %= self.q
        c = self.counts.get(k, 0) + mult
        if c:
            self.counts[k] = c
        else:
            del self.counts[k]
        return self

    def add_array(self, ks: np.ndarray) -> "RootOfUnityAccumulator":
        """Accumulate every residue of an integer array (multiplicity 1 each)."""
        binned = np.bincount(np.asarray(ks, dtype=np.int64) % self.q,
                             minlength=self.q)
        for k in np.nonzero(binned)[0]:
            self.add(int(k), int(binned[k]))
        return self

    def merge(self, other: "RootOfUnityAccumulator") -> "RootOfUnityAccumulator":
        if other.q != self.q:
            raise ValueError("cannot merge accumulators with different moduli")
        for k, c in other.counts.items():
            self.add(k, c)
        return self

    def term_count(self) -> int:
        return sum(abs(c) for c in self.counts.values())

    def evaluate(self) -> complex:
        """Sum counts[k]*e(k/q) in double precision (one trig call per class)."""
        if not self.counts:
            return 0j
        ks = np.fromiter(self.counts.keys(), dtype=np.int64)
        cs = np.fromiter(self.counts.values(), dtype=np.int64)
        return complex(np.sum(cs * np.exp(2j * np.pi * ks / self.q)))

    def __eq__(self, other) -> bool:
        return (isinstance(other, RootOfUnityAccumulator)
                and self.q == other.q and self.counts == other.counts)

    def __repr__(self) -> str:
        return f"RootOfUnityAccumulator(q={self.q}, nonzero={len(self.counts)})"
