"""Exact classical and SL(3,Z) long-element Kloosterman sums.

The long-element sum over moduli (D1, D2) is

    S(m1,m2,n1,n2; D1,D2)
      = sum e( (m1*B1 + n1*(Y1*D2 - Z1*B2))/D1 + (m2*B2 + n2*(Y2*D1 - Z2*B1))/D2 )

over B1,C1 mod D1 and B2,C2 mod D2 restricted to

    D1*C2 + B1*B2 + D2*C1 = 0 (mod D1*D2),
    gcd(B1,C1,D1) = gcd(B2,C2,D2) = 1,

with Y_i*B_i + Z_i*C_i = 1 (mod D_i).  The convention used throughout is

    S_wl(psi_m, psi_n; c) = S(-n2, -n1, m1, m2; c1, c2),

and for coprime moduli this factors into classical sums,

    S_wl(psi_m, psi_n; c) = S(m1, -n2*c2; c1) * S(m2*c1, -n1; c2).

Every sum is accumulated exactly over Z/(D1*D2)Z and evaluated to a
complex double once at the end.  Enumeration tables depend only on the
moduli, so they are cached and reused across index choices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gcd
import csv
import io

import numpy as np

from .exactmod import RootOfUnityAccumulator, solve_unimodular

BRUTEFORCE_CAP = 10_000        # c1*c2 limit for the oracle enumerator
MODULUS_CAP = 2 ** 31          # D1*D2 limit everywhere (int64 phase safety)
EXACT_EVAL_CAP = 2 ** 22       # largest q kept as an exact count table


class ScaleError(ValueError):
    """Requested enumeration exceeds the configured exact-arithmetic scale."""


@dataclass(frozen=True)
class LongElementInstance:
    """Indices m, n in Z^2 (all entries nonzero) and moduli c in N^2."""

    m: tuple[int, int]
    n: tuple[int, int]
    c: tuple[int, int]

    def __post_init__(self):
        m1, m2 = self.m
        n1, n2 = self.n
        c1, c2 = self.c
        if m1 * m2 * n1 * n2 == 0:
            raise ValueError("indices m, n must be nonzero")
        if c1 < 1 or c2 < 1:
            raise ValueError("moduli must be positive")
        if c1 * c2 > MODULUS_CAP:
            raise ScaleError(f"c1*c2 = {c1 * c2} exceeds the modulus cap {MODULUS_CAP}")

    def sign_condition(self) -> bool:
        """m1*n2 > 0 and m2*n1 > 0 (required by the smooth-average experiments)."""
        return self.m[0] * self.n[1] > 0 and self.m[1] * self.n[0] > 0


@dataclass
class KloostermanValue:
    value: complex
    q: int
    term_count: int

    def __complex__(self) -> complex:
        return self.value


def divisor_count(c: int) -> int:
    tau, d = 1, 2
    while d * d <= c:
        if c % d == 0:
            e = 0
            while c % d == 0:
                c //= d
                e += 1
            tau *= e + 1
        d += 1
    if c > 1:
        tau *= 2
    return tau


# ---------------------------------------------------------------------------
# classical sums
# ---------------------------------------------------------------------------

@lru_cache(maxsize=512)
def _inverse_table(c: int) -> tuple[np.ndarray, np.ndarray]:
    """(units mod c, their inverses) as int64 arrays."""
    xs = np.arange(c if c > 1 else 1, dtype=np.int64)
    if c == 1:
        return xs, xs
    units = xs[np.gcd(xs, c) == 1]
    # batched Euler inversion: x^(phi(c)-1) mod c by square and multiply
    e = int(len(units)) - 1
    result = np.ones_like(units)
    base = units.copy()
    while e:
        if e & 1:
            result = (result * base) % c
        base = (base * base) % c
        e >>= 1
    return units, result


def classical_kloosterman(m: int, n: int, c: int) -> KloostermanValue:
    """S(m,n;c) = sum over x*xbar = 1 (mod c) of e((m*x + n*xbar)/c), exactly."""
    if c < 1:
        raise ValueError("modulus c must be >= 1")
    if c == 1:
        return KloostermanValue(1 + 0j, 1, 1)
    units, invs = _inverse_table(c)
    acc = RootOfUnityAccumulator(c)
    acc.add_array((m % c) * units + (n % c) * invs)
    return KloostermanValue(acc.evaluate(), c, len(units))


def weil_bound(m: int, n: int, c: int) -> float:
    """tau(c) * sqrt(gcd(m,n,c)) * sqrt(c)."""
    return divisor_count(c) * (gcd(gcd(m, n), c) * c) ** 0.5


# ---------------------------------------------------------------------------
# long-element enumeration tables
#
# A table row is one admissible tuple, stored as (B1, T1, B2, T2) with
# T1 = Y1*D2 - Z1*B2 mod D1 and T2 = Y2*D1 - Z2*B1 mod D2, so that the
# phase for indices (a1,a2,b1,b2) is (a1*B1+b1*T1)/D1 + (a2*B2+b2*T2)/D2.
# ---------------------------------------------------------------------------

def _admissible_tuples_bruteforce(D1: int, D2: int, uz_solver=solve_unimodular):
    """Scan every (B1,C1,B2,C2) and keep the admissible ones (oracle path)."""
    q = D1 * D2
    rows = []
    for B1 in range(D1):
        for C1 in range(D1):
            if gcd(gcd(B1, C1), D1) != 1:
                continue
            Y1, Z1 = uz_solver(B1, C1, D1)
            for B2 in range(D2):
                for C2 in range(D2):
                    if gcd(gcd(B2, C2), D2) != 1:
                        continue
                    if (D1 * C2 + B1 * B2 + D2 * C1) % q != 0:
                        continue
                    Y2, Z2 = uz_solver(B2, C2, D2)
                    rows.append((B1, (Y1 * D2 - Z1 * B2) % D1,
                                 B2, (Y2 * D1 - Z2 * B1) % D2))
    return rows


def _admissible_tuples_fast(D1: int, D2: int, uz_solver=solve_unimodular):
    """Loop (B1,B2) only; solve D2*C1 = -B1*B2 (mod D1), then C2 is forced."""
    g = gcd(D2, D1)
    D1g = D1 // g
    inv = pow((D2 // g) % D1g, -1, D1g) if D1g > 1 else 0
    rows = []
    for B1 in range(D1):
        for B2 in range(D2):
            r = B1 * B2
            if r % g != 0:
                continue
            base = (-(r // g) * inv) % D1g
            for t in range(g):
                C1 = base + t * D1g
                if gcd(gcd(B1, C1), D1) != 1:
                    continue
                N = r + D2 * C1
                C2 = (-(N // D1)) % D2
                if gcd(gcd(B2, C2), D2) != 1:
                    continue
                Y1, Z1 = uz_solver(B1, C1, D1)
                Y2, Z2 = uz_solver(B2, C2, D2)
                rows.append((B1, (Y1 * D2 - Z1 * B2) % D1,
                             B2, (Y2 * D1 - Z2 * B1) % D2))
    return rows


def _rows_to_arrays(rows) -> tuple[np.ndarray, ...]:
    if not rows:
        z = np.zeros(0, dtype=np.int64)
        return z, z.copy(), z.copy(), z.copy()
    arr = np.asarray(rows, dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]


@lru_cache(maxsize=4096)
def _table_bruteforce(D1: int, D2: int):
    return _rows_to_arrays(_admissible_tuples_bruteforce(D1, D2))


@lru_cache(maxsize=4096)
def _table_fast(D1: int, D2: int):
    return _rows_to_arrays(_admissible_tuples_fast(D1, D2))


def _accumulate_raw(a1: int, a2: int, b1: int, b2: int, D1: int, D2: int,
                    table) -> RootOfUnityAccumulator:
    """Exact accumulator of S(a1,a2,b1,b2;D1,D2) from a tuple table."""
    B1, T1, B2, T2 = table
    q = D1 * D2
    acc = RootOfUnityAccumulator(q)
    if len(B1) == 0:
        return acc
    k1 = ((a1 % D1) * B1 + (b1 % D1) * T1) % D1
    k2 = ((a2 % D2) * B2 + (b2 % D2) * T2) % D2
    acc.add_array(k1 * D2 + k2 * D1)
    return acc


def _raw_value(a1, a2, b1, b2, D1, D2, table) -> KloostermanValue:
    if D1 * D2 <= EXACT_EVAL_CAP:
        acc = _accumulate_raw(a1, a2, b1, b2, D1, D2, table)
        return KloostermanValue(acc.evaluate(), acc.q, acc.term_count())
    # split-phase float path for large moduli: e(k1/D1)*e(k2/D2)
    B1, T1, B2, T2 = table
    k1 = ((a1 % D1) * B1 + (b1 % D1) * T1) % D1
    k2 = ((a2 % D2) * B2 + (b2 % D2) * T2) % D2
    e1 = np.exp(2j * np.pi * np.arange(D1) / D1)
    e2 = np.exp(2j * np.pi * np.arange(D2) / D2)
    val = complex(np.sum(e1[k1] * e2[k2]))
    return KloostermanValue(val, D1 * D2, len(B1))


def raw_exponential_sum(a1: int, a2: int, b1: int, b2: int,
                        D1: int, D2: int) -> KloostermanValue:
    """S(a1,a2,b1,b2;D1,D2) via the optimized enumeration."""
    if D1 * D2 > MODULUS_CAP:
        raise ScaleError(f"D1*D2 = {D1 * D2} exceeds the modulus cap")
    return _raw_value(a1, a2, b1, b2, D1, D2, _table_fast(D1, D2))


def long_element_accumulator(inst: LongElementInstance, *, bruteforce: bool = False,
                             uz_solver=None) -> RootOfUnityAccumulator:
    """Exact accumulator of S_wl(psi_m, psi_n; c) = S(-n2,-n1,m1,m2;c1,c2).

    A custom uz_solver bypasses the cached tables (used to verify that the
    sum does not depend on the choice of unimodular solutions).
    """
    c1, c2 = inst.c
    a1, a2 = -inst.n[1], -inst.n[0]
    b1, b2 = inst.m
    if uz_solver is not None:
        enum = _admissible_tuples_bruteforce if bruteforce else _admissible_tuples_fast
        table = _rows_to_arrays(enum(c1, c2, uz_solver))
    else:
        table = _table_bruteforce(c1, c2) if bruteforce else _table_fast(c1, c2)
    return _accumulate_raw(a1, a2, b1, b2, c1, c2, table)


def long_element_bruteforce(inst: LongElementInstance) -> KloostermanValue:
    """Oracle evaluation: full scan over (B1,C1,B2,C2).  Small moduli only."""
    c1, c2 = inst.c
    if c1 * c2 > BRUTEFORCE_CAP:
        raise ScaleError(
            f"bruteforce refuses c1*c2 = {c1 * c2} > {BRUTEFORCE_CAP}")
    acc = long_element_accumulator(inst, bruteforce=True)
    return KloostermanValue(acc.evaluate(), acc.q, acc.term_count())


def long_element_sum(inst: LongElementInstance) -> KloostermanValue:
    """S_wl(psi_m, psi_n; c) via the optimized enumeration."""
    c1, c2 = inst.c
    return _raw_value(-inst.n[1], -inst.n[0], inst.m[0], inst.m[1],
                      c1, c2, _table_fast(c1, c2))


def factorization_fastpath(inst: LongElementInstance) -> KloostermanValue:
    """S(m1, -n2*c2; c1) * S(m2*c1, -n1; c2) for coprime moduli."""
    c1, c2 = inst.c
    if gcd(c1, c2) != 1:
        raise ValueError(f"moduli {c1}, {c2} are not coprime")
    s1 = classical_kloosterman(inst.m[0], -inst.n[1] * c2, c1)
    s2 = classical_kloosterman(inst.m[1] * c1, -inst.n[0], c2)
    return KloostermanValue(s1.value * s2.value, c1 * c2,
                            s1.term_count * s2.term_count)


# ---------------------------------------------------------------------------
# square-root cancellation report
# ---------------------------------------------------------------------------

@dataclass
class StevensRow:
    c1: int
    c2: int
    value: complex
    terms: int
    ratio: float
    flagged: bool


def stevens_report(m: tuple[int, int], n: tuple[int, int], Cmax: int,
                   eps: float = 0.0, alert: float = 10.0) -> list[StevensRow]:
    """|S_wl| against sqrt(gcd(c1,c2)) * (c1*c2)^(1/2+eps) for c1,c2 <= Cmax.

    Emits the ratio for every pair and flags any ratio above `alert`; the
    bound's constant is not pinned, so this reports rather than asserts.
    """
    if Cmax * Cmax > BRUTEFORCE_CAP * 100:
        raise ScaleError("stevens_report enumeration budget exceeded")
    rows = []
    for c1 in range(1, Cmax + 1):
        for c2 in range(1, Cmax + 1):
            kv = long_element_sum(LongElementInstance(m, n, (c1, c2)))
            denom = gcd(c1, c2) ** 0.5 * (c1 * c2) ** (0.5 + eps)
            ratio = abs(kv.value) / denom
            rows.append(StevensRow(c1, c2, kv.value, kv.term_count,
                                   ratio, ratio > alert))
    return rows


def stevens_csv(rows: list[StevensRow], path: str | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["c1", "c2", "re", "im", "terms", "ratio"])
    for r in rows:
        w.writerow([r.c1, r.c2, repr(r.value.real), repr(r.value.imag),
                    r.terms, repr(r.ratio)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
