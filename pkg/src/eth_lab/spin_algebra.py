"""Angular-momentum coupling coefficients, exact and asymptotic.

Everything here is exact rational arithmetic under the hood: a Clebsch-Gordan
coefficient is a signed square root of a rational number, so we evaluate the
squared value with arbitrary-precision integers and convert to float once at
the end. The phase convention is Condon-Shortley (highest-weight expansion
coefficients of maximal m1 positive), which fixes every downstream sign in
the coupled-basis construction and in reduced matrix elements.

Half-integer quantum numbers are carried as ``HalfInt`` values storing twice
the quantum number, so selection rules are integer comparisons, never float
comparisons.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, total_ordering
from typing import Union

__all__ = [
    "HalfInt",
    "CgKey",
    "SpinDomainError",
    "UpsilonUndefinedError",
    "cg_exact",
    "cg",
    "cg_or_zero",
    "cg_asymptotic",
    "upsilon",
    "upsilon_asymptotic",
]


class SpinDomainError(ValueError):
    """Raised for quantum numbers outside their allowed domain (e.g. |m| > j)."""


class UpsilonUndefinedError(SpinDomainError):
    """Raised when the recoupling weight is evaluated at a point where its
    denominator coefficient vanishes."""


SpinLike = Union[int, float, "HalfInt", Fraction]


@total_ordering
class HalfInt:
    """An integer or half-integer stored exactly as twice its value."""

    __slots__ = ("twice",)

    def __init__(self, value: SpinLike):
        if isinstance(value, HalfInt):
            self.twice = value.twice
            return
        t = 2 * value
        if isinstance(t, Fraction):
            if t.denominator != 1:
                raise SpinDomainError(f"{value!r} is not an integer or half-integer")
            t = t.numerator
        ti = int(round(t))
        if abs(t - ti) > 1e-9:
            raise SpinDomainError(f"{value!r} is not an integer or half-integer")
        self.twice = ti

    @classmethod
    def from_twice(cls, twice: int) -> "HalfInt":
        h = object.__new__(cls)
        h.twice = int(twice)
        return h

    @property
    def is_integer(self) -> bool:
        return self.twice % 2 == 0

    def __float__(self) -> float:
        return self.twice / 2.0

    def __add__(self, other: SpinLike) -> "HalfInt":
        return HalfInt.from_twice(self.twice + HalfInt(other).twice)

    __radd__ = __add__

    def __sub__(self, other: SpinLike) -> "HalfInt":
        return HalfInt.from_twice(self.twice - HalfInt(other).twice)

    def __rsub__(self, other: SpinLike) -> "HalfInt":
        return HalfInt.from_twice(HalfInt(other).twice - self.twice)

    def __neg__(self) -> "HalfInt":
        return HalfInt.from_twice(-self.twice)

    def __abs__(self) -> "HalfInt":
        return HalfInt.from_twice(abs(self.twice))

    def __eq__(self, other) -> bool:
        try:
            return self.twice == HalfInt(other).twice
        except (SpinDomainError, TypeError):
            return NotImplemented

    def __lt__(self, other) -> bool:
        return self.twice < HalfInt(other).twice

    def __hash__(self) -> int:
        return hash(self.twice)

    def __repr__(self) -> str:
        if self.twice % 2 == 0:
            return str(self.twice // 2)
        return f"{self.twice}/2"


def _twice(x: SpinLike) -> int:
    """Twice-value of an int/float/HalfInt quantum number."""
    if isinstance(x, HalfInt):
        return x.twice
    return HalfInt(x).twice


def _check_pair(tj: int, tm: int, what: str) -> None:
    """|m| <= j with matching parity, else domain error."""
    if tj < 0:
        raise SpinDomainError(f"{what}: negative spin {tj}/2")
    if abs(tm) > tj or (tj - tm) % 2 != 0:
        raise SpinDomainError(
            f"{what}: magnetic number {tm}/2 invalid for spin {tj}/2"
        )


@dataclass(frozen=True)
class CgKey:
    """Arguments of a Clebsch-Gordan coefficient < J M | j1 m1 ; j2 m2 >.

    Construction validates each (j, m) pairing; selection rules (M = m1 + m2,
    triangle rule) are *not* enforced here because violating them is a valid
    query that yields coefficient zero.
    """

    j1: HalfInt
    m1: HalfInt
    j2: HalfInt
    m2: HalfInt
    J: HalfInt
    M: HalfInt

    def __post_init__(self):
        for name in ("j1", "m1", "j2", "m2", "J", "M"):
            object.__setattr__(self, name, HalfInt(getattr(self, name)))
        _check_pair(self.j1.twice, self.m1.twice, "j1/m1")
        _check_pair(self.j2.twice, self.m2.twice, "j2/m2")
        _check_pair(self.J.twice, self.M.twice, "J/M")

    def selection_ok(self) -> bool:
        tj1, tj2, tJ = self.j1.twice, self.j2.twice, self.J.twice
        if self.M.twice != self.m1.twice + self.m2.twice:
            return False
        if not abs(tj1 - tj2) <= tJ <= tj1 + tj2:
            return False
        return (tj1 + tj2 + tJ) % 2 == 0


def _fact2(tx: int) -> int:
    """Factorial of a twice-value that must be an even, non-negative integer."""
    if tx < 0 or tx % 2:
        raise SpinDomainError(f"factorial of invalid twice-value {tx}")
    return math.factorial(tx // 2)


@lru_cache(maxsize=200_000)
def _cg_core(tj1: int, tm1: int, tj2: int, tm2: int, tJ: int, tM: int) -> float:
    """Exact CG coefficient from the closed factorial-sum formula.

    Parametrized internally by s = j1, m = m1, k = j2, q = m2, nu = J - j1.
    The squared coefficient is the rational ``pref * ssum**2``; the sign is
    the sign of the alternating sum.
    """
    ts, tm, tk, tq, tnu = tj1, tm1, tj2, tm2, tJ - tj1

    pref = Fraction(
        (tJ + 1)
        * _fact2(2 * ts + tnu - tk)
        * _fact2(tk + tnu)
        * _fact2(tk - tnu)
        * _fact2(ts + tm + tnu + tq)
        * _fact2(ts - tm + tnu - tq)
        * _fact2(ts + tm)
        * _fact2(ts - tm)
        * _fact2(tk + tq)
        * _fact2(tk - tq),
        _fact2(2 * ts + tnu + tk + 2),
    )
    # sum over all integers l keeping every factorial argument non-negative
    lmin = max(0, (tq - tnu) // 2, (tk - tnu - ts - tm) // 2)
    lmax = min((tk - tnu) // 2, (ts - tm) // 2, (tk + tq) // 2)
    ssum = Fraction(0)
    for l in range(lmin, lmax + 1):
        denom = (
            math.factorial(l)
            * _fact2(tk - tnu - 2 * l)
            * _fact2(ts - tm - 2 * l)
            * _fact2(tk + tq - 2 * l)
            * _fact2(ts + tm + tnu - tk + 2 * l)
            * _fact2(tnu - tq + 2 * l)
        )
        ssum += Fraction((-1) ** l, denom)
    if ssum == 0:
        return 0.0
    sign = 1.0 if ssum > 0 else -1.0
    return sign * math.sqrt(float(pref * ssum * ssum))


# Test-harness hook: when enabled (ETH_LAB_MUTATE_CG=1 at import, or set
# directly), coefficients with m1 < 0 come back sign-flipped. Used to verify
# that the validation suite detects a corrupted coupling layer.
_CG_SIGN_MUTATION = os.environ.get("ETH_LAB_MUTATE_CG", "") == "1"


def cg_exact(key: CgKey) -> float:
    """Exact Clebsch-Gordan coefficient < J M | j1 m1 ; j2 m2 >.

    Returns exactly 0.0 when a selection rule (M = m1 + m2 or the triangle
    rule) fails. Raises SpinDomainError for invalid (j, m) pairings.
    """
    if not key.selection_ok():
        return 0.0
    v = _cg_core(
        key.j1.twice, key.m1.twice, key.j2.twice, key.m2.twice, key.J.twice, key.M.twice
    )
    if _CG_SIGN_MUTATION and key.m1.twice < 0:
        v = -v
    return v


def cg(j1: SpinLike, m1: SpinLike, j2: SpinLike, m2: SpinLike,
       J: SpinLike, M: SpinLike) -> float:
    """Convenience wrapper: cg_exact over plain numbers."""
    return cg_exact(CgKey(j1, m1, j2, m2, J, M))


def cg_or_zero(tj1: int, tm1: int, tj2: int, tm2: int, tJ: int, tM: int) -> float:
    """Twice-value CG that returns 0.0 instead of raising on invalid pairings.

    Sums over magnetic numbers routinely step outside [-j, j]; those terms
    vanish physically, so the lenient form is what inner loops want.
    """
    if abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tM) > tJ:
        return 0.0
    if (tj1 - tm1) % 2 or (tj2 - tm2) % 2 or (tJ - tM) % 2:
        return 0.0
    if tM != tm1 + tm2:
        return 0.0
    if not abs(tj1 - tj2) <= tJ <= tj1 + tj2 or (tj1 + tj2 + tJ) % 2:
        return 0.0
    v = _cg_core(tj1, tm1, tj2, tm2, tJ, tM)
    if _CG_SIGN_MUTATION and tm1 < 0:
        v = -v
    return v


def cg_asymptotic(s: SpinLike, m: SpinLike, k: SpinLike, q: SpinLike,
                  nu: SpinLike) -> float:
    """Leading-order value of < s+nu, m+q | s, m ; k, q > for large s, m.

    Valid in the regime where s and m are large while k, q, nu and s - m stay
    of order one. The coefficient scales as (2s)^(-|nu - q|/2); the returned
    value omits the relative 1 + O(1/s) correction. Selection-rule violations
    return 0.0; s - m < 0 raises.
    """
    ts, tm, tk, tq, tnu = _twice(s), _twice(m), _twice(k), _twice(q), _twice(nu)
    if ts - tm < 0:
        raise SpinDomainError("require m <= s")
    if (ts - tm) % 2:
        raise SpinDomainError("s - m must be an integer")
    # triangle and magnetic selection rules of the exact coefficient
    if abs(tnu) > tk or (tk - tnu) % 2:
        return 0.0
    if abs(tq) > tk or (tk - tq) % 2:
        return 0.0
    if abs(tm + tq) > ts + tnu:
        return 0.0

    if tnu == tq:
        return 1.0
    two_s = float(ts)
    if tnu > tq:
        num = _fact2(tk + tnu) * _fact2(ts - tm + tnu - tq) * _fact2(tk - tq)
        den = _fact2(tk - tnu) * _fact2(ts - tm) * _fact2(tk + tq)
        return math.sqrt(num / den) * two_s ** ((tq - tnu) / 4.0) / _fact2(tnu - tq)
    # nu < q: a negative factorial argument in the denominator kills the term,
    # matching the exact coefficient's selection zero
    if ts - tm + tnu - tq < 0:
        return 0.0
    num = _fact2(tk - tnu) * _fact2(tk + tq) * _fact2(ts - tm)
    den = _fact2(tk + tnu) * _fact2(tk - tq) * _fact2(ts - tm + tnu - tq)
    sign = -1.0 if ((tq - tnu) // 2) % 2 else 1.0
    return sign * math.sqrt(num / den) * two_s ** (-(tq - tnu) / 4.0) / _fact2(tq - tnu)


def _upsilon_twice(tsa: int, tsap: int, tsapp: int, tk: int, tk1: int, tk2: int,
                   tm: int, tq: int) -> float:
    """Recoupling weight at a given (m, q), or None if the denominator vanishes."""
    if abs(tm) > tsa or abs(tm - tq) > tsap or (tsa - tm) % 2 or (tsap - tm + tq) % 2:
        return None
    den = cg_or_zero(tsap, tm - tq, tk, tq, tsa, tm)
    if den == 0.0:
        return None
    total = 0.0
    for tqp in range(-tk1, tk1 + 1, 2):
        c1 = cg_or_zero(tk1, tqp, tk2, tq - tqp, tk, tq)
        if c1 == 0.0:
            continue
        c2 = cg_or_zero(tsapp, tm - tqp, tk1, tqp, tsa, tm)
        if c2 == 0.0:
            continue
        c3 = cg_or_zero(tsap, tm - tq, tk2, tq - tqp, tsapp, tm - tqp)
        total += c1 * c2 * c3
    return total / den


def upsilon(s_a: SpinLike, s_ap: SpinLike, s_app: SpinLike, k: SpinLike,
            k1: SpinLike, k2: SpinLike, m: SpinLike = None,
            q: SpinLike = None) -> float:
    """Recoupling weight relating a composed tensor's reduced matrix elements
    to the product of its factors' reduced matrix elements.

    The value is a ratio of a q'-sum of triple Clebsch-Gordan products to a
    single denominator coefficient; it is provably independent of the (m, q)
    evaluation point wherever that point is admissible. By default the weight
    is evaluated at m = s_a, q = s_a - s_ap, whose denominator is the
    stretched coefficient < s_a s_a | s_ap s_ap ; k, s_a - s_ap >.

    Raises UpsilonUndefinedError when the denominator vanishes at the
    requested point (never silently returns 0 for that case).
    """
    tsa, tsap, tsapp = _twice(s_a), _twice(s_ap), _twice(s_app)
    tk, tk1, tk2 = _twice(k), _twice(k1), _twice(k2)
    tm = tsa if m is None else _twice(m)
    tq = tsa - tsap if q is None else _twice(q)
    val = _upsilon_twice(tsa, tsap, tsapp, tk, tk1, tk2, tm, tq)
    if val is None:
        raise UpsilonUndefinedError(
            f"recoupling weight undefined at (m={tm}/2, q={tq}/2): "
            f"denominator coefficient vanishes"
        )
    return val


def upsilon_any_point(s_a: SpinLike, s_ap: SpinLike, s_app: SpinLike,
                      k: SpinLike, k1: SpinLike, k2: SpinLike):
    """Recoupling weight at the default point, falling back to a scan over
    admissible (m, q) when the default denominator vanishes.

    Returns (value, (m, q)) with the evaluation point actually used.
    """
    tsa, tsap, tsapp = _twice(s_a), _twice(s_ap), _twice(s_app)
    tk, tk1, tk2 = _twice(k), _twice(k1), _twice(k2)
    val = _upsilon_twice(tsa, tsap, tsapp, tk, tk1, tk2, tsa, tsa - tsap)
    if val is not None:
        return val, (HalfInt.from_twice(tsa), HalfInt.from_twice(tsa - tsap))
    for tm in range(tsa, -tsa - 1, -2):
        for tq in range(-tk, tk + 1, 2):
            val = _upsilon_twice(tsa, tsap, tsapp, tk, tk1, tk2, tm, tq)
            if val is not None:
                return val, (HalfInt.from_twice(tm), HalfInt.from_twice(tq))
    raise UpsilonUndefinedError(
        f"no admissible (m, q) for spins ({tsa}/2, {tsap}/2, {tsapp}/2), "
        f"ranks ({tk}/2, {tk1}/2, {tk2}/2)"
    )


def upsilon_asymptotic(s_a: SpinLike, s_ap: SpinLike, s_app: SpinLike,
                       k: SpinLike, k1: SpinLike, k2: SpinLike) -> float:
    """Large-spin limit of the recoupling weight.

    Equals the single coefficient < k, s_a - s_ap | k1, s_a - s_app ;
    k2, s_app - s_ap >, which depends only on the O(1) spin differences.
    Triangle violations give 0.
    """
    tsa, tsap, tsapp = _twice(s_a), _twice(s_ap), _twice(s_app)
    tk, tk1, tk2 = _twice(k), _twice(k1), _twice(k2)
    return cg_or_zero(tk1, tsa - tsapp, tk2, tsapp - tsap, tk, tsa - tsap)
