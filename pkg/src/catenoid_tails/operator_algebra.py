"""Exact calculus of radial differential operators.

An operator is a finite sum of monomials ``c * r**a * d_r**i * d_tau**j * lap_s**k``
with rational ``c`` and ``a``.  Monomials are always kept in this normal
order (multiplication by a power of r on the left, derivatives on the right).
``d_tau`` and the formal symbol ``lap_s`` (the sphere Laplacian) commute with
everything except nothing; only ``d_r`` fails to commute with ``r**a``, and
composition uses

    d_r**i  r**b = sum_m binom(i, m) (b)_m r**(b - m) d_r**(i - m)

with ``(b)_m`` the falling factorial.  All arithmetic is done with
:class:`fractions.Fraction`, so identities are checked with zero error.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Iterable, NamedTuple

DEFAULT_MAX_DEN = 2


class ExponentDenominatorError(ValueError):
    """A power of r has a denominator above the configured bound."""


class OpTerm(NamedTuple):
    coeff: Fraction
    r_exp: Fraction
    d_r: int
    d_tau: int
    lap_s: int

    def key(self):
        return (self.r_exp, self.d_r, self.d_tau, self.lap_s)

    def __str__(self):
        parts = []
        if self.r_exp != 0:
            parts.append(f"r^{self.r_exp}")
        for sym, k in (("d_r", self.d_r), ("d_tau", self.d_tau), ("lap_S", self.lap_s)):
            if k == 1:
                parts.append(sym)
            elif k > 1:
                parts.append(f"{sym}^{k}")
        body = "*".join(parts) if parts else "1"
        return f"{self.coeff}*{body}"


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _falling(b: Fraction, m: int) -> Fraction:
    out = Fraction(1)
    for q in range(m):
        out *= b - q
    return out


class OperatorSum:
    """Normalized linear combination of :class:`OpTerm` monomials.

    Instances are immutable values.  Equality is exact.
    """

    __slots__ = ("_terms", "max_den")

    def __init__(self, terms: Iterable[OpTerm] = (), max_den: int = DEFAULT_MAX_DEN):
        self.max_den = max_den
        acc: dict = {}
        for t in terms:
            c = _frac(t.coeff)
            a = _frac(t.r_exp)
            if a.denominator > max_den:
                raise ExponentDenominatorError(
                    f"r exponent {a} exceeds denominator bound {max_den}")
            if min(t.d_r, t.d_tau, t.lap_s) < 0:
                raise ValueError("derivative orders must be nonnegative")
            k = (a, int(t.d_r), int(t.d_tau), int(t.lap_s))
            acc[k] = acc.get(k, Fraction(0)) + c
        self._terms = tuple(OpTerm(c, *k) for k, c in sorted(acc.items()) if c != 0)

    @classmethod
    def monomial(cls, coeff=1, r_exp=0, d_r=0, d_tau=0, lap_s=0, max_den=DEFAULT_MAX_DEN):
        return cls([OpTerm(_frac(coeff), _frac(r_exp), d_r, d_tau, lap_s)], max_den)

    @property
    def terms(self) -> tuple:
        return self._terms

    def normalized(self) -> "OperatorSum":
        return OperatorSum(self._terms, self.max_den)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, r_exp, d_r=0, d_tau=0, lap_s=0) -> Fraction:
        key = (_frac(r_exp), d_r, d_tau, lap_s)
        for t in self._terms:
            if t.key() == key:
                return t.coeff
        return Fraction(0)

    def _bound(self, other):
        return max(self.max_den, getattr(other, "max_den", DEFAULT_MAX_DEN))

    def __add__(self, other):
        if not isinstance(other, OperatorSum):
            other = const(other)
        return OperatorSum(self._terms + other._terms, self._bound(other))

    __radd__ = __add__

    def __neg__(self):
        return OperatorSum([t._replace(coeff=-t.coeff) for t in self._terms], self.max_den)

    def __sub__(self, other):
        if not isinstance(other, OperatorSum):
            other = const(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if isinstance(c, OperatorSum):
            return compose(self, c)
        c = _frac(c)
        return OperatorSum([t._replace(coeff=t.coeff * c) for t in self._terms], self.max_den)

    def __rmul__(self, c):
        return self.__mul__(c)

    def __matmul__(self, other):
        return compose(self, other)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = const(other)
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(self._terms)

    def __repr__(self):
        return f"OperatorSum({self})"

    def __str__(self):
        if not self._terms:
            return "0"
        return " + ".join(str(t) for t in self._terms)

    def to_json(self) -> list:
        return [{"coeff": str(t.coeff), "r_exp": str(t.r_exp), "d_r": t.d_r,
                 "d_tau": t.d_tau, "lap_s": t.lap_s} for t in self._terms]

    @classmethod
    def from_json(cls, records, max_den=DEFAULT_MAX_DEN):
        return cls([OpTerm(Fraction(d["coeff"]), Fraction(d["r_exp"]), d["d_r"],
                           d["d_tau"], d["lap_s"]) for d in records], max_den)


def _compose_terms(s: OpTerm, t: OpTerm):
    # s = c r^a d_r^i X,  t = e r^b d_r^j Y, with X, Y commuting symbols
    for m in range(s.d_r + 1):
        f = _falling(t.r_exp, m)
        if f == 0:
            continue
        yield OpTerm(s.coeff * t.coeff * comb(s.d_r, m) * f,
                     s.r_exp + t.r_exp - m,
                     s.d_r - m + t.d_r,
                     s.d_tau + t.d_tau,
                     s.lap_s + t.lap_s)


def compose(A: OperatorSum, B: OperatorSum) -> OperatorSum:
    """Operator product ``A o B``."""
    out = []
    for s in A.terms:
        for t in B.terms:
            out.extend(_compose_terms(s, t))
    return OperatorSum(out, max(A.max_den, B.max_den))


def commutator(A: OperatorSum, B: OperatorSum) -> OperatorSum:
    return compose(A, B) - compose(B, A)


def conjugate(A: OperatorSum, s) -> OperatorSum:
    """Return ``r**s o A o r**(-s)``."""
    s = _frac(s)
    if s == 0:
        return A.normalized()
    return compose(compose(r_pow(s, A.max_den), A), r_pow(-s, A.max_den))


# -- named operators -----------------------------------------------------

def const(c) -> OperatorSum:
    return OperatorSum.monomial(c)


def r_pow(a, max_den=DEFAULT_MAX_DEN) -> OperatorSum:
    return OperatorSum.monomial(1, a, max_den=max_den)


def d_r() -> OperatorSum:
    return OperatorSum.monomial(1, 0, 1)


def d_tau() -> OperatorSum:
    return OperatorSum.monomial(1, 0, 0, 1)


def lap_s() -> OperatorSum:
    return OperatorSum.monomial(1, 0, 0, 0, 1)


def K() -> OperatorSum:
    """The commutator field r^{3/2} d_r."""
    return OperatorSum.monomial(1, Fraction(3, 2), 1)


def q0() -> OperatorSum:
    """Conjugated flat operator in four space dimensions."""
    return (Fraction(-3, 4) * r_pow(-2) - 2 * d_r() @ d_tau() + d_r() @ d_r()
            + r_pow(-2) @ lap_s())


def q1(potential=Fraction(3, 4)) -> OperatorSum:
    """Operator acting on Y = K u when u solves the q0 equation."""
    return q0() - r_pow(-1) @ d_tau() - r_pow(-1) @ d_r() + _frac(potential) * r_pow(-2)


def corrupted_q1() -> OperatorSum:
    """q1 with the wrong zeroth-order coefficient (+1 instead of +3/4)."""
    return q1(potential=1)


# -- identity suite ------------------------------------------------------

@dataclass(frozen=True)
class IdentityRecord:
    name: str
    passed: bool
    residual: OperatorSum

    def to_json(self):
        return {"identity": self.name, "pass": self.passed,
                "residual": self.residual.to_json()}


def _identities(q1_op: OperatorSum):
    k = K()
    rinv = r_pow(-1)
    half = Fraction(1, 2)
    yield "[K,r^-2]", commutator(k, r_pow(-2)), -2 * r_pow(Fraction(-3, 2))
    yield "[K,d_r]", commutator(k, d_r()), Fraction(-3, 2) * rinv @ k
    yield ("[K,-2d_r d_tau]", commutator(k, -2 * d_r() @ d_tau()),
           3 * rinv @ d_tau() @ k)
    yield ("d_r K", d_r() @ k,
           Fraction(3, 2) * rinv @ k + r_pow(Fraction(3, 2)) @ d_r() @ d_r())
    yield ("[K,d_r^2]", commutator(k, d_r() @ d_r()),
           -3 * rinv @ d_r() @ k + Fraction(15, 4) * r_pow(-2) @ k)
    for label, V in (("r^-2", r_pow(-2)), ("r^-2 d_tau", r_pow(-2) @ d_tau()),
                     ("r^-2 lap_S", r_pow(-2) @ lap_s())):
        yield f"[K,V] V={label}", commutator(k, V), -2 * r_pow(half) @ V
    # For V = r^-1 d_r the cancellation is not exact: an extra r^{-1/2} d_r
    # survives, and it is carried explicitly.
    V = rinv @ d_r()
    yield ("[K,V] V=r^-1 d_r (with r^-1/2 d_r remainder)", commutator(k, V),
           -2 * r_pow(half) @ V - half * r_pow(-half) @ d_r())
    yield "Q1K", q1_op @ k, (k + 2 * r_pow(half)) @ q0()


def verify_identity_suite(corrupt: bool = False) -> list:
    """Check every commutator identity exactly.

    With ``corrupt=True`` the Q1 relation is checked against
    :func:`corrupted_q1`, which must fail.
    """
    q1_op = corrupted_q1() if corrupt else q1()
    report = []
    for name, lhs, rhs in _identities(q1_op):
        res = lhs - rhs
        report.append(IdentityRecord(name, res.is_zero(), res))
    return report
