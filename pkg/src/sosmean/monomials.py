"""Monomials over selector variables w_1..w_n and mean variables mu_1..mu_d.

The selectors are boolean (w_i^2 = w_i), so every monomial is kept in
multilinear-w form: a monomial is a pair ``(w_support, mu_exponents)``
where ``w_support`` is a sorted tuple of selector indices and
``mu_exponents`` is a length-d tuple.  Multiplication unions supports,
which is exactly multiplication in the quotient ring by <w_i^2 - w_i>.

Ordering is graded lexicographic with w-variables more significant than
mu-variables, fixed so compiled relaxations serialize byte-stably.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

Mono = tuple[tuple[int, ...], tuple[int, ...]]


def mono_one(d: int) -> Mono:
    return ((), (0,) * d)


def mono_w(i: int, d: int) -> Mono:
    return ((i,), (0,) * d)


def mono_mu(j: int, d: int) -> Mono:
    e = [0] * d
    e[j] = 1
    return ((), tuple(e))


def mono_mul(a: Mono, b: Mono) -> Mono:
    """Product in the boolean-w quotient: supports union, exponents add."""
    wa, ea = a
    wb, eb = b
    if not wb:
        w = wa
    elif not wa:
        w = wb
    else:
        w = tuple(sorted(set(wa) | set(wb)))
    return (w, tuple(x + y for x, y in zip(ea, eb)))


def mono_degree(m: Mono) -> int:
    return len(m[0]) + sum(m[1])


def reduce_monomial(
    w_exponents: Sequence[int], mu_exponents: Sequence[int]
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Cap every positive w-exponent at 1; mu-exponents pass through.

    Idempotent and degree-nonincreasing; this is the rewrite w_i^k -> w_i
    for k >= 1 applied to a raw multi-index.
    """
    if any(e < 0 for e in w_exponents) or any(e < 0 for e in mu_exponents):
        raise ValueError("exponents must be nonnegative")
    return (
        tuple(min(e, 1) for e in w_exponents),
        tuple(mu_exponents),
    )


def support_form(w_exponents: Sequence[int], mu_exponents: Sequence[int]) -> Mono:
    """Multi-index -> internal (support, mu) form, applying the w rewrite."""
    capped, mu = reduce_monomial(w_exponents, mu_exponents)
    return (tuple(i for i, e in enumerate(capped) if e), mu)


def grlex_key(m: Mono, n: int) -> tuple:
    """Sort key: degree, then lexicographic with w_1 > w_2 > ... > mu_d."""
    w, mu = m
    exps = [0] * n
    for i in w:
        exps[i] = 1
    return (mono_degree(m), tuple(-e for e in exps), tuple(-e for e in mu))


def mu_exponents_up_to(d: int, deg: int) -> list[tuple[int, ...]]:
    """All mu exponent tuples of total degree <= deg (d may be 0)."""
    if d == 0:
        return [()] if deg >= 0 else []
    out = []
    for total in range(deg + 1):
        for bars in itertools.combinations(range(total + d - 1), d - 1):
            prev = -1
            exps = []
            for b in bars:
                exps.append(b - prev - 1)
                prev = b
            exps.append(total + d - 1 - prev - 1)
            out.append(tuple(exps))
    return out


def count_mu_monomials(d: int, deg: int) -> int:
    return math.comb(deg + d, d)


def basis_size(n: int, d: int, r: int) -> int:
    """Closed-form count of multilinear-w monomials of degree <= r."""
    return sum(
        math.comb(n, s) * count_mu_monomials(d, r - s) for s in range(r + 1)
    )


def enumerate_monomials(n: int, d: int, max_degree: int) -> list[Mono]:
    """All multilinear-w monomials of total degree <= max_degree, sorted."""
    monos: list[Mono] = []
    for s in range(min(n, max_degree) + 1):
        mu_list = mu_exponents_up_to(d, max_degree - s)
        for supp in itertools.combinations(range(n), s):
            for mu in mu_list:
                monos.append((supp, mu))
    monos.sort(key=lambda m: grlex_key(m, n))
    return monos


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered degree-<=r monomial basis, multilinear in the selectors."""

    n: int
    d: int
    r: int
    monomials: tuple[Mono, ...]

    @classmethod
    def build(cls, n: int, d: int, r: int) -> "MonomialBasis":
        if n < 0 or d < 0 or r < 0:
            raise ValueError("n, d, r must be nonnegative")
        return cls(n=n, d=d, r=r, monomials=tuple(enumerate_monomials(n, d, r)))

    def index(self) -> dict[Mono, int]:
        return {m: i for i, m in enumerate(self.monomials)}

    def __len__(self) -> int:
        return len(self.monomials)


def mono_to_string(m: Mono) -> str:
    w, mu = m
    parts = [f"w{i+1}" for i in w]
    parts += [f"mu{j+1}^{e}" if e > 1 else f"mu{j+1}" for j, e in enumerate(mu) if e]
    return "*".join(parts) if parts else "1"


class Poly:
    """Sparse polynomial over (w, mu) in the boolean-w quotient ring.

    Just enough arithmetic for building test polynomials and evaluating
    them under pseudo-expectations; not a general CAS.
    """

    __slots__ = ("d", "terms")

    def __init__(self, d: int, terms: dict[Mono, float] | None = None):
        self.d = d
        self.terms: dict[Mono, float] = dict(terms or {})

    @classmethod
    def constant(cls, c: float, d: int) -> "Poly":
        return cls(d, {mono_one(d): float(c)} if c else {})

    @classmethod
    def w(cls, i: int, d: int) -> "Poly":
        return cls(d, {mono_w(i, d): 1.0})

    @classmethod
    def mu(cls, j: int, d: int) -> "Poly":
        return cls(d, {mono_mu(j, d): 1.0})

    @classmethod
    def from_monomial(cls, m: Mono, coeff: float = 1.0) -> "Poly":
        return cls(len(m[1]), {m: float(coeff)})

    def copy(self) -> "Poly":
        return Poly(self.d, self.terms)

    def __add__(self, other: "Poly | float") -> "Poly":
        other = _as_poly(other, self.d)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
            if out[m] == 0.0:
                del out[m]
        return Poly(self.d, out)

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self) -> "Poly":
        return Poly(self.d, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "Poly | float") -> "Poly":
        return self + (-_as_poly(other, self.d))

    def __rsub__(self, other):
        return _as_poly(other, self.d) + (-self)

    def __mul__(self, other: "Poly | float") -> "Poly":
        if not isinstance(other, Poly):
            c = float(other)
            return Poly(self.d, {m: v * c for m, v in self.terms.items()} if c else {})
        out: dict[Mono, float] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                m = mono_mul(ma, mb)
                out[m] = out.get(m, 0.0) + ca * cb
        return Poly(self.d, {m: c for m, c in out.items() if c != 0.0})

    def __rmul__(self, other):
        return self.__mul__(other)

    def degree(self) -> int:
        return max((mono_degree(m) for m in self.terms), default=0)

    def monomials(self) -> Iterable[Mono]:
        return self.terms.keys()

    def evaluate(self, w: Sequence[float], mu: Sequence[float]) -> float:
        total = 0.0
        for (supp, exps), c in self.terms.items():
            v = c
            for i in supp:
                v *= w[i]
            for j, e in enumerate(exps):
                if e:
                    v *= mu[j] ** e
            total += v
        return total


def _as_poly(x, d: int) -> Poly:
    if isinstance(x, Poly):
        return x
    return Poly.constant(float(x), d)
