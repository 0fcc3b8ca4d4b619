"""Exact trigonometric-Wronskian machinery for the cylinder pairs.

Phases stay formal: coefficients live in the Laurent ring of monomials
eps_1**a1 * ... * eps_k**ak over Gaussian rationals, where eps_j stands
for exp(i t_j).  An identity that vanishes in this ring vanishes for
every choice of the phases, which is how cylinder certificates reach
bit-exact residuals without cyclotomic arithmetic.
"""

from __future__ import annotations

import cmath
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

from .scalars import GaussianRational, exactify


class PhaseCoeff:
    """Laurent polynomial in the formal phase units eps_j."""

    __slots__ = ("terms",)

    def __init__(self, terms: Dict[Tuple[int, ...], GaussianRational] | None = None):
        clean = {}
        if terms:
            for expo, val in terms.items():
                if not val.is_zero:
                    clean[tuple(expo)] = val
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, name, value):
        raise AttributeError("PhaseCoeff is immutable")

    @staticmethod
    def constant(value, nphases):
        value = exactify(value)
        if value.is_zero:
            return PhaseCoeff({})
        return PhaseCoeff({(0,) * nphases: value})

    @staticmethod
    def unit(j, power, value, nphases):
        expo = [0] * nphases
        expo[j] = power
        return PhaseCoeff({tuple(expo): exactify(value)})

    @property
    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        out = dict(self.terms)
        for expo, val in other.terms.items():
            cur = out.get(expo)
            out[expo] = val if cur is None else cur + val
        return PhaseCoeff(out)

    def __neg__(self):
        return PhaseCoeff({e: -v for e, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, GaussianRational):
            return PhaseCoeff({e: v * other for e, v in self.terms.items()})
        out = {}
        for e1, v1 in self.terms.items():
            for e2, v2 in other.terms.items():
                expo = tuple(a + b for a, b in zip(e1, e2))
                cur = out.get(expo)
                prod = v1 * v2
                out[expo] = prod if cur is None else cur + prod
        return PhaseCoeff(out)

    def scale(self, value):
        return self * exactify(value)

    def substitute(self, phases: Sequence[float]) -> complex:
        total = 0j
        for expo, val in self.terms.items():
            unit = 1.0 + 0j
            for power, t in zip(expo, phases):
                if power:
                    unit *= cmath.exp(1j * power * t)
            total += val.to_complex() * unit
        return total

    def __repr__(self):
        return f"PhaseCoeff({self.terms!r})"


class TrigPoly:
    """Finite Fourier sum: frequency -> PhaseCoeff amplitude."""

    __slots__ = ("freqs", "nphases")

    def __init__(self, freqs: Dict[int, PhaseCoeff], nphases: int):
        clean = {f: c for f, c in freqs.items() if not c.is_zero}
        object.__setattr__(self, "freqs", clean)
        object.__setattr__(self, "nphases", nphases)

    def __setattr__(self, name, value):
        raise AttributeError("TrigPoly is immutable")

    @staticmethod
    def sin_mode(freq: int, phase_index: int, nphases: int) -> "TrigPoly":
        """sin(freq*phi + t_j) as exponentials with the formal unit eps_j.

        Amplitude -i/2 on eps_j e^{i freq phi} and +i/2 on the conjugate.
        """
        minus_half_i = GaussianRational(0, Fraction(-1, 2))
        plus = PhaseCoeff.unit(phase_index, +1, minus_half_i, nphases)
        minus = PhaseCoeff.unit(phase_index, -1, -minus_half_i, nphases)
        out: Dict[int, PhaseCoeff] = {}
        for f, c in ((freq, plus), (-freq, minus)):
            cur = out.get(f)
            out[f] = c if cur is None else cur + c
        return TrigPoly(out, nphases)

    @staticmethod
    def zero(nphases):
        return TrigPoly({}, nphases)

    @staticmethod
    def one(nphases):
        return TrigPoly({0: PhaseCoeff.constant(1, nphases)}, nphases)

    @property
    def is_zero(self):
        return not self.freqs

    def max_freq(self):
        return max((abs(f) for f in self.freqs), default=0)

    def __add__(self, other):
        out = dict(self.freqs)
        for f, c in other.freqs.items():
            cur = out.get(f)
            out[f] = c if cur is None else cur + c
        return TrigPoly(out, self.nphases)

    def __neg__(self):
        return TrigPoly({f: -c for f, c in self.freqs.items()}, self.nphases)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        out: Dict[int, PhaseCoeff] = {}
        for f1, c1 in self.freqs.items():
            for f2, c2 in other.freqs.items():
                f = f1 + f2
                prod = c1 * c2
                cur = out.get(f)
                out[f] = prod if cur is None else cur + prod
        return TrigPoly(out, self.nphases)

    def derivative(self):
        """d/dphi multiplies the frequency-f amplitude by i*f."""
        out = {}
        for f, c in self.freqs.items():
            if f:
                out[f] = c * GaussianRational(0, f)
        return TrigPoly(out, self.nphases)

    def substitute(self, phases: Sequence[float]) -> Dict[int, complex]:
        return {f: c.substitute(phases) for f, c in self.freqs.items()}


def trig_wronskian(fs: List[TrigPoly]) -> TrigPoly:
    """Division-free (memoized Laplace) determinant of the derivative matrix."""
    k = len(fs)
    if k == 0:
        return TrigPoly.one(0)
    rows = []
    for f in fs:
        row = [f]
        for _ in range(k - 1):
            row.append(row[-1].derivative())
        rows.append(row)
    cache = {}

    def minor(rset: Tuple[int, ...], cset: Tuple[int, ...]) -> TrigPoly:
        key = (rset, cset)
        if key in cache:
            return cache[key]
        if len(rset) == 1:
            out = rows[rset[0]][cset[0]]
        else:
            r = rset[0]
            rest = rset[1:]
            out = TrigPoly.zero(fs[0].nphases)
            for idx, c in enumerate(cset):
                sub = minor(rest, cset[:idx] + cset[idx + 1 :])
                term = rows[r][c] * sub
                out = out + term if idx % 2 == 0 else out - term
        cache[key] = out
        return out

    return minor(tuple(range(k)), tuple(range(k)))


class HomoPoly2:
    """Homogeneous bivariate polynomial of fixed degree; coefficient of
    X**(d-j) Y**j at index j.  Coefficients are PhaseCoeff ring elements."""

    __slots__ = ("degree", "coeffs", "nphases")

    def __init__(self, degree: int, coeffs: List[PhaseCoeff], nphases: int):
        assert len(coeffs) == degree + 1
        object.__setattr__(self, "degree", degree)
        object.__setattr__(self, "coeffs", list(coeffs))
        object.__setattr__(self, "nphases", nphases)

    def __setattr__(self, name, value):
        raise AttributeError("HomoPoly2 is immutable")

    @staticmethod
    def zero(degree, nphases):
        return HomoPoly2(degree, [PhaseCoeff({}) for _ in range(degree + 1)], nphases)

    @property
    def is_zero(self):
        return all(c.is_zero for c in self.coeffs)

    def __add__(self, other):
        assert self.degree == other.degree
        return HomoPoly2(
            self.degree,
            [a + b for a, b in zip(self.coeffs, other.coeffs)],
            self.nphases,
        )

    def __sub__(self, other):
        assert self.degree == other.degree
        return HomoPoly2(
            self.degree,
            [a - b for a, b in zip(self.coeffs, other.coeffs)],
            self.nphases,
        )

    def __mul__(self, other):
        d = self.degree + other.degree
        out = [PhaseCoeff({}) for _ in range(d + 1)]
        for i, a in enumerate(self.coeffs):
            if a.is_zero:
                continue
            for j, b in enumerate(other.coeffs):
                if b.is_zero:
                    continue
                out[i + j] = out[i + j] + a * b
        return HomoPoly2(d, out, self.nphases)

    def scale(self, value):
        return HomoPoly2(
            self.degree, [c.scale(value) for c in self.coeffs], self.nphases
        )

    def dx(self):
        d = self.degree
        if d == 0:
            return HomoPoly2.zero(0, self.nphases)
        out = []
        for j in range(d):  # X^(d-j) Y^j -> (d-j) X^(d-1-j) Y^j
            out.append(self.coeffs[j].scale(d - j))
        return HomoPoly2(d - 1, out, self.nphases)

    def dy(self):
        d = self.degree
        if d == 0:
            return HomoPoly2.zero(0, self.nphases)
        out = []
        for j in range(1, d + 1):  # Y^j -> j Y^(j-1)
            out.append(self.coeffs[j].scale(j))
        return HomoPoly2(d - 1, out, self.nphases)

    def laplacian(self):
        return self.dx().dx() + self.dy().dy()

    def substitute(self, phases: Sequence[float]) -> List[complex]:
        return [c.substitute(phases) for c in self.coeffs]


def trig_to_bivariate(trig: TrigPoly, radial_degree: int) -> HomoPoly2:
    """Convert r**n * (Fourier sum) to a homogeneous polynomial in (X, Y).

    Needs n >= |f| and n - f even for every active frequency f, which the
    sine-Wronskian construction guarantees.
    """
    nphases = trig.nphases
    n = radial_degree
    # base building blocks
    plus = HomoPoly2(
        1,
        [PhaseCoeff.constant(1, nphases), PhaseCoeff.constant(GaussianRational(0, 1), nphases)],
        nphases,
    )  # X + iY
    minus = HomoPoly2(
        1,
        [PhaseCoeff.constant(1, nphases), PhaseCoeff.constant(GaussianRational(0, -1), nphases)],
        nphases,
    )  # X - iY
    rsq = HomoPoly2(
        2,
        [
            PhaseCoeff.constant(1, nphases),
            PhaseCoeff({}),
            PhaseCoeff.constant(1, nphases),
        ],
        nphases,
    )  # X^2 + Y^2

    total = HomoPoly2.zero(n, nphases)
    for f, amp in trig.freqs.items():
        af = abs(f)
        if af > n or (n - af) % 2:
            raise ValueError(f"frequency {f} incompatible with radial degree {n}")
        term = HomoPoly2(0, [PhaseCoeff.constant(1, nphases)], nphases)
        base = plus if f >= 0 else minus
        for _ in range(af):
            term = term * base
        for _ in range((n - af) // 2):
            term = term * rsq
        total = total + HomoPoly2(
            term.degree, [c * amp for c in term.coeffs], nphases
        )
    return total


def laplace_residual(p: HomoPoly2, q: HomoPoly2) -> HomoPoly2:
    """q Lap(p) - 2 (grad q, grad p) + p Lap(q); degree n + m - 2."""
    lp, lq = p.laplacian(), q.laplacian()
    cross = q.dx() * p.dx() + q.dy() * p.dy()
    target = p.degree + q.degree - 2
    if target < 0:
        return HomoPoly2.zero(0, p.nphases)

    def lift(h):
        if h.degree == target:
            return h
        return HomoPoly2.zero(target, p.nphases)

    return lift(q * lp) - lift(cross.scale(2)) + lift(p * lq)
