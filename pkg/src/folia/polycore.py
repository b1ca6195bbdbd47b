"""Exact polynomials over Q and Groebner bases for submodules of free modules.

Module terms are ordered position-over-term: a lower component index is
larger, ties are broken by graded reverse lexicographic order on exponents.
Syzygies and lift matrices come out of one Buchberger run on the tagged
generators ``(g_i | e_i)`` in ``R^(r+k)``; since the tag positions sit below
every frame position, the order eliminates the frame part.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

__all__ = [
    "DegreeBoundExceeded",
    "FreeModuleElem",
    "Poly",
    "RankMismatch",
    "Submodule",
    "evaluate",
    "normal_form",
    "syzygies",
]

DEFAULT_DEGREE_BOUND = 40


class RankMismatch(ValueError):
    pass


class DegreeBoundExceeded(RuntimeError):
    """Buchberger produced an element above the configured total degree."""

    def __init__(self, degree: int, bound: int):
        super().__init__(f"Groebner computation exceeded degree bound {bound} (reached {degree})")
        self.degree = degree
        self.bound = bound


def _q(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, Rational)):
        return Fraction(c)
    if isinstance(c, str):
        return Fraction(c)
    raise TypeError(f"not an exact rational: {c!r}")


class Poly:
    """Multivariate polynomial with rational coefficients in ``nvars`` variables."""

    __slots__ = ("_terms", "nvars", "_hash")

    def __init__(self, terms: Mapping[tuple[int, ...], object] | None = None, nvars: int = 0):
        clean: dict[tuple[int, ...], Fraction] = {}
        for exp, c in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != nvars:
                raise ValueError(f"exponent {exp} does not have length {nvars}")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent {exp}")
            c = _q(c)
            if c:
                clean[exp] = clean.get(exp, Fraction(0)) + c
                if not clean[exp]:
                    del clean[exp]
        self._terms = clean
        self.nvars = nvars
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict, nvars: int) -> "Poly":
        p = cls.__new__(cls)
        p._terms = terms
        p.nvars = nvars
        p._hash = None
        return p

    @classmethod
    def const(cls, c, nvars: int) -> "Poly":
        c = _q(c)
        return cls._raw({(0,) * nvars: c} if c else {}, nvars)

    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls._raw({}, nvars)

    @classmethod
    def var(cls, i: int, nvars: int) -> "Poly":
        if not 0 <= i < nvars:
            raise IndexError(f"variable index {i} out of range for {nvars} variables")
        exp = [0] * nvars
        exp[i] = 1
        return cls._raw({tuple(exp): Fraction(1)}, nvars)

    @classmethod
    def monomial(cls, exp: Sequence[int], c=1) -> "Poly":
        return cls({tuple(exp): c}, len(exp))

    @property
    def terms(self) -> Mapping[tuple[int, ...], Fraction]:
        return MappingProxyType(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def degree(self) -> int:
        return max((sum(e) for e in self._terms), default=-1)

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise ValueError(f"variable count mismatch: {self.nvars} vs {other.nvars}")
            return other
        return Poly.const(other, self.nvars)

    def __add__(self, other) -> "Poly":
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out = dict(self._terms)
        for e, c in other._terms.items():
            v = out.get(e, 0) + c
            if v:
                out[e] = v
            else:
                out.pop(e, None)
        return Poly._raw(out, self.nvars)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly._raw({e: -c for e, c in self._terms.items()}, self.nvars)

    def __sub__(self, other) -> "Poly":
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "Poly":
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FreeModuleElem):
            return NotImplemented
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out: dict[tuple[int, ...], Fraction] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = out.get(e, 0) + c1 * c2
                if v:
                    out[e] = v
                else:
                    out.pop(e, None)
        return Poly._raw(out, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        if k < 0:
            raise ValueError("negative power")
        result = Poly.const(1, self.nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, Poly):
            return self.nvars == other.nvars and self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self._terms == Poly.const(other, self.nvars)._terms
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self._terms.items())))
        return self._hash

    def diff(self, i: int) -> "Poly":
        out = {}
        for e, c in self._terms.items():
            if e[i]:
                ne = list(e)
                ne[i] -= 1
                out[tuple(ne)] = c * e[i]
        return Poly._raw(out, self.nvars)

    def evaluate(self, point: Sequence) -> Fraction:
        if len(point) != self.nvars:
            raise ValueError(f"point has dimension {len(point)}, expected {self.nvars}")
        pt = [_q(v) for v in point]
        total = Fraction(0)
        for e, c in self._terms.items():
            term = c
            for v, k in zip(pt, e):
                if k:
                    term *= v**k
            total += term
        return total

    __call__ = evaluate

    def substitute(self, values: Sequence["Poly"]) -> "Poly":
        """Compose: replace variable i by ``values[i]`` (all in a common ring)."""
        if len(values) != self.nvars:
            raise ValueError("substitution needs one polynomial per variable")
        if not values:
            return self
        target = values[0].nvars
        out = Poly.zero(target)
        for e, c in self._terms.items():
            term = Poly.const(c, target)
            for v, k in zip(values, e):
                if k:
                    term = term * v**k
            out = out + term
        return out

    def extend(self, nvars: int, offset: int = 0) -> "Poly":
        """Embed into a ring with more variables, placing ours at ``offset``."""
        pad_left = (0,) * offset
        pad_right = (0,) * (nvars - offset - self.nvars)
        return Poly._raw({pad_left + e + pad_right: c for e, c in self._terms.items()}, nvars)

    def to_str(self, names: Sequence[str] | None = None) -> str:
        names = names or [f"x{i + 1}" for i in range(self.nvars)]
        if not self._terms:
            return "0"
        parts = []
        for e in sorted(self._terms, key=_grevlex_key, reverse=True):
            c = self._terms[e]
            mono = "*".join(
                n if k == 1 else f"{n}^{k}" for n, k in zip(names, e) if k
            )
            sign = "-" if c < 0 else "+"
            a = abs(c)
            if not mono:
                body = str(a)
            elif a == 1:
                body = mono
            else:
                body = f"{a}*{mono}"
            parts.append((sign, body))
        s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            s += f" {sign} {body}"
        return s

    def __repr__(self) -> str:
        return f"Poly({self.to_str()})"


def _grevlex_key(exp: tuple[int, ...]):
    return (sum(exp), tuple(-e for e in reversed(exp)))


class FreeModuleElem:
    """Vector of polynomials: a section written in a fixed frame."""

    __slots__ = ("components", "nvars")

    def __init__(self, components: Iterable[Poly], nvars: int | None = None):
        comps = tuple(components)
        if nvars is None:
            if not comps:
                raise ValueError("nvars is required for a rank-0 element")
            nvars = comps[0].nvars
        for c in comps:
            if not isinstance(c, Poly) or c.nvars != nvars:
                raise ValueError("components must be polynomials in a common ring")
        self.components = comps
        self.nvars = nvars

    @classmethod
    def zero(cls, rank: int, nvars: int) -> "FreeModuleElem":
        return cls([Poly.zero(nvars)] * rank, nvars)

    @classmethod
    def basis(cls, a: int, rank: int, nvars: int) -> "FreeModuleElem":
        return cls(
            [Poly.const(1 if i == a else 0, nvars) for i in range(rank)], nvars
        )

    @property
    def rank(self) -> int:
        return len(self.components)

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def _check(self, other: "FreeModuleElem") -> None:
        if other.rank != self.rank or other.nvars != self.nvars:
            raise RankMismatch(f"rank {self.rank} vs {other.rank}")

    def __add__(self, other: "FreeModuleElem") -> "FreeModuleElem":
        if not isinstance(other, FreeModuleElem):
            return NotImplemented
        self._check(other)
        return FreeModuleElem([a + b for a, b in zip(self, other)], self.nvars)

    def __sub__(self, other: "FreeModuleElem") -> "FreeModuleElem":
        if not isinstance(other, FreeModuleElem):
            return NotImplemented
        self._check(other)
        return FreeModuleElem([a - b for a, b in zip(self, other)], self.nvars)

    def __neg__(self) -> "FreeModuleElem":
        return FreeModuleElem([-a for a in self], self.nvars)

    def __mul__(self, f) -> "FreeModuleElem":
        if isinstance(f, FreeModuleElem):
            return NotImplemented
        if not isinstance(f, Poly):
            f = Poly.const(f, self.nvars)
        return FreeModuleElem([f * a for a in self], self.nvars)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, FreeModuleElem):
            return NotImplemented
        return self.nvars == other.nvars and self.components == other.components

    def __hash__(self) -> int:
        return hash((self.nvars, self.components))

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def degree(self) -> int:
        return max((c.degree() for c in self.components), default=-1)

    def evaluate(self, point: Sequence) -> tuple[Fraction, ...]:
        return tuple(c.evaluate(point) for c in self.components)

    def extend(self, nvars: int, offset: int = 0) -> "FreeModuleElem":
        return FreeModuleElem([c.extend(nvars, offset) for c in self], nvars)

    def _to_terms(self, offset: int = 0) -> dict:
        return {
            (i + offset, e): c
            for i, comp in enumerate(self.components)
            for e, c in comp._terms.items()
        }

    @classmethod
    def _from_terms(cls, terms: Mapping, rank: int, nvars: int, offset: int = 0) -> "FreeModuleElem":
        comps: list[dict] = [{} for _ in range(rank)]
        for (pos, e), c in terms.items():
            if offset <= pos < offset + rank:
                comps[pos - offset][e] = c
        return cls([Poly._raw(d, nvars) for d in comps], nvars)

    def __repr__(self) -> str:
        return "(" + ", ".join(c.to_str() for c in self.components) + ")"


def evaluate(e: FreeModuleElem, point: Sequence) -> tuple[Fraction, ...]:
    """Exact componentwise evaluation of a section at a rational point."""
    if len(point) != e.nvars:
        raise ValueError(f"point has dimension {len(point)}, expected {e.nvars}")
    return e.evaluate(point)


# --- raw module-vector kernels -------------------------------------------------
# A raw vector is a dict {(position, exponent): Fraction}.


def _term_key(t):
    pos, exp = t
    return (-pos, sum(exp), tuple(-e for e in reversed(exp)))


def _lead(v: dict):
    return max(v, key=_term_key)


def _divides(a: tuple, b: tuple) -> bool:
    return all(x <= y for x, y in zip(a, b))


def _axpy(v: dict, coeff: Fraction, mono: tuple, w: dict) -> None:
    """In place: v += coeff * x^mono * w."""
    for (pos, e), c in w.items():
        key = (pos, tuple(a + b for a, b in zip(e, mono)))
        val = v.get(key, 0) + coeff * c
        if val:
            v[key] = val
        else:
            v.pop(key, None)


def _monic(v: dict) -> dict:
    c = v[_lead(v)]
    if c == 1:
        return v
    return {t: x / c for t, x in v.items()}


def _vdegree(v: dict) -> int:
    return max((sum(e) for _, e in v), default=-1)


def _reduce(v: dict, basis: list[dict], leads: list, limit: int | None = None, track: bool = False):
    """Full reduction of ``v`` modulo ``basis`` restricted to positions < limit.

    Returns (remainder, quotients) where quotients[j] is a raw polynomial
    {exp: coeff} when ``track`` is set.
    """
    v = dict(v)
    rem: dict = {}
    quot: list[dict] | None = [dict() for _ in basis] if track else None
    while v:
        lt = _lead(v)
        pos, exp = lt
        c = v[lt]
        hit = False
        if limit is None or pos < limit:
            for j, (lpos, lexp) in enumerate(leads):
                if lpos == pos and _divides(lexp, exp):
                    mono = tuple(a - b for a, b in zip(exp, lexp))
                    coeff = c / basis[j][leads[j]]
                    _axpy(v, -coeff, mono, basis[j])
                    if quot is not None:
                        q = quot[j]
                        val = q.get(mono, 0) + coeff
                        if val:
                            q[mono] = val
                        else:
                            q.pop(mono, None)
                    hit = True
                    break
        if not hit:
            rem[lt] = c
            del v[lt]
    return rem, quot


def _spoly(f: dict, g: dict, lf, lg) -> dict:
    lcm = tuple(max(a, b) for a, b in zip(lf[1], lg[1]))
    mf = tuple(a - b for a, b in zip(lcm, lf[1]))
    mg = tuple(a - b for a, b in zip(lcm, lg[1]))
    out: dict = {}
    _axpy(out, 1 / f[lf], mf, f)
    _axpy(out, -1 / g[lg], mg, g)
    return out


def _buchberger(gens: list[dict], degree_bound: int) -> list[dict]:
    basis: list[dict] = []
    leads: list = []
    pairs: set[tuple[int, int]] = set()

    def add(v):
        d = _vdegree(v)
        if d > degree_bound:
            raise DegreeBoundExceeded(d, degree_bound)
        v = _monic(v)
        basis.append(v)
        leads.append(_lead(v))
        j = len(basis) - 1
        for i in range(j):
            if leads[i][0] == leads[j][0]:
                pairs.add((i, j))

    for g in gens:
        if g:
            r, _ = _reduce(g, basis, leads)
            if r:
                add(r)

    def lcm_of(p):
        i, j = p
        return tuple(max(a, b) for a, b in zip(leads[i][1], leads[j][1]))

    while pairs:
        p = min(pairs, key=lambda p: (sum(lcm_of(p)), _term_key((leads[p[0]][0], lcm_of(p))), p))
        pairs.discard(p)
        i, j = p
        lcm = lcm_of(p)
        pos = leads[i][0]
        # chain criterion
        skip = False
        for l in range(len(basis)):
            if l in (i, j) or leads[l][0] != pos:
                continue
            if _divides(leads[l][1], lcm):
                a, b = (min(i, l), max(i, l)), (min(j, l), max(j, l))
                if a not in pairs and b not in pairs:
                    skip = True
                    break
        if skip:
            continue
        s = _spoly(basis[i], basis[j], leads[i], leads[j])
        r, _ = _reduce(s, basis, leads)
        if r:
            add(r)
    return basis


def _interreduce(pairs: list[tuple[dict, dict]], limit: int) -> list[tuple[dict, dict]]:
    """Reduce a Groebner basis (frame part, tag part) to reduced form.

    Frame parts live in positions < limit; tags follow them through each step.
    """
    items = []
    for g, t in pairs:
        c = g[_lead(g)]
        items.append(({k: v / c for k, v in g.items()}, {k: v / c for k, v in t.items()}))
    # minimalize
    keep: list[tuple[dict, dict]] = []
    items.sort(key=lambda it: _term_key(_lead(it[0])))
    for g, t in items:
        lg = _lead(g)
        if any(_lead(h)[0] == lg[0] and _divides(_lead(h)[1], lg[1]) for h, _ in keep):
            continue
        keep.append((g, t))
    # full reduction of tails
    out: list[tuple[dict, dict]] = []
    for idx in range(len(keep)):
        g, t = keep[idx]
        others = [keep[j] for j in range(len(keep)) if j != idx]
        basis = [h for h, _ in others]
        leads = [_lead(h) for h in basis]
        lg = _lead(g)
        tail = {k: v for k, v in g.items() if k != lg}
        rem, quot = _reduce(tail, basis, leads, track=True)
        newg = dict(rem)
        newg[lg] = g[lg]
        newt = dict(t)
        for q, (_, ht) in zip(quot, others):
            for mono, coeff in q.items():
                _axpy(newt, -coeff, mono, ht)
        out.append((newg, newt))
    out.sort(key=lambda it: _term_key(_lead(it[0])), reverse=True)
    return out


class Submodule:
    """Finitely generated submodule of ``R^rank`` with Groebner data.

    Attributes
    ----------
    generators : tuple of FreeModuleElem
    groebner : tuple of FreeModuleElem
        Reduced Groebner basis (position-over-term, grevlex).
    lift : tuple of tuple of Poly
        ``groebner[j] == sum(lift[j][i] * generators[i])``.
    syzygies : tuple of tuple of Poly
        Generators of the relation module of ``generators``.
    """

    def __init__(
        self,
        generators: Sequence[FreeModuleElem],
        rank: int | None = None,
        nvars: int | None = None,
        degree_bound: int = DEFAULT_DEGREE_BOUND,
    ):
        gens = tuple(generators)
        if gens:
            rank = gens[0].rank if rank is None else rank
            nvars = gens[0].nvars if nvars is None else nvars
        if rank is None or nvars is None:
            raise ValueError("an empty generator list needs explicit rank and nvars")
        for g in gens:
            if g.rank != rank or g.nvars != nvars:
                raise RankMismatch(f"generator {g!r} does not live in rank {rank}, {nvars} vars")
        self.generators = gens
        self.rank = rank
        self.nvars = nvars
        self.degree_bound = degree_bound
        self._compute()

    def _compute(self) -> None:
        k, r, n = len(self.generators), self.rank, self.nvars
        one = (0,) * n
        tagged = []
        for i, g in enumerate(self.generators):
            v = g._to_terms()
            v[(r + i, one)] = Fraction(1)
            tagged.append(v)
        basis = _buchberger(tagged, self.degree_bound)
        frame, syz = [], []
        for v in basis:
            gpart = {t: c for t, c in v.items() if t[0] < r}
            tpart = {(t[0] - r, t[1]): c for t, c in v.items() if t[0] >= r}
            if gpart:
                frame.append((gpart, tpart))
            else:
                syz.append(tpart)
        reduced = _interreduce(frame, r) if frame else []
        self._gb_raw = [g for g, _ in reduced]
        self._gb_leads = [_lead(g) for g in self._gb_raw]
        self.groebner = tuple(FreeModuleElem._from_terms(g, r, n) for g, _ in reduced)
        self.lift = tuple(
            tuple(FreeModuleElem._from_terms(t, k, n).components) for _, t in reduced
        )
        syz_elems = sorted(
            (FreeModuleElem._from_terms(s, k, n) for s in syz),
            key=lambda s: _term_key(_lead(s._to_terms())),
            reverse=True,
        )
        self.syzygies = tuple(tuple(s.components) for s in syz_elems)

    @property
    def ngens(self) -> int:
        return len(self.generators)

    def normal_form(self, e: FreeModuleElem) -> tuple[FreeModuleElem, tuple[Poly, ...]]:
        """Divide ``e`` by the module.

        Returns ``(remainder, certificate)`` with
        ``e == sum(certificate[i] * generators[i]) + remainder``; the
        remainder is zero exactly when ``e`` is a member.
        """
        if e.rank != self.rank or e.nvars != self.nvars:
            raise RankMismatch(
                f"element of rank {e.rank} in {e.nvars} vars vs module rank {self.rank} in {self.nvars} vars"
            )
        rem, quot = _reduce(e._to_terms(), self._gb_raw, self._gb_leads, track=True)
        n = self.nvars
        cert = [Poly.zero(n) for _ in self.generators]
        for q, row in zip(quot, self.lift):
            if not q:
                continue
            qp = Poly._raw(q, n)
            for i, l in enumerate(row):
                if l:
                    cert[i] = cert[i] + qp * l
        return FreeModuleElem._from_terms(rem, self.rank, n), tuple(cert)

    def contains(self, e: FreeModuleElem) -> bool:
        return self.normal_form(e)[0].is_zero()

    def __contains__(self, e: FreeModuleElem) -> bool:
        return self.contains(e)

    def combine(self, coeffs: Sequence[Poly]) -> FreeModuleElem:
        """Return ``sum(coeffs[i] * generators[i])``."""
        out = FreeModuleElem.zero(self.rank, self.nvars)
        for c, g in zip(coeffs, self.generators):
            if c:
                out = out + c * g
        return out

    def __repr__(self) -> str:
        return f"Submodule(rank={self.rank}, nvars={self.nvars}, generators={list(self.generators)!r})"


def normal_form(e: FreeModuleElem, S: Submodule) -> tuple[FreeModuleElem, tuple[Poly, ...]]:
    return S.normal_form(e)


def syzygies(gens: Sequence[FreeModuleElem], degree_bound: int = DEFAULT_DEGREE_BOUND) -> tuple[tuple[Poly, ...], ...]:
    if not gens:
        raise ValueError("syzygies of an empty generator list are undefined")
    return Submodule(gens, degree_bound=degree_bound).syzygies
