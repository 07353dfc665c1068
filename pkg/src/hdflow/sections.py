"""Polynomial sections of affine charts: exact fractions u / g^e.

A SectionRing is W_n(F_q)[t_1..t_d] localized at a fixed polynomial g (the
chart or overlap localizer).  Sections are kept as a numerator polynomial
and a denominator exponent; arithmetic cancels g-powers greedily via exact
polynomial division, so representations stay inside bounded windows.

Inverses exist for sections that are units mod p up to g-powers and are
computed by exact division in the residue ring followed by Hensel lifting;
this also inverts 1 + p*(anything) since p is nilpotent.
"""

from __future__ import annotations

from .witt import WittElem, frobenius, lift_level, reduce_level


class NotInvertible(ZeroDivisionError):
    pass


def _lex_key(exps):
    return exps


class Poly:
    """Multivariate polynomial over a Witt ring; terms: exponent tuple -> element."""

    __slots__ = ("ring", "nvars", "terms")

    def __init__(self, ring, nvars, terms):
        self.ring = ring
        self.nvars = nvars
        self.terms = {e: c for e, c in terms.items() if not c.is_zero()}

    # -- constructors ----------------------------------------------------------

    @classmethod
    def const(cls, ring, nvars, elem):
        return cls(ring, nvars, {(0,) * nvars: elem})

    @classmethod
    def variable(cls, ring, nvars, i):
        e = [0] * nvars
        e[i] = 1
        return cls(ring, nvars, {tuple(e): ring.one()})

    @classmethod
    def from_univariate(cls, ring, coeffs, nvars=1, var=0):
        terms = {}
        for k, c in enumerate(coeffs):
            if isinstance(c, int):
                c = ring.from_int(c)
            e = [0] * nvars
            e[var] = k
            terms[tuple(e)] = c
        return cls(ring, nvars, terms)

    # -- queries ---------------------------------------------------------------

    def is_zero(self):
        return not self.terms

    def is_one(self):
        return self.terms == {(0,) * self.nvars: self.ring.one()}

    def total_degree(self):
        return max((sum(e) for e in self.terms), default=-1)

    def degree_in(self, var):
        return max((e[var] for e in self.terms), default=-1)

    def constant_term(self):
        return self.terms.get((0,) * self.nvars, self.ring.zero())

    def leading(self):
        """(exps, coeff) of the lex-leading term."""
        e = max(self.terms, key=_lex_key)
        return e, self.terms[e]

    def val_p(self):
        if self.is_zero():
            return self.ring.n
        return min(c.valuation() for c in self.terms.values())

    def univariate_coeffs(self, var=0):
        d = self.degree_in(var)
        out = [self.ring.zero()] * (d + 1)
        for e, c in self.terms.items():
            if sum(e) != e[var]:
                raise ValueError("polynomial is not univariate in the requested variable")
            out[e[var]] = c
        return out

    # -- arithmetic --------------------------------------------------------------

    def _zip(self, other, op):
        terms = dict(self.terms)
        for e, c in other.terms.items():
            cur = terms.get(e)
            terms[e] = op(cur, c) if cur is not None else op(None, c)
        return Poly(self.ring, self.nvars, terms)

    def __add__(self, other):
        return self._zip(other, lambda a, b: (a + b) if a is not None else b)

    def __sub__(self, other):
        return self._zip(other, lambda a, b: (a - b) if a is not None else -b)

    def __neg__(self):
        return Poly(self.ring, self.nvars, {e: -c for e, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, WittElem):
            return Poly(self.ring, self.nvars, {e: c * other for e, c in self.terms.items()})
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                prod = c1 * c2
                cur = out.get(e)
                out[e] = (cur + prod) if cur is not None else prod
        return Poly(self.ring, self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k):
        r = Poly.const(self.ring, self.nvars, self.ring.one())
        b = self
        while k:
            if k & 1:
                r = r * b
            b = b * b
            k >>= 1
        return r

    def __eq__(self, other):
        return (
            isinstance(other, Poly)
            and other.ring is self.ring
            and other.terms == self.terms
        )

    def __hash__(self):
        return hash((id(self.ring), tuple(sorted(self.terms.items(), key=lambda kv: kv[0]))))

    def deriv(self, var):
        out = {}
        for e, c in self.terms.items():
            k = e[var]
            if k == 0:
                continue
            e2 = list(e)
            e2[var] = k - 1
            e2 = tuple(e2)
            add = c * self.ring.from_int(k)
            cur = out.get(e2)
            out[e2] = (cur + add) if cur is not None else add
        return Poly(self.ring, self.nvars, out)

    def exact_div(self, divisor):
        """Exact quotient self / divisor, or None.  Divisor lex-lead must be a unit."""
        if divisor.is_zero():
            raise ZeroDivisionError
        de, dc = divisor.leading()
        if not dc.is_unit():
            return None
        dcinv = dc.inverse()
        rem = self
        qterms = {}
        guard = len(self.terms) * (divisor.total_degree() + 2) * 4 + 16
        while not rem.is_zero():
            guard -= 1
            if guard < 0:
                return None
            e, c = rem.leading()
            qe = tuple(a - b for a, b in zip(e, de))
            if any(v < 0 for v in qe):
                return None
            qc = c * dcinv
            qterms[qe] = qc
            rem = rem - Poly(self.ring, self.nvars, {qe: qc}) * divisor
        return Poly(self.ring, self.nvars, qterms)

    def exact_div_p(self, k):
        return Poly(self.ring, self.nvars, {e: c.exact_div_p(k) for e, c in self.terms.items()})

    # -- coefficient maps ---------------------------------------------------------

    def map_coeffs(self, fn, ring=None):
        ring = ring or self.ring
        return Poly(ring, self.nvars, {e: fn(c) for e, c in self.terms.items()})

    def reduce_level(self, level):
        return self.map_coeffs(lambda c: reduce_level(c, level), self.ring.at_level(level))

    def lift_level(self, level):
        return self.map_coeffs(lambda c: lift_level(c, level), self.ring.at_level(level))

    def sigma(self, power=1):
        return self.map_coeffs(lambda c: frobenius(c, power))

    def eval_elem(self, points):
        """Evaluate at ring elements (full substitution)."""
        acc = self.ring.zero()
        for e, c in self.terms.items():
            term = c
            for i, k in enumerate(e):
                if k:
                    term = term * (points[i] ** k)
            acc = acc + term
        return acc

    def __repr__(self):
        if self.is_zero():
            return "Poly(0)"
        bits = []
        for e in sorted(self.terms, key=_lex_key, reverse=True):
            bits.append(f"{self.terms[e].coeffs}*x^{e}")
        return "Poly(" + " + ".join(bits) + ")"


_SR_REGISTRY = {}


def _loc_signature(witt, nvars, loc):
    if loc is None:
        return (((0,) * nvars, (1,) + (0,) * (witt.m - 1)),)
    return tuple(sorted((e, c.coeffs) for e, c in loc.terms.items()))


class SectionRing:
    """W_n(F_q)[t_1..t_d][1/g]: the section ring of a chart or overlap.

    Instances are canonical: equal (ring, variables, localizer) data yields
    the same object, so sections from independently built covers compare.
    """

    def __new__(cls, witt, varnames, loc=None):
        key = (id(witt), tuple(varnames), _loc_signature(witt, len(tuple(varnames)), loc))
        inst = _SR_REGISTRY.get(key)
        if inst is None:
            inst = super().__new__(cls)
            inst._ready = False
            _SR_REGISTRY[key] = inst
        return inst

    def __init__(self, witt, varnames, loc=None):
        if self._ready:
            return
        self.witt = witt
        self.varnames = tuple(varnames)
        self.nvars = len(self.varnames)
        if loc is None:
            loc = Poly.const(witt, self.nvars, witt.one())
        self.loc = loc
        self._loc_pows = [Poly.const(witt, self.nvars, witt.one()), loc]
        self._levels = {witt.n: self}
        self._ready = True

    def loc_pow(self, k):
        """loc^k, cached."""
        pows = self._loc_pows
        while len(pows) <= k:
            pows.append(pows[-1] * self.loc)
        return pows[k]

    def at_level(self, level):
        sr = self._levels.get(level)
        if sr is None:
            witt = self.witt.at_level(level)
            loc = (
                self.loc.reduce_level(level)
                if level <= self.witt.n
                else self.loc.lift_level(level)
            )
            sr = SectionRing(witt, self.varnames, loc)
            sr._levels = self._levels
            self._levels[level] = sr
        return sr

    # -- element builders --------------------------------------------------------

    def poly_const(self, elem):
        if isinstance(elem, int):
            elem = self.witt.from_int(elem)
        return Poly.const(self.witt, self.nvars, elem)

    def poly_var(self, name):
        return Poly.variable(self.witt, self.nvars, self.varnames.index(name))

    def zero(self):
        return Frac(self, self.poly_const(0), 0)

    def one(self):
        return Frac(self, self.poly_const(1), 0)

    def const(self, elem):
        return Frac(self, self.poly_const(elem), 0)

    def frac(self, numer, e=0):
        return Frac(self, numer, e)

    def var(self, name):
        return Frac(self, self.poly_var(name), 0)

    def __repr__(self):
        return f"SectionRing({self.witt}[{','.join(self.varnames)}][1/g], g={self.loc})"


class Frac:
    """A section numer / loc^e of a SectionRing; normalized greedily."""

    __slots__ = ("sr", "numer", "e")

    def __init__(self, sr, numer, e):
        if numer.is_zero():
            e = 0
        self.sr = sr
        self.numer = numer
        self.e = e

    def reduced(self):
        """Cancel localizer powers from the numerator where possible."""
        numer, e = self.numer, self.e
        while e > 0:
            q = numer.exact_div(self.sr.loc)
            if q is None:
                break
            numer = q
            e -= 1
        return Frac(self.sr, numer, e)

    def _coerce(self, other):
        if isinstance(other, int):
            return self.sr.const(other)
        if isinstance(other, WittElem):
            return self.sr.const(other)
        if isinstance(other, Poly):
            return Frac(self.sr, other, 0)
        if not isinstance(other, Frac) or other.sr is not self.sr:
            raise ValueError("section ring mismatch")
        return other

    def is_zero(self):
        return self.numer.is_zero()

    def is_one(self):
        return self == self.sr.one()

    def __add__(self, other):
        other = self._coerce(other)
        e = max(self.e, other.e)
        a = self.numer * self.sr.loc_pow(e - self.e) if e > self.e else self.numer
        b = other.numer * self.sr.loc_pow(e - other.e) if e > other.e else other.numer
        return Frac(self.sr, a + b, e)

    __radd__ = __add__

    def __neg__(self):
        return Frac(self.sr, -self.numer, self.e)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        return Frac(self.sr, self.numer * other.numer, self.e + other.e)

    __rmul__ = __mul__

    def __pow__(self, k):
        if k < 0:
            return self.inverse() ** (-k)
        r = self.sr.one()
        b = self
        while k:
            if k & 1:
                r = r * b
            b = b * b
            k >>= 1
        return r

    def __eq__(self, other):
        try:
            other = self._coerce(other)
        except ValueError:
            return NotImplemented
        a = self.numer * self.sr.loc_pow(other.e) if other.e else self.numer
        b = other.numer * self.sr.loc_pow(self.e) if self.e else other.numer
        return a == b

    def __hash__(self):
        raise TypeError("sections are unhashable")

    def deriv(self, var):
        sr = self.sr
        du = self.numer.deriv(var)
        if self.e == 0:
            return Frac(sr, du, 0)
        dg = sr.loc.deriv(var)
        num = du * sr.loc - self.numer * dg * sr.witt.from_int(self.e)
        return Frac(sr, num, self.e + 1)

    def val_p(self):
        return self.numer.val_p()

    def exact_div_p(self, k):
        return Frac(self.sr, self.numer.exact_div_p(k), self.e)

    def reduce_level(self, level):
        sr = self.sr.at_level(level)
        return Frac(sr, self.numer.reduce_level(level), self.e)

    def lift_level(self, level):
        sr = self.sr.at_level(level)
        return Frac(sr, self.numer.lift_level(level), self.e)

    def inverse(self):
        sr = self.sr
        red = self.reduced()
        u = red.numer
        if u.is_zero():
            raise ZeroDivisionError("inverse of zero section")
        if u.val_p() > 0:
            raise NotInvertible("section divisible by p")
        # residue step: find N with ubar | gbar^N in the residue ring
        sr1 = sr.at_level(1)
        ubar = u.reduce_level(1)
        gbar = sr1.loc
        gN = sr1.poly_const(1)
        w = None
        N = 0
        for N in range(ubar.total_degree() + 2):
            q = gN.exact_div(ubar)
            if q is not None:
                w = q
                break
            gN = gN * gbar
        if w is None:
            raise NotInvertible(f"{u} does not divide a power of the localizer mod p")
        n = sr.witt.n
        v = Frac(sr, w.lift_level(n), N).reduced()
        two = sr.const(2)
        uf = Frac(sr, u, 0)
        for _ in range(n.bit_length() + 1):
            v = (v * (two - uf * v)).reduced()
        if not (uf * v == sr.one()):
            raise NotInvertible("Hensel inversion failed")
        if red.e:
            v = v * Frac(sr, sr.loc_pow(red.e), 0)
        return v

    def subs(self, images, target_sr, coeff_map=None):
        """Substitute variables by target-ring sections; optional coefficient map."""
        num = subs_poly(self.numer, images, target_sr, coeff_map)
        if not self.e:
            return num
        den = subs_poly(self.sr.loc, images, target_sr, coeff_map)
        return num * frac_rpow(den.inverse().reduced(), self.e)

    def __repr__(self):
        return f"Frac({self.numer} / g^{self.e})"


def frac_rpow(f, k):
    """Power with reduction at every step; keeps denominators small."""
    r = f.sr.one()
    b = f
    while k:
        if k & 1:
            r = (r * b).reduced()
        b = (b * b).reduced()
        k >>= 1
    return r


def subs_poly(poly, images, target_sr, coeff_map=None):
    """Substitute variables of a Poly by Frac images, mapping coefficients.

    Powers of the images are cached with intermediate reduction, so dense
    univariate substitutions stay quadratic rather than cubic.
    """
    acc = target_sr.zero()
    if poly.nvars == 1:
        img = images[0]
        pows = [target_sr.one()]
        for e in sorted(poly.terms):
            while len(pows) <= e[0]:
                pows.append((pows[-1] * img).reduced())
            c = poly.terms[e]
            if coeff_map is not None:
                c = coeff_map(c)
            acc = acc + pows[e[0]] * c
        return acc
    powcache = [ [target_sr.one()] for _ in range(poly.nvars) ]
    for e, c in poly.terms.items():
        if coeff_map is not None:
            c = coeff_map(c)
        term = target_sr.const(c)
        for i, k in enumerate(e):
            if k:
                while len(powcache[i]) <= k:
                    powcache[i].append((powcache[i][-1] * images[i]).reduced())
                term = term * powcache[i][k]
        acc = acc + term
    return acc
