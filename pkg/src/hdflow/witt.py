"""Exact arithmetic in truncated Witt rings W_n(F_{p^m}).

The ring W_n(F_{p^m}) is represented as (Z/p^n)[x]/(f_lift) where f_lift is
the coefficient-wise minimal lift of a monic irreducible f_res over F_p.
This is isomorphic to the usual Witt-vector presentation but has trivial
arithmetic.  The Frobenius automorphism sigma is the substitution
x -> frob_image, where frob_image is the Hensel lift of x^p; it is computed
once at ring construction and cached as a linear map.

Elements are immutable: a ring handle plus a tuple of m integers in
[0, p^n), the coefficients in the residue basis 1, x, ..., x^{m-1}.
"""

from __future__ import annotations


class NonOddPrime(ValueError):
    """p is 2 or composite."""


class ReduciblePolynomial(ValueError):
    """f_res is not irreducible over F_p."""


class HenselFailure(RuntimeError):
    """Hensel iteration did not converge; indicates internal inconsistency."""


class BadLevel(ValueError):
    """Requested truncation level outside [1, n]."""


def _is_prime(p):
    if p < 2:
        return False
    d = 2
    while d * d <= p:
        if p % d == 0:
            return False
        d += 1
    return True


# ---------------------------------------------------------------------------
# Polynomial helpers over F_p (coefficient lists, low degree first).


def _fp_trim(a, p):
    a = [c % p for c in a]
    while a and a[-1] == 0:
        a.pop()
    return a


def _fp_mulmod(a, b, f, p):
    # f monic; returns a*b mod (f, p)
    out = [0] * (len(a) + len(b) - 1) if a and b else []
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] = (out[i + j] + ai * bj) % p
    m = len(f) - 1
    while len(out) > m:
        lead = out.pop()
        if lead:
            for k in range(m):
                out[len(out) - m + k] = (out[len(out) - m + k] - lead * f[k]) % p
    return _fp_trim(out, p)


def _fp_powmod(a, e, f, p):
    r = [1]
    base = _fp_trim(list(a), p)
    while e:
        if e & 1:
            r = _fp_mulmod(r, base, f, p)
        base = _fp_mulmod(base, base, f, p)
        e >>= 1
    return r


def _fp_divmod(a, b, p):
    binv = pow(b[-1], p - 2, p)
    a = list(a)
    q = [0] * max(len(a) - len(b) + 1, 0)
    while len(a) >= len(b) and a:
        c = (a[-1] * binv) % p
        k = len(a) - len(b)
        q[k] = c
        for i in range(len(b)):
            a[k + i] = (a[k + i] - c * b[i]) % p
        a = _fp_trim(a, p)
        if not a:
            break
    return q, a


def _fp_gcd(a, b, p):
    a, b = _fp_trim(list(a), p), _fp_trim(list(b), p)
    while b:
        _, r = _fp_divmod(a, b, p)
        a, b = b, r
    return a


def is_irreducible(coeffs, p):
    """Monic irreducibility test over F_p; coeffs low-first, monic."""
    f = [c % p for c in coeffs]
    d = len(f) - 1
    if d < 1 or f[-1] != 1:
        return False
    if d == 1:
        return True
    # x^{p^d} == x mod f, and gcd(x^{p^{d/l}} - x, f) = 1 for prime l | d
    xq = _fp_powmod([0, 1], p ** d, f, p)
    if xq != _fp_trim([0, 1], p):
        return False
    dd = d
    ell = 2
    primes = []
    while dd > 1:
        if dd % ell == 0:
            primes.append(ell)
            while dd % ell == 0:
                dd //= ell
        ell += 1
    for ell in primes:
        xe = _fp_powmod([0, 1], p ** (d // ell), f, p)
        # gcd(xe - x, f)
        sub = list(xe)
        while len(sub) < 2:
            sub.append(0)
        sub[1] = (sub[1] - 1) % p
        sub = _fp_trim(sub, p)
        g = _fp_gcd(f, sub, p)
        if len(g) != 1:
            return False
    return True


def find_irreducible(p, degree):
    """First monic irreducible of given degree over F_p in lex coefficient order."""
    if degree == 1:
        return (0, 1)
    from itertools import product

    for tail in product(range(p), repeat=degree):
        coeffs = list(tail) + [1]
        if coeffs[0] == 0:
            continue
        if is_irreducible(coeffs, p):
            return tuple(coeffs)
    raise ReduciblePolynomial(f"no irreducible polynomial of degree {degree} over F_{p}")


# ---------------------------------------------------------------------------


_RING_REGISTRY = {}


class WittRing:
    """The ring W_n(F_{p^m}) = (Z/p^n)[x]/(f_lift)."""

    def __init__(self, p, n, m, f_res):
        if not _is_prime(p) or p == 2:
            raise NonOddPrime(f"p = {p} is not an odd prime")
        if n < 1:
            raise BadLevel(f"truncation level {n} < 1")
        f_res = tuple(int(c) % p for c in f_res)
        if len(f_res) != m + 1 or f_res[-1] != 1:
            raise ReduciblePolynomial(f"f_res must be monic of degree {m}")
        if not is_irreducible(f_res, p):
            raise ReduciblePolynomial(f"{f_res} is reducible over F_{p}")
        self.p = p
        self.n = n
        self.m = m
        self.q = p ** m
        self.modulus = p ** n
        self.f_res = f_res
        # minimal coefficient lift: the same integers at every level
        self.f_lift = f_res
        self._inv_cache = {}
        self._mul_table = self._build_mul_table()
        self._frob_vec = self._hensel_frobenius()
        self._frob_mat = self._build_frob_matrix()

    # -- construction helpers ------------------------------------------------

    def _build_mul_table(self):
        """x^k mod (f_lift, p^n) for k = 0..2m-2, as exact integer tuples."""
        m, mod = self.m, self.modulus
        table = []
        cur = [1] + [0] * (m - 1)
        for _ in range(2 * m - 1):
            table.append(tuple(cur))
            # multiply by x
            carry = cur[-1]
            cur = [0] + cur[:-1]
            if carry:
                for i in range(m):
                    cur[i] = (cur[i] - carry * self.f_lift[i]) % mod
        return table

    def _poly_eval(self, coeffs_of_elem, point):
        """Evaluate an integer polynomial (low-first) at a ring element."""
        acc = self.zero()
        for c in reversed(coeffs_of_elem):
            acc = acc * point + self.from_int(int(c))
        return acc

    def _hensel_frobenius(self):
        """sigma(x) as an element: Hensel root of f_lift starting at x^p."""
        if self.m == 1:
            return (0,)
        x = WittElem(self, (0, 1) + (0,) * (self.m - 2))
        y = x ** self.p
        for _ in range(self.n.bit_length() + 2):
            fy = self._poly_eval(self.f_lift, y)
            if fy.is_zero():
                break
            dfy = self._poly_eval(
                [i * self.f_lift[i] for i in range(1, self.m + 1)], y
            )
            y = y - fy * dfy.inverse()
        if not self._poly_eval(self.f_lift, y).is_zero():
            raise HenselFailure("Frobenius image did not converge")
        return y.coeffs

    def _build_frob_matrix(self):
        """Rows of sigma in the power basis: row i = frob_image^i."""
        rows = []
        cur = self.one()
        frob = WittElem(self, self._frob_vec)
        for _ in range(self.m):
            rows.append(cur.coeffs)
            cur = cur * frob
        return tuple(rows)

    # -- element constructors --------------------------------------------------

    def zero(self):
        return WittElem(self, (0,) * self.m)

    def one(self):
        return WittElem(self, (1,) + (0,) * (self.m - 1))

    def gen(self):
        """The residue x-hat (generator of the residue extension)."""
        if self.m == 1:
            return self.one()
        return WittElem(self, (0, 1) + (0,) * (self.m - 2))

    def from_int(self, k):
        return WittElem(self, (k % self.modulus,) + (0,) * (self.m - 1))

    def from_coeffs(self, coeffs):
        coeffs = tuple(int(c) % self.modulus for c in coeffs)
        if len(coeffs) != self.m:
            raise ValueError(f"expected {self.m} coefficients")
        return WittElem(self, coeffs)

    def elements(self):
        """All q^n elements; only usable at desk scale."""
        from itertools import product

        for tup in product(range(self.modulus), repeat=self.m):
            yield WittElem(self, tup)

    def residue_elements(self):
        """Representatives of the residue field (coefficients < p)."""
        from itertools import product

        for tup in product(range(self.p), repeat=self.m):
            yield WittElem(self, tup)

    def random(self, rng):
        return WittElem(self, tuple(int(rng.randrange(self.modulus)) for _ in range(self.m)))

    def frobenius_elem(self):
        return WittElem(self, self._frob_vec)

    # -- structure -------------------------------------------------------------

    def at_level(self, level):
        """The ring with the same residue field at a different truncation level."""
        if level < 1:
            raise BadLevel(f"level {level} < 1")
        return make_witt_ring(self.p, level, self.m, self.f_res)

    def teichmuller(self, a):
        """Multiplicative lift: the fixpoint of y -> y^q above a's residue."""
        y = a
        for _ in range(self.n + 2):
            z = y ** self.q
            if z == y:
                return y
            y = z
        raise HenselFailure("Teichmuller iteration did not stabilize")

    def descriptor(self):
        return {"p": self.p, "n": self.n, "m": self.m, "f_res": list(self.f_res)}

    def __repr__(self):
        return f"W_{self.n}(F_{self.q})"

    def __eq__(self, other):
        return self is other

    def __hash__(self):
        return id(self)


def make_witt_ring(p, n, m, f_res):
    """Construct (and cache) W_n(F_{p^m}) with the given residue polynomial.

    f_res may be given as a coefficient sequence (low degree first) or as the
    default None to pick the first irreducible polynomial of degree m.
    """
    if f_res is None:
        f_res = find_irreducible(p, m) if m > 1 else (0, 1)
    key = (p, n, m, tuple(int(c) % p for c in f_res))
    ring = _RING_REGISTRY.get(key)
    if ring is None:
        ring = WittRing(p, n, m, key[3])
        _RING_REGISTRY[key] = ring
    return ring


class WittElem:
    """An element of W_n(F_{p^m}), immutable."""

    __slots__ = ("ring", "coeffs")

    def __init__(self, ring, coeffs):
        self.ring = ring
        self.coeffs = tuple(int(c) % ring.modulus for c in coeffs)

    # -- arithmetic ------------------------------------------------------------

    def _check(self, other):
        if isinstance(other, int):
            return self.ring.from_int(other)
        if not isinstance(other, WittElem):
            return None
        if other.ring is not self.ring:
            raise ValueError("ring mismatch")
        return other

    def __add__(self, other):
        other = self._check(other)
        if other is None:
            return NotImplemented
        mod = self.ring.modulus
        return WittElem(self.ring, tuple((a + b) % mod for a, b in zip(self.coeffs, other.coeffs)))

    __radd__ = __add__

    def __neg__(self):
        mod = self.ring.modulus
        return WittElem(self.ring, tuple(-a % mod for a in self.coeffs))

    def __sub__(self, other):
        other = self._check(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._check(other)
        if other is None:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        other = self._check(other)
        if other is None:
            return NotImplemented
        ring = self.ring
        m, mod = ring.m, ring.modulus
        if m == 1:
            return WittElem(ring, ((self.coeffs[0] * other.coeffs[0]) % mod,))
        a, b = self.coeffs, other.coeffs
        out = [0] * m
        table = ring._mul_table
        for i in range(m):
            ai = a[i]
            if not ai:
                continue
            for j in range(m):
                bj = b[j]
                if not bj:
                    continue
                t = table[i + j]
                c = ai * bj
                for k in range(m):
                    out[k] += c * t[k]
        return WittElem(ring, tuple(v % mod for v in out))

    __rmul__ = __mul__

    def __pow__(self, e):
        if e < 0:
            return self.inverse() ** (-e)
        r = self.ring.one()
        base = self
        while e:
            if e & 1:
                r = r * base
            base = base * base
            e >>= 1
        return r

    def __eq__(self, other):
        if isinstance(other, int):
            other = self.ring.from_int(other)
        return isinstance(other, WittElem) and other.ring is self.ring and other.coeffs == self.coeffs

    def __hash__(self):
        return hash((id(self.ring), self.coeffs))

    def is_zero(self):
        return all(c == 0 for c in self.coeffs)

    def valuation(self):
        """Largest v with p^v dividing every coefficient (n if zero)."""
        p, n = self.ring.p, self.ring.n
        if self.is_zero():
            return n
        v = n
        for c in self.coeffs:
            if c == 0:
                continue
            w = 0
            while c % p == 0:
                c //= p
                w += 1
            v = min(v, w)
        return v

    def is_unit(self):
        return self.valuation() == 0

    def unit_part(self):
        """u with self = u * p^v; canonical (coefficient-wise division)."""
        v = self.valuation()
        if v >= self.ring.n:
            raise ZeroDivisionError("zero has no unit part")
        pv = self.ring.p ** v
        return WittElem(self.ring, tuple(c // pv for c in self.coeffs))

    def inverse(self):
        key = self.coeffs
        cached = self.ring._inv_cache.get(key)
        if cached is not None:
            return cached
        if not self.is_unit():
            raise ZeroDivisionError(f"{self} is not a unit")
        ring = self.ring
        # invert the residue with Fermat, then Hensel-lift
        res = WittElem(ring, tuple(c % ring.p for c in self.coeffs))
        b = res ** (ring.q - 2) if ring.q > 2 else res
        for _ in range(ring.n.bit_length() + 1):
            b = b * (ring.from_int(2) - self * b)
        if not (self * b == ring.one()):
            raise HenselFailure("inverse lift failed")
        ring._inv_cache[key] = b
        return b

    def exact_div_p(self, k):
        """Divide by p^k, requiring exact coefficient divisibility."""
        pk = self.ring.p ** k
        if any(c % pk for c in self.coeffs):
            raise ValueError(f"element {self.coeffs} is not divisible by p^{k}")
        return WittElem(self.ring, tuple(c // pk for c in self.coeffs))

    def __repr__(self):
        return f"W({self.coeffs})"


def frobenius(a, power=1):
    """The Witt Frobenius sigma (or an iterate) applied to an element."""
    ring = a.ring
    m, mod = ring.m, ring.modulus
    vec = a.coeffs
    for _ in range(power % m if m > 1 else 0):
        rows = ring._frob_mat
        vec = tuple(sum(vec[i] * rows[i][k] for i in range(m)) % mod for k in range(m))
    return WittElem(ring, vec)


def reduce_level(a, level):
    """Coefficient-wise reduction to W_{level}; commutes with sigma and +,*."""
    ring = a.ring
    if level > ring.n or level < 1:
        raise BadLevel(f"cannot reduce from level {ring.n} to {level}")
    target = ring.at_level(level)
    return WittElem(target, tuple(c % target.modulus for c in a.coeffs))


def lift_level(a, level):
    """Minimal coefficient lift to W_{level} (level >= current)."""
    ring = a.ring
    if level < ring.n:
        raise BadLevel(f"lift target {level} below current level {ring.n}")
    target = ring.at_level(level)
    return WittElem(target, a.coeffs)


def extension_ring(ring, e):
    """W_n(F_{q^e}) together with the embedding W_n(F_q) -> W_n(F_{q^e}).

    The embedding is the unique ring map over Z/p^n; it automatically
    commutes with the Frobenius on both sides.  Returns (big_ring, embed).
    """
    if e == 1:
        return ring, lambda a: a
    me = ring.m * e
    big = make_witt_ring(ring.p, ring.n, me, None)
    # find the root of f_res in the residue field of `big`, then Hensel-lift
    root = None
    for z in big.residue_elements():
        fz = big._poly_eval(ring.f_res, z)
        if all(c % big.p == 0 for c in fz.coeffs):
            root = z
            break
    if root is None:
        raise HenselFailure("no residue root found for subfield embedding")
    y = root
    for _ in range(big.n.bit_length() + 2):
        fy = big._poly_eval(ring.f_lift, y)
        if fy.is_zero():
            break
        dfy = big._poly_eval([i * ring.f_lift[i] for i in range(1, ring.m + 1)], y)
        y = y - fy * dfy.inverse()
    if not big._poly_eval(ring.f_lift, y).is_zero():
        raise HenselFailure("embedding root did not lift")
    powers = [big.one()]
    for _ in range(ring.m - 1):
        powers.append(powers[-1] * y)

    def embed(a):
        acc = big.zero()
        for c, pw in zip(a.coeffs, powers):
            acc = acc + big.from_int(c) * pw
        return acc

    return big, embed
