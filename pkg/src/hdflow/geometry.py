"""Smooth log pairs (X_n, D_n)/W_n presented as affine chart covers.

A chart is Spec W_n[t_1..t_d][1/h] with a coordinate-aligned divisor: each
component is a monic polynomial in a single coordinate.  Overlaps are
presented as further localizations of a host chart (the smaller chart id),
and every other chart of the overlap supplies its coordinates as fractions
in the host coordinates.  All section arithmetic is exact.

Log 1-forms on a chart are free with generators dt_j / G_j where G_j is the
product of the divisor components in t_j; forms are stored as coefficient
fractions against these generators, so divisor poles never appear
explicitly.
"""

from __future__ import annotations

from .sections import Frac, Poly, SectionRing, subs_poly
from .witt import lift_level


class ParseError(ValueError):
    pass


class UnknownOverlap(KeyError):
    pass


class ReductionMismatch(ValueError):
    pass


class Chart:
    """One affine chart of a smooth log pair."""

    def __init__(self, cid, coords, h, divisor):
        self.cid = cid
        self.coords = tuple(coords)
        self.dim = len(self.coords)
        self.h = h
        # divisor: list of (var_index, monic Poly univariate in that variable)
        self.divisor = list(divisor)
        self.ring = h.ring
        self.sr = SectionRing(self.ring, self.coords, h)
        self._G = None

    def log_denominators(self):
        """G_j, the product of divisor components in coordinate j (or 1)."""
        if self._G is None:
            G = []
            for j in range(self.dim):
                g = self.sr.poly_const(1)
                for (var, comp) in self.divisor:
                    if var == j:
                        g = g * comp
                G.append(g)
            self._G = G
        return self._G

    def __repr__(self):
        return f"Chart({self.cid})"


class Region:
    """An intersection U_iota, hosted in the coordinates of its smallest chart."""

    def __init__(self, cover, cids):
        self.cover = cover
        self.cids = tuple(sorted(set(cids)))
        self.host = cover.chart(self.cids[0])
        if len(self.cids) == 1:
            self.sr = self.host.sr
        elif len(self.cids) == 2:
            self.sr = cover.pair_sr(self.cids[0], self.cids[1])
        else:
            loc = self.host.h
            for c in self.cids[1:]:
                loc = loc * cover.extra(self.host.cid, c)
            self.sr = SectionRing(self.host.ring, self.host.coords, loc)
        self._images = {}
        self._form_mats = {}

    def coord_images(self, cid):
        """The coordinates of chart `cid` as sections of this region."""
        imgs = self._images.get(cid)
        if imgs is None:
            if cid == self.host.cid:
                imgs = [self.sr.var(v) for v in self.host.coords]
            else:
                raw = self.cover.images(cid, self.host.cid)
                hvars = [self.sr.var(v) for v in self.host.coords]
                imgs = [f.subs(hvars, self.sr) for f in raw]
            self._images[cid] = imgs
        return imgs

    def pull_section(self, cid, f):
        """Restrict a section of chart `cid` (a Frac over its sr) to the region."""
        return f.subs(self.coord_images(cid), self.sr)

    def pull_poly(self, cid, poly):
        return subs_poly(poly, self.coord_images(cid), self.sr)

    def form_matrix(self, cid):
        """Matrix J with gen^{cid}_l = sum_k J[l][k] gen^{host}_k on the region."""
        J = self._form_mats.get(cid)
        if J is not None:
            return J
        chart = self.cover.chart(cid)
        host = self.host
        if cid == host.cid:
            one = self.sr.one()
            zero = self.sr.zero()
            J = [[one if l == k else zero for k in range(host.dim)] for l in range(chart.dim)]
        else:
            imgs = self.coord_images(cid)
            Gc = [self.pull_poly(cid, g) for g in chart.log_denominators()]
            Gh = [self.pull_poly(host.cid, g) for g in host.log_denominators()]
            J = []
            for l in range(chart.dim):
                inv = Gc[l].inverse()
                row = []
                for k in range(host.dim):
                    row.append(imgs[l].deriv(k) * Gh[k] * inv)
                J.append(row)
        self._form_mats[cid] = J
        return J

    def __repr__(self):
        return f"Region({'&'.join(self.cids)})"


class Cover:
    """A finite affine chart cover of a smooth log pair over W_n."""

    def __init__(self, ring, charts, images, extras):
        self.ring = ring
        self.charts = list(charts)
        self._by_id = {c.cid: c for c in self.charts}
        if len(self._by_id) != len(self.charts):
            raise ParseError("duplicate chart ids")
        self._images = dict(images)   # (src_cid, dst_cid) -> [Frac in dst coordinates]
        self._extras = dict(extras)   # (host_cid, other_cid) -> Poly over host sr
        self._regions = {}
        self._pair_srs = {}
        self._levels = {ring.n: self}

    # -- accessors ---------------------------------------------------------------

    @property
    def level(self):
        return self.ring.n

    def chart(self, cid):
        try:
            return self._by_id[cid]
        except KeyError:
            raise UnknownOverlap(f"unknown chart {cid}") from None

    def chart_ids(self):
        return [c.cid for c in self.charts]

    def images(self, src, dst):
        try:
            return self._images[(src, dst)]
        except KeyError:
            raise UnknownOverlap(f"no transition {src} -> {dst}") from None

    def extra(self, host, other):
        try:
            return self._extras[(host, other)]
        except KeyError:
            raise UnknownOverlap(f"no overlap localizer for ({host},{other})") from None

    def overlaps(self, size):
        """All sorted chart-id tuples of the given size with declared overlaps."""
        from itertools import combinations

        ids = self.chart_ids()
        out = []
        for tup in combinations(ids, size):
            if all((tup[0], c) in self._extras for c in tup[1:]):
                out.append(tup)
        return out

    def pair_sr(self, host, other):
        """Section ring of the overlap {host, other} in host coordinates."""
        key = (host, other)
        sr = self._pair_srs.get(key)
        if sr is None:
            chart = self.chart(host)
            sr = SectionRing(self.ring, chart.coords, chart.h * self.extra(host, other))
            self._pair_srs[key] = sr
        return sr

    def region(self, cids):
        key = tuple(sorted(set(cids)))
        reg = self._regions.get(key)
        if reg is None:
            reg = Region(self, key)
            self._regions[key] = reg
        return reg

    # -- level change --------------------------------------------------------------

    def at_level(self, level):
        """Coefficient-wise reduction (or minimal lift) of the whole cover."""
        cov = self._levels.get(level)
        if cov is not None:
            return cov
        move = (lambda p: p.reduce_level(level)) if level < self.level else (lambda p: p.lift_level(level))
        ring = self.ring.at_level(level)
        charts = [
            Chart(c.cid, c.coords, move(c.h), [(v, move(g)) for (v, g) in c.divisor])
            for c in self.charts
        ]
        extras = {k: move(p) for k, p in self._extras.items()}
        cov = Cover(ring, charts, images={}, extras=extras)
        for (src, dst), imgs in self._images.items():
            sr = cov.pair_sr(dst, src)
            cov._images[(src, dst)] = [Frac(sr, move(f.numer), f.e) for f in imgs]
        cov._levels = self._levels
        self._levels[level] = cov
        return cov

    def __repr__(self):
        return f"Cover({','.join(self.chart_ids())} over {self.ring})"


# ---------------------------------------------------------------------------
# validation


def validate_cover(cover):
    """Check all cover invariants; returns a list of failure strings."""
    failures = []
    ring = cover.ring
    for c in cover.charts:
        if c.h.reduce_level(1).is_zero():
            failures.append(f"chart {c.cid}: localizer vanishes mod p")
        for (var, g) in c.divisor:
            cos = g.univariate_coeffs(var) if _is_univariate(g, var) else None
            if cos is None:
                failures.append(f"chart {c.cid}: divisor component not aligned to {c.coords[var]}")
                continue
            if not cos[-1].is_unit() or not (cos[-1] == ring.one()):
                failures.append(f"chart {c.cid}: divisor component not monic")
        # pairwise coprime (reduced) within each coordinate, mod p
        for j in range(c.dim):
            comps = [g for (v, g) in c.divisor if v == j]
            for a in range(len(comps)):
                for b in range(a + 1, len(comps)):
                    if not _coprime_mod_p(comps[a], comps[b], j):
                        failures.append(
                            f"chart {c.cid}: divisor components share a root mod p in {c.coords[j]}"
                        )
                if not _separable_mod_p(comps[a], j):
                    failures.append(f"chart {c.cid}: divisor component not reduced mod p")
    # transition consistency
    for (a, b) in cover.overlaps(2):
        try:
            reg = cover.region((a, b))
            ia = reg.coord_images(a)
            ib = reg.coord_images(b)
        except Exception as exc:  # noqa: BLE001 - report, never raise
            failures.append(f"overlap ({a},{b}): transition not expressible: {exc}")
            continue
        # round trip: express a-coords via b then back
        try:
            back = cover.images(b, a)  # b-coords in a-coords
            raw_ab = cover.images(a, b)  # a-coords in b-coords
            for j, f in enumerate(raw_ab):
                got = f.subs(ib, reg.sr)
                if not (got == ia[j]):
                    failures.append(f"overlap ({a},{b}): transitions are not mutually inverse")
                    break
        except UnknownOverlap:
            failures.append(f"overlap ({a},{b}): missing reverse transition")
        # divisor compatibility: each component is a unit or matches mod units
        for src, dst in ((a, b), (b, a)):
            chart = cover.chart(src)
            for (var, g) in chart.divisor:
                img = reg.pull_poly(src, g)
                if not _divisor_component_ok(reg, cover.chart(dst), img):
                    failures.append(
                        f"overlap ({a},{b}): divisor of {src} does not match {dst}"
                    )
    for tri in cover.overlaps(3):
        reg = cover.region(tri)
        a = tri[0]
        for c in tri[1:]:
            direct = reg.coord_images(c)
            for mid in tri:
                if mid in (a, c):
                    continue
                via = [f.subs(reg.coord_images(mid), reg.sr) for f in cover.images(c, mid)]
                for f, g in zip(direct, via):
                    if not (f == g):
                        failures.append(f"triple {tri}: restriction not functorial via {mid}")
                        break
    return failures


def _is_univariate(g, var):
    return all(sum(e) == e[var] for e in g.terms)


def _coprime_mod_p(g1, g2, var):
    from .witt import _fp_gcd

    r = g1.ring
    if r.m > 1:
        # compare over the residue extension by resultant-free gcd on coefficients:
        # desk-scale check via common roots in the residue field
        lvl1 = r.at_level(1)
        roots1 = {z.coeffs for z in lvl1.residue_elements() if g1.reduce_level(1).eval_elem(_point(lvl1, var, z, g1.nvars)).is_zero()}
        roots2 = {z.coeffs for z in lvl1.residue_elements() if g2.reduce_level(1).eval_elem(_point(lvl1, var, z, g2.nvars)).is_zero()}
        return not (roots1 & roots2)
    c1 = [c.coeffs[0] % r.p for c in g1.reduce_level(1).univariate_coeffs(var)]
    c2 = [c.coeffs[0] % r.p for c in g2.reduce_level(1).univariate_coeffs(var)]
    return len(_fp_gcd(c1, c2, r.p)) == 1


def _separable_mod_p(g, var):
    from .witt import _fp_gcd

    r = g.ring
    if r.m > 1:
        lvl1 = r.at_level(1)
        gg = g.reduce_level(1)
        dg = gg.deriv(var)
        for z in lvl1.residue_elements():
            pt = _point(lvl1, var, z, g.nvars)
            if gg.eval_elem(pt).is_zero() and dg.eval_elem(pt).is_zero():
                return False
        return True
    c1 = [c.coeffs[0] % r.p for c in g.reduce_level(1).univariate_coeffs(var)]
    d1 = [(i * c1[i]) % r.p for i in range(1, len(c1))]
    while d1 and d1[-1] == 0:
        d1.pop()
    if not d1:
        return len(c1) <= 2
    return len(_fp_gcd(c1, d1, r.p)) == 1


def _point(ring, var, z, nvars):
    pt = [ring.zero()] * nvars
    pt[var] = z
    return pt


def _divisor_component_ok(reg, dst_chart, f):
    """A pulled divisor component must be a unit on the overlap or match a
    component of the destination chart up to a unit."""
    try:
        f.inverse()
        return True
    except ZeroDivisionError:
        pass
    loc = reg.sr.loc
    for (var, g) in dst_chart.divisor:
        gi = reg.pull_poly(dst_chart.cid, g)
        # f = unit * gi <=> the exact quotient exists and is invertible
        a = f.numer * (loc ** gi.e) if gi.e else f.numer
        b = gi.numer * (loc ** f.e) if f.e else gi.numer
        q = a.exact_div(b)
        if q is None:
            continue
        try:
            Frac(reg.sr, q, 0).inverse()
            return True
        except ZeroDivisionError:
            continue
    return False


# ---------------------------------------------------------------------------
# log one-forms


def log_one_forms(chart):
    """Free generators of Omega^1(log D) on the chart.

    Generator j is dt_j / G_j with G_j the product of the divisor components
    living in coordinate j; returns the list of G_j.  A log 1-form is stored
    as coefficient sections against these generators.
    """
    return chart.log_denominators()


def d_log_section(chart, f):
    """Exterior derivative of a section, as log-form coefficients.

    Returns [c_1..c_d] with df = sum_j c_j * gen_j, i.e. c_j = G_j * df/dt_j.
    """
    G = chart.log_denominators()
    return [f.deriv(j) * Frac(chart.sr, G[j], 0) for j in range(chart.dim)]


# ---------------------------------------------------------------------------
# thickenings


class Thickening:
    """A square-zero extension of covers: level n inside level n+1."""

    def __init__(self, big, small):
        if big.level != small.level + 1:
            raise ReductionMismatch("thickening must raise the level by one")
        self.big = big
        self.small = small
        self.n = small.level
        self.ideal_exponent = small.level  # ideal (p^n) in W_{n+1}

    def __repr__(self):
        return f"Thickening(W_{self.small.level} in W_{self.big.level})"


def thicken(cover, big=None):
    """Thicken a cover one level; canonical minimal lift when no data given."""
    if big is None:
        big = cover.at_level(cover.level + 1)
    else:
        red = big.at_level(cover.level)
        if not covers_equal(red, cover):
            raise ReductionMismatch("provided data does not reduce to the base cover")
    return Thickening(big, cover)


def covers_equal(c1, c2):
    if c1.chart_ids() != c2.chart_ids() or c1.ring is not c2.ring:
        return False
    for a, b in zip(c1.charts, c2.charts):
        if a.coords != b.coords or not (a.h == b.h):
            return False
        if len(a.divisor) != len(b.divisor):
            return False
        for (v1, g1), (v2, g2) in zip(a.divisor, b.divisor):
            if v1 != v2 or not (g1 == g2):
                return False
    if set(c1._images) != set(c2._images):
        return False
    if set(c1._extras) != set(c2._extras):
        return False
    for key in c1._extras:
        if not (c1._extras[key] == c2._extras[key]):
            return False
    for key in c1._images:
        for f, g in zip(c1._images[key], c2._images[key]):
            # cross-multiplied comparison; the localizers agree by the check above
            loc = f.sr.loc
            a = f.numer * (loc ** g.e) if g.e else f.numer
            b = g.numer * (loc ** f.e) if f.e else g.numer
            if not (a == b):
                return False
    return True


def perturb_cover(cover, eta, exponent):
    """The cover `cover + p^exponent * eta` for a log-tangent-valued 1-cochain.

    eta maps sorted chart-id pairs (a, b) to lists of coefficients c_k, the
    sections (over the pair region, host a) of the vector field
    v = sum_k c_k G_k d/dt_k in host coordinates.  The gluing of the pair is
    twisted by the square-zero automorphism t -> t + p^exponent v(t): the
    images of b's coordinates gain p^e v(.) and the reverse images lose the
    transported shift.  Exact because p^{2 exponent} = 0 at this level.
    """
    ring = cover.ring
    if 2 * exponent < ring.n:
        raise ValueError("perturbation is not square-zero at this level")
    scale = ring.from_int(ring.p ** exponent)
    charts = [Chart(c.cid, c.coords, c.h, list(c.divisor)) for c in cover.charts]
    out = Cover(ring, charts, images={}, extras=dict(cover._extras))
    for (src, dst), imgs in cover._images.items():
        key = (dst, src) if dst < src else (src, dst)
        coeffs = eta.get(key)
        sr = out.pair_sr(dst, src)
        if coeffs is None:
            out._images[(src, dst)] = [Frac(sr, f.numer, f.e) for f in imgs]
            continue
        host_cid = key[0]
        reg = cover.region(key)
        host = cover.chart(host_cid)
        G = [reg.pull_poly(host_cid, g) for g in host.log_denominators()]
        if dst == host_cid:
            # forward: rho'(t^src_k) = rho(t^src_k) + p^e * v(rho(t^src_k))
            new = []
            for f in imgs:
                fr = Frac(reg.sr, f.numer, f.e)
                delta = reg.sr.zero()
                for k, c in enumerate(coeffs):
                    delta = delta + c * G[k] * fr.deriv(k)
                shifted = fr + scale * delta
                new.append(Frac(sr, shifted.numer, shifted.e))
            out._images[(src, dst)] = new
        else:
            # reverse: rho'(t^host_j) = rho(t^host_j) - p^e * rho(v(t^host_j))
            new = []
            raw = cover.images(key[0], key[1])  # host coords in dst coords
            reg_imgs = [Frac(cover.pair_sr(dst, src), f.numer, f.e) for f in raw]
            for j, f in enumerate(reg_imgs):
                shift = coeffs[j] * G[j]  # v(t_j) over the host region
                pulled = subs_poly(shift.numer, reg_imgs, f.sr)
                if shift.e:
                    pulled = pulled * (
                        subs_poly(shift.sr.loc, reg_imgs, f.sr).inverse() ** shift.e
                    )
                new.append(Frac(sr, f.numer, f.e) - scale * Frac(sr, pulled.numer, pulled.e))
            out._images[(src, dst)] = new
    return out


def thickening_diff(big1, big2, exponent):
    """Extract the log-tangent 1-cochain eta with big2 = big1 + p^exponent eta.

    Both covers must reduce to the same lower level.  Only relative
    dimension 1 is supported here.
    """
    eta = {}
    for (a, b) in big1.overlaps(2):
        reg = big1.region((a, b))
        host = big1.chart(a)
        if host.dim != 1:
            raise NotImplementedError("thickening differences only for curves")
        f1 = reg.coord_images(b)[0]
        reg2 = big2.region((a, b))
        f2 = reg2.coord_images(b)[0]
        diff = (Frac(reg.sr, f2.numer, f2.e) - f1).exact_div_p(exponent)
        G = reg.pull_poly(a, host.log_denominators()[0])
        c = diff * (G * f1.deriv(0)).inverse()
        eta[(a, b)] = [c.reduce_level(big1.level - exponent)]
    return eta


# ---------------------------------------------------------------------------
# standard covers


def projective_line(ring, divisor_points=(), zero_in_divisor=None):
    """The 2-chart cover of P^1 over W_n.

    Chart "0" has coordinate t, chart "1" has coordinate s = 1/t.  Divisor
    points are ring elements (with distinct residues) or the string "inf";
    each finite nonzero point a contributes t - a to chart 0 and s - 1/a to
    chart 1, the point 0 contributes t and invades only chart 0, and "inf"
    contributes s.
    """
    del zero_in_divisor
    t = Poly.from_univariate(ring, [0, 1])
    one = Poly.from_univariate(ring, [1])
    div0 = []
    div1 = []
    for a in divisor_points:
        if a == "inf":
            div1.append((0, t))
            continue
        if isinstance(a, int):
            a = ring.from_int(a)
        if a.is_zero():
            div0.append((0, t))
        else:
            div0.append((0, Poly.from_univariate(ring, [-a, ring.one()])))
            div1.append((0, Poly.from_univariate(ring, [-a.inverse(), ring.one()])))
    c0 = Chart("0", ("t",), one, div0)
    c1 = Chart("1", ("s",), one, div1)
    cover = Cover(ring, [c0, c1], images={}, extras={("0", "1"): t, ("1", "0"): Poly.from_univariate(ring, [0, 1])})
    sr01 = cover.pair_sr("0", "1")
    sr10 = cover.pair_sr("1", "0")
    cover._images[("1", "0")] = [Frac(sr01, sr01.poly_const(1), 1)]
    cover._images[("0", "1")] = [Frac(sr10, sr10.poly_const(1), 1)]
    return cover


def legendre_cover(ring, lam):
    """The 2-chart cover of (P^1, {0, 1, lam, inf}) with <= 2 divisor points
    per chart, suitable for chartwise Frobenius liftings.

    Chart "0": coordinate t, localizer t - lam, divisor {t, t-1}.
    Chart "1": coordinate s = 1/t, localizer s - 1, divisor {s, s - 1/lam}.
    """
    if isinstance(lam, int):
        lam = ring.from_int(lam)
    lam_inv = lam.inverse()
    for bad in (ring.zero(), ring.one()):
        from .witt import reduce_level as _rl

        if _rl(lam, 1) == _rl(bad, 1):
            raise ParseError("lambda must avoid 0 and 1 mod p")
    t = Poly.from_univariate(ring, [0, 1])
    c0 = Chart(
        "0",
        ("t",),
        Poly.from_univariate(ring, [-lam, ring.one()]),
        [(0, t), (0, Poly.from_univariate(ring, [-ring.one(), ring.one()]))],
    )
    s = Poly.from_univariate(ring, [0, 1])
    c1 = Chart(
        "1",
        ("s",),
        Poly.from_univariate(ring, [-ring.one(), ring.one()]),
        [(0, s), (0, Poly.from_univariate(ring, [-lam_inv, ring.one()]))],
    )
    extra01 = Poly.from_univariate(ring, [0, 1]) * Poly.from_univariate(ring, [-ring.one(), ring.one()])
    extra10 = Poly.from_univariate(ring, [0, 1]) * Poly.from_univariate(ring, [-lam_inv, ring.one()])
    cover = Cover(ring, [c0, c1], images={}, extras={("0", "1"): extra01, ("1", "0"): extra10})
    sr01 = cover.pair_sr("0", "1")  # loc = (t-lam) t (t-1)
    sr10 = cover.pair_sr("1", "0")  # loc = (s-1) s (s-1/lam)
    # s = 1/t = (t-lam)(t-1) / loc01 ; t = 1/s = (s-1)(s-1/lam) / loc10
    num01 = Poly.from_univariate(ring, [-lam, ring.one()]) * Poly.from_univariate(ring, [-ring.one(), ring.one()])
    num10 = Poly.from_univariate(ring, [-ring.one(), ring.one()]) * Poly.from_univariate(ring, [-lam_inv, ring.one()])
    cover._images[("1", "0")] = [Frac(sr01, num01, 1)]
    cover._images[("0", "1")] = [Frac(sr10, num10, 1)]
    return cover


def multi_cover(cover, copies=2):
    """The union of a cover with disjoint copies of itself (same opens).

    Used for refinement-invariance tests and for gluing data indexed by
    several chartwise choices over the same open; copy k of a chart gets k
    tildes appended to its id.
    """
    ring = cover.ring
    ids = cover.chart_ids()
    tag = lambda cid, k: cid + "~" * k
    charts = [
        Chart(tag(c.cid, k), c.coords, c.h, list(c.divisor))
        for k in range(copies)
        for c in cover.charts
    ]
    extras = {}
    for a in ids:
        one = Poly.const(ring, cover.chart(a).dim, ring.one())
        for k1 in range(copies):
            for k2 in range(copies):
                if k1 != k2:
                    extras[(tag(a, k1), tag(a, k2))] = one
    for (a, b), ex in cover._extras.items():
        for k1 in range(copies):
            for k2 in range(copies):
                extras[(tag(a, k1), tag(b, k2))] = ex
    out = Cover(ring, charts, images={}, extras=extras)
    for a in ids:
        chart = cover.chart(a)
        for k1 in range(copies):
            for k2 in range(copies):
                if k1 == k2:
                    continue
                sr = out.pair_sr(tag(a, k2), tag(a, k1))
                out._images[(tag(a, k1), tag(a, k2))] = [sr.var(v) for v in chart.coords]
    for (src, dst), imgs in cover._images.items():
        for k1 in range(copies):
            for k2 in range(copies):
                sr = out.pair_sr(tag(dst, k2), tag(src, k1))
                out._images[(tag(src, k1), tag(dst, k2))] = [Frac(sr, f.numer, f.e) for f in imgs]
    return out


def double_cover(cover):
    return multi_cover(cover, 2)
