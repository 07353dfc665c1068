"""Windowed Cech hypercohomology of chart-realized sheaf complexes.

The Cech resolution uses the alternating model (strictly increasing chart
tuples); cocycles produced from systems of local data over full index
products are projected to it.  The double complex follows the fixed sign
conventions: the vertical differential is the alternating-sign restriction
delta, the horizontal one is (-1)^p nabla on row p.

Windows.  Cochain representatives live in the core window: denominator
exponent <= e and numerator degree <= w + e*deg(loc) on each region.  The
differential and the restriction maps can leave the core (restricting a
degree-a chart section to an overlap forces denominators ~ loc^a), so every
region also carries a bigger assembly space B = fringe + core, split by
exact division by loc^K; the split is triangular, hence exact.  Cohomology
in a window is ker(d|core) / (im(d on all of B) intersected with core); the
intersection is read off the Howell form with fringe coordinates leading.
Dimensions are certified by doubling the window until they repeat; nothing
is ever truncated silently - sections that escape their space raise
WindowOverflow.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from . import linalg
from .bundles import fm_add, fm_mul, fm_neg, fm_zero
from .linalg import NO_SOLUTION, RingMatrix
from .sections import Frac, Poly

DEFAULT_WINDOW = (8, 4)
MAX_DOUBLINGS = 3


class WindowUnstable(RuntimeError):
    pass


class WindowOverflow(ValueError):
    """A section does not fit the coordinate window."""


class NotCocycle:
    def __init__(self, defect=None):
        self.defect = defect

    def __repr__(self):
        return "NotCocycle"


class Coboundary:
    def __init__(self, witness):
        self.witness = witness

    def __repr__(self):
        return "Coboundary"


# ---------------------------------------------------------------------------
# region coordinate spaces


class RegionSpace:
    """Assembly coordinates with a trailing core block.

    Elements are u / loc^Eb with u = r + q loc^K (exact division by the
    monic localizer power, K = Eb - Es): r has degree < K deg(loc) (deep
    denominators) and q degree <= Qmax.  Coordinates are ordered
    [r | q-high | q-low]: the trailing block (deg q <= core_bound) is the
    core window w, e of honest representatives; everything else is fringe
    needed to hold differentials and restrictions exactly.
    """

    def __init__(self, reg, Es, core_bound, Eb, Qmax=None):
        self.reg = reg
        sr = reg.sr
        self.sr = sr
        self.Es = Es
        self.Eb = Eb
        self.core_bound = core_bound
        self.Qmax = core_bound if Qmax is None else max(Qmax, core_bound)
        self.K = Eb - Es
        dl = max(sr.loc.total_degree(), 0)
        self.locdeg = dl
        if sr.nvars != 1 and self.K > 0:
            raise WindowOverflow("fringe windows require one coordinate")
        if sr.nvars != 1:
            self.Qmax = core_bound
        self.rdim = self.K * dl
        self.qdim = (self.Qmax + 1) if sr.nvars == 1 else _simplex_count(core_bound, sr.nvars)
        self.core_dim = (core_bound + 1) if sr.nvars == 1 else self.qdim
        self.fringe_dim = self.rdim + self.qdim - self.core_dim
        self.dim = self.rdim + self.qdim
        self._locK = sr.loc ** self.K if self.K else None

    def _qindex(self, deg):
        # order: q-high first (Qmax..core_bound+1 descending), core last (0..core_bound)
        if deg > self.core_bound:
            return self.rdim + (self.Qmax - deg)
        return self.fringe_dim + deg

    def _split(self, numer):
        """numer = r + q * loc^K; exact since the localizer power is monic."""
        if self.K == 0:
            return None, numer
        q = {}
        rem = numer
        locK = self._locK
        lead_deg = self.K * self.locdeg
        while not rem.is_zero():
            e, c = rem.leading()
            if e[0] < lead_deg:
                break
            qe = (e[0] - lead_deg,)
            q[qe] = c
            rem = rem - Poly(rem.ring, 1, {qe: c}) * locK
        return rem, Poly(numer.ring, 1, q)

    def frac_coords(self, f, core_only=False):
        ring = self.sr.witt
        out = np.zeros((self.dim, ring.m), dtype=np.int64)
        if f.is_zero():
            return out
        if f.e > self.Eb:
            raise WindowOverflow(f"denominator exponent {f.e} > {self.Eb}")
        numer = f.numer * self.sr.loc_pow(self.Eb - f.e) if f.e < self.Eb else f.numer
        if self.sr.nvars != 1:
            idx = self._mono_index()
            for mu, c in numer.terms.items():
                i = idx.get(mu)
                if i is None:
                    raise WindowOverflow("monomial outside window")
                out[self.rdim + i] = c.coeffs
            return out
        r, q = self._split(numer)
        if core_only and r is not None and not r.is_zero():
            raise WindowOverflow("section has fringe support")
        if r is not None:
            for mu, c in r.terms.items():
                if mu[0] >= self.rdim:
                    raise WindowOverflow("fringe overflow")
                out[mu[0]] = c.coeffs
        for mu, c in q.terms.items():
            if mu[0] > self.Qmax:
                raise WindowOverflow(f"numerator degree {mu[0]} > {self.Qmax}")
            if core_only and mu[0] > self.core_bound:
                raise WindowOverflow("section has fringe support")
            out[self._qindex(mu[0])] = c.coeffs
        return out

    def _mono_index(self):
        if not hasattr(self, "_midx"):
            monos = []

            def rec(prefix, left, slots):
                if slots == 0:
                    monos.append(tuple(prefix))
                    return
                for k in range(left + 1):
                    rec(prefix + [k], left - k, slots - 1)

            rec([], self.core_bound, self.sr.nvars)
            self._monos = monos
            self._midx = {mu: i for i, mu in enumerate(monos)}
        return self._midx

    def coords_frac(self, vec):
        ring = self.sr.witt
        if self.sr.nvars != 1:
            self._mono_index()
            terms = {}
            for j, mu in enumerate(self._monos):
                if vec[self.rdim + j].any():
                    terms[mu] = ring.from_coeffs(tuple(int(v) for v in vec[self.rdim + j]))
            return Frac(self.sr, Poly(ring, self.sr.nvars, terms), self.Eb)
        terms = {}
        for i in range(self.rdim):
            if vec[i].any():
                terms[(i,)] = ring.from_coeffs(tuple(int(v) for v in vec[i]))
        poly_r = Poly(ring, 1, terms)
        terms_q = {}
        for deg in range(self.Qmax + 1):
            i = self._qindex(deg)
            if vec[i].any():
                terms_q[(deg,)] = ring.from_coeffs(tuple(int(v) for v in vec[i]))
        poly_q = Poly(ring, 1, terms_q)
        numer = (poly_r + poly_q * self._locK) if self.K else (poly_r + poly_q)
        return Frac(self.sr, numer, self.Eb)


def _simplex_count(bound, nvars):
    from math import comb

    return comb(bound + nvars, nvars)


def _data_margin(cx):
    """Static degree content of the complex's defining data.

    Differentials and transfers multiply sections by the connection,
    transition and frame entries, so the window headroom must dominate
    their degrees; scan them once per complex.
    """
    cached = getattr(cx, "_data_margin", None)
    if cached is not None:
        return cached
    best = 0

    def scan_frac(f):
        nonlocal best
        locdeg = max(f.sr.loc.total_degree(), 1)
        best = max(best, f.numer.total_degree() + (f.e + 1) * locdeg)

    for half in (cx.row, cx.col):
        if half.conn is not None:
            for mats in half.conn.coeffs.values():
                for M in mats:
                    for row in M:
                        for f in row:
                            scan_frac(f)
        for M in half.bundle.transitions.values():
            for row in M:
                for f in row:
                    scan_frac(f)
        for P in half.filt.frames.values():
            for row in P:
                for f in row:
                    scan_frac(f)
    cx._data_margin = best
    return best


# ---------------------------------------------------------------------------
# total complex


def _increasing_tuples(ids, k):
    return list(combinations(ids, k))


def _has_overlaps(cover, iota):
    host = iota[0]
    try:
        for c in iota[1:]:
            cover.extra(host, c)
    except Exception:  # noqa: BLE001
        return False
    return True


class Block:
    def __init__(self, p, q, iota, space, positions, wedges, offset):
        self.p = p
        self.q = q
        self.iota = iota
        self.space = space
        self.positions = positions
        self.wedges = wedges
        self.offset = offset

    @property
    def dim(self):
        return len(self.wedges) * len(self.positions) * self.space.dim


class TotalComplex:
    """The windowed Cech total complex of a SheafComplex."""

    def __init__(self, cx, window, margin=8):
        self.cx = cx
        self.window = window
        data = _data_margin(cx)
        self.margin = margin
        self.cover = cx.cover
        self.ids = self.cover.chart_ids()
        self._blocks = {}
        self._mats = {}
        self._spaces = {}
        w, e = window
        univ = all(c.dim == 1 for c in self.cover.charts)
        maxq = self.cx.max_degree
        self._locdegs = []
        for depth in range(len(self.ids)):
            locdeg = 1
            for iota in _increasing_tuples(self.ids, depth + 1):
                if _has_overlaps(self.cover, iota):
                    locdeg = max(locdeg, self.cover.region(iota).sr.loc.total_degree())
            self._locdegs.append(locdeg)
        params = {}
        for q in range(maxq + 1):
            # per-step convention margin grows with the form degree; the
            # static data content enters each matrix entry once
            mp = margin * (1 + q) + data
            prev_nb = 0
            for depth in range(len(self.ids)):
                locdeg = self._locdegs[depth]
                core_bound = w + e * locdeg
                if not univ:
                    Eb, Qmax = e, core_bound
                elif depth == 0:
                    Eb = e + mp
                    Qmax = core_bound + mp
                else:
                    Eb = e + prev_nb + mp
                    Qmax = prev_nb + mp + e * locdeg
                params[(depth, q)] = (e, core_bound, Eb, Qmax)
                prev_nb = Qmax + (Eb - e) * locdeg + margin
        self._params = params

    def _space(self, iota, q):
        key = (iota, q)
        sp = self._spaces.get(key)
        if sp is None:
            Es, cb, Eb, Qmax = self._params[(len(iota) - 1, q)]
            reg = self.cover.region(iota)
            dl = max(reg.sr.loc.total_degree(), 0)
            sp = RegionSpace(reg, Es, self.window[0] + Es * dl, Eb, Qmax)
            self._spaces[key] = sp
        return sp

    def blocks(self, n):
        bl = self._blocks.get(n)
        if bl is not None:
            return bl
        out = []
        offset = 0
        for p in range(len(self.ids)):
            q = n - p
            if q < 0 or q > self.cx.max_degree:
                continue
            positions = self.cx.positions(q)
            wedges = self.cx.wedge_basis(q)
            if not positions or not wedges:
                continue
            for iota in _increasing_tuples(self.ids, p + 1):
                if not _has_overlaps(self.cover, iota):
                    continue
                b = Block(p, q, iota, self._space(iota, q), positions, wedges, offset)
                out.append(b)
                offset += b.dim
        self._blocks[n] = out
        return out

    def dim(self, n):
        bl = self.blocks(n)
        return (bl[-1].offset + bl[-1].dim) if bl else 0

    def block_map(self, n):
        return {(b.p, b.iota): b for b in self.blocks(n)}

    def core_columns(self, n):
        cols = []
        for b in self.blocks(n):
            per = b.space.dim
            for slot in range(len(b.wedges) * len(b.positions)):
                base = b.offset + slot * per
                cols.extend(range(base + b.space.fringe_dim, base + per))
        return np.array(cols, dtype=np.int64)

    # -- coordinates of symbolic cochains ------------------------------------

    def coords(self, comps, n, core_only=True):
        """Coordinate vector of {(p, iota): {K: matrix}} components."""
        ring = self.cover.ring
        vec = np.zeros((self.dim(n), ring.m), dtype=np.int64)
        bmap = self.block_map(n)
        for (p, iota), data in comps.items():
            b = bmap.get((p, tuple(iota)))
            if b is None:
                if self.cx.quotient:
                    continue  # the projection kills these components
                if any(not e.is_zero() for E in data.values() for row in E for e in row):
                    raise WindowOverflow(f"component at {(p, iota)} has no block")
                continue
            for ki, K in enumerate(b.wedges):
                E = data.get(K)
                if E is None:
                    continue
                if not self.cx.check_membership(b.q, E):
                    raise WindowOverflow(f"section at {(p, iota)} escapes the subsheaf")
                for pi, (r, c) in enumerate(b.positions):
                    coords = b.space.frac_coords(E[r][c], core_only=core_only)
                    base = b.offset + (ki * len(b.positions) + pi) * b.space.dim
                    vec[base : base + b.space.dim] = coords
        return vec

    def components(self, vec, n):
        """Inverse of coords (full matrices; non-coordinate entries zero)."""
        out = {}
        R, C = self.cx.shape()
        for b in self.blocks(n):
            data = {}
            nonzero = False
            for ki, K in enumerate(b.wedges):
                E = fm_zero(b.space.sr, R, C)
                for pi, (r, c) in enumerate(b.positions):
                    base = b.offset + (ki * len(b.positions) + pi) * b.space.dim
                    f = b.space.coords_frac(vec[base : base + b.space.dim])
                    E[r][c] = f
                    if not f.is_zero():
                        nonzero = True
                data[K] = E
            if nonzero:
                out[(b.p, b.iota)] = data
        return out

    # -- the total differential matrix ----------------------------------------

    def matrix(self, n):
        M = self._mats.get(n)
        if M is not None:
            return M
        ring = self.cover.ring
        rows = self.dim(n + 1)
        cols = self.dim(n)
        data = np.zeros((rows, cols, ring.m), dtype=np.int64)
        tmap = self.block_map(n + 1)
        R, C = self.cx.shape()
        for b in self.blocks(n):
            reg = b.space.reg
            host = reg.host
            Ar, Ac = self.cx.region_adapted(reg)
            G = [reg.pull_poly(host.cid, g) for g in host.log_denominators()]
            tb_h = tmap.get((b.p, b.iota))
            hsign = -1 if b.p % 2 else 1
            # vertical targets with cached transfer data and monomial images
            vtargets = []
            for x in self.ids:
                if x in b.iota:
                    continue
                iota2 = tuple(sorted(b.iota + (x,)))
                if not _has_overlaps(self.cover, iota2):
                    continue
                tb2 = tmap.get((b.p + 1, iota2))
                if tb2 is None:
                    continue
                t = iota2.index(x)
                vsign = -1 if t % 2 else 1
                reg2 = self.cover.region(iota2)
                L, Rm, J = self.cx.region_transfer(reg2, host.cid)
                imgs = _mono_images(b.space, reg2, host.cid)
                vtargets.append((tb2, vsign, L, Rm, J, imgs, reg2))
            for ki, K in enumerate(b.wedges):
                wts = [(v[0], v[1], v[2], v[3], _wedge_transform(v[4], K, v[6].sr), v[5]) for v in vtargets]
                for pi, (r, c) in enumerate(b.positions):
                    for mi in range(b.space.dim):
                        col = b.offset + (ki * len(b.positions) + pi) * b.space.dim + mi
                        mono = _basis_frac(b.space, mi)
                        if tb_h is not None:
                            dcomp = _diff_single(self.cx, Ar, Ac, G, b.q, K, r, c, mono, R, C, b.space.sr)
                            _accumulate(data, self, tb_h, dcomp, col, hsign)
                        for (tb2, vsign, L, Rm, wt, imgs) in wts:
                            rest = _restrict_single(L, Rm, wt, imgs[mi], r, c, R, C)
                            _accumulate(data, self, tb2, rest, col, vsign, sparse=True)
        M = RingMatrix(ring, data)
        self._mats[n] = M
        return M


def _basis_frac(space, i):
    sr = space.sr
    ring = sr.witt
    if i < space.fringe_dim:
        return Frac(sr, Poly(ring, 1, {(i,): ring.one()}), space.Eb)
    j = i - space.fringe_dim
    if sr.nvars == 1:
        numer = Poly(ring, 1, {(j,): ring.one()})
    else:
        space._mono_index()
        numer = Poly(ring, sr.nvars, {space._monos[j]: ring.one()})
    return Frac(sr, numer, space.Es)


def _mono_images(space, reg2, src_cid):
    """Pulled images of every basis section of a region space (cached)."""
    cache = getattr(space, "_img_cache", None)
    if cache is None:
        cache = {}
        space._img_cache = cache
    key = reg2.cids
    imgs = cache.get(key)
    if imgs is not None:
        return imgs
    sr2 = reg2.sr
    coords = reg2.coord_images(src_cid)
    if space.sr.nvars == 1:
        tpow = [sr2.one()]
        maxdeg = max(space.fringe_dim, space.core_bound + 1)
        for _ in range(maxdeg):
            tpow.append((tpow[-1] * coords[0]).reduced())
        loc_img = space.sr.loc
        from .sections import subs_poly

        loc2 = subs_poly(loc_img, coords, sr2)
        locinv = loc2.inverse().reduced()
        locinv_Eb = _rpow(locinv, space.Eb)
        locinv_Es = _rpow(locinv, space.Es)
        imgs = []
        for i in range(space.dim):
            if i < space.fringe_dim:
                imgs.append((tpow[i] * locinv_Eb).reduced())
            else:
                imgs.append((tpow[i - space.fringe_dim] * locinv_Es).reduced())
    else:
        imgs = [_basis_frac(space, i).subs(coords, sr2) for i in range(space.dim)]
    cache[key] = imgs
    return imgs


def _rpow(f, k):
    """Frac power with reduction at every step (keeps exponents small)."""
    r = f.sr.one()
    b = f
    while k:
        if k & 1:
            r = (r * b).reduced()
        b = (b * b).reduced()
        k >>= 1
    return r


def _diff_single(cx, Ar, Ac, G, q, K, r, c, mono, R, C, sr):
    """Differential of the single-position section mono * e_{rc} wedge gen_K."""
    out = {}
    for l in range(cx.max_degree):
        if l in K:
            continue
        K2 = tuple(sorted(K + (l,)))
        sign = (-1) ** K2.index(l)
        E = out.get(K2)
        if E is None:
            E = fm_zero(sr, R, C)
            out[K2] = E
        neg = sign < 0
        for rr in range(R):
            a = Ar[l][rr][r]
            if a.is_zero():
                continue
            v = a * mono
            E[rr][c] = E[rr][c] - v if neg else E[rr][c] + v
        for cc in range(C):
            a = Ac[l][c][cc]
            if a.is_zero():
                continue
            v = mono * a
            E[r][cc] = E[r][cc] + v if neg else E[r][cc] - v
        if not cx.higgs_mode:
            dm = mono.deriv(l) * G[l]
            if not dm.is_zero():
                E[r][c] = E[r][c] - dm if neg else E[r][c] + dm
    return out


def _restrict_single(L, Rm, wt, img, r, c, R, C):
    """Restriction of a single-position section: rank-one products."""
    out = {}
    for K2, factor in wt.items():
        f = img * factor
        entries = {}
        for rr in range(R):
            lv = L[rr][r]
            if lv.is_zero():
                continue
            lf = lv * f
            for cc in range(C):
                rv = Rm[c][cc]
                if rv.is_zero():
                    continue
                entries[(rr, cc)] = lf * rv
        out[K2] = entries
    return out


def _wedge_transform(J, K, sr):
    """gen_{k1} ^ ... ^ gen_{kq} expanded in the host wedge basis."""
    if not K:
        return {(): sr.one()}
    d = len(J[0])
    out = {}
    from itertools import permutations
    from itertools import combinations as combs

    for K2 in combs(range(d), len(K)):
        acc = None
        for perm in permutations(range(len(K))):
            sign = _perm_sign(perm)
            term = None
            for a, ka in enumerate(K):
                f = J[ka][K2[perm[a]]]
                term = f if term is None else term * f
            if sign < 0:
                term = -term
            acc = term if acc is None else acc + term
        if acc is not None and not acc.is_zero():
            out[K2] = acc
    return out


def _perm_sign(perm):
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        clen = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            clen += 1
        if clen % 2 == 0:
            sign = -sign
    return sign


def _accumulate(data, tot, block, comp, col, sign, sparse=False):
    posidx = getattr(block, "_posidx", None)
    if posidx is None:
        posidx = {pos: i for i, pos in enumerate(block.positions)}
        block._posidx = posidx
    mod = block.space.sr.witt.modulus
    for K, E in comp.items():
        entries = E.items() if sparse else None
        try:
            ki = block.wedges.index(K)
        except ValueError:
            if sparse:
                bad = any(not f.is_zero() for _, f in E.items())
            else:
                bad = any(not e.is_zero() for row in E for e in row)
            if bad:
                raise WindowOverflow(f"wedge {K} missing in target block")
            continue
        if sparse:
            it = entries
        else:
            it = (((r, c), E[r][c]) for (r, c) in block.positions)
            # subsheaf membership: complement positions must vanish
            if not tot.cx.check_membership(block.q, E):
                raise WindowOverflow("restriction escapes the subsheaf")
        for (pos, f) in it:
            if f.is_zero():
                continue
            pi = posidx.get(pos)
            if pi is None:
                if tot.cx.quotient:
                    continue  # quotient projection drops these
                raise WindowOverflow("restriction escapes the subsheaf")
            coords = block.space.frac_coords(f)
            if sign < 0:
                coords = -coords % mod
            base = block.offset + (ki * len(block.positions) + pi) * block.space.dim
            data[base : base + block.space.dim, col] = (
                data[base : base + block.space.dim, col] + coords
            ) % mod


# ---------------------------------------------------------------------------
# cochains


class Cochain:
    """A total-degree-n cochain in the alternating Cech model.

    components: {(p, iota): {K: full frame-coordinate matrix}} for strictly
    increasing chart tuples iota of length p+1.
    """

    def __init__(self, cx, degree, components):
        self.cx = cx
        self.degree = degree
        self.components = components

    def __add__(self, other):
        out = {}
        for key in set(self.components) | set(other.components):
            a = self.components.get(key)
            b = other.components.get(key)
            if a is None:
                out[key] = b
            elif b is None:
                out[key] = a
            else:
                out[key] = {K: fm_add(a[K], b[K]) if K in b else a[K] for K in set(a) | set(b)}
        return Cochain(self.cx, self.degree, out)

    def __neg__(self):
        return Cochain(
            self.cx,
            self.degree,
            {key: {K: fm_neg(E) for K, E in data.items()} for key, data in self.components.items()},
        )

    def __sub__(self, other):
        return self + (-other)


def total_differential(cochain):
    """d^Tot = delta + (-1)^p nabla on alternating components (symbolic)."""
    cx = cochain.cx
    cover = cx.cover
    ids = cover.chart_ids()
    out = {}

    def add_to(key, K, E):
        data = out.setdefault(key, {})
        data[K] = fm_add(data[K], E) if K in data else E

    for (p, iota), data in cochain.components.items():
        reg = cover.region(iota)
        qs = sorted({len(K) for K in data})
        for q in qs:
            sub = {K: E for K, E in data.items() if len(K) == q}
            dcmp = cx.differential_on_region(reg, q, sub)
            for K2, E in dcmp.items():
                if p % 2:
                    E = fm_neg(E)
                add_to((p, iota), K2, E)
        for x in ids:
            if x in iota:
                continue
            iota2 = tuple(sorted(iota + (x,)))
            if not _has_overlaps(cover, iota2):
                continue
            t = iota2.index(x)
            sign = -1 if t % 2 else 1
            reg2 = cover.region(iota2)
            src = reg.host.cid
            L, Rm, J = cx.region_transfer(reg2, src)
            for K, E in data.items():
                pulled = [[f.subs(reg2.coord_images(src), reg2.sr) for f in row] for row in E]
                moved = fm_mul(L, fm_mul(pulled, Rm))
                for K2, factor in _wedge_transform(J, K, reg2.sr).items():
                    term = [[x2 * factor for x2 in row] for row in moved]
                    if sign < 0:
                        term = fm_neg(term)
                    add_to((p + 1, iota2), K2, term)
    return Cochain(cx, cochain.degree + 1, out)


# ---------------------------------------------------------------------------
# cohomology groups and classes


class CechClass:
    """A hypercohomology class with canonical core coordinates."""

    def __init__(self, cx, degree, window, corevec, group):
        self.cx = cx
        self.degree = degree
        self.window = window
        self.group = group
        self.vec = group.reduce(corevec)

    def is_zero(self):
        return not self.vec.any()

    def _same(self, other):
        if not isinstance(other, CechClass) or other.group is not self.group:
            raise ValueError("classes from different groups")

    def __add__(self, other):
        self._same(other)
        return CechClass(self.cx, self.degree, self.window, self.vec + other.vec, self.group)

    def __sub__(self, other):
        self._same(other)
        return CechClass(self.cx, self.degree, self.window, self.vec - other.vec, self.group)

    def __neg__(self):
        return CechClass(self.cx, self.degree, self.window, -self.vec, self.group)

    def scale(self, elem):
        arr = np.asarray(elem.coeffs, dtype=np.int64)
        vec = linalg._scale_rows(self.cx.cover.ring, arr, self.vec)
        return CechClass(self.cx, self.degree, self.window, vec, self.group)

    def __eq__(self, other):
        return (
            isinstance(other, CechClass)
            and other.group is self.group
            and bool(np.array_equal(other.vec, self.vec))
        )

    def coordinates(self):
        return self.group.class_coordinates(self.vec)

    def representative(self):
        full = self.group.embed_core(self.vec)
        return Cochain(self.cx, self.degree, self.group.tot.components(full, self.degree))

    def __repr__(self):
        return f"CechClass(deg {self.degree}, dim-{self.group.dim} group)"


class ClassGroup:
    """H^n of a complex in a fixed window.

    Kernel: core-supported cocycles.  Image: boundaries of the full assembly
    space, intersected with the core (fringe coordinates lead, so the Howell
    rows with zero fringe part span the intersection exactly).
    """

    def __init__(self, cx, degree, window, margin=8):
        self.cx = cx
        self.degree = degree
        self.window = window
        self.tot = _total_complex(cx, window, margin)
        ring = cx.cover.ring
        self.ring = ring
        tot = self.tot
        Mn = tot.matrix(degree)
        self.cols = tot.core_columns(degree)
        self.coredim = len(self.cols)
        Mcore = RingMatrix(ring, Mn.data[:, self.cols]) if self.coredim else None
        self.kernel = (
            linalg.kernel_basis(Mcore)
            if Mcore is not None
            else linalg.SubmoduleBasis(ring, linalg.zeros(ring, 0, 0), 0, [])
        )
        if degree > 0:
            self._prev = tot.matrix(degree - 1)
            img_full = linalg.image_basis(self._prev)  # rows in full coordinates
            core_rows = []
            fringe_cols = np.setdiff1d(np.arange(tot.dim(degree)), self.cols)
            perm = np.concatenate([fringe_cols, self.cols]).astype(np.int64)
            if len(img_full.pivots):
                permuted = img_full.rows[:, perm]
                rows, pivots = linalg.howell_array(ring, permuted)
                nf = len(fringe_cols)
                for row, (j, v) in zip(rows, pivots):
                    if j >= nf:
                        core_rows.append(row[nf:])
            if core_rows:
                rows, pivots = linalg.howell_array(ring, np.array(core_rows))
                self.image = linalg.SubmoduleBasis(ring, rows, self.coredim, pivots)
            else:
                self.image = linalg.SubmoduleBasis(
                    ring, linalg.zeros(ring, 0, self.coredim), self.coredim, []
                )
        else:
            self._prev = None
            self.image = linalg.SubmoduleBasis(
                ring, linalg.zeros(ring, 0, self.coredim), self.coredim, []
            )
        self._Mn = Mn
        basis = []
        span = self.image
        for row in self.kernel.rows:
            red = linalg.reduce_mod_span(span, row)
            if red.any():
                basis.append(red)
                span = linalg.span_sum(ring, [span, _single_row_basis(ring, red)], self.coredim)
        self.basis_vecs = basis
        self.dim = linalg.quotient_dim(self.kernel, self.image) if self.coredim else 0

    # -- helpers ---------------------------------------------------------------

    def embed_core(self, corevec):
        full = np.zeros((self.tot.dim(self.degree), self.ring.m), dtype=np.int64)
        if self.coredim:
            full[self.cols] = corevec
        return full

    def reduce(self, corevec):
        return linalg.reduce_mod_span(self.image, corevec % self.ring.modulus)

    def class_coordinates(self, corevec):
        """Coefficients c with [vec] = sum c_a [basis_a] (deterministic)."""
        if not self.basis_vecs:
            return np.zeros((0, self.ring.m), dtype=np.int64)
        cols = list(self.basis_vecs) + [row for row in self.image.rows]
        M = RingMatrix(self.ring, np.stack(cols, axis=1))
        sol = linalg.solve(M, self.reduce(corevec))
        if sol is NO_SOLUTION:
            raise WindowOverflow("class outside the computed basis span")
        return sol[: len(self.basis_vecs)]

    def basis(self):
        return [CechClass(self.cx, self.degree, self.window, v, self) for v in self.basis_vecs]

    def zero(self):
        return CechClass(
            self.cx,
            self.degree,
            self.window,
            np.zeros((self.coredim, self.ring.m), dtype=np.int64),
            self,
        )

    def from_cochain(self, coch):
        vec = self.tot.coords(coch.components, self.degree)[self.cols] if self.coredim else np.zeros((0, self.ring.m), dtype=np.int64)
        if not self.is_cocycle_vec(vec):
            raise ValueError("cochain is not a cocycle")
        return CechClass(self.cx, self.degree, self.window, vec, self)

    def from_vec(self, corevec):
        return CechClass(self.cx, self.degree, self.window, corevec, self)

    def is_cocycle_vec(self, corevec):
        full = self.embed_core(corevec)
        out = linalg.mat_mul(self.ring, self._Mn.data, full.reshape(-1, 1, self.ring.m))
        return not out.any()

    def primitive(self, corevec):
        if self._prev is None:
            return NO_SOLUTION
        return linalg.solve(self._prev, self.embed_core(corevec))


def _single_row_basis(ring, row):
    rows, pivots = linalg.howell_array(ring, row.reshape(1, *row.shape))
    return linalg.SubmoduleBasis(ring, rows, row.shape[0], pivots)


# ---------------------------------------------------------------------------
# public entry points


_GROUP_CACHE = {}
_TOT_CACHE = {}


def _total_complex(cx, window, margin):
    key = (id(cx), tuple(window), margin)
    tot = _TOT_CACHE.get(key)
    if tot is None:
        tot = TotalComplex(cx, window, margin)
        _TOT_CACHE[key] = tot
    return tot


def class_group(cx, degree, window=None):
    window = tuple(window or DEFAULT_WINDOW)
    key = (id(cx), degree, window)
    g = _GROUP_CACHE.get(key)
    if g is None:
        margin = 8
        for attempt in range(4):
            try:
                g = ClassGroup(cx, degree, window, margin=margin)
                break
            except WindowOverflow:
                if attempt == 3:
                    raise
                margin += 8
        _GROUP_CACHE[key] = g
    return g


def hypercohomology(cx, degree, window=None, certify=True):
    """Dimension (composition length) and canonical basis of H^degree.

    Returns (dim, basis, certificate); the certificate records the window
    pair with matching dimensions.  Raises WindowUnstable when dimensions
    keep moving at the doubling limit.
    """
    window = tuple(window or DEFAULT_WINDOW)
    if not certify:
        g = class_group(cx, degree, window)
        return g.dim, g.basis(), {"window": window, "certified": False}
    prev = None
    win = window
    for _ in range(MAX_DOUBLINGS + 1):
        g = class_group(cx, degree, win)
        if prev is not None and g.dim == prev[1].dim:
            cert = {"window": prev[0], "next_window": win, "certified": True}
            return prev[1].dim, prev[1].basis(), cert
        prev = (win, g)
        win = (2 * win[0], 2 * win[1])
    raise WindowUnstable(f"dimensions still moving at window {win}")


def classify(cochain, window=None):
    """NotCocycle | Coboundary(witness cochain) | CechClass."""
    window = tuple(window or DEFAULT_WINDOW)
    g = class_group(cochain.cx, cochain.degree, window)
    vec = g.tot.coords(cochain.components, cochain.degree)[g.cols] if g.coredim else np.zeros((0, g.ring.m), dtype=np.int64)
    if not g.is_cocycle_vec(vec):
        return NotCocycle(total_differential(cochain))
    wit = g.primitive(vec)
    if wit is not NO_SOLUTION:
        witness = Cochain(cochain.cx, cochain.degree - 1, g.tot.components(wit, cochain.degree - 1))
        return Coboundary(witness)
    return CechClass(cochain.cx, cochain.degree, window, vec, g)
