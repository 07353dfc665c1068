"""The truncated inverse Cartier transform.

Pipeline per chart: lift the flow's filtered de Rham data one level with
the graded part pinned to the given Higgs lift (via psi), apply the
Rees-at-p construction to get a p-connection, pull back along the chart's
Frobenius lifting (sigma-semilinear on constants, with the log form factor
divided exactly by p), and glue the chartwise pullbacks with the Taylor
formula.  All series terms are evaluated with exact integer arithmetic at a
high enough p-power precision that the divisions by I! p^{|I|} are exact;
a failed division raises NonIntegralTerm with the offending index.

Degenerate level (no flow data): the p-connection is the Higgs field
itself, which is the mod-p Ogus-Vologodsky case.
"""

from __future__ import annotations

from .bundles import (
    ConnectionData,
    FiltrationData,
    FilteredDeRhamBundle,
    VectorBundleData,
    adapted_connection,
    adapted_higgs,
    fm_add,
    fm_eq,
    fm_id,
    fm_inv,
    fm_lift_level,
    fm_map,
    fm_mul,
    fm_pull,
    fm_reduce_level,
    fm_scale,
    fm_sub,
    fm_zero,
    frame_transfer,
    trivial_filtration,
)
from .deform import LiftRecord, _filt_of, _rehome
from .sections import Frac, Poly, subs_poly
from .witt import frobenius, lift_level, make_witt_ring, reduce_level


class NonTeichmullerDivisor(ValueError):
    pass


class NonIntegralTerm(ArithmeticError):
    """A Taylor term failed exact divisibility; reports the multi-index."""


class PsiMismatch(ValueError):
    pass


class FrobeniusLifting:
    """Per-chart coordinate images of a sigma-semilinear Frobenius lifting."""

    def __init__(self, cover, images):
        self.cover = cover
        self.images = dict(images)  # cid -> [Frac over the chart sr]
        self._levels = {cover.level: self}

    def at_level(self, level):
        got = self._levels.get(level)
        if got is None:
            cov = self.cover.at_level(level)
            move = (lambda f: f.reduce_level(level)) if level < self.cover.level else (lambda f: f.lift_level(level))
            imgs = {cid: [move(f) for f in fs] for cid, fs in self.images.items()}
            got = FrobeniusLifting(cov, imgs)
            got._levels = self._levels
            self._levels[level] = got
        return got

    def pull_section(self, cid, f, target_sr=None):
        """Phi^*(f) for a section of the chart: sigma on constants, subs on vars."""
        chart = self.cover.chart(cid)
        target = target_sr or chart.sr
        return f.subs(self.images[cid], target, coeff_map=frobenius)

    def __repr__(self):
        return f"FrobeniusLifting(level {self.cover.level})"


def validate_frobenius_lift(frob, cover=None):
    """Check divisor preservation and the Frobenius congruence; report failures."""
    cover = cover or frob.cover
    p = cover.ring.p
    fails = []
    for c in cover.charts:
        imgs = frob.images.get(c.cid)
        if imgs is None or len(imgs) != c.dim:
            fails.append(f"chart {c.cid}: missing Frobenius images")
            continue
        for j, img in enumerate(imgs):
            tp = Frac(c.sr, Poly.variable(c.sr.witt, c.dim, j), 0) ** p
            if not (img.reduce_level(1) == tp.reduce_level(1)):
                fails.append(f"chart {c.cid}: image of {c.coords[j]} is not t^p mod p")
        # divisor preservation: Phi^*(g) in (g) by exact division
        for (var, g) in c.divisor:
            gimg = frob.pull_section(c.cid, Frac(c.sr, g, 0))
            gfrac = Frac(c.sr, g, 0)
            if _frac_exact_div(gimg, gfrac) is None:
                fails.append(f"chart {c.cid}: divisor component not preserved")
    return fails


def _frac_exact_div(a, b, extra_loc=4):
    """Exact quotient a / b of sections, or None; allows loc-power padding."""
    sr = a.sr
    for k in range(extra_loc + 1):
        num = a.numer * sr.loc_pow(b.e + k)
        den = b.numer * sr.loc_pow(a.e)
        q = num.exact_div(den)
        if q is not None:
            return Frac(sr, q, a.e + k).reduced()
    return None


def standard_frobenius(cover):
    """t -> t^p with sigma-twisted constants; divisor roots must be Teichmuller.

    Validity of the divisor condition needs t^p - sigma(root) divisible by
    (t - root), i.e. the roots are Teichmuller lifts.
    """
    ring = cover.ring
    p = ring.p
    images = {}
    for c in cover.charts:
        if c.dim != 1:
            raise NotImplementedError("standard Frobenius liftings only for curves")
        for (var, g) in c.divisor:
            cos = g.univariate_coeffs(var)
            if len(cos) == 2:
                root = -cos[0]
                if not (frobenius(root) == root ** p):
                    raise NonTeichmullerDivisor(f"divisor root on chart {c.cid} is not Teichmuller")
        images[c.cid] = [Frac(c.sr, Poly.variable(ring, c.dim, 0), 0) ** p]
    frob = FrobeniusLifting(cover, images)
    fails = validate_frobenius_lift(frob)
    if fails:
        raise NonTeichmullerDivisor("; ".join(fails))
    return frob


def log_frobenius(cover):
    """A Frobenius lifting with Phi^*(g) = g^p * unit for every divisor
    component; exists canonically for charts with at most two linear
    components (the Moebius normalization t -> a-centered power map).

    Unlike standard_frobenius this keeps inverse-Cartier pullbacks of log
    forms exactly divisible by p, which the transform requires.
    """
    ring = cover.ring
    p = ring.p
    images = {}
    for c in cover.charts:
        if c.dim != 1:
            raise NotImplementedError("log Frobenius liftings only for curves")
        roots = []
        for (var, g) in c.divisor:
            cos = g.univariate_coeffs(var)
            if len(cos) != 2:
                raise NonTeichmullerDivisor("log Frobenius needs linear divisor components")
            roots.append(-cos[0])
        t = Poly.variable(ring, 1, 0)
        if len(roots) == 0:
            img = Frac(c.sr, t, 0) ** p
        elif len(roots) == 1:
            a = roots[0]
            sa = frobenius(a)
            base = Poly.from_univariate(ring, [-a, ring.one()])  # t - a
            img = Frac(c.sr, base, 0) ** p + c.sr.const(sa)
        else:
            a, b = roots
            sa, sb = frobenius(a), frobenius(b)
            ta = Poly.from_univariate(ring, [-a, ring.one()])
            tb = Poly.from_univariate(ring, [-b, ring.one()])
            num = Frac(c.sr, ta, 0) ** p
            den = Frac(c.sr, tb, 0) ** p
            # Phi t = (sa (t-b)^p - sb (t-a)^p) / ((t-b)^p - (t-a)^p); the
            # denominator is a unit since the roots differ mod p
            denom = den - num
            img = (den * sa - num * sb) * denom.inverse()
        images[c.cid] = [img.reduced()]
    frob = FrobeniusLifting(cover, images)
    fails = validate_frobenius_lift(frob)
    if fails:
        raise NonTeichmullerDivisor("; ".join(fails))
    return frob


# ---------------------------------------------------------------------------
# the tilde functor (Rees construction at p)


class PConnection:
    """Chartwise p-connection data in Rees frame coordinates.

    mats[cid][k]: the matrix of the p-connection against the chart's log
    basis; the p-twisted Leibniz rule is implicit.  weights records the Rees
    degrees of the frame vectors.
    """

    def __init__(self, cover, rank, weights, mats):
        self.cover = cover
        self.rank = rank
        self.weights = tuple(weights)
        self.mats = mats


def rees_pconnection(lift_adapted, weights, ring):
    """Scale an adapted connection lift by p^{w_r - w_c + 1} (the tilde functor)."""
    out = []
    p = ring.p
    for A in lift_adapted:
        M = [[None] * len(weights) for _ in weights]
        for r, wr in enumerate(weights):
            for c, wc in enumerate(weights):
                e = wr - wc + 1
                if e < 0:
                    if not A[r][c].is_zero():
                        raise PsiMismatch("transversality violated in the Rees step")
                    M[r][c] = A[r][c]
                else:
                    M[r][c] = A[r][c] * ring.from_int(p ** e)
        out.append(M)
    return out


def rees_map(F, weights, ring):
    """Scale a filtration-preserving map by p^{w_r - w_c} (Rees functoriality)."""
    p = ring.p
    out = [[None] * len(weights) for _ in weights]
    for r, wr in enumerate(weights):
        for c, wc in enumerate(weights):
            e = wr - wc
            if e < 0:
                if not F[r][c].is_zero():
                    raise PsiMismatch("map does not preserve the filtration")
                out[r][c] = F[r][c]
            else:
                out[r][c] = F[r][c] * ring.from_int(p ** e)
    return out


def tilde(B, Etil, psi=None):
    """Chartwise p-connections of the Faltings tilde construction.

    B: filtered de Rham bundle at level n (or None for the degenerate
    case); Etil: graded Higgs bundle at level n+1 whose reduction is
    identified with gr(B) via psi (per-chart block-diagonal matrices;
    identity when omitted).  Returns a PConnection over Etil's cover.
    """
    cover_big = Etil.cover
    ring = cover_big.ring
    weights = Etil.grading.weights
    theta_ad = {
        c.cid: adapted_higgs(cover_big, c.cid, Etil.higgs.coeffs[c.cid], Etil.grading.frames[c.cid])
        for c in cover_big.charts
    }
    if B is None:
        return PConnection(cover_big, Etil.rank, weights, theta_ad)
    if tuple(_filt_of(B).weights) != tuple(weights):
        raise PsiMismatch("filtration and grading weights differ")
    lvl = cover_big.level
    mats = {}
    for c in B.cover.charts:
        ad = adapted_connection(B.cover, c.cid, B.connection.coeffs[c.cid], B.filtration.frames[c.cid])
        big_sr = cover_big.chart(c.cid).sr
        lifted = [_rehome(big_sr, fm_lift_level(M, lvl)) for M in ad]
        th = theta_ad[c.cid]
        if psi is not None:
            q = psi[c.cid]
            qinv = fm_inv(q)
            th = [fm_mul(qinv, fm_mul(T, q)) for T in th]
        # pin the graded (wd = -1) block to the Higgs lift
        for k in range(len(lifted)):
            for r, wr in enumerate(weights):
                for cc, wc in enumerate(weights):
                    if wr == wc - 1:
                        lifted[k][r][cc] = th[k][r][cc]
        mats[c.cid] = rees_pconnection(lifted, weights, ring)
    return PConnection(cover_big, Etil.rank, weights, mats)


# ---------------------------------------------------------------------------
# Frobenius pullback of sections and forms


def _pullback_on_region(reg, psi_t, f):
    """f composed with the Frobenius (host coordinate -> psi_t), sigma twist."""
    return f.subs([psi_t], reg.sr, coeff_map=frobenius)


class _RegionPullback:
    """Cached-power Frobenius substitution on a one-coordinate region."""

    def __init__(self, reg, psi_t):
        self.reg = reg
        self.sr = reg.sr
        self.psi = psi_t.reduced()
        self._pows = [self.sr.one(), self.psi]
        loc_img = subs_poly(self.sr.loc.map_coeffs(frobenius), [self.psi], self.sr)
        self._locinv = loc_img.inverse().reduced()
        self._locinv_pows = [self.sr.one(), self._locinv]

    def _pow(self, k):
        while len(self._pows) <= k:
            self._pows.append((self._pows[-1] * self.psi).reduced())
        return self._pows[k]

    def _linv(self, k):
        while len(self._locinv_pows) <= k:
            self._locinv_pows.append((self._locinv_pows[-1] * self._locinv).reduced())
        return self._locinv_pows[k]

    def __call__(self, f):
        acc = self.sr.zero()
        for e, c in f.numer.terms.items():
            acc = acc + self._pow(e[0]) * frobenius(c)
        if f.e:
            acc = acc * self._linv(f.e)
        return acc


def _frob_on_host(frob, _unused, j, reg):
    """Phi_j^* of the host coordinate, as a section of the pair region.

    For j == host this is just the chart image pulled to the region; for the
    other chart the host coordinate t = tau(s) pulls back to
    tau^sigma(Phi_j^* s), re-expressed in host coordinates.
    """
    host = reg.host.cid
    cover = frob.cover
    if j == host:
        return reg.pull_section(j, frob.images[j][0])
    tau = cover.images(host, j)[0]  # host coordinate in j coordinates
    pair_j = cover.pair_sr(j, host)
    phis = frob.images[j][0]
    phis = Frac(pair_j, phis.numer, phis.e)
    img_overlap_j = tau.subs([phis], pair_j, coeff_map=frobenius).reduced()
    return reg.pull_section(j, img_overlap_j).reduced()


def _form_factor_over_p(frob, cid):
    """Phi^*(gen)/p = [(Phi t)' G / G^sigma(Phi t)] / p, exactly.

    Each divisor component g satisfies Phi^*(g) = g^m c; integrality needs
    m = p and c a unit (the logarithmic condition), in which case the factor
    is (Phi t)' / (prod g^{p-1} c) with exact polynomial divisions followed
    by Hensel inversion of the units.  Returns the level-(n+1) coefficient
    against the chart's log generator; NonIntegralTerm otherwise.
    """
    cover = frob.cover
    chart = cover.chart(cid)
    p = cover.ring.p
    phit = frob.images[cid][0]
    fac = phit.deriv(0)
    for (var, g) in chart.divisor:
        gimg = frob.pull_section(cid, Frac(chart.sr, g, 0))
        m = 0
        gfrac = Frac(chart.sr, g, 0)
        while True:
            q = _frac_exact_div(gimg, gfrac)
            if q is None:
                break
            gimg = q
            m += 1
        if m < 1:
            raise NonIntegralTerm(f"chart {cid}: divisor not preserved by the lifting")
        # fac gains g^{1-m}: divide (m-1) times exactly
        for _ in range(m - 1):
            q = _frac_exact_div(fac, gfrac)
            if q is None:
                raise NonIntegralTerm(
                    f"chart {cid}: log form pullback not integral (non-logarithmic lifting)"
                )
            fac = q
        try:
            fac = fac * gimg.inverse()
        except ZeroDivisionError:
            raise NonIntegralTerm(
                f"chart {cid}: divisor cofactor is not a unit (multiplicity {m} < {p})"
            ) from None
    if fac.val_p() < 1:
        raise NonIntegralTerm(f"form factor on chart {cid} not divisible by p")
    return fac.exact_div_p(1).reduce_level(cover.level - 1).reduced()


# ---------------------------------------------------------------------------
# Taylor gluing


def taylor_glue(pconn, frob, i, j, hard_cap=None, naive_oracle=False):
    """The canonical isomorphism Phi_i-pullback -> Phi_j-pullback of a
    p-connection module on the (i, j) overlap, by the Taylor formula.

    Exact integer evaluation at a high p-power precision; terms are summed
    by degree and the series stops after three consecutive degrees vanish
    mod p^{n+1} (hard cap (n+2) p, then NonIntegralTerm).
    """
    cover_out = pconn.cover            # level n+1
    cover_frob = frob.cover            # level n+2
    lvl_out = cover_out.level
    lvl_frob = cover_frob.level
    ring_out = cover_out.ring
    p = ring_out.p
    cap = hard_cap or lvl_frob * p
    import math

    NBIG = lvl_frob + cap + _vp(math.factorial(cap), p) + 1
    covN = cover_frob.at_level(NBIG)
    regN = covN.region((i, j))
    host = regN.host.cid
    if regN.host.dim != 1:
        raise NotImplementedError("Taylor gluing implemented for curves")
    ringN = covN.ring
    # Delta = Phi_i^* t - Phi_j^* t, computed at level n+2, lifted
    reg2 = cover_frob.region((i, j))
    phi_i = _frob_on_host(frob, i, i, reg2)
    phi_j = _frob_on_host(frob, j, j, reg2)
    delta = (phi_i - phi_j).reduced()
    if delta.val_p() < 1 and not delta.is_zero():
        raise NonIntegralTerm("Frobenius images do not agree mod p on the overlap")
    deltaN = Frac(regN.sr, delta.numer.lift_level(NBIG), delta.e)
    # the p-connection contracted with d/dt on the region, at big precision
    from .bundles import pull_connection_to_region

    mats = pull_connection_to_region(cover_out, i, pconn.mats[i], cover_out.region((i, j)))
    Bmat = mats[0]
    G = cover_out.region((i, j)).pull_poly(host, cover_out.chart(host).log_denominators()[0])
    Ginv = G.inverse()
    Bd = fm_map(Bmat, lambda f: (f * Ginv).reduced())
    BdN = [[Frac(regN.sr, f.numer.lift_level(NBIG), f.e) for f in row] for row in Bd]
    r = pconn.rank
    phi_j = phi_j.reduced()
    psi_t = Frac(regN.sr, phi_j.numer.lift_level(NBIG), phi_j.e)
    acc = None
    Mk = fm_id(regN.sr, r)
    deltapow = regN.sr.one()
    zero_run = 0
    pN = ringN.from_int(p)
    PB = _RegionPullback(regN, psi_t)
    for k in range(cap + 1):
        if k > 0:
            # M_{k} = p dM_{k-1}/dt + Bd M_{k-1}
            dM = [[f.deriv(0) * pN for f in row] for row in Mk_prev]
            Mk = fm_map(fm_add(dM, fm_mul(BdN, Mk_prev)), lambda f: f.reduced())
            deltapow = (deltapow * deltaN).reduced()
        # term_k = PB_j(M_k) * delta^k / (k! p^k)
        term = fm_map(Mk, lambda f: (PB(f) * deltapow).reduced())
        fact = math.factorial(k)
        vp = _vp(fact, p)
        unit = fact // (p ** vp)
        unit_inv = ringN.from_int(unit).inverse()
        try:
            term = fm_map(term, lambda f: f.exact_div_p(vp + k) * unit_inv)
        except ValueError as exc:
            raise NonIntegralTerm(f"term at index {k}: {exc}") from exc
        acc = term if acc is None else fm_add(acc, term)
        red = fm_map(term, lambda f: f.reduce_level(lvl_out))
        if all(f.is_zero() for row in red for f in row):
            zero_run += 1
            if k > 0 and zero_run >= 3:
                break
        else:
            zero_run = 0
        Mk_prev = Mk
    out_reg = cover_out.region((i, j))
    glued = [
        [Frac(out_reg.sr, f.reduce_level(lvl_out).numer, f.e).reduced() for f in row]
        for row in acc
    ]
    return glued


def _vp(x, p):
    v = 0
    while x % p == 0 and x:
        x //= p
        v += 1
    return v


# ---------------------------------------------------------------------------
# the parametrized inverse Cartier transform


def graded_transition_lift(B, Etil, psi, i, j):
    """f_ij with the graded block pinned to Etil's transition (level n+1)."""
    cover_big = Etil.cover
    weights = Etil.grading.weights
    reg_big = cover_big.region((i, j))
    ME = frame_transfer(Etil.bundle, Etil.grading, i, j, reg_big)
    if B is None:
        return ME
    reg = B.cover.region((i, j))
    M = frame_transfer(B.bundle, B.filtration, i, j, reg)
    lifted = _rehome(reg_big.sr, fm_lift_level(M, cover_big.level))
    blk = ME
    if psi is not None:
        qi = fm_pull(reg_big, i, psi[i])
        qj = fm_pull(reg_big, j, psi[j])
        blk = fm_mul(fm_inv(qj), fm_mul(ME, qi))
    for r, wr in enumerate(weights):
        for c, wc in enumerate(weights):
            if wr == wc:
                lifted[r][c] = blk[r][c]
    return lifted


def inverse_cartier(Etil, frob, flowdata=None, check_reduction=True):
    """C^{-1}((E~, theta~), (V_n, nabla_n, Fil_n), psi) w.r.t. Frobenius data.

    Etil: graded Higgs bundle at level n+1; frob: FrobeniusLifting on a
    cover at level n+2 reducing to Etil's cover; flowdata: (B_n, psi) or
    None for the degenerate mod-p case.  Returns a bare LiftRecord over
    Etil's cover whose reduction is B_n's underlying de Rham bundle.
    """
    cover_out = Etil.cover
    lvl = cover_out.level
    B = flowdata[0] if flowdata else None
    psi = flowdata[1] if flowdata else None
    if B is not None and B.cover.level != lvl - 1:
        raise PsiMismatch("flow data must live one level below the Higgs lift")
    pc = tilde(B, Etil, psi)
    ring = cover_out.ring
    # chartwise pullback connections
    conn = {}
    for c in cover_out.charts:
        fac = _form_factor_over_p(frob, c.cid)
        phit = frob.images[c.cid][0].reduce_level(lvl)
        mats = []
        for k in range(c.dim):
            Bm = pc.mats[c.cid][k]
            pulled = fm_map(Bm, lambda f: f.subs([phit], c.sr, coeff_map=frobenius) * fac)
            mats.append(fm_map(pulled, lambda f: f.reduced()))
        conn[c.cid] = mats
    # transitions
    trans = {}
    for pair in cover_out.overlaps(2):
        i, j = pair
        GT = taylor_glue(pc, frob, i, j)
        fij = graded_transition_lift(B, Etil, psi, i, j)
        R = rees_map(fij, pc.weights, ring)
        reg = cover_out.region((i, j))
        psi_t = _frob_on_host(frob.at_level(lvl), j, j, reg).reduced()
        PBout = _RegionPullback(reg, psi_t)
        Rp = fm_map(R, lambda f: PBout(f).reduced())
        Gij = fm_mul(Rp, GT)
        trans[(i, j)] = fm_map(Gij, lambda f: f.reduced())
        trans[(j, i)] = fm_map(fm_inv(Gij), lambda f: f.reduced())
    bundle = VectorBundleData(cover_out, Etil.rank, trans)
    obj = FilteredDeRhamBundle(bundle, ConnectionData(conn), trivial_filtration(cover_out, Etil.rank))
    base = None
    if B is not None:
        base = FilteredDeRhamBundle(B.bundle, B.connection, trivial_filtration(B.cover, B.rank))
    else:
        red = obj.at_level(1) if lvl > 1 else obj
        base = red if lvl > 1 else None
    rec = LiftRecord("bare", obj, base if base is not None else obj)
    if B is not None and check_reduction:
        if not rec.reduction_ok():
            raise PsiMismatch("inverse Cartier output does not reduce to the flow bundle")
    return rec
