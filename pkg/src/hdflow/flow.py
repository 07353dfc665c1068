"""1-periodic Higgs-de Rham flows: verification, lifting, ordinarity.

A flow at level n packages a graded Higgs bundle (E, theta, Gr), the
filtered de Rham bundle (V, nabla, Fil) obtained from it by the inverse
Cartier transform, and the identification of gr(V, nabla, Fil) with
(E, theta).  Flows built here are normalized so the periodicity map is the
identity in coordinates: the filtration frames absorb it, which also makes
level reductions of the transform literal equalities.

Lifting one p-adic level follows the fixed recipe: search the thickening
and Higgs-lift torsor for a pair with vanishing Hodge obstruction, measure
the periodicity defect, and cancel it with a solution of the semilinear
(Artin-Schreier) equation, extending the residue field when necessary.
"""

from __future__ import annotations

import numpy as np

from . import cech, linalg
from .bundles import (
    FiltrationData,
    FilteredDeRhamBundle,
    GradingData,
    GradedHiggsBundle,
    check_bundle,
    fm_add,
    fm_eq,
    fm_id,
    fm_inv,
    fm_lift_level,
    fm_map,
    fm_mul,
    fm_pull,
    fm_scale,
    fm_sub,
    fm_zero,
    gr_higgs,
    log_tangent_complex,
    sum_of_lines,
    trivial_filtration,
    zero_higgs,
)
from .cartier import FrobeniusLifting, NonIntegralTerm, inverse_cartier, log_frobenius
from .cech import Coboundary, class_group
from .deform import (
    DEFORM_WINDOW,
    LiftRecord,
    _rehome,
    act,
    complex_for,
    glue_from_primitive,
    hodge_lift_from_witness,
    hodge_uniqueness_iso,
    les_maps,
    obstruction_filtered,
    obstruction_graded_higgs,
    obstruction_hodge,
    torsor_diff,
    torsor_group,
)
from .geometry import Thickening, legendre_cover, perturb_cover, projective_line
from .sections import Frac, Poly
from .witt import WittElem, extension_ring, frobenius, make_witt_ring, reduce_level


class NotInK(ValueError):
    """The candidate pair has a nonzero Hodge obstruction."""


class NoSolutionWithinBound(ValueError):
    pass


class FlowHypothesisFailure(Exception):
    """Theorem hypotheses (K nonempty / projection surjective) do not hold."""


class HDFlow:
    """A 1-periodic flow at level n with its Frobenius data one level up.

    Fields: E (graded Higgs bundle), B (filtered de Rham bundle with
    gr(B) = E in coordinates), frob (FrobeniusLifting at level n+1 whose
    cover thickens B's cover).  The periodicity map is the identity by
    normalization.
    """

    def __init__(self, E, B, frob):
        self.E = E
        self.B = B
        self.frob = frob
        self.level = B.cover.level

    @property
    def cover(self):
        return self.B.cover


def verify_flow(flow, check_ic=True):
    """Recompute the transform and compare; report failures."""
    fails = []
    fails += [f"higgs: {m}" for m in check_bundle(flow.E.bundle, higgs=flow.E.higgs, grading=flow.E.grading)]
    fails += [
        f"derham: {m}"
        for m in check_bundle(flow.B.bundle, connection=flow.B.connection, filtration=flow.B.filtration)
    ]
    gr = gr_higgs(flow.B)
    if tuple(gr.grading.weights) != tuple(flow.E.grading.weights):
        fails.append("periodicity: grading weights differ")
    else:
        for cid in flow.cover.chart_ids():
            for key, M in gr.bundle.transitions.items():
                if not fm_eq(M, flow.E.bundle.transitions[key]):
                    fails.append(f"periodicity: graded transition {key} differs")
                    break
            break
        for cid in flow.cover.chart_ids():
            for k in range(flow.cover.chart(cid).dim):
                if not fm_eq(gr.higgs.coeffs[cid][k], flow.E.higgs.coeffs[cid][k]):
                    fails.append(f"periodicity: graded Higgs field differs on {cid}")
    if check_ic:
        if flow.level == 1:
            out = inverse_cartier(flow.E, flow.frob.at_level(flow.level + 1))
            same = _bare_equal(out.obj, flow.B)
            if not same:
                fails.append("flow bundle is not the transform of its Higgs bundle")
        else:
            down = flow_at_level(flow, flow.level - 1)
            out = inverse_cartier(
                flow.E, flow.frob.at_level(flow.level + 1), flowdata=(down.B, None), check_reduction=False
            )
            if not _bare_equal(out.obj, flow.B):
                fails.append("flow bundle is not the transform of its Higgs bundle")
    return fails


def _bare_equal(A, B):
    for key, M in A.bundle.transitions.items():
        if not fm_eq(_rehome(B.bundle.transitions[key][0][0].sr, M), B.bundle.transitions[key]):
            return False
    for cid, mats in A.connection.coeffs.items():
        for Ma, Mb in zip(mats, B.connection.coeffs[cid]):
            if not fm_eq(_rehome(Mb[0][0].sr, Ma), Mb):
                return False
    return True


def flow_at_level(flow, level):
    return HDFlow(flow.E.at_level(level), flow.B.at_level(level), flow.frob)


# ---------------------------------------------------------------------------
# building flows


def _complete_to_frame(sr, col):
    """Extend a rank-2 column to a frame with unit determinant."""
    t = sr.var(sr.varnames[0])
    candidates = [
        [sr.one(), sr.zero()],
        [sr.zero(), sr.one()],
        [t, sr.one()],
        [sr.one(), t],
        [t, sr.zero()],
        [sr.zero(), t],
    ]
    for w in candidates:
        det = col[0] * w[1] - col[1] * w[0]
        try:
            det.inverse()
            return [[col[0], w[0]], [col[1], w[1]]]
        except ZeroDivisionError:
            continue
    raise ValueError("could not complete the section to a frame")


def find_line_subbundle(bundle, twist, degree_bound=None):
    """A line subbundle O(twist) -> V on a two-chart cover, by linear algebra.

    Solves g_01 v_0 = t^{-twist} v_1 (pulled to the overlap) for polynomial
    coefficient vectors; returns per-chart columns of the first kernel
    vector that is unimodular on both charts.
    """
    cover = bundle.cover
    ring = cover.ring
    r = bundle.rank
    N = degree_bound if degree_bound is not None else ring.p + 3
    reg = cover.region(("0", "1"))
    c0 = cover.chart("0")
    c1 = cover.chart("1")
    t_over = reg.coord_images("0")[0]
    s_img = reg.coord_images("1")[0]
    # coordinates: v0 entries' coefficients then v1 entries'
    nun = r * (N + 1)
    cols = []
    space = None
    from .cech import RegionSpace

    space = RegionSpace(reg, 0, 4 * N + 8 + 4 * max(reg.sr.loc.total_degree(), 1), 2 * N + 8)
    g01 = bundle.transitions[("0", "1")]
    tw = (t_over ** (-twist)) if twist else reg.sr.one()
    for side in range(2):
        for comp in range(r):
            for k in range(N + 1):
                v = Frac(reg.sr, Poly.from_univariate(ring, [0] * k + [1]), 0) if side == 0 else None
                if side == 0:
                    sec = t_over ** k
                    vec = [g01[i][comp] * sec for i in range(r)]
                else:
                    sec = s_img ** k
                    vec = [
                        -(tw * sec) if i == comp else reg.sr.zero()
                        for i in range(r)
                    ]
                coords = np.concatenate([space.frac_coords(x.reduced()) for x in vec])
                cols.append(coords)
    M = linalg.RingMatrix(ring, np.stack(cols, axis=1))
    K = linalg.kernel_basis(M)
    for row in K.rows:
        v0 = [
            Frac(c0.sr, Poly.from_univariate(ring, [int(row[comp * (N + 1) + k][0]) if ring.m == 1 else 0 for k in range(N + 1)]), 0)
            for comp in range(r)
        ]
        if ring.m > 1:
            v0 = []
            for comp in range(r):
                coeffs = [ring.from_coeffs(tuple(int(x) for x in row[comp * (N + 1) + k])) for k in range(N + 1)]
                v0.append(Frac(c0.sr, Poly.from_univariate(ring, coeffs), 0))
        v1 = []
        off = r * (N + 1)
        for comp in range(r):
            coeffs = [ring.from_coeffs(tuple(int(x) for x in row[off + comp * (N + 1) + k])) for k in range(N + 1)]
            v1.append(Frac(c1.sr, Poly.from_univariate(ring, coeffs), 0))
        try:
            P0 = _complete_to_frame(c0.sr, v0)
            P1 = _complete_to_frame(c1.sr, v1)
            return {"0": P0, "1": P1}
        except (ValueError, ZeroDivisionError):
            continue
    raise ValueError("no unimodular line subbundle found in the search window")


def _factor_linear_powers(u, linear_roots):
    """Factor a residue-field section as c * prod (t - a)^e; u must be a unit
    of the overlap ring (all factors among the given roots)."""
    ring = u.sr.witt
    numer = u.numer
    exps = []
    for a in linear_roots:
        g = Poly.from_univariate(ring, [-a, ring.one()])
        e = 0
        while True:
            q = numer.exact_div(g)
            if q is None:
                break
            numer = q
            e += 1
        exps.append(e)
    if numer.total_degree() != 0:
        raise ValueError("section is not a monomial in the divisor factors")
    return numer.constant_term(), exps, u.e


def flagship_higgs(cover1, lam1):
    """The uniformizing graded Higgs bundle O(1) + O(-1) with unit Higgs field
    on the Legendre cover (level-1 data)."""
    c0, c1 = cover1.charts
    V = sum_of_lines(cover1, [1, -1])
    grad = GradingData([1, 0], {c.cid: fm_id(c.sr, 2) for c in cover1.charts})
    T0 = fm_zero(c0.sr, 2, 2)
    T0[1][0] = Frac(c0.sr, c0.sr.poly_const(1), 1)
    T1 = fm_zero(c1.sr, 2, 2)
    T1[1][0] = Frac(c1.sr, c1.sr.poly_const(-lam1.inverse()), 1)
    from .bundles import HiggsData

    E = GradedHiggsBundle(V, HiggsData({"0": [T0], "1": [T1]}), grad)
    fails = check_bundle(E.bundle, higgs=E.higgs, grading=E.grading)
    if fails:
        raise ValueError(f"flagship bundle invalid: {fails}")
    return E


def deuring_ordinary(ring, lam):
    """The Hasse polynomial sum binom((p-1)/2, i)^2 lam^i; nonzero = ordinary."""
    from math import comb

    p = ring.p
    lam1 = reduce_level(lam, 1) if ring.n > 1 else lam
    acc = ring.at_level(1).zero()
    half = (p - 1) // 2
    for i in range(half + 1):
        acc = acc + (lam1 ** i) * ring.at_level(1).from_int(comb(half, i) ** 2)
    return not acc.is_zero()


def legendre_flow(p=3, m=2, lam_residue=None, f_res=None):
    """The level-1 flagship flow on (P^1, {0, 1, lambda, infinity}).

    Builds the inverse Cartier transform of the uniformizing Higgs bundle,
    locates the Hodge line O(1) inside it, and normalizes the adapted frames
    so the periodicity map is the identity in coordinates.
    """
    W3 = make_witt_ring(p, 3, m, f_res)
    lam_res = lam_residue if lam_residue is not None else reduce_level(W3.gen(), 1)
    lam3 = W3.teichmuller(W3.from_coeffs(lam_res.coeffs))
    cov3 = legendre_cover(W3, lam3)
    frob3 = log_frobenius(cov3)
    cov1 = cov3.at_level(1)
    lam1 = reduce_level(lam3, 1)
    E1 = flagship_higgs(cov1, lam1)
    out = inverse_cartier(E1, frob3.at_level(2))
    V = out.obj.bundle
    frames = find_line_subbundle(V, twist=1)
    B = FilteredDeRhamBundle(V, out.obj.connection, FiltrationData([1, 0], frames))
    B = _normalize_flagship(B, E1, lam1)
    flow = HDFlow(E1, B, frob3)
    fails = verify_flow(flow, check_ic=True)
    if fails:
        raise ValueError(f"flagship flow failed verification: {fails}")
    return flow


def _normalize_flagship(B, E, lam1):
    """Adjust the rank-2 filtration frames so gr(B) equals E exactly."""
    from .bundles import frame_transfer

    cover = B.cover
    ring = cover.ring
    c0, c1 = cover.charts
    reg = cover.region(("0", "1"))
    filt = B.filtration
    M = frame_transfer(B.bundle, filt, "0", "1", reg)
    if not M[1][0].is_zero():
        raise ValueError("found frame is not filtration-adapted")
    t = reg.sr.var("t")
    if not (M[0][0] == t.inverse()):
        raise ValueError("Hodge line transition is not normalized to t^{-1}")
    m = M[1][1].reduced()
    c, exps, loce = _factor_linear_powers(m, [ring.zero(), ring.one(), lam1])
    # m = c t^a (t-1)^b (t-lam)^e / loc^loce with loc = (t-lam) t (t-1)
    a = exps[0] - loce
    b = exps[1] - loce
    e = exps[2] - loce
    if a + b != 1:
        raise ValueError(f"second graded piece has unexpected degree {a + b}")
    # absorb: col2 of P0 by w0 = c (-1)^b (t-lam)^e; col2 of P1 by w1 = (s-1)^b
    w0 = Frac(c0.sr, Poly.from_univariate(ring, [-lam1, ring.one()]), 0) ** e
    w0 = w0 * (c * ring.from_int((-1) ** (b % 2)))
    sm1 = Frac(c1.sr, Poly.from_univariate(ring, [-ring.one(), ring.one()]), 0)
    w1 = sm1 ** b
    P0 = [row[:] for row in filt.frames["0"]]
    P1 = [row[:] for row in filt.frames["1"]]
    for r in range(2):
        P0[r][1] = P0[r][1] * w0
        P1[r][1] = P1[r][1] * w1
    filt2 = FiltrationData([1, 0], {"0": P0, "1": P1})
    B2 = FilteredDeRhamBundle(B.bundle, B.connection, filt2)
    gr = gr_higgs(B2)
    # final constant: scale the Hodge column so the graded Higgs field matches
    ratio = None
    th = gr.higgs.coeffs["0"][0][1][0]
    te = E.higgs.coeffs["0"][0][1][0]
    q = th * te.inverse()
    qr = q.reduced()
    if qr.numer.total_degree() != 0 or qr.e != 0:
        raise ValueError("graded Higgs ratio is not a constant")
    ratio = qr.numer.constant_term()
    P0 = [row[:] for row in filt2.frames["0"]]
    P1 = [row[:] for row in filt2.frames["1"]]
    for r in range(2):
        P0[r][0] = P0[r][0] * ratio.inverse()
        P1[r][0] = P1[r][0] * ratio.inverse()
    filt3 = FiltrationData([1, 0], {"0": P0, "1": P1})
    return FilteredDeRhamBundle(B.bundle, B.connection, filt3)


def trivial_shifted_flow(p=3, m=2, weights=(1, 0), f_res=None):
    """The theta = 0 flow on the trivial bundle over (P^1, {0, infinity})."""
    W3 = make_witt_ring(p, 3, m, f_res)
    cov3 = projective_line(W3, [W3.zero(), "inf"])
    frob3 = log_frobenius(cov3)
    cov1 = cov3.at_level(1)
    r = len(weights)
    E = GradedHiggsBundle(
        sum_of_lines(cov1, [0] * r),
        zero_higgs(cov1, r),
        GradingData(list(weights), {c.cid: fm_id(c.sr, r) for c in cov1.charts}),
    )
    out = inverse_cartier(E, frob3.at_level(2))
    filt = FiltrationData(list(weights), {c.cid: fm_id(c.sr, r) for c in cov1.charts})
    B = FilteredDeRhamBundle(out.obj.bundle, out.obj.connection, filt)
    flow = HDFlow(E, B, frob3)
    fails = verify_flow(flow, check_ic=True)
    if fails:
        raise ValueError(f"trivial shifted flow failed verification: {fails}")
    return flow


# ---------------------------------------------------------------------------
# the parametrized transform on lift pairs, and alpha / beta


def flow_ic(flow, Etil_rec, frob_lift):
    """IC of a candidate pair: a bare lift of the flow's de Rham bundle."""
    return inverse_cartier(Etil_rec.obj, frob_lift, flowdata=(flow.B, None))


def hodge_obstruction_of_pair(flow, Etil_rec, frob_lift, window=None):
    """ob_Fil(IC(pair)): the class in H^1 of the quotient complex."""
    vrec = flow_ic(flow, Etil_rec, frob_lift)
    return obstruction_hodge(flow.B, vrec, window=window or DEFORM_WINDOW), vrec


def canonical_higgs_lift(flow):
    """The glued graded Higgs lift from the obstruction primitive."""
    T = Thickening(flow.frob.cover.at_level(flow.level + 1), flow.cover)
    cls, system = obstruction_graded_higgs(flow.E, T)
    if not isinstance(cls, Coboundary):
        if hasattr(cls, "is_zero") and cls.is_zero():
            raise NotInK("zero class without primitive; enlarge the window")
        raise FlowHypothesisFailure("initial Higgs bundle does not lift")
    return glue_from_primitive(flow.E, T, system, cls.witness)


def alpha_beta_data(flow, window=None):
    """Basis classes and the operational semilinear maps alpha and beta.

    alpha eps := torsor_diff(IC(E~ + eps, X), IC(E~, X)); beta eta the same
    in the thickening direction.  Both are computed on basis classes once
    and extended sigma-semilinearly.
    """
    window = window or DEFORM_WINDOW
    Etil = canonical_higgs_lift(flow)
    frob = flow.frob.at_level(flow.level + 1) if False else flow.frob
    base_ic = flow_ic(flow, Etil, frob)
    gG = torsor_group(flow.E, "graded", window)
    cxT = log_tangent_complex(flow.cover.at_level(1))
    gT = class_group(cxT, 1, window)
    gD = torsor_group(flow.B, "bare", window)
    bare_base = LiftRecord("bare", base_ic.obj, base_ic.base)
    alpha_cols = []
    for eps in gG.basis():
        pert = act(Etil, eps)
        ic2 = flow_ic(flow, pert, frob)
        d = torsor_diff(bare_base, LiftRecord("bare", ic2.obj, base_ic.base), kind="bare")
        alpha_cols.append(d)
    beta_cols = []
    for eta in gT.basis():
        frob2 = perturb_frobenius(flow, eta)
        ic2 = flow_ic(flow, Etil, frob2)
        d = torsor_diff(bare_base, LiftRecord("bare", ic2.obj, base_ic.base), kind="bare")
        beta_cols.append(d)
    return {
        "Etil": Etil,
        "base_ic": base_ic,
        "gG": gG,
        "gT": gT,
        "gD": gD,
        "alpha": alpha_cols,
        "beta": beta_cols,
        "window": window,
    }


def _tangent_eta_cochain(flow, eta_class):
    """A log-tangent 1-cocycle as per-pair coefficient lists (level 1)."""
    rep = eta_class.representative()
    out = {}
    for (p, iota), data in rep.components.items():
        if p != 1:
            continue
        E = data.get((), None)
        if E is None:
            continue
        out[iota] = [E[k][0] for k in range(len(E))]
    return out


def perturb_frobenius(flow, eta_class):
    """The thickening X + eta: perturb the top-level cover's gluing."""
    frob = flow.frob
    coeffs = _tangent_eta_cochain(flow, eta_class)
    topcov = frob.cover
    n = flow.level
    lifted = {}
    for key, cs in coeffs.items():
        reg_top = topcov.region(key)
        lifted[key] = [
            Frac(reg_top.sr, c.numer.lift_level(topcov.level), c.e) for c in cs
        ]
    newcov = perturb_cover(topcov, lifted, n + 1)
    return FrobeniusLifting(newcov, frob.images)


def apply_semilinear(cols, group_src, vec_coords, ring):
    """Evaluate a sigma-semilinear map from stored basis images.

    vec_coords: coefficients of a source class against group_src's basis;
    the image is sum sigma(c_a) cols_a.
    """
    acc = None
    for c, col in zip(vec_coords, cols):
        elem = ring.from_coeffs(tuple(int(v) for v in c))
        term = col.scale(frobenius(elem))
        acc = term if acc is None else acc + term
    if acc is None:
        return None
    return acc


def alpha(data, eps):
    """alpha on an arbitrary class via semilinear extension of the basis images."""
    coords = eps.coordinates()
    out = apply_semilinear(data["alpha"], data["gG"], coords, data["gG"].ring)
    return out if out is not None else data["gD"].zero()


def beta(data, eta):
    coords = eta.coordinates()
    out = apply_semilinear(data["beta"], data["gT"], coords, data["gT"].ring)
    return out if out is not None else data["gD"].zero()
