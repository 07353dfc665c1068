"""Linear algebra over the chain rings W_n(F_q).

Matrices are stored as numpy int64 arrays of shape (rows, cols, m): each
entry is the coefficient vector of a ring element.  Row spans are
canonicalized by the Howell normal form, which generalizes reduced row
echelon form to Z/p^n-algebras: every leading entry is a power p^v, the
entries above a pivot are reduced modulo p^v, and for every pivot of
positive valuation the span also contains its p^{n-v} multiple with the
leading column cleared.  Two matrices have the same row span exactly when
their Howell forms are identical, so class equality downstream is a byte
comparison.
"""

from __future__ import annotations

import numpy as np

from .witt import WittElem


class DimensionMismatch(ValueError):
    pass


class NotContained(ValueError):
    """B is not a submodule of A."""


class NoSolution:
    """Returned by solve when the system is inconsistent (a value, not an error)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NoSolution"


NO_SOLUTION = NoSolution()


# ---------------------------------------------------------------------------
# elementwise ring operations on (..., m) coefficient arrays


def _mul_tensor(ring):
    T = getattr(ring, "_linalg_tensor", None)
    if T is None:
        if ring.modulus >= 1 << 20:
            raise OverflowError("matrix arithmetic is limited to small truncation levels")
        m = ring.m
        T = np.zeros((m, m, m), dtype=np.int64)
        for i in range(m):
            for j in range(m):
                T[i, j] = ring._mul_table[i + j]
        ring._linalg_tensor = T
    return T


def elem_mul(ring, a, b):
    """Product of element arrays (broadcasting over leading axes)."""
    T = _mul_tensor(ring)
    return np.einsum("...i,...j,ijk->...k", a, b, T) % ring.modulus


def mat_mul(ring, A, B):
    T = _mul_tensor(ring)
    if A.shape[1] != B.shape[0]:
        raise DimensionMismatch(f"{A.shape} x {B.shape}")
    return np.einsum("rqi,qcj,ijk->rck", A, B, T) % ring.modulus


def entry_val(ring, entry):
    """p-adic valuation of an element given by its coefficient vector."""
    p, n = ring.p, ring.n
    v = n
    for c in entry:
        c = int(c)
        if c == 0:
            continue
        w = 0
        while c % p == 0:
            c //= p
            w += 1
        if w < v:
            v = w
    return v


def _entry_elem(ring, entry):
    return WittElem(ring, tuple(int(c) for c in entry))


def _scale_rows(ring, c_entry, rows):
    """c * rows for a single element c and an array of rows (..., m)."""
    T = _mul_tensor(ring)
    return np.einsum("i,...j,ijk->...k", c_entry, rows, T) % ring.modulus


def zeros(ring, rows, cols):
    return np.zeros((rows, cols, ring.m), dtype=np.int64)


def identity(ring, k):
    M = zeros(ring, k, k)
    M[np.arange(k), np.arange(k), 0] = 1
    return M


def from_elems(ring, grid):
    rows = len(grid)
    cols = len(grid[0]) if rows else 0
    M = zeros(ring, rows, cols)
    for r, row in enumerate(grid):
        for c, e in enumerate(row):
            M[r, c] = e.coeffs
    return M


def to_elems(ring, M):
    return [[_entry_elem(ring, M[r, c]) for c in range(M.shape[1])] for r in range(M.shape[0])]


class RingMatrix:
    """A matrix over a Witt ring; thin wrapper over the coefficient array."""

    def __init__(self, ring, data):
        data = np.asarray(data, dtype=np.int64) % ring.modulus
        if data.ndim != 3 or data.shape[2] != ring.m:
            raise DimensionMismatch(f"bad matrix shape {data.shape}")
        self.ring = ring
        self.data = data

    @classmethod
    def from_rows(cls, ring, grid):
        return cls(ring, from_elems(ring, grid))

    @property
    def shape(self):
        return self.data.shape[:2]

    def entry(self, r, c):
        return _entry_elem(self.ring, self.data[r, c])

    def __matmul__(self, other):
        return RingMatrix(self.ring, mat_mul(self.ring, self.data, other.data))

    def __eq__(self, other):
        return (
            isinstance(other, RingMatrix)
            and other.ring is self.ring
            and other.data.shape == self.data.shape
            and bool(np.array_equal(other.data, self.data))
        )

    def __repr__(self):
        return f"RingMatrix{self.shape} over {self.ring}"


# ---------------------------------------------------------------------------
# Howell normal form


class SubmoduleBasis:
    """Rows in Howell normal form; the canonical representative of a row span."""

    def __init__(self, ring, rows, ambient, pivots):
        self.ring = ring
        self.rows = rows            # (k, ambient, m) array, Howell-reduced
        self.ambient = ambient
        self.pivots = pivots        # list of (col, valuation), one per row

    def length(self):
        """Composition length of the span (number of F_q factors)."""
        n = self.ring.n
        return sum(n - v for (_, v) in self.pivots)

    def __eq__(self, other):
        return (
            isinstance(other, SubmoduleBasis)
            and other.ring is self.ring
            and other.ambient == self.ambient
            and other.rows.shape == self.rows.shape
            and bool(np.array_equal(other.rows, self.rows))
        )

    def __repr__(self):
        return f"SubmoduleBasis(rank {len(self.pivots)} in R^{self.ambient})"


def _first_nonzero(row):
    nz = np.nonzero(row.any(axis=1))[0]
    return int(nz[0]) if len(nz) else None


def _row_key(row):
    return row.tobytes()


def _vals_at(ring, entries):
    """Vector of p-adic valuations of an (N, m) array of entries."""
    p, n = ring.p, ring.n
    N = entries.shape[0]
    vals = np.full(N, n, dtype=np.int64)
    alive = entries.any(axis=1)
    rem = entries.copy()
    for v in range(n):
        div = (rem % p == 0).all(axis=1) & alive
        exact = alive & ~div
        vals[exact & (vals == n)] = v
        alive = alive & div
        if not alive.any():
            break
        rem = rem // p
        rem[~alive] = 1
    return vals


def howell_array(ring, mat):
    """Howell form of the row span of `mat` (array form).

    Column sweep with vectorized elimination: at each column the minimal
    valuation row becomes the pivot (normalized so the leading entry is
    p^v), all other rows are cleared at that column in one pass, and for
    v > 0 the Howell completion row p^{n-v} * pivot joins the workforce.
    Returns (rows, pivots) with entries above pivots canonically reduced.
    """
    mod = ring.modulus
    p, n = ring.p, ring.n
    ambient = mat.shape[1] if mat.ndim >= 2 else 0
    m = ring.m
    if mat.size == 0:
        return np.zeros((0, ambient, m), dtype=np.int64), []
    T = _mul_tensor(ring)
    A = (mat.copy() % mod).reshape(mat.shape[0], ambient, m)
    pivots = []  # (col, val, row)
    for col in range(ambient):
        if A.shape[0] == 0:
            break
        colvals = A[:, col]
        nz = colvals.any(axis=1)
        if not nz.any():
            continue
        vals = _vals_at(ring, colvals)
        v = int(vals[nz].min())
        cands = np.nonzero(nz & (vals == v))[0]
        pick = int(min(cands, key=lambda i: A[i].tobytes()))
        u = _entry_elem(ring, A[pick, col] // (p ** v))
        uinv = np.asarray(u.inverse().coeffs, dtype=np.int64)
        prow = _scale_rows(ring, uinv, A[pick])
        keep = np.ones(A.shape[0], dtype=bool)
        keep[pick] = False
        A = A[keep]
        if A.shape[0]:
            cs = A[:, col] // (p ** v)
            hit = cs.any(axis=1)
            if hit.any():
                upd = np.einsum("ni,lj,ijk->nlk", cs[hit], prow, T) % mod
                A[hit] = (A[hit] - upd) % mod
        if v > 0:
            comp = (prow * (p ** (n - v))) % mod
            if comp.any():
                A = np.concatenate([A, comp.reshape(1, ambient, m)], axis=0)
        live = A.any(axis=(1, 2))
        if not live.all():
            A = A[live]
        pivots.append((col, v, prow))
    if not pivots:
        return np.zeros((0, ambient, m), dtype=np.int64), []
    rows = np.stack([pr for (_, _, pr) in pivots])
    # upward canonical reduction, left pivots first
    for idx, (col, v, _) in enumerate(pivots):
        prow = rows[idx]
        cs = rows[:, col] // (p ** v)
        cs[idx] = 0
        hit = cs.any(axis=1)
        if hit.any():
            upd = np.einsum("ni,lj,ijk->nlk", cs[hit], prow, T) % mod
            rows[hit] = (rows[hit] - upd) % mod
    plist = [(col, v) for (col, v, _) in pivots]
    return rows, plist


def howell_form(M):
    """Canonical Howell basis of the row span of M."""
    if isinstance(M, RingMatrix):
        ring, data = M.ring, M.data
    else:
        raise TypeError("howell_form expects a RingMatrix")
    rows, pivots = howell_array(ring, data)
    return SubmoduleBasis(ring, rows, data.shape[1], pivots)


def reduce_mod_span(basis, vec):
    """Canonical representative of vec modulo the span of a Howell basis.

    Entries at pivot columns are reduced into [0, p^v); deterministic, and
    constant on cosets, so equal cosets give byte-equal representatives.
    """
    ring = basis.ring
    p, mod = ring.p, ring.modulus
    res = vec.copy() % mod
    for row, (j, v) in zip(basis.rows, basis.pivots):
        entry = res[j] % mod
        c = entry // (p ** v)
        if c.any():
            res = (res - _scale_rows(ring, c, row)) % mod
    return res


def in_span(basis, vec):
    return not reduce_mod_span(basis, vec).any()


def express_in_span(basis, vec):
    """Coefficients c with sum(c_i * rows_i) = vec, or NO_SOLUTION."""
    ring = basis.ring
    p, mod = ring.p, ring.modulus
    res = vec.copy() % mod
    coeffs = zeros(ring, 1, len(basis.pivots))[0]
    for i, (row, (j, v)) in enumerate(zip(basis.rows, basis.pivots)):
        entry = res[j] % mod
        if entry_val(ring, entry) < v:
            return NO_SOLUTION
        c = entry // (p ** v)
        coeffs[i] = c
        if c.any():
            res = (res - _scale_rows(ring, c, row)) % mod
    if res.any():
        return NO_SOLUTION
    return coeffs


def kernel_basis(M):
    """Canonical basis of {v : M v = 0} (column-vector kernel)."""
    if not isinstance(M, RingMatrix):
        raise TypeError("kernel_basis expects a RingMatrix")
    ring = M.ring
    r, c = M.shape
    aug = np.concatenate([M.data.transpose(1, 0, 2), identity(ring, c)], axis=1)
    rows, pivots = howell_array(ring, aug)
    kern = [row[r:] for row, (j, _) in zip(rows, pivots) if j >= r]
    if not kern:
        return SubmoduleBasis(ring, zeros(ring, 0, c), c, [])
    kr, kp = howell_array(ring, np.array(kern))
    return SubmoduleBasis(ring, kr, c, kp)


def solve(M, b):
    """A deterministic solution v of M v = b, or NO_SOLUTION."""
    if not isinstance(M, RingMatrix):
        raise TypeError("solve expects a RingMatrix")
    ring = M.ring
    r, c = M.shape
    b = np.asarray(b, dtype=np.int64)
    if b.shape != (r, ring.m):
        raise DimensionMismatch(f"rhs shape {b.shape}, expected {(r, ring.m)}")
    aug = np.concatenate([M.data.transpose(1, 0, 2), identity(ring, c)], axis=1)
    rows, pivots = howell_array(ring, aug)
    p, mod = ring.p, ring.modulus
    res = b.copy() % mod
    vsol = zeros(ring, 1, c)[0]
    for row, (j, v) in zip(rows, pivots):
        if j >= r:
            break
        entry = res[j] % mod
        if not entry.any():
            continue
        if entry_val(ring, entry) < v:
            return NO_SOLUTION
        coef = entry // (p ** v)
        res = (res - _scale_rows(ring, coef, row[:r])) % mod
        vsol = (vsol + _scale_rows(ring, coef, row[r:])) % mod
    if res.any():
        return NO_SOLUTION
    return vsol


def quotient_dim(A, B):
    """Composition length of A/B for Howell bases with B contained in A."""
    for row in B.rows:
        if not in_span(A, row):
            raise NotContained("B is not contained in A")
    return A.length() - B.length()


def span_sum(ring, bases, ambient):
    """Howell basis of the sum of spans."""
    allrows = [b.rows for b in bases if len(b.pivots)]
    if not allrows:
        return SubmoduleBasis(ring, zeros(ring, 0, ambient), ambient, [])
    rows, pivots = howell_array(ring, np.concatenate(allrows, axis=0))
    return SubmoduleBasis(ring, rows, ambient, pivots)


def image_basis(M):
    """Canonical basis of the column-space image {Mv}, as row vectors."""
    ring = M.ring
    rows, pivots = howell_array(ring, M.data.transpose(1, 0, 2))
    return SubmoduleBasis(ring, rows, M.shape[0], pivots)


def smith_diagonal(M):
    """Diagnostic invariant factors p^{v_1} <= ... over Z/p^n (Smith form)."""
    ring = M.ring
    p, n, mod = ring.p, ring.n, ring.modulus
    A = M.data.copy() % mod
    diag = []
    r0 = c0 = 0
    rows, cols = M.shape
    while r0 < rows and c0 < cols:
        best = None
        for i in range(r0, rows):
            for j in range(c0, cols):
                if A[i, j].any():
                    v = entry_val(ring, A[i, j])
                    if best is None or v < best[0]:
                        best = (v, i, j)
        if best is None:
            break
        v, i, j = best
        A[[r0, i]] = A[[i, r0]]
        A[:, [c0, j]] = A[:, [j, c0]]
        u = _entry_elem(ring, A[r0, c0] // (p ** v))
        uinv = np.asarray(u.inverse().coeffs, dtype=np.int64)
        A[r0] = _scale_rows(ring, uinv, A[r0])
        for i in range(r0 + 1, rows):
            if A[i, c0].any():
                c = A[i, c0] // (p ** v)
                A[i] = (A[i] - _scale_rows(ring, c, A[r0])) % mod
        for j in range(c0 + 1, cols):
            if A[r0, j].any():
                c = A[r0, j] // (p ** v)
                A[:, j] = (A[:, j] - _scale_rows(ring, c, A[:, c0])) % mod
        diag.append(v)
        r0 += 1
        c0 += 1
    return diag
