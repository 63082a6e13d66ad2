"""Compiled inner loops shared by the modules.

Every kernel takes the diagonal of a symmetric tridiagonal matrix whose
off-diagonal entries are all 1.  Kernels are ``nogil`` so that replica loops
can run on a thread pool.
"""

import math

import numba
import numpy as np

_jit = numba.njit(cache=True, nogil=True)

# smallest pivot that can still be inverted without overflow
PIVMIN = 1e-290


@_jit
def sturm_count(d, E):
    """Number of eigenvalues strictly below ``E`` (negative LDL^T pivots)."""
    count = 0
    q = d[0] - E
    if q == 0.0:
        q = PIVMIN
    if q < 0.0:
        count += 1
    for i in range(1, d.size):
        q = d[i] - E - 1.0 / q
        if q == 0.0:
            q = PIVMIN
        if q < 0.0:
            count += 1
    return count


@_jit
def sturm_counts(d, energies):
    out = np.empty(energies.size, dtype=np.int64)
    for k in range(energies.size):
        out[k] = sturm_count(d, energies[k])
    return out


@_jit
def gershgorin_bounds(d):
    n = d.size
    r = 0.0 if n == 1 else (1.0 if n == 2 else 2.0)
    lo = d[0]
    hi = d[0]
    for i in range(1, n):
        lo = min(lo, d[i])
        hi = max(hi, d[i])
    return lo - r, hi + r


@_jit
def _counts_many(d, mids, m, counts):
    # interleaved Sturm recurrences; the inner loop is branch-free
    q = np.empty(m)
    for k in range(m):
        t = d[0] - mids[k]
        t += (t == 0.0) * PIVMIN
        q[k] = t
        counts[k] = t < 0.0
    for i in range(1, d.size):
        di = d[i]
        for k in range(m):
            t = di - mids[k] - 1.0 / q[k]
            t += (t == 0.0) * PIVMIN
            q[k] = t
            counts[k] += t < 0.0


@_jit
def bisect_eigenvalues(d, abstol, reltol):
    """All eigenvalues, ascending, by Sturm bisection.

    Every active interval is halved in the same sweep over ``d``, so the
    per-interval recurrences run side by side.
    """
    n = d.size
    glo, ghi = gershgorin_bounds(d)
    pad = abstol + reltol * max(abs(glo), abs(ghi)) + 1e-12
    lo = np.empty(n)
    hi = np.empty(n)
    clo = np.empty(n, dtype=np.int64)
    chi = np.empty(n, dtype=np.int64)
    lo[0] = glo - pad
    hi[0] = ghi + pad
    clo[0] = 0
    chi[0] = n
    m = 1
    out = np.empty(n)
    mids = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    nlo = np.empty(n)
    nhi = np.empty(n)
    nclo = np.empty(n, dtype=np.int64)
    nchi = np.empty(n, dtype=np.int64)
    while m > 0:
        # retire converged intervals, compact the rest
        a = 0
        for k in range(m):
            if hi[k] - lo[k] <= abstol + reltol * max(abs(lo[k]), abs(hi[k])):
                mid = 0.5 * (lo[k] + hi[k])
                for j in range(clo[k], chi[k]):
                    out[j] = mid
            else:
                lo[a] = lo[k]
                hi[a] = hi[k]
                clo[a] = clo[k]
                chi[a] = chi[k]
                mids[a] = 0.5 * (lo[k] + hi[k])
                a += 1
        m = a
        if m == 0:
            break
        _counts_many(d, mids, m, counts)
        b = 0
        for k in range(m):
            c = counts[k]
            if c > clo[k]:
                nlo[b] = lo[k]
                nhi[b] = mids[k]
                nclo[b] = clo[k]
                nchi[b] = c
                b += 1
            if chi[k] > c:
                nlo[b] = mids[k]
                nhi[b] = hi[k]
                nclo[b] = c
                nchi[b] = chi[k]
                b += 1
        m = b
        lo, nlo = nlo, lo
        hi, nhi = nhi, hi
        clo, nclo = nclo, clo
        chi, nchi = nchi, chi
    return out


@_jit
def gt_factor(diag):
    """LU with partial pivoting of tridiag(1, diag, 1); returns factor arrays."""
    n = diag.size
    d = diag.copy()
    dl = np.ones(max(n - 1, 0))
    du = np.ones(max(n - 1, 0))
    du2 = np.zeros(max(n - 2, 0))
    swap = np.zeros(max(n - 1, 0), dtype=np.bool_)
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if d[i] != 0.0:
                fact = dl[i] / d[i]
                dl[i] = fact
                d[i + 1] -= fact * du[i]
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            temp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = temp - fact * d[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            swap[i] = True
    return d, dl, du, du2, swap


@_jit
def gt_solve(d, dl, du, du2, swap, b):
    n = d.size
    x = b.copy()
    for i in range(n - 1):
        if swap[i]:
            temp = x[i] - dl[i] * x[i + 1]
            x[i] = x[i + 1]
            x[i + 1] = temp
        else:
            x[i + 1] -= dl[i] * x[i]
    x[n - 1] /= d[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i]
    return x


@_jit
def green_column(diag_minus_E, col):
    """Column ``col`` of the inverse, plus (min |pivot|, its index)."""
    n = diag_minus_E.size
    d, dl, du, du2, swap = gt_factor(diag_minus_E)
    imin = 0
    pmin = abs(d[0])
    for i in range(1, n):
        if abs(d[i]) < pmin:
            pmin = abs(d[i])
            imin = i
    rhs = np.zeros(n)
    rhs[col] = 1.0
    if pmin == 0.0:
        return rhs * np.nan, pmin, imin
    return gt_solve(d, dl, du, du2, swap, rhs), pmin, imin


@_jit
def twisted_vector(diag, lam, tiny):
    """Eigenvector for ``lam`` from a twisted factorization of T - lam.

    Top-down and bottom-up Sturm pivots meet at the index r where |gamma_r|
    is smallest; entries away from r are products of pivot ratios, which
    keeps exponentially small tails relatively accurate.
    """
    n = diag.size
    dp = np.empty(n)
    dm = np.empty(n)
    t = diag[0] - lam
    if abs(t) < tiny:
        t = tiny
    dp[0] = t
    for i in range(1, n):
        t = diag[i] - lam - 1.0 / dp[i - 1]
        if abs(t) < tiny:
            t = tiny
        dp[i] = t
    t = diag[n - 1] - lam
    if abs(t) < tiny:
        t = tiny
    dm[n - 1] = t
    for i in range(n - 2, -1, -1):
        t = diag[i] - lam - 1.0 / dm[i + 1]
        if abs(t) < tiny:
            t = tiny
        dm[i] = t
    r = 0
    gbest = np.inf
    for i in range(n):
        g = diag[i] - lam
        if i > 0:
            g -= 1.0 / dp[i - 1]
        if i < n - 1:
            g -= 1.0 / dm[i + 1]
        if abs(g) < gbest:
            gbest = abs(g)
            r = i
    gr = diag[r] - lam
    if r > 0:
        gr -= 1.0 / dp[r - 1]
    if r < n - 1:
        gr -= 1.0 / dm[r + 1]
    z = np.empty(n)
    z[r] = 1.0
    for i in range(r - 1, -1, -1):
        z[i] = -z[i + 1] / dp[i]
    for i in range(r + 1, n):
        z[i] = -z[i - 1] / dm[i]
    return z, gr


@_jit
def _orthogonalize(z, vecs, k0, k1):
    # classical Gram-Schmidt, applied twice
    n = z.size
    for _ in range(2):
        for k in range(k0, k1):
            dot = 0.0
            for i in range(n):
                dot += z[i] * vecs[i, k]
            for i in range(n):
                z[i] -= dot * vecs[i, k]


@_jit
def _norm(z):
    s = 0.0
    for i in range(z.size):
        s += z[i] * z[i]
    return math.sqrt(s)


@_jit
def inverse_iteration(diag, lam, start, cluster_tol, n_iter):
    """Orthonormal eigenvectors (columns) for the ascending eigenvalues ``lam``.

    Each vector starts from the twisted factorization.  Vectors whose
    eigenvalues sit within ``cluster_tol`` of the previous one are
    orthogonalized against the running cluster; if that removes most of the
    vector (numerically coincident eigenvalues) it is recomputed by
    ``n_iter`` steps of inverse iteration from ``start`` inside the cluster's
    orthogonal complement.
    """
    n = diag.size
    m = lam.size
    vecs = np.zeros((n, m))
    scale = 0.0
    for i in range(n):
        scale = max(scale, abs(diag[i]))
    scale += 2.0
    tiny = 2.2e-16 * scale
    cstart = 0
    for j in range(m):
        if j > 0 and lam[j] - lam[j - 1] > cluster_tol:
            cstart = j
        z, gr = twisted_vector(diag, lam[j], tiny)
        # one Rayleigh-quotient correction: (T - lam) z = gr e_r, z_r = 1
        nrm = _norm(z)
        z, gr = twisted_vector(diag, lam[j] + gr / (nrm * nrm), tiny)
        z /= _norm(z)
        if j > cstart:
            _orthogonalize(z, vecs, cstart, j)
            nrm = _norm(z)
            if nrm < 0.5:
                d, dl, du, du2, swap = gt_factor(diag - lam[j])
                for i in range(n):
                    if abs(d[i]) < tiny:
                        d[i] = tiny if d[i] >= 0.0 else -tiny
                z = start.copy()
                for _ in range(n_iter):
                    _orthogonalize(z, vecs, cstart, j)
                    z /= _norm(z)
                    z = gt_solve(d, dl, du, du2, swap, z)
                _orthogonalize(z, vecs, cstart, j)
                nrm = _norm(z)
            z /= nrm
        # deterministic sign: largest-magnitude entry positive
        imax = 0
        for i in range(1, n):
            if abs(z[i]) > abs(z[imax]):
                imax = i
        if z[imax] < 0.0:
            z = -z
        for i in range(n):
            vecs[i, j] = z[i]
    return vecs


@_jit
def correlator_row(vecs, i0):
    """sum_j |psi_j(i0)| |psi_j(i)| for every row index i."""
    n, m = vecs.shape
    out = np.zeros(n)
    for j in range(m):
        w = abs(vecs[i0, j])
        for i in range(n):
            out[i] += w * abs(vecs[i, j])
    return out


@_jit
def lyapunov_chain(v, E, burn):
    """Mean log growth of the normalized transfer-matrix product.

    The first ``burn`` steps are iterated but not accumulated.
    """
    u0 = 1.0
    u1 = 0.0
    s = 0.0
    for n in range(v.size):
        a = (E - v[n]) * u0 - u1
        u1 = u0
        u0 = a
        r = math.sqrt(u0 * u0 + u1 * u1)
        u0 /= r
        u1 /= r
        if n >= burn:
            s += math.log(r)
    return s / (v.size - burn)


@_jit
def lyapunov_chains(v, energies, burn):
    out = np.empty(energies.size)
    for k in range(energies.size):
        out[k] = lyapunov_chain(v, energies[k], burn)
    return out


@_jit
def resonant_mask(v, E, N, centers, log_threshold, pivot_rtol):
    """Resonance flag for each center index of ``v``.

    A center is resonant when either corner entry G(c, c +- N) of the box
    [c-N, c+N] exceeds exp(log_threshold), or the box is numerically singular.
    """
    out = np.zeros(centers.size, dtype=np.bool_)
    m = 2 * N + 1
    box = np.empty(m)
    for k in range(centers.size):
        c = centers[k]
        scale = 2.0
        for i in range(m):
            box[i] = v[c - N + i] - E
            scale = max(scale, abs(box[i]) + 2.0)
        g, pmin, _ = green_column(box, N)
        if not (pmin > pivot_rtol * scale):
            out[k] = True
            continue
        if math.log(abs(g[0])) > log_threshold or math.log(abs(g[m - 1])) > log_threshold:
            out[k] = True
    return out
