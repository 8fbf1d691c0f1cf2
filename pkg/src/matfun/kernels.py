"""Hot numeric kernels: Hessenberg/QR eigenvalues, small-matrix elimination,
batch mantissa quantization, and the dense ReLU-stack forward step.

The small-matrix kernels are written once in numba-compatible loop form;
when the numba backend is active (see `matfun.backend`) they are @njit
compiled, otherwise the same body runs as plain Python, which is adequate
for n <= 16. The batch kernels (`affine_relu`, `sme_quantize_batch`) carry
a separate vectorized numpy fallback because a Python loop over 10^5-row
batches is not. `benchmarks/bench_kernels.py` times both backends.
"""

import numpy as np

from .backend import USE_NUMBA

if USE_NUMBA:
    from numba import njit

    def _compiled(fn):
        return njit(cache=True)(fn)
else:

    def _compiled(fn):
        return fn


# Shared power-of-ten table so both backends quantize identically. Raw
# exponents are clamped to where the table stays finite and nonzero; any
# magnitude that far out is unencodable under every scheme anyway.
_POW10_OFFSET = 325
with np.errstate(over="ignore"):
    _POW10 = 10.0 ** np.arange(
        -_POW10_OFFSET, _POW10_OFFSET + 1, dtype=np.float64
    )
_EXP_LO, _EXP_HI = -315, 308


def _hessenberg_impl(a):
    """Householder reduction of a real square matrix to upper Hessenberg."""
    n = a.shape[0]
    h = a.copy()
    for k in range(n - 2):
        sigma = 0.0
        for i in range(k + 1, n):
            sigma += h[i, k] * h[i, k]
        sigma = np.sqrt(sigma)
        if sigma == 0.0:
            continue
        v = np.zeros(n)
        alpha = h[k + 1, k]
        if alpha < 0.0:
            sigma = -sigma
        v[k + 1] = alpha + sigma
        for i in range(k + 2, n):
            v[i] = h[i, k]
        vv = 0.0
        for i in range(k + 1, n):
            vv += v[i] * v[i]
        if vv == 0.0:
            continue
        beta = 2.0 / vv
        # H <- (I - beta v v^T) H
        for j in range(k, n):
            s = 0.0
            for i in range(k + 1, n):
                s += v[i] * h[i, j]
            s *= beta
            for i in range(k + 1, n):
                h[i, j] -= s * v[i]
        # H <- H (I - beta v v^T)
        for i in range(n):
            s = 0.0
            for j in range(k + 1, n):
                s += h[i, j] * v[j]
            s *= beta
            for j in range(k + 1, n):
                h[i, j] -= s * v[j]
        for i in range(k + 2, n):
            h[i, k] = 0.0
    return h


def _qr_eigvals_impl(hr, max_sweeps_per_eig):
    """Shifted complex QR iteration on an upper Hessenberg matrix.

    Returns (eigenvalues, converged). Wilkinson shifts, Givens rotations,
    deflation from the bottom; an exceptional shift breaks rare stalls.
    """
    n = hr.shape[0]
    h = hr.astype(np.complex128)
    eigs = np.zeros(n, dtype=np.complex128)
    cs = np.zeros(n, dtype=np.float64)
    sn = np.zeros(n, dtype=np.complex128)
    eps = 2.220446049250313e-16
    hi = n - 1
    while hi >= 0:
        if hi == 0:
            eigs[0] = h[0, 0]
            break
        its = 0
        deflated = False
        while not deflated:
            # find the top of the unreduced block ending at hi
            lo = hi
            while lo > 0:
                s = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
                if s == 0.0:
                    s = 1.0
                if abs(h[lo, lo - 1]) <= eps * s:
                    h[lo, lo - 1] = 0.0
                    break
                lo -= 1
            if lo == hi:
                eigs[hi] = h[hi, hi]
                hi -= 1
                deflated = True
                continue
            its += 1
            if its > max_sweeps_per_eig:
                return eigs, False
            # Wilkinson shift from the trailing 2x2 block
            a = h[hi - 1, hi - 1]
            b = h[hi - 1, hi]
            c = h[hi, hi - 1]
            d = h[hi, hi]
            if its % 15 == 0:
                mu = d + 0.75 * abs(c)
            else:
                tr = a + d
                disc = np.sqrt(tr * tr - 4.0 * (a * d - b * c))
                mu1 = 0.5 * (tr + disc)
                mu2 = 0.5 * (tr - disc)
                if abs(mu1 - d) < abs(mu2 - d):
                    mu = mu1
                else:
                    mu = mu2
            for i in range(lo, hi + 1):
                h[i, i] -= mu
            # QR by Givens: zero the subdiagonal, collect rotations
            for i in range(lo, hi):
                f = h[i, i]
                g = h[i + 1, i]
                af = abs(f)
                ag = abs(g)
                if ag == 0.0:
                    cs[i] = 1.0
                    sn[i] = 0.0
                    continue
                r = np.sqrt(af * af + ag * ag)
                if af == 0.0:
                    cs[i] = 0.0
                    sn[i] = np.conj(g) / r
                    h[i, i] = r + 0.0j
                else:
                    u = f / af
                    cs[i] = af / r
                    sn[i] = u * np.conj(g) / r
                    h[i, i] = u * r
                h[i + 1, i] = 0.0
                for j in range(i + 1, hi + 1):
                    t0 = h[i, j]
                    t1 = h[i + 1, j]
                    h[i, j] = cs[i] * t0 + sn[i] * t1
                    h[i + 1, j] = -np.conj(sn[i]) * t0 + cs[i] * t1
            # H <- R Q^H (apply the conjugated rotations from the right)
            for i in range(lo, hi):
                top = i + 1
                if top > hi:
                    top = hi
                for r_ in range(lo, top + 1):
                    t0 = h[r_, i]
                    t1 = h[r_, i + 1]
                    h[r_, i] = t0 * cs[i] + t1 * np.conj(sn[i])
                    h[r_, i + 1] = -t0 * sn[i] + t1 * cs[i]
            for i in range(lo, hi + 1):
                h[i, i] += mu
    return eigs, True


def _gauss_jordan_impl(a):
    """Gauss-Jordan inverse with partial pivoting.

    Returns (inverse, smallest absolute pivot). The caller decides whether
    the pivot cleared the singularity threshold.
    """
    n = a.shape[0]
    m = np.zeros((n, 2 * n))
    for i in range(n):
        for j in range(n):
            m[i, j] = a[i, j]
        m[i, n + i] = 1.0
    min_piv = np.inf
    for col in range(n):
        p = col
        best = abs(m[col, col])
        for r in range(col + 1, n):
            v = abs(m[r, col])
            if v > best:
                best = v
                p = r
        if best < min_piv:
            min_piv = best
        if best == 0.0:
            return m[:, n:].copy(), 0.0
        if p != col:
            for j in range(2 * n):
                t = m[col, j]
                m[col, j] = m[p, j]
                m[p, j] = t
        piv = m[col, col]
        inv_piv = 1.0 / piv
        for j in range(2 * n):
            m[col, j] *= inv_piv
        for r in range(n):
            if r == col:
                continue
            f = m[r, col]
            if f != 0.0:
                for j in range(2 * n):
                    m[r, j] -= f * m[col, j]
    return m[:, n:].copy(), min_piv


def _lu_det_impl(a):
    """Determinant via partial-pivot LU. Returns (det, smallest pivot)."""
    n = a.shape[0]
    u = a.copy()
    det = 1.0
    min_piv = np.inf
    for col in range(n):
        p = col
        best = abs(u[col, col])
        for r in range(col + 1, n):
            v = abs(u[r, col])
            if v > best:
                best = v
                p = r
        if best < min_piv:
            min_piv = best
        if best == 0.0:
            return 0.0, 0.0
        if p != col:
            for j in range(n):
                t = u[col, j]
                u[col, j] = u[p, j]
                u[p, j] = t
            det = -det
        piv = u[col, col]
        det *= piv
        for r in range(col + 1, n):
            f = u[r, col] / piv
            if f != 0.0:
                for j in range(col, n):
                    u[r, j] -= f * u[col, j]
    return det, min_piv


def _sme_quantize_impl(xs, pow10, offset):
    """Quantize finite floats to sign/mantissa/exponent with a 3-digit
    mantissa, rounding half away from zero. Zeros are flagged, not encoded.
    """
    n = xs.shape[0]
    sign = np.zeros(n, dtype=np.int8)
    mant = np.zeros(n, dtype=np.int32)
    expo = np.zeros(n, dtype=np.int32)
    is_zero = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        x = xs[i]
        if x == 0.0:
            is_zero[i] = True
            continue
        ax = abs(x)
        sign[i] = 1 if x > 0.0 else -1
        e = int(np.floor(np.log10(ax))) - 2
        if e < -315:
            e = -315
        elif e > 308:
            e = 308
        m = int(np.floor(ax / pow10[e + offset] + 0.5))
        for _ in range(4):
            if m == 1000:
                m = 100
                e += 1
            elif m > 1000 and e < 308:
                e += 1
                m = int(np.floor(ax / pow10[e + offset] + 0.5))
            elif 0 <= m < 100 and e > -315:
                e -= 1
                m = int(np.floor(ax / pow10[e + offset] + 0.5))
            else:
                break
        mant[i] = m
        expo[i] = e
    return sign, mant, expo, is_zero


def _affine_relu_numpy(x, wt, b, apply_relu):
    """One dense layer on a batch: relu(x @ W^T + b), vectorized."""
    y = x @ wt + b
    if apply_relu:
        np.maximum(y, 0.0, out=y)
    return y


def _sme_quantize_numpy(xs, pow10, offset):
    """Vectorized twin of `_sme_quantize_impl` (same fixed point)."""
    is_zero = xs == 0.0
    safe = np.where(is_zero, 1.0, np.abs(xs))
    sign = np.sign(xs).astype(np.int8)
    expo = np.floor(np.log10(safe)).astype(np.int64) - 2
    np.clip(expo, _EXP_LO, _EXP_HI, out=expo)
    mant = np.floor(safe / pow10[expo + offset] + 0.5).astype(np.int64)
    for _ in range(4):
        carry = mant == 1000
        mant[carry] = 100
        expo[carry] += 1
        high = (mant > 1000) & (expo < _EXP_HI)
        low = (mant >= 0) & (mant < 100) & ~is_zero & (expo > _EXP_LO)
        if not (high.any() or low.any()):
            break
        expo[high] += 1
        expo[low] -= 1
        redo = high | low
        mant[redo] = np.floor(
            safe[redo] / pow10[expo[redo] + offset] + 0.5
        ).astype(np.int64)
    mant[is_zero] = 0
    expo[is_zero] = 0
    sign[is_zero] = 0
    return sign, mant.astype(np.int32), expo.astype(np.int32), is_zero


def _affine_relu_loop(x, wt, b, apply_relu):
    """Fused twin of `_affine_relu_numpy` for the numba backend."""
    y = np.dot(x, wt)
    rows, cols = y.shape
    for i in range(rows):
        for j in range(cols):
            v = y[i, j] + b[j]
            if apply_relu and v < 0.0:
                v = 0.0
            y[i, j] = v
    return y


hessenberg = _compiled(_hessenberg_impl)
qr_eigvals = _compiled(_qr_eigvals_impl)
gauss_jordan = _compiled(_gauss_jordan_impl)
lu_det = _compiled(_lu_det_impl)

if USE_NUMBA:
    _sme_quantize = _compiled(_sme_quantize_impl)
    affine_relu = _compiled(_affine_relu_loop)
else:
    _sme_quantize = None
    affine_relu = _affine_relu_numpy


def sme_quantize_batch(xs):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    if USE_NUMBA:
        return _sme_quantize(xs, _POW10, _POW10_OFFSET)
    return _sme_quantize_numpy(xs, _POW10, _POW10_OFFSET)
