"""High-precision reference implementations of the five matrix functions.

These are the ground truth for dataset targets and for certifying the
constructed ReLU networks. All functions take and return dense square real
float64 matrices; complex arithmetic appears only in eigenvalue reporting.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    ConvergenceError,
    DimensionError,
    OverflowRangeError,
    SpectralDomainError,
)
from .linalg import as_matrix, frob, identity, mat_inverse

EIG_MAX_N = 16
SPECTRAL_MARGIN = 1e-6

_SCALE_TARGET = 0.5  # scale until ||A||_F drops below this


@dataclass
class SpectrumInfo:
    """Eigenvalues plus the distances that gate the sign/log domains.

    min_real_abs: distance of the spectrum from the imaginary axis.
    min_negreal_dist: distance from the closed negative real axis.
    """

    eigenvalues: np.ndarray = field(repr=False)
    min_real_abs: float = 0.0
    min_negreal_dist: float = 0.0

    def sign_domain_ok(self, margin: float = SPECTRAL_MARGIN) -> bool:
        return self.min_real_abs > margin

    def log_domain_ok(self, margin: float = SPECTRAL_MARGIN) -> bool:
        return self.min_negreal_dist > margin


def eigenvalues(a, max_sweeps_per_eig: int = 60) -> SpectrumInfo:
    """All eigenvalues via Hessenberg reduction plus shifted QR (n <= 16)."""
    a = as_matrix(a)
    n = a.shape[0]
    if n > EIG_MAX_N:
        raise DimensionError(f"eigenvalue solver limited to n <= {EIG_MAX_N}")
    if n == 1:
        eigs = a.astype(np.complex128)[0]
    else:
        h = kernels.hessenberg(a) if n > 2 else a.copy()
        eigs, ok = kernels.qr_eigvals(h, max_sweeps_per_eig)
        if not ok:
            raise ConvergenceError(
                "QR iteration did not converge; input looks degenerate"
            )
        # damp imaginary round-off so conjugate-pair noise does not leak
        # into the domain distances
        im_tol = 1e-13 * max(frob(a), 1e-300)
        im = eigs.imag.copy()
        im[np.abs(im) <= im_tol] = 0.0
        eigs = eigs.real + 1j * im
    re, im = eigs.real, eigs.imag
    negreal = np.where(re <= 0.0, np.abs(im), np.abs(eigs))
    return SpectrumInfo(
        eigenvalues=eigs,
        min_real_abs=float(np.min(np.abs(re))),
        min_negreal_dist=float(np.min(negreal)),
    )


def _check_finite_result(r: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(r).all():
        raise OverflowRangeError(f"{what} overflowed the float64 range")
    return r


def _taylor_exp(x: np.ndarray, rtol: float = 1e-18, max_terms: int = 40):
    """Plain Taylor sum of e^X, accurate to the machine tail for small X."""
    n = x.shape[0]
    acc = identity(n)
    term = identity(n)
    for k in range(1, max_terms + 1):
        term = term @ x / k
        acc = acc + term
        if frob(term) <= rtol * frob(acc):
            break
    return acc


def mat_exp(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Taylor core."""
    a = as_matrix(a)
    norm = frob(a)
    s = 0
    while norm / (1 << s) > _SCALE_TARGET:
        s += 1
    e = _taylor_exp(a / (1 << s))
    for _ in range(s):
        e = e @ e
    return _check_finite_result(e, "exp")


def _sqrtm_denman_beavers(a, rtol: float = 1e-13, max_iter: int = 60):
    """Principal square root via the coupled Denman-Beavers iteration."""
    y = a.copy()
    z = identity(a.shape[0])
    for _ in range(max_iter):
        y_next = 0.5 * (y + mat_inverse(z))
        z_next = 0.5 * (z + mat_inverse(y))
        delta = frob(y_next - y)
        y, z = y_next, z_next
        if delta <= rtol * frob(y):
            return y
    raise ConvergenceError("square-root iteration did not converge")


def mat_log(a, margin: float = SPECTRAL_MARGIN) -> np.ndarray:
    """Principal logarithm by inverse scaling and squaring.

    Repeated principal square roots bring A within ||A - I||_F < 0.5, the
    alternating series finishes, and the result is scaled back by 2^s.
    """
    a = as_matrix(a)
    n = a.shape[0]
    if n <= EIG_MAX_N:
        spec = eigenvalues(a)
        if not spec.log_domain_ok(margin):
            raise SpectralDomainError(
                "spectrum touches the closed negative real axis"
            )
    x = a.copy()
    s = 0
    while frob(x - identity(n)) >= 0.5:
        x = _sqrtm_denman_beavers(x)
        s += 1
        if s > 60:
            raise ConvergenceError("square-root scaling did not contract")
    # log(X) = sum_k (-1)^{k+1} (X-I)^k / k for ||X-I|| < 1
    d = x - identity(n)
    acc = np.zeros_like(d)
    term = identity(n)
    for k in range(1, 120):
        term = term @ d
        contrib = term / k if k % 2 == 1 else -term / k
        acc = acc + contrib
        if frob(term) / k <= 1e-18 * max(frob(acc), 1e-300):
            break
    return _check_finite_result(acc * (1 << s), "log")


def mat_sign(a, margin: float = SPECTRAL_MARGIN, max_iter: int = 100) -> np.ndarray:
    """Matrix sign via the determinant-scaled Newton iteration.

    X_{k+1} = (mu X_k + (mu X_k)^{-1}) / 2 with mu = |det X_k|^{-1/n},
    stopping when successive iterates agree to 1e-12 relative.
    """
    a = as_matrix(a)
    n = a.shape[0]
    if n <= EIG_MAX_N:
        spec = eigenvalues(a)
        if not spec.sign_domain_ok(margin):
            raise SpectralDomainError("spectrum touches the imaginary axis")
    x = a.copy()
    for _ in range(max_iter):
        d, min_piv = kernels.lu_det(x)
        if min_piv <= 1e-14 or d == 0.0:
            raise ConvergenceError("sign iterate became numerically singular")
        mu = abs(d) ** (-1.0 / n)
        mx = mu * x
        x_next = 0.5 * (mx + mat_inverse(mx, pivot_tol=1e-14))
        delta = frob(x_next - x)
        x = x_next
        if delta <= 1e-12 * frob(x):
            return _check_finite_result(x, "sign")
    raise ConvergenceError("sign iteration hit the iteration cap")


def _taylor_sin_cos(x: np.ndarray, max_terms: int = 40):
    """Taylor sums of sin(X), cos(X) for small X, to the machine tail."""
    n = x.shape[0]
    x2 = x @ x
    sin_acc = x.copy()
    cos_acc = identity(n)
    sin_term = x.copy()
    cos_term = identity(n)
    for k in range(1, max_terms + 1):
        cos_term = -cos_term @ x2 / ((2 * k - 1) * (2 * k))
        cos_acc = cos_acc + cos_term
        sin_term = -sin_term @ x2 / ((2 * k) * (2 * k + 1))
        sin_acc = sin_acc + sin_term
        if max(frob(sin_term), frob(cos_term)) <= 1e-18:
            break
    return sin_acc, cos_acc


def _sin_cos_scaled(a):
    a = as_matrix(a)
    norm = frob(a)
    s = 0
    while norm / (1 << s) > _SCALE_TARGET:
        s += 1
    sin_x, cos_x = _taylor_sin_cos(a / (1 << s))
    eye = identity(a.shape[0])
    for _ in range(s):
        # double angle: sin(2X) = 2 sin X cos X, cos(2X) = 2 cos^2 X - I
        sin_x, cos_x = 2.0 * (sin_x @ cos_x), 2.0 * (cos_x @ cos_x) - eye
    return (
        _check_finite_result(sin_x, "sin"),
        _check_finite_result(cos_x, "cos"),
    )


def mat_sin(a) -> np.ndarray:
    """Matrix sine by argument scaling plus double-angle recurrences."""
    return _sin_cos_scaled(a)[0]


def mat_cos(a) -> np.ndarray:
    """Matrix cosine by argument scaling plus double-angle recurrences."""
    return _sin_cos_scaled(a)[1]


ORACLES = {
    "exp": mat_exp,
    "log": mat_log,
    "sign": mat_sign,
    "sin": mat_sin,
    "cos": mat_cos,
}

FUNCTION_TAGS = tuple(ORACLES)


def oracle(tag: str):
    if tag not in ORACLES:
        raise KeyError(f"unknown function tag {tag!r}; expected one of {FUNCTION_TAGS}")
    return ORACLES[tag]
