"""
Forward periodic NFT.

Zakharov-Shabat system over one period of ``q`` (dimensionless)::

    v_t = [[-i lam, q], [-conj(q), i lam]] v

with ``q`` piecewise constant on each sample.  The main spectrum is the set of
roots of ``Delta(lam)^2 = 1`` in the upper half plane, where
``Delta = trace(M) / 2`` is the Floquet discriminant of the monodromy ``M``.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "Monodromy",
    "SpectrumEstimate",
    "ForwardError",
    "monodromy",
    "floquet_discriminant",
    "discriminant_with_derivative",
    "find_main_spectrum",
    "reduce_spectrum",
    "auto_search_box",
]


class ForwardError(ValueError):
    pass


@dataclass(frozen=True)
class Monodromy:
    m: np.ndarray
    lam: complex

    @property
    def det(self):
        return np.linalg.det(self.m)

    @property
    def half_trace(self):
        return 0.5 * (self.m[0, 0] + self.m[1, 1])


@dataclass(frozen=True)
class SpectrumEstimate:
    points: np.ndarray
    residuals: np.ndarray
    shortfall: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.points)


# ------------------------------------------------------------------ kernels

@njit(cache=True)
def _cs(s, dt):
    """cos(k dt), sin(k dt)/k and their s-derivatives, s = k^2."""
    x = s * dt * dt
    if abs(x) < 1e-2:
        # series in x (Horner form), truncation error below 1e-16
        C = 1.0 + x * (-1.0 / 2 + x * (1.0 / 24 + x * (-1.0 / 720 + x * (1.0 / 40320 - x / 3628800))))
        S = dt * (1.0 + x * (-1.0 / 6 + x * (1.0 / 120 + x * (-1.0 / 5040 + x * (1.0 / 362880
                                                                               - x / 39916800)))))
        dS = dt * dt * dt * (-1.0 / 6 + x * (2.0 / 120 + x * (-3.0 / 5040 + x * (4.0 / 362880 + x * (
            -5.0 / 39916800 + x * 6.0 / 6227020800)))))
    else:
        k = np.sqrt(s + 0j)
        C = np.cos(k * dt)
        S = np.sin(k * dt) / k
        dS = (dt * C - S) / (2 * s)
    dC = -0.5 * dt * S
    return C, S, dC, dS


@njit(cache=True)
def _mono(q, dt, lam):
    a = 1.0 + 0j
    b = 0j
    c = 0j
    d = 1.0 + 0j
    for n in range(q.shape[0]):
        qn = q[n]
        s = lam * lam + (qn.real * qn.real + qn.imag * qn.imag)
        C, S, dC, dS = _cs(s, dt)
        m11 = C - 1j * lam * S
        m12 = S * qn
        m21 = -S * np.conj(qn)
        m22 = C + 1j * lam * S
        a, b, c, d = m11 * a + m12 * c, m11 * b + m12 * d, m21 * a + m22 * c, m21 * b + m22 * d
    return a, b, c, d


@njit(cache=True)
def _disc(q, dt, lams):
    out = np.empty(lams.shape[0], dtype=np.complex128)
    for j in range(lams.shape[0]):
        a, b, c, d = _mono(q, dt, lams[j])
        out[j] = 0.5 * (a + d)
    return out


@njit(cache=True)
def _disc_deriv(q, dt, lams):
    """Delta and dDelta/dlam by exact differentiation of the product."""
    D = np.empty(lams.shape[0], dtype=np.complex128)
    dD = np.empty(lams.shape[0], dtype=np.complex128)
    for j in range(lams.shape[0]):
        lam = lams[j]
        a = 1.0 + 0j
        b = 0j
        c = 0j
        d = 1.0 + 0j
        da = 0j
        db = 0j
        dc = 0j
        dd = 0j
        for n in range(q.shape[0]):
            qn = q[n]
            s = lam * lam + (qn.real * qn.real + qn.imag * qn.imag)
            C, S, dC, dS = _cs(s, dt)
            # d/dlam = 2 lam d/ds
            Cl = 2 * lam * dC
            Sl = 2 * lam * dS
            m11 = C - 1j * lam * S
            m12 = S * qn
            m21 = -S * np.conj(qn)
            m22 = C + 1j * lam * S
            n11 = Cl - 1j * S - 1j * lam * Sl
            n12 = Sl * qn
            n21 = -Sl * np.conj(qn)
            n22 = Cl + 1j * S + 1j * lam * Sl
            da, db, dc, dd = (n11 * a + n12 * c + m11 * da + m12 * dc,
                              n11 * b + n12 * d + m11 * db + m12 * dd,
                              n21 * a + n22 * c + m21 * da + m22 * dc,
                              n21 * b + n22 * d + m21 * db + m22 * dd)
            a, b, c, d = m11 * a + m12 * c, m11 * b + m12 * d, m21 * a + m22 * c, m21 * b + m22 * d
        D[j] = 0.5 * (a + d)
        dD[j] = 0.5 * (da + dd)
    return D, dD


@njit(cache=True)
def _newton(q, dt, seeds, levels, tol, maxit):
    """Newton on Delta - level; returns roots, |Delta -+ 1| and a convergence flag."""
    n = seeds.shape[0]
    roots = np.empty(n, dtype=np.complex128)
    res = np.empty(n)
    ok = np.zeros(n, dtype=np.bool_)
    one = np.empty(1, dtype=np.complex128)
    for i in range(n):
        lam = seeds[i]
        lev = levels[i]
        for it in range(maxit):
            one[0] = lam
            D, dD = _disc_deriv(q, dt, one)
            f = D[0] - lev
            if abs(f) < tol:
                break
            if dD[0] == 0:
                break
            step = f / dD[0]
            # damp very long steps
            if abs(step) > 0.5:
                step = step * 0.5 / abs(step)
            lam = lam - step
        roots[i] = lam
        one[0] = lam
        D, dD = _disc_deriv(q, dt, one)
        res[i] = abs(D[0] - lev)
        ok[i] = res[i] < tol
    return roots, res, ok


# ------------------------------------------------------------------ public

def _prep(samples, dt):
    q = np.ascontiguousarray(np.asarray(samples, dtype=np.complex128).ravel())
    if q.size == 0:
        raise ForwardError("empty period")
    if not dt > 0:
        raise ForwardError("dt must be positive")
    return q, float(dt)


def monodromy(period_samples, dt, lam) -> Monodromy:
    """Transfer matrix across one period for spectral parameter ``lam``."""
    q, dt = _prep(period_samples, dt)
    a, b, c, d = _mono(q, dt, complex(lam))
    return Monodromy(np.array([[a, b], [c, d]]), complex(lam))


def floquet_discriminant(period_samples, dt, lam):
    """Half trace of the monodromy; ``lam`` may be an array."""
    q, dt = _prep(period_samples, dt)
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=np.complex128))
    out = _disc(q, dt, np.ascontiguousarray(lam_arr.ravel())).reshape(lam_arr.shape)
    return complex(out[0]) if np.ndim(lam) == 0 else out


def discriminant_with_derivative(period_samples, dt, lam):
    q, dt = _prep(period_samples, dt)
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=np.complex128))
    D, dD = _disc_deriv(q, dt, np.ascontiguousarray(lam_arr.ravel()))
    if np.ndim(lam) == 0:
        return complex(D[0]), complex(dD[0])
    return D.reshape(lam_arr.shape), dD.reshape(lam_arr.shape)


def auto_search_box(points, margin=1.5):
    """Rectangle (re_min, re_max, im_min, im_max) around ``points`` scaled by ``margin``."""
    p = np.asarray(points)
    half = margin * max(np.max(np.abs(p.real)), 0.1)
    top = margin * np.max(p.imag)
    return (-half, half, 0.0, top)


def _local_minima(F):
    # interior points not larger than their 8 neighbours
    P = np.pad(F, 1, constant_values=np.inf)
    c = P[1:-1, 1:-1]
    mask = np.ones_like(c, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                mask &= c <= P[1 + di:P.shape[0] - 1 + di, 1 + dj:P.shape[1] - 1 + dj]
    return mask


def _polish(q, dt, lam, level, maxit=30, h=1e-5):
    """
    Schroeder iteration on ``u = f / f'`` with ``f = Delta - level``.

    ``u`` has only simple zeros, so the iteration converges quadratically
    also at double (or higher) points where plain Newton is linear.
    ``f''`` comes from a central difference of the exact ``f'``.
    """
    pts = np.empty(3, dtype=np.complex128)
    for _ in range(maxit):
        pts[0] = lam
        pts[1] = lam + h
        pts[2] = lam - h
        D, dD = _disc_deriv(q, dt, pts)
        f = D[0] - level
        d1 = dD[0]
        if f == 0 or d1 == 0:
            break
        d2 = (dD[1] - dD[2]) / (2 * h)
        den = d1 * d1 - f * d2
        if den == 0:
            break
        step = f * d1 / den
        lam = lam - step
        if abs(step) < 1e-15 * max(1.0, abs(lam)):
            break
    return lam


def find_main_spectrum(period_samples, dt, search_box=(-2.0, 2.0, 0.0, 2.0), grid=(60, 40),
                       tol=1e-9, band_edge=1e-3, extra_seeds=(), dedup=1e-6,
                       maxit=60, polish_below=0.1, clip_to_box=True) -> SpectrumEstimate:
    """
    Upper half-plane roots of ``Delta^2 = 1``.

    Newton iterations on ``Delta - 1`` and ``Delta + 1`` start from local
    minima of ``|Delta^2 - 1|`` and of the Newton step length on a ``grid``
    over ``search_box = (re_min, re_max, im_min, im_max)``, and from
    ``extra_seeds``.  Roots where ``|Delta'| < polish_below`` (near multiple
    points) are refined by a multiplicity-independent iteration.  Roots with
    ``Im < band_edge`` are dropped, and with ``clip_to_box`` so are roots
    that Newton carried outside the search box (gaps opened by noise far
    from the constellation).
    """
    q, dt = _prep(period_samples, dt)
    x0, x1, y0, y1 = search_box
    if y0 < 0:
        raise ForwardError("search box must lie in the closed upper half plane")
    nx, ny = grid
    seeds = list(np.atleast_1d(np.asarray(extra_seeds, dtype=complex)))
    if nx > 0 and ny > 0:
        xs = np.linspace(x0, x1, nx)
        ys = np.linspace(max(y0, band_edge), y1, ny)
        L = xs[None, :] + 1j * ys[:, None]
        D, dD = _disc_deriv(q, dt, np.ascontiguousarray(L.ravel()))
        D = D.reshape(L.shape)
        dD = dD.reshape(L.shape)
        F = np.abs(D * D - 1.0)
        # the Newton step length estimates the distance to a simple root
        step = F / np.maximum(np.abs(2 * D * dD), 1e-300)
        seeds += list(L[_local_minima(F) | _local_minima(step)])
    if not seeds:
        return SpectrumEstimate(np.zeros(0, complex), np.zeros(0), True)
    seeds = np.array(seeds, dtype=np.complex128)
    both = np.concatenate([seeds, seeds])
    levels = np.concatenate([np.ones(len(seeds)), -np.ones(len(seeds))])
    roots, res, ok = _newton(q, dt, both, levels, tol, maxit)
    _, dD = _disc_deriv(q, dt, np.ascontiguousarray(roots))
    for i in np.flatnonzero(ok & (np.abs(dD) < polish_below)):
        # small derivative: near a multiple point, where Newton is only linear
        r = _polish(q, dt, roots[i], levels[i])
        e = abs(floquet_discriminant(q, dt, r) - levels[i])
        if e <= max(res[i], tol) and abs(r - roots[i]) < 1e-2:
            roots[i], res[i] = r, e
    inside = (roots.real >= x0) & (roots.real <= x1) & (roots.imag <= y1)
    keep = ok & (roots.imag > band_edge)
    if clip_to_box:
        keep &= inside
    roots, res = roots[keep], res[keep]
    pts, rs = [], []
    for r, e in sorted(zip(roots, res), key=lambda p: (-p[0].imag, p[0].real)):
        if all(abs(r - p) > dedup for p in pts):
            pts.append(r)
            rs.append(e)
    return SpectrumEstimate(np.array(pts, dtype=complex), np.array(rs))


def reduce_spectrum(est: SpectrumEstimate, n: int = 3) -> SpectrumEstimate:
    """Keep the ``n`` points of largest imaginary part (ties by real part)."""
    if n < 1:
        raise ForwardError("n must be at least 1")
    order = sorted(range(len(est.points)), key=lambda i: (-est.points[i].imag, est.points[i].real))
    order = order[:n]
    return SpectrumEstimate(est.points[order], est.residuals[order], len(order) < n, dict(est.meta))
