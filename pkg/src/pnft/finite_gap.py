"""
Finite-gap solutions of the focusing NLSE.

Convention::

    i psi_z + 1/2 psi_tt + |psi|^2 psi = 0

A solution of genus g is built from g+1 upper half-plane points lambda_k of the
Zakharov-Shabat problem and has the form::

    psi(z, t) = U exp(i (k0 z + Omega0 t)) theta(W + delta / 2pi) / theta(W)
    W = (kvec z + Omega t) / 2pi

All constants come from contour integrals on the hyperelliptic curve
``mu^2 = prod_k (lambda - lambda_k)(lambda - conj(lambda_k))``.

Cut and cycle layout
--------------------
Points are sorted by real part.  Cut k is the vertical segment from
``conj(lambda_k)`` to ``lambda_k``.  Cycle ``a_i`` (i < g) encircles cut i.
Cycle ``b_j`` is the lift to both sheets of a zig-zag chain from cut j to the
last cut: the m-th link joins the upper ends of cuts m and m+1 for even m and
the lower ends for odd m.  Consecutive links alternate sides so that adjacent
chains never cross.
"""

from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np
from numpy.polynomial.legendre import leggauss

from .riemann_theta import log_theta_ratio, check_period_matrix

__all__ = [
    "FiniteGapError",
    "MainSpectrum",
    "HyperellipticCurve",
    "FiniteGapParams",
    "build_curve",
    "compute_params",
    "evaluate_solution",
    "nlse_residual",
    "quasiperiodize",
    "change_basis",
    "scale_params",
]

SERIES_TERMS = 60


class FiniteGapError(ValueError):
    pass


@dataclass(frozen=True)
class MainSpectrum:
    """
    Upper half-plane main spectrum; conjugate points are implied.

    Parameters
    ----------
    points : sequence of complex
        The g+1 points lambda_k with Im > 0.
    min_separation : float
        Smallest allowed distance between two points.
    """

    points: tuple
    min_separation: float = 0.05

    def __post_init__(self):
        pts = tuple(complex(p) for p in np.atleast_1d(self.points))
        object.__setattr__(self, "points", pts)
        if len(pts) == 0:
            raise FiniteGapError("main spectrum needs at least one point")
        if any(p.imag <= 0 for p in pts):
            raise FiniteGapError("all main spectrum points must have Im > 0")
        arr = np.array(pts)
        if len(arr) > 1:
            d = np.abs(arr[:, None] - arr[None, :])
            d = d[~np.eye(len(arr), dtype=bool)]
            if d.min() < self.min_separation:
                raise FiniteGapError(
                    f"points closer than the separation floor "
                    f"({d.min():.3g} < {self.min_separation})"
                )

    @property
    def genus(self) -> int:
        return len(self.points) - 1

    def as_array(self):
        return np.array(self.points, dtype=complex)

    def mirrored(self):
        """Reflection about the imaginary axis, lambda -> -conj(lambda)."""
        return MainSpectrum(tuple(-np.conj(self.as_array())), self.min_separation)

    def shifted(self, c: float):
        return MainSpectrum(tuple(self.as_array() + c), self.min_separation)

    def scaled(self, a: float):
        return MainSpectrum(tuple(a * self.as_array()), self.min_separation * abs(a))


@dataclass(frozen=True)
class HyperellipticCurve:
    spectrum: MainSpectrum
    points: np.ndarray          # sorted upper branch points
    branch_cuts: tuple          # (lower end, upper end) per cut
    cycle_basis: dict
    intersection: np.ndarray    # (2g, 2g) pairing of (a_0..a_{g-1}, b_0..b_{g-1})

    @property
    def genus(self) -> int:
        return len(self.points) - 1


@dataclass(frozen=True)
class FiniteGapParams:
    """Constants of one finite-gap solution (dimensionless units)."""

    U: complex
    Omega0: float
    k0: float
    Omega: np.ndarray
    kvec: np.ndarray
    delta: np.ndarray
    tau: np.ndarray
    zeroed_index: int | None = None
    spectrum: MainSpectrum | None = field(default=None, compare=False)

    @property
    def genus(self) -> int:
        return len(self.Omega)


# ---------------------------------------------------------------- curve

def _intersections(g, basis):
    # Crossings of the b-chain with the small circle a_i around cut i: a
    # chain starting at cut j leaves it once, a chain passing through an
    # intermediate cut crosses its circle twice with opposite orientation.
    J = np.zeros((2 * g, 2 * g), dtype=int)
    for j, chain in enumerate(basis["b"]):
        for i in range(g):
            if chain[0] == i:
                J[i, g + j] = 1
            # intermediate cuts: +1 - 1 = 0; last cut has no a-cycle
    J[g:, :g] = -J[:g, g:].T
    return J


def build_curve(spectrum: MainSpectrum) -> HyperellipticCurve:
    """
    Build the cut diagram and a canonical cycle basis.

    Raises
    ------
    FiniteGapError
        If two vertical cuts overlap (equal real parts).
    """
    pts = np.array(sorted(spectrum.points, key=lambda p: (p.real, p.imag)))
    g = len(pts) - 1
    re = pts.real
    if g > 0 and np.min(np.diff(re)) <= 1e-12 * max(1.0, np.max(np.abs(re))):
        raise FiniteGapError(
            "branch cuts cross (points share a real part); increase the separation "
            "of real parts"
        )
    cuts = tuple((p.conjugate(), p) for p in pts)
    basis = {
        "a": [("cut", i) for i in range(g)],
        "b": [tuple(range(j, g + 1)) for j in range(g)],
    }
    J = _intersections(g, basis)
    canon = np.block([[np.zeros((g, g), int), np.eye(g, dtype=int)],
                      [-np.eye(g, dtype=int), np.zeros((g, g), int)]])
    if not np.array_equal(J, canon):
        raise FiniteGapError("cycle basis is not canonical")
    return HyperellipticCurve(spectrum, pts, cuts, basis, J)


# ---------------------------------------------------------- integration

def _s_factor(lam, a, b):
    # sqrt((lam-a)^2 + b^2) with its cut on the segment a - ib .. a + ib
    w = lam - a
    return w * np.sqrt(1.0 + b * b / (w * w))


def _mu(lam, pts, skip=None):
    out = np.ones(np.shape(lam), dtype=complex)
    for k, p in enumerate(pts):
        if k != skip:
            out = out * _s_factor(lam, p.real, p.imag)
    return out


def _inv_mu_series(E, nterms):
    """Coefficients h_m of prod_k (1 - E_k x)^(-1/2)."""
    m = np.arange(1, nterms + 1)
    pm = np.array([np.sum(E ** k) for k in m])
    L = np.zeros(nterms + 1, complex)
    L[1:] = pm / (2 * m)
    h = np.zeros(nterms + 1, complex)
    h[0] = 1.0
    for n in range(1, nterms + 1):
        k = np.arange(1, n + 1)
        h[n] = np.sum(k * L[k] * h[n - k]) / n
    return h


def _expansion(poly, g, h, nmax):
    """Coefficients e_n of poly(lam)/mu(lam) = sum_n e_n lam^(-n), n <= nmax."""
    deg = len(poly) - 1
    out = {}
    for n in range(-(deg - g - 1), nmax + 1):
        c = 0j
        for i, p in enumerate(poly):
            m = n - (g + 1) + i
            if 0 <= m < len(h):
                c += p * h[m]
        out[n] = c
    return out


class _Quadrature:
    """Loop integrals of poly(lam)/mu(lam) dlam on one curve."""

    def __init__(self, pts, nodes):
        self.pts = pts
        self.g = len(pts) - 1
        n = nodes
        self.s = np.cos((2 * np.arange(1, n + 1) - 1) * np.pi / (2 * n))
        self.wc = np.pi / n
        x, w = leggauss(nodes)
        self.v = 0.5 * (x + 1)
        self.wv = 0.5 * w
        E = np.concatenate([pts, pts.conj()])
        self.h = _inv_mu_series(E, SERIES_TERMS + 20)
        self.base = pts[-1]
        self.S = 3.0 * np.max(np.abs(E)) + 1.0
        # the last cut is rightmost, so a ray leaving its top towards the
        # upper right stays clear of every other cut
        self.dirn = np.exp(0.25j * np.pi)
        self.lamR = self.base + self.dirn * self.S
        # precomputed node sets
        self._a = []
        for k, p in enumerate(pts[:-1]):
            lam = p.real + 1j * p.imag * self.s
            self._a.append((lam, 2j * self.wc / _mu(lam, pts, skip=k)))
        self._arc = []
        for m in range(self.g):
            if m % 2 == 0:
                x0, x1 = pts[m], pts[m + 1]
            else:
                x0, x1 = pts[m].conjugate(), pts[m + 1].conjugate()
            lam = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * self.s
            wt = np.sqrt(1 - self.s ** 2) * self.wc * 0.5 * (x1 - x0) / _mu(lam, pts)
            self._arc.append((lam, wt))
        lam = self.base + self.dirn * self.S * self.v ** 2
        self._ray = (lam, 2 * self.dirn * self.S * self.v * self.wv / _mu(lam, pts))

    @staticmethod
    def _apply(poly, nodes):
        lam, wt = nodes
        return np.sum(np.polyval(poly[::-1], lam) * wt)

    def a_period(self, poly, i):
        return self._apply(poly, self._a[i])

    def b_period(self, poly, j):
        return -2.0 * sum(self._apply(poly, self._arc[m]) for m in range(j, self.g))

    def ray(self, poly):
        return self._apply(poly, self._ray)


def _raw_params(pts, nodes):
    g = len(pts) - 1
    Q = _Quadrature(pts, nodes)
    h = Q.h
    deg = g + 3
    nmax = SERIES_TERMS

    A = np.array([[Q.a_period(_mono(k, deg), i) for k in range(g)] for i in range(g)])
    A = A.reshape(g, g)
    if g:
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e12:
            raise FiniteGapError(f"degenerate spectrum (normalization matrix condition {cond:.3g})")
    Cm = np.linalg.inv(A) if g else np.zeros((0, 0))

    def omega(j):
        p = np.zeros(deg + 1, complex)
        p[:g] = Cm[:, j]
        return p

    om = [omega(j) for j in range(g)]
    tau = np.array([[Q.b_period(om[j], i) for j in range(g)] for i in range(g)]).reshape(g, g)

    def normalize(p):
        p = p.copy()
        for j in range(g):
            p = p - Q.a_period(p, j) * om[j]
        return p

    P1 = np.zeros(deg + 1, complex)
    P1[g + 1] = -1j
    P1[g] = 1j * h[1]
    P1 = normalize(P1)
    P2 = np.zeros(deg + 1, complex)
    P2[g + 2] = -2j
    P2[g + 1] = 2j * h[1]
    P2[g] = 2j * h[2] - P2[g + 1] * h[1]
    P2 = normalize(P2)
    e1 = _expansion(P1, g, h, nmax)
    e2 = _expansion(P2, g, h, nmax)

    U = np.array([Q.b_period(P1, j) for j in range(g)]) / (2j * np.pi)
    V = np.array([Q.b_period(P2, j) for j in range(g)]) / (2j * np.pi)

    lamR = Q.lamR
    tail = np.array([lamR ** (1 - n) / (1 - n) for n in range(2, nmax)])
    c1 = Q.ray(P1) + 1j * lamR - np.sum([e1[n] for n in range(2, nmax)] * tail)
    c2 = Q.ray(P2) + 1j * lamR ** 2 - np.sum([e2[n] for n in range(2, nmax)] * tail)
    r = np.zeros(g, complex)
    for j in range(g):
        ej = _expansion(om[j], g, h, nmax)
        r[j] = 2.0 * (Q.ray(om[j]) - np.sum([ej[n] for n in range(2, nmax)] * tail))
    d1 = -e1[2]
    return dict(tau=tau, U=U, V=V, Omega0=2j * c1, k0=2j * c2, r=r, d1=d1)


def _mono(k, deg):
    p = np.zeros(deg + 1, complex)
    p[k] = 1.0
    return p


def _torus_amplitude(tau, r, d1, M=64):
    g = len(r)
    A2 = (2j * d1).real
    if g == 0:
        return np.sqrt(A2)
    x = np.stack(np.meshgrid(*[np.arange(M) / M] * g, indexing="ij"), -1).reshape(-1, g)
    R = np.exp(2 * log_theta_ratio(x - r, x + 0j, tau).real)
    return np.sqrt(A2 / np.mean(R))


def _reduce_carrier(Omega0, k0, Omega, kvec, r, tau, box=2):
    # Omega0 is defined up to integer combinations of Omega (r -> r + tau n).
    g = len(Omega)
    if g == 0:
        return Omega0, k0, r
    best = None
    for n in product(range(-box, box + 1), repeat=g):
        n = np.array(n)
        w = Omega0 - n @ Omega
        key = (round(abs(w), 9), int(np.abs(n).sum()), tuple(n))
        if best is None or key < best[0]:
            best = (key, n)
    n = best[1]
    return Omega0 - n @ Omega, k0 - n @ kvec, r + tau @ n


def _change(r1, r2):
    return max(np.max(np.abs(r1[k] - r2[k]), initial=0.0) for k in ("tau", "U", "V", "r"))


def compute_params(curve: HyperellipticCurve, nodes: int = 256, check: bool = True,
                   torus_grid: int = 64, max_nodes: int = 8192) -> FiniteGapParams:
    """
    Constants of the finite-gap solution attached to ``curve``.

    Parameters
    ----------
    curve : HyperellipticCurve
    nodes : int
        Quadrature nodes per path.
    check : bool
        Double the node count until two successive results agree to 1e-10
        (the finer one is kept); raise if ``max_nodes`` is reached first.
        Without the check ``tau`` is symmetrized instead of validated, which
        is meant for coarse searches only.
    torus_grid : int
        Grid size per dimension for the amplitude average over the real torus.

    Notes
    -----
    The carrier frequency ``Omega0`` is only defined modulo integer
    combinations of ``Omega``; the representative of smallest magnitude is
    returned, with ``delta`` adjusted accordingly.
    """
    pts = curve.points
    g = curve.genus
    raw = _raw_params(pts, nodes)
    if check and g:
        n = nodes
        while True:
            finer = _raw_params(pts, 2 * n)
            err = _change(raw, finer)
            raw = finer
            n *= 2
            if err < 1e-10:
                break
            if n >= max_nodes:
                raise FiniteGapError(
                    f"quadrature not converged (change {err:.3e} at {n} nodes)")
    tau = raw["tau"]
    if g:
        if check:
            tau = 0.5 * (tau + tau.T) if np.max(np.abs(tau - tau.T)) < 1e-8 else tau
            check_period_matrix(tau, sym_tol=1e-8)
        else:
            # unchecked fast path (searches): symmetrize, positivity still enforced
            tau = 0.5 * (tau + tau.T)
            check_period_matrix(tau)
    Omega = 2 * np.pi * raw["U"].real
    kvec = 2 * np.pi * raw["V"].real
    Omega0, k0, r = _reduce_carrier(raw["Omega0"].real, raw["k0"].real, Omega, kvec, raw["r"], tau)
    amp = _torus_amplitude(tau, r, raw["d1"], torus_grid)
    return FiniteGapParams(
        U=complex(amp), Omega0=float(Omega0), k0=float(k0),
        Omega=Omega, kvec=kvec, delta=-2 * np.pi * r, tau=tau,
        spectrum=curve.spectrum,
    )


# ------------------------------------------------------------ evaluation

def evaluate_solution(params: FiniteGapParams, z, t):
    """
    Evaluate psi(z, t).  ``z`` and ``t`` broadcast against each other.
    """
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    z, t = np.broadcast_arrays(z, t)
    carrier = np.exp(1j * (params.k0 * z + params.Omega0 * t))
    if params.genus == 0:
        return params.U * carrier
    W = (np.multiply.outer(t, params.Omega) + np.multiply.outer(z, params.kvec)) / (2 * np.pi)
    L = log_theta_ratio(W + params.delta / (2 * np.pi), W + 0j, params.tau)
    return params.U * carrier * np.exp(L)


def _fd_weights():
    return np.array([1, -8, 0, 8, -1]) / 12.0


def nlse_residual(params: FiniteGapParams, nz: int = 64, nt: int = 64,
                  z_extent: float | None = None, period: float | None = None) -> float:
    """
    Relative L2 residual of the NLSE on an ``nz`` x ``nt`` grid.

    The t grid covers one period of the envelope ``psi exp(-i Omega0 t)``,
    which is differentiated spectrally; z derivatives use fourth-order central
    differences.  ``period`` defaults to ``2 pi / Omega_j`` for the only
    nonzero frequency.  Solutions that are not periodic in t need an explicit
    ``period``; the residual then also measures the lack of periodicity.
    """
    if period is None:
        nonzero = [w for w in params.Omega if w != 0.0]
        if len(nonzero) > 1:
            raise FiniteGapError("solution is not periodic in t; quasiperiodize or pass period")
        period = 2 * np.pi / abs(nonzero[0]) if nonzero else 2 * np.pi
    if z_extent is None:
        scale = max(1.0, abs(params.k0), *np.abs(params.kvec), abs(params.U) ** 2)
        # short z window: 4th-order truncation ~ (h k)^4 stays below rounding
        z_extent = 0.1 / scale
    t = np.arange(nt) * period / nt
    hz = z_extent / max(nz - 1, 1)
    z = np.arange(-2, nz + 2) * hz
    Z, T = np.meshgrid(z, t, indexing="ij")
    psi = evaluate_solution(params, Z, T)
    core = psi[2:-2]
    w = _fd_weights()
    pz = sum(w[k] * psi[k:k + nz] for k in range(5)) / hz
    # envelope is periodic in t
    env = core * np.exp(-1j * params.Omega0 * T[2:-2])
    om = 2 * np.pi * np.fft.fftfreq(nt, d=period / nt)
    F = np.fft.fft(env, axis=1)
    if nt % 2 == 0:
        F1 = F.copy()
        F1[:, nt // 2] = 0.0
    else:
        F1 = F
    d1 = np.fft.ifft(1j * om * F1, axis=1)
    d2 = np.fft.ifft(-(om ** 2) * F, axis=1)
    W0 = params.Omega0
    ptt = np.exp(1j * W0 * T[2:-2]) * (d2 + 2j * W0 * d1 - W0 ** 2 * env)
    R = 1j * pz + 0.5 * ptt + np.abs(core) ** 2 * core
    return float(np.linalg.norm(R) / np.linalg.norm(core))


# ------------------------------------------------------------ transforms

def quasiperiodize(params: FiniteGapParams) -> FiniteGapParams:
    """Set the smaller of the two frequencies of a genus-2 solution to zero."""
    if params.genus != 2:
        raise FiniteGapError("quasiperiodize needs genus 2")
    a = np.abs(params.Omega)
    if abs(a[0] - a[1]) <= 1e-12:
        raise FiniteGapError("frequencies have equal magnitude; cannot choose one to zero")
    j = int(np.argmin(a))
    Om = params.Omega.copy()
    Om[j] = 0.0
    return replace(params, Omega=Om, zeroed_index=j)


def change_basis(params: FiniteGapParams, M) -> FiniteGapParams:
    """
    Re-express the solution in another homology basis.

    ``M`` is a unimodular integer matrix acting on frequency vectors,
    ``Omega -> M Omega``; the solution itself is unchanged.
    """
    M = np.asarray(M)
    if M.shape != (params.genus, params.genus) or abs(round(np.linalg.det(M))) != 1 \
            or not np.array_equal(M, np.round(M)):
        raise FiniteGapError("basis change must be a unimodular integer matrix")
    M = M.astype(float)
    tau = M @ params.tau @ M.T
    return replace(params, Omega=M @ params.Omega, kvec=M @ params.kvec,
                   delta=M @ params.delta, tau=0.5 * (tau + tau.T))


def scale_params(params: FiniteGapParams, a: float) -> FiniteGapParams:
    """Apply the NLSE scaling symmetry psi -> a psi(a^2 z, a t)."""
    spec = params.spectrum.scaled(a) if params.spectrum is not None else None
    return replace(params, U=a * params.U, Omega0=a * params.Omega0, k0=a * a * params.k0,
                   Omega=a * params.Omega, kvec=a * a * params.kvec, spectrum=spec)
