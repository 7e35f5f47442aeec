"""
Riemann theta functions.

Convention used throughout the package::

    theta(u | tau) = sum_{n in Z^g} exp(pi i n.tau.n + 2 pi i n.u)

Lattice sums are truncated to an ellipsoid built from the Cholesky factor of
``pi * Im(tau)`` and evaluated in "oscillatory" form: the exponential growth in
``Im(u)`` is factored out analytically so that arguments with large imaginary
parts never overflow.
"""

from functools import lru_cache

import numpy as np
from scipy.special import gammaincc, gamma as gamma_fn

__all__ = [
    "ThetaError",
    "NearDivisorError",
    "check_period_matrix",
    "truncation_radius",
    "theta",
    "log_theta",
    "log_theta_ratio",
]


class ThetaError(ValueError):
    pass


class NearDivisorError(ThetaError):
    pass


def check_period_matrix(tau, sym_tol=1e-10):
    """Validate a period matrix and return it as a 2-D complex array."""
    tau = np.atleast_2d(np.asarray(tau, dtype=complex))
    if tau.shape[0] != tau.shape[1]:
        raise ThetaError(f"period matrix must be square, got shape {tau.shape}")
    asym = np.max(np.abs(tau - tau.T)) if tau.size else 0.0
    if asym > sym_tol:
        raise ThetaError(f"period matrix is not symmetric (max |tau - tau^T| = {asym:.3e})")
    eig = np.linalg.eigvalsh(0.5 * (tau.imag + tau.imag.T))
    if eig[0] <= 0:
        raise ThetaError(
            f"imaginary part of tau is not positive definite (smallest eigenvalue {eig[0]:.6e})"
        )
    return tau


def _cholesky(tau):
    # upper factor T with T^T T = pi * Im(tau)
    Y = 0.5 * (tau.imag + tau.imag.T)
    return np.linalg.cholesky(np.pi * Y).T


def _shortest_vector(T):
    g = T.shape[0]
    r0 = np.min(np.linalg.norm(T, axis=0))
    lam_min = np.linalg.eigvalsh(T.T @ T)[0]
    m = int(np.floor(r0 / np.sqrt(lam_min))) + 1
    axes = [np.arange(-m, m + 1)] * g
    n = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, g)
    n = n[np.any(n != 0, axis=1)]
    return float(np.min(np.linalg.norm(n @ T.T, axis=1)))


def _tail_bound(R, g, rho):
    # Deconinck et al. (2004) bound on the neglected part of the lattice sum
    x = (R - rho / 2.0) ** 2
    return 0.5 * g * (2.0 / rho) ** g * gammaincc(0.5 * g, x) * gamma_fn(0.5 * g)


def truncation_radius(tau, tol=1e-15):
    """
    Radius of the lattice ellipsoid needed for absolute accuracy ``tol``.

    The radius is measured in the norm ``||T x||`` with ``T^T T = pi Im(tau)``,
    so a lattice point at distance ``R`` contributes ``exp(-R**2)``.

    Parameters
    ----------
    tau : (g, g) complex array
        Period matrix (symmetric, positive definite imaginary part).
    tol : float
        Target truncation error, in (0, 1).

    Returns
    -------
    float
    """
    if not 0.0 < tol < 1.0:
        raise ThetaError(f"tol must lie in (0, 1), got {tol}")
    tau = check_period_matrix(tau)
    return _radius(_key(tau), tol)


def _key(tau):
    return (tau.shape[0], tau.tobytes())


@lru_cache(maxsize=256)
def _radius(key, tol):
    tau = _from_key(key)
    g = tau.shape[0]
    T = _cholesky(tau)
    rho = _shortest_vector(T)
    lo = rho / 2.0
    hi = max(rho, 1.0)
    while _tail_bound(hi, g, rho) > tol:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _tail_bound(mid, g, rho) > tol:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * hi:
            break
    return hi


def _from_key(key):
    g, raw = key
    return np.frombuffer(raw, dtype=complex).reshape(g, g)


@lru_cache(maxsize=256)
def _lattice(key, tol):
    """Integer points k with ||T (k + e)|| < R for some e in [-1/2, 1/2]^g."""
    tau = _from_key(key)
    g = tau.shape[0]
    T = _cholesky(tau)
    R = _radius(key, tol)
    # the shift e moves the ellipsoid centre by at most ||T e|| <= ||T||_2 sqrt(g)/2
    R_ext = R + np.linalg.norm(T, 2) * np.sqrt(g) / 2.0
    lam_min = np.linalg.eigvalsh(T.T @ T)[0]
    m = int(np.ceil(R_ext / np.sqrt(lam_min)))
    axes = [np.arange(-m, m + 1)] * g
    k = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, g)
    keep = np.linalg.norm(k @ T.T, axis=1) < R_ext
    return k[keep].astype(float)


def _scaled_sum(u, tau, tol):
    """
    Return ``(s, log_scale)`` with ``theta(u) = exp(log_scale) * s``.

    ``u`` has shape (m, g).  Every retained term of ``s`` has modulus <= 1.
    """
    Y = 0.5 * (tau.imag + tau.imag.T)
    c = np.linalg.solve(Y, u.imag.T).T            # (m, g)
    shift = np.round(c)
    k = _lattice(_key(tau), tol)                  # (p, g)
    n = k[None, :, :] - shift[:, None, :]         # (m, p, g)
    quad = np.einsum("mpi,ij,mpj->mp", n, tau, n)
    lin = np.einsum("mpi,mi->mp", n, u)
    cYc = np.einsum("mi,ij,mj->m", c, Y, c)
    expo = np.pi * 1j * quad + 2j * np.pi * lin - np.pi * cYc[:, None]
    s = np.exp(expo).sum(axis=1)
    return s, np.pi * cYc


def _prepare(u, tau):
    """Flatten arguments to shape (m, g); return the leading shape to restore."""
    tau = check_period_matrix(tau)
    g = tau.shape[0]
    u = np.asarray(u, dtype=complex)
    if g == 1 and (u.ndim == 0 or u.shape[-1] != 1):
        u = u[..., None]
    if u.ndim == 0 or u.shape[-1] != g:
        raise ThetaError(f"argument length {u.shape[-1] if u.ndim else 1} does not match genus {g}")
    lead = u.shape[:-1]
    return tau, u.reshape(-1, g), lead


def theta(u, tau, tol=1e-15):
    """
    Evaluate the Riemann theta function.

    ``u`` may be a single vector of length g or an array of shape (..., g).
    For genus one a scalar or 1-D array of arguments is accepted as well.
    Prefer :func:`log_theta_ratio` when ``Im(u)`` can be large.
    """
    tau, u2, lead = _prepare(u, tau)
    s, log_scale = _scaled_sum(u2, tau, tol)
    out = s * np.exp(log_scale)
    if lead == ():
        return complex(out[0])
    return out.reshape(lead)


def log_theta(u, tau, tol=1e-15):
    """Logarithm of theta, computed without forming theta itself."""
    tau, u2, lead = _prepare(u, tau)
    s, log_scale = _scaled_sum(u2, tau, tol)
    _check_divisor(s)
    out = np.log(s) + log_scale
    if lead == ():
        return complex(out[0])
    return out.reshape(lead)


def _check_divisor(s):
    small = np.abs(s) < 1e-300
    if np.any(small):
        raise NearDivisorError(
            "theta argument is on (or numerically at) the theta divisor; "
            "choose a different phase offset"
        )


def log_theta_ratio(u_num, u_den, tau, tol=1e-15):
    """
    ``log(theta(u_num) / theta(u_den))`` with the exponential prefactors cancelled.

    Arguments broadcast against each other; shapes as for :func:`theta`.
    """
    u_num, u_den = np.broadcast_arrays(np.asarray(u_num, dtype=complex), np.asarray(u_den, dtype=complex))
    tau, n2, lead = _prepare(u_num, tau)
    _, d2, _ = _prepare(u_den, tau)
    s_n, l_n = _scaled_sum(n2, tau, tol)
    s_d, l_d = _scaled_sum(d2, tau, tol)
    _check_divisor(s_d)
    out = np.log(s_n) - np.log(s_d) + (l_n - l_d)
    if lead == ():
        return complex(out[0])
    return out.reshape(lead)
