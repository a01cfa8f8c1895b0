"""Atomic-norm machinery: Toeplitz embedding, dual norm, certified grid bounds.

The atoms are rank-1 matrices h a(tau)^H with unit h.  The dual norm of a
K x N matrix Q is sup_tau ||Q a(tau)||_2, a trigonometric-polynomial
maximization handled by an FFT grid plus local refinement.  The certified
bound converts a finite grid maximum into a guaranteed upper bound on the
supremum.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import atom_vector


@dataclass(frozen=True)
class ToeplitzGenerator:
    """First column u of a Hermitian Toeplitz matrix; u[0] must be real."""

    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex)
        if u.ndim != 1 or u.size < 1:
            raise ValueError("u must be a nonempty vector")
        if abs(u[0].imag) > 1e-12 * max(1.0, abs(u[0].real)):
            raise ValueError("u[0] must be real for a Hermitian Toeplitz matrix")
        u = u.copy()
        u[0] = u[0].real
        u.flags.writeable = False
        object.__setattr__(self, "u", u)


def build_toeplitz(u) -> np.ndarray:
    """Hermitian Toeplitz matrix with first column u.

    Entry (r, c) is u[r-c] for r >= c and conj(u[c-r]) above the diagonal.
    """
    if not isinstance(u, ToeplitzGenerator):
        u = ToeplitzGenerator(u=np.asarray(u, dtype=complex))
    vec = u.u
    N = vec.size
    idx = np.arange(N)[:, None] - np.arange(N)[None, :]
    out = np.where(idx >= 0, vec[np.abs(idx)], np.conj(vec[np.abs(idx)]))
    return out


def default_grid_size(N: int) -> int:
    """Evaluation grid for dual-norm scans: ceil(4 pi N ln N)."""
    return math.ceil(4 * np.pi * N * math.log(N))


def _grid_norms_sq(Q: np.ndarray, L: int) -> np.ndarray:
    """||Q a(l/L)||^2 for l = 0..L-1.

    Row k of Q holds coefficients of a degree-(N-1) trig polynomial in the
    shifted index; the modulus is phase-invariant so the common phase factor
    from the index shift is dropped.  Zero-padded inverse FFT per row.
    """
    N = Q.shape[1]
    if L >= N:
        P = L * np.fft.ifft(Q, n=L, axis=1)
    else:
        taus = np.arange(L) / L
        M = (N - 1) // 4
        m = np.arange(-2 * M, 2 * M + 1)
        P = Q @ np.exp(2j * np.pi * np.outer(m, taus))
    return np.sum(np.abs(P) ** 2, axis=0)


def _eval_norm_sq(Q: np.ndarray, taus, m: np.ndarray):
    """Direct ||Q a(tau)||^2 at arbitrary points (the non-FFT fallback)."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    A = np.exp(2j * np.pi * np.outer(m, taus))
    return np.sum(np.abs(Q @ A) ** 2, axis=0)


def _refine_peak(Q: np.ndarray, m: np.ndarray, lo: float, hi: float,
                 tol: float = 1e-13, max_steps: int = 60):
    """Bisection on the derivative of ||Q a||^2 inside [lo, hi].

    The bracket comes from a grid local maximum, so the derivative changes
    sign inside.  Falls back to golden-section when the derivative has equal
    signs at both ends (flat peak).
    """
    dQ = Q * (2j * np.pi * m)[None, :]

    def deriv(t):
        a = np.exp(2j * np.pi * m * t)
        p = Q @ a
        dp = dQ @ a
        return 2 * np.real(np.vdot(p, dp))

    dlo, dhi = deriv(lo), deriv(hi)
    if dlo > 0 and dhi < 0:
        a, b = lo, hi
        for _ in range(max_steps):
            mid = (a + b) / 2
            if b - a <= tol:
                break
            if deriv(mid) > 0:
                a = mid
            else:
                b = mid
        t = (a + b) / 2
    else:
        gr = (math.sqrt(5) - 1) / 2
        a, b = lo, hi
        c = b - gr * (b - a)
        d = a + gr * (b - a)
        fc = _eval_norm_sq(Q, c, m)[0]
        fd = _eval_norm_sq(Q, d, m)[0]
        for _ in range(max_steps + 40):
            if b - a <= tol:
                break
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - gr * (b - a)
                fc = _eval_norm_sq(Q, c, m)[0]
            else:
                a, c, fc = c, d, fd
                d = a + gr * (b - a)
                fd = _eval_norm_sq(Q, d, m)[0]
        t = (a + b) / 2
    return t % 1.0, float(_eval_norm_sq(Q, t % 1.0, m)[0])


def dual_norm(Q: np.ndarray, grid_size=None) -> tuple[float, float]:
    """sup_tau ||Q a(tau)||_2 and a maximizing tau.

    Coarse FFT grid (default ceil(4 pi N ln N) points) locates candidate
    peaks; each near-top local maximum is refined by derivative bisection to
    |dtau| <= 1e-12.  Ties are broken toward the smallest tau.
    """
    Q = np.asarray(Q, dtype=complex)
    if Q.ndim == 1:
        Q = Q[None, :]
    N = Q.shape[1]
    if (N - 1) % 4 != 0:
        raise ValueError("Q must have 4M+1 columns")
    M = (N - 1) // 4
    m = np.arange(-2 * M, 2 * M + 1)
    if not np.any(Q):
        return 0.0, 0.0
    L = grid_size or default_grid_size(N)
    V = _grid_norms_sq(Q, L)
    vmax = V.max()
    is_peak = (V >= np.roll(V, 1)) & (V >= np.roll(V, -1))
    cand = np.flatnonzero(is_peak & (V >= 0.999 * vmax))
    best_val = -1.0
    best_tau = 0.0
    for i in cand:
        t, v = _refine_peak(Q, m, (i - 1) / L, (i + 1) / L)
        if v > best_val * (1 + 1e-12):
            best_val, best_tau = v, t
        elif v >= best_val * (1 - 1e-12) and t < best_tau:
            best_tau = t
    return math.sqrt(best_val), best_tau


def certified_dual_norm_bound(Q: np.ndarray, L: int) -> float:
    """Guaranteed upper bound on the dual norm from an L-point grid.

    sup ||Q a||^2 <= (1 - 2 pi N / L)^{-1} max_l ||Q a(l/L)||^2; needs
    L >= ceil(4 pi N) + 1 so the factor stays below 2.
    """
    Q = np.asarray(Q, dtype=complex)
    if Q.ndim == 1:
        Q = Q[None, :]
    N = Q.shape[1]
    if L < math.ceil(4 * np.pi * N) + 1:
        raise ValueError(f"L must be at least ceil(4 pi N)+1 = {math.ceil(4*np.pi*N)+1}")
    factor = 1.0 / (1.0 - 2 * np.pi * N / L)
    return math.sqrt(factor * _grid_norms_sq(Q, L).max())


def bernstein_check(Q: np.ndarray) -> tuple[float, float]:
    """Degree-based derivative ratios of the vector polynomial Q a(.).

    Differentiation is taken in the angle theta = 2 pi tau, so row
    coefficients pick up factors i*m; the polynomial has degree 2M < N and
    the ratios sup||(Qa)'|| / (N sup||Qa||) and sup||(Qa)''|| / (N^2 sup||Qa||)
    stay below 1.  Zero Q returns (0, 0).
    """
    Q = np.asarray(Q, dtype=complex)
    if Q.ndim == 1:
        Q = Q[None, :]
    if not np.any(Q):
        return 0.0, 0.0
    N = Q.shape[1]
    M = (N - 1) // 4
    m = np.arange(-2 * M, 2 * M + 1)
    L = 4 * default_grid_size(N)
    base = math.sqrt(_grid_norms_sq(Q, L).max())
    d1 = math.sqrt(_grid_norms_sq(Q * (1j * m)[None, :], L).max())
    d2 = math.sqrt(_grid_norms_sq(Q * (-(m.astype(float) ** 2))[None, :], L).max())
    return d1 / (N * base), d2 / (N ** 2 * base)


def atomic_norm_value(u_hat, T_hat: np.ndarray) -> float:
    """SDP surrogate value ((1/N) tr Toep(u) + tr T) / 2 of a feasible block."""
    vec = u_hat.u if isinstance(u_hat, ToeplitzGenerator) else np.asarray(u_hat, dtype=complex)
    T_hat = np.asarray(T_hat, dtype=complex)
    return float(0.5 * (vec[0].real + np.trace(T_hat).real))


def atomic_norm_sdp(X: np.ndarray, rho: float = 1.0, eps: float = 1e-7,
                    max_iters: int = 50000) -> float:
    """Atomic norm of X via the Toeplitz-block SDP with X held fixed.

    Minimizes the surrogate over (u, T) subject to
    [[Toep(u), X^H], [X, T]] >= 0 by the same splitting the denoiser uses;
    intended for small cross-checks, not production scale.
    """
    X = np.asarray(X, dtype=complex)
    K, N = X.shape
    if not np.any(X):
        return 0.0
    n = N + K
    scale = np.linalg.norm(X)
    dmat = np.arange(N)[:, None] - np.arange(N)[None, :]
    lower_mask = dmat >= 0
    dflat = dmat[lower_mask]
    cnt = (N - np.arange(N)).astype(float)
    toep_abs = np.abs(dmat)
    toep_conj = dmat < 0
    Z = np.zeros((n, n), dtype=complex)
    W = np.zeros((n, n), dtype=complex)
    G = np.zeros((n, n), dtype=complex)
    G[N:, :N] = X
    G[:N, N:] = X.conj().T
    val = 0.0
    for it in range(1, max_iters + 1):
        S = Z + W
        w_low = S[:N, :N][lower_mask]
        u = (np.bincount(dflat, weights=w_low.real, minlength=N)
             + 1j * np.bincount(dflat, weights=w_low.imag, minlength=N)) / cnt
        u[0] = u[0].real - 1.0 / (2 * N * rho)
        T = S[N:, N:] - (1.0 / (2 * rho)) * np.eye(K)
        T = (T + T.conj().T) / 2
        G[:N, :N] = np.where(toep_conj, np.conj(u[toep_abs]), u[toep_abs])
        G[N:, N:] = T
        ew, ev = scipy.linalg.eigh(G - W, driver="evr", lower=True)
        pos = ew > 0
        Znew = (ev[:, pos] * ew[pos]) @ ev[:, pos].conj().T
        r_norm = np.linalg.norm(Znew - G)
        s_norm = rho * np.linalg.norm(Znew - Z)
        Z = Znew
        W += Z - G
        val = 0.5 * (u[0].real + np.trace(T).real)
        tol = eps * n + eps * max(np.linalg.norm(G), scale)
        if r_norm <= tol and s_norm <= tol:
            break
        rr = r_norm / tol
        ss = s_norm / tol
        if rr > 10 * ss and rho < 1e6:
            rho *= 2
            W /= 2
        elif ss > 10 * rr and rho > 1e-8:
            rho /= 2
            W *= 2
    return float(val)


def minimal_feasible_point(tau: float, h: np.ndarray, c: float, M: int):
    """The (u, T) pair certifying ||c h a(tau)^H||_A <= c.

    u(d) = c e^{i 2 pi tau d}, T = c h h^H; the block then factors as a
    single rank-1 PSD term.
    """
    h = np.asarray(h, dtype=complex)
    N = 4 * M + 1
    u = c * np.exp(2j * np.pi * tau * np.arange(N)).astype(complex)
    T = c * np.outer(h, h.conj())
    return ToeplitzGenerator(u=u), T


def duality_gap_pairing(Q: np.ndarray, X: np.ndarray) -> float:
    """Real inner product Re tr(Q^H X) used in the duality inequality."""
    return float(np.real(np.vdot(np.asarray(Q), np.asarray(X))))
