"""Dual polynomials: evaluation, peak localization, and construction.

A dual vector q induces the matrix polynomial Q(tau) = B*(q) a(tau) in
C^K. Frequencies are read off as the near-unit peaks of ||Q(tau)||_2.
The constructor builds q from a squared-Fejer matrix kernel so that
Q(tau_j) = h_j and Q'(tau_j) = 0, then scans the unit circle to verify
the certificate actually stays below one away from the support.
"""

import json
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .atomic import _grid_norms_sq, _refine_peak, default_grid_size
from .model import GroundTruth, Subspace, apply_Badj, wrap_distance, _freeze

__all__ = [
    "DualCertificate",
    "CertificateReport",
    "eval_Q",
    "eval_Q_deriv",
    "residual_certificate",
    "localize",
    "squared_fejer_coeffs",
    "construct_certificate",
    "write_certificate_report",
    "read_certificate_report",
]

# width of the near region around each supported frequency, in units of 1/N
NEAR_RADIUS = 0.16
# peaks closer than this (in units of 1/N) are the same frequency
MERGE_RADIUS = 0.5


@dataclass(frozen=True)
class DualCertificate:
    q: np.ndarray
    subspace: Subspace

    def __post_init__(self):
        q = np.asarray(self.q, dtype=complex)
        if q.ndim != 1 or q.shape[0] != self.subspace.n_samples:
            raise ValueError("q length must match the subspace sample count")
        object.__setattr__(self, "q", _freeze(q))


@dataclass(frozen=True)
class CertificateReport:
    """Scan summary for a constructed certificate.

    support_values[j] is the interpolation defect ||Q(tau_j) - h_j||_2;
    far_max is the largest ||Q(tau)||_2 outside every near region
    (wrap distance > 0.16/N from the support); near_quadratic_ok[j]
    records whether 1 - ||Q|| decays quadratically inside region j.
    """

    freqs: np.ndarray
    support_values: np.ndarray
    far_max: float
    near_quadratic_ok: List[bool]
    condition_number: float


def eval_Q(cert: DualCertificate, tau: float) -> np.ndarray:
    """Q(tau) = sum_m q(m) e^{i 2 pi m tau} b_m, a vector in C^K."""
    m = cert.subspace.sample_indices
    phases = np.exp(2j * np.pi * m * tau)
    return (cert.q * phases) @ cert.subspace.rows


def eval_Q_deriv(cert: DualCertificate, tau: float) -> np.ndarray:
    m = cert.subspace.sample_indices
    phases = (2j * np.pi * m) * np.exp(2j * np.pi * m * tau)
    return (cert.q * phases) @ cert.subspace.rows


def residual_certificate(problem, solution) -> DualCertificate:
    """q = (y - x_hat) / lambda; at the optimum its polynomial is
    dual-feasible, so sup ||Q(tau)|| stays within 1 up to solver slack."""
    if problem.lam == 0:
        raise ValueError("lambda must be positive")
    q = (problem.y - solution.x_hat) / problem.lam
    return DualCertificate(q=q, subspace=problem.subspace)


def localize(cert: DualCertificate, threshold: float = 0.99) -> List[Tuple[float, float]]:
    """Frequencies where ||Q(tau)||_2 peaks above threshold.

    Grid scan plus derivative-bisection refinement (|dtau| <= 1e-10);
    peaks within 0.5/N of a stronger one are merged into it. Returns
    (tau_hat, strength) pairs sorted by tau.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    Qm = apply_Badj(cert.q, cert.subspace)
    if not np.any(Qm):
        return []
    N = cert.subspace.n_samples
    M = cert.subspace.half_order
    m = cert.subspace.sample_indices
    L = default_grid_size(N)
    V = _grid_norms_sq(Qm, L)
    thr_sq = threshold * threshold
    is_peak = (V >= np.roll(V, 1)) & (V >= np.roll(V, -1)) & (V > thr_sq)
    found = []
    for i in np.flatnonzero(is_peak):
        t, v_sq = _refine_peak(Qm, m, (i - 1) / L, (i + 1) / L, tol=1e-12)
        if v_sq > thr_sq:
            found.append((t, math.sqrt(v_sq)))
    found.sort(key=lambda p: -p[1])
    kept = []
    for t, v in found:
        if all(wrap_distance(t, t0) > MERGE_RADIUS / N for t0, _ in kept):
            kept.append((t, v))
    kept.sort(key=lambda p: p[0])
    return kept


def squared_fejer_coeffs(M: int) -> np.ndarray:
    """Fourier coefficients g(m), m = -2M..2M, of the squared Fejer
    kernel: (1/M) sum_m g(m) e^{i 2 pi tau m} equals
    [sin(pi(M+1)tau) / ((M+1) sin(pi tau))]^4.

    The triangle sequence (1-|m|/(M+1))/(M+1) synthesizes the square
    root of the kernel, so g is M times its autocorrelation.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    mm = np.arange(-M, M + 1)
    f = (1.0 - np.abs(mm) / (M + 1.0)) / (M + 1.0)
    return M * np.convolve(f, f)


def _kernel_suite(g: np.ndarray, m: np.ndarray, rows: np.ndarray, deltas: np.ndarray):
    """K(delta), K'(delta), K''(delta) stacked over a delta list.

    K(d) = (1/M) sum_m g(m) (i 2 pi m)^order e^{i 2 pi m d} b_m b_m^H.
    """
    M = (m.size - 1) // 4
    phase = np.exp(2j * np.pi * np.outer(deltas, m))  # (D, N)
    out = []
    for order in range(3):
        w = (g / M) * (2j * np.pi * m) ** order
        ker = np.einsum("dn,nk,nl->dkl", phase * w[None, :], rows, rows.conj())
        out.append(ker)
    return out


def construct_certificate(truth: GroundTruth, subspace: Subspace):
    """Interpolating certificate from the squared-Fejer matrix kernel.

    Solves the 2JK x 2JK system forcing Q(tau_j) = h_j, Q'(tau_j) = 0
    with kernel and kernel-derivative blocks (derivative unknowns are
    scaled by the kernel curvature so the system is well conditioned),
    then reads the coefficient vector q off the Fourier weights.
    Returns (q, CertificateReport).
    """
    freqs = truth.freqs
    H = truth.waveform_coeffs
    rows = subspace.rows
    N, K = rows.shape
    M = subspace.half_order
    J = freqs.shape[0]
    if N < 2 * J * K:
        raise ValueError("need N >= 2*J*K for the interpolation system")
    m = subspace.sample_indices
    g = squared_fejer_coeffs(M)
    kappa = math.sqrt(float(np.sum(g * (2 * np.pi * m) ** 2)) / M)

    deltas = (freqs[:, None] - freqs[None, :]).ravel()
    K0, K1, K2 = _kernel_suite(g, m, rows, deltas)
    K0 = K0.reshape(J, J, K, K)
    K1 = K1.reshape(J, J, K, K)
    K2 = K2.reshape(J, J, K, K)

    # block rows: value constraints then scaled derivative constraints
    top = np.concatenate([
        np.concatenate([K0[l, j] for j in range(J)], axis=1)
        for l in range(J)], axis=0)
    tr = np.concatenate([
        np.concatenate([K1[l, j] / kappa for j in range(J)], axis=1)
        for l in range(J)], axis=0)
    bl = np.concatenate([
        np.concatenate([K1[l, j] / kappa for j in range(J)], axis=1)
        for l in range(J)], axis=0)
    br = np.concatenate([
        np.concatenate([K2[l, j] / kappa ** 2 for j in range(J)], axis=1)
        for l in range(J)], axis=0)
    system = np.block([[top, tr], [bl, br]])
    rhs = np.concatenate([H.ravel(), np.zeros(J * K, dtype=complex)])

    U, sv, Vh = np.linalg.svd(system)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if not math.isfinite(cond) or cond > 1e12:
        raise ValueError(
            f"singular interpolation system (condition number {cond:.3e})")
    coef = Vh.conj().T @ ((U.conj().T @ rhs) / sv)
    alpha = coef[:J * K].reshape(J, K)
    beta = coef[J * K:].reshape(J, K) / kappa

    phases = np.exp(-2j * np.pi * np.outer(m, freqs))  # (N, J)
    A_m = phases @ alpha
    B_m = phases @ beta
    q = (g / M) * np.einsum("ik,ik->i", rows.conj(),
                            A_m + (2j * np.pi * m)[:, None] * B_m)

    cert = DualCertificate(q=q, subspace=subspace)
    report = _scan_certificate(cert, freqs, H, cond)
    return q, report


def _scan_certificate(cert: DualCertificate, freqs: np.ndarray, H: np.ndarray,
                      cond: float) -> CertificateReport:
    sub = cert.subspace
    N = sub.n_samples
    m = sub.sample_indices
    J = freqs.shape[0]
    support_values = np.array(
        [np.linalg.norm(eval_Q(cert, t) - H[j]) for j, t in enumerate(freqs)])

    Qm = apply_Badj(cert.q, sub)
    L = 4 * default_grid_size(N)
    taus = np.arange(L) / L
    vals = np.sqrt(_grid_norms_sq(Qm, L))
    far = np.ones(L, dtype=bool)
    for t in freqs:
        d = np.abs(taus - t)
        far &= np.minimum(d, 1.0 - d) > NEAR_RADIUS / N
    far_idx = np.flatnonzero(far)
    far_max = 0.0
    if far_idx.size:
        top = far_idx[np.argmax(vals[far_idx])]
        far_max = float(vals[top])
        t_ref, v_sq = _refine_peak(Qm, m, (top - 1) / L, (top + 1) / L)
        still_far = all(wrap_distance(t_ref, t) > NEAR_RADIUS / N for t in freqs)
        if still_far and math.sqrt(v_sq) > far_max:
            far_max = math.sqrt(v_sq)

    near_ok = []
    offsets = np.geomspace(0.02 / N, NEAR_RADIUS / N, 12)
    for j, t in enumerate(freqs):
        pts = np.concatenate([t + offsets, t - offsets]) % 1.0
        qa = np.exp(2j * np.pi * np.outer(m, pts))
        norms = np.linalg.norm(Qm @ qa, axis=0)
        defects = 1.0 - norms
        if np.any(defects <= 0):
            near_ok.append(False)
            continue
        logd = np.log(np.concatenate([offsets, offsets]))
        slope = np.polyfit(logd, np.log(defects), 1)[0]
        near_ok.append(bool(abs(slope - 2.0) <= 0.2))

    return CertificateReport(
        freqs=_freeze(np.asarray(freqs, dtype=float)),
        support_values=_freeze(support_values),
        far_max=far_max,
        near_quadratic_ok=near_ok,
        condition_number=cond,
    )


def write_certificate_report(path, report: CertificateReport) -> None:
    payload = {
        "support": [{"tau": float(t), "defect": float(d)}
                    for t, d in zip(report.freqs, report.support_values)],
        "far_max": report.far_max,
        "near_ok": list(report.near_quadratic_ok),
        "condition_number": report.condition_number,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_certificate_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
