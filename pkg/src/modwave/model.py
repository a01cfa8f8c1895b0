"""Signal model: subspace-modulated complex exponentials and the sampling operators.

The observed vector collects uniform samples indexed m = -2M..2M (length
N = 4M+1, stored at array position m + 2M).  Each sample is

    x(m) = sum_j c_j exp(-i 2 pi m tau_j) <b_m, h_j>

where b_m is the m-th subspace row and h_j a unit-norm waveform coefficient
vector.  The lifted form X = sum_j c_j h_j a(tau_j)^H turns sampling into the
linear map ``apply_B`` whose adjoint is ``apply_Badj``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# substream ids for deriving per-purpose seeds from one trial seed
STREAM_SUBSPACE = 0
STREAM_WAVEFORM = 1
STREAM_NOISE = 2
STREAM_FREQS = 3

_MASK64 = (1 << 64) - 1


def split_seed(seed: int, *words: int) -> int:
    """Mix a base seed with extra words into a new 64-bit seed.

    splitmix64 finalizer applied to the running xor; deterministic and
    documented so trial streams can be reproduced outside this package.
    """
    state = seed & _MASK64
    for w in words:
        state ^= (w & _MASK64) * 0x9E3779B97F4A7C15 & _MASK64
        # splitmix64 finalization
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
        state = z ^ (z >> 31)
    return state


def rng_from_seed(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed & _MASK64)))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Subspace:
    """N rows b_m in C^K, m = -2M..2M, plus coherence metadata.

    ``rows[i]`` is b_m for m = i - 2M.  The modulation matrix B (with
    g = B h) has row m equal to conj(b_m); for real subspaces the two
    coincide.
    """

    rows: np.ndarray          # (N, K) complex
    coherence_mu: float = field(init=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=complex)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-d array of shape (N, K)")
        N, K = rows.shape
        if N < 5 or (N - 1) % 4 != 0:
            raise ValueError(f"N must equal 4M+1 for integer M >= 1, got {N}")
        if not 1 <= K <= N:
            raise ValueError(f"need 1 <= K <= N, got K={K}, N={N}")
        object.__setattr__(self, "rows", _freeze(rows))
        object.__setattr__(self, "coherence_mu", float(np.max(np.abs(rows) ** 2)))

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def half_order(self) -> int:
        """M with N = 4M+1."""
        return (self.rows.shape[0] - 1) // 4

    @property
    def sample_indices(self) -> np.ndarray:
        """The index vector m = -2M..2M."""
        M = self.half_order
        return np.arange(-2 * M, 2 * M + 1)

    @property
    def frob_norm(self) -> float:
        """Frobenius norm of the modulation matrix (= ||rows||_F)."""
        return float(np.linalg.norm(self.rows))

    @property
    def matrix(self) -> np.ndarray:
        """The N x K modulation matrix B with rows conj(b_m)."""
        return self.rows.conj()


@dataclass(frozen=True)
class GroundTruth:
    """Frequencies tau_j in [0,1), positive amplitudes c_j, unit waveforms h_j."""

    freqs: np.ndarray            # (J,)
    amps: np.ndarray             # (J,)
    waveform_coeffs: np.ndarray  # (J, K) complex, unit-norm rows
    min_sep: Optional[float] = None   # declared separation when built by the grid generator

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        amps = np.asarray(self.amps, dtype=float)
        H = np.asarray(self.waveform_coeffs, dtype=complex)
        if freqs.ndim != 1 or amps.shape != freqs.shape or H.shape[0] != freqs.size:
            raise ValueError("freqs, amps, waveform_coeffs must share leading dimension J")
        if np.any((freqs < 0) | (freqs >= 1)):
            raise ValueError("frequencies must lie in [0, 1)")
        if np.any(amps <= 0):
            raise ValueError("amplitudes must be positive")
        norms = np.linalg.norm(H, axis=1)
        if np.any(np.abs(norms - 1) > 1e-12):
            raise ValueError("waveform coefficient rows must be unit norm")
        if self.min_sep is not None:
            for a in range(freqs.size):
                for b in range(a + 1, freqs.size):
                    if wrap_distance(freqs[a], freqs[b]) < self.min_sep - 1e-12:
                        raise ValueError("declared min_sep violated")
        object.__setattr__(self, "freqs", _freeze(freqs))
        object.__setattr__(self, "amps", _freeze(amps))
        object.__setattr__(self, "waveform_coeffs", _freeze(H))

    @property
    def n_tones(self) -> int:
        return self.freqs.size


@dataclass(frozen=True)
class DataMatrix:
    """The K x N lifted variable X = sum_j c_j h_j a(tau_j)^H."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2:
            raise ValueError("entries must be 2-d (K, N)")
        object.__setattr__(self, "entries", _freeze(entries))


@dataclass(frozen=True)
class SignalInstance:
    """One generated problem: subspace, truth, clean and noisy samples."""

    subspace: Subspace
    truth: GroundTruth
    clean: np.ndarray
    noisy: np.ndarray
    noise_sigma: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "clean", _freeze(np.asarray(self.clean, dtype=complex)))
        object.__setattr__(self, "noisy", _freeze(np.asarray(self.noisy, dtype=complex)))


def atom_vector(tau: float, M: int) -> np.ndarray:
    """Steering vector a(tau) with entries e^{i 2 pi tau m}, m = -2M..2M.

    Parameters
    ----------
    tau : float
        Frequency in [0, 1).
    M : int
        Half order; the output has length 4M+1 and squared norm 4M+1.
    """
    if not 0 <= tau < 1:
        raise ValueError(f"tau must lie in [0, 1), got {tau}")
    if M < 1:
        raise ValueError("M must be >= 1")
    m = np.arange(-2 * M, 2 * M + 1)
    return np.exp(2j * np.pi * tau * m)


def wrap_distance(t1: float, t2: float) -> float:
    """Circular distance on [0,1): min(|t1-t2|, 1-|t1-t2|)."""
    d = abs(float(t1) - float(t2))
    return min(d, 1.0 - d)


def generate_subspace_rademacher(M: int, K: int, seed: int) -> Subspace:
    """Subspace with i.i.d. +-1 rows (coherence exactly 1).

    Deterministic per seed.  ||B||_F^2 = NK always.
    """
    if M < 1 or K < 1:
        raise ValueError("need M >= 1 and K >= 1")
    N = 4 * M + 1
    rng = rng_from_seed(seed)
    entries = rng.integers(0, 2, size=(N, K)) * 2.0 - 1.0
    return Subspace(rows=entries.astype(complex))


def generate_waveforms(J: int, K: int, seed: int) -> np.ndarray:
    """J unit-norm rows with i.i.d. standard normal real/imag parts before scaling."""
    rng = rng_from_seed(seed)
    H = rng.standard_normal((J, K)) + 1j * rng.standard_normal((J, K))
    return H / np.linalg.norm(H, axis=1, keepdims=True)


def generate_grid_freqs(J: int, M: int, seed: int) -> np.ndarray:
    """Draw J distinct frequencies from {0, 1/M, ..., (M-1)/M}, sorted.

    The grid spacing 1/M is the declared minimum separation; distinctness
    guarantees it, but the pairwise check runs anyway as a guard.
    """
    if J > M:
        raise ValueError(f"cannot draw {J} distinct frequencies from a grid of {M}")
    rng = rng_from_seed(seed)
    picks = np.sort(rng.choice(M, size=J, replace=False))
    freqs = picks / M
    for a in range(J):
        for b in range(a + 1, J):
            assert wrap_distance(freqs[a], freqs[b]) >= 1.0 / M - 1e-12
    return freqs


def lift_truth(truth: GroundTruth, subspace: Subspace) -> DataMatrix:
    """X* = sum_j c_j h_j a(tau_j)^H, shape (K, N)."""
    M = subspace.half_order
    if truth.waveform_coeffs.shape[1] != subspace.dim:
        raise ValueError("waveform dimension does not match subspace")
    X = np.zeros((subspace.dim, subspace.n_samples), dtype=complex)
    for j in range(truth.n_tones):
        X += truth.amps[j] * np.outer(truth.waveform_coeffs[j],
                                      atom_vector(truth.freqs[j], M).conj())
    return DataMatrix(entries=X)


def apply_B(X, subspace: Subspace) -> np.ndarray:
    """Sample the lifted matrix: output entry for index m is b_m^H X e_m."""
    entries = X.entries if isinstance(X, DataMatrix) else np.asarray(X, dtype=complex)
    if entries.shape != (subspace.dim, subspace.n_samples):
        raise ValueError(f"X must have shape (K, N) = {(subspace.dim, subspace.n_samples)}")
    return np.einsum("ik,ki->i", subspace.rows.conj(), entries)


def apply_Badj(x: np.ndarray, subspace: Subspace) -> np.ndarray:
    """Adjoint of apply_B: column m of the output is x(m) * b_m."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (subspace.n_samples,):
        raise ValueError(f"x must have length N = {subspace.n_samples}")
    return (subspace.rows * x[:, None]).T


def generate_signal(subspace: Subspace, truth: GroundTruth) -> np.ndarray:
    """Clean sample vector; identical to apply_B(lift_truth(...)) but direct."""
    if truth.waveform_coeffs.shape[1] != subspace.dim:
        raise ValueError("waveform dimension does not match subspace")
    m = subspace.sample_indices
    # inner products <b_m, h_j> for all m, j at once
    proj = subspace.rows.conj() @ truth.waveform_coeffs.T          # (N, J)
    phases = np.exp(-2j * np.pi * np.outer(m, truth.freqs))        # (N, J)
    return (phases * proj) @ truth.amps.astype(complex)


def add_noise(clean: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Add circular complex Gaussian noise with per-entry variance sigma^2.

    Real and imaginary parts are independent N(0, sigma^2/2).
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    clean = np.asarray(clean, dtype=complex)
    if sigma == 0:
        return clean.copy()
    rng = rng_from_seed(seed)
    z = rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
    return clean + sigma / np.sqrt(2.0) * z


def make_instance(M: int, truth: GroundTruth, sigma: float, seed: int,
                  subspace: Optional[Subspace] = None) -> SignalInstance:
    """Assemble a SignalInstance from per-purpose substreams of one seed."""
    if subspace is None:
        subspace = generate_subspace_rademacher(
            M, truth.waveform_coeffs.shape[1], split_seed(seed, STREAM_SUBSPACE))
    clean = generate_signal(subspace, truth)
    noisy = add_noise(clean, sigma, split_seed(seed, STREAM_NOISE))
    return SignalInstance(subspace=subspace, truth=truth, clean=clean,
                          noisy=noisy, noise_sigma=sigma, seed=seed)


# ---------------------------------------------------------------------------
# file formats

def write_signal_csv(path, x: np.ndarray, M: int) -> None:
    """Rows `m,re,im` ordered m = -2M..2M."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (4 * M + 1,):
        raise ValueError("signal length must be 4M+1")
    with open(path, "w") as fh:
        fh.write("m,re,im\n")
        for i, m in enumerate(range(-2 * M, 2 * M + 1)):
            fh.write(f"{m},{float(x[i].real)!r},{float(x[i].imag)!r}\n")


def read_signal_csv(path) -> tuple[np.ndarray, int]:
    """Returns (x, M).  Rows must cover m = -2M..2M in order."""
    ms, vals = [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "m,re,im":
            raise ValueError(f"bad signal header {header!r}, expected 'm,re,im'")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            f0, f1, f2 = line.split(",")
            ms.append(int(f0))
            vals.append(float(f1) + 1j * float(f2))
    N = len(ms)
    if N < 5 or (N - 1) % 4 != 0:
        raise ValueError(f"signal length {N} is not 4M+1")
    M = (N - 1) // 4
    if ms != list(range(-2 * M, 2 * M + 1)):
        raise ValueError("signal rows must cover m = -2M..2M in order")
    return np.array(vals, dtype=complex), M


def write_subspace_csv(path, subspace: Subspace) -> None:
    """Rows `m,k,re,im` over all samples and components, row-major in m then k."""
    M = subspace.half_order
    with open(path, "w") as fh:
        fh.write("m,k,re,im\n")
        for i, m in enumerate(range(-2 * M, 2 * M + 1)):
            for k in range(subspace.dim):
                v = subspace.rows[i, k]
                fh.write(f"{m},{k},{float(v.real)!r},{float(v.imag)!r}\n")


def read_subspace_csv(path) -> Subspace:
    rows = {}
    kmax = -1
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "m,k,re,im":
            raise ValueError(f"bad subspace header {header!r}, expected 'm,k,re,im'")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            f0, f1, f2, f3 = line.split(",")
            m, k = int(f0), int(f1)
            rows[(m, k)] = float(f2) + 1j * float(f3)
            kmax = max(kmax, k)
    ms = sorted({m for m, _ in rows})
    N, K = len(ms), kmax + 1
    if N < 5 or (N - 1) % 4 != 0:
        raise ValueError(f"subspace has {N} sample rows, not of the form 4M+1")
    M = (N - 1) // 4
    if ms != list(range(-2 * M, 2 * M + 1)):
        raise ValueError("subspace rows must cover m = -2M..2M")
    out = np.zeros((N, K), dtype=complex)
    for i, m in enumerate(range(-2 * M, 2 * M + 1)):
        for k in range(K):
            if (m, k) not in rows:
                raise ValueError(f"missing subspace entry m={m}, k={k}")
            out[i, k] = rows[(m, k)]
    return Subspace(rows=out)


def write_truth_json(path, truth: GroundTruth, M: int, seed: int) -> None:
    import json
    H = truth.waveform_coeffs
    obj = {
        "M": M,
        "K": int(H.shape[1]),
        "J": int(truth.n_tones),
        "freqs": [float(t) for t in truth.freqs],
        "amps": [float(c) for c in truth.amps],
        "h": [[{"re": v.real, "im": v.imag} for v in row] for row in H],
        "seed": int(seed),
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def read_truth_json(path) -> tuple[GroundTruth, int, int]:
    """Returns (truth, M, seed)."""
    import json
    with open(path) as fh:
        obj = json.load(fh)
    for key in ("M", "K", "J", "freqs", "amps", "h", "seed"):
        if key not in obj:
            raise ValueError(f"truth file missing field {key!r}")
    H = np.array([[c["re"] + 1j * c["im"] for c in row] for row in obj["h"]],
                 dtype=complex)
    if H.shape != (obj["J"], obj["K"]):
        raise ValueError("waveform array shape disagrees with J, K fields")
    truth = GroundTruth(freqs=np.array(obj["freqs"], dtype=float),
                        amps=np.array(obj["amps"], dtype=float),
                        waveform_coeffs=H)
    return truth, int(obj["M"]), int(obj["seed"])
