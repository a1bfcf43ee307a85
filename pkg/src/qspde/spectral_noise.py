"""Exact-in-law sampling of the linear stochastic heat solution on the torus.

The field is a truncated Fourier series over wave vectors k = 2*pi*m,
|m_i| <= kmax.  Each mode is an Ornstein-Uhlenbeck type stochastic
convolution driven by a complex Brownian motion with spectral weight
khat(k) = (1 + |k|^2)^(-s/2); noise is injected only on (0, 1], after
which modes decay deterministically.  Advancing a mode between two grid
times uses the exact Gaussian transition law, so grid values have the
exact law of the continuum object regardless of step size.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.signal import lfilter

QSPD_MAGIC = b"QSPD"
QSPD_VERSION = 1


# ---------------------------------------------------------------------------
# grid fields and the shared binary format


@dataclass
class Field:
    """Scalar samples on a uniform periodic grid, one slab per time.

    values has shape (n_t, n_x, ..., n_x) with d trailing spatial axes.
    Spatial indexing is periodic: index n_x wraps to 0.  Vector-valued
    data (gradients, fluxes) is carried as one Field per component.
    """

    values: np.ndarray
    dt: float
    t_start: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim < 2:
            raise ValueError("Field needs a time axis plus at least one spatial axis")
        spatial = self.values.shape[1:]
        if len(set(spatial)) != 1:
            raise ValueError(f"spatial axes must agree, got {spatial}")

    @property
    def d(self) -> int:
        return self.values.ndim - 1

    @property
    def n_t(self) -> int:
        return self.values.shape[0]

    @property
    def n_x(self) -> int:
        return self.values.shape[1]

    @property
    def dx(self) -> float:
        return 1.0 / self.n_x

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_t)


def write_qspd(path, f: Field) -> None:
    """Write a Field in the shared binary format.

    Layout: magic "QSPD", u32 version, int64 d, d int64 per-axis sizes,
    int64 n_t, f64 dt, f64 t_start, then float64 little-endian payload,
    time-major then row-major in space.
    """
    with open(path, "wb") as fh:
        fh.write(QSPD_MAGIC)
        fh.write(struct.pack("<I", QSPD_VERSION))
        fh.write(struct.pack("<q", f.d))
        fh.write(struct.pack(f"<{f.d}q", *f.values.shape[1:]))
        fh.write(struct.pack("<q", f.n_t))
        fh.write(struct.pack("<dd", f.dt, f.t_start))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_qspd(path) -> Field:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != QSPD_MAGIC:
            raise ValueError(f"not a QSPD file (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != QSPD_VERSION:
            raise ValueError(f"unsupported QSPD version {version}")
        (d,) = struct.unpack("<q", fh.read(8))
        if not 1 <= d <= 8:
            raise ValueError(f"implausible dimension {d}")
        shape = struct.unpack(f"<{d}q", fh.read(8 * d))
        (n_t,) = struct.unpack("<q", fh.read(8))
        dt, t_start = struct.unpack("<dd", fh.read(16))
        count = n_t * int(np.prod(shape))
        payload = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
        values = payload.reshape((n_t,) + shape).astype(np.float64)
    return Field(values, dt=dt, t_start=t_start)


# ---------------------------------------------------------------------------
# covariance spec and mode bookkeeping


class CovarianceSpec:
    """Noise parameters: dimension d, decay exponent s > d, mode cutoff kmax.

    s > d is the trace-class condition; the constructor rejects s <= d.
    The spectral weight saturates the decay bound: khat(k) = (1+|k|^2)^(-s/2).
    tail_fraction estimates the neglected spectral mass outside the cutoff
    (exact partial sum plus an integral-comparison remainder); it is
    reported, not enforced, so desk-scale runs can trade tail mass for speed.
    """

    def __init__(self, d: int, s: float, kmax: int):
        if int(d) != d or d < 1:
            raise ValueError(f"d must be a positive integer, got {d}")
        if not s > d:
            raise ValueError(f"trace-class condition needs s > d, got s={s}, d={d}")
        if int(kmax) != kmax or kmax < 0:
            raise ValueError(f"kmax must be a non-negative integer, got {kmax}")
        self.d = int(d)
        self.s = float(s)
        self.kmax = int(kmax)
        self.tail_fraction = self._tail_fraction()

    def khat(self, k) -> np.ndarray:
        """Spectral weight (1+|k|^2)^(-s/2) for wave vectors k (last axis d)."""
        k = np.asarray(k, dtype=np.float64)
        ksq = np.sum(np.atleast_2d(k) ** 2, axis=-1) if k.ndim > 1 else np.sum(k**2)
        return (1.0 + ksq) ** (-self.s / 2.0)

    def _shell_mass(self, ell: np.ndarray) -> np.ndarray:
        # number of m with |m|_inf = ell, times the largest khat on the shell;
        # an upper bound on the shell's spectral mass
        count = (2 * ell + 1) ** self.d - (2 * ell - 1) ** self.d
        return count * (1.0 + (2.0 * np.pi * ell) ** 2) ** (-self.s / 2.0)

    def _tail_fraction(self) -> float:
        ell = np.arange(1, self.kmax + 1, dtype=np.float64)
        inside = 1.0 + np.sum(self._shell_mass(ell)) if self.kmax else 1.0
        # explicit shells beyond the cutoff, then an integral comparison for
        # the rest; converges since s > d
        ell_out = np.arange(self.kmax + 1, self.kmax + 2001, dtype=np.float64)
        tail = np.sum(self._shell_mass(ell_out))
        L = float(ell_out[-1])
        # remainder: sum_{l>L} 2d(2l+1)^(d-1) (2 pi l)^(-s) <= integral bound
        p = self.s - (self.d - 1)
        tail += 2 * self.d * 3.0 ** (self.d - 1) * (2 * np.pi) ** (-self.s) * L ** (1 - p) / (p - 1)
        return float(tail / (inside + tail))

    def __repr__(self):
        return f"CovarianceSpec(d={self.d}, s={self.s}, kmax={self.kmax})"


def choose_kmax(d: int, s: float, tol: float = 1e-6, limit: int = 1 << 20) -> int:
    """Smallest kmax whose estimated neglected tail mass is below tol."""

    def ok(kmax):
        return CovarianceSpec(d, s, kmax).tail_fraction < tol

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > limit:
            raise ValueError(f"no kmax below {limit} meets tol={tol}")
    lo = hi // 2  # tail mass decreases in kmax, so bisect on the last doubling
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def khat(spec: CovarianceSpec, k) -> np.ndarray:
    return spec.khat(k)


@dataclass(frozen=True)
class ModeSet:
    """All wave vectors k = 2*pi*m with |m_i| <= kmax, negation-closed.

    Rows are ordered lexicographically in m over [-kmax, kmax]^d; with that
    ordering the negation pairing is index reversal.  rep_mask marks one
    representative per {k, -k} pair (m = 0, or first nonzero component
    positive); only representatives consume random draws.
    """

    d: int
    kmax: int
    m: np.ndarray
    k: np.ndarray
    ksq: np.ndarray
    neg_index: np.ndarray
    rep_mask: np.ndarray

    def __len__(self):
        return self.m.shape[0]


def make_mode_set(d: int, kmax: int) -> ModeSet:
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")
    if int(kmax) != kmax or kmax < 0:
        raise ValueError(f"kmax must be a non-negative integer, got {kmax}")
    rng1 = np.arange(-kmax, kmax + 1, dtype=np.int64)
    grids = np.meshgrid(*([rng1] * d), indexing="ij")
    m = np.stack(grids, axis=-1).reshape(-1, d)
    k = 2.0 * np.pi * m.astype(np.float64)
    ksq = np.sum(k * k, axis=1)
    n = m.shape[0]
    neg_index = np.arange(n - 1, -1, -1)
    # representative: first nonzero component positive, or m = 0
    rep = np.ones(n, dtype=bool)
    for axis in range(d):
        col = m[:, axis]
        earlier_zero = np.all(m[:, :axis] == 0, axis=1) if axis else np.ones(n, bool)
        rep &= ~(earlier_zero & (col < 0))
    return ModeSet(int(d), int(kmax), m, k, ksq, neg_index, rep)


# ---------------------------------------------------------------------------
# random streams and exact mode transitions


def mode_stream(root_seed: int, realization: int, mode_index: int) -> np.random.Generator:
    """Counter-based stream for one (realization, mode) pair.

    Philox key derives from the root seed; counter words are
    [draw, 0, realization, mode_index], so distinct pairs can never
    overlap no matter how many values each stream consumes.
    """
    key = np.random.SeedSequence(root_seed).generate_state(2, np.uint64)
    bitgen = np.random.Philox(counter=[0, 0, realization, mode_index], key=key)
    return np.random.Generator(bitgen)


def step_moments(ksq, khat_k, t0: float, t1: float):
    """Exact transition moments of a mode from time t0 to t1 >= t0.

    Returns (decay, var): the state map is x -> decay*x + sqrt(var)*z with
    z a standard complex Gaussian (real at k = 0).  Noise is accumulated
    only over the window (max(t0, 0), min(t1, 1)]; outside it the mode
    decays deterministically.
    """
    if t1 < t0:
        raise ValueError(f"t1 < t0 ({t1} < {t0})")
    ksq = np.asarray(ksq, dtype=np.float64)
    khat_k = np.asarray(khat_k, dtype=np.float64)
    decay = np.exp(-(t1 - t0) * ksq)
    w_lo = max(t0, 0.0)
    w_hi = min(t1, 1.0)
    if w_hi <= w_lo:
        return decay, np.zeros_like(ksq)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = (
            khat_k
            * np.exp(-2.0 * (t1 - w_hi) * ksq)
            * -np.expm1(-2.0 * (w_hi - w_lo) * ksq)
            / (2.0 * ksq)
        )
    var = np.where(ksq > 0.0, var, khat_k * (w_hi - w_lo))
    return decay, var


def ou_step(x, ksq, khat_k, dt: float, rng: np.random.Generator):
    """One exact transition over a step of length dt lying inside (0, 1].

    k != 0: returns exp(-dt*|k|^2)*x + sigma*z with
    sigma^2 = khat*(1 - exp(-2*dt*|k|^2))/(2*|k|^2) and z standard complex
    Gaussian (independent real/imaginary parts of variance 1/2).  k = 0:
    real Brownian update x + sqrt(khat*dt)*z_re.  Consumes two normals per
    mode per call regardless of k, so draw positions are deterministic.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    ksq = np.asarray(ksq, dtype=np.float64)
    khat_k = np.asarray(khat_k, dtype=np.float64)
    decay = np.exp(-dt * ksq)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = khat_k * -np.expm1(-2.0 * dt * ksq) / (2.0 * ksq)
    var = np.where(ksq > 0.0, var, khat_k * dt)
    z = rng.standard_normal(ksq.shape + (2,))
    zc = np.where(ksq > 0.0, (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0), z[..., 0])
    return decay * x + np.sqrt(var) * zc


# ---------------------------------------------------------------------------
# path sampling


@dataclass
class NoisePath:
    """Mode coefficients X_k at a strictly increasing time grid.

    Reality holds by construction: X_{-k} = conj(X_k) at every time, and
    the k = 0 coefficient is real.  Coefficients are zero at times <= 0;
    past t = 1 no new randomness enters (pure exponential decay).
    """

    spec: CovarianceSpec
    modes: ModeSet
    times: np.ndarray
    coeffs: np.ndarray  # (n_t, n_modes) complex
    seed: int
    realization: int = 0

    @property
    def dt(self) -> float:
        steps = np.diff(self.times)
        if steps.size and not np.allclose(steps, steps[0], rtol=1e-12, atol=1e-15):
            raise ValueError("time grid is not uniform")
        return float(steps[0]) if steps.size else 0.0


def _rep_indices(modes: ModeSet) -> np.ndarray:
    return np.nonzero(modes.rep_mask)[0]


def _draw_rep_normals(modes: ModeSet, n_steps: int, seed: int, realization: int):
    """One (n_steps, 2) block of normals per representative mode.

    Row i of a block drives the transition into times[i].  The per-mode
    stream index is the mode's position in the full lexicographic order,
    so the assignment is stable under any kmax.
    """
    reps = _rep_indices(modes)
    out = np.empty((reps.size, n_steps, 2), dtype=np.float64)
    for j, mode_index in enumerate(reps):
        gen = mode_stream(seed, realization, int(mode_index))
        out[j] = gen.standard_normal((n_steps, 2))
    return reps, out


def sample_mode_states(
    spec: CovarianceSpec,
    times,
    seed: int,
    realization: int = 0,
    modes: ModeSet | None = None,
) -> NoisePath:
    """Exact joint sample of all modes at a strictly increasing time grid.

    Times may be non-uniform, non-positive (zero state), or beyond 1
    (deterministic decay); each transition uses the exact window-clamped
    moments.  Deterministic given (spec, times, seed, realization).
    """
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-d array")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if modes is None:
        modes = make_mode_set(spec.d, spec.kmax)
    reps, normals = _draw_rep_normals(modes, times.size, seed, realization)
    ksq = modes.ksq[reps]
    kh = spec.khat(modes.k[reps])
    n_t = times.size

    states = np.empty((n_t, reps.size), dtype=np.complex128)
    uniform = n_t > 1 and np.allclose(np.diff(times), times[1] - times[0], rtol=1e-12, atol=1e-15)
    interior = times[0] >= 0.0 and times[-1] <= 1.0

    # first state: transition from rest at time 0 (or zero if t <= 0)
    decay0, var0 = step_moments(ksq, kh, 0.0, max(times[0], 0.0))
    states[0] = np.sqrt(var0) * _to_complex(normals[:, 0, :], ksq)

    if uniform and interior and n_t > 1:
        # constant-coefficient recursion, one lfilter per mode
        dt = times[1] - times[0]
        decay, var = step_moments(ksq, kh, 0.0, dt)
        sig = np.sqrt(var)
        noise = sig[:, None] * _to_complex_block(normals[:, 1:, :], ksq)
        for j in range(reps.size):
            zi = np.array([decay[j] * states[0, j]])
            states[1:, j], _ = lfilter([1.0], [1.0, -decay[j]], noise[j], zi=zi)
    else:
        cur = states[0].copy()
        for i in range(1, n_t):
            decay, var = step_moments(ksq, kh, times[i - 1], times[i])
            cur = decay * cur + np.sqrt(var) * _to_complex(normals[:, i, :], ksq)
            states[i] = cur

    coeffs = np.empty((n_t, len(modes)), dtype=np.complex128)
    coeffs[:, reps] = states
    others = np.nonzero(~modes.rep_mask)[0]
    coeffs[:, others] = np.conj(states[:, _rep_position(modes, reps)[modes.neg_index[others]]])
    if not np.all(np.isfinite(coeffs.view(np.float64))):
        raise FloatingPointError("non-finite mode coefficient")
    return NoisePath(spec, modes, times, coeffs, seed, realization)


def _rep_position(modes: ModeSet, reps: np.ndarray) -> np.ndarray:
    pos = np.full(len(modes), -1, dtype=np.int64)
    pos[reps] = np.arange(reps.size)
    return pos


def _to_complex(z2, ksq):
    # zero mode stays real; its second normal is deliberately unused
    return np.where(ksq > 0.0, (z2[:, 0] + 1j * z2[:, 1]) / np.sqrt(2.0), z2[:, 0])


def _to_complex_block(z3, ksq):
    zc = (z3[..., 0] + 1j * z3[..., 1]) / np.sqrt(2.0)
    zero = ksq == 0.0
    if np.any(zero):
        zc[zero] = z3[zero][..., 0]
    return zc


def sample_noise_path(spec: CovarianceSpec, time_grid, seed: int, realization: int = 0) -> NoisePath:
    """Sample the noise modes on a uniform time grid (the NoisePath contract)."""
    time_grid = np.asarray(time_grid, dtype=np.float64)
    steps = np.diff(time_grid)
    if steps.size and not np.allclose(steps, steps[0], rtol=1e-12, atol=1e-15):
        raise ValueError("sample_noise_path needs a uniform grid; see sample_mode_states")
    return sample_mode_states(spec, time_grid, seed, realization)


def sample_mode_states_strided(
    spec: CovarianceSpec,
    dt: float,
    n_steps: int,
    stride: int,
    seed: int,
    realization: int = 0,
    modes: ModeSet | None = None,
    chunk: int = 8192,
) -> NoisePath:
    """Sample on the master grid of step dt but keep every stride-th state.

    Returns the same realization as sample_mode_states on the full grid
    arange(n_steps+1)*dt restricted to the retained rows, bitwise, while
    holding only those rows in memory.  This is the device for refinement
    studies: solvers at different resolutions consume different strides
    of one master realization, so their driving paths are consistent.
    The master grid must stay inside the noise window [0, 1].
    """
    if dt <= 0 or n_steps < 1:
        raise ValueError("need dt > 0 and n_steps >= 1")
    if stride < 1 or n_steps % stride:
        raise ValueError(f"stride {stride} must divide n_steps {n_steps}")
    if n_steps * dt > 1.0 + 1e-12:
        raise ValueError("master grid leaves the noise window [0, 1]")
    if modes is None:
        modes = make_mode_set(spec.d, spec.kmax)
    reps = _rep_indices(modes)
    ksq = modes.ksq[reps]
    kh = spec.khat(modes.k[reps])
    decay, var = step_moments(ksq, kh, 0.0, dt)
    sig = np.sqrt(var)
    n_keep = n_steps // stride + 1
    states = np.zeros((n_keep, reps.size), dtype=np.complex128)
    root = np.sqrt(2.0)
    for j, mode_index in enumerate(reps):
        gen = mode_stream(seed, realization, int(mode_index))
        gen.standard_normal(2)  # the (zero-variance) initial-state draw
        zi = np.zeros(1, dtype=np.complex128)
        pos = 1
        done = 0
        while done < n_steps:
            c = min(chunk, n_steps - done)
            z = gen.standard_normal((c, 2))
            zc = (z[:, 0] + 1j * z[:, 1]) / root if ksq[j] > 0 else z[:, 0] + 0j
            y, zi = lfilter([1.0], [1.0, -decay[j]], sig[j] * zc, zi=zi)
            # master indices covered by this chunk: done+1 .. done+c
            first = (done // stride + 1) * stride
            sel = np.arange(first, done + c + 1, stride) - (done + 1)
            if sel.size:
                states[pos : pos + sel.size, j] = y[sel]
                pos += sel.size
            done += c
    coeffs = np.empty((n_keep, len(modes)), dtype=np.complex128)
    coeffs[:, reps] = states
    others = np.nonzero(~modes.rep_mask)[0]
    coeffs[:, others] = np.conj(states[:, _rep_position(modes, reps)[modes.neg_index[others]]])
    if not np.all(np.isfinite(coeffs.view(np.float64))):
        raise FloatingPointError("non-finite mode coefficient")
    times = np.arange(n_keep, dtype=np.float64) * (stride * dt)
    return NoisePath(spec, modes, times, coeffs, seed, realization)


# ---------------------------------------------------------------------------
# field evaluation and the closed-form covariance


def _spectral_slabs(modes: ModeSet, coeffs: np.ndarray, n_x: int, weight=None) -> np.ndarray:
    """Inverse-FFT evaluation of sum_k w_k X_k(t) e^{ikx} on the n_x grid."""
    if n_x < 2 * modes.kmax + 2:
        raise ValueError(f"n_x={n_x} aliases modes; need n_x >= {2 * modes.kmax + 2}")
    d = modes.d
    n_t = coeffs.shape[0]
    idx = np.ravel_multi_index(tuple((modes.m % n_x).T), (n_x,) * d)
    buf = np.zeros((n_t, n_x**d), dtype=np.complex128)
    buf[:, idx] = coeffs * weight if weight is not None else coeffs
    buf = buf.reshape((n_t,) + (n_x,) * d)
    out = np.fft.ifftn(buf, axes=tuple(range(1, d + 1))) * float(n_x**d)
    residue = float(np.max(np.abs(out.imag))) if out.size else 0.0
    if residue > 1e-10:
        raise FloatingPointError(f"imaginary residue {residue:.3e} exceeds 1e-10")
    return out.real


def evaluate_field(path: NoisePath, n_x: int, mode="value") -> Field:
    """Evaluate a NoisePath as a real Field on the uniform n_x grid.

    mode is "value" for the scalar field or ("gradient", j) for the j-th
    gradient component (weights i*k_j).  Requires a uniform time grid and
    n_x >= 2*kmax + 2 so retained modes occupy distinct FFT bins.
    """
    if mode == "value":
        weight = None
    elif isinstance(mode, tuple) and len(mode) == 2 and mode[0] == "gradient":
        axis = int(mode[1])
        if not 0 <= axis < path.modes.d:
            raise ValueError(f"gradient axis {axis} out of range for d={path.modes.d}")
        weight = 1j * path.modes.k[:, axis]
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")
    dt = path.dt  # raises on non-uniform grids
    values = _spectral_slabs(path.modes, path.coeffs, n_x, weight)
    return Field(values, dt=dt, t_start=float(path.times[0]))


def covariance_closed_form(spec: CovarianceSpec, j: int, t: float, t_prime: float, r) -> float:
    """Truncated closed-form covariance of the gradient component h = d_j v.

    <h(t,x) h(t',x')> = sum_k khat(k) * k_j^2/(2|k|^2) * cos(k.(x-x'))
                        * [exp(-|t-t'| |k|^2) - exp(-(t+t') |k|^2)],
    with the k = 0 term defined as 0.  Valid for t, t' in [0, 1].
    """
    if not (0.0 <= t <= 1.0 and 0.0 <= t_prime <= 1.0):
        raise ValueError(f"times must lie in [0, 1], got {t}, {t_prime}")
    if not 0 <= j < spec.d:
        raise ValueError(f"axis {j} out of range for d={spec.d}")
    if t < t_prime:
        t, t_prime = t_prime, t
    modes = make_mode_set(spec.d, spec.kmax)
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if r.size != spec.d:
        raise ValueError(f"offset needs {spec.d} components, got {r.size}")
    nz = modes.ksq > 0.0
    k = modes.k[nz]
    ksq = modes.ksq[nz]
    kh = spec.khat(k)
    bracket = np.exp(-(t - t_prime) * ksq) - np.exp(-(t + t_prime) * ksq)
    terms = kh * (k[:, j] ** 2 / (2.0 * ksq)) * np.cos(k @ r) * bracket
    return float(np.sum(terms))
