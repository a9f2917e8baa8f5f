"""Spectrum enumeration and regularized-trace probes.

The spectrum of P = sqrt(I + Delta_H + c.D_H) on a flat model is exactly
lambda_m = sqrt(1 + |2 pi m_perp|^2_{g*} + 2 pi c.m) over m in Z^n, with
eigenfunction exp(2 pi i m.x).  The kernel-weighted trace against a probe
f(t) = exp(-(t-t0)^2 / 2 eps^2) exp(-i s t) is the deterministic lattice
sum  sum_m  w(m) F(lambda_m),  F(lambda) = sqrt(2 pi) eps
exp(i (lambda - s) t0) exp(-eps^2 (lambda - s)^2 / 2).

Sums are evaluated in a fixed order with compensated combination of
deterministic chunk sums, so repeated runs are bit-identical.  Lattice
sums may be partitioned, but partial sums must be combined in this fixed
chunk order to preserve that guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SpectralBudgetError, SpectralResolutionError

_CHUNK = 65536
_MEMORY_BUDGET = 3_000_000
_LEAF_REL_TOL = 1e-9


@dataclass(frozen=True)
class SpectralLine:
    """One eigenvalue of P with its lattice index and frequency split."""

    m: np.ndarray
    lam: float
    leaf_freq: np.ndarray
    trans_freq: np.ndarray


class SpectrumTable:
    """Array-backed sequence of SpectralLine, lexicographic in m."""

    def __init__(
        self,
        model,
        m,
        lam,
        leaf,
        beta,
        cutoff,
        leaf_cutoff,
        leaf_rel=_LEAF_REL_TOL,
        leaf_multiplicity=1.0,
    ):
        self.model = model
        self.m = m
        self.lam = lam
        self.leaf = leaf          # (N, p) leaf frequencies 2 pi U^T m
        self.beta = beta          # (N, q) transverse frame coords 2 pi E^T m
        self.cutoff = float(cutoff)
        self.leaf_cutoff = float(leaf_cutoff)
        self.leaf_rel = float(leaf_rel)
        self.leaf_multiplicity = max(float(leaf_multiplicity), 1.0)
        self._weights = {}
        self._shell_cal = None

    def __len__(self):
        return int(self.m.shape[0])

    def __getitem__(self, i):
        return SpectralLine(
            m=self.m[i].copy(),
            lam=float(self.lam[i]),
            leaf_freq=self.leaf[i].copy(),
            trans_freq=self.model.cov_from_frame(self.beta[i]),
        )

    def weights(self, kernel):
        """Diagonal matrix elements <R(k) e_m, e_m> for every line (cached)."""
        key = id(kernel)
        if key not in self._weights:
            theta = np.sqrt(np.einsum("ij,ij->i", self.leaf, self.leaf))
            total = np.zeros(len(self), dtype=float)
            for term in kernel.terms:
                c0 = term.phi.coeff0()
                if term.scale == 0.0 or c0 == 0.0:
                    continue
                total += term.scale * c0 * np.atleast_1d(term.profile.fourier(theta))
            self._weights[key] = total
        return self._weights[key]

    def shell_calibration(self, kernel):
        """Max per-unit-lambda absolute weight, normalized by (1+lam)^(q-1).

        Used to extrapolate the absolute weight mass beyond the cutoff for
        truncation bounds; the doubling test validates it empirically.
        """
        w = np.abs(self.weights(kernel))
        edges = np.arange(1.0, self.cutoff + 2.0)
        idx = np.clip(np.searchsorted(edges, self.lam) - 1, 0, len(edges) - 2)
        sums = np.bincount(idx, weights=w, minlength=len(edges) - 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        dens = sums / (1.0 + centers) ** (self.model.q - 1)
        return 2.0 * float(dens.max(initial=0.0))


def spectral_weight(model, kernel, m):
    """Weight of one lattice mode: phi_hat(0) * psi_hat(leaf frequency)."""
    m = np.asarray(m, dtype=float)
    theta = float(np.linalg.norm(2.0 * np.pi * (model.leaf_frame.T @ m)))
    total = 0.0
    for term in kernel.terms:
        total += term.scale * term.phi.coeff0() * float(term.profile.fourier(theta))
    return complex(total)


def lattice_eigenvalue(model, m):
    """lambda_m directly from the symbol data."""
    m = np.asarray(m, dtype=float)
    beta = 2.0 * np.pi * (model.trans_frame.T @ m)
    return float(np.sqrt(1.0 + beta @ beta + 2.0 * np.pi * (model.drift @ m)))


def enumerate_spectrum(
    model,
    cutoff,
    kernel=None,
    leaf_cutoff=None,
    memory_budget=_MEMORY_BUDGET,
    leaf_rel_tol=_LEAF_REL_TOL,
) -> SpectrumTable:
    """All lattice modes with lambda <= cutoff and bounded leaf frequency.

    The eigenvalue ignores leafwise frequencies, so the raw level set
    {lambda <= cutoff} is an infinite strip; the enumeration therefore
    restricts to |leaf frequency| <= leaf_cutoff, taken from the kernel
    profile's certified transform decay when not given explicitly.
    Deterministic lexicographic order in m; raises SpectralBudgetError
    with the projected count when the strip would exceed the budget.
    """
    if cutoff <= 1.0:
        raise ValueError("cutoff must exceed the bottom eigenvalue 1")
    if leaf_cutoff is None:
        if kernel is None:
            raise ValueError("need a kernel or an explicit leaf_cutoff")
        leaf_cutoff = max(
            t.profile.fourier_cutoff(leaf_rel_tol) for t in kernel.terms
        )
    leaf_cutoff = float(leaf_cutoff)
    if kernel is not None:
        leaf_rel = max(t.profile.envelope_beyond(leaf_cutoff) for t in kernel.terms)
    else:
        leaf_rel = leaf_rel_tol

    c_norm = model.g_norm(model.drift)
    r_trans = (c_norm + math.sqrt(c_norm**2 + 4.0 * (cutoff**2 - 1.0))) / (4.0 * math.pi)
    r_leaf = leaf_cutoff / (2.0 * math.pi)

    # projected count from the strip volume
    def ball_vol(d, r):
        return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * r**d

    projected = int(
        ball_vol(model.p, r_leaf + 1) * ball_vol(model.q, r_trans + 1) * model.sqrt_det_g
    )
    if projected > memory_budget:
        raise SpectralBudgetError(projected, memory_budget)

    frame = np.hstack([model.leaf_frame, model.trans_frame])
    inv_t = np.abs(np.linalg.inv(frame.T))
    zmax = np.concatenate(
        [np.full(model.p, r_leaf), np.full(model.q, r_trans)]
    )
    box = np.ceil(inv_t @ zmax + 1e-9).astype(int)

    # the axis most aligned with some leaf-frame row gets the inner window
    u_abs = np.abs(model.leaf_frame)
    k_star = int(np.argmax(u_abs.max(axis=1)))
    i_row = int(np.argmax(u_abs[k_star]))
    u = model.leaf_frame[:, i_row]
    outer_axes = [k for k in range(model.n) if k != k_star]

    ranges = [np.arange(-box[k], box[k] + 1) for k in outer_axes]
    if ranges:
        outer = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(
            -1, len(outer_axes)
        )
    else:
        outer = np.zeros((1, 0), dtype=int)

    rest = outer @ u[outer_axes]
    half = (r_leaf + 1e-9) / abs(u[k_star])
    center = -rest / u[k_star]
    lo = np.ceil(center - half).astype(int)
    hi = np.floor(center + half).astype(int)
    counts = np.maximum(hi - lo + 1, 0)
    total = int(counts.sum())
    if total > 4 * memory_budget:
        raise SpectralBudgetError(total, memory_budget)

    rep = np.repeat(np.arange(outer.shape[0]), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    within = np.arange(total) - np.repeat(starts, counts)
    mk = np.repeat(lo, counts) + within

    m = np.empty((total, model.n), dtype=np.int64)
    m[:, outer_axes] = outer[rep]
    m[:, k_star] = mk

    mf = m.astype(float)
    leaf = 2.0 * np.pi * (mf @ model.leaf_frame)
    beta = 2.0 * np.pi * (mf @ model.trans_frame)
    lam = np.sqrt(
        1.0
        + np.einsum("ij,ij->i", beta, beta)
        + 2.0 * np.pi * (mf @ model.drift)
    )
    keep = (lam <= cutoff) & (
        np.einsum("ij,ij->i", leaf, leaf) <= leaf_cutoff**2 + 1e-12
    )
    m, leaf, beta, lam = m[keep], leaf[keep], beta[keep], lam[keep]

    order = np.lexsort(tuple(m[:, k] for k in range(model.n - 1, -1, -1)))
    hit_sites = int(np.sum(counts > 0))
    return SpectrumTable(
        model, m[order], lam[order], leaf[order], beta[order], cutoff, leaf_cutoff,
        leaf_rel=leaf_rel,
        leaf_multiplicity=m.shape[0] / max(hit_sites, 1),
    )


@dataclass(frozen=True)
class GaussianProbe:
    """Test function exp(-(t-t0)^2/(2 eps^2)) exp(-i s t)."""

    t0: float
    eps: float
    s: float

    def transform(self, lam):
        """F(lambda) = integral of f(t) exp(i t lambda) dt, in closed form."""
        d = np.asarray(lam, dtype=float) - self.s
        return (
            math.sqrt(2.0 * math.pi)
            * self.eps
            * np.exp(1j * d * self.t0 - 0.5 * (self.eps * d) ** 2)
        )


@dataclass(frozen=True)
class TraceSample:
    """One evaluation of the smoothed trace with its truncation bound."""

    value: complex
    tail_bound: float
    mass: float


def _kahan_chunks(values):
    """Deterministic compensated combination of fixed-size chunk sums."""
    total = 0.0 + 0.0j
    comp = 0.0 + 0.0j
    for start in range(0, values.size, _CHUNK):
        part = complex(values[start : start + _CHUNK].sum())
        y = part - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def _tail_bound(table, kernel, probe):
    """Gaussian tail of the lattice sum beyond the cutoffs.

    Two contributions: shell weights beyond the eigenvalue cutoff,
    extrapolated from the calibrated in-range shells, and the leafwise
    ladder beyond the leaf cutoff, bounded per transverse site by the
    transform envelope at the cutoff times a fixed effective site count
    (the envelope decays superpolynomially, so 20 sites dominate the
    dropped ladder).  Both bounds are validated empirically by the
    cutoff-doubling tests.
    """
    cal = table.shell_calibration(kernel)
    lam0 = table.cutoff
    q = table.model.q
    tail = 0.0
    for j in range(2000):
        lam = lam0 + j + 0.5
        term = (
            cal
            * (1.0 + lam) ** (q - 1)
            * math.sqrt(2.0 * math.pi)
            * probe.eps
            * math.exp(-0.5 * (probe.eps * (lam - probe.s)) ** 2)
        )
        tail += term
        if lam > probe.s and term < 1e-18 * (tail + 1.0):
            break
    window = float(np.sum(np.exp(-0.5 * (probe.eps * (table.lam - probe.s)) ** 2)))
    scale = max(abs(t.scale * t.phi.coeff0()) for t in kernel.terms)
    leaf_drop = (
        20.0
        * table.leaf_rel
        * scale
        * math.sqrt(2.0 * math.pi)
        * probe.eps
        * window
        / table.leaf_multiplicity
    )
    return tail + leaf_drop


def smoothed_trace(model, kernel, probe, table=None, cutoff=None, **enum_kwargs):
    """Kernel-weighted trace of the probe: sum_m w(m) F(lambda_m).

    Deterministic fixed-order summation with compensated combination; the
    returned tail bound covers lattice modes beyond the cutoffs.  Raises
    SpectralResolutionError when the bound exceeds 1 percent of the
    absolute mass of the partial sum, which signals a cutoff too small
    for the requested (s, eps).
    """
    if table is None:
        if cutoff is None:
            raise ValueError("need a table or a cutoff")
        table = enumerate_spectrum(model, cutoff, kernel=kernel, **enum_kwargs)
    w = table.weights(kernel)
    f = probe.transform(table.lam)
    terms = w * f
    value = _kahan_chunks(terms)
    mass = float(np.sum(np.abs(terms)))
    tail = _tail_bound(table, kernel, probe)
    if mass > 0.0 and tail > 0.01 * mass:
        raise SpectralResolutionError(
            f"tail bound {tail:.3e} exceeds 1% of the sum mass {mass:.3e}; "
            f"increase the cutoff for s={probe.s}, eps={probe.eps}"
        )
    return TraceSample(value=complex(value), tail_bound=tail, mass=mass)


@dataclass(frozen=True)
class ScanPeak:
    t: float
    amp: float


@dataclass(frozen=True)
class ScanResult:
    times: np.ndarray
    amps: np.ndarray
    peaks: tuple
    floor: float
    median: float
    s: float
    eps: float
    tail_bound: float = 0.0


def singularity_scan(
    model,
    kernel,
    t_range,
    eps,
    s,
    table=None,
    cutoff=None,
    step=None,
    floor_factor=10.0,
    floor_abs=0.0,
    tail_mult=30.0,
):
    """Locate trace singularities: local maxima of |trace| on a t-grid.

    The grid step must not exceed eps/4.  Maxima count only above the
    noise floor max(floor_factor * median, tail_mult * tail bound,
    floor_abs): the median term rejects grid ripple, the tail term
    rejects structure below the certified truncation error.  Peak
    locations are refined by a parabolic fit of log|amp|, exact for the
    Gaussian profile the probe induces around an isolated singularity.
    """
    lo, hi = float(t_range[0]), float(t_range[1])
    if step is None:
        step = eps / 4.0
    if step > eps / 4.0 + 1e-12 * eps:
        raise SpectralResolutionError(
            f"grid step {step} too coarse for eps={eps}; need step <= eps/4"
        )
    if table is None:
        if cutoff is None:
            raise ValueError("need a table or a cutoff")
        table = enumerate_spectrum(model, cutoff, kernel=kernel)
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    times = lo + step * np.arange(count)
    if kernel.is_null():
        amps = np.zeros(count)
        return ScanResult(times, amps, (), 0.0, 0.0, s, eps)

    w = table.weights(kernel)
    lam = table.lam
    amps = np.empty(count)
    pref = math.sqrt(2.0 * math.pi) * eps
    gauss = pref * np.exp(-0.5 * (eps * (lam - s)) ** 2)
    wg = w * gauss
    for i, t in enumerate(times):
        amps[i] = abs(_kahan_chunks(wg * np.exp(1j * (lam - s) * t)))

    tail = _tail_bound(table, kernel, GaussianProbe(0.5 * (lo + hi), eps, s))
    median = float(np.median(amps))
    floor = max(floor_factor * median, tail_mult * tail, floor_abs)
    peaks = []
    for i in range(1, count - 1):
        if amps[i] >= amps[i - 1] and amps[i] > amps[i + 1] and amps[i] > floor:
            logs = np.log(np.maximum(amps[i - 1 : i + 2], 1e-300))
            denom = logs[0] - 2.0 * logs[1] + logs[2]
            delta = 0.0 if denom >= 0 else 0.5 * (logs[0] - logs[2]) / denom
            delta = float(np.clip(delta, -0.5, 0.5))
            peaks.append(ScanPeak(t=float(times[i] + delta * step), amp=float(amps[i])))
    return ScanResult(times, amps, tuple(peaks), floor, median, s, eps, tail)


@dataclass(frozen=True)
class TraceProbeResult:
    """Amplitude ladder at one candidate time with fitted growth law.

    ``calibrated`` holds A(s) = exp(i s t0) theta_k(f) / (2 pi); for a
    singular time its modulus follows |alpha0| (s / 2 pi)^beta and its
    phase the constant arg(i^(-sigma) alpha0) - beta pi / 2.
    """

    t0: float
    s_ladder: np.ndarray
    amplitudes: np.ndarray
    calibrated: np.ndarray
    tail_bounds: np.ndarray
    fitted_exponent: float
    fitted_phase: float
    fitted_alpha0: complex
    fit_residual: float
    flags: tuple


def amplitude_probe(
    model,
    kernel,
    t0,
    s_ladder,
    eps,
    table=None,
    cutoff=None,
    noise_threshold=0.1,
):
    """Probe the trace at t0 over an increasing frequency ladder and fit.

    Weighted least squares (weights proportional to s) on the top half of
    the ladder estimates the growth exponent; the complex constant is the
    weighted mean of A(s) (s/(2 pi i))^(-exponent).  A residual above the
    noise threshold flags the ladder instead of being silently accepted.
    """
    s_ladder = np.asarray(s_ladder, dtype=float)
    if s_ladder.ndim != 1 or s_ladder.size < 4:
        raise ValueError("need an s ladder with at least 4 points")
    if np.any(np.diff(s_ladder) <= 0):
        raise ValueError("s ladder must be strictly increasing")
    if table is None:
        if cutoff is None:
            raise ValueError("need a table or a cutoff")
        table = enumerate_spectrum(model, cutoff, kernel=kernel)

    raw = np.empty(s_ladder.size, dtype=complex)
    tails = np.empty(s_ladder.size)
    for i, s in enumerate(s_ladder):
        sample = smoothed_trace(model, kernel, GaussianProbe(t0, eps, s), table=table)
        raw[i] = sample.value
        tails[i] = sample.tail_bound
    calibrated = raw * np.exp(1j * s_ladder * t0) / (2.0 * np.pi)

    top = slice(s_ladder.size // 2, None)
    s_top = s_ladder[top]
    a_top = calibrated[top]
    flags = []
    mags = np.abs(a_top)
    if np.any(mags <= 0.0) or np.any(mags < 1e3 * np.finfo(float).eps * tails[top]):
        flags.append("weak_signal")
        mags = np.maximum(mags, 1e-300)
    wts = np.sqrt(s_top)
    slope, intercept = np.polyfit(np.log(s_top), np.log(mags), 1, w=wts)
    resid = float(np.max(np.abs(np.log(mags) - (slope * np.log(s_top) + intercept))))
    if resid > noise_threshold:
        flags.append("noisy_ladder")

    unit = (s_top / (2.0 * np.pi * 1j)) ** (-slope)
    alpha0 = complex(np.sum(s_top * a_top * unit) / np.sum(s_top))
    return TraceProbeResult(
        t0=float(t0),
        s_ladder=s_ladder,
        amplitudes=raw,
        calibrated=calibrated,
        tail_bounds=tails,
        fitted_exponent=float(slope),
        fitted_phase=float(np.angle(alpha0)),
        fitted_alpha0=alpha0,
        fit_residual=resid,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class DecayResult:
    t0: float
    s_values: np.ndarray
    amps: np.ndarray
    floors: np.ndarray
    slope: float
    measurable: int


def off_period_decay(model, kernel, t0, s_values, base_eps, table=None, cutoff=None):
    """Smoothness probe away from the singular support.

    The window shrinks with the frequency, eps(s) = base_eps sqrt(s_min/s),
    so that for t0 at positive distance d from every singular time the
    nearest-singularity leakage exp(-d^2 / (2 eps(s)^2)) decays like
    exp(-const * s); with a fixed window it would be an s-independent
    floor instead.  Amplitudes are clipped at the certified noise floor
    (truncation bound plus rounding) before the log-log slope fit.
    """
    s_values = np.asarray(s_values, dtype=float)
    if table is None:
        if cutoff is None:
            raise ValueError("need a table or a cutoff")
        table = enumerate_spectrum(model, cutoff, kernel=kernel)
    s_min = float(s_values.min())
    amps = np.empty(s_values.size)
    floors = np.empty(s_values.size)
    for i, s in enumerate(s_values):
        eps_s = base_eps * math.sqrt(s_min / float(s))
        sample = smoothed_trace(model, kernel, GaussianProbe(t0, eps_s, s), table=table)
        amps[i] = abs(sample.value)
        floors[i] = 200.0 * np.finfo(float).eps * sample.mass + sample.tail_bound
    clipped = np.maximum(amps, floors)
    slope = float(np.polyfit(np.log(s_values), np.log(clipped), 1)[0])
    return DecayResult(
        t0=float(t0),
        s_values=s_values,
        amps=amps,
        floors=floors,
        slope=slope,
        measurable=int(np.sum(amps > floors)),
    )
