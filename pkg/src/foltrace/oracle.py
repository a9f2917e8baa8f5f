"""Independent validation oracles.

Each function here re-derives a quantity the main pipeline computes, by a
deliberately different route: grid search instead of lattice enumeration,
plain compensated Python loops instead of vectorized sums, and the closed
classical summation formula for codimension-one models instead of the
density construction.  Tests and the `oracle` CLI subcommand compare the
two routes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .spectral import SpectrumTable


@dataclass(frozen=True)
class OraclePeriod:
    t: float
    v: tuple
    shift_norm: float


def brute_force_periods(
    model,
    support,
    t_max,
    t_step=1e-3,
    w_step=1e-3,
    defect_tol=5e-3,
):
    """Grid search for relative periods in a codimension-one model.

    Scans (t, w) over [t_step, t_max] x (-support, support), measuring the
    distance of t * grad p + w from the lattice for both transverse
    orientations; coarse hits are snapped by solving the 2x2 linear
    system for the rounded lattice vector.  Independent of the lattice
    enumeration used by the main pipeline.
    """
    if model.q != 1:
        raise ValueError("grid oracle implemented for codimension one")
    grad = model.metric_inv @ model.cov_from_frame(np.ones(1))
    grad = grad / model.g_norm(grad)
    leaf_dir = model.leaf_frame[:, 0]

    ts = np.arange(t_step, t_max + t_step / 2.0, t_step)
    ws = np.arange(-support + w_step, support, w_step)
    tt, ww = np.meshgrid(ts, ws, indexing="ij")
    found = {}
    for sign in (1.0, -1.0):
        z = (
            tt[..., None] * (sign * grad)[None, None, :]
            + ww[..., None] * leaf_dir[None, None, :]
        )
        defect = np.linalg.norm(z - np.round(z), axis=-1)
        hits = np.nonzero(defect < defect_tol)
        for i, j in zip(*hits):
            v = np.round(
                ts[i] * sign * grad + ws[j] * leaf_dir
            ).astype(int)
            if not np.any(v):
                continue
            # snap: solve [grad | leaf_dir] [t; w] = v exactly
            basis = np.column_stack([sign * grad, leaf_dir])
            sol, *_ = np.linalg.lstsq(basis, v.astype(float), rcond=None)
            t_exact, w_exact = float(sol[0]), float(sol[1])
            if t_exact <= t_step / 2.0 or t_exact > t_max + 1e-9:
                continue
            if abs(w_exact) >= support:
                continue
            key = tuple(int(k) for k in (v if _canonical(v) else -v))
            found[key] = OraclePeriod(
                t=t_exact, v=key, shift_norm=abs(w_exact)
            )
    return sorted(found.values(), key=lambda r: (r.t, r.v))


def _canonical(v):
    for k in v:
        if k != 0:
            return k > 0
    return False


def brute_force_trace(model, kernel, t0, eps, s, table: SpectrumTable):
    """Two-line reimplementation of the smoothed trace.

    Plain Python loop in lexicographic order over the table's lattice
    modes, recomputing each eigenvalue from scratch and accumulating real
    and imaginary parts with math.fsum.  Shares only the mode weights of
    the table (the transform grid is validated separately against
    adaptive quadrature).
    """
    weights = table.weights(kernel)
    re_parts, im_parts = [], []
    pref = math.sqrt(2.0 * math.pi) * eps
    ginv = model.metric_inv
    for idx in range(len(table)):
        m = table.m[idx].astype(float)
        mh = model.proj_h.T @ m
        lam = math.sqrt(
            1.0
            + 4.0 * math.pi**2 * float(mh @ ginv @ mh)
            + 2.0 * math.pi * float(model.drift @ m)
        )
        d = lam - s
        mag = weights[idx] * pref * math.exp(-0.5 * (eps * d) ** 2)
        re_parts.append(mag * math.cos(d * t0))
        im_parts.append(mag * math.sin(d * t0))
    return complex(math.fsum(re_parts), math.fsum(im_parts))


def poisson_amplitude(model, kernel, t, drift_scale=True):
    """Closed-form leading amplitude at period t for codimension one.

    Classical lattice summation: fold the leafwise sum with the unit
    Poisson identity and read the transverse circle coefficient 1/pi per
    {v, -v} pair, weighted by psi at the leafwise offset of v and by the
    drift cosine.  Self-contained (own lattice loop); ground truth for
    the density construction.
    """
    if model.q != 1:
        raise ValueError("closed form implemented for codimension one")
    support = max(term.support for term in kernel.terms)
    lam_min = float(np.linalg.eigvalsh(model.metric).min())
    bound = int(math.floor(math.sqrt(t**2 + support**2) / math.sqrt(lam_min) + 1e-9))
    total = 0.0
    for v in itertools.product(range(-bound, bound + 1), repeat=model.n):
        if not _canonical(np.asarray(v)):
            continue
        varr = np.asarray(v, dtype=float)
        vh = model.proj_h @ varr
        t_v = model.g_norm(vh)
        if abs(t_v - t) > 1e-9:
            continue
        w_norm = model.g_norm(model.proj_v @ varr)
        if w_norm >= support:
            continue
        cos_factor = 1.0
        if drift_scale:
            xi_hat = (model.metric @ vh) / t_v
            cos_factor = math.cos(0.5 * t_v * float(model.drift @ xi_hat))
        for term in kernel.terms:
            total += (
                term.scale
                * term.phi.coeff0()
                * model.sqrt_det_g
                * float(term.profile.value(w_norm))
                * cos_factor
                / math.pi
            )
    return total


def collocation_eigenvalues(model, grid_side, lam_max):
    """Eigenvalues of A assembled by spectral collocation on a real grid.

    Builds the operator matrix from FFT differentiation on an N^n grid
    and diagonalizes it densely; independent of the symbol formula used
    by the enumeration.  Returns sorted sqrt-eigenvalues up to lam_max.
    """
    n = model.n
    side = int(grid_side)
    freqs = np.fft.fftfreq(side, d=1.0 / side)
    axes = [freqs] * n
    kgrid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    size = kgrid.shape[0]

    # derivative of exp(2 pi i m.x) along vector u is 2 pi i (m.u)
    sym = np.ones(size)
    for j in range(model.q):
        e = model.trans_frame[:, j]
        sym = sym + 4.0 * math.pi**2 * (kgrid @ e) ** 2
    sym = sym + 2.0 * math.pi * (kgrid @ model.drift)

    # assemble in physical space: F^-1 diag(sym) F, then diagonalize
    f_mat = np.exp(
        2j
        * math.pi
        * (kgrid @ np.stack(
            np.meshgrid(*[np.arange(side) / side] * n, indexing="ij"), axis=-1
        ).reshape(-1, n).T)
    )
    op = (f_mat.conj().T @ (sym[:, None] * f_mat)) / size
    eig = np.linalg.eigvalsh(op)
    eig = np.sqrt(np.clip(eig, 0.0, None))
    return np.sort(eig[eig <= lam_max])


def probe_transform_oracle(t0, eps, s, lam):
    """Adaptive-quadrature evaluation of the probe transform at lam."""
    from scipy.integrate import quad

    def integrand_re(t):
        return math.exp(-0.5 * ((t - t0) / eps) ** 2) * math.cos((lam - s) * t)

    def integrand_im(t):
        return math.exp(-0.5 * ((t - t0) / eps) ** 2) * math.sin((lam - s) * t)

    lo, hi = t0 - 12 * eps, t0 + 12 * eps
    re, _ = quad(integrand_re, lo, hi, epsabs=1e-14, limit=400)
    im, _ = quad(integrand_im, lo, hi, epsabs=1e-14, limit=400)
    return complex(re, im)


def psi_hat_quad(profile, theta):
    """Adaptive-quadrature transform of the bump profile (dimension 1).

    Independent check of the Gauss-Legendre grid used by the pipeline,
    with scipy's oscillatory cosine weight.
    """
    from scipy.integrate import quad

    val, _ = quad(
        lambda r: float(profile.value(r)),
        0.0,
        profile.support,
        weight="cos",
        wvar=float(abs(theta)),
        epsabs=1e-12,
        limit=200,
    )
    return 2.0 * val
