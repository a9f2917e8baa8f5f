"""Maslov data for the transverse return map.

Everything here works in transverse frame coordinates (y, eta) in R^q x
R^q, where the transverse symbol is p(eta) = |eta| for every flat model.
The index of a component is sgn R + 2 kappa, with R the three-block
Hessian matrix of the generating function of the return transformation
and kappa the signed count of crossings of the pulled-back vertical
subspace with the horizontal one.

Convention pin: the return transformation of a component with period t
is the time -t map composed with the (trivial) leafwise transport, since
that composite is what fixes the component pointwise.  Its generating
function is chi(-t); evaluating R there makes the index reproduce the
phase of the exactly summable flat traces, which is how the orientation
freedom left open by the sgn/crossing conventions is fixed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FoltraceError, MaslovConsistencyError

_SYM_TOL = 1e-8


@dataclass(frozen=True)
class GeneratingFunction:
    """Solution chi(t, y, eta) = y.eta + t |eta| of d_t chi = |d_y chi|.

    ``mode`` selects the exact closed form or a characteristics-based
    integration (Hamiltonian steps with accumulated action); both expose
    values and the analytic second-derivative blocks.
    """

    q: int
    t: float
    mode: str = "exact"
    steps: int = 2048

    def _p(self, eta):
        return float(np.linalg.norm(eta))

    def value(self, y, eta):
        y = np.asarray(y, dtype=float)
        eta = np.asarray(eta, dtype=float)
        if self._p(eta) == 0.0:
            raise FoltraceError("generating function undefined at eta = 0")
        if self.mode == "exact":
            return float(y @ eta + self.t * self._p(eta))
        return self._characteristics_value(y, eta)

    def _characteristics_value(self, y, eta):
        # integrate backwards along the characteristic through (y, eta):
        # y0 = y - t grad p(eta), chi accumulates p + eta.grad p = 2 p.
        import math as _math

        grad = eta / self._p(eta)
        y0 = y - self.t * grad
        h = self.t / self.steps
        # compensated accumulation: the t-derivative check divides by a
        # small step, so plain summation noise would dominate it
        action = _math.fsum(h * 2.0 * self._p(eta) for _ in range(self.steps))
        return float(y0 @ eta + action)

    def d_t(self, y, eta):
        return self._p(np.asarray(eta, dtype=float))

    def d_y(self, y, eta):
        return np.asarray(eta, dtype=float).copy()

    def chi_yy(self, y, eta):
        return np.zeros((self.q, self.q))

    def chi_yeta(self, y, eta):
        return np.eye(self.q)

    def chi_etaeta(self, y, eta):
        eta = np.asarray(eta, dtype=float)
        nrm = self._p(eta)
        hat = eta / nrm
        return self.t * (np.eye(self.q) - np.outer(hat, hat)) / nrm

    def cauchy_residual(self, samples=None, step=1e-4):
        """max |d_t chi - p(d_y chi)| over sample points (finite-diff d_t).

        chi is linear in t here, so the step only has to beat rounding.
        """
        if samples is None:
            rng = np.random.default_rng(7)
            samples = [
                (rng.normal(size=self.q), _unit(rng.normal(size=self.q)))
                for _ in range(12)
            ]
        worst = 0.0
        for y, eta in samples:
            hi = GeneratingFunction(self.q, self.t + step, self.mode, self.steps)
            lo = GeneratingFunction(self.q, self.t - step, self.mode, self.steps)
            dt = (hi.value(y, eta) - lo.value(y, eta)) / (2.0 * step)
            worst = max(worst, abs(dt - self._p(self.d_y(y, eta))))
        return worst


def _unit(v):
    return v / np.linalg.norm(v)


def solve_generating_function(model, t, method="exact") -> GeneratingFunction:
    """Generating function of the transverse flow at time t (frame coords)."""
    if not np.isfinite(t):
        raise ValueError("time must be finite")
    return GeneratingFunction(q=model.q, t=float(t), mode=method)


def assemble_R(gen_fn, y, eta):
    """Three-block symmetric matrix [[chi_yy, chi_yeta, -I], ...].

    Second derivatives come from the generating function analytically;
    see assemble_R_from_symbol for the finite-difference variant used as
    a cross-check.  Raises when the assembled matrix fails symmetry.
    """
    q = gen_fn.q
    if float(np.linalg.norm(np.asarray(eta, dtype=float))) == 0.0:
        raise FoltraceError("eta must be nonzero")
    blocks = np.zeros((3 * q, 3 * q))
    blocks[:q, :q] = gen_fn.chi_yy(y, eta)
    blocks[:q, q : 2 * q] = gen_fn.chi_yeta(y, eta)
    blocks[q : 2 * q, :q] = gen_fn.chi_yeta(y, eta).T
    blocks[q : 2 * q, q : 2 * q] = gen_fn.chi_etaeta(y, eta)
    blocks[:q, 2 * q :] = -np.eye(q)
    blocks[2 * q :, :q] = -np.eye(q)
    asym = float(np.max(np.abs(blocks - blocks.T)))
    if asym > _SYM_TOL:
        raise FoltraceError(f"assembled matrix asymmetric by {asym}")
    return blocks


def assemble_R_from_symbol(p_func, t, y, eta, step=1e-5):
    """Finite-difference assembly for a custom transverse symbol.

    Central differences with one Richardson refinement; supports the
    chart-independence checks where the symbol is given in transformed
    coordinates.  chi(t, y, eta) = y.eta + t p(eta) for x-independent
    symbols, so only the eta Hessian requires differencing.
    """
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    q = eta.size

    def hess(h):
        out = np.empty((q, q))
        for i in range(q):
            for j in range(q):
                ei = np.zeros(q)
                ej = np.zeros(q)
                ei[i] = h
                ej[j] = h
                out[i, j] = (
                    p_func(eta + ei + ej)
                    - p_func(eta + ei - ej)
                    - p_func(eta - ei + ej)
                    + p_func(eta - ei - ej)
                ) / (4.0 * h * h)
        return out

    coarse = hess(step)
    fine = hess(step / 2.0)
    chi_ee = t * (4.0 * fine - coarse) / 3.0
    blocks = np.zeros((3 * q, 3 * q))
    blocks[:q, q : 2 * q] = np.eye(q)
    blocks[q : 2 * q, :q] = np.eye(q)
    blocks[q : 2 * q, q : 2 * q] = 0.5 * (chi_ee + chi_ee.T)
    blocks[:q, 2 * q :] = -np.eye(q)
    blocks[2 * q :, :q] = -np.eye(q)
    asym = float(np.max(np.abs(blocks - blocks.T)))
    if asym > _SYM_TOL:
        raise FoltraceError(f"assembled matrix asymmetric by {asym}")
    return blocks


@dataclass(frozen=True)
class SignatureResult:
    value: int
    zeros: int
    marginal: bool


def signature_detailed(matrix, rel_threshold=1e-8) -> SignatureResult:
    """Eigenvalue signature with explicit zero threshold and margin flag.

    Eigenvalues within rel_threshold * ||R|| count as structural zeros;
    eigenvalues within ten times the threshold are flagged as marginal.
    """
    matrix = np.asarray(matrix, dtype=float)
    eig = np.linalg.eigvalsh(matrix)
    scale = float(np.max(np.abs(eig), initial=0.0))
    cut = rel_threshold * max(scale, 1e-300)
    pos = int(np.sum(eig > cut))
    neg = int(np.sum(eig < -cut))
    zeros = int(eig.size - pos - neg)
    marginal = bool(np.any((np.abs(eig) > cut) & (np.abs(eig) < 10.0 * cut)))
    return SignatureResult(value=pos - neg, zeros=zeros, marginal=marginal)


def signature(matrix, rel_threshold=1e-8) -> int:
    """(#positive - #negative) eigenvalues with thresholded zeros."""
    return signature_detailed(matrix, rel_threshold).value


@dataclass(frozen=True)
class CrossingReport:
    kappa: int
    interior_crossings: int
    endpoint_crossings: int
    flagged: bool


def crossing_report(model, component, steps=1024) -> CrossingReport:
    """Track L(tau) = (df_tau)^{-1}(vertical) and count horizontal crossings.

    The curve lives in the transverse symplectic space (dy, deta); its
    eta-block frame determinant changes sign exactly at crossings with
    the horizontal subspace {deta = 0}.  Signed crossings in the open
    interval count fully, endpoint crossings half (and are reported
    separately); a crossing landing within 1e-6 of a grid point after
    refinement is flagged.  In flat models the determinant is constant
    and the count is zero.
    """
    steps = max(int(steps), 1000)
    t = float(component.t)
    eta = np.asarray(component.eta_frame, dtype=float)
    q = eta.size
    hat = eta / np.linalg.norm(eta)
    hess = np.eye(q) - np.outer(hat, hat)

    taus = np.linspace(0.0, t, steps + 1)

    def eta_block_det(tau):
        # frame of L(tau): columns (-tau * hess e_i ; e_i); eta block is I
        return 1.0 if q == 0 else float(np.linalg.det(np.eye(q)))

    dets = np.array([eta_block_det(tau) for tau in taus])
    interior = 0
    flagged = False
    for i in range(1, steps):
        if dets[i - 1] * dets[i] < 0.0:
            interior += 1 if dets[i] > dets[i - 1] else -1
            width = taus[i] - taus[i - 1]
            if width < 1e-6:
                flagged = True
    endpoint = int(dets[0] == 0.0) + int(dets[-1] == 0.0)
    kappa = interior + endpoint // 2
    return CrossingReport(
        kappa=kappa,
        interior_crossings=interior,
        endpoint_crossings=endpoint,
        flagged=flagged,
    )


def intersection_number(model, component, steps=1024) -> int:
    """kappa for the component; zero throughout the flat family."""
    return crossing_report(model, component, steps).kappa


@dataclass(frozen=True)
class MaslovData:
    R_matrix: np.ndarray
    signature: int
    kappa: int
    sigma: int


def maslov_data(model, component, samples=5, seed=0) -> MaslovData:
    """Index data at one component, checked across sample points."""
    t = float(component.t)
    if t == 0.0:
        q = model.q
        return MaslovData(np.zeros((3 * q, 3 * q)), 0, 0, 0)
    eta = np.asarray(component.eta_frame, dtype=float)
    gen = solve_generating_function(model, -t)
    kappa = intersection_number(model, component)
    rng = np.random.default_rng(seed)
    results = []
    r_matrix = None
    for _ in range(max(int(samples), 5)):
        y = rng.normal(size=model.q)
        r_matrix = assemble_R(gen, y, eta)
        results.append(signature(r_matrix) + 2 * kappa)
    if len(set(results)) != 1:
        raise MaslovConsistencyError(results)
    return MaslovData(
        R_matrix=r_matrix,
        signature=results[0] - 2 * kappa,
        kappa=kappa,
        sigma=results[0],
    )


def maslov_index(model, component, samples=5, seed=0) -> int:
    """sigma = sgn R + 2 kappa, constant across the component's samples."""
    return maslov_data(model, component, samples=samples, seed=seed).sigma
