"""Characteristic points of k -> M_k(eps): bordered Newton tracking and contour moments.

A resonance is reported as k with Re k > 0 and Im k <= 0; its square k^2 is
the physically meaningful value.  For a seed cluster of multiplicity m that
is exactly degenerate (symmetry-protected), the tracker pins the kernel
vector's projection onto the cluster subspace to one basis vector, which
keeps the bordered Jacobian regular at a semisimple multiple root.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import PathError, PreconditionError, RankError, SheetError, SolverError
from .geometry import DiscreteDomain
from .io import csv_text
from .operators import (
    _kernel_matrices,
    assemble_characteristic,
    characteristic_and_derivative,
    newton_difference_bound,
)
from .spectral import SpectralData

log = logging.getLogger(__name__)

__all__ = [
    "ResonanceResult",
    "EigenPath",
    "track_resonance",
    "track_cluster",
    "eigen_path",
    "contour_solver",
    "resonance_set",
    "merge_resonances",
    "resonances_csv",
    "RESONANCE_HEADER",
]

RESONANCE_HEADER = ("epsilon", "seed_lambda", "re_kappa", "im_kappa", "re_kappa_sq", "im_kappa_sq",
                    "multiplicity", "residual", "method")
RESIDUAL_MAX = 1e-9
SHEET_TOL = 1e-8
MERGE_TOL = 1e-8
DEGENERATE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ResonanceResult:
    kappa: complex
    seed_lambda: float
    kernel_vector: np.ndarray
    residual: float
    multiplicity: int
    method: str
    epsilon: float
    iterations: int = 0

    @property
    def kappa_sq(self) -> complex:
        return self.kappa * self.kappa


@dataclass(frozen=True, eq=False)
class EigenPath:
    samples: list = field(default_factory=list)  # (z, zeta, vector)
    seed: tuple = ()

    @property
    def z(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def zeta(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])


def _wnorm(w, x):
    return float(np.sqrt(np.sum(w * np.abs(x) ** 2)))


def _bordered_newton(domain, eps, kappa0, basis, j, tol=1e-13, max_iter=50):
    """Solve M_k(eps) v + B w = 0, E^H D v = e_j for (v, k, w).

    E = ``basis`` (n x m, weighted-orthonormal), B = D conj(E_others).  For
    m = 1 this is the classical bordered system.  Returns (k, v, w, iters).
    """
    V = domain.volumes
    n = domain.n
    E = np.asarray(basis, dtype=complex).reshape(n, -1)
    m = E.shape[1]
    others = [i for i in range(m) if i != j]
    B = V[:, None] * np.conj(E[:, others])
    C = np.conj(E).T * V[None, :]  # rows of E^H D
    target = np.zeros(m, dtype=complex)
    target[j] = 1.0

    def residual(k, v, w):
        M, dM = characteristic_and_derivative(domain, k, eps)
        top = M @ v + B @ w
        return np.concatenate([top, C @ v - target]), M, dM

    v = E[:, j].copy()
    k = complex(kappa0)
    w = np.zeros(m - 1, dtype=complex)
    F, M, dM = residual(k, v, w)
    fn = np.linalg.norm(F)
    for it in range(1, max_iter + 1):
        J = np.zeros((n + m, n + m), dtype=complex)
        J[:n, :n] = M
        J[:n, n] = dM @ v
        J[:n, n + 1:] = B
        J[n:, :n] = C
        try:
            step = sla.solve(J, -F, check_finite=False)
        except (sla.LinAlgError, ValueError) as exc:
            raise SolverError(f"singular bordered Jacobian at k={k}", fn) from exc
        dv, dk, dw = step[:n], step[n], step[n + 1:]
        t = 1.0
        for _ in range(9):
            kt, vt, wt = k + t * dk, v + t * dv, w + t * dw
            Ft, Mt, dMt = residual(kt, vt, wt)
            ft = np.linalg.norm(Ft)
            if ft <= fn or ft < tol:
                break
            t *= 0.5
        k, v, w, F, M, dM, fn = kt, vt, wt, Ft, Mt, dMt, ft
        if fn < tol or (abs(t * dk) <= 1e-15 * abs(k) and fn < 1e-10):
            return k, v, w, it
    raise SolverError(f"bordered Newton did not converge in {max_iter} iterations "
                      f"(last residual {fn:.3e})", fn)


def _finalize(domain, eps, k, v, seed_lambda, method, iters):
    if k.real < 0:
        k, v = -k, v  # M depends on k^2 and eps*k; keep the Re k > 0 representative
        M = assemble_characteristic(domain, k, eps).entries
    else:
        M = assemble_characteristic(domain, k, eps).entries
    V = domain.volumes
    v = v / _wnorm(V, v)
    ph = np.sum(V * v * v)
    if abs(ph) > 1e-12:
        v = v / np.sqrt(ph / abs(ph))
    res = _wnorm(V, M @ v)
    if res >= RESIDUAL_MAX:
        raise SolverError(f"residual {res:.3e} above {RESIDUAL_MAX}", res)
    if eps > 0 and k.imag > SHEET_TOL:
        raise SheetError(f"converged to k={k} in the upper half-plane", res)
    v.setflags(write=False)
    return ResonanceResult(complex(k), float(seed_lambda), v, res, 1, method, float(eps), iters)


def track_resonance(domain: DiscreteDomain, eps: float, seed, *, basis=None, index: int = 0,
                    kappa0=None, tol: float = 1e-13, max_iter: int = 50) -> ResonanceResult:
    """Newton tracking of the characteristic point seeded by (lambda, e).

    With ``basis`` (n x m cluster subspace containing the seed as column
    ``index``) the pinned variant is used; when the cluster turns out not
    to be degenerate at this eps the result is re-polished with the plain
    one-vector bordering.
    """
    lam, e = seed
    if not lam > 0:
        raise PreconditionError("seed eigenvalue must be positive")
    k0 = 1.0 / np.sqrt(lam) if kappa0 is None else complex(kappa0)
    E = np.asarray(e).reshape(-1, 1) if basis is None else np.asarray(basis)
    j = 0 if basis is None else index
    k, v, w, it = _bordered_newton(domain, eps, k0, E, j, tol, max_iter)
    if w.size and np.linalg.norm(w) > 1e-10:
        log.debug("cluster not degenerate at eps=%g (|w|=%.2e); re-polishing", eps, np.linalg.norm(w))
        u = v / _wnorm(domain.volumes, v)
        k, v, _, it2 = _bordered_newton(domain, eps, k, u.reshape(-1, 1), 0, tol, max_iter)
        it += it2
    return _finalize(domain, eps, k, v, lam, "newton_track", it)


def _rank(vectors, weights, tol=1e-6):
    if not vectors:
        return 0
    A = np.stack(vectors, axis=1) * np.sqrt(weights)[:, None]
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.count_nonzero(s > tol * s[0]))


def merge_resonances(results, weights, tol=MERGE_TOL):
    """Merge results whose k differ by less than tol (relative to max(1,|k|)).

    Multiplicity of a merged tracked point is the rank of its per-seed
    kernel vectors; contour multiplicities add up.
    """
    groups = []
    for r in sorted(results, key=lambda r: (r.kappa_sq.real, r.kappa_sq.imag)):
        for g in groups:
            if abs(g[0].kappa - r.kappa) < tol * max(1.0, abs(r.kappa)):
                g.append(r)
                break
        else:
            groups.append([r])
    out = []
    for g in groups:
        best = min(g, key=lambda r: r.residual)
        if len(g) == 1:
            out.append(best)
            continue
        if best.method == "contour":
            mult = sum(r.multiplicity for r in g)
        else:
            # per-seed results count by the rank of their kernel vectors
            single = [r.kernel_vector for r in g if r.multiplicity == 1]
            mult = max(_rank(single, weights), max(r.multiplicity for r in g), 1)
        out.append(ResonanceResult(best.kappa, best.seed_lambda, best.kernel_vector, best.residual,
                                   mult, best.method, best.epsilon, best.iterations))
    out.sort(key=lambda r: (round(r.kappa_sq.real, 12), round(r.kappa_sq.imag, 12)))
    return out


def _degenerate_groups(lam, tol=DEGENERATE_TOL):
    groups = [[0]]
    for i in range(1, len(lam)):
        if abs(lam[i] - lam[groups[-1][0]]) <= tol * abs(lam[groups[-1][0]]):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def track_cluster(domain: DiscreteDomain, eps: float, spectral: SpectralData, cluster_index: int,
                  workers: int = 1, **kw) -> list[ResonanceResult]:
    """Track every branch of one spectral cluster; duplicates are merged."""
    c = spectral.clusters[cluster_index]
    lam = spectral.eigenvalues[c.start:c.stop]
    vecs = spectral.eigenvectors[:, c.start:c.stop]
    jobs = []
    for g in _degenerate_groups(lam):
        basis = vecs[:, g]
        for j, idx in enumerate(g):
            jobs.append((float(lam[idx]), vecs[:, idx], basis, j))

    def run(job):
        l, e, basis, j = job
        return track_resonance(domain, eps, (l, e), basis=basis, index=j, **kw)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    return merge_resonances(results, domain.volumes)


def eigen_path(domain: DiscreteDomain, seed, z_targets, spectral: SpectralData | None = None,
               tol: float = 1e-13, max_iter: int = 40) -> EigenPath:
    """Continue the eigenpair (zeta(z), e(z)) of N_z from (lambda, e) at z = 0.

    Each target is reached by Rayleigh-quotient inverse iteration warm-started
    from the previous sample.  The Rayleigh quotient uses the unconjugated
    weighted pairing, for which N_z is symmetric.
    """
    lam, e0 = seed
    V = domain.volumes
    n = domain.n
    zs = [complex(z) for z in z_targets]
    max_step = 0.1 / domain.diameter
    prev = 0j
    for z in zs:
        if abs(z - prev) > max_step:
            raise PreconditionError(f"path step {abs(z - prev):.3g} exceeds {max_step:.3g}")
        prev = z
    gap0 = None
    if spectral is not None:
        others = np.abs(spectral.eigenvalues - lam)
        others = others[others > 1e-12 * lam]
        gap0 = float(others.min()) if others.size else np.inf
        if np.count_nonzero(np.abs(spectral.eigenvalues - lam) <= 1e-12 * lam) > 1:
            gap0 = 0.0
    v = np.asarray(e0, dtype=complex) / _wnorm(V, e0)
    zeta = complex(lam)
    samples = []
    for z in zs:
        if gap0 is not None:
            # ||N_z - N_0|| <= sqrt(|Omega| / 4 pi) |z| e^{|Im z| d}; eigenvalues move at most that far
            drift = 2.0 * newton_difference_bound(domain, z, 1.0)
            if gap0 - drift < 1e-4 * lam:
                raise PathError(f"eigenvalue collision possible at z={z} "
                                f"(gap {gap0:.3e}, drift bound {drift:.3e})")
        N, _ = _kernel_matrices(domain, z, derivative=False)
        N = np.asarray(N, dtype=complex)
        vprev = v
        for _ in range(max_iter):
            r = N @ v - zeta * v
            if _wnorm(V, r) < tol * lam:
                break
            try:
                y = sla.solve(N - zeta * np.eye(n), v, check_finite=False)
            except sla.LinAlgError:
                break  # shift is an exact eigenvalue: v is already converged
            v = y / _wnorm(V, y)
            den = np.sum(V * v * v)
            zeta = np.sum(V * v * (N @ v)) / den
        else:
            raise PathError(f"inverse iteration did not converge at z={z}")
        ov = abs(np.sum(V * np.conj(vprev) * v)) / (_wnorm(V, vprev) * _wnorm(V, v))
        if ov <= 0.9:
            raise PathError(f"branch jump at z={z} (overlap {ov:.3f})")
        ph = np.sum(V * np.conj(np.asarray(e0)) * v)
        if abs(ph) > 0:
            v = v * (abs(ph) / ph)
        samples.append((z, complex(zeta), v.copy()))
    return EigenPath(samples, (lam, np.asarray(e0)))


def _weighted_orthonormal(vectors, weights):
    s = np.sqrt(weights)[:, None]
    Q, _ = np.linalg.qr(vectors * s)
    return Q / s


def contour_solver(domain: DiscreteDomain, eps: float, center: complex, radius: float,
                   n_quad: int = 32, max_rank: int = 6, *, seed: int = 0,
                   spectral: SpectralData | None = None, polish: bool = True,
                   rank_tol: float = 1e-8, gap_tol: float = 1e-6) -> list[ResonanceResult]:
    """All characteristic points of k -> M_k(eps) inside a circle (Beyn's method).

    Moments A_p = (1 / 2 pi i) \\oint k^p M_k^{-1} V dk, p = 0, 1, by the
    trapezoid rule; the numerical rank of A_0 counts the points with
    multiplicity.  Each point is polished by bordered Newton.
    """
    if n_quad < 32:
        raise PreconditionError("n_quad must be at least 32")
    if not radius > 0:
        raise PreconditionError("radius must be positive")
    n = domain.n
    L = int(max_rank)
    if L < 1 or L > n:
        raise PreconditionError("max_rank must lie in [1, n]")
    rng = np.random.default_rng(seed)
    probe = rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L))
    theta = 2.0 * np.pi * np.arange(n_quad) / n_quad
    nodes = center + radius * np.exp(1j * theta)
    wts = radius * np.exp(1j * theta) / n_quad
    A0 = np.zeros((n, L), dtype=complex)
    A1 = np.zeros((n, L), dtype=complex)
    scale = 0.0
    for k, wk in zip(nodes, wts):
        M = assemble_characteristic(domain, k, eps).entries
        X = sla.solve(M, probe, check_finite=False)
        A0 += wk * X
        A1 += (wk * k) * X
        scale = max(scale, radius * np.linalg.norm(X, 2))
    U, s, Wh = np.linalg.svd(A0, full_matrices=False)
    rank = int(np.count_nonzero(s > rank_tol * scale))
    if rank == L:
        raise RankError(f"moment matrix has full rank {L}: increase max_rank")
    if rank == 0:
        return []
    if s[rank] > gap_tol * s[rank - 1]:
        raise RankError(f"rank test inconclusive: singular values {s[rank - 1]:.3e}, "
                        f"{s[rank]:.3e}; increase max_rank or n_quad")
    U, s, W = U[:, :rank], s[:rank], Wh[:rank].conj().T
    Bm = U.conj().T @ A1 @ (W / s[None, :])
    ks, S = np.linalg.eig(Bm)
    vecs = U @ S
    inside = np.abs(ks - center) < radius
    ks, vecs = ks[inside], vecs[:, inside]
    order = np.argsort(ks.real)
    ks, vecs = ks[order], vecs[:, order]
    groups = []
    for i, k in enumerate(ks):
        for g in groups:
            if abs(ks[g[0]] - k) < 1e-6 * max(1.0, abs(k)):
                g.append(i)
                break
        else:
            groups.append([i])
    results = []
    for g in groups:
        k0 = complex(np.mean(ks[g]))
        lam_seed = _attribute(k0, spectral)
        if not polish:
            for i in g:
                v = vecs[:, i]
                res = _wnorm(domain.volumes, assemble_characteristic(domain, k0, eps).entries @ v) / _wnorm(domain.volumes, v)
                results.append(ResonanceResult(k0, lam_seed, v, res, 1, "contour", float(eps)))
            continue
        basis = _weighted_orthonormal(vecs[:, g], domain.volumes)
        for j in range(len(g)):
            kk, v, w, it = _bordered_newton(domain, eps, k0, basis, j)
            if w.size and np.linalg.norm(w) > 1e-10:
                u = v / _wnorm(domain.volumes, v)
                kk, v, _, it2 = _bordered_newton(domain, eps, kk, u.reshape(-1, 1), 0)
                it += it2
            results.append(_finalize(domain, eps, kk, v, lam_seed, "contour", it))
    return merge_resonances(results, domain.volumes)


def _attribute(k, spectral):
    if spectral is None:
        return float("nan")
    pts = spectral.reciprocal_points()
    i = int(np.argmin(np.abs(pts - k * k)))
    return float(spectral.clusters[i].value)


def resonance_set(domain: DiscreteDomain, eps: float, r: float, spectral: SpectralData,
                  method: str = "newton_track", workers: int = 1, n_quad: int = 32) -> list[ResonanceResult]:
    """All resonances with k^2 in the disc of radius r_+ about the origin."""
    from .asymptotics import localization_constants

    if not r > 1.0 / spectral.lambda1:
        raise PreconditionError(f"r={r} must exceed 1/lambda_1={1.0 / spectral.lambda1:.6g}")
    const = localization_constants(spectral, domain, r)
    found = []
    for ci, c in enumerate(spectral.clusters):
        if 1.0 / c.value > const.r_plus:
            continue
        if method == "newton_track":
            found.extend(track_cluster(domain, eps, spectral, ci, workers=workers))
        elif method == "contour":
            k0 = 1.0 / np.sqrt(c.value)
            rad = _contour_radius(spectral, ci)
            found.extend(contour_solver(domain, eps, k0, rad, n_quad=n_quad,
                                        max_rank=c.multiplicity + 3, spectral=spectral))
        else:
            raise PreconditionError(f"unknown method {method!r}")
    merged = merge_resonances(found, domain.volumes)
    return [res for res in merged if abs(res.kappa_sq) < const.r_plus]


def _contour_radius(spectral, ci, frac=0.1):
    """Circle radius about 1/sqrt(lambda) that stays clear of neighbouring clusters."""
    ks = 1.0 / np.sqrt([c.value for c in spectral.clusters])
    k = ks[ci]
    gaps = np.abs(np.delete(ks, ci) - k)
    half_gap = 0.5 * gaps.min() if gaps.size else np.inf
    return float(min(frac * k, half_gap))


def resonances_csv(results) -> str:
    rows = [(r.epsilon, r.seed_lambda, r.kappa.real, r.kappa.imag, r.kappa_sq.real, r.kappa_sq.imag,
             r.multiplicity, r.residual, r.method) for r in results]
    return csv_text(RESONANCE_HEADER, rows)
