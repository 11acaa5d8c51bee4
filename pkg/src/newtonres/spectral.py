"""Eigensystem of the discretized Newton potential N_0 and the ball oracle."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, eigh
from scipy.optimize import brentq
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.special import spherical_jn

from .errors import NumericalError, OracleError, PreconditionError
from .operators import KernelOperator, LatticeNewton

__all__ = [
    "Cluster",
    "SpectralData",
    "BallOracleEigenvalue",
    "eig_newton0",
    "cluster",
    "coupling",
    "ball_oracle",
    "ball_ground_coupling",
    "TRUST_RATIO",
    "DEFAULT_CLUSTER_TOL",
]

TRUST_RATIO = 1e-6
DEFAULT_CLUSTER_TOL = 1e-2


@dataclass(frozen=True)
class Cluster:
    start: int
    stop: int
    value: float

    @property
    def multiplicity(self) -> int:
        return self.stop - self.start

    @property
    def indices(self) -> range:
        return range(self.start, self.stop)


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Descending eigenvalues of N_0 and weighted-orthonormal eigenvectors.

    ``eigenvectors[:, j]`` holds cell values of e_j.  ``complete`` is False
    when only the leading modes were computed.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    weights: np.ndarray
    mesh_id: str = ""
    complete: bool = True
    clusters: tuple = field(default=())

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def trusted(self) -> np.ndarray:
        """Indices of modes above the mesh-trust threshold."""
        lam = self.eigenvalues
        return np.flatnonzero(lam >= TRUST_RATIO * lam[0])

    def cluster_vectors(self, index: int) -> np.ndarray:
        c = self.clusters[index]
        return self.eigenvectors[:, c.start:c.stop]

    def inner(self, u, v) -> complex:
        return complex(np.sum(self.weights * np.conj(u) * v))

    def reciprocal_points(self) -> np.ndarray:
        """1/lambda for every cluster: the discrete surrogate of sigma(N_0^{-1})."""
        return np.array([1.0 / c.value for c in self.clusters])


def _clusters(lam, rel_tol, limit):
    out = []
    start = 0
    for i in range(1, limit + 1):
        if i == limit or lam[i - 1] - lam[i] >= rel_tol * lam[i - 1]:
            out.append(Cluster(start, i, float(np.mean(lam[start:i]))))
            start = i
    return out


def cluster(spectral: SpectralData, rel_tol: float = DEFAULT_CLUSTER_TOL) -> SpectralData:
    """Group consecutive eigenvalues whose gap is below rel_tol * lambda.

    Only positive modes above the trust threshold take part.  For partial
    spectra the last group may be cut by the truncation and is dropped.
    """
    if not 0.0 < rel_tol < 0.1:
        raise PreconditionError(f"rel_tol must lie in (0, 0.1), got {rel_tol}")
    lam = spectral.eigenvalues
    limit = int(np.count_nonzero((lam > 0) & (lam >= TRUST_RATIO * lam[0])))
    groups = _clusters(lam, rel_tol, limit)
    if not spectral.complete and len(groups) > 1:
        groups = groups[:-1]
    return replace(spectral, clusters=tuple(groups))


def _finish(lam, W, weights, mesh_id, complete, rel_tol):
    order = np.argsort(lam)[::-1]
    lam = np.clip(lam[order], 0.0, None)
    vecs = W[:, order] / np.sqrt(weights)[:, None]
    # sign gauge: largest-magnitude component positive (deterministic output)
    piv = np.argmax(np.abs(vecs), axis=0)
    sgn = np.sign(vecs[piv, np.arange(vecs.shape[1])])
    sgn[sgn == 0] = 1.0
    vecs = vecs * sgn
    lam.setflags(write=False)
    vecs.setflags(write=False)
    sd = SpectralData(lam, vecs, np.asarray(weights, dtype=float), mesh_id, complete)
    return cluster(sd, rel_tol)


def eig_newton0(op, n_modes: int | None = None, rel_tol: float = DEFAULT_CLUSTER_TOL,
                mesh_id: str = "") -> SpectralData:
    """Eigendecomposition of N_0.

    ``op`` is a dense newton(0) :class:`KernelOperator` (full symmetric
    eigendecomposition of the weighted matrix) or a :class:`LatticeNewton`
    at k = 0, for which the ``n_modes`` leading modes are found with ARPACK.
    """
    if isinstance(op, LatticeNewton):
        if op.kappa != 0:
            raise PreconditionError("eig_newton0 needs the k = 0 operator")
        k = n_modes or 20
        if k >= op.n - 1:
            raise PreconditionError("lattice eigensolver needs n_modes < n - 1")
        try:
            lam, W = eigsh(op.aslinearoperator(), k=k, which="LA", tol=1e-13, ncv=max(2 * k + 1, 40))
        except ArpackNoConvergence as exc:
            raise NumericalError(f"ARPACK did not converge: {exc}") from exc
        w = op.domain.volumes
        # the weighted matrix equals the plain one when volumes are uniform
        return _finish(lam, W, w, mesh_id or op.domain.mesh_id, False, rel_tol)
    if not isinstance(op, KernelOperator) or op.kind != "newton" or op.kappa != 0:
        raise PreconditionError("eig_newton0 needs a newton(0) operator")
    Wm = op.weighted()
    Wm = 0.5 * (Wm + Wm.T)
    try:
        lam, U = eigh(np.real(Wm))
    except LinAlgError as exc:
        cond = np.linalg.cond(Wm)
        raise NumericalError(f"eigensolver failed (condition number {cond:.3e}): {exc}") from exc
    sd = _finish(lam, U, op.weights, mesh_id, True, rel_tol)
    if n_modes is not None:
        sd = replace(sd, eigenvalues=sd.eigenvalues[:n_modes],
                     eigenvectors=sd.eigenvectors[:, :n_modes], complete=False)
        sd = cluster(sd, rel_tol)
    return sd


def coupling(spectral: SpectralData, j: int) -> complex:
    """<1, e_j> in the weighted pairing."""
    if not 0 <= j < spectral.eigenvectors.shape[1]:
        raise PreconditionError(f"mode index {j} out of range")
    return complex(np.sum(spectral.weights * spectral.eigenvectors[:, j]))


@dataclass(frozen=True)
class BallOracleEigenvalue:
    """Eigenvalue 1/k^2 of the unit-ball Newton potential, degree l, n-th root."""

    l: int
    n: int
    k_root: float

    @property
    def lam(self) -> float:
        return 1.0 / self.k_root**2

    @property
    def multiplicity(self) -> int:
        return 2 * self.l + 1


def matching_condition(l: int, k):
    """k j_l'(k) + (l + 1) j_l(k): C^1 matching of j_l(k r) to r^{-(l+1)} at r = 1."""
    return k * spherical_jn(l, k, derivative=True) + (l + 1) * spherical_jn(l, k)


def _roots_for_degree(l, n_max):
    width = np.pi / 4
    top = (n_max + l + 2) * np.pi
    grid = np.concatenate([[1e-3], np.arange(1, int(np.ceil(top / width)) + 1) * width])
    vals = matching_condition(l, grid)
    roots = []
    for lo, hi, flo, fhi in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if flo == 0.0:
            roots.append(lo)
        elif flo * fhi < 0:
            roots.append(brentq(lambda k: matching_condition(l, k), lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200))
        if len(roots) >= n_max:
            break
    roots = sorted(set(roots))
    if len(roots) < n_max:
        raise OracleError(f"only {len(roots)} roots for l={l} below {top:.3f}")
    return roots[:n_max]


def ball_oracle(l_max: int, n_max: int, radius: float = 1.0) -> list[BallOracleEigenvalue]:
    """Analytic spectrum of N_0 on a ball, sorted by descending eigenvalue.

    Eigenfunctions are j_l(k r) Y_lm inside and r^{-(l+1)} Y_lm outside; the
    eigenvalue is 1/k^2 (times radius^2 for a ball of other radius, which
    only rescales ``k_root``).
    """
    if not (0 <= l_max <= 20 and 1 <= n_max <= 20):
        raise PreconditionError("ball_oracle needs 0 <= l_max <= 20 and 1 <= n_max <= 20")
    out = []
    for l in range(l_max + 1):
        for n, k in enumerate(_roots_for_degree(l, n_max), start=1):
            out.append(BallOracleEigenvalue(l, n, k / radius))
    out.sort(key=lambda e: (-e.lam, e.l, e.n))
    return out


def ball_ground_coupling(radius: float = 1.0) -> float:
    """|<1, e_1>|^2 for the unit-normalized ground mode j_0(pi r / 2R).

    int_B j_0 = 32 R^3 / pi^2 and ||j_0||^2 = 8 R^3 / pi, hence 128 R^3 / pi^3.
    """
    return 128.0 * radius**3 / np.pi**3
