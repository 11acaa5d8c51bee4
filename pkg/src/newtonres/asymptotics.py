"""Quantitative bounds and small-contrast expansions of the resonances.

All spectral quantities are taken from the mesh: the set {1/lambda} of
trusted mesh eigenvalues stands in for the spectrum of N_0^{-1}, so every
check here is internally consistent on one discretization.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ConfigurationError, DomainError, HypothesisNotMet, PreconditionError
from .geometry import DiscreteDomain
from .spectral import SpectralData

__all__ = [
    "ExpansionPrediction",
    "LocalizationConstants",
    "LocalizationEntry",
    "LocalizationReport",
    "ExpansionFit",
    "mk0_inverse_bound",
    "bound_samples",
    "localization_constants",
    "check_localization",
    "predict_first_order",
    "fit_expansion",
    "fit_eps_grid",
]

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class ExpansionPrediction:
    lam: float
    coupling_sq: float
    zeroth: float
    first_coeff: complex
    cluster_summed: bool = False

    @classmethod
    def from_mode(cls, lam, coupling_sq, cluster_summed=False):
        first = -1j * coupling_sq / (4.0 * np.pi * lam**2.5)
        return cls(float(lam), float(coupling_sq), float(1.0 / lam), complex(0.0, first.imag), cluster_summed)


@dataclass(frozen=True)
class LocalizationConstants:
    r: float
    r_circ: float
    r_plus: float
    c_r: float
    eps_max: float
    lambda1: float
    volume: float
    diameter: float


@dataclass(frozen=True)
class LocalizationEntry:
    kappa_sq: complex
    seed_lambda: float
    assigned_lambda: float
    distance: float
    radius: float
    n_discs: int
    passed: bool


@dataclass(frozen=True)
class LocalizationReport:
    eps: float
    constants: LocalizationConstants
    entries: tuple = ()

    @property
    def all_pass(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.eps,
            "constants": asdict(self.constants),
            "all_pass": self.all_pass,
            "entries": [asdict(e) for e in self.entries],
        }


@dataclass(frozen=True)
class ExpansionFit:
    zeroth: complex
    first: complex
    second: complex
    remainder_order: float
    eps: tuple = ()
    remainders: tuple = field(default=())

    def __iter__(self):
        # unpacks as (zeroth_fit, first_fit, remainder_order)
        return iter((self.zeroth, self.first, self.remainder_order))


def _spectrum_points(spectral: SpectralData) -> np.ndarray:
    lam = spectral.eigenvalues[spectral.trusted]
    return 1.0 / lam[lam > 0]


def mk0_inverse_bound(spectral: SpectralData, kappa: complex) -> tuple[float, float]:
    """(||M_k(0)^{-1}||, sqrt2 max{1/lambda_1, Re k^2} / dist(k^2, {1/lambda})).

    The left side is exact for the mesh operator: M_k(0) = 1 - k^2 N_0 is
    normal in the weighted product with eigenvalues 1 - k^2 lambda.
    """
    k2 = complex(kappa) ** 2
    pts = _spectrum_points(spectral)
    dist = float(np.min(np.abs(pts - k2)))
    if dist <= 1e-12 * max(1.0, abs(k2)):
        raise PreconditionError(f"k^2 = {k2} lies on the discrete spectrum")
    lam = spectral.eigenvalues
    lhs = float(np.max(1.0 / np.abs(1.0 - k2 * lam)))
    rhs = float(SQRT2 * max(1.0 / spectral.lambda1, k2.real) / dist)
    return lhs, rhs


def bound_samples(spectral: SpectralData, count: int = 200, seed: int = 0,
                  radius_factor: float = 2.0, min_dist: float = 1e-3) -> np.ndarray:
    """Quasi-random k values with |k^2| <= radius_factor/lambda_1, k^2 off the spectrum.

    k^2 is drawn from a scrambled Halton sequence mapped to the disc (area
    uniform); k is the principal square root.
    """
    R = radius_factor / spectral.lambda1
    pts = _spectrum_points(spectral)
    sampler = qmc.Halton(d=2, scramble=True, seed=seed)
    out = []
    while len(out) < count:
        u = sampler.random(count)
        z = R * np.sqrt(u[:, 0]) * np.exp(2j * np.pi * u[:, 1])
        for k2 in z:
            if np.min(np.abs(pts - k2)) >= min_dist:
                out.append(np.sqrt(k2))
                if len(out) == count:
                    break
    return np.array(out)


def localization_constants(spectral: SpectralData, domain: DiscreteDomain, r: float) -> LocalizationConstants:
    lam1 = spectral.lambda1
    if not r > 1.0 / lam1:
        raise PreconditionError(f"r={r} must exceed 1/lambda_1={1.0 / lam1:.6g}")
    pts = np.sort(spectral.reciprocal_points())
    if len(pts) < 2:
        raise DomainError("only one spectral point is resolved: r_circ is undefined; "
                          "use a finer mesh or a larger trusted range")
    gaps = [np.min(np.abs(np.delete(pts, i) - p)) for i, p in enumerate(pts) if p <= r]
    r_circ = 0.5 * float(min(gaps))
    r_plus = r + r_circ
    sq = np.sqrt(r_plus)
    vol, d = domain.total_volume, domain.diameter
    c_r = SQRT2 * (np.sqrt(vol / (4.0 * np.pi)) * sq * np.exp(sq * d) + lam1) * r_plus**2
    return LocalizationConstants(float(r), r_circ, float(r_plus), float(c_r), float(r_circ / c_r),
                                 float(lam1), float(vol), float(d))


def check_localization(resonances, constants: LocalizationConstants, spectral: SpectralData,
                       eps: float) -> LocalizationReport:
    """Disc membership |k^2 - 1/lambda| <= c_r eps for every resonance in D_{r_+}."""
    if eps > constants.eps_max:
        raise HypothesisNotMet(f"eps={eps} exceeds eps_max={constants.eps_max:.3e}: check skipped")
    pts = spectral.reciprocal_points()
    lams = np.array([c.value for c in spectral.clusters])
    rad = constants.c_r * eps
    entries = []
    for res in resonances:
        k2 = complex(res.kappa_sq)
        if abs(k2) >= constants.r_plus:
            continue
        d = np.abs(pts - k2)
        i = int(np.argmin(d))
        # a zero radius (eps = 0) still admits the mesh consistency error
        inside = d <= max(rad, 1e-10 * abs(pts[i]))
        n_discs = int(np.count_nonzero(inside))
        entries.append(LocalizationEntry(k2, float(res.seed_lambda), float(lams[i]), float(d[i]),
                                         float(rad), n_discs, n_discs == 1))
    return LocalizationReport(float(eps), constants, tuple(entries))


def predict_first_order(spectral: SpectralData, cluster_index: int) -> list[ExpansionPrediction]:
    """First-order coefficients for the gauge basis of one cluster.

    Within the cluster subspace the coupling form v -> |<1, v>|^2 has rank
    at most one; the gauge basis puts all of it on a single vector.
    """
    c = spectral.clusters[cluster_index]
    E = spectral.eigenvectors[:, c.start:c.stop]
    lam = spectral.eigenvalues[c.start:c.stop]
    w = spectral.weights
    cvec = E.T @ w  # <1, e_j>
    m = c.multiplicity
    if m == 1:
        return [ExpansionPrediction.from_mode(lam[0], cvec[0] ** 2)]
    norm = np.linalg.norm(cvec)
    if norm == 0.0:
        return [ExpansionPrediction.from_mode(l, 0.0) for l in lam]
    Q = np.linalg.svd(cvec.reshape(1, -1))[2].T  # first column is cvec/|cvec|
    out = []
    for j in range(m):
        q = Q[:, j]
        lam_q = float(q @ (lam * q))
        coupling = norm**2 if j == 0 else float((cvec @ q) ** 2)
        out.append(ExpansionPrediction.from_mode(lam_q, coupling, cluster_summed=(j == 0)))
    return out


def fit_expansion(samples, reference=None, eps_max=None) -> ExpansionFit:
    """Least-squares fit of k^2(eps) to a + b eps + c eps^2.

    The remainder of the linear part is measured against ``reference``
    (zeroth, first) when given, else against the fitted (a, b).  Its order
    is the least-squares slope of log(remainder) against log(eps), which for
    a grid of halvings is the mean of log2(rem(eps) / rem(eps / 2)).
    """
    data = sorted((float(e), complex(k)) for e, k in samples)
    eps = np.array([e for e, _ in data])
    val = np.array([k for _, k in data])
    if len(np.unique(eps)) < 3:
        raise ConfigurationError("fit_expansion needs at least 3 distinct eps values")
    if eps_max is not None and np.any(eps > eps_max):
        raise HypothesisNotMet(f"eps samples exceed eps_max={eps_max:.3e}")
    A = np.vander(eps, 3, increasing=True)
    coef, *_ = np.linalg.lstsq(A.astype(complex), val, rcond=None)
    a, b = (coef[0], coef[1]) if reference is None else (complex(reference[0]), complex(reference[1]))
    rem = np.abs(val - a - b * eps)
    scale = max(1.0, float(np.max(np.abs(val))))
    if np.all(rem > 1e-14 * scale):
        order = float(np.polyfit(np.log(eps), np.log(rem), 1)[0])
    else:
        order = float("nan")
    return ExpansionFit(complex(coef[0]), complex(coef[1]), complex(coef[2]), order,
                        tuple(eps), tuple(float(x) for x in rem))


def fit_eps_grid(eps_max: float | None = None, eps0: float = 0.04) -> tuple[float, float, float]:
    """Geometric grid {e0/4, e0/2, e0} with e0 = min(eps0, eps_max / 2)."""
    e0 = eps0 if eps_max is None else min(eps0, eps_max / 2.0)
    return (e0 / 4.0, e0 / 2.0, e0)
