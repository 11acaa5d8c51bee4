"""Point-source scattering by the contracted inclusion and frequency sweeps.

The interior unknown is the density g on the cells of the physical
inclusion eps*Omega; the scattered field is its Newton-type potential

    u_sc(x) = sum_i G_k(x - y_i) g_i V_i,     g = (1 - eps^2) k^2 S^{-1} u_inc,

with S = eps^2 I - (1 - eps^2) k^2 N_k assembled on the physical cells and
u_inc = G_k(. - x_s).  S equals eps^2 times the reference matrix M_k(eps).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import zgecon

from .errors import ConfigurationError, GeometryError, ResonanceProximityError
from .geometry import DiscreteDomain
from .io import csv_text, json_text
from .operators import ContrastConfig, _kernel_matrices, assemble_characteristic, ball_moment, green

__all__ = [
    "ScatterScenario",
    "SweepResult",
    "physical_system",
    "interior_density",
    "scattered_field",
    "lippmann_schwinger_field",
    "frequency_sweep",
    "local_maxima",
]

RCOND_MIN = 1e-12


def _eps(eps) -> float:
    e = eps.epsilon if isinstance(eps, ContrastConfig) else float(eps)
    if not 0.0 < e <= 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1], got {e}")
    return e


@dataclass(frozen=True, eq=False)
class ScatterScenario:
    """Reference domain, contrast, point source and observers (physical coordinates)."""

    domain: DiscreteDomain
    epsilon: float
    source_point: np.ndarray
    observation_points: np.ndarray
    kappa: complex

    def __post_init__(self):
        eps = _eps(self.epsilon)
        object.__setattr__(self, "epsilon", eps)
        src = np.asarray(self.source_point, dtype=float).reshape(3)
        obs = np.asarray(self.observation_points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "source_point", src)
        object.__setattr__(self, "observation_points", obs)
        object.__setattr__(self, "kappa", complex(self.kappa))
        if self.kappa.imag < 0:
            raise ConfigurationError("scattering needs Im k >= 0")
        reach = eps * self.domain.circumradius
        if np.linalg.norm(src) <= reach:
            raise GeometryError(f"source point {src} lies within radius {reach:.6g} of the inclusion")
        bad = np.linalg.norm(obs, axis=1) <= reach
        if bad.any():
            raise GeometryError(f"observation point {obs[np.argmax(bad)]} lies within radius "
                                f"{reach:.6g} of the inclusion")

    @property
    def physical_domain(self) -> DiscreteDomain:
        return self.domain.scaled(self.epsilon)

    def at(self, kappa) -> "ScatterScenario":
        return ScatterScenario(self.domain, self.epsilon, self.source_point, self.observation_points, kappa)


@dataclass(frozen=True)
class SweepResult:
    kappa_sq_grid: np.ndarray
    field_abs: np.ndarray
    minv_norm: np.ndarray
    peaks_minv: list = field(default_factory=list)
    peaks_field: list = field(default_factory=list)

    @property
    def response(self):
        return self.field_abs, self.minv_norm

    def csv(self) -> str:
        rows = zip(self.kappa_sq_grid, self.field_abs, self.minv_norm)
        return csv_text(("kappa_sq", "response_field_abs", "response_minv_norm"), rows)

    def peaks_json(self) -> str:
        return json_text({
            "minv_norm": [{"kappa_sq": k, "value": v} for k, v in self.peaks_minv],
            "field_abs": [{"kappa_sq": k, "value": v} for k, v in self.peaks_field],
        })


def physical_system(scenario: ScatterScenario) -> np.ndarray:
    """S = eps^2 I - (1 - eps^2) k^2 N_k on the physical cells."""
    phys = scenario.physical_domain
    eps, k = scenario.epsilon, scenario.kappa
    N, _ = _kernel_matrices(phys, k, derivative=False)
    S = N * (-(1.0 - eps * eps) * k * k)
    S[np.diag_indices(phys.n)] += eps * eps
    return S


def interior_density(scenario: ScatterScenario) -> np.ndarray:
    eps, k = scenario.epsilon, scenario.kappa
    phys = scenario.physical_domain
    if k == 0 or eps == 1.0:
        return np.zeros(phys.n, dtype=complex)
    S = physical_system(scenario)
    lu, piv = sla.lu_factor(S, check_finite=False)
    rcond, info = zgecon(lu, np.linalg.norm(S, 1), norm="1")
    if info != 0 or rcond < RCOND_MIN:
        raise ResonanceProximityError(f"k^2 = {k * k} is too close to a resonance "
                                      f"(reciprocal condition {rcond:.3e})")
    r = np.linalg.norm(phys.centers - scenario.source_point, axis=1)
    u_inc = green(k, r)
    return (1.0 - eps * eps) * k * k * sla.lu_solve((lu, piv), u_inc, check_finite=False)


def _potential(k, points, centers, density):
    r = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
    return green(k, r) @ density


def scattered_field(scenario: ScatterScenario) -> tuple[np.ndarray, np.ndarray]:
    """(total, scattered) field values at the observation points."""
    g = interior_density(scenario)
    phys = scenario.physical_domain
    obs = scenario.observation_points
    k = scenario.kappa
    incident = green(k, np.linalg.norm(obs - scenario.source_point, axis=1))
    scat = _potential(k, obs, phys.centers, g * phys.volumes)
    return incident + scat, scat


def lippmann_schwinger_field(scenario: ScatterScenario) -> tuple[np.ndarray, np.ndarray]:
    """Independent dense solve for the total field u inside and outside the inclusion.

    Inside, u - k^2 (eps^-2 - 1) int G_k u = u_inc; the same potential of the
    interior u gives the scattered field outside.  Assembled from the kernel
    and the ball self-term directly.
    """
    eps, k = scenario.epsilon, scenario.kappa
    d = scenario.domain
    y = d.centers * eps
    V = d.volumes * eps**3
    a = np.cbrt(3.0 * V / (4.0 * np.pi))
    r = np.sqrt(((y[:, None, :] - y[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(r, 1.0)
    G = np.exp(1j * k * r) / (4.0 * np.pi * r) * V[None, :]
    G[np.diag_indices(d.n)] = ball_moment(k, a, 2)
    q = k * k * (eps**-2 - 1.0)
    u_inc = np.exp(1j * k * np.linalg.norm(y - scenario.source_point, axis=1)) / (
        4.0 * np.pi * np.linalg.norm(y - scenario.source_point, axis=1))
    u_in = np.linalg.solve(np.eye(d.n) - q * G, u_inc)
    obs = scenario.observation_points
    ro = np.linalg.norm(obs[:, None, :] - y[None, :, :], axis=2)
    scat = q * (np.exp(1j * k * ro) / (4.0 * np.pi * ro)) @ (u_in * V)
    rs = np.linalg.norm(obs - scenario.source_point, axis=1)
    return np.exp(1j * k * rs) / (4.0 * np.pi * rs) + scat, scat


def local_maxima(x, values) -> list[tuple[float, float]]:
    """3-point interior local maxima, largest first."""
    v = np.asarray(values)
    idx = [i for i in range(1, len(v) - 1) if v[i] > v[i - 1] and v[i] >= v[i + 1]]
    idx.sort(key=lambda i: -v[i])
    return [(float(x[i]), float(v[i])) for i in idx]


def _sweep_point(template: ScatterScenario, k2: float):
    k = np.sqrt(k2)
    scen = template.at(k)
    _, scat = scattered_field(scen)
    if template.epsilon == 1.0:
        return abs(scat[0]), 1.0  # no contrast: M is the identity
    M = assemble_characteristic(template.domain, k, template.epsilon).weighted()
    return abs(scat[0]), 1.0 / sla.svdvals(M, check_finite=False)[-1]


def frequency_sweep(template: ScatterScenario, kappa_sq_grid, workers: int = 1) -> SweepResult:
    """Response at real k^2: |scattered field| at the first observer and ||M_k(eps)^{-1}||."""
    grid = np.asarray(kappa_sq_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ConfigurationError("empty sweep grid")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ConfigurationError("sweep grid must be positive and strictly increasing")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda k2: _sweep_point(template, k2), grid))
    else:
        out = [_sweep_point(template, k2) for k2 in grid]
    fa = np.array([o[0] for o in out])
    mn = np.array([o[1] for o in out])
    return SweepResult(grid, fa, mn, local_maxima(grid, mn), local_maxima(grid, fa))
