"""Dense (and lattice FFT) representations of the volume integral operators.

Conventions: a ``KernelOperator`` acts on vectors of cell values; row i of
``entries`` is the discrete integral evaluated at center x_i, so the cell
volume V_j multiplies column j.  Norms and adjoints are taken in the
volume-weighted inner product <u, v> = sum_i V_i conj(u_i) v_i.

Self-cell terms integrate the kernel exactly over the ball of equal volume
centered at x_i:

    newton:      int_0^a r e^{i k r} dr          (= a^2/2 at k = 0)
    derivative:  i int_0^a r^2 e^{i k r} dr      (= i V / 4 pi at k = 0)

so that d/dk of the newton matrix is exactly the derivative matrix.
"""
from __future__ import annotations

import struct
import weakref
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import fftn, ifftn, irfftn, rfftn
from scipy.special import factorial

from .errors import AssemblyError, ConfigurationError, PreconditionError
from .geometry import DiscreteDomain

__all__ = [
    "ContrastConfig",
    "KernelOperator",
    "LatticeNewton",
    "assemble_newton",
    "assemble_derivative",
    "assemble_characteristic",
    "characteristic_and_derivative",
    "weighted_norm",
    "weighted_matrix",
    "green",
    "ball_moment",
    "newton_difference_bound",
    "derivative_norm_bound",
    "save_operator",
    "load_operator",
]

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class ContrastConfig:
    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")


def _eps_value(eps) -> float:
    if isinstance(eps, ContrastConfig):
        return eps.epsilon
    eps = float(eps)
    if not 0.0 <= eps < 1.0:
        raise PreconditionError(f"epsilon must lie in [0, 1), got {eps}")
    return eps


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Matrix of an integral operator on the cells of a domain.

    kind is one of ``"newton"`` (N_k), ``"derivative"`` (N_k^(1)) or
    ``"characteristic"`` (M_k(eps)); ``eps`` is only meaningful for the last.
    """

    entries: np.ndarray
    weights: np.ndarray
    kappa: complex
    kind: str
    eps: float = 0.0

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def weighted(self) -> np.ndarray:
        return weighted_matrix(self)

    def apply(self, u) -> np.ndarray:
        return self.entries @ np.asarray(u)


def green(kappa, r):
    """Outgoing Helmholtz kernel e^{i k r} / (4 pi r)."""
    r = np.asarray(r, dtype=float)
    if kappa == 0:
        return 1.0 / (FOUR_PI * r)
    return np.exp(1j * kappa * r) / (FOUR_PI * r)


def _moment_series(z, p, terms=40):
    """int_0^1 t^(p-1) e^{i z t} dt by its everywhere-convergent series."""
    n = np.arange(terms)
    coef = (1j) ** n / (factorial(n) * (n + p))
    return np.polynomial.polynomial.polyval(z, coef)


def ball_moment(kappa, a, p):
    """a^p * int_0^1 t^(p-1) e^{i kappa a t} dt, vectorized over radii a.

    p = 2 gives the newton self-term, p = 3 (times i) the derivative one.
    """
    a = np.asarray(a, dtype=float)
    if kappa == 0:
        return a**p / p
    z = kappa * a
    small = np.abs(z) < 1.0
    out = np.empty(np.shape(z), dtype=complex)
    out[small] = _moment_series(z[small], p)
    zl = z[~small]
    if zl.size:
        e = np.exp(1j * zl)
        if p == 2:
            out[~small] = e * (1 / (1j * zl) + 1 / zl**2) - 1 / zl**2
        elif p == 3:
            out[~small] = e * (1 / (1j * zl) + 2 / zl**2 - 2 / (1j * zl**3)) + 2 / (1j * zl**3)
        else:
            raise ValueError("only p = 2, 3 are supported")
    return a**p * out


_checked = weakref.WeakSet()


def _distances(domain: DiscreteDomain) -> np.ndarray:
    if domain.n == 0:
        raise PreconditionError("domain has no cells")
    r = domain.distances
    if domain not in _checked:
        if domain.n > 1:
            off = r + np.diag(np.full(domain.n, np.inf))
            if off.min() <= 0.0:
                i, j = np.unravel_index(np.argmin(off), off.shape)
                raise AssemblyError(f"cells {i} and {j} have coincident centers")
        _checked.add(domain)
    return r


def _kernel_matrices(domain, k, derivative=True):
    """Newton and (optionally) derivative matrices at wavenumber k."""
    r = _distances(domain)
    V = domain.volumes
    a = domain.eq_radii
    n = domain.n
    with np.errstate(divide="ignore", invalid="ignore"):
        if k == 0:
            N = V[None, :] / (FOUR_PI * r)
            D1 = np.broadcast_to((1j / FOUR_PI) * V[None, :], (n, n)).copy() if derivative else None
            np.fill_diagonal(N, ball_moment(0, a, 2))
            if derivative:
                np.fill_diagonal(D1, 1j * ball_moment(0, a, 3))
            return N, D1
        E = np.exp(1j * k * r)
        E *= V[None, :]
        D1 = E * (1j / FOUR_PI) if derivative else None
        E /= FOUR_PI * r
    np.fill_diagonal(E, ball_moment(k, a, 2))
    if derivative:
        np.fill_diagonal(D1, 1j * ball_moment(k, a, 3))
    return E, D1


def assemble_newton(domain: DiscreteDomain, kappa: complex = 0) -> KernelOperator:
    N, _ = _kernel_matrices(domain, kappa, derivative=False)
    N.setflags(write=False)
    return KernelOperator(N, domain.volumes, complex(kappa), "newton")


def assemble_derivative(domain: DiscreteDomain, kappa: complex = 0) -> KernelOperator:
    """N_k^(1): kernel (i / 4 pi) e^{i k |x - y|}, bounded, so no singular correction."""
    _, D1 = _kernel_matrices(domain, kappa, derivative=True)
    D1.setflags(write=False)
    return KernelOperator(D1, domain.volumes, complex(kappa), "derivative")


def assemble_characteristic(domain: DiscreteDomain, kappa: complex, eps=0.0) -> KernelOperator:
    """M_k(eps) = 1 - (1 - eps^2) k^2 N_{eps k}."""
    e = _eps_value(eps)
    n = domain.n
    if kappa == 0:
        M = np.eye(n, dtype=complex)
    else:
        N, _ = _kernel_matrices(domain, e * kappa, derivative=False)
        M = N * (-(1.0 - e * e) * kappa * kappa)
        M[np.diag_indices(n)] += 1.0
    M.setflags(write=False)
    return KernelOperator(M, domain.volumes, complex(kappa), "characteristic", e)


def characteristic_and_derivative(domain, kappa, eps):
    """Return (M_k(eps), dM/dk) as plain arrays.

    dM/dk = -2 (1 - eps^2) k N_{eps k} - (1 - eps^2) k^2 eps N^(1)_{eps k}.
    """
    e = _eps_value(eps)
    c = 1.0 - e * e
    N, D1 = _kernel_matrices(domain, e * kappa, derivative=True)
    M = N * (-c * kappa * kappa)
    M[np.diag_indices(domain.n)] += 1.0
    dM = N * (-2.0 * c * kappa)
    dM -= D1 * (c * kappa * kappa * e)
    return M, dM


def weighted_matrix(op: KernelOperator) -> np.ndarray:
    """D^{1/2} A D^{-1/2}: the operator's matrix in a weighted-orthonormal basis."""
    s = np.sqrt(op.weights)
    return op.entries * (s[:, None] / s[None, :])


def weighted_norm(op: KernelOperator) -> float:
    """Operator 2-norm in the volume-weighted inner product."""
    return float(np.linalg.norm(weighted_matrix(op), 2))


def newton_difference_bound(domain: DiscreteDomain, kappa: complex, eps: float) -> float:
    """Bound on ||N_{eps k} - N_0|| used in the localization argument.

    Stated with the factor (|Omega| / 4 pi)^{1/2}; it dominates the exact
    Hilbert-Schmidt estimate |Omega| / 4 pi only while |Omega| <= 4 pi.
    """
    return float(np.sqrt(domain.total_volume / FOUR_PI) * eps * abs(kappa)
                 * np.exp(eps * abs(np.imag(kappa)) * domain.diameter))


def derivative_norm_bound(domain: DiscreteDomain, kappa: complex) -> float:
    return float(np.sqrt(domain.total_volume / FOUR_PI)
                 * np.exp(abs(np.imag(kappa)) * domain.diameter))


class LatticeNewton:
    """Matrix-free N_k on a lattice domain, applied by zero-padded FFT convolution.

    Every cell has the same volume, so the weighted matrix is the plain
    matrix, symmetric (complex symmetric for k != 0).
    """

    def __init__(self, domain: DiscreteDomain, kappa: complex = 0):
        if not domain.is_lattice:
            raise PreconditionError("LatticeNewton needs a domain on a uniform lattice")
        self.domain = domain
        self.kappa = complex(kappa)
        self.shape = tuple(domain.lattice_shape)
        self.n = domain.n
        self.index = domain.lattice_index
        h = domain.sides[0]
        V = float(domain.volumes[0])
        a = float(domain.eq_radii[0])
        axes = []
        for m, step in zip(self.shape, h):
            k = np.arange(2 * m)
            axes.append(np.where(k < m, k, k - 2 * m) * step)
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        r = np.sqrt(X * X + Y * Y + Z * Z)
        r[0, 0, 0] = 1.0
        ker = green(kappa, r) * V
        ker[0, 0, 0] = ball_moment(kappa, a, 2)
        self.real = kappa == 0
        self._pad = tuple(2 * m for m in self.shape)
        self._kf = rfftn(ker.real) if self.real else fftn(ker)
        self.dtype = np.float64 if self.real else np.complex128

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x).reshape(-1)
        if self.real and np.iscomplexobj(x):
            return self.matvec(x.real) + 1j * self.matvec(x.imag)
        f = np.zeros(self._pad, dtype=self.dtype)
        sub = np.zeros(self.shape, dtype=f.dtype)
        sub.reshape(-1)[self.index] = x
        f[: self.shape[0], : self.shape[1], : self.shape[2]] = sub
        if self.real:
            y = irfftn(rfftn(f) * self._kf, s=self._pad)
        else:
            y = ifftn(fftn(f) * self._kf)
        y = y[: self.shape[0], : self.shape[1], : self.shape[2]]
        return np.ascontiguousarray(y).reshape(-1)[self.index]

    def aslinearoperator(self):
        from scipy.sparse.linalg import LinearOperator

        return LinearOperator((self.n, self.n), matvec=self.matvec, dtype=self.dtype)


_MAGIC = b"KERNOP01"
_KINDS = {"newton": 0, "derivative": 1, "characteristic": 2}
_HEADER = struct.Struct("<8sQddB7xd")


def save_operator(op: KernelOperator, path) -> None:
    """Binary dump: header (magic, n, kappa re/im, kind, eps), then
    row-major complex entries and the n cell volumes, little-endian f64."""
    header = _HEADER.pack(_MAGIC, op.n, op.kappa.real, op.kappa.imag, _KINDS[op.kind], op.eps)
    body = np.ascontiguousarray(op.entries, dtype="<c16").tobytes()
    tail = np.ascontiguousarray(op.weights, dtype="<f8").tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + body + tail)
    tmp.replace(path)


def load_operator(path) -> KernelOperator:
    data = Path(path).read_bytes()
    magic, n, kre, kim, kind, eps = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ConfigurationError(f"{path}: not a kernel operator dump")
    off = _HEADER.size
    entries = np.frombuffer(data, dtype="<c16", count=n * n, offset=off).reshape(n, n)
    weights = np.frombuffer(data, dtype="<f8", count=n, offset=off + 16 * n * n)
    name = {v: k for k, v in _KINDS.items()}[kind]
    if name != "characteristic" and not np.any(entries.imag):
        entries = entries.real
    return KernelOperator(entries.copy(), weights.copy(), complex(kre, kim), name, eps)
