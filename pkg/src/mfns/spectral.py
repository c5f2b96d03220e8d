"""Truncated Fourier fields on the flat unit torus T^2 = R^2 / Z^2.

A field of truncation ``K`` stores one complex coefficient (per component) for
every wavevector in the square ``{|k1|, |k2| <= K}``.  Coefficient arrays are
indexed ``c[..., k1 + K, k2 + K]``, so C order over the last two axes is the
lexicographic wavevector order.  The physical value of a field is

    f(x) = sum_k c_k exp(2 pi i k.x)

and Hermitian symmetry ``c_{-k} = conj(c_k)`` keeps it real.  All the 2 pi
factors live in the derivative operators.

The array-level helpers (``_to_grid``, ``_from_grid``, ``_advect_coeffs``)
accept arbitrary leading batch axes; the ensemble integrator uses them
directly on stacks of particles.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, ConsistencyError, DataError

TWO_PI = 2.0 * np.pi

# imaginary residue tolerated by point evaluation
EVAL_IMAG_TOL = 1e-10


def wavenumbers(K):
    """Integer mode grids ``(k1, k2)`` of shape ``(2K+1, 2K+1)``."""
    r = np.arange(-K, K + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    return k1, k2


def is_half_lattice(k):
    """Canonical representative of the pair {k, -k}."""
    k1, k2 = k
    return k1 > 0 or (k1 == 0 and k2 > 0)


def fast_size(n):
    """Smallest 5-smooth integer >= n (cheap FFT length)."""
    m = max(int(n), 1)
    while True:
        r = m
        for p in (2, 3, 5):
            while r % p == 0:
                r //= p
        if r == 1:
            return m
        m += 1


def dealiased_size(k_a, k_b, k_out):
    """Grid size on which the product of two fields of truncation ``k_a`` and
    ``k_b`` is alias-free on every retained mode ``|k| <= k_out``."""
    return fast_size(max(k_a + k_b + k_out + 1, 2 * max(k_a, k_b, k_out) + 2))


def _truncation_of(c):
    n = c.shape[-1]
    if c.shape[-2] != n or n % 2 != 1:
        raise ConfigurationError(f"coefficient array has bad mode shape {c.shape[-2:]}")
    return (n - 1) // 2


def _hermitize(c):
    # (a + conj b)/2 and (b + conj a)/2 are exact conjugates in IEEE arithmetic
    return 0.5 * (c + np.conj(c[..., ::-1, ::-1]))


def _resize(c, K_out):
    """Truncate or zero-pad a coefficient array to truncation ``K_out``."""
    K = _truncation_of(c)
    if K_out == K:
        return c.copy()
    if K_out < K:
        d = K - K_out
        return c[..., d:d + 2 * K_out + 1, d:d + 2 * K_out + 1].copy()
    out = np.zeros(c.shape[:-2] + (2 * K_out + 1, 2 * K_out + 1), dtype=complex)
    d = K_out - K
    out[..., d:d + 2 * K + 1, d:d + 2 * K + 1] = c
    return out


def _to_grid(c, M):
    K = _truncation_of(c)
    if M < 2 * K + 2:
        raise ConfigurationError(f"resolution {M} too small for truncation {K} (need >= {2 * K + 2})")
    half = np.zeros(c.shape[:-2] + (M, M // 2 + 1), dtype=complex)
    rows = np.arange(-K, K + 1) % M
    half[..., rows, : K + 1] = c[..., :, K:]
    return np.fft.irfft2(half, s=(M, M), axes=(-2, -1), norm="forward")


def _from_grid(g, K):
    M = g.shape[-1]
    if g.shape[-2] != M:
        raise ConfigurationError("physical samples must live on a square grid")
    if M < 2 * K + 1:
        raise ConfigurationError(f"resolution {M} too small for truncation {K}")
    r = np.fft.rfft2(g, axes=(-2, -1), norm="forward")
    rows = np.arange(-K, K + 1) % M
    c = np.zeros(g.shape[:-2] + (2 * K + 1, 2 * K + 1), dtype=complex)
    c[..., :, K:] = r[..., rows, : K + 1]
    c[..., :, :K] = np.conj(c[..., ::-1, :K:-1])
    return _hermitize(c)


def _derivative_symbols(K):
    k1, k2 = wavenumbers(K)
    return 1j * TWO_PI * k1, 1j * TWO_PI * k2


def _grad_grid(xi, M):
    """Physical samples of d xi_c / d x_d, shape (..., 2[c], 2[d], M, M)."""
    D1, D2 = _derivative_symbols(_truncation_of(xi))
    d = np.stack([xi * D1, xi * D2], axis=-3)
    return _to_grid(d, M)


def _transport(ug, dg):
    # (u.grad) xi on the grid; summation order over d is fixed
    return ug[..., 0:1, :, :] * dg[..., :, 0, :, :] + ug[..., 1:2, :, :] * dg[..., :, 1, :, :]


def _advect_coeffs(u, xi, K_out=None, M=None):
    """Alias-free ``(u . grad) xi`` truncated to ``K_out`` (default: xi's)."""
    Ku, Kx = _truncation_of(u), _truncation_of(xi)
    if K_out is None:
        K_out = Kx
    if M is None:
        M = dealiased_size(Ku, Kx, K_out)
    prod = _transport(_to_grid(u, M), _grad_grid(xi, M))
    return _from_grid(prod, K_out)


def _project_coeffs(c):
    K = _truncation_of(c)
    k1, k2 = wavenumbers(K)
    ksq = (k1 * k1 + k2 * k2).astype(float)
    ksq[K, K] = 1.0
    # component along k_perp = (-k2, k1)
    t = (-k2 * c[..., 0, :, :] + k1 * c[..., 1, :, :]) / ksq
    out = np.stack([-k2 * t, k1 * t], axis=-3)
    out[..., :, K, K] = c[..., :, K, K]
    return out


class _Field:
    """Shared storage and arithmetic for scalar and vector spectral fields."""

    __slots__ = ("coeffs", "K")
    _lead = 0

    def __init__(self, coeffs, check=True):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != self._lead + 2:
            raise ConfigurationError(
                f"{type(self).__name__} needs {self._lead + 2}-d coefficients, got shape {c.shape}")
        if self._lead and c.shape[0] != 2:
            raise ConfigurationError("vector fields have exactly two components")
        self.K = _truncation_of(c)
        if check and not np.all(np.isfinite(c)):
            raise DataError("non-finite Fourier coefficients")
        self.coeffs = c

    @classmethod
    def zeros(cls, K):
        return cls(np.zeros((2,) * cls._lead + (2 * K + 1, 2 * K + 1), dtype=complex))

    @classmethod
    def from_modes(cls, K, modes):
        """Build a real field from ``{(k1, k2): coefficient}``.

        The Hermitian partner ``-k`` of every listed mode is filled in
        automatically; listing both ``k`` and ``-k`` is an error.
        """
        f = cls.zeros(K)
        seen = set()
        for (k1, k2), v in modes.items():
            if max(abs(k1), abs(k2)) > K:
                raise ConfigurationError(f"mode {(k1, k2)} outside truncation {K}")
            if (-k1, -k2) in seen:
                raise ConfigurationError(f"mode {(k1, k2)} given together with its partner")
            seen.add((k1, k2))
            v = np.asarray(v, dtype=complex)
            if (k1, k2) == (0, 0):
                f.coeffs[..., K, K] = v.real
            else:
                f.coeffs[..., k1 + K, k2 + K] = v
                f.coeffs[..., -k1 + K, -k2 + K] = np.conj(v)
        return f

    def coefficient(self, k):
        k1, k2 = k
        if max(abs(k1), abs(k2)) > self.K:
            raise ConfigurationError(f"mode {k} outside truncation {self.K}")
        return self.coeffs[..., k1 + self.K, k2 + self.K]

    def hermitian_defect(self):
        c = self.coeffs
        return float(np.max(np.abs(c - np.conj(c[..., ::-1, ::-1])), initial=0.0))

    def is_hermitian(self, tol=0.0):
        return self.hermitian_defect() <= tol

    def truncate(self, K):
        """Resize to truncation ``K`` (drops or zero-pads modes)."""
        return type(self)(_resize(self.coeffs, K), check=False)

    def copy(self):
        return type(self)(self.coeffs.copy(), check=False)

    def _same(self, other):
        if not isinstance(other, type(self)):
            return NotImplemented
        if other.K != self.K:
            raise ConfigurationError(f"truncation mismatch: {self.K} vs {other.K}")
        return other

    def __add__(self, other):
        other = self._same(other)
        if other is NotImplemented:
            return other
        return type(self)(self.coeffs + other.coeffs, check=False)

    def __sub__(self, other):
        other = self._same(other)
        if other is NotImplemented:
            return other
        return type(self)(self.coeffs - other.coeffs, check=False)

    def __neg__(self):
        return type(self)(-self.coeffs, check=False)

    def __mul__(self, a):
        if not np.isscalar(a):
            return NotImplemented
        return type(self)(self.coeffs * a, check=False)

    __rmul__ = __mul__

    def __truediv__(self, a):
        if not np.isscalar(a):
            return NotImplemented
        return type(self)(self.coeffs / a, check=False)

    def __repr__(self):
        return f"{type(self).__name__}(K={self.K})"


class SpectralScalarField(_Field):
    """Real scalar field, coefficients shape ``(2K+1, 2K+1)``."""

    __slots__ = ()
    _lead = 0


class SpectralVectorField(_Field):
    """Real 2-vector field, coefficients shape ``(2, 2K+1, 2K+1)``."""

    __slots__ = ()
    _lead = 1


def _field_type(c):
    return SpectralVectorField if c.ndim == 3 else SpectralScalarField


def grid_points(resolution):
    """Uniform nodes ``j / resolution`` on one axis."""
    return np.arange(resolution) / resolution


def to_physical(f, resolution):
    """Sample a field on the ``resolution x resolution`` grid.

    Vector fields give shape ``(2, M, M)``, scalars ``(M, M)``; axis -2 runs
    along x1 and axis -1 along x2.
    """
    return _to_grid(f.coeffs, int(resolution))


def to_spectral(samples, K):
    """Fourier coefficients of uniform grid samples, truncated to ``K``."""
    g = np.asarray(samples)
    if np.iscomplexobj(g):
        raise DataError("physical samples must be real")
    g = g.astype(float)
    if not np.all(np.isfinite(g)):
        raise DataError("non-finite physical samples")
    if g.ndim == 3:
        if g.shape[0] != 2:
            raise ConfigurationError("vector samples need shape (2, M, M)")
        return SpectralVectorField(_from_grid(g, K), check=False)
    if g.ndim == 2:
        return SpectralScalarField(_from_grid(g, K), check=False)
    raise ConfigurationError(f"cannot interpret samples of shape {g.shape}")


def divergence(f):
    D1, D2 = _derivative_symbols(f.K)
    return SpectralScalarField(D1 * f.coeffs[0] + D2 * f.coeffs[1], check=False)


def grad(phi):
    D1, D2 = _derivative_symbols(phi.K)
    return SpectralVectorField(np.stack([D1 * phi.coeffs, D2 * phi.coeffs]), check=False)


def curl(f):
    """Scalar vorticity d1 f2 - d2 f1."""
    D1, D2 = _derivative_symbols(f.K)
    return SpectralScalarField(D1 * f.coeffs[1] - D2 * f.coeffs[0], check=False)


def laplacian(f):
    """Componentwise Laplacian; works for scalar and vector fields."""
    k1, k2 = wavenumbers(f.K)
    return type(f)(-(TWO_PI ** 2) * (k1 * k1 + k2 * k2) * f.coeffs, check=False)


def helmholtz_project(f):
    """Divergence-free part of ``f``; the mean (k = 0) mode passes through."""
    return SpectralVectorField(_project_coeffs(f.coeffs), check=False)


def gradient_potential(f):
    """Scalar ``phi`` with ``f = helmholtz_project(f) + grad(phi)``."""
    k1, k2 = wavenumbers(f.K)
    ksq = (k1 * k1 + k2 * k2).astype(float)
    ksq[f.K, f.K] = 1.0
    c = (k1 * f.coeffs[0] + k2 * f.coeffs[1]) / (1j * TWO_PI * ksq)
    c[f.K, f.K] = 0.0
    return SpectralScalarField(c, check=False)


def advect(u, xi):
    """Pseudo-spectral ``(u . grad) xi`` without aliasing error.

    Both fields must share a truncation; the product is formed on a grid of
    at least ``3K + 1`` nodes per axis and truncated back to ``K``.
    """
    if u.K != xi.K:
        raise ConfigurationError(f"advect: truncation mismatch {u.K} vs {xi.K}")
    return SpectralVectorField(_advect_coeffs(u.coeffs, xi.coeffs), check=False)


def evaluate_at(f, x):
    """Point value of a field at ``x`` in [0, 1)^2."""
    k1, k2 = wavenumbers(f.K)
    phase = np.exp(1j * TWO_PI * (k1 * x[0] + k2 * x[1]))
    val = np.sum(f.coeffs * phase, axis=(-2, -1))
    resid = np.max(np.abs(np.imag(val)))
    if resid > EVAL_IMAG_TOL:
        raise ConsistencyError(f"imaginary residue {resid:.3e} at x={tuple(x)}; field not Hermitian")
    return np.real(val)


def inner_product_l2(f, g):
    if f.K != g.K:
        raise ConfigurationError(f"truncation mismatch: {f.K} vs {g.K}")
    return float(np.real(np.vdot(g.coeffs, f.coeffs)))


def energy(f):
    """Kinetic energy 1/2 int |f|^2 over the unit torus."""
    return 0.5 * float(np.sum(np.abs(f.coeffs) ** 2))


def enstrophy(f):
    """1/2 int w^2 with w the scalar vorticity."""
    return 0.5 * float(np.sum(np.abs(curl(f).coeffs) ** 2))


def l2_norm(f):
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))


def random_vector_field(K, rng, support=None, scale=1.0):
    """Real vector field with i.i.d. Gaussian coefficients on ``|k|_inf <= support``.

    Used for property tests and defect checks, not as a physical initial
    condition (see ``reference.random_smooth`` for that).
    """
    support = K if support is None else support
    n = 2 * support + 1
    c = scale * (rng.standard_normal((2, n, n)) + 1j * rng.standard_normal((2, n, n)))
    c = _hermitize(_resize(c, K))
    return SpectralVectorField(c, check=False)


def random_scalar_field(K, rng, support=None, scale=1.0):
    support = K if support is None else support
    n = 2 * support + 1
    c = scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return SpectralScalarField(_hermitize(_resize(c, K)), check=False)
