"""Deterministic oracle: vorticity-form Navier-Stokes on T^2 and exact solutions.

The solver integrates

    w_t = -(u . grad) w + eta * Laplacian(w),   u = Biot-Savart(w)

with a Lawson (integrating-factor) RK4 scheme, so the viscous part is
treated exactly and only the advective term carries time-stepping error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, ConfigurationError
from .spectral import (
    TWO_PI,
    SpectralScalarField,
    SpectralVectorField,
    _from_grid,
    _hermitize,
    _project_coeffs,
    _to_grid,
    curl,
    dealiased_size,
    energy,
    wavenumbers,
)


@dataclass
class VorticityState:
    t: float
    omega: SpectralScalarField

    @property
    def K(self):
        return self.omega.K

    @classmethod
    def from_velocity(cls, u, t=0.0):
        return cls(t, curl(u))

    def velocity(self):
        return velocity_from_vorticity(self.omega)


def _biot_savart(w):
    K = (w.shape[-1] - 1) // 2
    k1, k2 = wavenumbers(K)
    ksq = (k1 * k1 + k2 * k2).astype(float)
    ksq[K, K] = 1.0
    psi = w / (TWO_PI ** 2 * ksq)
    psi[..., K, K] = 0.0
    # u = (d2 psi, -d1 psi) with -Laplacian(psi) = w
    return np.stack([1j * TWO_PI * k2 * psi, -1j * TWO_PI * k1 * psi], axis=-3)


def velocity_from_vorticity(omega):
    """Zero-mean, divergence-free velocity whose curl is ``omega``."""
    w0 = omega.coeffs[omega.K, omega.K]
    if abs(w0) > 0.0:
        raise ConfigurationError(f"vorticity has nonzero mean {w0!r}; no periodic velocity exists")
    return SpectralVectorField(_biot_savart(omega.coeffs), check=False)


def _advection_rhs(w, M):
    """-(u . grad) w for a scalar vorticity, alias-free on the retained modes."""
    K = (w.shape[-1] - 1) // 2
    k1, k2 = wavenumbers(K)
    ug = _to_grid(_biot_savart(w), M)
    dg = _to_grid(np.stack([1j * TWO_PI * k1 * w, 1j * TWO_PI * k2 * w]), M)
    rhs = -_from_grid(ug[0] * dg[0] + ug[1] * dg[1], K)
    # mean of u.grad(w) = div(u w) vanishes identically
    rhs[K, K] = 0.0
    return rhs


def ns_reference_step(state, eta, dt):
    """One integrating-factor RK4 step of the vorticity equation."""
    w = state.omega.coeffs
    K = state.K
    M = dealiased_size(K, K, K)
    k1, k2 = wavenumbers(K)
    decay = -(TWO_PI ** 2) * (k1 * k1 + k2 * k2) * eta
    E = np.exp(decay * dt)
    E2 = np.exp(decay * dt / 2)

    # overflow surfaces as non-finite output, checked below
    with np.errstate(over="ignore", invalid="ignore"):
        a = _advection_rhs(w, M)
        b = _advection_rhs(E2 * (w + 0.5 * dt * a), M)
        c = _advection_rhs(E2 * w + 0.5 * dt * b, M)
        d = _advection_rhs(E * w + dt * E2 * c, M)
        new = E * w + (dt / 6.0) * (E * a + 2.0 * E2 * (b + c) + d)
        new = _hermitize(new)
    t = state.t + dt
    if not np.all(np.isfinite(new)):
        raise BlowUpError(f"reference solver blew up at t={t:g}", t=t)
    return VorticityState(t, SpectralScalarField(new, check=False))


def integrate_reference(u0, eta, dt, n_steps):
    """Velocity after ``n_steps`` reference steps from velocity ``u0``."""
    state = VorticityState.from_velocity(u0)
    for _ in range(n_steps):
        state = ns_reference_step(state, eta, dt)
    return state


def taylor_green(t, eta, K):
    """Exact decaying Taylor-Green vortex

        u = (sin 2 pi x cos 2 pi y, -cos 2 pi x sin 2 pi y) exp(-8 pi^2 eta t).
    """
    if K < 1:
        raise ConfigurationError("Taylor-Green needs truncation >= 1")
    a = 0.25 * np.exp(-2.0 * TWO_PI ** 2 * eta * t)
    return SpectralVectorField.from_modes(K, {
        (1, 1): (-1j * a, 1j * a),
        (1, -1): (-1j * a, -1j * a),
    })


def random_smooth(K, seed=0, slope=-3.0, energy_target=0.25, k_max=None):
    """Random divergence-free field with shell spectrum ~ |k|**slope.

    Modes with ``1 <= |k| <= k_max`` (default ``K // 2``) get Gaussian stream
    function coefficients; the result is rescaled to ``energy_target``.
    """
    rng = np.random.default_rng(seed)
    k_max = max(1, K // 2) if k_max is None else k_max
    k1, k2 = wavenumbers(K)
    kk = np.hypot(k1, k2)
    active = (kk >= 1) & (kk <= k_max)
    # shell energy |k| |u_k|^2 ~ |k|^slope and |u_k| = 2 pi |k| |psi_k|
    amp = np.zeros_like(kk)
    amp[active] = kk[active] ** ((slope - 1) / 2) / (TWO_PI * kk[active])
    psi = amp * (rng.standard_normal(kk.shape) + 1j * rng.standard_normal(kk.shape))
    psi = _hermitize(psi)
    u = np.stack([1j * TWO_PI * k2 * psi, -1j * TWO_PI * k1 * psi])
    u = _project_coeffs(u)
    f = SpectralVectorField(u, check=False)
    return f * float(np.sqrt(energy_target / energy(f)))


def l2_error(a, b):
    """L2 distance between two fields by Parseval."""
    if a.K != b.K:
        raise ConfigurationError(f"truncation mismatch: {a.K} vs {b.K}")
    return float(np.linalg.norm(a.coeffs - b.coeffs))
