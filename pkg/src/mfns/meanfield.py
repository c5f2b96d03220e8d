"""Interacting-particle integration of the mean-field stochastic equation

    d xi = ( -P (u . grad) xi - eta grad div xi + (c_K nu^2 / 2) Laplacian xi ) dt
           - nu sum_a (X_a . grad) xi dW^a,            u = E[xi],

written above in Ito form.  ``N`` particles start at ``u0``, each driven by
its own noise, and are coupled only through their empirical mean.  With the
canonical ``nu = sqrt(2 eta / c_K)`` the mean obeys incompressible
Navier-Stokes with viscosity ``eta``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import BlowUpError, ConfigurationError
from .noise import build_basis
from .reference import VorticityState, ns_reference_step, random_smooth, taylor_green
from .rng import particle_generators
from .spectral import (
    TWO_PI,
    SpectralVectorField,
    _from_grid,
    _grad_grid,
    _project_coeffs,
    _to_grid,
    _transport,
    curl,
    dealiased_size,
    energy,
    enstrophy,
    helmholtz_project,
    wavenumbers,
)

log = logging.getLogger(__name__)

SCHEMES = ("ito-euler", "strat-heun")


@dataclass(frozen=True)
class SimConfig:
    """Physical and numerical parameters of one ensemble run.

    ``ic`` is ``taylor-green``, ``random-smooth[:seed[:slope[:energy]]]`` or
    ``file:<path>`` (an MFNS snapshot).  ``nu_override`` replaces the
    canonical noise amplitude; it exists for deterministic (``nu = 0``) runs.
    """

    eta: float = 0.02
    dt: float = 1e-3
    T: float = 0.25
    N: int = 64
    k_field: int = 8
    k_noise: int = 2
    scheme: str = "ito-euler"
    seed: int = 0
    ic: str = "taylor-green"
    nu_override: Optional[float] = None

    def __post_init__(self):
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise ConfigurationError(f"eta must be finite and >= 0, got {self.eta}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not (self.T >= self.dt):
            raise ConfigurationError(f"T={self.T} must be >= dt={self.dt}")
        if abs(self.n_steps * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigurationError(f"T={self.T} is not a whole number of steps dt={self.dt}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"N must be a positive integer, got {self.N}")
        if not (1 <= self.k_noise <= self.k_field):
            raise ConfigurationError(
                f"need 1 <= k_noise <= k_field, got k_noise={self.k_noise}, k_field={self.k_field}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")
        if self.nu_override is not None and not (self.nu_override >= 0 and math.isfinite(self.nu_override)):
            raise ConfigurationError(f"nu_override must be finite and >= 0, got {self.nu_override}")
        if self.nu_override is None:
            c = self.basis.c_K
            if abs(c * self.nu ** 2 / 2 - self.eta) > 8 * np.finfo(float).eps * self.eta:
                raise ConfigurationError("canonical nu does not reproduce eta")  # pragma: no cover

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @cached_property
    def basis(self):
        return build_basis(self.k_noise)

    @property
    def nu(self):
        if self.nu_override is not None:
            return float(self.nu_override)
        return math.sqrt(2.0 * self.eta / self.basis.c_K)

    @property
    def effective_viscosity(self):
        """Viscosity of the Navier-Stokes equation the ensemble mean follows."""
        return self.basis.c_K * self.nu ** 2 / 2

    def replace(self, **changes):
        return replace(self, **changes)

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


@dataclass
class EnsembleState:
    """Particle stack ``xi`` of shape ``(N, 2, 2K+1, 2K+1)`` at time ``t``."""

    t: float
    xi: np.ndarray
    rngs: list
    step: int = 0

    @property
    def N(self):
        return self.xi.shape[0]

    @property
    def K(self):
        return (self.xi.shape[-1] - 1) // 2

    @property
    def particles(self):
        return [SpectralVectorField(p, check=False) for p in self.xi]

    def mean(self):
        return empirical_mean(self)


@dataclass
class DiagnosticsRecord:
    t: float
    energy_mean: float
    enstrophy_mean: float
    max_mode_mean_div: float
    mean_pm_norm: float
    l2_err_ref: float = float("nan")

    def row(self):
        return [self.t, self.energy_mean, self.enstrophy_mean, self.max_mode_mean_div,
                self.mean_pm_norm, self.l2_err_ref]


CSV_HEADER = ["t", "energy_mean", "enstrophy_mean", "max_mode_mean_div", "mean_pm_norm", "l2_err_ref"]


# ---- drift operators ----


def _grad_div(xi):
    K = (xi.shape[-1] - 1) // 2
    k1, k2 = wavenumbers(K)
    D1, D2 = 1j * TWO_PI * k1, 1j * TWO_PI * k2
    div = D1 * xi[..., 0, :, :] + D2 * xi[..., 1, :, :]
    return np.stack([D1 * div, D2 * div], axis=-3)


def _laplacian(xi):
    K = (xi.shape[-1] - 1) // 2
    k1, k2 = wavenumbers(K)
    return -(TWO_PI ** 2) * (k1 * k1 + k2 * k2) * xi


def _strat_from_transport(adv, xi, eta):
    return -_project_coeffs(adv) - eta * _grad_div(xi)


def drift_strat(xi, u, eta):
    """Stratonovich drift ``-P (u . grad) xi - eta grad div xi``."""
    if u.K != xi.K:
        raise ConfigurationError(f"truncation mismatch: {u.K} vs {xi.K}")
    M = dealiased_size(xi.K, xi.K, xi.K)
    adv = _from_grid(_transport(_to_grid(u.coeffs, M), _grad_grid(xi.coeffs, M)), xi.K)
    return SpectralVectorField(_strat_from_transport(adv, xi.coeffs, eta), check=False)


def drift_ito(xi, u, eta, nu, c_K):
    """Ito drift: the Stratonovich drift plus ``(c_K nu^2 / 2) Laplacian xi``."""
    s = drift_strat(xi, u, eta)
    return SpectralVectorField(s.coeffs + (c_K * nu ** 2 / 2) * _laplacian(xi.coeffs), check=False)


# ---- ensemble machinery ----


def tree_sum(x):
    """Sum over axis 0 by pairwise reduction in a fixed order.

    Pairs ``i`` and ``i + h`` at every level; the order depends only on the
    number of terms.
    """
    s = np.asarray(x)
    while s.shape[0] > 1:
        h = s.shape[0] // 2
        paired = s[:h] + s[h:2 * h]
        s = np.concatenate([paired, s[2 * h:]]) if s.shape[0] % 2 else paired
    return s[0].copy()


def tree_mean(x):
    return tree_sum(x) / x.shape[0]


def empirical_mean(state):
    return SpectralVectorField(tree_mean(state.xi), check=False)


def initial_condition(config):
    """Divergence-free ``u0`` at truncation ``k_field``."""
    K = config.k_field
    kind, _, arg = config.ic.partition(":")
    if kind == "taylor-green":
        u0 = taylor_green(0.0, config.eta, K)
    elif kind == "random-smooth":
        parts = [p for p in arg.split(":") if p]
        try:
            seed = int(parts[0]) if parts else 0
            slope = float(parts[1]) if len(parts) > 1 else -3.0
            target = float(parts[2]) if len(parts) > 2 else 0.25
        except ValueError:
            raise ConfigurationError(f"bad random-smooth spec {config.ic!r}") from None
        u0 = random_smooth(K, seed=seed, slope=slope, energy_target=target)
    elif kind == "file":
        from .io import read_snapshot

        _, u0 = read_snapshot(arg)
        if u0.K != K:
            raise ConfigurationError(f"initial condition file has K={u0.K}, config has k_field={K}")
    else:
        raise ConfigurationError(f"unknown initial condition {config.ic!r}")
    return helmholtz_project(u0)


def init_ensemble(config, u0=None):
    u0 = initial_condition(config) if u0 is None else u0
    xi = np.broadcast_to(u0.coeffs, (config.N,) + u0.coeffs.shape).copy()
    return EnsembleState(0.0, xi, particle_generators(config.seed, config.N))


class _Stepper:
    """Precomputed grids and symbols for one configuration."""

    def __init__(self, config):
        self.config = config
        self.K = config.k_field
        self.M = dealiased_size(self.K, self.K, self.K)
        self.basis = config.basis
        self.Xg = self.basis.grid(self.M)
        self.nu = config.nu
        self.eta = config.eta
        self.ito_coef = self.basis.c_K * self.nu ** 2 / 2

    def increments(self, state):
        sd = math.sqrt(self.config.dt)
        n = len(self.basis)
        return np.stack([sd * g.standard_normal(n) for g in state.rngs])

    def noise_grid(self, dW):
        w = np.zeros((dW.shape[0], 2, self.M, self.M))
        for a in range(dW.shape[1]):
            w += dW[:, a, None, None, None] * self.Xg[a]
        return w

    def _terms(self, xi, ug, wg):
        """Stratonovich drift and noise increment for a particle block."""
        dg = _grad_grid(xi, self.M)
        drift = _strat_from_transport(_from_grid(_transport(ug, dg), self.K), xi, self.eta)
        noise = -self.nu * _from_grid(_transport(wg, dg), self.K)
        return drift, noise

    def euler(self, xi, ug, dW):
        wg = self.noise_grid(dW)
        drift, noise = self._terms(xi, ug, wg)
        return xi + self.config.dt * (drift + self.ito_coef * _laplacian(xi)) + noise

    def predictor(self, xi, ug, dW):
        wg = self.noise_grid(dW)
        drift, noise = self._terms(xi, ug, wg)
        return xi + self.config.dt * drift + noise, drift, noise

    def corrector(self, xi, pred, drift, noise, ug_pred, dW):
        drift2, noise2 = self._terms(pred, ug_pred, self.noise_grid(dW))
        return xi + (0.5 * self.config.dt) * (drift + drift2) + 0.5 * (noise + noise2)


def _chunks(n, workers):
    workers = max(1, min(int(workers), n))
    edges = np.linspace(0, n, workers + 1).round().astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _blockwise(fn, spans, *arrays):
    """Apply ``fn`` to matching particle slices of ``arrays``; concatenate."""
    def one(ab):
        return fn(*(a[ab[0]:ab[1]] for a in arrays))

    if len(spans) == 1:
        return fn(*arrays)
    with ThreadPoolExecutor(len(spans)) as pool:
        parts = list(pool.map(one, spans))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


def step(state, config, workers=1, increments=None, _stepper=None):
    """Advance every particle by one step of ``config.scheme``.

    Increments are drawn serially from the particle streams and means are
    tree-reduced, so the result is bitwise independent of ``workers``.
    Euler-Maruyama uses the mean at the start of the step.  The Heun
    corrector uses the mean of the predicted ensemble; with the mean frozen
    instead, the scheme would be only first order in the mean-field
    coupling even without noise.
    """
    st = _stepper or _Stepper(config)
    with np.errstate(over="ignore", invalid="ignore"):
        new = _advance(state, config, workers, increments, st)
    n = state.step + 1
    t = n * config.dt
    bad = ~np.all(np.isfinite(new.reshape(state.N, -1)), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise BlowUpError(f"non-finite field at t={t:g} in particle {i}", t=t, particle=i)
    return EnsembleState(t, new, state.rngs, n)


def _advance(state, config, workers, increments, st):
    ug = _to_grid(tree_mean(state.xi), st.M)
    dW = st.increments(state) if increments is None else np.asarray(increments, dtype=float)
    if dW.shape != (state.N, len(st.basis)):
        raise ConfigurationError(f"increments must have shape {(state.N, len(st.basis))}, got {dW.shape}")
    spans = _chunks(state.N, workers)
    if config.scheme == "ito-euler":
        new = _blockwise(lambda x, w: st.euler(x, ug, w), spans, state.xi, dW)
    else:
        pred, drift, noise = _blockwise(lambda x, w: st.predictor(x, ug, w), spans, state.xi, dW)
        ug_pred = _to_grid(tree_mean(pred), st.M)
        new = _blockwise(lambda x, p, d, z, w: st.corrector(x, p, d, z, ug_pred, w),
                         spans, state.xi, pred, drift, noise, dW)
    return new


def step_em_ito(state, config, **kw):
    return step(state, config.replace(scheme="ito-euler"), **kw)


def step_heun_strat(state, config, **kw):
    return step(state, config.replace(scheme="strat-heun"), **kw)


# ---- diagnostics ----


def divergence_coeffs(xi):
    K = (xi.shape[-1] - 1) // 2
    k1, k2 = wavenumbers(K)
    return 1j * TWO_PI * (k1 * xi[..., 0, :, :] + k2 * xi[..., 1, :, :])


def divergence_statistics(state):
    """Per-mode ensemble mean and sample sd of the divergence coefficients."""
    d = divergence_coeffs(state.xi)
    mean = tree_mean(d)
    if state.N < 2:
        return mean, np.zeros(mean.shape)
    sd = np.sqrt(tree_sum(np.abs(d - mean) ** 2) / (state.N - 1))
    return mean, sd


def divergence_check(state, n_sd=4.0):
    """True when every mode satisfies ``|mean div| <= n_sd * sd / sqrt(N)``."""
    mean, sd = divergence_statistics(state)
    return bool(np.all(np.abs(mean) <= n_sd * sd / math.sqrt(state.N)))


def diagnose(state, config, reference=None):
    """Diagnostics of ``state``; overflow in any entry counts as a blow-up."""
    with np.errstate(over="ignore", invalid="ignore"):
        u = SpectralVectorField(tree_mean(state.xi), check=False)
        div = divergence_coeffs(state.xi)
        pm = config.eta * np.sqrt(np.sum(np.abs(div) ** 2, axis=(-2, -1)))
        err = float("nan") if reference is None else float(np.linalg.norm(u.coeffs - reference.coeffs))
        rec = DiagnosticsRecord(
            t=state.t,
            energy_mean=energy(u),
            enstrophy_mean=enstrophy(u),
            max_mode_mean_div=float(np.max(np.abs(tree_mean(div)))),
            mean_pm_norm=float(tree_mean(pm)),
            l2_err_ref=err,
        )
    vals = rec.row()[:5] + ([] if reference is None else [err])
    if not all(math.isfinite(v) for v in vals):
        i = int(np.argmax(np.max(np.abs(state.xi.reshape(state.N, -1)), axis=1)))
        raise BlowUpError(f"non-finite diagnostics at t={state.t:g} (largest particle {i})",
                          t=state.t, particle=i)
    return rec


@dataclass
class RunResult:
    config: SimConfig
    diagnostics: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (t, mean field)
    state: Optional[EnsembleState] = None

    @property
    def mean(self):
        return self.state.mean()


class _Reference:
    """Comparison target stepped alongside the ensemble.

    Taylor-Green initial data use the exact solution; anything else uses the
    vorticity solver at the ensemble's effective viscosity.
    """

    def __init__(self, config, u0):
        self.config = config
        self.eta = config.effective_viscosity
        self.exact = config.ic == "taylor-green"
        self.state = None if self.exact else VorticityState.from_velocity(u0)

    def advance(self):
        if not self.exact:
            self.state = ns_reference_step(self.state, self.eta, self.config.dt)

    def at(self, t):
        if self.exact:
            return taylor_green(t, self.eta, self.config.k_field)
        return self.state.velocity()


def run(config, snapshot_every=0, workers=1, reference=True, callback=None):
    """Integrate the ensemble from ``u0`` to ``config.T``.

    Diagnostics are recorded at every step (including ``t = 0``); the mean
    field is snapshotted every ``snapshot_every`` steps and at the final time.
    ``callback(state)`` is invoked after every step.
    """
    u0 = initial_condition(config)
    state = init_ensemble(config, u0)
    ref = _Reference(config, u0) if reference else None
    st = _Stepper(config)
    result = RunResult(config)
    result.diagnostics.append(diagnose(state, config, ref.at(0.0) if ref else None))
    if snapshot_every:
        result.snapshots.append((0.0, state.mean()))
    log.info("run: N=%d K=%d K_W=%d scheme=%s steps=%d", config.N, config.k_field,
             config.k_noise, config.scheme, config.n_steps)
    for n in range(1, config.n_steps + 1):
        state = step(state, config, workers=workers, _stepper=st)
        if ref:
            ref.advance()
        result.diagnostics.append(diagnose(state, config, ref.at(state.t) if ref else None))
        if callback is not None:
            callback(state)
        if snapshot_every and (n % snapshot_every == 0 or n == config.n_steps):
            result.snapshots.append((state.t, state.mean()))
    if not snapshot_every:
        result.snapshots.append((state.t, state.mean()))
    result.state = state
    return result
