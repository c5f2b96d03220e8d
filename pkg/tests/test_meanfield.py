"""Tests for the particle system, its drifts and its time steppers."""

import math

import numpy as np
import pytest

from conftest import TWO_PI, brute_advect
from mfns.errors import BlowUpError, ConfigurationError
from mfns.meanfield import (
    EnsembleState,
    SimConfig,
    divergence_check,
    divergence_coeffs,
    divergence_statistics,
    drift_ito,
    drift_strat,
    empirical_mean,
    init_ensemble,
    initial_condition,
    run,
    step,
    step_em_ito,
    step_heun_strat,
    tree_sum,
)
from mfns.reference import integrate_reference, l2_error, random_smooth, taylor_green
from mfns.rng import particle_generator, particle_generators, splitmix64, stream_key
from mfns.spectral import (
    SpectralScalarField,
    SpectralVectorField,
    divergence,
    energy,
    grad,
    helmholtz_project,
    l2_norm,
    laplacian,
    random_scalar_field,
    random_vector_field,
    wavenumbers,
)


def _project(c):
    # per-mode v - k (k.v)/|k|^2, written out independently of the package
    K = (c.shape[-1] - 1) // 2
    out = c.copy()
    for a in range(-K, K + 1):
        for b in range(-K, K + 1):
            if a == b == 0:
                continue
            v = c[:, a + K, b + K]
            k = np.array([a, b], float)
            out[:, a + K, b + K] = v - k * (k @ v) / (k @ k)
    return out


def _state(particles, seed=0):
    xi = np.stack([p.coeffs for p in particles])
    return EnsembleState(0.0, xi, particle_generators(seed, len(particles)))


class TestSimConfig:
    def test_defaults(self):
        c = SimConfig()
        assert c.n_steps == 250 and c.basis.c_K == 6

    @pytest.mark.parametrize("kw", [
        {"dt": 0.0}, {"dt": -1e-3}, {"T": 1e-4}, {"N": 0}, {"k_noise": 0},
        {"k_noise": 9}, {"scheme": "milstein"}, {"eta": -0.1}, {"T": 0.2505},
        {"seed": -1}, {"nu_override": -1.0}, {"eta": float("nan")},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            SimConfig(**kw)

    @pytest.mark.parametrize("K_W", [1, 2, 3])
    @pytest.mark.parametrize("eta", [0.02, 1e-3, 0.37])
    def test_canonical_nu(self, K_W, eta):
        c = SimConfig(eta=eta, k_noise=K_W)
        assert abs(c.basis.c_K * c.nu ** 2 / 2 - eta) <= 4 * np.finfo(float).eps * eta
        assert c.effective_viscosity == pytest.approx(eta, rel=1e-15)

    def test_override(self):
        c = SimConfig(nu_override=0.0)
        assert c.nu == 0.0 and c.effective_viscosity == 0.0

    def test_keys(self):
        assert SimConfig.keys() == ["eta", "dt", "T", "N", "k_field", "k_noise", "scheme",
                                    "seed", "ic", "nu_override"]


class TestInitialCondition:
    def test_taylor_green(self):
        u0 = initial_condition(SimConfig(k_field=4))
        assert np.array_equal(u0.coeffs, taylor_green(0, 0.02, 4).coeffs)

    def test_random_smooth_is_projected(self):
        u0 = initial_condition(SimConfig(k_field=6, ic="random-smooth:3:-2:0.1"))
        assert energy(u0) == pytest.approx(0.1, rel=1e-12)
        assert np.max(np.abs(divergence(u0).coeffs)) < 1e-13

    @pytest.mark.parametrize("ic", ["vortex", "random-smooth:x", "file:/no/such/file.mfns"])
    def test_bad(self, ic):
        with pytest.raises(ConfigurationError):
            initial_condition(SimConfig(ic=ic))

    def test_particles_start_equal(self):
        st = init_ensemble(SimConfig(N=5, k_field=4))
        assert all(np.array_equal(p.coeffs, st.xi[0]) for p in st.particles)


class TestDriftStrat:
    def test_div_free_no_velocity(self, rng):
        xi = helmholtz_project(random_vector_field(6, rng))
        d = drift_strat(xi, SpectralVectorField.zeros(6), 0.05)
        assert l2_norm(d) <= 1e-12 * l2_norm(xi)

    def test_gradient_no_velocity(self, rng):
        g = grad(random_scalar_field(6, rng))
        d = drift_strat(g, SpectralVectorField.zeros(6), 0.05)
        want = -0.05 * laplacian(g)
        assert l2_norm(d - want) <= 1e-13 * l2_norm(want)

    def test_taylor_green_self_advection_is_gradient(self):
        tg = taylor_green(0.0, 0.02, 8)
        d = drift_strat(tg, tg, 0.02)
        assert np.max(np.abs(d.coeffs)) <= 1e-13

    def test_matches_brute_force(self, rng):
        xi, u = random_vector_field(3, rng), random_vector_field(3, rng)
        eta = 0.1
        k1, k2 = wavenumbers(3)
        D = [1j * TWO_PI * k1, 1j * TWO_PI * k2]
        div = D[0] * xi.coeffs[0] + D[1] * xi.coeffs[1]
        want = -_project(brute_advect(u.coeffs, xi.coeffs)) - eta * np.stack([D[0] * div, D[1] * div])
        got = drift_strat(xi, u, eta).coeffs
        assert np.max(np.abs(got - want)) <= 1e-12 * np.max(np.abs(want))

    def test_mismatch(self):
        with pytest.raises(ConfigurationError):
            drift_strat(SpectralVectorField.zeros(2), SpectralVectorField.zeros(3), 0.1)


class TestDriftIto:
    def setup_method(self):
        self.cfg = SimConfig(eta=0.03, k_noise=2)
        self.args = (self.cfg.eta, self.cfg.nu, self.cfg.basis.c_K)

    def test_div_free_single_mode(self):
        xi = SpectralVectorField.from_modes(6, {(2, 1): (1.0, -2.0)})
        d = drift_ito(xi, SpectralVectorField.zeros(6), *self.args)
        want = -(TWO_PI ** 2) * 5 * 0.03 * xi.coeffs
        assert np.max(np.abs(d.coeffs - want)) <= 1e-13 * np.max(np.abs(want))

    def test_gradient_zero(self, rng):
        g = grad(random_scalar_field(6, rng))
        d = drift_ito(g, SpectralVectorField.zeros(6), *self.args)
        assert np.max(np.abs(d.coeffs)) <= 1e-13 * np.max(np.abs(laplacian(g).coeffs)) * 0.03

    def test_taylor_green(self):
        tg = taylor_green(0.0, 0.03, 8)
        d = drift_ito(tg, tg, *self.args)
        want = -8 * np.pi ** 2 * 0.03 * tg.coeffs
        assert np.max(np.abs(d.coeffs - want)) <= 1e-13

    def test_linear_in_xi(self, rng):
        u = random_vector_field(6, rng)
        x1, x2 = random_vector_field(6, rng), random_vector_field(6, rng)
        a, b = 1.3, -0.4
        lhs = drift_ito(a * x1 + b * x2, u, *self.args)
        rhs = a * drift_ito(x1, u, *self.args) + b * drift_ito(x2, u, *self.args)
        assert l2_norm(lhs - rhs) <= 1e-13 * l2_norm(rhs)

    def test_divergence_martingale(self, rng):
        for _ in range(10):
            xi, u = random_vector_field(8, rng), random_vector_field(8, rng)
            d = drift_ito(xi, u, *self.args)
            scale = TWO_PI * 8 * np.max(np.abs(d.coeffs))
            assert np.max(np.abs(divergence(d).coeffs)) <= 1e-12 * scale


class TestEmpiricalMean:
    def test_single(self, rng):
        f = random_vector_field(3, rng)
        assert np.array_equal(empirical_mean(_state([f])).coeffs, f.coeffs)

    def test_cancelling_pair(self, rng):
        f = random_vector_field(3, rng)
        assert np.all(empirical_mean(_state([f, -f])).coeffs == 0)

    def test_three(self, rng):
        fs = [random_vector_field(4, rng) for _ in range(3)]
        direct = (fs[0].coeffs + fs[1].coeffs + fs[2].coeffs) / 3
        assert np.max(np.abs(empirical_mean(_state(fs)).coeffs - direct)) <= 1e-15

    def test_tree_order(self):
        x = np.array([1e16, 1.0, -1e16, 1.0, 3.0])
        # ((x0 + x2) + (x1 + x3)) + x4
        assert tree_sum(x) == ((x[0] + x[2]) + (x[1] + x[3])) + x[4]


class TestEulerStep:
    def test_inviscid_reduction_per_step(self):
        cfg = SimConfig(nu_override=0.0, eta=0.0, N=1, k_field=4, dt=1e-3, T=1e-3,
                        ic="random-smooth:2:-3:0.25")
        u0 = initial_condition(cfg)
        new = step(init_ensemble(cfg, u0), cfg)
        want = u0.coeffs - cfg.dt * _project(brute_advect(u0.coeffs, u0.coeffs))
        assert np.max(np.abs(new.xi[0] - want)) <= 1e-12

    def test_zero_increments_add_drift(self, rng):
        cfg = SimConfig(N=3, k_field=5, eta=0.05)
        xs = [random_vector_field(5, rng) for _ in range(3)]
        st = _state(xs)
        new = step_em_ito(st, cfg, increments=np.zeros((3, len(cfg.basis))))
        u = empirical_mean(st)
        for i, x in enumerate(xs):
            want = x.coeffs + cfg.dt * drift_ito(x, u, cfg.eta, cfg.nu, cfg.basis.c_K).coeffs
            assert np.max(np.abs(new.xi[i] - want)) <= 1e-15 * np.max(np.abs(want))

    def test_increment_shape_checked(self):
        cfg = SimConfig(N=2, k_field=4)
        with pytest.raises(ConfigurationError):
            step(init_ensemble(cfg), cfg, increments=np.zeros((2, 3)))

    def test_noise_matches_apply_noise(self, rng):
        from mfns.noise import apply_noise

        cfg = SimConfig(N=2, k_field=5, eta=0.05)
        xs = [random_vector_field(5, rng) for _ in range(2)]
        dW = rng.standard_normal((2, len(cfg.basis))) * 0.03
        st = _state(xs)
        new = step_em_ito(st, cfg, increments=dW)
        base = step_em_ito(st, cfg, increments=np.zeros_like(dW))
        for i, x in enumerate(xs):
            want = apply_noise(cfg.basis, x, dW[i], cfg.nu).coeffs
            assert np.max(np.abs(new.xi[i] - base.xi[i] - want)) <= 1e-12 * np.max(np.abs(want))

    def test_blow_up(self):
        cfg = SimConfig(N=2, k_field=4, dt=0.05, T=5.0, ic="random-smooth:0:-3:1e6")
        with pytest.raises(BlowUpError) as exc:
            run(cfg, reference=False)
        assert exc.value.t > 0 and exc.value.particle in (0, 1)


class TestHeunStep:
    def test_trapezoidal_single_mode(self):
        # Stratonovich drift on a gradient mode is -eta grad div = -eta Laplacian;
        # particles +-xi keep the mean (and so the advection) at zero
        cfg = SimConfig(N=2, k_field=4, eta=0.1, dt=1e-2, T=1e-2, scheme="strat-heun")
        phi = SpectralScalarField.from_modes(4, {(1, 2): 0.3 + 0.1j})
        g = grad(phi)
        st = _state([g, -g])
        new = step_heun_strat(st, cfg, increments=np.zeros((2, len(cfg.basis))))
        z = (TWO_PI ** 2) * 5 * cfg.eta * cfg.dt
        want = (1 + z + z * z / 2) * g.coeffs
        assert np.max(np.abs(new.xi[0] - want)) <= 1e-14 * np.max(np.abs(want))
        assert np.array_equal(new.xi[1], -new.xi[0])

    @pytest.mark.parametrize("scheme,order", [("strat-heun", 2), ("ito-euler", 1)])
    def test_deterministic_order(self, scheme, order):
        errs = []
        for dt in (4e-3, 2e-3, 1e-3):
            cfg = SimConfig(nu_override=0.0, N=1, k_field=6, dt=dt, T=0.04, scheme=scheme,
                            ic="random-smooth:1:-3:0.25")
            u0 = initial_condition(cfg)
            ref = integrate_reference(u0, 0.0, 2.5e-4, 160).velocity()
            errs.append(l2_error(run(cfg, reference=False).mean, ref))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > order - 0.2), rates


class TestDeterminism:
    @pytest.mark.parametrize("scheme", ["ito-euler", "strat-heun"])
    def test_worker_count(self, scheme):
        cfg = SimConfig(N=7, k_field=4, T=0.01, scheme=scheme, seed=99)
        a = run(cfg, workers=1, reference=False)
        b = run(cfg, workers=3, reference=False)
        assert np.array_equal(a.state.xi, b.state.xi)
        rows = [np.array([r.row() for r in res.diagnostics]) for res in (a, b)]
        assert np.array_equal(rows[0], rows[1], equal_nan=True)

    def test_seed_matters(self):
        cfg = SimConfig(N=2, k_field=4, T=0.005)
        a = run(cfg, reference=False).state.xi
        b = run(cfg.replace(seed=1), reference=False).state.xi
        assert not np.array_equal(a, b)

    def test_particle_streams_independent_of_N(self):
        # particle i sees the same increments whatever N is
        g3 = particle_generators(5, 3)
        g8 = particle_generators(5, 8)
        assert np.array_equal(g3[2].standard_normal(4), g8[2].standard_normal(4))


class TestMeanFieldConsistency:
    def test_zero_noise_keeps_particles_identical(self):
        cfg = SimConfig(N=4, k_field=6, dt=1e-3, T=0.02, ic="random-smooth:4:-3:0.25")
        st = init_ensemble(cfg)
        zero = np.zeros((cfg.N, len(cfg.basis)))
        for _ in range(cfg.n_steps):
            st = step(st, cfg, increments=zero)
        assert all(np.array_equal(st.xi[0], x) for x in st.xi[1:])
        ref = integrate_reference(initial_condition(cfg), cfg.eta, 1e-3, cfg.n_steps).velocity()
        assert l2_error(empirical_mean(st), ref) <= 1e-3 * l2_norm(ref)


class TestDiagnostics:
    def test_divergence_statistics_single(self):
        st = init_ensemble(SimConfig(N=1, k_field=3))
        mean, sd = divergence_statistics(st)
        assert np.all(sd == 0)
        assert divergence_check(st)

    def test_divergence_check_detects_bias(self, rng):
        # every particle with the same gradient component: mean is many sd away
        g = grad(random_scalar_field(4, rng)).coeffs
        xi = np.stack([g + 1e-3 * random_vector_field(4, rng).coeffs for _ in range(10)])
        st = EnsembleState(0.0, xi, particle_generators(0, 10))
        assert not divergence_check(st)

    def test_divergence_coeffs(self, rng):
        f = random_vector_field(4, rng)
        want = divergence(f).coeffs
        assert np.max(np.abs(divergence_coeffs(f.coeffs) - want)) <= 1e-14 * np.max(np.abs(want))

    def test_run_records(self):
        cfg = SimConfig(N=3, k_field=4, T=0.005, dt=1e-3)
        res = run(cfg, snapshot_every=2)
        assert len(res.diagnostics) == 6
        assert [round(t / cfg.dt) for t, _ in res.snapshots] == [0, 2, 4, 5]
        d0 = res.diagnostics[0]
        assert d0.energy_mean == pytest.approx(0.25) and d0.l2_err_ref == 0.0
        assert all(all(math.isfinite(v) for v in r.row()) for r in res.diagnostics)

    def test_inviscid_taylor_green_steady(self):
        cfg = SimConfig(N=1, nu_override=0.0, k_field=8, T=0.05, eta=0.02)
        res = run(cfg)
        assert abs(res.diagnostics[-1].energy_mean - 0.25) <= 1e-13
        assert res.diagnostics[-1].l2_err_ref <= 1e-12

    def test_energy_decay_rate(self):
        cfg = SimConfig(N=128, k_field=8, T=0.05, seed=3)
        res = run(cfg, reference=False)
        want = 0.25 * np.exp(-16 * np.pi ** 2 * cfg.eta * cfg.T)
        assert res.diagnostics[-1].energy_mean == pytest.approx(want, rel=0.05)


class TestRNG:
    def test_splitmix_reference_value(self):
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_keys_distinct(self):
        keys = {stream_key(s, i) for s in (0, 1, 2 ** 63) for i in range(50)}
        assert len(keys) == 150
        assert all(0 <= k < 2 ** 128 for k in keys)

    def test_reproducible(self):
        a = particle_generator(7, 3).standard_normal(5)
        b = particle_generator(7, 3).standard_normal(5)
        assert np.array_equal(a, b)
