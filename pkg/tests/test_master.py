from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from wgqed.errors import ConfigurationError, DarkChannelError, NonUniqueSteadyStateError, StepSizeError
from wgqed.hilbert import DensityMatrix, LindbladGenerator, Operator, basis_state
from wgqed.master import (CorrelationCurve, awtd_master, channel_flux, g2_master, g2_zero,
                          integrate, propagate, steady_state, wtd_master)
from wgqed.model import OneQubitParams, TwoQubitParams, build_one_qubit, build_two_qubit

import oracles

RNG = np.random.default_rng(11)
ONE = build_one_qubit(OneQubitParams(1.0, 1.0, 0.0))
TWO = build_two_qubit(TwoQubitParams.identical(math.pi / 2))


def random_density(d):
    a = RNG.normal(size=(d, d)) + 1j * RNG.normal(size=(d, d))
    rho = a @ a.conj().T
    return DensityMatrix(rho / np.trace(rho))


class TestIntegrate:
    def test_zero_time(self):
        rho = random_density(2)
        assert np.array_equal(integrate(ONE.generator, rho, 0.0).matrix, rho.matrix)

    def test_spontaneous_decay(self):
        m = build_one_qubit(OneQubitParams(1.0, 0.0, 0.0))
        e = DensityMatrix.from_state(basis_state("e"))
        times = np.linspace(0, 8, 17)
        rhos = propagate(m.generator, e.matrix, times, dt=0.005)
        assert np.max(np.abs(rhos[:, 1, 1].real - np.exp(-times))) < 1e-8

    def test_relaxes_to_steady_state(self):
        g = DensityMatrix.from_state(basis_state("g"))
        rho = integrate(ONE.generator, g, 80.0, dt=0.005)
        ee = oracles.bloch_excited_population(1.0, 1 / (2 * math.pi))
        assert rho.matrix[1, 1].real == pytest.approx(ee, abs=1e-9)

    def test_composition(self):
        rho = random_density(4)
        once = integrate(TWO.generator, rho, 1.3)
        twice = integrate(TWO.generator, integrate(TWO.generator, rho, 0.5), 0.8)
        assert np.max(np.abs(once.matrix - twice.matrix)) < 1e-9

    def test_positivity_and_trace_along_path(self):
        rho = random_density(4)
        for r in propagate(TWO.generator, rho.matrix, np.linspace(0, 10, 41)):
            assert np.linalg.eigvalsh(r).min() > -1e-9
            assert abs(np.trace(r) - 1) < 1e-9
            assert np.max(np.abs(r - r.conj().T)) < 1e-9

    def test_against_matrix_exponential(self):
        h, jumps = oracles.one_qubit_ops(1.0, 0.6 + 0.2j, 0.4)
        m = build_one_qubit(OneQubitParams(1.0, 0.6 + 0.2j, 0.4))
        rho = random_density(2)
        lv = oracles.liouvillian_colmajor(h, jumps)
        from scipy.linalg import expm
        ref = oracles.unvec(expm(lv * 3.0) @ oracles.vec(rho.matrix), 2)
        assert np.max(np.abs(integrate(m.generator, rho, 3.0).matrix - ref)) < 1e-9

    def test_step_size_guard(self):
        with pytest.raises(StepSizeError):
            integrate(ONE.generator, DensityMatrix.from_state(basis_state("g")), 1.0, dt=0.05)
        with pytest.raises(ConfigurationError):
            integrate(ONE.generator, DensityMatrix.from_state(basis_state("g")), -1.0)


class TestSteadyState:
    def test_undriven_ground(self):
        m = build_one_qubit(OneQubitParams(1.0, 0.0, 0.0))
        rho = steady_state(m.generator)
        assert np.allclose(rho.matrix, np.diag([1, 0]), atol=1e-12)

    def test_driven_population_and_residual(self):
        rho = steady_state(ONE.generator)
        assert rho.matrix[1, 1].real == pytest.approx(
            oracles.bloch_excited_population(1.0, 1 / (2 * math.pi)), abs=1e-12)
        out = oracles.liouvillian_colmajor(*oracles.one_qubit_ops()) @ oracles.vec(rho.matrix)
        assert np.max(np.abs(out)) < 1e-10

    def test_two_qubit_against_null_space(self):
        p = TwoQubitParams(1.0, 0.6, 0.9 + 0.2j, 0.1, -0.3, 0.4, 0.7, 1.1)
        m = build_two_qubit(p)
        rho = steady_state(m.generator).matrix
        ref = oracles.steady_state(m.h_coherent.matrix, [m.j_right.matrix, m.j_left.matrix])
        assert np.max(np.abs(rho - ref)) < 1e-10

    def test_degenerate(self):
        gen = LindbladGenerator(Operator(np.zeros((2, 2)), hermitian=True), ())
        with pytest.raises(NonUniqueSteadyStateError) as info:
            steady_state(gen)
        assert info.value.null_dim == 4


class TestG2:
    taus = np.linspace(0, 5, 11)

    def test_matches_oracle(self):
        h, jumps = oracles.one_qubit_ops()
        for ch, j in (("R", jumps[0]), ("L", jumps[1])):
            ours = g2_master(ONE.generator, ONE.jump(ch), self.taus, ch).values
            assert np.max(np.abs(ours - oracles.g2_curve(h, jumps, j, self.taus))) < 1e-9

    def test_left_antibunching_is_exact(self):
        assert g2_master(ONE.generator, ONE.j_left, [0.0], "L").values[0] == 0.0
        assert g2_zero(ONE.generator, ONE.j_left) == 0.0

    def test_right_bunching_value(self):
        g0 = g2_zero(ONE.generator, ONE.j_right)
        assert g0 == pytest.approx(6.608993753, rel=1e-8)
        curve = g2_master(ONE.generator, ONE.j_right, [0.0])
        assert abs(curve.values[0] - g0) < 1e-10

    def test_long_time_limit(self):
        for ch in "RL":
            v = g2_master(ONE.generator, ONE.jump(ch), [20.0, 30.0], ch).values
            assert np.all(np.abs(v - 1) < 1e-3)

    def test_two_qubit_dip_and_overshoot(self):
        taus = np.linspace(0, 15, 301)
        v = g2_master(TWO.generator, TWO.j_left, taus, "L").values
        assert v[0] > 1
        dip = int(np.argmin(v[: 100]))
        assert v[dip] < 1
        assert v[dip:].max() > 1
        assert abs(v[-1] - 1) < 1e-2

    def test_dark_channel(self):
        m = build_one_qubit(OneQubitParams(1.0, 0.0, 0.0))
        with pytest.raises(DarkChannelError, match="L"):
            g2_master(m.generator, m.j_left, [0.0], "L")

    def test_curve_validation(self):
        with pytest.raises(ConfigurationError):
            CorrelationCurve("R", [0.0, 0.0], [1.0, 1.0], "x")
        with pytest.raises(ConfigurationError):
            CorrelationCurve("R", [0.0], [math.nan], "x")


class TestWaitingTimes:
    def test_wtd_matches_oracle(self):
        h, jumps = oracles.one_qubit_ops()
        taus = np.linspace(0, 30, 16)
        for ch, j in (("R", jumps[0]), ("L", jumps[1])):
            ours = wtd_master(ONE.generator, ONE.jump(ch), taus, ch).values
            assert np.max(np.abs(ours - oracles.wtd_curve(h, jumps, j, taus))) < 1e-9

    def test_wtd_zero_equals_flux_times_g2_zero(self):
        rho = steady_state(ONE.generator)
        for ch in "RL":
            j = ONE.jump(ch)
            w0 = wtd_master(ONE.generator, j, [0.0]).values[0]
            assert w0 == pytest.approx(channel_flux(rho, j) * g2_zero(ONE.generator, j), abs=1e-12)

    def test_wtd_is_normalized(self):
        taus = np.linspace(0, 150, 15001)
        w = wtd_master(ONE.generator, ONE.j_left, taus).values
        assert trapezoid(w, taus) == pytest.approx(1.0, abs=1e-4)

    def test_wtd_below_g2(self):
        taus = np.linspace(0, 10, 101)
        rho = steady_state(ONE.generator)
        for ch in "RL":
            j = ONE.jump(ch)
            w = wtd_master(ONE.generator, j, taus).values / channel_flux(rho, j)
            g = g2_master(ONE.generator, j, taus).values
            assert np.all(w <= g + 1e-12)

    def test_awtd_corner_and_marginal(self):
        t = np.linspace(0, 200, 4001)
        a = awtd_master(TWO.generator, TWO.j_left, [0.0], [0.0])
        assert abs(a[0, 0]) < 1e-15
        grid = awtd_master(TWO.generator, TWO.j_left, [1.0, 2.0], t)
        w = wtd_master(TWO.generator, TWO.j_left, [1.0, 2.0]).values
        assert np.allclose(trapezoid(grid, t, axis=1), w, rtol=5e-4)
