import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irsmec.errors import DegenerateChannelError, DomainError, InfeasibleError
from irsmec.model import (
    DeviceParams,
    OffloadSolution,
    SystemParams,
    achievable_rate,
    evaluate_solution,
    local_energy,
    offload_power,
    optimal_local_frequency,
    phi,
)

DEV = DeviceParams()  # 1e-28, 8e6 bits, 100 cycles/bit, 1 GHz


def all_local_solution(sys, devs=DEV):
    f = np.full(sys.N, devs.S_bits * devs.C / sys.T)
    sol = OffloadSolution(
        beta=np.zeros(sys.N, dtype=int), tau=np.zeros(sys.N), f=f, P=np.zeros(sys.N),
        theta=np.zeros((sys.N, sys.M)), total_energy=0.0,
    )
    sol.total_energy = sys.N * devs.epsilon * devs.S_bits * devs.C * f[0] ** 2
    return sol


class TestTypes:
    @pytest.mark.parametrize("field", ["epsilon", "S_bits", "C", "f_max"])
    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
    def test_device_fields_positive(self, field, bad):
        with pytest.raises(DomainError):
            DeviceParams(**{field: bad})

    def test_deadline_feasibility(self):
        DEV.check_deadline(1.0)
        with pytest.raises(InfeasibleError):
            DEV.check_deadline(0.5)

    @pytest.mark.parametrize(
        "kwargs", [{"N": 0}, {"M": -1}, {"B": 0.0}, {"sigma2": -1e-10}, {"T": 0.0}, {"L": 0}, {"N": 2.5}]
    )
    def test_system_invariants(self, kwargs):
        with pytest.raises(DomainError):
            SystemParams(**kwargs)

    def test_system_accepts_no_irs(self):
        assert SystemParams(M=0).M == 0


class TestLocalEnergy:
    def test_zero_frequency(self):
        assert local_energy(DEV, 0.0) == 0.0

    def test_value(self):
        # 1e-28 * 8e6 * 100 * (8e8)^2 = 8e-20 * 6.4e17
        assert local_energy(DEV, 8e8) == pytest.approx(5.12e-2, rel=1e-12)

    def test_quadratic(self):
        assert local_energy(DEV, 4e8) * 4 == pytest.approx(local_energy(DEV, 8e8), rel=1e-14)

    @pytest.mark.parametrize("f", [-1.0, 1.5e9])
    def test_range(self, f):
        with pytest.raises(DomainError):
            local_energy(DEV, f)


class TestOptimalFrequency:
    def test_values(self):
        assert optimal_local_frequency(DEV, 1.0) == 8e8
        assert optimal_local_frequency(DEV, 2.0) == 4e8

    def test_energy_is_local_constant(self):
        f = optimal_local_frequency(DEV, 1.0)
        assert local_energy(DEV, f) == pytest.approx(5.12e-2, rel=1e-12)
        assert DEV.local_constant(1.0) == pytest.approx(5.12e-2, rel=1e-12)

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            optimal_local_frequency(DEV, 0.5)


class TestPhi:
    def test_zero_branch(self):
        assert phi(DEV, 1e7, 0.0) == 0.0

    @pytest.mark.parametrize("tau, expected", [(1.0, 1.0), (0.5, 1.5)])
    def test_exact_exponents(self, tau, expected):
        dev = DeviceParams(S_bits=1e7)
        assert phi(dev, 1e7, tau) == pytest.approx(expected, rel=1e-14)

    def test_negative(self):
        with pytest.raises(DomainError):
            phi(DEV, 1e7, -0.1)

    @pytest.mark.parametrize("S", [1e5, 8e6, 4e7])
    def test_decreasing_convex(self, S):
        dev = DeviceParams(S_bits=S)
        # start where 2^{S/(tau B)} still fits in a double
        tau = np.logspace(np.log10(S / 1e7 / 500), 0, 200)
        v = phi(dev, 1e7, tau)
        assert np.all(np.isfinite(v))
        assert np.all(np.diff(v) < 0)
        # on a log grid convexity means positive divided second differences
        slopes = np.diff(v) / np.diff(tau)
        assert np.all(np.diff(slopes) > 0)


class TestPowerRate:
    def test_power_value(self):
        expected = (math.pow(2.0, 0.8) - 1.0) * 1e-10 / 1e-9
        assert offload_power(DEV, 1e7, 1e-10, 1e-9, 1.0) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(7.411e-2, abs=5e-6)

    def test_large_tau(self):
        assert offload_power(DEV, 1e7, 1e-10, 1e-9, 1e9) < 1e-10

    def test_errors(self):
        with pytest.raises(DegenerateChannelError):
            offload_power(DEV, 1e7, 1e-10, 0.0, 1.0)
        with pytest.raises(DomainError):
            offload_power(DEV, 1e7, 1e-10, 1e-9, 0.0)

    @pytest.mark.parametrize("snr, rate", [(0.0, 0.0), (1.0, 1e7), (3.0, 2e7)])
    def test_rate(self, snr, rate):
        assert achievable_rate(snr * 1e-10, 1.0, 1e7, 1e-10) == pytest.approx(rate, rel=1e-14, abs=0)

    @given(
        S=st.floats(1e5, 1e8),
        tau=st.floats(1e-3, 10.0),
        gain2=st.floats(1e-14, 1e-4),
    )
    def test_round_trip(self, S, tau, gain2):
        dev = DeviceParams(S_bits=S)
        P = offload_power(dev, 1e7, 1e-10, gain2, tau)
        if not math.isfinite(P):
            return  # the exponent overflows a double, no rate to compare
        assert S / achievable_rate(P, gain2, 1e7, 1e-10) == pytest.approx(tau, rel=1e-9)


class TestEvaluate:
    def test_all_local_paper_devices(self):
        sys = SystemParams(N=8, M=4)
        ev = evaluate_solution(DEV, sys, all_local_solution(sys))
        assert ev.total_energy == pytest.approx(0.4096, rel=1e-12)
        assert ev.report.feasible

    def test_all_zero(self):
        sys = SystemParams(N=3, M=0)
        z = np.zeros(3)
        sol = OffloadSolution(np.zeros(3, dtype=int), z, z, z, np.zeros((3, 0)), 0.0)
        ev = evaluate_solution(DEV, sys, sol)
        assert ev.total_energy == 0.0
        assert ev.report.feasible

    def test_frame_violation(self):
        sys = SystemParams(N=2, M=0)
        tau = np.array([0.75, 0.75])
        P = np.array([0.1, 0.1])
        sol = OffloadSolution(np.ones(2, dtype=int), tau, np.zeros(2), P, np.zeros((2, 0)), float(P @ tau))
        ev = evaluate_solution(DEV, sys, sol)
        (v,) = [v for v in ev.report.violations if v.constraint == "3c"]
        assert v.slack == pytest.approx(-0.5)

    def test_flags_each_constraint(self):
        sys = SystemParams(N=4, M=2)
        sol = OffloadSolution(
            beta=np.array([1, 0, 0, 1]),
            tau=np.array([0.2, 0.0, 0.0, 0.0]),
            f=np.array([0.0, 4e8, 2e9, 0.0]),
            P=np.array([-1.0, 0.0, 0.0, 0.0]),
            theta=np.array([[0.0, 7.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]),
            total_energy=123.0,
        )
        got = evaluate_solution(DEV, sys, sol).report.constraints()
        assert {"mode", "3d", "3f", "3g", "3h", "objective"} <= got

    def test_rate_consistency(self):
        sys = SystemParams(N=1, M=0)
        gain2 = np.array([1e-9])
        P = offload_power(DEV, sys.B, sys.sigma2, gain2[0], 0.5)
        good = OffloadSolution(np.array([1]), np.array([0.5]), np.zeros(1), np.array([P]), np.zeros((1, 0)), P * 0.5)
        assert evaluate_solution(DEV, sys, good, gain2).report.feasible
        bad = OffloadSolution(np.array([1]), np.array([0.5]), np.zeros(1), np.array([P / 2]), np.zeros((1, 0)), P / 4)
        assert "3e" in evaluate_solution(DEV, sys, bad, gain2).report.constraints()

    def test_pure(self):
        sys = SystemParams(N=8, M=3)
        sol = all_local_solution(sys)
        a = evaluate_solution(DEV, sys, sol)
        b = evaluate_solution(DEV, sys, sol)
        assert a == b
