"""Time-domain network model tests."""

import numpy as np
import pytest

from frtsim.network import (
    FAULT_TYPES,
    FaultSpec,
    GridDisturbance,
    NetworkBuildError,
    NetworkModel,
    NetworkParams,
    SimulationDiverged,
    fault_admittance,
    fault_phases,
    reactance_pu_from_inductance,
)
from frtsim.oracle import IbrSourceSpec, SequenceNetworkOracle
from frtsim.phasors import abc_to_sequence, sliding_fundamental

TS = 1e-4
SQ2 = np.sqrt(2.0)
SHIFT = np.exp(-2j * np.pi / 3 * np.arange(3))


def steady_wave(ph, w1, t):
    t = np.atleast_1d(t)
    return SQ2 * np.real(ph * np.exp(1j * w1 * t)[:, None] * SHIFT[None, :])


class TestParams:
    def test_transmission_bench_conversions(self):
        p = NetworkParams()
        # 5 mH filter at 33 kV / 100 MW
        assert reactance_pu_from_inductance(5e-3, 33e3, 100e6, 50.0) == pytest.approx(
            0.14425, rel=1e-3)
        # 77 mH transformer leakage reads 0.05 p.u. on the 220 kV base
        assert reactance_pu_from_inductance(77e-3, 220e3, 100e6, 50.0) == pytest.approx(
            0.05, rel=1e-2)
        assert p.z_base_grid_ohm == pytest.approx(484.0)
        assert p.z_line1_pu == pytest.approx((3 + 34j) / 484, rel=1e-12)
        # line-to-line grid voltage on the line-to-neutral base
        assert 220e3 / (p.v_nom_grid_v / np.sqrt(3)) == pytest.approx(1.732, abs=1e-3)

    def test_invalid_params_rejected(self):
        with pytest.raises(NetworkBuildError):
            NetworkParams(x_filter_pu=0.0)
        with pytest.raises(NetworkBuildError):
            NetworkParams(z_line1_ohm_per_km=0.03 + 0j)

    def test_fault_spec_validation(self):
        with pytest.raises(ValueError):
            FaultSpec(fault_type="xx")
        with pytest.raises(ValueError):
            FaultSpec(m=1.5)
        with pytest.raises(ValueError):
            FaultSpec(t_on=0.5, t_off=0.2)
        with pytest.raises(ValueError):
            GridDisturbance(sag_pu=1.4)


class TestFaultAdmittance:
    def test_phase_sets(self):
        assert fault_phases("ag") == ([0], True)
        assert fault_phases("bc") == ([1, 2], False)
        assert fault_phases("cag") == ([2, 0], True)
        assert fault_phases("abcg") == ([0, 1, 2], True)
        assert fault_phases("abc") == ([0, 1, 2], False)

    def test_single_phase_ground(self):
        y = fault_admittance("bg", 0.1)
        assert y[1, 1] == pytest.approx(10.0)
        assert np.count_nonzero(y) == 1

    def test_phase_phase(self):
        y = fault_admittance("ca", 0.5)
        g = 2.0
        ref = np.zeros((3, 3))
        ref[2, 2] = ref[0, 0] = g
        ref[2, 0] = ref[0, 2] = -g
        assert np.allclose(y, ref)

    def test_three_phase_blocks_common_mode(self):
        y = fault_admittance("abc", 0.2)
        assert np.allclose(y @ np.ones(3), 0.0, atol=1e-12)

    def test_bolted_floor(self):
        y = fault_admittance("ag", 0.0)
        assert y[0, 0] == pytest.approx(1e5)

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            fault_admittance("nope", 0.0)


class TestStepping:
    def _steady_net(self, m=0.5, reverse=False):
        p = NetworkParams()
        orc = SequenceNetworkOracle(p, IbrSourceSpec(mode="ideal"), m=m,
                                    side="reverse" if reverse else "forward")
        e1 = orc.operating_point(1.0, 0.0, 1.0, 0.0)
        pre = orc.prefault(e1)
        net = NetworkModel(p, TS, m=m, reverse_stub=reverse, validate=True)
        net.set_initial_state(pre.node_phasors, pre.branch_phasors,
                              {0: e1, 1: p.v_grid_pu + 0j})
        return p, net, e1, pre

    def test_passive_decay_with_zero_sources(self):
        p, net, e1, pre = self._steady_net()
        zeros = np.zeros(3)
        energies = [net.energy()]
        for _ in range(4000):
            net.step(zeros, zeros)
            energies.append(net.energy())
        # the slowest loop decays with tau = L/R ~ 0.15 s
        assert energies[-1] < 0.01 * energies[0]
        e = np.array(energies)
        assert np.all(e[1:] <= e[:-1] * (1 + 1e-12) + 1e-15)

    def test_kcl_residual_below_bound(self):
        p, net, e1, pre = self._steady_net(m=0.01)
        w1 = p.omega1
        net.apply_fault("ag", 0.0)  # bolted: worst conditioning
        for k in range(600):
            t = (k + 1) * TS
            net.step(steady_wave(e1, w1, t)[0], steady_wave(p.v_grid_pu + 0j, w1, t)[0])
        assert net.kcl_residual_max < 1e-9

    def test_steady_init_stays_put(self):
        p, net, e1, pre = self._steady_net()
        w1 = p.omega1
        v0 = net.node_voltage("bus1").copy()
        for k in range(400):
            t = (k + 1) * TS
            net.step(steady_wave(e1, w1, t)[0], steady_wave(p.v_grid_pu + 0j, w1, t)[0])
        # after two cycles the state must still track the analytic steady solution
        expect = SQ2 * np.real(pre.v_pre1 * np.exp(1j * w1 * net.t) * SHIFT)
        assert np.abs(net.node_voltage("bus1") - expect).max() < 2e-3

    def test_rl_energization_matches_closed_form(self):
        # drive the grid branch alone: step the grid EMF with the inverter
        # side detached via a zero command and an opened line (length 0 keeps
        # bus1 == bus2, so the loop is source -> grid L -> bus -> filter)
        p = NetworkParams(line_km=0.0, has_xfmr=False,
                          z_grid1_pu=0.05 + 0.3j, z_grid0_pu=0.05 + 0.3j)
        net = NetworkModel(p, TS, m=0.5)
        # dc step on the a-b phase pair: per-phase series chain is
        # grid (r, l) plus filter (r_f, l_f); phase c stays at zero, so the
        # zero-sum constraint of the filter is inactive and each driven phase
        # follows the scalar RL rise exactly
        r_tot = 0.05 + p.r_filter_pu
        l_tot = (0.3 + p.x_filter_pu) / p.omega1
        n = 4000
        vg = np.zeros((n, 3))
        vg[:, 0] = 1.0
        vg[:, 1] = -1.0
        e = np.zeros((n, 3))
        v_out, i_out = net.run_sources(e, vg, events=None)
        gi = net.branch_names.index("grid")
        i_sim = -i_out[:, gi, 0]  # branch oriented bus->source
        t = np.arange(n) * TS
        i_ref = (1.0 / r_tot) * (1 - np.exp(-t * r_tot / l_tot))
        err = np.abs(i_sim[1:] - i_ref[1:]) / i_ref[-1]
        assert err.max() < 0.005

    def test_zero_length_line_merges_buses(self):
        p = NetworkParams(line_km=0.0)
        net = NetworkModel(p, TS, m=0.5)
        assert net._group_base["bus1"] == net._group_base["bus2"]
        assert net._group_base["fault"] == net._group_base["bus1"]

    def test_delta_winding_blocks_inverter_zero_sequence(self):
        p, net, e1, pre = self._steady_net(m=0.5)
        w1 = p.omega1
        net.apply_fault("ag", 0.0)
        i0_inv, i0_grid = 0.0, 0.0
        for k in range(800):
            t = (k + 1) * TS
            net.step(steady_wave(e1, w1, t)[0], steady_wave(p.v_grid_pu + 0j, w1, t)[0])
            i0_inv = max(i0_inv, abs(net.branch_current("filter").sum()) / 3)
            i0_grid = max(i0_grid, abs(net.branch_current("grid").sum()) / 3)
        assert i0_inv < 1e-9
        assert i0_grid > 0.1  # ground-fault zero sequence flows on the grid side

    def test_xfmr_zero_shunt_carries_circulating_current(self):
        p, net, e1, pre = self._steady_net(m=0.5)
        w1 = p.omega1
        net.apply_fault("ag", 0.0)
        for k in range(800):
            t = (k + 1) * TS
            net.step(steady_wave(e1, w1, t)[0], steady_wave(p.v_grid_pu + 0j, w1, t)[0])
        i_sh = net.branch_current("xfmr0")
        assert abs(i_sh).max() > 0.05
        # the shunt is a pure common-mode path
        assert np.abs(i_sh - i_sh.mean()).max() < 1e-9

    def test_divergence_guard(self):
        p, net, e1, pre = self._steady_net()
        with pytest.raises(SimulationDiverged):
            net.v_prev[:] = np.nan
            net.step(np.zeros(3), np.zeros(3))

    def test_fault_application_collapses_poc_voltage(self):
        p, net, e1, pre = self._steady_net(m=0.01)
        w1 = p.omega1
        net.apply_fault("abc", 0.0)
        for k in range(2 * 200):
            t = (k + 1) * TS
            net.step(steady_wave(e1, w1, t)[0], steady_wave(p.v_grid_pu + 0j, w1, t)[0])
        v_poc, _ = net.poc_sample()
        assert np.abs(v_poc).max() < 0.05
        # the inverter terminal holds the filter/transformer divider value
        vt = sliding_fundamental(
            np.array([net.node_voltage("t")[0]]), 1)  # not used; direct check below
        v_t_amp = np.abs(net.node_voltage("t")).max() / SQ2
        x_f, x_t = p.x_filter_pu, p.x_xfmr_pu
        divider = abs(e1) * (x_t + 0.01 * p.z_line1_pu.imag) / (x_f + x_t)
        assert v_t_amp == pytest.approx(divider, rel=0.25)

    def test_batch_run_matches_stepwise(self):
        p, net1, e1, pre = self._steady_net(m=0.5)
        _, net2, _, _ = self._steady_net(m=0.5)
        w1 = p.omega1
        n = 300
        t = np.arange(n) * TS
        e_series = steady_wave(e1, w1, t)
        vg_series = steady_wave(p.v_grid_pu + 0j, w1, t)
        k_on = 150
        v_out, i_out = net1.run_sources(
            e_series, vg_series, events=[(k_on, lambda: net1.apply_fault("bc", 1.0))])
        for k in range(n - 1):
            if k == k_on:
                net2.apply_fault("bc", 1.0)
            net2.step(e_series[k + 1], vg_series[k + 1])
        assert np.allclose(v_out[-1], net2.v_prev, atol=1e-12)
        assert np.allclose(i_out[-1], net2.i_state, atol=1e-12)


class TestSteadyPhasorMatch:
    @pytest.mark.parametrize("fault_type", ["ag", "bc", "abcg"])
    @pytest.mark.parametrize("m", [0.01, 0.99])
    def test_fault_steady_state_matches_oracle(self, fault_type, m):
        p = NetworkParams()
        orc = SequenceNetworkOracle(p, IbrSourceSpec(mode="ideal"), m=m, side="forward")
        e1 = orc.operating_point(1.0, 0.0, 1.0, 0.0)
        pre = orc.prefault(e1)
        spec = FaultSpec(fault_type=fault_type, m=m, r_fault_ohm=5.0, t_on=0.1,
                         t_off=9.0)
        sol = orc.solve(spec, e1)
        net = NetworkModel(p, TS, m=m)
        net.set_initial_state(pre.node_phasors, pre.branch_phasors,
                              {0: e1, 1: p.v_grid_pu + 0j})
        n = int(0.35 / TS)
        t = np.arange(n) * TS
        v_out, i_out = net.run_sources(
            steady_wave(e1, p.omega1, t), steady_wave(p.v_grid_pu + 0j, p.omega1, t),
            events=[(int(0.1 / TS), lambda: net.apply_fault(fault_type, 5.0))])
        b1 = net._group_base["bus1"]
        lb = "line_a" if "line_a" in net.branch_names else "line_b"
        vph = [sliding_fundamental(v_out[:, b1 + j], 200)[-2] for j in range(3)]
        iph = [sliding_fundamental(i_out[:, net.branch_names.index(lb), j], 200)[-2]
               for j in range(3)]
        vs = abc_to_sequence(*vph)
        iss = abc_to_sequence(*iph)
        for sim, ref in [(vs.positive, sol.v1), (iss.positive, sol.i1),
                         (vs.negative, sol.v2), (iss.negative, sol.i2),
                         (vs.zero, sol.v0), (iss.zero, sol.i0)]:
            if abs(ref) > 0.02:
                assert abs(sim) / abs(ref) == pytest.approx(1.0, abs=0.02)
                assert abs(np.angle(sim / ref)) < np.deg2rad(2.0)
