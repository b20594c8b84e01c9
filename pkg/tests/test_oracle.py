"""Analytic sequence-network solver tests."""

import numpy as np
import pytest

from frtsim.network import FAULT_TYPES, FaultSpec, NetworkParams
from frtsim.oracle import (
    IbrSourceSpec,
    SequenceNetworkOracle,
    SgSourceSpec,
    zone_reference_angles,
)
from frtsim.phasors import ALPHA, angle_deg, wrap_deg


def make_oracle(source=None, m=0.5, side="forward", **net_kwargs):
    p = NetworkParams(**net_kwargs)
    return p, SequenceNetworkOracle(p, source or IbrSourceSpec(mode="ideal"),
                                    m=m, side=side)


class TestPrefault:
    def test_equal_sources_no_circulating_current(self):
        p, orc = make_oracle()
        vg = p.v_grid_pu * np.exp(1j * np.deg2rad(p.v_grid_deg))
        pre = orc.prefault(vg)
        assert abs(pre.i_pre1) < 1e-12
        assert abs(pre.e_fy - vg) < 1e-12

    def test_operating_point_hits_power_target(self):
        p, orc = make_oracle()
        e1 = orc.operating_point(1.0, 0.1, 1.0, 0.05)
        pre = orc.prefault(e1)
        assert pre.p_t == pytest.approx(1.0, abs=1e-9)
        # reactive droop consistency: |e| = v_n + k_q (q_ref - q)
        assert abs(e1) == pytest.approx(1.0 + 0.05 * (0.1 - pre.q_t), abs=1e-9)

    def test_series_chain_consistency(self):
        p, orc = make_oracle()
        e1 = orc.operating_point(0.9, 0.0, 1.0, 0.05)
        pre = orc.prefault(e1)
        # no positive-sequence shunts before the fault: one series current
        assert abs(pre.i_pre1 - pre.i_tpre1) < 1e-12
        z_filt = p.r_filter_pu + 1j * p.x_filter_pu
        assert abs(pre.v_tpre1 - (e1 - pre.i_tpre1 * z_filt)) < 1e-12


class TestFaultSolutions:
    def test_bolted_three_phase_sg_divider(self):
        sg = SgSourceSpec(x_sg1=0.2, z_s1=0.1j)
        p, orc = make_oracle(source=sg, m=0.5)
        e_sg = 1.0 + 0j
        spec = FaultSpec(fault_type="abc", m=0.5, r_fault_ohm=0.0, t_on=0, t_off=1)
        sol = orc.solve(spec, e_sg)
        # independent hand solve of the two-source positive-sequence network
        # with the bolted-fault resistance floor at the split node
        z_src = 0.2j + 0.1j + 0.5 * p.z_line1_pu
        z_grd = 0.5 * p.z_line1_pu + p.z_grid1_pu
        r_floor = 1e-5
        vg = p.v_grid_pu + 0j
        v_f = (e_sg / z_src + vg / z_grd) / (1 / z_src + 1 / z_grd + 1 / r_floor)
        i_ref = (e_sg - v_f) / z_src
        assert abs(sol.i1 - i_ref) / abs(i_ref) < 1e-9
        assert abs(sol.i2) < 1e-9
        assert abs(sol.i0) < 1e-9

    def test_sg_incremental_impedance_closed_form(self):
        sg = SgSourceSpec()
        p, orc = make_oracle(source=sg, m=0.3)
        spec = FaultSpec(fault_type="bcg", m=0.3, r_fault_ohm=2.0, t_on=0, t_off=1)
        sol = orc.solve(spec, 1.02 + 0.1j)
        assert abs(sol.dz_e1 - (1j * sg.x_sg1 + sg.z_s1)) < 1e-10

    def test_sg_effective_impedances_match_source_side(self):
        sg = SgSourceSpec()
        p, orc = make_oracle(source=sg, m=0.7)
        spec = FaultSpec(fault_type="bcg", m=0.7, r_fault_ohm=0.0, t_on=0, t_off=1)
        sol = orc.solve(spec, 1.0 + 0j)
        assert abs(sol.z_e2 - (1j * sg.x_sg2 + sg.z_s2)) < 1e-10
        assert abs(sol.z_e0 - (1j * sg.x_sg0 + sg.z_s0)) < 1e-10

    def test_ibr_interoperable_identity_exact(self):
        src = IbrSourceSpec(mode="interoperable", z_v1=0.05 + 0.4j, z_v2=0.3j)
        p, orc = make_oracle(source=src, m=0.2)
        e1 = orc.operating_point(0.9, 0.0, 1.0, 0.05)
        for ftype in ("ag", "bc", "abg", "abc"):
            spec = FaultSpec(fault_type=ftype, m=0.2, r_fault_ohm=3.0, t_on=0, t_off=1)
            sol = orc.solve(spec, e1)
            assert abs(sol.dz_e1 - sol.dz_e1_closed) < 1e-10, ftype
            z_filt = p.r_filter_pu + 1j * p.x_filter_pu
            z_xfmr = p.r_xfmr_pu + 1j * p.x_xfmr_pu
            assert abs(sol.dz_e1_closed - (src.z_v1 + z_filt + z_xfmr)) < 1e-12

    def test_ibr_negative_sequence_effective_impedance(self):
        src = IbrSourceSpec(mode="interoperable", z_v1=0.4j, z_v2=0.25j)
        p, orc = make_oracle(source=src, m=0.5)
        e1 = orc.operating_point(0.9, 0.0, 1.0, 0.05)
        spec = FaultSpec(fault_type="bcg", m=0.5, r_fault_ohm=0.0, t_on=0, t_off=1)
        sol = orc.solve(spec, e1)
        z_filt = p.r_filter_pu + 1j * p.x_filter_pu
        z_xfmr = p.r_xfmr_pu + 1j * p.x_xfmr_pu
        assert abs(sol.z_e2 - (src.z_v2 + z_filt + z_xfmr)) < 1e-10
        # the delta winding leaves only the transformer in the zero path
        x0, r0 = p.xfmr0()
        assert abs(sol.z_e0 - (r0 + 1j * x0)) < 1e-10

    def test_ibr_conventional_additional_term(self):
        src = IbrSourceSpec(mode="conventional", z_v1=0.5j, z_v2=0.5j)
        p, orc = make_oracle(source=src, m=0.1)
        e1 = orc.operating_point(0.9, 0.0, 1.0, 0.05)
        spec = FaultSpec(fault_type="ag", m=0.1, r_fault_ohm=10.0, t_on=0, t_off=1)
        sol = orc.solve(spec, e1)
        # source-dynamics mismatch: z_ad = (e_pre - e_ref + i1 z_v1)/(i1 - i_pre)
        z_ad_expect = (sol.pre.e_src1 - sol.e_ref1_fault
                       + sol.i1 * src.z_v1) / (sol.i1 - sol.pre.i_pre1)
        assert abs(sol.z_ad - z_ad_expect) < 1e-9
        # and it is not purely inductive
        assert abs(wrap_deg(angle_deg(sol.z_ad) - 90.0)) > 5.0

    def test_interoperable_equivalent_prefault_matches_true(self):
        src = IbrSourceSpec(mode="interoperable", z_v1=0.7j, z_v2=0.7j)
        p, orc = make_oracle(source=src, m=0.6)
        e1 = orc.operating_point(0.8, 0.0, 1.0, 0.05)
        spec = FaultSpec(fault_type="ag", m=0.6, r_fault_ohm=1.0, t_on=0, t_off=1)
        sol = orc.solve(spec, e1)
        # the adjusted source behind its virtual impedance reproduces the
        # true pre-fault voltage at the fault point
        assert abs(sol.e_fy_equiv - sol.pre.e_fy) < 1e-10
        assert abs(sol.dv_f1 - (sol.v_f1 - sol.pre.e_fy)) < 1e-12

    @pytest.mark.parametrize("ftype", FAULT_TYPES)
    def test_superposition_residual(self, ftype):
        src = IbrSourceSpec(mode="interoperable", z_v1=0.2 + 0.9j, z_v2=0.6j)
        p, orc = make_oracle(source=src, m=0.35)
        e1 = orc.operating_point(0.9, 0.0, 1.0, 0.05)
        spec = FaultSpec(fault_type=ftype, m=0.35, r_fault_ohm=4.0, t_on=0, t_off=1)
        sol = orc.solve(spec, e1)
        assert sol.superposition_residual < 1e-9

    def test_fault_divider_identity(self):
        # dv_f1 follows the voltage divider of the positive-sequence Thevenin
        # against the interconnection load z_eq20
        p, orc = make_oracle(m=0.4)
        e1 = orc.operating_point(0.9, 0.0, 1.0, 0.0)
        spec = FaultSpec(fault_type="bcg", m=0.4, r_fault_ohm=2.0, t_on=0, t_off=1)
        sol = orc.solve(spec, e1)
        v_f_expect = sol.e_fy_equiv * sol.z_eq20 / (sol.z_th1 + sol.z_eq20)
        assert abs(sol.v_f1 - v_f_expect) < 1e-9

    def test_direction_reversal_flips_ratio_angles(self):
        p = NetworkParams()
        src = IbrSourceSpec(mode="ideal")
        spec_kwargs = dict(fault_type="bg", m=0.5, r_fault_ohm=1.0, t_on=0, t_off=1)
        sols = {}
        for side in ("forward", "reverse"):
            orc = SequenceNetworkOracle(p, src, m=0.5, side=side)
            e1 = orc.operating_point(0.9, 0.0, 1.0, 0.0)
            sols[side] = orc.solve(FaultSpec(side=side, **spec_kwargs), e1)
        for attr in ("dz_e1", "z_e2", "z_e0"):
            fw = getattr(sols["forward"], attr)
            rv = getattr(sols["reverse"], attr)
            # effective impedance flips from the source side to the line side
            d = abs(wrap_deg(angle_deg(fw) - angle_deg(rv)))
            assert d > 150.0, attr

    def test_sg_incremental_angle_inductive_for_all_faults(self):
        # m = 0 exactly is the protection-zone boundary (fault at the line
        # CT), where the line-side measurement inverts; stay inside the zone
        sg = SgSourceSpec()
        for ftype in FAULT_TYPES:
            for m in (0.001, 0.5, 1.0):
                p, orc = make_oracle(source=sg, m=m)
                spec = FaultSpec(fault_type=ftype, m=m, r_fault_ohm=1.0, t_on=0, t_off=1)
                sol = orc.solve(spec, 1.0 + 0.2j)
                if sol.dz_e1 is None:
                    continue
                assert abs(angle_deg(sol.dz_e1) - 90.0) < 5.0, (ftype, m)

    def test_unsupported_fault_type(self):
        p, orc = make_oracle()
        spec = FaultSpec(fault_type="ag", m=0.5, t_on=0, t_off=1)
        spec.fault_type = "zz"  # bypass the dataclass validation
        with pytest.raises(ValueError):
            orc.solve(spec, 1.0)


class TestZoneReferenceAngles:
    def test_known_table(self):
        table = {
            "ag": (0.0, 0.0), "bg": (120.0, -120.0), "cg": (-120.0, 120.0),
            "ab": (60.0, None), "bc": (180.0, None), "ca": (-60.0, None),
            "abg": (60.0, 120.0), "bcg": (180.0, 0.0), "cag": (-60.0, -120.0),
            "abc": (None, None), "abcg": (None, None),
        }
        for ftype, expect in table.items():
            assert zone_reference_angles(ftype) == expect, ftype

    def test_phase_rotation_property(self):
        # rotating the faulted phase forward rotates the comparator center by
        # the symmetrical-component operator angle
        ag = zone_reference_angles("ag")
        bg = zone_reference_angles("bg")
        assert wrap_deg(bg[0] - ag[0]) == pytest.approx(np.rad2deg(np.angle(ALPHA)))
        assert wrap_deg(bg[1] - ag[1]) == pytest.approx(-np.rad2deg(np.angle(ALPHA)))

    def test_single_phase_series_equality(self):
        # a single-line-ground fault forces equal sequence currents
        assert zone_reference_angles("ag") == (0.0, 0.0)

    def test_unknown(self):
        with pytest.raises(ValueError):
            zone_reference_angles("bad")
