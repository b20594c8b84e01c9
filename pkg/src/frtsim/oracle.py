"""Analytic phasor-domain solver for pre-fault, fault, and pure-fault states.

The solver mirrors the time-domain topology exactly (same impedances, same
fault conductance construction, same bolted-fault resistance floor) so that
steady-window phasors extracted from a simulation can be compared against it
within tight tolerances.

Two independent routes are computed for every fault solve:

* a combined linear solve of the three sequence networks coupled at the fault
  node through the sequence-transformed fault admittance, and
* the classical route: per-sequence Thevenin at the fault node, phase-domain
  fault boundary, then per-sequence current back-injection.

Their maximum disagreement is reported as ``superposition_residual``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import FAULT_TYPES, FaultSpec, NetworkParams, fault_admittance
from .phasors import ALPHA, angle_deg, wrap_deg

# Fortescue matrix, sequence order (zero, positive, negative)
_A_FORT = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, ALPHA**2, ALPHA],
        [1.0, ALPHA, ALPHA**2],
    ],
    dtype=complex,
)
_A_INV = np.linalg.inv(_A_FORT)


@dataclass
class IbrSourceSpec:
    """Inverter source model for the oracle.

    ``mode`` selects the fault-state internal voltage:

    * ``"interoperable"`` -- EMF adjusted to ``e_pre1 + i_tpre1 * z_v1``
    * ``"conventional"``  -- EMF held at the pre-fault value (slow control)
    * ``"ideal"``         -- fixed EMF, no virtual impedance (network oracle
      stand-in)
    """

    mode: str = "interoperable"
    z_v1: complex = 0j
    z_v2: complex = 0j

    def __post_init__(self):
        if self.mode not in ("interoperable", "conventional", "ideal"):
            raise ValueError(f"unknown IBR mode {self.mode!r}")
        if self.mode == "ideal":
            self.z_v1 = 0j
            self.z_v2 = 0j


@dataclass
class SgSourceSpec:
    """Synchronous-generator source: subtransient reactances plus step-up."""

    x_sg1: float = 0.2
    x_sg2: float = 0.2
    x_sg0: float = 0.1
    z_s1: complex = 0.1j
    z_s2: complex = 0.1j
    z_s0: complex = 0.1j


class _SeqLadder:
    """One sequence network as a small complex nodal system.

    Nodes are referred to by name; :meth:`alias` merges two names (union-find)
    so degenerate topologies (zero-length segments, missing transformer)
    collapse cleanly.  Branch convention: current flows p -> n and equals
    ``(v_p - v_n + emf) / z``; ``None`` is ground.
    """

    def __init__(self):
        self._parent: dict[str, str] = {}
        self._order: list[str] = []
        self.branches: list[tuple[str, str | None, str | None, complex, complex]] = []

    def _register(self, name: str):
        if name not in self._parent:
            self._parent[name] = name
            self._order.append(name)

    ensure = _register

    def _root(self, name: str) -> str:
        self._register(name)
        while self._parent[name] != name:
            name = self._parent[name]
        return name

    def alias(self, name: str, target: str):
        self._parent[self._root(name)] = self._root(target)

    def add(self, name: str, p: str | None, n: str | None, z: complex, emf: complex = 0j):
        if z == 0:
            raise ValueError(f"zero-impedance branch {name!r}")
        if p is not None:
            self._register(p)
        if n is not None:
            self._register(n)
        self.branches.append((name, p, n, complex(z), complex(emf)))

    @property
    def node_of(self) -> dict[str, int]:
        roots: list[str] = []
        for name in self._order:
            r = self._root(name)
            if r not in roots:
                roots.append(r)
        root_idx = {r: i for i, r in enumerate(roots)}
        return {name: root_idx[self._root(name)] for name in self._order}

    @property
    def n_nodes(self) -> int:
        return len({self._root(n) for n in self._order})

    def system(self):
        idx = self.node_of
        n = self.n_nodes
        y = np.zeros((n, n), dtype=complex)
        rhs = np.zeros(n, dtype=complex)
        for _, pn, qn, z, emf in self.branches:
            g = 1.0 / z
            p = idx[pn] if pn is not None else -1
            q = idx[qn] if qn is not None else -1
            if p >= 0:
                y[p, p] += g
                if q >= 0:
                    y[p, q] -= g
                rhs[p] -= g * emf
            if q >= 0:
                y[q, q] += g
                if p >= 0:
                    y[q, p] -= g
                rhs[q] += g * emf
        return y, rhs

    def solve(self, injections: dict[int, complex] | None = None) -> np.ndarray:
        y, rhs = self.system()
        if injections:
            for node, cur in injections.items():
                rhs[node] += cur
        return np.linalg.solve(y, rhs)

    def thevenin(self, node: int) -> complex:
        y, _ = self.system()
        rhs = np.zeros(self.n_nodes, dtype=complex)
        rhs[node] = 1.0
        v = np.linalg.solve(y, rhs)
        return complex(v[node])

    def branch_current(self, name: str, v: np.ndarray) -> complex:
        idx = self.node_of
        for bname, pn, qn, z, emf in self.branches:
            if bname == name:
                vp = v[idx[pn]] if pn is not None else 0j
                vq = v[idx[qn]] if qn is not None else 0j
                return complex((vp - vq + emf) / z)
        raise KeyError(name)

    def has_branch(self, name: str) -> bool:
        return any(b[0] == name for b in self.branches)

    def voltage(self, name: str, v: np.ndarray) -> complex:
        return complex(v[self.node_of[name]])


@dataclass
class PrefaultSolution:
    e_src1: complex
    e_fy: complex           # pre-fault voltage at the fault point
    v_pre1: complex         # bus-1 voltage
    i_pre1: complex         # bus-1 line current (toward the line)
    i_tpre1: complex        # inverter/source branch current
    v_tpre1: complex        # source terminal voltage
    p_t: float              # terminal active power
    q_t: float
    node_phasors: dict = field(default_factory=dict)
    branch_phasors: dict = field(default_factory=dict)


@dataclass
class OracleSolution:
    fault: FaultSpec
    pre: PrefaultSolution
    e_ref1_fault: complex
    e_fy_equiv: complex
    # bus-1 sequence phasors under fault
    v1: complex
    i1: complex
    v2: complex
    i2: complex
    v0: complex
    i0: complex
    # fault-point quantities (currents into the fault)
    v_f0: complex
    v_f1: complex
    v_f2: complex
    i_f0: complex
    i_f1: complex
    i_f2: complex
    # pure-fault quantities
    dv1: complex
    di1: complex
    dv_f1: complex
    # effective impedances
    dz_e1: complex | None
    z_e2: complex | None
    z_e0: complex | None
    z_ad: complex | None
    z_eq20: complex | None
    dz_e1_closed: complex
    # diagnostics
    z_th0: complex
    z_th1: complex
    z_th2: complex
    superposition_residual: float

    def report(self) -> str:
        def fmt(name, val):
            if val is None:
                return f"{name}: none"
            return (f"{name}: {val.real:+.9f}{val.imag:+.9f}j "
                    f"(|{abs(val):.9f}| {angle_deg(val):+.4f} deg)")

        lines = [
            f"fault_type: {self.fault.fault_type}",
            f"side: {self.fault.side}",
            f"m: {self.fault.m:.6f}",
            f"r_fault_ohm: {self.fault.r_fault_ohm:.6f}",
            fmt("e_fy", self.pre.e_fy),
            fmt("v_pre1", self.pre.v_pre1),
            fmt("i_pre1", self.pre.i_pre1),
            fmt("i_tpre1", self.pre.i_tpre1),
            fmt("e_ref1_fault", self.e_ref1_fault),
            fmt("v1", self.v1),
            fmt("i1", self.i1),
            fmt("v2", self.v2),
            fmt("i2", self.i2),
            fmt("v0", self.v0),
            fmt("i0", self.i0),
            fmt("v_f1", self.v_f1),
            fmt("dv_f1", self.dv_f1),
            fmt("dv1", self.dv1),
            fmt("di1", self.di1),
            fmt("dz_e1", self.dz_e1),
            fmt("dz_e1_closed", self.dz_e1_closed),
            fmt("z_e2", self.z_e2),
            fmt("z_e0", self.z_e0),
            fmt("z_ad", self.z_ad),
            fmt("z_eq20", self.z_eq20),
            fmt("z_th0", self.z_th0),
            fmt("z_th1", self.z_th1),
            fmt("z_th2", self.z_th2),
            f"superposition_residual: {self.superposition_residual:.3e}",
        ]
        return "\n".join(lines) + "\n"


class SequenceNetworkOracle:
    """Analytic solver over the same topology as :class:`NetworkModel`."""

    def __init__(self, params: NetworkParams, source, m: float = 0.5,
                 side: str = "forward"):
        self.params = params
        self.source = source
        self.m = float(m)
        self.side = side
        self.reverse = side == "reverse"
        if isinstance(source, SgSourceSpec) and params.has_xfmr:
            # the SG model carries its own step-up; the circuit transformer is
            # not part of it
            pass

    # -- ladder construction -------------------------------------------------

    def _grid_side(self, lad: _SeqLadder, seq: int):
        p = self.params
        z1 = p.z_line1_pu
        z0 = p.z_line0_pu
        zl = z0 if seq == 0 else z1
        if self.reverse:
            lad.add("stub", "fault", "bus1",
                    (p.z_stub0_pu if seq == 0 else p.z_stub1_pu))
            if p.line_km > 0:
                lad.add("line_a", "bus1", "bus2", zl)
            else:
                lad.alias("bus2", "bus1")
        else:
            if p.line_km == 0:
                lad.alias("fault", "bus1")
                lad.alias("bus2", "bus1")
            elif self.m == 0.0:
                lad.alias("fault", "bus1")
                lad.add("line_b", "fault", "bus2", zl)
            elif self.m == 1.0:
                lad.add("line_a", "bus1", "fault", zl)
                lad.alias("bus2", "fault")
            else:
                lad.add("line_a", "bus1", "fault", self.m * zl)
                lad.add("line_b", "fault", "bus2", (1.0 - self.m) * zl)
        zg = p.grid0() if seq == 0 else p.z_grid1_pu
        emf = 0j
        if seq == 1:
            emf = p.v_grid_pu * np.exp(1j * np.deg2rad(p.v_grid_deg))
        lad.add("grid", None, "bus2", zg, emf=emf)

    def _src_impedances(self, state: str):
        """Source-side series impedance per sequence for 'pre' or 'fault'."""
        p = self.params
        z_filt = p.r_filter_pu + 1j * p.x_filter_pu
        if isinstance(self.source, SgSourceSpec):
            s = self.source
            return (1j * s.x_sg1 + s.z_s1, 1j * s.x_sg2 + s.z_s2)
        s = self.source
        if state == "pre" or s.mode == "ideal":
            return (z_filt, z_filt)
        return (s.z_v1 + z_filt, s.z_v2 + z_filt)

    def _build_ladder(self, seq: int, e_src: complex, state: str) -> _SeqLadder:
        p = self.params
        lad = _SeqLadder()
        lad.ensure("bus1")
        xfmr_grid_node = "fault" if self.reverse else "bus1"
        is_sg = isinstance(self.source, SgSourceSpec)
        if seq in (1, 2):
            z1, z2 = self._src_impedances(state)
            z_src = z1 if seq == 1 else z2
            emf = e_src if seq == 1 else 0j
            if is_sg:
                lad.add("source", None, "bus1", z_src, emf=emf)
            else:
                lad.add("source", None, "t", z_src, emf=emf)
                if p.has_xfmr:
                    zt = p.r_xfmr_pu + 1j * p.x_xfmr_pu
                    lad.add("xfmr", "t", xfmr_grid_node, zt)
                else:
                    lad.alias("t", xfmr_grid_node)
        else:
            if is_sg:
                s = self.source
                lad.add("source0", "bus1", None, 1j * s.x_sg0 + s.z_s0)
            elif p.has_xfmr:
                x0, r0 = p.xfmr0()
                lad.add("xfmr0", xfmr_grid_node, None, r0 + 1j * x0)
            # three-wire inverter: no zero-sequence path on the source side
        self._grid_side(lad, seq)
        return lad

    # -- pre-fault ------------------------------------------------------------

    def prefault(self, e_src1: complex) -> PrefaultSolution:
        lad = self._build_ladder(1, e_src1, "pre")
        v = lad.solve()
        relay_branch = "line_a" if lad.has_branch("line_a") else (
            "line_b" if lad.has_branch("line_b") else "grid")
        i_line = lad.branch_current(relay_branch, v)
        if relay_branch == "grid":
            i_line = -i_line  # grid branch is oriented source->bus2
        i_src = lad.branch_current("source", v)
        is_sg = isinstance(self.source, SgSourceSpec)
        v_t = lad.voltage("bus1" if is_sg else "t", v)
        s_t = v_t * np.conj(i_src)
        node_ph = {name: lad.voltage(name, v) for name in lad.node_of}
        branch_ph = {"filter": i_src}
        for name in ("xfmr", "line_a", "line_b", "stub"):
            if lad.has_branch(name):
                branch_ph[name] = lad.branch_current(name, v)
        branch_ph["grid"] = -lad.branch_current("grid", v)
        branch_ph["xfmr0"] = 0j
        return PrefaultSolution(
            e_src1=complex(e_src1),
            e_fy=lad.voltage("fault", v) if "fault" in lad.node_of else lad.voltage("bus1", v),
            v_pre1=lad.voltage("bus1", v),
            i_pre1=i_line,
            i_tpre1=i_src,
            v_tpre1=v_t,
            p_t=float(s_t.real),
            q_t=float(s_t.imag),
            node_phasors=node_ph,
            branch_phasors=branch_ph,
        )

    def operating_point(self, p_ref: float, q_ref: float = 0.0, v_n1: float = 1.0,
                        k_q: float = 0.05) -> complex:
        """EMF phasor that satisfies the power targets with the Q droop.

        Solves ``P_t = p_ref`` and ``|e| = v_n1 + k_q (q_ref - Q_t)`` by
        Newton iteration on the complex EMF.
        """
        from scipy.optimize import root

        def mismatch(x):
            e = complex(x[0], x[1])
            sol = self.prefault(e)
            return [sol.p_t - p_ref,
                    abs(e) - (v_n1 + k_q * (q_ref - sol.q_t))]

        res = root(mismatch, x0=[v_n1, 0.3 * p_ref], tol=1e-12)
        if not res.success or max(abs(np.asarray(mismatch(res.x)))) > 1e-9:
            raise RuntimeError(f"pre-fault operating point did not converge: {res.message}")
        return complex(res.x[0], res.x[1])

    # -- fault ------------------------------------------------------------------

    def _fault_emf(self, pre: PrefaultSolution) -> complex:
        if isinstance(self.source, SgSourceSpec):
            return pre.e_src1
        if self.source.mode == "interoperable":
            return pre.e_src1 + pre.i_tpre1 * self.source.z_v1
        return pre.e_src1  # conventional / ideal: IVS holds its pre-fault value

    def _closed_form_dz(self, pre: PrefaultSolution, i1: complex, e_ref1: complex) -> complex:
        p = self.params
        if isinstance(self.source, SgSourceSpec):
            s = self.source
            return 1j * s.x_sg1 + s.z_s1
        z_filt = p.r_filter_pu + 1j * p.x_filter_pu
        z_xfmr = (p.r_xfmr_pu + 1j * p.x_xfmr_pu) if p.has_xfmr else 0j
        fixed = z_filt + z_xfmr
        if self.source.mode == "interoperable":
            return fixed + self.source.z_v1
        if self.source.mode == "ideal":
            return fixed
        # conventional: additional term from the source-dynamics mismatch
        di = i1 - pre.i_pre1
        z_ad = (pre.e_src1 - e_ref1 + i1 * self.source.z_v1) / di
        return fixed + z_ad

    def solve(self, fault: FaultSpec, e_src1: complex) -> OracleSolution:
        if fault.fault_type not in FAULT_TYPES:
            raise ValueError(f"unsupported fault type {fault.fault_type!r}")
        p = self.params
        pre = self.prefault(e_src1)
        e_ref1 = self._fault_emf(pre)

        # fault-state ladders (equivalent pre-fault circuit per sequence)
        lads = [self._build_ladder(s, e_ref1 if s == 1 else 0j, "fault")
                for s in (0, 1, 2)]
        f_nodes = [lad.node_of["fault"] if "fault" in lad.node_of else lad.node_of["bus1"]
                   for lad in lads]

        # open-circuit (no-fault) state of the fault-state network
        v_open = [lad.solve() for lad in lads]
        e_fy_equiv = complex(v_open[1][f_nodes[1]])

        # route 1: combined solve with the fault stamped in sequence coordinates
        r_f_pu = fault.r_fault_ohm / p.z_base_grid_ohm
        y_f_abc = fault_admittance(fault.fault_type, r_f_pu).astype(complex)
        y_f_seq = _A_INV @ y_f_abc @ _A_FORT
        sizes = [lad.n_nodes for lad in lads]
        offs = np.concatenate([[0], np.cumsum(sizes)])
        n_tot = offs[-1]
        y_big = np.zeros((n_tot, n_tot), dtype=complex)
        rhs_big = np.zeros(n_tot, dtype=complex)
        for s, lad in enumerate(lads):
            y, rhs = lad.system()
            y_big[offs[s]:offs[s + 1], offs[s]:offs[s + 1]] = y
            rhs_big[offs[s]:offs[s + 1]] = rhs
        for s in range(3):
            for s2 in range(3):
                y_big[offs[s] + f_nodes[s], offs[s2] + f_nodes[s2]] += y_f_seq[s, s2]
        v_big = np.linalg.solve(y_big, rhs_big)
        v_seq = [v_big[offs[s]:offs[s + 1]] for s in range(3)]

        # route 2: Thevenin boundary + per-sequence back-injection
        z_th = [lad.thevenin(f_nodes[i]) for i, lad in enumerate(lads)]
        v_pre_seq = np.array([0j, e_fy_equiv, 0j])
        z_abc = _A_FORT @ np.diag(z_th) @ _A_INV
        v_pre_abc = _A_FORT @ v_pre_seq
        i_f_abc = np.linalg.solve(np.eye(3, dtype=complex) + y_f_abc @ z_abc,
                                  y_f_abc @ v_pre_abc)
        i_f_seq = _A_INV @ i_f_abc
        # pure-fault response (sources removed, fault current drawn at F)
        # superposed on the open-circuit state
        v_route2 = [self._pure_solve(lads[s], f_nodes[s], -i_f_seq[s]) + v_open[s]
                    for s in range(3)]

        resid = 0.0
        for s in range(3):
            resid = max(resid, float(np.abs(v_seq[s] - v_route2[s]).max()))
        # fault currents from route 1 for cross-checking
        v_f_vec = np.array([v_seq[s][f_nodes[s]] for s in range(3)])
        i_f_from_v = _A_INV @ (y_f_abc @ (_A_FORT @ v_f_vec))
        resid = max(resid, float(np.abs(i_f_from_v - i_f_seq).max()))

        # measurements at bus 1 (route 1)
        def relay_current(lad, v):
            name = "line_a" if lad.has_branch("line_a") else (
                "line_b" if lad.has_branch("line_b") else "grid")
            cur = lad.branch_current(name, v)
            return -cur if name == "grid" else cur

        v_bus = [lads[s].voltage("bus1", v_seq[s]) for s in range(3)]
        i_bus = [relay_current(lads[s], v_seq[s]) for s in range(3)]
        v_f = [complex(v_seq[s][f_nodes[s]]) for s in range(3)]

        dv1 = v_bus[1] - pre.v_pre1
        di1 = i_bus[1] - pre.i_pre1
        dv_f1 = v_f[1] - e_fy_equiv

        tiny = 1e-12
        dz_e1 = -dv1 / di1 if abs(di1) > tiny else None
        z_e2 = -v_bus[2] / i_bus[2] if abs(i_bus[2]) > tiny else None
        z_e0 = -v_bus[0] / i_bus[0] if abs(i_bus[0]) > tiny else None
        z_eq20 = v_f[1] / i_f_seq[1] if abs(i_f_seq[1]) > tiny else None
        closed = self._closed_form_dz(pre, i_bus[1], e_ref1)
        if isinstance(self.source, SgSourceSpec):
            z_ad = None  # source-dynamics mismatch term is an inverter concept
        else:
            p_ = self.params
            z_fixed = (p_.r_filter_pu + 1j * p_.x_filter_pu) + (
                (p_.r_xfmr_pu + 1j * p_.x_xfmr_pu) if p_.has_xfmr else 0j)
            z_ad = dz_e1 - z_fixed if dz_e1 is not None else None

        return OracleSolution(
            fault=fault, pre=pre, e_ref1_fault=e_ref1, e_fy_equiv=e_fy_equiv,
            v1=v_bus[1], i1=i_bus[1], v2=v_bus[2], i2=i_bus[2],
            v0=v_bus[0], i0=i_bus[0],
            v_f0=v_f[0], v_f1=v_f[1], v_f2=v_f[2],
            i_f0=complex(i_f_seq[0]), i_f1=complex(i_f_seq[1]), i_f2=complex(i_f_seq[2]),
            dv1=dv1, di1=di1, dv_f1=dv_f1,
            dz_e1=dz_e1, z_e2=z_e2, z_e0=z_e0, z_ad=z_ad, z_eq20=z_eq20,
            dz_e1_closed=closed,
            z_th0=z_th[0], z_th1=z_th[1], z_th2=z_th[2],
            superposition_residual=resid,
        )

    @staticmethod
    def _pure_solve(lad: _SeqLadder, f_node: int, injection: complex) -> np.ndarray:
        """Solve the network with all EMFs removed and a current injection."""
        y, _ = lad.system()
        rhs = np.zeros(lad.n_nodes, dtype=complex)
        rhs[f_node] += injection
        return np.linalg.solve(y, rhs)


# --------------------------------------------------------------------------
# Phase-selection reference angles
# --------------------------------------------------------------------------


def zone_reference_angles(fault_type: str):
    """Expected comparator centers for a fault type, degrees.

    Computed from the pure-fault sequence currents at the fault location of a
    homogeneous, purely inductive network (unit reactance per sequence).
    Returns ``(dd21_center, d20_center)``; ``d20_center`` is ``None`` for
    ungrounded faults and both are ``None`` for balanced faults (no negative
    sequence exists).
    """
    if fault_type not in FAULT_TYPES:
        raise ValueError(f"unsupported fault type {fault_type!r}")
    if fault_type in ("abc", "abcg"):
        return None, None
    z_th = np.diag([1j, 1j, 1j]).astype(complex)
    z_abc = _A_FORT @ z_th @ _A_INV
    y_f = fault_admittance(fault_type, 1e-9).astype(complex)
    v_pre = _A_FORT @ np.array([0j, 1.0 + 0j, 0j])
    i_abc = np.linalg.solve(np.eye(3, dtype=complex) + y_f @ z_abc, y_f @ v_pre)
    i_seq = _A_INV @ i_abc
    dd21 = wrap_deg(angle_deg(i_seq[2]) - angle_deg(i_seq[1]))
    dd21 = float(round(dd21))
    if dd21 == -180.0:
        dd21 = 180.0
    _, grounded = _ground_info(fault_type)
    if not grounded:
        return dd21, None
    d20 = wrap_deg(angle_deg(i_seq[2]) - angle_deg(i_seq[0]))
    d20 = float(round(d20))
    if d20 == -180.0:
        d20 = 180.0
    return dd21, d20


def _ground_info(fault_type: str):
    from .network import fault_phases

    return fault_phases(fault_type)
