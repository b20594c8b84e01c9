"""Fixed-step time-domain model of the single-inverter infinite-bus circuit.

Topology (per-unit, both transformer sides on their nominal voltage bases so
the ratio disappears):

    inverter EMF --[L_f]-- T ==[delta-Y0 xfmr]== BUS1 --[line, split at m]-- BUS2 --[Z_g]-- grid EMF

The relay point is BUS1.  Every inductive element is integrated with the
trapezoidal rule in companion (admittance) form, which lets the delta winding
be modeled exactly: the series transformer branch admits only zero-sum
(alpha-beta) current, while a separate shunt branch at the grid-side winding
carries the zero-sequence circulating current.  Shunt faults are resistive
stamps inserted between steps.

Instantaneous per-unit signals are RMS-normalized (a 1.0 p.u. phasor is the
waveform ``sqrt(2)*cos``); see :mod:`frtsim.phasors`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._accel import maybe_njit

FAULT_TYPES = ("ag", "bg", "cg", "ab", "bc", "ca", "abg", "bcg", "cag", "abc", "abcg")

# resistance floor for "bolted" faults; keeps the nodal matrix well conditioned
R_FAULT_FLOOR_PU = 1e-5

# tiny zero-sequence tie that pins the floating common mode of the 3-wire
# inverter terminal; carries no current in operation
_G_COMMON_MODE_TIE = 1e-8

_J3 = np.ones((3, 3)) / 3.0
P_AB = np.eye(3) - _J3   # projector removing the common (zero-sequence) mode
P_0 = _J3                # projector onto the common mode
SQRT2 = np.sqrt(2.0)
_PHASE_SHIFT = np.exp(-2j * np.pi / 3 * np.arange(3))  # a, b, c rotations


class NetworkBuildError(ValueError):
    pass


class SimulationDiverged(RuntimeError):
    pass


def reactance_pu_from_inductance(l_h: float, v_ll_v: float, s_va: float, f_hz: float) -> float:
    """Per-unit reactance of an inductance on the ``v_ll``/``s`` base."""
    z_base = v_ll_v**2 / s_va
    return 2.0 * np.pi * f_hz * l_h / z_base


@dataclass
class NetworkParams:
    """Main-circuit parameters.

    Reactances are per-unit on ``s_base_va`` and the respective winding's
    nominal voltage; line data is entered in ohm/km on the grid side.  The
    per-unit voltage base is the nominal line-to-neutral RMS voltage, so the
    line-to-line grid voltage reads sqrt(3) = 1.732 p.u.
    """

    f1_hz: float = 50.0
    s_base_va: float = 100e6
    v_nom_grid_v: float = 220e3     # L-L RMS
    v_nom_inv_v: float = 33e3       # L-L RMS
    x_filter_pu: float = 0.1442
    r_filter_pu: float = 0.0015
    has_xfmr: bool = True
    x_xfmr_pu: float = 0.05
    r_xfmr_pu: float = 0.0005
    x_xfmr0_pu: float | None = None   # defaults to x_xfmr_pu
    r_xfmr0_pu: float | None = None
    line_km: float = 100.0
    z_line1_ohm_per_km: complex = 0.03 + 0.34j
    z_line0_ohm_per_km: complex = 0.18 + 1.19j
    z_grid1_pu: complex = 0.12984j
    z_grid0_pu: complex | None = None  # defaults to z_grid1_pu
    v_grid_pu: float = 1.0            # L-N RMS phasor magnitude
    v_grid_deg: float = 0.0
    stub_km: float = 1.0              # reverse-fault stub length

    def __post_init__(self):
        if self.x_filter_pu <= 0:
            raise NetworkBuildError("x_filter_pu must be > 0")
        if self.has_xfmr and self.x_xfmr_pu <= 0:
            raise NetworkBuildError("x_xfmr_pu must be > 0")
        if self.line_km > 0 and (
            self.z_line1_ohm_per_km.imag <= 0 or self.z_line0_ohm_per_km.imag <= 0
        ):
            raise NetworkBuildError("line reactance must be > 0")
        if self.z_line1_ohm_per_km.real < 0 or self.z_line0_ohm_per_km.real < 0:
            raise NetworkBuildError("line resistance must be >= 0")
        if self.z_grid1_pu.imag <= 0:
            raise NetworkBuildError("grid impedance must be inductive")

    @property
    def omega1(self) -> float:
        return 2.0 * np.pi * self.f1_hz

    @property
    def z_base_grid_ohm(self) -> float:
        return self.v_nom_grid_v**2 / self.s_base_va

    @property
    def n_ratio(self) -> float:
        """Turns ratio, inverter side / grid side (unity in per-unit)."""
        return self.v_nom_inv_v / self.v_nom_grid_v

    @property
    def z_line1_pu(self) -> complex:
        return self.z_line1_ohm_per_km * self.line_km / self.z_base_grid_ohm

    @property
    def z_line0_pu(self) -> complex:
        return self.z_line0_ohm_per_km * self.line_km / self.z_base_grid_ohm

    @property
    def z_stub1_pu(self) -> complex:
        return self.z_line1_ohm_per_km * self.stub_km / self.z_base_grid_ohm

    @property
    def z_stub0_pu(self) -> complex:
        return self.z_line0_ohm_per_km * self.stub_km / self.z_base_grid_ohm

    def xfmr0(self) -> tuple[float, float]:
        x0 = self.x_xfmr_pu if self.x_xfmr0_pu is None else self.x_xfmr0_pu
        r0 = self.r_xfmr_pu if self.r_xfmr0_pu is None else self.r_xfmr0_pu
        return x0, r0

    def grid0(self) -> complex:
        return self.z_grid1_pu if self.z_grid0_pu is None else self.z_grid0_pu


@dataclass
class FaultSpec:
    """Shunt fault applied at fraction ``m`` of the line (forward side) or on
    the stub behind bus 1 (reverse side, ``m`` ignored)."""

    fault_type: str = "ag"
    m: float = 0.5
    r_fault_ohm: float = 0.0
    t_on: float = 0.1
    t_off: float = 1.0
    side: str = "forward"

    def __post_init__(self):
        if self.fault_type not in FAULT_TYPES:
            raise ValueError(f"unknown fault type {self.fault_type!r}")
        if not 0.0 <= self.m <= 1.0:
            raise ValueError("fault location m must be in [0, 1]")
        if self.r_fault_ohm < 0:
            raise ValueError("fault resistance must be >= 0")
        if self.t_off <= self.t_on:
            raise ValueError("t_off must exceed t_on")
        if self.side not in ("forward", "reverse"):
            raise ValueError("side must be 'forward' or 'reverse'")


@dataclass
class GridDisturbance:
    """Thevenin-source disturbance window.

    ``sag_pu`` is the absolute retained source magnitude during the window
    ("drops to 0.1 p.u." means ``sag_pu = 0.1`` regardless of the nominal
    setting); ``None`` keeps the magnitude.  The phase jump is additive.
    """

    sag_pu: float | None = None
    phase_jump_deg: float = 0.0
    t_on: float = 0.1
    t_off: float = 0.4

    def __post_init__(self):
        if self.sag_pu is not None and not 0.0 <= self.sag_pu <= 1.0:
            raise ValueError("sag_pu (retained voltage) must be in [0, 1]")
        if self.t_off <= self.t_on:
            raise ValueError("t_off must exceed t_on")


def fault_phases(fault_type: str) -> tuple[list[int], bool]:
    """Faulted phase indices and ground involvement for a fault type."""
    if fault_type in ("ab", "bc", "ca", "abc"):
        letters, grounded = fault_type, False
    else:
        letters, grounded = fault_type[:-1], True
    return [ord(ch) - ord("a") for ch in letters], grounded


def fault_admittance(fault_type: str, r_fault_pu: float) -> np.ndarray:
    """3x3 ground-referenced conductance stamp for a shunt fault.

    Grounded faults put ``R_f`` from each faulted phase to ground;
    phase-phase faults put ``R_f`` between the two phases; the ungrounded
    three-phase fault is a floating resistive star (common mode blocked).
    """
    if fault_type not in FAULT_TYPES:
        raise ValueError(f"unknown fault type {fault_type!r}")
    g = 1.0 / max(r_fault_pu, R_FAULT_FLOOR_PU)
    y = np.zeros((3, 3))
    phases, grounded = fault_phases(fault_type)
    if fault_type == "abc":
        return g * P_AB.copy()
    if grounded:
        for p in phases:
            y[p, p] += g
        return y
    # two-phase, ungrounded
    p, q = phases
    y[p, p] += g
    y[q, q] += g
    y[p, q] -= g
    y[q, p] -= g
    return y


def _circulant(z0: complex, z1: complex) -> np.ndarray:
    s = (z0 + 2.0 * z1) / 3.0
    m = (z0 - z1) / 3.0
    out = np.full((3, 3), m)
    np.fill_diagonal(out, s)
    return out


# --------------------------------------------------------------------------
# Companion-model step kernels
# --------------------------------------------------------------------------


@maybe_njit
def _mv3(m, x, out):  # pragma: no cover - jitted
    out[0] = m[0, 0] * x[0] + m[0, 1] * x[1] + m[0, 2] * x[2]
    out[1] = m[1, 0] * x[0] + m[1, 1] * x[1] + m[1, 2] * x[2]
    out[2] = m[2, 0] * x[0] + m[2, 1] * x[1] + m[2, 2] * x[2]


@maybe_njit
def _gather_u(p_idx, p_src, v, src, out):  # pragma: no cover - jitted
    if p_idx >= 0:
        for k in range(3):
            out[k] = v[p_idx + k]
    elif p_src >= 0:
        for k in range(3):
            out[k] = src[p_src, k]
    else:
        for k in range(3):
            out[k] = 0.0


@maybe_njit
def _network_step(
    g_mat, p_idx, p_src, n_idx, n_src, b_all, c0_all, i_state,
    v_prev, src_prev, src_next, rhs, h_scr, up, un, tmp,
):  # pragma: no cover - jitted
    nb = b_all.shape[0]
    nu = rhs.shape[0]
    for k in range(nu):
        rhs[k] = 0.0
    for b in range(nb):
        _gather_u(p_idx[b], p_src[b], v_prev, src_prev, up)
        _gather_u(n_idx[b], n_src[b], v_prev, src_prev, un)
        for k in range(3):
            up[k] = up[k] - un[k]
        # h = C0 @ i + B @ u_prev
        _mv3(c0_all[b], i_state[b], tmp)
        _mv3(b_all[b], up, un)
        for k in range(3):
            h_scr[b, k] = tmp[k] + un[k]
        if p_idx[b] >= 0:
            for k in range(3):
                rhs[p_idx[b] + k] -= h_scr[b, k]
            if n_src[b] >= 0:
                _mv3(b_all[b], src_next[n_src[b]], tmp)
                for k in range(3):
                    rhs[p_idx[b] + k] += tmp[k]
        if n_idx[b] >= 0:
            for k in range(3):
                rhs[n_idx[b] + k] += h_scr[b, k]
            if p_src[b] >= 0:
                _mv3(b_all[b], src_next[p_src[b]], tmp)
                for k in range(3):
                    rhs[n_idx[b] + k] += tmp[k]
    v_new = np.linalg.solve(g_mat, rhs)
    # i' = h + B @ u_new
    for b in range(nb):
        _gather_u(p_idx[b], p_src[b], v_new, src_next, up)
        _gather_u(n_idx[b], n_src[b], v_new, src_next, un)
        for k in range(3):
            up[k] = up[k] - un[k]
        _mv3(b_all[b], up, tmp)
        for k in range(3):
            i_state[b, k] = h_scr[b, k] + tmp[k]
    return v_new


@maybe_njit
def _run_segment(
    g_mat, p_idx, p_src, n_idx, n_src, b_all, c0_all, i_state,
    v_prev, src_series, v_out, i_out, start, stop,
):  # pragma: no cover - jitted
    """Batch stepping for source-driven (controller-free) runs."""
    nu = v_prev.shape[0]
    rhs = np.empty(nu)
    up = np.empty(3)
    un = np.empty(3)
    tmp = np.empty(3)
    nb = b_all.shape[0]
    h_scr = np.empty((nb, 3))
    src_prev = src_series[start].copy()
    for k in range(start, stop):
        v_new = _network_step(
            g_mat, p_idx, p_src, n_idx, n_src, b_all, c0_all, i_state,
            v_prev, src_prev, src_series[k + 1], rhs, h_scr, up, un, tmp,
        )
        for j in range(nu):
            v_prev[j] = v_new[j]
        src_prev = src_series[k + 1].copy()
        for j in range(nu):
            v_out[k + 1, j] = v_new[j]
        for b in range(nb):
            for j in range(3):
                i_out[k + 1, b, j] = i_state[b, j]
    return v_prev


class NetworkModel:
    """Discretized network with trapezoidal companion branches.

    Node groups (three phases each) are looked up by name; branch currents by
    branch name.  ``reverse_stub=True`` inserts the stub segment between the
    transformer and bus 1 and exposes the ``"fault"`` group on it.
    """

    def __init__(self, params: NetworkParams, ts: float, m: float = 0.5,
                 reverse_stub: bool = False, validate: bool = False):
        self.params = params
        self.ts = float(ts)
        self.m = float(m)
        self.reverse_stub = bool(reverse_stub)
        self.validate = validate
        self.t = 0.0
        self.kcl_residual_max = 0.0
        self._build()

    # -- construction ------------------------------------------------------

    def _build(self):
        p = self.params
        w1 = p.omega1
        dt = self.ts

        # resolve node-group aliases
        groups: list[str] = []

        def add_group(name: str) -> str:
            if name not in groups:
                groups.append(name)
            return name

        alias: dict[str, str] = {}
        if p.has_xfmr:
            add_group("t")
        if self.reverse_stub:
            add_group("fault")        # stub node, transformer grid-side winding
            add_group("bus1")
            add_group("bus2")
            if not p.has_xfmr:
                alias["t"] = "fault"
        else:
            add_group("bus1")
            if not p.has_xfmr:
                alias["t"] = "bus1"
            if p.line_km == 0.0:
                alias["fault"] = "bus1"
                alias["bus2"] = "bus1"
            elif self.m == 0.0:
                alias["fault"] = "bus1"
                add_group("bus2")
            elif self.m == 1.0:
                add_group("bus2")
                alias["fault"] = "bus2"
            else:
                add_group("fault")
                add_group("bus2")

        self._group_base = {g: 3 * i for i, g in enumerate(groups)}
        for a, target in alias.items():
            self._group_base[a] = self._group_base[target]
        self.n_unknown = 3 * len(groups)

        # branches: (name, p_end, n_end, A, R, L_energy)
        # ends are ("node", group) | ("src", 0 inverter / 1 grid) | ("gnd",)
        specs = []

        def l_of(x_pu: float) -> float:
            return x_pu / w1

        lf = l_of(p.x_filter_pu)
        specs.append(("filter", ("src", 0), ("node", "t"),
                      P_AB / lf, p.r_filter_pu * np.eye(3), lf * P_AB))
        xfmr_grid_side = "fault" if self.reverse_stub else "bus1"
        if p.has_xfmr:
            lt = l_of(p.x_xfmr_pu)
            specs.append(("xfmr", ("node", "t"), ("node", xfmr_grid_side),
                          P_AB / lt, p.r_xfmr_pu * np.eye(3), lt * P_AB))
            x0, r0 = p.xfmr0()
            lt0 = l_of(x0)
            specs.append(("xfmr0", ("node", xfmr_grid_side), ("gnd",),
                          P_0 / lt0, r0 * np.eye(3), lt0 * P_0))
        if self.reverse_stub:
            if p.stub_km <= 0:
                raise NetworkBuildError("reverse faults need stub_km > 0")
            specs.append(self._line_branch("stub", "fault", "bus1",
                                           p.z_stub1_pu, p.z_stub0_pu, w1))
            if p.line_km > 0:
                specs.append(self._line_branch("line_a", "bus1", "bus2",
                                               p.z_line1_pu, p.z_line0_pu, w1))
        else:
            if p.line_km > 0 and self.m > 0.0:
                specs.append(self._line_branch("line_a", "bus1", "fault",
                                               self.m * p.z_line1_pu,
                                               self.m * p.z_line0_pu, w1))
            if p.line_km > 0 and self.m < 1.0:
                specs.append(self._line_branch("line_b", "fault", "bus2",
                                               (1 - self.m) * p.z_line1_pu,
                                               (1 - self.m) * p.z_line0_pu, w1))
        zg1, zg0 = p.z_grid1_pu, p.grid0()
        lg = _circulant(zg0.imag / w1, zg1.imag / w1)
        rg = _circulant(zg0.real, zg1.real)
        specs.append(("grid", ("node", "bus2"), ("src", 1),
                      np.linalg.inv(lg), rg, lg))

        nb = len(specs)
        self.branch_names = [s[0] for s in specs]
        self._b_all = np.zeros((nb, 3, 3))
        self._c0_all = np.zeros((nb, 3, 3))
        self._l_energy = np.zeros((nb, 3, 3))
        self._p_idx = np.full(nb, -1, dtype=np.int64)
        self._p_src = np.full(nb, -1, dtype=np.int64)
        self._n_idx = np.full(nb, -1, dtype=np.int64)
        self._n_src = np.full(nb, -1, dtype=np.int64)
        eye = np.eye(3)
        for b, (name, pe, ne, a_mat, r_mat, l_en) in enumerate(specs):
            ar = (dt / 2.0) * (a_mat @ r_mat)
            c1 = np.linalg.inv(eye + ar)
            self._c0_all[b] = c1 @ (eye - ar)
            self._b_all[b] = c1 @ ((dt / 2.0) * a_mat)
            self._l_energy[b] = l_en
            for end, idx_arr, src_arr in ((pe, self._p_idx, self._p_src),
                                          (ne, self._n_idx, self._n_src)):
                if end[0] == "node":
                    idx_arr[b] = self._group_base[end[1]]
                elif end[0] == "src":
                    src_arr[b] = end[1]

        self.i_state = np.zeros((nb, 3))
        self.v_prev = np.zeros(self.n_unknown)
        self.src_prev = np.zeros((2, 3))
        self._fault_stamp: np.ndarray | None = None
        self._fault_group = "fault"
        self._assemble_g()

        # scratch
        self._rhs = np.empty(self.n_unknown)
        self._h_scr = np.empty((nb, 3))
        self._up = np.empty(3)
        self._un = np.empty(3)
        self._tmp = np.empty(3)

    @staticmethod
    def _line_branch(name, p_group, n_group, z1, z0, w1):
        l_mat = _circulant(z0.imag / w1, z1.imag / w1)
        r_mat = _circulant(z0.real, z1.real)
        return (name, ("node", p_group), ("node", n_group),
                np.linalg.inv(l_mat), r_mat, l_mat)

    def _assemble_g(self):
        nu = self.n_unknown
        g = np.zeros((nu, nu))
        for b in range(len(self.branch_names)):
            bm = self._b_all[b]
            pi, ni = self._p_idx[b], self._n_idx[b]
            if pi >= 0:
                g[pi:pi + 3, pi:pi + 3] += bm
                if ni >= 0:
                    g[pi:pi + 3, ni:ni + 3] -= bm
            if ni >= 0:
                g[ni:ni + 3, ni:ni + 3] += bm
                if pi >= 0:
                    g[ni:ni + 3, pi:pi + 3] -= bm
        if self.params.has_xfmr and "t" in self._group_base:
            ti = self._group_base["t"]
            g[ti:ti + 3, ti:ti + 3] += _G_COMMON_MODE_TIE * P_0
        if self._fault_stamp is not None:
            fi = self._group_base[self._fault_group]
            g[fi:fi + 3, fi:fi + 3] += self._fault_stamp
        self._check_singular(g)
        self.g_mat = g

    def _check_singular(self, g):
        if np.linalg.matrix_rank(g) < g.shape[0]:
            for name, base in self._group_base.items():
                blk = g[base:base + 3, base:base + 3]
                if np.linalg.matrix_rank(blk) < 3:
                    raise NetworkBuildError(f"singular conductance matrix at node group {name!r}")
            raise NetworkBuildError("singular conductance matrix")

    # -- topology events ----------------------------------------------------

    def apply_fault(self, fault_type: str, r_fault_ohm: float):
        r_pu = r_fault_ohm / self.params.z_base_grid_ohm
        self._fault_stamp = fault_admittance(fault_type, r_pu)
        self._assemble_g()

    def clear_fault(self):
        self._fault_stamp = None
        self._assemble_g()

    # -- state access -------------------------------------------------------

    def node_voltage(self, group: str) -> np.ndarray:
        base = self._group_base[group]
        return self.v_prev[base:base + 3]

    def branch_current(self, name: str) -> np.ndarray:
        return self.i_state[self.branch_names.index(name)]

    @property
    def line_branch_name(self) -> str:
        return "line_a" if "line_a" in self.branch_names else "stub"

    def poc_sample(self):
        """(v_bus1, i_line) instantaneous triples at the relay point."""
        i_line = self.branch_current("line_a") if "line_a" in self.branch_names else None
        if i_line is None:
            # degenerate zero-length line: relay current is the grid branch
            i_line = self.branch_current("grid")
        return self.node_voltage("bus1"), i_line

    def energy(self) -> float:
        e = 0.0
        for b in range(len(self.branch_names)):
            i = self.i_state[b]
            e += 0.5 * i @ self._l_energy[b] @ i
        return float(e)

    # -- stepping -----------------------------------------------------------

    def set_initial_state(self, node_pos: dict, branch_pos: dict, src_pos: dict, t0: float = 0.0):
        """Seed a balanced positive-sequence steady state from phasors.

        ``node_pos``/``branch_pos`` map group/branch names to positive-sequence
        RMS phasors; ``src_pos`` maps source index 0/1 to the EMF phasors.
        """
        self.t = t0
        rot = np.exp(1j * self.params.omega1 * t0)
        for gname, base in self._group_base.items():
            ph = node_pos.get(gname)
            if ph is None:
                continue
            self.v_prev[base:base + 3] = SQRT2 * (ph * rot * _PHASE_SHIFT).real
        for bname, ph in branch_pos.items():
            if bname in self.branch_names:
                b = self.branch_names.index(bname)
                self.i_state[b] = SQRT2 * (ph * rot * _PHASE_SHIFT).real
        for s, ph in src_pos.items():
            self.src_prev[s] = SQRT2 * (ph * rot * _PHASE_SHIFT).real

    def step(self, e_next: np.ndarray, vg_next: np.ndarray):
        """Advance one step with the given source instantaneous values."""
        src_next = np.empty((2, 3))
        src_next[0] = e_next
        src_next[1] = vg_next
        try:
            v_new = _network_step(
                self.g_mat, self._p_idx, self._p_src, self._n_idx, self._n_src,
                self._b_all, self._c0_all, self.i_state,
                self.v_prev, self.src_prev, src_next,
                self._rhs, self._h_scr, self._up, self._un, self._tmp,
            )
        except np.linalg.LinAlgError as exc:
            raise SimulationDiverged(
                f"nodal solve failed at t={self.t + self.ts:.6f}s: {exc}") from exc
        if self.validate:
            resid = np.abs(self.g_mat @ v_new - self._rhs).max()
            if resid > self.kcl_residual_max:
                self.kcl_residual_max = float(resid)
        if not np.isfinite(v_new).all():
            raise SimulationDiverged(f"non-finite node voltage at t={self.t + self.ts:.6f}s")
        self.v_prev = v_new
        self.src_prev = src_next
        self.t += self.ts
        return v_new

    def run_sources(self, e_series: np.ndarray, vg_series: np.ndarray,
                    events: list | None = None):
        """Batch-run against precomputed source waveforms (no controller).

        ``events`` is a list of (step_index, callable) applied between steps,
        used for fault application/clearing.  Returns the node-voltage history
        ``(n, n_unknown)`` and branch-current history ``(n, nb, 3)``; row ``k``
        is the state at ``t0 + k*ts``.
        """
        n = len(e_series)
        if len(vg_series) != n:
            raise ValueError("source series must have equal length")
        src_series = np.stack([np.asarray(e_series, dtype=float),
                               np.asarray(vg_series, dtype=float)], axis=1)
        src_series = np.ascontiguousarray(src_series)
        v_out = np.zeros((n, self.n_unknown))
        i_out = np.zeros((n, len(self.branch_names), 3))
        v_out[0] = self.v_prev
        i_out[0] = self.i_state
        self.src_prev = src_series[0].copy()
        marks = sorted(events or [], key=lambda e: e[0])
        pos = 0
        for step_idx, action in marks + [(n - 1, None)]:
            stop = min(step_idx, n - 1)
            if stop > pos:
                self.v_prev = _run_segment(
                    self.g_mat, self._p_idx, self._p_src, self._n_idx, self._n_src,
                    self._b_all, self._c0_all, self.i_state,
                    self.v_prev.copy(), src_series, v_out, i_out, pos, stop,
                )
                self.src_prev = src_series[stop].copy()
                pos = stop
            if action is not None:
                action()
        self.t += (n - 1) * self.ts
        if not np.isfinite(v_out).all():
            raise SimulationDiverged("non-finite node voltage in batch run")
        return v_out, i_out
