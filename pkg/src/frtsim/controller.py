"""Grid-forming control stack.

Per-step pipeline (strictly this order): measure -> sequence-separate ->
mode transition -> references -> voltage command.  The controller consumes
inverter-terminal instantaneous samples and produces the averaged-bridge
voltage command for the *next* simulation step.

Modes:

* ``NORMAL_SLOW`` -- droop power control (optionally a virtual-synchronous
  variant), closed loop.
* ``NORMAL_FAST`` -- same structure with the droop gain scaled up, selected
  while the filtered positive-sequence current exceeds ``i_thf``.
* ``INTEROP`` -- open-loop ride-through: the internal voltage is held at
  ``e_pre + i_pre * Z_v`` so the source dynamics seen by the incremental
  quantities match the pre-fault circuit; the phase integrator advances at
  exactly the nominal frequency.

The adaptive virtual inductances follow ``X_v = K_X * (I - I_thX)`` clamped
at zero, low-pass filtered for small-signal stability.  A transient virtual
resistance overlays the first ``t_r`` after ride-through entry to damp the
DC offset of the fault current.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .phasors import (
    DeltaBuffer,
    PeakTracker,
    SequenceSeparator,
    abc_to_alphabeta0,
    alphabeta0_to_abc,
)

SQRT2 = np.sqrt(2.0)


class ConfigError(ValueError):
    pass


class ControlMode(enum.Enum):
    NORMAL_SLOW = 0
    NORMAL_FAST = 1
    INTEROP = 2


@dataclass
class ControllerParams:
    """Tuning values.  Circuit tables give no controller numbers; defaults
    here are typical GFM tuning and are all configurable."""

    omega1: float = 2.0 * np.pi * 50.0
    ts: float = 1e-4
    v_n1: float = 1.0
    p_ref: float = 0.9    # pre-fault dispatch; below the fast/slow threshold
    q_ref: float = 0.0
    k_pp: float | None = None          # rad/s per p.u.; default 0.01*omega1
    use_vsg: bool = False
    vsg_d: float = 50.0
    vsg_h: float = 2.0
    rpc_droop: float = 0.05
    rpc_lpf_hz: float = 10.0
    # mode switching
    i_th1: float = 1.05                # RMS p.u., entry threshold
    i_th_boost: float = 1.25           # emergency overlay re-trigger level
    t_1: float = 0.05                  # drop-out delay
    t_p: float = 1.0                   # ride-through cap = relay memory span
    t_r: float = 0.05                  # transient-resistance / relay delay
    i_thf: float = 0.94                # fast/slow threshold
    fast_factor: float = 4.0
    # current-limiting control; thresholds sit above the worst normal load
    # current so the limiter never fights steady operation
    k_x1: float = 6.5
    k_x2: float = 12.0
    i_thx1: float = 1.05
    i_thx2: float = 0.1
    i_lim1: float = 1.5
    i_lim2: float = 0.3
    lpf1_hz: float = 20.0              # current-magnitude filter (synchronous frame)
    lpf2_hz: float = 10.0              # virtual-inductance smoothing (release rate)
    lpf2_attack_hz: float = 10.0       # attack rate (kept equal to release by default)
    x_v_max: float = 10.0              # sanity clamp on each virtual inductance
    drop_lpf_hz: float = 150.0         # band limit of the virtual-inductor derivative
    r_vt: float = 2.5                  # transient virtual resistance
    x_vt: float = 2.6                  # inductive floor the overlay hands off to
    x_vt_release_hz: float = 0.8       # floor bleed while the current presses the limit
    x_vt_trim_hz: float = 5.0          # faster bleed once current is below the entry threshold
    # active damping
    r_ad: float = 0.1
    hpf_hz: float = 5.0
    # pre-fault capture
    capture_delay_s: float = 0.02      # one estimator window before crossing
    scheme: str = "proposed"           # "proposed" | "conventional"
    # worst-case assumptions used when validating the gain sizing
    wc_dv1: float = 1.05
    wc_v_t2: float = 0.5
    i_tpre_max: float = 1.05

    def __post_init__(self):
        if self.k_pp is None:
            self.k_pp = 0.01 * self.omega1
        if self.scheme not in ("proposed", "conventional"):
            raise ConfigError(f"controller.scheme: unknown scheme {self.scheme!r}")


def gain_requirements(dv1_worst: float, v_t2_worst: float,
                      params: ControllerParams, x_filter_pu: float):
    """Lower bounds on the adaptive-inductance gains for the current limits.

    Evaluated at the limit point (``I = I_lim``).  Raises
    :class:`ConfigError` when a denominator is non-positive, i.e. the limits
    or thresholds are inconsistent.
    """
    den_margin = params.i_lim1 - params.i_tpre_max
    den_x1 = params.i_lim1 - params.i_thx1
    den_x2 = params.i_lim2 - params.i_thx2
    if den_margin <= 0:
        raise ConfigError("controller.i_lim1: must exceed the assumed pre-fault current")
    if den_x1 <= 0:
        raise ConfigError("controller.i_thx1: must be below i_lim1")
    if den_x2 <= 0:
        raise ConfigError("controller.i_thx2: must be below i_lim2")
    k_x1_min = dv1_worst / (den_margin * den_x1) - x_filter_pu / den_x1
    k_x2_min = v_t2_worst / (params.i_lim2 * den_x2) - x_filter_pu / den_x2
    return k_x1_min, k_x2_min


def validate_controller(params: ControllerParams, x_filter_pu: float):
    """Config-load validation: threshold ordering and gain sizing."""
    if params.t_1 >= params.t_p:
        raise ConfigError("controller.t_1: drop-out delay must be below t_p")
    if params.i_th1 <= 1.0:
        raise ConfigError("controller.i_th1: entry threshold must exceed nominal current")
    if params.i_thx1 > params.i_lim1:
        raise ConfigError("controller.i_thx1: must not exceed i_lim1")
    k1_min, k2_min = gain_requirements(params.wc_dv1, params.wc_v_t2, params, x_filter_pu)
    if params.k_x1 < k1_min:
        raise ConfigError(
            f"controller.k_x1: {params.k_x1} below required minimum {k1_min:.3f}")
    if params.k_x2 < k2_min:
        raise ConfigError(
            f"controller.k_x2: {params.k_x2} below required minimum {k2_min:.3f}")


def interoperable_reference(e_pre1: complex, i_tpre1: complex, z_v1: complex) -> complex:
    """Ride-through internal-voltage adjustment: ``e_pre + i_pre * Z_v``."""
    return e_pre1 + i_tpre1 * z_v1


class _Lpf:
    __slots__ = ("a", "y")

    def __init__(self, corner_hz: float, ts: float, y0: float = 0.0):
        self.a = 1.0 - np.exp(-2.0 * np.pi * corner_hz * ts)
        self.y = y0

    def step(self, x: float) -> float:
        self.y += self.a * (x - self.y)
        return self.y


class _AsymLpf:
    """First-order tracker with separate attack/release rates.

    Rising commands are followed fast (the limiter must engage within
    milliseconds); falling commands bleed off slowly, which keeps the
    current-magnitude feedback loop from ringing."""

    __slots__ = ("a_up", "a_dn", "y")

    def __init__(self, attack_hz: float, release_hz: float, ts: float):
        self.a_up = 1.0 - np.exp(-2.0 * np.pi * attack_hz * ts)
        self.a_dn = 1.0 - np.exp(-2.0 * np.pi * release_hz * ts)
        self.y = 0.0

    def step(self, x: float) -> float:
        a = self.a_up if x > self.y else self.a_dn
        self.y += a * (x - self.y)
        return self.y


class GfmController:
    """Stateful controller; one instance per scenario."""

    def __init__(self, params: ControllerParams):
        self.p = params
        ts = params.ts
        spc = int(round(2.0 * np.pi / (params.omega1 * ts)))
        self.samples_per_cycle = spc
        self.sep_v = SequenceSeparator(params.omega1, ts)
        self.sep_i = SequenceSeparator(params.omega1, ts)
        self.tracker = PeakTracker(spc)
        self.lpf_q = _Lpf(params.rpc_lpf_hz, ts)
        # sequence-current magnitudes are measured on synchronously filtered
        # phasors so switching/limiter ripple cannot feed the adaptive law
        self._a_meas = 1.0 - np.exp(-2.0 * np.pi * params.lpf1_hz * ts)
        self._ip_meas = 0j
        self._in_meas = 0j
        self.lpf_xv1 = _AsymLpf(params.lpf2_attack_hz, params.lpf2_hz, ts)
        self.lpf_xv2 = _AsymLpf(params.lpf2_attack_hz, params.lpf2_hz, ts)
        self.ivs_ring = DeltaBuffer(params.capture_delay_s, ts)
        self.it_ring = DeltaBuffer(params.capture_delay_s, ts)
        # The virtual inductances are realized as band-limited derivatives of
        # the separated currents (a true inductor s*L_v, two-stage filtered).
        # Unlike a j*X rotation of the filtered vector, this contributes no
        # negative damping to the slow DC-flux mode of the network, and the
        # known discrete response at the fundamental is compensated exactly.
        self._a_drop = 1.0 - np.exp(-2.0 * np.pi * params.drop_lpf_hz * ts)
        z1 = np.exp(1j * params.omega1 * ts)
        self._z1 = z1
        h_fund = ((1.0 - 1.0 / z1) / ts) * (self._a_drop / (1.0 - (1.0 - self._a_drop) / z1)) ** 2
        # exact fundamental response, including the one-step application delay
        self._drop_comp = 1j * params.omega1 * z1 / h_fund
        self._dp_prev = 0j
        self._dn_prev = 0j
        self._yp1 = 0j
        self._yp2 = 0j
        self._yn1 = 0j
        self._yn2 = 0j
        # active damping acts on current deviations from the tracked
        # fundamental (a high-pass in each sequence's synchronous frame), so
        # it has no effect on steady-state power control
        self._a_damp = 1.0 - np.exp(-2.0 * np.pi * params.hpf_hz * ts)
        self._ip_damp = 0j
        self._in_damp = 0j

        self.mode = ControlMode.NORMAL_SLOW
        self.theta_c1 = 0.0
        self.e_rpc = params.v_n1
        self.vsg_domega = 0.0
        self.armed = True
        self.s_f = False
        self.below_steps = 10**9
        self.interop_steps = 0
        self.tr_steps = 10**9
        self._interop_theta0 = 0.0
        self.e_pre1 = 0j
        self.i_tpre1 = 0j
        # bumpless-transfer blend applied for a few ms after leaving the
        # ride-through mode (the reference loses its i_pre * Z_v term)
        self._exit_blend = 0.0
        self._exit_ref = 0j
        self._a_exit = 1.0 - np.exp(-params.ts / 5e-3)
        self.i_max_rms = 0.0
        self.i_t1_f = 0.0
        self.i_t2_f = 0.0
        self.x_v1 = 0.0
        self.x_v2 = 0.0
        self._x_floor = 0.0
        self._a_floor = 1.0 - np.exp(-2.0 * np.pi * params.x_vt_release_hz * ts)
        self._a_floor_trim = 1.0 - np.exp(-2.0 * np.pi * params.x_vt_trim_hz * ts)
        self.p_meas = 0.0
        self.q_meas = 0.0
        self.theta_out = 0.0
        self.e_out_mag = params.v_n1
        self._e_ref_stat = complex(params.v_n1)

    # -- helpers --------------------------------------------------------------

    @property
    def s_p(self) -> bool:
        return self.mode is ControlMode.INTEROP

    @property
    def tr_active(self) -> bool:
        return self.tr_steps * self.p.ts < self.p.t_r

    def r_vt_now(self) -> float:
        """Transient virtual resistance, ramped out across the t_r window so
        the adaptive inductance takes over without a current step.  The ramp
        is quadratic: near-full damping early (while the inductance is still
        building), tapering to zero by t_r."""
        frac = self.tr_steps * self.p.ts / self.p.t_r
        if frac >= 1.0:
            return 0.0
        return self.p.r_vt * (1.0 - frac * frac)

    def z_v1(self) -> complex:
        return self.r_vt_now() + 1j * self.x_v1

    def z_v2(self) -> complex:
        return self.r_vt_now() + 1j * self.x_v2

    def init_steady(self, e1: complex, v_t1: complex, i_t1: complex, t0: float = 0.0):
        """Seed every internal state for a balanced steady operating point.

        ``e1``/``v_t1``/``i_t1`` are stationary RMS phasors of the internal
        voltage, terminal voltage, and terminal current.
        """
        p = self.p
        w1 = p.omega1
        self.theta_c1 = np.angle(e1) + w1 * t0
        self.e_rpc = abs(e1)
        s = v_t1 * np.conj(i_t1)
        self.lpf_q.y = s.imag
        self.p_meas, self.q_meas = s.real, s.imag
        self._ip_meas = SQRT2 * i_t1
        self._in_meas = 0j
        amp_i = SQRT2 * abs(i_t1)
        ph_i = np.angle(i_t1) + np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3])
        self.tracker.prefill_steady(np.full(3, amp_i), ph_i, w1, p.ts, t0)
        rot_prev = np.exp(1j * w1 * (t0 - p.ts))
        self.sep_v.preload(SQRT2 * v_t1 * rot_prev, 0j)
        self.sep_i.preload(SQRT2 * i_t1 * rot_prev, 0j)
        self.ivs_ring.prefill(e1)
        self.it_ring.prefill(i_t1)
        self._ip_damp = SQRT2 * i_t1
        self._in_damp = 0j
        ip_prev = SQRT2 * i_t1 * rot_prev
        gd = (1.0 - 1.0 / self._z1) / p.ts
        gl = self._a_drop / (1.0 - (1.0 - self._a_drop) / self._z1)
        self._dp_prev = ip_prev
        self._yp1 = gd * gl * ip_prev
        self._yp2 = gd * gl * gl * ip_prev
        self._dn_prev = 0j
        self._yn1 = 0j
        self._yn2 = 0j
        self.i_max_rms = abs(i_t1)
        self.theta_out = self.theta_c1
        self.e_out_mag = abs(e1)
        self._e_ref_stat = e1

    # -- mode machine ----------------------------------------------------------

    def _mode_transition(self):
        p = self.p
        ts = p.ts
        self.s_f = self.i_max_rms >= p.i_th1
        if self.s_f:
            self.below_steps = 0
        else:
            self.below_steps += 1
        dropout = self.below_steps * ts >= p.t_1

        if self.mode is ControlMode.INTEROP:
            self.interop_steps += 1
            self.tr_steps += 1
            if self.interop_steps * ts >= p.t_p or dropout:
                self.mode = ControlMode.NORMAL_SLOW
                self.armed = False   # re-arm via the clean drop-out condition
                self._exit_blend = 1.0
                self._exit_ref = self._e_ref_stat
        else:
            self.tr_steps += 1
            # re-arm only once the limiter has fully disengaged and the
            # current is still below threshold; otherwise the overlay would
            # re-fire cyclically against a persisting fault
            if not self.armed and dropout and max(self.x_v1, self.x_v2) <= 0.02:
                self.armed = True
            if self.armed and self.s_f:
                # transient virtual resistance fires on the crossing in both
                # schemes; the ride-through mode only in the proposed one
                self.tr_steps = 0
                if p.scheme == "proposed":
                    self.mode = ControlMode.INTEROP
                    self.interop_steps = 0
                    self._interop_theta0 = self.theta_c1
                    e_cap = self.ivs_ring.delayed()
                    i_cap = self.it_ring.delayed()
                    self.e_pre1 = e_cap if e_cap is not None else self._e_ref_stat
                    self.i_tpre1 = i_cap if i_cap is not None else 0j
                else:
                    self.armed = False
            elif not self.tr_active and self.i_max_rms >= p.i_th_boost:
                # hard surge while disarmed (e.g. recovery transient): re-fire
                # the limiting overlay alone, without ride-through captures
                self.tr_steps = 0

        if self.mode is not ControlMode.INTEROP and p.scheme == "proposed":
            fast = abs(self._ip_meas) / SQRT2 >= p.i_thf
            self.mode = ControlMode.NORMAL_FAST if fast else ControlMode.NORMAL_SLOW

    # -- main step ---------------------------------------------------------------

    def step(self, t: float, v_t_abc, i_t_abc) -> np.ndarray:
        """Consume the sample at time ``t``; return the command for ``t + ts``."""
        p = self.p
        ts = p.ts
        w1 = p.omega1
        t_next = t + ts

        # measurements
        va, vb, _ = abc_to_alphabeta0(*v_t_abc)
        ia, ib, _ = abc_to_alphabeta0(*i_t_abc)
        v_pos, v_neg = self.sep_v.step(va, vb)
        i_pos, i_neg = self.sep_i.step(ia, ib)
        s_pu = 0.5 * (v_pos * np.conj(i_pos))
        self.p_meas = s_pu.real
        self.q_meas = s_pu.imag
        self.i_max_rms = self.tracker.step(*i_t_abc) / SQRT2

        # fundamental sequence-current magnitudes (synchronous-frame filtered)
        rot = np.exp(-1j * w1 * t)
        self._ip_meas += self._a_meas * (i_pos * rot - self._ip_meas)
        self._in_meas += self._a_meas * (i_neg * np.conj(rot) - self._in_meas)
        i1_f = abs(self._ip_meas) / SQRT2
        i2_f = abs(self._in_meas) / SQRT2
        self.i_t1_f = i1_f
        self.i_t2_f = i2_f

        # adaptive virtual inductances (clamped law through the smoothing LPF)
        x_law1 = self.lpf_xv1.step(min(p.x_v_max, max(0.0, p.k_x1 * (i1_f - p.i_thx1))))
        x_law2 = self.lpf_xv2.step(min(p.x_v_max, max(0.0, p.k_x2 * (i2_f - p.i_thx2))))

        # stationary-frame phasor of the measured terminal current
        i_stat = i_pos * rot / SQRT2
        self.it_ring.push(i_stat)
        self._ip_damp += self._a_damp * (i_pos * rot - self._ip_damp)
        self._in_damp += self._a_damp * (i_neg * np.conj(rot) - self._in_damp)

        # band-limited derivatives feeding the virtual-inductor drops
        dp = (i_pos - self._dp_prev) / ts
        dn = (i_neg - self._dn_prev) / ts
        self._dp_prev = i_pos
        self._dn_prev = i_neg
        self._yp1 += self._a_drop * (dp - self._yp1)
        self._yp2 += self._a_drop * (self._yp1 - self._yp2)
        self._yn1 += self._a_drop * (dn - self._yn1)
        self._yn2 += self._a_drop * (self._yn1 - self._yn2)

        self._mode_transition()

        # The transient overlay morphs from resistive to inductive: while the
        # resistance ramps out, an inductive floor ramps in, then relaxes
        # onto the measurement-driven law command from above (slow while the
        # current presses the limit, fast once it is below the mode
        # threshold).  The handoff therefore never opens a limiting gap.
        if self.tr_active:
            frac = min(1.0, self.tr_steps * ts / p.t_r)
            self._x_floor = max(self._x_floor, p.x_vt * frac)
        else:
            target = max(x_law1, x_law2)
            a = self._a_floor if self.i_max_rms >= p.i_th1 else self._a_floor_trim
            self._x_floor += a * (target - self._x_floor)
        self.x_v1 = max(x_law1, self._x_floor)
        self.x_v2 = max(x_law2, self._x_floor)

        # references
        if self.mode is ControlMode.INTEROP:
            self._e_ref_stat = interoperable_reference(self.e_pre1, self.i_tpre1, self.z_v1())
            theta_ref = w1 * t_next + np.angle(self._e_ref_stat)
            e_mag = abs(self._e_ref_stat)
            self.theta_c1 = self._interop_theta0 + w1 * (self.interop_steps * ts)
        else:
            err = p.p_ref - self.p_meas
            if self.mode is ControlMode.NORMAL_FAST:
                self.theta_c1 += ts * (w1 + p.fast_factor * p.k_pp * err)
                self.vsg_domega = 0.0
            elif p.use_vsg:
                self.vsg_domega += ts * (err - p.vsg_d * self.vsg_domega) / (2.0 * p.vsg_h)
                self.theta_c1 += ts * w1 * (1.0 + self.vsg_domega)
            else:
                self.theta_c1 += ts * (w1 + p.k_pp * err)
            q_f = self.lpf_q.step(self.q_meas)
            self.e_rpc = p.v_n1 + p.rpc_droop * (p.q_ref - q_f)
            ref = self.e_rpc * np.exp(1j * (self.theta_c1 - w1 * t_next))
            if self._exit_blend > 1e-3:
                # bumpless transfer out of the ride-through reference
                ref = ref + self._exit_blend * (self._exit_ref - ref)
                self._exit_blend *= 1.0 - self._a_exit
            self._e_ref_stat = ref
            theta_ref = w1 * t_next + np.angle(ref)
            e_mag = abs(ref)
        self.theta_out = theta_ref
        self.e_out_mag = e_mag
        self.ivs_ring.push(e_mag * np.exp(1j * (theta_ref - w1 * t_next)))

        # voltage command synthesis
        rot_next = np.exp(1j * w1 * t_next)
        e_cmd = SQRT2 * e_mag * np.exp(1j * theta_ref)
        e_cmd -= (self.x_v1 / w1) * self._drop_comp * self._yp2
        e_cmd -= (self.x_v2 / w1) * np.conj(self._drop_comp) * self._yn2
        r_tr = self.r_vt_now()
        if r_tr > 0.0:
            e_cmd -= r_tr * (i_pos + i_neg)
        i_fund = self._ip_damp * rot_next + self._in_damp * np.conj(rot_next)
        e_cmd -= p.r_ad * ((i_pos + i_neg) - i_fund)
        a, b, c = alphabeta0_to_abc(e_cmd.real, e_cmd.imag)
        return np.array([a, b, c])
