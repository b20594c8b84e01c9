"""Phasor arithmetic, symmetrical components, and waveform estimators.

Conventions used across the package:

* Phasors are Python/numpy ``complex`` values in RMS per-unit: the nominal
  phase voltage is ``1.0 + 0j``.
* Instantaneous per-unit signals are normalized to the RMS base, i.e. a
  1.0 p.u. phasor corresponds to the waveform ``sqrt(2)*cos(w1*t + ang)``.
  A unit-peak cosine therefore estimates to ``1/sqrt(2)`` p.u. RMS.
* Phase rotation is a-b-c; the Fortescue operator is ``ALPHA = 1 /_ 120 deg``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import maybe_njit

ALPHA = np.exp(2j * np.pi / 3)
SQRT2 = np.sqrt(2.0)


def phasor(mag: float, angle_deg: float) -> complex:
    """Build a complex phasor from magnitude and angle in degrees."""
    return mag * np.exp(1j * np.deg2rad(angle_deg))


def angle_deg(x) -> float:
    """Angle in degrees, in (-180, 180]."""
    a = np.rad2deg(np.angle(x))
    return np.where(a <= -180.0, a + 360.0, a) if np.ndim(a) else (
        a + 360.0 if a <= -180.0 else a
    )


def wrap_deg(a):
    """Wrap an angle difference into (-180, 180]."""
    w = (np.asarray(a) + 180.0) % 360.0 - 180.0
    w = np.where(w == -180.0, 180.0, w)
    return float(w) if np.ndim(a) == 0 else w


@dataclass(frozen=True)
class SequenceSet:
    """Zero/positive/negative symmetrical components of a three-phase set."""

    zero: complex
    positive: complex
    negative: complex


def abc_to_sequence(a, b, c) -> SequenceSet:
    """Fortescue transform, reference phase a.

    positive = (a + ALPHA*b + ALPHA^2*c)/3, negative with the conjugate
    rotation, zero = mean.  Accepts scalars or broadcastable arrays.
    """
    zero = (a + b + c) / 3.0
    positive = (a + ALPHA * b + ALPHA**2 * c) / 3.0
    negative = (a + ALPHA**2 * b + ALPHA * c) / 3.0
    return SequenceSet(zero, positive, negative)


def sequence_to_abc(s: SequenceSet):
    """Inverse Fortescue transform; exact inverse of :func:`abc_to_sequence`."""
    a = s.zero + s.positive + s.negative
    b = s.zero + ALPHA**2 * s.positive + ALPHA * s.negative
    c = s.zero + ALPHA * s.positive + ALPHA**2 * s.negative
    return a, b, c


def abc_to_alphabeta0(a, b, c):
    """Amplitude-invariant Clarke transform."""
    al = (2.0 * a - b - c) / 3.0
    be = (b - c) / np.sqrt(3.0)
    z0 = (a + b + c) / 3.0
    return al, be, z0


def alphabeta0_to_abc(al, be, z0=0.0):
    a = al + z0
    b = -0.5 * al + 0.5 * np.sqrt(3.0) * be + z0
    c = -0.5 * al - 0.5 * np.sqrt(3.0) * be + z0
    return a, b, c


# --------------------------------------------------------------------------
# Full-cycle DFT phasor estimation
# --------------------------------------------------------------------------


def dft_phasor(window, omega1: float, ts: float) -> complex:
    """Fundamental phasor of exactly one cycle of samples.

    The window must hold one fundamental period (``2*pi/(omega1*ts)``
    samples).  Returns the RMS phasor referenced to the first sample of the
    window; DC and integer harmonics are rejected exactly.
    """
    x = np.asarray(window, dtype=float)
    n_expected = int(round(2.0 * np.pi / (omega1 * ts)))
    if len(x) != n_expected:
        raise ValueError(
            f"window holds {len(x)} samples, one fundamental cycle needs {n_expected}"
        )
    n = len(x)
    k = np.arange(n)
    coef = (2.0 / n) * np.sum(x * np.exp(-2j * np.pi * k / n))
    return complex(coef / SQRT2)


@maybe_njit
def _sliding_fundamental_kernel(x, rot, out):  # pragma: no cover - jitted
    n = rot.shape[0]
    total = x.shape[0]
    scale = SQRT2 / n
    s = 0.0 + 0.0j
    for k in range(total):
        old = x[k - n] if k >= n else 0.0
        s = s + (x[k] - old) * rot[k % n]
        if k % n == n - 1:
            # exact refresh: kill accumulated float drift once per cycle
            acc = 0.0 + 0.0j
            start = k - n + 1
            for m in range(start, k + 1):
                if m >= 0:
                    acc = acc + x[m] * rot[m % n]
            s = acc
        out[k] = s * scale
    return out


def sliding_fundamental(x, samples_per_cycle: int) -> np.ndarray:
    """Sliding full-cycle DFT over a sample stream (stationary phasor frame).

    ``out[k]`` is the RMS phasor estimated from samples ``k-n+1 .. k`` with
    the rotation referenced to absolute sample index, so a steady cosine at
    the fundamental gives a constant phasor.  The first ``n-1`` outputs use
    zero-padded history; callers are expected to discard or pre-fill them.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = int(samples_per_cycle)
    rot = np.exp(-2j * np.pi * np.arange(n) / n)
    out = np.empty(len(x), dtype=np.complex128)
    return _sliding_fundamental_kernel(x, rot, out)


# --------------------------------------------------------------------------
# All-pass-filter based instantaneous sequence separation
# --------------------------------------------------------------------------


def _apf_coefficient(omega1: float, ts: float) -> float:
    # bilinear transform of H(s) = (w1 - s)/(w1 + s), prewarped so the shift
    # is exactly -90 deg at omega1
    k = omega1 / np.tan(omega1 * ts / 2.0)
    return (k - omega1) / (k + omega1)


@maybe_njit
def _apf_separate_kernel(xa, xb, a, pos, neg):  # pragma: no cover - jitted
    xa_prev = 0.0
    xb_prev = 0.0
    qa = 0.0
    qb = 0.0
    for k in range(xa.shape[0]):
        qa = a * qa - a * xa[k] + xa_prev
        qb = a * qb - a * xb[k] + xb_prev
        xa_prev = xa[k]
        xb_prev = xb[k]
        x = complex(xa[k], xb[k])
        q = complex(qa, qb)
        p = 0.5 * (x + 1j * q)
        pos[k] = p
        neg[k] = x - p
    return pos, neg


def apf_separate(x_alpha, x_beta, omega1: float, ts: float):
    """Split an alpha-beta sample stream into positive/negative components.

    A first-order all-pass produces an exact -90 deg shift at ``omega1``;
    the separation settles within roughly two fundamental cycles of a step.
    Returns two complex arrays (``alpha + 1j*beta``).
    """
    xa = np.ascontiguousarray(x_alpha, dtype=np.float64)
    xb = np.ascontiguousarray(x_beta, dtype=np.float64)
    if xa.shape != xb.shape:
        raise ValueError("alpha/beta streams must have equal length")
    a = _apf_coefficient(omega1, ts)
    pos = np.empty(len(xa), dtype=np.complex128)
    neg = np.empty(len(xa), dtype=np.complex128)
    return _apf_separate_kernel(xa, xb, a, pos, neg)


class SequenceSeparator:
    """Stateful per-sample version of :func:`apf_separate` for control loops."""

    def __init__(self, omega1: float, ts: float):
        self._a = _apf_coefficient(omega1, ts)
        self._xa_prev = 0.0
        self._xb_prev = 0.0
        self._qa = 0.0
        self._qb = 0.0

    def step(self, x_alpha: float, x_beta: float):
        a = self._a
        self._qa = a * self._qa - a * x_alpha + self._xa_prev
        self._qb = a * self._qb - a * x_beta + self._xb_prev
        self._xa_prev = x_alpha
        self._xb_prev = x_beta
        x = complex(x_alpha, x_beta)
        q = complex(self._qa, self._qb)
        pos = 0.5 * (x + 1j * q)
        return pos, x - pos

    def preload(self, pos: complex, neg: complex):
        """Seed internal state with a known steady positive/negative mix.

        ``pos``/``neg`` are the complex alpha-beta components evaluated at the
        last sample instant *before* the first call to :meth:`step`.
        """
        x = pos + neg
        # steady all-pass output at the fundamental: pos lagged 90, neg led 90
        q = -1j * pos + 1j * neg
        self._xa_prev = x.real
        self._xb_prev = x.imag
        self._qa = q.real
        self._qb = q.imag


# --------------------------------------------------------------------------
# Incremental-quantity delta buffer
# --------------------------------------------------------------------------


class DeltaBuffer:
    """Fixed-horizon phasor memory: ``delta = now - value(now - horizon)``.

    Returns ``None`` ("not ready") until one full horizon of samples has been
    pushed.  Once the input has been steady for longer than the horizon the
    delta collapses back to zero, which is what deactivates the supervising
    elements fed from it.
    """

    def __init__(self, horizon_s: float, ts: float):
        if horizon_s <= 0.0:
            raise ValueError("horizon must be positive")
        self.horizon_s = float(horizon_s)
        self._n = max(1, int(round(horizon_s / ts)))
        self._ring = np.zeros(self._n, dtype=np.complex128)
        self._count = 0

    @property
    def ready(self) -> bool:
        return self._count >= self._n

    def push(self, value: complex):
        """Store ``value`` and return ``value - stored(t - horizon)`` or None."""
        idx = self._count % self._n
        old = self._ring[idx]
        self._ring[idx] = value
        self._count += 1
        if self._count <= self._n:
            return None
        return value - old

    def delayed(self):
        """Oldest stored value (the ``t - horizon`` sample), None if not ready."""
        if not self.ready:
            return None
        return complex(self._ring[self._count % self._n])

    def prefill(self, value: complex):
        """Mark the buffer ready with a constant history."""
        self._ring[:] = value
        self._count = self._n


# --------------------------------------------------------------------------
# Per-phase peak tracking
# --------------------------------------------------------------------------


class PeakTracker:
    """Amplitude estimate per phase from quadrature sample pairs.

    ``I_tx = sqrt(x^2 + x_q^2)`` with ``x_q`` the sample a quarter cycle ago;
    for a steady sinusoid this equals the waveform amplitude.  ``i_max`` is
    the running three-phase maximum of the latest estimates.
    """

    def __init__(self, samples_per_cycle: int):
        self._q = max(1, samples_per_cycle // 4)
        self._ring = np.zeros((3, self._q))
        self._count = 0
        self.peaks = np.zeros(3)

    def step(self, ia: float, ib: float, ic: float) -> float:
        idx = self._count % self._q
        xq = self._ring[:, idx].copy()
        now = np.array([ia, ib, ic])
        self._ring[:, idx] = now
        self._count += 1
        self.peaks = np.sqrt(now * now + xq * xq)
        return float(self.peaks.max())

    @property
    def i_max(self) -> float:
        return float(self.peaks.max())

    def prefill_steady(self, amplitudes, phases_rad, omega1: float, ts: float, t_now: float):
        """Seed the quarter-cycle ring as if the phases were steady sinusoids."""
        amplitudes = np.asarray(amplitudes, dtype=float)
        phases_rad = np.asarray(phases_rad, dtype=float)
        self._count = 0
        for m in range(self._q):
            t = t_now - (self._q - m) * ts
            vals = amplitudes * np.cos(omega1 * t + phases_rad)
            self._ring[:, self._count % self._q] = vals
            self._count += 1
        self.peaks = amplitudes.copy()
