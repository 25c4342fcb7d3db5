"""Transmit bit patterns, lossy channel pulse responses and waveform synthesis."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# (order, second tap); feedback polynomial x^order + x^tap + 1
PRBS_TAPS = {7: 6, 31: 28}

TAIL_EPS = 1e-4


@dataclass(frozen=True)
class PrbsState:
    """Fibonacci LFSR register; bit ``order - 1`` is the next output bit."""

    register: int
    order: int = 31

    def __post_init__(self):
        if self.order not in PRBS_TAPS:
            raise ValueError(f"unsupported PRBS order {self.order}")
        if not 0 <= self.register < (1 << self.order):
            raise ValueError("register wider than PRBS order")

    @classmethod
    def all_ones(cls, order: int = 31) -> "PrbsState":
        return cls((1 << order) - 1, order)


def prbs_next(state: PrbsState) -> tuple[int, PrbsState]:
    """Advance the LFSR one step and return ``(output_bit, new_state)``."""
    if state.register == 0:
        raise ValueError("PRBS register is all-zero (locked-up LFSR)")
    n = state.order
    tap = PRBS_TAPS[n]
    reg = state.register
    out = (reg >> (n - 1)) & 1
    fb = out ^ ((reg >> (tap - 1)) & 1)
    reg = ((reg << 1) & ((1 << n) - 1)) | fb
    return out, PrbsState(reg, n)


def prbs_bits(n_bits: int, state: PrbsState | None = None, *, doubling: int = 8) -> np.ndarray:
    """Return ``n_bits`` of the PRBS output as a uint8 array.

    The output obeys ``b[k] = b[k - order] ^ b[k - tap]``. Squaring the
    feedback polynomial ``doubling`` times over GF(2) gives the same
    recurrence with lags scaled by ``2**doubling``, which lets numpy fill
    blocks of ``tap * 2**doubling`` bits at once after a short scalar
    warm-up.
    """
    if state is None:
        state = PrbsState.all_ones()
    order, tap = state.order, PRBS_TAPS[state.order]
    scale = 1 << doubling
    lag_a, lag_b = order * scale, tap * scale
    head = min(n_bits, lag_a)
    out = np.empty(n_bits, dtype=np.uint8)
    for i in range(head):
        out[i], state = prbs_next(state)
    k = head
    while k < n_bits:
        m = min(lag_b, n_bits - k)
        out[k:k + m] = out[k - lag_a:k - lag_a + m] ^ out[k - lag_b:k - lag_b + m]
        k += m
    return out


def seeded_prbs_state(rng: np.random.Generator, order: int = 31) -> PrbsState:
    return PrbsState(int(rng.integers(1, 1 << order)), order)


@dataclass(frozen=True)
class ChannelSpec:
    loss_db_at_nyquist: float
    data_rate: float = 10e9
    pole_count: int = 1

    def __post_init__(self):
        if self.loss_db_at_nyquist < 0:
            raise ValueError(f"channel loss must be >= 0 dB, got {self.loss_db_at_nyquist}")
        if self.pole_count < 1:
            raise ValueError("pole_count must be >= 1")
        if self.data_rate <= 0:
            raise ValueError("data_rate must be positive")

    @property
    def nyquist(self) -> float:
        return self.data_rate / 2


def pole_corner(spec: ChannelSpec) -> float:
    """Corner frequency (Hz) of each pole so the cascade loses the target dB at Nyquist.

    Returns ``inf`` for a lossless channel.
    """
    if spec.loss_db_at_nyquist == 0:
        return math.inf
    ratio_sq = 10.0 ** (spec.loss_db_at_nyquist / (10.0 * spec.pole_count)) - 1.0
    return spec.nyquist / math.sqrt(ratio_sq)


def _step(x: np.ndarray, tau: float, poles: int) -> np.ndarray:
    # step response of `poles` identical real poles; zero for x <= 0
    y = np.zeros_like(x)
    pos = x > 0
    if math.isinf(tau) or tau == 0:
        y[pos] = 1.0
        return y
    z = x[pos] / tau
    series = np.zeros_like(z)
    term = np.ones_like(z)
    for i in range(poles):
        series += term
        term = term * z / (i + 1)
    y[pos] = 1.0 - np.exp(-z) * series
    return y


@dataclass(frozen=True, eq=False)
class PulseResponse:
    """Channel response to a single 1-UI unit pulse, sampled ``os`` points per UI.

    ``samples`` has ``span_ui * os + 1`` entries; the last one is the zero
    that closes the final interpolation cell.
    """

    samples: np.ndarray
    os: int
    span_ui: int
    data_rate: float
    loss_db: float = 0.0

    @property
    def peak(self) -> float:
        return float(self.samples.max())

    @property
    def peak_ui(self) -> float:
        """Time of the peak in UI; the middle of the plateau when it is flat."""
        top = np.flatnonzero(self.samples >= self.samples.max() * (1.0 - 1e-12))
        return 0.5 * (top[0] + top[-1]) / self.os

    @property
    def step_half_ui(self) -> float:
        """Time (UI) at which the unit step response reaches half its final value."""
        p = self.samples
        os = self.os
        n = len(p)
        step = np.zeros(n)
        for k in range(self.span_ui + 1):
            step[k * os:] += p[:n - k * os]
        final = step[-1]
        i = int(np.argmax(step >= 0.5 * final))
        if i == 0:
            return 0.0
        frac = (0.5 * final - step[i - 1]) / (step[i] - step[i - 1])
        return (i - 1 + frac) / os

    @property
    def center_ui(self) -> float:
        """Eye centre: half a UI after the step response's half-amplitude point."""
        return self.step_half_ui + 0.5

    @property
    def dc_sum(self) -> float:
        return float(self.samples.sum())

    def at(self, x_ui):
        """Linearly interpolated pulse value at ``x_ui`` (UI after the pulse start)."""
        x = np.asarray(x_ui, dtype=float) * self.os
        i = np.floor(x).astype(np.int64)
        inside = (i >= 0) & (i < self.span_ui * self.os)
        ic = np.clip(i, 0, self.span_ui * self.os - 1)
        w = x - ic
        p = self.samples
        val = p[ic] + w * (p[ic + 1] - p[ic])
        return np.where(inside, val, 0.0)


def make_channel(spec: ChannelSpec, os: int = 64, span_ui: int | None = None) -> PulseResponse:
    """Unit NRZ pulse through ``spec.pole_count`` identical poles.

    With ``span_ui=None`` the span is the shortest whole number of UI whose
    truncated tail stays below ``TAIL_EPS`` of the peak.
    """
    if os < 16:
        raise ValueError(f"oversampling must be >= 16, got {os}")
    fc = pole_corner(spec)
    tau = spec.data_rate / (2 * math.pi * fc)  # time constant in UI
    horizon = 8
    while True:
        x = np.arange(horizon * os + 1) / os
        p = _step(x, tau, spec.pole_count) - _step(x - 1.0, tau, spec.pole_count)
        peak = np.abs(p).max()
        if abs(p[-1]) < 1e-3 * TAIL_EPS * peak:
            break
        horizon *= 2
    big = np.nonzero(np.abs(p) >= TAIL_EPS * peak)[0]
    needed = int(math.floor(big[-1] / os)) + 1
    if span_ui is None:
        span_ui = needed
    elif span_ui < needed:
        raise ValueError(
            f"span of {span_ui} UI leaves a tail above {TAIL_EPS:g} of peak; need {needed} UI")
    samples = np.zeros(span_ui * os + 1)
    n = min(span_ui * os, p.size)
    samples[:n] = p[:n]
    return PulseResponse(samples, os, span_ui, spec.data_rate, spec.loss_db_at_nyquist)


def waveform_at(bits: np.ndarray, pulse: PulseResponse, t, first_index: int = 0):
    """Received amplitude at time(s) ``t`` (seconds).

    ``bits[j]`` is transmit bit ``first_index + j``; bit ``n`` starts at
    ``n / data_rate``. Every sample must have ``span_ui`` bits of history
    inside the window.
    """
    u = np.asarray(t, dtype=float) * pulse.data_rate
    n0 = np.floor(u).astype(np.int64) - first_index
    if np.any(n0 - (pulse.span_ui - 1) < 0) or np.any(n0 >= len(bits)):
        raise IndexError("sample time outside the covered bit history")
    xf = (u - np.floor(u)) * pulse.os
    i0 = np.floor(xf).astype(np.int64)
    w = xf - i0
    p = pulse.samples
    amp = 2.0 * np.asarray(bits, dtype=float) - 1.0
    acc = np.zeros_like(u)
    for j in range(pulse.span_ui):
        k = j * pulse.os + i0
        acc = acc + amp[n0 - j] * (p[k] + w * (p[k + 1] - p[k]))
    return acc if acc.ndim else float(acc)
