"""Per-UI receiver simulation loop, with a compiled and a pure-Python backend.

The compiled extension ``srfdsim._ckernel`` is used when it was built; the
pure-Python ``srfdsim._pykernel`` runs the identical arithmetic in the same
order, so both produce bit-identical results for a given input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

_BACKENDS = {"python": _pykernel}
if _ckernel is not None:
    _BACKENDS["cython"] = _ckernel

_active = "cython" if _ckernel is not None else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    _active = name


@dataclass
class KernelParams:
    """Inputs held fixed over one kernel call."""

    bits: np.ndarray
    pulse: np.ndarray
    os: int
    span: int
    center_ui: float
    data_rate: float
    f_vco: float
    edge_period: int = 2
    phi5_mismatch: float = 0.0
    coarse: bool = False
    srfd_on: bool = False
    missing_age: bool = True
    clear_unresolved: bool = False
    window: int = 1
    dlf_on: bool = False
    kp: int = 1
    ki: float = 0.0
    chunk: int = 1
    ber_on: bool = False
    steps: int = 64
    drift_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    drift_ppm: np.ndarray = field(default_factory=lambda: np.zeros(0))
    noise: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        self.pulse = np.ascontiguousarray(self.pulse, dtype=np.float64)
        self.drift_t = np.ascontiguousarray(self.drift_t, dtype=np.float64)
        self.drift_ppm = np.ascontiguousarray(self.drift_ppm, dtype=np.float64)
        self.noise = np.ascontiguousarray(self.noise, dtype=np.float64)


@dataclass
class KernelState:
    """Loop state carried between calls, plus running statistics.

    ``c`` is the start of the current receiver UI in transmit UI. Votes and
    sliced bits are stored as ints (-1/0/+1 and 0/1); ``e_pend`` is -1 when
    no edge sample awaits its BBPD decision. Group ages of -1 mean "no
    observation yet".
    """

    c: float = 0.0
    slot: int = 0
    code: int = 32
    wraps: int = 0
    pf: float = 0.0
    f_reg: float = 0.0
    chunk_sum: int = 0
    chunk_n: int = 0
    dm1: int = 0
    dm2: int = 0
    e_pend: int = -1
    g1v: int = 0
    g1a: int = -1
    g2v: int = 0
    g2a: int = -1
    cur: int = -1
    n_prev: int = -1
    noise_pos: int = 0
    # statistics
    acc: int = 0
    ticks: int = 0
    tick_up: int = 0
    tick_dn: int = 0
    votes_up: int = 0
    votes_dn: int = 0
    g1_up: int = 0
    g1_n: int = 0
    g2_up: int = 0
    g2_n: int = 0
    monitor: float = 0.0
    ber_bits: int = 0
    ber_errors: int = 0
    ui_count: int = 0

    STATS = ("acc", "ticks", "tick_up", "tick_dn", "votes_up", "votes_dn", "g1_up",
             "g1_n", "g2_up", "g2_n", "monitor", "ber_bits", "ber_errors", "ui_count")

    def reset_stats(self) -> None:
        for name in self.STATS:
            setattr(self, name, 0.0 if name == "monitor" else 0)

    def reset_detector(self) -> None:
        """Forget SRFD observations and restart edge slot numbering (mode change)."""
        self.slot = 0
        self.e_pend = -1
        self.g1a = self.g2a = -1
        self.g1v = self.g2v = 0
        self.cur = -1

    def copy(self) -> "KernelState":
        return KernelState(**{f.name: getattr(self, f.name) for f in fields(self)})


def run(state: KernelState, prm: KernelParams, n_ui: int, *, max_ticks: int = 0,
        stop_u: float = math.inf, record: bool = False):
    """Advance ``state`` by up to ``n_ui`` receiver UI.

    Stops early once ``max_ticks`` SRFD ticks have accumulated (when > 0)
    or the clock passes ``stop_u`` transmit UI. Returns a dict of per-UI
    arrays when ``record`` is set, else None. Raises IndexError when a
    sample falls outside the bit pattern.
    """
    if prm.edge_period < 1 or prm.steps < 1 or prm.chunk < 1:
        raise ValueError("edge_period, steps and chunk must be >= 1")
    return _BACKENDS[_active].run(state, prm, int(n_ui), int(max_ticks), float(stop_u), bool(record))
