"""Semi-rotational frequency detection on classified BBPD votes.

The functions here are the readable reference: pure state transitions over
frozen dataclasses. The simulation kernels in ``srfdsim._pykernel`` and
``srfdsim._ckernel`` inline the same logic and are checked against it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .frontend import BbpdEvent, Group, Vote


class Sector(enum.IntEnum):
    UNRESOLVED = -1
    S1 = 0
    S2 = 1
    S3 = 2
    S4 = 3


class FreqPulse(enum.IntEnum):
    DN_F = -1
    NONE = 0
    UP_F = 1


# (G1 vote, G2 vote) -> sector, in the order the pairs appear as the edge
# sample slides later through one UI (G2 criterion crosses first).
SECTOR_OF = {
    (Vote.DN, Vote.DN): Sector.S1,
    (Vote.DN, Vote.UP): Sector.S2,
    (Vote.UP, Vote.UP): Sector.S3,
    (Vote.UP, Vote.DN): Sector.S4,
}

MISSING_POLICIES = ("age", "stall")
UNRESOLVED_POLICIES = ("hold", "clear")

# the policy matrix; type 2 is the default detector
TYPE_POLICIES = {
    1: ("age", "clear"),
    2: ("age", "hold"),
    3: ("stall", "hold"),
    4: ("stall", "clear"),
}


@dataclass(frozen=True)
class SrfdConfig:
    missing_output_policy: str = "age"
    unresolved_state_policy: str = "hold"
    # a pair older than one slot spans period*|f_err| UI of phase per slot of age,
    # which blurs sectors long before the aliasing limit
    staleness_window: int = 1
    dump_length: int = 100_000
    mode: str = "coarse"

    def __post_init__(self):
        if self.missing_output_policy not in MISSING_POLICIES:
            raise ValueError(f"missing_output_policy must be one of {MISSING_POLICIES}")
        if self.unresolved_state_policy not in UNRESOLVED_POLICIES:
            raise ValueError(f"unresolved_state_policy must be one of {UNRESOLVED_POLICIES}")
        if self.staleness_window < 1 or self.dump_length < 1:
            raise ValueError("staleness_window and dump_length must be >= 1")
        if self.mode not in ("coarse", "fine"):
            raise ValueError(f"unknown SRFD mode {self.mode!r}")

    @classmethod
    def of_type(cls, kind: int, **kw) -> "SrfdConfig":
        missing, unresolved = TYPE_POLICIES[kind]
        return cls(missing, unresolved, **kw)

    @property
    def type_number(self) -> int:
        pair = (self.missing_output_policy, self.unresolved_state_policy)
        return next(k for k, v in TYPE_POLICIES.items() if v == pair)


@dataclass(frozen=True)
class Observation:
    vote: Vote
    age: int = 0


@dataclass(frozen=True)
class SrfdState:
    last_g1: Observation | None = None
    last_g2: Observation | None = None
    current: Sector = Sector.UNRESOLVED
    accumulator: int = 0
    tick_count: int = 0


def classify_group(d_nm2: int, d_nm1: int) -> Group:
    """G1 when the two bits before the edge agree, G2 when they differ."""
    return Group.G2 if (d_nm2 ^ d_nm1) else Group.G1


def sector_lookup(vote_g1: Vote, vote_g2: Vote) -> Sector:
    return SECTOR_OF.get((Vote(vote_g1), Vote(vote_g2)), Sector.UNRESOLVED)


def rotation_step(prev: Sector, new: Sector) -> int:
    """+1 for one sector forward, -1 for one back, 0 for no move or half a turn."""
    if prev == Sector.UNRESOLVED or new == Sector.UNRESOLVED:
        raise ValueError("rotation_step needs two resolved sectors")
    d = (int(new) - int(prev)) % 4
    return {0: 0, 1: 1, 2: 0, 3: -1}[d]


def _aged(obs: Observation | None) -> Observation | None:
    return None if obs is None else replace(obs, age=obs.age + 1)


def srfd_step(st: SrfdState, cfg: SrfdConfig, ev: BbpdEvent) -> tuple[int, SrfdState]:
    """Consume one edge slot and return ``(tick, new_state)``.

    Under the ``age`` policy an observation ages every edge slot; under
    ``stall`` it ages only when the BBPD produced a vote, so slots with no
    transition freeze it.
    """
    g1, g2 = st.last_g1, st.last_g2
    if ev.vote == Vote.NONE:
        if cfg.missing_output_policy == "age":
            g1, g2 = _aged(g1), _aged(g2)
        current = st.current
        if cfg.unresolved_state_policy == "clear" and not _fresh(g1, g2, cfg):
            current = Sector.UNRESOLVED
        return 0, replace(st, last_g1=g1, last_g2=g2, current=current)

    if ev.group == Group.G1:
        g1, g2 = Observation(ev.vote), _aged(g2)
    else:
        g1, g2 = _aged(g1), Observation(ev.vote)

    tick = 0
    current = st.current
    if _fresh(g1, g2, cfg):
        sector = sector_lookup(g1.vote, g2.vote)
        if current != Sector.UNRESOLVED:
            tick = rotation_step(current, sector)
        current = sector
    elif cfg.unresolved_state_policy == "clear":
        current = Sector.UNRESOLVED
    return tick, replace(st, last_g1=g1, last_g2=g2, current=current)


def _fresh(g1: Observation | None, g2: Observation | None, cfg: SrfdConfig) -> bool:
    return (g1 is not None and g2 is not None
            and g1.age <= cfg.staleness_window and g2.age <= cfg.staleness_window)


def integrate_dump(st: SrfdState, cfg: SrfdConfig, tick: int) -> tuple[FreqPulse | None, SrfdState]:
    """Add ``tick``; every ``dump_length`` ticks return the sign as a pulse and reset.

    The pulse is None between dumps and ``FreqPulse.NONE`` for a tied dump.
    """
    acc = st.accumulator + tick
    n = st.tick_count + 1
    if n < cfg.dump_length:
        return None, replace(st, accumulator=acc, tick_count=n)
    pulse = FreqPulse.UP_F if acc > 0 else FreqPulse.DN_F if acc < 0 else FreqPulse.NONE
    return pulse, replace(st, accumulator=0, tick_count=0)


@dataclass
class SrfdTrace:
    """Convenience driver for replaying an event stream through the reference."""

    cfg: SrfdConfig
    state: SrfdState = field(default_factory=SrfdState)
    ticks: list[int] = field(default_factory=list)
    pulses: list[FreqPulse] = field(default_factory=list)

    def feed(self, ev: BbpdEvent) -> int:
        tick, self.state = srfd_step(self.state, self.cfg, ev)
        pulse, self.state = integrate_dump(self.state, self.cfg, tick)
        self.ticks.append(tick)
        if pulse is not None:
            self.pulses.append(pulse)
        return tick
