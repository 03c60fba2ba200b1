"""Deterministic discrete-event simulation of the register protocols.

One seeded run drives n peer processes (every process is both a replica and a
closed-loop client of its own workload), delivers messages over reliable but
reordering links, injects crash-stop faults, and records everything: the
operation history, the full message log, per-operation round counts, and the
crashes actually applied.

All nondeterminism flows from the one seeded generator, consumed in event-pop
order, so two runs of the same config produce identical traces byte for byte.
Time is an integer tick counter. Each message is delayed independently by the
configured delay model (at least one tick), which is also what produces
reorderings: the network is not FIFO. A process executes at most one handler
per tick; deliveries and invocations that would violate that are pushed to
the next free tick, deterministically.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field, replace
from heapq import heappop, heappush
from typing import Callable, NamedTuple, Optional, Union

from .core import (
    Event,
    INVOCATION,
    Message,
    OperationDescriptor,
    OpId,
    ProcessId,
    Query,
    READ,
    RESPONSE_EVENT,
    Update,
    Value,
    WRITE,
    quorum_size,
)
from .protocol import (
    IDLE,
    Invoke,
    MUTANT_NONE,
    MUTANTS,
    MW_ABD,
    PROTOCOLS,
    SC_ABD,
    State,
    StepOutput,
    initial_state,
    mw_abd_step,
    sc_abd_step,
)


class ConfigError(Exception):
    """An invalid simulation or run configuration."""


# --- delay models -----------------------------------------------------------
#
# A delay model maps a message to a delivery delay in ticks, >= 1. Models may
# consume the run's generator; draws happen in send order, so they are part
# of the deterministic replay.


@dataclass(frozen=True, slots=True)
class UniformDelay:
    """Independent uniform delay on every message."""

    lo: int = 1
    hi: int = 10

    def delay(self, msg: Message, rng: random.Random) -> int:
        return rng.randint(self.lo, self.hi)

    def validate(self) -> None:
        if self.lo < 1 or self.hi < self.lo:
            raise ConfigError(f"uniform delay needs 1 <= lo <= hi, got {self.lo}..{self.hi}")


@dataclass(frozen=True, slots=True)
class FixedLinkDelay:
    """Constant per-link delay; links not listed use the default."""

    default: int = 1
    links: dict = field(default_factory=dict)  # (sender, receiver) -> ticks

    def delay(self, msg: Message, rng: random.Random) -> int:
        return self.links.get((msg.sender, msg.receiver), self.default)

    def validate(self) -> None:
        if self.default < 1:
            raise ConfigError("fixed delay default must be >= 1")
        for link, d in self.links.items():
            if d < 1:
                raise ConfigError(f"fixed delay for link {link} must be >= 1, got {d}")


SELF = "self"
OTHER = "other"


@dataclass(frozen=True, slots=True)
class DelayRule:
    """One adversarial-schedule clause. None fields match anything; receiver
    may also be "self" (receiver equals sender) or "other". A message takes
    the first matching rule's delay: fixed `lo`, or uniform in lo..hi."""

    kind: Optional[str] = None  # query | response | update | ack
    sender: Optional[ProcessId] = None
    receiver: Union[ProcessId, str, None] = None
    rid: Optional[int] = None
    lo: int = 1
    hi: Optional[int] = None

    def matches(self, msg: Message) -> bool:
        if self.kind is not None and msg.kind != self.kind:
            return False
        if self.sender is not None and msg.sender != self.sender:
            return False
        if self.receiver == SELF:
            if msg.receiver != msg.sender:
                return False
        elif self.receiver == OTHER:
            if msg.receiver == msg.sender:
                return False
        elif self.receiver is not None and msg.receiver != self.receiver:
            return False
        if self.rid is not None and msg.rid != self.rid:
            return False
        return True

    def draw(self, rng: random.Random) -> int:
        if self.hi is None or self.hi == self.lo:
            return self.lo
        return rng.randint(self.lo, self.hi)

    def validate(self) -> None:
        if self.lo < 1 or (self.hi is not None and self.hi < self.lo):
            raise ConfigError(f"delay rule needs 1 <= lo <= hi, got {self.lo}..{self.hi}")


@dataclass(frozen=True, slots=True)
class AdversarialSchedule:
    """First-match rule list with a default for unmatched messages. This is
    how targeted schedules (starve one link, hide one replica) are built."""

    rules: tuple = ()  # tuple[DelayRule, ...]
    default: int = 1

    def delay(self, msg: Message, rng: random.Random) -> int:
        for rule in self.rules:
            if rule.matches(msg):
                return rule.draw(rng)
        return self.default

    def validate(self) -> None:
        if self.default < 1:
            raise ConfigError("adversarial default delay must be >= 1")
        for rule in self.rules:
            rule.validate()


DelayModel = Union[UniformDelay, FixedLinkDelay, AdversarialSchedule]


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Workload:
    """Closed-loop client workload, identical shape at every process."""

    ops_per_process: int = 2
    read_fraction: float = 0.5
    register_count: int = 1
    think_time: int = 1  # ticks between an op's completion and the next invoke

    def validate(self) -> None:
        if self.ops_per_process < 0:
            raise ConfigError("ops_per_process must be >= 0")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ConfigError(f"read_fraction must be in [0, 1], got {self.read_fraction}")
        if self.register_count < 1:
            raise ConfigError("register_count must be >= 1")
        if self.think_time < 0:
            raise ConfigError("think_time must be >= 0")


@dataclass(frozen=True, slots=True)
class SimConfig:
    n: int = 3
    seed: int = 0
    delay: DelayModel = UniformDelay()
    workload: Workload = Workload()
    crashes: tuple = ()  # tuple[(pid, tick), ...]; crash-stop at that tick
    max_ticks: int = 1_000_000
    protocol: str = SC_ABD
    mid_op_crash: bool = False  # crash mid-operation instead of deferring
    mutant: str = MUTANT_NONE

    def validate(self) -> "SimConfig":
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.max_ticks < 1:
            raise ConfigError("max_ticks must be >= 1")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.mutant not in MUTANTS:
            raise ConfigError(f"unknown mutant {self.mutant!r}")
        if self.mutant != MUTANT_NONE and self.protocol != SC_ABD:
            raise ConfigError("mutants are defined for sc_abd only")
        self.workload.validate()
        self.delay.validate()
        pids = [p for p, _ in self.crashes]
        if len(set(pids)) != len(pids):
            raise ConfigError("a process may crash at most once")
        for p, tick in self.crashes:
            if not 1 <= p <= self.n:
                raise ConfigError(f"crash pid {p} outside 1..{self.n}")
            if tick < 0:
                raise ConfigError(f"crash tick must be >= 0, got {tick}")
        allowed = self.n - quorum_size(self.n)
        if len(self.crashes) > allowed:
            raise ConfigError(
                f"{len(self.crashes)} crashes with n={self.n} would break the "
                f"quorum assumption (at most {allowed} allowed)"
            )
        return self


class OpSpec(NamedTuple):
    kind: str  # READ | WRITE
    reg: str
    val: Optional[Value]  # None for reads


def generate_workload(cfg: SimConfig, rng: random.Random) -> dict[ProcessId, list[OpSpec]]:
    """Pre-draw every process's operation sequence from the run generator.
    Register names are r0..r{k-1}; written values are positive, so 0 is only
    ever the initial register value."""
    w = cfg.workload
    out: dict[ProcessId, list[OpSpec]] = {}
    for p in range(1, cfg.n + 1):
        ops = []
        for _ in range(w.ops_per_process):
            reg = f"r{rng.randrange(w.register_count)}"
            if rng.random() < w.read_fraction:
                ops.append(OpSpec(READ, reg, None))
            else:
                ops.append(OpSpec(WRITE, reg, rng.randrange(1, 1_000_000)))
        out[p] = ops
    return out


# --- trace ------------------------------------------------------------------


@dataclass(slots=True)
class MessageRecord:
    """One message's life: send tick, and on delivery the receive tick plus
    the receiver's clock after handling. A reply to an already-closed phase
    is delivered but discarded (handled stays False); a message to a crashed
    process is dropped instead."""

    msg: Message
    send_rt: int
    recv_rt: Optional[int] = None
    recv_lt: Optional[int] = None
    handled: bool = False
    dropped: bool = False


QUIESCENT = "quiescent"
HORIZON = "horizon"


@dataclass(slots=True)
class Trace:
    config: SimConfig
    history: list  # list[Event], append order = chronological order
    message_log: list  # list[MessageRecord], send order
    rounds: dict  # opid -> communication rounds initiated
    ops: dict  # opid -> OperationDescriptor
    crash_log: list  # [(pid, tick)] actually applied, in order
    outcome: str  # QUIESCENT | HORIZON

    @property
    def protocol(self) -> str:
        return self.config.protocol

    @property
    def quiescent(self) -> bool:
        return self.outcome == QUIESCENT

    def completed(self) -> dict[OpId, OperationDescriptor]:
        return {i: d for i, d in self.ops.items() if d.ret is not None}


# --- engine -----------------------------------------------------------------

_INVOKE = "invoke"
_DELIVER = "deliver"
_CRASH = "crash"


class _Run:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.states: dict[ProcessId, State] = {
            p: initial_state(p, cfg.n, cfg.protocol) for p in range(1, cfg.n + 1)
        }
        if cfg.protocol == SC_ABD:
            self.step: Callable[[State, object], StepOutput] = (
                lambda s, stim: sc_abd_step(s, stim, mutant=cfg.mutant)
            )
        else:
            self.step = mw_abd_step
        self.heap: list = []
        self.seq = itertools.count()
        self.last_exec: dict[ProcessId, int] = {p: -1 for p in self.states}
        self.crashed: set[ProcessId] = set()
        self.crash_pending: set[ProcessId] = set()
        self.workload = generate_workload(cfg, self.rng)
        self.next_op: dict[ProcessId, int] = {p: 0 for p in self.states}
        self.opids = itertools.count(1)
        self.history: list[Event] = []
        self.message_log: list[MessageRecord] = []
        self.rounds: dict[OpId, int] = {}
        self.ops: dict[OpId, OperationDescriptor] = {}
        self.crash_log: list[tuple[ProcessId, int]] = []

    def _push(self, due: int, kind: str, payload) -> None:
        heappush(self.heap, (due, next(self.seq), kind, payload))

    def run(self) -> Trace:
        for pid, tick in self.cfg.crashes:
            self._push(tick, _CRASH, pid)
        for p in self.states:
            if self.workload[p]:
                self._push(0, _INVOKE, p)
        outcome = QUIESCENT
        while self.heap:
            due, _, kind, payload = heappop(self.heap)
            if due > self.cfg.max_ticks:
                outcome = HORIZON
                break
            if kind == _CRASH:
                self._crash(payload, due)
            elif kind == _INVOKE:
                self._invoke(payload, due)
            else:
                self._deliver(payload, due)
        return Trace(
            config=self.cfg,
            history=self.history,
            message_log=self.message_log,
            rounds=self.rounds,
            ops=self.ops,
            crash_log=self.crash_log,
            outcome=outcome,
        )

    def _defer(self, pid: ProcessId, due: int, kind: str, payload) -> bool:
        # One handler per process per tick; bump to the next free tick.
        if self.last_exec[pid] >= due:
            self._push(self.last_exec[pid] + 1, kind, payload)
            return True
        return False

    def _crash(self, pid: ProcessId, tick: int) -> None:
        if pid in self.crashed:
            return
        if self.states[pid].phase != IDLE and not self.cfg.mid_op_crash:
            # Deferred to the op boundary so histories stay complete.
            self.crash_pending.add(pid)
            return
        self._apply_crash(pid, tick)

    def _apply_crash(self, pid: ProcessId, tick: int) -> None:
        self.crashed.add(pid)
        self.crash_log.append((pid, tick))

    def _invoke(self, pid: ProcessId, tick: int) -> None:
        if pid in self.crashed:
            return
        if self._defer(pid, tick, _INVOKE, pid):
            return
        spec = self.workload[pid][self.next_op[pid]]
        self.next_op[pid] += 1
        opid = next(self.opids)
        desc = OperationDescriptor(opid=opid, proc=pid, kind=spec.kind, reg=spec.reg, arg=spec.val)
        self.ops[opid] = desc
        out = self.step(self.states[pid], Invoke(opid, spec.kind, spec.reg, spec.val))
        self.history.append(Event(INVOCATION, desc, tick, out.state.lt, pid))
        self._apply(pid, out, tick)

    def _deliver(self, rec: MessageRecord, tick: int) -> None:
        pid = rec.msg.receiver
        if pid in self.crashed:
            rec.dropped = True
            return
        if self._defer(pid, tick, _DELIVER, rec):
            return
        before = self.states[pid]
        out = self.step(before, rec.msg)
        rec.recv_rt = tick
        rec.recv_lt = out.state.lt
        rec.handled = out.state is not before or bool(out.outbox) or out.completion is not None
        self._apply(pid, out, tick)

    def _apply(self, pid: ProcessId, out: StepOutput, tick: int) -> None:
        self.states[pid] = out.state
        self.last_exec[pid] = tick
        if out.outbox:
            first = out.outbox[0]
            if first.kind in ("query", "update") and out.state.opid is not None:
                # A fresh initiator phase: one more communication round.
                self.rounds[out.state.opid] = self.rounds.get(out.state.opid, 0) + 1
                if first.kind == "update":
                    desc = self.ops[out.state.opid]
                    if desc.ts is None:
                        desc.ts = first.tsv.ts
            for msg in out.outbox:
                rec = MessageRecord(msg=msg, send_rt=tick)
                self.message_log.append(rec)
                delay = max(1, self.cfg.delay.delay(msg, self.rng))
                self._push(tick + delay, _DELIVER, rec)
        if out.completion is not None:
            desc = self.ops[out.completion.opid]
            desc.ret = out.completion.ret
            if desc.ts is None and out.completion.ts is not None:
                desc.ts = out.completion.ts
            self.history.append(Event(RESPONSE_EVENT, desc, tick, out.state.lt, pid))
            if pid in self.crash_pending:
                self.crash_pending.discard(pid)
                self._apply_crash(pid, tick)
            elif self.next_op[pid] < len(self.workload[pid]):
                self._push(tick + self.cfg.workload.think_time, _INVOKE, pid)


def run_simulation(cfg: SimConfig) -> Trace:
    """Validate the config and run it to quiescence or the tick horizon."""
    cfg.validate()
    return _Run(cfg).run()
