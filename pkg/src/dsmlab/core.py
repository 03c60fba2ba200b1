"""Core vocabulary for the shared-memory lab.

Identifiers, logical clocks, timestamps, protocol messages, history events,
and the pure operations over them. Everything here is a value; no function
mutates its arguments. Register values are signed integers (the file formats
assume they fit in 64 bits); logical times and ticks stay far below that at
desk scale, so nothing wraps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar, NamedTuple, Optional, Sequence, Union

ProcessId = int  # 1..n
RegisterId = str  # non-empty name, e.g. "x", "r0"
Value = int
LogicalTime = int
RequestId = int
OpId = int

OK = "OK"  # return value of every completed write


class Timestamp(NamedTuple):
    """Write tag, ordered lexicographically: logical time first, then the
    writing process id as tie-break. Tuple comparison gives exactly that
    order, so timestamps can be compared with the usual operators."""

    lt: LogicalTime
    pid: ProcessId


INITIAL_TS = Timestamp(0, 0)


class TimestampValuePair(NamedTuple):
    ts: Timestamp
    val: Value


INITIAL_PAIR = TimestampValuePair(INITIAL_TS, 0)


def compare_timestamps(a: Timestamp, b: Timestamp) -> int:
    """Lexicographic comparison; returns -1, 0, or 1."""
    if a < b:
        return -1
    if a > b:
        return 1
    return 0


def max_pair(a: TimestampValuePair, b: TimestampValuePair) -> TimestampValuePair:
    """The pair with the larger timestamp. Comparison looks at timestamps
    only, never at values: distinct writes always carry distinct timestamps,
    so on a timestamp tie the values agree and keeping `a` is safe."""
    return b if b.ts > a.ts else a


def clock_local_step(lt: LogicalTime) -> LogicalTime:
    """Clock advance for a locally triggered step."""
    return lt + 1


def clock_merge(lt: LogicalTime, lt_msg: LogicalTime) -> LogicalTime:
    """Clock advance when handling a received message: the receipt must be
    ordered after both the receiver's past and the send."""
    return max(lt, lt_msg) + 1


def quorum_size(n: int) -> int:
    """Majority threshold for n processes: any two groups of this size
    intersect, which is what makes register state survive a handover."""
    if n < 1:
        raise ValueError(f"process count must be positive, got {n}")
    return n // 2 + 1


# --- messages -------------------------------------------------------------
#
# All four message types carry the sender's logical time at send, and the
# request id of the phase they belong to. Responses and acks echo the rid of
# the query/update that solicited them, which is how initiators recognize
# and discard replies to phases already closed.


@dataclass(frozen=True, slots=True)
class Query:
    sender: ProcessId
    receiver: ProcessId
    lt: LogicalTime
    rid: RequestId
    reg: RegisterId
    kind: ClassVar[str] = "query"


@dataclass(frozen=True, slots=True)
class Response:
    sender: ProcessId
    receiver: ProcessId
    lt: LogicalTime
    rid: RequestId
    tsv: TimestampValuePair
    kind: ClassVar[str] = "response"


@dataclass(frozen=True, slots=True)
class Update:
    sender: ProcessId
    receiver: ProcessId
    lt: LogicalTime
    rid: RequestId
    reg: RegisterId
    tsv: TimestampValuePair
    kind: ClassVar[str] = "update"


@dataclass(frozen=True, slots=True)
class Ack:
    sender: ProcessId
    receiver: ProcessId
    lt: LogicalTime
    rid: RequestId
    kind: ClassVar[str] = "ack"


Message = Union[Query, Response, Update, Ack]


# --- histories ------------------------------------------------------------

READ = "read"
WRITE = "write"

INVOCATION = "inv"
RESPONSE_EVENT = "res"


@dataclass(eq=False)
class OperationDescriptor:
    """One read or write execution, shared by its invocation and response
    events. `ret` is filled in at completion; `ts` records the timestamp the
    operation installed or wrote back (set when its update phase starts), and
    stays None for operations that never reached one."""

    opid: OpId
    proc: ProcessId
    kind: str  # READ | WRITE
    reg: RegisterId
    arg: Optional[Value] = None  # writes only
    ret: Union[Value, str, None] = None  # value for reads, OK for writes
    ts: Optional[Timestamp] = None


@dataclass(frozen=True, slots=True, eq=False)
class Event:
    kind: str  # INVOCATION | RESPONSE_EVENT
    op: OperationDescriptor
    rt: int  # simulator tick (real time) of the step that produced it
    lt: Optional[LogicalTime]  # sender-side logical time of that step
    proc: ProcessId


History = list  # list[Event]; order carries the real-time precedence


def project_process(h: Sequence[Event], p: ProcessId) -> list[Event]:
    """Subhistory of events at process p, order preserved."""
    return [e for e in h if e.proc == p]


def project_register(h: Sequence[Event], x: RegisterId) -> list[Event]:
    """Subhistory of operations on register x, order preserved."""
    return [e for e in h if e.op.reg == x]


def histories_equivalent(h1: Sequence[Event], h2: Sequence[Event]) -> bool:
    """True when every process sees the same operation sequence in both
    histories. Events are compared by operation identity and event kind, so
    reorderings of concurrent events at different processes don't matter."""

    def per_process(h: Sequence[Event]) -> dict[ProcessId, list[tuple[OpId, str]]]:
        out: dict[ProcessId, list[tuple[OpId, str]]] = {}
        for e in h:
            out.setdefault(e.proc, []).append((e.op.opid, e.kind))
        return out

    return per_process(h1) == per_process(h2)


def is_sequential(h: Sequence[Event]) -> bool:
    """True when each invocation is immediately followed by its matching
    response. One trailing unmatched invocation (a pending op) is allowed."""
    i = 0
    while i < len(h):
        if h[i].kind != INVOCATION:
            return False
        if i + 1 == len(h):
            return True
        nxt = h[i + 1]
        if nxt.kind != RESPONSE_EVENT or nxt.op.opid != h[i].op.opid:
            return False
        i += 2
    return True


def is_well_formed(h: Sequence[Event]) -> bool:
    """Structural sanity: each op invoked once at one process, responded to
    at most once after its invocation, and every per-process subhistory is
    sequential (processes are single-threaded clients)."""
    seen_inv: dict[OpId, Event] = {}
    seen_res: set[OpId] = set()
    for e in h:
        if e.kind == INVOCATION:
            if e.op.opid in seen_inv:
                return False
            seen_inv[e.op.opid] = e
        elif e.kind == RESPONSE_EVENT:
            inv = seen_inv.get(e.op.opid)
            if inv is None or e.op.opid in seen_res or inv.proc != e.proc:
                return False
            seen_res.add(e.op.opid)
        else:
            return False
    procs = {e.proc for e in h}
    return all(is_sequential(project_process(h, p)) for p in procs)


def is_complete(h: Sequence[Event]) -> bool:
    """True when every invoked operation has a response."""
    pending = 0
    seen: set[OpId] = set()
    for e in h:
        if e.kind == INVOCATION:
            pending += 1
            seen.add(e.op.opid)
        elif e.op.opid in seen:
            pending -= 1
    return pending == 0


def operations(h: Sequence[Event]) -> list[OperationDescriptor]:
    """Descriptors in invocation order."""
    return [e.op for e in h if e.kind == INVOCATION]


def pending_operations(h: Sequence[Event]) -> list[OperationDescriptor]:
    """Descriptors invoked but never responded to, in invocation order."""
    responded = {e.op.opid for e in h if e.kind == RESPONSE_EVENT}
    return [op for op in operations(h) if op.opid not in responded]
