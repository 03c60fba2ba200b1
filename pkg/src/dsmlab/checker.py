"""Consistency checking over recorded histories.

The operational route to sequential consistency goes through logical time:
re-sort the history by the per-event Lamport clocks (build_logical_time_history),
check each register's subhistory for linearizability there, and compose the
per-register witnesses into one legal total order. Per-register linearizability
in logical time composes (unlike sequential consistency in general), and the
logical-time history is indistinguishable from the original to every process,
so acceptance here implies the original history is sequentially consistent.

Per-register checking itself has a fast path and a fallback:

* fast path: when every operation carries the timestamp it installed or wrote
  back, the witness order can be constructed directly (writes sorted by
  timestamp, each read right after the write it observed) and certified in
  linear time. Certification is real: legality, equivalence, and precedence
  are checked, never assumed.
* fallback: an exhaustive precedence-respecting search with memoization on
  (remaining operations, memory state). The search is exact but bounded by a
  state cap; hitting the cap yields an explicit "undecided" verdict rather
  than a guess.

A small brute-force oracle (check_sc_bruteforce) enumerates interleavings of
the per-process sequences directly from the definition; it exists to
cross-check the compositional route on small histories and refuses large ones.

Trace audits round out the kit: audit_logical_clocks replays clock obligations
over the message log, and audit_timestamp_visibility checks the ordering
contract that makes the fast path trustworthy (an operation's timestamp is at
least that of every same-register operation whose update phase completed
before it, in logical time).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Iterable, Optional, Sequence

from .core import (
    Event,
    INITIAL_TS,
    INVOCATION,
    OK,
    OperationDescriptor,
    OpId,
    READ,
    RESPONSE_EVENT,
    RegisterId,
    Timestamp,
    WRITE,
    histories_equivalent,
    is_well_formed,
    operations,
    pending_operations,
    project_register,
)
from .protocol import MW_ABD, SC_ABD

DEFAULT_STATE_CAP = 10_000_000
ORACLE_OP_CAP = 10

ACCEPTED = "accepted"
REJECTED = "rejected"
UNDECIDED = "undecided"


class HistoryError(ValueError):
    """Input history unusable for the requested check (malformed, pending
    operations where completeness is required, or missing lt annotations)."""


class InstrumentationError(ValueError):
    """Timestamp annotations inconsistent with any protocol execution."""


class OracleCapError(RuntimeError):
    """History too large for the brute-force oracle."""


class CheckerInternalError(RuntimeError):
    """A certified artifact failed its own certification; a checker bug."""


@dataclass
class Violation:
    register: Optional[RegisterId]
    condition: str
    ops: Optional[tuple[OpId, OpId]] = None  # (earlier, later) when identified


@dataclass
class Verdict:
    outcome: str  # ACCEPTED | REJECTED | UNDECIDED
    witness: Optional[list] = None  # legal sequential history when accepted
    violation: Optional[Violation] = None
    states_explored: int = 0
    per_register: dict = field(default_factory=dict)  # reg -> Verdict

    @property
    def accepted(self) -> bool:
        return self.outcome == ACCEPTED

    @property
    def rejected(self) -> bool:
        return self.outcome == REJECTED

    @property
    def undecided(self) -> bool:
        return self.outcome == UNDECIDED


# --- logical-time reordering -------------------------------------------------


def build_logical_time_history(h: Sequence[Event]) -> list[Event]:
    """Reorder events by (lt, process, per-process position).

    Requires every event to carry an lt and every process's lts to be
    strictly increasing; under that premise each process's subsequence is
    unchanged, so the result is equivalent to the input. The per-process
    position tie-break keeps equal-(lt, proc) events (none are produced by
    the protocols, but inputs are not trusted) in their original order.
    """
    last: dict[int, int] = {}
    pos: dict[int, int] = {}
    keyed = []
    for e in h:
        if e.lt is None:
            raise HistoryError(
                f"event for op {e.op.opid} at process {e.proc} has no lt annotation"
            )
        prev = last.get(e.proc)
        if prev is not None and e.lt <= prev:
            raise HistoryError(
                f"logical times at process {e.proc} not strictly increasing "
                f"({prev} then {e.lt}); reordering would not preserve its view"
            )
        last[e.proc] = e.lt
        k = pos.get(e.proc, 0)
        pos[e.proc] = k + 1
        keyed.append(((e.lt, e.proc, k), e))
    keyed.sort(key=lambda t: t[0])
    return [e for _, e in keyed]


# --- sequential legality -------------------------------------------------------


def is_legal_sequential(s: Sequence[Event]) -> bool:
    """True when every read in the complete sequential history s returns the
    closest preceding write to its register, or 0 when none precedes."""
    mem: dict[RegisterId, int] = {}
    i = 0
    while i < len(s):
        inv = s[i]
        if (
            inv.kind != INVOCATION
            or i + 1 >= len(s)
            or s[i + 1].kind != RESPONSE_EVENT
            or s[i + 1].op.opid != inv.op.opid
        ):
            raise HistoryError("not a complete sequential history")
        op = inv.op
        if op.kind == READ:
            if mem.get(op.reg, 0) != op.ret:
                return False
        else:
            mem[op.reg] = op.arg
        i += 2
    return True


# --- linearizability search ---------------------------------------------------


class _CapHit(Exception):
    pass


def _op_table(h: Sequence[Event]):
    inv_idx: dict[OpId, int] = {}
    res_idx: dict[OpId, int] = {}
    descs: dict[OpId, OperationDescriptor] = {}
    inv_ev: dict[OpId, Event] = {}
    res_ev: dict[OpId, Event] = {}
    for i, e in enumerate(h):
        if e.kind == INVOCATION:
            inv_idx[e.op.opid] = i
            inv_ev[e.op.opid] = e
            descs[e.op.opid] = e.op
        else:
            res_idx[e.op.opid] = i
            res_ev[e.op.opid] = e
    return inv_idx, res_idx, descs, inv_ev, res_ev


def check_linearizable(h: Sequence[Event], *, state_cap: int = DEFAULT_STATE_CAP) -> Verdict:
    """Exhaustive linearizability check of a complete history.

    Precedence is taken from the order of the event sequence itself: o1
    precedes o2 iff o1's response appears before o2's invocation. Feed it a
    raw history to ask about real time, or a logical-time history to ask
    about logical time; the algorithm is the same.

    Memoization folds search branches that reach the same (remaining ops,
    memory state) configuration. The verdict is exact unless the state cap
    is hit, which yields UNDECIDED with the count of states explored.
    """
    events = list(h)
    if not is_well_formed(events):
        raise HistoryError("history is not well formed")
    inv_idx, res_idx, descs, inv_ev, res_ev = _op_table(events)
    if len(res_idx) != len(inv_idx):
        raise HistoryError("history has pending operations; complete it first")
    if not descs:
        return Verdict(ACCEPTED, witness=[])

    order = sorted(descs, key=lambda o: inv_idx[o])
    memo: set = set()
    explored = 0

    def dfs(remaining: frozenset, mem: tuple) -> Optional[list]:
        nonlocal explored
        if not remaining:
            return []
        key = (remaining, mem)
        if key in memo:
            return None
        if explored >= state_cap:
            raise _CapHit
        memo.add(key)
        explored += 1
        bound = min(res_idx[o] for o in remaining)
        memdict = dict(mem)
        for o in order:
            if o not in remaining or inv_idx[o] >= bound:
                continue
            op = descs[o]
            if op.kind == READ:
                if memdict.get(op.reg, 0) != op.ret:
                    continue
                tail = dfs(remaining - {o}, mem)
            else:
                memdict2 = dict(memdict)
                memdict2[op.reg] = op.arg
                tail = dfs(remaining - {o}, tuple(sorted(memdict2.items())))
            if tail is not None:
                return [o] + tail
        return None

    try:
        found = dfs(frozenset(descs), ())
    except _CapHit:
        return Verdict(UNDECIDED, states_explored=explored)
    if found is None:
        regs = {op.reg for op in descs.values()}
        reg = next(iter(regs)) if len(regs) == 1 else None
        return Verdict(
            REJECTED,
            violation=Violation(reg, "no order satisfies read legality and precedence"),
            states_explored=explored,
        )
    witness: list[Event] = []
    for o in found:
        witness.append(inv_ev[o])
        witness.append(res_ev[o])
    return Verdict(ACCEPTED, witness=witness, states_explored=explored)


# --- timestamp witness ---------------------------------------------------------


def construct_timestamp_witness(
    hx: Sequence[Event], ts_map: Optional[dict] = None
) -> list[Event]:
    """Build the candidate witness order for one register's complete history
    from operation timestamps: writes sorted by their unique timestamps, each
    read placed right after the write whose pair it returned (initial-
    timestamp reads first), reads on the same write ordered by invocation lt
    then process id.

    Pure construction; whether the result is legal and order-preserving is
    for the caller to certify. Raises InstrumentationError when timestamps
    cannot have come from a run: a duplicated write timestamp, a missing
    one, or a read timestamp matching no write and not the initial one.
    """
    events = list(hx)
    if not is_well_formed(events):
        raise HistoryError("history is not well formed")
    inv_idx, res_idx, descs, inv_ev, res_ev = _op_table(events)
    if len(res_idx) != len(inv_idx):
        raise HistoryError("history has pending operations; complete it first")
    regs = {op.reg for op in descs.values()}
    if len(regs) > 1:
        raise HistoryError(f"single-register history expected, got registers {sorted(regs)}")

    def ts_of(o: OpId) -> Timestamp:
        ts = ts_map.get(o) if ts_map is not None else descs[o].ts
        if ts is None:
            raise InstrumentationError(f"operation {o} carries no timestamp")
        return Timestamp(*ts)

    writes = sorted(
        ((ts_of(o), o) for o, op in descs.items() if op.kind == WRITE),
    )
    for (ts1, o1), (ts2, o2) in zip(writes, writes[1:]):
        if ts1 == ts2:
            raise InstrumentationError(f"writes {o1} and {o2} share timestamp {ts1}")
    write_ts = {ts for ts, _ in writes}

    def read_key(o: OpId):
        inv = inv_ev[o]
        return (inv.lt if inv.lt is not None else 0, inv.proc, o)

    reads_at: dict[Timestamp, list[OpId]] = {}
    for o, op in descs.items():
        if op.kind != READ:
            continue
        ts = ts_of(o)
        if ts not in write_ts and ts != INITIAL_TS:
            raise InstrumentationError(
                f"read {o} carries timestamp {ts} matching no write on {op.reg!r}"
            )
        reads_at.setdefault(ts, []).append(o)
    for group in reads_at.values():
        group.sort(key=read_key)

    ordered: list[OpId] = list(reads_at.get(INITIAL_TS, []))
    for ts, o in writes:
        ordered.append(o)
        ordered.extend(reads_at.get(ts, []))

    witness: list[Event] = []
    for o in ordered:
        witness.append(inv_ev[o])
        witness.append(res_ev[o])
    return witness


def _precedence_violation(
    hx: Sequence[Event], pos: dict[OpId, int]
) -> Optional[tuple[OpId, OpId]]:
    """First (o1, o2) with o1 preceding o2 in hx but placed after it by pos."""
    best_pos = -1
    best_op: Optional[OpId] = None
    for e in hx:
        if e.kind == RESPONSE_EVENT:
            p = pos[e.op.opid]
            if p > best_pos:
                best_pos, best_op = p, e.op.opid
        else:
            if best_op is not None and pos[e.op.opid] < best_pos:
                return (best_op, e.op.opid)
    return None


def _witness_positions(witness: Sequence[Event]) -> dict[OpId, int]:
    return {e.op.opid: i // 2 for i, e in enumerate(witness) if e.kind == INVOCATION}


# --- compositional SC check ----------------------------------------------------


def _check_register(hx: list[Event], x: RegisterId, state_cap: int) -> Verdict:
    fast_pair: Optional[tuple[OpId, OpId]] = None
    if all(e.op.ts is not None for e in hx):
        try:
            w = construct_timestamp_witness(hx)
        except InstrumentationError:
            w = None
        if w is not None:
            pos = _witness_positions(w)
            prec = _precedence_violation(hx, pos)
            if prec is None and is_legal_sequential(w) and histories_equivalent(w, hx):
                return Verdict(ACCEPTED, witness=w)
            fast_pair = prec
    v = check_linearizable(hx, state_cap=state_cap)
    if v.rejected:
        v.violation.register = x
        if v.violation.ops is None:
            v.violation.ops = fast_pair
    return v


def _compose_witnesses(
    h: Sequence[Event], hlt: Sequence[Event], per_register: dict
) -> list[Event]:
    """Merge per-register witness orders into one total order that also
    respects logical-time precedence across registers, then emit the
    corresponding sequential history. Ties among order-free operations are
    broken by (timestamp, invocation lt, process, opid) so the composed
    witness is canonical for a given input."""
    inv_idx, res_idx, descs, inv_ev, res_ev = _op_table(hlt)
    succs: dict[OpId, set] = {o: set() for o in descs}
    indeg: dict[OpId, int] = {o: 0 for o in descs}

    def edge(a: OpId, b: OpId) -> None:
        if b not in succs[a]:
            succs[a].add(b)
            indeg[b] += 1

    for vx in per_register.values():
        chain = [e.op.opid for e in vx.witness if e.kind == INVOCATION]
        for a, b in zip(chain, chain[1:]):
            edge(a, b)
    responded: list[OpId] = []
    for e in hlt:
        if e.kind == RESPONSE_EVENT:
            responded.append(e.op.opid)
        else:
            for o1 in responded:
                edge(o1, e.op.opid)

    def key(o: OpId):
        inv = inv_ev[o]
        ts = descs[o].ts if descs[o].ts is not None else INITIAL_TS
        return (ts, inv.lt, inv.proc, o)

    ready = [key(o) for o, d in indeg.items() if d == 0]
    ready.sort()
    heap = list(ready)
    out: list[OpId] = []
    while heap:
        *_, o = heappop(heap)
        out.append(o)
        for b in sorted(succs[o]):
            indeg[b] -= 1
            if indeg[b] == 0:
                heappush(heap, key(b))
    if len(out) != len(descs):
        raise CheckerInternalError("witness composition found an order cycle")
    witness: list[Event] = []
    for o in out:
        witness.append(inv_ev[o])
        witness.append(res_ev[o])
    return witness


def check_sc_compositional(
    h: Sequence[Event], *, state_cap: int = DEFAULT_STATE_CAP
) -> Verdict:
    """Sequential-consistency check via per-register linearizability in
    logical time.

    Rebuilds the history in logical-time order, checks each register's
    subhistory for linearizability there (timestamp fast path first, bounded
    exhaustive search as fallback), and on success composes and certifies a
    single legal witness equivalent to the input. Any per-register rejection
    rejects the whole history; a register hitting the search cap yields
    UNDECIDED. The composed witness is re-certified, not trusted: legality
    and equivalence failures raise CheckerInternalError instead of returning
    a bogus acceptance.

    Acceptance is definitive: the returned witness proves sequential
    consistency. Rejection is definitive only for the logical-time route;
    the condition checked is sufficient, so histories from broken protocol
    variants can be rejected here yet still admit some other legal order.
    Histories of the intact protocols never trip this (their clock and
    visibility discipline is exactly what makes the route complete for
    them); for everything else, cross-check small rejections with
    check_sc_bruteforce.
    """
    events = list(h)
    if not is_well_formed(events):
        raise HistoryError("history is not well formed")
    if pending_operations(events):
        raise HistoryError("history has pending operations; run complete_history first")
    hlt = build_logical_time_history(events)
    regs: list[RegisterId] = []
    for e in hlt:
        if e.op.reg not in regs:
            regs.append(e.op.reg)
    per_register: dict[RegisterId, Verdict] = {}
    explored = 0
    for x in regs:
        vx = _check_register(project_register(hlt, x), x, state_cap)
        per_register[x] = vx
        explored += vx.states_explored
    for x in regs:
        if per_register[x].rejected:
            return Verdict(
                REJECTED,
                violation=per_register[x].violation,
                states_explored=explored,
                per_register=per_register,
            )
    for x in regs:
        if per_register[x].undecided:
            return Verdict(UNDECIDED, states_explored=explored, per_register=per_register)
    witness = _compose_witnesses(events, hlt, per_register)
    if not is_legal_sequential(witness) or not histories_equivalent(witness, events):
        raise CheckerInternalError("composed witness failed certification")
    return Verdict(
        ACCEPTED, witness=witness, states_explored=explored, per_register=per_register
    )


# --- brute-force oracle --------------------------------------------------------


def check_sc_bruteforce(h: Sequence[Event], *, op_cap: int = ORACLE_OP_CAP) -> Verdict:
    """Sequential consistency straight from the definition: search all
    interleavings of the per-process operation sequences for a legal one,
    memoized on (per-process progress, memory state). Exact and oblivious
    to timestamps and clocks, hence useful as an oracle; cost grows
    multinomially, hence the hard op cap (raises OracleCapError beyond it)."""
    events = list(h)
    if not is_well_formed(events):
        raise HistoryError("history is not well formed")
    inv_idx, res_idx, descs, inv_ev, res_ev = _op_table(events)
    if len(res_idx) != len(inv_idx):
        raise HistoryError("history has pending operations; complete it first")
    if len(descs) > op_cap:
        raise OracleCapError(
            f"{len(descs)} operations exceed the {op_cap}-operation oracle cap"
        )
    procs = sorted({op.proc for op in descs.values()})
    seqs: dict[int, list[OperationDescriptor]] = {p: [] for p in procs}
    for e in events:
        if e.kind == INVOCATION:
            seqs[e.proc].append(e.op)
    memo: set = set()
    explored = 0

    def dfs(idx: tuple, mem: tuple) -> Optional[list]:
        nonlocal explored
        if all(idx[i] == len(seqs[p]) for i, p in enumerate(procs)):
            return []
        key = (idx, mem)
        if key in memo:
            return None
        memo.add(key)
        explored += 1
        memdict = dict(mem)
        for i, p in enumerate(procs):
            if idx[i] == len(seqs[p]):
                continue
            op = seqs[p][idx[i]]
            nxt = idx[:i] + (idx[i] + 1,) + idx[i + 1 :]
            if op.kind == READ:
                if memdict.get(op.reg, 0) != op.ret:
                    continue
                tail = dfs(nxt, mem)
            else:
                memdict2 = dict(memdict)
                memdict2[op.reg] = op.arg
                tail = dfs(nxt, tuple(sorted(memdict2.items())))
            if tail is not None:
                return [op.opid] + tail
        return None

    found = dfs(tuple(0 for _ in procs), ())
    if found is None:
        return Verdict(
            REJECTED,
            violation=Violation(None, "no interleaving of per-process orders is legal"),
            states_explored=explored,
        )
    witness: list[Event] = []
    for o in found:
        witness.append(inv_ev[o])
        witness.append(res_ev[o])
    return Verdict(ACCEPTED, witness=witness, states_explored=explored)


# --- completion of crashed-run histories ----------------------------------------


def complete_history(h: Sequence[Event]) -> list[Event]:
    """Resolve pending operations left by mid-operation crashes.

    A pending write that already broadcast its timestamped update may have
    taken effect at any replica, so it is retained and closed with a
    synthetic OK response appended after everything else. A pending read, or
    a pending write that never reached its update phase (no timestamp),
    cannot have influenced anyone and is dropped. Descriptors of retained
    ops are copied, never mutated, so the input history stays intact."""
    events = list(h)
    if not is_well_formed(events):
        raise HistoryError("history is not well formed")
    pend = pending_operations(events)
    if not pend:
        return events
    drop: set[OpId] = set()
    retain: list[OperationDescriptor] = []
    for op in pend:
        if op.kind == WRITE and op.ts is not None:
            retain.append(op)
        else:
            drop.add(op.opid)
    for e in events:
        if e.lt is None:
            raise HistoryError(
                f"event for op {e.op.opid} has no lt annotation; cannot place "
                "synthetic responses"
            )
    out: list[Event] = []
    fresh: dict[OpId, OperationDescriptor] = {}
    retain_ids = {op.opid for op in retain}
    for e in events:
        if e.op.opid in drop:
            continue
        if e.op.opid in retain_ids:
            d = fresh.setdefault(
                e.op.opid,
                OperationDescriptor(
                    opid=e.op.opid,
                    proc=e.op.proc,
                    kind=e.op.kind,
                    reg=e.op.reg,
                    arg=e.op.arg,
                    ret=OK,
                    ts=e.op.ts,
                ),
            )
            out.append(Event(e.kind, d, e.rt, e.lt, e.proc))
        else:
            out.append(e)
    base_rt = max((e.rt for e in out), default=0)
    base_lt = max((e.lt for e in out), default=0)
    for i, op in enumerate(sorted(retain, key=lambda o: o.opid)):
        d = fresh[op.opid]
        out.append(Event(RESPONSE_EVENT, d, base_rt + 1 + i, base_lt + 1 + i, d.proc))
    return out


# --- trace audits ----------------------------------------------------------------


def audit_logical_clocks(trace) -> bool:
    """Replay every clock obligation over a trace: within one handler
    execution (one process, one tick) all recorded lts agree; across a
    process's handler executions lts strictly increase; every handled
    receipt's lt exceeds the lt its message was sent with. Discarded stale
    replies and dropped messages never merged, so they carry no obligation."""
    items: dict[int, dict[int, list[int]]] = {}  # proc -> rt -> [lt]

    def note(proc: int, rt: int, lt: Optional[int]) -> None:
        if lt is None:
            return
        items.setdefault(proc, {}).setdefault(rt, []).append(lt)

    for e in trace.history:
        note(e.proc, e.rt, e.lt)
    for rec in trace.message_log:
        note(rec.msg.sender, rec.send_rt, rec.msg.lt)
        if rec.handled:
            note(rec.msg.receiver, rec.recv_rt, rec.recv_lt)
            if rec.recv_lt <= rec.msg.lt:
                return False
    for per_rt in items.values():
        prev = None
        for rt in sorted(per_rt):
            lts = per_rt[rt]
            if any(lt != lts[0] for lt in lts):
                return False
            if prev is not None and lts[0] <= prev:
                return False
            prev = lts[0]
    return True


def _phase_kinds(protocol: str) -> tuple[set, set]:
    # (kinds whose ops contain an update phase, kinds whose ops contain a
    # query phase) under the protocol's contract. sc_abd reads write back,
    # so both their phases count; sc_abd writes never query.
    if protocol == SC_ABD:
        return {READ, WRITE}, {READ}
    if protocol == MW_ABD:
        return {READ, WRITE}, {READ, WRITE}
    raise ValueError(f"unknown protocol {protocol!r}")


def _visibility_scan(history: Sequence[Event], protocol: str) -> tuple[bool, int]:
    updaters, queriers = _phase_kinds(protocol)
    hlt = build_logical_time_history(history)
    ok = True
    pairs = 0
    state: dict[RegisterId, tuple[Timestamp, int]] = {}  # reg -> (max ts, updaters done)
    for e in hlt:
        op = e.op
        if e.kind == RESPONSE_EVENT:
            if op.kind in updaters and op.ts is not None:
                cur, cnt = state.get(op.reg, (INITIAL_TS, 0))
                state[op.reg] = (max(cur, op.ts), cnt + 1)
        else:
            if op.kind in queriers and op.ts is not None:
                cur, cnt = state.get(op.reg, (INITIAL_TS, 0))
                pairs += cnt
                if op.ts < cur:
                    ok = False
    return ok, pairs


def audit_timestamp_visibility(trace) -> bool:
    """Check the timestamp-visibility contract on a trace: in logical time,
    an operation that ran a query phase carries a timestamp at least as
    large as that of every same-register operation whose update phase
    completed before its invocation. The real protocols guarantee this by
    quorum intersection; mutants that skip propagation break it here even
    when the resulting history happens to be consistent."""
    ok, _ = _visibility_scan(trace.history, trace.protocol)
    return ok
