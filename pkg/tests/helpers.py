"""Shared builders and naive reference checkers for the test suite.

The naive checkers enumerate permutations outright, with no memoization and
no cleverness; they exist so the real checkers have something independent to
disagree with.
"""

from __future__ import annotations

import itertools
import random
from typing import Optional, Sequence

from dsmlab.core import (
    Event,
    INVOCATION,
    OK,
    OperationDescriptor,
    READ,
    RESPONSE_EVENT,
    Timestamp,
    WRITE,
)


def op_events(
    opid: int,
    proc: int,
    kind: str,
    reg: str,
    *,
    arg: Optional[int] = None,
    ret=None,
    ts: Optional[tuple] = None,
    inv: tuple = (0, 1),
    res: Optional[tuple] = None,
) -> list[Event]:
    """Build the inv (and res, unless pending) events of one operation.
    `inv` and `res` are (rt, lt) pairs."""
    d = OperationDescriptor(
        opid=opid,
        proc=proc,
        kind=kind,
        reg=reg,
        arg=arg,
        ret=ret,
        ts=Timestamp(*ts) if ts is not None else None,
    )
    events = [Event(INVOCATION, d, inv[0], inv[1], proc)]
    if res is not None:
        events.append(Event(RESPONSE_EVENT, d, res[0], res[1], proc))
    return events


def merge_by_rt(*event_lists: Sequence[Event]) -> list[Event]:
    events = [e for lst in event_lists for e in lst]
    events.sort(key=lambda e: e.rt)  # stable: equal-rt events keep build order
    return events


def write_then_stale_read() -> list[Event]:
    """w(x,1) then r(x)->0 at the same process: no sequential order can put
    the read's initial-value return after the write."""
    w = op_events(1, 1, WRITE, "x", arg=1, ret=OK, ts=(1, 1), inv=(1, 1), res=(2, 2))
    r = op_events(2, 1, READ, "x", ret=0, ts=(0, 0), inv=(3, 3), res=(4, 4))
    return merge_by_rt(w, r)


def sc_not_lin() -> list[Event]:
    """p2's read returns the initial value although p1's write completed
    strictly earlier in real time. Logical time tells the opposite story
    (p2's clock never saw p1), so the history is sequentially consistent
    but not linearizable."""
    w = op_events(1, 1, WRITE, "x", arg=1, ret=OK, ts=(6, 1), inv=(0, 6), res=(10, 9))
    r = op_events(2, 2, READ, "x", ret=0, ts=(0, 0), inv=(20, 1), res=(21, 2))
    return merge_by_rt(w, r)


# --- naive reference checkers ---------------------------------------------------


def _legal(order: Sequence[OperationDescriptor]) -> bool:
    mem: dict[str, int] = {}
    for op in order:
        if op.kind == READ:
            if mem.get(op.reg, 0) != op.ret:
                return False
        else:
            mem[op.reg] = op.arg
    return True


def naive_linearizable(h: Sequence[Event]) -> bool:
    """All-permutations linearizability reference; factorial, keep it small."""
    inv_idx: dict[int, int] = {}
    res_idx: dict[int, int] = {}
    descs: dict[int, OperationDescriptor] = {}
    for i, e in enumerate(h):
        if e.kind == INVOCATION:
            inv_idx[e.op.opid] = i
            descs[e.op.opid] = e.op
        else:
            res_idx[e.op.opid] = i
    ops = list(descs.values())
    for perm in itertools.permutations(ops):
        pos = {op.opid: i for i, op in enumerate(perm)}
        if any(
            res_idx[a.opid] < inv_idx[b.opid] and pos[a.opid] > pos[b.opid]
            for a in ops
            for b in ops
            if a.opid != b.opid
        ):
            continue
        if _legal(perm):
            return True
    return False


def naive_sc(h: Sequence[Event]) -> bool:
    """All-permutations sequential-consistency reference: any legal order
    that keeps every process's own sequence."""
    seq: dict[int, list[int]] = {}
    descs: dict[int, OperationDescriptor] = {}
    for e in h:
        if e.kind == INVOCATION:
            seq.setdefault(e.proc, []).append(e.op.opid)
            descs[e.op.opid] = e.op
    ops = list(descs.values())
    order_in_proc = {o: i for ids in seq.values() for i, o in enumerate(ids)}
    for perm in itertools.permutations(ops):
        pos = {op.opid: i for i, op in enumerate(perm)}
        ok = all(
            pos[ids[i]] < pos[ids[i + 1]]
            for ids in seq.values()
            for i in range(len(ids) - 1)
        )
        if ok and _legal(perm):
            return True
    return False


def random_history(
    rng: random.Random,
    *,
    max_procs: int = 3,
    max_ops: int = 6,
    regs: tuple = ("x", "y"),
    annotate_ts: bool = False,
) -> list[Event]:
    """A random complete well-formed history with adversarial values: read
    returns are drawn from plausible candidates (seen writes, 0), so both
    consistent and inconsistent histories come out. Logical times increase
    per process. Timestamps are omitted unless annotate_ts (and even then
    are arbitrary, not protocol-derived)."""
    nproc = rng.randint(1, max_procs)
    nops = rng.randint(1, max_ops)
    plans: dict[int, list] = {p: [] for p in range(1, nproc + 1)}
    written: dict[str, list[int]] = {r: [] for r in regs}
    for opid in range(1, nops + 1):
        p = rng.randint(1, nproc)
        reg = rng.choice(regs)
        if rng.random() < 0.5:
            val = rng.randint(1, 3)
            plans[p].append((opid, WRITE, reg, val))
            written[reg].append(val)
        else:
            plans[p].append((opid, READ, reg, None))
    events: list[Event] = []
    rt = 0
    lt = {p: 0 for p in plans}
    open_op: dict[int, OperationDescriptor] = {}
    pending = {p: list(plan) for p, plan in plans.items()}
    while any(pending.values()) or open_op:
        candidates = [p for p in pending if pending[p] or p in open_op]
        p = rng.choice(candidates)
        rt += 1
        lt[p] += rng.randint(1, 3)
        if p in open_op:
            d = open_op.pop(p)
            if d.kind == READ:
                pool = written[d.reg] + [0]
                d.ret = rng.choice(pool) if rng.random() < 0.8 else rng.randint(0, 3)
            else:
                d.ret = OK
            events.append(Event(RESPONSE_EVENT, d, rt, lt[p], p))
        else:
            opid, kind, reg, val = pending[p].pop(0)
            ts = Timestamp(lt[p], p) if annotate_ts and kind == WRITE else None
            d = OperationDescriptor(opid=opid, proc=p, kind=kind, reg=reg, arg=val, ts=ts)
            open_op[p] = d
            events.append(Event(INVOCATION, d, rt, lt[p], p))
    return events
