"""On-disk formats: history files, message-log sidecars, and run configs.

A history file is JSON lines, one event per line, lines in rt order. Every
record carries the same ten keys in the same order:

    {"kind":"inv","opid":3,"proc":2,"op":"write","reg":"r0","val":17,
     "ret":null,"rt":40,"lt":9,"ts":[9,2]}

kind is "inv" or "res"; op is "read" or "write"; val is the written value
(null for reads); ret is null on invocations and on pending operations'
records, the read value or "OK" on responses; ts is [lt, pid] when the
operation's timestamp is known, null otherwise. Serializing then parsing is
the identity on histories, and serialization is deterministic, so equal
traces produce byte-equal files.

The message-log sidecar (same stem, suffix .msgs.jsonl) starts with one
header line carrying the run's protocol, n, and seed, followed by one record
per message in send order.

Run configs are flat "key = value" lines with # comments; unknown keys are
rejected, not ignored, so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence, Union

from .core import (
    Ack,
    Event,
    INVOCATION,
    Message,
    OK,
    OperationDescriptor,
    Query,
    READ,
    RESPONSE_EVENT,
    Response,
    Timestamp,
    TimestampValuePair,
    Update,
    WRITE,
)
from .protocol import MUTANTS, MUTANT_NONE, PROTOCOLS, SC_ABD
from .simnet import (
    AdversarialSchedule,
    ConfigError,
    DelayRule,
    FixedLinkDelay,
    MessageRecord,
    OTHER,
    SELF,
    SimConfig,
    Trace,
    UniformDelay,
    Workload,
)


class ParseError(ValueError):
    """A history or message-log file that violates its format."""


RECORD_KEYS = ("kind", "opid", "proc", "op", "reg", "val", "ret", "rt", "lt", "ts")


def _event_record(e: Event) -> dict:
    if e.lt is None:
        raise ValueError(f"event for op {e.op.opid} has no lt; cannot serialize")
    op = e.op
    ret = op.ret if e.kind == RESPONSE_EVENT else None
    return {
        "kind": e.kind,
        "opid": op.opid,
        "proc": op.proc,
        "op": op.kind,
        "reg": op.reg,
        "val": op.arg,
        "ret": ret,
        "rt": e.rt,
        "lt": e.lt,
        "ts": list(op.ts) if op.ts is not None else None,
    }


def serialize_history(h: Sequence[Event]) -> str:
    return "".join(json.dumps(_event_record(e), separators=(",", ":")) + "\n" for e in h)


def write_history(path: Union[str, Path], h: Sequence[Event]) -> None:
    Path(path).write_text(serialize_history(h), encoding="utf-8")


def _fail(lineno: int, msg: str) -> None:
    raise ParseError(f"line {lineno}: {msg}")


def parse_history(text: str) -> list[Event]:
    """Parse and validate a history file's content.

    Enforces the record schema, rt-ordered lines, invocation-before-response
    pairing, per-operation field agreement between the two records, read/
    write return typing, and timestamp well-formedness. Pending operations
    (invocation without response) are allowed.
    """
    descs: dict[int, OperationDescriptor] = {}
    responded: set[int] = set()
    events: list[Event] = []
    prev_rt: Optional[int] = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            _fail(lineno, f"not valid JSON ({exc.msg})")
        if not isinstance(rec, dict):
            _fail(lineno, "record is not an object")
        if set(rec) != set(RECORD_KEYS):
            missing = sorted(set(RECORD_KEYS) - set(rec))
            extra = sorted(set(rec) - set(RECORD_KEYS))
            _fail(lineno, f"bad keys (missing {missing}, unexpected {extra})")
        kind, opid, proc, opkind = rec["kind"], rec["opid"], rec["proc"], rec["op"]
        if kind not in (INVOCATION, RESPONSE_EVENT):
            _fail(lineno, f"kind must be 'inv' or 'res', got {rec['kind']!r}")
        if opkind not in (READ, WRITE):
            _fail(lineno, f"op must be 'read' or 'write', got {rec['op']!r}")
        if not isinstance(opid, int) or isinstance(opid, bool):
            _fail(lineno, "opid must be an integer")
        if not isinstance(proc, int) or proc < 1:
            _fail(lineno, "proc must be a positive integer")
        if not isinstance(rec["reg"], str) or not rec["reg"]:
            _fail(lineno, "reg must be a non-empty string")
        if not isinstance(rec["rt"], int) or not isinstance(rec["lt"], int):
            _fail(lineno, "rt and lt must be integers")
        if prev_rt is not None and rec["rt"] < prev_rt:
            _fail(lineno, f"lines out of rt order ({prev_rt} then {rec['rt']})")
        prev_rt = rec["rt"]
        val = rec["val"]
        if opkind == WRITE:
            if not isinstance(val, int) or isinstance(val, bool):
                _fail(lineno, "a write record needs an integer val")
        elif val is not None:
            _fail(lineno, "a read record must have val null")
        ts = rec["ts"]
        if ts is not None:
            if (
                not isinstance(ts, list)
                or len(ts) != 2
                or not all(isinstance(c, int) and not isinstance(c, bool) for c in ts)
            ):
                _fail(lineno, "ts must be null or a [lt, pid] pair of integers")
            ts = Timestamp(*ts)
        ret = rec["ret"]
        if kind == INVOCATION:
            if ret is not None:
                _fail(lineno, "an invocation record must have ret null")
            if opid in descs:
                _fail(lineno, f"op {opid} invoked twice")
            descs[opid] = OperationDescriptor(
                opid=opid, proc=proc, kind=opkind, reg=rec["reg"], arg=val, ts=ts
            )
        else:
            d = descs.get(opid)
            if d is None:
                _fail(lineno, f"response for op {opid} before its invocation")
            if opid in responded:
                _fail(lineno, f"op {opid} responded to twice")
            if (d.proc, d.kind, d.reg, d.arg) != (proc, opkind, rec["reg"], val):
                _fail(lineno, f"response for op {opid} disagrees with its invocation")
            if opkind == READ:
                if not isinstance(ret, int) or isinstance(ret, bool):
                    _fail(lineno, "a completed read needs an integer ret")
            elif ret != OK:
                _fail(lineno, f"a completed write needs ret {OK!r}")
            if ts is not None:
                if d.ts is not None and d.ts != ts:
                    _fail(lineno, f"op {opid} carries two different timestamps")
                d.ts = ts
            responded.add(opid)
            d.ret = ret
        events.append(
            Event(kind, descs[opid], rec["rt"], rec["lt"], proc)
        )
    return events


def read_history(path: Union[str, Path]) -> list[Event]:
    return parse_history(Path(path).read_text(encoding="utf-8"))


# --- message-log sidecar ------------------------------------------------------


def sidecar_path(history_path: Union[str, Path]) -> Path:
    p = Path(history_path)
    return p.with_name(p.stem + ".msgs.jsonl")


def _message_record(rec: MessageRecord) -> dict:
    m = rec.msg
    tsv = getattr(m, "tsv", None)
    return {
        "kind": m.kind,
        "sender": m.sender,
        "receiver": m.receiver,
        "lt": m.lt,
        "rid": m.rid,
        "reg": getattr(m, "reg", None),
        "ts": list(tsv.ts) if tsv is not None else None,
        "val": tsv.val if tsv is not None else None,
        "send_rt": rec.send_rt,
        "recv_rt": rec.recv_rt,
        "recv_lt": rec.recv_lt,
        "handled": rec.handled,
        "dropped": rec.dropped,
    }


def serialize_message_log(trace: Trace) -> str:
    header = {
        "protocol": trace.config.protocol,
        "n": trace.config.n,
        "seed": trace.config.seed,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    lines.extend(
        json.dumps(_message_record(r), separators=(",", ":")) for r in trace.message_log
    )
    return "\n".join(lines) + "\n"


def write_message_log(path: Union[str, Path], trace: Trace) -> None:
    Path(path).write_text(serialize_message_log(trace), encoding="utf-8")


_MSG_KEYS = (
    "kind", "sender", "receiver", "lt", "rid", "reg", "ts", "val",
    "send_rt", "recv_rt", "recv_lt", "handled", "dropped",
)


def parse_message_log(text: str) -> tuple[dict, list[MessageRecord]]:
    """Parse a sidecar back into (header, message records)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty message log (missing header line)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"line 1: not valid JSON ({exc.msg})")
    if not isinstance(header, dict) or not {"protocol", "n", "seed"} <= set(header):
        raise ParseError("header line must carry protocol, n, and seed")
    records: list[MessageRecord] = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            _fail(lineno, f"not valid JSON ({exc.msg})")
        if not isinstance(rec, dict) or set(rec) != set(_MSG_KEYS):
            _fail(lineno, "bad message record keys")
        kind = rec["kind"]
        common = dict(
            sender=rec["sender"], receiver=rec["receiver"], lt=rec["lt"], rid=rec["rid"]
        )
        tsv = (
            TimestampValuePair(Timestamp(*rec["ts"]), rec["val"])
            if rec["ts"] is not None
            else None
        )
        msg: Message
        if kind == "query":
            msg = Query(reg=rec["reg"], **common)
        elif kind == "response":
            if tsv is None:
                _fail(lineno, "response record needs ts and val")
            msg = Response(tsv=tsv, **common)
        elif kind == "update":
            if tsv is None:
                _fail(lineno, "update record needs ts and val")
            msg = Update(reg=rec["reg"], tsv=tsv, **common)
        elif kind == "ack":
            msg = Ack(**common)
        else:
            _fail(lineno, f"unknown message kind {kind!r}")
        records.append(
            MessageRecord(
                msg=msg,
                send_rt=rec["send_rt"],
                recv_rt=rec["recv_rt"],
                recv_lt=rec["recv_lt"],
                handled=rec["handled"],
                dropped=rec["dropped"],
            )
        )
    return header, records


def read_message_log(path: Union[str, Path]) -> tuple[dict, list[MessageRecord]]:
    return parse_message_log(Path(path).read_text(encoding="utf-8"))


# --- run configs ----------------------------------------------------------------

_CONFIG_KEYS = (
    "n", "seed", "protocol", "mutant",
    "ops_per_process", "read_fraction", "register_count", "think_time",
    "max_ticks", "mid_op_crash", "crashes",
    "delay", "delay_min", "delay_max", "delay_fixed", "delay_links", "schedule",
)


def _config_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}")


def _config_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}")


def _config_bool(key: str, raw: str) -> bool:
    if raw in ("true", "false"):
        return raw == "true"
    raise ConfigError(f"{key} must be true or false, got {raw!r}")


def _parse_crashes(raw: str) -> tuple:
    # "2@40,3@100" -> ((2, 40), (3, 100))
    out = []
    for part in filter(None, (p.strip() for p in raw.split(","))):
        pid, sep, tick = part.partition("@")
        if not sep:
            raise ConfigError(f"crash entry {part!r} must look like pid@tick")
        out.append((_config_int("crashes", pid), _config_int("crashes", tick)))
    return tuple(out)


def _parse_links(raw: str) -> dict:
    # "1>2:5,2>1:7" -> {(1, 2): 5, (2, 1): 7}
    out = {}
    for part in filter(None, (p.strip() for p in raw.split(","))):
        link, sep, d = part.rpartition(":")
        snd, sep2, rcv = link.partition(">")
        if not sep or not sep2:
            raise ConfigError(f"link entry {part!r} must look like sender>receiver:delay")
        out[(_config_int("delay_links", snd), _config_int("delay_links", rcv))] = _config_int(
            "delay_links", d
        )
    return out


def _parse_rule(raw: str) -> DelayRule:
    # kind[@rid]:sender>receiver:delay[-delay]; "*" matches anything, receiver
    # may be "self" or "other".
    parts = raw.split(":")
    if len(parts) != 3:
        raise ConfigError(f"rule {raw!r} must look like kind:sender>receiver:delay")
    kindspec, linkspec, delayspec = (p.strip() for p in parts)
    kind_raw, _, rid_raw = kindspec.partition("@")
    kind = None if kind_raw == "*" else kind_raw
    if kind not in (None, "query", "response", "update", "ack"):
        raise ConfigError(f"rule {raw!r}: unknown message kind {kind_raw!r}")
    rid = _config_int("schedule", rid_raw) if rid_raw else None
    snd_raw, sep, rcv_raw = linkspec.partition(">")
    if not sep:
        raise ConfigError(f"rule {raw!r}: link must look like sender>receiver")
    sender = None if snd_raw == "*" else _config_int("schedule", snd_raw)
    if rcv_raw in ("*",):
        receiver = None
    elif rcv_raw in (SELF, OTHER):
        receiver = rcv_raw
    else:
        receiver = _config_int("schedule", rcv_raw)
    lo_raw, sep, hi_raw = delayspec.partition("-")
    lo = _config_int("schedule", lo_raw)
    hi = _config_int("schedule", hi_raw) if sep else None
    return DelayRule(kind=kind, sender=sender, receiver=receiver, rid=rid, lo=lo, hi=hi)


def parse_schedule(raw: str) -> tuple:
    return tuple(_parse_rule(part) for part in filter(None, (p.strip() for p in raw.split(";"))))


def parse_config(text: str) -> SimConfig:
    """Parse a flat key = value run config into a validated SimConfig."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value, got {stripped!r}")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value

    model = pairs.pop("delay", "uniform")
    allowed_by_model = {
        "uniform": {"delay_min", "delay_max"},
        "fixed": {"delay_fixed", "delay_links"},
        "adversarial": {"schedule"},
    }
    if model not in allowed_by_model:
        raise ConfigError(f"delay must be uniform, fixed, or adversarial, got {model!r}")
    delay_keys = {"delay_min", "delay_max", "delay_fixed", "delay_links", "schedule"}
    for key in sorted((set(pairs) & delay_keys) - allowed_by_model[model]):
        raise ConfigError(f"key {key!r} does not apply to delay = {model}")
    if model == "uniform":
        delay: object = UniformDelay(
            lo=_config_int("delay_min", pairs.pop("delay_min", "1")),
            hi=_config_int("delay_max", pairs.pop("delay_max", "10")),
        )
    elif model == "fixed":
        delay = FixedLinkDelay(
            default=_config_int("delay_fixed", pairs.pop("delay_fixed", "1")),
            links=_parse_links(pairs.pop("delay_links", "")),
        )
    else:
        delay = AdversarialSchedule(rules=parse_schedule(pairs.pop("schedule", "")))

    workload = Workload(
        ops_per_process=_config_int("ops_per_process", pairs.pop("ops_per_process", "2")),
        read_fraction=_config_float("read_fraction", pairs.pop("read_fraction", "0.5")),
        register_count=_config_int("register_count", pairs.pop("register_count", "1")),
        think_time=_config_int("think_time", pairs.pop("think_time", "1")),
    )
    protocol = pairs.pop("protocol", SC_ABD)
    if protocol not in PROTOCOLS:
        raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    mutant = pairs.pop("mutant", MUTANT_NONE)
    if mutant not in MUTANTS:
        raise ConfigError(f"mutant must be one of {MUTANTS}, got {mutant!r}")
    cfg = SimConfig(
        n=_config_int("n", pairs.pop("n", "3")),
        seed=_config_int("seed", pairs.pop("seed", "0")),
        delay=delay,
        workload=workload,
        crashes=_parse_crashes(pairs.pop("crashes", "")),
        max_ticks=_config_int("max_ticks", pairs.pop("max_ticks", "1000000")),
        protocol=protocol,
        mid_op_crash=_config_bool("mid_op_crash", pairs.pop("mid_op_crash", "false")),
        mutant=mutant,
    )
    assert not pairs, f"unconsumed config keys {sorted(pairs)}"
    return cfg.validate()


def read_config(path: Union[str, Path]) -> SimConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
