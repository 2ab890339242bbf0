"""JSON-lines stream files.

The first line is a header ``{"kind": "item"|"graph", "T": int, "nodes": [...]}``
(nodes only for graphs).  Each following line is
``{"t": int, "updates": [...]}`` with t running densely from 0 to T-1, and
each update is ``{"op": "ins"|"del", "item": str}``,
``{"op": "ins"|"del", "edge": [str, str]}`` or ``{"op": "noop"}``.
"""

from __future__ import annotations

import json
from typing import Iterable, TextIO, Union

from .errors import DataError
from .estimators import NOOP, GraphStream, ItemStream, Update


def _fail(lineno: int, msg: str):
    raise DataError(f"line {lineno}: {msg}")


def parse_stream(lines: Iterable[str]) -> Union[ItemStream, GraphStream]:
    it = iter(enumerate(lines, start=1))
    header = None
    for lineno, raw in it:
        if raw.strip():
            header = (lineno, raw)
            break
    if header is None:
        raise DataError("empty stream file")
    lineno, raw = header
    try:
        head = json.loads(raw)
    except json.JSONDecodeError as exc:
        _fail(lineno, f"invalid JSON ({exc.msg})")
    if not isinstance(head, dict) or head.get("kind") not in ("item", "graph"):
        _fail(lineno, 'header needs "kind": "item" or "graph"')
    T = head.get("T")
    if not isinstance(T, int) or isinstance(T, bool) or T < 1:
        _fail(lineno, 'header needs a positive integer "T"')
    kind = head["kind"]
    nodes = None
    if kind == "graph":
        nodes = head.get("nodes")
        if not isinstance(nodes, list) or not all(isinstance(v, str) for v in nodes):
            _fail(lineno, 'graph header needs "nodes" as a list of strings')
        if len(set(nodes)) != len(nodes):
            _fail(lineno, "duplicate node names")
    node_set = set(nodes or ())
    batches = []
    for lineno, raw in it:
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            _fail(lineno, f"invalid JSON ({exc.msg})")
        if not isinstance(rec, dict) or not isinstance(rec.get("updates"), list):
            _fail(lineno, 'expected {"t": int, "updates": [...]}')
        t = rec.get("t")
        if t != len(batches) or isinstance(t, bool):
            _fail(lineno, f"expected t={len(batches)}, got {t!r}")
        if t >= T:
            _fail(lineno, f"t={t} beyond T={T}")
        batch = []
        for u in rec["updates"]:
            if not isinstance(u, dict) or u.get("op") not in ("ins", "del", "noop"):
                _fail(lineno, f"bad update {u!r}")
            if u["op"] == "noop":
                batch.append(NOOP)
            elif kind == "item":
                if not isinstance(u.get("item"), str):
                    _fail(lineno, f"item update needs a string \"item\": {u!r}")
                batch.append(Update(u["op"], u["item"]))
            else:
                e = u.get("edge")
                if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, str) for v in e)):
                    _fail(lineno, f"edge update needs \"edge\": [a, b]: {u!r}")
                if e[0] == e[1]:
                    _fail(lineno, f"self-loop on {e[0]!r}")
                if e[0] not in node_set or e[1] not in node_set:
                    _fail(lineno, f"edge {e!r} uses an unknown node")
                batch.append(Update(u["op"], (e[0], e[1])))
        batches.append(batch)
    if len(batches) != T:
        raise DataError(f"header declares T={T} but {len(batches)} steps were found")
    if kind == "item":
        return ItemStream(batches)
    return GraphStream(tuple(nodes), batches)


def read_stream(path: str) -> Union[ItemStream, GraphStream]:
    with open(path, encoding="utf-8") as fh:
        return parse_stream(fh)


def _update_json(u: Update, kind: str) -> dict:
    if u.op == "noop":
        return {"op": "noop"}
    return {"op": u.op, "item": u.key} if kind == "item" else {"op": u.op, "edge": list(u.key)}


def write_stream(s: Union[ItemStream, GraphStream], fh: TextIO):
    kind = "item" if isinstance(s, ItemStream) else "graph"
    head = {"kind": kind, "T": s.T}
    if kind == "graph":
        head["nodes"] = list(s.nodes)
    fh.write(json.dumps(head) + "\n")
    for t, batch in enumerate(s.batches):
        fh.write(json.dumps({"t": t, "updates": [_update_json(u, kind) for u in batch]}) + "\n")
