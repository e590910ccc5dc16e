"""Program configuration: schema, loader, validator and engine builder.

A program is a YAML document that declares header-field bindings, flow-key
scopes, state labels, initial global registers, the comparator set, and
the transition rows with their actions and register-update tuples. The
loader validates everything it can up front and reports every violation
with its location, so a broken config fails in one round trip.

See docs/SCHEMA.md for the field-by-field reference and a worked listing.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import yaml

from . import alu, conditions, engine as engine_mod, extractor
from .engine import Action, ActionKind, Engine, XfsmRow, format_action, parse_action
from .extractor import FieldSpec, KeyScope, PacketRecord
from .flow_context import FlowContextTable

TIMESTAMP_UNITS = {
    "seconds": 1,
    "milliseconds": 1_000,
    "microseconds": 1_000_000,
    "ticks": 1_000,
}

META_SOURCES = ("ts", "in_port", "pkt_len")

STAY = "_stay"

FIELD_MASK = 0xFFFFFFFF


class ProgramError(Exception):
    pass


class ProgramParseError(ProgramError):
    """The file is not a well-formed program document."""


class ProgramValidationError(ProgramError):
    """One or more semantic violations; all are listed."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__(
            "invalid program:\n" + "\n".join(f"  - {p}" for p in self.problems)
        )


@dataclass(frozen=True)
class FieldDef:
    """One operand slot binding.

    ``source`` names a trace column or one of the metadata sources (ts,
    in_port, pkt_len); ``offset``/``mask`` give the raw-frame extraction
    rule. A field may carry both so a program runs in either ingestion
    mode.
    """

    name: str
    slot: int
    width: int
    source: Optional[str] = None
    offset: Optional[int] = None
    mask: Optional[int] = None


@dataclass(frozen=True)
class RowDef:
    """One declarative transition row (label-level, before compilation)."""

    state: Optional[str]  # None matches any state
    cond: tuple[tuple[str, int], ...]  # constrained condition bits only
    match: tuple[tuple[str, tuple[int, int]], ...]  # (field, (value, mask))
    priority: int
    next_state: Optional[str]  # None = stay in current state
    action: Action
    instructions: tuple[alu.Instruction, ...]
    row_id: Optional[str] = None


@dataclass(frozen=True)
class FallbackDef:
    """Wildcard context entry matched when the exact lookup misses."""

    priority: int
    state: str
    match: tuple[tuple[str, tuple[int, int]], ...]
    registers: tuple[int, int, int, int] = (0, 0, 0, 0)


@dataclass(frozen=True)
class TreeLeaf:
    state: str
    action: Action


@dataclass(frozen=True)
class TreeNode:
    condition: str
    if_true: Union["TreeNode", TreeLeaf]
    if_false: Union["TreeNode", TreeLeaf]


@dataclass(frozen=True)
class ClassifierTree:
    """Binary decision tree expanded into transition rows at build time.

    The tree applies in ``in_state`` when the ``gate`` condition is true;
    each root-to-leaf path becomes one row carrying the leaf's target
    state and action. Keeping the tree as data makes retrained trees a
    drop-in config change.
    """

    gate: str
    in_state: str
    base_priority: int
    root: Union[TreeNode, TreeLeaf]


@dataclass(frozen=True)
class TableSizes:
    context_subtables: int = 4
    context_buckets: int = 1024
    bucket_depth: int = 1
    context_fallback: int = 32
    xfsm: int = 128


@dataclass
class ProgramConfig:
    name: str
    timestamp_unit: str
    ports: int
    fields: tuple[FieldDef, ...]
    lookup_scope: tuple[str, ...]
    update_scope: tuple[str, ...]
    states: dict[str, int]
    globals_init: tuple[int, int, int, int]
    conditions: tuple[tuple[str, conditions.ConditionSpec], ...]
    match_fields: tuple[str, ...]
    rows: tuple[RowDef, ...]
    context_fallback: tuple[FallbackDef, ...] = ()
    classifier_tree: Optional[ClassifierTree] = None
    table_sizes: TableSizes = dc_field(default_factory=TableSizes)
    management_period: int = 0  # 0 is replaced by one second of ticks
    max_parse_depth: int = 256  # bytes, raw mode
    # extra per-flow scratch registers, each addressed through a donated
    # (otherwise unused) global selector slot: (alias name, G slot index)
    flow_scratch: tuple[tuple[str, int], ...] = ()

    @property
    def ticks_per_second(self) -> int:
        return TIMESTAMP_UNITS[self.timestamp_unit]

    def field_by_name(self, name: str) -> FieldDef:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def partitionable(self) -> bool:
        """True when flows can be processed on independent instances.

        Requires identical lookup and update scopes and no writes to the
        shared global registers anywhere in the program (writes to donated
        scratch slots are per-flow and do not count).
        """
        if self.lookup_scope != self.update_scope:
            return False
        donated = {alu.SEL_G_BASE + slot for _, slot in self.flow_scratch}
        for row in self.rows:
            for ins in row.instructions:
                for d in ins.destinations():
                    if d >= alu.SEL_G_BASE and d not in donated:
                        return False
        return True


# ---------------------------------------------------------------------------
# parsing helpers


def _to_int(value: object, where: str, problems: list[str]) -> int:
    if isinstance(value, bool):
        problems.append(f"{where}: expected integer, got boolean")
        return 0
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value, 0)
        except ValueError:
            pass
    problems.append(f"{where}: expected integer, got {value!r}")
    return 0


def _parse_pattern(
    value: object, width: int, where: str, problems: list[str]
) -> tuple[int, int]:
    """value/mask pattern: int (exact), "*" (any) or "VALUE/MASK"."""
    full = (1 << width) - 1
    if isinstance(value, int) and not isinstance(value, bool):
        return value & full, full
    if isinstance(value, str):
        text = value.strip()
        if text == "*":
            return 0, 0
        if "/" in text:
            left, right = text.split("/", 1)
            sub: list[str] = []
            v = _to_int(left.strip(), where, sub)
            m = _to_int(right.strip(), where, sub)
            if sub:
                problems.extend(sub)
                return 0, 0
            return v & m & full, m & full
        sub = []
        v = _to_int(text, where, sub)
        if not sub:
            return v & full, full
    problems.append(f"{where}: bad match pattern {value!r}")
    return 0, 0


def _format_pattern(pattern: tuple[int, int], width: int) -> object:
    value, mask = pattern
    full = (1 << width) - 1
    if mask == 0:
        return "*"
    if mask == full:
        return value
    return f"0x{value:x}/0x{mask:x}"


# ---------------------------------------------------------------------------
# loading


def loads(text: str, source: str = "<string>") -> ProgramConfig:
    """Parse and validate a program document from a string."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ProgramParseError(f"{source}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProgramParseError(f"{source}: program document must be a mapping")
    return _build(doc, source)


def load(path: Union[str, Path]) -> ProgramConfig:
    """Load and validate a program file."""
    path = Path(path)
    return loads(path.read_text(), str(path))


def _build(doc: dict, source: str) -> ProgramConfig:
    problems: list[str] = []

    name = doc.get("name")
    if not isinstance(name, str) or not name:
        problems.append("name: required non-empty string")
        name = "<unnamed>"

    unit = doc.get("timestamp_unit", "microseconds")
    if unit not in TIMESTAMP_UNITS:
        problems.append(
            f"timestamp_unit: {unit!r} not one of {sorted(TIMESTAMP_UNITS)}"
        )
        unit = "microseconds"

    ports = _to_int(doc.get("ports", 4), "ports", problems)
    if not 1 <= ports < 64:
        problems.append(f"ports: {ports} outside 1..63")
        ports = 4

    max_depth = _to_int(doc.get("max_parse_depth", 256), "max_parse_depth", problems)

    # --- fields ---------------------------------------------------------
    fields: list[FieldDef] = []
    seen_names: set[str] = set()
    seen_slots: set[int] = set()
    raw_fields = doc.get("fields", [])
    if not isinstance(raw_fields, list):
        problems.append("fields: expected a list")
        raw_fields = []
    for i, item in enumerate(raw_fields):
        where = f"fields[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: expected a mapping")
            continue
        fname = item.get("name")
        if not isinstance(fname, str) or not fname:
            problems.append(f"{where}: missing name")
            continue
        if fname in seen_names:
            problems.append(f"{where}: duplicate field name {fname!r}")
        seen_names.add(fname)
        slot = _to_int(item.get("slot", -1), f"{where}.slot", problems)
        if not 0 <= slot < extractor.NUM_HEADER_SLOTS:
            problems.append(f"{where}: slot {slot} outside 0..7")
        elif slot in seen_slots:
            problems.append(f"{where}: slot {slot} already bound")
        seen_slots.add(slot)
        width = _to_int(item.get("width", 32), f"{where}.width", problems)
        if not 1 <= width <= 32:
            problems.append(f"{where}: width {width} outside 1..32")
            width = 32
        src = item.get("source")
        if src is not None and not isinstance(src, str):
            problems.append(f"{where}: source must be a string")
            src = None
        offset = item.get("offset")
        if offset is not None:
            offset = _to_int(offset, f"{where}.offset", problems)
            if offset + width > max_depth * 8:
                problems.append(
                    f"{where}: offset+width reaches past max_parse_depth "
                    f"({max_depth} bytes)"
                )
        mask = item.get("mask")
        if mask is not None:
            mask = _to_int(mask, f"{where}.mask", problems)
            if not 0 <= mask <= FIELD_MASK:
                problems.append(f"{where}: mask does not fit in 32 bits")
        if src is None and offset is None:
            problems.append(f"{where}: needs a source column or a raw offset")
        fields.append(FieldDef(fname, slot, width, src, offset, mask))

    field_map = {f.name: f for f in fields}

    def scope_of(key: str) -> tuple[str, ...]:
        names = doc.get(key, [])
        if not isinstance(names, list) or not names:
            problems.append(f"{key}: must be a non-empty list of field names")
            return ()
        total = 0
        for n in names:
            if n not in field_map:
                problems.append(f"{key}: unknown field {n!r}")
            else:
                total += field_map[n].width
        if total > extractor.FLOW_KEY_WIDTH:
            problems.append(f"{key}: widths sum to {total} > 128 bits")
        return tuple(names)

    lookup_scope = scope_of("lookup_scope")
    update_scope = (
        scope_of("update_scope") if "update_scope" in doc else lookup_scope
    )

    # --- states ---------------------------------------------------------
    states: dict[str, int] = {}
    raw_states = doc.get("states", {})
    if not isinstance(raw_states, dict) or not raw_states:
        problems.append("states: must be a non-empty mapping of label to code")
        raw_states = {}
    for label, code in raw_states.items():
        code = _to_int(code, f"states.{label}", problems)
        if not 0 <= code < (1 << 16):
            problems.append(f"states.{label}: code {code} outside 16 bits")
        if code in states.values():
            problems.append(f"states.{label}: duplicate code {code}")
        states[str(label)] = code
    if states and 0 not in states.values():
        problems.append("states: a state with code 0 (the default) is required")

    # --- globals --------------------------------------------------------
    gvals = [0, 0, 0, 0]
    raw_globals = doc.get("globals", {})
    if not isinstance(raw_globals, dict):
        problems.append("globals: expected a mapping G0..G3 to values")
        raw_globals = {}
    for key, value in raw_globals.items():
        k = str(key).upper()
        if k in ("G0", "G1", "G2", "G3"):
            v = _to_int(value, f"globals.{k}", problems)
            if not 0 <= v <= FIELD_MASK:
                problems.append(f"globals.{k}: value does not fit in 32 bits")
            gvals[int(k[1])] = v & FIELD_MASK
        else:
            problems.append(f"globals: unknown register {key!r}")

    # --- per-flow scratch registers --------------------------------------
    scratch: list[tuple[str, int]] = []
    raw_scratch = doc.get("flow_scratch", {})
    if not isinstance(raw_scratch, dict):
        problems.append("flow_scratch: expected a mapping of alias to G slot")
        raw_scratch = {}
    donated: set[int] = set()
    for alias, gname in raw_scratch.items():
        alias = str(alias)
        where = f"flow_scratch.{alias}"
        if alias in field_map:
            problems.append(f"{where}: alias collides with field {alias!r}")
        try:
            sel = alu.parse_selector(str(gname))
        except ValueError as exc:
            problems.append(f"{where}: {exc}")
            continue
        if not alu.SEL_G_BASE <= sel < alu.SEL_H_BASE:
            problems.append(f"{where}: only global slots G0..G3 can be donated")
            continue
        slot = sel - alu.SEL_G_BASE
        if slot in donated:
            problems.append(f"{where}: G{slot} already donated")
        donated.add(slot)
        if gvals[slot] != 0:
            problems.append(
                f"{where}: G{slot} carries a global init value and cannot be donated"
            )
        scratch.append((alias, slot))

    # --- operand aliases and conditions ---------------------------------
    scratch_alias = {alias: f"G{slot}" for alias, slot in scratch}

    def resolve_token(token: str) -> str:
        if token in field_map:
            return f"H{field_map[token].slot}"
        if token in scratch_alias:
            return scratch_alias[token]
        return token

    cond_list: list[tuple[str, conditions.ConditionSpec]] = []
    cond_names: dict[str, int] = {}
    raw_conds = doc.get("conditions", [])
    if not isinstance(raw_conds, list):
        problems.append("conditions: expected a list")
        raw_conds = []
    if len(raw_conds) > conditions.NUM_CONDITIONS:
        problems.append(
            f"conditions: {len(raw_conds)} configured, at most "
            f"{conditions.NUM_CONDITIONS} comparator slots exist"
        )
        raw_conds = raw_conds[: conditions.NUM_CONDITIONS]
    for i, item in enumerate(raw_conds):
        where = f"conditions[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: expected a mapping")
            continue
        cname = str(item.get("name", f"C{i}"))
        if cname in cond_names:
            problems.append(f"{where}: duplicate condition name {cname!r}")
        op_txt = str(item.get("op", "")).upper()
        try:
            op = conditions.CmpOp[op_txt]
        except KeyError:
            problems.append(f"{where}: unknown comparison {op_txt!r}")
            op = conditions.CmpOp.EQ
        spec = None
        try:
            lhs = conditions.parse_operand(resolve_token(str(item.get("lhs", ""))))
            rhs = conditions.parse_operand(resolve_token(str(item.get("rhs", ""))))
            spec = conditions.ConditionSpec(op, lhs, rhs)
        except ValueError as exc:
            problems.append(f"{where}: {exc}")
        if spec is not None:
            cond_names[cname] = i
            cond_list.append((cname, spec))

    # --- match fields ----------------------------------------------------
    match_fields = doc.get("match_fields", [])
    if not isinstance(match_fields, list):
        problems.append("match_fields: expected a list")
        match_fields = []
    for n in match_fields:
        if n not in field_map:
            problems.append(f"match_fields: unknown field {n!r}")
    if len(match_fields) > 4:
        problems.append("match_fields: at most 4 fields fit the row match budget")
    match_fields = tuple(str(n) for n in match_fields)

    # --- rows -------------------------------------------------------------
    rows: list[RowDef] = []
    priorities: set[int] = set()
    raw_rows = doc.get("rows", [])
    if not isinstance(raw_rows, list) or not raw_rows:
        problems.append("rows: at least one transition row is required")
        raw_rows = []
    for i, item in enumerate(raw_rows):
        where = f"rows[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: expected a mapping")
            continue
        rid = item.get("id")
        if rid is not None:
            rid = str(rid)
            where = f"rows[{i}] (id={rid})"
        state = item.get("state", "*")
        if state in ("*", None):
            state = None
        else:
            state = str(state)
            if state not in states:
                problems.append(f"{where}: unknown state {state!r}")
        cond_pat: list[tuple[str, int]] = []
        raw_cond = item.get("cond", {})
        if not isinstance(raw_cond, dict):
            problems.append(f"{where}: cond must be a mapping")
            raw_cond = {}
        for cname, bit in raw_cond.items():
            cname = str(cname)
            if cname not in cond_names:
                problems.append(f"{where}: unknown condition {cname!r}")
                continue
            if bit in ("*", None):
                continue
            bit = _to_int(bit, f"{where}.cond.{cname}", problems)
            if bit not in (0, 1):
                problems.append(f"{where}: condition {cname} must be 0, 1 or '*'")
                continue
            cond_pat.append((cname, bit))
        match_pat: list[tuple[str, tuple[int, int]]] = []
        raw_match = item.get("match", {})
        if not isinstance(raw_match, dict):
            problems.append(f"{where}: match must be a mapping")
            raw_match = {}
        for fname, pattern in raw_match.items():
            fname = str(fname)
            if fname not in match_fields:
                problems.append(
                    f"{where}: field {fname!r} is not listed in match_fields"
                )
                continue
            match_pat.append(
                (fname, _parse_pattern(pattern, 32, f"{where}.match.{fname}", problems))
            )
        priority = _to_int(item.get("priority", -1), f"{where}.priority", problems)
        if priority < 0:
            problems.append(f"{where}: priority must be a non-negative integer")
        elif priority in priorities:
            problems.append(f"{where}: duplicate priority {priority}")
        priorities.add(priority)
        nxt = item.get("next", STAY)
        if nxt == STAY or nxt is None:
            nxt = None
        else:
            nxt = str(nxt)
            if nxt not in states:
                problems.append(f"{where}: next state {nxt!r} not declared")
        try:
            action = parse_action(str(item.get("action", "none")))
            if action.kind in (ActionKind.FORWARD, ActionKind.SET_DSCP) and not (
                1 <= action.port <= ports
            ):
                problems.append(
                    f"{where}: port {action.port} outside 1..{ports}"
                )
        except ValueError as exc:
            problems.append(f"{where}: {exc}")
            action = Action(ActionKind.NONE)
        instrs: list[alu.Instruction] = []
        raw_update = item.get("update", [])
        if not isinstance(raw_update, list):
            problems.append(f"{where}: update must be a list of instructions")
            raw_update = []
        for j, text in enumerate(raw_update):
            try:
                instrs.append(alu.parse_instruction(str(text), resolve_token))
            except ValueError as exc:
                problems.append(f"{where}.update[{j}]: {exc}")
        for msg in alu.validate_tuple(instrs):
            problems.append(f"{where}: {msg}")
        rows.append(
            RowDef(
                state=state,
                cond=tuple(cond_pat),
                match=tuple(match_pat),
                priority=priority,
                next_state=nxt,
                action=action,
                instructions=tuple(instrs),
                row_id=rid,
            )
        )

    if raw_rows and not any(
        r.state is None and not r.cond and not r.match for r in rows
    ):
        problems.append("rows: a catch-all row (state '*', no cond/match) is required")

    # --- context fallback --------------------------------------------------
    fallback: list[FallbackDef] = []
    fb_priorities: set[int] = set()
    raw_fallback = doc.get("context_fallback", [])
    if not isinstance(raw_fallback, list):
        problems.append("context_fallback: expected a list")
        raw_fallback = []
    for i, item in enumerate(raw_fallback):
        where = f"context_fallback[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: expected a mapping")
            continue
        st = str(item.get("state", ""))
        if st not in states:
            problems.append(f"{where}: unknown state {st!r}")
        prio = _to_int(item.get("priority", -1), f"{where}.priority", problems)
        if prio in fb_priorities:
            problems.append(f"{where}: duplicate priority {prio}")
        fb_priorities.add(prio)
        pats: list[tuple[str, tuple[int, int]]] = []
        raw_match = item.get("match", {})
        if not isinstance(raw_match, dict):
            problems.append(f"{where}: match must be a mapping")
            raw_match = {}
        for fname, pattern in raw_match.items():
            fname = str(fname)
            if fname not in lookup_scope:
                problems.append(
                    f"{where}: field {fname!r} is not part of the lookup scope"
                )
                continue
            width = field_map[fname].width if fname in field_map else 32
            pats.append(
                (
                    fname,
                    _parse_pattern(pattern, width, f"{where}.match.{fname}", problems),
                )
            )
        regs = item.get("registers", [0, 0, 0, 0])
        if not isinstance(regs, list) or len(regs) > 4:
            problems.append(f"{where}: registers must be a list of up to 4 values")
            regs = [0, 0, 0, 0]
        regs = [_to_int(v, f"{where}.registers", problems) for v in regs]
        regs += [0] * (4 - len(regs))
        fallback.append(FallbackDef(prio, st, tuple(pats), tuple(regs)))

    # --- classifier tree ----------------------------------------------------
    tree: Optional[ClassifierTree] = None
    raw_tree = doc.get("classifier_tree")
    if raw_tree is not None:
        if not isinstance(raw_tree, dict):
            problems.append("classifier_tree: expected a mapping")
        else:
            tree = _parse_tree(raw_tree, states, cond_names, ports, problems)
            if tree is not None:
                leaves = sum(1 for _ in _tree_paths(tree.root))
                for p in range(tree.base_priority, tree.base_priority + leaves):
                    if p in priorities:
                        problems.append(
                            f"classifier_tree: expanded priority {p} collides "
                            "with an explicit row"
                        )

    # --- sizes and period --------------------------------------------------
    sizes = TableSizes()
    raw_sizes = doc.get("table_sizes", {})
    if not isinstance(raw_sizes, dict):
        problems.append("table_sizes: expected a mapping")
        raw_sizes = {}
    size_kwargs = {}
    for key in (
        "context_subtables",
        "context_buckets",
        "bucket_depth",
        "context_fallback",
        "xfsm",
    ):
        if key in raw_sizes:
            v = _to_int(raw_sizes[key], f"table_sizes.{key}", problems)
            if v < 1:
                problems.append(f"table_sizes.{key}: must be positive")
                v = 1
            size_kwargs[key] = v
    sizes = TableSizes(**size_kwargs)
    total_rows = len(rows) + (sum(1 for _ in _tree_paths(tree.root)) if tree else 0)
    if total_rows > sizes.xfsm:
        problems.append(
            f"rows: {total_rows} rows exceed the transition table capacity "
            f"({sizes.xfsm})"
        )
    if len(fallback) > sizes.context_fallback:
        problems.append(
            f"context_fallback: {len(fallback)} entries exceed capacity "
            f"({sizes.context_fallback})"
        )

    period = _to_int(
        doc.get("management_period", 0), "management_period", problems
    )
    if period < 0:
        problems.append("management_period: must be non-negative")
        period = 0
    if period == 0:
        period = TIMESTAMP_UNITS.get(unit, 1_000_000)

    unknown = set(doc) - {
        "name",
        "description",
        "timestamp_unit",
        "ports",
        "max_parse_depth",
        "fields",
        "lookup_scope",
        "update_scope",
        "states",
        "globals",
        "flow_scratch",
        "conditions",
        "match_fields",
        "rows",
        "context_fallback",
        "classifier_tree",
        "table_sizes",
        "management_period",
    }
    for key in sorted(unknown):
        problems.append(f"unknown top-level key {key!r}")

    if problems:
        raise ProgramValidationError([f"{source}: {p}" for p in problems])

    return ProgramConfig(
        name=name,
        timestamp_unit=unit,
        ports=ports,
        fields=tuple(fields),
        lookup_scope=lookup_scope,
        update_scope=update_scope,
        states=states,
        globals_init=tuple(gvals),  # type: ignore[arg-type]
        conditions=tuple(cond_list),
        match_fields=match_fields,
        rows=tuple(rows),
        context_fallback=tuple(fallback),
        classifier_tree=tree,
        table_sizes=sizes,
        management_period=period,
        max_parse_depth=max_depth,
        flow_scratch=tuple(scratch),
    )


def _parse_tree(
    raw: dict,
    states: dict[str, int],
    cond_names: dict[str, int],
    ports: int,
    problems: list[str],
) -> Optional[ClassifierTree]:
    gate = str(raw.get("gate", ""))
    if gate not in cond_names:
        problems.append(f"classifier_tree.gate: unknown condition {gate!r}")
    in_state = str(raw.get("in_state", ""))
    if in_state not in states:
        problems.append(f"classifier_tree.in_state: unknown state {in_state!r}")
    base = _to_int(raw.get("base_priority", -1), "classifier_tree.base_priority", problems)
    if base < 0:
        problems.append("classifier_tree.base_priority: must be non-negative")

    def walk(node: object, path: str) -> Union[TreeNode, TreeLeaf, None]:
        where = f"classifier_tree.{path}"
        if not isinstance(node, dict):
            problems.append(f"{where}: expected a mapping")
            return None
        if "class" in node:
            st = str(node.get("class", ""))
            if st not in states:
                problems.append(f"{where}: unknown state {st!r}")
            try:
                action = parse_action(str(node.get("action", "none")))
            except ValueError as exc:
                problems.append(f"{where}: {exc}")
                action = Action(ActionKind.NONE)
            return TreeLeaf(st, action)
        cname = str(node.get("condition", ""))
        if cname not in cond_names:
            problems.append(f"{where}: unknown condition {cname!r}")
        t = walk(node.get("if_true"), path + ".if_true")
        f = walk(node.get("if_false"), path + ".if_false")
        if t is None or f is None:
            return None
        return TreeNode(cname, t, f)

    root = walk(raw.get("tree"), "tree")
    if root is None or gate not in cond_names or in_state not in states or base < 0:
        return None
    return ClassifierTree(gate, in_state, base, root)


def _tree_paths(
    node: Union[TreeNode, TreeLeaf], path: tuple[tuple[str, int], ...] = ()
):
    """Yield (condition-bit path, leaf) pairs, leftmost (all-true) first."""
    if isinstance(node, TreeLeaf):
        yield path, node
        return
    yield from _tree_paths(node.if_true, path + ((node.condition, 1),))
    yield from _tree_paths(node.if_false, path + ((node.condition, 0),))


# ---------------------------------------------------------------------------
# compilation to engine structures


def _compiled_scope(config: ProgramConfig, names: Sequence[str]) -> KeyScope:
    return KeyScope(
        [(config.field_by_name(n).slot, config.field_by_name(n).width) for n in names]
    )


def _cond_index(config: ProgramConfig) -> dict[str, int]:
    return {name: i for i, (name, _) in enumerate(config.conditions)}


def _compile_row(
    config: ProgramConfig,
    cond_idx: Mapping[str, int],
    row_id: int,
    state: Optional[str],
    cond: Sequence[tuple[str, int]],
    match: Sequence[tuple[str, tuple[int, int]]],
    priority: int,
    next_state: Optional[str],
    action: Action,
    instructions: tuple[alu.Instruction, ...],
    label: str,
) -> XfsmRow:
    if state is None:
        state_pat = (0, 0)
    else:
        state_pat = (config.states[state], (1 << 16) - 1)
    cval = cmask = 0
    for cname, bit in cond:
        pos = cond_idx[cname]
        cmask |= 1 << pos
        cval |= bit << pos
    by_name = dict(match)
    fields = tuple(by_name.get(n, (0, 0)) for n in config.match_fields)
    nxt = None if next_state is None else config.states[next_state]
    return XfsmRow(
        state=state_pat,
        cond=(cval, cmask),
        fields=fields,
        priority=priority,
        next_state=nxt,
        action=action,
        instructions=instructions,
        row_id=row_id,
        label=label,
    )


def compile_rows(config: ProgramConfig) -> list[XfsmRow]:
    """Explicit rows plus tree-expanded decision rows, in row-id order."""
    cond_idx = _cond_index(config)
    compiled = []
    for i, row in enumerate(config.rows):
        compiled.append(
            _compile_row(
                config,
                cond_idx,
                i,
                row.state,
                row.cond,
                row.match,
                row.priority,
                row.next_state,
                row.action,
                row.instructions,
                row.row_id or f"row{i}",
            )
        )
    tree = config.classifier_tree
    if tree is not None:
        for j, (path, leaf) in enumerate(_tree_paths(tree.root)):
            compiled.append(
                _compile_row(
                    config,
                    cond_idx,
                    len(config.rows) + j,
                    tree.in_state,
                    ((tree.gate, 1),) + tuple(path),
                    (),
                    tree.base_priority + j,
                    leaf.state,
                    leaf.action,
                    (),
                    f"tree_leaf{j}",
                )
            )
    return compiled


def check_totality(config: ProgramConfig) -> list[tuple[str, int]]:
    """(state, condition-vector) pairs not covered by any row.

    Header matches are treated as wildcards for this check; a program with
    a catch-all row is always total.
    """
    rows = compile_rows(config)
    missing = []
    for label, code in config.states.items():
        for bits in range(1 << conditions.NUM_CONDITIONS):
            for row in rows:
                sv, sm = row.state
                cv, cm = row.cond
                if code & sm == sv and bits & cm == cv:
                    break
            else:
                missing.append((label, bits))
    return missing


def build_engine(
    config: ProgramConfig,
    *,
    seed: int = 0,
    hazard_window: int = 0,
    hw16_div: bool = False,
) -> Engine:
    """Instantiate a runnable engine from a validated program."""
    sizes = config.table_sizes
    context = FlowContextTable(
        subtables=sizes.context_subtables,
        buckets=sizes.context_buckets,
        bucket_depth=sizes.bucket_depth,
        seed=seed,
        fallback_capacity=sizes.context_fallback,
        num_registers=4 + len(config.flow_scratch),
    )
    scope_fields = [config.field_by_name(n) for n in config.lookup_scope]
    for fb in config.context_fallback:
        value = mask = 0
        pat = dict(fb.match)
        for f in scope_fields:
            v, m = pat.get(f.name, (0, 0))
            value = (value << f.width) | (v & ((1 << f.width) - 1))
            mask = (mask << f.width) | (m & ((1 << f.width) - 1))
        pad = extractor.FLOW_KEY_WIDTH - sum(f.width for f in scope_fields)
        context.add_fallback(
            value << pad, mask << pad, fb.priority, config.states[fb.state], fb.registers
        )
    return Engine(
        name=config.name,
        state_labels={code: label for label, code in config.states.items()},
        lookup_scope=_compiled_scope(config, config.lookup_scope),
        update_scope=_compiled_scope(config, config.update_scope),
        compiled_conditions=conditions.compile_specs(
            [spec for _, spec in config.conditions]
        ),
        rows=compile_rows(config),
        match_slots=[config.field_by_name(n).slot for n in config.match_fields],
        context=context,
        globals_init=config.globals_init,
        management_period=config.management_period,
        xfsm_capacity=sizes.xfsm,
        ports=config.ports,
        scratch_slots=[slot for _, slot in config.flow_scratch],
        hazard_window=hazard_window,
        alu_runtime=alu.AluRuntime(hw16_div=hw16_div),
        seed=seed,
        partitionable=config.partitionable,
    )


# ---------------------------------------------------------------------------
# trace-row binding


class BindError(ProgramError):
    """The trace rows do not carry what the program needs."""


def make_binder(config: ProgramConfig, mode: str = "csv") -> engine_mod.Binder:
    """Build the trace-row to packet-record binding for one program.

    csv mode reads pre-parsed columns; raw mode runs the offset/mask
    extractor over the frame bytes. Metadata sources (ts, in_port,
    pkt_len) work in both modes.
    """
    if mode not in ("csv", "raw"):
        raise ValueError(f"unknown ingestion mode {mode!r}")
    column_binds: list[tuple[int, str, int]] = []  # slot, column, mask
    meta_binds: list[tuple[int, str, int]] = []  # slot, source, mask
    sam_binds: list[tuple[int, FieldSpec]] = []
    for f in config.fields:
        full = (1 << f.width) - 1
        mask = f.mask if f.mask is not None else full
        if f.source in META_SOURCES:
            meta_binds.append((f.slot, f.source, mask & full))
        elif mode == "csv":
            if f.source is None:
                raise BindError(
                    f"field {f.name!r} has no column binding for csv mode"
                )
            column_binds.append((f.slot, f.source, mask & full))
        else:
            if f.offset is None:
                raise BindError(f"field {f.name!r} has no raw offset for raw mode")
            sam_binds.append((f.slot, FieldSpec(f.offset, f.width, mask & full)))

    def bind(row: Mapping[str, object], seq: int) -> PacketRecord:
        ts = int(row["ts"])  # presence validated at ingestion
        in_port = int(row.get("in_port", 0))
        truncated = False
        if mode == "raw":
            raw = row.get("raw")
            if not isinstance(raw, (bytes, bytearray)):
                raise BindError(f"trace row {seq}: raw mode needs frame bytes")
            length = len(raw)
            h = [0] * extractor.NUM_HEADER_SLOTS
            for slot, spec in sam_binds:
                value, cut = extractor.extract_field(raw, spec)
                h[slot] = value
                truncated = truncated or cut
        else:
            raw = None
            length = int(row.get("pkt_len", 0))
            h = [0] * extractor.NUM_HEADER_SLOTS
            for slot, column, mask in column_binds:
                try:
                    h[slot] = int(row[column]) & mask
                except KeyError:
                    raise BindError(
                        f"trace row {seq}: missing column {column!r}"
                    ) from None
        meta = {"ts": ts, "in_port": in_port, "pkt_len": int(row.get("pkt_len", length))}
        for slot, source, mask in meta_binds:
            h[slot] = meta[source] & mask
        return PacketRecord(
            h=h,
            ts=ts,
            in_port=in_port,
            length=meta["pkt_len"],
            raw=bytes(raw) if raw is not None else None,
            truncated=truncated,
        )

    return bind


# ---------------------------------------------------------------------------
# serialization and bundled programs


def serialize(config: ProgramConfig) -> str:
    """Canonical YAML form; load(serialize(c)) == c."""
    doc: dict = {
        "name": config.name,
        "timestamp_unit": config.timestamp_unit,
        "ports": config.ports,
        "max_parse_depth": config.max_parse_depth,
        "fields": [],
        "lookup_scope": list(config.lookup_scope),
        "update_scope": list(config.update_scope),
        "states": dict(config.states),
        "globals": {f"G{i}": v for i, v in enumerate(config.globals_init)},
        "conditions": [
            {
                "name": name,
                "op": spec.op.name,
                "lhs": conditions.format_operand(spec.lhs),
                "rhs": conditions.format_operand(spec.rhs),
            }
            for name, spec in config.conditions
        ],
        "match_fields": list(config.match_fields),
        "rows": [],
        "management_period": config.management_period,
        **(
            {"flow_scratch": {a: f"G{s}" for a, s in config.flow_scratch}}
            if config.flow_scratch
            else {}
        ),
        "table_sizes": {
            "context_subtables": config.table_sizes.context_subtables,
            "context_buckets": config.table_sizes.context_buckets,
            "bucket_depth": config.table_sizes.bucket_depth,
            "context_fallback": config.table_sizes.context_fallback,
            "xfsm": config.table_sizes.xfsm,
        },
    }
    for f in config.fields:
        entry: dict = {"name": f.name, "slot": f.slot, "width": f.width}
        if f.source is not None:
            entry["source"] = f.source
        if f.offset is not None:
            entry["offset"] = f.offset
        if f.mask is not None:
            entry["mask"] = f.mask
        doc["fields"].append(entry)
    for row in config.rows:
        entry = {
            "state": row.state if row.state is not None else "*",
            "priority": row.priority,
            "next": row.next_state if row.next_state is not None else STAY,
            "action": format_action(row.action),
        }
        if row.row_id is not None:
            entry["id"] = row.row_id
        if row.cond:
            entry["cond"] = {name: bit for name, bit in row.cond}
        if row.match:
            entry["match"] = {
                name: _format_pattern(pat, 32) for name, pat in row.match
            }
        if row.instructions:
            entry["update"] = [alu.format_instruction(i) for i in row.instructions]
        doc["rows"].append(entry)
    if config.context_fallback:
        doc["context_fallback"] = [
            {
                "priority": fb.priority,
                "state": fb.state,
                "match": {
                    name: _format_pattern(
                        pat, config.field_by_name(name).width
                    )
                    for name, pat in fb.match
                },
                "registers": list(fb.registers),
            }
            for fb in config.context_fallback
        ]
    if config.classifier_tree is not None:
        tree = config.classifier_tree

        def dump(node: Union[TreeNode, TreeLeaf]) -> dict:
            if isinstance(node, TreeLeaf):
                return {"class": node.state, "action": format_action(node.action)}
            return {
                "condition": node.condition,
                "if_true": dump(node.if_true),
                "if_false": dump(node.if_false),
            }

        doc["classifier_tree"] = {
            "gate": tree.gate,
            "in_state": tree.in_state,
            "base_priority": tree.base_priority,
            "tree": dump(tree.root),
        }
    return yaml.safe_dump(doc, sort_keys=False)


BUNDLED = (
    "long_flow",
    "load_balance",
    "port_scan",
    "c45_classifier",
    "token_bucket",
    "mac_learning",
)


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled program config."""
    if name not in BUNDLED:
        raise KeyError(f"no bundled program {name!r}")
    return Path(str(resources.files("flowfsm").joinpath("data", f"{name}.yaml")))


def bundled_program(name: str) -> ProgramConfig:
    return load(bundled_path(name))


def bundled_programs() -> list[ProgramConfig]:
    """All bundled application configs, loaded and validated."""
    return [bundled_program(name) for name in BUNDLED]
