"""Triviality detection and cyclomatic complexity."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .classfile import (
    CONDITIONAL_BRANCHES,
    SWITCHES,
    Instruction,
    MethodModel,
    local_index,
    parse_method_descriptor,
    slot_size,
)


class TrivialKind(str, enum.Enum):
    GETTER = "Getter"
    SETTER = "Setter"
    EMPTY = "Empty"
    CONSTANT_RETURN = "ConstantReturn"
    PARAM_ASSIGN_CONSTRUCTOR = "ParamAssignConstructor"


@dataclass(frozen=True)
class TrivialityVerdict:
    is_trivial: bool
    kind: Optional[TrivialKind] = None


NOT_TRIVIAL = TrivialityVerdict(False)

_VALUE_RETURNS = {"ireturn", "lreturn", "freturn", "dreturn", "areturn"}
_CONSTANT_PUSHES = {
    "aconst_null", "iconst_m1", "iconst_0", "iconst_1", "iconst_2", "iconst_3", "iconst_4", "iconst_5",
    "lconst_0", "lconst_1", "fconst_0", "fconst_1", "fconst_2", "dconst_0", "dconst_1",
    "bipush", "sipush", "ldc", "ldc_w", "ldc2_w",
}


def _is_load(ins: Instruction) -> bool:
    op = ins.opcode
    return op[1:5] == "load" and op[0] in "ilfda" and op != "aaload"


def _param_slots(m: MethodModel) -> set[int]:
    """Local slots holding declared parameters (not ``this``)."""
    params, _ = parse_method_descriptor(m.descriptor)
    slot = 0 if m.is_static else 1
    out = set()
    for p in params:
        out.add(slot)
        slot += slot_size(p)
    return out


def _is_self_load(ins: Instruction, m: MethodModel) -> bool:
    return not m.is_static and ins.opcode in ("aload_0", "aload") and local_index(ins) == 0


def _is_param_load(ins: Instruction, params: set[int]) -> bool:
    return _is_load(ins) and local_index(ins) in params


def detect_trivial(m: MethodModel) -> TrivialityVerdict:
    """Match the method body against the trivial patterns; anything else is not trivial."""
    body = [ins for ins in m.instructions if ins.opcode != "nop"]
    if not body:
        return NOT_TRIVIAL
    ops = [ins.opcode for ins in body]
    _, ret = parse_method_descriptor(m.descriptor)

    if m.is_constructor:
        return _param_assign_constructor(m, body)
    if ops == ["return"]:
        return TrivialityVerdict(True, TrivialKind.EMPTY)
    if len(body) == 2 and ops[0] in _CONSTANT_PUSHES and ops[1] in _VALUE_RETURNS:
        return TrivialityVerdict(True, TrivialKind.CONSTANT_RETURN)
    if len(body) == 3 and _is_self_load(body[0], m) and ops[1] == "getfield" and ops[2] in _VALUE_RETURNS:
        if body[1].operand.descriptor == ret or (ret[0] in "L[" and body[1].operand.descriptor[0] in "L["):
            return TrivialityVerdict(True, TrivialKind.GETTER)
    if (len(body) == 4 and ret == "V" and _is_self_load(body[0], m)
            and _is_param_load(body[1], _param_slots(m)) and ops[2] == "putfield" and ops[3] == "return"
            and body[2].operand.owner == m.id.owner):
        return TrivialityVerdict(True, TrivialKind.SETTER)
    return NOT_TRIVIAL


def _param_assign_constructor(m: MethodModel, body: list[Instruction]) -> TrivialityVerdict:
    params = _param_slots(m)
    i = 0
    # aload_0, <parameter loads>, invokespecial Super.<init>
    if not _is_self_load(body[0], m):
        return NOT_TRIVIAL
    i = 1
    while i < len(body) and _is_param_load(body[i], params):
        i += 1
    if i >= len(body):
        return NOT_TRIVIAL
    call = body[i]
    if call.opcode != "invokespecial" or call.operand.name != "<init>" or call.operand.owner == m.id.owner:
        return NOT_TRIVIAL
    i += 1
    # (aload_0, load param, putfield own field)*
    while i + 2 < len(body):
        a, b, c = body[i:i + 3]
        if not (_is_self_load(a, m) and _is_param_load(b, params) and c.opcode == "putfield"
                and c.operand.owner == m.id.owner):
            return NOT_TRIVIAL
        i += 3
    if i == len(body) - 1 and body[i].opcode == "return":
        return TrivialityVerdict(True, TrivialKind.PARAM_ASSIGN_CONSTRUCTOR)
    return NOT_TRIVIAL


def cyclomatic_complexity(m: MethodModel) -> int:
    """1 + conditional branches + distinct non-default switch targets.

    Exception handlers are not counted.
    """
    total = 1
    for ins in m.instructions:
        op = ins.opcode
        if op in CONDITIONAL_BRANCHES:
            total += 1
        elif op in SWITCHES:
            sw = ins.operand
            total += len(set(sw.targets) - {sw.default})
    return total


def exclusion_reason(m: MethodModel) -> Optional[str]:
    """Why a method is left out of all statistics, or None if it counts."""
    if m.is_abstract:
        return "abstract"
    if m.is_native:
        return "native"
    if m.is_bridge:
        return "bridge"
    if m.is_synthetic:
        return "synthetic"
    if not m.instructions:
        return "no-body"
    return None
