"""JVM class-file parsing and input loading.

Only the parts of the format the analyses need are modeled: the constant pool,
class/field/method headers, and the Code, LineNumberTable, Exceptions and
SourceFile attributes. Everything else is skipped.
"""

from __future__ import annotations

import enum
import logging
import math
import re
import struct
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Iterable, Iterator, NamedTuple, Optional, Sequence

logger = logging.getLogger(__name__)

MAGIC = 0xCAFEBABE
# Highest major version the opcode grammar below covers (Java 25).
MAX_SUPPORTED_MAJOR = 69

ACC_PUBLIC = 0x0001
ACC_PRIVATE = 0x0002
ACC_PROTECTED = 0x0004
ACC_STATIC = 0x0008
ACC_FINAL = 0x0010
ACC_SYNCHRONIZED = 0x0020
ACC_BRIDGE = 0x0040
ACC_NATIVE = 0x0100
ACC_INTERFACE = 0x0200
ACC_ABSTRACT = 0x0400
ACC_SYNTHETIC = 0x1000
ACC_ANNOTATION = 0x2000
ACC_ENUM = 0x4000
ACC_MODULE = 0x8000


class ClassFileError(Exception):
    pass


class MalformedClass(ClassFileError):
    pass


class UnsupportedVersion(ClassFileError):
    pass


class InputError(OSError):
    """An input path is missing or unreadable."""


class Role(str, enum.Enum):
    APPLICATION = "application"
    DEPENDENCY = "dependency"


class MethodId(NamedTuple):
    owner: str
    name: str
    descriptor: str

    def __str__(self) -> str:
        return f"{self.owner.replace('/', '.')}.{self.name}{self.descriptor}"

    @property
    def short(self) -> str:
        return f"{self.owner.replace('/', '.')}.{self.name}"


class FieldRef(NamedTuple):
    owner: str
    name: str
    descriptor: str

    def __str__(self) -> str:
        return f"{self.owner.replace('/', '.')}.{self.name}"


class TypeRef(NamedTuple):
    """A class constant (ldc of a class literal)."""

    name: str


class Switch(NamedTuple):
    default: int
    cases: tuple[tuple[int, int], ...]  # (key, target offset)

    @property
    def targets(self) -> list[int]:
        return [t for _, t in self.cases]


class ExceptionEntry(NamedTuple):
    start: int
    end: int
    handler: int
    catch_type: Optional[str]  # None catches everything (finally)


class Origin(NamedTuple):
    input: str
    archive: Optional[str]
    entry: str


@dataclass(slots=True)
class Instruction:
    offset: int
    opcode: str
    operand: Any = None


@dataclass
class FieldModel:
    name: str
    descriptor: str
    access_flags: int

    @property
    def is_static(self) -> bool:
        return bool(self.access_flags & ACC_STATIC)

    @property
    def is_final(self) -> bool:
        return bool(self.access_flags & ACC_FINAL)

    @property
    def is_private(self) -> bool:
        return bool(self.access_flags & ACC_PRIVATE)

    @property
    def is_public(self) -> bool:
        return bool(self.access_flags & ACC_PUBLIC)


@dataclass
class MethodModel:
    id: MethodId
    access_flags: int
    instructions: list[Instruction] = field(default_factory=list)
    exception_table: list[ExceptionEntry] = field(default_factory=list)
    line_table: Optional[list[tuple[int, int]]] = None
    declared_exceptions: list[str] = field(default_factory=list)

    @property
    def descriptor(self) -> str:
        return self.id.descriptor

    @property
    def name(self) -> str:
        return self.id.name

    @property
    def is_static(self) -> bool:
        return bool(self.access_flags & ACC_STATIC)

    @property
    def is_abstract(self) -> bool:
        return bool(self.access_flags & ACC_ABSTRACT)

    @property
    def is_native(self) -> bool:
        return bool(self.access_flags & ACC_NATIVE)

    @property
    def is_private(self) -> bool:
        return bool(self.access_flags & ACC_PRIVATE)

    @property
    def is_public(self) -> bool:
        return bool(self.access_flags & ACC_PUBLIC)

    @property
    def is_synthetic(self) -> bool:
        return bool(self.access_flags & ACC_SYNTHETIC)

    @property
    def is_bridge(self) -> bool:
        return bool(self.access_flags & ACC_BRIDGE)

    @property
    def is_constructor(self) -> bool:
        return self.id.name == "<init>"

    @property
    def has_body(self) -> bool:
        return bool(self.instructions)

    @cached_property
    def index_of(self) -> dict[int, int]:
        """Map from byte offset to position in ``instructions``."""
        return {ins.offset: i for i, ins in enumerate(self.instructions)}

    def line_at(self, offset: int) -> Optional[int]:
        """Source line covering ``offset``, if the method has a line table."""
        if not self.line_table:
            return None
        best = None
        best_pc = -1
        for pc, line in self.line_table:
            if best_pc < pc <= offset:
                best_pc, best = pc, line
        return best


@dataclass
class ClassModel:
    internal_name: str
    super_name: Optional[str]
    interfaces: list[str]
    access_flags: int
    fields: list[FieldModel]
    methods: list[MethodModel]
    source_file: Optional[str] = None
    origin: Optional[Origin] = None
    role: Role = Role.APPLICATION
    major_version: int = 0

    @property
    def is_interface(self) -> bool:
        return bool(self.access_flags & ACC_INTERFACE)

    @property
    def is_abstract(self) -> bool:
        return bool(self.access_flags & ACC_ABSTRACT)

    @property
    def is_final(self) -> bool:
        return bool(self.access_flags & ACC_FINAL)

    @property
    def package(self) -> str:
        return self.internal_name.rpartition("/")[0].replace("/", ".")

    def field(self, name: str) -> Optional[FieldModel]:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def method(self, name: str, descriptor: str) -> Optional[MethodModel]:
        for m in self.methods:
            if m.id.name == name and m.id.descriptor == descriptor:
                return m
        return None


# --- descriptors -----------------------------------------------------------

_FIELD_TYPE = r"\[*(?:[BCDFIJSZ]|L[^;\[.]+;)"
_FIELD_RE = re.compile(_FIELD_TYPE)
_METHOD_RE = re.compile(rf"\((?:{_FIELD_TYPE})*\)(?:{_FIELD_TYPE}|V)")
_TYPE_TOKEN = re.compile(r"\[*(?:[BCDFIJSZV]|L[^;]+;)")


@lru_cache(maxsize=None)
def is_field_descriptor(desc: str) -> bool:
    return _FIELD_RE.fullmatch(desc) is not None


@lru_cache(maxsize=None)
def is_method_descriptor(desc: str) -> bool:
    return _METHOD_RE.fullmatch(desc) is not None


@lru_cache(maxsize=None)
def parse_method_descriptor(desc: str) -> tuple[tuple[str, ...], str]:
    """Split a method descriptor into (parameter types, return type)."""
    close = desc.index(")")
    params = tuple(_TYPE_TOKEN.findall(desc[1:close]))
    return params, desc[close + 1:]


def slot_size(type_desc: str) -> int:
    if type_desc == "V":
        return 0
    return 2 if type_desc in ("J", "D") else 1


def is_reference(type_desc: str) -> bool:
    return type_desc[:1] in ("L", "[")


# --- opcodes ---------------------------------------------------------------
# (mnemonic, operand format, popped slots, pushed slots); None = computed.

_OPCODES: dict[int, tuple[str, str, Optional[int], Optional[int]]] = {}


def _op(code: int, name: str, fmt: str = "", pop: Optional[int] = 0, push: Optional[int] = 0) -> None:
    _OPCODES[code] = (name, fmt, pop, push)


_op(0x00, "nop")
_op(0x01, "aconst_null", push=1)
for _i, _n in enumerate(["iconst_m1", "iconst_0", "iconst_1", "iconst_2", "iconst_3", "iconst_4", "iconst_5"]):
    _op(0x02 + _i, _n, push=1)
_op(0x09, "lconst_0", push=2)
_op(0x0A, "lconst_1", push=2)
_op(0x0B, "fconst_0", push=1)
_op(0x0C, "fconst_1", push=1)
_op(0x0D, "fconst_2", push=1)
_op(0x0E, "dconst_0", push=2)
_op(0x0F, "dconst_1", push=2)
_op(0x10, "bipush", "b", push=1)
_op(0x11, "sipush", "s", push=1)
_op(0x12, "ldc", "cp1", push=1)
_op(0x13, "ldc_w", "cp2", push=1)
_op(0x14, "ldc2_w", "cp2", push=2)
for _i, (_t, _w) in enumerate([("i", 1), ("l", 2), ("f", 1), ("d", 2), ("a", 1)]):
    _op(0x15 + _i, f"{_t}load", "local", push=_w)
    for _k in range(4):
        _op(0x1A + 4 * _i + _k, f"{_t}load_{_k}", push=_w)
    _op(0x36 + _i, f"{_t}store", "local", pop=_w)
    for _k in range(4):
        _op(0x3B + 4 * _i + _k, f"{_t}store_{_k}", pop=_w)
for _i, (_n, _w) in enumerate([("iaload", 1), ("laload", 2), ("faload", 1), ("daload", 2),
                               ("aaload", 1), ("baload", 1), ("caload", 1), ("saload", 1)]):
    _op(0x2E + _i, _n, pop=2, push=_w)
for _i, (_n, _w) in enumerate([("iastore", 1), ("lastore", 2), ("fastore", 1), ("dastore", 2),
                               ("aastore", 1), ("bastore", 1), ("castore", 1), ("sastore", 1)]):
    _op(0x4F + _i, _n, pop=2 + _w)
_op(0x57, "pop", pop=1)
_op(0x58, "pop2", pop=2)
for _i, _n in enumerate(["dup", "dup_x1", "dup_x2", "dup2", "dup2_x1", "dup2_x2", "swap"]):
    _op(0x59 + _i, _n, pop=None, push=None)
_ARITH = ["add", "sub", "mul", "div", "rem"]
for _i, _a in enumerate(_ARITH):
    _op(0x60 + 4 * _i, f"i{_a}", pop=2, push=1)
    _op(0x61 + 4 * _i, f"l{_a}", pop=4, push=2)
    _op(0x62 + 4 * _i, f"f{_a}", pop=2, push=1)
    _op(0x63 + 4 * _i, f"d{_a}", pop=4, push=2)
_op(0x74, "ineg", pop=1, push=1)
_op(0x75, "lneg", pop=2, push=2)
_op(0x76, "fneg", pop=1, push=1)
_op(0x77, "dneg", pop=2, push=2)
for _i, _s in enumerate(["shl", "shr", "ushr"]):
    _op(0x78 + 2 * _i, f"i{_s}", pop=2, push=1)
    _op(0x79 + 2 * _i, f"l{_s}", pop=3, push=2)
for _i, _s in enumerate(["and", "or", "xor"]):
    _op(0x7E + 2 * _i, f"i{_s}", pop=2, push=1)
    _op(0x7F + 2 * _i, f"l{_s}", pop=4, push=2)
_op(0x84, "iinc", "iinc")
for _i, (_n, _p, _q) in enumerate([("i2l", 1, 2), ("i2f", 1, 1), ("i2d", 1, 2), ("l2i", 2, 1), ("l2f", 2, 1),
                                   ("l2d", 2, 2), ("f2i", 1, 1), ("f2l", 1, 2), ("f2d", 1, 2), ("d2i", 2, 1),
                                   ("d2l", 2, 2), ("d2f", 2, 1), ("i2b", 1, 1), ("i2c", 1, 1), ("i2s", 1, 1)]):
    _op(0x85 + _i, _n, pop=_p, push=_q)
_op(0x94, "lcmp", pop=4, push=1)
_op(0x95, "fcmpl", pop=2, push=1)
_op(0x96, "fcmpg", pop=2, push=1)
_op(0x97, "dcmpl", pop=4, push=1)
_op(0x98, "dcmpg", pop=4, push=1)
for _i, _n in enumerate(["ifeq", "ifne", "iflt", "ifge", "ifgt", "ifle"]):
    _op(0x99 + _i, _n, "branch", pop=1)
for _i, _n in enumerate(["if_icmpeq", "if_icmpne", "if_icmplt", "if_icmpge", "if_icmpgt", "if_icmple",
                         "if_acmpeq", "if_acmpne"]):
    _op(0x9F + _i, _n, "branch", pop=2)
_op(0xA7, "goto", "branch")
_op(0xA8, "jsr", "branch", push=1)
_op(0xA9, "ret", "local")
_op(0xAA, "tableswitch", "tableswitch", pop=1)
_op(0xAB, "lookupswitch", "lookupswitch", pop=1)
for _i, (_n, _w) in enumerate([("ireturn", 1), ("lreturn", 2), ("freturn", 1), ("dreturn", 2),
                               ("areturn", 1), ("return", 0)]):
    _op(0xAC + _i, _n, pop=_w)
_op(0xB2, "getstatic", "field", None, None)
_op(0xB3, "putstatic", "field", None, None)
_op(0xB4, "getfield", "field", None, None)
_op(0xB5, "putfield", "field", None, None)
_op(0xB6, "invokevirtual", "method", None, None)
_op(0xB7, "invokespecial", "method", None, None)
_op(0xB8, "invokestatic", "method", None, None)
_op(0xB9, "invokeinterface", "imethod", None, None)
_op(0xBA, "invokedynamic", "indy", None, None)
_op(0xBB, "new", "class", push=1)
_op(0xBC, "newarray", "u1", pop=1, push=1)
_op(0xBD, "anewarray", "class", pop=1, push=1)
_op(0xBE, "arraylength", pop=1, push=1)
_op(0xBF, "athrow", pop=1)
_op(0xC0, "checkcast", "class", pop=1, push=1)
_op(0xC1, "instanceof", "class", pop=1, push=1)
_op(0xC2, "monitorenter", pop=1)
_op(0xC3, "monitorexit", pop=1)
_op(0xC4, "wide", "wide")
_op(0xC5, "multianewarray", "multi", None, 1)
_op(0xC6, "ifnull", "branch", pop=1)
_op(0xC7, "ifnonnull", "branch", pop=1)
_op(0xC8, "goto_w", "branch4")
_op(0xC9, "jsr_w", "branch4", push=1)

OPCODES = _OPCODES
STACK_EFFECTS = {name: (pop, push) for name, _, pop, push in _OPCODES.values()}

INVOKES = frozenset({"invokevirtual", "invokespecial", "invokestatic", "invokeinterface", "invokedynamic"})
CONDITIONAL_BRANCHES = frozenset(
    ["ifeq", "ifne", "iflt", "ifge", "ifgt", "ifle", "if_icmpeq", "if_icmpne", "if_icmplt", "if_icmpge",
     "if_icmpgt", "if_icmple", "if_acmpeq", "if_acmpne", "ifnull", "ifnonnull"]
)
SWITCHES = frozenset({"tableswitch", "lookupswitch"})
RETURNS = frozenset({"ireturn", "lreturn", "freturn", "dreturn", "areturn", "return"})
UNCONDITIONAL = frozenset({"goto", "goto_w", "athrow", "ret"}) | RETURNS | SWITCHES
# invokedynamic call sites link through a CallSite object; use it as the owner.
DYNAMIC_OWNER = "java/lang/invoke/CallSite"


def local_index(ins: Instruction) -> Optional[int]:
    """Local-variable slot of a load/store, including the ``_n`` short forms."""
    op = ins.opcode
    if op[-2:-1] == "_" and op[-1].isdigit() and ("load" in op or "store" in op):
        return int(op[-1])
    if op.endswith(("load", "store")) and isinstance(ins.operand, int):
        return ins.operand
    return None


def successors(m: "MethodModel") -> list[list[int]]:
    """Normal-flow successor positions of every instruction (exception edges excluded)."""
    index = m.index_of
    n = len(m.instructions)
    out: list[list[int]] = []
    for i, ins in enumerate(m.instructions):
        op = ins.opcode
        if op in CONDITIONAL_BRANCHES:
            succ = [i + 1, index[ins.operand]]
        elif op in ("goto", "goto_w"):
            succ = [index[ins.operand]]
        elif op in ("jsr", "jsr_w"):
            succ = [index[ins.operand], i + 1]
        elif op in SWITCHES:
            succ = [index[ins.operand.default]] + [index[t] for t in ins.operand.targets]
        elif op in UNCONDITIONAL:
            succ = []
        else:
            succ = [i + 1]
        out.append(sorted({s for s in succ if s < n}))
    return out


# --- parsing ---------------------------------------------------------------

_CP_UTF8, _CP_INT, _CP_FLOAT, _CP_LONG, _CP_DOUBLE = 1, 3, 4, 5, 6
_CP_CLASS, _CP_STRING, _CP_FIELD, _CP_METHOD, _CP_IMETHOD = 7, 8, 9, 10, 11
_CP_NAT, _CP_MHANDLE, _CP_MTYPE, _CP_DYNAMIC, _CP_INDY = 12, 15, 16, 17, 18
_CP_MODULE, _CP_PACKAGE = 19, 20


def _decode_mutf8(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        text = raw.replace(b"\xc0\x80", b"\x00").decode("utf-8", "surrogatepass")
        return text.encode("utf-16", "surrogatepass").decode("utf-16", "replace")


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def need(self, n: int) -> None:
        if self.pos + n > len(self.data):
            raise MalformedClass(f"truncated class file at byte {self.pos}")

    def u1(self) -> int:
        self.need(1)
        v = self.data[self.pos]
        self.pos += 1
        return v

    def u2(self) -> int:
        self.need(2)
        v = (self.data[self.pos] << 8) | self.data[self.pos + 1]
        self.pos += 2
        return v

    def u4(self) -> int:
        self.need(4)
        (v,) = struct.unpack_from(">I", self.data, self.pos)
        self.pos += 4
        return v

    def bytes(self, n: int) -> bytes:
        self.need(n)
        v = self.data[self.pos:self.pos + n]
        self.pos += n
        return v


class _ConstantPool:
    def __init__(self, entries: list):
        self.entries = entries

    def get(self, idx: int, *tags: int):
        if idx <= 0 or idx >= len(self.entries) or self.entries[idx] is None:
            raise MalformedClass(f"dangling constant pool index {idx}")
        entry = self.entries[idx]
        if tags and entry[0] not in tags:
            raise MalformedClass(f"constant pool index {idx} has tag {entry[0]}, expected {tags}")
        return entry

    def utf8(self, idx: int) -> str:
        return self.get(idx, _CP_UTF8)[1]

    def class_name(self, idx: int) -> str:
        return self.utf8(self.get(idx, _CP_CLASS)[1])

    def name_and_type(self, idx: int) -> tuple[str, str]:
        _, name_idx, desc_idx = self.get(idx, _CP_NAT)
        return self.utf8(name_idx), self.utf8(desc_idx)

    def member(self, idx: int, *tags: int) -> tuple[str, str, str]:
        _, class_idx, nat_idx = self.get(idx, *tags)
        name, desc = self.name_and_type(nat_idx)
        return self.class_name(class_idx), name, desc

    def constant(self, idx: int) -> Any:
        entry = self.get(idx)
        tag = entry[0]
        if tag in (_CP_INT, _CP_FLOAT, _CP_LONG, _CP_DOUBLE):
            return entry[1]
        if tag == _CP_STRING:
            return self.utf8(entry[1])
        if tag == _CP_CLASS:
            return TypeRef(self.utf8(entry[1]))
        if tag == _CP_MTYPE:
            return ("MethodType", self.utf8(entry[1]))
        if tag == _CP_MHANDLE:
            return ("MethodHandle", entry[1], entry[2])
        if tag == _CP_DYNAMIC:
            return ("Dynamic",) + self.name_and_type(entry[2])
        raise MalformedClass(f"constant pool index {idx} is not loadable")


def _read_constant_pool(r: _Reader) -> _ConstantPool:
    count = r.u2()
    entries: list = [None] * max(count, 1)
    i = 1
    while i < count:
        tag = r.u1()
        if tag == _CP_UTF8:
            n = r.u2()
            entries[i] = (tag, _decode_mutf8(r.bytes(n)))
        elif tag == _CP_INT:
            entries[i] = (tag, struct.unpack(">i", r.bytes(4))[0])
        elif tag == _CP_FLOAT:
            entries[i] = (tag, struct.unpack(">f", r.bytes(4))[0])
        elif tag == _CP_LONG:
            entries[i] = (tag, struct.unpack(">q", r.bytes(8))[0])
        elif tag == _CP_DOUBLE:
            entries[i] = (tag, struct.unpack(">d", r.bytes(8))[0])
        elif tag in (_CP_CLASS, _CP_STRING, _CP_MTYPE, _CP_MODULE, _CP_PACKAGE):
            entries[i] = (tag, r.u2())
        elif tag in (_CP_FIELD, _CP_METHOD, _CP_IMETHOD, _CP_NAT, _CP_DYNAMIC, _CP_INDY):
            entries[i] = (tag, r.u2(), r.u2())
        elif tag == _CP_MHANDLE:
            entries[i] = (tag, r.u1(), r.u2())
        else:
            raise MalformedClass(f"unknown constant pool tag {tag} at index {i}")
        i += 2 if tag in (_CP_LONG, _CP_DOUBLE) else 1
    return _ConstantPool(entries)


def _field_ref(cp: _ConstantPool, idx: int) -> FieldRef:
    owner, name, desc = cp.member(idx, _CP_FIELD)
    if not is_field_descriptor(desc):
        raise MalformedClass(f"invalid field descriptor {desc!r}")
    return FieldRef(owner, name, desc)


def _method_ref(cp: _ConstantPool, idx: int, *tags: int) -> MethodId:
    owner, name, desc = cp.member(idx, *tags)
    if not is_method_descriptor(desc):
        raise MalformedClass(f"invalid method descriptor {desc!r}")
    if owner.startswith("["):
        # array pseudo-methods (clone) dispatch on java.lang.Object
        owner = "java/lang/Object"
    return MethodId(owner, name, desc)


def _decode_code(code: bytes, cp: _ConstantPool) -> list[Instruction]:
    out: list[Instruction] = []
    n = len(code)
    pc = 0
    unpack = struct.unpack_from
    try:
        while pc < n:
            op = code[pc]
            spec = _OPCODES.get(op)
            if spec is None:
                raise MalformedClass(f"unknown opcode 0x{op:02x} at offset {pc}")
            name, fmt, _, _ = spec
            start = pc
            operand: Any = None
            if not fmt:
                pc += 1
            elif fmt == "b":
                operand = unpack(">b", code, pc + 1)[0]
                pc += 2
            elif fmt == "s":
                operand = unpack(">h", code, pc + 1)[0]
                pc += 3
            elif fmt in ("local", "u1"):
                operand = code[pc + 1]
                pc += 2
            elif fmt == "cp1":
                operand = cp.constant(code[pc + 1])
                pc += 2
            elif fmt == "cp2":
                operand = cp.constant(unpack(">H", code, pc + 1)[0])
                pc += 3
            elif fmt == "iinc":
                operand = (code[pc + 1], unpack(">b", code, pc + 2)[0])
                pc += 3
            elif fmt == "branch":
                operand = start + unpack(">h", code, pc + 1)[0]
                pc += 3
            elif fmt == "branch4":
                operand = start + unpack(">i", code, pc + 1)[0]
                pc += 5
            elif fmt == "field":
                operand = _field_ref(cp, unpack(">H", code, pc + 1)[0])
                pc += 3
            elif fmt == "method":
                operand = _method_ref(cp, unpack(">H", code, pc + 1)[0], _CP_METHOD, _CP_IMETHOD)
                pc += 3
            elif fmt == "imethod":
                operand = _method_ref(cp, unpack(">H", code, pc + 1)[0], _CP_IMETHOD)
                pc += 5
            elif fmt == "indy":
                entry = cp.get(unpack(">H", code, pc + 1)[0], _CP_INDY)
                mname, mdesc = cp.name_and_type(entry[2])
                if not is_method_descriptor(mdesc):
                    raise MalformedClass(f"invalid method descriptor {mdesc!r}")
                operand = MethodId(DYNAMIC_OWNER, mname, mdesc)
                pc += 5
            elif fmt == "class":
                operand = cp.class_name(unpack(">H", code, pc + 1)[0])
                pc += 3
            elif fmt == "multi":
                operand = (cp.class_name(unpack(">H", code, pc + 1)[0]), code[pc + 3])
                pc += 4
            elif fmt == "tableswitch":
                pc = start + 1 + ((4 - (start + 1) % 4) % 4)
                default, low, high = unpack(">iii", code, pc)
                pc += 12
                if high < low:
                    raise MalformedClass(f"tableswitch with high < low at {start}")
                count = high - low + 1
                offsets = unpack(f">{count}i", code, pc)
                pc += 4 * count
                operand = Switch(start + default, tuple((low + k, start + o) for k, o in enumerate(offsets)))
            elif fmt == "lookupswitch":
                pc = start + 1 + ((4 - (start + 1) % 4) % 4)
                default, npairs = unpack(">ii", code, pc)
                pc += 8
                if npairs < 0:
                    raise MalformedClass(f"lookupswitch with negative pair count at {start}")
                pairs = unpack(f">{2 * npairs}i", code, pc)
                pc += 8 * npairs
                operand = Switch(start + default,
                                 tuple((pairs[2 * k], start + pairs[2 * k + 1]) for k in range(npairs)))
            elif fmt == "wide":
                inner = code[pc + 1]
                ispec = _OPCODES.get(inner)
                if ispec is None or ispec[1] not in ("local", "iinc"):
                    raise MalformedClass(f"invalid wide instruction at {start}")
                name = ispec[0]
                if ispec[1] == "iinc":
                    operand = (unpack(">H", code, pc + 2)[0], unpack(">h", code, pc + 4)[0])
                    pc += 6
                else:
                    operand = unpack(">H", code, pc + 2)[0]
                    pc += 4
            else:  # pragma: no cover - table and decoder are kept in sync
                raise AssertionError(fmt)
            if pc > n:
                raise MalformedClass(f"instruction at {start} runs past end of code")
            out.append(Instruction(start, name, operand))
    except struct.error as exc:
        raise MalformedClass(f"truncated instruction at offset {pc}: {exc}") from None
    except IndexError:
        raise MalformedClass(f"truncated instruction at offset {pc}") from None
    return out


def _check_targets(method: MethodModel) -> None:
    valid = method.index_of
    for ins in method.instructions:
        op = ins.opcode
        if op in CONDITIONAL_BRANCHES or op in ("goto", "goto_w", "jsr", "jsr_w"):
            targets = [ins.operand]
        elif op in SWITCHES:
            targets = [ins.operand.default, *ins.operand.targets]
        else:
            continue
        for t in targets:
            if t not in valid:
                raise MalformedClass(f"{method.id}: branch at {ins.offset} targets invalid offset {t}")
    for entry in method.exception_table:
        if entry.handler not in valid or entry.start not in valid:
            raise MalformedClass(f"{method.id}: exception handler with invalid offset")


def _skip_attributes(r: _Reader) -> None:
    for _ in range(r.u2()):
        r.u2()
        r.bytes(r.u4())


def _read_method(r: _Reader, cp: _ConstantPool, owner: str) -> MethodModel:
    access = r.u2()
    name = cp.utf8(r.u2())
    desc = cp.utf8(r.u2())
    if not is_method_descriptor(desc):
        raise MalformedClass(f"invalid method descriptor {desc!r} on {owner}.{name}")
    method = MethodModel(MethodId(owner, name, desc), access)
    for _ in range(r.u2()):
        attr_name = cp.utf8(r.u2())
        length = r.u4()
        body = r.bytes(length)
        if attr_name == "Code":
            _read_code(body, cp, method)
        elif attr_name == "Exceptions":
            sub = _Reader(body)
            method.declared_exceptions = [cp.class_name(sub.u2()) for _ in range(sub.u2())]
    if access & (ACC_ABSTRACT | ACC_NATIVE):
        method.instructions = []
        method.exception_table = []
    else:
        _check_targets(method)
    return method


def _read_code(body: bytes, cp: _ConstantPool, method: MethodModel) -> None:
    r = _Reader(body)
    r.u2()  # max_stack
    r.u2()  # max_locals
    code = r.bytes(r.u4())
    method.instructions = _decode_code(code, cp)
    table = []
    for _ in range(r.u2()):
        start, end, handler, ctype = r.u2(), r.u2(), r.u2(), r.u2()
        table.append(ExceptionEntry(start, end, handler, cp.class_name(ctype) if ctype else None))
    method.exception_table = table
    for _ in range(r.u2()):
        attr_name = cp.utf8(r.u2())
        sub = _Reader(r.bytes(r.u4()))
        if attr_name == "LineNumberTable":
            lines = method.line_table or []
            for _ in range(sub.u2()):
                lines.append((sub.u2(), sub.u2()))
            method.line_table = lines


def parse_class(data: bytes, *, max_major: int = MAX_SUPPORTED_MAJOR, origin: Optional[Origin] = None) -> ClassModel:
    """Parse one class file.

    Raises MalformedClass for structural problems (bad magic, truncation,
    dangling constant-pool references, invalid descriptors or branch targets)
    and UnsupportedVersion when the major version exceeds ``max_major``.
    """
    r = _Reader(bytes(data))
    if len(r.data) < 4 or r.u4() != MAGIC:
        raise MalformedClass("bad magic number")
    r.u2()  # minor
    major = r.u2()
    if major > max_major:
        raise UnsupportedVersion(f"class file major version {major} exceeds {max_major}")
    cp = _read_constant_pool(r)
    access = r.u2()
    this_name = cp.class_name(r.u2())
    if not this_name:
        raise MalformedClass("empty class name")
    super_idx = r.u2()
    super_name = cp.class_name(super_idx) if super_idx else None
    interfaces = [cp.class_name(r.u2()) for _ in range(r.u2())]
    fields = []
    for _ in range(r.u2()):
        f_access = r.u2()
        f_name = cp.utf8(r.u2())
        f_desc = cp.utf8(r.u2())
        if not is_field_descriptor(f_desc):
            raise MalformedClass(f"invalid field descriptor {f_desc!r} on {this_name}.{f_name}")
        _skip_attributes(r)
        fields.append(FieldModel(f_name, f_desc, f_access))
    methods = [_read_method(r, cp, this_name) for _ in range(r.u2())]
    source_file = None
    for _ in range(r.u2()):
        attr_name = cp.utf8(r.u2())
        body = r.bytes(r.u4())
        if attr_name == "SourceFile" and len(body) >= 2:
            source_file = cp.utf8(struct.unpack(">H", body[:2])[0])
    if r.pos != len(r.data):
        raise MalformedClass(f"{len(r.data) - r.pos} extra bytes after the class structure")
    return ClassModel(this_name, super_name, interfaces, access, fields, methods,
                      source_file=source_file, origin=origin, major_version=major)


def method_loc(m: MethodModel) -> int:
    """Source lines of a method: distinct line-table lines, else ceil(instructions / 4)."""
    if m.is_abstract or m.is_native or not m.instructions:
        return 0
    if m.line_table:
        return len({line for _, line in m.line_table})
    return math.ceil(len(m.instructions) / 4)


# --- input loading ----------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "parse" | "duplicate"
    location: str
    message: str


@dataclass
class ClassPool:
    classes: dict[str, ClassModel] = field(default_factory=dict)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self) -> Iterator[ClassModel]:
        return iter(self.classes.values())

    def __contains__(self, name: object) -> bool:
        return name in self.classes

    def get(self, name: str) -> Optional[ClassModel]:
        return self.classes.get(name)

    def method(self, mid: MethodId) -> Optional[MethodModel]:
        cls = self.classes.get(mid.owner)
        return cls.method(mid.name, mid.descriptor) if cls else None

    def methods(self) -> Iterator[tuple[ClassModel, MethodModel]]:
        for cls in self.classes.values():
            for m in cls.methods:
                yield cls, m


def _location(origin: Origin) -> str:
    return f"{origin.archive}!{origin.entry}" if origin.archive else str(Path(origin.input) / origin.entry)


def _archive_entries(archive: Path, input_path: str, label: str) -> Iterator[tuple[Origin, bytes]]:
    try:
        zf = zipfile.ZipFile(archive)
    except (zipfile.BadZipFile, OSError) as exc:
        raise InputError(f"{archive}: cannot open archive: {exc}") from exc
    with zf:
        for name in sorted(zf.namelist()):
            if not name.endswith(".class") or name.startswith("META-INF/"):
                continue
            if name.rsplit("/", 1)[-1] in ("module-info.class", "package-info.class"):
                continue
            yield Origin(input_path, label, name), zf.read(name)


def _enumerate(path: Path) -> Iterator[tuple[Origin, bytes]]:
    given = str(path)
    if path.is_dir():
        for child in sorted(path.rglob("*")):
            if not child.is_file():
                continue
            rel = child.relative_to(path).as_posix()
            if child.suffix == ".class":
                if child.name in ("module-info.class", "package-info.class"):
                    continue
                yield Origin(given, None, rel), child.read_bytes()
            elif child.suffix in (".jar", ".zip"):
                yield from _archive_entries(child, given, rel)
    elif path.suffix == ".class":
        yield Origin(given, None, path.name), path.read_bytes()
    elif path.suffix in (".jar", ".zip"):
        yield from _archive_entries(path, given, path.name)
    else:
        raise InputError(f"{path}: not a directory, .class file or .jar archive")


def _parse_entry(item: tuple[Origin, bytes], max_major: int):
    origin, data = item
    try:
        return parse_class(data, max_major=max_major, origin=origin)
    except ClassFileError as exc:
        return Diagnostic("parse", _location(origin), str(exc))


def load_inputs(paths: Sequence[str | Path], roles: Optional[Sequence[Role]] = None, *,
                threads: int = 1, max_major: int = MAX_SUPPORTED_MAJOR) -> ClassPool:
    """Parse every class reachable from ``paths`` into a ClassPool.

    Paths are processed in the given order; a class name seen twice keeps its
    first occurrence. Parse failures become diagnostics on the pool.
    """
    if roles is None:
        roles = [Role.APPLICATION] * len(paths)
    if len(roles) != len(paths):
        raise ValueError("roles must be parallel to paths")
    pool = ClassPool()
    for raw, role in zip(paths, roles):
        path = Path(raw)
        if not path.exists():
            raise InputError(f"{path}: no such file or directory")
        try:
            items = list(_enumerate(path))
        except OSError as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{path}: {exc}") from exc
        results: Iterable
        if threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(lambda it: _parse_entry(it, max_major), items))
        else:
            results = [_parse_entry(it, max_major) for it in items]
        for result in results:
            if isinstance(result, Diagnostic):
                logger.warning("skipping %s: %s", result.location, result.message)
                pool.diagnostics.append(result)
                continue
            result.role = Role(role)
            name = result.internal_name
            if name in pool.classes:
                kept = pool.classes[name].origin
                msg = f"duplicate class {name.replace('/', '.')}; keeping {_location(kept)}"
                logger.warning("%s", msg)
                pool.diagnostics.append(Diagnostic("duplicate", _location(result.origin), msg))
                continue
            pool.classes[name] = result
    return pool
