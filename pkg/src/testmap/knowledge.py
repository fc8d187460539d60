"""Knowledge base of callee classifications: must-mock, sink or neutral.

The builtin entries are a reconstruction of common sources of
non-determinism on the JVM (clock, randomness, file system, network,
threads, process environment, console). Every entry can be overridden by a
TOML config whose entries are appended after the builtins; the last matching
entry wins.
"""

from __future__ import annotations

import enum
import fnmatch
import hashlib
import re
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .classfile import MethodId


class Category(str, enum.Enum):
    FILE_SYSTEM = "FileSystem"
    NETWORK = "Network"
    TIME = "Time"
    RANDOM = "Random"
    THREADING = "Threading"
    PROCESS_ENV = "ProcessEnv"
    CONSOLE = "Console"
    OTHER_NON_DETERMINISM = "OtherNonDeterminism"


class ConfigError(Exception):
    pass


class ConfigSyntax(ConfigError):
    pass


class ConfigSemantic(ConfigError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class MustMock:
    category: Category

    def __str__(self) -> str:
        return f"must-mock({self.category.value})"


@dataclass(frozen=True)
class _Simple:
    label: str

    def __str__(self) -> str:
        return self.label


SINK = _Simple("sink")
NEUTRAL = _Simple("neutral")
Classification = Union[MustMock, _Simple]


def _glob_to_regex(pattern: str) -> re.Pattern:
    return re.compile(fnmatch.translate(pattern))


def _descriptor_regex(desc: str) -> re.Pattern:
    # descriptors contain '[' for arrays, so only '*' is a wildcard here
    return re.compile("(?s:" + ".*".join(re.escape(part) for part in desc.split("*")) + r")\Z")


@dataclass(frozen=True)
class MethodPattern:
    owner: str
    name: str
    descriptor: str = "*"

    def __post_init__(self) -> None:
        for attr in ("owner", "name", "descriptor"):
            if not getattr(self, attr):
                raise ValueError(f"empty {attr} pattern")
        object.__setattr__(self, "_owner_re", _glob_to_regex(self.owner.replace("/", ".")))
        object.__setattr__(self, "_name_re", _glob_to_regex(self.name))
        object.__setattr__(self, "_desc_re", None if self.descriptor == "*" else _descriptor_regex(self.descriptor))

    def matches(self, callee: MethodId) -> bool:
        if not self._name_re.match(callee.name):
            return False
        if not self._owner_re.match(callee.owner.replace("/", ".")):
            return False
        return self._desc_re is None or self._desc_re.match(callee.descriptor) is not None

    def __str__(self) -> str:
        desc = "" if self.descriptor == "*" else self.descriptor
        return f"{self.owner}.{self.name}{desc}"


@dataclass(frozen=True)
class Entry:
    pattern: MethodPattern
    classification: Classification
    source: str = "builtin"
    line: Optional[int] = None

    @property
    def provenance(self) -> str:
        return self.source if self.line is None else f"{self.source}:{self.line}"


@dataclass(frozen=True)
class KnowledgeBase:
    entries: tuple[Entry, ...]
    mock_final_classes: bool = True
    mock_static_methods: bool = False
    test_visibility: str = "package"  # or "public": what a test can reach
    _cache: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def appended(self, *entries: Entry) -> "KnowledgeBase":
        return KnowledgeBase(self.entries + tuple(entries), self.mock_final_classes,
                             self.mock_static_methods, self.test_visibility)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for e in self.entries:
            h.update(f"{e.pattern.owner}|{e.pattern.name}|{e.pattern.descriptor}|{e.classification}\n".encode())
        h.update(f"{self.mock_final_classes}|{self.mock_static_methods}|{self.test_visibility}".encode())
        return h.hexdigest()[:16]


def classify_callee(callee: MethodId, kb: KnowledgeBase) -> Classification:
    """Classification of the last entry whose pattern matches ``callee``."""
    cached = kb._cache.get(callee)
    if cached is not None:
        return cached
    result: Classification = NEUTRAL
    for entry in reversed(kb.entries):
        if entry.pattern.matches(callee):
            result = entry.classification
            break
    kb._cache[callee] = result
    return result


def matching_entry(callee: MethodId, kb: KnowledgeBase) -> Optional[Entry]:
    for entry in reversed(kb.entries):
        if entry.pattern.matches(callee):
            return entry
    return None


# --- builtin defaults --------------------------------------------------------

_C = Category
_BUILTIN_MUST_MOCK: list[tuple[str, str, str, Category]] = [
    # Time: clock reads without an injected Clock
    ("java.time.*", "now", "*", _C.TIME),
    ("java.lang.System", "currentTimeMillis", "*", _C.TIME),
    ("java.lang.System", "nanoTime", "*", _C.TIME),
    ("java.time.Clock", "systemUTC", "*", _C.TIME),
    ("java.time.Clock", "systemDefaultZone", "*", _C.TIME),
    ("java.time.Instant", "now", "*", _C.TIME),
    ("java.util.Date", "<init>", "()V", _C.TIME),
    ("java.util.Calendar", "getInstance", "*", _C.TIME),
    ("java.util.GregorianCalendar", "<init>", "()V", _C.TIME),
    # Random
    ("java.util.Random", "<init>", "()V", _C.RANDOM),
    ("java.lang.Math", "random", "*", _C.RANDOM),
    ("java.lang.StrictMath", "random", "*", _C.RANDOM),
    ("java.util.UUID", "randomUUID", "*", _C.RANDOM),
    ("java.security.SecureRandom", "<init>", "*", _C.RANDOM),
    ("java.security.SecureRandom", "getInstance*", "*", _C.RANDOM),
    ("java.util.concurrent.ThreadLocalRandom", "current", "*", _C.RANDOM),
    # FileSystem
    ("java.nio.file.Files", "*", "*", _C.FILE_SYSTEM),
    ("java.io.FileInputStream", "<init>", "*", _C.FILE_SYSTEM),
    ("java.io.FileOutputStream", "<init>", "*", _C.FILE_SYSTEM),
    ("java.io.FileReader", "<init>", "*", _C.FILE_SYSTEM),
    ("java.io.FileWriter", "<init>", "*", _C.FILE_SYSTEM),
    ("java.io.PrintWriter", "<init>", "(Ljava/io/File*", _C.FILE_SYSTEM),
    ("java.io.PrintWriter", "<init>", "(Ljava/lang/String;*", _C.FILE_SYSTEM),
    ("java.io.RandomAccessFile", "<init>", "*", _C.FILE_SYSTEM),
    ("java.io.File", "exists", "*", _C.FILE_SYSTEM),
    ("java.io.File", "delete", "*", _C.FILE_SYSTEM),
    ("java.io.File", "mkdir*", "*", _C.FILE_SYSTEM),
    ("java.io.File", "list*", "*", _C.FILE_SYSTEM),
    ("java.io.File", "createNewFile", "*", _C.FILE_SYSTEM),
    ("java.io.File", "createTempFile", "*", _C.FILE_SYSTEM),
    ("java.io.File", "renameTo", "*", _C.FILE_SYSTEM),
    ("java.io.File", "length", "*", _C.FILE_SYSTEM),
    ("java.io.File", "lastModified", "*", _C.FILE_SYSTEM),
    ("java.io.File", "isFile", "*", _C.FILE_SYSTEM),
    ("java.io.File", "isDirectory", "*", _C.FILE_SYSTEM),
    ("java.nio.channels.FileChannel", "open", "*", _C.FILE_SYSTEM),
    # Network
    ("java.net.Socket", "<init>", "*", _C.NETWORK),
    ("java.net.ServerSocket", "<init>", "*", _C.NETWORK),
    ("java.net.DatagramSocket", "<init>", "*", _C.NETWORK),
    ("java.net.URL", "openConnection", "*", _C.NETWORK),
    ("java.net.URL", "openStream", "*", _C.NETWORK),
    ("java.net.URLConnection", "connect", "*", _C.NETWORK),
    ("java.net.HttpURLConnection", "connect", "*", _C.NETWORK),
    ("java.net.http.HttpClient", "send*", "*", _C.NETWORK),
    ("java.net.InetAddress", "getByName", "*", _C.NETWORK),
    ("java.net.InetAddress", "getAllByName", "*", _C.NETWORK),
    ("java.net.InetAddress", "getLocalHost", "*", _C.NETWORK),
    ("java.nio.channels.SocketChannel", "open", "*", _C.NETWORK),
    ("java.nio.channels.ServerSocketChannel", "open", "*", _C.NETWORK),
    # Threading
    ("java.lang.Thread", "start", "*", _C.THREADING),
    ("java.lang.Thread", "sleep", "*", _C.THREADING),
    ("java.lang.Thread", "join", "*", _C.THREADING),
    ("java.lang.Object", "wait", "*", _C.THREADING),
    ("java.util.concurrent.Executors", "new*", "*", _C.THREADING),
    ("java.util.concurrent.ExecutorService", "submit", "*", _C.THREADING),
    ("java.util.concurrent.ExecutorService", "invokeAll", "*", _C.THREADING),
    ("java.util.concurrent.ExecutorService", "invokeAny", "*", _C.THREADING),
    ("java.util.concurrent.Executor", "execute", "*", _C.THREADING),
    ("java.util.concurrent.CompletableFuture", "*Async", "*", _C.THREADING),
    ("java.util.concurrent.TimeUnit", "sleep", "*", _C.THREADING),
    # ProcessEnv
    ("java.lang.Runtime", "exec", "*", _C.PROCESS_ENV),
    ("java.lang.ProcessBuilder", "start", "*", _C.PROCESS_ENV),
    ("java.lang.System", "getenv", "*", _C.PROCESS_ENV),
    ("java.lang.System", "getProperty", "*", _C.PROCESS_ENV),
    ("java.lang.System", "exit", "*", _C.PROCESS_ENV),
    ("java.lang.Runtime", "exit", "*", _C.PROCESS_ENV),
    ("java.lang.Runtime", "halt", "*", _C.PROCESS_ENV),
    # Console
    ("java.lang.System", "console", "*", _C.CONSOLE),
    ("java.io.Console", "read*", "*", _C.CONSOLE),
    # OtherNonDeterminism
    ("java.lang.System", "identityHashCode", "*", _C.OTHER_NON_DETERMINISM),
]

# Overload-sensitive exemptions: evaluated after the families above.
_BUILTIN_NEUTRAL: list[tuple[str, str, str]] = [
    ("java.time.*", "now", "(Ljava/time/Clock;)*"),
]

_BUILTIN_SINKS: list[tuple[str, str, str]] = [
    ("org.slf4j.Logger", "*", "*"),
    ("org.apache.logging.log4j.Logger", "*", "*"),
    ("org.apache.log4j.Logger", "*", "*"),
    ("org.apache.log4j.Category", "*", "*"),
    ("org.apache.commons.logging.Log", "*", "*"),
    ("java.util.logging.Logger", "*", "*"),
    ("java.lang.System$Logger", "*", "*"),
    ("java.io.PrintStream", "print*", "*"),
    ("java.io.PrintStream", "format", "*"),
]


def builtin_entries() -> tuple[Entry, ...]:
    entries = [Entry(MethodPattern(o, n, d), MustMock(c)) for o, n, d, c in _BUILTIN_MUST_MOCK]
    entries += [Entry(MethodPattern(o, n, d), NEUTRAL) for o, n, d in _BUILTIN_NEUTRAL]
    entries += [Entry(MethodPattern(o, n, d), SINK) for o, n, d in _BUILTIN_SINKS]
    return tuple(entries)


# --- config loading ---------------------------------------------------------

_CATEGORY_BY_NAME = {c.value.lower(): c for c in Category}
_CLASSIFICATIONS = {"must-mock", "sink", "neutral"}
_ENTRY_HEADER = re.compile(r"^[ \t]*\[\[[ \t]*entry[ \t]*\]\]", re.M)


def _entry_lines(text: str) -> list[int]:
    return [text.count("\n", 0, m.start()) + 1 for m in _ENTRY_HEADER.finditer(text)]


def _category(value: object, line: Optional[int]) -> Category:
    if not isinstance(value, str) or value.lower() not in _CATEGORY_BY_NAME:
        names = ", ".join(c.value for c in Category)
        raise ConfigSemantic(f"unknown category {value!r} (expected one of {names})", line)
    return _CATEGORY_BY_NAME[value.lower()]


def _parse_entry(raw: dict, source: str, line: Optional[int]) -> Entry:
    if not isinstance(raw, dict):
        raise ConfigSemantic("entry must be a table", line)
    unknown = set(raw) - {"owner", "name", "descriptor", "classification", "category"}
    if unknown:
        raise ConfigSemantic(f"unknown entry key(s): {', '.join(sorted(unknown))}", line)
    owner = raw.get("owner", "")
    name = raw.get("name", "")
    descriptor = raw.get("descriptor", "*")
    for key, value in (("owner", owner), ("name", name), ("descriptor", descriptor)):
        if not isinstance(value, str) or not value.strip():
            raise ConfigSemantic(f"empty or missing {key} pattern", line)
    kind = raw.get("classification")
    if kind not in _CLASSIFICATIONS:
        raise ConfigSemantic(f"classification must be one of must-mock, sink, neutral; got {kind!r}", line)
    if kind == "must-mock":
        classification: Classification = MustMock(_category(raw.get("category"), line))
    else:
        if "category" in raw:
            _category(raw["category"], line)
        classification = SINK if kind == "sink" else NEUTRAL
    return Entry(MethodPattern(owner, name, descriptor), classification, source, line)


def parse_config(text: str, source: str = "<config>", base: Optional[KnowledgeBase] = None) -> KnowledgeBase:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigSyntax(f"{source}: {exc}") from exc
    base = base or KnowledgeBase(builtin_entries())
    unknown = set(doc) - {"entry", "mock_final_classes", "mock_static_methods", "test_visibility"}
    if unknown:
        raise ConfigSemantic(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    raw_entries = doc.get("entry", [])
    if not isinstance(raw_entries, list):
        raise ConfigSemantic("'entry' must be an array of tables ([[entry]])")
    lines = _entry_lines(text)
    entries = []
    for i, raw in enumerate(raw_entries):
        line = lines[i] if i < len(lines) else None
        entries.append(_parse_entry(raw, source, line))
    flags = {}
    for key in ("mock_final_classes", "mock_static_methods"):
        if key in doc:
            if not isinstance(doc[key], bool):
                raise ConfigSemantic(f"{key} must be a boolean")
            flags[key] = doc[key]
    visibility = doc.get("test_visibility", base.test_visibility)
    if visibility not in ("package", "public"):
        raise ConfigSemantic("test_visibility must be 'package' or 'public'")
    return KnowledgeBase(
        base.entries + tuple(entries),
        flags.get("mock_final_classes", base.mock_final_classes),
        flags.get("mock_static_methods", base.mock_static_methods),
        visibility,
    )


def load_knowledge_base(config_path: Optional[Union[str, Path]] = None) -> KnowledgeBase:
    """Builtin defaults, then the entries of ``config_path`` (if any) appended."""
    base = KnowledgeBase(builtin_entries())
    if config_path is None:
        return base
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigSyntax(f"{path}: cannot read config: {exc}") from exc
    return parse_config(text, str(path), base)


@lru_cache(maxsize=1)
def default_knowledge_base() -> KnowledgeBase:
    return load_knowledge_base(None)
