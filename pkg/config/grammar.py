"""
Line-oriented scenario grammar.

    # comment            (also `;` at line start)
    [section]            or [product.<id>]
    key = value

Section and key names are case-insensitive identifiers; values run to the
end of the line (inline `#` starts a comment). Every key keeps its line
number so validation errors can point at the source.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w.\-]*)\s*\]$")
_ENTRY = re.compile(r"^([A-Za-z_][\w\-]*)\s*=\s*(.*)$")


class ScenarioError(Exception):
    """Invalid scenario file; the message starts with `path:line:` when known."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        self.detail = message
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)


@dataclass
class Entry:
    value: str
    line: int


@dataclass
class Section:
    name: str
    line: int
    entries: dict[str, Entry] = field(default_factory=dict)

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        entry = self.entries.get(key)
        return entry.value if entry is not None else default

    def line_of(self, key: str) -> int:
        entry = self.entries.get(key)
        return entry.line if entry is not None else self.line


@dataclass
class Document:
    sections: dict[str, Section] = field(default_factory=dict)
    path: Optional[str] = None

    def __iter__(self) -> Iterator[Section]:
        return iter(self.sections.values())

    def __contains__(self, name: str) -> bool:
        return name in self.sections

    def __getitem__(self, name: str) -> Section:
        return self.sections[name]

    def line_of(self, section: str, key: Optional[str] = None) -> Optional[int]:
        found = self.sections.get(section)
        if found is None:
            return None
        return found.line_of(key) if key else found.line


def parse_document(text: str, path: Optional[str] = None) -> Document:
    doc = Document(path=path)
    current: Optional[Section] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        match = _SECTION.match(line)
        if match:
            name = match.group(1).lower()
            if name in doc.sections:
                raise ScenarioError(f"duplicate section [{name}]", path, lineno)
            current = Section(name, lineno)
            doc.sections[name] = current
            continue
        match = _ENTRY.match(line)
        if not match:
            raise ScenarioError(f"expected '[section]' or 'key = value', got {raw.strip()!r}", path, lineno)
        if current is None:
            raise ScenarioError("key outside of any section", path, lineno)
        key, value = match.group(1).lower().replace("-", "_"), match.group(2).strip()
        if key in current.entries:
            raise ScenarioError(f"duplicate key {key!r} in [{current.name}]", path, lineno)
        current.entries[key] = Entry(value, lineno)
    return doc


def format_document(sections: list[tuple[str, list[tuple[str, str]]]]) -> str:
    chunks = []
    for name, entries in sections:
        body = "\n".join(f"{key} = {value}" for key, value in entries)
        chunks.append(f"[{name}]\n{body}" if body else f"[{name}]")
    return "\n\n".join(chunks) + "\n"
