"""Regex-based extraction of imported library names for 17 languages.

The pattern table lives in ``data/language_specs.json`` so that pattern
changes show up as plain diffs. Each pattern has one capture group naming
the import; an optional ``inner`` pattern splits a captured list (Go import
blocks, ``import a, b`` in Python) into individual names.
"""

from __future__ import annotations

import enum
import json
import posixpath
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import regex

from .errors import MalformedNotebook, PatternTimeout, UnsupportedLanguage

DEFAULT_TIMEOUT = 2.0


class LanguageId(str, enum.Enum):
    C = "C"
    CSharp = "CSharp"
    Java = "Java"
    Fortran = "Fortran"
    Go = "Go"
    JavaScript = "JavaScript"
    Python = "Python"
    R = "R"
    Rust = "Rust"
    Scala = "Scala"
    Perl = "Perl"
    Ruby = "Ruby"
    Dart = "Dart"
    Kotlin = "Kotlin"
    TypeScript = "TypeScript"
    Julia = "Julia"
    JupyterNotebook = "JupyterNotebook"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class PatternSpec:
    pattern: str
    group: int = 1
    inner: str | None = None
    compiled: regex.Pattern = field(init=False, repr=False, compare=False)
    compiled_inner: regex.Pattern | None = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        compiled = regex.compile(self.pattern, regex.MULTILINE)
        if compiled.groups != 1 or self.group != 1:
            raise ValueError(f"pattern must have exactly one capture group: {self.pattern!r}")
        inner = None
        if self.inner is not None:
            inner = regex.compile(self.inner, regex.MULTILINE)
            if inner.groups != 1:
                raise ValueError(f"inner pattern must have exactly one capture group: {self.inner!r}")
        object.__setattr__(self, "compiled", compiled)
        object.__setattr__(self, "compiled_inner", inner)


@dataclass(frozen=True)
class LanguageSpec:
    language: LanguageId
    extensions: tuple[str, ...]
    patterns: tuple[PatternSpec, ...]

    def __post_init__(self):
        for ext in self.extensions:
            if not ext.startswith(".") or ext != ext.lower():
                raise ValueError(f"extension must be lowercase and dot-prefixed: {ext!r}")


def load_language_specs(path=None) -> dict[LanguageId, LanguageSpec]:
    """Load the pattern table, from ``path`` or the packaged default."""
    if path is None:
        text = resources.files("devforge").joinpath("data/language_specs.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    doc = json.loads(text)
    specs = {}
    for entry in doc["languages"]:
        lang = LanguageId(entry["language"])
        specs[lang] = LanguageSpec(
            language=lang,
            extensions=tuple(entry["extensions"]),
            patterns=tuple(PatternSpec(**p) for p in entry["patterns"]),
        )
    missing = set(LanguageId) - set(specs)
    if missing:
        raise ValueError(f"pattern table lacks languages: {sorted(m.value for m in missing)}")
    return specs


@lru_cache(maxsize=1)
def default_specs() -> dict[LanguageId, LanguageSpec]:
    return load_language_specs()


@lru_cache(maxsize=1)
def _extension_table() -> dict[str, LanguageId]:
    table = {}
    for spec in default_specs().values():
        for ext in spec.extensions:
            if ext in table:
                raise ValueError(f"extension {ext} claimed by {table[ext]} and {spec.language}")
            table[ext] = spec.language
    return table


def detect_language(file_path: str) -> LanguageId | None:
    """Map a file path to its language by (case-insensitive) extension."""
    _, ext = posixpath.splitext(file_path.replace("\\", "/"))
    return _extension_table().get(ext.lower())


_TRIM = "'\"`; \t\r\n"
_RELATIVE = regex.compile(r"^(?:\.{1,2}/)+")


def _normalize(name: str) -> str:
    name = name.strip(_TRIM)
    name = _RELATIVE.sub("", name)
    # Python/Julia relative modules (".models", "..pkg")
    name = name.lstrip(".")
    return name.rstrip(".:")


def extract_imports(content: str, language, timeout: float = DEFAULT_TIMEOUT, specs=None) -> list[str]:
    """Return imported names in textual order, duplicates preserved.

    Raises PatternTimeout when matching exceeds ``timeout`` seconds.
    """
    language = LanguageId(language)
    if language is LanguageId.JupyterNotebook:
        return extract_from_notebook(content, timeout=timeout, specs=specs)
    specs = specs or default_specs()
    try:
        spec = specs[language]
    except KeyError:
        raise UnsupportedLanguage(str(language)) from None

    found: list[tuple[int, int, str]] = []
    try:
        for order, pat in enumerate(spec.patterns):
            for m in pat.compiled.finditer(content, timeout=timeout):
                captured = m.group(pat.group)
                if captured is None:
                    continue
                if pat.compiled_inner is None:
                    found.append((m.start(pat.group), order, captured))
                    continue
                base = m.start(pat.group)
                for im in pat.compiled_inner.finditer(captured, timeout=timeout):
                    found.append((base + im.start(1), order, im.group(1)))
    except TimeoutError as exc:
        raise PatternTimeout(f"{language} extraction exceeded {timeout}s") from exc

    found.sort(key=lambda t: (t[0], t[1]))
    names = []
    for _, _, raw in found:
        name = _normalize(raw)
        if name and not any(ch.isspace() for ch in name):
            names.append(name)
    return names


def extract_from_notebook(content: str, timeout: float = DEFAULT_TIMEOUT, specs=None) -> list[str]:
    """Extract Python imports from the code cells of a Jupyter notebook."""
    try:
        nb = json.loads(content)
    except json.JSONDecodeError as exc:
        raise MalformedNotebook(f"notebook is not valid JSON: {exc}") from exc
    if not isinstance(nb, dict):
        raise MalformedNotebook("notebook root must be a JSON object")
    # nbformat 3 keeps cells under worksheets
    cells = nb.get("cells")
    if cells is None:
        cells = [c for ws in nb.get("worksheets", []) for c in ws.get("cells", [])]
    names = []
    for cell in cells:
        if not isinstance(cell, dict) or cell.get("cell_type") != "code":
            continue
        source = cell.get("source", cell.get("input", ""))
        if isinstance(source, list):
            source = "".join(source)
        names.extend(extract_imports(source, LanguageId.Python, timeout=timeout, specs=specs))
    return names
