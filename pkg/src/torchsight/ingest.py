"""Filesystem ingestion: tree walking, ignore rules, text extraction, truncation.

Ignore rules follow gitignore grammar: `*`/`?`/`[...]` wildcards that never
cross a slash, `**` for any depth, trailing `/` for directory-only rules,
leading-slash or embedded-slash anchoring, `!` negation, last match wins, and
exclusion of a parent directory is final.
"""

from __future__ import annotations

import os
import re
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import BinaryDocumentError, DiffParseError, IngestError

MAX_SCAN_CHARS = 6000
BINARY_SNIFF_BYTES = 8192
DEFAULT_MAX_FILE_BYTES = 10 * 1024 * 1024
IGNORE_FILENAME = ".torchsightignore"

#: File extension to format-family table. Families without a converter are
#: read as text behind the binary sniff; unknown extensions fall back to
#: plain_text the same way.
EXTENSION_FORMATS: dict[str, str] = {
    # plain text
    ".txt": "plain_text",
    ".text": "plain_text",
    ".rst": "plain_text",
    ".adoc": "plain_text",
    ".log": "plain_text",
    # markup
    ".md": "markup",
    ".markdown": "markup",
    ".html": "markup",
    ".htm": "markup",
    ".xml": "markup",
    # source code
    ".py": "source_code",
    ".js": "source_code",
    ".ts": "source_code",
    ".jsx": "source_code",
    ".tsx": "source_code",
    ".java": "source_code",
    ".c": "source_code",
    ".h": "source_code",
    ".cpp": "source_code",
    ".hpp": "source_code",
    ".cc": "source_code",
    ".go": "source_code",
    ".rs": "source_code",
    ".rb": "source_code",
    ".php": "source_code",
    ".sh": "source_code",
    ".bash": "source_code",
    ".ps1": "source_code",
    ".sql": "source_code",
    ".css": "source_code",
    # config
    ".json": "config",
    ".yaml": "config",
    ".yml": "config",
    ".toml": "config",
    ".ini": "config",
    ".cfg": "config",
    ".conf": "config",
    ".env": "config",
    ".properties": "config",
    # tabular / line-oriented data
    ".csv": "data",
    ".tsv": "data",
    ".jsonl": "data",
    ".ndjson": "data",
    # email
    ".eml": "email",
    ".msg": "email",
    # converter-backed formats
    ".pdf": "pdf",
    # office (no native parsing; binary sniff rejects them without a converter)
    ".doc": "office",
    ".docx": "office",
    ".xls": "office",
    ".xlsx": "office",
    ".ppt": "office",
    ".pptx": "office",
    ".odt": "office",
}

#: Format family -> argv prefix; the input path and "-" are appended and the
#: converter must write extracted text to stdout.
DEFAULT_CONVERTERS: dict[str, Sequence[str]] = {
    "pdf": ("pdftotext",),
}


@dataclass(frozen=True)
class SourceDocument:
    path: str
    detected_format: str
    text: str
    original_char_count: int
    truncated: bool


def truncate_text(text: str, limit: int = MAX_SCAN_CHARS) -> tuple[str, bool]:
    """Cap text at `limit` Unicode scalar values."""
    if len(text) > limit:
        return text[:limit], True
    return text, False


def sniff_binary(data: bytes) -> bool:
    return b"\x00" in data[:BINARY_SNIFF_BYTES]


# ---------------------------------------------------------------------------
# Ignore rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IgnoreRule:
    pattern: str
    regex: re.Pattern
    negated: bool
    dir_only: bool
    base: str  # directory the rule is relative to, "" for the walk root
    source: str


def _strip_trailing_space(line: str) -> str:
    # trailing spaces are ignored unless backslash-escaped
    while line.endswith(" ") and not line.endswith("\\ "):
        line = line[:-1]
    return line


def _translate_segment(segment: str) -> str:
    """One slash-free gitignore segment to regex source."""
    out: list[str] = []
    i = 0
    n = len(segment)
    while i < n:
        ch = segment[i]
        if ch == "\\" and i + 1 < n:
            out.append(re.escape(segment[i + 1]))
            i += 2
        elif ch == "*":
            out.append("[^/]*")
            i += 1
        elif ch == "?":
            out.append("[^/]")
            i += 1
        elif ch == "[":
            j = i + 1
            negate = j < n and segment[j] in "!^"
            if negate:
                j += 1
            if j < n and segment[j] == "]":
                j += 1
            while j < n and segment[j] != "]":
                j += 1
            if j >= n:
                out.append(re.escape("["))
                i += 1
                continue
            inner = segment[i + 1 : j]
            if negate:
                inner = inner[1:]
                out.append("[^/" + inner.replace("\\", "\\\\") + "]")
            else:
                out.append("[" + inner.replace("\\", "\\\\") + "]")
            i = j + 1
        else:
            out.append(re.escape(ch))
            i += 1
    return "".join(out)


def _translate_pattern(pattern: str, anchored: bool) -> str:
    if not anchored:
        return "(?:[^/]+/)*" + _translate_segment(pattern)
    segments = pattern.split("/")
    parts: list[str] = []
    for idx, segment in enumerate(segments):
        last = idx == len(segments) - 1
        if segment == "**":
            if last:
                parts.append(".+")
            else:
                parts.append("(?:[^/]+/)*")
            continue
        body = _translate_segment(segment)
        parts.append(body if last else body + "/")
    return "".join(parts)


def parse_ignore_lines(
    lines: Iterable[str], base: str = "", source: str = "<rules>"
) -> list[IgnoreRule]:
    """Compile gitignore-grammar lines into ordered rules."""
    rules: list[IgnoreRule] = []
    for raw in lines:
        line = _strip_trailing_space(raw.rstrip("\r\n"))
        if not line or line.startswith("#"):
            continue
        original = line
        negated = line.startswith("!")
        if negated:
            line = line[1:]
            if not line:
                continue
        dir_only = line.endswith("/")
        if dir_only:
            line = line.rstrip("/")
            if not line:
                continue
        anchored = "/" in line
        line = line.lstrip("/")
        if not line:
            continue
        try:
            regex = re.compile("^" + _translate_pattern(line, anchored) + "$")
        except re.error:
            continue
        rules.append(
            IgnoreRule(
                pattern=original,
                regex=regex,
                negated=negated,
                dir_only=dir_only,
                base=base,
                source=source,
            )
        )
    return rules


class IgnoreMatcher:
    """Evaluates ordered ignore rules over root-relative posix paths.

    Extra rules (CLI flags) always evaluate after file-sourced rules, so they
    take last-match precedence.
    """

    def __init__(
        self,
        rules: Iterable[IgnoreRule] = (),
        extra: Iterable[IgnoreRule] = (),
    ):
        self._rules = list(rules)
        self._extra = list(extra)

    def add_rules(self, rules: Iterable[IgnoreRule]) -> None:
        self._rules.extend(rules)

    def _decide(self, rel_path: str, is_dir: bool) -> Optional[bool]:
        verdict: Optional[bool] = None
        for rule in self._rules + self._extra:
            if rule.dir_only and not is_dir:
                continue
            if rule.base:
                prefix = rule.base + "/"
                if not rel_path.startswith(prefix):
                    continue
                candidate = rel_path[len(prefix):]
            else:
                candidate = rel_path
            if rule.regex.match(candidate):
                verdict = not rule.negated
        return verdict

    def is_ignored(self, rel_path: str, is_dir: bool = False) -> bool:
        parts = rel_path.split("/")
        # an excluded parent directory is final; negations cannot reach inside
        for i in range(1, len(parts)):
            if self._decide("/".join(parts[:i]), True):
                return True
        return bool(self._decide(rel_path, is_dir))


# ---------------------------------------------------------------------------
# Tree walking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SkipRecord:
    path: str
    reason: str  # ignored | binary | too_large | symlink | unreadable
    detail: str = ""


@dataclass
class WalkResult:
    root: Path
    files: list[str] = field(default_factory=list)
    skipped: list[SkipRecord] = field(default_factory=list)


def _rel_posix(path: Path, root: Path) -> str:
    return str(path.relative_to(root)).replace(os.sep, "/")


def walk_tree(
    root: Union[str, Path],
    extra_patterns: Iterable[str] = (),
    ignore_filename: str = IGNORE_FILENAME,
    max_file_bytes: int = DEFAULT_MAX_FILE_BYTES,
    follow_symlinks: bool = False,
) -> WalkResult:
    """List scannable files under root, honoring ignore rules and limits.

    Nested ignore files are picked up as directories are entered; their rules
    apply only beneath their own directory and outrank shallower files.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f"scan root is not a readable directory: {root}")
    root = root.resolve()

    matcher = IgnoreMatcher(
        extra=parse_ignore_lines(extra_patterns, base="", source="<cli>")
    )
    result = WalkResult(root=root)

    def read_rules(ignore_path: Path, base: str) -> None:
        try:
            text = ignore_path.read_text(encoding="utf-8", errors="replace")
        except OSError:
            return
        matcher.add_rules(
            parse_ignore_lines(text.splitlines(), base=base, source=str(ignore_path))
        )

    root_ignore = root / ignore_filename
    if root_ignore.is_file():
        read_rules(root_ignore, "")

    def on_error(err: OSError) -> None:
        bad = Path(getattr(err, "filename", None) or root)
        try:
            rel = _rel_posix(bad, root)
        except ValueError:
            rel = str(bad)
        result.skipped.append(SkipRecord(rel, "unreadable", str(err)))

    for dirpath, dirnames, filenames in os.walk(
        root, topdown=True, onerror=on_error, followlinks=follow_symlinks
    ):
        here = Path(dirpath)
        kept: list[str] = []
        for name in sorted(dirnames):
            sub = here / name
            rel = _rel_posix(sub, root)
            if not follow_symlinks and sub.is_symlink():
                result.skipped.append(SkipRecord(rel, "symlink"))
                continue
            if matcher.is_ignored(rel, is_dir=True):
                result.skipped.append(SkipRecord(rel, "ignored"))
                continue
            nested = sub / ignore_filename
            if nested.is_file():
                read_rules(nested, rel)
            kept.append(name)
        dirnames[:] = kept

        for name in sorted(filenames):
            file = here / name
            rel = _rel_posix(file, root)
            if not follow_symlinks and file.is_symlink():
                result.skipped.append(SkipRecord(rel, "symlink"))
                continue
            if matcher.is_ignored(rel, is_dir=False):
                result.skipped.append(SkipRecord(rel, "ignored"))
                continue
            try:
                size = file.stat().st_size
            except OSError as exc:
                result.skipped.append(SkipRecord(rel, "unreadable", str(exc)))
                continue
            if size > max_file_bytes:
                result.skipped.append(
                    SkipRecord(rel, "too_large", f"{size} bytes > {max_file_bytes}")
                )
                continue
            result.files.append(rel)

    result.files.sort()
    return result


# ---------------------------------------------------------------------------
# Document loading
# ---------------------------------------------------------------------------


def detect_format(path: Union[str, Path]) -> str:
    return EXTENSION_FORMATS.get(Path(path).suffix.lower(), "plain_text")


def _run_converter(argv_prefix: Sequence[str], path: Path) -> str:
    argv = [*argv_prefix, str(path), "-"]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=120)
    except FileNotFoundError:
        raise IngestError(f"converter not found: {argv_prefix[0]}") from None
    except subprocess.TimeoutExpired:
        raise IngestError(f"converter timed out: {' '.join(argv)}") from None
    if proc.returncode != 0:
        stderr = proc.stderr.decode("utf-8", errors="replace").strip()
        raise IngestError(
            f"converter failed ({proc.returncode}): {' '.join(argv)}: {stderr[:500]}"
        )
    return proc.stdout.decode("utf-8", errors="replace")


def load_document(
    path: Union[str, Path],
    converters: Optional[Mapping[str, Sequence[str]]] = None,
    max_chars: int = MAX_SCAN_CHARS,
    display_path: Optional[str] = None,
) -> SourceDocument:
    """Extract text from one file, converting or decoding as the format needs.

    Raises BinaryDocumentError for binary content with no registered
    converter and IngestError for unreadable files or converter failures.
    """
    p = Path(path)
    shown = display_path if display_path is not None else str(path)
    fmt = detect_format(p)
    table = DEFAULT_CONVERTERS if converters is None else converters

    if fmt in table:
        text = _run_converter(table[fmt], p)
    else:
        try:
            data = p.read_bytes()
        except OSError as exc:
            raise IngestError(f"cannot read {shown}: {exc}") from exc
        if sniff_binary(data):
            raise BinaryDocumentError(
                f"binary content with no converter: {shown}",
                detected_format="unknown_binary",
            )
        text = data.decode("utf-8", errors="replace")

    original = len(text)
    text, truncated = truncate_text(text, max_chars)
    return SourceDocument(
        path=shown,
        detected_format=fmt,
        text=text,
        original_char_count=original,
        truncated=truncated,
    )


def read_stdin(
    stream=None, max_chars: int = MAX_SCAN_CHARS
) -> SourceDocument:
    """Read the piped document; undecodable bytes are replaced, never fatal."""
    if stream is None:
        stream = sys.stdin.buffer
    data = stream.read()
    if isinstance(data, str):
        text = data
    else:
        text = data.decode("utf-8", errors="replace")
    original = len(text)
    text, truncated = truncate_text(text, max_chars)
    return SourceDocument(
        path="<stdin>",
        detected_format="plain_text",
        text=text,
        original_char_count=original,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# Diff filtering
# ---------------------------------------------------------------------------

_DIFF_PATH_PREFIXES = ("a/", "b/")


def _clean_diff_path(token: str) -> str:
    token = token.strip()
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        token = token[1:-1]
    for prefix in _DIFF_PATH_PREFIXES:
        if token.startswith(prefix):
            return token[len(prefix):]
    return token


def diff_filter(diff_text: str, root: Union[str, Path, None] = None) -> list[str]:
    """Post-image file paths named by a unified diff, deletions excluded.

    Returned paths are relative (the caller resolves them against root);
    order is first appearance, duplicates dropped.
    """
    paths: list[str] = []
    seen: set[str] = set()
    saw_file_header = False

    def add(path: str) -> None:
        if path and path not in seen:
            seen.add(path)
            paths.append(path)

    for lineno, line in enumerate(diff_text.splitlines(), start=1):
        if line.startswith("+++ "):
            target = line[4:].split("\t")[0]
            if not target.strip():
                raise DiffParseError("empty post-image path in '+++' header", lineno)
            cleaned = _clean_diff_path(target)
            saw_file_header = True
            if cleaned != "/dev/null":
                add(cleaned)
        elif line.startswith("rename to "):
            add(_clean_diff_path(line[len("rename to "):]))
            saw_file_header = True
        elif line.startswith("@@"):
            if not saw_file_header:
                raise DiffParseError("hunk header before any file header", lineno)
            if not re.match(r"^@@ -\d+(,\d+)? \+\d+(,\d+)? @@", line):
                raise DiffParseError(f"malformed hunk header: {line[:60]}", lineno)
    return paths
