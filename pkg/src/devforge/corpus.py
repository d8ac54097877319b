"""Per-developer documents built from mined evidence.

Repository texts and issue histories become one :class:`TaggedDocument` per
developer; commit snapshots become an import multiset (and, for training the
API embedding, an import-name document in snapshot order).
"""

from __future__ import annotations

import enum
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import DevforgeError, InvalidRecord
from .imports import extract_imports
from .jsonl import read_jsonl, write_jsonl
from .miner import CommitSnapshot, IssueFacts, RepoFacts

logger = logging.getLogger(__name__)


class RoleLabel(str, enum.Enum):
    Backend = "Backend"
    Frontend = "Frontend"
    Mobile = "Mobile"
    DevOps = "DevOps"
    DataScientist = "DataScientist"

    def __str__(self):
        return self.value


ROLES = tuple(RoleLabel)


@dataclass(frozen=True)
class TaggedDocument:
    tag: str
    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tag:
            raise InvalidRecord("document tag is empty")
        for tok in self.tokens:
            if not tok or tok != tok.lower() or any(c.isspace() for c in tok):
                raise InvalidRecord(f"bad token {tok!r} in document {self.tag!r}")

    def to_dict(self):
        return {"tag": self.tag, "tokens": list(self.tokens)}

    @classmethod
    def from_dict(cls, data):
        return cls(data["tag"], data["tokens"])


@dataclass
class DeveloperRecord:
    developer_id: str
    role: RoleLabel | None = None
    doc_repos: TaggedDocument | None = None
    doc_issues: TaggedDocument | None = None
    api_multiset: dict | None = None

    def __post_init__(self):
        if not self.developer_id:
            raise InvalidRecord("developer_id is empty")
        if self.role is not None:
            self.role = RoleLabel(self.role)

    @property
    def has_evidence(self):
        return any(x for x in (self.doc_repos, self.doc_issues, self.api_multiset))


# --------------------------------------------------------------------------
# tokenization

_SPLIT = re.compile(r"[^a-z0-9+#.\-_]+")
_LETTER = re.compile(r"[a-z]")
# "#" and "+" survive at the end of a token (c#, c++) but not at the start (#python)
_LEAD = ".-_#+"
_TRAIL = ".-_"


@lru_cache(maxsize=1)
def stopwords() -> frozenset:
    text = resources.files("devforge").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def clean_tokenize(text: str) -> list[str]:
    stop = stopwords()
    tokens = []
    for raw in _SPLIT.split(text.lower()):
        tok = raw.lstrip(_LEAD).rstrip(_TRAIL)
        if tok and _LETTER.search(tok) and tok not in stop:
            tokens.append(tok)
    return tokens


# --------------------------------------------------------------------------
# aggregation


def _as(cls, rec):
    return rec if isinstance(rec, cls) else cls.from_dict(rec)


def build_repo_documents(repos) -> dict[str, TaggedDocument]:
    tokens: dict[str, list] = {}
    for rec in repos:
        rec = _as(RepoFacts, rec)
        toks = tokens.setdefault(rec.developer_id, [])
        toks += clean_tokenize(rec.name)
        for tag in rec.tags:
            toks += clean_tokenize(tag)
        toks += clean_tokenize(rec.topic)
        toks += clean_tokenize(rec.readme)
    return {dev: TaggedDocument(dev, toks) for dev, toks in tokens.items()}


def build_issue_documents(issues) -> dict[str, TaggedDocument]:
    tokens: dict[str, list] = {}
    for rec in issues:
        rec = _as(IssueFacts, rec)
        toks = tokens.setdefault(rec.developer_id, [])
        toks += clean_tokenize(rec.title)
        toks += clean_tokenize(rec.body)
    return {dev: TaggedDocument(dev, toks) for dev, toks in tokens.items()}


@dataclass
class ApiEvidence:
    """Import names per developer, in snapshot order."""

    names: dict = field(default_factory=dict)
    failures: int = 0

    def multisets(self):
        return {dev: dict(Counter(ns)) for dev, ns in self.names.items() if ns}

    def documents(self):
        return {dev: TaggedDocument(dev, ns) for dev, ns in self.names.items() if ns}


def collect_api_evidence(snapshots, extractor=extract_imports) -> ApiEvidence:
    ev = ApiEvidence()
    for rec in snapshots:
        rec = _as(CommitSnapshot, rec)
        try:
            found = extractor(rec.content, rec.language)
        except DevforgeError as exc:
            ev.failures += 1
            logger.warning("skipping snapshot %s:%s: %s", rec.commit_sha[:8], rec.file_path, exc)
            continue
        ev.names.setdefault(rec.developer_id, []).extend(n.lower() for n in found)
    return ev


def build_api_multisets(snapshots, extractor=extract_imports) -> dict[str, dict]:
    """Import-name counts per developer; repeated imports accumulate."""
    return collect_api_evidence(snapshots, extractor).multisets()


# --------------------------------------------------------------------------
# files

DOC_FILES = {"repos": "docs_repos.jsonl", "issues": "docs_issues.jsonl", "apis": "docs_apis.jsonl"}
DEVELOPERS_FILE = "developers.jsonl"
API_COUNTS_FILE = "api_counts.jsonl"


def read_developers(path) -> dict[str, RoleLabel | None]:
    out = {}
    for row in read_jsonl(path):
        dev = row["developer_id"]
        if dev in out:
            raise InvalidRecord(f"duplicate developer_id {dev!r}")
        out[dev] = RoleLabel(row["role"]) if row.get("role") else None
    return out


def read_documents(path) -> dict[str, TaggedDocument]:
    return {d.tag: d for d in (TaggedDocument.from_dict(r) for r in read_jsonl(path))}


def read_api_counts(path) -> dict[str, dict]:
    return {r["developer_id"]: r["counts"] for r in read_jsonl(path)}


def _optional_rows(path):
    return read_jsonl(path) if Path(path).exists() else iter(())


def ingest(mined_dir, developers_path, out_dir) -> dict[str, int]:
    """Turn the miner's JSONL files into corpus files; returns record counts."""
    mined_dir, out_dir = Path(mined_dir), Path(out_dir)
    roles = read_developers(developers_path)
    known = set(roles)

    repo_docs = build_repo_documents(r for r in _optional_rows(mined_dir / "repos.jsonl") if r["developer_id"] in known)
    issue_docs = build_issue_documents(r for r in _optional_rows(mined_dir / "issues.jsonl") if r["developer_id"] in known)
    api = collect_api_evidence(r for r in _optional_rows(mined_dir / "snapshots.jsonl") if r["developer_id"] in known)
    counts, api_docs = api.multisets(), api.documents()

    order = list(roles)
    write_jsonl(out_dir / DEVELOPERS_FILE, ({"developer_id": d, "role": roles[d] and roles[d].value} for d in order))
    # empty documents are excluded from a pipeline rather than embedded
    write_jsonl(out_dir / DOC_FILES["repos"], (repo_docs[d].to_dict() for d in order if d in repo_docs and repo_docs[d].tokens))
    write_jsonl(out_dir / DOC_FILES["issues"], (issue_docs[d].to_dict() for d in order if d in issue_docs and issue_docs[d].tokens))
    write_jsonl(out_dir / DOC_FILES["apis"], (api_docs[d].to_dict() for d in order if d in api_docs))
    write_jsonl(out_dir / API_COUNTS_FILE, ({"developer_id": d, "counts": counts[d]} for d in order if d in counts))
    return {
        "developers": len(order),
        "repos": sum(1 for d in repo_docs.values() if d.tokens),
        "issues": sum(1 for d in issue_docs.values() if d.tokens),
        "apis": len(counts),
        "api_failures": api.failures,
    }


def load_records(corpus_dir) -> dict[str, DeveloperRecord]:
    corpus_dir = Path(corpus_dir)
    roles = read_developers(corpus_dir / DEVELOPERS_FILE)
    repos = read_documents(corpus_dir / DOC_FILES["repos"])
    issues = read_documents(corpus_dir / DOC_FILES["issues"])
    counts = read_api_counts(corpus_dir / API_COUNTS_FILE)
    return {
        d: DeveloperRecord(d, role, repos.get(d), issues.get(d), counts.get(d))
        for d, role in roles.items()
    }
