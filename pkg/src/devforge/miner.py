"""GitHub evidence acquisition.

Three evidence streams are pulled per developer: repository texts, issues
the developer was involved in, and post-commit snapshots of source files.
Everything goes through :class:`GitHubClient`; fixture mode swaps the HTTP
transport for :class:`FixtureTransport`, which replays recorded responses
from a ``routes.json`` file, so fixture and live runs share one code path.
"""

from __future__ import annotations

import base64
import binascii
import enum
import json
import logging
import os
import re
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from urllib.parse import urlencode

import httpx

from .errors import AuthError, InvalidRecord, NotFound, RateLimited
from .imports import LanguageId, detect_language
from .jsonl import write_jsonl

logger = logging.getLogger(__name__)

API_URL = "https://api.github.com"
TOKEN_ENV = "DEV2VEC_GH_TOKEN"
DEFAULT_BYTE_CAP = 1 << 20
SOURCES = ("repos", "issues", "apis")
OUTPUT_FILES = {"repos": "repos.jsonl", "issues": "issues.jsonl", "apis": "snapshots.jsonl"}
CHECKPOINT_FILE = "checkpoint.json"

_SHA = re.compile(r"[0-9a-f]{40}")
_FULL_NAME = re.compile(r"[^/\s]+/[^/\s]+")


class Relation(str, enum.Enum):
    assigned = "assigned"
    created = "created"
    participated = "participated"

    @property
    def strength(self):
        return _RELATION_STRENGTH[self]


_RELATION_STRENGTH = {Relation.assigned: 3, Relation.created: 2, Relation.participated: 1}


def _strict_kwargs(cls, data):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise InvalidRecord(f"{cls.__name__}: unknown fields {sorted(unknown)}")
    missing = {f.name for f in fields(cls) if f.default is MISSING and f.default_factory is MISSING} - set(data)
    if missing:
        raise InvalidRecord(f"{cls.__name__}: missing fields {sorted(missing)}")
    return data


@dataclass(frozen=True)
class AcquisitionJob:
    developer_login: str
    sources: frozenset = frozenset(SOURCES)
    since: str | None = None
    output_dir: Path = Path(".")

    def __post_init__(self):
        if not self.developer_login or any(c.isspace() for c in self.developer_login):
            raise ValueError(f"invalid developer login: {self.developer_login!r}")
        sources = frozenset(self.sources)
        if not sources:
            raise ValueError("at least one source is required")
        bad = sources - set(SOURCES)
        if bad:
            raise ValueError(f"unknown sources: {sorted(bad)}")
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "output_dir", Path(self.output_dir))


@dataclass(frozen=True)
class RepoFacts:
    developer_id: str
    repo_full_name: str
    name: str
    tags: tuple = ()
    topic: str = ""
    readme: str = ""
    forked_from: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))
        if not self.developer_id:
            raise InvalidRecord("developer_id is empty")
        if not self.name:
            raise InvalidRecord("repository name is empty")
        if not _FULL_NAME.fullmatch(self.repo_full_name or ""):
            raise InvalidRecord(f"repo_full_name not owner/name: {self.repo_full_name!r}")
        if not all(isinstance(t, str) for t in self.tags):
            raise InvalidRecord("tags must be strings")
        if not isinstance(self.topic, str) or not isinstance(self.readme, str):
            raise InvalidRecord("topic and readme must be strings")

    def to_dict(self):
        d = asdict(self)
        d["tags"] = list(self.tags)
        return d

    @classmethod
    def from_dict(cls, data):
        return cls(**_strict_kwargs(cls, data))


@dataclass(frozen=True)
class IssueFacts:
    developer_id: str
    issue_id: str
    title: str
    body: str = ""
    relation: Relation = Relation.participated

    def __post_init__(self):
        if not self.developer_id or not self.issue_id:
            raise InvalidRecord("developer_id and issue_id are required")
        if not isinstance(self.title, str) or not isinstance(self.body, str):
            raise InvalidRecord("title and body must be strings")
        try:
            object.__setattr__(self, "relation", Relation(self.relation))
        except ValueError:
            raise InvalidRecord(f"unknown relation {self.relation!r}") from None

    def to_dict(self):
        d = asdict(self)
        d["relation"] = self.relation.value
        return d

    @classmethod
    def from_dict(cls, data):
        return cls(**_strict_kwargs(cls, data))


@dataclass(frozen=True)
class CommitSnapshot:
    developer_id: str
    commit_sha: str
    file_path: str
    language: LanguageId
    content: str

    def __post_init__(self):
        if not self.developer_id:
            raise InvalidRecord("developer_id is empty")
        if not isinstance(self.commit_sha, str) or not _SHA.fullmatch(self.commit_sha):
            raise InvalidRecord(f"commit_sha must be 40 lowercase hex chars: {self.commit_sha!r}")
        try:
            lang = LanguageId(self.language)
        except ValueError:
            raise InvalidRecord(f"unknown language {self.language!r}") from None
        if detect_language(self.file_path) is not lang:
            raise InvalidRecord(f"language {lang} does not match extension of {self.file_path!r}")
        if not isinstance(self.content, str):
            raise InvalidRecord("content must be a string")
        object.__setattr__(self, "language", lang)

    def to_dict(self):
        d = asdict(self)
        d["language"] = self.language.value
        return d

    @classmethod
    def from_dict(cls, data):
        return cls(**_strict_kwargs(cls, data))


# --------------------------------------------------------------------------
# HTTP plumbing


class TokenBucket:
    """Blocking token bucket: at most ``rate`` acquisitions per second on
    average, with bursts of up to ``capacity``."""

    def __init__(self, rate, capacity=1.0, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self.capacity = float(capacity)
        self._clock = clock
        self._sleep = sleep
        self._tokens = self.capacity
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self):
        with self._lock:
            while True:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                # tolerance: a float residue just below 1 must not spin forever
                if self._tokens >= 1.0 - 1e-9:
                    self._tokens = max(0.0, self._tokens - 1.0)
                    return
                self._sleep((1.0 - self._tokens) / self.rate)


def route_key(method, path, params=None):
    """Canonical key for a request, shared by recording and replay.

    Paging parameters are not part of the key."""
    query = {k: v for k, v in (params or {}).items() if k not in ("page", "per_page")}
    key = f"{method.upper()} {path}"
    if query:
        key += "?" + urlencode(sorted(query.items()))
    return key


class FixtureTransport(httpx.MockTransport):
    """Replays recorded GitHub responses from ``<fixture_dir>/routes.json``.

    Each value is either a JSON payload (served with status 200) or an
    object ``{"status": int, "headers": {...}, "json": ...}``. Unknown routes
    answer 404.
    """

    def __init__(self, fixture_dir):
        path = Path(fixture_dir) / "routes.json"
        with open(path, encoding="utf-8") as f:
            self.routes = json.load(f)
        self.requests: list[str] = []
        super().__init__(self._handle)

    def _handle(self, request: httpx.Request) -> httpx.Response:
        key = route_key(request.method, request.url.path, dict(request.url.params))
        self.requests.append(key)
        entry = self.routes.get(key)
        if entry is None:
            return httpx.Response(404, json={"message": "Not Found"})
        if isinstance(entry, dict) and "status" in entry:
            return httpx.Response(entry["status"], headers=entry.get("headers", {}), json=entry.get("json"))
        return httpx.Response(200, json=entry)


_NEXT_LINK = re.compile(r'<([^>]+)>;\s*rel="next"')


class GitHubClient:
    """Synchronous GitHub REST client with a request budget and retry policy."""

    def __init__(
        self,
        token=None,
        base_url=API_URL,
        transport=None,
        requests_per_second=10.0,
        max_retries=5,
        backoff_base=1.0,
        sleep=time.sleep,
        clock=time.monotonic,
    ):
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        headers = {"Accept": "application/vnd.github+json", "User-Agent": "devforge"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=base_url, headers=headers, transport=transport, timeout=30.0)
        self._bucket = TokenBucket(requests_per_second, clock=clock, sleep=sleep) if requests_per_second else None
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep

    @classmethod
    def from_fixtures(cls, fixture_dir):
        return cls(token="", transport=FixtureTransport(fixture_dir), requests_per_second=None, sleep=lambda s: None)

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _send(self, url, params):
        if self._bucket is not None:
            self._bucket.acquire()
        resp = self._client.get(url, params=params)
        status = resp.status_code
        if status < 300:
            return resp
        if status == 404:
            raise NotFound(f"GET {resp.request.url.path}: 404")
        retry_after = resp.headers.get("Retry-After")
        exhausted = resp.headers.get("X-RateLimit-Remaining") == "0"
        if status == 429 or (status == 403 and (retry_after is not None or exhausted)):
            wait = None
            if retry_after is not None:
                wait = float(retry_after)
            elif exhausted and "X-RateLimit-Reset" in resp.headers:
                wait = max(0.0, float(resp.headers["X-RateLimit-Reset"]) - time.time())
            raise RateLimited(f"GET {resp.request.url.path}: {status}", retry_after=wait)
        if status in (401, 403):
            raise AuthError(f"GET {resp.request.url.path}: {status}")
        resp.raise_for_status()
        return resp

    def _request(self, url, params=None):
        for attempt in range(self.max_retries + 1):
            try:
                return self._send(url, params)
            except RateLimited as exc:
                if attempt == self.max_retries:
                    raise
                delay = self.backoff_base * 2**attempt
                if exc.retry_after is not None:
                    delay = max(delay, exc.retry_after)
                logger.warning("rate limited, backing off %.1fs (attempt %d)", delay, attempt + 1)
                self._sleep(delay)
        raise AssertionError("unreachable")

    def get(self, path, params=None):
        return self._request(path, params).json()

    def get_paginated(self, path, params=None, key=None):
        """Follow ``Link: rel=next`` headers, yielding items from every page."""
        params = {"per_page": 100, **(params or {})}
        url = path
        while url:
            resp = self._request(url, params)
            payload = resp.json()
            items = payload.get(key, []) if key else payload
            yield from items
            match = _NEXT_LINK.search(resp.headers.get("Link", ""))
            url, params = (match.group(1), None) if match else (None, None)


# --------------------------------------------------------------------------
# acquisition


@dataclass
class Miner:
    client: GitHubClient
    byte_cap: int = DEFAULT_BYTE_CAP
    stats: Counter = field(default_factory=Counter)
    _repo_cache: dict = field(default_factory=dict, repr=False)

    def _drop(self, kind, exc):
        self.stats[f"invalid_{kind}"] += 1
        logger.warning("dropping invalid %s record: %s", kind, exc)

    def _user_repos(self, job):
        cache = self._repo_cache
        if job.developer_login in cache:
            return cache[job.developer_login]
        try:
            repos = list(self.client.get_paginated(f"/users/{job.developer_login}/repos", {"type": "all"}))
        except NotFound:
            self.stats["unknown_developer"] += 1
            logger.warning("developer %s not found; no evidence collected", job.developer_login)
            repos = []
        cache[job.developer_login] = repos
        return repos

    def _readme(self, full_name):
        try:
            payload = self.client.get(f"/repos/{full_name}/readme")
        except NotFound:
            return ""
        return _decode_content(payload) or ""

    def _topics(self, repo):
        if isinstance(repo.get("topics"), list):
            return repo["topics"]
        try:
            return self.client.get(f"/repos/{repo['full_name']}/topics").get("names", [])
        except NotFound:
            return []

    def _has_commits(self, full_name, login):
        try:
            return bool(self.client.get(f"/repos/{full_name}/commits", {"author": login, "per_page": 1}))
        except NotFound:
            return False

    def _facts(self, login, repo, forked_from=None):
        return RepoFacts(
            developer_id=login,
            repo_full_name=repo["full_name"],
            name=repo["name"],
            tags=tuple(self._topics(repo)),
            topic=repo.get("description") or "",
            readme=self._readme(repo["full_name"]),
            forked_from=forked_from,
        )

    def fetch_repos(self, job):
        login = job.developer_login
        for repo in self._user_repos(job):
            try:
                parent = None
                if repo.get("fork"):
                    detail = repo if "parent" in repo else self.client.get(f"/repos/{repo['full_name']}")
                    parent = (detail.get("parent") or {}).get("full_name")
                yield self._facts(login, repo, forked_from=parent)
                if parent and self._has_commits(parent, login):
                    yield self._facts(login, self.client.get(f"/repos/{parent}"))
            except (InvalidRecord, KeyError, TypeError) as exc:
                self._drop("repo", exc)

    def fetch_issues(self, job):
        login = job.developer_login
        by_id: dict[str, IssueFacts] = {}
        for qualifier, relation in (
            ("assignee", Relation.assigned),
            ("author", Relation.created),
            ("commenter", Relation.participated),
        ):
            q = f"{qualifier}:{login} type:issue"
            if job.since:
                q += f" updated:>={job.since}"
            try:
                items = list(self.client.get_paginated("/search/issues", {"q": q}, key="items"))
            except NotFound:
                items = []
            for item in items:
                try:
                    facts = _issue_facts(login, item, relation)
                except (InvalidRecord, KeyError, TypeError) as exc:
                    self._drop("issue", exc)
                    continue
                seen = by_id.get(facts.issue_id)
                if seen is None or facts.relation.strength > seen.relation.strength:
                    by_id[facts.issue_id] = facts
        yield from by_id.values()

    def fetch_commit_snapshots(self, job):
        login = job.developer_login
        for repo in self._user_repos(job):
            full_name = repo.get("full_name")
            if not full_name:
                continue
            params = {"author": login}
            if job.since:
                params["since"] = job.since
            try:
                commits = list(self.client.get_paginated(f"/repos/{full_name}/commits", params))
            except NotFound:
                continue
            for commit in commits:
                yield from self._snapshots(login, full_name, commit.get("sha", ""))

    def _snapshots(self, login, full_name, sha):
        try:
            detail = self.client.get(f"/repos/{full_name}/commits/{sha}")
        except NotFound:
            return
        for changed in detail.get("files", []):
            path = changed.get("filename", "")
            if changed.get("status") == "removed":
                continue
            language = detect_language(path)
            if language is None:
                continue
            if changed.get("size", 0) > self.byte_cap:
                self._skip_oversized(path, changed["size"])
                continue
            try:
                payload = self.client.get(f"/repos/{full_name}/contents/{path}", {"ref": sha})
            except NotFound:
                continue
            size = payload.get("size", 0)
            raw = _decode_bytes(payload)
            if raw is None:
                self._drop("snapshot", f"undecodable content for {path}")
                continue
            if max(size, len(raw)) > self.byte_cap:
                self._skip_oversized(path, max(size, len(raw)))
                continue
            try:
                yield CommitSnapshot(login, sha, path, language, raw.decode("utf-8"))
            except (InvalidRecord, UnicodeDecodeError) as exc:
                self._drop("snapshot", exc)

    def _skip_oversized(self, path, size):
        self.stats["oversized_file"] += 1
        logger.warning("skipping %s: %d bytes exceeds cap of %d", path, size, self.byte_cap)

    def collect(self, job):
        """All requested records for one developer, keyed by source."""
        out = {}
        if "repos" in job.sources:
            out["repos"] = [r.to_dict() for r in self.fetch_repos(job)]
        if "issues" in job.sources:
            out["issues"] = [r.to_dict() for r in self.fetch_issues(job)]
        if "apis" in job.sources:
            out["apis"] = [r.to_dict() for r in self.fetch_commit_snapshots(job)]
        return out


def _decode_bytes(payload):
    content = payload.get("content")
    if content is None:
        return None
    if payload.get("encoding", "base64") != "base64":
        return content.encode("utf-8")
    try:
        return base64.b64decode(content)
    except (binascii.Error, ValueError):
        return None


def _decode_content(payload):
    raw = _decode_bytes(payload)
    return None if raw is None else raw.decode("utf-8", errors="replace")


def _issue_facts(login, item, relation):
    repo = item.get("repository_url", "").split("/repos/")[-1]
    return IssueFacts(
        developer_id=login,
        issue_id=f"{repo}#{item['number']}",
        title=item["title"],
        body=item.get("body") or "",
        relation=relation,
    )


def fetch_repos(job, client):
    return Miner(client).fetch_repos(job)


def fetch_issues(job, client):
    return Miner(client).fetch_issues(job)


def fetch_commit_snapshots(job, client, byte_cap=DEFAULT_BYTE_CAP):
    return Miner(client, byte_cap=byte_cap).fetch_commit_snapshots(job)


def mine(logins, output_dir, client, sources=SOURCES, since=None, workers=1, byte_cap=DEFAULT_BYTE_CAP, resume=True):
    """Acquire evidence for many developers and write the JSONL exchange files.

    Developers are written in input order, each only once all its requests
    have succeeded. If the job aborts (rate limit exhausted, auth failure),
    ``checkpoint.json`` lists completed developers and a later call resumes
    after them.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = output_dir / CHECKPOINT_FILE
    done: list[str] = []
    if resume and checkpoint.exists():
        done = json.loads(checkpoint.read_text())["completed"]
    else:
        for src in sources:
            (output_dir / OUTPUT_FILES[src]).write_text("", encoding="utf-8")
    pending = [login for login in logins if login not in set(done)]
    miner = Miner(client, byte_cap=byte_cap)
    jobs = [AcquisitionJob(login, frozenset(sources), since, output_dir) for login in pending]

    def _save():
        checkpoint.write_text(json.dumps({"completed": done}, indent=1) + "\n")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = pool.map(miner.collect, jobs)
        try:
            for job, records in zip(jobs, results):
                for src, rows in records.items():
                    write_jsonl(output_dir / OUTPUT_FILES[src], rows, append=True)
                done.append(job.developer_login)
        except Exception:
            _save()
            raise
    if checkpoint.exists():
        checkpoint.unlink()
    return miner.stats
