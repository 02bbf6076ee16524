"""Five-step repository selection funnel over hosted-repository metadata.

Steps: search (age, stars, language), activity filter (recent update,
contributors, branches), keyword filter (maintenance commits plus usable
docs), size categorisation by LOC, and a stratified top-k selection.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import httpx

from .errors import ApiUnavailable, MissingLoc, RateLimited, SchemaMismatch, SelectionShortfall
from .evaluation import SIZE_CATEGORIES, size_category

log = logging.getLogger(__name__)

MAINTENANCE_KEYWORDS = ("refactor", "rewrite", "cleanup", "enhance", "optimize")
DOC_KEYWORDS = ("usage", "install", "example")
DEFAULT_QUOTA = {"large": 4, "medium": 4, "small": 2}
TINY_LOC = 100

STEP_NAMES = (
    "step1_search",
    "step2_meta_filter",
    "step3_keyword_filter",
    "step4_categorize",
    "step5_stratified_select",
)


def _date(value: Any) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    text = str(value)
    # API timestamps look like 2021-04-05T10:00:00Z
    return date.fromisoformat(text[:10])


@dataclass(frozen=True)
class RepoCandidate:
    name: str
    stars: int
    created_at: date
    last_update: date
    contributors: int
    branches: int
    commit_messages: tuple[str, ...] = ()
    doc_text: str = ""
    loc: int | None = None
    language: str = "Haskell"

    def __post_init__(self):
        for f in ("stars", "contributors", "branches"):
            if getattr(self, f) < 0:
                raise SchemaMismatch(f"{self.name}: {f} must be >= 0")
        if self.loc is not None and self.loc < 0:
            raise SchemaMismatch(f"{self.name}: loc must be >= 0")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RepoCandidate":
        try:
            return cls(
                name=str(data["name"]),
                stars=int(data["stars"]),
                created_at=_date(data["created_at"]),
                last_update=_date(data["last_update"]),
                contributors=int(data["contributors"]),
                branches=int(data["branches"]),
                commit_messages=tuple(data.get("commit_messages", ())),
                doc_text=str(data.get("doc_text", "")),
                loc=None if data.get("loc") is None else int(data["loc"]),
                language=str(data.get("language", "Haskell")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad repository record: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "stars": self.stars,
            "created_at": self.created_at.isoformat(),
            "last_update": self.last_update.isoformat(),
            "contributors": self.contributors,
            "branches": self.branches,
            "loc": self.loc,
            "language": self.language,
        }


@dataclass(frozen=True)
class SearchCriteria:
    created_before: date = date(2023, 1, 1)
    min_stars: int = 500  # strictly greater than
    language: str = "Haskell"

    def query(self) -> str:
        return f"created:<{self.created_before.isoformat()} stars:>{self.min_stars} language:{self.language}"


@dataclass
class FunnelConfig:
    criteria: SearchCriteria = field(default_factory=SearchCriteria)
    reference_date: date = field(default_factory=date.today)
    activity_months: int = 12
    min_contributors: int = 3
    min_branches: int = 2
    quota: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_QUOTA))


@dataclass
class FunnelReport:
    per_step_counts: list[tuple[str, int]]
    per_step_rejections: dict[str, list[tuple[str, str]]]
    final_selection: list[RepoCandidate]
    category_counts: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_step_counts": [[name, n] for name, n in self.per_step_counts],
            "category_counts": {c: self.category_counts.get(c, 0) for c in SIZE_CATEGORIES},
            "per_step_rejections": {
                step: [{"repo": r, "reason": why} for r, why in rows]
                for step, rows in self.per_step_rejections.items()
            },
            "final_selection": [c.to_dict() for c in self.final_selection],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- steps


def _months_before(ref: date, months: int) -> date:
    y, m = divmod(ref.month - 1 - months, 12)
    year, month = ref.year + y, m + 1
    for day in (ref.day, 30, 29, 28):
        try:
            return date(year, month, day)
        except ValueError:
            continue
    raise AssertionError("unreachable")


def _step1_reason(c: RepoCandidate, crit: SearchCriteria) -> str | None:
    if c.created_at >= crit.created_before:
        return f"created_at {c.created_at} not before {crit.created_before}"
    if c.stars <= crit.min_stars:
        return f"stars {c.stars} not above {crit.min_stars}"
    if c.language.lower() != crit.language.lower():
        return f"language {c.language} is not {crit.language}"
    return None


def _step2_reason(c: RepoCandidate, cfg: FunnelConfig) -> str | None:
    cutoff = _months_before(cfg.reference_date, cfg.activity_months)
    if c.last_update < cutoff:
        return f"inactive: last update {c.last_update} before {cutoff}"
    if c.contributors < cfg.min_contributors:
        return f"contributors {c.contributors} below {cfg.min_contributors}"
    if c.branches < cfg.min_branches:
        return f"branches {c.branches} below {cfg.min_branches}"
    return None


def _step3_reason(c: RepoCandidate) -> str | None:
    if not any(k in msg.lower() for msg in c.commit_messages for k in MAINTENANCE_KEYWORDS):
        return "no maintenance keyword in commit messages"
    doc = c.doc_text.lower()
    if not any(k in doc for k in DOC_KEYWORDS):
        return "no documentation keyword"
    return None


def _partition(cands, reason_fn) -> tuple[list[RepoCandidate], list[tuple[str, str]]]:
    keep, reject = [], []
    for c in sorted(cands, key=lambda c: c.name):
        why = reason_fn(c)
        if why is None:
            keep.append(c)
        else:
            reject.append((c.name, why))
    return keep, reject


def step1_search(criteria: SearchCriteria, source) -> list[RepoCandidate]:
    """Candidates from source (fixture or live client) passing the search criteria."""
    return _partition(source.search(criteria), lambda c: _step1_reason(c, criteria))[0]


def step2_meta_filter(candidates: Iterable[RepoCandidate], config: FunnelConfig | None = None) -> list[RepoCandidate]:
    cfg = config or FunnelConfig()
    return _partition(candidates, lambda c: _step2_reason(c, cfg))[0]


def step3_keyword_filter(candidates: Iterable[RepoCandidate]) -> list[RepoCandidate]:
    return _partition(candidates, _step3_reason)[0]


def step4_categorize(candidates: Iterable[RepoCandidate]) -> dict[str, list[RepoCandidate]]:
    out: dict[str, list[RepoCandidate]] = {c: [] for c in SIZE_CATEGORIES}
    for c in sorted(candidates, key=lambda c: c.name):
        if c.loc is None:
            raise MissingLoc(f"{c.name} has no LOC value")
        out[size_category(c.loc)].append(c)
    return out


def ranking_key(c: RepoCandidate):
    return (-c.stars, -c.contributors, c.name)


def step5_stratified_select(
    categorized: Mapping[str, Sequence[RepoCandidate]],
    quota: Mapping[str, int] | None = None,
    ranking: Callable[[RepoCandidate], Any] = ranking_key,
) -> list[RepoCandidate]:
    quota = dict(DEFAULT_QUOTA if quota is None else quota)
    deficits = [
        (cat, need, len(categorized.get(cat, ())))
        for cat, need in quota.items()
        if len(categorized.get(cat, ())) < need
    ]
    if deficits:
        raise SelectionShortfall(deficits)
    chosen = []
    for cat in SIZE_CATEGORIES:
        if cat in quota:
            chosen += sorted(categorized.get(cat, ()), key=ranking)[: quota[cat]]
    return chosen


def run_funnel(source, config: FunnelConfig | None = None) -> FunnelReport:
    cfg = config or FunnelConfig()
    raw = list(source.search(cfg.criteria))
    s1, r1 = _partition(raw, lambda c: _step1_reason(c, cfg.criteria))
    s2, r2 = _partition(s1, lambda c: _step2_reason(c, cfg))
    s3, r3 = _partition(s2, _step3_reason)
    cats = step4_categorize(s3)
    warnings = [
        f"{c.name}: small repository under {TINY_LOC} LOC ({c.loc})" for c in cats["small"] if c.loc < TINY_LOC
    ]
    final = step5_stratified_select(cats, cfg.quota)
    chosen = {c.name for c in final}
    r5 = [(c.name, "below quota rank in " + cat) for cat in SIZE_CATEGORIES for c in cats[cat] if c.name not in chosen]
    return FunnelReport(
        per_step_counts=[
            (STEP_NAMES[0], len(s1)),
            (STEP_NAMES[1], len(s2)),
            (STEP_NAMES[2], len(s3)),
            (STEP_NAMES[3], sum(len(v) for v in cats.values())),
            (STEP_NAMES[4], len(final)),
        ],
        per_step_rejections={
            STEP_NAMES[0]: r1,
            STEP_NAMES[1]: r2,
            STEP_NAMES[2]: r3,
            STEP_NAMES[3]: [],
            STEP_NAMES[4]: sorted(r5),
        },
        final_selection=final,
        category_counts={k: len(v) for k, v in cats.items()},
        warnings=warnings,
    )


# ---------------------------------------------------------------- sources


class FixtureSource:
    """Reads one JSON metadata document per candidate from a directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ApiUnavailable(f"fixture directory {self.directory} does not exist")

    def search(self, criteria: SearchCriteria | None = None) -> list[RepoCandidate]:
        out = []
        for p in sorted(self.directory.glob("*.json")):
            if p.name.startswith("_"):
                continue  # expectation files
            try:
                data = json.loads(p.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise SchemaMismatch(f"{p.name}: {exc}") from exc
            out.append(RepoCandidate.from_dict(data))
        return out


class GitHubSource:
    """Live metadata from the GitHub REST API.

    LOC is not available from the API; pass ``loc_map`` (name -> LOC) from a
    separate counting pass or step 4 raises MissingLoc.
    """

    def __init__(
        self,
        *,
        token_env: str = "GITHUB_TOKEN",
        base_url: str = "https://api.github.com",
        loc_map: Mapping[str, int] | None = None,
        concurrency: int = 4,
        max_pages: int = 10,
        max_retries: int = 3,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.token_env = token_env
        self.base_url = base_url.rstrip("/")
        self.loc_map = dict(loc_map or {})
        self.concurrency = concurrency
        self.max_pages = max_pages
        self.max_retries = max_retries
        self.transport = transport
        self.sleep = sleep

    def _client(self) -> httpx.Client:
        token = os.environ.get(self.token_env)
        if not token:
            raise ApiUnavailable(f"credential variable {self.token_env} is not set")
        headers = {"Authorization": f"Bearer {token}", "Accept": "application/vnd.github+json"}
        return httpx.Client(base_url=self.base_url, headers=headers, transport=self.transport, timeout=30.0)

    def _get(self, client: httpx.Client, url: str, **params) -> httpx.Response:
        for attempt in range(self.max_retries + 1):
            try:
                resp = client.get(url, params=params or None)
            except httpx.TransportError as exc:
                raise ApiUnavailable(f"GET {url}: {exc}") from exc
            limited = resp.status_code == 429 or (
                resp.status_code == 403 and resp.headers.get("x-ratelimit-remaining") == "0"
            )
            if limited:
                wait = float(resp.headers.get("retry-after", "60"))
                if attempt == self.max_retries:
                    raise RateLimited(wait)
                log.warning("rate limited on %s; waiting %.0fs", url, wait)
                self.sleep(wait)
                continue
            if resp.status_code >= 500:
                raise ApiUnavailable(f"GET {url}: HTTP {resp.status_code}")
            return resp
        raise RateLimited(0)

    def _count(self, client, url: str) -> int:
        total = 0
        for page in range(1, self.max_pages + 1):
            resp = self._get(client, url, per_page=100, page=page)
            if resp.status_code != 200:
                break
            items = resp.json()
            total += len(items)
            if len(items) < 100:
                break
        return total

    def _enrich(self, client, item: Mapping) -> RepoCandidate:
        full = item["full_name"]
        commits = self._get(client, f"/repos/{full}/commits", per_page=100)
        messages = [c["commit"]["message"] for c in commits.json()] if commits.status_code == 200 else []
        readme = self._get(client, f"/repos/{full}/readme")
        doc = ""
        if readme.status_code == 200:
            body = readme.json()
            doc = base64.b64decode(body.get("content", "")).decode("utf-8", errors="replace")
        return RepoCandidate(
            name=full,
            stars=int(item["stargazers_count"]),
            created_at=_date(item["created_at"]),
            last_update=_date(item["pushed_at"] or item["updated_at"]),
            contributors=self._count(client, f"/repos/{full}/contributors"),
            branches=self._count(client, f"/repos/{full}/branches"),
            commit_messages=tuple(messages),
            doc_text=doc,
            loc=self.loc_map.get(full),
            language=item.get("language") or "",
        )

    def search(self, criteria: SearchCriteria) -> list[RepoCandidate]:
        with self._client() as client:
            items = []
            for page in range(1, self.max_pages + 1):
                resp = self._get(client, "/search/repositories", q=criteria.query(), per_page=100, page=page)
                if resp.status_code != 200:
                    raise ApiUnavailable(f"search failed: HTTP {resp.status_code}")
                batch = resp.json().get("items", [])
                items += batch
                if len(batch) < 100:
                    break
            with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
                return list(pool.map(lambda it: self._enrich(client, it), items))


def load_loc_map(path: str | Path) -> dict[str, int]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {str(k): int(v) for k, v in data.items()}
