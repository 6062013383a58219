"""CSV ingestion for the BanFakeNews file family and the fixed train/test assembly."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

MANDATORY_COLUMNS = ("articleID", "domain", "date", "category", "headline", "content", "label")
EXTENDED_COLUMNS = ("source", "relation", "F-type")
RELATIONS = ("related", "unrelated")

# news bodies can exceed the csv module's 128 KiB default
csv.field_size_limit(2**31 - 1)


class MalformedHeader(ValueError):
    pass


@dataclass(frozen=True)
class Article:
    article_id: str
    domain: str
    date: str
    category: str
    headline: str
    content: str
    label: int
    source: str | None = None
    relation: str | None = None
    f_type: str | None = None


@dataclass(frozen=True)
class RowError:
    row: int  # 1-based data row number, header excluded
    reason: str
    path: str = ""


@dataclass(frozen=True)
class SplitOverlap:
    article_id: str
    train_path: str
    test_path: str


@dataclass
class DatasetSplit:
    train: list[Article]
    test: list[Article]
    provenance: dict[str, int]
    row_errors: list[RowError] = field(default_factory=list)
    overlaps: list[SplitOverlap] = field(default_factory=list)


def _parse_label(raw: str | None) -> int | None:
    if raw is None:
        return None
    raw = raw.strip()
    try:
        value = float(raw)
    except ValueError:
        return None
    if value in (0.0, 1.0):
        return int(value)
    return None


def _optional(row: dict, key: str) -> str | None:
    value = row.get(key)
    if value is None:
        return None
    value = value.strip()
    return value or None


def load_articles(path, has_extended_columns: bool = False) -> tuple[list[Article], list[RowError]]:
    """Parse one corpus CSV.

    Returns the valid articles plus one :class:`RowError` per rejected row. Rows are
    rejected for a missing id, content or label, a label outside {0, 1}, a duplicate
    id (first occurrence wins), a relation other than related/unrelated, or an
    F-type on an authentic article.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    articles: list[Article] = []
    errors: list[RowError] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in MANDATORY_COLUMNS if c not in header]
        if missing:
            raise MalformedHeader(f"{path}: missing column(s) {', '.join(missing)}")
        reader.fieldnames = header
        for n, row in enumerate(reader, start=1):
            if None in row:
                errors.append(RowError(n, "too many fields", str(path)))
                continue
            article_id = _optional(row, "articleID")
            content = row.get("content")
            label = _parse_label(row.get("label"))
            if article_id is None:
                errors.append(RowError(n, "missing articleID", str(path)))
                continue
            if content is None or not content.strip():
                errors.append(RowError(n, "missing content", str(path)))
                continue
            if label is None:
                errors.append(RowError(n, f"missing or invalid label {row.get('label')!r}", str(path)))
                continue
            if article_id in seen:
                errors.append(RowError(n, f"duplicate articleID {article_id}", str(path)))
                continue
            source = relation = f_type = None
            if has_extended_columns:
                source = _optional(row, "source")
                relation = _optional(row, "relation")
                f_type = _optional(row, "F-type")
                if relation is not None:
                    relation = relation.lower()
                    if relation not in RELATIONS:
                        errors.append(RowError(n, f"invalid relation {relation!r}", str(path)))
                        continue
                if f_type is not None and label != 0:
                    errors.append(RowError(n, "F-type given for an authentic article", str(path)))
                    continue
            seen.add(article_id)
            articles.append(
                Article(
                    article_id=article_id,
                    domain=(row.get("domain") or "").strip(),
                    date=(row.get("date") or "").strip(),
                    category=(row.get("category") or "").strip(),
                    headline=(row.get("headline") or "").strip(),
                    content=content,
                    label=label,
                    source=source,
                    relation=relation,
                    f_type=f_type,
                )
            )
    for err in errors:
        log.warning("%s row %d: %s", path, err.row, err.reason)
    return articles, errors


def assemble_split(authentic, fake, labeled_authentic, labeled_fake) -> DatasetSplit:
    """Train = authentic + fake, test = labeled authentic + labeled fake, in file order.

    An id that appears in a training file and in the test file of the same family is
    reported as a :class:`SplitOverlap` and kept in train only.
    """
    paths = [authentic, fake, labeled_authentic, labeled_fake]
    loaded = []
    row_errors: list[RowError] = []
    for p, extended in zip(paths, (False, False, True, True)):
        arts, errs = load_articles(p, has_extended_columns=extended)
        loaded.append(arts)
        row_errors.extend(errs)
    auth, fk, lauth, lfake = loaded

    overlaps: list[SplitOverlap] = []
    test: list[Article] = []
    for train_part, test_part, train_path, test_path in ((auth, lauth, authentic, labeled_authentic), (fk, lfake, fake, labeled_fake)):
        train_ids = {a.article_id for a in train_part}
        for a in test_part:
            if a.article_id in train_ids:
                overlaps.append(SplitOverlap(a.article_id, str(train_path), str(test_path)))
                log.warning("article %s appears in %s and %s; kept in train only", a.article_id, train_path, test_path)
            else:
                test.append(a)
    provenance = {str(p): len(arts) for p, arts in zip(paths, loaded)}
    return DatasetSplit(train=auth + fk, test=test, provenance=provenance, row_errors=row_errors, overlaps=overlaps)
