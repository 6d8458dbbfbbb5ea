"""Movie data schema, CSV ingestion, cleaning, temporal split and labeling.

The pipeline consumes a single documented CSV layout (see README): one row
per movie with identifiers, dates, money, content/crew attributes and a
contiguous ``genome_0..genome_{D-1}`` block of tag-relevance scores.
Cleaning keeps movies released after 1965 whose budget and revenue are both
positive, computes ROI, splits at the 2011 release year, and binarizes ROI
at the training median.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from datetime import date
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import SchemaError, TrainingError

SCHEMA_VERSION = 1
FIRST_ADMISSIBLE_YEAR = 1966
TEST_BOUNDARY_YEAR = 2011

# Canonical column order of movies.csv, genome block appended at the end.
CSV_COLUMNS = [
    "movie_id",
    "title",
    "release_date",
    "budget",
    "revenue",
    "is_adult",
    "is_english",
    "is_collection",
    "is_homepage",
    "is_tagline",
    "languages_count",
    "keywords_count",
    "movie_runtime",
    "genres",
    "female_count",
    "male_count",
    "crew_length",
    "popularity",
    "vote_average",
    "vote_count",
    "metacritic_score",
    "imdb_rating",
    "imdb_votes",
    "production_house_ids",
    "writer_ids",
    "director_ids",
    "producer_ids",
    "main_cast_ids",
]

GENOME_PREFIX = "genome_"

_BOOL_FIELDS = ("is_adult", "is_english", "is_collection", "is_homepage", "is_tagline")
# Numeric columns that may be empty in the CSV; they surface as None and are
# median-imputed later (audience columns stay missing, they never enter the model).
_OPTIONAL_NUMERIC_FIELDS = (
    "languages_count",
    "keywords_count",
    "movie_runtime",
    "female_count",
    "male_count",
    "crew_length",
    "popularity",
    "vote_average",
    "vote_count",
    "metacritic_score",
    "imdb_rating",
    "imdb_votes",
)
_LIST_FIELDS = (
    "production_house_ids",
    "writer_ids",
    "director_ids",
    "producer_ids",
    "main_cast_ids",
)


@dataclass(frozen=True)
class RawMovieRecord:
    """One movie row as ingested, before cleaning."""

    movie_id: str
    title: str
    release_date: date
    budget: float
    revenue: float
    is_adult: bool
    is_english: bool
    is_collection: bool
    is_homepage: bool
    is_tagline: bool
    languages_count: float | None
    keywords_count: float | None
    movie_runtime: float | None
    genres: tuple[str, ...]
    female_count: float | None
    male_count: float | None
    crew_length: float | None
    popularity: float | None
    vote_average: float | None
    vote_count: float | None
    metacritic_score: float | None
    imdb_rating: float | None
    imdb_votes: float | None
    production_house_ids: tuple[str, ...]
    writer_ids: tuple[str, ...]
    director_ids: tuple[str, ...]
    producer_ids: tuple[str, ...]
    main_cast_ids: tuple[str, ...]
    genome: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError(f"movie {self.movie_id}: budget must be >= 0")
        if self.revenue < 0:
            raise ValueError(f"movie {self.movie_id}: revenue must be >= 0")
        genome = np.asarray(self.genome, dtype=np.float64)
        if genome.ndim != 1:
            raise ValueError(f"movie {self.movie_id}: genome must be a flat vector")
        if genome.size and (np.nanmin(genome) < 0.0 or np.nanmax(genome) > 1.0):
            raise ValueError(f"movie {self.movie_id}: genome entries must lie in [0, 1]")
        genome.flags.writeable = False
        object.__setattr__(self, "genome", genome)
        for name in ("languages_count", "keywords_count", "female_count", "male_count", "crew_length"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"movie {self.movie_id}: {name} must be >= 0")


@dataclass(frozen=True)
class MovieRecord(RawMovieRecord):
    """Cleaned movie row: positive money, post-1965, with ROI and date parts."""

    roi: float = 0.0
    release_year: int = 0
    release_month: int = 0


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of movie records with unique ids."""

    records: tuple = ()
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.movie_id in seen:
                raise ValueError(f"duplicate movie_id {rec.movie_id!r} in dataset")
            seen.add(rec.movie_id)
        dims = {rec.genome.size for rec in self.records}
        if len(dims) > 1:
            raise ValueError(f"inconsistent genome dimensionality across records: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator:
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def genome_dim(self) -> int:
        return self.records[0].genome.size if self.records else 0

    def rois(self) -> np.ndarray:
        return np.array([r.roi for r in self.records], dtype=np.float64)


@dataclass(frozen=True)
class LabeledSplit:
    """Temporal train/test split with labels binarized at the train median ROI."""

    train: Dataset
    test: Dataset
    median_roi: float
    train_labels: np.ndarray
    test_labels: np.ndarray


def compute_roi(budget: float, revenue: float) -> float:
    """Return on investment: (revenue - budget) / budget. Requires budget > 0."""
    if budget <= 0:
        raise ValueError(f"ROI undefined for budget {budget!r}; budget must be > 0")
    return (revenue - budget) / budget


def _parse_float(text: str, row_num: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(
            f"row {row_num}, column {column!r}: expected a number, got {text!r}"
        ) from None
    if math.isnan(value):
        raise SchemaError(f"row {row_num}, column {column!r}: NaN is not a valid value")
    return value


def _parse_optional_float(text: str, row_num: int, column: str) -> float | None:
    if text.strip() == "":
        return None
    return _parse_float(text, row_num, column)


def _parse_bool(text: str, row_num: int, column: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true"):
        return True
    if value in ("0", "false"):
        return False
    raise SchemaError(
        f"row {row_num}, column {column!r}: expected a boolean (0/1/true/false), got {text!r}"
    )


def _parse_date(text: str, row_num: int, column: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise SchemaError(
            f"row {row_num}, column {column!r}: expected an ISO-8601 date, got {text!r}"
        ) from None


def _parse_id_list(text: str) -> tuple[str, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(part for part in text.split("|") if part)


def _genome_columns(header: Sequence[str]) -> list[str]:
    """Validate that genome columns form a contiguous genome_0..genome_{D-1} block."""
    positions = [i for i, name in enumerate(header) if name.startswith(GENOME_PREFIX)]
    if not positions:
        raise SchemaError("header has no genome_* columns")
    start, end = positions[0], positions[-1]
    if positions != list(range(start, end + 1)):
        raise SchemaError("genome_* columns must be contiguous in the header")
    names = [header[i] for i in positions]
    expected = [f"{GENOME_PREFIX}{i}" for i in range(len(names))]
    if names != expected:
        raise SchemaError(
            f"genome columns must be named {GENOME_PREFIX}0..{GENOME_PREFIX}{len(names) - 1} in order"
        )
    return names


def load_movies_csv(
    path, schema: dict[str, str] | None = None, *, require_revenue: bool = True
) -> Dataset:
    """Read a movies CSV into a Dataset of RawMovieRecord.

    ``schema`` optionally remaps logical field names to CSV column names.
    With ``require_revenue=False`` the revenue column may be omitted
    entirely (what-if scoring inputs); absent revenue is stored as 0.0 and
    never read by prediction.

    Raises SchemaError naming the row and column for any unparseable cell.
    """
    colmap = dict(zip(CSV_COLUMNS, CSV_COLUMNS))
    if schema:
        unknown = set(schema) - set(CSV_COLUMNS)
        if unknown:
            raise SchemaError(f"schema maps unknown fields: {sorted(unknown)}")
        colmap.update(schema)

    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from None

    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty, expected a header row") from None

        required = [colmap[f] for f in CSV_COLUMNS if f != "revenue"]
        if require_revenue:
            required.append(colmap["revenue"])
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: header is missing columns {missing}")
        genome_names = _genome_columns(header)
        index = {name: i for i, name in enumerate(header)}
        has_revenue = colmap["revenue"] in index

        records = []
        for row_num, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise SchemaError(
                    f"row {row_num}: expected {len(header)} cells, got {len(row)}"
                )

            def cell(field_name: str) -> str:
                return row[index[colmap[field_name]]]

            values: dict = {
                "movie_id": cell("movie_id").strip(),
                "title": cell("title"),
                "release_date": _parse_date(cell("release_date"), row_num, colmap["release_date"]),
                "budget": _parse_float(cell("budget"), row_num, colmap["budget"]),
                "revenue": _parse_float(cell("revenue"), row_num, colmap["revenue"]) if has_revenue else 0.0,
                "genres": _parse_id_list(cell("genres")),
            }
            for name in _BOOL_FIELDS:
                values[name] = _parse_bool(cell(name), row_num, colmap[name])
            for name in _OPTIONAL_NUMERIC_FIELDS:
                values[name] = _parse_optional_float(cell(name), row_num, colmap[name])
            for name in _LIST_FIELDS:
                values[name] = _parse_id_list(cell(name))

            genome = np.empty(len(genome_names), dtype=np.float64)
            for j, gname in enumerate(genome_names):
                genome[j] = _parse_float(row[index[gname]], row_num, gname)
            if genome.size and (genome.min() < 0.0 or genome.max() > 1.0):
                raise SchemaError(
                    f"row {row_num}: genome scores must lie in [0, 1]"
                )
            values["genome"] = genome

            try:
                records.append(RawMovieRecord(**values))
            except ValueError as exc:
                raise SchemaError(f"row {row_num}: {exc}") from None

    return Dataset(records=tuple(records))


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_movies_csv(dataset: Dataset | Iterable[RawMovieRecord], path) -> None:
    """Write records back out in the canonical movies.csv layout."""
    records = list(dataset)
    genome_dim = records[0].genome.size if records else 0
    header = CSV_COLUMNS + [f"{GENOME_PREFIX}{i}" for i in range(genome_dim)]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for rec in records:
            row = []
            for name in CSV_COLUMNS:
                value = getattr(rec, name)
                if name == "release_date":
                    row.append(value.isoformat())
                elif name in ("genres",) + _LIST_FIELDS:
                    row.append("|".join(value))
                else:
                    row.append(_format_value(value))
            row.extend(repr(float(g)) for g in rec.genome)
            writer.writerow(row)


def _to_movie_record(raw: RawMovieRecord) -> MovieRecord:
    raw_fields = {f.name: getattr(raw, f.name) for f in fields(RawMovieRecord)}
    return MovieRecord(
        **raw_fields,
        roi=compute_roi(raw.budget, raw.revenue),
        release_year=raw.release_date.year,
        release_month=raw.release_date.month,
    )


def annotate_release_parts(raw: RawMovieRecord) -> MovieRecord:
    """Derive date parts without requiring revenue (prediction inputs).

    ROI is set to NaN; it must never be read on this path.
    """
    raw_fields = {f.name: getattr(raw, f.name) for f in fields(RawMovieRecord)}
    return MovieRecord(
        **raw_fields,
        roi=float("nan"),
        release_year=raw.release_date.year,
        release_month=raw.release_date.month,
    )


def clean_filter(raw: Dataset) -> Dataset:
    """Keep rows with release year > 1965 and positive budget and revenue.

    Output records carry roi, release_year and release_month. Order is
    preserved and the filter is idempotent.
    """
    kept = []
    for rec in raw.records:
        if rec.release_date.year < FIRST_ADMISSIBLE_YEAR:
            continue
        if rec.budget <= 0 or rec.revenue <= 0:
            continue
        if isinstance(rec, MovieRecord):
            kept.append(rec)
        else:
            kept.append(_to_movie_record(rec))
    return Dataset(records=tuple(kept), schema_version=raw.schema_version)


def temporal_split(data: Dataset) -> tuple[Dataset, Dataset]:
    """Partition at the 2011 boundary: earlier years train, 2011+ test."""
    train = [r for r in data.records if r.release_year < TEST_BOUNDARY_YEAR]
    test = [r for r in data.records if r.release_year >= TEST_BOUNDARY_YEAR]
    return (
        Dataset(records=tuple(train), schema_version=data.schema_version),
        Dataset(records=tuple(test), schema_version=data.schema_version),
    )


def binarize_labels(train: Dataset, test: Dataset) -> LabeledSplit:
    """Label 1 iff roi is strictly above the train median; ties map to 0.

    The median is computed on training ROIs only (even count: midpoint of
    the two central order statistics) and the same threshold is applied to
    the test set.
    """
    if len(train) == 0:
        raise TrainingError("cannot binarize labels: training set is empty")
    train_rois = train.rois()
    median_roi = float(np.median(train_rois))
    train_labels = (train_rois > median_roi).astype(np.int64)
    test_labels = (test.rois() > median_roi).astype(np.int64)
    return LabeledSplit(
        train=train,
        test=test,
        median_roi=median_roi,
        train_labels=train_labels,
        test_labels=test_labels,
    )


def with_revenue(record: RawMovieRecord, revenue: float) -> RawMovieRecord:
    """Copy of a record with a different revenue (test helper for leak checks)."""
    return replace(record, revenue=revenue)
