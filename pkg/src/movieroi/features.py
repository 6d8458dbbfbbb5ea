"""Feature engineering: the 11 feature groups a movie carries into the model.

Feature groups and their columns:

1.  Content        is_adult, is_english, languages_count, movie_runtime,
                   the raw genome block, one-hot genres
2.  Publicity      is_collection, is_homepage, is_tagline, keywords_count
3.  Audience       popularity, vote_average, vote_count, metacritic_score,
    Perception     imdb_rating, imdb_votes -- carried for analysis but
                   flagged out of the model (unknown before release)
4.  Release Date   release_month, movies_per_month, budget_fraction,
                   movie_expense_score (competition within the same
                   calendar year+month)
5.  Finance        time_discounted_budget
6-10. entity       mean ROI of each attached entity's recent prior movies
    embeddings     (production houses, writers, directors, producers,
                   main cast), strictly earlier than the movie itself
11. Support Staff  female_count, male_count, crew_length

Vocabulary, imputation medians and the embedding fallback are fitted on
training data only and reused verbatim for test/prediction rows.
"""

from __future__ import annotations

import csv
from bisect import bisect_left
from dataclasses import dataclass, replace
from datetime import date
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset, MovieRecord, RawMovieRecord, annotate_release_parts
from .errors import NotFittedError, SchemaError

GROUP_CONTENT = "Content"
GROUP_PUBLICITY = "Publicity"
GROUP_AUDIENCE = "Audience Perception"
GROUP_RELEASE = "Release Date"
GROUP_FINANCE = "Finance"
GROUP_PRODUCTION_HOUSE = "Production House"
GROUP_WRITERS = "Writers"
GROUP_DIRECTORS = "Directors"
GROUP_PRODUCERS = "Producers"
GROUP_MAIN_CAST = "Main Cast"
GROUP_SUPPORT = "Support Staff"

GROUP_ORDER = [
    GROUP_CONTENT,
    GROUP_PUBLICITY,
    GROUP_AUDIENCE,
    GROUP_RELEASE,
    GROUP_FINANCE,
    GROUP_PRODUCTION_HOUSE,
    GROUP_WRITERS,
    GROUP_DIRECTORS,
    GROUP_PRODUCERS,
    GROUP_MAIN_CAST,
    GROUP_SUPPORT,
]

# role name -> (record field with entity ids, feature column name, group)
ENTITY_ROLES = {
    "production_house": ("production_house_ids", "production_house_embedding", GROUP_PRODUCTION_HOUSE),
    "writer": ("writer_ids", "writers_embedding", GROUP_WRITERS),
    "director": ("director_ids", "directors_embedding", GROUP_DIRECTORS),
    "producer": ("producer_ids", "producers_embedding", GROUP_PRODUCERS),
    "main_cast": ("main_cast_ids", "main_cast_embedding", GROUP_MAIN_CAST),
}


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    group: str
    model_included: bool = True


@dataclass(frozen=True)
class EmbeddingConfig:
    """How entity performance history is folded into one number per role."""

    max_history: int = 5
    fallback: float = 0.0

    def __post_init__(self):
        if self.max_history < 1:
            raise ValueError("max_history must be >= 1")


@dataclass(frozen=True)
class DiscountConfig:
    """Compound a budget to a fixed base year so eras are comparable."""

    base_year: int = 2011
    annual_rate: float = 0.05

    def __post_init__(self):
        if self.annual_rate <= -1:
            raise ValueError("annual_rate must be > -1")


class FeatureMatrix:
    """Dense feature matrix with per-column name/group/model metadata."""

    def __init__(self, values, columns: Sequence[ColumnMeta], row_ids: Sequence[str], roi=None):
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("feature values must be a 2-D matrix")
        self.columns = list(columns)
        self.row_ids = list(row_ids)
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("feature column names must be unique")
        if self.values.shape[1] != len(self.columns):
            raise ValueError(
                f"matrix width {self.values.shape[1]} != column metadata length {len(self.columns)}"
            )
        if self.values.shape[0] != len(self.row_ids):
            raise ValueError("row_ids length must match matrix height")
        self.roi = None if roi is None else np.asarray(roi, dtype=np.float64)
        self.imputation_medians: dict[str, float] | None = None

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(name)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_index(name)]

    def model_mask(self) -> np.ndarray:
        return np.array([c.model_included for c in self.columns], dtype=bool)

    def model_view(self) -> "FeatureMatrix":
        """Projection onto the model-included columns."""
        mask = self.model_mask()
        out = FeatureMatrix(
            self.values[:, mask],
            [c for c in self.columns if c.model_included],
            self.row_ids,
            roi=self.roi,
        )
        return out

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.column_index(n) for n in names]
        return FeatureMatrix(
            self.values[:, idx], [self.columns[i] for i in idx], self.row_ids, roi=self.roi
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["row_id"] + self.names)
            for rid, row in zip(self.row_ids, self.values):
                writer.writerow(
                    [rid] + ["" if np.isnan(v) else repr(float(v)) for v in row]
                )

    def write_meta_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["name", "group", "model_included"])
            for c in self.columns:
                writer.writerow([c.name, c.group, "true" if c.model_included else "false"])

    @classmethod
    def from_csv(cls, values_path, meta_path) -> "FeatureMatrix":
        with open(meta_path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if header != ["name", "group", "model_included"]:
                raise SchemaError(f"{meta_path}: unexpected metadata header {header}")
            columns = [ColumnMeta(n, g, inc == "true") for n, g, inc in reader]
        with open(values_path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if header[:1] != ["row_id"] or header[1:] != [c.name for c in columns]:
                raise SchemaError(f"{values_path}: header does not match {meta_path}")
            row_ids, rows = [], []
            for row in reader:
                row_ids.append(row[0])
                rows.append([float(v) if v != "" else np.nan for v in row[1:]])
        values = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(columns)))
        return cls(values, columns, row_ids)


class EntityHistory:
    """Per-entity chronological (release_date, roi) pairs.

    Built from every movie whose ROI is known; queries filter to dates
    strictly before the movie being featurized, so the movie itself (and
    anything released on or after its date) never leaks in.
    """

    def __init__(self, entries: Mapping[str, tuple[list[date], list[float]]] | None = None):
        self._entries: dict[str, tuple[list[date], list[float]]] = dict(entries or {})

    @classmethod
    def from_records(cls, records: Iterable[MovieRecord], id_field: str) -> "EntityHistory":
        raw: dict[str, list[tuple[date, float]]] = {}
        for rec in records:
            for entity in getattr(rec, id_field):
                raw.setdefault(entity, []).append((rec.release_date, rec.roi))
        entries = {}
        for entity, pairs in raw.items():
            pairs.sort(key=lambda p: p[0])  # stable: same-date order = input order
            entries[entity] = ([p[0] for p in pairs], [p[1] for p in pairs])
        return cls(entries)

    def entities(self) -> list[str]:
        return sorted(self._entries)

    def appearances(self, entity_id: str) -> list[tuple[date, float]]:
        dates, rois = self._entries.get(entity_id, ([], []))
        return list(zip(dates, rois))

    def prior_rois(self, entity_id: str, as_of: date, max_history: int) -> list[float]:
        """ROIs of the entity's up-to-max_history most recent movies before as_of."""
        dates, rois = self._entries.get(entity_id, ([], []))
        cut = bisect_left(dates, as_of)
        return rois[max(0, cut - max_history):cut]

    def without_dates_from(self, as_of: date) -> "EntityHistory":
        """Copy with every appearance dated >= as_of removed (leak probe)."""
        entries = {}
        for entity, (dates, rois) in self._entries.items():
            cut = bisect_left(dates, as_of)
            if cut:
                entries[entity] = (dates[:cut], rois[:cut])
        return EntityHistory(entries)

    def as_dict(self) -> dict[str, list[list]]:
        return {
            entity: [[d.isoformat(), r] for d, r in zip(dates, rois)]
            for entity, (dates, rois) in sorted(self._entries.items())
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, list]) -> "EntityHistory":
        entries = {}
        for entity, pairs in payload.items():
            entries[entity] = (
                [date.fromisoformat(d) for d, _ in pairs],
                [float(r) for _, r in pairs],
            )
        return cls(entries)


def build_entity_histories(records: Iterable[MovieRecord]) -> dict[str, EntityHistory]:
    """One EntityHistory per role (production_house, writer, ...)."""
    records = list(records)
    return {
        role: EntityHistory.from_records(records, id_field)
        for role, (id_field, _, _) in ENTITY_ROLES.items()
    }


def entity_embedding(
    entity_ids: Sequence[str], history: EntityHistory, as_of: date, cfg: EmbeddingConfig
) -> float:
    """Mean over entities of the mean ROI of their recent prior movies.

    Entities with no history before as_of are skipped; if none has any,
    or the id list is empty, the configured fallback is returned.
    """
    means = []
    for entity in entity_ids:
        prior = history.prior_rois(entity, as_of, cfg.max_history)
        if prior:
            means.append(float(np.mean(prior)))
    if not means:
        return cfg.fallback
    return float(np.mean(means))


def time_discounted_budget(budget: float, release_year: int, cfg: DiscountConfig) -> float:
    """budget * (1 + annual_rate) ** (base_year - release_year); budget must be > 0."""
    return budget * (1.0 + cfg.annual_rate) ** (cfg.base_year - release_year)


def _optional(value) -> float:
    return np.nan if value is None else float(value)


def build_content_features(
    records: Sequence[MovieRecord],
    genre_vocab: Sequence[str] | None = None,
    genome_dim: int | None = None,
) -> FeatureMatrix:
    """Content block: flags, runtime, raw genome scores, one-hot genres.

    Unknown genres (not in the vocabulary) map to all-zero indicators.
    """
    if genre_vocab is None:
        genre_vocab = sorted({g for rec in records for g in rec.genres})
    if genome_dim is None:
        genome_dim = records[0].genome.size if records else 0
    names = ["is_adult", "is_english", "languages_count", "movie_runtime"]
    names += [f"genome_{i}" for i in range(genome_dim)]
    names += [f"genre_{g}" for g in genre_vocab]
    values = np.zeros((len(records), len(names)))
    genre_pos = {g: i for i, g in enumerate(genre_vocab)}
    for i, rec in enumerate(records):
        values[i, 0] = float(rec.is_adult)
        values[i, 1] = float(rec.is_english)
        values[i, 2] = _optional(rec.languages_count)
        values[i, 3] = _optional(rec.movie_runtime)
        values[i, 4:4 + genome_dim] = rec.genome
        for g in rec.genres:
            j = genre_pos.get(g)
            if j is not None:
                values[i, 4 + genome_dim + j] = 1.0
    columns = [ColumnMeta(n, GROUP_CONTENT) for n in names]
    return FeatureMatrix(values, columns, [r.movie_id for r in records])


def build_publicity_features(records: Sequence[MovieRecord]) -> FeatureMatrix:
    values = np.zeros((len(records), 4))
    for i, rec in enumerate(records):
        values[i] = (
            float(rec.is_collection),
            float(rec.is_homepage),
            float(rec.is_tagline),
            _optional(rec.keywords_count),
        )
    names = ["is_collection", "is_homepage", "is_tagline", "keywords_count"]
    return FeatureMatrix(values, [ColumnMeta(n, GROUP_PUBLICITY) for n in names],
                         [r.movie_id for r in records])


def build_audience_features(records: Sequence[MovieRecord]) -> FeatureMatrix:
    """Audience perception block; flagged out of the model, missing kept as NaN."""
    names = ["popularity", "vote_average", "vote_count", "metacritic_score",
             "imdb_rating", "imdb_votes"]
    values = np.zeros((len(records), 6))
    for i, rec in enumerate(records):
        values[i] = tuple(_optional(getattr(rec, n)) for n in names)
    columns = [ColumnMeta(n, GROUP_AUDIENCE, model_included=False) for n in names]
    return FeatureMatrix(values, columns, [r.movie_id for r in records])


def build_release_features(records: Sequence[MovieRecord]) -> FeatureMatrix:
    """Competition at release time, within the same (year, month) group.

    budget_fraction = budget / sum of group budgets; movie_expense_score =
    budget / mean group budget. Groups always contain the movie itself.
    """
    totals: dict[tuple[int, int], list[float]] = {}
    for rec in records:
        key = (rec.release_year, rec.release_month)
        bucket = totals.setdefault(key, [0, 0.0])
        bucket[0] += 1
        bucket[1] += rec.budget
    values = np.zeros((len(records), 4))
    for i, rec in enumerate(records):
        count, budget_sum = totals[(rec.release_year, rec.release_month)]
        values[i, 0] = rec.release_month
        values[i, 1] = count
        values[i, 2] = rec.budget / budget_sum
        values[i, 3] = rec.budget / (budget_sum / count)
    names = ["release_month", "movies_per_month", "budget_fraction", "movie_expense_score"]
    return FeatureMatrix(values, [ColumnMeta(n, GROUP_RELEASE) for n in names],
                         [r.movie_id for r in records])


def build_finance_features(
    records: Sequence[MovieRecord], cfg: DiscountConfig
) -> FeatureMatrix:
    values = np.array(
        [[time_discounted_budget(rec.budget, rec.release_year, cfg)] for rec in records]
    ).reshape(len(records), 1)
    return FeatureMatrix(values, [ColumnMeta("time_discounted_budget", GROUP_FINANCE)],
                         [r.movie_id for r in records])


def build_entity_features(
    records: Sequence[MovieRecord],
    histories: Mapping[str, EntityHistory],
    cfg: EmbeddingConfig,
) -> FeatureMatrix:
    """Five embedding columns, one per role, from strictly-prior performance."""
    values = np.zeros((len(records), len(ENTITY_ROLES)))
    columns = []
    for j, (role, (id_field, col_name, group)) in enumerate(ENTITY_ROLES.items()):
        history = histories[role]
        for i, rec in enumerate(records):
            values[i, j] = entity_embedding(
                getattr(rec, id_field), history, rec.release_date, cfg
            )
        columns.append(ColumnMeta(col_name, group))
    return FeatureMatrix(values, columns, [r.movie_id for r in records])


def build_support_staff_features(records: Sequence[MovieRecord]) -> FeatureMatrix:
    values = np.zeros((len(records), 3))
    for i, rec in enumerate(records):
        values[i] = (_optional(rec.female_count), _optional(rec.male_count),
                     _optional(rec.crew_length))
    names = ["female_count", "male_count", "crew_length"]
    return FeatureMatrix(values, [ColumnMeta(n, GROUP_SUPPORT) for n in names],
                         [r.movie_id for r in records])


def assemble(
    blocks: Sequence[FeatureMatrix],
    roi_column=None,
    imputation_medians: Mapping[str, float] | None = None,
) -> FeatureMatrix:
    """Concatenate blocks horizontally and impute missing model values.

    Medians are computed from this matrix when ``imputation_medians`` is
    None (the training fit) and applied as given otherwise, so test rows
    are always filled with training medians. Audience (non-model) columns
    keep their NaNs.
    """
    if not blocks:
        raise ValueError("assemble needs at least one block")
    row_ids = blocks[0].row_ids
    for b in blocks[1:]:
        if b.row_ids != row_ids:
            raise ValueError("blocks disagree on row ids or row order")
    values = np.hstack([b.values for b in blocks])
    columns = [c for b in blocks for c in b.columns]
    matrix = FeatureMatrix(values, columns, row_ids, roi=roi_column)

    if imputation_medians is None:
        imputation_medians = {}
        for j, col in enumerate(matrix.columns):
            if not col.model_included:
                continue
            column = matrix.values[:, j]
            if np.isnan(column).any():
                median = float(np.nanmedian(column))
                if np.isnan(median):
                    raise ValueError(
                        f"column {col.name!r} is entirely missing; cannot fit an imputation median"
                    )
                imputation_medians[col.name] = median
    for name, median in imputation_medians.items():
        j = matrix.column_index(name)
        column = matrix.values[:, j]
        column[np.isnan(column)] = median

    for j, col in enumerate(matrix.columns):
        if col.model_included and np.isnan(matrix.values[:, j]).any():
            raise ValueError(f"model column {col.name!r} still has missing values after imputation")

    matrix.imputation_medians = dict(imputation_medians)
    return matrix


class FeatureBuilder:
    """Fits train-only state (genre vocabulary, embedding fallback,
    imputation medians) and builds feature matrices for any record set."""

    def __init__(self, discount: DiscountConfig | None = None,
                 embedding: EmbeddingConfig | None = None):
        self.discount = discount or DiscountConfig()
        self.embedding = embedding or EmbeddingConfig()
        self.genre_vocab: list[str] | None = None
        self.genome_dim: int | None = None
        self.imputation_medians: dict[str, float] | None = None

    @property
    def fitted(self) -> bool:
        return self.genre_vocab is not None

    def fit_build(self, train: Dataset, histories: Mapping[str, EntityHistory]) -> FeatureMatrix:
        """Fit vocabulary/fallback/medians on the training set and build its matrix."""
        self.genre_vocab = sorted({g for rec in train for g in rec.genres})
        self.genome_dim = train.genome_dim
        rois = train.rois()
        self.embedding = replace(
            self.embedding, fallback=float(np.mean(rois)) if len(rois) else 0.0
        )
        matrix = self._build(list(train.records), histories, roi=rois, medians=None)
        self.imputation_medians = matrix.imputation_medians
        return matrix

    def build(
        self,
        records: Dataset | Sequence[MovieRecord] | Sequence[RawMovieRecord],
        histories: Mapping[str, EntityHistory],
        roi=None,
    ) -> FeatureMatrix:
        """Build a matrix with the fitted state (test or prediction rows)."""
        if not self.fitted:
            raise NotFittedError("FeatureBuilder.build called before fit_build")
        recs = list(records)
        recs = [r if isinstance(r, MovieRecord) else annotate_release_parts(r) for r in recs]
        if recs and self.genome_dim is not None and recs[0].genome.size != self.genome_dim:
            raise SchemaError(
                f"genome dimensionality {recs[0].genome.size} does not match "
                f"the fitted dimensionality {self.genome_dim}"
            )
        return self._build(recs, histories, roi=roi, medians=self.imputation_medians)

    def _build(self, records, histories, roi, medians) -> FeatureMatrix:
        blocks = [
            build_content_features(records, self.genre_vocab, self.genome_dim),
            build_publicity_features(records),
            build_audience_features(records),
            build_release_features(records),
            build_finance_features(records, self.discount),
            build_entity_features(records, histories, self.embedding),
            build_support_staff_features(records),
        ]
        return assemble(blocks, roi_column=roi, imputation_medians=medians)
