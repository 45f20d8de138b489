"""Feature schema fitting and session featurization.

Two layouts share one fitted schema:

* ``flat``: one row per session (the model sees a single timestep).
  event-type fractions | price mean/max/min | duration | event count |
  distinct-product ratio | category occupancy | brand occupancy
* ``sequence``: one row per event.
  event-type one-hot | category one-hot | brand one-hot | price |
  time since previous event | cumulative session time
"""
import hashlib
import json
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from intentforge.data.events import EVENT_TYPES
from intentforge.errors import FeaturizeError, FitError, InvalidDimensionError

MISSING = "<missing>"
OTHER = "<other>"
MODES = ("flat", "sequence")
DEFAULT_VOCAB_CAP = 500

FLAT_NUMERIC = ("price_mean", "price_max", "price_min", "duration", "event_count", "distinct_product_ratio")
SEQUENCE_NUMERIC = ("price", "time_since_prev", "cumulative_time")


def minmax(value, lo, hi):
    """Min-max scale clamped to [0, 1]; a degenerate range maps to 0."""
    if hi <= lo:
        return np.zeros_like(np.asarray(value, dtype=np.float64))
    return np.clip((np.asarray(value, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)


@dataclass(frozen=True)
class FeatureSchema:
    mode: str
    vocab_cap: int
    category_vocab: tuple  # fitted values followed by MISSING, OTHER
    brand_vocab: tuple
    price_min: float
    price_max: float
    gap_max: float
    duration_max: float
    count_min: float
    count_max: float
    event_types: tuple = EVENT_TYPES
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        index = {
            "category": {v: i for i, v in enumerate(self.category_vocab)},
            "brand": {v: i for i, v in enumerate(self.brand_vocab)},
            "event": {v: i for i, v in enumerate(self.event_types)},
        }
        object.__setattr__(self, "_index", index)

    # -- layout ---------------------------------------------------------

    def _blocks(self, mode=None):
        mode = mode or self.mode
        n_cat, n_brand = len(self.category_vocab), len(self.brand_vocab)
        if mode == "flat":
            return [
                ("event_fraction", len(self.event_types), True),
                ("numeric", len(FLAT_NUMERIC), False),
                ("category", n_cat, True),
                ("brand", n_brand, True),
            ]
        return [
            ("event_type", len(self.event_types), True),
            ("category", n_cat, True),
            ("brand", n_brand, True),
            ("numeric", len(SEQUENCE_NUMERIC), False),
        ]

    def width(self, mode=None):
        return sum(n for _, n, _ in self._blocks(mode))

    @property
    def state_size(self):
        return self.width()

    def onehot_groups(self, mode=None):
        """Column slices whose entries sum to one in every row."""
        out, start = [], 0
        for _, n, grouped in self._blocks(mode):
            if grouped:
                out.append(slice(start, start + n))
            start += n
        return out

    def numeric_columns(self, mode=None):
        start = 0
        for _, n, grouped in self._blocks(mode):
            if not grouped:
                return np.arange(start, start + n)
            start += n
        return np.arange(0)

    def feature_names(self, mode=None):
        mode = mode or self.mode
        names = []
        for block, n, _ in self._blocks(mode):
            if block == "numeric":
                names.extend(FLAT_NUMERIC if mode == "flat" else SEQUENCE_NUMERIC)
            elif block in ("event_fraction", "event_type"):
                names.extend(f"{block}={v}" for v in self.event_types)
            else:
                vocab = self.category_vocab if block == "category" else self.brand_vocab
                names.extend(f"{block}={v}" for v in vocab)
        return names

    # -- persistence ----------------------------------------------------

    def to_dict(self):
        d = asdict(self)
        d.pop("_index")
        d["category_vocab"] = list(self.category_vocab)
        d["brand_vocab"] = list(self.brand_vocab)
        d["event_types"] = list(self.event_types)
        d["state_size"] = self.state_size
        d["feature_names"] = self.feature_names()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            mode=d["mode"], vocab_cap=int(d["vocab_cap"]),
            category_vocab=tuple(d["category_vocab"]), brand_vocab=tuple(d["brand_vocab"]),
            price_min=float(d["price_min"]), price_max=float(d["price_max"]),
            gap_max=float(d["gap_max"]), duration_max=float(d["duration_max"]),
            count_min=float(d["count_min"]), count_max=float(d["count_max"]),
            event_types=tuple(d.get("event_types", EVENT_TYPES)),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def digest(self):
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    # -- lookups ----------------------------------------------------------

    def bucket(self, kind, value):
        index = self._index[kind]
        if kind == "event":
            return index[value]
        if value is None:
            return index[MISSING]
        i = index.get(value)
        return index[OTHER] if i is None else i


def _top_k(counter, k):
    ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(v for v, _ in ranked[:k]) + (MISSING, OTHER)


def build_schema(sessions, vocab_cap=DEFAULT_VOCAB_CAP, mode="flat"):
    """Fit vocabularies and scaling ranges on training sessions only."""
    sessions = [s for s in sessions if s.events]
    if not sessions:
        raise FitError("cannot fit a feature schema on an empty training set")
    if vocab_cap < 0:
        raise FitError(f"vocab_cap must be >= 0, got {vocab_cap}")
    cats, brands = Counter(), Counter()
    prices, gaps, durations, counts = [], [], [], []
    for s in sessions:
        times = [e.event_time for e in s.events]
        for e in s.events:
            if e.category_code is not None:
                cats[e.category_code] += 1
            if e.brand is not None:
                brands[e.brand] += 1
            prices.append(e.price)
        gaps.extend(b - a for a, b in zip(times, times[1:]))
        durations.append(times[-1] - times[0])
        counts.append(len(times))
    return FeatureSchema(
        mode=mode,
        vocab_cap=vocab_cap,
        category_vocab=_top_k(cats, vocab_cap),
        brand_vocab=_top_k(brands, vocab_cap),
        price_min=float(min(prices)),
        price_max=float(max(prices)),
        gap_max=float(max(gaps, default=0)),
        duration_max=float(max(durations)),
        count_min=float(min(counts)),
        count_max=float(max(counts)),
    )


def featurize(session, schema: FeatureSchema, mode=None):
    """One flat row (shape ``(width,)``) or per-event rows (``(n_events, width)``)."""
    mode = mode or schema.mode
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    events = session.events
    if not events:
        raise FeaturizeError(f"session {session.session_id!r} has no events to featurize")
    n = len(events)
    n_ev, n_cat = len(schema.event_types), len(schema.category_vocab)
    ev_idx = np.array([schema.bucket("event", e.event_type) for e in events])
    cat_idx = np.array([schema.bucket("category", e.category_code) for e in events])
    brand_idx = np.array([schema.bucket("brand", e.brand) for e in events])
    price = minmax([e.price for e in events], schema.price_min, schema.price_max)
    times = np.array([e.event_time for e in events], dtype=np.float64)

    if mode == "sequence":
        rows = np.zeros((n, schema.width(mode)))
        r = np.arange(n)
        rows[r, ev_idx] = 1.0
        rows[r, n_ev + cat_idx] = 1.0
        rows[r, n_ev + n_cat + brand_idx] = 1.0
        gaps = np.diff(times, prepend=times[0])
        rows[:, -3] = price
        rows[:, -2] = minmax(gaps, 0.0, schema.gap_max)
        rows[:, -1] = minmax(times - times[0], 0.0, schema.duration_max)
        return rows

    row = np.zeros(schema.width(mode))
    row[:n_ev] = np.bincount(ev_idx, minlength=n_ev) / n
    row[n_ev:n_ev + 6] = [
        price.mean(),
        price.max(),
        price.min(),
        minmax(times[-1] - times[0], 0.0, schema.duration_max),
        minmax(n, schema.count_min, schema.count_max),
        len({e.product_id for e in events}) / n,
    ]
    off = n_ev + 6
    row[off:off + n_cat] = np.bincount(cat_idx, minlength=n_cat) / n
    row[off + n_cat:] = np.bincount(brand_idx, minlength=len(schema.brand_vocab)) / n
    return row


@dataclass
class FeatureMatrix:
    """Featurized sessions. Session ``i`` owns rows ``offsets[i]:offsets[i+1]``."""

    values: np.ndarray
    offsets: np.ndarray
    labels: np.ndarray
    session_ids: list
    user_ids: list
    mode: str
    schema_digest: str

    def __post_init__(self):
        n = len(self.labels)
        if len(self.offsets) != n + 1 or len(self.session_ids) != n or len(self.user_ids) != n:
            raise InvalidDimensionError("session metadata lengths disagree")
        if self.offsets[-1] != self.values.shape[0]:
            raise InvalidDimensionError("offsets do not cover the value rows")

    def __len__(self):
        return len(self.labels)

    @property
    def width(self):
        return self.values.shape[1]

    def model_input(self, max_len=None):
        """Dense ``(sessions, time, width)`` array.

        Sequence-mode sessions keep their last ``max_len`` events and are
        left-padded with zero rows.
        """
        if self.mode == "flat":
            return self.values[:, None, :]
        lengths = np.diff(self.offsets)
        T = int(max_len or (lengths.max() if len(lengths) else 1))
        out = np.zeros((len(self), T, self.width))
        for i, (a, b) in enumerate(zip(self.offsets[:-1], self.offsets[1:])):
            rows = self.values[max(a, b - T):b]
            out[i, T - len(rows):] = rows
        return out

    def subset(self, index):
        index = np.asarray(index, dtype=np.int64)
        parts = [self.values[self.offsets[i]:self.offsets[i + 1]] for i in index]
        lengths = [len(p) for p in parts]
        return FeatureMatrix(
            values=np.concatenate(parts) if parts else np.zeros((0, self.width)),
            offsets=np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64),
            labels=self.labels[index],
            session_ids=[self.session_ids[i] for i in index],
            user_ids=[self.user_ids[i] for i in index],
            mode=self.mode,
            schema_digest=self.schema_digest,
        )


def featurize_sessions(sessions, schema: FeatureSchema, mode=None):
    mode = mode or schema.mode
    blocks = [np.atleast_2d(featurize(s, schema, mode)) for s in sessions]
    lengths = [b.shape[0] for b in blocks]
    return FeatureMatrix(
        values=np.concatenate(blocks) if blocks else np.zeros((0, schema.width(mode))),
        offsets=np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64),
        labels=np.array([s.label for s in sessions], dtype=np.float64),
        session_ids=[s.session_id for s in sessions],
        user_ids=[s.user_id for s in sessions],
        mode=mode,
        schema_digest=schema.digest,
    )
