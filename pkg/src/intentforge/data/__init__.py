from intentforge.data.events import (
    COLUMNS,
    EVENT_TYPES,
    RawEvent,
    RowError,
    Session,
    parse_events,
    sessionize,
    truncate_at_purchase,
)
from intentforge.data.features import (
    MISSING,
    OTHER,
    FeatureMatrix,
    FeatureSchema,
    build_schema,
    featurize,
    featurize_sessions,
)
from intentforge.data.split import (
    DatasetSplit,
    class_weights,
    prepare_file,
    prepare_sessions,
    split_by_user,
)

__all__ = [
    "COLUMNS", "EVENT_TYPES", "RawEvent", "RowError", "Session",
    "parse_events", "sessionize", "truncate_at_purchase",
    "MISSING", "OTHER", "FeatureMatrix", "FeatureSchema", "build_schema",
    "featurize", "featurize_sessions",
    "DatasetSplit", "class_weights", "prepare_file", "prepare_sessions", "split_by_user",
]
