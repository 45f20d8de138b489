"""User-disjoint splitting, class weights and the end-to-end preparation step."""
from dataclasses import dataclass, field

import numpy as np

from intentforge.data.events import parse_events, sessionize, truncate_at_purchase
from intentforge.data.features import (
    DEFAULT_VOCAB_CAP,
    FeatureMatrix,
    FeatureSchema,
    build_schema,
    featurize_sessions,
)
from intentforge.errors import DegenerateLabelsError, SplitError

PARTS = ("train", "validation", "test")
DEFAULT_FRACTIONS = (0.8, 0.1, 0.1)


def split_by_user(sessions, fractions=DEFAULT_FRACTIONS, seed=0):
    """Assign whole users to train/validation/test by cumulative session quota.

    Users are taken in first-appearance order, shuffled by ``seed``, and each
    lands in the part whose session quota is still open. Every part receives
    at least one user. Returns three lists of sessions; within a part,
    sessions are grouped by user in shuffled order.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    by_user = {}
    for s in sessions:
        by_user.setdefault(s.user_id, []).append(s)
    users = list(by_user)
    if len(users) < 3:
        raise SplitError(f"need at least 3 distinct users to split, got {len(users)}")

    order = np.random.default_rng(seed).permutation(len(users))
    total = sum(len(v) for v in by_user.values())
    bounds = np.rint(np.cumsum(fractions) * total).astype(int)
    parts = ([], [], [])
    seen, part = 0, 0
    for k, u in enumerate(order):
        while part < 2 and seen >= bounds[part]:
            part += 1
        remaining = len(users) - k
        part = max(part, 3 - remaining)  # leave one user for each later part
        parts[part].extend(by_user[users[u]])
        seen += len(by_user[users[u]])
    return parts


def class_weights(labels):
    """``N / (2 * N_c)`` per class, returned as ``(w0, w1)``."""
    y = np.asarray(labels)
    n1 = int(np.count_nonzero(y > 0.5))
    n0 = y.size - n1
    if n0 == 0 or n1 == 0:
        raise DegenerateLabelsError("class weights need both classes present")
    return y.size / (2.0 * n0), y.size / (2.0 * n1)


@dataclass
class DatasetSplit:
    train: FeatureMatrix
    validation: FeatureMatrix
    test: FeatureMatrix
    schema: FeatureSchema
    fractions: tuple = DEFAULT_FRACTIONS
    seed: int = 0
    report: dict = field(default_factory=dict)

    def parts(self):
        return {"train": self.train, "validation": self.validation, "test": self.test}


def prepare_sessions(sessions, fractions=DEFAULT_FRACTIONS, seed=0, vocab_cap=DEFAULT_VOCAB_CAP, mode="flat"):
    """Truncate, split, fit the schema on train, and featurize every part."""
    truncated = [truncate_at_purchase(s) for s in sessions]
    kept = [s for s in truncated if not s.is_empty]
    excluded = [s.session_id for s in truncated if s.is_empty]
    train, val, test = split_by_user(kept, fractions, seed)
    schema = build_schema(train, vocab_cap=vocab_cap, mode=mode)
    mats = [featurize_sessions(p, schema) for p in (train, val, test)]
    report = {
        "sessions_total": len(sessions),
        "sessions_kept": len(kept),
        "excluded_empty_after_truncation": len(excluded),
        "excluded_session_ids": excluded,
    }
    return DatasetSplit(*mats, schema=schema, fractions=tuple(fractions), seed=seed, report=report)


def prepare_file(source, fractions=DEFAULT_FRACTIONS, seed=0, vocab_cap=DEFAULT_VOCAB_CAP, mode="flat"):
    """parse -> sessionize -> :func:`prepare_sessions`; row errors land in the report."""
    events, errors = parse_events(source)
    split = prepare_sessions(sessionize(events), fractions, seed, vocab_cap, mode)
    split.report["row_errors"] = [{"line": e.line, "message": e.message} for e in errors]
    return split
