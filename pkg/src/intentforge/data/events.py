"""Event-log ingestion and sessionization."""
import csv
import io
import os
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import NamedTuple, Optional

from intentforge.errors import SchemaError, SessionIntegrityError

COLUMNS = (
    "event_time", "event_type", "product_id", "category_id", "category_code",
    "brand", "price", "user_id", "user_session",
)
EVENT_TYPES = ("view", "cart", "purchase")
TIME_FORMAT = "%Y-%m-%d %H:%M:%S UTC"


@dataclass(frozen=True)
class RawEvent:
    event_time: int  # unix seconds, UTC
    event_type: str
    product_id: str
    category_id: str
    category_code: Optional[str]
    brand: Optional[str]
    price: float
    user_id: str
    user_session: str


class RowError(NamedTuple):
    line: int
    message: str


@dataclass(frozen=True)
class Session:
    session_id: str
    user_id: str
    events: tuple
    label: int

    @property
    def is_empty(self):
        return not self.events


def parse_timestamp(text):
    """``YYYY-MM-DD HH:MM:SS UTC`` -> unix seconds."""
    if not text.endswith(" UTC") or len(text) != 23:
        raise ValueError(f"bad timestamp {text!r}")
    dt = datetime.strptime(text[:19], "%Y-%m-%d %H:%M:%S").replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(seconds):
    return datetime.fromtimestamp(seconds, tz=timezone.utc).strftime(TIME_FORMAT)


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_events(source):
    """Read a dataset CSV (path, bytes, or stream).

    Returns ``(events, errors)``. Malformed rows never abort the read; each
    becomes a :class:`RowError` with its 1-based physical line number.
    """
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty input: header row missing") from None
        header = [h.strip() for h in header]
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}")
        pos = [header.index(c) for c in COLUMNS]
        events, errors = [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                errors.append(RowError(line, f"expected {len(header)} fields, got {len(row)}"))
                continue
            try:
                events.append(_make_event([row[i] for i in pos]))
            except ValueError as exc:
                errors.append(RowError(line, str(exc)))
        return events, errors
    finally:
        if fh is not source:
            fh.close()


def _make_event(fields):
    time_s, etype, product, cat_id, cat_code, brand, price_s, user, session = fields
    if etype not in EVENT_TYPES:
        raise ValueError(f"unknown event_type {etype!r}")
    try:
        price = float(price_s)
    except ValueError:
        raise ValueError(f"unparseable price {price_s!r}") from None
    if not price >= 0.0 or price == float("inf"):
        raise ValueError(f"price must be a finite non-negative number, got {price_s!r}")
    if not session:
        raise ValueError("empty user_session")
    return RawEvent(
        event_time=parse_timestamp(time_s),
        event_type=etype,
        product_id=product,
        category_id=cat_id,
        category_code=cat_code or None,
        brand=brand or None,
        price=price,
        user_id=user,
        user_session=session,
    )


def sessionize(events):
    """Group by ``user_session``; events time-sorted (stable), sessions ordered by first event time."""
    groups = {}
    for ev in events:
        groups.setdefault(ev.user_session, []).append(ev)
    sessions = []
    for sid, evs in groups.items():
        users = {e.user_id for e in evs}
        if len(users) > 1:
            raise SessionIntegrityError(f"session {sid!r} spans users {sorted(users)}")
        evs.sort(key=lambda e: e.event_time)
        label = int(any(e.event_type == "purchase" for e in evs))
        sessions.append(Session(sid, evs[0].user_id, tuple(evs), label))
    sessions.sort(key=lambda s: s.events[0].event_time)
    return sessions


def truncate_at_purchase(session):
    """Keep only the events strictly before the first purchase; the label is untouched."""
    for i, ev in enumerate(session.events):
        if ev.event_type == "purchase":
            return replace(session, events=session.events[:i])
    return session
