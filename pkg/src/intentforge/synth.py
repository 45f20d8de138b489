"""Synthetic clickstream generator with a planted purchase-propensity model.

Every session is a run of view/cart events. Its true log-odds of purchasing
is a weighted sum of session statistics (cart count, mean log price and its
square, duration in minutes, distinct products) plus an intercept; the label
is drawn from the sigmoid of that. Purchasing sessions get one purchase event appended after
all other events, so the signal-bearing prefix survives truncation.
"""
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from intentforge import container
from intentforge.data.events import COLUMNS, format_timestamp
from intentforge.errors import CalibrationError, ConfigError
from intentforge.metrics import roc_auc

START_TIME = 1569888000  # 2019-10-01 00:00:00 UTC
CALIBRATION_TOLERANCE = 0.005
CALIBRATION_BRACKET = 40.0
CALIBRATION_STEPS = 200


@dataclass
class GeneratorConfig:
    n_users: int = 10_000
    sessions_per_user: float = 2.0
    events_per_session: float = 5.0
    n_brands: int = 40
    n_categories: int = 25
    n_products: int = 2_000
    price_mu: float = 4.5
    price_sigma: float = 1.0
    cart_rate: float = 0.2
    revisit_rate: float = 0.4
    missing_rate: float = 0.15
    mean_gap_seconds: float = 60.0
    span_days: int = 200
    coef_cart: float = 1.5
    coef_log_price: float = -0.8
    coef_duration: float = 0.15
    coef_distinct: float = -0.4
    coef_price_curvature: float = -0.8  # on (mean log price - price_mu)^2; not linearly separable
    intercept: float = 0.0
    target_rate: Optional[float] = 0.1662
    seed: int = 0

    def __post_init__(self):
        for name in ("n_users", "n_brands", "n_categories", "n_products", "span_days"):
            if getattr(self, name) < 1:
                raise ConfigError(f"generator.{name}: must be >= 1, got {getattr(self, name)}")
        for name in ("sessions_per_user", "events_per_session"):
            if getattr(self, name) < 1:
                raise ConfigError(f"generator.{name}: mean must be >= 1, got {getattr(self, name)}")
        for name in ("cart_rate", "revisit_rate", "missing_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"generator.{name}: must lie in [0, 1]")
        if self.target_rate is not None and not 0.0 < self.target_rate < 1.0:
            raise ConfigError(f"generator.target_rate: must lie in (0, 1), got {self.target_rate}")
        if self.price_sigma < 0 or self.mean_gap_seconds <= 0:
            raise ConfigError("generator.price_sigma must be >= 0 and mean_gap_seconds > 0")

    @classmethod
    def from_dict(cls, d, prefix="generator"):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"{prefix}.{unknown[0]}: unknown key")
        return cls(**d)


@dataclass
class Generated:
    csv: bytes
    truth: list  # [{session_id, propensity, label}]
    intercept: float
    config: GeneratorConfig

    @property
    def positive_rate(self):
        return sum(t["label"] for t in self.truth) / len(self.truth)

    def truth_json(self):
        return json.dumps(self.truth, indent=1) + "\n"

    def write(self, directory, csv_name="events.csv", truth_name="truth.json"):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        container.atomic_write(d / csv_name, self.csv)
        container.atomic_write(d / truth_name, self.truth_json().encode("utf-8"))
        return d / csv_name, d / truth_name


def _sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def calibrate_intercept(logits, uniforms, target, tol=CALIBRATION_TOLERANCE):
    """Bisect the intercept so that ``mean(u < sigmoid(logit + b))`` lands within ``tol`` of ``target``."""
    lo, hi = -CALIBRATION_BRACKET, CALIBRATION_BRACKET
    best, best_gap = None, math.inf
    for _ in range(CALIBRATION_STEPS):
        mid = 0.5 * (lo + hi)
        rate = float(np.mean(uniforms < _sigmoid(logits + mid)))
        if abs(rate - target) < best_gap:
            best, best_gap = mid, abs(rate - target)
        if rate == target or hi - lo < 1e-12:
            break
        if rate < target:
            lo = mid
        else:
            hi = mid
    if best_gap <= tol:
        return best
    raise CalibrationError(
        f"could not reach positive rate {target} within +/-{tol} "
        f"({len(logits)} sessions, intercept searched in [-{CALIBRATION_BRACKET}, {CALIBRATION_BRACKET}])"
    )


def _session_stats(events, price_mu):
    n_cart = sum(1 for e in events if e[1] == "cart")
    mean_log_price = sum(math.log(e[3] + 1.0) for e in events) / len(events)
    duration_min = (events[-1][0] - events[0][0]) / 60.0
    distinct = len({e[2] for e in events})
    centered = mean_log_price - price_mu
    return n_cart, centered, duration_min, distinct, centered * centered


def generate(config: GeneratorConfig):
    """Draw users, sessions and events; returns a :class:`Generated` bundle. Deterministic in ``config.seed``."""
    c = config
    rng = np.random.default_rng(c.seed)

    product_cat = rng.integers(0, c.n_categories, c.n_products)
    product_brand = rng.integers(0, c.n_brands, c.n_products)
    product_price = np.round(rng.lognormal(c.price_mu, c.price_sigma, c.n_products), 2)
    no_code = rng.random(c.n_products) < c.missing_rate
    no_brand = rng.random(c.n_products) < c.missing_rate

    sessions = []  # (session_id, user_id, [(t, type, product, price)])
    span = c.span_days * 86400
    for u in range(c.n_users):
        user_id = str(500_000_000 + u)
        for _ in range(1 + rng.poisson(c.sessions_per_user - 1.0)):
            sid = f"s{len(sessions):08d}"
            n_events = int(rng.geometric(1.0 / c.events_per_session))
            cart_p = rng.beta(1.0, (1.0 - c.cart_rate) / c.cart_rate) if 0 < c.cart_rate < 1 else c.cart_rate
            t = START_TIME + int(rng.integers(0, span))
            seen, events = [], []
            for k in range(n_events):
                if k:
                    t += int(rng.exponential(c.mean_gap_seconds))
                if seen and rng.random() < c.revisit_rate:
                    prod = seen[int(rng.integers(len(seen)))]
                else:
                    prod = int(rng.integers(c.n_products))
                    seen.append(prod)
                etype = "cart" if rng.random() < cart_p else "view"
                events.append((t, etype, prod, float(product_price[prod])))
            sessions.append((sid, user_id, events))

    coefs = np.array([c.coef_cart, c.coef_log_price, c.coef_duration, c.coef_distinct, c.coef_price_curvature])
    stats = np.array([_session_stats(ev, c.price_mu) for _, _, ev in sessions], dtype=np.float64)
    logits = stats @ coefs
    uniforms = rng.random(len(sessions))
    if c.target_rate is None:
        intercept = float(c.intercept)
    else:
        intercept = calibrate_intercept(logits, uniforms, c.target_rate)
    propensity = _sigmoid(logits + intercept)
    labels = uniforms < propensity

    rows, truth = [], []
    for (sid, user_id, events), p, y in zip(sessions, propensity, labels):
        if y:
            t_last, _, prod, price = events[-1]
            carted = [e for e in events if e[1] == "cart"]
            if carted:
                prod, price = carted[-1][2], carted[-1][3]
            events = events + [(t_last + 1 + int(rng.exponential(c.mean_gap_seconds)), "purchase", prod, price)]
        for k, (t, etype, prod, price) in enumerate(events):
            rows.append((t, len(truth), k, etype, prod, price, user_id, sid))
        truth.append({"session_id": sid, "propensity": float(p), "label": int(y)})

    rows.sort(key=lambda r: r[:3])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for t, _, _, etype, prod, price, user_id, sid in rows:
        cat = int(product_cat[prod])
        w.writerow([
            format_timestamp(t), etype, str(1_000_000 + prod), str(2_000_000_000 + cat),
            "" if no_code[prod] else f"electronics.cat{cat:03d}",
            "" if no_brand[prod] else f"brand{int(product_brand[prod]):03d}",
            f"{price:.2f}", user_id, sid,
        ])
    return Generated(buf.getvalue().encode("utf-8"), truth, intercept, config)


def bayes_auc(truth):
    """AUC of the true propensities against the realized labels: the ceiling for any learned model."""
    if isinstance(truth, (str, Path)):
        truth = json.loads(Path(truth).read_text(encoding="utf-8"))
    return roc_auc([t["propensity"] for t in truth], [t["label"] for t in truth]).auc


def config_dict(config: GeneratorConfig):
    return asdict(config)
