"""
Event records to inference inputs: K-means regions, per-region daily count
series, Gamma link priors from inverse cross-region distances, source
detection and silent-region exclusion.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import COUNT, Network, ObservationMatrix

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
MAX_PAIRS = 100_000


class EventError(ValueError):
    pass


@dataclass(frozen=True)
class EventRecord:
    lat: float
    lon: float
    date: dt.date


def _parse_row(row) -> EventRecord:
    lat, lon = float(row["lat"]), float(row["lon"])
    if not (-90.0 <= lat <= 90.0):
        raise ValueError(f"latitude {lat} outside [-90, 90]")
    if not (-180.0 <= lon <= 180.0):
        raise ValueError(f"longitude {lon} outside [-180, 180]")
    return EventRecord(lat, lon, dt.date.fromisoformat(row["date"].strip()))


def load_events(path) -> list[EventRecord]:
    """Read a ``lat,lon,date`` CSV; every bad row is reported by line number."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"lat", "lon", "date"} - set(reader.fieldnames or [])
        if missing:
            raise EventError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
        events, errors = [], []
        for row in reader:
            try:
                events.append(_parse_row(row))
            except (ValueError, TypeError) as exc:
                errors.append(f"line {reader.line_num}: {exc}")
    if errors:
        raise EventError(f"{path}: " + "; ".join(errors))
    return events


def save_events(path, events) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat", "lon", "date"])
        for e in events:
            w.writerow([repr(e.lat), repr(e.lon), e.date.isoformat()])


def _coords(events) -> np.ndarray:
    return np.array([[e.lat, e.lon] for e in events], dtype=float).reshape(-1, 2)


@dataclass(eq=False)
class RegionAssignment:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: list

    def to_dict(self, names=None) -> dict:
        names = names or region_names(self.k)
        return {
            "k": self.k,
            "regions": [{"name": n, "lat": float(c[0]), "lon": float(c[1]),
                         "size": int(np.sum(self.labels == r))}
                        for r, (n, c) in enumerate(zip(names, self.centroids))],
            "labels": [int(x) + 1 for x in self.labels],
        }


def region_names(k: int) -> list[str]:
    return [f"R{r + 1}" for r in range(k)]


def _kmeans_pp(X, k, rng):
    centers = [X[rng.integers(len(X))]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(len(X), p=d2 / total) if total > 0 else rng.integers(len(X))
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(X, centers, max_iter):
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for r in range(len(centers)):
            members = X[labels == r]
            if len(members):
                centers[r] = members.mean(axis=0)
            else:
                # refill an empty cluster with the point farthest from its centre
                far = int(np.argmax(d2[np.arange(len(X)), labels]))
                centers[r] = X[far]
    return centers, labels, history


def cluster_regions(events, k: int = 8, seed: int = 0, max_iter: int = 100,
                    n_init: int = 10) -> RegionAssignment:
    """K-means on raw (lat, lon) with k-means++ seeding; best of ``n_init`` restarts.

    Regions are numbered by increasing centroid longitude (then latitude).
    """
    X = _coords(events)
    if len(X) < k:
        raise EventError(f"need at least {k} events to form {k} regions, got {len(X)}")
    if len(np.unique(X, axis=0)) < k:
        raise EventError(f"fewer than {k} distinct locations")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers, labels, hist = _lloyd(X, _kmeans_pp(X, k, rng).copy(), max_iter)
        if best is None or hist[-1] < best[2][-1]:
            best = (centers, labels, hist)
    centers, labels, hist = best
    order = np.lexsort((centers[:, 0], centers[:, 1]))
    remap = np.empty(k, dtype=int)
    remap[order] = np.arange(k)
    return RegionAssignment(k=k, centroids=centers[order], labels=remap[labels], inertia_history=hist)


def build_series(events, regions: RegionAssignment, start: dt.date | None = None,
                 end: dt.date | None = None) -> ObservationMatrix:
    """Daily count of distinct reporting locations per region over [start, end].

    Events outside the range are dropped.
    """
    start = start or min(e.date for e in events)
    end = end or max(e.date for e in events)
    if end < start:
        raise EventError(f"empty day range {start} .. {end}")
    T = (end - start).days + 1
    seen = set()
    counts = np.zeros((regions.k, T))
    for e, r in zip(events, regions.labels):
        if not start <= e.date <= end:
            continue
        key = (int(r), e.date, e.lat, e.lon)
        if key in seen:
            continue
        seen.add(key)
        counts[r, (e.date - start).days] += 1
    return ObservationMatrix(counts, COUNT, region_names(regions.k))


def haversine_km(p, q) -> np.ndarray:
    """Great-circle distance between (lat, lon) degree arrays, broadcasting."""
    p, q = np.radians(p), np.radians(q)
    dlat = q[..., 0] - p[..., 0]
    dlon = q[..., 1] - p[..., 1]
    h = np.sin(dlat / 2) ** 2 + np.cos(p[..., 0]) * np.cos(q[..., 0]) * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def fit_gamma_moments(x) -> tuple[float, float]:
    """Method-of-moments Gamma(shape, scale): a = mean^2/var, b = var/mean.

    Zero variance falls back to a = 1, b = mean.
    """
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    v = float(x.var())
    if v <= 0.0 or not math.isfinite(v):
        log.warning("zero-variance sample in Gamma fit; using shape 1, scale %g", m)
        return 1.0, m
    return m * m / v, v / m


def fit_gamma_hyperparams(events, regions: RegionAssignment, seed: int = 0,
                          max_pairs: int = MAX_PAIRS) -> tuple[np.ndarray, np.ndarray]:
    """Gamma prior per region pair from inverse distances (1/km) between their locations."""
    X = _coords(events)
    k = regions.k
    points = [np.unique(X[regions.labels == r], axis=0) for r in range(k)]
    for r, pts in enumerate(points):
        if len(pts) == 0:
            raise EventError(f"region {r + 1} has no events")
    rng = np.random.default_rng(seed)
    a = np.full((k, k), np.nan)
    b = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i + 1, k):
            P, Q = points[i], points[j]
            if len(P) * len(Q) > max_pairs:
                d = haversine_km(P[rng.integers(len(P), size=max_pairs)],
                                 Q[rng.integers(len(Q), size=max_pairs)])
            else:
                d = haversine_km(P[:, None, :], Q[None, :, :]).ravel()
            d = d[d > 0]
            a[i, j], b[i, j] = fit_gamma_moments(1.0 / d)
            a[j, i], b[j, i] = a[i, j], b[i, j]
    return a, b


def first_active_day(obs: ObservationMatrix) -> np.ndarray:
    """1-based first nonzero step per series (0 for all-zero series)."""
    nz = obs.data > 0
    return np.where(nz.any(axis=1), nz.argmax(axis=1) + 1, 0)


def detect_sources(obs: ObservationMatrix) -> list[int]:
    """Series whose first nonzero step equals the earliest one overall."""
    first = first_active_day(obs)
    if not np.any(first):
        raise EventError("all series are zero; no source can be detected")
    earliest = first[first > 0].min()
    return [int(i) for i in np.flatnonzero(first == earliest)]


def exclude_silent_regions(obs: ObservationMatrix, threshold: float = 1) -> np.ndarray:
    """Boolean keep-mask: series whose total count reaches ``threshold``."""
    return obs.data.sum(axis=1) >= threshold


def build_network(hyper_a, hyper_b, sources, source_times, labels=()) -> Network:
    """All-pairs candidate sets: every non-source may be infected by any other node."""
    k = len(hyper_a)
    parents = [() if i in sources else tuple(j for j in range(k) if j != i) for i in range(k)]
    a = np.full((k, k), np.nan)
    b = np.full((k, k), np.nan)
    for i, ps in enumerate(parents):
        for j in ps:
            a[i, j], b[i, j] = hyper_a[i, j], hyper_b[i, j]
    return Network(k, parents, sources, a, b, source_times=source_times, labels=labels)


@dataclass(eq=False)
class IngestResult:
    regions: RegionAssignment
    net: Network
    obs: ObservationMatrix
    keep: np.ndarray
    start: dt.date
    end: dt.date

    def regions_dict(self) -> dict:
        d = self.regions.to_dict()
        d["kept"] = [bool(x) for x in self.keep]
        d["start"] = self.start.isoformat()
        d["end"] = self.end.isoformat()
        return d


def prepare_inputs(events, k: int = 8, seed: int = 0, start=None, end=None,
                   silent_threshold: float = 1) -> IngestResult:
    """Full pipeline. The date filter is applied before clustering-independent steps."""
    regions = cluster_regions(events, k, seed)
    start = start or min(e.date for e in events)
    end = end or max(e.date for e in events)
    in_range = [e for e in events if start <= e.date <= end]
    if not in_range:
        raise EventError(f"no events between {start} and {end}")
    full = build_series(events, regions, start, end)
    keep = exclude_silent_regions(full, silent_threshold)
    if keep.sum() < 2:
        raise EventError("fewer than two regions remain after excluding silent ones")
    a, b = fit_gamma_hyperparams(events, regions, seed)
    kept = np.flatnonzero(keep)
    obs = full.subset(kept)
    sources = detect_sources(obs)
    first = first_active_day(obs)
    ix = np.ix_(kept, kept)
    net = build_network(a[ix], b[ix], sources, [int(first[s]) for s in sources],
                        labels=[full.labels[r] for r in kept])
    return IngestResult(regions=regions, net=net, obs=obs, keep=keep, start=start, end=end)


# -- bundled synthetic outbreak -------------------------------------------------------

FIXTURE_CENTERS = [  # (lat, lon), listed by increasing longitude
    (52.0, -100.0), (40.0, -60.0), (8.0, -10.0), (-20.0, 25.0),
    (45.0, 55.0), (25.0, 80.0), (-5.0, 120.0), (35.0, 150.0),
]
FIXTURE_SOURCES = (4, 7)
FIXTURE_SILENT = 3
FIXTURE_START = dt.date(2004, 1, 1)
FIXTURE_END = dt.date(2007, 12, 31)


def make_outbreak_fixture(seed: int = 2016, n_events: int = 500):
    """Events from 8 separated regions with two sources reporting on the same first day.

    Region R4 only reports after the study period. Returns (events, truth).
    """
    rng = np.random.default_rng(seed)
    k = len(FIXTURE_CENTERS)
    study_days = (FIXTURE_END - FIXTURE_START).days + 1
    onsets = {s: 10 for s in FIXTURE_SOURCES}
    others = [r for r in range(k) if r not in FIXTURE_SOURCES and r != FIXTURE_SILENT]
    for r, day in zip(others, np.sort(rng.choice(np.arange(40, 900), size=len(others), replace=False))):
        onsets[r] = int(day)
    silent_n = 12
    per_region = np.full(k, (n_events - silent_n) // (k - 1))
    per_region[FIXTURE_SILENT] = silent_n
    per_region[others[0]] += n_events - per_region.sum()
    sites = {r: np.array(FIXTURE_CENTERS[r]) + rng.normal(0, 2.0, size=(30, 2)) for r in range(k)}
    events = []
    for r in range(k):
        n = int(per_region[r])
        if r == FIXTURE_SILENT:
            days = study_days + rng.integers(30, 400, size=n)
        else:
            days = np.concatenate([[onsets[r]], rng.integers(onsets[r], study_days, size=n - 1)])
        site = rng.integers(len(sites[r]), size=n)
        for d, s in zip(days, site):
            lat, lon = np.round(sites[r][s], 4)
            events.append(EventRecord(float(lat), float(lon), FIXTURE_START + dt.timedelta(days=int(d))))
    order = rng.permutation(len(events))
    events = [events[i] for i in order]
    truth = {
        "k": k,
        "centers": [list(c) for c in FIXTURE_CENTERS],
        "sources": [region_names(k)[s] for s in FIXTURE_SOURCES],
        "silent": region_names(k)[FIXTURE_SILENT],
        "onset_days": {region_names(k)[r]: int(d) + 1 for r, d in sorted(onsets.items())},
        "start": FIXTURE_START.isoformat(),
        "end": FIXTURE_END.isoformat(),
        "seed": seed,
    }
    return events, truth


def fixture_path() -> Path:
    return Path(__file__).with_name("data") / "outbreak_events.csv"


def fixture_truth_path() -> Path:
    return Path(__file__).with_name("data") / "outbreak_truth.json"
