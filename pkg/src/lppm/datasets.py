"""Dataset ingestion and train/test preparation.

Two raw formats are supported: "snap" check-in dumps (tab-separated
user, ISO-8601 time, lat, lon, location-id) and "crawdad" cab traces
(space-separated lat, lon, occupancy, unix-time; one file per cab, cab id
taken from the filename). Preparation quantizes to a grid and applies the
evaluation protocol splits; prepared datasets round-trip through a JSON
"store" file so experiments never re-parse raw data.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone, tzinfo
from pathlib import Path

import numpy as np

from .geo import Grid, Region, build_grid, quantize

logger = logging.getLogger(__name__)

MALFORMED_FRACTION_LIMIT = 0.10
TAXICAB_RICH_DAYS = 7
TAXICAB_TEST_DAYS = 3


@dataclass(frozen=True)
class CheckinRecord:
    user: str
    time: datetime
    lat: float
    lon: float


def _parse_snap_line(line: str) -> CheckinRecord | None:
    parts = line.rstrip("\n").split("\t")
    if len(parts) < 4:
        return None
    user, stamp, lat_s, lon_s = parts[0], parts[1], parts[2], parts[3]
    try:
        time = datetime.fromisoformat(stamp.replace("Z", "+00:00"))
        lat, lon = float(lat_s), float(lon_s)
    except ValueError:
        return None
    if time.tzinfo is None:
        time = time.replace(tzinfo=timezone.utc)
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return None
    return CheckinRecord(user=user, time=time, lat=lat, lon=lon)


def _parse_crawdad_line(line: str, user: str) -> CheckinRecord | None:
    parts = line.split()
    if len(parts) < 4:
        return None
    try:
        lat, lon = float(parts[0]), float(parts[1])
        stamp = int(parts[3])
    except ValueError:
        return None
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return None
    time = datetime.fromtimestamp(stamp, tz=timezone.utc)
    return CheckinRecord(user=user, time=time, lat=lat, lon=lon)


def load_checkins(path: str | Path, format: str) -> list[CheckinRecord]:
    """Parse raw location records.

    Malformed lines are skipped with a warning; more than 10% malformed
    lines is an error. For the crawdad format ``path`` may be a directory
    holding one file per cab.
    """

    path = Path(path)
    if format == "snap":
        files = [path]
    elif format == "crawdad":
        files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
        if not files:
            raise ValueError(f"no cab files found under {path}")
    else:
        raise ValueError(f"unknown dataset format {format!r}")

    records: list[CheckinRecord] = []
    total = 0
    bad = 0
    for f in files:
        user = f.stem.removeprefix("new_")
        with open(f, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                total += 1
                rec = (
                    _parse_snap_line(line)
                    if format == "snap"
                    else _parse_crawdad_line(line, user)
                )
                if rec is None:
                    bad += 1
                else:
                    records.append(rec)
    if total == 0:
        logger.warning("no location records found in %s", path)
        return []
    if bad / total > MALFORMED_FRACTION_LIMIT:
        raise ValueError(f"{bad}/{total} malformed lines in {path}, above the 10% limit")
    if bad:
        logger.warning("skipped %d/%d malformed lines in %s", bad, total, path)
    return records


def _quantized_sequences(records: list[CheckinRecord], grid: Grid) -> dict[str, list[int]]:
    """Per-user, time-ordered cell sequences of the in-region records."""

    per_user: dict[str, list[tuple[datetime, int]]] = {}
    for rec in records:
        cell = quantize(grid, rec.lat, rec.lon)
        if cell is None:
            continue
        per_user.setdefault(rec.user, []).append((rec.time, cell))
    out = {}
    for user, items in per_user.items():
        items.sort(key=lambda it: it[0])
        out[user] = [cell for _, cell in items]
    return out


@dataclass(frozen=True)
class CheckinDataset:
    """Prepared sporadic check-in data.

    ``sequences`` holds every user's full in-region cell sequence; the
    evaluation users' traces in ``test`` are truncated to ``min_checkins``
    (and pre-shuffled when preparation asked for it).
    """

    kind = "checkin"
    grid: Grid
    sequences: dict[str, list[int]]
    scarce_users: tuple[str, ...]
    test_users: tuple[str, ...]
    test: dict[str, list[int]]
    min_checkins: int

    def users(self) -> list[str]:
        return list(self.test_users)

    def training_traces(self, user: str, mode: str) -> list[list[int]]:
        if mode == "scarce":
            return [self.sequences[u][: self.min_checkins] for u in self.scarce_users]
        if mode == "rich":
            return [seq for u, seq in sorted(self.sequences.items()) if u != user]
        raise ValueError(f"training mode {mode!r} not available for check-in data")

    def test_traces(self, user: str) -> list[list[int]]:
        return [self.test[user]]


def prepare_checkin_dataset(
    records: list[CheckinRecord],
    grid: Grid,
    min_checkins: int = 300,
    n_eval: int = 5,
    n_scarce_users: int = 15,
    shuffle: bool = False,
    rng: np.random.Generator | None = None,
) -> CheckinDataset:
    """Apply the sporadic evaluation protocol split.

    Users with at least ``min_checkins`` in-region check-ins are ordered by
    ascending id; the first ``n_scarce_users`` become the pooled scarce
    training set (``min_checkins`` check-ins each) and the last ``n_eval``
    become evaluation users with traces truncated to ``min_checkins``.
    """

    sequences = _quantized_sequences(records, grid)
    qualifying = sorted(u for u, seq in sequences.items() if len(seq) >= min_checkins)
    needed = n_scarce_users + n_eval
    if len(qualifying) < needed:
        raise ValueError(
            f"only {len(qualifying)} users have >= {min_checkins} in-region "
            f"check-ins, need {needed}"
        )
    selected = qualifying[:needed]
    scarce_users = tuple(selected[:n_scarce_users])
    test_users = tuple(selected[n_scarce_users:])

    test = {}
    for u in test_users:
        trace = list(sequences[u][:min_checkins])
        if shuffle:
            if rng is None:
                raise ValueError("shuffle requires an rng")
            trace = [trace[i] for i in rng.permutation(len(trace))]
        test[u] = trace
    return CheckinDataset(
        grid=grid,
        sequences=sequences,
        scarce_users=scarce_users,
        test_users=test_users,
        test=test,
        min_checkins=min_checkins,
    )


@dataclass(frozen=True)
class TaxicabDataset:
    """Prepared continuous cab data: per user, day traces resampled to one
    cell per slot."""

    kind = "taxicab"
    grid: Grid
    days: dict[str, list[list[int]]]

    def users(self) -> list[str]:
        return sorted(self.days)

    def training_traces(self, user: str, mode: str) -> list[list[int]]:
        if mode == "scarce":
            return [self.days[user][0]]
        if mode == "rich":
            return self.days[user][:TAXICAB_RICH_DAYS]
        if mode == "other-users":
            order = self.users()
            donor = order[(order.index(user) + 1) % len(order)]
            return [self.days[donor][0]]
        raise ValueError(f"unknown training mode {mode!r}")

    def test_traces(self, user: str) -> list[list[int]]:
        return self.days[user][-TAXICAB_TEST_DAYS:]


def prepare_taxicab_dataset(
    records: list[CheckinRecord],
    grid: Grid,
    resample_minutes: int = 5,
    max_silence_hours: float = 2.0,
    days_required: int = 10,
    tz: tzinfo = timezone.utc,
) -> TaxicabDataset:
    """Apply the continuous evaluation protocol.

    Each user's in-region reports are split into civil days under ``tz``;
    a day is dropped when any silence (including from midnight to the first
    report and from the last report to midnight) exceeds
    ``max_silence_hours``. Surviving days are resampled to one cell per
    ``resample_minutes`` slot, carrying the last known cell forward (the
    first report backfills any leading slots). Users keep their first
    ``days_required`` surviving days.
    """

    slots_per_day = (24 * 60) // resample_minutes
    max_gap = max_silence_hours * 3600.0

    per_user_days: dict[str, dict[str, list[tuple[float, int]]]] = {}
    for rec in records:
        cell = quantize(grid, rec.lat, rec.lon)
        if cell is None:
            continue
        local = rec.time.astimezone(tz)
        day_key = local.date().isoformat()
        sec = local.hour * 3600 + local.minute * 60 + local.second + local.microsecond / 1e6
        per_user_days.setdefault(rec.user, {}).setdefault(day_key, []).append((sec, cell))

    days: dict[str, list[list[int]]] = {}
    for user, by_day in per_user_days.items():
        kept: list[list[int]] = []
        for day_key in sorted(by_day):
            points = sorted(by_day[day_key])
            secs = [s for s, _ in points]
            gaps = [secs[0] - 0.0]
            gaps += [b - a for a, b in zip(secs, secs[1:])]
            gaps.append(86400.0 - secs[-1])
            if max(gaps) > max_gap:
                continue
            cells = [c for _, c in points]
            idx = np.searchsorted(
                secs, (np.arange(slots_per_day) + 1) * (resample_minutes * 60.0), side="left"
            )
            trace = [cells[max(i - 1, 0)] for i in idx]
            kept.append(trace)
            if len(kept) == days_required:
                break
        if len(kept) >= days_required:
            days[user] = kept
    if not days:
        raise ValueError(f"no user has {days_required} qualifying days")
    return TaxicabDataset(grid=grid, days=days)


@dataclass(frozen=True)
class SyntheticDataset:
    """Model-sampled traces: explicit training and test traces per user."""

    kind = "synthetic"
    grid: Grid
    train: dict[str, list[list[int]]]
    test: dict[str, list[list[int]]]

    def users(self) -> list[str]:
        return sorted(self.test)

    def training_traces(self, user: str, mode: str) -> list[list[int]]:
        if mode in ("scarce", "rich"):
            return self.train[user]
        raise ValueError(f"training mode {mode!r} not available for synthetic data")

    def test_traces(self, user: str) -> list[list[int]]:
        return self.test[user]


def _region_dict(grid: Grid) -> dict:
    r = grid.region
    return {
        "lat_min": r.lat_min,
        "lat_max": r.lat_max,
        "lon_min": r.lon_min,
        "lon_max": r.lon_max,
        "rows": r.rows,
        "cols": r.cols,
    }


def grid_from_dict(d: dict) -> Grid:
    return build_grid(Region(**d))


def write_store(path: str | Path, dataset) -> None:
    """Serialize a prepared dataset to the JSON store format."""

    doc: dict = {"kind": dataset.kind, "grid": _region_dict(dataset.grid)}
    if dataset.kind == "checkin":
        doc.update(
            sequences=dataset.sequences,
            scarce_users=list(dataset.scarce_users),
            test_users=list(dataset.test_users),
            test=dataset.test,
            min_checkins=dataset.min_checkins,
        )
    elif dataset.kind == "taxicab":
        doc.update(days=dataset.days)
    elif dataset.kind == "synthetic":
        doc.update(train=dataset.train, test=dataset.test)
    else:
        raise ValueError(f"unknown dataset kind {dataset.kind!r}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def read_store(path: str | Path):
    """Load a prepared dataset from a JSON store file."""

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    grid = grid_from_dict(doc["grid"])
    kind = doc.get("kind")
    if kind == "checkin":
        return CheckinDataset(
            grid=grid,
            sequences=doc["sequences"],
            scarce_users=tuple(doc["scarce_users"]),
            test_users=tuple(doc["test_users"]),
            test=doc["test"],
            min_checkins=int(doc["min_checkins"]),
        )
    if kind == "taxicab":
        return TaxicabDataset(grid=grid, days=doc["days"])
    if kind == "synthetic":
        return SyntheticDataset(grid=grid, train=doc["train"], test=doc["test"])
    raise ValueError(f"unknown store kind {kind!r}")
