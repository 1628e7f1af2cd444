"""Experiment execution: seeded repetitions over (user, parameter) cells,
windowed metrics, CSV output, and tradeoff-curve interpolation.

A run is fully determined by (config, base seed): repetition seeds are
base_seed + repetition, each (user, parameter) cell gets an independent
substream, and rows are sorted before writing, so output files are
byte-identical across runs and worker counts.
"""

from __future__ import annotations

import csv
import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import load_checkins, prepare_checkin_dataset, prepare_taxicab_dataset, read_store
from .geo import Grid, Region, build_grid, distance_matrix
from .mechanisms import run_trace, exponential_mechanism, location_hiding, markov_mechanism, sporadic_mechanism
from .mobility import train_markov, train_profile
from .adversary import attack_markov, attack_sporadic
from .metrics import empirical_pae, empirical_qavg
from .peb import EmConfig, PebConfig, peb_mechanism

ROW_FIELDS = ["user", "mechanism", "param", "repetition", "window", "qavg_km", "pae_km", "degenerate_steps"]
CURVE_FIELDS = ["q_km", "mean", "min", "max", "n_users"]

WORKERS_ENV = "LPPM_WORKERS"

MECHANISMS = ("LH", "Expo")
MODELS = ("sporadic-HW", "markov-HW", "PEB")
ATTACKS = ("sporadic", "markov")
TRAINING_MODES = ("scarce", "rich", "other-users")
WINDOW_NAMES = ("full", "first_half", "last_half")

DEFAULT_ALPHAS = [i / 10 for i in range(11)]
DEFAULT_EPSILONS = [i / 50 for i in range(10)]


@dataclass
class ExperimentConfig:
    """Everything a run needs; mirrored one-to-one by the JSON config file
    and by CLI flags of the same names."""

    dataset_path: str = ""
    dataset_format: str = "store"  # store | snap | crawdad
    lat_min: float = 37.5500
    lat_max: float = 37.8010
    lon_min: float = -122.5153
    lon_max: float = -122.3789
    rows: int = 25
    cols: int = 10
    mechanism: str = "LH"
    params: list[float] | None = None
    model: str = "sporadic-HW"
    attack: str = "sporadic"
    training: str = "rich"
    attack_data: str = "test"  # test | train
    repetitions: int | None = None
    base_seed: int = 0
    shuffle: bool = False
    windows: list[str] = field(default_factory=lambda: ["full"])
    pseudocount: float = 0.0
    gamma: float = 0.5
    em_tolerance: float = 1e-8
    em_max_iters: int = 500
    em_warm_start: bool = True
    em_stride: int = 1
    lh_exclude_self: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def region(self) -> Region:
        return Region(self.lat_min, self.lat_max, self.lon_min, self.lon_max, self.rows, self.cols)

    def resolved_params(self) -> list[float]:
        if self.params is not None:
            return list(self.params)
        return DEFAULT_ALPHAS if self.mechanism == "LH" else DEFAULT_EPSILONS

    def resolved_repetitions(self) -> int:
        if self.repetitions is not None:
            return self.repetitions
        return 40 if self.mechanism == "LH" else 20


def validate_config(cfg: ExperimentConfig, data_kind: str) -> None:
    """Reject inconsistent configurations before any run starts."""

    if cfg.mechanism not in MECHANISMS:
        raise ValueError(f"mechanism must be one of {MECHANISMS}, got {cfg.mechanism!r}")
    if cfg.model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {cfg.model!r}")
    if cfg.attack not in ATTACKS:
        raise ValueError(f"attack must be one of {ATTACKS}, got {cfg.attack!r}")
    if cfg.training not in TRAINING_MODES:
        raise ValueError(f"training must be one of {TRAINING_MODES}, got {cfg.training!r}")
    if cfg.attack_data not in ("test", "train"):
        raise ValueError(f"attack_data must be 'test' or 'train', got {cfg.attack_data!r}")
    if cfg.training == "other-users" and data_kind != "taxicab":
        raise ValueError("training mode 'other-users' only applies to taxicab data")
    bad = [w for w in cfg.windows if w not in WINDOW_NAMES]
    if bad:
        raise ValueError(f"unknown windows {bad}; choose from {WINDOW_NAMES}")
    if not cfg.resolved_params():
        raise ValueError("parameter grid must be nonempty")
    if cfg.resolved_repetitions() < 1:
        raise ValueError("repetitions must be >= 1")
    if cfg.mechanism == "LH" and any(not 0 <= a <= 1 for a in cfg.resolved_params()):
        raise ValueError("LH parameters must lie in [0, 1]")
    if cfg.mechanism == "Expo" and any(e < 0 for e in cfg.resolved_params()):
        raise ValueError("Expo parameters must be >= 0")


def load_dataset(cfg: ExperimentConfig):
    """Materialize the dataset a config points at (store or raw)."""

    if cfg.dataset_format == "store":
        return read_store(cfg.dataset_path)
    records = load_checkins(cfg.dataset_path, cfg.dataset_format)
    grid = build_grid(cfg.region())
    if cfg.dataset_format == "snap":
        return prepare_checkin_dataset(records, grid)
    return prepare_taxicab_dataset(records, grid)


def _base_channel(cfg: ExperimentConfig, param: float, n: int, d: np.ndarray) -> np.ndarray:
    if cfg.mechanism == "LH":
        return location_hiding(param, n, exclude_self=cfg.lh_exclude_self)
    return exponential_mechanism(param, d)


def _build_mechanism(cfg: ExperimentConfig, base, train_traces, n: int, d: np.ndarray):
    if cfg.model == "sporadic-HW":
        pi = train_profile(train_traces, n, cfg.pseudocount)
        return sporadic_mechanism(base, pi, d)
    if cfg.model == "markov-HW":
        model = train_markov(train_traces, n, cfg.pseudocount)
        return markov_mechanism(base, model, d)
    pi_ini = train_profile(train_traces, n, cfg.pseudocount)
    peb_cfg = PebConfig(
        pi_ini=pi_ini,
        base=base,
        gamma=cfg.gamma,
        em=EmConfig(
            tolerance=cfg.em_tolerance,
            max_iters=cfg.em_max_iters,
            warm_start=cfg.em_warm_start,
        ),
        estimate_stride=cfg.em_stride,
    )
    return peb_mechanism(peb_cfg, d)


def _window_bounds(name: str, length: int):
    if name == "full":
        return None
    half = length // 2
    return (0, half) if name == "first_half" else (half, length)


def _run_cell(cfg: ExperimentConfig, data, user_idx: int, param_idx: int) -> list[dict]:
    """All repetitions for one (user, parameter) cell."""

    user = data.users()[user_idx]
    param = cfg.resolved_params()[param_idx]
    grid: Grid = data.grid
    n = grid.n_cells
    d = distance_matrix(grid)
    base = _base_channel(cfg, param, n, d)
    train_traces = data.training_traces(user, cfg.training)
    mech = _build_mechanism(cfg, base, train_traces, n, d)
    test_traces = [np.asarray(t, dtype=np.int64) for t in data.test_traces(user)]
    lengths = {len(t) for t in test_traces}
    if len(lengths) != 1:
        raise ValueError(f"test traces of user {user!r} have mixed lengths {sorted(lengths)}")
    length = lengths.pop()

    rows = []
    for rep in range(cfg.resolved_repetitions()):
        seq = np.random.SeedSequence(cfg.base_seed + rep, spawn_key=(user_idx, param_idx))
        rng = np.random.default_rng(seq)
        traces = [rng.permutation(t) if cfg.shuffle else t for t in test_traces]
        records = [run_trace(mech, t, rng) for t in traces]

        attack_traces = traces if cfg.attack_data == "test" else train_traces
        if cfg.attack == "sporadic":
            pi_att = train_profile(attack_traces, n, cfg.pseudocount)
            estimates = [attack_sporadic(rec, pi_att, d) for rec in records]
        else:
            model_att = train_markov(attack_traces, n, cfg.pseudocount)
            estimates = [attack_markov(rec, model_att, d) for rec in records]

        degenerate = sum(rec.degenerate_steps for rec in records)
        for window in cfg.windows:
            bounds = _window_bounds(window, length)
            rows.append(
                {
                    "user": user,
                    "mechanism": cfg.mechanism,
                    "param": param,
                    "repetition": rep,
                    "window": window,
                    "qavg_km": empirical_qavg(records, d, bounds),
                    "pae_km": empirical_pae(records, estimates, d, bounds),
                    "degenerate_steps": degenerate,
                }
            )
    return rows


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


def run_experiment(cfg: ExperimentConfig, data=None, workers: int | None = None) -> list[dict]:
    """Execute a full parameter sweep and return sorted result rows.

    ``data`` overrides the config's dataset (useful for in-memory synthetic
    runs); ``workers`` overrides the LPPM_WORKERS environment default.
    """

    if data is None:
        data = load_dataset(cfg)
    validate_config(cfg, data.kind)
    users = data.users()
    params = cfg.resolved_params()
    cells = [(u, p) for u in range(len(users)) for p in range(len(params))]

    workers = resolve_workers(workers)
    rows: list[dict] = []
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell_rows in pool.map(
                _run_cell, [cfg] * len(cells), [data] * len(cells), *zip(*cells)
            ):
                rows.extend(cell_rows)
    else:
        for u, p in cells:
            rows.extend(_run_cell(cfg, data, u, p))
    rows.sort(key=lambda r: (r["user"], r["mechanism"], r["param"], r["repetition"], r["window"]))
    return rows


def write_rows(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ROW_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def read_rows(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for raw in csv.DictReader(fh):
            rows.append(
                {
                    "user": raw["user"],
                    "mechanism": raw["mechanism"],
                    "param": float(raw["param"]),
                    "repetition": int(raw["repetition"]),
                    "window": raw["window"],
                    "qavg_km": float(raw["qavg_km"]),
                    "pae_km": float(raw["pae_km"]),
                    "degenerate_steps": int(raw["degenerate_steps"]),
                }
            )
    return rows


@dataclass(frozen=True)
class TradeoffCurve:
    """Privacy-vs-loss curve aggregated across users on a common loss grid.

    Grid points outside every user's loss range carry NaN and n_users 0; no
    extrapolation is performed.
    """

    q_km: np.ndarray
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray
    n_users: np.ndarray
    user_points: dict[str, tuple[np.ndarray, np.ndarray]]


def interpolate_curves(
    rows: list[dict], q_min: float = 0.0, q_max: float = 4.0, n_points: int = 41
) -> TradeoffCurve:
    """Per-user linear interpolation of privacy over a loss grid, averaged
    across users wherever at least one user's parameter sweep covers the
    grid point.

    The rows must come from a single (mechanism, window) group; repetitions
    are averaged per (user, parameter) first.
    """

    groups = {(r["mechanism"], r["window"]) for r in rows}
    if len(groups) > 1:
        raise ValueError(f"rows mix several (mechanism, window) groups: {sorted(groups)}")
    if not rows:
        raise ValueError("no rows to interpolate")

    per_user: dict[str, dict[float, list[tuple[float, float]]]] = {}
    for r in rows:
        per_user.setdefault(r["user"], {}).setdefault(r["param"], []).append(
            (r["qavg_km"], r["pae_km"])
        )

    q_grid = np.linspace(q_min, q_max, n_points)
    user_points = {}
    interped = {}
    for user, by_param in per_user.items():
        pts = sorted(
            (float(np.mean([q for q, _ in vals])), float(np.mean([p for _, p in vals])))
            for vals in by_param.values()
        )
        qs = np.array([q for q, _ in pts])
        ps = np.array([p for _, p in pts])
        # merge duplicate loss values so interpolation sees a strictly
        # increasing axis
        uq, inverse = np.unique(qs, return_inverse=True)
        up = np.array([ps[inverse == i].mean() for i in range(len(uq))])
        if len(uq) < 2:
            raise ValueError(f"user {user!r} has fewer than two distinct loss points")
        user_points[user] = (uq, up)
        mask = (q_grid >= uq[0]) & (q_grid <= uq[-1])
        vals = np.full(n_points, np.nan)
        vals[mask] = np.interp(q_grid[mask], uq, up)
        interped[user] = vals

    stacked = np.vstack([interped[u] for u in sorted(interped)])
    counts = np.sum(~np.isnan(stacked), axis=0)
    if not np.any(counts):
        raise ValueError("no user's loss range overlaps the requested grid")
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(stacked, axis=0)
        lo = np.nanmin(stacked, axis=0)
        hi = np.nanmax(stacked, axis=0)
    absent = counts == 0
    mean[absent] = np.nan
    lo[absent] = np.nan
    hi[absent] = np.nan
    return TradeoffCurve(
        q_km=q_grid, mean=mean, min=lo, max=hi, n_users=counts, user_points=user_points
    )


def write_curve(path: str | Path, curve: TradeoffCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_FIELDS)
        for i in range(len(curve.q_km)):
            if curve.n_users[i] == 0:
                writer.writerow([curve.q_km[i], "", "", "", 0])
            else:
                writer.writerow(
                    [curve.q_km[i], curve.mean[i], curve.min[i], curve.max[i], curve.n_users[i]]
                )
