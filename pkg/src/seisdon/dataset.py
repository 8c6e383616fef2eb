"""Supervised operator-learning samples and superposition augmentation.

A sample pairs the excitation's sensor values u = [P(t_1) ... P(t_m)]
with the response trajectory it should map to.  Because the building
model is linear and starts from rest, any weighted combination of
excitations with weights summing to one pairs exactly with the same
combination of responses; augmentation exploits that to synthesize
unlimited training pairs from a small base set without re-solving the
dynamics.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .excitation import SeismicRecord
from .structural import NewmarkParams, ShearBuildingModel, ground_motion_load, newmark_solve
from .timeseries import TimeSeries


@dataclass
class ResponsePair:
    """One excitation record and its per-floor displacement responses."""

    id: str
    dt: float
    excitation: np.ndarray          # ground acceleration, (T,)
    responses: np.ndarray           # (T, l)
    source_ids: tuple
    augmented: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.excitation = np.asarray(self.excitation, dtype=np.float64)
        self.responses = np.asarray(self.responses, dtype=np.float64)
        if self.responses.ndim == 1:
            self.responses = self.responses[:, np.newaxis]
        if self.excitation.shape[0] != self.responses.shape[0]:
            raise ValueError("excitation and responses must share the time grid")

    @property
    def n_steps(self) -> int:
        return self.excitation.shape[0]

    @property
    def n_floors(self) -> int:
        return self.responses.shape[1]


@dataclass
class OperatorSample:
    """Branch input, query times and targets for one supervised pair."""

    branch_input: np.ndarray        # (m,)
    query_times: np.ndarray         # (T_q,)
    targets: np.ndarray             # (T_q, l)
    max_abs_target: np.ndarray      # (l,)
    source_ids: tuple
    augmented: bool
    dt: float

    def __post_init__(self):
        if self.branch_input.size < 1:
            raise ValueError("branch input must be nonempty")
        if np.any(self.max_abs_target <= 0):
            raise ValueError("every target floor needs a nonzero response amplitude")


@dataclass
class AugmentationConfig:
    subset_size: int
    count: int
    signed_weights: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.subset_size < 1:
            raise ValueError("subset_size must be >= 1")
        if self.count < 0:
            raise ValueError("count must be >= 0")


def sample_sensors(record, m: int) -> np.ndarray:
    """Excitation values at m equispaced sensor times spanning [0, T].

    Sensor times include both endpoints; values between grid points are
    linearly interpolated (exact whenever the sensors land on samples).
    """
    if isinstance(record, SeismicRecord):
        series = record.series
    elif isinstance(record, TimeSeries):
        series = record
    else:
        series = TimeSeries(np.asarray(record, dtype=np.float64), 1.0)
    n = len(series)
    if m < 2:
        raise ValueError("need at least two sensors (both endpoints)")
    if m > n:
        raise ValueError(f"cannot place {m} sensors on a record of {n} samples")
    sensor_times = np.linspace(0.0, series.duration, m)
    return np.interp(sensor_times, series.times, series.values)


def _draw_weights(rng: np.random.Generator, size: int, signed: bool) -> np.ndarray:
    """Random weights summing exactly to one."""
    if not signed:
        g = rng.random(size)
        total = g.sum()
        while total <= 0:  # vanishing probability; guards degenerate draws
            g = rng.random(size)
            total = g.sum()
        return g / total
    g = rng.uniform(-1.0, 1.0, size)
    # reject draws with tiny sums so the normalized weights stay bounded
    while abs(g.sum()) < 0.2:
        g = rng.uniform(-1.0, 1.0, size)
    return g / g.sum()


def augment_superposition(base, config: AugmentationConfig):
    """Synthesize pairs as weighted sums over random base subsets.

    Each output uses a fresh index subset and weights normalized to sum
    to one, so the combined excitation and combined response still solve
    the equation of motion with zero initial conditions.
    """
    if not base:
        raise ValueError("base set is empty")
    if config.subset_size > len(base):
        raise ValueError(f"subset_size {config.subset_size} exceeds base set size {len(base)}")
    dts = {pair.dt for pair in base}
    lengths = {pair.n_steps for pair in base}
    if len(dts) != 1 or len(lengths) != 1:
        raise ValueError("base pairs must share dt and length")
    rng = np.random.default_rng(config.seed)
    out = []
    for k in range(config.count):
        idx = rng.choice(len(base), size=config.subset_size, replace=False)
        weights = _draw_weights(rng, config.subset_size, config.signed_weights)
        excitation = np.zeros_like(base[0].excitation)
        responses = np.zeros_like(base[0].responses)
        sources = []
        for w, i in zip(weights, idx):
            excitation += w * base[i].excitation
            responses += w * base[i].responses
            sources.extend(base[i].source_ids)
        out.append(ResponsePair(
            id=f"aug-{k:05d}",
            dt=base[0].dt,
            excitation=excitation,
            responses=responses,
            source_ids=tuple(dict.fromkeys(sources)),
            augmented=True,
            meta={"weights": weights.tolist(), "subset": [base[i].id for i in idx]},
        ))
    return out


def solve_response_pairs(records, model: ShearBuildingModel, params: NewmarkParams,
                         floors) -> list:
    """Exact-reference responses for each record at the requested floor indices."""
    floors = tuple(int(f) for f in floors)
    for f in floors:
        if not (0 <= f < model.n_floors):
            raise ValueError(f"floor index {f} outside 0..{model.n_floors - 1}")
    pairs = []
    for rec in records:
        if abs(rec.series.dt - params.dt) > 1e-12 * params.dt:
            raise ValueError(f"record {rec.id} dt {rec.series.dt} != solver dt {params.dt}")
        load = ground_motion_load(model, rec.series)
        resp = newmark_solve(model, load, params)
        pairs.append(ResponsePair(
            id=rec.id, dt=params.dt,
            excitation=rec.series.values.copy(),
            responses=resp.displacements[list(floors)].T,
            source_ids=(rec.id,),
        ))
    return pairs


def sample_from_pair(pair: ResponsePair, m: int, query_times=None) -> OperatorSample:
    series = TimeSeries(pair.excitation, pair.dt)
    if query_times is None:
        query_times = series.times
    max_abs = np.max(np.abs(pair.responses), axis=0)
    return OperatorSample(
        branch_input=sample_sensors(series, m),
        query_times=np.asarray(query_times, dtype=np.float64),
        targets=pair.responses.copy(),
        max_abs_target=max_abs,
        source_ids=pair.source_ids,
        augmented=pair.augmented,
        dt=pair.dt,
    )


@dataclass
class OperatorDataset:
    """Train/test samples plus the base pairs they came from.

    train_pairs are kept so training can synthesize fresh augmented
    batches on the fly; test pairs are never augmented and never feed
    augmentation subsets.
    """

    train: list
    test: list
    train_pairs: list
    test_pairs: list
    m: int
    floors: tuple
    dt: float
    query_times: np.ndarray

    @property
    def n_floors(self) -> int:
        return len(self.floors)


def build_dataset(records, model: ShearBuildingModel, params: NewmarkParams, m: int,
                  floors, split: float = 0.8,
                  augmentation: AugmentationConfig | None = None) -> OperatorDataset:
    """Solve responses, split records, and assemble supervised samples.

    The first round(split * n) records become the training base; the rest
    are the held-out test set.  Augmented samples (if requested) extend
    the training list only.
    """
    records = list(records)
    if not records:
        raise ValueError("no records supplied")
    n_train = int(round(split * len(records)))
    if n_train < 1 or n_train >= len(records):
        raise ValueError(
            f"split {split} leaves {n_train} train / {len(records) - n_train} test records")
    floors = tuple(int(f) for f in floors)

    train_pairs = solve_response_pairs(records[:n_train], model, params, floors)
    test_pairs = solve_response_pairs(records[n_train:], model, params, floors)

    train = [sample_from_pair(p, m) for p in train_pairs]
    if augmentation is not None and augmentation.count > 0:
        for pair in augment_superposition(train_pairs, augmentation):
            train.append(sample_from_pair(pair, m))
    test = [sample_from_pair(p, m) for p in test_pairs]

    return OperatorDataset(
        train=train, test=test,
        train_pairs=train_pairs, test_pairs=test_pairs,
        m=m, floors=floors, dt=params.dt,
        query_times=TimeSeries(train_pairs[0].excitation, params.dt).times,
    )


# -- serialization -----------------------------------------------------------


def _write_pair_csv(path: Path, pair: ResponsePair) -> None:
    t = np.arange(pair.n_steps) * pair.dt
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "P"] + [f"y{i + 1}" for i in range(pair.n_floors)])
        for j in range(pair.n_steps):
            row = [repr(float(t[j])), repr(float(pair.excitation[j]))]
            row.extend(repr(float(v)) for v in pair.responses[j])
            writer.writerow(row)


def _read_pair_csv(path: Path, entry: dict, dt: float) -> ResponsePair:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    return ResponsePair(
        id=entry["id"], dt=dt,
        excitation=data[:, 1], responses=data[:, 2:],
        source_ids=tuple(entry["source_ids"]),
        augmented=entry["augmented"],
    )


def save_dataset(dataset: OperatorDataset, out_dir) -> None:
    """One JSON manifest plus a (t, P, y1..yl) CSV per base pair."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "m": dataset.m,
        "floors": list(dataset.floors),
        "dt": dataset.dt,
        "n_train": len(dataset.train_pairs),
        "n_test": len(dataset.test_pairs),
        "pairs": [],
    }
    for kind, pairs in (("train", dataset.train_pairs), ("test", dataset.test_pairs)):
        for pair in pairs:
            fname = f"{kind}_{pair.id}.csv"
            _write_pair_csv(out_dir / fname, pair)
            manifest["pairs"].append({
                "id": pair.id, "file": fname, "kind": kind,
                "source_ids": list(pair.source_ids), "augmented": pair.augmented,
            })
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(in_dir) -> OperatorDataset:
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "manifest.json").read_text())
    dt = manifest["dt"]
    train_pairs, test_pairs = [], []
    for entry in manifest["pairs"]:
        pair = _read_pair_csv(in_dir / entry["file"], entry, dt)
        (train_pairs if entry["kind"] == "train" else test_pairs).append(pair)
    m = manifest["m"]
    return OperatorDataset(
        train=[sample_from_pair(p, m) for p in train_pairs],
        test=[sample_from_pair(p, m) for p in test_pairs],
        train_pairs=train_pairs, test_pairs=test_pairs,
        m=m, floors=tuple(manifest["floors"]), dt=dt,
        query_times=np.arange(train_pairs[0].n_steps) * dt if train_pairs else np.array([]),
    )
