"""Command-line entry point for the full pipeline.

Subcommands: generate (synthetic records), preprocess (anti-aliased
decimation), train (dataset build + optimization + checkpoint), predict
(one record through a checkpoint), experiment (the comparison studies).
All outputs are CSV (numeric, header row, '.' decimal, newline
terminated) or JSON manifests/reports; every command is deterministic
given its configuration and seed.

Exit codes: 0 success, 2 configuration error, 3 missing input,
4 runtime or numeric failure.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, describe_schema, load_config
from .dataset import AugmentationConfig, build_dataset, sample_sensors, save_dataset
from .deeponet import (
    VARIANTS,
    build_amplitude_separated,
    build_variant,
    deeponet_predict,
    load_model,
    save_model,
    scale_ladder,
)
from .dsp import antialias_downsample, verify_downsampling_theorem
from .excitation import (
    GenerationConfig,
    SeismicRecord,
    export_record_csv,
    generate_ensemble,
    import_record_csv,
)
from .experiments import (
    amplitude_separation_study,
    build_two_tier_dataset,
    multifloor_study,
    scale_spacing_study,
    structure_study,
)
from .structural import (
    NewmarkParams,
    build_shear_building,
    default_building,
    rayleigh_coefficients,
)
from .timeseries import TimeSeries
from .training import TrainConfig, TrainingDivergence, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_RUNTIME = 4

EXPERIMENT_NAMES = ("scale-spacing", "structures", "amplitude-separation", "multifloor")


def _generation_config(cfg) -> GenerationConfig:
    g = cfg["generator"]
    return GenerationConfig(
        duration=g["duration"], dt=g["dt"],
        rise_time=g["rise_time"], plateau_time=g["plateau_time"],
        decay_rate=g["decay_rate"],
        dominant_frequency=2.0 * np.pi * g["dominant_frequency_hz"],
        bandwidth=g["bandwidth"], intensity=g["intensity"],
        seed=g["seed"],
    )


def _building(cfg):
    b = cfg["building"]
    return default_building(b["floors"], b["mass"], b["stiffness"], b["zeta"])


def _load_records(data_dir: Path):
    manifest_path = data_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        files = [data_dir / entry["file"] for entry in manifest["records"]]
    else:
        files = sorted(data_dir.glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no records found in {data_dir}")
    return [import_record_csv(f) for f in files]


def cmd_generate(cfg, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    gen = _generation_config(cfg)
    records = generate_ensemble(gen, cfg["generator"]["count"])
    entries = []
    for rec in records:
        fname = f"{rec.id}.csv"
        export_record_csv(rec, out_dir / fname)
        entries.append({"id": rec.id, "file": fname, "seed": rec.seed})
    manifest = {
        "dt": gen.dt, "duration": gen.duration, "count": len(records),
        "generator": {
            "dominant_frequency_hz": gen.dominant_frequency / (2 * np.pi),
            "bandwidth": gen.bandwidth, "intensity": gen.intensity,
            "rise_time": gen.rise_time, "plateau_time": gen.plateau_time,
            "decay_rate": gen.decay_rate, "seed": gen.seed,
        },
        "records": entries,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(records)} records to {out_dir}")
    return EXIT_OK


def _write_spectrum_csv(path: Path, values: np.ndarray, dt: float) -> None:
    amps = np.abs(np.fft.rfft(values))
    freqs = np.fft.rfftfreq(values.size, dt)
    with path.open("w", newline="") as fh:
        fh.write("frequency_hz,amplitude\n")
        for f, a in zip(freqs, amps):
            fh.write(f"{f!r},{a!r}\n")


def cmd_preprocess(cfg, in_dir: Path, out_dir: Path) -> int:
    records = _load_records(in_dir)
    factor = cfg["preprocess"]["factor"]
    order = cfg["preprocess"]["order"]
    problems = [f"{rec.id}: length {len(rec)} not divisible by {factor}"
                for rec in records if len(rec) % factor != 0]
    if problems:
        for p in problems:
            print(f"preprocess error: {p}", file=sys.stderr)
        raise ValueError(f"{len(problems)} record(s) incompatible with factor {factor}")
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    deviations = {}
    for rec in records:
        values = rec.series.values
        # aliasing audit on the unfiltered path: decimation and spectral
        # folding must agree to rounding error
        deviations[rec.id] = verify_downsampling_theorem(values, factor)
        resampled = antialias_downsample(values, factor, order=order)
        new_dt = rec.series.dt * factor
        out_rec = SeismicRecord(series=TimeSeries(resampled, new_dt), id=rec.id,
                                seed=rec.seed, meta=rec.meta)
        fname = f"{rec.id}.csv"
        export_record_csv(out_rec, out_dir / fname)
        _write_spectrum_csv(out_dir / f"{rec.id}_spectrum_before.csv", values, rec.series.dt)
        _write_spectrum_csv(out_dir / f"{rec.id}_spectrum_after.csv", resampled, new_dt)
        entries.append({"id": rec.id, "file": fname, "seed": rec.seed})
    manifest = {
        "dt": records[0].series.dt * factor,
        "duration": (len(records[0]) // factor - 1) * records[0].series.dt * factor,
        "count": len(records),
        "preprocess": {"factor": factor, "order": order,
                       "theorem_deviation_max": max(deviations.values())},
        "records": entries,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"resampled {len(records)} records by {factor}x into {out_dir} "
          f"(max aliasing-theorem deviation {max(deviations.values()):.3e})")
    return EXIT_OK


def _build_model(cfg, m: int, n_outputs: int, duration: float):
    mc = cfg["model"]
    kind = mc["kind"]
    if kind == "amplitude-separated":
        counts = mc["tier_subnets"] or None
        return build_amplitude_separated(
            m=m, n_outputs=n_outputs, epsilon=mc["epsilon"],
            tier_caps=tuple(mc["tier_caps"]), tier_subnet_counts=counts,
            subnet_neurons=mc["subnet_neurons"], branch_hidden=mc["branch_hidden"],
            branch_activation=mc["branch_activation"], t_scale=duration,
            seed=mc["seed"])
    if kind in VARIANTS:
        kwargs = {}
        if kind.endswith("tMS"):
            kwargs["trunk_scales"] = scale_ladder(mc["trunk_scale_cap"], mc["trunk_subnets"])
        if kind.startswith("bMS"):
            kwargs["branch_scales"] = scale_ladder(mc["trunk_scale_cap"], mc["trunk_subnets"])
        return build_variant(
            kind, m=m, p=mc["latent"], n_outputs=n_outputs,
            trunk_neurons=mc["trunk_neurons"], branch_neurons=mc["branch_neurons"],
            trunk_hidden=mc["trunk_hidden"], branch_hidden=mc["branch_hidden"],
            branch_activation=mc["branch_activation"], t_scale=duration,
            seed=mc["seed"], **kwargs)
    raise ConfigError(f"unknown model kind {kind!r}")


def cmd_train(cfg, data_dir: Path, out_dir: Path, dataset_out=None) -> int:
    records = _load_records(data_dir)
    building = _building(cfg)
    dt = records[0].series.dt
    params = NewmarkParams(dt=dt)
    ds_cfg = cfg["dataset"]
    tr_cfg = cfg["training"]

    precomputed = None
    if not tr_cfg["on_the_fly"] and ds_cfg["augment_count"] > 0:
        precomputed = AugmentationConfig(
            subset_size=ds_cfg["subset_size"], count=ds_cfg["augment_count"],
            signed_weights=ds_cfg["signed_weights"], seed=tr_cfg["seed"])
    dataset = build_dataset(records, building, params, m=ds_cfg["sensors"],
                            floors=ds_cfg["floors"], split=ds_cfg["split"],
                            augmentation=precomputed)
    if dataset_out is not None:
        save_dataset(dataset, dataset_out)

    duration = float(dataset.query_times[-1])
    model = _build_model(cfg, ds_cfg["sensors"], dataset.n_floors, duration)

    on_the_fly = None
    if tr_cfg["on_the_fly"]:
        on_the_fly = AugmentationConfig(
            subset_size=min(ds_cfg["subset_size"], len(dataset.train_pairs)),
            count=0, signed_weights=ds_cfg["signed_weights"], seed=tr_cfg["seed"])
    train_config = TrainConfig(
        epochs=tr_cfg["epochs"], batches_per_epoch=tr_cfg["batches_per_epoch"],
        batch_size=tr_cfg["batch_size"], learning_rate=tr_cfg["learning_rate"],
        seed=tr_cfg["seed"], augmentation=on_the_fly)

    model, history = train(dataset, model, train_config)

    out_dir.mkdir(parents=True, exist_ok=True)
    final_test = history.test_rel_l2[-1] if history.test_rel_l2 else float("nan")
    save_model(out_dir / "checkpoint.npz", model, extra_meta={
        "m": ds_cfg["sensors"], "floors": list(dataset.floors), "dt": dt,
        "duration": duration, "final_test_rel_l2": final_test,
    })
    history.to_csv(out_dir / "metrics.csv")
    print(f"final test relative L2: {final_test:.6f}")
    print(f"checkpoint: {out_dir / 'checkpoint.npz'}")
    return EXIT_OK


def cmd_predict(checkpoint: Path, record_csv: Path, out_csv: Path) -> int:
    model, extra = load_model(checkpoint)
    record = import_record_csv(record_csv)
    u = sample_sensors(record, model.sensor_count)
    times = record.series.times
    start = time.perf_counter()
    prediction = deeponet_predict(model, u.reshape(1, -1), times)[0]
    elapsed = time.perf_counter() - start
    floors = extra.get("floors", list(range(prediction.shape[1])))
    with Path(out_csv).open("w", newline="") as fh:
        fh.write("t," + ",".join(f"y_floor{f}" for f in floors) + "\n")
        for j, t in enumerate(times):
            fh.write(",".join([repr(float(t))] + [repr(float(v)) for v in prediction[j]]) + "\n")
    print(f"inference wall time: {elapsed:.4f} s for {times.size} query times")
    print(f"predictions: {out_csv}")
    return EXIT_OK


def _two_mode_building(f1_hz: float, f2_hz: float, zeta: float = 0.03):
    """2-story unit-mass frame with its two natural frequencies prescribed.

    Requires f2/f1 >= 1 + sqrt(2) (the attainable range of the chain);
    used to give study targets a controlled low/high frequency mix.
    """
    lam1 = (2 * np.pi * f1_hz) ** 2
    lam2 = (2 * np.pi * f2_hz) ** 2
    s, prod = lam1 + lam2, lam1 * lam2
    disc = s * s - 8.0 * prod
    if disc < 0:
        raise ValueError(f"frequency ratio {f2_hz / f1_hz:.2f} too small for a 2-story chain")
    k2 = (s + np.sqrt(disc)) / 4.0
    k1 = prod / k2
    a0, a1 = rayleigh_coefficients(np.sqrt(lam1), np.sqrt(lam2), zeta, zeta)
    return build_shear_building(2, [1.0, 1.0], [k1, k2], a0, a1)


def _study_generation(ex, dominant_hz: float, bandwidth: float) -> GenerationConfig:
    duration = ex["duration"]
    return GenerationConfig(
        duration=duration, dt=ex["dt"],
        rise_time=duration / 5.0, plateau_time=duration / 3.2, decay_rate=0.8,
        dominant_frequency=2 * np.pi * dominant_hz, bandwidth=bandwidth,
        seed=ex["seed"])


def _study_pair(cfg):
    """One (record, top-floor response) pair for the single-target studies.

    The target mixes two prescribed modes (f_low and 4 f_low) and the
    record's dominant frequency sits on the upper mode so both bands are
    genuinely present in the response.
    """
    ex = cfg["experiment"]
    from .excitation import generate_record
    record = generate_record(_study_generation(ex, 4.0 * ex["f_low_hz"], 0.5))
    building = _two_mode_building(ex["f_low_hz"], 4.0 * ex["f_low_hz"])
    from .dataset import solve_response_pairs
    return solve_response_pairs([record], building, NewmarkParams(dt=ex["dt"]),
                                floors=(1,))[0]


def _study_records(cfg):
    ex = cfg["experiment"]
    return generate_ensemble(_study_generation(ex, 0.8, 0.4), ex["records"])


# full-size reference presets restored by --full-scale
FULL_SCALE = {
    "scale-spacing": {"epochs": 1500, "n_subnets": 30, "kappa_up_cycles": 60.0,
                      "trunk_neurons": 10, "subnet_out": 10, "branch_hidden": 500,
                      "sensors": 100},
    "structures": {"epochs": 1500, "n_subnets": 100, "kappa_up_cycles": 100.0,
                   "trunk_neurons": 10, "branch_neurons": 5, "subnet_out": 10,
                   "sensors": 100},
    "amplitude-separation": {"epochs": 1500, "tier_caps": (10.0, 50.0, 100.0),
                             "subnet_neurons": 8, "branch_hidden": 128,
                             "batch_size": 32},
    "multifloor": {"epochs": 1500, "tier_caps": (10.0, 50.0, 100.0),
                   "subnet_neurons": 8, "branch_hidden": 128, "batch_size": 32},
}


def cmd_experiment(name: str, cfg, out_dir: Path, full_scale: bool = False) -> int:
    ex = cfg["experiment"]
    seed = ex["seed"]
    epochs = FULL_SCALE[name]["epochs"] if full_scale else ex["epochs"]

    if name == "scale-spacing":
        preset = (FULL_SCALE[name] if full_scale
                  else {"n_subnets": ex["n_subnets"], "kappa_up_cycles": ex["kappa_up_cycles"],
                        "trunk_neurons": 8, "subnet_out": 4, "branch_hidden": 32,
                        "sensors": ex["sensors"]})
        report = scale_spacing_study(
            _study_pair(cfg), kappa_up=2 * np.pi * preset["kappa_up_cycles"],
            n_subnets=preset["n_subnets"], epochs=epochs, m=preset["sensors"],
            trunk_neurons=preset["trunk_neurons"], subnet_out=preset["subnet_out"],
            branch_hidden=preset["branch_hidden"], seed=seed)
    elif name == "structures":
        preset = (FULL_SCALE[name] if full_scale
                  else {"n_subnets": ex["n_subnets"], "kappa_up_cycles": ex["kappa_up_cycles"],
                        "trunk_neurons": 8, "branch_neurons": 4, "subnet_out": 8,
                        "sensors": ex["sensors"]})
        report = structure_study(
            _study_pair(cfg), epochs=epochs,
            kappa_up=2 * np.pi * preset["kappa_up_cycles"], n_subnets=preset["n_subnets"],
            trunk_neurons=preset["trunk_neurons"], branch_neurons=preset["branch_neurons"],
            subnet_out=preset["subnet_out"], m=preset["sensors"], seed=seed)
    elif name == "amplitude-separation":
        preset = (FULL_SCALE[name] if full_scale
                  else {"tier_caps": (4.0, 16.0, 40.0), "subnet_neurons": 8,
                        "branch_hidden": 48, "batch_size": 16})
        records = _study_records(cfg)
        dataset = build_two_tier_dataset(
            records, NewmarkParams(dt=ex["dt"]), m=ex["sensors"],
            f_low_hz=ex["f_low_hz"], freq_ratio=ex["freq_ratio"],
            amp_ratio=ex["amp_ratio"], split=0.8)
        report = amplitude_separation_study(
            dataset, epochs=epochs, tier_caps=preset["tier_caps"],
            subnet_neurons=preset["subnet_neurons"], branch_hidden=preset["branch_hidden"],
            batch_size=preset["batch_size"],
            augmentation=AugmentationConfig(subset_size=4, count=0, seed=seed),
            seed=seed)
    elif name == "multifloor":
        preset = (FULL_SCALE[name] if full_scale
                  else {"tier_caps": (4.0, 16.0, 40.0), "subnet_neurons": 8,
                        "branch_hidden": 48, "batch_size": 16})
        records = _study_records(cfg)
        building = _building(cfg)
        floors = tuple(range(1, building.n_floors))
        dataset = build_dataset(records, building, NewmarkParams(dt=ex["dt"]),
                                m=ex["sensors"], floors=floors, split=0.8)
        report = multifloor_study(
            dataset, epochs=epochs, tier_caps=preset["tier_caps"],
            subnet_neurons=preset["subnet_neurons"], branch_hidden=preset["branch_hidden"],
            batch_size=preset["batch_size"],
            augmentation=AugmentationConfig(subset_size=4, count=0, seed=seed),
            seed=seed)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown experiment {name!r}; valid: {', '.join(EXPERIMENT_NAMES)}")

    report.write(out_dir)
    print(f"experiment {name} report written to {out_dir}")
    print(json.dumps(report.summary, indent=2))
    return EXIT_OK


def _apply_overrides(cfg, args) -> None:
    if getattr(args, "seed", None) is not None:
        for section in ("generator", "model", "training", "experiment"):
            cfg.set(section, "seed", args.seed)
    if getattr(args, "epochs", None) is not None:
        cfg.set("training", "epochs", args.epochs)
        cfg.set("experiment", "epochs", args.epochs)
    if getattr(args, "count", None) is not None:
        cfg.set("generator", "count", args.count)
    if getattr(args, "factor", None) is not None:
        cfg.set("preprocess", "factor", args.factor)
    if getattr(args, "order", None) is not None:
        cfg.set("preprocess", "order", args.order)


def _set_thread_limit(threads: int) -> None:
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=threads)
    except ImportError:
        if threads != 1:
            print("threadpoolctl unavailable; thread limit not applied", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seisdon",
        description="Seismic response operator learning workbench.",
        epilog="Configuration file keys and defaults:\n" + describe_schema(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="worker thread cap; 1 (default) is bit-reproducible")
    sub = parser.add_subparsers(dest="command", required=True)

    common = {"--config": dict(type=Path, default=None, help="INI configuration file"),
              "--seed": dict(type=int, default=None, help="override every seed field")}

    p = sub.add_parser("generate", help="write a synthetic record ensemble",
                       description="Outputs: one (t, acceleration) CSV per record "
                                   "plus manifest.json; byte-identical on rerun.")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=None, help="override record count")
    for flag, kw in common.items():
        p.add_argument(flag, **kw)

    p = sub.add_parser("preprocess", help="anti-aliased decimation of records",
                       description="Outputs: resampled record CSVs, per-record "
                                   "before/after amplitude spectra CSVs, manifest.json "
                                   "with the aliasing-theorem audit.")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--factor", type=int, default=None, help="override decimation factor")
    p.add_argument("--order", type=int, default=None, help="override filter order")
    for flag, kw in common.items():
        p.add_argument(flag, **kw)

    p = sub.add_parser("train", help="build the dataset and train a model",
                       description="Outputs: checkpoint.npz, metrics.csv "
                                   "(epoch,train_rel_l2,test_rel_l2).")
    p.add_argument("--data", type=Path, required=True, help="directory of record CSVs")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None, help="override epoch count")
    p.add_argument("--dataset-out", type=Path, default=None,
                   help="also serialize the built dataset here")
    for flag, kw in common.items():
        p.add_argument(flag, **kw)

    p = sub.add_parser("predict", help="run one record through a checkpoint",
                       description="Outputs: CSV (t, y_floor...) on the record's grid; "
                                   "prints inference wall time.")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--record", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("experiment", help="run a comparison study",
                       description="Outputs per arm: curves CSV and spectra CSV, plus "
                                   "summary.json.")
    p.add_argument("name", choices=EXPERIMENT_NAMES)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None, help="override epoch count")
    p.add_argument("--full-scale", action="store_true",
                   help="use the full-size reference configuration (slow)")
    for flag, kw in common.items():
        p.add_argument(flag, **kw)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _set_thread_limit(args.threads)
        if args.command == "predict":
            return cmd_predict(args.checkpoint, args.record, args.out)
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        if args.command == "generate":
            return cmd_generate(cfg, args.out)
        if args.command == "preprocess":
            return cmd_preprocess(cfg, args.in_dir, args.out)
        if args.command == "train":
            return cmd_train(cfg, args.data, args.out, args.dataset_out)
        if args.command == "experiment":
            return cmd_experiment(args.name, cfg, args.out, args.full_scale)
        raise ConfigError(f"unknown command {args.command!r}")  # pragma: no cover
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, TrainingDivergence, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
