"""Controlled comparison studies over model structures and scale schedules.

Every study is deterministic in (config, seed), shares datasets bit-exactly
across its arms, and writes machine-readable reports: a JSON summary plus
per-arm CSV curves and spectra, enough to regenerate every plot offline.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, no_grad
from .dataset import (
    AugmentationConfig,
    OperatorDataset,
    ResponsePair,
    sample_from_pair,
    solve_response_pairs,
)
from .deeponet import (
    build_amplitude_separated,
    build_variant,
    count_parameters,
)
from .structural import NewmarkParams, build_shear_building
from .training import TrainConfig, stack_rows, train

# benchmark constant for the full-scale single-floor setup this workbench
# reproduces at desk scale; reported alongside study outcomes for context
REFERENCE_FINAL_TEST_REL_L2 = 0.13


@dataclass
class ArmResult:
    name: str
    config: dict
    epoch_curves: dict = field(default_factory=dict)   # column -> list per epoch
    spectra: dict = field(default_factory=dict)        # column -> np.ndarray
    final: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    experiment: str
    seed: int
    arms: list
    summary: dict = field(default_factory=dict)

    def arm(self, name: str) -> ArmResult:
        for arm in self.arms:
            if arm.name == name:
                return arm
        raise KeyError(name)

    def write(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "experiment": self.experiment,
            "seed": self.seed,
            "summary": self.summary,
            "arms": [{"name": a.name, "config": a.config, "final": a.final}
                     for a in self.arms],
        }
        (out_dir / "summary.json").write_text(json.dumps(payload, indent=2) + "\n")
        for arm in self.arms:
            if arm.epoch_curves:
                cols = list(arm.epoch_curves)
                lines = ["epoch," + ",".join(cols) + "\n"]
                n = len(next(iter(arm.epoch_curves.values())))
                for e in range(n):
                    row = [str(e)] + [repr(float(arm.epoch_curves[c][e])) for c in cols]
                    lines.append(",".join(row) + "\n")
                (out_dir / f"{arm.name}_curves.csv").write_text("".join(lines))
            if arm.spectra:
                cols = list(arm.spectra)
                lines = [",".join(cols) + "\n"]
                n = len(arm.spectra[cols[0]])
                for i in range(n):
                    lines.append(",".join(repr(float(arm.spectra[c][i])) for c in cols) + "\n")
                (out_dir / f"{arm.name}_spectra.csv").write_text("".join(lines))


def linear_scale_schedule(kappa_up: float, n_subnets: int) -> np.ndarray:
    """Equally spaced scales {l, 2l, ..., kappa_up} with l = kappa_up / N."""
    step = kappa_up / n_subnets
    return step * np.arange(1, n_subnets + 1)


def exponential_scale_schedule(kappa_up: float, n_subnets: int) -> np.ndarray:
    """Geometric scales {s^0, s^1, ..., s^(N-1)} with s = kappa_up^(1/N)."""
    s = kappa_up ** (1.0 / n_subnets)
    return s ** np.arange(n_subnets)


def normalized_pair_dataset(pair: ResponsePair, m: int) -> OperatorDataset:
    """Single-pair dataset with the response scaled to unit peak amplitude.

    The pre-experiments fit one trajectory; normalizing makes MSE numbers
    comparable across records and keeps loss thresholds meaningful.
    """
    peak = np.max(np.abs(pair.responses))
    if peak <= 0:
        raise ValueError("target pair has zero response")
    scaled = ResponsePair(id=pair.id, dt=pair.dt, excitation=pair.excitation.copy(),
                          responses=pair.responses / peak, source_ids=pair.source_ids)
    sample = sample_from_pair(scaled, m)
    return OperatorDataset(train=[sample], test=[], train_pairs=[scaled], test_pairs=[],
                           m=m, floors=tuple(range(pair.n_floors)), dt=pair.dt,
                           query_times=sample.query_times)


def grid_mse(model, dataset: OperatorDataset) -> float:
    """Plain mean squared error of the model over the training grid."""
    U, rows, times = stack_rows(dataset.train)
    with no_grad():
        pred = model.forward_rows(Tensor(U), times).data
    return float(np.mean((pred - rows) ** 2))


def amplitude_spectrum(values: np.ndarray) -> np.ndarray:
    return np.abs(np.fft.rfft(values))


def spectral_capture_error(prediction, target, kappa_up: float) -> float:
    """Relative L2 distance of amplitude spectra over bins below kappa_up.

    rfft bin k holds content oscillating k times over the window, i.e.
    normalized angular frequency 2*pi*k; the comparison stops at the
    highest trunk scale so the score reads "how much of the band the
    model could reach did it capture".
    """
    k_max = max(2, int(kappa_up / (2.0 * np.pi)))
    a_pred = amplitude_spectrum(prediction)[: k_max + 1]
    a_true = amplitude_spectrum(target)[: k_max + 1]
    return float(np.linalg.norm(a_pred - a_true) / np.linalg.norm(a_true))


def _epochs_to_threshold(curve, threshold: float):
    for e, v in enumerate(curve):
        if v <= threshold:
            return e
    return None


def scale_spacing_study(target: ResponsePair, kappa_up: float = 120 * np.pi,
                        n_subnets: int = 30, epochs: int = 300, *,
                        m: int = 50, trunk_neurons: int = 8, subnet_out: int = 4,
                        branch_hidden: int = 32, batches_per_epoch: int = 40,
                        learning_rate: float = 1e-3, mse_threshold: float = 1e-6,
                        seed: int = 0) -> ExperimentReport:
    """Linear vs exponential trunk scale spacing on a single target pair.

    Both arms train the same branch-FCN / trunk-multiscale model on one
    normalized (excitation, response) pair and differ only in how the N
    subnet scales fill (0, kappa_up].
    """
    dataset = normalized_pair_dataset(target, m)
    schedules = {
        "linear": linear_scale_schedule(kappa_up, n_subnets),
        "exponential": exponential_scale_schedule(kappa_up, n_subnets),
    }
    duration = (target.n_steps - 1) * target.dt
    target_values = dataset.train[0].targets[:, 0]
    arms = []
    for name, scales in schedules.items():
        model = build_variant(
            "bFCN-tMS", m=m, p=n_subnets * subnet_out, trunk_scales=scales,
            trunk_neurons=trunk_neurons, branch_hidden=branch_hidden,
            t_scale=duration, seed=seed)
        mse_curve = []
        cfg = TrainConfig(epochs=epochs, batches_per_epoch=batches_per_epoch,
                          batch_size=1, learning_rate=learning_rate, seed=seed)
        train(dataset, model, cfg,
              epoch_callback=lambda e, mdl: mse_curve.append(grid_mse(mdl, dataset)))
        U, rows, times = stack_rows(dataset.train)
        with no_grad():
            pred = model.forward_rows(Tensor(U), times).data[0]
        arms.append(ArmResult(
            name=name,
            config={"scales_min": float(scales[0]), "scales_max": float(scales[-1]),
                    "n_subnets": n_subnets, "kappa_up": kappa_up, "epochs": epochs},
            epoch_curves={"mse": mse_curve},
            spectra={"cycles": np.arange(target_values.size // 2 + 1, dtype=float),
                     "target_amplitude": amplitude_spectrum(target_values),
                     "prediction_amplitude": amplitude_spectrum(pred)},
            final={"final_mse": mse_curve[-1],
                   "epochs_to_threshold": _epochs_to_threshold(mse_curve, mse_threshold)},
        ))
    summary = {
        "kappa_up": kappa_up,
        "n_subnets": n_subnets,
        "mse_threshold": mse_threshold,
        "final_mse": {a.name: a.final["final_mse"] for a in arms},
        "linear_not_worse": arms[0].final["final_mse"] <= arms[1].final["final_mse"],
    }
    return ExperimentReport("scale-spacing", seed, arms, summary)


def structure_study(target: ResponsePair, epochs: int = 200, *,
                    kappa_up: float = 120 * np.pi, n_subnets: int = 10,
                    trunk_neurons: int = 8, branch_neurons: int = 4,
                    subnet_out: int = 8, m: int = 50,
                    batches_per_epoch: int = 40, learning_rate: float = 1e-3,
                    seed: int = 0) -> ExperimentReport:
    """All four branch/trunk structure combinations on one target pair.

    The hidden-neuron budget is matched across arms: a fully connected
    side gets one hidden layer width equal to subnets x neurons of its
    multiscale counterpart.  The score is how much of the spectrum below
    kappa_up each trained model captured.
    """
    dataset = normalized_pair_dataset(target, m)
    duration = (target.n_steps - 1) * target.dt
    scales = linear_scale_schedule(kappa_up, n_subnets)
    p = n_subnets * subnet_out
    trunk_budget = n_subnets * trunk_neurons
    branch_budget = n_subnets * branch_neurons
    target_values = dataset.train[0].targets[:, 0]

    arms = []
    for variant in ("bMS-tFCN", "bFCN-tMS", "bMS-tMS", "bFCN-tFCN"):
        kwargs = {"trunk_neurons": trunk_neurons, "branch_neurons": branch_neurons,
                  "trunk_hidden": trunk_budget, "branch_hidden": branch_budget}
        if variant.endswith("tMS"):
            kwargs["trunk_scales"] = scales
        if variant.startswith("bMS"):
            kwargs["branch_scales"] = scales
        model = build_variant(variant, m=m, p=p, t_scale=duration, seed=seed, **kwargs)
        mse_curve = []
        cfg = TrainConfig(epochs=epochs, batches_per_epoch=batches_per_epoch,
                          batch_size=1, learning_rate=learning_rate, seed=seed)
        train(dataset, model, cfg,
              epoch_callback=lambda e, mdl: mse_curve.append(grid_mse(mdl, dataset)))
        U, rows, times = stack_rows(dataset.train)
        with no_grad():
            pred = model.forward_rows(Tensor(U), times).data[0]
        arms.append(ArmResult(
            name=variant,
            config={"p": p, "n_subnets": n_subnets, "kappa_up": kappa_up,
                    "epochs": epochs, "parameters": count_parameters(model)},
            epoch_curves={"mse": mse_curve},
            spectra={"cycles": np.arange(target_values.size // 2 + 1, dtype=float),
                     "target_amplitude": amplitude_spectrum(target_values),
                     "prediction_amplitude": amplitude_spectrum(pred)},
            final={"final_mse": mse_curve[-1],
                   "spectral_error": spectral_capture_error(pred, target_values, kappa_up)},
        ))
    summary = {
        "kappa_up": kappa_up,
        "spectral_error": {a.name: a.final["spectral_error"] for a in arms},
        "final_mse": {a.name: a.final["final_mse"] for a in arms},
    }
    return ExperimentReport("structures", seed, arms, summary)


def _dense_param_count(sizes) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def build_matched_monolithic(separated, m: int, *, n_outputs: int = 1,
                             neurons_factor: int = 3, t_scale: float = 1.0,
                             tolerance: float = 0.05, branch_activation: str = "relu",
                             max_branch_hidden: int = 2048, seed: int = 0):
    """A single multiscale model with the separated stack's parameter budget.

    Uses the finest tier's scale range with neurons_factor-times wider
    subnets, then picks the branch width whose total parameter count lands
    closest to the separated model's (must land within `tolerance`).
    """
    target_count = count_parameters(separated)
    finest = separated.tiers[-1].trunk
    scales = finest.scales
    tier_layers = finest.subnets[0].layer_sizes
    subnet_out = tier_layers[-1]
    n_hidden = len(tier_layers) - 2
    p_total = len(scales) * subnet_out
    if p_total % n_outputs != 0:
        raise ValueError("trunk output does not split across the requested floors")
    p = p_total // n_outputs

    # prefer the widest trunk whose budget the branch can still absorb
    best = None
    for factor in range(neurons_factor, 0, -1):
        neurons = tier_layers[1] * factor
        trunk_sizes = [1] + [neurons] * n_hidden + [subnet_out]
        trunk_count = len(scales) * _dense_param_count(trunk_sizes)
        for h in range(2, max_branch_hidden + 1):
            branch_sizes = [m] + [h] * n_hidden + [p]
            total = trunk_count + _dense_param_count(branch_sizes) + n_outputs
            gap = abs(total - target_count) / target_count
            if best is None or gap < best[2]:
                best = (neurons, h, gap)
            if total > target_count:
                break
        if best[2] <= tolerance:
            break
    neurons, h, gap = best
    if gap > tolerance:
        raise ValueError(f"cannot match parameter budget within {tolerance:.0%} "
                         f"(best gap {gap:.1%} at branch width {h})")
    model = build_variant("bFCN-tMS", m=m, p=p, n_outputs=n_outputs,
                          trunk_scales=scales, trunk_neurons=neurons,
                          branch_hidden=h, branch_activation=branch_activation,
                          t_scale=t_scale, seed=seed)
    return model


def build_two_tier_dataset(records, params: NewmarkParams, m: int, *,
                           f_low_hz: float, freq_ratio: float = 8.0,
                           amp_ratio: float = 10.0, zeta: float = 0.05,
                           split: float = 0.8,
                           augmentation: AugmentationConfig | None = None,
                           band_limit_to_sensors: bool = True,
                           filter_order: int = 8) -> OperatorDataset:
    """Responses with two amplitude tiers: a dominant slow oscillator plus a
    freq_ratio-times faster one at 1/amp_ratio of its amplitude.

    Each component is the displacement of a damped unit-mass oscillator
    driven by the record, so the excitation-to-response map stays linear
    and superposition augmentation remains exact.  By default the records
    are first low-passed (zero phase) to the m-sensor bandwidth: content
    the sensors cannot represent would otherwise alias into the branch
    inputs and make held-out responses unpredictable.
    """
    def oscillator(f_hz):
        w = 2.0 * np.pi * f_hz
        return build_shear_building(1, [1.0], [w * w], a0=2.0 * zeta * w)

    records = list(records)
    if band_limit_to_sensors and records:
        from .dsp import butterworth_design, filter_apply
        from .excitation import SeismicRecord
        from .timeseries import TimeSeries
        n = len(records[0].series)
        cutoff = np.pi * m / n          # sensor Nyquist in normalized frequency
        if cutoff < np.pi:
            lp = butterworth_design(filter_order, cutoff, kind="digital")
            records = [
                SeismicRecord(
                    series=TimeSeries(filter_apply(lp, r.series.values, zero_phase=True),
                                      r.series.dt),
                    id=r.id, seed=r.seed, meta=r.meta)
                for r in records
            ]
    lo_pairs = solve_response_pairs(records, oscillator(f_low_hz), params, floors=(0,))
    hi_pairs = solve_response_pairs(records, oscillator(f_low_hz * freq_ratio),
                                    params, floors=(0,))
    lo_rms = np.sqrt(np.mean([np.mean(p.responses ** 2) for p in lo_pairs]))
    hi_rms = np.sqrt(np.mean([np.mean(p.responses ** 2) for p in hi_pairs]))
    pairs = [
        ResponsePair(id=lo.id, dt=params.dt, excitation=lo.excitation,
                     responses=lo.responses / lo_rms
                     + hi.responses / (amp_ratio * hi_rms),
                     source_ids=lo.source_ids)
        for lo, hi in zip(lo_pairs, hi_pairs)
    ]
    n_train = int(round(split * len(pairs)))
    if n_train < 1 or n_train >= len(pairs):
        raise ValueError("degenerate split")
    train_pairs, test_pairs = pairs[:n_train], pairs[n_train:]
    train_samples = [sample_from_pair(p, m) for p in train_pairs]
    if augmentation is not None and augmentation.count > 0:
        from .dataset import augment_superposition
        train_samples += [sample_from_pair(p, m)
                          for p in augment_superposition(train_pairs, augmentation)]
    return OperatorDataset(
        train=train_samples, test=[sample_from_pair(p, m) for p in test_pairs],
        train_pairs=train_pairs, test_pairs=test_pairs,
        m=m, floors=(0,), dt=params.dt,
        query_times=np.arange(train_pairs[0].n_steps) * params.dt,
    )


def amplitude_separation_study(dataset: OperatorDataset, epochs: int = 300, *,
                               epsilon: float = 0.1, tier_caps=(4.0, 16.0, 40.0),
                               tier_subnet_counts=None, subnet_neurons: int = 8,
                               branch_hidden: int = 48,
                               batches_per_epoch: int = 40, batch_size: int = 16,
                               learning_rate: float = 1e-3,
                               augmentation: AugmentationConfig | None = None,
                               budget_tolerance: float = 0.05,
                               seed: int = 0) -> ExperimentReport:
    """Amplitude-separated stack vs one monolithic multiscale model.

    Both arms share the dataset, seed and training protocol; the
    monolithic comparator's parameter count is matched to the stack's
    within budget_tolerance.
    """
    duration = float(dataset.query_times[-1])
    separated = build_amplitude_separated(
        m=dataset.m, n_outputs=dataset.n_floors, epsilon=epsilon,
        tier_caps=tier_caps, tier_subnet_counts=tier_subnet_counts,
        subnet_neurons=subnet_neurons, branch_hidden=branch_hidden,
        t_scale=duration, seed=seed)
    monolithic = build_matched_monolithic(
        separated, dataset.m, n_outputs=dataset.n_floors, t_scale=duration,
        tolerance=budget_tolerance, seed=seed)

    cfg = TrainConfig(epochs=epochs, batches_per_epoch=batches_per_epoch,
                      batch_size=batch_size, learning_rate=learning_rate,
                      seed=seed, augmentation=augmentation)
    arms = []
    for name, model in (("separated", separated), ("monolithic", monolithic)):
        _, history = train(dataset, model, cfg)
        arms.append(ArmResult(
            name=name,
            config={"parameters": count_parameters(model), "epochs": epochs},
            epoch_curves={"train_rel_l2": history.train_rel_l2,
                          "test_rel_l2": history.test_rel_l2},
            final={"final_train_rel_l2": history.train_rel_l2[-1],
                   "final_test_rel_l2": history.test_rel_l2[-1]},
        ))
    counts = {a.name: a.config["parameters"] for a in arms}
    budget_gap = abs(counts["separated"] - counts["monolithic"]) / counts["separated"]
    summary = {
        "parameter_counts": counts,
        "budget_gap": budget_gap,
        "final_test_rel_l2": {a.name: a.final["final_test_rel_l2"] for a in arms},
        "separated_not_worse": (arms[0].final["final_test_rel_l2"]
                                <= arms[1].final["final_test_rel_l2"]),
        "reference_final_test_rel_l2": REFERENCE_FINAL_TEST_REL_L2,
    }
    return ExperimentReport("amplitude-separation", seed, arms, summary)


def multifloor_study(dataset: OperatorDataset, epochs: int = 300, *,
                     epsilon: float = 0.1, tier_caps=(4.0, 16.0, 40.0),
                     subnet_neurons: int = 8, branch_hidden: int = 48,
                     batches_per_epoch: int = 40, batch_size: int = 16,
                     learning_rate: float = 1e-3,
                     augmentation: AugmentationConfig | None = None,
                     seed: int = 0) -> ExperimentReport:
    """One amplitude-separated model predicting every requested floor at once.

    Reports per-floor relative L2 and per-floor spectra, plus the floors
    ranked by response amplitude for frequency/amplitude inspection.
    """
    l = dataset.n_floors
    if l < 2:
        raise ValueError("multifloor study needs at least two floors")
    duration = float(dataset.query_times[-1])
    model = build_amplitude_separated(
        m=dataset.m, n_outputs=l, epsilon=epsilon, tier_caps=tier_caps,
        subnet_neurons=subnet_neurons, branch_hidden=branch_hidden,
        t_scale=duration, seed=seed)
    cfg = TrainConfig(epochs=epochs, batches_per_epoch=batches_per_epoch,
                      batch_size=batch_size, learning_rate=learning_rate,
                      seed=seed, augmentation=augmentation)
    _, history = train(dataset, model, cfg)

    U, rows, times = stack_rows(dataset.test)
    with no_grad():
        pred = model.forward_rows(Tensor(U), times).data
    n_test = len(dataset.test)
    per_floor_rel = []
    spectra = {"cycles": np.arange(times.size // 2 + 1, dtype=float)}
    for f in range(l):
        block = slice(f * n_test, (f + 1) * n_test)
        diff = np.linalg.norm(pred[block] - rows[block], axis=1)
        norm = np.linalg.norm(rows[block], axis=1)
        per_floor_rel.append(float(np.mean(diff / norm)))
        spectra[f"floor{dataset.floors[f]}_target"] = amplitude_spectrum(rows[block][0])
        spectra[f"floor{dataset.floors[f]}_prediction"] = amplitude_spectrum(pred[block][0])

    amplitudes = [float(np.max(np.abs(rows[f * n_test:(f + 1) * n_test])))
                  for f in range(l)]
    ranking = sorted(range(l), key=lambda f: -amplitudes[f])
    arm = ArmResult(
        name="multifloor",
        config={"floors": list(dataset.floors), "epochs": epochs,
                "parameters": count_parameters(model)},
        epoch_curves={"train_rel_l2": history.train_rel_l2,
                      "test_rel_l2": history.test_rel_l2},
        spectra=spectra,
        final={"per_floor_rel_l2": per_floor_rel,
               "per_floor_peak_amplitude": amplitudes,
               "floors_by_amplitude": [int(dataset.floors[f]) for f in ranking],
               "final_test_rel_l2": history.test_rel_l2[-1]},
    )
    summary = {
        "per_floor_rel_l2": dict(zip(map(str, dataset.floors), per_floor_rel)),
        "floors_by_amplitude": arm.final["floors_by_amplitude"],
    }
    return ExperimentReport("multifloor", seed, [arm], summary)
