"""Declarative run configuration: INI sections with typed, documented defaults.

Unknown sections or keys are rejected outright so typos fail loudly
instead of silently running defaults.  Every value below reproduces the
desk-scale pipeline; command-line flags override file values.
"""

import configparser
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration file or value (CLI exit code 2)."""


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "yes", "on", "1"):
        return True
    if value in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _parse_float_list(text: str):
    return tuple(float(v) for v in text.split(",") if v.strip())


# schema: section -> key -> (default, parser, help)
SCHEMA = {
    "building": {
        "floors": (8, int, "number of stories"),
        "mass": (2.0e5, float, "per-floor mass, kg"),
        "stiffness": (2.5e8, float, "per-story lateral stiffness, N/m"),
        "zeta": (0.02, float, "damping ratio anchored on the two lowest modes"),
    },
    "generator": {
        # desk-scale defaults; the classic full-size ensemble is count=50,
        # duration=40, dt=0.005, rise=4, plateau=10, decay=0.3, dominant=2.5 Hz,
        # bandwidth=0.6
        "count": (20, int, "records per ensemble"),
        "duration": (4.0, float, "record length, s"),
        "dt": (0.01, float, "sampling step, s"),
        "rise_time": (0.8, float, "envelope rise, s"),
        "plateau_time": (1.2, float, "envelope plateau, s"),
        "decay_rate": (1.2, float, "envelope exponential decay, 1/s"),
        "dominant_frequency_hz": (0.8, float, "soil-filter dominant frequency, Hz"),
        "bandwidth": (0.3, float, "soil-filter bandwidth ratio, (0, 1]"),
        "intensity": (1.0, float, "strong-phase RMS scale, m/s^2"),
        "seed": (7, int, "base RNG seed; record k uses seed + k"),
    },
    "preprocess": {
        "factor": (4, int, "decimation factor"),
        "order": (8, int, "anti-aliasing Butterworth order"),
    },
    "dataset": {
        "sensors": (100, int, "branch-input sensor count m"),
        "floors": ((7,), _parse_int_list, "0-based floor indices to predict, comma separated"),
        "split": (0.8, float, "train fraction of the record list"),
        "augment_count": (0, int, "precomputed augmented samples added to the train set"),
        "subset_size": (5, int, "base pairs combined per augmented sample"),
        "signed_weights": (False, _parse_bool, "allow negative superposition weights"),
    },
    "model": {
        # desk sizes; the full-size reference stack is tier_caps=10,50,100
        # with one subnet per integer cycle and branch_hidden=128
        "kind": ("amplitude-separated", str,
                 "amplitude-separated or a variant: bMS-tFCN, bFCN-tMS, bMS-tMS, bFCN-tFCN"),
        "epsilon": (0.1, float, "tier attenuation factor"),
        "tier_caps": ((6.0, 14.0, 22.0), _parse_float_list,
                      "per-tier trunk scale caps in cycles over the record"),
        "tier_subnets": ((4, 6, 9), _parse_int_list,
                         "per-tier subnet counts; empty = one per integer cycle"),
        "subnet_neurons": (8, int, "neurons per multiscale subnet layer"),
        "branch_hidden": (96, int, "branch hidden width"),
        "branch_activation": ("relu", str, "branch activation: relu, sin or identity"),
        "latent": (1000, int, "latent feature count p for plain variants"),
        "trunk_neurons": (10, int, "trunk subnet neurons (plain multiscale trunk)"),
        "branch_neurons": (5, int, "branch subnet neurons (plain multiscale branch)"),
        "trunk_hidden": (1000, int, "trunk hidden width (fully connected trunk)"),
        "trunk_scale_cap": (100.0, float, "trunk scale cap in cycles (plain variants)"),
        "trunk_subnets": (100, int, "trunk subnet count (plain multiscale trunk)"),
        "seed": (0, int, "parameter initialization seed"),
    },
    "training": {
        # desk scale; the full-size protocol is 1500 epochs with batch 32
        "epochs": (300, int, "training epochs"),
        "batches_per_epoch": (40, int, "optimizer steps per epoch"),
        "batch_size": (24, int, "samples per batch"),
        "learning_rate": (1e-3, float, "Adam learning rate"),
        "seed": (0, int, "shuffling / augmentation seed"),
        "on_the_fly": (True, _parse_bool,
                       "synthesize every batch by superposition of the train pairs"),
    },
    "experiment": {
        "name": ("amplitude-separation", str,
                 "scale-spacing, structures, amplitude-separation or multifloor"),
        "epochs": (300, int, "training epochs per arm"),
        "seed": (0, int, "experiment seed"),
        "duration": (8.0, float, "study record length, s"),
        "dt": (0.02, float, "study sampling step, s"),
        "records": (20, int, "records for dataset-backed studies"),
        "sensors": (50, int, "branch sensor count for studies"),
        "kappa_up_cycles": (20.0, float, "upper scale bound in cycles (scale studies)"),
        "n_subnets": (10, int, "trunk subnets (scale studies)"),
        "f_low_hz": (0.5, float, "slow oscillator frequency of the two-tier target"),
        "freq_ratio": (8.0, float, "fast/slow frequency ratio of the two-tier target"),
        "amp_ratio": (10.0, float, "slow/fast amplitude ratio of the two-tier target"),
    },
}


class RunConfig:
    """Typed view over the schema with file and flag overrides applied."""

    def __init__(self, values: dict):
        self._values = values

    def __getitem__(self, section: str) -> dict:
        return self._values[section]

    def get(self, section: str, key: str):
        return self._values[section][key]

    def set(self, section: str, key: str, value) -> None:
        if section not in self._values or key not in self._values[section]:
            raise ConfigError(f"unknown configuration key [{section}] {key}")
        self._values[section][key] = value


def default_config() -> RunConfig:
    return RunConfig({s: {k: entry[0] for k, entry in keys.items()}
                      for s, keys in SCHEMA.items()})


def load_config(path=None) -> RunConfig:
    """Parse an INI file against the schema; None loads pure defaults."""
    config = default_config()
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}: unknown configuration key [{section}] {key}")
            _, parse, _ = SCHEMA[section][key]
            try:
                config.set(section, key, parse(raw))
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: bad value for [{section}] {key}: {raw!r} ({exc})")
    return config


def describe_schema() -> str:
    """Human-readable key listing for --help output."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (default, _, help_text) in keys.items():
            shown = ",".join(str(v) for v in default) if isinstance(default, tuple) else default
            lines.append(f"  {key} = {shown}  ; {help_text}")
    return "\n".join(lines)
