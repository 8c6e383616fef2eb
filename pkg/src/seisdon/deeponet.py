"""Branch/trunk operator networks and the amplitude-separated ensemble.

A model maps (u, t) to per-floor responses: the branch net encodes the
excitation's sensor samples u into p latent features, the trunk net
encodes the query time into p features per output floor, and the
prediction is their dot product plus a per-floor bias.  Query times are
divided by t_scale first, so trunk subnet scales count oscillation
cycles over the record window regardless of its physical duration.

The amplitude-separated ensemble sums n tiers eps^i * f_i(u, t), where
later tiers carry progressively more trunk scales: small-amplitude
content tends to live at high frequencies, so the heavily scaled tiers
are pre-shrunk by eps^i instead of fighting the large-amplitude fit.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, no_grad
from .neural import (
    DenseNet,
    MultiscaleNet,
    _as_rng,
    assign_parameters,
    load_checkpoint,
    save_checkpoint,
)

VARIANTS = ("bMS-tFCN", "bFCN-tMS", "bMS-tMS", "bFCN-tFCN")


def scale_ladder(max_cycles: float, count: int | None = None) -> np.ndarray:
    """Trunk scale set 1 + 2*pi*k for k evenly spaced in [0, max_cycles].

    With the trunk input normalized to [0, 1], scale 1 + 2*pi*k lets a
    subnet express content oscillating about k times over the window.
    count defaults to one subnet per integer k.
    """
    if max_cycles <= 0:
        raise ValueError("max_cycles must be positive")
    if count is None:
        count = int(round(max_cycles)) + 1
    if count < 1:
        raise ValueError("count must be >= 1")
    return 1.0 + 2.0 * np.pi * np.linspace(0.0, float(max_cycles), count)


REFERENCE_TRUNK_SCALES = (100.0, 100)    # cap in cycles, subnet count
REFERENCE_LATENT = 1000
REFERENCE_TRUNK_NEURONS = 10
REFERENCE_BRANCH_NEURONS = 5
REFERENCE_TRUNK_HIDDEN = 1000
REFERENCE_BRANCH_HIDDEN = 500


@dataclass
class DeepONetModel:
    branch: object                  # DenseNet | MultiscaleNet, m -> p
    trunk: object                   # DenseNet | MultiscaleNet, 1 -> p * l
    bias: Tensor                    # (l,)
    variant: str
    n_outputs: int = 1              # l, floors predicted per query
    t_scale: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.trunk.input_size != 1:
            raise ValueError("trunk must take the scalar query time")
        p = self.branch.output_size
        if p < 1 or self.trunk.output_size != p * self.n_outputs:
            raise ValueError(
                f"trunk output {self.trunk.output_size} must equal "
                f"branch output {p} x n_outputs {self.n_outputs}")
        if not self.t_scale > 0:
            raise ValueError("t_scale must be positive")

    @property
    def latent_size(self) -> int:
        return self.branch.output_size

    @property
    def sensor_count(self) -> int:
        return self.branch.input_size

    def parameters(self) -> list:
        return self.branch.parameters() + self.trunk.parameters() + [self.bias]

    def forward_rows(self, u: Tensor, times: np.ndarray) -> Tensor:
        """Predictions as a (n_outputs * batch, T) tape Tensor.

        Rows are floor-major: floor 0's batch rows first, then floor 1's,
        and so on; training targets are arranged the same way.
        """
        tau = Tensor((np.asarray(times, dtype=np.float64) / self.t_scale).reshape(-1, 1))
        trunk_out = self.trunk.forward(tau)             # (T, p*l)
        branch_out = self.branch.forward(u)             # (n, p)
        p = self.latent_size
        per_floor = []
        for f in range(self.n_outputs):
            trunk_f = trunk_out[:, f * p:(f + 1) * p]   # (T, p)
            per_floor.append(branch_out @ trunk_f.T + self.bias[f])
        return concat(per_floor, axis=0) if len(per_floor) > 1 else per_floor[0]


def deeponet_predict(model, U, times) -> np.ndarray:
    """Evaluate on a (n, m) batch at shared query times -> (n, T, l) array."""
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    times = np.asarray(times, dtype=np.float64)
    with no_grad():
        rows = model.forward_rows(Tensor(U), times).data
    n = U.shape[0]
    l = rows.shape[0] // n
    return rows.reshape(l, n, times.size).transpose(1, 2, 0)


def deeponet_eval(model, u, t: float) -> np.ndarray:
    """Single query: sensor vector u and scalar time t -> length-l output."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1:
        raise ValueError("u must be a flat sensor vector")
    return deeponet_predict(model, u.reshape(1, -1), np.array([float(t)]))[0, 0]


@dataclass
class AmplitudeSeparatedModel:
    """Sum of tiers eps^i * f_i with tier-specific trunk scale ranges."""

    epsilon: float
    tiers: list

    def __post_init__(self):
        if not self.tiers:
            raise ValueError("need at least one tier")
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError("epsilon must lie in [0, 1)")
        outs = {tier.n_outputs for tier in self.tiers}
        if len(outs) != 1:
            raise ValueError("tiers must share the output arity")
        scales = {tier.t_scale for tier in self.tiers}
        if len(scales) != 1:
            raise ValueError("tiers must share t_scale")

    @property
    def n_outputs(self) -> int:
        return self.tiers[0].n_outputs

    @property
    def sensor_count(self) -> int:
        return self.tiers[0].sensor_count

    @property
    def t_scale(self) -> float:
        return self.tiers[0].t_scale

    def parameters(self) -> list:
        out = []
        for tier in self.tiers:
            out.extend(tier.parameters())
        return out

    def tier_weight(self, index: int) -> float:
        # eps^0 is 1 even at eps = 0, where the model collapses to tier 0
        return 1.0 if index == 0 else self.epsilon ** index

    def forward_rows(self, u: Tensor, times) -> Tensor:
        total = None
        for i, tier in enumerate(self.tiers):
            contribution = tier.forward_rows(u, times) * self.tier_weight(i)
            total = contribution if total is None else total + contribution
        return total


def amplitude_separated_eval(model: AmplitudeSeparatedModel, u, t: float) -> np.ndarray:
    return deeponet_eval(model, u, t)


def count_parameters(model) -> int:
    return sum(p.data.size for p in model.parameters())


def _split_sizes(total: int, parts: int, what: str) -> int:
    if total % parts != 0:
        raise ValueError(f"{what}: {parts} subnets cannot evenly share {total} output features")
    return total // parts


def build_variant(variant: str, m: int, p: int = REFERENCE_LATENT, *,
                  n_outputs: int = 1,
                  trunk_scales=None, branch_scales=None,
                  trunk_neurons: int = REFERENCE_TRUNK_NEURONS,
                  branch_neurons: int = REFERENCE_BRANCH_NEURONS,
                  trunk_hidden: int = REFERENCE_TRUNK_HIDDEN,
                  branch_hidden: int = REFERENCE_BRANCH_HIDDEN,
                  n_hidden_layers: int = 4,
                  activation: str = "sin",
                  branch_activation: str | None = None,
                  t_scale: float = 1.0,
                  seed=0) -> DeepONetModel:
    """Wire one of the four branch/trunk structure variants.

    Defaults reproduce the reference sizing: a multiscale side gets 100
    four-layer subnets (10 trunk / 5 branch neurons per layer) with scales
    from 1 to 1 + 200*pi, and a fully connected side gets four hidden
    layers of 1000 (trunk) or 500 (branch) neurons, matching the total
    hidden-neuron budget of the multiscale counterpart.  Passing scales
    for a fully connected side is an error.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    trunk_is_ms = variant.endswith("tMS")
    branch_is_ms = variant.startswith("bMS")
    if trunk_scales is not None and not trunk_is_ms:
        raise ValueError(f"{variant} has a fully connected trunk; trunk_scales not applicable")
    if branch_scales is not None and not branch_is_ms:
        raise ValueError(f"{variant} has a fully connected branch; branch_scales not applicable")
    branch_act = branch_activation if branch_activation is not None else activation
    rng = _as_rng(seed)

    if branch_is_ms:
        scales = np.asarray(branch_scales if branch_scales is not None
                            else scale_ladder(*REFERENCE_TRUNK_SCALES))
        out_per = _split_sizes(p, scales.size, "branch")
        layers = [m] + [branch_neurons] * n_hidden_layers + [out_per]
        branch = MultiscaleNet.create(scales, layers, activation=branch_act, seed_or_rng=rng)
    else:
        branch = DenseNet.create([m] + [branch_hidden] * n_hidden_layers + [p],
                                 branch_act, seed_or_rng=rng)

    trunk_out_total = p * n_outputs
    if trunk_is_ms:
        scales = np.asarray(trunk_scales if trunk_scales is not None
                            else scale_ladder(*REFERENCE_TRUNK_SCALES))
        out_per = _split_sizes(trunk_out_total, scales.size, "trunk")
        layers = [1] + [trunk_neurons] * n_hidden_layers + [out_per]
        trunk = MultiscaleNet.create(scales, layers, activation=activation, seed_or_rng=rng)
    else:
        trunk = DenseNet.create([1] + [trunk_hidden] * n_hidden_layers + [trunk_out_total],
                                activation, seed_or_rng=rng)

    bias = Tensor(np.zeros(n_outputs), requires_grad=True)
    return DeepONetModel(branch=branch, trunk=trunk, bias=bias, variant=variant,
                         n_outputs=n_outputs, t_scale=t_scale)


DEFAULT_TIER_CAPS = (10.0, 50.0, 100.0)     # cycles; scale caps 1+20pi, 1+100pi, 1+200pi


def build_amplitude_separated(m: int, *,
                              n_outputs: int = 1,
                              epsilon: float = 0.1,
                              tier_caps=DEFAULT_TIER_CAPS,
                              tier_subnet_counts=None,
                              subnet_neurons: int = 8,
                              subnet_out: int | None = None,
                              branch_hidden: int = 128,
                              n_hidden_layers: int = 4,
                              branch_activation: str = "relu",
                              trunk_activation: str = "sin",
                              t_scale: float = 1.0,
                              seed=0) -> AmplitudeSeparatedModel:
    """Stack of DeepONet tiers weighted by eps^0, eps^1, ...

    Tier i's trunk is a multiscale net whose scales reach tier_caps[i]
    cycles; caps ascend so later (smaller-amplitude) tiers carry the
    higher-frequency scales and more subnets.  Each tier has its own
    fully connected branch.  subnet_out defaults to subnet_neurons,
    rounded up to a multiple of n_outputs so features split per floor.
    """
    rng = _as_rng(seed)
    caps = list(tier_caps)
    if sorted(caps) != caps:
        raise ValueError("tier_caps must ascend (later tiers carry higher frequencies)")
    if tier_subnet_counts is not None and len(tier_subnet_counts) != len(caps):
        raise ValueError("tier_subnet_counts must match tier_caps length")
    if subnet_out is None:
        subnet_out = subnet_neurons
    subnet_out = int(np.ceil(subnet_out / n_outputs)) * n_outputs

    tiers = []
    for i, cap in enumerate(caps):
        count = None if tier_subnet_counts is None else tier_subnet_counts[i]
        scales = scale_ladder(cap, count)
        trunk_layers = [1] + [subnet_neurons] * n_hidden_layers + [subnet_out]
        trunk = MultiscaleNet.create(scales, trunk_layers, activation=trunk_activation,
                                     seed_or_rng=rng)
        p = trunk.output_size // n_outputs
        branch = DenseNet.create([m] + [branch_hidden] * n_hidden_layers + [p],
                                 branch_activation, seed_or_rng=rng)
        bias = Tensor(np.zeros(n_outputs), requires_grad=True)
        tiers.append(DeepONetModel(branch=branch, trunk=trunk, bias=bias,
                                   variant="bFCN-tMS", n_outputs=n_outputs,
                                   t_scale=t_scale))
    return AmplitudeSeparatedModel(epsilon=epsilon, tiers=tiers)


# -- model checkpointing ---------------------------------------------------


def _net_arch(net) -> dict:
    if isinstance(net, MultiscaleNet):
        return {"kind": "multiscale", "scales": [float(s) for s in net.scales],
                "layers": list(net.subnets[0].layer_sizes),
                "activation": net.subnets[0].activation}
    return {"kind": "dense", "layers": list(net.layer_sizes), "activation": net.activation}


def _net_from_arch(arch: dict):
    if arch["kind"] == "multiscale":
        return MultiscaleNet.create(np.asarray(arch["scales"]), arch["layers"],
                                    activation=arch["activation"], seed_or_rng=0)
    return DenseNet.create(arch["layers"], arch["activation"], seed_or_rng=0)


def _deeponet_arch(model: DeepONetModel) -> dict:
    return {"variant": model.variant, "n_outputs": model.n_outputs,
            "t_scale": model.t_scale,
            "branch": _net_arch(model.branch), "trunk": _net_arch(model.trunk)}


def _deeponet_from_arch(arch: dict) -> DeepONetModel:
    return DeepONetModel(branch=_net_from_arch(arch["branch"]),
                         trunk=_net_from_arch(arch["trunk"]),
                         bias=Tensor(np.zeros(arch["n_outputs"]), requires_grad=True),
                         variant=arch["variant"], n_outputs=arch["n_outputs"],
                         t_scale=arch["t_scale"])


def save_model(path, model, extra_meta: dict | None = None) -> None:
    """Checkpoint architecture plus parameters; round-trips bit exactly."""
    if isinstance(model, AmplitudeSeparatedModel):
        meta = {"model_kind": "amplitude_separated", "epsilon": model.epsilon,
                "tiers": [_deeponet_arch(t) for t in model.tiers]}
    elif isinstance(model, DeepONetModel):
        meta = {"model_kind": "deeponet", "arch": _deeponet_arch(model)}
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    if extra_meta:
        meta["extra"] = extra_meta
    save_checkpoint(path, meta, model.parameters())


def load_model(path):
    """Rebuild a checkpointed model; returns (model, extra_meta)."""
    meta, arrays = load_checkpoint(path)
    if meta["model_kind"] == "amplitude_separated":
        tiers = [_deeponet_from_arch(a) for a in meta["tiers"]]
        model = AmplitudeSeparatedModel(epsilon=meta["epsilon"], tiers=tiers)
    elif meta["model_kind"] == "deeponet":
        model = _deeponet_from_arch(meta["arch"])
    else:
        raise ValueError(f"unknown model kind {meta.get('model_kind')!r}")
    assign_parameters(model.parameters(), arrays)
    return model, meta.get("extra", {})
