"""Loss, error metrics and the training loop for operator models.

The fitting loss down-weights large-amplitude targets: each row (one
sample/floor trajectory) contributes dt * sum((f - y)^2) / max_t |y|,
averaged over rows, so small-amplitude responses are not drowned out by
large ones.  Progress is tracked with the relative L2 error, row norm
||f - y|| / ||y|| under the dt-weighted discrete norm: per batch with
the parameters in effect at that batch (training curve) and over the
held-out records at each epoch end (testing curve).
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, gradient, no_grad
from .dataset import AugmentationConfig, OperatorDataset, augment_superposition, sample_from_pair
from .neural import AdamState, adam_step


class TrainingDivergence(RuntimeError):
    """Raised when the loss or a gradient stops being finite."""


@dataclass
class TrainConfig:
    epochs: int = 1500
    batches_per_epoch: int = 40
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    augmentation: AugmentationConfig | None = None   # set -> fresh batches each step

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batches_per_epoch < 1 or self.batch_size < 1:
            raise ValueError("batches_per_epoch and batch_size must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class MetricHistory:
    train_rel_l2: list = field(default_factory=list)   # one entry per epoch
    test_rel_l2: list = field(default_factory=list)    # one entry per epoch
    batch_losses: list = field(default_factory=list)   # weighted loss per batch

    def to_csv(self, path) -> None:
        lines = ["epoch,train_rel_l2,test_rel_l2\n"]
        for e, (tr, te) in enumerate(zip(self.train_rel_l2, self.test_rel_l2)):
            lines.append(f"{e},{tr!r},{te!r}\n")
        with open(path, "w", newline="") as fh:
            fh.writelines(lines)


def weighted_loss(predictions, targets, dt: float):
    """Amplitude-weighted squared error, averaged over rows.

    (1/N) sum_i (1 / max_j |y_ij|) * dt * sum_j (f_ij - y_ij)^2.
    Returns a tape Tensor when predictions is one (for training), a float
    otherwise.
    """
    targets = np.asarray(targets, dtype=np.float64)
    pred_shape = predictions.shape
    if tuple(pred_shape) != targets.shape:
        raise ValueError(f"shape mismatch: predictions {pred_shape} vs targets {targets.shape}")
    max_abs = np.max(np.abs(targets), axis=1, keepdims=True)
    if np.any(max_abs <= 0):
        raise ValueError("a target row has zero amplitude")
    weights = 1.0 / max_abs
    n_rows = targets.shape[0]
    diff = predictions - targets
    total = ((diff * diff) * weights).sum() * (dt / n_rows)
    return total if isinstance(total, Tensor) else float(total)


def relative_l2(predictions, targets, dt: float) -> float:
    """Mean over rows of ||f - y|| / ||y|| in the dt-weighted norm."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {targets.shape}")
    norm_y = np.sqrt(dt * np.sum(targets ** 2, axis=1))
    if np.any(norm_y <= 0):
        raise ValueError("a target row has zero norm")
    norm_diff = np.sqrt(dt * np.sum((predictions - targets) ** 2, axis=1))
    return float(np.mean(norm_diff / norm_y))


def stack_rows(samples):
    """Branch inputs plus floor-major target rows for a list of samples.

    Row layout matches DeepONetModel.forward_rows: floor 0's rows for the
    whole batch first, then floor 1's, and so on.
    """
    if not samples:
        raise ValueError("no samples")
    times = samples[0].query_times
    for s in samples[1:]:
        if s.query_times.shape != times.shape or not np.array_equal(s.query_times, times):
            raise ValueError("samples must share one query-time grid")
    U = np.stack([s.branch_input for s in samples])
    n_floors = samples[0].targets.shape[1]
    rows = np.concatenate(
        [np.stack([s.targets[:, f] for s in samples]) for f in range(n_floors)], axis=0)
    return U, rows, times


def evaluate(model, test_samples, dt: float | None = None) -> float:
    """Relative L2 error over a held-out sample list."""
    if not test_samples:
        raise ValueError("empty test set")
    U, rows, times = stack_rows(test_samples)
    dt = test_samples[0].dt if dt is None else dt
    with no_grad():
        pred = model.forward_rows(Tensor(U), times).data
    return relative_l2(pred, rows, dt)


def _batch_indices(rng, n_samples, batch_size, batches_per_epoch):
    """Seeded shuffle, cycled if an epoch asks for more rows than exist."""
    perm = rng.permutation(n_samples)
    for k in range(batches_per_epoch):
        start = k * batch_size
        yield perm[(start + np.arange(batch_size)) % n_samples]


def train(dataset: OperatorDataset, model, config: TrainConfig, epoch_callback=None):
    """Optimize the model with Adam on weighted_loss batches.

    With config.augmentation set, each batch is a fresh superposition of
    the base training pairs (so the number of distinct training pairs is
    unbounded); otherwise batches shuffle the precomputed sample list.
    Runs are deterministic in config.seed.  epoch_callback(epoch, model),
    when given, fires after each epoch's metrics are recorded.
    """
    history = MetricHistory()
    if config.epochs == 0:
        return model, history
    if not dataset.train:
        raise ValueError("training set is empty")
    if any(s.augmented for s in dataset.test):
        raise ValueError("test set contains augmented samples (leakage)")

    params = model.parameters()
    state = AdamState.for_params(params, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    dt = dataset.dt

    on_the_fly = config.augmentation is not None
    if not on_the_fly:
        all_U, all_rows, times = stack_rows(dataset.train)
        n_train = len(dataset.train)
        n_floors = dataset.train[0].targets.shape[1]

    for epoch in range(config.epochs):
        batch_rels = []
        if not on_the_fly:
            batch_iter = _batch_indices(rng, n_train, config.batch_size,
                                        config.batches_per_epoch)
        for k in range(config.batches_per_epoch):
            if on_the_fly:
                batch_cfg = AugmentationConfig(
                    subset_size=config.augmentation.subset_size,
                    count=config.batch_size,
                    signed_weights=config.augmentation.signed_weights,
                    seed=config.augmentation.seed
                         + epoch * config.batches_per_epoch + k,
                )
                pairs = augment_superposition(dataset.train_pairs, batch_cfg)
                samples = [sample_from_pair(p, dataset.m) for p in pairs]
                U, rows, times = stack_rows(samples)
            else:
                idx = next(batch_iter)
                U = all_U[idx]
                row_idx = np.concatenate([f * n_train + idx for f in range(n_floors)])
                rows = all_rows[row_idx]
            pred = model.forward_rows(Tensor(U), times)
            loss = weighted_loss(pred, rows, dt)
            batch_rels.append(relative_l2(pred.data, rows, dt))
            history.batch_losses.append(float(loss.data))
            try:
                grads = gradient(params, loss)
            except FloatingPointError as exc:
                raise TrainingDivergence(
                    f"non-finite loss/gradient at epoch {epoch} batch {k}") from exc
            adam_step(params, grads, state)
        history.train_rel_l2.append(float(np.mean(batch_rels)))
        history.test_rel_l2.append(
            evaluate(model, dataset.test, dt) if dataset.test else float("nan"))
        if epoch_callback is not None:
            epoch_callback(epoch, model)
    return model, history
