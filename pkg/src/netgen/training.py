"""End-to-end objective, training loop, metrics, and the experiment harnesses.

The objective is L = L_ce + alpha * L_intra + beta * L_inter
+ gamma * L_sparsity; baselines without a generated graph train on the
cross-entropy term alone. Model selection keeps the first epoch that
maximizes validation AUROC.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import nncore as nn
from .dataset import Dataset, SplitSpec, pearson_features, split, zscore_normalize
from .encoders import EncoderConfig
from .graphgen import (
    LossWeights,
    group_inter_loss,
    group_intra_loss,
    group_stats,
    sparsity_loss,
)
from .nncore import Tensor
from .predictor import GcnConfig, PIPELINES, build_model

__all__ = [
    "Metrics",
    "TrainConfig",
    "TrainHistory",
    "TrainedModel",
    "auroc",
    "accuracy",
    "cross_entropy",
    "total_loss",
    "train",
    "evaluate",
    "ablate",
    "sweep",
    "compare",
    "ABLATION_VARIANTS",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

# The training loop runs in a single reduced precision for speed; trained
# parameters are cast back to float64 (exactly) before the model is
# returned, and gradient checks always run in double.
TRAIN_DTYPE = np.float32


@dataclass
class Metrics:
    auroc: float
    accuracy: float
    ce: float
    intra: float
    inter: float
    sparsity: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    predictor: GcnConfig = field(default_factory=GcnConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 16
    epochs: int = 500
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)

    def validate(self) -> None:
        self.encoder.validate()
        self.predictor.validate()
        self.loss.validate()
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("lr, batch_size and epochs must all be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        self.split.ratios()


@dataclass
class TrainHistory:
    train: list
    val: list
    selected_epoch: int


@dataclass
class TrainedModel:
    model: object
    config: TrainConfig
    pipeline: str
    v: int
    t: int
    class_names: list


def auroc(scores, labels) -> float:
    """Rank-based AUROC with average ranks for ties.

    Equals the probability that a random positive outranks a random
    negative, ties counted 1/2.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy(logits: np.ndarray, labels) -> float:
    """Argmax accuracy; ties break toward the lower class index."""
    pred = np.argmax(np.asarray(logits), axis=1)
    return float((pred == np.asarray(labels)).mean())


def cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    logp = nn.log_softmax(logits)
    picked = logp[np.arange(len(labels)), labels]
    return -picked.mean()


def total_loss(logits: Tensor, labels, graphs, weights: LossWeights):
    """Total objective plus its components as plain floats.

    `graphs` is the batch of generated graphs or None for pipelines that
    do not generate one (their regularizers are identically zero).
    """
    ce = cross_entropy(logits, labels)
    if graphs is None:
        comps = {"ce": ce.item(), "intra": 0.0, "inter": 0.0, "sparsity": 0.0}
        return ce, comps
    stats = group_stats(graphs, labels)
    intra = group_intra_loss(stats)
    inter = group_inter_loss(stats)
    spars = sparsity_loss(graphs)
    total = ce + weights.alpha * intra + weights.beta * inter + weights.gamma * spars
    comps = {
        "ce": ce.item(),
        "intra": intra.item(),
        "inter": inter.item(),
        "sparsity": spars.item(),
    }
    return total, comps


def _prepare_arrays(ds: Dataset):
    """Stack (z-scored signals, Pearson features, labels) for a split."""
    xs = np.stack([zscore_normalize(s.x) for s in ds.samples])
    feats = np.stack([pearson_features(s.x) for s in ds.samples])
    labels = ds.labels()
    return xs, feats, labels


def _scores_from_logits(logits: np.ndarray) -> np.ndarray:
    """Probability of class 1; the AUROC score for the binary task."""
    probs = nn.softmax_rows(logits)
    return probs[:, 1]


def _evaluate_arrays(tm: TrainedModel, xs, feats, labels, weights, batch_size=64,
                     require_auroc=True) -> Metrics:
    model = tm.model
    model.set_training(False)
    logits_all = []
    comp_sums = {"ce": 0.0, "intra": 0.0, "inter": 0.0, "sparsity": 0.0}
    n = len(labels)
    for start in range(0, n, batch_size):
        sl = slice(start, min(start + batch_size, n))
        logits, graphs = model.forward(Tensor(xs[sl]), Tensor(feats[sl]))
        _, comps = total_loss(logits, labels[sl], graphs, weights)
        width = sl.stop - sl.start
        for k in comp_sums:
            comp_sums[k] += comps[k] * width
        logits_all.append(logits.data)
    logits_all = np.concatenate(logits_all, axis=0)
    classes_present = set(int(c) for c in labels)
    if len(classes_present) < 2:
        if require_auroc:
            raise ValueError("evaluation split contains a single class; AUROC is undefined")
        roc = float("nan")
    else:
        roc = auroc(_scores_from_logits(logits_all), labels)
    return Metrics(
        auroc=roc,
        accuracy=accuracy(logits_all, labels),
        ce=comp_sums["ce"] / n,
        intra=comp_sums["intra"] / n,
        inter=comp_sums["inter"] / n,
        sparsity=comp_sums["sparsity"] / n,
    )


def evaluate(tm: TrainedModel, ds: Dataset, require_auroc: bool = True) -> Metrics:
    """AUROC, accuracy and mean loss components of a trained model on a split."""
    if ds.n == 0:
        raise ValueError("cannot evaluate on an empty split")
    xs, feats, labels = _prepare_arrays(ds)
    return _evaluate_arrays(
        tm, xs, feats, labels, tm.config.loss, require_auroc=require_auroc
    )


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded shuffle into batches; a trailing singleton joins the previous
    batch (batch norm rejects batches of one)."""
    perm = rng.permutation(n)
    chunks = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def _check_ce_curve(ce_curve, window: int = 10) -> None:
    """Sanity signal, not a failure: warn if the smoothed training CE rises
    more than 10% above its starting level."""
    ce = np.asarray(ce_curve, dtype=np.float64)
    if len(ce) < window:
        return
    kernel = np.ones(window) / window
    smoothed = np.convolve(ce, kernel, mode="valid")
    if np.any(smoothed > smoothed[0] + 0.1 * abs(smoothed[0])):
        log.warning(
            "smoothed training cross-entropy rose more than 10%% above its "
            "initial value (start %.4f, peak %.4f)",
            smoothed[0],
            float(smoothed.max()),
        )


def train(config: TrainConfig, ds: Dataset, pipeline: str | None = None):
    """Mini-batch Adam over the total objective; returns the checkpoint from
    the best-validation-AUROC epoch plus the full history."""
    config.validate()
    ds.validate()
    if pipeline is None:
        pipeline = f"fbnetgen-{config.encoder.kind}"
    gcn_cfg = replace(config.predictor, n_classes=len(ds.class_names))

    train_ds, val_ds, test_ds = split(ds, config.split)
    del test_ds  # the caller evaluates on it explicitly
    xs_tr, feats_tr, y_tr = _prepare_arrays(train_ds)
    xs_va, feats_va, y_va = _prepare_arrays(val_ds)

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    with nn.default_dtype(TRAIN_DTYPE):
        model = build_model(pipeline, config.encoder, gcn_cfg, v=ds.v,
                            seed=seeds[0].generate_state(1)[0])
        batch_rng = np.random.default_rng(seeds[1])
        tm = TrainedModel(
            model=model,
            config=config,
            pipeline=pipeline,
            v=ds.v,
            t=ds.t,
            class_names=list(ds.class_names),
        )

        optimizer = nn.Adam(
            model.named_params(), lr=config.lr, weight_decay=config.weight_decay
        )
        n_train = len(y_tr)
        history_train, history_val = [], []
        best_auroc, best_epoch, best_state = -np.inf, -1, None

        for epoch in range(config.epochs):
            model.set_training(True)
            epoch_scores, epoch_labels = [], []
            epoch_logits = []
            comp_sums = {"ce": 0.0, "intra": 0.0, "inter": 0.0, "sparsity": 0.0}
            for b_idx, batch in enumerate(_batches(n_train, config.batch_size, batch_rng)):
                logits, graphs = model.forward(Tensor(xs_tr[batch]), Tensor(feats_tr[batch]))
                loss, comps = total_loss(logits, y_tr[batch], graphs, config.loss)
                if not np.isfinite(loss.data):
                    raise RuntimeError(
                        f"non-finite training loss at epoch {epoch}, batch {b_idx}"
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                for k in comp_sums:
                    comp_sums[k] += comps[k] * len(batch)
                epoch_scores.append(_scores_from_logits(logits.data))
                epoch_logits.append(logits.data)
                epoch_labels.append(y_tr[batch])

            scores = np.concatenate(epoch_scores)
            labels = np.concatenate(epoch_labels)
            logits_np = np.concatenate(epoch_logits)
            train_metrics = Metrics(
                auroc=auroc(scores, labels),
                accuracy=accuracy(logits_np, labels),
                ce=comp_sums["ce"] / n_train,
                intra=comp_sums["intra"] / n_train,
                inter=comp_sums["inter"] / n_train,
                sparsity=comp_sums["sparsity"] / n_train,
            )
            val_metrics = _evaluate_arrays(tm, xs_va, feats_va, y_va, config.loss)
            history_train.append(train_metrics)
            history_val.append(val_metrics)
            if val_metrics.auroc > best_auroc:
                best_auroc = val_metrics.auroc
                best_epoch = epoch
                best_state = model.state()

        _check_ce_curve([m.ce for m in history_train])
        model.load_state(best_state)
    for _, p in model.named_params():
        p.data = p.data.astype(np.float64)
    model.set_training(False)
    history = TrainHistory(train=history_train, val=history_val, selected_epoch=best_epoch)
    return tm, history


def save_model(tm: TrainedModel, path) -> None:
    meta = {
        "pipeline": tm.pipeline,
        "encoder": asdict(tm.config.encoder),
        "predictor": {**asdict(tm.config.predictor), "widths": list(tm.config.predictor.widths)},
        "loss": asdict(tm.config.loss),
        "shape": {"v": tm.v, "t": tm.t, "classes": tm.class_names},
    }
    nn.save_checkpoint(path, meta, tm.model.state())


def load_model(path) -> TrainedModel:
    meta, arrays = nn.load_checkpoint(path)
    encoder_cfg = EncoderConfig(**meta["encoder"])
    pred = dict(meta["predictor"])
    pred["widths"] = tuple(pred["widths"])
    gcn_cfg = GcnConfig(**pred)
    shape = meta["shape"]
    model = build_model(meta["pipeline"], encoder_cfg, gcn_cfg, v=int(shape["v"]), seed=0)
    model.load_state(arrays)
    model.set_training(False)
    config = TrainConfig(
        encoder=encoder_cfg, predictor=gcn_cfg, loss=LossWeights(**meta["loss"])
    )
    return TrainedModel(
        model=model,
        config=config,
        pipeline=meta["pipeline"],
        v=int(shape["v"]),
        t=int(shape["t"]),
        class_names=list(shape["classes"]),
    )


ABLATION_VARIANTS = ("All", "CE", "CE+GL", "CE+SL")


def _variant_weights(variant: str, base: LossWeights) -> LossWeights:
    if variant == "All":
        return LossWeights(base.alpha, base.beta, base.gamma)
    if variant == "CE":
        return LossWeights(0.0, 0.0, 0.0)
    if variant == "CE+GL":
        return LossWeights(base.alpha, base.beta, 0.0)
    if variant == "CE+SL":
        return LossWeights(0.0, 0.0, base.gamma)
    raise ValueError(f"unknown ablation variant {variant!r}")


def _run_once(config: TrainConfig, ds: Dataset, seed: int, pipeline: str | None):
    """One seeded train/test cycle; the split is re-seeded along with init."""
    run_cfg = replace(
        config, seed=seed, split=replace(config.split, seed=seed)
    )
    tm, history = train(run_cfg, ds, pipeline=pipeline)
    _, _, test_ds = split(ds, run_cfg.split)
    metrics = evaluate(tm, test_ds)
    return tm, history, metrics


def ablate(config: TrainConfig, ds: Dataset, seeds) -> list:
    """Train the four regularizer variants over the given seeds.

    Returns one row per variant:
    {"variant", "per_seed" (test AUROC), "mean", "std"}.
    """
    rows = []
    for variant in ABLATION_VARIANTS:
        variant_cfg = replace(config, loss=_variant_weights(variant, config.loss))
        per_seed = []
        for seed in seeds:
            _, _, metrics = _run_once(variant_cfg, ds, seed, pipeline=None)
            per_seed.append(metrics.auroc)
        rows.append(
            {
                "variant": variant,
                "per_seed": per_seed,
                "mean": float(np.mean(per_seed)),
                "std": float(np.std(per_seed)),
            }
        )
    return rows


def sweep(config: TrainConfig, ds: Dataset, windows, dims, seeds=None) -> list:
    """Grid over encoder window and embedding size; one row per cell."""
    if not windows or not dims:
        raise ValueError("sweep grid must be non-empty")
    seeds = list(seeds) if seeds else [config.seed]
    rows = []
    for window in windows:
        for dim in dims:
            cell_cfg = replace(
                config, encoder=replace(config.encoder, window=window, dim=dim)
            )
            aurocs, accs = [], []
            for seed in seeds:
                _, _, metrics = _run_once(cell_cfg, ds, seed, pipeline=None)
                aurocs.append(metrics.auroc)
                accs.append(metrics.accuracy)
            rows.append(
                {
                    "window": window,
                    "dim": dim,
                    "auroc": float(np.mean(aurocs)),
                    "accuracy": float(np.mean(accs)),
                }
            )
    return rows


def compare(config: TrainConfig, ds: Dataset, seeds, pipelines=PIPELINES) -> list:
    """Train every pipeline over the seeds; mean and std of test metrics."""
    rows = []
    for pipeline in pipelines:
        aurocs, accs = [], []
        for seed in seeds:
            _, _, metrics = _run_once(config, ds, seed, pipeline=pipeline)
            aurocs.append(metrics.auroc)
            accs.append(metrics.accuracy)
        rows.append(
            {
                "pipeline": pipeline,
                "auroc_mean": float(np.mean(aurocs)),
                "auroc_std": float(np.std(aurocs)),
                "accuracy_mean": float(np.mean(accs)),
                "accuracy_std": float(np.std(accs)),
            }
        )
    return rows
