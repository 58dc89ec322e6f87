"""Learnable connectivity graphs and their group/sparsity regularizers.

The generated graph is A = h_A h_A^T with h_A the row-stochastic softmax of
the encoder embedding, so A is symmetric with entries in (0, 1] and
diagonal at least 1/d.

Each regularizer has a fast differentiable path plus an O(n^2) brute-force
oracle (numpy only) so the algebraic shortcuts can be audited.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from . import nncore as nn
from .nncore import Tensor

__all__ = [
    "LossWeights",
    "GroupStats",
    "generate_graph",
    "group_stats",
    "group_intra_loss",
    "group_inter_loss",
    "sparsity_loss",
    "group_intra_loss_oracle",
    "group_inter_loss_oracle",
]

log = logging.getLogger(__name__)


@dataclass
class LossWeights:
    alpha: float = 1e-3  # group intra
    beta: float = 1e-3  # group inter
    gamma: float = 1e-4  # sparsity

    def validate(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"loss weight {name} must be a finite non-negative real")


def generate_graph(h_e) -> Tensor:
    """A = h_A h_A^T with h_A = softmax(h_e) over the embedding axis.

    Accepts (v, d) or a batched (n, v, d) embedding.
    """
    h = nn.as_tensor(h_e)
    h_a = nn.softmax(h)
    return h_a @ h_a.swapaxes(-1, -2)


@dataclass
class GroupStats:
    """Per-class batch statistics of generated graphs (differentiable)."""

    classes: list
    counts: dict
    means: dict  # class -> Tensor (v, v)
    variances: dict  # class -> scalar Tensor, mean squared Frobenius deviation


def group_stats(graphs, labels) -> GroupStats:
    """Mean graph and mean squared deviation per class present in the batch."""
    graphs = nn.as_tensor(graphs)
    if graphs.ndim != 3 or graphs.shape[0] == 0:
        raise ValueError(f"expected a non-empty (n, v, v) batch, got shape {graphs.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    classes = sorted(set(int(c) for c in labels))
    counts, means, variances = {}, {}, {}
    for c in classes:
        idx = np.flatnonzero(labels == c)
        members = graphs[idx]
        mu = members.mean(axis=0)
        centered = members - mu
        var = (centered * centered).sum(axis=(1, 2)).mean()
        counts[c] = len(idx)
        means[c] = mu
        variances[c] = var
    return GroupStats(classes=classes, counts=counts, means=means, variances=variances)


def group_intra_loss(stats: GroupStats) -> Tensor:
    """Sum over classes of the within-class graph variance; always >= 0."""
    total = Tensor(0.0)
    for c in stats.classes:
        total = total + stats.variances[c]
    return total


def group_inter_loss(stats: GroupStats) -> Tensor:
    """Negative sum of squared mean-graph distances over ordered class pairs.

    A batch with fewer than two classes contributes 0 (logged once per call).
    """
    if len(stats.classes) < 2:
        log.info("group inter loss skipped: batch contains a single class")
        return Tensor(0.0)
    total = Tensor(0.0)
    for a, b in itertools.permutations(stats.classes, 2):
        diff = stats.means[a] - stats.means[b]
        total = total + (diff * diff).sum()
    return -total


def sparsity_loss(graph) -> Tensor:
    """Mean of all adjacency entries; for a batch, the mean over all graphs."""
    return nn.as_tensor(graph).mean()


def group_intra_loss_oracle(graphs: np.ndarray, labels) -> float:
    """O(n^2) pairwise identity: sigma^2_c = sum_ij ||A_i - A_j||^2 / (2 |S_c|^2)."""
    graphs = np.asarray(graphs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    total = 0.0
    for c in sorted(set(int(x) for x in labels)):
        members = graphs[labels == c]
        k = len(members)
        acc = 0.0
        for i in range(k):
            for j in range(k):
                d = members[i] - members[j]
                acc += float((d * d).sum())
        total += acc / (2.0 * k * k)
    return total


def group_inter_loss_oracle(graphs: np.ndarray, labels) -> float:
    """Literal double sum over ordered class pairs of
    sigma^2_a + sigma^2_b - mean_{i in S_a, j in S_b} ||A_i - A_j||^2."""
    graphs = np.asarray(graphs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    classes = sorted(set(int(x) for x in labels))
    if len(classes) < 2:
        return 0.0
    members = {c: graphs[labels == c] for c in classes}
    sigma = {}
    for c in classes:
        mu = members[c].mean(axis=0)
        sigma[c] = float(((members[c] - mu) ** 2).sum(axis=(1, 2)).mean())
    total = 0.0
    for a, b in itertools.permutations(classes, 2):
        acc = 0.0
        for ga in members[a]:
            for gb in members[b]:
                d = ga - gb
                acc += float((d * d).sum())
        cross = acc / (len(members[a]) * len(members[b]))
        total += sigma[a] + sigma[b] - cross
    return total
