"""GCN classifier over (A, F) plus the non-learnable-graph baselines.

The GCN update is the literal h <- ReLU(A h W + b) with no degree
normalization: generated graphs have entries bounded by 1, which keeps
activations tame at this scale. Pooling is concat (fixed node order) or
sum, followed by batch norm and a 2-layer MLP head.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nncore as nn
from .dataset import pearson_features
from .encoders import EncoderConfig, build_encoder
from .graphgen import generate_graph
from .nncore import Tensor

__all__ = [
    "GcnConfig",
    "GcnPredictor",
    "build_uniform_graph",
    "build_pearson_graph",
    "LearnableGraphModel",
    "FixedGraphModel",
    "SequenceModel",
    "PIPELINES",
    "build_model",
]


@dataclass
class GcnConfig:
    widths: tuple = (32, 32, 8)
    pooling: str = "concat"  # "concat" or "sum"
    mlp_hidden: int = 32
    n_classes: int = 2

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)

    def validate(self) -> None:
        if self.pooling not in ("concat", "sum"):
            raise ValueError(f"pooling must be 'concat' or 'sum', got {self.pooling!r}")
        if len(self.widths) < 1 or any(w < 1 for w in self.widths):
            raise ValueError(f"layer widths must be positive, got {self.widths}")
        if self.mlp_hidden < 1 or self.n_classes < 2:
            raise ValueError("mlp_hidden must be >= 1 and n_classes >= 2")


def build_uniform_graph(v: int) -> np.ndarray:
    """All-ones adjacency, the node-feature-only control graph."""
    return np.ones((v, v))


def build_pearson_graph(x: np.ndarray) -> np.ndarray:
    """Raw Pearson matrix as adjacency, signed weights kept on purpose."""
    return pearson_features(x)


class GcnPredictor:
    """k-layer GCN, pooling, batch norm, MLP head."""

    def __init__(self, cfg: GcnConfig, v: int, in_features: int, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.v = v
        dims = (in_features,) + cfg.widths
        self.layers = [nn.Dense(dims[i], dims[i + 1], rng) for i in range(len(cfg.widths))]
        pooled = v * cfg.widths[-1] if cfg.pooling == "concat" else cfg.widths[-1]
        self.bn = nn.BatchNorm1d(pooled)
        self.mlp1 = nn.Dense(pooled, cfg.mlp_hidden, rng)
        self.mlp2 = nn.Dense(cfg.mlp_hidden, cfg.n_classes, rng)

    def node_embeddings(self, adjacency, features) -> Tensor:
        a = nn.as_tensor(adjacency)
        h = nn.as_tensor(features)
        for layer in self.layers:
            h = nn.relu(layer(a @ h))
        return h

    def pool_and_classify(self, node_emb: Tensor) -> Tensor:
        b, v, width = node_emb.shape
        if self.cfg.pooling == "concat":
            pooled = node_emb.reshape((b, v * width))
        else:
            pooled = node_emb.sum(axis=1)
        hidden = nn.relu(self.mlp1(self.bn(pooled)))
        return self.mlp2(hidden)

    def forward(self, adjacency, features) -> Tensor:
        return self.pool_and_classify(self.node_embeddings(adjacency, features))

    __call__ = forward

    def named_params(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"gcn{i}.{n}", p) for n, p in layer.params())
        out.extend((f"bn.{n}", p) for n, p in self.bn.params())
        out.extend((f"mlp1.{n}", p) for n, p in self.mlp1.params())
        out.extend((f"mlp2.{n}", p) for n, p in self.mlp2.params())
        return out

    def named_buffers(self):
        return [(f"bn.{n}", b) for n, b in self.bn.buffers()]


class _ModelBase:
    pipeline: str

    def set_training(self, flag: bool) -> None:
        for bn in self._batch_norms():
            bn.training = flag

    def _batch_norms(self):
        return []

    def named_params(self):
        raise NotImplementedError

    def named_buffers(self):
        return []

    def state(self) -> dict:
        out = {f"param.{n}": p.data.copy() for n, p in self.named_params()}
        out.update({f"buffer.{n}": np.array(b) for n, b in self.named_buffers()})
        return out

    def load_state(self, arrays: dict) -> None:
        expected = {f"param.{n}": p.data for n, p in self.named_params()}
        expected.update({f"buffer.{n}": b for n, b in self.named_buffers()})
        nn.check_shapes(arrays, expected)
        for name, p in self.named_params():
            p.data = arrays[f"param.{name}"].astype(p.data.dtype)
        self._load_buffers({n: arrays[f"buffer.{n}"] for n, _ in self.named_buffers()})

    def _load_buffers(self, buffers: dict) -> None:
        pass


class LearnableGraphModel(_ModelBase):
    """Encoder -> graph generator -> GCN -> head; the full pipeline."""

    def __init__(self, encoder_cfg: EncoderConfig, gcn_cfg: GcnConfig, v: int, rng):
        self.encoder_cfg = encoder_cfg
        self.gcn_cfg = gcn_cfg
        self.v = v
        self.pipeline = f"fbnetgen-{encoder_cfg.kind}"
        self.encoder = build_encoder(encoder_cfg, rng)
        self.gcn = GcnPredictor(gcn_cfg, v, in_features=v, rng=rng)

    def forward(self, x, features):
        h_e = self.encoder(x)
        graphs = generate_graph(h_e)
        logits = self.gcn(graphs, features)
        return logits, graphs

    def graphs(self, x) -> Tensor:
        return generate_graph(self.encoder(x))

    def named_params(self):
        out = [(f"encoder.{n}", p) for n, p in self.encoder.named_params()]
        out.extend((f"gcn.{n}", p) for n, p in self.gcn.named_params())
        return out

    def named_buffers(self):
        return [(f"gcn.{n}", b) for n, b in self.gcn.named_buffers()]

    def _batch_norms(self):
        return [self.gcn.bn]

    def _load_buffers(self, buffers):
        self.gcn.bn.set_buffers(buffers["gcn.bn.running_mean"], buffers["gcn.bn.running_var"])


class FixedGraphModel(_ModelBase):
    """GCN over a fixed adjacency: all-ones or the raw Pearson matrix."""

    def __init__(self, graph_kind: str, gcn_cfg: GcnConfig, v: int, rng):
        if graph_kind not in ("uniform", "pearson"):
            raise ValueError(f"unknown fixed graph kind {graph_kind!r}")
        self.graph_kind = graph_kind
        self.gcn_cfg = gcn_cfg
        self.v = v
        self.pipeline = f"gnn-{graph_kind}"
        self.encoder_cfg = None
        self.gcn = GcnPredictor(gcn_cfg, v, in_features=v, rng=rng)

    def forward(self, x, features):
        feats = nn.as_tensor(features)
        if self.graph_kind == "uniform":
            b = feats.shape[0]
            adjacency = Tensor(np.broadcast_to(build_uniform_graph(self.v), (b, self.v, self.v)))
        else:
            adjacency = Tensor(feats.data)
        return self.gcn(adjacency, feats), None

    def named_params(self):
        return [(f"gcn.{n}", p) for n, p in self.gcn.named_params()]

    def named_buffers(self):
        return [(f"gcn.{n}", b) for n, b in self.gcn.named_buffers()]

    def _batch_norms(self):
        return [self.gcn.bn]

    def _load_buffers(self, buffers):
        self.gcn.bn.set_buffers(buffers["gcn.bn.running_mean"], buffers["gcn.bn.running_var"])


class SequenceModel(_ModelBase):
    """Encoder embeddings concatenated straight into the MLP head; no graph."""

    def __init__(self, encoder_cfg: EncoderConfig, gcn_cfg: GcnConfig, v: int, rng):
        self.encoder_cfg = encoder_cfg
        self.gcn_cfg = gcn_cfg
        self.v = v
        self.pipeline = f"seq-{encoder_cfg.kind}"
        self.encoder = build_encoder(encoder_cfg, rng)
        flat = v * encoder_cfg.dim
        self.bn = nn.BatchNorm1d(flat)
        self.mlp1 = nn.Dense(flat, gcn_cfg.mlp_hidden, rng)
        self.mlp2 = nn.Dense(gcn_cfg.mlp_hidden, gcn_cfg.n_classes, rng)

    def forward(self, x, features=None):
        h_e = self.encoder(x)
        b, v, d = h_e.shape
        flat = h_e.reshape((b, v * d))
        hidden = nn.relu(self.mlp1(self.bn(flat)))
        return self.mlp2(hidden), None

    def named_params(self):
        out = [(f"encoder.{n}", p) for n, p in self.encoder.named_params()]
        out.extend((f"bn.{n}", p) for n, p in self.bn.params())
        out.extend((f"mlp1.{n}", p) for n, p in self.mlp1.params())
        out.extend((f"mlp2.{n}", p) for n, p in self.mlp2.params())
        return out

    def named_buffers(self):
        return [(f"bn.{n}", b) for n, b in self.bn.buffers()]

    def _batch_norms(self):
        return [self.bn]

    def _load_buffers(self, buffers):
        self.bn.set_buffers(buffers["bn.running_mean"], buffers["bn.running_var"])


PIPELINES = (
    "fbnetgen-cnn",
    "fbnetgen-gru",
    "gnn-uniform",
    "gnn-pearson",
    "seq-cnn",
    "seq-gru",
)


def build_model(pipeline: str, encoder_cfg: EncoderConfig, gcn_cfg: GcnConfig, v: int, seed: int):
    """Instantiate a pipeline by its comparison-table name."""
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline!r}; choose one of {PIPELINES}")
    rng = np.random.default_rng(seed)
    if pipeline.startswith("fbnetgen-") or pipeline.startswith("seq-"):
        kind = pipeline.split("-", 1)[1]
        cfg = EncoderConfig(kind=kind, window=encoder_cfg.window, dim=encoder_cfg.dim)
        cls = LearnableGraphModel if pipeline.startswith("fbnetgen-") else SequenceModel
        return cls(cfg, gcn_cfg, v, rng)
    return FixedGraphModel(pipeline.split("-", 1)[1], gcn_cfg, v, rng)
