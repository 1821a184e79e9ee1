"""Guarded graph autoencoder for unsupervised node anomaly detection

Three encoders look at the graph: an attribute MLP `f_a(X)`, a topology MLP `f_t(A)` and
a GNN backbone over both. Correlation constraints push the three embeddings apart so the
GNN keeps only what attributes and topology have in common. Learned per-node gates blend
each auxiliary embedding with the GNN embedding before decoding:

* attributes are decoded by a two-layer GCN and scored by squared reconstruction error;
* topology is decoded as an inner product and scored the same way;
* GNN embeddings are aligned to a pooled graph summary and scored by their distance to it.

A node's anomaly score is the weighted sum of these three per-node errors.
"""
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Optional

import numpy as np

from . import tensor as tn
from .graph import ConfigError, FormatError, Graph
from .nn import (BackboneKind, MlpSpec, Propagation, build_encoder, gcn_layer, init_gcn,
                 init_mlp, mlp_forward)
from .optim import AdamState, ModelParams, TrainingError, adam_step
from .results import LossHistory
from .support import checkpoint
from .tensor import DimensionError, TensorNode
from .utils import progressbar, to_list

__all__ = ['ARCHITECTURES', 'Detector', 'DetectorConfig', 'ForwardArtifacts', 'READOUTS',
           'a_cor', 'adaptive_cache', 'anomaly_scores', 'combine_losses',
           'consistency_alignment', 'correlation_constraint', 'encode', 'load_checkpoint',
           'readout', 'reconstruct_attributes', 'reconstruct_topology', 'save_checkpoint',
           'total_loss', 'train']

READOUTS = ('mean', 'min', 'max', 'attention')
ARCHITECTURES = ('full', 'shared', 'separated')
CORRELATION_REDUCTIONS = ('flatten', 'columns')
CHECKPOINT_VERSION = 1

_ablation_flags = {
    'ar': 'use_attr_recon',
    'tr': 'use_topo_recon',
    'ca': 'use_cons_align',
    'cc': 'use_correlation_constraint',
}


@dataclass(frozen=True)
class DetectorConfig:
    """Model hyperparameters and ablation switches

    Attributes
    ----------
    embed_dim : int
        Size `d'` of every embedding.
    hidden_dim : Optional[int]
        Hidden layer size of encoders, defaults to `embed_dim`.
    lambda1 : float
        Weight in [0, 1] of attribute vs. topology reconstruction.
    lambda2 : float
        Non-negative weight of the consistency alignment term.
    backbone : BackboneKind
        GNN encoder kind, strings like 'gat' are accepted.
    readout : str
        Graph summary pooling: 'mean', 'min', 'max' or 'attention'.
    cons_floor : float
        Positive constant added inside the alignment log, Euler's number by default so
        that the alignment loss is at least 1.
    use_attr_recon, use_topo_recon, use_cons_align, use_correlation_constraint : bool
        Ablation switches for the AR, TR, CA and CC terms.
    arch : str
        'full' (guarded), 'shared' (single GNN, no auxiliary encoders) or 'separated'
        (two MLP encoders, no GNN).
    self_loops : bool
        Include each node in its own GAT/SAGE aggregation set.
    correlation_reduction : str
        'flatten' computes one Pearson coefficient over all entries, 'columns' averages
        the absolute coefficients of matching columns.
    """
    embed_dim: int = 64
    hidden_dim: Optional[int] = None
    lambda1: float = 0.8
    lambda2: float = 0.2
    backbone: BackboneKind = BackboneKind.GAT
    readout: str = 'mean'
    cons_floor: float = math.e
    use_attr_recon: bool = True
    use_topo_recon: bool = True
    use_cons_align: bool = True
    use_correlation_constraint: bool = True
    arch: str = 'full'
    self_loops: bool = True
    correlation_reduction: str = 'flatten'

    def __post_init__(self):
        object.__setattr__(self, 'backbone', BackboneKind.parse(self.backbone))
        if self.embed_dim < 1 or (self.hidden_dim is not None and self.hidden_dim < 1):
            raise ConfigError("Embedding sizes must be positive")
        if not 0 <= self.lambda1 <= 1:
            raise ConfigError("lambda1 must be in [0, 1], got {}".format(self.lambda1))
        if self.lambda2 < 0:
            raise ConfigError("lambda2 can't be negative, got {}".format(self.lambda2))
        if not self.cons_floor > 0:
            raise ConfigError("cons_floor must be positive, got {}".format(self.cons_floor))
        for name, value, options in [('readout', self.readout, READOUTS),
                                     ('arch', self.arch, ARCHITECTURES),
                                     ('correlation_reduction', self.correlation_reduction,
                                      CORRELATION_REDUCTIONS)]:
            if value not in options:
                raise ConfigError("Unknown {} '{}', options: {}".format(
                    name, value, ", ".join(options)))
        if not (self.use_attr_recon or self.use_topo_recon or self.uses_cons_align):
            raise ConfigError("At least one of attribute reconstruction, topology "
                              "reconstruction and consistency alignment must be enabled")

    @property
    def hidden(self) -> int:
        return self.hidden_dim or self.embed_dim

    @property
    def uses_cons_align(self) -> bool:
        """Consistency alignment needs the GNN embedding, which 'separated' doesn't have"""
        return self.use_cons_align and self.arch != 'separated'

    @property
    def uses_correlation(self) -> bool:
        """With a single shared embedding the correlation terms are constant"""
        return self.use_correlation_constraint and self.arch != 'shared'

    def ablate(self, names) -> "DetectorConfig":
        """Return a copy with the named terms ('ar', 'tr', 'ca', 'cc') switched off

        >>> DetectorConfig().ablate("tr,ca").use_topo_recon
        False
        """
        changes = {}
        for name in to_list(names):
            try:
                changes[_ablation_flags[name.lower()]] = False
            except KeyError:
                raise ConfigError("Unknown ablation '{}', options: {}".format(
                    name, ", ".join(_ablation_flags))) from None
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d['backbone'] = self.backbone.value
        return d

    @classmethod
    def from_dict(cls, d) -> "DetectorConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError("Unknown detector options: {}".format(", ".join(sorted(unknown))))
        return cls(**d)


@dataclass
class ForwardArtifacts:
    """Everything one forward pass produced, as plain arrays

    Embeddings which a variant doesn't have (e.g. `h_c` under 'separated') are `None`.
    `losses` holds the component values 'attr', 'topo', 'cons', 'cc' and their weighted
    combination 'total'.
    """
    h_a: Optional[np.ndarray]
    h_t: Optional[np.ndarray]
    h_c: Optional[np.ndarray]
    z_a: np.ndarray
    z_t: np.ndarray
    x_hat: np.ndarray
    a_hat: np.ndarray
    e_g: Optional[np.ndarray]
    losses: Dict[str, float] = field(default_factory=dict)
    scores: Optional[np.ndarray] = None
    gates: Dict[str, np.ndarray] = field(default_factory=dict)


def _scalar(x) -> float:
    return x.item() if isinstance(x, TensorNode) else float(x)


def _abs_pearson(cov, var_p, var_q):
    """`|cov| / sqrt(var_p * var_q)`, exactly 0 where a variance vanishes"""
    product = var_p * var_q
    degenerate = (product.values == 0).astype(np.float64)
    return tn.absolute(cov) / tn.sqrt(product + degenerate)


def a_cor(p, q, reduction='flatten') -> TensorNode:
    """Absolute Pearson correlation between two equally shaped matrices

    With 'flatten' both matrices are treated as one long vector. A constant input has
    zero variance and gives 0.

    Examples
    --------
    >>> m = TensorNode([[1.0, 2.0], [3.0, 5.0]])
    >>> round(a_cor(m, -3 * m).item(), 9)
    1.0
    """
    p, q = tn.constant(p), tn.constant(q)
    if p.shape != q.shape:
        raise DimensionError("a_cor: shapes {} and {} differ".format(p.shape, q.shape))

    if reduction == 'flatten':
        size = p.rows * p.cols
        if size < 2:
            raise DimensionError("a_cor: need at least 2 entries, got shape {}".format(p.shape))
        pc = p - tn.sum_all(p) / size
        qc = q - tn.sum_all(q) / size
        cov = tn.sum_all(pc * qc) / size
        var_p = tn.sum_all(tn.square(pc)) / size
        var_q = tn.sum_all(tn.square(qc)) / size
        return _abs_pearson(cov, var_p, var_q)
    elif reduction == 'columns':
        if p.rows < 2:
            raise DimensionError("a_cor: need at least 2 rows, got shape {}".format(p.shape))
        pc = p - tn.mean_rows(p)
        qc = q - tn.mean_rows(q)
        cov = tn.mean_rows(pc * qc)
        var_p = tn.mean_rows(tn.square(pc))
        var_q = tn.mean_rows(tn.square(qc))
        return tn.sum_all(_abs_pearson(cov, var_p, var_q)) / p.cols
    else:
        raise ConfigError("Unknown correlation reduction '{}'".format(reduction))


def correlation_constraint(h_a, h_t, h_c, reduction='flatten') -> TensorNode:
    """Sum of the three pairwise absolute correlations, in [0, 3]"""
    return (a_cor(h_a, h_c, reduction) + a_cor(h_t, h_c, reduction)
            + a_cor(h_a, h_t, reduction))


def adaptive_cache(h1, h2, spec: MlpSpec, layers):
    """Blend two embeddings with two learned gates per node

    The gate MLP sees `[h1_i || h2_i]` and its `tanh` output `w_i` mixes the rows as
    `w_i[0] * h1_i + w_i[1] * h2_i`.

    Returns
    -------
    Tuple[TensorNode, TensorNode]
        The blended `n x d'` embedding and the `n x 2` gates.
    """
    h1, h2 = tn.constant(h1), tn.constant(h2)
    if h1.shape != h2.shape:
        raise DimensionError("adaptive_cache: shapes {} and {} differ".format(h1.shape, h2.shape))
    gates = tn.tanh(mlp_forward(spec, layers, tn.concat_cols(h1, h2)))
    if gates.cols != 2:
        raise DimensionError("adaptive_cache: gate network must output 2 columns, "
                             "got {}".format(gates.cols))
    z = tn.take_cols(gates, 0, 1) * h1 + tn.take_cols(gates, 1, 2) * h2
    return z, gates


def reconstruct_attributes(z_a, a_norm, decoder_layers, x):
    """Two-layer GCN attribute decoder and its squared Frobenius error

    Returns
    -------
    Tuple[TensorNode, TensorNode]
        `X_hat` and `L_attr = ||X - X_hat||_F^2`. `X` is data and gets no gradient.
    """
    first, second = decoder_layers
    x_hat = gcn_layer(second, a_norm, gcn_layer(first, a_norm, z_a, 'leaky_relu'), 'none')
    x = tn.constant(x)
    if x_hat.shape != x.shape:
        raise DimensionError("Decoder output {} doesn't match attributes {}".format(
            x_hat.shape, x.shape))
    return x_hat, tn.sum_all(tn.square(x - x_hat))


def reconstruct_topology(z_t, adjacency):
    """Inner-product decoder `A_hat = Z Z^T` and `L_topo = ||A - A_hat||_F^2`

    >>> _, loss = reconstruct_topology(TensorNode([[2.0]]), [[0.0]])
    >>> loss.item()
    16.0
    """
    z_t = tn.constant(z_t)
    a_hat = z_t @ z_t.T
    return a_hat, tn.sum_all(tn.square(tn.constant(adjacency) - a_hat))


def readout(h_c, kind='mean', spec: MlpSpec = None, layers=None) -> TensorNode:
    """Pool node embeddings into a `1 x d'` graph summary

    'attention' weighs nodes by a softmax over scores produced by the MLP `spec/layers`.
    """
    h_c = tn.constant(h_c)
    if kind == 'mean':
        return tn.mean_rows(h_c)
    elif kind == 'min':
        return tn.min_rows(h_c)
    elif kind == 'max':
        return tn.max_rows(h_c)
    elif kind == 'attention':
        if layers is None:
            raise ConfigError("Attention readout needs scoring network parameters")
        scores = mlp_forward(spec, layers, h_c).T
        weights = tn.row_softmax_over_neighbors(scores, np.ones(scores.shape, dtype=bool))
        return weights @ h_c
    else:
        raise ConfigError("Unknown readout '{}', options: {}".format(kind, ", ".join(READOUTS)))


def consistency_alignment(h_c, kind='mean', floor=math.e, spec=None, layers=None):
    """Graph summary `E_g` and the alignment loss `log(sqrt(sum_i ||h_i - E_g||^2) + floor)`

    >>> _, loss = consistency_alignment(TensorNode([[1.0, 2.0], [1.0, 2.0]]))
    >>> loss.item()
    1.0
    """
    h_c = tn.constant(h_c)
    e_g = readout(h_c, kind, spec, layers)
    spread = tn.sum_all(tn.square(h_c - e_g))
    return e_g, tn.log(tn.sqrt(spread) + floor)


def combine_losses(parts, cfg: DetectorConfig):
    """Weighted joint objective, ablated terms count as exactly zero

    Works on floats as well as on :class:`.TensorNode` parts.
    """
    total = 0.0
    if cfg.use_attr_recon:
        total = total + cfg.lambda1 * parts['attr']
    if cfg.use_topo_recon:
        total = total + (1 - cfg.lambda1) * parts['topo']
    if cfg.uses_cons_align:
        total = total + cfg.lambda2 * parts['cons']
    if cfg.uses_correlation:
        total = total + parts['cc']
    return total


def total_loss(artifacts: ForwardArtifacts, cfg: DetectorConfig) -> float:
    """Recombine the stored component losses of a forward pass"""
    return float(combine_losses(artifacts.losses, cfg))


def anomaly_scores(g: Graph, artifacts: ForwardArtifacts, cfg: DetectorConfig) -> np.ndarray:
    """Per-node weighted sum of attribute error, topology error and alignment distance

    Higher means more anomalous. Ablated terms contribute nothing.
    """
    scores = np.zeros(g.n)
    if cfg.use_attr_recon:
        scores += cfg.lambda1 * np.sum((g.attributes - artifacts.x_hat)**2, axis=1)
    if cfg.use_topo_recon:
        scores += (1 - cfg.lambda1) * np.sum((g.adjacency - artifacts.a_hat)**2, axis=1)
    if cfg.uses_cons_align:
        distance = np.sqrt(np.sum((artifacts.h_c - artifacts.e_g)**2, axis=1))
        scores += cfg.lambda2 * np.log(distance + cfg.cons_floor)
    return scores


class Detector:
    """Parameters and structure of the guarded detector for graphs of a fixed size

    The topology encoder reads rows of the adjacency matrix, so a detector is tied to
    the node count `n` and the attribute dimension `d` it was built for.

    Parameters
    ----------
    n, d : int
        Node count and attribute dimension.
    config : DetectorConfig
    seed : int
        Seeds the Xavier initialization.
    """
    def __init__(self, n, d, config: DetectorConfig = None, seed=0):
        self.n, self.d = n, d
        self.config = config or DetectorConfig()
        self.seed = seed
        self.params = ModelParams()
        self._prop = None

        cfg, rng = self.config, np.random.default_rng(seed)
        dim, hidden = cfg.embed_dim, cfg.hidden
        self.encoder = None
        if cfg.arch != 'separated':
            self.encoder = build_encoder(cfg.backbone, d, hidden, dim, self.params, rng)

        self.attr_spec = MlpSpec.chain([d, hidden, dim])
        self.topo_spec = MlpSpec.chain([n, hidden, dim])
        self.attr_encoder = self.topo_encoder = None
        if cfg.arch != 'shared':
            self.attr_encoder = init_mlp(self.params, 'attr_encoder', self.attr_spec, rng)
            self.topo_encoder = init_mlp(self.params, 'topo_encoder', self.topo_spec, rng)

        self.cache_spec = MlpSpec.chain([2 * dim, dim, 2])
        self.attr_cache = self.topo_cache = None
        if cfg.arch == 'full':
            self.attr_cache = init_mlp(self.params, 'attr_cache', self.cache_spec, rng)
            self.topo_cache = init_mlp(self.params, 'topo_cache', self.cache_spec, rng)

        self.decoder = [init_gcn(self.params, 'attr_decoder.0', dim, dim, rng),
                        init_gcn(self.params, 'attr_decoder.1', dim, d, rng)]

        self.readout_spec = MlpSpec.chain([dim, dim, 1])
        self.readout_layers = None
        if cfg.readout == 'attention' and cfg.arch != 'separated':
            self.readout_layers = init_mlp(self.params, 'readout', self.readout_spec, rng)

    @classmethod
    def for_graph(cls, g: Graph, config: DetectorConfig = None, seed=0) -> "Detector":
        return cls(g.n, g.d, config, seed)

    def propagation(self, g: Graph) -> Propagation:
        """Graph operators for `g`, cached for repeated passes over the same graph"""
        if (g.n, g.d) != (self.n, self.d):
            raise DimensionError("Detector built for n={}, d={} can't process a graph with "
                                 "n={}, d={}".format(self.n, self.d, g.n, g.d))
        if self._prop is None or self._prop.graph is not g:
            self._prop = Propagation(g, self.config.self_loops)
        return self._prop

    def forward(self, g: Graph):
        """One full pass over `g`

        Returns
        -------
        Tuple[TensorNode, ForwardArtifacts]
            The differentiable joint loss and the recorded values including scores.
        """
        cfg, prop = self.config, self.propagation(g)
        x = TensorNode(g.attributes)

        h_a, h_t, h_c = encode(self, prop)
        cc = None
        if cfg.arch == 'full':
            cc = correlation_constraint(h_a, h_t, h_c, cfg.correlation_reduction)
        elif cfg.arch == 'separated':
            cc = a_cor(h_a, h_t, cfg.correlation_reduction)

        gates = {}
        if cfg.arch == 'full':
            z_a, gates['attr'] = adaptive_cache(h_a, h_c, self.cache_spec, self.attr_cache)
        else:
            z_a = h_c if cfg.arch == 'shared' else h_a
        x_hat, attr_loss = reconstruct_attributes(z_a, prop.normalized, self.decoder, x)

        if cfg.arch == 'full':
            z_t, gates['topo'] = adaptive_cache(h_t, h_c, self.cache_spec, self.topo_cache)
        else:
            z_t = h_c if cfg.arch == 'shared' else h_t
        a_hat, topo_loss = reconstruct_topology(z_t, prop.adjacency)

        e_g, cons_loss = None, None
        if h_c is not None:
            e_g, cons_loss = consistency_alignment(h_c, cfg.readout, cfg.cons_floor,
                                                   self.readout_spec, self.readout_layers)

        parts = dict(attr=attr_loss, topo=topo_loss, cons=cons_loss, cc=cc)
        loss = tn.constant(combine_losses(parts, cfg))
        losses = {name: (_scalar(v) if v is not None else 0.0) for name, v in parts.items()}
        losses['total'] = loss.item()

        def values(node):
            return node.values if node is not None else None

        artifacts = ForwardArtifacts(
            h_a=values(h_a), h_t=values(h_t), h_c=values(h_c), z_a=z_a.values, z_t=z_t.values,
            x_hat=x_hat.values, a_hat=a_hat.values, e_g=values(e_g), losses=losses,
            gates={k: v.values for k, v in gates.items()}
        )
        artifacts.scores = anomaly_scores(g, artifacts, cfg)
        return loss, artifacts

    def scores(self, g: Graph) -> np.ndarray:
        """Anomaly scores of the current parameters, no training involved"""
        return self.forward(g)[1].scores

    def fit(self, g: Graph, epochs=100, learning_rate=5e-3, progress=False) -> LossHistory:
        """Train in place, see :func:`train`"""
        if epochs < 1:
            raise ConfigError("epochs must be at least 1, got {}".format(epochs))

        history = LossHistory()
        state = AdamState(learning_rate)
        pbar = None
        if progress:
            pbar = progressbar.ProgressBar(epochs, widgets=[
                progressbar.percentage(), " ", progressbar.bar(), " ",
                progressbar.status('loss'), " ", progressbar.elapsed(), " ", progressbar.eta()
            ])
            pbar.start()

        try:
            for epoch in range(epochs):
                self.params.zero_grad()
                loss, artifacts = self.forward(g)
                history.append(artifacts.losses)
                if not np.isfinite(artifacts.losses['total']):
                    raise TrainingError("Non-finite loss at epoch {}".format(epoch), history)

                tn.backward(loss)
                try:
                    adam_step(self.params, self.params.grads(), state)
                except TrainingError as e:
                    raise TrainingError("{} at epoch {}".format(e, epoch), history) from None

                if pbar:
                    pbar.post(loss=artifacts.losses['total'])
                    pbar += 1
        finally:
            if pbar:
                pbar.stop()
        return history

    def state_dict(self) -> dict:
        return self.params.state_dict()

    def load_state_dict(self, state):
        self.params.load_state_dict(state)

    def __repr__(self):
        return "Detector(n={}, d={}, arch={}, backbone={}, params={})".format(
            self.n, self.d, self.config.arch, self.config.backbone.value, self.params.size)


def encode(detector: Detector, prop: Propagation):
    """Attribute, topology and GNN embeddings `(H_a, H_t, H_c)`

    Under 'shared' the two auxiliary embeddings are the GNN embedding itself and under
    'separated' there is no GNN embedding (`None`).
    """
    x = TensorNode(prop.graph.attributes)
    h_c = detector.encoder(x, prop) if detector.encoder is not None else None
    if detector.config.arch == 'shared':
        return h_c, h_c, h_c

    h_a = mlp_forward(detector.attr_spec, detector.attr_encoder, x)
    h_t = mlp_forward(detector.topo_spec, detector.topo_encoder, prop.adjacency)
    return h_a, h_t, h_c


def train(g: Graph, config: DetectorConfig = None, epochs=100, learning_rate=5e-3, seed=0,
          progress=False):
    """Full-batch training with a fresh Adam state

    Every epoch encodes, applies the correlation constraint, caches, reconstructs
    attributes and topology, aligns to the graph summary and takes one Adam step on the
    joint loss. Deterministic for a given `seed`.

    Returns
    -------
    Tuple[Detector, ForwardArtifacts, LossHistory]
        The trained detector (`detector.params` holds the weights), the artifacts and
        scores of the trained parameters and the per-epoch losses.

    Raises
    ------
    TrainingError
        On a non-finite loss or gradient. The exception carries the partial history.
    """
    detector = Detector.for_graph(g, config, seed)
    history = detector.fit(g, epochs, learning_rate, progress)
    _, artifacts = detector.forward(g)
    return detector, artifacts, history


def save_checkpoint(detector: Detector, file):
    """Write all parameters and the configuration to a gzipped JSON document

    Parameters
    ----------
    detector : Detector
    file : Union[str, pathlib.Path]
        The '.json.gz' extension is added if the file has none.
    """
    document = dict(
        version=CHECKPOINT_VERSION, n=detector.n, d=detector.d, seed=detector.seed,
        config=detector.config.to_dict(),
        params={name: dict(shape=list(values.shape), values=values.ravel().tolist())
                for name, values in detector.state_dict().items()}
    )
    return checkpoint.save(document, file)


def load_checkpoint(file) -> Detector:
    """Rebuild a :class:`Detector` saved with :func:`save_checkpoint`"""
    document = checkpoint.load(file, version=CHECKPOINT_VERSION)
    try:
        detector = Detector(document['n'], document['d'],
                            DetectorConfig.from_dict(document['config']), document['seed'])
        state = {name: np.reshape(entry['values'], entry['shape'])
                 for name, entry in document['params'].items()}
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError("{}: malformed checkpoint ({})".format(file, e)) from None
    try:
        detector.load_state_dict(state)
    except (RuntimeError, DimensionError) as e:
        raise FormatError("{}: {}".format(file, e)) from None
    return detector
