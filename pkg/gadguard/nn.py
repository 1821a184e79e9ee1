"""Neural network layers: MLP, GAT, GCN, SAGE and GIN

Layers are plain functions of their parameters and inputs. Parameters live in a
:class:`.ModelParams` container and are created by the `init_*` functions, which register
them under a dotted name prefix. Graph structure enters through :class:`Propagation`,
which precomputes the constant operators of one graph.
"""
import enum
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import tensor as tn
from .graph import ConfigError, Graph, normalized_adjacency
from .optim import ModelParams, xavier_init
from .tensor import DimensionError, TensorNode

__all__ = ['Backbone', 'BackboneKind', 'GatLayerParams', 'GcnLayerParams', 'GinLayerParams',
           'LinearParams', 'MlpSpec', 'Propagation', 'SageLayerParams', 'activate',
           'attention_coefficients', 'build_encoder', 'gat_layer', 'gcn_layer', 'gin_layer',
           'init_gat', 'init_gcn', 'init_gin', 'init_mlp', 'init_sage', 'mlp_forward',
           'sage_layer']

_activations = {
    'leaky_relu': tn.leaky_relu,
    'tanh': tn.tanh,
    'none': lambda x: x,
}


def activate(x, name) -> TensorNode:
    """Apply a named activation: 'leaky_relu', 'tanh' or 'none'"""
    try:
        return _activations[name](x)
    except KeyError:
        raise ConfigError("Unknown activation '{}', options: {}".format(
            name, ", ".join(_activations))) from None


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes and per-layer activations of a multilayer perceptron

    Attributes
    ----------
    layer_dims : Tuple[int, ...]
        Input size followed by the output size of each layer.
    activations : Tuple[str, ...]
        One activation per layer.

    Examples
    --------
    >>> MlpSpec.chain([8, 4, 2]).activations
    ('leaky_relu', 'none')
    """
    layer_dims: Tuple[int, ...]
    activations: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, 'layer_dims', tuple(int(d) for d in self.layer_dims))
        object.__setattr__(self, 'activations', tuple(self.activations))
        if len(self.layer_dims) < 2:
            raise ConfigError("An MLP needs at least one layer")
        if any(d < 1 for d in self.layer_dims):
            raise ConfigError("MLP layer sizes must be positive: {}".format(self.layer_dims))
        if len(self.activations) != self.num_layers:
            raise ConfigError("Expected {} activations, got {}".format(
                self.num_layers, len(self.activations)))
        for name in self.activations:
            if name not in _activations:
                raise ConfigError("Unknown activation '{}'".format(name))

    @classmethod
    def chain(cls, dims, hidden='leaky_relu', last='none'):
        """Same activation between layers, a different one after the last"""
        num_layers = len(dims) - 1
        return cls(tuple(dims), (hidden,) * (num_layers - 1) + (last,))

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class LinearParams:
    """Weight stored as `(out, in)` and applied as `x @ weight.T`, optional `1 x out` bias"""
    weight: TensorNode
    bias: Optional[TensorNode] = None


@dataclass
class GatLayerParams:
    """Single-head attention layer

    Attributes
    ----------
    weight : TensorNode
        Shared projection `W`, shape `(out, in)`.
    attention : TensorNode
        Attention vector `a` as a `1 x 2*out` row: the first half scores the center
        node, the second half scores the neighbor.
    """
    weight: TensorNode
    attention: TensorNode

    @property
    def out_dim(self) -> int:
        return self.weight.rows


@dataclass
class GcnLayerParams:
    """Graph convolution weight, shape `(in, out)`"""
    weight: TensorNode


@dataclass
class SageLayerParams:
    """Weight applied to `[x_i || mean of neighbors]`, shape `(out, 2*in)`"""
    weight: TensorNode


@dataclass
class GinLayerParams:
    spec: MlpSpec
    layers: List[LinearParams]


def init_mlp(params: ModelParams, prefix, spec: MlpSpec, rng, bias=True) -> List[LinearParams]:
    """Register Xavier weights and zero biases for every layer of `spec`"""
    layers = []
    for i, (d_in, d_out) in enumerate(zip(spec.layer_dims[:-1], spec.layer_dims[1:])):
        weight = params.add("{}.{}.weight".format(prefix, i), xavier_init(d_out, d_in, rng))
        b = params.add("{}.{}.bias".format(prefix, i), np.zeros((1, d_out))) if bias else None
        layers.append(LinearParams(weight, b))
    return layers


def mlp_forward(spec: MlpSpec, layers, x) -> TensorNode:
    """Apply `act(x @ W.T + b)` layer by layer, no neighbor information is involved

    Examples
    --------
    >>> spec = MlpSpec([2, 2], ['none'])
    >>> identity = [LinearParams(TensorNode(np.eye(2)))]
    >>> mlp_forward(spec, identity, TensorNode([[1.0, -2.0]])).values.tolist()
    [[1.0, -2.0]]
    """
    x = tn.constant(x)
    if x.cols != spec.in_dim:
        raise DimensionError("MLP expects {} input features, got shape {}".format(
            spec.in_dim, x.shape))
    if len(layers) != spec.num_layers:
        raise DimensionError("MLP spec has {} layers but {} were given".format(
            spec.num_layers, len(layers)))

    h = x
    for layer, activation in zip(layers, spec.activations):
        h = h @ layer.weight.T
        if layer.bias is not None:
            h = h + layer.bias
        h = activate(h, activation)
    return h


class Propagation:
    """Constant graph operators shared by all layers working on one graph

    Parameters
    ----------
    g : Graph
    self_loops : bool
        Include each node in its own attention and mean aggregation set. Without it,
        isolated nodes have nothing to aggregate and GAT/SAGE layers refuse the graph.
    """
    def __init__(self, g: Graph, self_loops=True):
        self.graph = g
        self.self_loops = self_loops
        self.adjacency = TensorNode(g.adjacency)
        self.normalized = TensorNode(normalized_adjacency(g))

        mask = g.adjacency > 0
        if self_loops:
            mask = mask | np.eye(g.n, dtype=bool)
        mask.flags.writeable = False
        self._mask = mask

        counts = mask.sum(axis=1, keepdims=True)
        self.mean_aggregation = TensorNode(mask / np.maximum(counts, 1))

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def neighbor_mask(self) -> np.ndarray:
        """Boolean `n x n` aggregation sets, every row must have at least one member"""
        empty = np.flatnonzero(~self._mask.any(axis=1))
        if empty.size:
            raise ConfigError("Nodes {} are isolated and self-loops are disabled: they have "
                              "no neighbors to aggregate".format(empty.tolist()))
        return self._mask

    def gin_aggregation(self, eps=0.0) -> TensorNode:
        """`(1 + eps) I + A`, self-loop handling doesn't apply"""
        return TensorNode((1 + eps) * np.eye(self.n) + self.graph.adjacency)


def init_gat(params: ModelParams, prefix, in_dim, out_dim, rng) -> GatLayerParams:
    weight = params.add(prefix + ".weight", xavier_init(out_dim, in_dim, rng))
    attention = params.add(prefix + ".attention", xavier_init(1, 2 * out_dim, rng))
    return GatLayerParams(weight, attention)


def gat_layer(p: GatLayerParams, x, prop: Propagation, activation='none') -> TensorNode:
    """Graph attention layer

    With `h_i = W x_i`, the unnormalized score of edge `(i, j)` is
    `LeakyReLU(a^T [h_i || h_j])`, scores are normalized with a softmax over the
    aggregation set of `i` and the output is `sum_j alpha_ij h_j`.
    """
    x = tn.constant(x)
    if x.cols != p.weight.cols:
        raise DimensionError("GAT layer expects {} input features, got shape {}".format(
            p.weight.cols, x.shape))
    d = p.out_dim
    h = x @ p.weight.T
    center = h @ tn.take_cols(p.attention, 0, d).T
    neighbor = h @ tn.take_cols(p.attention, d, 2 * d).T
    scores = tn.leaky_relu(center + neighbor.T)
    alpha = tn.row_softmax_over_neighbors(scores, prop.neighbor_mask)
    return activate(alpha @ h, activation)


def attention_coefficients(p: GatLayerParams, x, prop: Propagation) -> np.ndarray:
    """Normalized attention matrix of a GAT layer, zero outside the aggregation sets"""
    d = p.out_dim
    h = tn.constant(x).values @ p.weight.values.T
    a = p.attention.values[0]
    scores = tn.leaky_relu(TensorNode((h @ a[:d])[:, np.newaxis] + (h @ a[d:])[np.newaxis, :]))
    return tn.row_softmax_over_neighbors(scores, prop.neighbor_mask).values


def init_gcn(params: ModelParams, prefix, in_dim, out_dim, rng) -> GcnLayerParams:
    return GcnLayerParams(params.add(prefix + ".weight", xavier_init(in_dim, out_dim, rng)))


def gcn_layer(p: GcnLayerParams, a_norm, h, activation='leaky_relu') -> TensorNode:
    """Graph convolution `act(A_norm @ H @ W)`"""
    h = tn.constant(h)
    if h.cols != p.weight.rows:
        raise DimensionError("GCN layer expects {} input features, got shape {}".format(
            p.weight.rows, h.shape))
    return activate(tn.constant(a_norm) @ h @ p.weight, activation)


def init_sage(params: ModelParams, prefix, in_dim, out_dim, rng) -> SageLayerParams:
    return SageLayerParams(params.add(prefix + ".weight", xavier_init(out_dim, 2 * in_dim, rng)))


def sage_layer(p: SageLayerParams, x, prop: Propagation, activation='none') -> TensorNode:
    """GraphSAGE with mean aggregation: `act(W [x_i || mean_j x_j])`"""
    x = tn.constant(x)
    if 2 * x.cols != p.weight.cols:
        raise DimensionError("SAGE layer expects {} input features, got shape {}".format(
            p.weight.cols // 2, x.shape))
    prop.neighbor_mask  # validates the aggregation sets
    neighbors = prop.mean_aggregation @ x
    return activate(tn.concat_cols(x, neighbors) @ p.weight.T, activation)


def init_gin(params: ModelParams, prefix, in_dim, out_dim, rng) -> GinLayerParams:
    spec = MlpSpec.chain([in_dim, out_dim, out_dim])
    return GinLayerParams(spec, init_mlp(params, prefix + ".mlp", spec, rng))


def gin_layer(p: GinLayerParams, x, prop: Propagation, eps=0.0, activation='none') -> TensorNode:
    """Graph isomorphism layer: `act(MLP((1 + eps) x_i + sum_j x_j))`"""
    x = tn.constant(x)
    if x.cols != p.spec.in_dim:
        raise DimensionError("GIN layer expects {} input features, got shape {}".format(
            p.spec.in_dim, x.shape))
    return activate(mlp_forward(p.spec, p.layers, prop.gin_aggregation(eps) @ x), activation)


class BackboneKind(enum.Enum):
    """Message passing scheme of the consistency encoder"""
    GAT = 'gat'
    GCN = 'gcn'
    SAGE = 'sage'
    GIN = 'gin'

    @classmethod
    def parse(cls, value) -> "BackboneKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError("Unknown backbone '{}', options: {}".format(
                value, ", ".join(k.value for k in cls))) from None


_initializers = {
    BackboneKind.GAT: init_gat,
    BackboneKind.GCN: init_gcn,
    BackboneKind.SAGE: init_sage,
    BackboneKind.GIN: init_gin,
}


class Backbone:
    """A stack of GNN layers of one kind

    Parameters
    ----------
    kind : BackboneKind
    layers : list
        Layer parameters, e.g. :class:`GatLayerParams`.
    activations : list of str
        Activation applied after each layer.
    """
    def __init__(self, kind: BackboneKind, layers, activations):
        self.kind = kind
        self.layers = list(layers)
        self.activations = list(activations)

    def layer(self, p, x, prop: Propagation, activation) -> TensorNode:
        if self.kind is BackboneKind.GAT:
            return gat_layer(p, x, prop, activation)
        elif self.kind is BackboneKind.GCN:
            return gcn_layer(p, prop.normalized, x, activation)
        elif self.kind is BackboneKind.SAGE:
            return sage_layer(p, x, prop, activation)
        else:
            return gin_layer(p, x, prop, eps=0.0, activation=activation)

    def __call__(self, x, prop: Propagation) -> TensorNode:
        h = x
        for p, activation in zip(self.layers, self.activations):
            h = self.layer(p, h, prop, activation)
        return h

    def __repr__(self):
        return "Backbone({}, layers={})".format(self.kind.value, len(self.layers))


def build_encoder(kind, in_dim, hidden_dim, out_dim, params: ModelParams, rng,
                  prefix='encoder') -> Backbone:
    """Two-layer GNN encoder: LeakyReLU after the first layer, linear output

    Parameters
    ----------
    kind : Union[BackboneKind, str]
    in_dim, hidden_dim, out_dim : int
    params : ModelParams
        Receives the new weights under `prefix`.
    rng : np.random.Generator
    """
    kind = BackboneKind.parse(kind)
    for dim in (in_dim, hidden_dim, out_dim):
        if dim < 1:
            raise ConfigError("Encoder dimensions must be positive, got {}".format(
                (in_dim, hidden_dim, out_dim)))
    init = _initializers[kind]
    layers = [init(params, prefix + ".0", in_dim, hidden_dim, rng),
              init(params, prefix + ".1", hidden_dim, out_dim, rng)]
    return Backbone(kind, layers, ['leaky_relu', 'none'])
