"""Synthetic attributed graphs and planted anomalies

Two kinds of anomalies are planted into a normal graph:

* topological: groups of `p` nodes are fully interconnected into cliques;
* attributed: a node's attributes are replaced by those of the farthest (Euclidean)
  node among `k` random candidates.
"""
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from .graph import AnomalyGroundTruth, AnomalyRecord, ConfigError, Graph

__all__ = ['InjectionConfig', 'inject_anomalies', 'inject_attributed', 'inject_topological',
           'synth_base_graph']


def _cluster_sizes(n, num_clusters):
    """Split `n` nodes into `num_clusters` balanced groups, larger ones first

    >>> _cluster_sizes(10, 3)
    [4, 3, 3]
    """
    base, extra = divmod(n, num_clusters)
    return [base + 1 if i < extra else base for i in range(num_clusters)]


def synth_base_graph(n, d, avg_degree, num_clusters, rng, ratio=10.0, center_scale=1.0,
                     noise=0.5) -> Graph:
    """Planted-partition graph with cluster-dependent Gaussian attributes

    Nodes are split into balanced clusters. Each pair is connected independently with
    probability `p_in` inside a cluster and `p_out = p_in / ratio` across clusters, where
    the two are solved so the expected mean degree equals `avg_degree`. Attributes are
    drawn around a random center per cluster, so connected nodes tend to look alike.

    Parameters
    ----------
    n, d : int
        Number of nodes and attribute dimension.
    avg_degree : float
        Expected mean node degree.
    num_clusters : int
        A single cluster gives an Erdos-Renyi graph.
    rng : np.random.Generator
    ratio : float
        Intra- to inter-cluster edge probability ratio.
    center_scale, noise : float
        Standard deviations of the cluster centers and of the per-node scatter.
    """
    if n < 1 or d < 1:
        raise ConfigError("synth_base_graph: need n >= 1 and d >= 1, got n={}, d={}".format(n, d))
    if not 1 <= num_clusters <= n:
        raise ConfigError("synth_base_graph: num_clusters must be in [1, {}], got {}".format(
            n, num_clusters))
    if avg_degree < 0 or ratio < 1:
        raise ConfigError("synth_base_graph: need avg_degree >= 0 and ratio >= 1")

    sizes = np.array(_cluster_sizes(n, num_clusters))
    membership = np.repeat(np.arange(num_clusters), sizes)

    # expected degree sum per unit of p_out
    pair_weight = np.sum(sizes * (sizes - 1)) * ratio + np.sum(sizes * (n - sizes))
    if avg_degree == 0:
        p_out = 0.0
    elif pair_weight == 0:
        raise ConfigError("synth_base_graph: a single node can't have degree {}".format(
            avg_degree))
    else:
        p_out = avg_degree * n / pair_weight
    p_in = ratio * p_out if np.any(sizes > 1) else p_out
    if max(p_in, p_out) > 1:
        raise ConfigError("synth_base_graph: average degree {} is infeasible for {} nodes "
                          "in {} clusters (edge probability {:.3g})".format(
                              avg_degree, n, num_clusters, max(p_in, p_out)))

    same_cluster = membership[:, np.newaxis] == membership[np.newaxis, :]
    probability = np.where(same_cluster, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probability, k=1)
    adjacency = (upper | upper.T).astype(np.float64)

    centers = rng.normal(0, center_scale, size=(num_clusters, d))
    attributes = centers[membership] + rng.normal(0, noise, size=(n, d))
    return Graph(adjacency, attributes)


def inject_topological(g: Graph, p, q, rng):
    """Plant `q` cliques of `p` nodes each

    Clique members are sampled without replacement across all cliques, so exactly `p * q`
    nodes become anomalies. Edges which already exist are kept.

    Returns
    -------
    Tuple[Graph, List[AnomalyRecord]]
        The new graph and one record per anomalous node (`params` hold the clique index).
    """
    if p < 2 or q < 0:
        raise ConfigError("Clique injection needs p >= 2 and q >= 0, got p={}, q={}".format(p, q))
    if p * q > g.n:
        raise ConfigError("Can't plant {} cliques of {} nodes in a graph with {} nodes".format(
            q, p, g.n))
    if q == 0:
        return g, []

    cliques = rng.choice(g.n, size=p * q, replace=False).reshape(q, p)
    edges = [pair for clique in cliques for pair in combinations(clique, 2)]
    records = [AnomalyRecord(int(node), 'topological', dict(clique=index, clique_size=p))
               for index, clique in enumerate(cliques) for node in clique]
    return g.with_edges(edges), records


def inject_attributed(g: Graph, count, k, rng, exclude=()):
    """Swap the attributes of `count` nodes with their farthest of `k` candidates

    Targets are drawn without replacement from the nodes not listed in `exclude`. For each
    target, `k` candidates are drawn from all other nodes and the target takes a copy of
    the candidate attributes with the largest Euclidean distance to its own. Distances
    always use the original attributes. Ties go to the first drawn candidate.

    Returns
    -------
    Tuple[Graph, List[AnomalyRecord]]
        The new graph and one record per target (`params` hold the source node).
    """
    exclude = np.asarray(exclude, dtype=np.int64)
    population = np.setdiff1d(np.arange(g.n), exclude)
    if count < 0 or k < 1:
        raise ConfigError("Attribute injection needs count >= 0 and k >= 1")
    if count == 0:
        return g, []
    if k > g.n - 1 or count + k > g.n or count > population.size:
        raise ConfigError("Can't pick {} targets with {} candidates each from {} nodes "
                          "({} available as targets)".format(count, k, g.n, population.size))

    x = g.attributes
    new_attributes = x.copy()
    targets = rng.choice(population, size=count, replace=False)
    records = []
    for target in targets:
        others = np.delete(np.arange(g.n), target)
        candidates = rng.choice(others, size=k, replace=False)
        distances = np.linalg.norm(x[candidates] - x[target], axis=1)
        best = int(np.argmax(distances))
        source = int(candidates[best])
        new_attributes[target] = x[source]
        records.append(AnomalyRecord(int(target), 'attributed', dict(
            source=source, candidates=k, distance=float(distances[best]))))
    return g.with_attributes(new_attributes), records


@dataclass(frozen=True)
class InjectionConfig:
    """Parameters of the anomaly injection protocol

    Attributes
    ----------
    clique_size : int
        Nodes per planted clique `p`.
    num_cliques : int
        Number of cliques `q`.
    attr_candidates : int
        Candidates `k` considered for each attribute swap.
    num_attr_anomalies : Optional[int]
        Attribute anomalies to plant, defaults to `p * q` for balanced classes.
    seed : int
    """
    clique_size: int = 15
    num_cliques: int = 5
    attr_candidates: int = 50
    num_attr_anomalies: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.clique_size < 2:
            raise ConfigError("clique_size must be at least 2, got {}".format(self.clique_size))
        if self.num_cliques < 0:
            raise ConfigError("num_cliques can't be negative")
        if self.attr_candidates < 1:
            raise ConfigError("attr_candidates must be at least 1")
        if self.num_attr_anomalies is not None and self.num_attr_anomalies < 0:
            raise ConfigError("num_attr_anomalies can't be negative")

    @property
    def num_topological(self) -> int:
        return self.clique_size * self.num_cliques

    @property
    def num_attributed(self) -> int:
        if self.num_attr_anomalies is None:
            return self.num_topological
        return self.num_attr_anomalies


def inject_anomalies(g: Graph, config: InjectionConfig):
    """Plant cliques, then attribute swaps on disjoint targets

    Returns
    -------
    Tuple[Graph, AnomalyGroundTruth]

    Examples
    --------
    >>> base = synth_base_graph(60, 4, 4, 3, np.random.default_rng(0))
    >>> g, truth = inject_anomalies(base, InjectionConfig(3, 2, 5, seed=1))
    >>> truth.k, truth.count('topological'), truth.count('attributed')
    (12, 6, 6)
    """
    total = config.num_topological + config.num_attributed
    if total >= g.n:
        raise ConfigError("{} anomalies requested for a graph with only {} nodes".format(
            total, g.n))

    rng = np.random.default_rng(config.seed)
    g, topological = inject_topological(g, config.clique_size, config.num_cliques, rng)
    g, attributed = inject_attributed(g, config.num_attributed, config.attr_candidates, rng,
                                      exclude=[r.node for r in topological])

    records = topological + attributed
    labels = np.zeros(g.n, dtype=np.int64)
    labels[[r.node for r in records]] = 1
    return g, AnomalyGroundTruth(labels, records)
