"""Attributed graphs, anomaly labels and their plain-text file formats

A :class:`Graph` is an undirected simple graph with a dense attribute matrix. The stored
adjacency is symmetric, binary and has an empty diagonal. Self-loops only appear in
:func:`normalized_adjacency`, which works with `A + I`.
"""
import csv
import json
import pathlib
import warnings
from collections import namedtuple

import numpy as np

__all__ = ['AnomalyGroundTruth', 'AnomalyRecord', 'ConfigError', 'FormatError', 'Graph',
           'load_graph', 'load_labels', 'load_provenance', 'normalized_adjacency',
           'save_graph', 'save_labels', 'save_provenance']


class FormatError(RuntimeError):
    """Malformed graph, attribute, label or checkpoint data"""


class ConfigError(RuntimeError):
    """An infeasible synthesis, injection or model configuration"""


def _readonly(array):
    array.flags.writeable = False
    return array


class Graph:
    """Immutable attributed graph

    Parameters
    ----------
    adjacency : array_like
        Symmetric binary `n x n` matrix with a zero diagonal.
    attributes : array_like
        Finite `n x d` real matrix, row `i` belongs to node `i`.

    Attributes
    ----------
    adjacency : np.ndarray
        Read-only `n x n` float64 matrix of zeros and ones.
    attributes : np.ndarray
        Read-only `n x d` float64 matrix.
    neighbor_lists : tuple of np.ndarray
        Sorted neighbor indices of every node.
    """
    def __init__(self, adjacency, attributes):
        adjacency = np.array(adjacency, dtype=np.float64)
        attributes = np.array(attributes, dtype=np.float64)
        if attributes.ndim == 1:
            attributes = attributes[:, np.newaxis]

        if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
            raise FormatError("Adjacency must be a square matrix, got shape {}".format(
                adjacency.shape))
        n = adjacency.shape[0]
        if n < 1:
            raise FormatError("A graph needs at least one node")
        if attributes.ndim != 2 or attributes.shape[0] != n or attributes.shape[1] < 1:
            raise FormatError("Attribute matrix of shape {} doesn't fit {} nodes".format(
                attributes.shape, n))
        if not np.all((adjacency == 0) | (adjacency == 1)):
            raise FormatError("Adjacency entries must be 0 or 1")
        if np.any(adjacency != adjacency.T):
            raise FormatError("Adjacency must be symmetric")
        if np.any(np.diag(adjacency) != 0):
            raise FormatError("Adjacency diagonal must be zero, self-loops aren't stored")
        bad = np.argwhere(~np.isfinite(attributes))
        if bad.size:
            raise FormatError("Attribute of node {} is not finite".format(bad[0, 0]))

        self._adjacency = _readonly(adjacency)
        self._attributes = _readonly(attributes)
        self._neighbor_lists = tuple(_readonly(np.flatnonzero(row)) for row in adjacency)

    @classmethod
    def from_edges(cls, edges, attributes):
        """Build a graph from an edge list, duplicates and reversed pairs are merged

        Parameters
        ----------
        edges : array_like
            Pairs of 0-based node indices, shape `(m, 2)`.
        attributes : array_like
            The `n x d` attribute matrix which also determines `n`.

        Examples
        --------
        >>> g = Graph.from_edges([(0, 1), (1, 0)], [[0.0], [1.0]])
        >>> g.adjacency.tolist(), g.num_edges
        ([[0.0, 1.0], [1.0, 0.0]], 1)
        """
        attributes = np.array(attributes, dtype=np.float64)
        n = attributes.shape[0]
        edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise FormatError("Edge index out of range for a graph with {} nodes".format(n))
        if np.any(edges[:, 0] == edges[:, 1]):
            raise FormatError("Self-loops aren't allowed in the edge list")

        adjacency = np.zeros((n, n))
        adjacency[edges[:, 0], edges[:, 1]] = 1
        adjacency[edges[:, 1], edges[:, 0]] = 1
        return cls(adjacency, attributes)

    @property
    def n(self) -> int:
        """Number of nodes"""
        return self._adjacency.shape[0]

    @property
    def d(self) -> int:
        """Attribute dimension"""
        return self._attributes.shape[1]

    @property
    def adjacency(self) -> np.ndarray:
        return self._adjacency

    @property
    def attributes(self) -> np.ndarray:
        return self._attributes

    @property
    def neighbor_lists(self):
        return self._neighbor_lists

    @property
    def degrees(self) -> np.ndarray:
        return self._adjacency.sum(axis=1).astype(int)

    @property
    def num_edges(self) -> int:
        return int(self._adjacency.sum()) // 2

    @property
    def edges(self) -> np.ndarray:
        """Undirected edges as `(m, 2)` pairs with `u < v`, sorted"""
        return np.argwhere(np.triu(self._adjacency, k=1))

    @property
    def isolated_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.degrees == 0)

    def with_edges(self, edges):
        """Return a copy with additional undirected edges, existing edges are kept"""
        edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        adjacency = self._adjacency.copy()
        adjacency[edges[:, 0], edges[:, 1]] = 1
        adjacency[edges[:, 1], edges[:, 0]] = 1
        return Graph(adjacency, self._attributes)

    def with_attributes(self, attributes):
        """Return a copy with the same topology and new attributes"""
        return Graph(self._adjacency, attributes)

    def permuted(self, order):
        """Relabel nodes: node `i` of the new graph is node `order[i]` of this one

        >>> g = Graph.from_edges([(0, 1)], [[0.0], [1.0], [2.0]])
        >>> p = g.permuted([2, 0, 1])
        >>> p.attributes[:, 0].tolist(), p.edges.tolist()
        ([2.0, 0.0, 1.0], [[1, 2]])
        """
        order = np.asarray(order, dtype=np.int64)
        if sorted(order.tolist()) != list(range(self.n)):
            raise FormatError("Not a permutation of {} nodes".format(self.n))
        return Graph(self._adjacency[np.ix_(order, order)], self._attributes[order])

    def __repr__(self):
        return "Graph(n={}, d={}, edges={})".format(self.n, self.d, self.num_edges)


def normalized_adjacency(g: Graph) -> np.ndarray:
    """Symmetrically normalized adjacency with self-loops: `D^-1/2 (A + I) D^-1/2`

    `D` is the degree matrix of `A + I`, so every degree is positive.

    Examples
    --------
    >>> np.round(normalized_adjacency(Graph.from_edges([(0, 1)], [[0.0], [0.0]])), 12).tolist()
    [[0.5, 0.5], [0.5, 0.5]]
    """
    a_star = g.adjacency + np.eye(g.n)
    d_inv_sqrt = 1 / np.sqrt(a_star.sum(axis=1))
    return d_inv_sqrt[:, np.newaxis] * a_star * d_inv_sqrt[np.newaxis, :]


AnomalyRecord = namedtuple('AnomalyRecord', ['node', 'kind', 'params'])
AnomalyRecord.__doc__ = """Provenance of one injected anomaly

Attributes
----------
node : int
kind : str
    Either 'topological' or 'attributed'.
params : dict
    Injection metadata, e.g. the clique index or the source node of swapped attributes.
"""

_anomaly_kinds = ('topological', 'attributed')


class AnomalyGroundTruth:
    """Binary anomaly labels plus the provenance of injected anomalies

    Only evaluation code reads this: the detector never sees labels.

    Parameters
    ----------
    labels : array_like
        Length-n vector of 0/1 values.
    provenance : Iterable[AnomalyRecord]
        Optional per-anomaly records, each must point at a node labeled 1.
    """
    def __init__(self, labels, provenance=()):
        labels = np.array(labels)
        if labels.ndim != 1 or not np.all((labels == 0) | (labels == 1)):
            raise FormatError("Labels must be a vector of 0/1 values")
        self._labels = _readonly(labels.astype(np.int64))

        self.provenance = tuple(AnomalyRecord(int(r.node), r.kind, dict(r.params))
                                for r in provenance)
        for record in self.provenance:
            if record.kind not in _anomaly_kinds:
                raise FormatError("Unknown anomaly kind '{}'".format(record.kind))
            if not 0 <= record.node < self.n or self._labels[record.node] != 1:
                raise FormatError("Provenance references node {} which isn't labeled "
                                  "anomalous".format(record.node))

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def n(self) -> int:
        return self._labels.size

    @property
    def k(self) -> int:
        """Number of anomalies"""
        return int(self._labels.sum())

    @property
    def anomalies(self) -> np.ndarray:
        return np.flatnonzero(self._labels)

    def count(self, kind) -> int:
        """Number of provenance records of the given kind"""
        return sum(1 for r in self.provenance if r.kind == kind)

    def permuted(self, order):
        """Relabel nodes consistently with :meth:`Graph.permuted`"""
        order = np.asarray(order, dtype=np.int64)
        inverse = np.argsort(order)
        records = [AnomalyRecord(int(inverse[r.node]), r.kind, r.params)
                   for r in self.provenance]
        return AnomalyGroundTruth(self._labels[order], records)

    def __repr__(self):
        return "AnomalyGroundTruth(n={}, k={})".format(self.n, self.k)


def _parse_attributes(path):
    rows = []
    with open(str(path), newline='') as file:
        for line_number, row in enumerate(csv.reader(file), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise FormatError("{}:{}: non-numeric attribute value".format(
                    path, line_number)) from None
            if not all(np.isfinite(values)):
                raise FormatError("{}:{}: attribute value is not finite".format(
                    path, line_number))
            if rows and len(values) != len(rows[0]):
                raise FormatError("{}:{}: expected {} columns, got {}".format(
                    path, line_number, len(rows[0]), len(values)))
            rows.append(values)

    if not rows:
        raise FormatError("{}: no attribute rows".format(path))
    return np.array(rows)


def _parse_edges(path, n):
    edges, self_loops = [], 0
    with open(str(path), encoding='utf-8') as file:
        for line_number, line in enumerate(file, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 2:
                raise FormatError("{}:{}: expected 'u<TAB>v', got '{}'".format(
                    path, line_number, line))
            try:
                u, v = int(fields[0]), int(fields[1])
            except ValueError:
                raise FormatError("{}:{}: node indices must be integers".format(
                    path, line_number)) from None
            for index in (u, v):
                if not 0 <= index < n:
                    raise FormatError("{}:{}: node index {} out of range for {} nodes".format(
                        path, line_number, index, n))
            if u == v:
                self_loops += 1
            else:
                edges.append((u, v))
    return edges, self_loops


def load_graph(edge_path, attr_path) -> Graph:
    """Read a graph from an edge list and a headerless attribute CSV

    The attribute file determines the node count. Edges are symmetrized and deduplicated.
    Self-loop lines are dropped with a warning reporting how many there were.

    Parameters
    ----------
    edge_path : Union[str, pathlib.Path]
        One `u<TAB>v` pair of 0-based indices per line, '#' starts a comment.
    attr_path : Union[str, pathlib.Path]
        CSV with one row of reals per node.
    """
    attributes = _parse_attributes(attr_path)
    edges, self_loops = _parse_edges(edge_path, attributes.shape[0])
    if self_loops:
        warnings.warn("Dropped {} self-loop line(s) from {}".format(self_loops, edge_path))
    return Graph.from_edges(edges, attributes)


def save_graph(g: Graph, edge_path, attr_path):
    """Write the inverse of :func:`load_graph`, floats round-trip exactly"""
    with open(str(edge_path), 'w', encoding='utf-8') as file:
        for u, v in g.edges:
            file.write("{}\t{}\n".format(u, v))
    np.savetxt(str(attr_path), g.attributes, fmt='%.17g', delimiter=',')


def load_labels(path, n) -> AnomalyGroundTruth:
    """Read one 0/1 label per line, exactly `n` lines are required"""
    labels = []
    with open(str(path)) as file:
        for line_number, line in enumerate(file, start=1):
            line = line.strip()
            if not line:
                continue
            if line not in ('0', '1'):
                raise FormatError("{}:{}: label must be 0 or 1, got '{}'".format(
                    path, line_number, line))
            labels.append(int(line))

    if len(labels) != n:
        raise FormatError("{}: expected {} labels, got {}".format(path, n, len(labels)))
    return AnomalyGroundTruth(labels)


def save_labels(truth: AnomalyGroundTruth, path):
    pathlib.Path(str(path)).write_text("".join("{}\n".format(v) for v in truth.labels))


def save_provenance(truth: AnomalyGroundTruth, path):
    """Write the provenance records as a JSON list of `{node, kind, **params}`"""
    records = [dict(r.params, node=r.node, kind=r.kind) for r in truth.provenance]
    with open(str(path), 'w') as file:
        json.dump(records, file, indent=2, sort_keys=True)


def load_provenance(path, n) -> list:
    """Read the records written by :func:`save_provenance`"""
    try:
        with open(str(path)) as file:
            entries = json.load(file)
    except json.JSONDecodeError as e:
        raise FormatError("{}: invalid JSON: {}".format(path, e)) from None

    records = []
    for entry in entries:
        entry = dict(entry)
        try:
            node, kind = int(entry.pop('node')), entry.pop('kind')
        except KeyError as e:
            raise FormatError("{}: provenance entry without {}".format(path, e)) from None
        if not 0 <= node < n:
            raise FormatError("{}: provenance node {} out of range".format(path, node))
        records.append(AnomalyRecord(node, kind, entry))
    return records
