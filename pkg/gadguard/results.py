"""Processing and presentation of computed data

Result objects hold computed data and know how to save it as CSV/JSON/Markdown and how
to plot it.
"""
import csv
import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import matplotlib.pyplot as plt

from . import pltutils
from .graph import FormatError
from .utils import with_defaults

__all__ = ['ExperimentSummary', 'LossHistory', 'RunResult', 'ScoreHistogram', 'SweepTable',
           'load_scores', 'save_scores']

LOSS_COMPONENTS = ('attr', 'topo', 'cons', 'cc', 'total')


class LossHistory:
    """Per-epoch values of every loss component

    Examples
    --------
    >>> h = LossHistory()
    >>> h.append(dict(attr=2.0, topo=1.0, cons=1.0, cc=0.5, total=3.0))
    >>> len(h), h.total.tolist()
    (1, [3.0])
    """
    def __init__(self, rows=()):
        self._rows = [self._check(r) for r in rows]

    @staticmethod
    def _check(row):
        try:
            return {name: float(row[name]) for name in LOSS_COMPONENTS}
        except KeyError as e:
            raise FormatError("Loss record is missing component {}".format(e)) from None

    def append(self, losses):
        self._rows.append(self._check(losses))

    def __len__(self):
        return len(self._rows)

    def __getitem__(self, epoch) -> dict:
        return dict(self._rows[epoch])

    def component(self, name) -> np.ndarray:
        if name not in LOSS_COMPONENTS:
            raise KeyError("Unknown loss component '{}'".format(name))
        return np.array([r[name] for r in self._rows])

    @property
    def total(self) -> np.ndarray:
        return self.component('total')

    def save_csv(self, file):
        """One row per epoch: `epoch,attr,topo,cons,cc,total`"""
        with open(str(file), 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(('epoch',) + LOSS_COMPONENTS)
            for epoch, row in enumerate(self._rows):
                writer.writerow([epoch] + [repr(row[name]) for name in LOSS_COMPONENTS])

    @classmethod
    def load_csv(cls, file) -> "LossHistory":
        with open(str(file), newline='') as f:
            try:
                return cls(dict(row) for row in csv.DictReader(f))
            except ValueError as e:
                raise FormatError("{}: {}".format(file, e)) from None

    def plot(self, components=('total',), **kwargs):
        """Line plot of loss components against the epoch

        Parameters
        ----------
        components : Sequence[str]
        **kwargs
            Forwarded to `plt.plot()`.
        """
        epochs = np.arange(1, len(self) + 1)
        for name in components:
            plt.plot(epochs, self.component(name), label=name, **with_defaults(kwargs, lw=1))
        plt.xlabel('epoch')
        plt.ylabel('loss')
        if len(components) > 1:
            pltutils.legend()
        pltutils.despine()

    def save_svg(self, file, components=('total',)):
        plt.figure()
        self.plot(components)
        pltutils.savefig(file)


class ScoreHistogram:
    """Binned anomaly scores, split into normal nodes and anomalies when labels are known

    Attributes
    ----------
    edges : np.ndarray
        Bin edges, one more than the number of bins.
    normal : np.ndarray
        Counts of normal nodes, or of all nodes when there are no labels.
    anomaly : Optional[np.ndarray]
        Counts of anomalies, `None` without labels.
    normal_mean, anomaly_mean : Optional[float]
        Mean score of each series.
    """
    def __init__(self, edges, normal, anomaly=None, normal_mean=None, anomaly_mean=None):
        self.edges = np.asarray(edges)
        self.normal = np.asarray(normal)
        self.anomaly = np.asarray(anomaly) if anomaly is not None else None
        self.normal_mean = normal_mean
        self.anomaly_mean = anomaly_mean

    @classmethod
    def from_scores(cls, scores, labels=None, bins=50) -> "ScoreHistogram":
        """Bin scores on a common grid spanning all of them

        >>> h = ScoreHistogram.from_scores([0.0, 1.0, 2.0, 3.0], [0, 0, 0, 1], bins=3)
        >>> h.normal.tolist(), h.anomaly.tolist(), h.anomaly_mean
        ([1, 1, 1], [0, 0, 1], 3.0)
        """
        scores = np.asarray(scores, dtype=np.float64)
        if scores.size == 0:
            raise FormatError("Can't bin an empty score vector")
        if bins < 1:
            raise FormatError("Need at least one bin, got {}".format(bins))
        edges = np.histogram_bin_edges(scores, bins=bins)
        if labels is None:
            return cls(edges, np.histogram(scores, edges)[0], normal_mean=float(scores.mean()))

        labels = np.asarray(labels)
        if labels.shape != scores.shape:
            raise FormatError("Got {} labels for {} scores".format(labels.size, scores.size))
        normal, anomaly = scores[labels == 0], scores[labels == 1]

        def mean(values):
            return float(values.mean()) if values.size else None

        return cls(edges, np.histogram(normal, edges)[0], np.histogram(anomaly, edges)[0],
                   mean(normal), mean(anomaly))

    @property
    def has_labels(self) -> bool:
        return self.anomaly is not None

    @property
    def num_bins(self) -> int:
        return self.normal.size

    def save_csv(self, file):
        """One row per bin: `bin_start,bin_end,normal[,anomaly]`"""
        header = ['bin_start', 'bin_end', 'normal'] + (['anomaly'] if self.has_labels else [])
        with open(str(file), 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for i in range(self.num_bins):
                row = [repr(float(self.edges[i])), repr(float(self.edges[i + 1])),
                       int(self.normal[i])]
                if self.has_labels:
                    row.append(int(self.anomaly[i]))
                writer.writerow(row)

    def plot(self):
        """Bar histogram with one color per series and dashed lines at the series means"""
        normal_color, anomaly_color = pltutils.anomaly_colors()
        widths = np.diff(self.edges)
        label = 'normal' if self.has_labels else 'all nodes'
        plt.bar(self.edges[:-1], self.normal, width=widths, align='edge', color=normal_color,
                alpha=0.6, label=label)
        if self.normal_mean is not None:
            plt.axvline(self.normal_mean, color=normal_color, ls='--', lw=1)

        if self.has_labels:
            plt.bar(self.edges[:-1], self.anomaly, width=widths, align='edge',
                    color=anomaly_color, alpha=0.6, label='anomaly')
            if self.anomaly_mean is not None:
                plt.axvline(self.anomaly_mean, color=anomaly_color, ls='--', lw=1)
            pltutils.legend()

        plt.xlabel('anomaly score')
        plt.ylabel('nodes')
        pltutils.despine()

    def save_svg(self, file):
        plt.figure()
        self.plot()
        pltutils.savefig(file)


def save_scores(scores, file):
    """Write scores as CSV with the header `node,score`"""
    with open(str(file), 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['node', 'score'])
        for node, score in enumerate(scores):
            writer.writerow([node, repr(float(score))])


def load_scores(file) -> np.ndarray:
    """Read a `node,score` CSV, nodes must be listed as 0, 1, 2, ..."""
    scores = []
    with open(str(file), newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ['node', 'score']:
            raise FormatError("{}: expected header 'node,score'".format(file))
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                node, score = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise FormatError("{}:{}: malformed row".format(file, line_number)) from None
            if node != len(scores):
                raise FormatError("{}:{}: expected node {}, got {}".format(
                    file, line_number, len(scores), node))
            scores.append(score)
    if not scores:
        raise FormatError("{}: no scores".format(file))
    return np.array(scores)


@dataclass
class RunResult:
    """Outcome of training and evaluating one seed

    Attributes
    ----------
    seed : int
    auc, ap : float
        Detection metrics in [0, 1].
    loss_history : Optional[LossHistory]
    wall_time : float
        Seconds spent training.
    scores : Optional[np.ndarray]
    """
    seed: int
    auc: float
    ap: float
    loss_history: Optional[LossHistory] = None
    wall_time: float = 0.0
    scores: Optional[np.ndarray] = field(default=None, repr=False)


class ExperimentSummary:
    """Mean and population standard deviation of metrics over runs

    Parameters
    ----------
    runs : List[RunResult]
        At least one run, in seed order.
    config : dict
        Snapshot of the configuration shared by all runs.

    Examples
    --------
    >>> s = ExperimentSummary([RunResult(0, 0.8, 0.4), RunResult(1, 0.6, 0.2)])
    >>> round(s.auc_mean, 12), round(s.auc_std, 12)
    (0.7, 0.1)
    """
    def __init__(self, runs, config=None):
        self.runs = list(runs)
        if not self.runs:
            raise RuntimeError("An experiment summary needs at least one run")
        self.config = dict(config or {})

    def _values(self, metric) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.runs])

    @property
    def auc_mean(self) -> float:
        return float(self._values('auc').mean())

    @property
    def auc_std(self) -> float:
        return float(self._values('auc').std())

    @property
    def ap_mean(self) -> float:
        return float(self._values('ap').mean())

    @property
    def ap_std(self) -> float:
        return float(self._values('ap').std())

    @property
    def seeds(self) -> list:
        return [r.seed for r in self.runs]

    def metrics(self) -> dict:
        """`{auc, ap}` for one run, plus `auc_std` and `ap_std` for several"""
        out = dict(auc=self.auc_mean, ap=self.ap_mean)
        if len(self.runs) > 1:
            out.update(auc_std=self.auc_std, ap_std=self.ap_std)
        return out

    def report(self) -> str:
        return "AUC {:.4f}±{:.4f}  AP {:.4f}±{:.4f}  ({} run{})".format(
            self.auc_mean, self.auc_std, self.ap_mean, self.ap_std, len(self.runs),
            "s" if len(self.runs) > 1 else "")

    def save_json(self, file):
        document = dict(self.metrics(), seeds=self.seeds, config=self.config)
        with open(str(file), 'w', encoding='utf-8') as f:
            json.dump(document, f, indent=2, sort_keys=True)

    def save_csv(self, file):
        """One row per run: `seed,auc,ap,wall_time`"""
        with open(str(file), 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['seed', 'auc', 'ap', 'wall_time'])
            for r in self.runs:
                writer.writerow([r.seed, repr(r.auc), repr(r.ap), repr(r.wall_time)])

    def __repr__(self):
        return "ExperimentSummary({})".format(self.report())


class SweepTable:
    """One experiment summary per variant of a swept setting

    Attributes
    ----------
    axis : str
        Name of the swept setting, e.g. 'ablation'.
    rows : List[Tuple[str, ExperimentSummary]]
        Variant names and results in sweep order.
    """
    def __init__(self, axis, rows=()):
        self.axis = axis
        self.rows = list(rows)

    def add(self, variant, summary: ExperimentSummary):
        self.rows.append((variant, summary))

    def __len__(self):
        return len(self.rows)

    @property
    def variants(self) -> List[str]:
        return [name for name, _ in self.rows]

    def __getitem__(self, variant) -> ExperimentSummary:
        for name, summary in self.rows:
            if name == variant:
                return summary
        raise KeyError("No variant '{}' in the {} sweep".format(variant, self.axis))

    def best(self, metric='auc') -> str:
        """Variant with the highest mean of `metric`, the first one wins ties"""
        means = [getattr(s, metric + '_mean') for _, s in self.rows]
        return self.rows[int(np.argmax(means))][0]

    def to_markdown(self) -> str:
        lines = ["| {} | AUC | AP |".format(self.axis), "|---|---|---|"]
        for name, s in self.rows:
            lines.append("| {} | {:.4f}±{:.4f} | {:.4f}±{:.4f} |".format(
                name, s.auc_mean, s.auc_std, s.ap_mean, s.ap_std))
        return "\n".join(lines) + "\n"

    def save_markdown(self, file):
        with open(str(file), 'w', encoding='utf-8') as f:
            f.write(self.to_markdown())

    def save_csv(self, file):
        with open(str(file), 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['variant', 'auc_mean', 'auc_std', 'ap_mean', 'ap_std', 'runs'])
            for name, s in self.rows:
                writer.writerow([name, repr(s.auc_mean), repr(s.auc_std), repr(s.ap_mean),
                                 repr(s.ap_std), len(s.runs)])
