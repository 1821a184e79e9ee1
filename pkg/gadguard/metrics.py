"""Ranking metrics for anomaly scores: ROC-AUC and average precision"""
import numpy as np
from scipy.stats import rankdata

from .graph import AnomalyGroundTruth

__all__ = ['MetricError', 'average_precision', 'roc_auc']


class MetricError(RuntimeError):
    """Scores and labels can't be evaluated"""


def _prepare(scores, labels):
    if isinstance(labels, AnomalyGroundTruth):
        labels = labels.labels
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size != labels.size:
        raise MetricError("Got {} scores for {} labels".format(scores.size, labels.size))
    if not np.all(np.isfinite(scores)):
        raise MetricError("Scores must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError("Labels must be 0 or 1")
    return scores, labels.astype(bool)


def roc_auc(scores, labels) -> float:
    """Probability that a random anomaly outranks a random normal node, ties count half

    Computed exactly from average ranks (Mann-Whitney U divided by `#pos * #neg`).

    Parameters
    ----------
    scores : array_like
        Higher means more anomalous.
    labels : Union[array_like, AnomalyGroundTruth]

    Examples
    --------
    >>> roc_auc([0.9, 0.1], [1, 0])
    1.0
    >>> roc_auc([0.3, 0.3, 0.3], [1, 0, 0])
    0.5
    """
    scores, positive = _prepare(scores, labels)
    num_pos = int(positive.sum())
    num_neg = positive.size - num_pos
    if num_pos == 0 or num_neg == 0:
        raise MetricError("ROC-AUC needs both anomalies and normal nodes, got {} and {}".format(
            num_pos, num_neg))

    ranks = rankdata(scores)
    u = ranks[positive].sum() - num_pos * (num_pos + 1) / 2
    return float(u / (num_pos * num_neg))


def average_precision(scores, labels) -> float:
    """Step-wise area under the precision-recall curve of the score-descending ranking

    `AP = sum_k (R_k - R_{k-1}) P_k`, where equal scores are ranked by ascending node index.

    Examples
    --------
    >>> average_precision([0.9, 0.1], [1, 0])
    1.0
    >>> average_precision([0.9, 0.1], [0, 1])
    0.5
    """
    scores, positive = _prepare(scores, labels)
    num_pos = int(positive.sum())
    if num_pos == 0:
        raise MetricError("Average precision needs at least one anomaly")

    # primary key: descending score, secondary: ascending index
    order = np.lexsort((np.arange(scores.size), -scores))
    hits = positive[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision[hits].sum() / num_pos)
