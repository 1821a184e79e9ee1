"""Package for unsupervised graph anomaly detection with guarded graph neural networks"""
__title__ = "gadguard"
__version__ = "0.1.0.dev"
__summary__ = "Guarded GNN autoencoders for unsupervised graph anomaly detection"
__url__ = "https://github.com/gadguard/gadguard"

__author__ = "gadguard developers"
__copyright__ = "2026, " + __author__
__email__ = "gadguard@users.noreply.github.com"
__license__ = "BSD"
