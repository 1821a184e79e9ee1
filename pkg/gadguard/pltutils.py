"""Collection of utility functions for matplotlib"""
from contextlib import contextmanager

import matplotlib as mpl
import matplotlib.style as mpl_style
import matplotlib.pyplot as plt

__all__ = ['anomaly_colors', 'backend', 'despine', 'get_palette', 'legend', 'savefig',
           'use_style']


@contextmanager
def backend(new_backend):
    """Change the backend within this context

    Parameters
    ----------
    new_backend : str
        Name of a matplotlib backend.
    """
    old_backend = mpl.get_backend()
    plt.switch_backend(new_backend)
    try:
        yield
    finally:
        plt.switch_backend(old_backend)


def despine(ax=None):
    """Remove the top and right spines"""
    ax = ax or plt.gca()
    for side in ["top", "right"]:
        ax.spines[side].set_visible(False)
    ax.xaxis.tick_bottom()
    ax.yaxis.tick_left()


def legend(*args, reverse=False, facecolor='0.98', lw=0, **kwargs):
    """Custom legend with modified style and option to reverse label order

    Parameters
    ----------
    reverse : bool
        Reverse the label order.
    facecolor : color
        Legend background color.
    lw : float
        Frame width.
    *args, **kwargs
        Forwarded to :func:`matplotlib.pyplot.legend`.
    """
    h, l = plt.gca().get_legend_handles_labels()
    if not h:
        return None

    if not reverse:
        ret = plt.legend(*args, **kwargs)
    else:
        ret = plt.legend(h[::-1], l[::-1], *args, **kwargs)

    frame = ret.get_frame()
    frame.set_facecolor(facecolor)
    frame.set_linewidth(lw)
    return ret


def get_palette(name=None, num_colors=8):
    """Colors of the active property cycle or of a named qualitative colormap

    Returns
    -------
    List[color]
    """
    if not name:
        return [x['color'] for x in mpl.rcParams["axes.prop_cycle"]]
    cmap = mpl.colormaps[name]
    return [list(cmap(i)[:3]) for i in range(min(num_colors, cmap.N))]


def anomaly_colors():
    """Colors for normal nodes and anomalies, in that order"""
    palette = get_palette('Set1')
    return palette[1], palette[0]


def savefig(file, fig=None):
    """Save a figure (SVG for '.svg' files) and close it"""
    fig = fig or plt.gcf()
    fig.savefig(str(file))
    plt.close(fig)


def _make_style():
    nearly_black = '0.15'
    linewidth = 0.6
    style = {
        'font.size': 7.0,
        'text.color': nearly_black,
        'axes.edgecolor': nearly_black,
        'axes.linewidth': linewidth,
        'axes.labelcolor': nearly_black,
        'axes.prop_cycle': plt.cycler('color', get_palette('Set1')),
        'xtick.color': nearly_black,
        'ytick.color': nearly_black,
        'legend.fontsize': 'medium',
        'legend.framealpha': 0.9,
        'figure.figsize': (3.4, 2.8),
        'figure.facecolor': 'white',
        'svg.fonttype': 'none',  # keep text as text
        'savefig.bbox': 'tight',
        'savefig.pad_inches': 0.04,
    }
    return style


gadguard_style = _make_style()


def use_style(style=gadguard_style):
    """use_style(style=gadguard_style)

    Shortcut for :func:`matplotlib.style.use` with the gadguard style applied by default
    """
    mpl_style.use(style)
