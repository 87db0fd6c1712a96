"""
SVG charts of the CSV tables the commands write.

Figures are built on the object API with the SVG canvas, so no pyplot state
is shared between threads. The hash salt and the missing date make the
output byte-identical between runs.
"""
import io

from matplotlib import rc_context
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .exceptions import FormatError

SVG_RC = {'svg.hashsalt': 'autolabel', 'svg.fonttype': 'none'}
SVG_METADATA = {'Date': None}


def _svg(figure):
    buffer = io.StringIO()
    with rc_context(SVG_RC):
        FigureCanvasSVG(figure)
        figure.savefig(buffer, format='svg', metadata=SVG_METADATA)
    return buffer.getvalue()


def _figure(title, xlabel, ylabel):
    figure = Figure(figsize=(7, 4.5))
    ax = figure.add_subplot(1, 1, 1)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return figure, ax


def _floats(rows, k, path):
    try:
        return [float(row[k]) for row in rows]
    except (ValueError, IndexError):
        raise FormatError(f"column {k + 1} is not numeric", path)


def line_chart(header, rows, title='', path=None):
    """
    Sweep tables plot recall and precision per row; noise summaries plot the
    means with std error bars over sigma.
    """
    header = list(header)
    if not rows:
        raise FormatError("table has no rows", path)
    if 'recall_mean' in header:
        figure, ax = _figure(title, header[0], 'score')
        x = _floats(rows, 0, path)
        for name in ('recall', 'precision'):
            mean = _floats(rows, header.index(f'{name}_mean'), path)
            std = _floats(rows, header.index(f'{name}_std'), path)
            ax.errorbar(x, mean, yerr=std, fmt='-o', capsize=3, label=name)
    elif header[:2] == ['param', 'value']:
        figure, ax = _figure(title, 'setting', 'score')
        x = list(range(len(rows)))
        for name in ('recall', 'precision'):
            ax.plot(x, _floats(rows, header.index(name), path), '-o', label=name)
        ax.set_xticks(x)
        ax.set_xticklabels([f"{row[0]}={row[1]}" for row in rows], rotation=45, ha='right', fontsize=7)
    else:
        figure, ax = _figure(title, header[0], 'value')
        x = _floats(rows, 0, path)
        for k, name in enumerate(header[1:], start=1):
            if name == 'seed':
                continue
            ax.plot(x, _floats(rows, k, path), 'o', label=name)
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc='lower left')
    figure.tight_layout()
    return _svg(figure)


def histogram_chart(header, rows, title='', path=None):
    if list(header[:3]) != ['bin_lo', 'bin_hi', 'count']:
        raise FormatError("expected a bin_lo,bin_hi,count table", path)
    lo, hi, count = (_floats(rows, k, path) for k in range(3))
    figure, ax = _figure(title, 'IoU with ground truth', 'labels')
    ax.bar(lo, count, width=[b - a for a, b in zip(lo, hi)], align='edge', edgecolor='black')
    ax.set_xlim(0.0, 1.0)
    figure.tight_layout()
    return _svg(figure)


CHARTS = {'line': line_chart, 'hist': histogram_chart}
