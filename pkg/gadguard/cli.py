"""Command-line interface: `gadguard <command> [options]`

Commands form a plain-file pipeline::

    gadguard synth  --out base/
    gadguard inject --data base/ --out data/
    gadguard train  --data data/ --out run/
    gadguard eval   --scores run/scores.csv --labels data/labels.txt --out run/
    gadguard report --scores run/scores.csv --labels data/labels.txt --loss run/loss.csv --out run/

A dataset directory holds `edges.tsv`, `attrs.csv` and, after injection, `labels.txt` and
`provenance.json`. Every command that writes files also writes a `manifest.json`.
"""
import argparse
import json
import pathlib
import sys

import numpy as np

from . import experiment, pltutils
from .__about__ import __version__
from .detector import (ARCHITECTURES, READOUTS, DetectorConfig, load_checkpoint,
                       save_checkpoint, train)
from .graph import (ConfigError, FormatError, load_graph, load_labels, save_graph, save_labels,
                    save_provenance)
from .injection import InjectionConfig, inject_anomalies, synth_base_graph
from .metrics import MetricError, average_precision, roc_auc
from .nn import BackboneKind
from .optim import TrainingError
from .results import (LOSS_COMPONENTS, ExperimentSummary, LossHistory, RunResult,
                      ScoreHistogram, load_scores, save_scores)
from .support.manifest import RunManifest
from .tensor import ContractError, DimensionError

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

__all__ = ['build_parser', 'load_config_file', 'main']

EDGES_FILE = 'edges.tsv'
ATTRS_FILE = 'attrs.csv'
LABELS_FILE = 'labels.txt'
PROVENANCE_FILE = 'provenance.json'

_errors = (ConfigError, FormatError, MetricError, TrainingError, DimensionError,
           ContractError, OSError)


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer, got {}".format(text))
    return value


def non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("can't be negative, got {}".format(text))
    return value


def load_config_file(path, command=None) -> dict:
    """Read flag values from a TOML or JSON file

    Top-level keys apply to every command, a table named after `command` overrides them.
    Keys are flag names with dashes or underscores.
    """
    path = pathlib.Path(path)
    try:
        if path.suffix == '.json':
            with path.open(encoding='utf-8') as f:
                document = json.load(f)
        else:
            with path.open('rb') as f:
                document = tomllib.load(f)
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise FormatError("{}: can't parse config file ({})".format(path, e)) from None
    if not isinstance(document, dict):
        raise FormatError("{}: config file must contain a table of options".format(path))

    values = {k: v for k, v in document.items() if not isinstance(v, dict)}
    if command:
        values.update(document.get(command, {}))
    return {key.replace('-', '_'): value for key, value in values.items()}


def _convert_config_values(sub, values, source):
    """Run file values through the `type` and `choices` of the matching flags"""
    actions = {action.dest: action for action in sub._actions}
    converted = {}
    for dest, value in values.items():
        action = actions[dest]
        flag = action.option_strings[-1]
        many = action.nargs in ('+', '*')
        if many and not isinstance(value, list):
            sub.error("{}: {} expects a list, got {!r}".format(source, flag, value))
        items = value if many else [value]
        if action.type is not None:
            try:
                items = [action.type(str(item)) for item in items]
            except (ValueError, TypeError, argparse.ArgumentTypeError) as e:
                sub.error("{}: invalid value for {}: {!r} ({})".format(source, flag, value, e))
        if action.choices is not None:
            for item in items:
                if item not in action.choices:
                    sub.error("{}: invalid choice for {}: {!r} (choose from {})".format(
                        source, flag, item, ", ".join(map(str, action.choices))))
        converted[dest] = items if many else items[0]
    return converted


def _dataset(directory):
    directory = pathlib.Path(directory)
    return directory / EDGES_FILE, directory / ATTRS_FILE


def _load_dataset(directory, manifest):
    edge_path, attr_path = _dataset(directory)
    g = load_graph(edge_path, attr_path)
    manifest.add_input(edge_path)
    manifest.add_input(attr_path)
    return g


def _output_dir(args):
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(args) -> dict:
    """JSON-friendly copy of the effective options"""
    skip = {'func', 'config'}
    result = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        if isinstance(value, pathlib.PurePath):
            value = str(value)
        elif isinstance(value, list):
            value = [str(v) if isinstance(v, pathlib.PurePath) else v for v in value]
        result[key] = value
    return result


def _detector_config(args) -> DetectorConfig:
    config = DetectorConfig(embed_dim=args.dim, lambda1=args.lambda1, lambda2=args.lambda2,
                            backbone=args.backbone, readout=args.readout, arch=args.arch)
    return config.ablate(args.ablate) if args.ablate else config


def cmd_synth(args):
    out = _output_dir(args)
    manifest = RunManifest('synth', _snapshot(args), seeds=[args.seed])
    g = synth_base_graph(args.nodes, args.dim, args.avg_degree, args.clusters,
                         np.random.default_rng(args.seed))

    edge_path, attr_path = _dataset(out)
    save_graph(g, edge_path, attr_path)
    manifest.add_output(edge_path)
    manifest.add_output(attr_path)
    manifest.write(out)
    print("Synthesized {} nodes, {} edges, {} attributes -> {}".format(
        g.n, g.num_edges, g.d, out))


def cmd_inject(args):
    out = _output_dir(args)
    manifest = RunManifest('inject', _snapshot(args), seeds=[args.seed])
    g = _load_dataset(args.data, manifest)
    config = InjectionConfig(args.clique_size, args.cliques, args.candidates,
                             args.attr_anomalies, args.seed)
    g, truth = inject_anomalies(g, config)

    edge_path, attr_path = _dataset(out)
    save_graph(g, edge_path, attr_path)
    save_labels(truth, out / LABELS_FILE)
    save_provenance(truth, out / PROVENANCE_FILE)
    for path in (edge_path, attr_path, out / LABELS_FILE, out / PROVENANCE_FILE):
        manifest.add_output(path)
    manifest.write(out)
    print("Planted {} topological and {} attributed anomalies ({} of {} nodes) -> {}".format(
        truth.count('topological'), truth.count('attributed'), truth.k, truth.n, out))


def _print_metrics(scores, labels_path, n):
    if labels_path.exists():
        truth = load_labels(labels_path, n)
        if 0 < truth.k < n:
            print("AUC {:.4f}  AP {:.4f}".format(roc_auc(scores, truth),
                                                 average_precision(scores, truth)))


def cmd_train(args):
    out = _output_dir(args)
    config = _detector_config(args)
    manifest = RunManifest('train', dict(_snapshot(args), detector=config.to_dict()),
                           seeds=[args.seed])
    g = _load_dataset(args.data, manifest)

    try:
        detector, artifacts, history = train(g, config, args.epochs, args.lr, args.seed,
                                             progress=args.progress)
    except TrainingError as e:
        if e.history is not None:
            e.history.save_csv(out / 'loss.csv')
        raise

    checkpoint_path = pathlib.Path(save_checkpoint(detector, out / 'checkpoint.json.gz'))
    save_scores(artifacts.scores, out / 'scores.csv')
    history.save_csv(out / 'loss.csv')
    for path in (checkpoint_path, out / 'scores.csv', out / 'loss.csv'):
        manifest.add_output(path)
    manifest.write(out)

    print("Trained {} for {} epochs, final loss {:.6g} -> {}".format(
        detector, args.epochs, history.total[-1], out))
    _print_metrics(artifacts.scores, pathlib.Path(args.data) / LABELS_FILE, g.n)


def cmd_score(args):
    out = _output_dir(args)
    manifest = RunManifest('score', _snapshot(args))
    detector = load_checkpoint(args.checkpoint)
    manifest.add_input(args.checkpoint)
    manifest.seeds = [detector.seed]
    g = _load_dataset(args.data, manifest)

    scores = detector.scores(g)
    save_scores(scores, out / 'scores.csv')
    manifest.add_output(out / 'scores.csv')
    manifest.write(out)
    print("Scored {} nodes -> {}".format(g.n, out / 'scores.csv'))
    _print_metrics(scores, pathlib.Path(args.data) / LABELS_FILE, g.n)


def cmd_eval(args):
    files = [args.scores] if args.scores else list(args.runs)
    out = _output_dir(args)
    manifest = RunManifest('eval', _snapshot(args))

    runs = []
    truth = None
    for index, path in enumerate(files):
        scores = load_scores(path)
        manifest.add_input(path)
        if truth is None:
            truth = load_labels(args.labels, scores.size)
            manifest.add_input(args.labels)
        elif scores.size != truth.n:
            raise MetricError("{}: got {} scores for {} labels".format(
                path, scores.size, truth.n))
        runs.append(RunResult(index, roc_auc(scores, truth), average_precision(scores, truth)))

    summary = ExperimentSummary(runs, dict(scores=[str(f) for f in files],
                                           labels=str(args.labels)))
    summary.save_json(out / 'metrics.json')
    summary.save_csv(out / 'metrics.csv')
    manifest.add_output(out / 'metrics.json')
    manifest.add_output(out / 'metrics.csv')
    manifest.write(out)
    print(summary.report())


def cmd_report(args):
    out = _output_dir(args)
    manifest = RunManifest('report', _snapshot(args))
    scores = load_scores(args.scores)
    manifest.add_input(args.scores)
    labels = None
    if args.labels:
        labels = load_labels(args.labels, scores.size).labels
        manifest.add_input(args.labels)

    histogram = ScoreHistogram.from_scores(scores, labels, bins=args.bins)
    outputs = [out / 'histogram.csv', out / 'histogram.svg']
    with pltutils.backend('Agg'):
        pltutils.use_style()
        histogram.save_csv(outputs[0])
        histogram.save_svg(outputs[1])
        if args.loss:
            history = LossHistory.load_csv(args.loss)
            manifest.add_input(args.loss)
            history.save_svg(out / 'loss.svg', components=LOSS_COMPONENTS)
            outputs.append(out / 'loss.svg')

    for path in outputs:
        manifest.add_output(path)
    manifest.write(out)
    print("Wrote {} -> {}".format(", ".join(p.name for p in outputs), out))


def cmd_sweep(args):
    if not args.axis:
        raise ConfigError("No sweep axis given, options: {}".format(
            ", ".join(experiment.SWEEP_AXES)))
    out = _output_dir(args)
    base = _detector_config(args)
    manifest = RunManifest('sweep', dict(_snapshot(args), detector=base.to_dict()),
                           seeds=args.seeds)
    g = _load_dataset(args.data, manifest)
    labels_path = pathlib.Path(args.labels or pathlib.Path(args.data) / LABELS_FILE)
    truth = load_labels(labels_path, g.n)
    manifest.add_input(labels_path)

    table = experiment.sweep(g, truth, base, args.axis, args.seeds, args.epochs, args.lr,
                             args.threads, silent=args.silent)
    table.save_markdown(out / 'sweep.md')
    table.save_csv(out / 'sweep.csv')
    manifest.add_output(out / 'sweep.md')
    manifest.add_output(out / 'sweep.csv')
    manifest.write(out)
    print(table.to_markdown())


def _model_options():
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("model")
    group.add_argument("--lambda1", type=float, default=0.8,
                       help="weight of attribute vs. topology reconstruction")
    group.add_argument("--lambda2", type=float, default=0.2,
                       help="weight of the consistency alignment")
    group.add_argument("--lr", type=float, default=5e-3, help="Adam learning rate")
    group.add_argument("--epochs", type=positive_int, default=100)
    group.add_argument("--dim", type=positive_int, default=64, help="embedding size")
    group.add_argument("--backbone", choices=[k.value for k in BackboneKind], default='gat')
    group.add_argument("--readout", choices=READOUTS, default='mean')
    group.add_argument("--arch", choices=ARCHITECTURES, default='full')
    group.add_argument("--ablate", default='',
                       help="comma-separated terms to switch off: ar, tr, ca, cc")
    return parent


def build_parser():
    """Return the top-level parser and a `{command: subparser}` dict"""
    parser = argparse.ArgumentParser(
        prog='gadguard', description="Unsupervised node anomaly detection on attributed graphs")
    parser.add_argument("--version", action='version', version="%(prog)s " + __version__)
    subparsers = parser.add_subparsers(dest='command', metavar='command')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=pathlib.Path,
                        help="TOML or JSON file with option values, flags take precedence")
    common.add_argument("--out", type=pathlib.Path, help="output directory")
    model = _model_options()
    commands = {}

    def add(name, func, help, parents=(common,)):
        sub = subparsers.add_parser(name, help=help, parents=list(parents),
                                    formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        sub.set_defaults(func=func)
        commands[name] = sub
        return sub

    sub = add('synth', cmd_synth, "generate a clustered base graph")
    sub.add_argument("--nodes", type=positive_int, default=500)
    sub.add_argument("--dim", type=positive_int, default=32, help="attribute dimension")
    sub.add_argument("--avg-degree", type=float, default=8.0)
    sub.add_argument("--clusters", type=positive_int, default=5)
    sub.add_argument("--seed", type=int, default=0)

    sub = add('inject', cmd_inject, "plant clique and attribute anomalies")
    sub.add_argument("--data", type=pathlib.Path, help="dataset directory")
    sub.add_argument("--clique-size", type=positive_int, default=15)
    sub.add_argument("--cliques", type=non_negative_int, default=5)
    sub.add_argument("--candidates", type=positive_int, default=50)
    sub.add_argument("--attr-anomalies", type=non_negative_int, default=None,
                     help="defaults to clique-size * cliques")
    sub.add_argument("--seed", type=int, default=0)

    sub = add('train', cmd_train, "train a detector and score every node",
              parents=(common, model))
    sub.add_argument("--data", type=pathlib.Path, help="dataset directory")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--progress", action='store_true', help="show a progress bar")

    sub = add('score', cmd_score, "score a graph with a saved checkpoint")
    sub.add_argument("--data", type=pathlib.Path, help="dataset directory")
    sub.add_argument("--checkpoint", type=pathlib.Path)

    sub = add('eval', cmd_eval, "compute ROC-AUC and AP of score files")
    inputs = sub.add_mutually_exclusive_group()
    inputs.add_argument("--scores", type=pathlib.Path, help="a single score file")
    inputs.add_argument("--runs", type=pathlib.Path, nargs='+',
                        help="score files of several runs, summarized as mean and std")
    sub.add_argument("--labels", type=pathlib.Path)

    sub = add('report', cmd_report, "plot score histograms and loss curves")
    sub.add_argument("--scores", type=pathlib.Path)
    sub.add_argument("--labels", type=pathlib.Path)
    sub.add_argument("--loss", type=pathlib.Path, help="loss history CSV")
    sub.add_argument("--bins", type=positive_int, default=50)

    sub = add('sweep', cmd_sweep, "compare model variants along one axis",
              parents=(common, model))
    sub.add_argument("--data", type=pathlib.Path, help="dataset directory")
    sub.add_argument("--labels", type=pathlib.Path,
                     help="defaults to labels.txt in the dataset directory")
    sub.add_argument("--axis", choices=experiment.SWEEP_AXES)
    sub.add_argument("--seeds", type=int, nargs='+', default=list(experiment.DEFAULT_SEEDS))
    sub.add_argument("--threads", type=positive_int, default=1)
    sub.add_argument("--silent", action='store_true', help="no per-seed status lines")

    return parser, commands


_required = {
    'synth': ['out'],
    'inject': ['data', 'out'],
    'train': ['data', 'out'],
    'score': ['data', 'checkpoint', 'out'],
    'eval': ['labels', 'out'],
    'report': ['scores', 'out'],
    'sweep': ['data', 'out'],
}


def parse_args(argv=None):
    """Parse flags, fill in values from `--config` and check required options"""
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.error("a command is required: {}".format(", ".join(commands)))
    sub = commands[args.command]

    if args.config:
        try:
            values = load_config_file(args.config, args.command)
        except (FormatError, OSError) as e:
            sub.error(str(e))
        unknown = sorted(set(values) - set(vars(args)) | set(values) & {'func', 'command'})
        if unknown:
            sub.error("unknown option(s) in {}: {}".format(args.config, ", ".join(unknown)))
        sub.set_defaults(**_convert_config_values(sub, values, args.config))
        args = parser.parse_args(argv)

    missing = [name for name in _required[args.command] if getattr(args, name) is None]
    if missing:
        sub.error("the following arguments are required: {}".format(
            ", ".join("--" + m.replace('_', '-') for m in missing)))
    if args.command == 'eval' and not (args.scores or args.runs):
        sub.error("one of --scores or --runs is required")
    return args


def main(argv=None):
    """Entry point of the `gadguard` console script, returns the exit status"""
    args = parse_args(argv)
    try:
        args.func(args)
    except _errors as e:
        print("error: {}".format(e), file=sys.stderr)
        return 1
    return 0
