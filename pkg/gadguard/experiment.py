"""Multi-seed evaluation protocol and parameter sweeps

Each seed trains an independent detector, so seeds can run on worker threads. Results are
always aggregated in seed order, independent of completion order.
"""
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace

from .detector import DetectorConfig, train
from .graph import AnomalyGroundTruth, ConfigError, Graph
from .metrics import average_precision, roc_auc
from .optim import TrainingError
from .results import ExperimentSummary, RunResult, SweepTable
from .utils import pretty_duration, timed

__all__ = ['DEFAULT_SEEDS', 'SWEEP_AXES', 'num_cores', 'run_protocol', 'sweep', 'sweep_variants']

num_cores = os.cpu_count() or 1
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

LAMBDA1_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
LAMBDA2_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
LEARNING_RATES = (5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4)
EMBED_DIMS = (16, 32, 64, 128)
ABLATIONS = (
    ('full', ''),
    ('w/o AR', 'ar'),
    ('w/o TR', 'tr'),
    ('w/o CA', 'ca'),
    ('w/o AR&CA', 'ar,ca'),
    ('w/o TR&CA', 'tr,ca'),
    ('w/o AR&TR', 'ar,tr'),
)
BACKBONES = ('gcn', 'gat', 'sage', 'gin')
SWEEP_AXES = ('ablation', 'arch', 'backbone', 'backbone-compare', 'readout', 'lambda', 'lr',
              'dim')


def _sequential_for(sequence, produce, retire):
    """Simple single-threaded for loop"""
    for idx, var in enumerate(sequence):
        retire(produce(var), idx)


def _parallel_for(sequence, produce, retire, num_threads=num_cores):
    """Multi-threaded version of `_sequential_for`

    `produce` runs on worker threads, `retire` is always called on the calling thread,
    in completion order, with the index of the value in `sequence`.
    """
    with ThreadPoolExecutor(max_workers=num_threads) as pool:
        futures = {pool.submit(produce, var): idx for idx, var in enumerate(sequence)}
        for future in as_completed(futures):
            retire(future.result(), futures[future])


class DefaultStatus:
    """Prints one line per finished seed"""
    def __init__(self, seeds):
        count_width = len(str(len(seeds)))
        seed_width = max(len(str(s)) for s in seeds)
        self.template = "{{count:{}}}| seed = {{seed:{}}} | {{report}}".format(
            count_width, seed_width)

    def __call__(self, result: RunResult, count):
        report = "AUC {:.4f}  AP {:.4f}  {}".format(result.auc, result.ap,
                                                    pretty_duration(result.wall_time))
        print(self.template.format(count=count, seed=result.seed, report=report))


def run_protocol(g: Graph, truth: AnomalyGroundTruth, config: DetectorConfig = None,
                 seeds=DEFAULT_SEEDS, epochs=100, learning_rate=5e-3, num_threads=1,
                 silent=False) -> ExperimentSummary:
    """Train once per seed and summarize AUC and AP as mean and population std

    Parameters
    ----------
    g : Graph
    truth : AnomalyGroundTruth
        Only used for evaluation, never for training.
    config : DetectorConfig
    seeds : Sequence[int]
        One training run per seed, at least one.
    epochs : int
    learning_rate : float
    num_threads : int
        Number of seeds trained concurrently.
    silent : bool
        Don't print a status line for each finished seed.

    Raises
    ------
    TrainingError
        A run diverged, the message names the seed.
    """
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("run_protocol needs at least one seed")
    config = config or DetectorConfig()

    def produce(seed):
        with timed() as t:
            try:
                _, artifacts, history = train(g, config, epochs, learning_rate, seed)
            except TrainingError as e:
                raise TrainingError("seed {}: {}".format(seed, e), e.history) from None
        return RunResult(seed, roc_auc(artifacts.scores, truth),
                         average_precision(artifacts.scores, truth), history, t.elapsed,
                         artifacts.scores)

    results = [None] * len(seeds)
    status = DefaultStatus(seeds) if not silent else None

    def retire(result, idx):
        results[idx] = result
        if status:
            status(result, sum(r is not None for r in results))

    if num_threads > 1 and len(seeds) > 1:
        _parallel_for(seeds, produce, retire, min(num_threads, len(seeds)))
    else:
        _sequential_for(seeds, produce, retire)

    snapshot = dict(config.to_dict(), epochs=epochs, learning_rate=learning_rate)
    return ExperimentSummary(results, snapshot)


def sweep_variants(base: DetectorConfig, axis, learning_rate=5e-3):
    """List the `(name, config, learning_rate)` variants of a single-stage sweep axis

    The 'lambda' axis is two-staged and only lists its first stage here.
    """
    if axis == 'ablation':
        return [(name, base.ablate(flags), learning_rate) for name, flags in ABLATIONS]
    elif axis == 'arch':
        return [(arch, replace(base, arch=arch), learning_rate)
                for arch in ('full', 'shared', 'separated')]
    elif axis == 'backbone':
        return [(kind.upper(), replace(base, backbone=kind), learning_rate)
                for kind in BACKBONES]
    elif axis == 'backbone-compare':
        variants = []
        for kind in BACKBONES:
            variants.append((kind.upper(), replace(base, backbone=kind), learning_rate))
            plain = replace(base, backbone=kind, arch='shared', use_attr_recon=True,
                            use_topo_recon=True, use_cons_align=False)
            variants.append(("{} (plain)".format(kind.upper()), plain, learning_rate))
        return variants
    elif axis == 'readout':
        return [(kind, replace(base, readout=kind), learning_rate)
                for kind in ('mean', 'min', 'max', 'attention')]
    elif axis == 'lambda':
        return [("lambda1={:g}".format(v), replace(base, lambda1=v), learning_rate)
                for v in LAMBDA1_GRID]
    elif axis == 'lr':
        return [("lr={:.0e}".format(v), base, v) for v in LEARNING_RATES]
    elif axis == 'dim':
        return [("dim={}".format(v), replace(base, embed_dim=v), learning_rate)
                for v in EMBED_DIMS]
    elif not axis:
        raise ConfigError("No sweep axis given, options: {}".format(", ".join(SWEEP_AXES)))
    else:
        raise ConfigError("Unknown sweep axis '{}', options: {}".format(
            axis, ", ".join(SWEEP_AXES)))


def sweep(g: Graph, truth: AnomalyGroundTruth, base: DetectorConfig = None, axis='ablation',
          seeds=DEFAULT_SEEDS, epochs=100, learning_rate=5e-3, num_threads=1,
          silent=False) -> SweepTable:
    """Run the multi-seed protocol for every variant along one axis

    Axes: 'ablation' (full model and the six AR/TR/CA removals), 'arch' (full, shared,
    separated), 'backbone' (GCN, GAT, SAGE, GIN), 'backbone-compare' (each backbone in the
    guarded detector next to the plain autoencoder on the same backbone: a shared encoder
    with attribute and topology reconstruction only), 'readout' (mean, min, max, attention),
    'lambda' (first lambda1 over [0, 1] at fixed lambda2, then lambda2 at the best
    lambda1), 'lr' and 'dim'.
    """
    base = base or DetectorConfig()
    table = SweepTable(axis)

    def run(name, config, lr):
        if not silent:
            print("== {} ==".format(name))
        table.add(name, run_protocol(g, truth, config, seeds, epochs, lr, num_threads, silent))

    for name, config, lr in sweep_variants(base, axis, learning_rate):
        run(name, config, lr)

    if axis == 'lambda':
        best_lambda1 = table[table.best('auc')].config['lambda1']
        for v in LAMBDA2_GRID:
            run("lambda2={:g} (lambda1={:g})".format(v, best_lambda1),
                replace(base, lambda1=best_lambda1, lambda2=v), learning_rate)
    return table
