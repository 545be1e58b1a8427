"""
Sphere KGE - Command Line Orchestrator

Ties ingestion, training, evaluation and embedding analysis into
reproducible runs driven by a flat config file plus flag overrides.
"""

import functools
import itertools
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, Optional

import click
import colorama
import numpy as np
from dotenv import load_dotenv

from . import __version__
from .analysis import knn, negative_score_distribution
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PRESETS, RunConfig, resolve_config
from .data import TripleStore, categorize_relations, dataset_stats, load_dataset, load_entity_names
from .evaluator import evaluate, evaluate_by_category, query_fingerprint
from .exceptions import CheckpointMismatchError, QueryMismatchError, SphereKGEError
from .models import Model, ModelKind, init_model
from .reports import (
    JsonlLog,
    OutputDirectory,
    load_ranks_csv,
    save_histogram_csv,
    save_json,
    save_neighbors_csv,
    save_ranks_csv,
    write_flat_config,
)
from .significance import paired_ttest
from .trainer import LR_GRID, MARGIN_GRID, Trainer

# Load environment variables
load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LEVEL_COLORS = {
    logging.DEBUG: colorama.Fore.CYAN,
    logging.INFO: colorama.Fore.GREEN,
    logging.WARNING: colorama.Fore.YELLOW,
    logging.ERROR: colorama.Fore.RED,
    logging.CRITICAL: colorama.Fore.RED + colorama.Style.BRIGHT,
}

logger = logging.getLogger(__name__)


class ColorFormatter(logging.Formatter):
    """Colours the level name of console records."""

    def format(self, record: logging.LogRecord) -> str:
        color = LEVEL_COLORS.get(record.levelno)
        if not color:
            return super().format(record)
        original = record.levelname
        record.levelname = f"{color}{original}{colorama.Style.RESET_ALL}"
        try:
            return super().format(record)
        finally:
            record.levelname = original


def setup_logging(log_level: str, log_file: Optional[str] = None) -> None:
    """Setup logging configuration."""
    numeric_level = getattr(logging, log_level.upper(), logging.INFO)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(numeric_level)
    if sys.stdout.isatty():
        colorama.just_fix_windows_console()
        console_handler.setFormatter(ColorFormatter(LOG_FORMAT))
    else:
        console_handler.setFormatter(logging.Formatter(LOG_FORMAT))

    handlers = [console_handler]
    if log_file:
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(numeric_level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handlers.append(file_handler)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    root_logger.handlers.clear()
    for handler in handlers:
        root_logger.addHandler(handler)


def run_options(func: Callable) -> Callable:
    """Options shared by every command that resolves a RunConfig."""
    options = [
        click.option('--config', 'config_file', type=click.Path(dir_okay=False),
                     help='Flat KEY=value config file'),
        click.option('--preset', type=click.Choice(sorted(PRESETS), case_sensitive=False),
                     help='Desk-scale preset applied below the config file'),
        click.option('--data', 'data_dir', help='Dataset directory (relative to SPHERE_KGE_DATA_ROOT if set)'),
        click.option('--model', type=click.Choice([k.value for k in ModelKind], case_sensitive=False),
                     help='Model kind'),
        click.option('--dim', type=int, help='Latent dimension D'),
        click.option('--margin', type=float, help='Margin gamma'),
        click.option('--lr', type=float, help='Adam learning rate'),
        click.option('--batch-size', type=int, help='Positives per batch'),
        click.option('--epochs', type=int, help='Epoch limit'),
        click.option('--negatives', type=int, help='Negatives per positive'),
        click.option('--eval-every', type=int, help='Epochs between validation runs'),
        click.option('--patience', type=int, help='Non-improving validations before stopping'),
        click.option('--seed', type=int, help='Random seed'),
        click.option('--radius', type=float, help='Sphere radius R'),
        click.option('--delta', type=float, help='Spherization angle margin'),
        click.option('--epsilon', type=float, help='Projection stabilizer'),
        click.option('--scale', type=float, help='Initial spherization scale'),
        click.option('--transe-normalize/--no-transe-normalize', 'transe_normalize_entities', default=None,
                     help='Rescale touched TransE entities to unit norm after each batch'),
        click.option('--filtered-negatives/--uniform-negatives', 'filtered_negatives', default=None,
                     help='Redraw corruptions that form known triples'),
        click.option('--record-timing/--no-record-timing', 'record_timing', default=None,
                     help='Write wall-clock seconds into the training log'),
        click.option('--threads', type=int, help='Worker threads for evaluation (1 is bit-exact)'),
        click.option('--output-dir', '-o', help='Run directory (default: SPHERE_KGE_OUTDIR or ./runs)'),
        click.option('--checkpoint', help='Checkpoint file (default: <output-dir>/model.ckpt)'),
        click.option('--names', 'names_file', help='Optional label<TAB>display name file'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_config(kwargs: Dict) -> RunConfig:
    """Pop run options from command kwargs and resolve them."""
    config_file = kwargs.pop('config_file', None)
    preset = kwargs.pop('preset', None)
    names = [name for name in list(kwargs) if name in RunConfig.__dataclass_fields__]
    overrides = {name: kwargs.pop(name) for name in names}
    return resolve_config(config_file, overrides, preset=preset)


def command_guard(func: Callable) -> Callable:
    """Turn toolkit errors into a logged message and exit status 1."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SphereKGEError as e:
            logger.error(str(e))
            sys.exit(1)
        except KeyboardInterrupt:
            logger.info("Interrupted by user")
            sys.exit(1)
        except OSError as e:
            logger.error(f"I/O error: {e}")
            sys.exit(1)
        except ValueError as e:
            logger.error(f"Invalid input: {e}")
            sys.exit(1)
    return wrapper


def echo_config(config: RunConfig, output: OutputDirectory, command: str) -> None:
    """Write the fully resolved configuration next to the command's outputs."""
    # train and grid own the run directory; other commands must not overwrite their echo
    path = output.resolved_config if command in ("train", "grid") else output.command_config(command)
    write_flat_config(path, config.to_flat(), header=f"resolved configuration of '{command}'")
    logger.debug(f"Resolved configuration written to {path}")


def load_data(config: RunConfig) -> TripleStore:
    return load_dataset(config.require_data(), config.train_file, config.valid_file, config.test_file)


def build_model(config: RunConfig, dataset: TripleStore) -> Model:
    return init_model(config.kind, dataset.vocab.n_entities, dataset.vocab.n_relations, config.dim,
                      seed=config.seed, radius=config.radius, scale=config.scale,
                      delta=config.delta, epsilon=config.epsilon)


def load_model_for(config: RunConfig, dataset: TripleStore, output: OutputDirectory) -> Model:
    """Load the run's checkpoint and check it against the dataset vocabulary."""
    path = Path(config.checkpoint) if config.checkpoint else output.checkpoint
    model = load_checkpoint(path)
    if model.n_entities != dataset.vocab.n_entities:
        raise CheckpointMismatchError("|E|", dataset.vocab.n_entities, model.n_entities)
    if model.n_relations != dataset.vocab.n_relations:
        raise CheckpointMismatchError("|R|", dataset.vocab.n_relations, model.n_relations)
    logger.info(f"Loaded {model.kind.value} checkpoint {path}")
    return model


@click.group()
@click.version_option(__version__, prog_name='sphere-kge')
@click.option('--log-level', '-l', default='INFO',
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
              help='Logging level')
@click.option('--log-file', help='Log file path (optional)')
@click.option('--quiet', '-q', is_flag=True, help='Hide progress bars')
@click.pass_context
def main(ctx: click.Context, log_level: str, log_file: Optional[str], quiet: bool):
    """
    Sphere KGE

    Train and evaluate spherical and translational knowledge graph embeddings.
    """
    setup_logging(log_level, log_file)
    ctx.ensure_object(dict)
    ctx.obj['progress'] = not quiet


@main.command()
@run_options
@command_guard
def stats(**kwargs):
    """Print dataset statistics and write stats.json."""
    config = build_config(kwargs)
    output = OutputDirectory(config.output_dir)
    dataset = load_data(config)
    categories = categorize_relations(dataset.train, dataset.vocab.n_relations)
    report = dataset_stats({'train': dataset.train, 'valid': dataset.valid, 'test': dataset.test},
                           dataset.vocab, categories)
    click.echo(report.to_table())
    save_json(output.stats, report.to_dict())
    echo_config(config, output, 'stats')


@main.command()
@run_options
@click.pass_context
@command_guard
def train(ctx: click.Context, **kwargs):
    """Train a model; writes model.ckpt, train.log.jsonl and config.resolved."""
    config = build_config(kwargs)
    output = OutputDirectory(config.output_dir)
    dataset = load_data(config)
    echo_config(config, output, 'train')

    model = build_model(config, dataset)
    trainer = Trainer(model, config.train_config(), filter_index=dataset.filter_index,
                      log_path=output.train_log, progress=ctx.obj['progress'])
    best, log = trainer.fit(dataset.train, dataset.valid)
    save_checkpoint(best, output.checkpoint)

    logger.info("=== Training Summary ===")
    logger.info(f"Model: {best.kind.value}")
    logger.info(f"Epochs run: {len(log.epochs)}{' (early stop)' if log.stopped_early else ''}")
    logger.info(f"Best validation MRR: {log.best_val_mrr} at epoch {log.best_epoch}")
    logger.info(f"Checkpoint: {output.checkpoint}")
    logger.info("========================")


@main.command(name='eval')
@run_options
@click.option('--split', type=click.Choice(['train', 'valid', 'test']), default='test', show_default=True,
              help='Split to rank')
@click.option('--by-relation-type', is_flag=True, help='Also write metrics_by_category.json')
@click.pass_context
@command_guard
def eval_command(ctx: click.Context, split: str, by_relation_type: bool, **kwargs):
    """Filtered link-prediction evaluation; writes metrics.json and ranks.csv."""
    config = build_config(kwargs)
    output = OutputDirectory(config.output_dir)
    dataset = load_data(config)
    model = load_model_for(config, dataset, output)
    echo_config(config, output, 'eval')

    target = dataset.split(split)
    result = evaluate(model, target, dataset.filter_index, threads=config.threads,
                      progress=ctx.obj['progress'], desc=f"Ranking {split}")
    report = result.to_dict()
    report['split'] = split
    report['kind'] = model.kind.value
    report['query_fingerprint'] = query_fingerprint(result.ranks)
    save_json(output.metrics, report)
    save_ranks_csv(output.ranks, result.ranks)

    metrics = result.metrics
    logger.info(f"{split}: MRR {metrics.mrr:.4f}  Hits@1 {metrics.hits1:.4f}  Hits@3 {metrics.hits3:.4f}  "
                f"Hits@10 {metrics.hits10:.4f}  ({metrics.count} queries)")

    if by_relation_type:
        categories = categorize_relations(dataset.train, dataset.vocab.n_relations)
        buckets = evaluate_by_category(model, target, dataset.filter_index, categories, result=result)
        save_json(output.metrics_by_category, {name: bucket.to_dict() for name, bucket in buckets.items()})
        for name, bucket in buckets.items():
            mrr = f"{bucket.metrics.mrr:.4f}" if bucket.metrics else "n/a"
            logger.info(f"  {name}: MRR {mrr} ({bucket.count} queries)")


@main.command()
@run_options
@click.option('--margins', default=','.join(str(m) for m in MARGIN_GRID), show_default=True,
              help='Comma-separated margins')
@click.option('--lrs', default=','.join(str(lr) for lr in LR_GRID), show_default=True,
              help='Comma-separated learning rates')
@click.pass_context
@command_guard
def grid(ctx: click.Context, margins: str, lrs: str, **kwargs):
    """Sequential margin x learning-rate grid, selected by validation MRR."""
    config = build_config(kwargs)
    output = OutputDirectory(config.output_dir)
    dataset = load_data(config)

    try:
        margin_values = [float(m) for m in margins.split(',') if m.strip()]
        lr_values = [float(lr) for lr in lrs.split(',') if lr.strip()]
    except ValueError as e:
        raise click.BadParameter(str(e))

    cells = JsonlLog(output.grid)
    best = None
    for margin, lr in itertools.product(margin_values, lr_values):
        cell_config = resolve_config(overrides={**config.to_flat(), 'margin': margin, 'lr': lr})
        cell_output = output.subdirectory(f"margin_{margin:g}_lr_{lr:g}")
        cell_config.output_dir = str(cell_output.base_output_dir)
        echo_config(cell_config, cell_output, 'grid')

        model = build_model(cell_config, dataset)
        trainer = Trainer(model, cell_config.train_config(), filter_index=dataset.filter_index,
                          log_path=cell_output.train_log, progress=ctx.obj['progress'])
        cell_best, log = trainer.fit(dataset.train, dataset.valid)
        save_checkpoint(cell_best, cell_output.checkpoint)

        record = {'margin': margin, 'lr': lr, 'best_val_mrr': log.best_val_mrr,
                  'best_epoch': log.best_epoch, 'epochs_run': len(log.epochs)}
        cells.append(record)
        logger.info(f"Grid cell margin={margin:g} lr={lr:g}: validation MRR {log.best_val_mrr}")

        score = log.best_val_mrr if log.best_val_mrr is not None else -np.inf
        if best is None or score > best[0]:
            best = (score, cell_config, cell_best)

    if best is None:
        raise click.BadParameter("the grid has no cells")
    _, best_config, best_model = best
    save_checkpoint(best_model, output.checkpoint)
    best_config.output_dir = config.output_dir
    echo_config(best_config, output, 'grid')
    logger.info(f"Best grid cell: margin={best_config.margin:g} lr={best_config.lr:g} "
                f"(validation MRR {best[0]:.4f})")


@main.group()
def analyze():
    """Embedding-space analyses of a trained model."""


@analyze.command()
@run_options
@click.option('--q', 'n_queries', default=1000, show_default=True, help='Sampled (h, r) test pairs')
@click.option('--k-neg', 'n_negatives', default=1024, show_default=True, help='Uniform tails per pair')
@click.option('--bins', default=100, show_default=True, help='Histogram bins')
@click.option('--split', type=click.Choice(['train', 'valid', 'test']), default='test', show_default=True)
@command_guard
def negatives(n_queries: int, n_negatives: int, bins: int, split: str, **kwargs):
    """Score distribution of uniformly sampled negative tails."""
    config = build_config(kwargs)
    output = OutputDirectory(config.output_dir)
    dataset = load_data(config)
    model = load_model_for(config, dataset, output)
    echo_config(config, output, 'analyze negatives')

    rng = np.random.default_rng(config.seed)
    report = negative_score_distribution(model, dataset.split(split), n_queries, n_negatives, rng, bins)
    save_histogram_csv(output.negatives_histogram, report)
    save_json(output.negatives_moments, report.moments())
    click.echo(f"mean={report.mean:.6f} variance={report.variance:.6f} samples={report.n_samples}")


@analyze.command(name='knn')
@run_options
@click.option('--entity', required=True, help='Anchor entity label (or display name with --names)')
@click.option('--k', 'k', default=5, show_default=True, help='Number of neighbours')
@command_guard
def knn_command(entity: str, k: int, **kwargs):
    """Nearest neighbours of an entity in the learned space."""
    config = build_config(kwargs)
    output = OutputDirectory(config.output_dir)
    dataset = load_data(config)
    model = load_model_for(config, dataset, output)
    echo_config(config, output, 'analyze knn')

    names = load_entity_names(config.names_file) if config.names_file else None
    neighbors = knn(model, entity, k, dataset.vocab, names)
    save_neighbors_csv(output.knn(entity), entity, neighbors)
    for position, neighbor in enumerate(neighbors, start=1):
        shown = neighbor.name or neighbor.label
        click.echo(f"{position}\t{shown}\t{neighbor.distance:.6f}")


@analyze.command()
@run_options
@click.option('--ranks-a', required=True, type=click.Path(exists=True, dir_okay=False), help='ranks.csv of model A')
@click.option('--ranks-b', required=True, type=click.Path(exists=True, dir_okay=False), help='ranks.csv of model B')
@command_guard
def significance(ranks_a: str, ranks_b: str, **kwargs):
    """Paired t-test on the per-query reciprocal ranks of two evaluations."""
    config = build_config(kwargs)
    output = OutputDirectory(config.output_dir)
    echo_config(config, output, 'analyze significance')

    a = load_ranks_csv(ranks_a)
    b = load_ranks_csv(ranks_b)
    fingerprint_a, fingerprint_b = query_fingerprint(a), query_fingerprint(b)
    if fingerprint_a != fingerprint_b:
        raise QueryMismatchError(fingerprint_a, fingerprint_b)

    result = paired_ttest([r.reciprocal_rank for r in a], [r.reciprocal_rank for r in b])
    save_json(output.base_output_dir / "significance.json", result.to_dict())
    note = " (degenerate: zero variance of differences)" if result.degenerate else ""
    click.echo(f"t={result.t} p={result.p_value}{note}")


if __name__ == '__main__':
    main()
