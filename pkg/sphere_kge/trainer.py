"""
Training Module

Margin-ranking training with uniform head/tail corruption, Adam updates,
optional per-batch TransE entity normalisation, early stopping on filtered
validation MRR, and a JSON-lines training log.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .data import EncodedSplit, FilterIndex, TripleStore, build_filter_index
from .evaluator import evaluate
from .exceptions import NonFiniteLossError
from .models import Model, ModelKind, entity_norms, model_gradients, score
from .optimizer import AdamState, adam_step
from .reports import JsonlLog

logger = logging.getLogger(__name__)

MARGIN_GRID = (3.0, 6.0, 9.0, 12.0)
LR_GRID = (1e-3, 5e-4, 1e-4, 5e-5)
FILTERED_RESAMPLE_ATTEMPTS = 10


@dataclass
class TrainConfig:
    """Optimisation settings for one training run."""

    dim: int = 100
    margin: float = 6.0
    lr: float = 5e-4
    batch_size: int = 1024
    epochs: int = 1000
    negatives: int = 1
    eval_every: int = 50
    patience: int = 5
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    transe_normalize_entities: bool = True
    filtered_negatives: bool = False
    record_timing: bool = False
    threads: int = 1

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError(f"Margin must be positive, got {self.margin}")
        if not self.lr >= 0:
            raise ValueError(f"Learning rate must be non-negative, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"Batch size must be >= 1, got {self.batch_size}")
        if self.negatives < 1:
            raise ValueError(f"Negatives per positive must be >= 1, got {self.negatives}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.patience < 1:
            raise ValueError(f"Patience must be >= 1, got {self.patience}")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    val_mrr: Optional[float] = None
    max_entity_norm: Optional[float] = None
    seconds: Optional[float] = None

    def to_dict(self, record_timing: bool = False) -> Dict:
        record = {"epoch": self.epoch, "mean_loss": self.mean_loss}
        if self.val_mrr is not None:
            record["val_mrr"] = self.val_mrr
        if self.max_entity_norm is not None:
            record["max_entity_norm"] = self.max_entity_norm
        if record_timing and self.seconds is not None:
            record["seconds"] = self.seconds
        return record


@dataclass
class TrainLog:
    """Run header plus one record per epoch."""

    header: Dict = field(default_factory=dict)
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_mrr: Optional[float] = None
    stopped_early: bool = False

    @property
    def losses(self) -> List[float]:
        return [record.mean_loss for record in self.epochs]

    @property
    def evaluations(self) -> List[Tuple[int, float]]:
        return [(record.epoch, record.val_mrr) for record in self.epochs if record.val_mrr is not None]


@dataclass
class TrainingRandomness:
    """Independent generators for batch order and corruption draws."""

    shuffle: np.random.Generator
    sampling: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "TrainingRandomness":
        shuffle_seed, sampling_seed = np.random.SeedSequence(seed).spawn(2)
        return cls(shuffle=np.random.default_rng(shuffle_seed), sampling=np.random.default_rng(sampling_seed))


def sample_negatives(batch: np.ndarray, n_entities: int, rng: np.random.Generator, k: int = 1,
                     filter_index: Optional[FilterIndex] = None) -> np.ndarray:
    """
    Corrupt each positive k times by replacing its head or tail.

    Each corruption picks the head or the tail with probability 1/2 and draws
    the replacement uniformly from all entities; the relation is kept.

    Args:
        batch: Positive triples, shape (B, 3)
        n_entities: Number of entities
        rng: Random generator
        k: Negatives per positive
        filter_index: When given, redraw corruptions that form known triples

    Returns:
        Negatives of shape (B * k, 3); rows i*k .. i*k+k-1 belong to positive i
    """
    if n_entities < 2:
        raise ValueError(f"Negative sampling needs at least 2 entities, got {n_entities}")
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    negatives = np.repeat(batch, k, axis=0)

    corrupt_head = rng.random(negatives.shape[0]) < 0.5
    replacement = rng.integers(0, n_entities, size=negatives.shape[0])
    negatives[corrupt_head, 0] = replacement[corrupt_head]
    negatives[~corrupt_head, 2] = replacement[~corrupt_head]

    if filter_index is not None:
        exhausted = 0
        for row in range(negatives.shape[0]):
            column = 0 if corrupt_head[row] else 2
            attempts = 0
            while filter_index.contains(*negatives[row].tolist()) and attempts < FILTERED_RESAMPLE_ATTEMPTS:
                negatives[row, column] = rng.integers(0, n_entities)
                attempts += 1
            if attempts == FILTERED_RESAMPLE_ATTEMPTS and filter_index.contains(*negatives[row].tolist()):
                exhausted += 1
        if exhausted:
            logger.warning(f"{exhausted} corruption(s) still form known triples after "
                           f"{FILTERED_RESAMPLE_ATTEMPTS} redraws")

    return negatives


def margin_loss(s_pos, s_neg, margin: float) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Mean hinge max(0, margin + s_pos - s_neg) over every (positive, negative) pair.

    Args:
        s_pos: Positive scores, shape (B,)
        s_neg: Negative scores, shape (B, k)
        margin: Margin gamma

    Returns:
        (loss, dLoss/ds_pos, dLoss/ds_neg); pairs exactly at the hinge get gradient 0
    """
    s_pos = np.asarray(s_pos, dtype=np.float64)
    s_neg = np.asarray(s_neg, dtype=np.float64)
    if s_neg.ndim != 2 or s_neg.shape[0] != s_pos.shape[0]:
        raise ValueError(f"Negative scores must have shape ({s_pos.shape[0]}, k), got {s_neg.shape}")

    hinge = margin + s_pos[:, None] - s_neg
    active = hinge > 0
    n_pairs = hinge.size
    loss = float(np.sum(np.where(active, hinge, 0.0)) / n_pairs)
    grad_pos = np.sum(active, axis=1) / n_pairs
    grad_neg = -active.astype(np.float64) / n_pairs
    return loss, grad_pos, grad_neg


def apply_gradients(model: Model, grads, state: AdamState, config: TrainConfig) -> None:
    """One Adam step over the model's trainable tables (and scale, for the learnable-scale variant)."""
    params = {"entity_latent": model.entity_latent, "relation_vecs": model.relation_vecs}
    gradients = {"entity_latent": grads.entity, "relation_vecs": grads.relation}

    scale = None
    if model.kind is ModelKind.SKGE_LEARNABLE_SCALE:
        scale = np.array([model.spherization.scale], dtype=np.float64)
        params["scale"] = scale
        gradients["scale"] = np.array([grads.scale], dtype=np.float64)

    adam_step(params, gradients, state, config.lr, config.adam_beta1, config.adam_beta2, config.adam_epsilon)

    if scale is not None:
        model.spherization.scale = float(scale[0])


def normalize_rows(model: Model, rows: np.ndarray) -> None:
    """Rescale the given latent entity rows to unit L2 norm."""
    rows = np.unique(rows)
    norms = np.linalg.norm(model.entity_latent[rows], axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    model.entity_latent[rows] /= norms


def train_epoch(model: Model, train: EncodedSplit, config: TrainConfig, rng: TrainingRandomness,
                state: AdamState, filter_index: Optional[FilterIndex] = None, epoch: int = 0) -> float:
    """
    One pass over the shuffled training split.

    Per batch: corrupt, score positives and negatives, margin loss, backward,
    Adam step, then (TransE with normalisation on) rescale every touched
    entity row to unit norm. With ``config.lr == 0`` nothing is rescaled.

    Args:
        filter_index: Known training triples that filtered corruption redraws

    Returns:
        Mean loss over every (positive, negative) pair of the epoch
    """
    if len(train) == 0:
        raise ValueError("Cannot train on an empty split")

    order = rng.shuffle.permutation(len(train))
    triples = train.triples[order]
    # a frozen run (lr 0) must leave every row as initialised
    normalize = model.kind is ModelKind.TRANSE and config.transe_normalize_entities and config.lr > 0
    k = config.negatives

    total_loss = 0.0
    total_pairs = 0
    for batch_no, start in enumerate(range(0, len(triples), config.batch_size)):
        batch = triples[start:start + config.batch_size]
        negatives = sample_negatives(batch, model.n_entities, rng.sampling, k,
                                     filter_index if config.filtered_negatives else None)

        s_pos = score(model, batch[:, 0], batch[:, 1], batch[:, 2])
        s_neg = score(model, negatives[:, 0], negatives[:, 1], negatives[:, 2]).reshape(len(batch), k)
        loss, grad_pos, grad_neg = margin_loss(s_pos, s_neg, config.margin)
        if not math.isfinite(loss):
            raise NonFiniteLossError(epoch, batch_no)

        combined = np.concatenate([batch, negatives])
        upstream = np.concatenate([grad_pos, grad_neg.ravel()])
        active = upstream != 0
        grads = model_gradients(model, combined[active, 0], combined[active, 1], combined[active, 2],
                                upstream[active])
        apply_gradients(model, grads, state, config)

        if normalize:
            normalize_rows(model, np.concatenate([combined[:, 0], combined[:, 2]]))

        total_loss += loss * len(batch) * k
        total_pairs += len(batch) * k
        logger.debug(f"Epoch {epoch} batch {batch_no}: loss {loss:.6f}")

    return total_loss / total_pairs


class Trainer:
    """Runs training epochs with periodic validation and keeps the best model."""

    def __init__(self, model: Model, config: TrainConfig, filter_index: Optional[FilterIndex] = None,
                 log_path=None, progress: bool = False):
        """
        Initialize the trainer.

        Args:
            model: Model trained in place
            config: Training settings
            filter_index: Known triples of every split, for filtered validation ranking
            log_path: Optional JSON-lines training log
            progress: Show a progress bar over epochs
        """
        self.model = model
        self.config = config
        self.filter_index = filter_index
        self.progress = progress
        self.state = AdamState()
        self.rng = TrainingRandomness.from_seed(config.seed)
        self.log = TrainLog(header={
            "event": "start",
            "kind": model.kind.value,
            "n_entities": model.n_entities,
            "n_relations": model.n_relations,
            **asdict(config),
        })
        self._writer = JsonlLog(log_path) if log_path else None
        if self._writer:
            self._writer.append(self.log.header)

    def _record(self, record: EpochRecord) -> None:
        self.log.epochs.append(record)
        if self._writer:
            self._writer.append(record.to_dict(self.config.record_timing))

    def fit(self, train: EncodedSplit, valid: Optional[EncodedSplit] = None) -> Tuple[Model, TrainLog]:
        """
        Train until the epoch limit or until validation MRR stops improving.

        Validation runs every ``eval_every`` epochs and after the last epoch.
        A run with ``patience`` consecutive evaluations without a strictly
        higher MRR stops early.

        Returns:
            (best model, training log); the last model when no validation split is given
        """
        config = self.config
        best_model = None
        stale = 0
        # corruption avoids training facts only; valid and test triples stay unseen
        corruption_index = build_filter_index(train) if config.filtered_negatives else None

        logger.info(f"Training {self.model.kind.value}: {len(train)} triples, D={config.dim}, "
                    f"margin={config.margin}, lr={config.lr}, batch={config.batch_size}, epochs={config.epochs}")

        epochs = tqdm(range(1, config.epochs + 1), desc=f"Training {self.model.kind.value}",
                      unit="epoch", disable=not self.progress)
        for epoch in epochs:
            started = time.perf_counter()
            mean_loss = train_epoch(self.model, train, config, self.rng, self.state,
                                    corruption_index, epoch=epoch)
            record = EpochRecord(epoch=epoch, mean_loss=float(mean_loss),
                                 max_entity_norm=float(entity_norms(self.model).max()))

            due = epoch % config.eval_every == 0 or epoch == config.epochs
            if valid is not None and self.filter_index is not None and due:
                mrr = evaluate(self.model, valid, self.filter_index, threads=config.threads).metrics.mrr
                record.val_mrr = float(mrr)
                if self.log.best_val_mrr is None or mrr > self.log.best_val_mrr:
                    self.log.best_val_mrr = float(mrr)
                    self.log.best_epoch = epoch
                    best_model = self.model.copy()
                    stale = 0
                    logger.info(f"Epoch {epoch}: loss {mean_loss:.4f}, validation MRR {mrr:.4f} (best)")
                else:
                    stale += 1
                    logger.info(f"Epoch {epoch}: loss {mean_loss:.4f}, validation MRR {mrr:.4f} "
                                f"({stale}/{config.patience} without improvement)")

            record.seconds = time.perf_counter() - started
            self._record(record)
            epochs.set_postfix(loss=f"{mean_loss:.4f}")

            if stale >= config.patience:
                self.log.stopped_early = True
                logger.info(f"Early stop at epoch {epoch}; best epoch {self.log.best_epoch}")
                break

        return (best_model if best_model is not None else self.model), self.log


def train(model: Model, dataset: TripleStore, config: TrainConfig, log_path=None,
          progress: bool = False) -> Tuple[Model, TrainLog]:
    """
    Train on ``dataset.train`` with early stopping on filtered ``dataset.valid`` MRR.

    Returns:
        (best model, training log)
    """
    trainer = Trainer(model, config, filter_index=dataset.filter_index, log_path=log_path, progress=progress)
    return trainer.fit(dataset.train, dataset.valid)
