"""
Ensemble training loop.

Per batch:
1. every member runs a dropout forward pass on the batch;
2. focal weights come from the detached member outputs (or from MC-dropout
   passes of the single model when uncertainty_source = dropout);
3. imbalance weights are scheduled for the batch position;
4. each member takes an Adam step on its own weighted objective.

Shared-trunk ensembles sum the trunk gradients of all members into one trunk
update, unless the trunk is frozen.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel

from .config import TrainConfig, UncertaintyInput, UncertaintySource
from .constraint import f_cm
from .data import Dataset, DatasetSplits, subsample_train
from .ensemble import Ensemble, EnsembleMode, member_seeds
from .errors import DimensionMismatch, EmptyDataset, NonFiniteLoss
from .imbalance import (
    ImbalanceWeights,
    SchedulerKind,
    SchedulerState,
    imbalance_weights,
    mixed_loss,
    scheduled_weights,
    weight_matrix,
)
from .metrics import MetricsReport, build_report
from .network import Mlp
from .objective import backward, weighted_mc_loss
from .optim import AdamState, adam_step
from .resample import ResampleMethod, ResamplePlan, hros_pd, identity_plan, lpros, weights_after_resample
from .uncertainty import FocalKind, ensemble_stats, focal_weights, mc_dropout_probs, uncertainty

logger = logging.getLogger(__name__)


class EpochRecord(BaseModel):
    epoch: int
    mean_loss: float
    valid: Optional[MetricsReport] = None


class TrainingLog(BaseModel):
    """Contents of metrics.json."""
    history: list[EpochRecord]
    test: Optional[MetricsReport] = None


@dataclass
class TrainResult:
    ensemble: Ensemble
    log: TrainingLog
    weights: Optional[ImbalanceWeights]
    plan: ResamplePlan
    train_set: Dataset


@dataclass(frozen=True, eq=False)
class BatchGradients:
    """Per-member losses and full-parameter gradients of one batch."""
    losses: np.ndarray
    grads: list[np.ndarray]
    focal: Optional[np.ndarray]
    masks: list[tuple[np.ndarray, np.ndarray]]


def evaluate_ensemble(ensemble: Ensemble, dataset: Dataset, threshold: float = 0.5) -> MetricsReport:
    """Threshold f_cm of the ensemble mean (dropout off) and score it against the labels."""
    if dataset.n_rows == 0:
        raise EmptyDataset(f"The {dataset.split.value} split has no rows")
    if dataset.n_features != ensemble.model.input_dim:
        raise DimensionMismatch(f"Dataset has {dataset.n_features} features, model expects {ensemble.model.input_dim}")
    if dataset.hierarchy.n_nodes != ensemble.model.output_dim:
        raise DimensionMismatch(f"Dataset has {dataset.hierarchy.n_nodes} nodes, model outputs {ensemble.model.output_dim}")
    probs = ensemble.predict_proba(dataset.features, dataset.hierarchy.matrix)
    return build_report(probs, dataset.labels, dataset.hierarchy.node_ids, threshold)


def resample_plan(dataset: Dataset, cfg: TrainConfig) -> ResamplePlan:
    method = ResampleMethod(cfg.resample)
    if method is ResampleMethod.LPROS:
        return lpros(dataset.labels, cfg.resample_pct, rng_seed=cfg.seed)
    if method is ResampleMethod.HROS_PD:
        return hros_pd(dataset.labels, dataset.hierarchy, rng_seed=cfg.seed)
    return identity_plan(dataset.n_rows)


class EnsembleTrainer:
    """
    Trains an ensemble under one TrainConfig.

    `fit` is deterministic in cfg.seed: initialization, shuffling, dropout and
    MC passes each draw from their own SeedSequence child stream.
    """

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    @property
    def _mc_dropout(self) -> bool:
        return self.cfg.focal is not FocalKind.NONE and self.cfg.uncertainty_source is UncertaintySource.DROPOUT

    def build_ensemble(self, input_dim: int, output_dim: int) -> Ensemble:
        cfg = self.cfg
        model = Mlp(input_dim, cfg.hidden_dim, output_dim, cfg.dropout)
        # MC-dropout uncertainty comes from one network; ensemble_size counts its passes
        n_members = 1 if self._mc_dropout else cfg.ensemble_size
        return Ensemble.initialize(model, n_members, cfg.ensemble_mode, cfg.seed, cfg.trunk_frozen)

    def focal_factor(
        self,
        ensemble: Ensemble,
        x: np.ndarray,
        member_probs: list[np.ndarray],
        A: np.ndarray,
        mc_rng: np.random.Generator,
    ) -> Optional[np.ndarray]:
        """u0 + U^k from detached outputs, or None when focal weighting is off."""
        cfg = self.cfg
        if cfg.focal is FocalKind.NONE:
            return None
        if self._mc_dropout:
            stats = mc_dropout_probs(ensemble.model, ensemble.member_params(0), x, cfg.ensemble_size, mc_rng)
            probs = stats.member_probs
        else:
            probs = np.stack([p.copy() for p in member_probs])
        if cfg.uncertainty_input is UncertaintyInput.CONSTRAINED:
            probs = np.stack([f_cm(p, A) for p in probs])
        u = uncertainty(cfg.focal, ensemble_stats(probs))
        return np.array(focal_weights(u, cfg.u0, cfg.focal_k).combined)

    def batch_weights(self, w_tilde: Optional[np.ndarray], y: np.ndarray, scheduler: SchedulerState) -> Optional[np.ndarray]:
        """B x N imbalance weights at the scheduler's current position."""
        if w_tilde is None:
            return None
        weights = weight_matrix(scheduled_weights(w_tilde, scheduler), y)
        if scheduler.kind is SchedulerKind.MIXED:
            # the objective is linear in W, so mixing the weights mixes the losses
            weights = mixed_loss(weights, np.ones_like(weights), scheduler.mix_lambda)
        return weights

    def batch_gradients(
        self,
        ensemble: Ensemble,
        x: np.ndarray,
        y: np.ndarray,
        A: np.ndarray,
        weights: Optional[np.ndarray],
        member_rngs: list[np.random.Generator],
        mc_rng: np.random.Generator,
    ) -> BatchGradients:
        model = ensemble.model
        masks = [model.dropout_masks(x.shape[0], rng, dropout_on=True) for rng in member_rngs]
        thetas = [ensemble.member_params(m) for m in range(ensemble.size)]
        member_probs = [model.forward(theta, x, masks=mk) for theta, mk in zip(thetas, masks)]
        focal = self.focal_factor(ensemble, x, member_probs, A, mc_rng)

        losses = np.empty(ensemble.size)
        grads = []
        for m, (theta, mk, probs) in enumerate(zip(thetas, masks, member_probs)):
            graph = weighted_mc_loss(probs, y, A, weights, focal)
            losses[m] = graph.value
            grads.append(backward(model, theta, x, mk, graph))
        return BatchGradients(losses=losses, grads=grads, focal=focal, masks=masks)

    def fit(self, splits: DatasetSplits) -> TrainResult:
        cfg = self.cfg
        train_set = splits.train
        if cfg.train_fraction < 1.0:
            train_set = subsample_train(train_set, cfg.train_fraction, cfg.seed)
        if train_set.n_rows == 0:
            raise EmptyDataset("The training split has no rows")

        plan = resample_plan(train_set, cfg)
        source_labels = train_set.labels
        train_set = train_set.take(plan.indices)
        h = train_set.hierarchy
        A = h.matrix

        weights_info = None
        w_tilde = None
        if cfg.imbalance:
            weights_info = imbalance_weights(weights_after_resample(plan, source_labels), cfg.w0, cfg.n_classes_mode)
            w_tilde = weights_info.rescaled

        ensemble = self.build_ensemble(train_set.n_features, h.n_nodes)
        model = ensemble.model
        shared = ensemble.mode is EnsembleMode.SHARED_TRUNK_HEADS
        member_size = ensemble.members[0].size
        member_states = [AdamState.zeros(member_size) for _ in range(ensemble.size)]
        trunk_state = AdamState.zeros(model.trunk_size) if shared else None

        shuffle_seed, mc_seed, *dropout_seeds = member_seeds(cfg.seed, ensemble.size + 2, stream=1)
        shuffle_rng = np.random.default_rng(shuffle_seed)
        mc_rng = np.random.default_rng(mc_seed)
        member_rngs = [np.random.default_rng(s) for s in dropout_seeds]

        n_steps = math.ceil(train_set.n_rows / cfg.batch_size)
        scheduler = SchedulerState(kind=cfg.scheduler, k_exp=cfg.scheduler_k, mix_lambda=cfg.mix_lambda)
        history = []
        logger.info(
            "Training %d-member %s ensemble on %d rows x %d nodes for %d epochs",
            ensemble.size, ensemble.mode.value, train_set.n_rows, h.n_nodes, cfg.epochs,
        )

        for epoch in range(1, cfg.epochs + 1):
            order = shuffle_rng.permutation(train_set.n_rows)
            scheduler.reset(n_steps)
            epoch_loss = 0.0
            for step in range(n_steps):
                rows = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
                x, y = train_set.features[rows], train_set.labels[rows]
                weights = self.batch_weights(w_tilde, y, scheduler)
                batch = self.batch_gradients(ensemble, x, y, A, weights, member_rngs, mc_rng)
                if not np.all(np.isfinite(batch.losses)):
                    raise NonFiniteLoss(
                        f"epoch {epoch} batch {step}: loss {batch.losses.tolist()}; "
                        f"lower the learning rate (now {cfg.lr})"
                    )
                self._apply(ensemble, batch, member_states, trunk_state)
                epoch_loss += float(batch.losses.mean())
                scheduler.advance()

            mean_loss = epoch_loss / n_steps
            valid = evaluate_ensemble(ensemble, splits.valid, cfg.threshold) if splits.valid.n_rows else None
            history.append(EpochRecord(epoch=epoch, mean_loss=mean_loss, valid=valid))
            if valid is not None:
                logger.info("epoch %d: loss %.6f, valid macro F1 %.4f, macro recall %.4f",
                            epoch, mean_loss, valid.macro.f1, valid.macro.recall)
            else:
                logger.info("epoch %d: loss %.6f", epoch, mean_loss)

        test = evaluate_ensemble(ensemble, splits.test, cfg.threshold) if splits.test.n_rows else None
        return TrainResult(
            ensemble=ensemble,
            log=TrainingLog(history=history, test=test),
            weights=weights_info,
            plan=plan,
            train_set=train_set,
        )

    def _apply(
        self,
        ensemble: Ensemble,
        batch: BatchGradients,
        member_states: list[AdamState],
        trunk_state: Optional[AdamState],
    ) -> None:
        cfg = self.cfg
        if ensemble.mode is EnsembleMode.INDEPENDENT:
            for m, grad in enumerate(batch.grads):
                ensemble.members[m] = adam_step(
                    ensemble.members[m], grad, member_states[m], cfg.lr, weight_decay=cfg.weight_decay
                )
            return

        trunk_size = ensemble.model.trunk_size
        for m, grad in enumerate(batch.grads):
            ensemble.members[m] = adam_step(
                ensemble.members[m], grad[trunk_size:], member_states[m], cfg.lr, weight_decay=cfg.weight_decay
            )
        if not ensemble.trunk_frozen:
            trunk_grad = np.sum([grad[:trunk_size] for grad in batch.grads], axis=0)
            ensemble.trunk = adam_step(ensemble.trunk, trunk_grad, trunk_state, cfg.lr, weight_decay=cfg.weight_decay)


def train(splits: DatasetSplits, cfg: TrainConfig) -> TrainResult:
    return EnsembleTrainer(cfg).fit(splits)
