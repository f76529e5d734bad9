"""Experimental protocol: how much of a training run does a simple model explain.

The pipeline tracks, across SGD checkpoints of a network f_t, the joint
behavior of (f_t predictions, true labels, simple-model predictions) on a
held-out split. From the resulting series it locates the end of the first
learning phase (the first step where the network's mutual information with
the label reaches the simple model's level), compares the explanation ratio
against a calibrated null model, and measures the post-phase plateau.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import LabeledDataset
from .infotheory import JointCounts3, make_null_model, performance_correlation
from .models import (
    Checkpoint,
    Layer,
    ModelParams,
    TrainConfig,
    accuracy,
    predict,
    sgd_train,
    train_collect,
    xavier_init,
)

__all__ = [
    "MetricSeries",
    "T0Result",
    "PhaseReport",
    "LadderRung",
    "LadderReport",
    "BadInitResult",
    "DegenerateTeacherWarning",
    "PretrainTargetNotReached",
    "find_t0",
    "distill_simple",
    "track_metrics",
    "phase_report",
    "complexity_ladder",
    "bad_init_experiment",
    "write_metrics_csv",
    "read_metrics_csv",
    "METRIC_COLUMNS",
]

METRIC_COLUMNS = (
    "step",
    "train_acc",
    "test_acc",
    "i_fy",
    "mu",
    "i_fy_given_l",
    "i_ly_given_f",
    "i_ly",
)


class DegenerateTeacherWarning(UserWarning):
    """The teacher predicts a single class; distillation target is constant."""


class PretrainTargetNotReached(RuntimeError):
    """Bad-init pretraining missed its train-accuracy target within budget."""


@dataclass
class MetricSeries:
    """Per-checkpoint record of accuracy and information quantities (bits).

    mu + i_fy_given_l reconstructs i_fy at every checkpoint by construction;
    i_ly is constant because the simple model does not train along. When
    keep_predictions was set, f_test holds the network's test predictions per
    checkpoint so null-model ratios can be computed afterwards.
    """

    steps: np.ndarray
    train_acc: np.ndarray
    test_acc: np.ndarray
    i_fy: np.ndarray
    mu: np.ndarray
    i_fy_given_l: np.ndarray
    i_ly_given_f: np.ndarray
    i_ly: float
    f_test: list[np.ndarray] | None = field(default=None, repr=False)
    y_test: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64)
        if np.any(np.diff(self.steps) <= 0):
            raise ValueError("checkpoint steps must be strictly increasing")
        for name in ("train_acc", "test_acc", "i_fy", "mu", "i_fy_given_l", "i_ly_given_f"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != self.steps.shape:
                raise ValueError(f"{name} length must match steps")
            setattr(self, name, arr)
        if np.abs(self.mu + self.i_fy_given_l - self.i_fy).max() > 1e-9:
            raise ValueError("mu + i_fy_given_l must equal i_fy")

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class T0Result:
    """First checkpoint where the network matches the simple model's MI."""

    index: int
    step: int
    reached: bool


def find_t0(series: MetricSeries) -> T0Result:
    """Smallest checkpoint with i_fy >= i_ly; last checkpoint if never reached."""
    if len(series) == 0:
        raise ValueError("empty series")
    hits = np.flatnonzero(series.i_fy >= series.i_ly)
    if hits.size:
        idx = int(hits[0])
        return T0Result(index=idx, step=int(series.steps[idx]), reached=True)
    idx = len(series) - 1
    return T0Result(index=idx, step=int(series.steps[idx]), reached=False)


def distill_simple(
    teacher: ModelParams,
    dataset: LabeledDataset,
    student_sizes,
    config: TrainConfig,
    init_seed: int = 0,
) -> ModelParams:
    """Train a student on the teacher's hard labels over the train split.

    The teacher's outputs are rounded to {0,1} before fitting (soft targets
    make no practical difference here). Used where no unique optimal simple
    model exists, and to extract each rung of the complexity ladder from the
    final network.
    """
    if teacher.input_dim != dataset.d:
        raise ValueError("teacher input dim does not match dataset")
    if student_sizes[0] != dataset.d:
        raise ValueError("student input dim does not match dataset")
    targets = predict(teacher, dataset.features)
    if targets.min() == targets.max():
        warnings.warn(
            "teacher predictions are constant; student will learn a constant",
            DegenerateTeacherWarning,
        )
    student = xavier_init(list(student_sizes), seed=init_seed)
    distill_ds = LabeledDataset(
        dataset.features, targets, spec={"kind": "distilled"}, seed=init_seed
    )
    return train_collect(student, distill_ds, config)[-1].params


def track_metrics(
    checkpoints,
    simple_model: ModelParams,
    train_ds: LabeledDataset,
    test_ds: LabeledDataset,
    keep_predictions: bool = True,
) -> MetricSeries:
    """Evaluate the information quantities at every checkpoint.

    Builds the empirical 8-cell table of (network prediction, label, simple
    prediction) over the test split and evaluates the performance
    correlation; train/test accuracies ride along.
    """
    checkpoints = list(checkpoints)
    if not checkpoints:
        raise ValueError("no checkpoints")
    if test_ds.n == 0:
        raise ValueError("empty test split")
    dims = {ck.params.input_dim for ck in checkpoints}
    if dims != {test_ds.d} or simple_model.input_dim != test_ds.d or train_ds.d != test_ds.d:
        raise ValueError("checkpoint, simple model, and datasets must share input dim")

    l_test = predict(simple_model, test_ds.features)
    y_test = test_ds.labels.astype(np.uint8)
    rows = {name: [] for name in METRIC_COLUMNS if name != "i_ly"}
    f_kept = []
    i_ly = 0.0
    for ck in checkpoints:
        f_test = predict(ck.params, test_ds.features)
        m = performance_correlation(JointCounts3.from_arrays(f_test, y_test, l_test))
        i_ly = m.i_ly
        rows["step"].append(ck.step)
        rows["train_acc"].append(accuracy(ck.params, train_ds.features, train_ds.labels))
        rows["test_acc"].append(float((f_test == y_test).mean()))
        rows["i_fy"].append(m.i_fy)
        rows["mu"].append(m.mu)
        rows["i_fy_given_l"].append(m.i_fy_given_l)
        rows["i_ly_given_f"].append(m.i_ly_given_f)
        if keep_predictions:
            f_kept.append(f_test)
    return MetricSeries(
        steps=rows["step"],
        train_acc=rows["train_acc"],
        test_acc=rows["test_acc"],
        i_fy=rows["i_fy"],
        mu=rows["mu"],
        i_fy_given_l=rows["i_fy_given_l"],
        i_ly_given_f=rows["i_ly_given_f"],
        i_ly=i_ly,
        f_test=f_kept if keep_predictions else None,
        y_test=y_test if keep_predictions else None,
    )


@dataclass
class PhaseReport:
    """Explanation ratios at the end of the first phase, plus the plateau band.

    ratio_simple = mu(F_T0; L) / I(F_T0; Y); ratio_null replaces L with
    simulated predictors of equal mutual information (averaged over seeds).
    plateau_band is the (min, max) of mu over checkpoints strictly after T0,
    (nan, nan) when T0 is the last checkpoint.
    """

    t0_step: int
    t0_reached: bool
    i_fy_t0: float
    i_ly: float
    ratio_simple: float
    ratio_null: float
    plateau_band: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "t0_step": self.t0_step,
            "t0_reached": self.t0_reached,
            "i_fy_t0": self.i_fy_t0,
            "i_ly": self.i_ly,
            "ratio_simple": self.ratio_simple,
            "ratio_null": self.ratio_null,
            "plateau_band": list(self.plateau_band),
        }


def phase_report(series: MetricSeries, null_seed: int = 0, n_null: int = 10) -> PhaseReport:
    """Locate T0 and compare the simple model's explanation ratio to nulls.

    The null ratio is averaged over n_null simulation seeds to tame the
    variance of the simulated predictors.
    """
    if series.f_test is None or series.y_test is None:
        raise ValueError("series must be tracked with keep_predictions=True")
    t0 = find_t0(series)
    i_fy_t0 = series.i_fy[t0.index]
    if i_fy_t0 <= 0.0:
        raise ValueError("I(F_T0; Y) is zero; ratios undefined")
    f_t0 = series.f_test[t0.index]
    null_ratios = []
    for j in range(n_null):
        l_null = make_null_model(series.y_test, series.i_ly, seed=null_seed + j)
        m = performance_correlation(
            JointCounts3.from_arrays(f_t0, series.y_test, l_null)
        )
        null_ratios.append(m.mu / i_fy_t0)
    after = series.mu[t0.index + 1 :]
    band = (float(after.min()), float(after.max())) if after.size else (math.nan, math.nan)
    return PhaseReport(
        t0_step=t0.step,
        t0_reached=t0.reached,
        i_fy_t0=float(i_fy_t0),
        i_ly=float(series.i_ly),
        ratio_simple=float(series.mu[t0.index] / i_fy_t0),
        ratio_null=float(np.mean(null_ratios)),
        plateau_band=band,
    )


@dataclass
class LadderRung:
    sizes: tuple[int, ...]
    series: MetricSeries
    onset: T0Result  # first step where I(F_t;Y) reaches I(G_i;Y)
    plateau_mu: float  # mean mu after onset (last value if onset is last)


@dataclass
class LadderReport:
    rungs: list[LadderRung]
    checkpoints: list[Checkpoint] = field(repr=False)

    def plateau_levels(self) -> list[float]:
        return [r.plateau_mu for r in self.rungs]


def complexity_ladder(
    train_ds: LabeledDataset,
    test_ds: LabeledDataset,
    full_sizes,
    rung_sizes,
    config: TrainConfig,
    distill_config: TrainConfig | None = None,
    init_seed: int = 0,
    checkpoints=None,
) -> LadderReport:
    """Track how students of increasing depth explain the full run.

    Trains the full network (unless checkpoints are supplied), distills one
    student per rung from the final model's hard labels on the train split,
    and tracks mu_Y(F_t; G_i) for each. Plateau levels should grow with rung
    capacity; a rung at least as expressive as the full model only warns,
    since training on outputs cannot recover the teacher exactly.
    """
    rung_sizes = [tuple(s) for s in rung_sizes]
    if len(rung_sizes) < 2:
        raise ValueError("a ladder needs at least 2 rungs")
    if checkpoints is None:
        full_init = xavier_init(list(full_sizes), seed=init_seed)
        checkpoints = train_collect(full_init, train_ds, config)
    else:
        checkpoints = list(checkpoints)
    f_inf = checkpoints[-1].params
    full_params = f_inf.n_params()
    distill_config = distill_config or config

    rungs = []
    for i, sizes in enumerate(rung_sizes):
        student_init = xavier_init(list(sizes), seed=init_seed + 1000 * (i + 1))
        if student_init.n_params() >= full_params:
            warnings.warn(
                f"rung {i} ({sizes}) is at least as expressive as the full model; "
                "distillation cannot recover it exactly",
                UserWarning,
            )
        student = distill_simple(
            f_inf, train_ds, sizes, distill_config, init_seed=init_seed + 1000 * (i + 1)
        )
        series = track_metrics(checkpoints, student, train_ds, test_ds)
        onset = find_t0(series)
        after = series.mu[onset.index + 1 :]
        plateau = float(after.mean()) if after.size else float(series.mu[-1])
        rungs.append(LadderRung(sizes=sizes, series=series, onset=onset, plateau_mu=plateau))
    return LadderReport(rungs=rungs, checkpoints=checkpoints)


@dataclass
class BadInitResult:
    good: MetricSeries
    bad: MetricSeries
    good_init_train_acc: float
    bad_init_train_acc: float
    bad_pretrain_steps: int


def _hyperplane_model(train_ds: LabeledDataset) -> ModelParams:
    h = np.asarray(train_ds.spec["hyperplane"], dtype=np.float64)
    return ModelParams([Layer(h[None, :], np.zeros(1), "sigmoid")])


def _train_until_interpolation(params, train_ds, test_ds, simple, config):
    ckpts = []
    for ck in sgd_train(params, train_ds, config):
        ckpts.append(ck)
        if accuracy(ck.params, train_ds.features, train_ds.labels) == 1.0:
            break
    return track_metrics(ckpts, simple, train_ds, test_ds)


def bad_init_experiment(
    train_ds: LabeledDataset,
    pop_ds: LabeledDataset,
    hidden=(100, 100, 100),
    config: TrainConfig | None = None,
    good_pretrain_steps: int = 100,
    n_aux: int = 1500,
    target_train_acc: float = 0.88,
    pretrain_budget: int = 200_000,
    init_seed: int = 0,
    aux_seed: int = 77,
) -> BadInitResult:
    """Continue training to interpolation from a good and a bad initialization.

    Good: a fresh network after good_pretrain_steps of ordinary SGD (enough to
    pick up the linear structure). Bad: a network pre-fit to the train set
    mixed with n_aux randomly-labeled auxiliary points until it reaches
    target_train_acc on the original train set, which produces an equally
    accurate but structureless starting point. Both are then trained on the
    original train set alone until train accuracy hits 1, tracking population
    accuracy (test_acc on pop_ds) and the information metrics against the
    generating hyperplane.
    """
    if train_ds.d != 2:
        raise ValueError("this experiment is defined for the 2-d task")
    if config is None:
        config = TrainConfig(steps=400_000, batch_size=32, learning_rate=0.05, seed=3)
    sizes = [train_ds.d, *hidden, 1]
    simple = _hyperplane_model(train_ds)

    # good arm: brief ordinary training
    good_params = xavier_init(sizes, seed=init_seed)
    pre_cfg = TrainConfig(
        steps=good_pretrain_steps,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        checkpoint_schedule=(good_pretrain_steps,),
        seed=config.seed,
    )
    good_init = train_collect(good_params, train_ds, pre_cfg)[-1].params

    # bad arm: fit train + randomly-labeled auxiliary points
    rng = np.random.default_rng(aux_seed)
    aux_features = rng.standard_normal((n_aux, train_ds.d))
    aux_labels = rng.integers(0, 2, n_aux).astype(np.uint8)
    combined = LabeledDataset(
        np.vstack([train_ds.features, aux_features]),
        np.concatenate([train_ds.labels, aux_labels]),
        spec={"kind": "bad-init-pretrain"},
    )
    bad_params = xavier_init(sizes, seed=init_seed + 1)
    per_epoch = -(-combined.n // config.batch_size)
    sched = tuple(range(per_epoch, pretrain_budget + 1, per_epoch))
    pretrain_cfg = TrainConfig(
        steps=pretrain_budget,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        checkpoint_schedule=sched,
        seed=config.seed + 1,
    )
    bad_init = None
    bad_steps = 0
    for ck in sgd_train(bad_params, combined, pretrain_cfg):
        if accuracy(ck.params, train_ds.features, train_ds.labels) >= target_train_acc:
            bad_init, bad_steps = ck.params, ck.step
            break
    if bad_init is None:
        raise PretrainTargetNotReached(
            f"train accuracy {target_train_acc} not reached in {pretrain_budget} steps"
        )

    good = _train_until_interpolation(good_init, train_ds, pop_ds, simple, config)
    bad = _train_until_interpolation(bad_init, train_ds, pop_ds, simple, config)
    return BadInitResult(
        good=good,
        bad=bad,
        good_init_train_acc=accuracy(good_init, train_ds.features, train_ds.labels),
        bad_init_train_acc=accuracy(bad_init, train_ds.features, train_ds.labels),
        bad_pretrain_steps=bad_steps,
    )


# --- CSV ------------------------------------------------------------------------


def write_metrics_csv(series: MetricSeries, path) -> None:
    """One row per checkpoint; floats via repr so parsing round-trips exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for i in range(len(series)):
            writer.writerow(
                [int(series.steps[i])]
                + [
                    repr(float(getattr(series, name)[i]))
                    for name in METRIC_COLUMNS[1:-1]
                ]
                + [repr(float(series.i_ly))]
            )


def read_metrics_csv(path) -> MetricSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != METRIC_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        rows = [row for row in reader]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    cols = list(zip(*rows))
    return MetricSeries(
        steps=[int(v) for v in cols[0]],
        train_acc=[float(v) for v in cols[1]],
        test_acc=[float(v) for v in cols[2]],
        i_fy=[float(v) for v in cols[3]],
        mu=[float(v) for v in cols[4]],
        i_fy_given_l=[float(v) for v in cols[5]],
        i_ly_given_f=[float(v) for v in cols[6]],
        i_ly=float(rows[0][7]),
    )
