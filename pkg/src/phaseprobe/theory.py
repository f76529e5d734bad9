"""Closed-form limit of (S)GD on the sparse-noise square-loss problem.

The data matrix X holds label-multiplied samples: row j is s_j * e1 + e_k(j)
with s_j in {-1,+1} and the private coordinates k(j) pairwise distinct. Then
X X^T = I + s s^T, whose inverse is I - s s^T / (n+1) by the Sherman-Morrison
identity, and gradient descent from w0 converges to the interpolating point

    w' = X^T (X X^T)^{-1} (1 - X w0) + w0,

the least-displacement solution in w0 + rowspan(X). The per-coordinate
expressions implemented here are validated coordinatewise against the vector
formula and against a dense least-norm solve in the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datagen import LabeledDataset, gen_sparse_problem, labels_to_pm1
from .models import Layer, ModelParams, TrainConfig, sgd_train

__all__ = [
    "SparseProblem",
    "ClosedFormSolution",
    "ConvergenceRecord",
    "SgdDivergedError",
    "make_sparse_problem",
    "closed_form_limit",
    "first_coord_formula",
    "other_coord_formula",
    "span_residual",
    "verify_sgd_convergence",
    "population_accuracy",
    "train_accuracy",
    "poor_erm_witness",
    "make_init",
    "validate_init",
    "theorem1_experiment",
]


class SgdDivergedError(RuntimeError):
    """SGD distance to the closed form grew instead of shrinking."""


@dataclass
class SparseProblem:
    """One instance of the sparse-noise data model, in label-multiplied form."""

    x_matrix: np.ndarray  # (n, d) rows s_j e1 + e_k(j)
    w0: np.ndarray  # (d,) initialization
    p: float

    def __post_init__(self):
        x = np.asarray(self.x_matrix, dtype=np.float64)
        self.x_matrix = x
        self.w0 = np.asarray(self.w0, dtype=np.float64)
        n, d = x.shape
        if self.w0.shape != (d,):
            raise ValueError("w0 must have length d")
        bad = np.flatnonzero((x != 0).sum(axis=1) != 2)
        if bad.size:
            raise ValueError(f"rows {bad.tolist()} do not have exactly two nonzeros")
        if not np.isin(x[:, 0], (-1.0, 1.0)).all():
            raise ValueError("first column must be +-1")
        k = np.argmax(x[:, 1:] != 0.0, axis=1) + 2  # 1-based private coordinates
        if not np.all(x[np.arange(n), k - 1] == 1.0):
            raise ValueError("private coordinates must hold +1")
        if len(np.unique(k)) != n:
            dup = [int(v) for v in np.unique(k[np.argsort(k)]) if (k == v).sum() > 1]
            raise ValueError(f"private coordinates collide (Assumption 2): {dup}")
        self.k = k

    @property
    def n(self) -> int:
        return self.x_matrix.shape[0]

    @property
    def d(self) -> int:
        return self.x_matrix.shape[1]

    @property
    def s(self) -> np.ndarray:
        """First column of X: +1 on clean samples, -1 on noisy ones."""
        return self.x_matrix[:, 0]

    @property
    def eta(self) -> float:
        """Realized signal level mean(s); equals 1 - 2p when p*n is integral."""
        return float(self.s.mean())

    @classmethod
    def from_dataset(cls, ds: LabeledDataset, w0) -> "SparseProblem":
        x = labels_to_pm1(ds.labels)[:, None] * ds.features
        return cls(x, np.asarray(w0, dtype=np.float64), float(ds.spec.get("p", 0.0)))


def make_sparse_problem(
    n: int, d: int, p: float, seed: int = 0, w0=None, exact_noise: bool = True
) -> tuple[SparseProblem, LabeledDataset]:
    """Generate a dataset and wrap it with an initialization (default 0)."""
    ds = gen_sparse_problem(n, d, p, seed=seed, exact_noise=exact_noise)
    if w0 is None:
        w0 = np.zeros(d)
    return SparseProblem.from_dataset(ds, w0), ds


@dataclass
class ClosedFormSolution:
    w_prime: np.ndarray
    first_coord: float
    residual_norm: float  # ||X w' - 1||
    row_coeffs: np.ndarray = field(repr=False)  # u with w' - w0 = X^T u


def closed_form_limit(problem: SparseProblem) -> ClosedFormSolution:
    """The GD limit w' = X^T (X X^T)^{-1} (1 - X w0) + w0.

    Applies (X X^T)^{-1} = I - s s^T/(n+1) directly, so no d x d or even
    n x n matrix is ever formed.
    """
    x, w0, s = problem.x_matrix, problem.w0, problem.s
    n = problem.n
    r = 1.0 - x @ w0
    u = r - s * (s @ r) / (n + 1.0)
    w_prime = x.T @ u + w0
    residual = float(np.linalg.norm(x @ w_prime - 1.0))
    return ClosedFormSolution(
        w_prime=w_prime,
        first_coord=float(w_prime[0]),
        residual_norm=residual,
        row_coeffs=u,
    )


def first_coord_formula(problem: SparseProblem) -> float:
    """First coordinate of the limit: (n/(n+1)) eta - s^T X w0/(n+1) + w0(1)."""
    n, s, x, w0 = problem.n, problem.s, problem.x_matrix, problem.w0
    return float(
        (n / (n + 1.0)) * problem.eta - (s @ (x @ w0)) / (n + 1.0) + w0[0]
    )


def other_coord_formula(problem: SparseProblem, i: int) -> float:
    """Coordinate i >= 2 (1-based, matching w'(i)) of the limit.

    Untouched coordinates keep their initialization. A coordinate hit by
    sample j (with entry beta) moves by beta times that sample's residual
    weight:

        w'(i) = beta * (1 + s_j (s^T X w0 - n eta)/(n+1) - x_j . w0) + w0(i).
    """
    if not 2 <= i <= problem.d:
        raise ValueError(f"coordinate index {i} outside [2, d]")
    x, w0, s, n = problem.x_matrix, problem.w0, problem.s, problem.n
    col = x[:, i - 1]
    hits = np.flatnonzero(col != 0.0)
    if hits.size == 0:
        return float(w0[i - 1])
    j = int(hits[0])
    beta = float(col[j])
    sxw0 = float(s @ (x @ w0))
    return float(
        beta * (1.0 + s[j] * (sxw0 - n * problem.eta) / (n + 1.0) - x[j] @ w0)
        + w0[i - 1]
    )


def span_residual(problem: SparseProblem, v: np.ndarray) -> float:
    """Distance from v to rowspan(X), via the same rank-one inverse."""
    x, s, n = problem.x_matrix, problem.s, problem.n
    xv = x @ v
    c = xv - s * (s @ xv) / (n + 1.0)
    return float(np.linalg.norm(v - x.T @ c))


@dataclass
class ConvergenceRecord:
    steps: np.ndarray
    distances: np.ndarray  # ||w_t - w'|| at each recorded step
    converged: bool
    final_distance: float
    max_span_residual: float  # max over recorded steps of dist(w_t - w0, rowspan)
    learning_rate: float


def verify_sgd_convergence(
    problem: SparseProblem,
    config: TrainConfig | None = None,
    tol: float = 1e-3,
) -> ConvergenceRecord:
    """Run square-loss SGD from w0 and measure convergence to the closed form.

    The default configuration is full-batch descent with learning rate
    0.5 / lambda_max(X X^T) = 0.5/(n+1), safely below the stability threshold
    of the quadratic. Also checks that every recorded iterate stays in the
    affine space w0 + rowspan(X). Divergence raises instead of retrying.
    """
    n = problem.n
    if config is None:
        steps = 60 * n * (n + 1)  # contraction is 1 - 1/(n(n+1)) per step
        config = TrainConfig(
            steps=steps,
            batch_size=n,
            learning_rate=0.5 / (n + 1.0),
            loss="square",
            checkpoint_schedule=None,
            seed=0,
        )
    target = closed_form_limit(problem).w_prime
    init = ModelParams([Layer(problem.w0[None, :].copy(), None, "identity")])
    labels = np.ones(n, dtype=np.uint8)  # rows are already label-multiplied
    ds = LabeledDataset(problem.x_matrix, labels, spec={"kind": "sparse-rows"})

    steps, distances, span_resids = [], [], []
    start_distance = float(np.linalg.norm(problem.w0 - target))
    for ck in sgd_train(init, ds, config):
        w = ck.params.layers[0].weights[0]
        dist = float(np.linalg.norm(w - target))
        steps.append(ck.step)
        distances.append(dist)
        span_resids.append(span_residual(problem, w - problem.w0))
        if not math.isfinite(dist) or dist > 10.0 * (start_distance + 1.0):
            raise SgdDivergedError(
                f"distance {dist!r} at step {ck.step} (started at {start_distance!r}); "
                "step size too large"
            )
        if dist <= tol:
            break
    return ConvergenceRecord(
        steps=np.array(steps),
        distances=np.array(distances),
        converged=distances[-1] <= tol,
        final_distance=distances[-1],
        max_span_residual=float(np.max(span_resids)),
        learning_rate=config.learning_rate,
    )


def train_accuracy(problem: SparseProblem, w: np.ndarray) -> float:
    """Fraction of training rows with positive margin (labels pre-multiplied)."""
    return float((problem.x_matrix @ w > 0).mean())


def population_accuracy(
    w: np.ndarray, d: int, p: float, n_samples: int = 10**5, seed: int = 0
) -> float:
    """Monte Carlo population accuracy of sign(<w, x>) on fresh samples.

    A fresh sample is x = y (eta e1 + e_k) with y uniform in {-1,+1}, eta = -1
    with probability p, k uniform in {2..d}; the prediction sign(<w,x>) (with
    tie -> +1) is correct iff the margin eta w(1) + w(k) is positive, or zero
    with y = +1. The sparse inner product is evaluated directly rather than
    materializing the samples.
    """
    rng = np.random.default_rng(seed)
    eta = np.where(rng.random(n_samples) < p, -1.0, 1.0)
    k = rng.integers(2, d + 1, n_samples)
    y = np.where(rng.integers(0, 2, n_samples) == 1, 1.0, -1.0)
    margin = eta * w[0] + np.asarray(w)[k - 1]
    correct = (margin > 0) | ((margin == 0) & (y > 0))
    return float(correct.mean())


def poor_erm_witness(problem: SparseProblem, scale: float = 2.0) -> np.ndarray:
    """A perfect-train, at-chance-population classifier.

    Puts a large wrong-signed weight on the signal coordinate and compensates
    on each training sample's private coordinate: w = -C e1 + sum_j (1 + C
    s_j) e_k(j), so X w = 1 exactly while fresh samples see only the wrong
    first coordinate.
    """
    w = np.zeros(problem.d)
    w[0] = -scale
    w[problem.k - 1] = 1.0 + scale * problem.s
    return w


def make_init(kind: str, d: int, seed: int = 0, **kwargs) -> np.ndarray:
    """Initialization vectors for the overfitting experiment.

    kinds: "zero"; "e1" (the simplest classifier); "e1_scaled" with scale;
    "uniform" with bound (i.i.d. uniform in [-bound, bound]).
    """
    if kind == "zero":
        return np.zeros(d)
    if kind == "e1":
        w = np.zeros(d)
        w[0] = 1.0
        return w
    if kind == "e1_scaled":
        w = np.zeros(d)
        w[0] = float(kwargs["scale"])
        return w
    if kind == "uniform":
        bound = float(kwargs["bound"])
        return np.random.default_rng(seed).uniform(-bound, bound, d)
    raise ValueError(f"unknown init kind {kind!r}")


def validate_init(w0: np.ndarray, n: int, p: float, epsilon: float = 0.05) -> None:
    """Enforce the overfitting theorem's initialization bounds.

    Requires w0(1) >= -n^0.99 and |w0(i)| <= 1 - 2p - epsilon for i >= 2.
    """
    w0 = np.asarray(w0)
    if w0[0] < -(n**0.99):
        raise ValueError(f"w0(1) = {w0[0]!r} below -n^0.99 = {-(n ** 0.99)!r}")
    bound = 1.0 - 2.0 * p - epsilon
    if w0.size > 1 and np.abs(w0[1:]).max() > bound + 1e-12:
        raise ValueError(
            f"max |w0(i)|, i >= 2, is {np.abs(w0[1:]).max()!r}, exceeding "
            f"1 - 2p - eps = {bound!r}"
        )


def theorem1_experiment(
    n: int,
    d: int,
    p: float,
    init_spec: dict | None = None,
    seeds=range(10),
    mc_samples: int = 10**5,
    epsilon: float = 0.05,
    sgd_tol: float = 1e-3,
) -> list[dict]:
    """Accuracy summary of the closed-form limit across seeded instances.

    For each seed: build an instance, compute w', record train accuracy
    (interpolation gives exactly 1), Monte Carlo population accuracy (the
    theorem's limit is 1-p), the SGD iterate's final distance to w', and the
    poor-ERM witness accuracies. init_spec defaults to {"kind": "e1"}.
    """
    init_spec = dict(init_spec or {"kind": "e1"})
    kind = init_spec.pop("kind")
    rows = []
    for seed in seeds:
        w0 = make_init(kind, d, seed=seed, **init_spec)
        validate_init(w0, n, p, epsilon=epsilon)
        problem, _ = make_sparse_problem(n, d, p, seed=seed, w0=w0)
        sol = closed_form_limit(problem)
        record = verify_sgd_convergence(problem, tol=sgd_tol)
        poor = poor_erm_witness(problem)
        rows.append(
            {
                "seed": int(seed),
                "n": n,
                "d": d,
                "p": p,
                "w0_spec": kind if not init_spec else f"{kind}:{init_spec}",
                "train_acc": train_accuracy(problem, sol.w_prime),
                "pop_acc": population_accuracy(
                    sol.w_prime, d, p, n_samples=mc_samples, seed=10_000 + seed
                ),
                "dist_to_closed_form": record.final_distance,
                "poor_train_acc": train_accuracy(problem, poor),
                "poor_pop_acc": population_accuracy(
                    poor, d, p, n_samples=mc_samples, seed=20_000 + seed
                ),
            }
        )
    return rows
