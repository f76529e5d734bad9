"""Plug-in information measures over empirical distributions of binary variables.

All quantities are in bits (log base 2), so a perfect predictor of an unbiased
binary label scores exactly 1. Estimators are the plug-in kind: the defining
sum evaluated on an empirical count table, with 0*log(0) taken as 0 and
zero-mass conditioning cells contributing 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "JointCounts3",
    "InfoMetrics",
    "entropy",
    "binary_entropy",
    "mutual_info",
    "cond_mutual_info",
    "performance_correlation",
    "accuracy_to_mi",
    "mi_to_accuracy",
    "make_null_model",
]

#: Tolerance for the chain-rule consistency assertion inside
#: performance_correlation. Both decompositions of mu are algebraically equal;
#: floating point leaves differences around 1e-15 on 8-cell tables.
CHAIN_RULE_TOL = 1e-9


def binary_entropy(q: float) -> float:
    """Entropy of a Bernoulli(q) variable, in bits."""
    if q <= 0.0 or q >= 1.0:
        return 0.0
    return -q * math.log2(q) - (1.0 - q) * math.log2(1.0 - q)


def entropy(dist) -> float:
    """Shannon entropy in bits of a probability vector over finite outcomes.

    Entries must be non-negative and sum to 1 within 1e-9.
    """
    p = np.asarray(dist, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("empty distribution")
    if np.any(p < 0):
        raise ValueError("negative probability entries")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total!r}, expected 1")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


@dataclass(frozen=True)
class JointCounts3:
    """Empirical joint distribution of three binary variables (F, Y, G).

    ``counts[f, y, g]`` holds the number of samples with that outcome. This
    8-cell table is the substrate for every information estimate: marginalize
    over g for the two-variable quantities, condition on g (or f) for the
    conditional ones.
    """

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (2, 2, 2):
            raise ValueError(f"counts must have shape (2, 2, 2), got {c.shape}")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_arrays(cls, f, y, g) -> "JointCounts3":
        """Tabulate three equal-length binary sequences into the 8-cell table."""
        f = _as_binary(f, "f")
        y = _as_binary(y, "y")
        g = _as_binary(g, "g")
        if not (len(f) == len(y) == len(g)):
            raise ValueError("f, y, g must have equal length")
        idx = f * 4 + y * 2 + g
        counts = np.bincount(idx, minlength=8).reshape(2, 2, 2)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def probs(self) -> np.ndarray:
        """Normalized (2, 2, 2) probability table p(f, y, g)."""
        if self.total == 0:
            raise ValueError("empty table")
        return self.counts / self.total

    def marginal_fy(self) -> np.ndarray:
        """Counts of (f, y), summing out g."""
        return self.counts.sum(axis=2)

    def marginal_gy(self) -> np.ndarray:
        """Counts of (g, y), summing out f."""
        return self.counts.sum(axis=0).T

    def swap_f_g(self) -> "JointCounts3":
        """The same table with the roles of F and G exchanged."""
        return JointCounts3(np.ascontiguousarray(self.counts.transpose(2, 1, 0)))


@dataclass(frozen=True)
class InfoMetrics:
    """The five quantities tracked per checkpoint, all in bits.

    ``mu`` is the performance correlation: the part of F's mutual information
    with Y that is explained by the second predictor L. It satisfies
    mu = i_fy - i_fy_given_l = i_ly - i_ly_given_f and may be negative.
    """

    i_fy: float
    i_fy_given_l: float
    i_ly: float
    i_ly_given_f: float
    mu: float


def _as_binary(a, name: str) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype == bool:
        arr = arr.astype(np.int64)
    arr = arr.astype(np.int64, copy=False).ravel()
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr


def mutual_info(joint) -> float:
    """Mutual information I(A;B) in bits from a two-variable count table.

    Accepts any 2-d non-negative table (counts or weights); symmetric in its
    two axes. Computed as H(A) + H(B) - H(A,B) on the normalized table.
    """
    c = np.asarray(joint, dtype=float)
    if c.ndim != 2:
        raise ValueError("joint must be a 2-d table")
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise ValueError("empty table")
    p = c / total
    return entropy(p.sum(axis=1)) + entropy(p.sum(axis=0)) - entropy(p)


def cond_mutual_info(joint: JointCounts3) -> float:
    """Plug-in conditional mutual information I(F;Y|G) in bits.

    Evaluates the definition
        sum_{f,y,g} p(f,y,g) * log2( p(f,y|g) / (p(f|g) p(y|g)) )
    on the empirical table. Cells with p(f,y,g) = 0 contribute 0, which in
    particular makes zero-mass conditioning values of g contribute 0.
    """
    p = joint.probs()
    p_g = p.sum(axis=(0, 1))
    p_fg = p.sum(axis=1)
    p_yg = p.sum(axis=0)
    total = 0.0
    for f, y, g in np.ndindex(2, 2, 2):
        pfyg = p[f, y, g]
        if pfyg == 0.0:
            continue
        # p(f,y|g) / (p(f|g) p(y|g)) == p(f,y,g) p(g) / (p(f,g) p(y,g))
        total += pfyg * math.log2(pfyg * p_g[g] / (p_fg[f, g] * p_yg[y, g]))
    return total


def performance_correlation(joint: JointCounts3) -> InfoMetrics:
    """All five information quantities for a (F, Y, L) table; L is the g axis.

    mu is computed independently through both chain-rule decompositions,
        mu = I(F;Y) - I(F;Y|L)  and  mu = I(L;Y) - I(L;Y|F),
    and the two are required to agree to CHAIN_RULE_TOL.
    """
    i_fy = mutual_info(joint.marginal_fy())
    i_ly = mutual_info(joint.marginal_gy())
    i_fy_given_l = cond_mutual_info(joint)
    i_ly_given_f = cond_mutual_info(joint.swap_f_g())
    mu_via_f = i_fy - i_fy_given_l
    mu_via_l = i_ly - i_ly_given_f
    if abs(mu_via_f - mu_via_l) > CHAIN_RULE_TOL:
        raise ArithmeticError(
            f"chain-rule identity violated: {mu_via_f!r} vs {mu_via_l!r}"
        )
    return InfoMetrics(
        i_fy=i_fy,
        i_fy_given_l=i_fy_given_l,
        i_ly=i_ly,
        i_ly_given_f=i_ly_given_f,
        mu=mu_via_f,
    )


def accuracy_to_mi(acc: float) -> float:
    """I(F;Y) in bits for unbiased binary F, Y with Pr[F=Y] = acc >= 1/2.

    Under unbiased marginals the map is 1 - h(1 - acc) with h the binary
    entropy; it rises from 0 bits at chance to 1 bit at perfect accuracy.
    """
    if not 0.5 - 1e-12 <= acc <= 1.0 + 1e-12:
        raise ValueError(f"accuracy {acc!r} outside [0.5, 1]")
    acc = min(max(acc, 0.5), 1.0)
    return 1.0 - binary_entropy(1.0 - acc)


def mi_to_accuracy(mi: float) -> float:
    """Inverse of accuracy_to_mi on [0, 1] bits, by monotone bisection.

    Used for the secondary accuracy axis on plots. Resolves the unique
    accuracy in [0.5, 1] to within 1e-10.
    """
    if not -1e-12 <= mi <= 1.0 + 1e-12:
        raise ValueError(f"mutual information {mi!r} outside [0, 1]")
    mi = min(max(mi, 0.0), 1.0)
    lo, hi = 0.5, 1.0
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if accuracy_to_mi(mid) < mi:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _null_model_mi(p: float, q: float) -> float:
    """Model-implied I(L~;Y) when L~ copies Y w.p. p, else is uniform noise.

    q is Pr[Y=1]. H(L~|Y) is h((1+p)/2) for either label value, so the MI is
    h(Pr[L~=1]) - h((1+p)/2).
    """
    return binary_entropy((1.0 - p) / 2.0 + q * p) - binary_entropy((1.0 + p) / 2.0)


def make_null_model(y_labels, target_mi: float, seed: int) -> np.ndarray:
    """Simulated predictions that match a target mutual information with Y.

    Each prediction equals the true label with probability p and is a uniform
    coin flip otherwise, with p solved by bisection so that the model-implied
    I(L~;Y) equals target_mi. This is the baseline of an "arbitrary classifier
    of equivalent accuracy": any explanation a real simple model provides
    beyond this one is specific structure, not raw accuracy.

    Deterministic given seed. Raises if target_mi exceeds the entropy of the
    empirical labels (unattainable).
    """
    y = _as_binary(y_labels, "y_labels")
    if y.size == 0:
        raise ValueError("empty label sequence")
    if not -1e-12 <= target_mi <= 1.0 + 1e-12:
        raise ValueError(f"target_mi {target_mi!r} outside [0, 1]")
    target_mi = max(target_mi, 0.0)
    q = float(y.mean())
    h_y = binary_entropy(q)
    if target_mi > h_y + 1e-9:
        raise ValueError(
            f"target_mi {target_mi:.6f} bits exceeds label entropy {h_y:.6f} bits"
        )
    if target_mi <= 1e-12:
        p = 0.0
    else:
        lo, hi = 0.0, 1.0
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if _null_model_mi(mid, q) < target_mi:
                lo = mid
            else:
                hi = mid
        p = 0.5 * (lo + hi)
    rng = np.random.default_rng(seed)
    copy_y = rng.random(y.size) < p
    # noise realized as y xor coin: still uniform and independent of Y, but
    # exactly equivariant under relabeling the positive class
    noise = y ^ rng.integers(0, 2, size=y.size)
    return np.where(copy_y, y, noise).astype(np.uint8)
