"""Honest causal forest and the regression forest behind its nuisance fits.

One tree engine serves two criteria:

* effect-heterogeneity splits on residualized outcome/treatment for the
  causal forest, scoring a cut by n_L * n_R / (n_L + n_R) times the
  squared gap between the children's residual-ratio effect estimates;
* variance-reduction (classic CART) splits for honest regression
  forests, which fit the nuisance outcome/propensity surfaces and back
  the forest-based meta-learner oracle.

Honesty: each tree draws a subsample without replacement and divides it
into disjoint split/estimation halves; splits are chosen on one half
and leaf values recomputed on the other. A node is closed when the
criterion-maximizing cut would violate the per-leaf treated/control
minima on either half, which keeps trees shallow when there is no real
heterogeneity to find.

Standard errors come from grouped half-sampling: trees are grown in
groups on complementary half-samples, and the variance of group-mean
predictions, scaled by the half-to-full subsampling ratio, estimates
the sampling variance of the forest.

Determinism: every random draw derives from the master seed and tree
index alone, so results do not depend on worker-thread count, and
subsampling operates on a canonical (content-sorted) unit order, so
permuting training rows leaves predictions unchanged.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import CateEstimates, Dataset

PROPENSITY_CLIP = (0.05, 0.95)
IMPORTANCE_DECAY = 0.79

_SK_HALF = 0
_SK_TREE = 1
_SK_FOLDS = 2
_SK_NUISANCE = 3

_CAUSAL = "causal"
_VARIANCE = "variance"


def _rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=path)))


def _derive_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=path).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ForestParams:
    """Training parameters for the honest causal forest."""

    num_trees: int = 2000
    subsample_fraction: float = 0.5
    honesty_fraction: float = 0.5
    min_leaf_treated: int = 5
    min_leaf_control: int = 5
    mtry: int | None = None  # defaults to ceil(sqrt(p)) at fit time
    num_folds_nuisance: int = 5
    seed: int = 0
    variance_groups: int = 50
    nuisance_trees: int = 100

    def validate(self, p: int | None = None) -> None:
        if self.num_trees < 1:
            raise ValueError("num_trees must be positive")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ValueError("subsample_fraction must be in (0, 1]")
        if not 0.0 < self.honesty_fraction < 1.0:
            raise ValueError("honesty_fraction must be in (0, 1)")
        if self.min_leaf_treated < 1 or self.min_leaf_control < 1:
            raise ValueError("leaf minima must be positive")
        if self.num_folds_nuisance < 2:
            raise ValueError("num_folds_nuisance must be at least 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.variance_groups < 2:
            raise ValueError("variance_groups must be at least 2")
        if self.nuisance_trees < 1:
            raise ValueError("nuisance_trees must be positive")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be positive")
        if p is not None and self.mtry is not None and self.mtry > p:
            raise ValueError(f"mtry={self.mtry} exceeds the number of features ({p})")

    def resolved_mtry(self, p: int) -> int:
        return self.mtry if self.mtry is not None else math.ceil(math.sqrt(p))

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ForestParams":
        return cls(**json.loads(text))


@dataclass
class Tree:
    """Flat node arrays plus the disjoint subsamples the tree was built from.

    ``feature[i] < 0`` marks node ``i`` as a leaf with effect ``value[i]``
    estimated from ``n_treated[i]`` treated and ``n_control[i]`` control
    units of the estimation subsample.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    value: np.ndarray
    n_treated: np.ndarray
    n_control: np.ndarray
    split_units: np.ndarray
    est_units: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())


@dataclass
class ForestModel:
    """A fitted honest causal forest."""

    trees: list[Tree]
    m_hat: np.ndarray
    e_hat: np.ndarray
    params: ForestParams
    feature_names: tuple[str, ...]
    num_groups: int


# ---------------------------------------------------------------------------
# Tree growing engine
# ---------------------------------------------------------------------------


class _TreeBuilder:
    """Grows one tree on preassembled split/estimation-sample arrays."""

    def __init__(self, kind, xs, xe, s_num, s_den, s_sq, s_a, s_b,
                 e_num, e_den, e_a, e_b, min_a, min_b, mtry, rng):
        self.kind = kind
        self.xs, self.xe = xs, xe
        self.s_num, self.s_den, self.s_sq = s_num, s_den, s_sq
        self.s_a, self.s_b = s_a, s_b
        self.e_num, self.e_den = e_num, e_den
        self.e_a, self.e_b = e_a, e_b
        self.min_a, self.min_b = min_a, min_b
        self.mtry = mtry
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.depth: list[int] = []
        self.value: list[float] = []
        self.n_a: list[int] = []
        self.n_b: list[int] = []

    def _new_node(self, depth: int) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.depth.append(depth)
        self.value.append(np.nan)
        self.n_a.append(0)
        self.n_b.append(0)
        return len(self.feature) - 1

    def _best_candidate(self, s: np.ndarray):
        """Criterion-maximizing cut over mtry sampled features, ignoring
        leaf minima (those gate the split afterwards)."""
        p = self.xs.shape[1]
        feats = np.sort(self.rng.choice(p, size=min(self.mtry, p), replace=False))
        best_crit = 0.0
        best: tuple[int, float] | None = None
        for f in feats:
            xv = self.xs[s, f]
            order = np.argsort(xv, kind="stable")
            xsorted = xv[order]
            if xsorted[0] == xsorted[-1]:
                continue
            boundary = xsorted[:-1] < xsorted[1:]
            num_sorted = self.s_num[s][order]
            den_sorted = self.s_den[s][order]
            cnum = np.cumsum(num_sorted)
            cden = np.cumsum(den_sorted)
            num_l, den_l = cnum[:-1], cden[:-1]
            num_r, den_r = cnum[-1] - num_l, cden[-1] - den_l
            with np.errstate(divide="ignore", invalid="ignore"):
                if self.kind == _CAUSAL:
                    valid = boundary & (den_l > 0.0) & (den_r > 0.0)
                    gap = num_l / den_l - num_r / den_r
                    k = len(s)
                    sizes_l = np.arange(1, k, dtype=np.float64)
                    crit = sizes_l * (k - sizes_l) / k * gap * gap
                else:
                    csq = np.cumsum(self.s_sq[s][order])
                    sq_l = csq[:-1]
                    sq_r = csq[-1] - sq_l
                    valid = boundary & (den_l > 0.0) & (den_r > 0.0)
                    sse_parent = csq[-1] - cnum[-1] ** 2 / cden[-1] if cden[-1] > 0 else 0.0
                    sse_l = sq_l - num_l**2 / den_l
                    sse_r = sq_r - num_r**2 / den_r
                    crit = sse_parent - sse_l - sse_r
            if not valid.any():
                continue
            crit = np.where(valid, crit, -np.inf)
            j = int(np.argmax(crit))  # first max: ties break toward lower threshold
            if crit[j] > best_crit:  # feature order ascending: ties keep lower index
                best_crit = float(crit[j])
                best = (int(f), float(0.5 * (xsorted[j] + xsorted[j + 1])))
        return best

    def _minima_ok(self, units: np.ndarray, a_mask, b_mask) -> bool:
        return (
            int(np.count_nonzero(a_mask[units])) >= self.min_a
            and int(np.count_nonzero(b_mask[units])) >= self.min_b
        )

    def _make_leaf(self, idx: int, e: np.ndarray) -> None:
        den = float(self.e_den[e].sum())
        if den <= 0.0:
            raise ValueError("cannot estimate a leaf value: zero total weight in leaf")
        self.value[idx] = float(self.e_num[e].sum()) / den
        self.n_a[idx] = int(np.count_nonzero(self.e_a[e]))
        self.n_b[idx] = int(np.count_nonzero(self.e_b[e]))

    def grow(self) -> Tree:
        root = self._new_node(0)
        stack = [(root, np.arange(self.xs.shape[0]), np.arange(self.xe.shape[0]))]
        while stack:
            idx, s, e = stack.pop()
            candidate = self._best_candidate(s) if len(s) >= 2 else None
            if candidate is None:
                self._make_leaf(idx, e)
                continue
            f, thr = candidate
            ls = self.xs[s, f] <= thr
            le = self.xe[e, f] <= thr
            s_l, s_r = s[ls], s[~ls]
            e_l, e_r = e[le], e[~le]
            children_ok = all(
                self._minima_ok(units, a, b)
                for units, a, b in (
                    (s_l, self.s_a, self.s_b),
                    (s_r, self.s_a, self.s_b),
                    (e_l, self.e_a, self.e_b),
                    (e_r, self.e_a, self.e_b),
                )
            )
            if not children_ok:
                self._make_leaf(idx, e)
                continue
            self.feature[idx] = f
            self.threshold[idx] = thr
            left = self._new_node(self.depth[idx] + 1)
            right = self._new_node(self.depth[idx] + 1)
            self.left[idx] = left
            self.right[idx] = right
            stack.append((right, s_r, e_r))
            stack.append((left, s_l, e_l))
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            depth=np.asarray(self.depth, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            n_treated=np.asarray(self.n_a, dtype=np.int32),
            n_control=np.asarray(self.n_b, dtype=np.int32),
            split_units=np.empty(0, dtype=np.int64),
            est_units=np.empty(0, dtype=np.int64),
        )


def _apply_tree(tree: Tree, x: np.ndarray) -> np.ndarray:
    """Leaf value for each row of ``x``."""
    out = np.empty(x.shape[0])
    node = np.zeros(x.shape[0], dtype=np.int32)
    active = np.arange(x.shape[0])
    while active.size:
        feats = tree.feature[node[active]]
        at_leaf = feats < 0
        done = active[at_leaf]
        out[done] = tree.value[node[done]]
        active = active[~at_leaf]
        if not active.size:
            break
        cur = node[active]
        go_left = x[active, tree.feature[cur]] <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])
    return out


def _canonical_order(covariates: np.ndarray, treatment: np.ndarray, outcome: np.ndarray) -> np.ndarray:
    """Content-based unit ordering: identical datasets in permuted row
    order map to the same canonical sequence."""
    keys = [outcome, treatment]
    keys.extend(covariates[:, j] for j in range(covariates.shape[1] - 1, -1, -1))
    return np.lexsort(tuple(keys))


def _half_samples(n: int, seed: int, pair: int) -> tuple[np.ndarray, np.ndarray]:
    perm = _rng(seed, _SK_HALF, pair).permutation(n)
    return np.sort(perm[: n // 2]), np.sort(perm[n // 2 :])


def _draw_subsample(rng: np.random.Generator, pool: np.ndarray, size: int,
                    honesty_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    size = max(2, min(size, pool.shape[0]))
    chosen = np.sort(rng.choice(pool, size=size, replace=False))
    perm = rng.permutation(size)
    n_split = min(max(int(round(honesty_fraction * size)), 1), size - 1)
    return np.sort(chosen[perm[:n_split]]), np.sort(chosen[perm[n_split:]])


# ---------------------------------------------------------------------------
# Honest regression forest (nuisance fits and meta-learner oracle)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionForestParams:
    num_trees: int = 100
    subsample_fraction: float = 0.5
    honesty_fraction: float = 0.5
    min_samples_leaf: int = 10
    mtry: int | None = None
    seed: int = 0


@dataclass
class RegressionForestModel:
    trees: list[Tree]
    params: RegressionForestParams
    num_features: int


def fit_regression_forest(
    x: np.ndarray,
    y: np.ndarray,
    params: RegressionForestParams,
    sample_weight: np.ndarray | None = None,
) -> RegressionForestModel:
    """Honest regression forest with a variance-reduction split criterion.

    Optional sample weights enter the criterion, the leaf means, and
    nothing else; leaf minima still count units.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"incompatible shapes: x {x.shape}, y {y.shape}")
    n, p = x.shape
    if n < 4:
        raise ValueError("need at least 4 rows to fit a regression forest")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0.0):
        raise ValueError("sample_weight must be nonnegative and align with rows")
    num = w * y
    den = w
    sq = w * y * y
    all_true = np.ones(n, dtype=bool)
    mtry = params.mtry if params.mtry is not None else math.ceil(math.sqrt(p))
    min_leaf = params.min_samples_leaf

    trees: list[Tree] = []
    for t in range(params.num_trees):
        rng = _rng(params.seed, _SK_TREE, t)
        pool = np.arange(n)
        size = int(round(params.subsample_fraction * n))
        split_ids, est_ids = _draw_subsample(rng, pool, size, params.honesty_fraction)
        builder = _TreeBuilder(
            _VARIANCE,
            x[split_ids], x[est_ids],
            num[split_ids], den[split_ids], sq[split_ids],
            all_true[split_ids], all_true[split_ids],
            num[est_ids], den[est_ids],
            all_true[est_ids], all_true[est_ids],
            min_leaf, min_leaf, mtry, rng,
        )
        tree = builder.grow()
        tree.split_units = split_ids.astype(np.int64)
        tree.est_units = est_ids.astype(np.int64)
        trees.append(tree)
    return RegressionForestModel(trees, params, p)


def predict_regression_forest(model: RegressionForestModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.num_features:
        raise ValueError(f"expected {model.num_features} feature columns, got shape {x.shape}")
    total = np.zeros(x.shape[0])
    for tree in model.trees:
        total += _apply_tree(tree, x)
    return total / len(model.trees)


# ---------------------------------------------------------------------------
# Cross-fitted nuisance estimates
# ---------------------------------------------------------------------------


def _stratified_folds(treated: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold labels over canonical positions, balanced within each arm."""
    rng = _rng(seed, _SK_FOLDS)
    folds = np.empty(treated.shape[0], dtype=np.int64)
    for mask in (treated, ~treated):
        positions = np.flatnonzero(mask)
        shuffled = rng.permutation(positions)
        folds[shuffled] = np.arange(shuffled.size) % k
    return folds


def fit_nuisance(dataset: Dataset, params: ForestParams) -> tuple[np.ndarray, np.ndarray]:
    """K-fold cross-fitted outcome mean and treatment probability.

    Each unit's predictions come from honest regression forests trained
    without that unit's fold; the treatment probability is clipped to
    [0.05, 0.95] to keep residual ratios away from zero denominators.
    """
    params.validate(dataset.p)
    n, k = dataset.n, params.num_folds_nuisance
    if n < 4 * k:
        raise ValueError(f"need at least {4 * k} units for {k}-fold cross-fitting, got {n}")
    canon = _canonical_order(dataset.covariates, dataset.treatment, dataset.outcome)
    x = dataset.covariates[canon]
    y = dataset.outcome[canon]
    w = dataset.treatment[canon]
    treated = w == 1.0

    counts = (int(treated.sum()), int((~treated).sum()))
    if min(counts) < k:
        raise ValueError(
            f"cannot build {k} folds that all contain both treatment arms "
            f"({counts[0]} treated, {counts[1]} control); use fewer folds"
        )
    folds = _stratified_folds(treated, k, params.seed)

    m_hat = np.empty(n)
    e_hat = np.empty(n)
    rf = RegressionForestParams(
        num_trees=params.nuisance_trees,
        mtry=params.mtry,
    )
    for fold in range(k):
        held = folds == fold
        train = ~held
        if treated[train].all() or not treated[train].any():
            raise ValueError(
                f"training split for fold {fold} has a single treatment class; use fewer folds"
            )
        for target, store, stream in ((y, m_hat, 0), (w, e_hat, 1)):
            fitted = fit_regression_forest(
                x[train],
                target[train],
                RegressionForestParams(
                    **{**rf.__dict__, "seed": _derive_seed(params.seed, _SK_NUISANCE, stream, fold)}
                ),
            )
            store[held] = predict_regression_forest(fitted, x[held])

    e_hat = np.clip(e_hat, *PROPENSITY_CLIP)
    inverse = np.empty(n, dtype=np.int64)
    inverse[canon] = np.arange(n)
    return m_hat[inverse], e_hat[inverse]


# ---------------------------------------------------------------------------
# Causal forest
# ---------------------------------------------------------------------------


def grow(
    dataset: Dataset,
    params: ForestParams,
    threads: int = 1,
    m_hat: np.ndarray | None = None,
    e_hat: np.ndarray | None = None,
) -> ForestModel:
    """Fit an honest causal forest.

    Nuisances are cross-fitted internally unless both ``m_hat`` and
    ``e_hat`` are supplied (useful for diagnostics with known truths).
    Growth is parallelizable across trees; results are identical to the
    sequential run for any ``threads`` value.
    """
    params.validate(dataset.p)
    n = dataset.n
    if n < 50:
        raise ValueError(f"need at least 50 units to grow a causal forest, got {n}")
    n_treated = int((dataset.treatment == 1.0).sum())
    if n_treated == 0 or n_treated == n:
        raise ValueError("both treatment arms must be nonempty")

    if m_hat is None or e_hat is None:
        m_hat, e_hat = fit_nuisance(dataset, params)
    else:
        m_hat = np.asarray(m_hat, dtype=np.float64)
        e_hat = np.clip(np.asarray(e_hat, dtype=np.float64), *PROPENSITY_CLIP)
        if m_hat.shape != (n,) or e_hat.shape != (n,):
            raise ValueError("supplied nuisance vectors must have one entry per unit")

    canon = _canonical_order(dataset.covariates, dataset.treatment, dataset.outcome)
    x = dataset.covariates[canon]
    resid_y = (dataset.outcome - m_hat)[canon]
    resid_w = (dataset.treatment - e_hat)[canon]
    treated = dataset.treatment[canon] == 1.0
    num = resid_w * resid_y
    den = resid_w * resid_w
    sq = np.zeros_like(num)  # unused by the causal criterion
    mtry = params.resolved_mtry(dataset.p)

    num_groups = min(params.variance_groups, params.num_trees)
    halves = [_half_samples(n, params.seed, pair) for pair in range((num_groups + 1) // 2)]
    subsample_size = int(round(params.subsample_fraction * n))

    def build(t: int) -> Tree:
        rng = _rng(params.seed, _SK_TREE, t)
        group = t % num_groups
        pool = halves[group // 2][group % 2]
        split_ids, est_ids = _draw_subsample(rng, pool, subsample_size, params.honesty_fraction)
        builder = _TreeBuilder(
            _CAUSAL,
            x[split_ids], x[est_ids],
            num[split_ids], den[split_ids], sq[split_ids],
            treated[split_ids], ~treated[split_ids],
            num[est_ids], den[est_ids],
            treated[est_ids], ~treated[est_ids],
            params.min_leaf_treated, params.min_leaf_control, mtry, rng,
        )
        tree = builder.grow()
        tree.split_units = canon[split_ids].astype(np.int64)
        tree.est_units = canon[est_ids].astype(np.int64)
        return tree

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_exec:
            trees = list(pool_exec.map(build, range(params.num_trees)))
    else:
        trees = [build(t) for t in range(params.num_trees)]

    return ForestModel(
        trees=trees,
        m_hat=m_hat,
        e_hat=e_hat,
        params=params,
        feature_names=dataset.feature_names,
        num_groups=num_groups,
    )


def _rows_matrix(model: ForestModel, rows) -> np.ndarray:
    if isinstance(rows, Dataset):
        if rows.feature_names != model.feature_names:
            raise ValueError(
                f"dataset features {rows.feature_names} do not match the "
                f"training features {model.feature_names}"
            )
        return rows.covariates
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != len(model.feature_names):
        raise ValueError(f"expected shape (m, {len(model.feature_names)}), got {x.shape}")
    return x


def predict(model: ForestModel, rows) -> CateEstimates:
    """Per-row effect estimates with half-sampling standard errors.

    The point estimate is the mean over trees of the leaf effect where
    the row lands. Group means over complementary half-samples estimate
    the sampling variance after scaling by the half-to-full ratio.
    """
    if not model.trees:
        raise ValueError("forest has no trees; fit it before predicting")
    x = _rows_matrix(model, rows)
    total = np.zeros(x.shape[0])
    group_sums = np.zeros((model.num_groups, x.shape[0]))
    group_counts = np.zeros(model.num_groups)
    for t, tree in enumerate(model.trees):
        values = _apply_tree(tree, x)
        total += values
        g = t % model.num_groups
        group_sums[g] += values
        group_counts[g] += 1
    tau_hat = total / len(model.trees)
    if model.num_groups >= 2:
        group_means = group_sums / group_counts[:, None]
        variance = group_means.var(axis=0)  # population variance across groups
        se = np.sqrt(0.5 * variance)  # half-samples carry twice the full-sample variance
    else:
        se = np.zeros(x.shape[0])
    return CateEstimates(method="causal_forest", tau_hat=tau_hat, se=se)


def variable_importance(model: ForestModel, decay: float = IMPORTANCE_DECAY) -> dict[str, float]:
    """Depth-weighted split frequency per feature, normalized to sum to 1.

    Each split at depth d contributes decay**d to its feature; a forest
    with no splits at all reports the uninformative uniform vector.
    """
    p = len(model.feature_names)
    weights = np.zeros(p)
    for tree in model.trees:
        internal = tree.feature >= 0
        if internal.any():
            np.add.at(weights, tree.feature[internal], decay ** tree.depth[internal].astype(float))
    total = weights.sum()
    if total == 0.0:
        weights = np.full(p, 1.0 / p)
    else:
        weights = weights / total
    return {name: float(weights[j]) for j, name in enumerate(model.feature_names)}


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_FOREST_FORMAT = 1


def save_forest(model: ForestModel, path) -> None:
    """Persist a fitted forest to a single .npz file for reload-and-predict."""
    node_counts = [tree.num_nodes for tree in model.trees]
    split_counts = [tree.split_units.size for tree in model.trees]
    est_counts = [tree.est_units.size for tree in model.trees]
    payload = {
        "format_version": np.array([_FOREST_FORMAT]),
        "params_json": np.frombuffer(model.params.to_json().encode(), dtype=np.uint8),
        "feature_names_json": np.frombuffer(
            json.dumps(list(model.feature_names)).encode(), dtype=np.uint8
        ),
        "m_hat": model.m_hat,
        "e_hat": model.e_hat,
        "num_groups": np.array([model.num_groups]),
        "node_offsets": np.cumsum([0] + node_counts),
        "split_offsets": np.cumsum([0] + split_counts),
        "est_offsets": np.cumsum([0] + est_counts),
    }
    for name in ("feature", "threshold", "left", "right", "depth", "value", "n_treated", "n_control"):
        payload[name] = np.concatenate([getattr(tree, name) for tree in model.trees])
    payload["split_units"] = np.concatenate([tree.split_units for tree in model.trees])
    payload["est_units"] = np.concatenate([tree.est_units for tree in model.trees])
    with open(path, "wb") as handle:
        np.savez_compressed(handle, **payload)


def load_forest(path) -> ForestModel:
    with np.load(path) as archive:
        version = int(archive["format_version"][0])
        if version != _FOREST_FORMAT:
            raise ValueError(f"unsupported forest file version {version}")
        params = ForestParams.from_json(bytes(archive["params_json"]).decode())
        feature_names = tuple(json.loads(bytes(archive["feature_names_json"]).decode()))
        node_offsets = archive["node_offsets"]
        split_offsets = archive["split_offsets"]
        est_offsets = archive["est_offsets"]
        fields = {
            name: archive[name]
            for name in (
                "feature", "threshold", "left", "right", "depth",
                "value", "n_treated", "n_control",
            )
        }
        split_units = archive["split_units"]
        est_units = archive["est_units"]
        trees = []
        for i in range(node_offsets.size - 1):
            lo, hi = node_offsets[i], node_offsets[i + 1]
            trees.append(
                Tree(
                    **{name: fields[name][lo:hi] for name in fields},
                    split_units=split_units[split_offsets[i] : split_offsets[i + 1]],
                    est_units=est_units[est_offsets[i] : est_offsets[i + 1]],
                )
            )
        return ForestModel(
            trees=trees,
            m_hat=archive["m_hat"],
            e_hat=archive["e_hat"],
            params=params,
            feature_names=feature_names,
            num_groups=int(archive["num_groups"][0]),
        )
