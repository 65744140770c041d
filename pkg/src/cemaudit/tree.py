"""Binary CART classifier (Gini impurity) with weakest-link cost-complexity
pruning. Numeric splits are thresholds, categorical splits one-level-vs-rest;
the sensitive attribute is never a candidate because only feature-role
attributes enter the search."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import Dataset, NUMERIC


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 10
    min_leaf: int = 20
    prune_mode: str = "none"  # "none" | "cv" (5-fold CV picks alpha)
    cv_folds: int = 5
    seed: int = 0


class Node:
    __slots__ = ("feature", "kind", "threshold", "level", "left", "right",
                 "n", "pos", "majority_left")

    def __init__(self, n, pos):
        self.feature = None     # split feature name; None at a leaf
        self.kind = None        # "num" | "cat"
        self.threshold = None   # numeric: value <= threshold goes left
        self.level = None       # categorical: value == level goes left
        self.left = None
        self.right = None
        self.n = int(n)
        self.pos = int(pos)
        self.majority_left = False  # routing for unseen categorical levels

    @property
    def is_leaf(self):
        return self.feature is None

    @property
    def prob(self):
        return self.pos / self.n

    def to_dict(self):
        d = {"n": self.n, "pos": self.pos}
        if not self.is_leaf:
            d.update(feature=self.feature, kind=self.kind,
                     majority_left=self.majority_left,
                     left=self.left.to_dict(), right=self.right.to_dict())
            if self.kind == "num":
                d["threshold"] = self.threshold
            else:
                d["level"] = self.level
        return d

    @classmethod
    def from_dict(cls, d):
        node = cls(d["n"], d["pos"])
        if "feature" in d:
            node.feature = d["feature"]
            node.kind = d["kind"]
            node.threshold = d.get("threshold")
            node.level = d.get("level")
            node.majority_left = d["majority_left"]
            node.left = cls.from_dict(d["left"])
            node.right = cls.from_dict(d["right"])
        return node


class TreeModel:
    def __init__(self, root: Node, feature_kinds: dict, known_levels: dict,
                 params: TreeParams, alpha: float = 0.0):
        self.root = root
        self.feature_kinds = feature_kinds  # name -> "num" | "cat"
        self.known_levels = known_levels    # cat name -> training level list
        self.params = params
        self.alpha = alpha

    def n_leaves(self) -> int:
        return sum(1 for nd in _walk(self.root) if nd.is_leaf)

    def depth(self) -> int:
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))
        return d(self.root)

    def split_features(self) -> set:
        return {nd.feature for nd in _walk(self.root) if not nd.is_leaf}

    def predict_proba(self, data) -> np.ndarray:
        df = data.df if isinstance(data, Dataset) else data
        n = len(df)
        out = np.empty(n)
        cols = {name: df[name].to_numpy() for name in self.feature_kinds}

        def route(node, idx):
            if node.is_leaf:
                out[idx] = node.prob
                return
            vals = cols[node.feature][idx]
            if node.kind == "num":
                go_left = vals.astype(float) <= node.threshold
            else:
                go_left = vals == node.level
                known = np.isin(vals, self.known_levels[node.feature])
                if node.majority_left:
                    go_left = go_left | ~known
            route(node.left, idx[go_left])
            route(node.right, idx[~go_left])

        route(self.root, np.arange(n))
        return out

    def predict_label(self, data, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(data) >= threshold).astype(np.int8)

    def to_dict(self) -> dict:
        return {
            "root": self.root.to_dict(),
            "feature_kinds": self.feature_kinds,
            "known_levels": {k: list(v) for k, v in self.known_levels.items()},
            "params": vars(self.params) if not isinstance(self.params, dict) else self.params,
            "alpha": self.alpha,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, d) -> "TreeModel":
        return cls(Node.from_dict(d["root"]), d["feature_kinds"],
                   {k: list(v) for k, v in d["known_levels"].items()},
                   TreeParams(**d["params"]), d.get("alpha", 0.0))

    @classmethod
    def from_json(cls, path) -> "TreeModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _gini(pos, n):
    if n == 0:
        return 0.0
    p = pos / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def _best_split(columns, feature_order, y, idx, min_leaf):
    """Exhaustive Gini-gain search over all candidate splits at one node.
    Ties break toward the earlier feature and the lower threshold/level,
    enforced by strict improvement while scanning in that order."""
    n = len(idx)
    pos = int(y[idx].sum())
    parent = _gini(pos, n)
    best = None  # (gain, feature, kind, threshold_or_level)
    eps = 1e-12
    for name in feature_order:
        kind, vals = columns[name]
        x = vals[idx]
        if kind == "num":
            order = np.argsort(x, kind="stable")
            xs, ys = x[order], y[idx][order]
            cum_pos = np.cumsum(ys)
            nl = np.flatnonzero(np.diff(xs) > 0) + 1  # candidate left sizes
            nl = nl[(nl >= min_leaf) & (n - nl >= min_leaf)]
            if len(nl) == 0:
                continue
            nr = n - nl
            pl = cum_pos[nl - 1].astype(float)
            pr = pos - pl
            wl = nl - pl * pl / nl - (nl - pl) ** 2 / nl
            wr = nr - pr * pr / nr - (nr - pr) ** 2 / nr
            gains = parent - (wl + wr) / n
            top = gains.max()
            j = int(np.flatnonzero(gains >= top - eps)[0])  # ties: lowest threshold
            if best is None or gains[j] > best[0] + eps:
                thr = (xs[nl[j] - 1] + xs[nl[j]]) / 2.0
                best = (float(gains[j]), name, "num", thr)
        else:
            for level in sorted(set(x.tolist())):
                mask = x == level
                nl = int(mask.sum())
                nr = n - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                pl = int(y[idx][mask].sum())
                gain = parent - (nl * _gini(pl, nl) + nr * _gini(pos - pl, nr)) / n
                if best is None or gain > best[0] + eps:
                    best = (gain, name, "cat", level)
    if best is None or best[0] <= eps:
        return None
    return best


def fit_tree(train: Dataset, params: TreeParams = TreeParams()) -> TreeModel:
    """Greedy CART fit on the feature columns (S excluded by role); leaf
    probability is the training positive fraction. ``prune_mode='cv'``
    additionally selects a cost-complexity alpha by k-fold cross-validation."""
    if train.n == 0:
        raise ValueError("empty training set")
    features = train.schema.features
    if not features:
        raise ValueError("no feature attributes to split on")
    y = train.y.astype(np.int64)
    columns, known_levels, feature_kinds = {}, {}, {}
    for a in features:
        if a.kind == NUMERIC:
            columns[a.name] = ("num", train.df[a.name].to_numpy(float))
            feature_kinds[a.name] = "num"
        else:
            vals = train.df[a.name].to_numpy(object)
            columns[a.name] = ("cat", vals)
            feature_kinds[a.name] = "cat"
            known_levels[a.name] = sorted(set(vals.tolist()))
    order = [a.name for a in features]

    def grow(idx, depth):
        node = Node(len(idx), y[idx].sum())
        if depth >= params.max_depth or len(idx) < 2 * params.min_leaf \
                or node.pos in (0, node.n):
            return node
        found = _best_split(columns, order, y, idx, params.min_leaf)
        if found is None:
            return node
        _, name, kind, cut = found
        kind_, vals = columns[name]
        x = vals[idx]
        go_left = (x.astype(float) <= cut) if kind == "num" else (x == cut)
        node.feature, node.kind = name, kind
        if kind == "num":
            node.threshold = float(cut)
        else:
            node.level = cut
        node.majority_left = bool(go_left.sum() * 2 > len(idx))
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    root = grow(np.arange(train.n), 0)
    model = TreeModel(root, feature_kinds, known_levels, params)
    if params.prune_mode == "cv":
        alpha = _cv_alpha(train, params)
        model = prune(model, alpha)
        model.alpha = alpha
    return model


def _walk(node):
    yield node
    if not node.is_leaf:
        yield from _walk(node.left)
        yield from _walk(node.right)


def _subtree_stats(node, n_total):
    """(leaf error rate of subtree, leaf count) with errors in units of
    misclassified training fraction of the whole training set."""
    if node.is_leaf:
        return min(node.pos, node.n - node.pos) / n_total, 1
    rl, ll = _subtree_stats(node.left, n_total)
    rr, lr = _subtree_stats(node.right, n_total)
    return rl + rr, ll + lr


def _copy(node):
    new = Node(node.n, node.pos)
    if not node.is_leaf:
        new.feature, new.kind = node.feature, node.kind
        new.threshold, new.level = node.threshold, node.level
        new.majority_left = node.majority_left
        new.left = _copy(node.left)
        new.right = _copy(node.right)
    return new


def _link_strengths(root, n_total):
    """g(t) for every internal node: cost of collapsing it per leaf removed."""
    out = []
    for nd in _walk(root):
        if nd.is_leaf:
            continue
        r_sub, leaves = _subtree_stats(nd, n_total)
        r_leaf = min(nd.pos, nd.n - nd.pos) / n_total
        out.append((nd, (r_leaf - r_sub) / (leaves - 1)))
    return out

def weakest_link_alphas(tree: TreeModel) -> list[float]:
    """Increasing alphas at which the pruned tree changes (CV candidates)."""
    n_total = tree.root.n
    root = _copy(tree.root)
    alphas = []
    while not root.is_leaf:
        links = _link_strengths(root, n_total)
        g = min(v for _, v in links)
        alphas.append(g)
        for nd, v in links:
            if v <= g + 1e-15:
                nd.feature = nd.left = nd.right = None
    return alphas


def prune(tree: TreeModel, alpha: float) -> TreeModel:
    """Weakest-link cost-complexity pruning: repeatedly collapse the internal
    node(s) with the smallest per-leaf error increase while that increase is
    <= alpha. alpha=0 is the identity; alpha=inf leaves only the root."""
    root = _copy(tree.root)
    n_total = root.n
    if alpha > 0:
        while not root.is_leaf:
            links = _link_strengths(root, n_total)
            g = min(v for _, v in links)
            if g > alpha:
                break
            for nd, v in links:
                if v <= g + 1e-15:
                    nd.feature = nd.left = nd.right = None
    return TreeModel(root, tree.feature_kinds, tree.known_levels,
                     tree.params, alpha)


def _cv_alpha(train: Dataset, params: TreeParams) -> float:
    base = TreeParams(params.max_depth, params.min_leaf, "none",
                      params.cv_folds, params.seed)
    full = fit_tree(train, base)
    alphas = weakest_link_alphas(full)
    if not alphas:
        return 0.0
    alphas = sorted(set(a for a in alphas if a > 0))
    if not alphas:
        return 0.0
    cands = [0.0]
    cands += [math.sqrt(alphas[i] * alphas[i + 1]) for i in range(len(alphas) - 1)]
    cands += [alphas[-1] * 1.001]
    cands = sorted(set(cands))

    rng = np.random.default_rng(params.seed)
    fold = rng.permutation(train.n) % params.cv_folds
    errors = np.zeros(len(cands))
    for f in range(params.cv_folds):
        tr = train.take(np.flatnonzero(fold != f))
        ho = train.take(np.flatnonzero(fold == f))
        sub = fit_tree(tr, base)
        y = ho.y
        for j, a in enumerate(cands):
            pred = prune(sub, a).predict_label(ho)
            errors[j] += float((pred != y).sum())
    best = np.flatnonzero(errors <= errors.min() + 1e-9)
    return float(cands[best[-1]])  # ties -> larger alpha (simpler tree)
