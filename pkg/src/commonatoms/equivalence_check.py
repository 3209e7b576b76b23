"""Covariate equivalence of the treatment arm and a synthetic control,
judged by the cross-validated AUC of a classifier that tries to tell the
two apart. An AUC near 0.5 means the classifier cannot separate them."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import ExtraTreesClassifier
from sklearn.model_selection import StratifiedKFold

from .data_model import MixedDataset

__all__ = ["EquivalenceReport", "ClassifierConfig", "auc_mann_whitney", "encode_features",
           "LogisticL2", "cv_classifier_auc", "compare_arms", "write_scores_csv"]


def auc_mann_whitney(scores, labels) -> float:
    """Rank-based AUC, P(score+ > score-) + P(score+ = score-) / 2.

    Parameters
    ----------
    scores : array_like
    labels : array_like of {0, 1} or bool
        1 marks the positive class.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels must have the same length")
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both classes present")
    r = rankdata(s)  # midranks for ties
    return float((r[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def encode_features(datasets, interactions: bool = False) -> tuple[np.ndarray, list]:
    """Numeric design for the classifier only.

    Categorical columns become one-hot indicators with an extra level for
    Missing. Continuous columns are standardized with the pooled mean and
    sd, mean-imputed, and get a missingness flag when any value is missing.
    ``interactions`` appends all pairwise products of the main effects.
    """
    ds0 = datasets[0]
    schema = ds0.schema
    cat = np.vstack([d.cat for d in datasets])
    con = np.vstack([d.cont for d in datasets])
    cols, names = [], []
    for l, col in enumerate(schema.categorical):
        v = cat[:, l]
        for lev in range(col.num_levels):
            cols.append((v == lev).astype(float))
            names.append(f"{col.name}={lev}")
        if np.any(v < 0):
            cols.append((v < 0).astype(float))
            names.append(f"{col.name}=NA")
    for l, col in enumerate(schema.continuous):
        v = con[:, l]
        miss = np.isnan(v)
        if miss.all():
            continue
        m = np.nanmean(v)
        sd = np.nanstd(v)
        z = np.where(miss, 0.0, (v - m) / (sd if sd > 0 else 1.0))
        cols.append(z)
        names.append(col.name)
        if miss.any():
            cols.append(miss.astype(float))
            names.append(f"{col.name}:NA")
    X = np.column_stack(cols) if cols else np.zeros((cat.shape[0], 0))
    if interactions and X.shape[1] > 1:
        d = X.shape[1]
        extra, en = [], []
        for a in range(d):
            for b in range(a + 1, d):
                prod = X[:, a] * X[:, b]
                if np.any(prod != 0):
                    extra.append(prod)
                    en.append(f"{names[a]}*{names[b]}")
        if extra:
            X = np.column_stack([X] + extra)
            names = names + en
    return X, names


class LogisticL2:
    """Ridge-penalized logistic regression fitted by damped Newton steps.

    The intercept is not penalized. Each Newton direction is halved until
    the penalized log-likelihood increases.
    """

    def __init__(self, lam: float = 1.0, max_iter: int = 50, tol: float = 1e-8):
        self.lam = lam
        self.max_iter = max_iter
        self.tol = tol
        self.coef_ = None

    def _obj(self, A, y, w):
        eta = A @ w
        ll = np.sum(y * eta - np.logaddexp(0.0, eta))
        return ll - 0.5 * self.lam * np.sum(w[1:] ** 2)

    def fit(self, X, y):
        A = np.column_stack([np.ones(X.shape[0]), X])
        y = np.asarray(y, float)
        w = np.zeros(A.shape[1])
        pen = np.full(A.shape[1], self.lam)
        pen[0] = 0.0
        f = self._obj(A, y, w)
        for _ in range(self.max_iter):
            p = 0.5 * (1.0 + np.tanh(0.5 * (A @ w)))
            g = A.T @ (y - p) - pen * w
            H = (A * (p * (1 - p))[:, None]).T @ A + np.diag(pen) + 1e-10 * np.eye(A.shape[1])
            step = np.linalg.solve(H, g)
            t = 1.0
            while True:
                wn = w + t * step
                fn = self._obj(A, y, wn)
                if fn >= f or t < 1e-10:
                    break
                t *= 0.5
            done = abs(fn - f) <= self.tol * (1.0 + abs(f))
            w, f = wn, fn
            if done:
                break
        self.coef_ = w
        return self

    def decision_function(self, X):
        return self.coef_[0] + X @ self.coef_[1:]


@dataclass
class ClassifierConfig:
    """Classifier settings.

    ``kind`` is "logistic" (L2 logistic regression, optionally with
    pairwise interactions) or "extra_trees".
    """

    kind: str = "logistic"
    lam: float = 1.0
    interactions: bool = False
    n_trees: int = 200
    min_samples_leaf: int = 5
    folds: int = 5
    threshold: float = 0.6

    def __post_init__(self):
        if self.kind not in ("logistic", "extra_trees"):
            raise ValueError(f"unknown classifier {self.kind!r}")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


@dataclass
class EquivalenceReport:
    """Cross-validated AUC and verdict (``auc < threshold``)."""

    auc: float
    threshold: float
    verdict: bool
    classifier: str
    folds: list = field(default_factory=list)
    attempts: int = 1
    scores: np.ndarray | None = None
    labels: np.ndarray | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("scores")
        d.pop("labels")
        d["verdict"] = "pass" if self.verdict else "fail"
        return d

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def _fit_score(cfg: ClassifierConfig, Xtr, ytr, Xte, seed: int) -> np.ndarray:
    if cfg.kind == "logistic":
        return LogisticL2(cfg.lam).fit(Xtr, ytr).decision_function(Xte)
    clf = ExtraTreesClassifier(n_estimators=cfg.n_trees, min_samples_leaf=cfg.min_samples_leaf,
                               random_state=seed, n_jobs=1)
    clf.fit(Xtr, ytr)
    return clf.predict_proba(Xte)[:, 1]


def cv_classifier_auc(X, labels, cfg: ClassifierConfig | None = None,
                      rng: np.random.Generator | None = None) -> EquivalenceReport:
    """Stratified k-fold out-of-fold scores and their pooled AUC.

    A fold whose training part lacks a class triggers a refold with a new
    seed; after five failed attempts a ValueError is raised.
    """
    cfg = cfg or ClassifierConfig()
    rng = rng or np.random.default_rng(0)
    X = np.asarray(X, float)
    y = np.asarray(labels).astype(int)
    counts = np.bincount(y, minlength=2)
    if counts.min() == 0:
        raise ValueError("both arms must be nonempty")
    folds = min(cfg.folds, int(counts.min()))
    if folds < 2:
        raise ValueError("too few records in the smaller arm for cross-validation")
    for attempt in range(1, 6):
        seed = int(rng.integers(2 ** 31 - 1))
        skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
        scores = np.empty(y.size)
        detail = []
        ok = True
        for f, (tr, te) in enumerate(skf.split(X, y)):
            if np.unique(y[tr]).size < 2 or np.unique(y[te]).size < 2:
                ok = False
                break
            scores[te] = _fit_score(cfg, X[tr], y[tr], X[te], seed + f)
            detail.append({"fold": f, "n_test": int(te.size),
                           "auc": auc_mann_whitney(scores[te], y[te])})
        if ok:
            auc = auc_mann_whitney(scores, y)
            return EquivalenceReport(auc, cfg.threshold, bool(auc < cfg.threshold),
                                     cfg.kind + ("+interactions" if cfg.interactions and
                                                 cfg.kind == "logistic" else ""),
                                     detail, attempt, scores, y)
    raise ValueError("could not build folds with both classes after 5 attempts")


def compare_arms(treatment: MixedDataset, control: MixedDataset,
                 cfg: ClassifierConfig | None = None,
                 rng: np.random.Generator | None = None) -> EquivalenceReport:
    """Label treatment rows 1 and control rows 0, encode, and cross-validate."""
    cfg = cfg or ClassifierConfig()
    X, _ = encode_features([treatment, control], cfg.interactions and cfg.kind == "logistic")
    y = np.r_[np.ones(treatment.n, int), np.zeros(control.n, int)]
    return cv_classifier_auc(X, y, cfg, rng)


def write_scores_csv(report: EquivalenceReport, path) -> None:
    """Columns record, label, score (out-of-fold)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["record", "label", "score"])
        for i, (lab, s) in enumerate(zip(report.labels, report.scores)):
            w.writerow([i, int(lab), repr(float(s))])
