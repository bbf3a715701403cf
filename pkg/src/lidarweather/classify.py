"""Weather classifiers: z-scored kNN and a one-vs-one SVM trained by an SMO dual solver.

Both estimators follow the scikit-learn fit/predict protocol and can be used
inside pipelines; standardization is learned inside fit so that a persisted
model is self-contained. Model files are versioned JSON containers, see
:func:`save_model`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .features import FeatureVector
from .frames import GroundTruth

MODEL_MAGIC = "LWMC1"
MODEL_SCHEMA_VERSION = 1

_STD_EPS = 1e-12


class SmoConvergenceError(RuntimeError):
    """Raised when the dual solver hits its iteration cap before reaching tolerance."""

    def __init__(self, class_pair, iterations, gap, tol):
        self.class_pair = class_pair
        self.iterations = iterations
        self.gap = gap
        self.tol = tol
        super().__init__(
            f"SMO did not converge for class pair {class_pair}: "
            f"KKT gap {gap:.3g} > tol {tol:.3g} after {iterations} iterations"
        )


class InfeasibleSplitError(ValueError):
    """Raised when no scenario-disjoint split can expose every class on both sides."""


@dataclass(frozen=True)
class LabeledSample:
    """A feature vector with its ground truth and originating scenario."""

    features: FeatureVector
    truth: GroundTruth
    scenario_id: str


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature z-scoring parameters learned from training data.

    Features with (near-)zero spread are flagged constant and passed through
    unscaled so they cannot blow up distances.
    """

    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = np.sqrt(np.mean((X - mean) ** 2, axis=0))
        constant = std <= _STD_EPS
        scale = np.where(constant, 1.0, std)
        return cls(mean=mean, scale=scale, constant=constant)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "constant": self.constant.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            scale=np.asarray(d["scale"], dtype=np.float64),
            constant=np.asarray(d["constant"], dtype=bool),
        )


def scenario_split_mask(y, scenarios, train_fraction: float = 0.8, *,
                        test_scenarios=None, seed: int = 0, max_attempts: int = 200) -> np.ndarray:
    """Boolean mask marking the test rows of a scenario-disjoint split.

    With ``test_scenarios`` given, the assignment is explicit (e.g. the
    chamber rule: static+traffic setups train, departing-targets setup
    tests). Otherwise scenarios are shuffled with the seed and the first
    assignment exposing every class on both sides wins; the train side gets
    round(train_fraction * n_scenarios) scenarios, at least one on each side.
    """
    y = np.asarray(y, dtype=np.int64)
    sid = np.asarray(scenarios, dtype=object)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    scenario_ids = sorted(set(sid.tolist()))
    if len(scenario_ids) < 2:
        raise InfeasibleSplitError(
            f"need at least 2 scenarios for a disjoint split, got {scenario_ids}")

    all_classes = set(np.unique(y).tolist())
    by_class_scenarios = {c: set(sid[y == c].tolist()) for c in all_classes}
    confined = sorted(c for c, sc in by_class_scenarios.items() if len(sc) < 2)
    if confined:
        raise InfeasibleSplitError(
            f"classes {confined} appear in fewer than 2 scenarios; split cannot "
            f"expose them on both sides")

    def covers_all(mask):
        return (set(y[mask].tolist()) == all_classes
                and set(y[~mask].tolist()) == all_classes)

    if test_scenarios is not None:
        test_set = set(test_scenarios)
        unknown = test_set - set(scenario_ids)
        if unknown:
            raise ValueError(f"unknown test scenarios: {sorted(unknown)}")
        if not test_set or test_set >= set(scenario_ids):
            raise InfeasibleSplitError("test scenarios must be a proper non-empty subset")
        mask = np.isin(sid, sorted(test_set))
        if not covers_all(mask):
            raise InfeasibleSplitError(
                f"assignment {sorted(test_set)} leaves a class missing on one side")
        return mask

    n_train = min(max(int(round(train_fraction * len(scenario_ids))), 1), len(scenario_ids) - 1)
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        order = list(rng.permutation(scenario_ids))
        mask = np.isin(sid, order[n_train:])
        if covers_all(mask):
            return mask
    raise InfeasibleSplitError(
        f"no feasible scenario assignment found in {max_attempts} attempts")


def split_by_scenario(samples, train_fraction: float = 0.8, *,
                      test_scenarios=None, seed: int = 0, max_attempts: int = 200):
    """Scenario-disjoint (train, test) partition of LabeledSamples; see
    :func:`scenario_split_mask` for the assignment rule."""
    samples = list(samples)
    y = [int(s.truth.label) for s in samples]
    scenarios = [s.scenario_id for s in samples]
    mask = scenario_split_mask(y, scenarios, train_fraction,
                               test_scenarios=test_scenarios, seed=seed,
                               max_attempts=max_attempts)
    train = [s for s, m in zip(samples, mask) if not m]
    test = [s for s, m in zip(samples, mask) if m]
    return train, test


def samples_to_arrays(samples):
    """(X, y, scenario_ids) arrays from LabeledSamples."""
    X = np.stack([s.features.values for s in samples]) if samples else np.zeros((0, 16))
    y = np.array([int(s.truth.label) for s in samples], dtype=np.int64)
    scenarios = [s.scenario_id for s in samples]
    return X, y, scenarios


# ---------------------------------------------------------------------------
# kNN
# ---------------------------------------------------------------------------

class KNearestWeatherClassifier(BaseEstimator, ClassifierMixin):
    """Majority vote among the k nearest neighbors in standardized feature space.

    Tie rule: among the classes tied on votes, the label of the single
    nearest neighbor belonging to a tied class wins. Neighbor order itself is
    deterministic: equal distances resolve by training-row index.
    """

    def __init__(self, k=10, standardize=True):
        self.k = k
        self.standardize = standardize

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X/y shapes do not agree: {X.shape} vs {y.shape}")
        if X.shape[0] == 0:
            raise ValueError("training set must be non-empty")
        if not 1 <= self.k <= X.shape[0]:
            raise ValueError(f"k={self.k} must satisfy 1 <= k <= n_train={X.shape[0]}")
        self.standardizer_ = Standardizer.fit(X) if self.standardize else None
        self.train_X_ = self.standardizer_.transform(X) if self.standardizer_ else X.copy()
        self.train_y_ = y.copy()
        self.classes_ = np.unique(y)
        return self

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Z = self.standardizer_.transform(X) if self.standardizer_ else X
        out = np.empty(Z.shape[0], dtype=np.int64)
        for start in range(0, Z.shape[0], 256):
            chunk = Z[start:start + 256]
            d2 = ((chunk[:, None, :] - self.train_X_[None, :, :]) ** 2).sum(axis=2)
            for i in range(chunk.shape[0]):
                out[start + i] = self._vote(d2[i])
        return out

    def _vote(self, d2):
        order = np.argsort(d2, kind="stable")[: self.k]
        labels = self.train_y_[order]
        counts = {}
        for lbl in labels:
            counts[int(lbl)] = counts.get(int(lbl), 0) + 1
        best = max(counts.values())
        tied = {lbl for lbl, c in counts.items() if c == best}
        if len(tied) == 1:
            return tied.pop()
        for lbl in labels:  # nearest neighbor among the tied classes
            if int(lbl) in tied:
                return int(lbl)
        raise AssertionError("unreachable: a tied class must appear among the neighbors")


# ---------------------------------------------------------------------------
# SVM
# ---------------------------------------------------------------------------

def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    a2 = (A * A).sum(axis=1)
    b2 = (B * B).sum(axis=1)
    d2 = a2[:, None] + b2[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(d2, 0.0))


def linear_kernel(A: np.ndarray, B: np.ndarray, gamma: float = 0.0) -> np.ndarray:
    return A @ B.T


_KERNELS = {"rbf": rbf_kernel, "linear": linear_kernel}


def median_heuristic_gamma(X: np.ndarray, *, factor: float = 16.0, max_rows: int = 512) -> float:
    """gamma = 1 / (factor * median pairwise squared distance).

    Large inputs are thinned to evenly spaced rows so the sample spans the
    whole set (training data is usually ordered by condition).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] > max_rows:
        X = X[np.linspace(0, X.shape[0] - 1, max_rows).astype(int)]
    if X.shape[0] < 2:
        return 1.0 / max(X.shape[1], 1)
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    med = float(np.median(d2[np.triu_indices(X.shape[0], k=1)]))
    if med <= _STD_EPS:
        return 1.0 / max(X.shape[1], 1)
    return 1.0 / (factor * med)


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int):
    """Solve the soft-margin SVM dual by maximal-violating-pair SMO.

    minimize 1/2 a^T Q a - sum(a) with Q = (y y^T) * K, subject to
    0 <= a <= C and y^T a = 0. Returns (alpha, bias, iterations, gap).
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the objective at alpha = 0

    for it in range(1, max_iter + 1):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        down = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        v = -y * grad  # the KKT violation measure, -y_t * grad_t
        v_up = np.where(up, v, -np.inf)
        v_down = np.where(down, v, np.inf)
        i = int(np.argmax(v_up))
        j = int(np.argmin(v_down))
        gap = v_up[i] - v_down[j]
        if gap <= tol:
            return alpha, _smo_bias(alpha, v, C, float(v_up[i]), float(v_down[j])), it, float(gap)

        a = K[i, i] + K[j, j] - 2.0 * K[i, j]
        step = gap / max(a, _STD_EPS)
        # box limits along the feasible direction d_i = y_i*step, d_j = -y_j*step
        limit_i = C - alpha[i] if y[i] > 0 else alpha[i]
        limit_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(step, limit_i, limit_j)
        alpha[i] = min(max(alpha[i] + y[i] * step, 0.0), C)
        alpha[j] = min(max(alpha[j] - y[j] * step, 0.0), C)
        grad += step * y * (K[:, i] - K[:, j])

    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    down = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    v = -y * grad
    gap = float(np.max(np.where(up, v, -np.inf)) - np.min(np.where(down, v, np.inf)))
    raise SmoConvergenceError(None, max_iter, gap, tol)


def _smo_bias(alpha, v, C, v_up_max, v_down_min):
    free = (alpha > _STD_EPS) & (alpha < C - _STD_EPS)
    if free.any():
        return float(v[free].mean())
    return float((v_up_max + v_down_min) / 2.0)


@dataclass(frozen=True, eq=False)
class PairModel:
    """One trained class pair: class_a maps to y=+1, class_b to y=-1."""

    class_a: int
    class_b: int
    support_X: np.ndarray
    coef: np.ndarray        # alpha_i * y_i for the support vectors
    bias: float
    alpha: np.ndarray       # full dual solution, kept for KKT inspection
    y: np.ndarray

    def decision(self, Z: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
        K = _KERNELS[kernel](Z, self.support_X, gamma)
        return K @ self.coef + self.bias


class PairwiseSvmWeatherClassifier(BaseEstimator, ClassifierMixin):
    """One-vs-one soft-margin SVM with pairwise voting.

    Parameters
    ----------
    C : float
        Box constraint of the dual problem.
    gamma : float or "median"
        RBF width; "median" applies 1/(16 * median pairwise squared distance)
        computed on the standardized training features.
    kernel : "rbf" or "linear"
    tol : float
        KKT violation tolerance of the SMO solver.
    max_iter : int or None
        Iteration cap per class pair; None scales with the pair size.
    standardize : bool
        Learn a z-scoring transform inside fit (recommended: the raw features
        mix meters, counts and pulse units).

    Prediction is by pairwise vote; vote ties fall to the candidate with the
    largest summed signed decision margin, then to the smallest label.
    """

    def __init__(self, C=1.0, gamma="median", kernel="rbf", tol=1e-3,
                 max_iter=None, standardize=True):
        self.C = C
        self.gamma = gamma
        self.kernel = kernel
        self.tol = tol
        self.max_iter = max_iter
        self.standardize = standardize

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X/y shapes do not agree: {X.shape} vs {y.shape}")
        if self.kernel not in _KERNELS:
            raise ValueError(f"kernel must be one of {sorted(_KERNELS)}, got {self.kernel!r}")
        if not self.C > 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("SVM training requires at least 2 classes")

        self.standardizer_ = Standardizer.fit(X) if self.standardize else None
        Z = self.standardizer_.transform(X) if self.standardizer_ else X.copy()
        if self.gamma == "median":
            self.gamma_ = median_heuristic_gamma(Z)
        else:
            self.gamma_ = float(self.gamma)
            if self.kernel == "rbf" and not self.gamma_ > 0:
                raise ValueError(f"gamma must be > 0, got {self.gamma_}")

        self.pairs_ = []
        for a_pos, class_a in enumerate(self.classes_):
            for class_b in self.classes_[a_pos + 1:]:
                sel = np.flatnonzero((y == class_a) | (y == class_b))
                Zp = Z[sel]
                yp = np.where(y[sel] == class_a, 1.0, -1.0)
                K = _KERNELS[self.kernel](Zp, Zp, self.gamma_)
                cap = self.max_iter if self.max_iter is not None else max(20000, 100 * sel.size)
                try:
                    alpha, bias, _, _ = smo_solve(K, yp, float(self.C), float(self.tol), int(cap))
                except SmoConvergenceError as err:
                    raise SmoConvergenceError((int(class_a), int(class_b)),
                                              err.iterations, err.gap, err.tol) from None
                sv = alpha > _STD_EPS
                self.pairs_.append(PairModel(
                    class_a=int(class_a), class_b=int(class_b),
                    support_X=Zp[sv], coef=(alpha * yp)[sv], bias=bias,
                    alpha=alpha, y=yp,
                ))
        return self

    def decision_margins(self, X) -> np.ndarray:
        """Summed signed margins per class, shape (n_queries, n_classes)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Z = self.standardizer_.transform(X) if self.standardizer_ else X
        margins = np.zeros((Z.shape[0], self.classes_.size))
        index = {int(c): i for i, c in enumerate(self.classes_)}
        for pair in self.pairs_:
            d = pair.decision(Z, self.kernel, self.gamma_)
            margins[:, index[pair.class_a]] += d
            margins[:, index[pair.class_b]] -= d
        return margins

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Z = self.standardizer_.transform(X) if self.standardizer_ else X
        votes = np.zeros((Z.shape[0], self.classes_.size), dtype=np.int64)
        margins = np.zeros((Z.shape[0], self.classes_.size))
        index = {int(c): i for i, c in enumerate(self.classes_)}
        for pair in self.pairs_:
            d = pair.decision(Z, self.kernel, self.gamma_)
            win_a = d > 0
            votes[win_a, index[pair.class_a]] += 1
            votes[~win_a, index[pair.class_b]] += 1
            margins[:, index[pair.class_a]] += d
            margins[:, index[pair.class_b]] -= d

        out = np.empty(Z.shape[0], dtype=np.int64)
        for i in range(Z.shape[0]):
            best = votes[i].max()
            tied = np.flatnonzero(votes[i] == best)
            if tied.size > 1:
                tied = tied[np.argsort(-margins[i, tied], kind="stable")][:1]
            out[i] = int(self.classes_[tied[0]])
        return out


def svm_grid_search(X, y, scenarios, Cs=(0.3, 1.0, 3.0), gammas=("median", 0.01, 0.1), *,
                    train_fraction=0.8, seed=0, **svm_kwargs):
    """Small scenario-disjoint grid search returning (best_C, best_gamma, best_score)."""
    sids = sorted(set(scenarios))
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(sids))
    n_train = min(max(int(round(train_fraction * len(sids))), 1), len(sids) - 1)
    val_set = set(order[n_train:])
    mask = np.array([s in val_set for s in scenarios])
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    best = (None, None, -1.0)
    for C in Cs:
        for gamma in gammas:
            clf = PairwiseSvmWeatherClassifier(C=C, gamma=gamma, **svm_kwargs)
            clf.fit(X[~mask], y[~mask])
            score = float((clf.predict(X[mask]) == y[mask]).mean())
            if score > best[2]:
                best = (C, gamma, score)
    return best


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(clf, path) -> None:
    """Write a fitted classifier as a versioned, self-describing JSON container."""
    payload = {
        "magic": MODEL_MAGIC,
        "schema_version": MODEL_SCHEMA_VERSION,
        "standardizer": clf.standardizer_.to_dict() if clf.standardizer_ else None,
        "classes": [int(c) for c in clf.classes_],
    }
    if isinstance(clf, KNearestWeatherClassifier):
        payload["kind"] = "knn"
        payload["params"] = {"k": int(clf.k)}
        payload["train_X"] = clf.train_X_.tolist()
        payload["train_y"] = clf.train_y_.tolist()
    elif isinstance(clf, PairwiseSvmWeatherClassifier):
        payload["kind"] = "svm"
        payload["params"] = {
            "C": float(clf.C), "gamma": float(clf.gamma_),
            "kernel": clf.kernel, "tol": float(clf.tol),
        }
        payload["pairs"] = [{
            "class_a": p.class_a, "class_b": p.class_b,
            "support_X": p.support_X.tolist(), "coef": p.coef.tolist(),
            "bias": p.bias, "alpha": p.alpha.tolist(), "y": p.y.tolist(),
        } for p in clf.pairs_]
    else:
        raise TypeError(f"cannot serialize classifier of type {type(clf).__name__}")
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")))


def load_model(path):
    """Inverse of :func:`save_model`; restores a ready-to-predict classifier."""
    payload = json.loads(Path(path).read_text())
    if payload.get("magic") != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic {payload.get('magic')!r})")
    if payload.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {payload.get('schema_version')}")

    std = payload["standardizer"]
    standardizer = Standardizer.from_dict(std) if std is not None else None
    classes = np.asarray(payload["classes"], dtype=np.int64)

    if payload["kind"] == "knn":
        clf = KNearestWeatherClassifier(k=payload["params"]["k"],
                                        standardize=standardizer is not None)
        clf.standardizer_ = standardizer
        clf.train_X_ = np.asarray(payload["train_X"], dtype=np.float64)
        clf.train_y_ = np.asarray(payload["train_y"], dtype=np.int64)
        clf.classes_ = classes
        return clf
    if payload["kind"] == "svm":
        params = payload["params"]
        clf = PairwiseSvmWeatherClassifier(C=params["C"], gamma=params["gamma"],
                                           kernel=params["kernel"], tol=params["tol"],
                                           standardize=standardizer is not None)
        clf.standardizer_ = standardizer
        clf.classes_ = classes
        clf.gamma_ = float(params["gamma"])
        clf.pairs_ = [PairModel(
            class_a=int(p["class_a"]), class_b=int(p["class_b"]),
            support_X=np.asarray(p["support_X"], dtype=np.float64).reshape(len(p["coef"]), -1),
            coef=np.asarray(p["coef"], dtype=np.float64),
            bias=float(p["bias"]),
            alpha=np.asarray(p["alpha"], dtype=np.float64),
            y=np.asarray(p["y"], dtype=np.float64),
        ) for p in payload["pairs"]]
        return clf
    raise ValueError(f"{path}: unknown model kind {payload['kind']!r}")
