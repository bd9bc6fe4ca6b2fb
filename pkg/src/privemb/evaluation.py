"""Attack, utility, and link-prediction audits over released embeddings.

The classifier battery is deliberately small and fully deterministic:
a linear softmax model, a one-hidden-layer MLP, and k-nearest neighbours.
All three train on a knowledge fraction of the labeled nodes and report
accuracy and macro F1 on the rest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .graphcore import EdgeSplit, split_nodes
from .numkit import Adam, Rng, derive_seed, softmax_cross_entropy, softmax_rows

CLASSIFIER_KINDS = ("softmax", "mlp", "knn")

REPORT_COLUMNS = ("method", "task", "classifier", "fraction", "metric",
                  "mean", "std", "repeats")


@dataclass(frozen=True)
class ClassifierSpec:
    """One member of the evaluation battery."""

    kind: str = "mlp"
    lr: float = 0.01
    steps: int = 300
    hidden: int = 64
    k: int = 5

    def __post_init__(self):
        if self.kind not in CLASSIFIER_KINDS:
            raise ValueError(f"unknown classifier kind '{self.kind}'")


@dataclass
class EvalRecord:
    method: str
    task: str
    classifier: str
    fraction: float
    metric: str
    mean: float
    std: float
    repeats: int


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.size != y_pred.size or y_true.size == 0:
        raise ValueError("label arrays must be non-empty and equally long")
    return float(np.mean(y_true == y_pred))


def macro_f1(y_true, y_pred, num_classes: int) -> float:
    """Unweighted mean of per-class F1; a class with no predictions and no
    positives contributes 0."""
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.size != y_pred.size or y_true.size == 0:
        raise ValueError("label arrays must be non-empty and equally long")
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    scores = []
    for c in range(1, num_classes + 1):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        if precision + recall == 0:
            scores.append(0.0)
        else:
            scores.append(2.0 * precision * recall / (precision + recall))
    return float(np.mean(scores))


def _onehot(y0: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((y0.size, m), dtype=np.float64)
    out[np.arange(y0.size), y0] = 1.0
    return out


def _fit_softmax(x, y0, m, spec: ClassifierSpec, seed: int):
    w = np.zeros((x.shape[1], m))
    b = np.zeros(m)
    onehot = _onehot(y0, m)
    mask = np.arange(x.shape[0])
    opt = Adam({"w": w, "b": b}, lr=spec.lr)
    for _ in range(spec.steps):
        logits = x @ w + b
        _, g = softmax_cross_entropy(logits, onehot, mask)
        opt.step({"w": w, "b": b}, {"w": x.T @ g, "b": g.sum(axis=0)})

    def predict(q):
        return np.argmax(q @ w + b, axis=1)

    return predict


def _fit_mlp(x, y0, m, spec: ClassifierSpec, seed: int):
    rng = Rng(seed)
    w1 = rng.glorot(x.shape[1], spec.hidden)
    b1 = np.zeros(spec.hidden)
    w2 = rng.glorot(spec.hidden, m)
    b2 = np.zeros(m)
    onehot = _onehot(y0, m)
    mask = np.arange(x.shape[0])
    params = {"w1": w1, "b1": b1, "w2": w2, "b2": b2}
    opt = Adam(params, lr=spec.lr)
    for _ in range(spec.steps):
        pre = x @ w1 + b1
        h = np.maximum(pre, 0.0)
        logits = h @ w2 + b2
        _, g = softmax_cross_entropy(logits, onehot, mask)
        dh = (g @ w2.T) * (pre > 0.0)
        grads = {"w1": x.T @ dh, "b1": dh.sum(axis=0),
                 "w2": h.T @ g, "b2": g.sum(axis=0)}
        opt.step(params, grads)

    def predict(q):
        h = np.maximum(q @ w1 + b1, 0.0)
        return np.argmax(h @ w2 + b2, axis=1)

    return predict


def _fit_knn(x, y0, m, spec: ClassifierSpec, seed: int):
    k = min(spec.k, x.shape[0])

    def predict(q):
        d2 = ((q[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out = np.empty(q.shape[0], dtype=np.int64)
        for i in range(q.shape[0]):
            out[i] = np.argmax(np.bincount(y0[nearest[i]], minlength=m))
        return out

    return predict


_FITTERS = {"softmax": _fit_softmax, "mlp": _fit_mlp, "knn": _fit_knn}


def fit_classifier(spec: ClassifierSpec, x, labels, num_classes: int, seed: int):
    """Train one battery member on codes 1..num_classes; the returned
    predictor maps feature rows back to codes."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if np.any(labels < 1) or np.any(labels > num_classes):
        raise ValueError("labels must be codes in 1..num_classes")
    inner = _FITTERS[spec.kind](x, labels - 1, num_classes, spec, seed)

    def predict(q):
        return inner(np.asarray(q, dtype=np.float64)) + 1

    return predict


def _split_with_redraw(mask, labels, fraction, seed, attempts=20):
    """Split the labeled nodes so every present class reaches the training
    side, re-drawing with derived seeds before giving up."""
    present = np.unique(labels[mask])
    for a in range(attempts):
        split = split_nodes(mask, fraction, derive_seed(seed, f"try/{a}"))
        if np.all(np.isin(present, labels[split.train])):
            return split
    raise ValueError(f"no split with all classes on the training side after {attempts} draws")


def _classification_eval(z, labels, mask, num_classes, spec, fraction, seed,
                         repeats, method, task):
    if not 0.1 <= fraction <= 0.9:
        raise ValueError("fraction must lie in [0.1, 0.9]")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValueError("no labeled nodes to evaluate")
    accs = []
    f1s = []
    for r in range(repeats):
        rep_seed = derive_seed(seed, f"rep/{r}")
        split = _split_with_redraw(mask, labels, fraction, rep_seed)
        predict = fit_classifier(spec, z[split.train], labels[split.train],
                                 num_classes, derive_seed(rep_seed, "clf"))
        pred = predict(z[split.test])
        accs.append(accuracy(labels[split.test], pred))
        f1s.append(macro_f1(labels[split.test], pred, num_classes))
    rows = []
    for metric, values in (("ACC", accs), ("MacroF1", f1s)):
        rows.append(EvalRecord(method=method, task=task, classifier=spec.kind,
                               fraction=fraction, metric=metric,
                               mean=float(np.mean(values)),
                               std=float(np.std(values)), repeats=repeats))
    return rows


def attack_eval(z, labels, mask, num_classes, spec: ClassifierSpec,
                fraction: float = 0.5, seed: int = 0, repeats: int = 10,
                method: str = "") -> list:
    """Simulated inference attack on the private attribute."""
    return _classification_eval(z, labels, mask, num_classes, spec, fraction,
                                seed, repeats, method, "privacy")


def utility_attr_eval(z, labels, mask, num_classes, spec: ClassifierSpec,
                      fraction: float = 0.7, seed: int = 0, repeats: int = 10,
                      method: str = "", name: str = "attr") -> list:
    """Downstream prediction of one utility attribute."""
    return _classification_eval(z, labels, mask, num_classes, spec, fraction,
                                seed, repeats, method, f"utility:{name}")


def _pair_features(z, pairs):
    return z[pairs[:, 0]] * z[pairs[:, 1]]


def link_eval(z, split: EdgeSplit, spec: ClassifierSpec, seed: int = 0,
              method: str = "") -> list:
    """Link prediction on held-out pairs.

    Trains on the embedding-training edges plus an equal number of sampled
    non-edges (disjoint from every edge and from the held-out negatives) and
    scores the held-out positives against the held-out negatives. Pair
    features are elementwise products of the endpoint embeddings. Codes:
    1 non-edge, 2 edge.
    """
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    train_pos = np.asarray(split.train_edges, dtype=np.int64)
    held_pos = np.asarray(split.heldout_pos, dtype=np.int64)
    held_neg = np.asarray(split.heldout_neg, dtype=np.int64)
    if len(train_pos) == 0 or len(held_pos) == 0 or len(held_neg) == 0:
        raise ValueError("edge split has an empty side")
    forbidden = {(int(u), int(v)) for u, v in train_pos}
    forbidden |= {(int(u), int(v)) for u, v in held_pos}
    forbidden |= {(int(u), int(v)) for u, v in held_neg}
    rng = Rng(derive_seed(seed, "link/negatives"))
    negs = []
    seen = set()
    while len(negs) < len(train_pos):
        u = int(rng.integers(0, n))
        v = int(rng.integers(0, n))
        if u == v:
            continue
        e = (u, v) if u < v else (v, u)
        if e in forbidden or e in seen:
            continue
        seen.add(e)
        negs.append(e)
    train_neg = np.array(negs, dtype=np.int64)

    x_train = np.vstack([_pair_features(z, train_pos), _pair_features(z, train_neg)])
    y_train = np.concatenate([np.full(len(train_pos), 2), np.full(len(train_neg), 1)])
    predict = fit_classifier(spec, x_train, y_train, 2, derive_seed(seed, "link/clf"))

    x_test = np.vstack([_pair_features(z, held_pos), _pair_features(z, held_neg)])
    y_test = np.concatenate([np.full(len(held_pos), 2), np.full(len(held_neg), 1)])
    pred = predict(x_test)
    frac = 1.0 - len(held_pos) / (len(held_pos) + len(train_pos))
    rows = []
    for metric, value in (("ACC", accuracy(y_test, pred)),
                          ("MacroF1", macro_f1(y_test, pred, 2))):
        rows.append(EvalRecord(method=method, task="link", classifier=spec.kind,
                               fraction=frac, metric=metric, mean=float(value),
                               std=0.0, repeats=1))
    return rows


def utility_privacy_ratio(records) -> float:
    """Mean of the link and utility macro F1 means divided by the privacy
    macro F1 mean. Higher is a better privacy/utility trade."""
    link = [r.mean for r in records if r.task == "link" and r.metric == "MacroF1"]
    utility = [r.mean for r in records if r.task.startswith("utility:") and r.metric == "MacroF1"]
    privacy = [r.mean for r in records if r.task == "privacy" and r.metric == "MacroF1"]
    if not link or not utility or not privacy:
        raise ValueError("need link, utility, and privacy MacroF1 records")
    num = float(np.mean([np.mean(link)] + utility))
    den = float(np.mean(privacy))
    if den <= 0:
        raise ValueError("privacy MacroF1 must be positive")
    return num / den


def write_report(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in records:
            writer.writerow([r.method, r.task, r.classifier, f"{r.fraction:g}",
                             r.metric, f"{r.mean:.10g}", f"{r.std:.10g}", r.repeats])


SWEEP_AXES = ("lambda", "dprime", "fraction")


def sweep(axis: str, values, g, schema, base_cfg, spec: ClassifierSpec,
          repeats: int = 5, fraction: float = 0.5, seed: int = 0) -> list:
    """Hyperparameter sweeps matching the audit protocol.

    'lambda' and 'dprime' retrain per value with ``repeats`` derived seeds
    and report privacy, utility, and link metrics; 'fraction' trains once
    and re-attacks at every knowledge fraction.
    """
    from .training import train  # local import keeps module load acyclic

    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis '{axis}'")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    priv = schema.private_attribute
    m_priv = schema.classes[priv]
    records = []

    if axis == "fraction":
        result = train(g, schema, base_cfg)
        labels = g.attributes[priv]
        mask = np.where(labels > 0)[0]
        for f in values:
            records.extend(attack_eval(result.Z, labels, mask, m_priv, spec,
                                       fraction=float(f),
                                       seed=derive_seed(seed, f"fraction/{f:g}"),
                                       repeats=repeats, method=base_cfg.variant))
        return records

    for value in values:
        tag = f"{base_cfg.variant}[{axis}={value:g}]"
        accs = {"privacy": [], "link": []}
        f1s = {"privacy": [], "link": []}
        util_accs = {name: [] for name in schema.utility_attributes}
        util_f1s = {name: [] for name in schema.utility_attributes}
        for r in range(repeats):
            run_seed = derive_seed(seed, f"{axis}/{value:g}/{r}")
            if axis == "lambda":
                cfg = replace(base_cfg, lam=float(value), seed=run_seed)
            else:
                cfg = replace(base_cfg, d_prime=int(value), seed=run_seed)
            result = train(g, schema, cfg)
            labels = g.attributes[priv]
            mask = np.where(labels > 0)[0]
            rows = attack_eval(result.Z, labels, mask, m_priv, spec,
                               fraction=fraction, seed=derive_seed(run_seed, "attack"),
                               repeats=1, method=tag)
            accs["privacy"].append(rows[0].mean)
            f1s["privacy"].append(rows[1].mean)
            for name in schema.utility_attributes:
                lab = g.attributes[name]
                msk = np.where(lab > 0)[0]
                rows = utility_attr_eval(result.Z, lab, msk, schema.classes[name],
                                         spec, seed=derive_seed(run_seed, "utility"),
                                         repeats=1, method=tag, name=name)
                util_accs[name].append(rows[0].mean)
                util_f1s[name].append(rows[1].mean)
            rows = link_eval(result.Z, result.edge_split, spec,
                             seed=derive_seed(run_seed, "link"), method=tag)
            accs["link"].append(rows[0].mean)
            f1s["link"].append(rows[1].mean)

        def block(task, acc_values, f1_values, frac):
            for metric, vals in (("ACC", acc_values), ("MacroF1", f1_values)):
                records.append(EvalRecord(method=tag, task=task, classifier=spec.kind,
                                          fraction=frac, metric=metric,
                                          mean=float(np.mean(vals)),
                                          std=float(np.std(vals)),
                                          repeats=repeats))

        block("privacy", accs["privacy"], f1s["privacy"], fraction)
        for name in schema.utility_attributes:
            block(f"utility:{name}", util_accs[name], util_f1s[name], 0.7)
        block("link", accs["link"], f1s["link"], 1.0 - base_cfg.edge_holdout)
    return records
