"""Logistic regression, gradient-boosted trees and a one-hidden-layer MLP, in numpy.

All three train deterministically from a seed and produce a frozen
:class:`TrainedModel` whose ``predict_proba`` returns P(y = 1).
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .dataset import Dataset, Standardizer, schema_fingerprint

KINDS = ("LR", "GBDT", "MLP")
MODEL_MAGIC = b"BIZSURV-MODEL\n"
MODEL_FORMAT_VERSION = 1
_EPS = 1e-6


class TrainingError(RuntimeError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LRParams:
    l2: float = 1e-4
    tol: float = 1e-6
    max_iter: int = 3000


@dataclass(frozen=True)
class GBDTParams:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    l2: float = 1.0
    max_bins: int = 64


@dataclass(frozen=True)
class MLPParams:
    hidden: int = 64
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    l2: float = 1e-4


DEFAULT_HYPER = {"LR": LRParams(), "GBDT": GBDTParams(), "MLP": MLPParams()}
_HYPER_TYPES = {"LR": LRParams, "GBDT": GBDTParams, "MLP": MLPParams}


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def log_loss(y, p) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def _base_logit(y: np.ndarray) -> float:
    rate = float(np.clip(np.mean(y), _EPS, 1 - _EPS))
    return float(np.log(rate / (1 - rate)))


@dataclass(frozen=True)
class TrainedModel:
    kind: str
    params: Mapping[str, np.ndarray]
    columns: tuple[str, ...]
    seed: int = 0
    hyper: Mapping[str, Any] = field(default_factory=dict)
    info: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        for a in self.params.values():
            a.setflags(write=False)

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.columns)

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self, X)


def _matrix(m: TrainedModel, X) -> np.ndarray:
    if isinstance(X, Dataset):
        if X.fingerprint != m.fingerprint:
            raise SchemaMismatch(f"dataset schema {X.fingerprint} != model schema {m.fingerprint}")
        X = X.X
    elif hasattr(X, "columns") and hasattr(X, "to_numpy"):
        if schema_fingerprint([str(c) for c in X.columns]) != m.fingerprint:
            raise SchemaMismatch("frame columns do not match the model schema")
        X = X.to_numpy(dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != len(m.columns):
        raise SchemaMismatch(f"expected {len(m.columns)} features, got {X.shape[1]}")
    return X


def predict_proba(m: TrainedModel, X) -> np.ndarray:
    """P(positive class) for each row of ``X`` (array, DataFrame or Dataset)."""
    X = _matrix(m, X)
    if m.kind == "LR":
        z = _standardize(m, X) @ m.params["weights"] + m.params["bias"][0]
    elif m.kind == "GBDT":
        z = gbdt_raw_score(m.params, X)
    else:
        z = mlp_forward(m.params, _standardize(m, X))[0]
    return sigmoid(z)


def _standardize(m: TrainedModel, X: np.ndarray) -> np.ndarray:
    return (X - m.params["mean"]) / m.params["scale"]


# ---------------------------------------------------------------- logistic regression


def _lr_loss_grad(w, Xa, y, l2):
    p = sigmoid(Xa @ w)
    reg = np.r_[w[:-1], 0.0]
    loss = log_loss(y, p) + 0.5 * l2 * float(reg @ reg)
    grad = Xa.T @ (p - y) / len(y) + l2 * reg
    return loss, grad


def _top_eigenvalue(A: np.ndarray, iters: int = 100) -> float:
    """Largest eigenvalue of A^T A / n by power iteration from a fixed start."""
    v = np.ones(A.shape[1]) / np.sqrt(A.shape[1])
    lam = 0.0
    for _ in range(iters):
        u = A.T @ (A @ v) / len(A)
        lam = float(np.linalg.norm(u))
        if lam == 0:
            return 0.0
        v = u / lam
    return lam


def _train_lr(X, y, p: LRParams, seed: int) -> tuple[dict, dict]:
    scaler = Standardizer.fit(X)
    Xa = np.hstack([scaler.transform(X), np.ones((len(X), 1))])
    lipschitz = 0.25 * _top_eigenvalue(Xa) * 1.01 + p.l2
    step = 1.0 / lipschitz
    w = np.zeros(Xa.shape[1])
    w[-1] = _base_logit(y)
    # Nesterov-accelerated batch gradient descent with gradient-based restart.
    v, t = w.copy(), 1.0
    loss, grad = _lr_loss_grad(w, Xa, y, p.l2)
    it = 0
    for it in range(1, p.max_iter + 1):
        _, gv = _lr_loss_grad(v, Xa, y, p.l2)
        w_next = v - step * gv
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        if gv @ (w_next - w) > 0:
            v, t = w_next.copy(), 1.0
        else:
            v = w_next + ((t - 1) / t_next) * (w_next - w)
            t = t_next
        w = w_next
        loss, grad = _lr_loss_grad(w, Xa, y, p.l2)
        if not np.isfinite(loss):
            raise TrainingError(f"LR loss became non-finite at iteration {it}")
        if np.linalg.norm(grad) < p.tol:
            break
    params = {
        "weights": w[:-1].copy(), "bias": np.array([w[-1]]),
        "mean": scaler.mean, "scale": scaler.scale,
    }
    return params, {"iterations": it, "final_loss": loss, "grad_norm": float(np.linalg.norm(grad))}


# ---------------------------------------------------------------- gradient boosting


def bin_edges(X: np.ndarray, max_bins: int) -> list[np.ndarray]:
    """Candidate thresholds per feature; a split sends ``x <= edge`` left."""
    edges = []
    for j in range(X.shape[1]):
        u = np.unique(X[:, j])
        if len(u) > max_bins:
            u = np.unique(np.quantile(X[:, j], np.linspace(0, 1, max_bins + 1)))
        edges.append(u[:-1])
    return edges


def _bin(X: np.ndarray, edges: Sequence[np.ndarray]) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.int32)
    for j, e in enumerate(edges):
        out[:, j] = np.searchsorted(e, X[:, j], side="left")
    return out


class _BinnedMatrix:
    """Binned features stored as the entries that differ from each feature's most common bin.

    Histograms are built from those entries only; the common bin's totals
    follow by subtraction from the node totals.
    """

    def __init__(self, X: np.ndarray, max_bins: int):
        self.edges = bin_edges(X, max_bins)
        self.Xb = _bin(X, self.edges)
        n, d = self.Xb.shape
        self.n_bins = np.array([len(e) + 1 for e in self.edges], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.n_bins)[:-1]]).astype(np.int64)
        self.total_bins = int(self.n_bins.sum())
        self.default_bin = np.array([np.bincount(self.Xb[:, j]).argmax() for j in range(d)], dtype=np.int64)
        rows, cols = np.nonzero(self.Xb != self.default_bin[None, :])
        self.entry_row = rows.astype(np.int64)
        self.entry_bin = self.offsets[cols] + self.Xb[rows, cols]
        self.default_global = self.offsets + self.default_bin
        self.feature_of_bin = np.repeat(np.arange(d), self.n_bins)
        self.first_bin = self.offsets[self.feature_of_bin]
        # Last bin of each feature is not a split point (everything would go left).
        self.valid = np.ones(self.total_bins, dtype=bool)
        self.valid[self.offsets + self.n_bins - 1] = False

    def histograms(self, row_slot: np.ndarray, n_slots: int, g: np.ndarray, h: np.ndarray):
        """(S, total_bins) gradient, hessian and count histograms for every active node."""
        slot = row_slot[self.entry_row]
        keep = slot >= 0
        rows = self.entry_row[keep]
        key = slot[keep] * self.total_bins + self.entry_bin[keep]
        size = n_slots * self.total_bins
        shape = (n_slots, self.total_bins)
        hg = np.bincount(key, weights=g[rows], minlength=size).reshape(shape)
        hh = np.bincount(key, weights=h[rows], minlength=size).reshape(shape)
        hc = np.bincount(key, minlength=size).reshape(shape).astype(float)
        active = row_slot >= 0
        for hist, w in ((hg, g), (hh, h), (hc, np.ones_like(g))):
            node_tot = np.bincount(row_slot[active], weights=w[active], minlength=n_slots)
            feat_tot = np.add.reduceat(hist, self.offsets, axis=1)
            hist[:, self.default_global] += node_tot[:, None] - feat_tot
        return hg, hh, hc


def _grow_tree(B: _BinnedMatrix, g: np.ndarray, h: np.ndarray, p: GBDTParams):
    """Grow one depth-limited tree level by level on Newton statistics.

    Returns (feature, threshold, left, right, value) node lists and the
    leaf value reached by every training row.
    """
    n = len(g)
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    value = [0.0]
    node_of_row = np.zeros(n, dtype=np.int64)
    level = [0]
    for depth in range(p.max_depth + 1):
        G = np.bincount(node_of_row, weights=g, minlength=len(value))
        H = np.bincount(node_of_row, weights=h, minlength=len(value))
        C = np.bincount(node_of_row, minlength=len(value))
        for node in level:
            value[node] = -G[node] / (H[node] + p.l2)
        if depth == p.max_depth:
            break
        active = [nd for nd in level if C[nd] >= 2 * p.min_samples_leaf]
        if not active:
            break
        slot_of_node = np.full(len(value), -1, dtype=np.int64)
        slot_of_node[active] = np.arange(len(active))
        row_slot = slot_of_node[node_of_row]
        hg, hh, hc = B.histograms(row_slot, len(active), g, h)
        cg, ch, cc = np.cumsum(hg, axis=1), np.cumsum(hh, axis=1), np.cumsum(hc, axis=1)
        base = B.first_bin - 1
        has_base = base >= 0
        safe = np.maximum(base, 0)

        def within(c):
            return c - np.where(has_base[None, :], c[:, safe], 0.0)

        GL, HL, CL = within(cg), within(ch), within(cc)
        Gn, Hn, Cn = G[active][:, None], H[active][:, None], C[active][:, None]
        GR, HR, CR = Gn - GL, Hn - HL, Cn - CL
        gain = GL**2 / (HL + p.l2) + GR**2 / (HR + p.l2) - Gn**2 / (Hn + p.l2)
        ok = B.valid[None, :] & (CL >= p.min_samples_leaf) & (CR >= p.min_samples_leaf)
        gain = np.where(ok, gain, -np.inf)
        best = np.argmax(gain, axis=1)
        next_level = []
        for s, node in enumerate(active):
            b_glob = int(best[s])
            if not np.isfinite(gain[s, b_glob]) or gain[s, b_glob] <= 1e-12:
                continue
            j = int(B.feature_of_bin[b_glob])
            b = b_glob - int(B.offsets[j])
            rows = np.flatnonzero(node_of_row == node)
            go_left = B.Xb[rows, j] <= b
            lnode, rnode = len(value), len(value) + 1
            for _ in range(2):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
            feature[node], threshold[node] = j, float(B.edges[j][b])
            left[node], right[node] = lnode, rnode
            node_of_row[rows[go_left]] = lnode
            node_of_row[rows[~go_left]] = rnode
            next_level += [lnode, rnode]
        if not next_level:
            break
        level = next_level
    leaf = np.asarray(value)[node_of_row]
    return (feature, threshold, left, right, value), leaf


def _train_gbdt(X, y, p: GBDTParams, seed: int) -> tuple[dict, dict]:
    n, d = X.shape
    B = _BinnedMatrix(X, p.max_bins)
    init = _base_logit(y)
    F = np.full(n, init)
    max_nodes = 2 ** (p.max_depth + 1) - 1
    shape = (p.n_trees, max_nodes)
    arrays = {
        "feature": np.full(shape, -1, dtype=np.int32),
        "threshold": np.zeros(shape),
        "left": np.full(shape, -1, dtype=np.int32),
        "right": np.full(shape, -1, dtype=np.int32),
        "value": np.zeros(shape),
    }
    losses = [log_loss(y, sigmoid(F))]
    for t in range(p.n_trees):
        prob = sigmoid(F)
        g, h = prob - y, prob * (1 - prob)
        nodes, leaf = _grow_tree(B, g, h, p)
        for name, vals in zip(("feature", "threshold", "left", "right", "value"), nodes):
            arrays[name][t, : len(vals)] = vals
        F = F + p.learning_rate * leaf
        losses.append(log_loss(y, sigmoid(F)))
        if not np.isfinite(losses[-1]):
            raise TrainingError(f"GBDT loss became non-finite at round {t}")
    params = {"init": np.array([init]), "learning_rate": np.array([p.learning_rate]), **arrays}
    return params, {"train_loss": losses}


def gbdt_raw_score(params: Mapping[str, np.ndarray], X: np.ndarray) -> np.ndarray:
    n = len(X)
    F = np.full(n, float(params["init"][0]))
    lr = float(params["learning_rate"][0])
    feature, threshold = params["feature"], params["threshold"]
    left, right, value = params["left"], params["right"], params["value"]
    rows = np.arange(n)
    for t in range(feature.shape[0]):
        node = np.zeros(n, dtype=np.int64)
        while True:
            f = feature[t, node]
            internal = f >= 0
            if not internal.any():
                break
            x = X[rows[internal], f[internal]]
            nxt = np.where(x <= threshold[t, node[internal]], left[t, node[internal]], right[t, node[internal]])
            node[internal] = nxt
        F += lr * value[t, node]
    return F


# ---------------------------------------------------------------- multilayer perceptron


def mlp_forward(params: Mapping[str, np.ndarray], Z: np.ndarray):
    pre = Z @ params["W1"] + params["b1"]
    act = np.maximum(pre, 0.0)
    out = act @ params["w2"] + params["b2"][0]
    return out, pre, act


def mlp_loss_and_grad(params: Mapping[str, np.ndarray], Z: np.ndarray, y: np.ndarray, l2: float = 0.0):
    """Mean cross-entropy (+ L2 on weights) and its gradient for every parameter."""
    out, pre, act = mlp_forward(params, Z)
    p = sigmoid(out)
    n = len(y)
    # log(1 + e^z) - y z, written stably.
    loss = float(np.mean(np.logaddexp(0.0, out) - y * out))
    loss += 0.5 * l2 * float((params["W1"] ** 2).sum() + (params["w2"] ** 2).sum())
    dout = (p - y) / n
    grads = {
        "w2": act.T @ dout + l2 * params["w2"],
        "b2": np.array([dout.sum()]),
    }
    dpre = np.outer(dout, params["w2"]) * (pre > 0)
    grads["W1"] = Z.T @ dpre + l2 * params["W1"]
    grads["b1"] = dpre.sum(axis=0)
    return loss, grads


def mlp_init(n_features: int, hidden: int, rng: np.random.Generator, base_logit: float = 0.0) -> dict:
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0 / max(n_features, 1)), size=(n_features, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.normal(0.0, np.sqrt(1.0 / hidden), size=hidden),
        "b2": np.array([base_logit]),
    }


def _train_mlp(X, y, p: MLPParams, seed: int) -> tuple[dict, dict]:
    rng = np.random.default_rng(seed)
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    params = mlp_init(Z.shape[1], p.hidden, rng, _base_logit(y))
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    losses = []
    n = len(y)
    for epoch in range(p.epochs):
        order = rng.permutation(n)
        for start in range(0, n, p.batch_size):
            batch = order[start: start + p.batch_size]
            loss, grads = mlp_loss_and_grad(params, Z[batch], y[batch], p.l2)
            if not np.isfinite(loss):
                raise TrainingError(f"MLP loss became non-finite in epoch {epoch}")
            for k in params:
                velocity[k] = p.momentum * velocity[k] - p.learning_rate * grads[k]
                params[k] = params[k] + velocity[k]
        losses.append(mlp_loss_and_grad(params, Z, y, p.l2)[0])
    params.update(mean=scaler.mean, scale=scaler.scale)
    return params, {"epoch_loss": losses}


# ---------------------------------------------------------------- public entry points


def make_hyper(kind: str, hyper: Any = None):
    if hyper is None:
        return DEFAULT_HYPER[kind]
    if isinstance(hyper, Mapping):
        return _HYPER_TYPES[kind](**hyper)
    return hyper


_TRAINERS = {"LR": _train_lr, "GBDT": _train_gbdt, "MLP": _train_mlp}


def train_classifier(kind: str, train: Dataset, hyper: Any = None, seed: int = 0) -> TrainedModel:
    """Fit a model of ``kind`` (LR, GBDT or MLP) on ``train``.

    LR and MLP standardise features with statistics from ``train``; GBDT
    uses the raw values. Identical data, hyperparameters and seed give
    bit-identical parameters.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    if len(train) == 0:
        raise TrainingError("empty training set")
    hp = make_hyper(kind, hyper)
    X = np.asarray(train.X, dtype=float)
    y = np.asarray(train.y, dtype=float)
    params, info = _TRAINERS[kind](X, y, hp, seed)
    return TrainedModel(kind, params, tuple(train.columns), seed, asdict(hp), info)


# ---------------------------------------------------------------- serialisation


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def model_to_bytes(m: TrainedModel, tool_version: str = "") -> bytes:
    """Self-describing binary: magic, header length, JSON header, raw arrays."""
    arrays, blobs, offset = [], [], 0
    for name in sorted(m.params):
        a = np.ascontiguousarray(m.params[name])
        dtype = a.dtype.newbyteorder("<").str
        raw = a.astype(dtype, copy=False).tobytes()
        arrays.append({"name": name, "dtype": dtype, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "tool_version": tool_version,
        "kind": m.kind,
        "seed": m.seed,
        "columns": list(m.columns),
        "schema_fingerprint": m.fingerprint,
        "hyper": _jsonable(m.hyper),
        "info": _jsonable(m.info),
        "arrays": arrays,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return MODEL_MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + b"".join(blobs)


def model_from_bytes(data: bytes) -> TrainedModel:
    if not data.startswith(MODEL_MAGIC):
        raise ValueError("not a model file")
    pos = len(MODEL_MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos: pos + hlen].decode("utf-8"))
    if header["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {header['format_version']}")
    body = pos + hlen
    params = {}
    for spec in header["arrays"]:
        start = body + spec["offset"]
        a = np.frombuffer(data[start: start + spec["nbytes"]], dtype=np.dtype(spec["dtype"]))
        params[spec["name"]] = a.reshape(spec["shape"]).astype(np.dtype(spec["dtype"]).newbyteorder("="))
    m = TrainedModel(header["kind"], params, tuple(header["columns"]), header["seed"], header["hyper"], header["info"])
    if m.fingerprint != header["schema_fingerprint"]:
        raise ValueError("schema fingerprint does not match the stored columns")
    return m


def save_model(m: TrainedModel, path: str | Path, tool_version: str = "") -> None:
    from .._util import atomic_write_bytes

    atomic_write_bytes(path, model_to_bytes(m, tool_version))


def load_model(path: str | Path) -> TrainedModel:
    return model_from_bytes(Path(path).read_bytes())
