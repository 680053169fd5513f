"""Trainable graph filter: learned hop weights, an MLP head, and an Adam loop.

The basis is precomputed once and frozen; only the hop weight vector and
the MLP parameters train. Everything is plain numpy with hand-written
gradients so runs are bit-reproducible for a fixed seed and the analytic
gradients can be checked against central finite differences.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .basis import (
    HETEROPHILY,
    HOMOPHILY,
    ORTHONORMAL,
    UNI,
    BasisTensor,
    heterophily_basis,
    homophily_basis,
    orthonormal_basis,
    unibasis,
)
from .graph import NO_SELF_LOOPS, SELF_LOOPS, LabeledDataset, estimate_homophily, propagation_operator
from .rng import stream

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Search ranges used for hyperparameter tuning.
SEARCH_SPACE = {
    "lr": [0.001, 0.005, 0.01, 0.05, 0.1, 0.15, 0.2],
    "hidden": [64, 128, 256],
    "layers": [2, 3, 4, 5, 6],
    "weight_decay": [0.0, 1e-4, 5e-4, 0.001],
    "dropout": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
}


def tau_preset(dataset: str) -> float:
    """Shipped blend-weight preset for a named benchmark dataset."""
    import importlib.resources

    text = importlib.resources.files("unifilter").joinpath("presets.json").read_text()
    presets = {k: v for k, v in json.loads(text).items() if not k.startswith("_")}
    key = dataset.lower()
    if key not in presets:
        raise KeyError(f"no tau preset for {dataset!r}; known: {sorted(presets)}")
    return float(presets[key])


@dataclass
class TrainConfig:
    """Training settings. Defaults follow the standard protocol: 10 hops,
    Adam, early stopping with a patience of 200 epochs."""

    hops: int = 10
    tau: float = 0.5
    lr: float = 0.01
    weight_decay: float = 0.0
    hidden: int = 64
    layers: int = 2
    dropout: float = 0.0
    patience: int = 200
    max_epochs: int = 1000
    seed: int = 0
    basis: str = UNI
    self_loops: bool = False
    raw_homophily: bool = False
    reortho: bool = False
    h_hat: float | None = None

    def __post_init__(self) -> None:
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.hops < 0:
            raise ValueError("hops must be >= 0")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not 2 <= self.layers <= 6:
            raise ValueError("layers must lie in [2, 6]")
        if min(self.lr, self.weight_decay, self.dropout) < 0:
            raise ValueError("rates must be >= 0")
        if self.dropout >= 1.0:
            raise ValueError("dropout must be < 1")
        if self.basis not in (UNI, HOMOPHILY, HETEROPHILY, ORTHONORMAL):
            raise ValueError(f"unknown basis kind {self.basis!r}")


@dataclass
class FilterModel:
    """Hop weight vector plus affine layers with ReLU between them."""

    w: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout: float
    num_classes: int

    def parameters(self) -> list[np.ndarray]:
        return [self.w, *self.weights, *self.biases]

    def copy(self) -> "FilterModel":
        return FilterModel(
            w=self.w.copy(),
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
            dropout=self.dropout,
            num_classes=self.num_classes,
        )


def init_filter_model(
    hops: int,
    in_dim: int,
    hidden: int,
    layers: int,
    num_classes: int,
    dropout: float,
    rng: np.random.Generator,
) -> FilterModel:
    """Uniform hop weights, symmetric fan-in uniform affine weights, zero bias."""
    if layers < 1:
        raise ValueError("need at least one affine layer")
    dims = [in_dim] + [hidden] * (layers - 1) + [num_classes]
    weights, biases = [], []
    for din, dout in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(din)
        weights.append(rng.uniform(-bound, bound, size=(din, dout)))
        biases.append(np.zeros(dout))
    w = np.full(hops + 1, 1.0 / (hops + 1))
    return FilterModel(w=w, weights=weights, biases=biases, dropout=dropout, num_classes=num_classes)


def combine_hops(model: FilterModel, basis: BasisTensor) -> np.ndarray:
    """Weighted sum of hop matrices; linear in the hop weights."""
    if basis.matrices.shape[0] != model.w.shape[0]:
        raise ValueError(
            f"basis has {basis.matrices.shape[0]} hop matrices, model expects {model.w.shape[0]}"
        )
    if basis.columns != model.weights[0].shape[0]:
        raise ValueError(
            f"basis has {basis.columns} columns, first layer expects {model.weights[0].shape[0]}"
        )
    return np.tensordot(model.w, basis.matrices, axes=(0, 0))


def _forward_pass(
    model: FilterModel,
    basis: BasisTensor,
    training: bool,
    rng: np.random.Generator | None,
):
    Z = combine_hops(model, basis)
    nlayers = len(model.weights)
    inputs: list[np.ndarray] = []
    masks: list[np.ndarray | None] = []
    pre: list[np.ndarray] = []
    act = Z
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        mask = None
        if training and model.dropout > 0.0 and i < nlayers - 1:
            if rng is None:
                raise ValueError("dropout needs an RNG in training mode")
            keep = 1.0 - model.dropout
            mask = (rng.random(act.shape) < keep) / keep
            act = act * mask
        inputs.append(act)
        masks.append(mask)
        h = act @ W + b
        if i < nlayers - 1:
            pre.append(h)
            act = np.maximum(h, 0.0)
    return h, {"Z": Z, "inputs": inputs, "masks": masks, "pre": pre}


def forward(
    model: FilterModel,
    basis: BasisTensor,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Logits for every node; softmax lives inside the loss only."""
    logits, _ = _forward_pass(model, basis, training, rng)
    return logits


def _mask_indices(mask: np.ndarray, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise ValueError("empty mask")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError("mask index out of range")
    return idx


def loss(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Mean negative log-softmax of the true class over the masked nodes."""
    idx = _mask_indices(mask, logits.shape[0])
    sub = logits[idx]
    sub = sub - sub.max(axis=1, keepdims=True)
    logz = np.log(np.exp(sub).sum(axis=1))
    true = sub[np.arange(idx.size), np.asarray(labels)[idx]]
    return float(np.mean(logz - true))


def _loss_and_grads(
    model: FilterModel,
    basis: BasisTensor,
    labels: np.ndarray,
    mask: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
):
    logits, cache = _forward_pass(model, basis, training, rng)
    idx = _mask_indices(mask, logits.shape[0])
    sub = logits[idx]
    sub = sub - sub.max(axis=1, keepdims=True)
    expv = np.exp(sub)
    probs = expv / expv.sum(axis=1, keepdims=True)
    y = np.asarray(labels)[idx]
    lval = float(np.mean(np.log(expv.sum(axis=1)) - sub[np.arange(idx.size), y]))

    gout = np.zeros_like(logits)
    delta = probs.copy()
    delta[np.arange(idx.size), y] -= 1.0
    gout[idx] = delta / idx.size

    gw_mats: list[np.ndarray] = [None] * len(model.weights)
    gb: list[np.ndarray] = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw_mats[i] = cache["inputs"][i].T @ gout
        gb[i] = gout.sum(axis=0)
        gin = gout @ model.weights[i].T
        if cache["masks"][i] is not None:
            gin = gin * cache["masks"][i]
        if i > 0:
            gout = gin * (cache["pre"][i - 1] > 0.0)
        else:
            dz = gin
    ghops = np.tensordot(basis.matrices, dz, axes=([1, 2], [0, 1]))
    return lval, {"w": ghops, "weights": gw_mats, "biases": gb}


def evaluate(model: FilterModel, basis: BasisTensor, labels: np.ndarray, mask: np.ndarray) -> float:
    """Accuracy of argmax predictions over the mask; ties go to the lowest class id."""
    logits = forward(model, basis)
    idx = _mask_indices(mask, logits.shape[0])
    pred = np.argmax(logits[idx], axis=1)
    return float(np.mean(pred == np.asarray(labels)[idx]))


def gradient_check(
    model: FilterModel,
    basis: BasisTensor,
    labels: np.ndarray,
    mask: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error uses |a - n| / max(|a| + |n|, 1e-6). Dropout is
    disabled; weight decay is an optimizer concern and excluded here.
    """
    _, grads = _loss_and_grads(model, basis, labels, mask, training=False)
    analytic = [grads["w"], *grads["weights"], *grads["biases"]]
    worst = 0.0
    for arr, g in zip(model.parameters(), analytic):
        flat = arr.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss(forward(model, basis), labels, mask)
            flat[i] = orig - step
            down = loss(forward(model, basis), labels, mask)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            rel = abs(gflat[i] - numeric) / max(abs(gflat[i]) + abs(numeric), 1e-6)
            worst = max(worst, rel)
    return worst


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float, weight_decay: float):
        self.lr = lr
        self.wd = weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1 ** self.t
        bc2 = 1.0 - ADAM_BETA2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = g + self.wd * p
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


@dataclass
class TrainReport:
    """Outcome of one training run. Test accuracy is computed exactly once,
    at the best-validation checkpoint."""

    best_val_acc: float
    best_epoch: int
    test_acc: float
    loss_curve: list[tuple[int, float, float]]
    w: np.ndarray
    h_hat: float
    h_hat_fallback: bool
    epochs_run: int

    def to_dict(self) -> dict:
        return {
            "best_val_acc": self.best_val_acc,
            "best_epoch": self.best_epoch,
            "test_acc": self.test_acc,
            "w": [float(x) for x in self.w],
            "h_hat": self.h_hat,
            "h_hat_fallback": self.h_hat_fallback,
            "epochs_run": self.epochs_run,
        }

    def write_curve_csv(self, path: str | Path) -> None:
        lines = ["epoch,train_loss,val_acc"]
        for epoch, tl, va in self.loss_curve:
            lines.append(f"{epoch},{tl!r},{va!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_basis(dataset: LabeledDataset, cfg: TrainConfig, h_hat: float) -> BasisTensor:
    kind = SELF_LOOPS if cfg.self_loops else NO_SELF_LOOPS
    op = propagation_operator(dataset.graph, kind)
    X = dataset.features
    if cfg.basis == UNI:
        return unibasis(
            op, X, cfg.hops, h_hat, cfg.tau,
            reortho=cfg.reortho, normalize_homophily=not cfg.raw_homophily,
        )
    if cfg.basis == HOMOPHILY:
        return homophily_basis(op, X, cfg.hops, normalize=not cfg.raw_homophily)
    if cfg.basis == HETEROPHILY:
        return heterophily_basis(op, X, cfg.hops, h_hat, reortho=cfg.reortho)
    return orthonormal_basis(op, X, cfg.hops, reortho=cfg.reortho)


def train(
    dataset: LabeledDataset,
    cfg: TrainConfig,
    basis: BasisTensor | None = None,
    return_model: bool = False,
):
    """Adam training with early stopping on validation accuracy.

    The homophily estimate comes from the training split only (unless
    overridden in the config). Ties in validation accuracy are broken by
    lower validation loss. Fully deterministic for a fixed seed. With
    `return_model` the report comes paired with the restored best model.
    """
    if dataset.split is None:
        raise ValueError("dataset has no split")
    split = dataset.split
    labels = dataset.labels

    fallback = False
    if cfg.h_hat is not None:
        h_hat = cfg.h_hat
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            h_hat = estimate_homophily(dataset.graph, labels, split.train)
        fallback = any("falling back" in str(w.message) for w in caught)

    if basis is None:
        basis = build_basis(dataset, cfg, h_hat)

    rng_init = stream(cfg.seed, "init")
    rng_drop = stream(cfg.seed, "dropout")
    model = init_filter_model(
        cfg.hops, basis.columns, cfg.hidden, cfg.layers,
        dataset.num_classes, cfg.dropout, rng_init,
    )
    params = model.parameters()
    opt = _Adam(params, cfg.lr, cfg.weight_decay)

    best_acc, best_loss, best_epoch = -1.0, np.inf, -1
    best_params = [p.copy() for p in params]
    curve: list[tuple[int, float, float]] = []
    since_best = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        train_loss, grads = _loss_and_grads(
            model, basis, labels, split.train, training=True, rng=rng_drop
        )
        opt.step(params, [grads["w"], *grads["weights"], *grads["biases"]])

        val_logits = forward(model, basis)
        vidx = _mask_indices(split.val, val_logits.shape[0])
        val_acc = float(np.mean(np.argmax(val_logits[vidx], axis=1) == labels[vidx]))
        val_loss = loss(val_logits, labels, split.val)
        curve.append((epoch, train_loss, val_acc))

        improved_acc = val_acc > best_acc
        if improved_acc or (val_acc == best_acc and val_loss < best_loss):
            best_acc, best_loss, best_epoch = val_acc, val_loss, epoch
            best_params = [p.copy() for p in params]
        # Patience counts epochs without an accuracy improvement; the loss
        # tie-break only selects which checkpoint to keep.
        if improved_acc:
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    for p, bp in zip(params, best_params):
        p[...] = bp
    test_acc = evaluate(model, basis, labels, split.test)
    report = TrainReport(
        best_val_acc=best_acc,
        best_epoch=best_epoch,
        test_acc=test_acc,
        loss_curve=curve,
        w=model.w.copy(),
        h_hat=float(h_hat),
        h_hat_fallback=fallback,
        epochs_run=epoch,
    )
    if return_model:
        return report, model
    return report


def save_checkpoint(model: FilterModel, config: dict, path: str | Path) -> None:
    """JSON checkpoint; floats round-trip exactly through decimal repr."""
    payload = {
        "w": [float(x) for x in model.w],
        "layers": [
            {
                "rows": int(W.shape[0]),
                "cols": int(W.shape[1]),
                "weights": [float(x) for x in W.reshape(-1)],
                "bias": [float(x) for x in b],
            }
            for W, b in zip(model.weights, model.biases)
        ],
        "config": config,
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[FilterModel, dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    weights, biases = [], []
    for layer in payload["layers"]:
        W = np.asarray(layer["weights"], dtype=np.float64).reshape(layer["rows"], layer["cols"])
        weights.append(W)
        biases.append(np.asarray(layer["bias"], dtype=np.float64))
    cfg = payload.get("config", {})
    model = FilterModel(
        w=np.asarray(payload["w"], dtype=np.float64),
        weights=weights,
        biases=biases,
        dropout=float(cfg.get("dropout", 0.0)),
        num_classes=weights[-1].shape[1],
    )
    return model, cfg


def random_search(
    dataset: LabeledDataset,
    base_cfg: TrainConfig,
    trials: int,
    seed: int = 0,
    tau_grid: list[float] | None = None,
) -> tuple[TrainConfig, TrainReport, list[tuple[TrainConfig, TrainReport]]]:
    """Random search over the standard ranges; best trial by validation accuracy."""
    rng = stream(seed, "hyper-search")
    results: list[tuple[TrainConfig, TrainReport]] = []
    best: tuple[TrainConfig, TrainReport] | None = None
    for _ in range(trials):
        cfg = replace(
            base_cfg,
            lr=float(rng.choice(SEARCH_SPACE["lr"])),
            hidden=int(rng.choice(SEARCH_SPACE["hidden"])),
            layers=int(rng.choice(SEARCH_SPACE["layers"])),
            weight_decay=float(rng.choice(SEARCH_SPACE["weight_decay"])),
            dropout=float(rng.choice(SEARCH_SPACE["dropout"])),
        )
        if tau_grid is not None:
            cfg = replace(cfg, tau=float(rng.choice(tau_grid)))
        report = train(dataset, cfg)
        results.append((cfg, report))
        if best is None or report.best_val_acc > best[1].best_val_acc:
            best = (cfg, report)
    assert best is not None
    return best[0], best[1], results
