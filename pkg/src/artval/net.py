"""Multi-modal feedforward network with explicit forward/backward passes.

Two parallel encoders, a tabular projection and an affine image-embedding
projection, are concatenated, layer-normalized, and fed to a shared head
(128 -> 64 -> 32 -> 1 with batchnorm/ReLU/dropout). Trained with Adam on
MSE over log prices, or BCE for the sold/unsold classifier variant, which
uses a deliberately shallower head (fused -> 32 -> 1 logit).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class NetError(ValueError):
    pass


class Param:
    __slots__ = ("value", "grad", "m", "v")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)


class Affine:
    def __init__(self, n_in, n_out, rng):
        self.W = Param(rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out)))
        self.b = Param(np.zeros(n_out))
        self._x = None

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def forward(self, x, train, rng):
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy):
        self.W.grad += self._x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def forward(self, x, train, rng):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class Dropout:
    """Inverted dropout: activations scaled at train time, identity at eval."""

    def __init__(self, p):
        self.p = p
        self._mask = None

    def params(self):
        return []

    def forward(self, x, train, rng):
        if not train or self.p <= 0.0:
            self._mask = None
            return x
        self._mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class BatchNorm:
    def __init__(self, dim, momentum=0.1, eps=1e-5):
        self.gamma = Param(np.ones(dim))
        self.beta = Param(np.zeros(dim))
        self.momentum = momentum
        self.eps = eps
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self._cache = None

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def forward(self, x, train, rng):
        if train:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mu, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mu) * inv
        self._cache = (x_hat, inv, train)
        return self.gamma.value * x_hat + self.beta.value

    def backward(self, dy):
        x_hat, inv, train = self._cache
        self.gamma.grad += (dy * x_hat).sum(axis=0)
        self.beta.grad += dy.sum(axis=0)
        if not train:
            return dy * self.gamma.value * inv
        n = dy.shape[0]
        dxh = dy * self.gamma.value
        return inv / n * (n * dxh - dxh.sum(axis=0) - x_hat * (dxh * x_hat).sum(axis=0))


class LayerNorm:
    def __init__(self, dim, eps=1e-5):
        self.gamma = Param(np.ones(dim))
        self.beta = Param(np.zeros(dim))
        self.eps = eps
        self._cache = None

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def forward(self, x, train, rng):
        mu = x.mean(axis=1, keepdims=True)
        var = x.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mu) * inv
        self._cache = (x_hat, inv)
        return self.gamma.value * x_hat + self.beta.value

    def backward(self, dy):
        x_hat, inv = self._cache
        self.gamma.grad += (dy * x_hat).sum(axis=0)
        self.beta.grad += dy.sum(axis=0)
        d = dy.shape[1]
        dxh = dy * self.gamma.value
        return inv * (dxh - dxh.mean(axis=1, keepdims=True) - x_hat * (dxh * x_hat).mean(axis=1, keepdims=True))


_LAYER_TYPES = {"Affine": Affine, "ReLU": ReLU, "Dropout": Dropout, "BatchNorm": BatchNorm, "LayerNorm": LayerNorm}


class MultiModalNet:
    """Tabular branch + optional image-projection branch + shared head."""

    def __init__(
        self,
        n_feature: int,
        d_backbone: int = 0,
        d_image: int = 0,
        d_tabular: int = 100,
        dropout_p: float = 0.1,
        input_dropout_p: float = 0.0,
        classifier: bool = False,
        seed: int = 0,
    ):
        if d_image and not d_backbone:
            raise NetError("image branch requires d_backbone")
        self.config = {
            "n_feature": n_feature,
            "d_backbone": d_backbone,
            "d_image": d_image,
            "d_tabular": d_tabular,
            "dropout_p": dropout_p,
            "input_dropout_p": input_dropout_p,
            "classifier": classifier,
        }
        rng = np.random.default_rng(seed)
        self.input_dropout = Dropout(input_dropout_p)
        self.tab_affine = Affine(n_feature, d_tabular, rng)
        self.tab_relu = ReLU()
        self.img_affine = Affine(d_backbone, d_image, rng) if d_image else None
        fused = d_tabular + d_image
        self.fuse_norm = LayerNorm(fused)
        if classifier:
            self.head = [Affine(fused, 32, rng), ReLU(), Affine(32, 1, rng)]
        else:
            self.head = [
                Affine(fused, 128, rng),
                BatchNorm(128),
                ReLU(),
                Dropout(dropout_p),
                Affine(128, 64, rng),
                BatchNorm(64),
                ReLU(),
                Affine(64, 32, rng),
                BatchNorm(32),
                ReLU(),
                Affine(32, 1, rng),
            ]
        self._fused = None

    # -- parameter registry -------------------------------------------------
    def _modules(self):
        mods = [("tab_affine", self.tab_affine)]
        if self.img_affine is not None:
            mods.append(("img_affine", self.img_affine))
        mods.append(("fuse_norm", self.fuse_norm))
        mods += [(f"head.{i}", layer) for i, layer in enumerate(self.head)]
        return mods

    def named_params(self):
        out = []
        for mod_name, mod in self._modules():
            for p_name, p in mod.params():
                out.append((f"{mod_name}.{p_name}", p))
        return out

    def zero_grad(self):
        for _, p in self.named_params():
            p.grad[:] = 0.0

    # -- forward / backward -------------------------------------------------
    def forward(self, tab_x, image_e=None, train=False, rng=None):
        tab_x = np.atleast_2d(np.asarray(tab_x, dtype=float))
        if tab_x.shape[1] != self.config["n_feature"]:
            raise NetError(
                f"tabular branch expects {self.config['n_feature']} features, got {tab_x.shape[1]}"
            )
        rng = rng or np.random.default_rng(0)
        t = self.input_dropout.forward(tab_x, train, rng)
        t = self.tab_relu.forward(self.tab_affine.forward(t, train, rng), train, rng)
        if self.img_affine is not None:
            if image_e is None:
                raise NetError("image branch enabled but no embeddings given")
            image_e = np.atleast_2d(np.asarray(image_e, dtype=float))
            if image_e.shape[1] != self.config["d_backbone"]:
                raise NetError(
                    f"image branch expects {self.config['d_backbone']}-dim embeddings, "
                    f"got {image_e.shape[1]}"
                )
            i = self.img_affine.forward(image_e, train, rng)
            z = np.concatenate([t, i], axis=1)
        else:
            z = t
        z = self.fuse_norm.forward(z, train, rng)
        self._fused = z
        for layer in self.head:
            z = layer.forward(z, train, rng)
        return z[:, 0]

    def backward(self, dy):
        dz = np.asarray(dy, dtype=float)[:, None]
        for layer in reversed(self.head):
            dz = layer.backward(dz)
        dz = self.fuse_norm.backward(dz)
        d_tab = self.config["d_tabular"]
        dt, di = dz[:, :d_tab], dz[:, d_tab:]
        if self.img_affine is not None:
            self.img_affine.backward(di)
        dt = self.tab_affine.backward(self.tab_relu.backward(dt))
        return self.input_dropout.backward(dt)

    def extract_fused_embedding(self, tab_x, image_e=None):
        """Post-fusion (pre-head) vector plus the image-branch output."""
        self.forward(tab_x, image_e, train=False)
        fused = self.fused_vector()
        img_part = fused[:, self.config["d_tabular"]:] if self.img_affine is not None else None
        return fused, img_part

    def fused_vector(self):
        return self._fused

    # -- checkpoint ---------------------------------------------------------
    MAGIC = b"MMNET"

    def save(self, path):
        params = self.named_params()
        manifest = {
            "config": self.config,
            "params": [{"name": n, "shape": list(p.value.shape)} for n, p in params],
            "running_stats": [
                {"name": f"{mn}.{sn}", "shape": list(getattr(m, sn).shape)}
                for mn, m in self._modules()
                if isinstance(m, BatchNorm)
                for sn in ("running_mean", "running_var")
            ],
        }
        blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<II", 1, len(blob)))
            fh.write(blob)
            for _, p in params:
                fh.write(p.value.astype("<f4").tobytes())
            for mn, m in self._modules():
                if isinstance(m, BatchNorm):
                    fh.write(m.running_mean.astype("<f4").tobytes())
                    fh.write(m.running_var.astype("<f4").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(5) != cls.MAGIC:
                raise NetError(f"{path}: bad checkpoint magic")
            version, mlen = struct.unpack("<II", fh.read(8))
            if version != 1:
                raise NetError(f"{path}: unsupported checkpoint version {version}")
            manifest = json.loads(fh.read(mlen).decode("utf-8"))
            net = cls(**manifest["config"])
            for entry, (name, p) in zip(manifest["params"], net.named_params()):
                if entry["name"] != name:
                    raise NetError(f"{path}: manifest order mismatch at {entry['name']}")
                count = int(np.prod(entry["shape"])) if entry["shape"] else 1
                raw = fh.read(count * 4)
                if len(raw) != count * 4:
                    raise NetError(f"{path}: truncated checkpoint at {name}")
                p.value = np.frombuffer(raw, dtype="<f4").astype(float).reshape(entry["shape"])
                p.grad = np.zeros_like(p.value)
                p.m = np.zeros_like(p.value)
                p.v = np.zeros_like(p.value)
            for entry in manifest["running_stats"]:
                mod_name, stat = entry["name"].rsplit(".", 1)
                mod = dict(net._modules())[mod_name]
                count = int(np.prod(entry["shape"]))
                raw = fh.read(count * 4)
                if len(raw) != count * 4:
                    raise NetError(f"{path}: truncated running stats at {entry['name']}")
                setattr(mod, stat, np.frombuffer(raw, dtype="<f4").astype(float))
        return net


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [p for _, p in params]
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p in self.params:
            p.m = self.beta1 * p.m + (1 - self.beta1) * p.grad
            p.v = self.beta2 * p.v + (1 - self.beta2) * p.grad**2
            p.value -= self.lr * (p.m / b1c) / (np.sqrt(p.v / b2c) + self.eps)


def mse_loss(pred, y):
    diff = pred - y
    return float(np.mean(diff**2)), 2.0 * diff / len(y)


def bce_loss(logit, y):
    """Binary cross-entropy on logits, numerically stable."""
    z = np.clip(logit, -500, 500)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    grad = (1.0 / (1.0 + np.exp(-z)) - y) / len(y)
    return loss, grad


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 50
    dropout_p: float = 0.1
    input_dropout_p: float = 0.0
    seed: int = 0
    loss: str = "mse_logprice"  # mse_logprice | bce
    d_image: int = 0

    def __post_init__(self):
        if self.loss not in ("mse_logprice", "bce"):
            raise NetError(f"unknown loss {self.loss!r}")
        if min(self.learning_rate, self.batch_size, self.epochs) <= 0:
            raise NetError("learning_rate, batch_size, epochs must be positive")


@dataclass
class TrainResult:
    net: MultiModalNet
    train_curve: list = field(default_factory=list)
    val_curve: list = field(default_factory=list)
    best_epoch: int = -1
    diverged: bool = False


def backward_and_step(net, opt, tab_x, y, image_e=None, loss="mse_logprice", rng=None):
    """One optimization step on a batch; returns the batch loss."""
    net.zero_grad()
    pred = net.forward(tab_x, image_e, train=True, rng=rng)
    loss_fn = bce_loss if loss == "bce" else mse_loss
    value, grad = loss_fn(pred, np.asarray(y, dtype=float))
    if not np.isfinite(value):
        bad = int(np.flatnonzero(~np.isfinite(pred))[0]) if not np.all(np.isfinite(pred)) else -1
        raise NetError(f"non-finite loss (first bad batch index {bad})")
    net.backward(grad)
    opt.step()
    return value


def _validation_mask(n, years, frac=0.1):
    if years is not None:
        years = np.asarray(years)
        uniq = np.unique(years)
        cut = uniq[int(np.ceil(len(uniq) * (1 - frac))) - 1]
        mask = years > cut
        if mask.any() and not mask.all():
            return mask
    mask = np.zeros(n, dtype=bool)
    mask[int(n * (1 - frac)):] = True
    return mask


def train(net, tab_x, y, config: TrainConfig, image_e=None, years=None) -> TrainResult:
    """Minibatch Adam with per-epoch seeded shuffles and best-epoch weights.

    Validation is the final tenth of training-period years (row tail as a
    fallback); the returned net carries the weights of the epoch with the
    lowest validation loss.
    """
    tab_x = np.asarray(tab_x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    val = _validation_mask(n, years)
    tr = ~val
    opt = Adam(net.named_params(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    loss_name = config.loss if config.loss == "bce" else "mse"
    loss_fn = bce_loss if config.loss == "bce" else mse_loss

    Xtr, ytr = tab_x[tr], y[tr]
    Etr = image_e[tr] if image_e is not None else None

    # warm-start the output bias at the target mean (base-rate logit for BCE)
    # so optimization spends its steps on structure, not the intercept
    final = net.head[-1]
    if isinstance(final, Affine) and not np.any(final.b.value):
        if config.loss == "bce":
            p = float(np.clip(ytr.mean(), 1e-3, 1 - 1e-3))
            final.b.value[:] = np.log(p / (1 - p))
        else:
            final.b.value[:] = ytr.mean()
    Xva, yva = tab_x[val], y[val]
    Eva = image_e[val] if image_e is not None else None

    result = TrainResult(net=net)
    best_val = np.inf
    best_state = None
    initial_loss = None
    bad_epochs = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(ytr))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue  # batchnorm needs at least two rows
            eb = Etr[idx] if Etr is not None else None
            epoch_loss += backward_and_step(
                net, opt, Xtr[idx], ytr[idx], eb, loss="bce" if loss_name == "bce" else "mse_logprice", rng=rng
            )
            n_batches += 1
        epoch_loss /= max(n_batches, 1)
        val_pred = net.forward(Xva, Eva, train=False)
        val_loss, _ = loss_fn(val_pred, yva)
        result.train_curve.append(epoch_loss)
        result.val_curve.append(val_loss)
        if initial_loss is None:
            initial_loss = epoch_loss
        if val_loss < best_val:
            best_val = val_loss
            result.best_epoch = epoch
            best_state = [(p.value.copy()) for _, p in net.named_params()]
            best_running = [
                (m.running_mean.copy(), m.running_var.copy())
                for _, m in net._modules()
                if isinstance(m, BatchNorm)
            ]
        bad_epochs = bad_epochs + 1 if epoch_loss > 10 * initial_loss else 0
        if bad_epochs >= 3:
            result.diverged = True
            break
    if best_state is not None:
        for (name, p), value in zip(net.named_params(), best_state):
            p.value = value
        bns = [m for _, m in net._modules() if isinstance(m, BatchNorm)]
        for m, (rm, rv) in zip(bns, best_running):
            m.running_mean, m.running_var = rm, rv
    return result
