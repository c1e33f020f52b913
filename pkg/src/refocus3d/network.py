"""Minimal point-cloud classifier: shared per-point MLP, max-pool, dense head.

Architecture: per-point 3 -> 64 -> 128 -> 256 with ReLU, column-wise max over
points, head 256 -> 128 -> C with ReLU. All parameters are float64 and every
gradient is written out by hand, so training has no framework dependency and
the math can be checked against finite differences.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import NumericOverflowError
from .geometry import Dataset, PointCloud

POINT_DIMS = (3, 64, 128, 256)
HEAD_HIDDEN = 128

_CKPT_MAGIC = b"RFNN"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class EncoderParams:
    """Layer parameters: ``layers`` is a tuple of (W, b) pairs, per-point
    layers first, head layers after ``n_point_layers``. Updates are
    functional; arrays are treated as read-only once wrapped."""

    layers: tuple
    n_point_layers: int = 3

    @property
    def point_layers(self):
        return self.layers[: self.n_point_layers]

    @property
    def head_layers(self):
        return self.layers[self.n_point_layers :]

    @property
    def feature_dim(self):
        return self.layers[self.n_point_layers - 1][0].shape[1]

    @property
    def n_classes(self):
        return self.layers[-1][0].shape[1]

    def all_finite(self):
        return all(np.isfinite(w).all() and np.isfinite(b).all() for w, b in self.layers)


@dataclass(frozen=True)
class ForwardTrace:
    """One inference pass: the pre-pooling feature matrix plus everything
    derived from it."""

    per_point_features: np.ndarray  # (N, K), post-activation
    global_feature: np.ndarray  # (K,) column maxima
    argmax_indices: np.ndarray  # (K,) point index attaining each maximum
    logits: np.ndarray  # (C,)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    epochs: int = 60
    batch_size: int = 32
    cosine_annealing: bool = True
    seed: int = 0
    augment: bool = False
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("learning rate, epochs and batch size must be positive")


def init_params(n_classes: int, seed: int, zero_last: bool = False) -> EncoderParams:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.

    With ``zero_last`` the classifier output layer starts at zero instead,
    making the initial loss exactly ln(C); the default keeps every layer
    random so gradients flow from the first step.
    """
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.Generator(np.random.PCG64(seed))
    dims = list(zip(POINT_DIMS[:-1], POINT_DIMS[1:]))
    dims += [(POINT_DIMS[-1], HEAD_HIDDEN), (HEAD_HIDDEN, n_classes)]
    layers = []
    for i, (fan_in, fan_out) in enumerate(dims):
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        if zero_last and i == len(dims) - 1:
            w = np.zeros_like(w)
            b = np.zeros_like(b)
        layers.append((w, b))
    return EncoderParams(tuple(layers))


def _check_finite(arr, layer_name):
    if not np.isfinite(arr).all():
        raise NumericOverflowError(f"non-finite activation in {layer_name}")


def head_logits(params: EncoderParams, feature: np.ndarray) -> np.ndarray:
    """Apply the classification head to a (possibly masked) global feature."""
    x = np.asarray(feature, dtype=np.float64)
    (w4, b4), (w5, b5) = params.head_layers
    hidden = np.maximum(x @ w4 + b4, 0.0)
    return hidden @ w5 + b5


def point_features(params: EncoderParams, points: np.ndarray,
                   check: bool = False) -> np.ndarray:
    """Per-point feature rows (N, K) after the shared MLP.

    The two hidden layers carry ReLU activations; the K-wide feature layer is
    linear, so every pooled column has a genuine directional winner.
    """
    x = np.asarray(points, dtype=np.float64)
    last = len(params.point_layers) - 1
    for i, (w, b) in enumerate(params.point_layers):
        x = x @ w + b
        if i < last:
            np.maximum(x, 0.0, out=x)
        if check:
            _check_finite(x, f"point_layer_{i + 1}")
    return x


def forward(params: EncoderParams, cloud: PointCloud) -> ForwardTrace:
    """Single-cloud inference pass.

    Raises NumericOverflowError naming the offending layer if an activation
    goes non-finite. Max-pool argmax ties resolve to the lowest point index.
    """
    feats = point_features(params, cloud.points, check=True)
    amax = np.argmax(feats, axis=0)
    gfeat = feats[amax, np.arange(feats.shape[1])]
    logits = head_logits(params, gfeat)
    _check_finite(logits, "head")
    return ForwardTrace(feats, gfeat, amax, logits)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def predict(params: EncoderParams, cloud: PointCloud):
    """(class index, probability vector); argmax ties go to the lowest index."""
    trace = forward(params, cloud)
    probs = softmax(trace.logits)
    return int(np.argmax(probs)), probs


# ---------------------------------------------------------------------------
# training: batched forward/backward over concatenated point rows
# ---------------------------------------------------------------------------


def _loss_and_grads_arrays(params: EncoderParams, point_sets, labels):
    """Mean cross-entropy and exact gradients for a list of point arrays.

    Clouds are concatenated row-wise so the per-point layers run as a handful
    of large matmuls regardless of per-cloud sizes.
    """
    b = len(point_sets)
    counts = [p.shape[0] for p in point_sets]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    stacked = np.concatenate([np.asarray(p, dtype=np.float64) for p in point_sets])
    labels = np.asarray(labels, dtype=np.intp)

    # forward through per-point layers (ReLU on hidden, linear feature layer)
    acts = [stacked]
    x = stacked
    last = len(params.point_layers) - 1
    for i, (w, bias) in enumerate(params.point_layers):
        x = x @ w
        x += bias
        if i < last:
            np.maximum(x, 0.0, out=x)
        acts.append(x)
    feats = x
    k = feats.shape[1]

    cols = np.arange(k)
    gfeat = np.empty((b, k))
    amax_rows = np.empty((b, k), dtype=np.intp)
    for i in range(b):
        seg = feats[offsets[i] : offsets[i + 1]]
        am = np.argmax(seg, axis=0)
        amax_rows[i] = offsets[i] + am
        gfeat[i] = seg[am, cols]

    (w4, b4), (w5, b5) = params.head_layers
    pre_hidden = gfeat @ w4 + b4
    hidden = np.maximum(pre_hidden, 0.0)
    logits = hidden @ w5 + b5

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    losses = log_z - shifted[np.arange(b), labels]
    loss = float(losses.mean())
    if not np.isfinite(loss):
        raise NumericOverflowError("non-finite training loss")

    # backward
    dlogits = np.exp(shifted - log_z[:, None])
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b

    dw5 = hidden.T @ dlogits
    db5 = dlogits.sum(axis=0)
    dhidden = dlogits @ w5.T
    dhidden *= pre_hidden > 0.0
    dw4 = gfeat.T @ dhidden
    db4 = dhidden.sum(axis=0)
    dgfeat = dhidden @ w4.T

    dfeats = np.zeros_like(feats)
    dfeats[amax_rows.ravel(), np.tile(cols, b)] = dgfeat.ravel()

    grads_points = []
    dx = dfeats
    for layer in range(len(params.point_layers) - 1, -1, -1):
        w, _ = params.point_layers[layer]
        if layer < last:  # hidden layers only; the feature layer is linear
            dx *= acts[layer + 1] > 0.0
        grads_points.append((acts[layer].T @ dx, dx.sum(axis=0)))
        if layer > 0:
            dx = dx @ w.T
    grads_points.reverse()

    grads = EncoderParams(tuple(grads_points) + ((dw4, db4), (dw5, db5)),
                          params.n_point_layers)
    return loss, grads


def loss_and_grads(params: EncoderParams, batch):
    """Cross-entropy loss (mean over the batch) and a gradient record with the
    same layer structure as ``params``."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    point_sets = [s.cloud.points for s in batch]
    labels = [s.label for s in batch]
    return _loss_and_grads_arrays(params, point_sets, labels)


def sgd_step(params: EncoderParams, grads: EncoderParams, lr: float) -> EncoderParams:
    layers = tuple((w - lr * dw, b - lr * db)
                   for (w, b), (dw, db) in zip(params.layers, grads.layers))
    return EncoderParams(layers, params.n_point_layers)


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    """Cosine annealing toward zero across the epoch schedule."""
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


def _augment_points(points, rng):
    # anisotropic rescale in [2/3, 3/2] plus translation in [-0.2, 0.2]
    scale = rng.uniform(2.0 / 3.0, 3.0 / 2.0, size=3)
    shift = rng.uniform(-0.2, 0.2, size=3)
    return points * scale + shift


def _child_seed(seed, stream):
    ss = np.random.SeedSequence([seed, stream])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _stratified_holdout(dataset: Dataset, fraction: float, rng):
    by_class = {}
    for idx, s in enumerate(dataset.samples):
        by_class.setdefault(s.label, []).append(idx)
    val_idx = []
    for label in sorted(by_class):
        members = np.array(by_class[label])
        if members.size < 2:
            continue  # never strip a class of all its training samples
        n_val = min(max(1, int(round(fraction * members.size))), members.size - 1)
        picked = rng.choice(members.size, size=n_val, replace=False)
        val_idx.extend(members[picked])
    val_set = set(val_idx)
    train_idx = [i for i in range(len(dataset)) if i not in val_set]
    return train_idx, sorted(val_set)


def _accuracy(params, samples):
    correct = sum(1 for s in samples if predict(params, s.cloud)[0] == s.label)
    return correct / len(samples)


def train(dataset: Dataset, config: TrainConfig, sampler=None, val_samples=None,
          verbose: bool = False) -> EncoderParams:
    """Minibatch gradient descent; returns the best-validation-epoch parameters.

    ``sampler(params, cloud, rng) -> PointCloud`` is applied to every training
    cloud with the current parameters before the gradient step (the refocused
    training hook plugs in here). When ``val_samples`` is None a stratified
    holdout of ``config.val_fraction`` is carved from the training set for
    best-epoch selection. Fully deterministic given ``config.seed``.
    """
    if len({s.label for s in dataset.samples}) < 2:
        raise ValueError("training needs samples from at least 2 classes")
    shuffle_rng = np.random.Generator(np.random.PCG64(_child_seed(config.seed, 1)))
    sampler_rng = np.random.Generator(np.random.PCG64(_child_seed(config.seed, 2)))
    augment_rng = np.random.Generator(np.random.PCG64(_child_seed(config.seed, 3)))
    split_rng = np.random.Generator(np.random.PCG64(_child_seed(config.seed, 4)))

    samples = list(dataset.samples)
    if val_samples is None:
        train_idx, val_idx = _stratified_holdout(dataset, config.val_fraction, split_rng)
        val_samples = [samples[i] for i in val_idx]
        samples = [samples[i] for i in train_idx]
    else:
        val_samples = list(val_samples)

    params = init_params(dataset.n_classes, _child_seed(config.seed, 0))
    best_params, best_acc = params, -1.0
    order = np.arange(len(samples))
    for epoch in range(config.epochs):
        lr = (cosine_lr(config.learning_rate, epoch, config.epochs)
              if config.cosine_annealing else config.learning_rate)
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, order.size, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            point_sets, labels = [], []
            for i in batch_idx:
                sample = samples[i]
                pts = sample.cloud.points.astype(np.float64)
                if config.augment:
                    pts = _augment_points(pts, augment_rng)
                cloud = PointCloud(pts.astype(np.float32))
                if sampler is not None:
                    cloud = sampler(params, cloud, sampler_rng)
                point_sets.append(cloud.points)
                labels.append(sample.label)
            loss, grads = _loss_and_grads_arrays(params, point_sets, labels)
            params = sgd_step(params, grads, lr)
            if not params.all_finite():
                raise NumericOverflowError(
                    f"non-finite parameters after epoch {epoch} batch {n_batches}")
            epoch_loss += loss
            n_batches += 1
        val_acc = _accuracy(params, val_samples) if val_samples else 1.0
        if val_acc > best_acc:
            best_acc, best_params = val_acc, params
        if verbose:
            print(f"epoch {epoch + 1:3d}/{config.epochs}  lr {lr:.2e}  "
                  f"loss {epoch_loss / max(n_batches, 1):.4f}  val_acc {val_acc:.4f}")
    return best_params


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: EncoderParams):
    """RFNN binary: magic, version, layer-shape table, float64 weights (LE)."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(bytes([_CKPT_VERSION, len(params.layers), params.n_point_layers]))
        for w, b in params.layers:
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
        for w, b in params.layers:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> EncoderParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not an RFNN checkpoint")
    version, n_layers, n_point_layers = raw[4], raw[5], raw[6]
    if version != _CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    shapes = []
    off = 7
    for _ in range(n_layers):
        fan_in, fan_out = struct.unpack_from("<II", raw, off)
        shapes.append((fan_in, fan_out))
        off += 8
    layers = []
    for fan_in, fan_out in shapes:
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=off)
        off += 8 * fan_in * fan_out
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        layers.append((w.reshape(fan_in, fan_out).copy(), b.copy()))
    return EncoderParams(tuple(layers), n_point_layers)
