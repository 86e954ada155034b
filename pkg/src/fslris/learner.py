"""Desk-scale federated learner.

The data are synthetic I/Q windows of a two-system coexistence scene with
four classes: idle (noise only), only user 1 (a narrowband tone), only
user 2 (an eight-subcarrier multicarrier burst) and both.  The classifier
is a one-hidden-layer ReLU network with a softmax output, trained by
mini-batch gradient descent with hand-written gradients.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import complex_normal, substream

NUM_CLASSES = 4
CLASS_NAMES = ("Idle", "Only U1", "Only U2", "U1+U2")
SNR_DB_LEVELS = (0.0, 5.0, 10.0, 15.0, 20.0)
SUBCARRIERS = 8
SUBCARRIER_SPACING = 1.0 / 32.0


class NoUpdateRound(ValueError):
    """No local model was both requested and received; the global model is unchanged."""


class TrainingDiverged(FloatingPointError):
    """Local training produced a non-finite loss."""


@dataclass
class Dataset:
    """Labelled samples: features ``x`` (D, F), labels ``y`` in 0..3, raw ``iq`` (D, w) complex."""

    x: np.ndarray
    y: np.ndarray
    iq: np.ndarray
    snr_db: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.iq[idx], self.snr_db[idx])

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        return Dataset(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]),
                       np.concatenate([p.iq for p in parts]),
                       np.concatenate([p.snr_db for p in parts]))


@dataclass
class FederatedData:
    """Per-user training sets plus pooled validation and test sets."""

    users: list[Dataset]
    val: Dataset
    test: Dataset
    window: int
    features: str


def tone(rng: np.random.Generator, window: int, power: float) -> np.ndarray:
    t = np.arange(window)
    f = rng.uniform(0.05, 0.45)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    return math.sqrt(power) * np.exp(1j * (2.0 * np.pi * f * t + phi))


def multicarrier(rng: np.random.Generator, window: int, power: float) -> np.ndarray:
    t = np.arange(window)
    f0 = rng.uniform(-0.47, -0.30)
    freqs = f0 + SUBCARRIER_SPACING * np.arange(SUBCARRIERS)
    symbols = np.exp(1j * (np.pi / 2.0 * rng.integers(0, 4, SUBCARRIERS) + np.pi / 4.0))
    carriers = np.exp(2j * np.pi * np.outer(freqs, t))
    return math.sqrt(power / SUBCARRIERS) * (symbols @ carriers)


def synthesize(rng: np.random.Generator, label: int, snr_db: float, window: int) -> np.ndarray:
    """One I/Q window of class ``label`` (0..3) over unit-power noise."""
    power = 10.0 ** (snr_db / 10.0)
    x = complex_normal(rng, window)
    if label in (1, 3):
        x = x + tone(rng, window, power)
    if label in (2, 3):
        x = x + multicarrier(rng, window, power)
    return x


def featurize(iq: np.ndarray, kind: str = "spectrum") -> np.ndarray:
    """Spectral log-magnitudes (w values) or interleaved I/Q (2w values) per window."""
    iq = np.atleast_2d(iq)
    if kind == "spectrum":
        spec = np.fft.fftshift(np.fft.fft(iq, axis=1), axes=1) / math.sqrt(iq.shape[1])
        return np.log1p(np.abs(spec) ** 2)
    if kind == "iq":
        out = np.empty((iq.shape[0], 2 * iq.shape[1]))
        out[:, 0::2] = iq.real
        out[:, 1::2] = iq.imag
        return out
    raise ValueError(f"unknown feature kind {kind!r}")


def generate_dataset(seed: int, samples_per_class: int, window: int = 32, num_users: int = 2,
                     snr_db_levels=SNR_DB_LEVELS, features: str = "spectrum") -> FederatedData:
    """Synthesize disjoint per-user datasets and split each 80/10/10.

    Every sample is drawn from its user's own random stream, so no window
    is shared between users.  SNRs are drawn uniformly from
    ``snr_db_levels``.
    """
    if window <= 0 or samples_per_class <= 0 or num_users <= 0:
        raise ValueError("window, samples_per_class and num_users must be positive")
    trains, vals, tests = [], [], []
    for u in range(num_users):
        rng = substream(seed, 1_000_003, u)
        labels = np.repeat(np.arange(NUM_CLASSES), samples_per_class)
        rng.shuffle(labels)
        snrs = rng.choice(np.asarray(snr_db_levels, dtype=float), size=len(labels))
        iq = np.stack([synthesize(rng, int(c), s, window) for c, s in zip(labels, snrs)])
        data = Dataset(featurize(iq, features), labels, iq, snrs)
        n = len(labels)
        n_train, n_val = int(round(0.8 * n)), int(round(0.1 * n))
        trains.append(data.subset(slice(0, n_train)))
        vals.append(data.subset(slice(n_train, n_train + n_val)))
        tests.append(data.subset(slice(n_train + n_val, n)))
    return FederatedData(trains, Dataset.concat(vals), Dataset.concat(tests), window, features)


# ---------------------------------------------------------------- classifier

@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: int = 64
    classes: int = NUM_CLASSES

    @property
    def size(self) -> int:
        return self.input_dim * self.hidden + self.hidden + self.hidden * self.classes + self.classes

    def unpack(self, w: np.ndarray):
        f, h, c = self.input_dim, self.hidden, self.classes
        i = 0
        w1 = w[i:i + f * h].reshape(f, h); i += f * h
        b1 = w[i:i + h]; i += h
        w2 = w[i:i + h * c].reshape(h, c); i += h * c
        b2 = w[i:i + c]
        return w1, b1, w2, b2

    def init(self, rng: np.random.Generator) -> np.ndarray:
        w = np.zeros(self.size)
        w1, _, w2, _ = self.unpack(w)
        w1[:] = rng.standard_normal(w1.shape) * math.sqrt(2.0 / self.input_dim)
        w2[:] = rng.standard_normal(w2.shape) * math.sqrt(1.0 / self.hidden)
        return w


def logits(arch: Architecture, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = arch.unpack(w)
    return np.maximum(x @ w1 + b1, 0.0) @ w2 + b2


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def local_loss(arch: Architecture, w: np.ndarray, data: Dataset) -> float:
    """Mean cross-entropy over the samples of ``data``."""
    return float(-np.mean(_log_softmax(logits(arch, w, data.x))[np.arange(len(data)), data.y]))


def loss_and_grad(arch: Architecture, w: np.ndarray, x: np.ndarray,
                  y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to the flat parameters."""
    w1, b1, w2, b2 = arch.unpack(w)
    pre = x @ w1 + b1
    hid = np.maximum(pre, 0.0)
    logp = _log_softmax(hid @ w2 + b2)
    n = len(y)
    loss = -float(np.mean(logp[np.arange(n), y]))
    d_out = np.exp(logp)
    d_out[np.arange(n), y] -= 1.0
    d_out /= n
    grad = np.empty_like(w)
    g1, gb1, g2, gb2 = arch.unpack(grad)
    g2[:] = hid.T @ d_out
    gb2[:] = d_out.sum(axis=0)
    d_hid = (d_out @ w2.T) * (pre > 0.0)
    g1[:] = x.T @ d_hid
    gb1[:] = d_hid.sum(axis=0)
    return loss, grad


def predict(arch: Architecture, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.argmax(logits(arch, w, x), axis=1)


def accuracy(arch: Architecture, w: np.ndarray, data: Dataset) -> float:
    return float(np.mean(predict(arch, w, data.x) == data.y)) if len(data) else float("nan")


def per_class_accuracy(arch: Architecture, w: np.ndarray, data: Dataset) -> np.ndarray:
    pred = predict(arch, w, data.x)
    return np.array([np.mean(pred[data.y == c] == c) if np.any(data.y == c) else np.nan
                     for c in range(NUM_CLASSES)])


def local_train(arch: Architecture, w_init: np.ndarray, data: Dataset, learning_rate: float,
                epochs: int, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Mini-batch gradient descent from ``w_init``; returns the new parameters."""
    w = np.array(w_init, dtype=float, copy=True)
    if learning_rate == 0.0 or len(data) == 0:
        return w
    for _ in range(epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(order), batch):
            idx = order[start:start + batch]
            loss, grad = loss_and_grad(arch, w, data.x[idx], data.y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} with learning rate {learning_rate}")
            w -= learning_rate * grad
    if not np.all(np.isfinite(w)):
        raise TrainingDiverged(f"parameters became non-finite with learning rate {learning_rate}")
    return w


def aggregate(models, sizes, inferred, received) -> np.ndarray:
    """Weighted average of local models over users both inferred as requesting and received.

    Weights are ``D_m * inferred_m * received_m``.  Raises
    :class:`NoUpdateRound` when every weight is zero.
    """
    weights = (np.asarray(sizes, dtype=float) * np.asarray(inferred, dtype=float)
               * np.asarray(received, dtype=float))
    if weights.sum() <= 0.0:
        raise NoUpdateRound("no local model was both requested and received")
    keep = np.flatnonzero(weights)
    stacked = np.stack([np.asarray(models[i], dtype=float) for i in keep])
    return (weights[keep] @ stacked) / weights[keep].sum()


# ---------------------------------------------------------- request inference

def fused_accuracy(epsilon: float, num_ris: int) -> float:
    """Accuracy of OR-fused cooperative detection, ``1 - (1 - eps)^K``."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    if num_ris < 1:
        raise ValueError("at least one RIS is needed")
    return 1.0 - (1.0 - epsilon) ** num_ris


@dataclass(frozen=True)
class RequestState:
    alpha: np.ndarray
    inferred: np.ndarray
    epsilon: float
    eta: float


def infer_requests(alpha, epsilon: float, num_ris: int, rng: np.random.Generator) -> RequestState:
    """Each inferred request equals the true one with probability eta, else is flipped."""
    alpha = np.asarray(alpha, dtype=int)
    eta = fused_accuracy(epsilon, num_ris)
    correct = rng.random(len(alpha)) < eta
    inferred = np.where(correct, alpha, 1 - alpha)
    return RequestState(alpha, inferred, epsilon, eta)


# ------------------------------------------------------------------- export

def export_dataset(path: str | Path, data: FederatedData) -> None:
    """Write every sample as one CSV row.

    Columns: ``w, class, snr_db, user, split, i0, q0, i1, q1, ...``; the
    class is 1-based (1 = Idle ... 4 = U1+U2), ``user`` is -1 for the pooled
    validation/test rows.
    """
    w = data.window
    header = ["w", "class", "snr_db", "user", "split"]
    header += [f"{c}{t}" for t in range(w) for c in ("i", "q")]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        parts = [(u, "train", d) for u, d in enumerate(data.users)]
        parts += [(-1, "val", data.val), (-1, "test", data.test)]
        for user, split, d in parts:
            for i in range(len(d)):
                iq = np.empty(2 * w)
                iq[0::2] = d.iq[i].real
                iq[1::2] = d.iq[i].imag
                out.writerow([w, int(d.y[i]) + 1, repr(float(d.snr_db[i])), user, split]
                             + [repr(float(v)) for v in iq])


def import_dataset(path: str | Path, features: str = "spectrum") -> FederatedData:
    rows: dict[tuple[str, int], list] = {}
    window = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            window = int(row[0])
            vals = np.array([float(v) for v in row[5:]])
            rows.setdefault((row[4], int(row[3])), []).append(
                (int(row[1]) - 1, float(row[2]), vals[0::2] + 1j * vals[1::2]))
    if window is None:
        raise ValueError(f"{path} holds no samples")

    def build(items) -> Dataset:
        y = np.array([it[0] for it in items], dtype=int)
        snr = np.array([it[1] for it in items])
        iq = np.stack([it[2] for it in items])
        return Dataset(featurize(iq, features), y, iq, snr)

    users = sorted(u for split, u in rows if split == "train")
    return FederatedData([build(rows["train", u]) for u in users], build(rows["val", -1]),
                         build(rows["test", -1]), window, features)
