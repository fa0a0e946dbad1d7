"""End-to-end learned steering: dataset logging, x10 augmentation, a
linear regressor over downsampled grayscale frames, and 3-variant
ensemble inference with outlier rejection and rate limiting.

Dataset layout on disk: a directory of PGM frames named
``frame_<id>.pgm`` plus ``index.csv`` with the header
``frame_id,steering,speed,timestamp,augmented_from``.
"""

import csv
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import YAW_CAP
from .imaging import (ImageBuffer, adjust_brightness_contrast, apply_lut,
                      flip_horizontal, gamma_lut, to_grayscale)
from .netpbm import read_netpbm, write_netpbm

INPUT_WIDTH = 64
INPUT_HEIGHT = 48


@dataclass
class SteeringRecord:
    frame_id: str
    image: ImageBuffer
    steering: float
    speed: float
    timestamp: float
    augmented_from: str | None = None


@dataclass
class Dataset:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, record: SteeringRecord):
        self.records.append(record)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "index.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame_id", "steering", "speed", "timestamp", "augmented_from"])
            for rec in self.records:
                writer.writerow([rec.frame_id, repr(rec.steering), repr(rec.speed),
                                 repr(rec.timestamp), rec.augmented_from or ""])
                write_netpbm(rec.image, directory / f"frame_{rec.frame_id}.pgm")

    @classmethod
    def load(cls, directory) -> "Dataset":
        directory = Path(directory)
        ds = cls()
        with open(directory / "index.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                img = read_netpbm(directory / f"frame_{row['frame_id']}.pgm")
                ds.append(SteeringRecord(
                    frame_id=row["frame_id"], image=img,
                    steering=float(row["steering"]), speed=float(row["speed"]),
                    timestamp=float(row["timestamp"]),
                    augmented_from=row["augmented_from"] or None))
        return ds


def downsample_gray(img: ImageBuffer, out_w: int = INPUT_WIDTH,
                    out_h: int = INPUT_HEIGHT) -> ImageBuffer:
    """Reduce a grayscale frame to the model input size.

    Exact box averaging when dimensions divide evenly, nearest-neighbor
    sampling otherwise.
    """
    if img.channels != 1:
        raise ValueError("downsample_gray expects a 1-channel image")
    H, W = img.data.shape
    if H == out_h and W == out_w:
        return img.copy()
    if H % out_h == 0 and W % out_w == 0:
        bh, bw = H // out_h, W // out_w
        sums = img.data.reshape(out_h, bh, out_w, bw).astype(np.uint32).sum(axis=(1, 3))
        vals = np.floor(sums.astype(np.float64) / (bh * bw) + 0.5)
        return ImageBuffer(vals.astype(np.uint8))
    rows = np.floor((np.arange(out_h) + 0.5) * H / out_h).astype(np.intp)
    cols = np.floor((np.arange(out_w) + 0.5) * W / out_w).astype(np.intp)
    return ImageBuffer(img.data[np.ix_(rows, cols)].copy())


def frame_to_input(frame: ImageBuffer) -> ImageBuffer:
    gray = to_grayscale(frame) if frame.channels == 3 else frame
    return downsample_gray(gray)


def log_record(frame: ImageBuffer, cmd, dataset: Dataset, timestamp: float = 0.0,
               yaw_cap: float = YAW_CAP) -> Dataset:
    """Append one (frame, steering) pair; frames are stored at model
    input resolution."""
    if abs(cmd.angular_z) > yaw_cap:
        raise ValueError(f"steering {cmd.angular_z} exceeds the yaw cap {yaw_cap}")
    frame_id = f"{len(dataset.records):06d}"
    dataset.append(SteeringRecord(
        frame_id=frame_id, image=frame_to_input(frame),
        steering=float(cmd.angular_z), speed=float(cmd.linear_x),
        timestamp=float(timestamp)))
    return dataset


def _noise_variant(img: ImageBuffer, sigma: float, seed: int) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    noisy = img.data.astype(np.float64) + rng.normal(0.0, sigma, img.data.shape)
    return ImageBuffer(np.clip(np.floor(noisy + 0.5), 0, 255).astype(np.uint8))


def augment(record: SteeringRecord) -> list[SteeringRecord]:
    """Nine fixed variants per record: brightness up/down, contrast
    up/down, horizontal flip (steering negated), two gamma remaps, two
    noise levels.  Only the flip changes the label."""
    img = record.image
    base_seed = zlib.crc32(record.frame_id.encode())
    variants = [
        (adjust_brightness_contrast(img, 1.0, 25.0), record.steering),
        (adjust_brightness_contrast(img, 1.0, -25.0), record.steering),
        (adjust_brightness_contrast(img, 1.25, 0.0), record.steering),
        (adjust_brightness_contrast(img, 0.8, 0.0), record.steering),
        (flip_horizontal(img), -record.steering),
        (apply_lut(img, gamma_lut(0.8)), record.steering),
        (apply_lut(img, gamma_lut(1.3)), record.steering),
        (_noise_variant(img, 6.0, base_seed ^ 0xA1), record.steering),
        (_noise_variant(img, 12.0, base_seed ^ 0xB2), record.steering),
    ]
    return [SteeringRecord(frame_id=f"{record.frame_id}a{i + 1}", image=im,
                           steering=st, speed=record.speed,
                           timestamp=record.timestamp,
                           augmented_from=record.frame_id)
            for i, (im, st) in enumerate(variants)]


def augment_dataset(dataset: Dataset) -> Dataset:
    out = Dataset()
    for rec in dataset.records:
        out.append(rec)
        for aug in augment(rec):
            out.append(aug)
    return out


@dataclass
class LinearSteeringModel:
    weights: np.ndarray  # float32, INPUT_HEIGHT * INPUT_WIDTH
    bias: float
    input_width: int = INPUT_WIDTH
    input_height: int = INPUT_HEIGHT

    def __post_init__(self):
        self.weights = np.asarray(self.weights, np.float32).reshape(-1)
        n = self.input_width * self.input_height
        if self.weights.size != n:
            raise ValueError(f"expected {n} weights, got {self.weights.size}")
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValueError("model parameters must be finite")

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"{self.input_width} {self.input_height}\n")
            for row in self.weights.reshape(self.input_height, self.input_width):
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            fh.write(f"{self.bias!r}\n")

    @classmethod
    def load(cls, path) -> "LinearSteeringModel":
        with open(path) as fh:
            tokens = fh.read().split()
        w, h = int(tokens[0]), int(tokens[1])
        values = [float(t) for t in tokens[2:]]
        if len(values) != w * h + 1:
            raise ValueError(f"model file {path} has {len(values)} values, expected {w * h + 1}")
        return cls(weights=np.array(values[:-1], np.float32), bias=values[-1],
                   input_width=w, input_height=h)


@dataclass
class EnsembleParams:
    variant_transforms: tuple = ((1.0, 20.0), (1.15, 0.0))  # (gain, bias) pairs
    outlier_delta: float = 0.3
    rate_delta: float = 0.1

    def __post_init__(self):
        if len(self.variant_transforms) != 2:
            raise ValueError("exactly 2 variant transforms required")
        if self.outlier_delta <= 0 or self.rate_delta <= 0:
            raise ValueError("deltas must be positive")


def _features(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    n = len(dataset.records)
    X = np.empty((n, INPUT_HEIGHT * INPUT_WIDTH), np.float32)
    y = np.empty(n, np.float32)
    for i, rec in enumerate(dataset.records):
        X[i] = downsample_gray(rec.image).data.reshape(-1).astype(np.float32) / 255.0
        y[i] = rec.steering
    return X, y


def loss_and_grad(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float):
    """Full-batch MSE and its analytic gradient."""
    r = X @ w + np.float32(b) - y
    loss = float(np.mean(r.astype(np.float64) ** 2))
    n = X.shape[0]
    grad_w = (2.0 / n) * (X.T @ r)
    grad_b = float(2.0 * np.mean(r))
    return loss, grad_w, grad_b


@dataclass
class TrainResult:
    model: LinearSteeringModel
    losses: list


def train(dataset: Dataset, epochs: int = 300, learning_rate: float = 0.02,
          seed: int = 0) -> TrainResult:
    """Full-batch gradient descent on MSE.  Deterministic: weights start
    at zero, so the seed only labels the run."""
    if len(dataset.records) == 0:
        raise ValueError("cannot train on an empty dataset")
    X, y = _features(dataset)
    w = np.zeros(X.shape[1], np.float32)
    b = 0.0
    losses = []
    lr = np.float32(learning_rate)
    for _ in range(epochs):
        loss, gw, gb = loss_and_grad(X, y, w, b)
        losses.append(loss)
        w = w - lr * gw
        b = b - float(lr) * gb
    return TrainResult(LinearSteeringModel(weights=w, bias=b), losses)


def predict(model: LinearSteeringModel, frame: ImageBuffer) -> float:
    """Steering for one frame: w . x + b on normalized downsampled grayscale."""
    x = frame_to_input(frame).data.reshape(-1).astype(np.float32) / 255.0
    return float(x @ model.weights + np.float32(model.bias))


def ensemble_predict(model: LinearSteeringModel, frame: ImageBuffer,
                     prev_steering: float, params: EnsembleParams) -> float:
    """Predict on the frame plus two photometric variants, reject
    predictions far from the previous steering, average the survivors,
    and rate-limit the result against the previous steering."""
    preds = [predict(model, frame)]
    for gain, bias in params.variant_transforms:
        preds.append(predict(model, adjust_brightness_contrast(frame, gain, bias)))
    survivors = [p for p in preds if abs(p - prev_steering) <= params.outlier_delta]
    target = sum(survivors) / len(survivors) if survivors else prev_steering
    step = min(max(target - prev_steering, -params.rate_delta), params.rate_delta)
    return prev_steering + step
