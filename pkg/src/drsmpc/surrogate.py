"""Feedforward surrogates for the window cost and the constraint
trajectory: forward evaluation, analytic input Jacobians, and seeded
minibatch training.

Nets are small sigmoid MLPs with identity output and per-feature
standardization on both sides; the Jacobian is the exact chain-rule
product through all hidden layers, so gradient-based solvers never fall
back to finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import SampleSet
from .errors import DimensionMismatch, NonFiniteLoss
from .iotools import read_json, sha256_json, write_csv, write_json
from .validation import as_matrix

_FORMAT_VERSION = 1


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class SurrogateNet:
    """Sigmoid MLP with affine output and frozen normalization statistics."""

    weights: list  # per layer, arrays (fan_in, fan_out)
    biases: list  # per layer, arrays (fan_out,)
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[1]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d_in:
            raise DimensionMismatch(f"input has {x.shape[-1]} features, net expects {self.d_in}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the net; accepts a single input or a batch."""
        x = self._check_input(x)
        a = (x - self.x_mean) / self.x_scale
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _sigmoid(a @ w + b)
        y = a @ self.weights[-1] + self.biases[-1]
        return y * self.y_scale + self.y_mean

    def jacobian_input(self, x: np.ndarray) -> np.ndarray:
        """Exact d_out x d_in Jacobian of forward at one input."""
        x = self._check_input(np.atleast_1d(x))
        if x.ndim != 1:
            raise DimensionMismatch("jacobian_input takes a single input vector")
        a = (x - self.x_mean) / self.x_scale
        # running product d a_layer / d a_0, built layer by layer
        jac = np.eye(self.d_in)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a_next = _sigmoid(a @ w + b)
            jac = (w * (a_next * (1.0 - a_next))).T @ jac
            a = a_next
        jac = self.weights[-1].T @ jac
        return jac * self.y_scale[:, None] / self.x_scale[None, :]

    def save(self, path) -> None:
        write_json(path, {
            "format_version": _FORMAT_VERSION,
            "kind": "surrogate_net",
            "layer_sizes": self.layer_sizes,
            "hidden_activation": "sigmoid",
            "output_activation": "identity",
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean.tolist(),
            "y_scale": self.y_scale.tolist(),
        })

    @classmethod
    def load(cls, path) -> "SurrogateNet":
        meta = read_json(path)
        if meta.get("kind") != "surrogate_net":
            raise ValueError(f"{path}: not a surrogate net file")
        if meta["format_version"] != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {meta['format_version']}")
        return cls(
            weights=[np.asarray(w, dtype=float) for w in meta["weights"]],
            biases=[np.asarray(b, dtype=float) for b in meta["biases"]],
            x_mean=np.asarray(meta["x_mean"], dtype=float),
            x_scale=np.asarray(meta["x_scale"], dtype=float),
            y_mean=np.asarray(meta["y_mean"], dtype=float),
            y_scale=np.asarray(meta["y_scale"], dtype=float),
        )


@dataclass(frozen=True)
class TrainConfig:
    """Architecture and optimizer settings."""

    hidden: tuple = (10, 10)
    epochs: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def as_dict(self) -> dict:
        return {
            "hidden": list(self.hidden),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
        }


@dataclass
class TrainReport:
    """Loss history and held-out residuals of one training run."""

    final_train_mse: float
    final_test_mse: float
    epoch_train_loss: list
    epoch_val_loss: list
    best_epoch: int
    residuals: np.ndarray  # (test rows, d_out), prediction - label
    seed: int
    config_hash: str

    def save(self, prefix) -> None:
        prefix = Path(prefix)
        csv_name = prefix.name + "_residuals.csv"
        write_json(prefix.with_suffix(".json"), {
            "kind": "train_report",
            "final_train_mse": self.final_train_mse,
            "final_test_mse": self.final_test_mse,
            "epoch_train_loss": self.epoch_train_loss,
            "epoch_val_loss": self.epoch_val_loss,
            "best_epoch": self.best_epoch,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "residuals_file": csv_name,
        })
        header = [f"r{i}" for i in range(self.residuals.shape[1])]
        write_csv(prefix.parent / csv_name, header, self.residuals)


def _standardize_stats(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = data.mean(axis=0)
    scale = data.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def train(
    train_samples,
    test_samples,
    config: TrainConfig = TrainConfig(),
    seed: int = 0,
) -> tuple[SurrogateNet, TrainReport]:
    """Fit a net to (inputs, labels) pairs with Adam on minibatch MSE.

    ``train_samples``/``test_samples`` are (inputs, labels) array pairs;
    use :func:`training_pairs` to pull them out of a SampleSet. The test
    split doubles as the validation set for best-epoch checkpointing and
    supplies the residual population.
    """
    x_train, y_train = (as_matrix(a, n) for a, n in zip(train_samples, ("x_train", "y_train")))
    x_test, y_test = (as_matrix(a, n) for a, n in zip(test_samples, ("x_test", "y_test")))
    sizes_probe = [x_train.shape[1], *config.hidden, y_train.shape[1]]
    n_params = sum(a * b + b for a, b in zip(sizes_probe[:-1], sizes_probe[1:]))
    if x_train.shape[0] < 10 * n_params:
        import warnings

        warnings.warn(
            f"{x_train.shape[0]} training rows for {n_params} parameters "
            "(below the 10x guideline)",
            stacklevel=2,
        )

    x_mean, x_scale = _standardize_stats(x_train)
    y_mean, y_scale = _standardize_stats(y_train)
    xn = (x_train - x_mean) / x_scale
    yn = (y_train - y_mean) / y_scale
    xv = (x_test - x_mean) / x_scale
    yv = (y_test - y_mean) / y_scale

    rng = np.random.default_rng(seed)
    sizes = [x_train.shape[1], *config.hidden, y_train.shape[1]]
    weights = [
        rng.normal(0.0, 1.0 / np.sqrt(a), size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])
    ]
    biases = [np.zeros(b) for b in sizes[1:]]
    m_adam = [np.zeros_like(w) for w in weights] + [np.zeros_like(b) for b in biases]
    v_adam = [np.zeros_like(t) for t in m_adam]

    def forward_acts(x):
        acts = [x]
        for w, b in zip(weights[:-1], biases[:-1]):
            acts.append(_sigmoid(acts[-1] @ w + b))
        acts.append(acts[-1] @ weights[-1] + biases[-1])
        return acts

    def val_loss():
        return float(np.mean((forward_acts(xv)[-1] - yv) ** 2))

    n_rows = xn.shape[0]
    best = (np.inf, [w.copy() for w in weights], [b.copy() for b in biases], 0)
    epoch_train, epoch_val = [], []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n_rows)
        running = 0.0
        for start in range(0, n_rows, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = xn[idx], yn[idx]
            acts = forward_acts(xb)
            err = acts[-1] - yb
            batch_loss = float(np.mean(err**2))
            if not np.isfinite(batch_loss):
                raise NonFiniteLoss(
                    f"loss became non-finite at epoch {epoch} (lr {config.learning_rate})"
                )
            running += batch_loss * xb.shape[0]
            delta = 2.0 * err / err.size
            grads_w, grads_b = [], []
            for layer in range(len(weights) - 1, -1, -1):
                grads_w.append(acts[layer].T @ delta)
                grads_b.append(delta.sum(axis=0))
                if layer > 0:
                    a = acts[layer]
                    delta = (delta @ weights[layer].T) * a * (1.0 - a)
            grads = grads_w[::-1] + grads_b[::-1]
            step += 1
            tensors = weights + biases
            for i, (t, g) in enumerate(zip(tensors, grads)):
                m_adam[i] = config.beta1 * m_adam[i] + (1.0 - config.beta1) * g
                v_adam[i] = config.beta2 * v_adam[i] + (1.0 - config.beta2) * g**2
                m_hat = m_adam[i] / (1.0 - config.beta1**step)
                v_hat = v_adam[i] / (1.0 - config.beta2**step)
                t -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        epoch_train.append(running / n_rows)
        vl = val_loss()
        epoch_val.append(vl)
        if vl < best[0]:
            best = (vl, [w.copy() for w in weights], [b.copy() for b in biases], epoch)

    net = SurrogateNet(
        weights=best[1], biases=best[2],
        x_mean=x_mean, x_scale=x_scale, y_mean=y_mean, y_scale=y_scale,
    )
    pred_test = net.forward(x_test)
    pred_train = net.forward(x_train)
    report = TrainReport(
        final_train_mse=float(np.mean((pred_train - y_train) ** 2)),
        final_test_mse=float(np.mean((pred_test - y_test) ** 2)),
        epoch_train_loss=epoch_train,
        epoch_val_loss=epoch_val,
        best_epoch=best[3],
        residuals=pred_test - y_test,
        seed=int(seed),
        config_hash=sha256_json(config.as_dict()),
    )
    return net, report


def training_pairs(samples: SampleSet, target: str) -> tuple[np.ndarray, np.ndarray]:
    """Extract (inputs, labels) for one of the two surrogate targets."""
    if target == "j":
        return samples.inputs, samples.labels_j[:, None]
    if target == "g":
        return samples.inputs, samples.labels_g
    raise ValueError("target must be 'j' or 'g'")


@dataclass
class SurrogateBundle:
    """Joint view of the cost and constraint nets used by the controller."""

    net_j: SurrogateNet
    net_g: SurrogateNet
    q: int
    horizon: int

    def __post_init__(self):
        window = self.horizon + 1
        expected = self.q + window
        for name, net in (("cost", self.net_j), ("constraint", self.net_g)):
            if net.d_in != expected:
                raise DimensionMismatch(
                    f"{name} net expects {net.d_in} inputs, bundle needs {expected}"
                )
        if self.net_j.d_out != 1:
            raise DimensionMismatch("cost net must have one output")
        if self.net_g.d_out != window:
            raise DimensionMismatch(f"constraint net must have {window} outputs")

    def _stack(self, x_red: np.ndarray, u_window: np.ndarray) -> np.ndarray:
        x_red = np.asarray(x_red, dtype=float)
        u_window = np.asarray(u_window, dtype=float)
        if x_red.shape != (self.q,) or u_window.shape != (self.horizon + 1,):
            raise DimensionMismatch("bad reduced-state or control-window shape")
        return np.concatenate([x_red, u_window])

    def evaluate(self, x_red: np.ndarray, u_window: np.ndarray) -> tuple[float, np.ndarray]:
        z = self._stack(x_red, u_window)
        return float(self.net_j.forward(z)[0]), self.net_g.forward(z)

    def evaluate_batch(self, x_red: np.ndarray, u_windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate many control windows at one reduced state."""
        u_windows = as_matrix(u_windows, "u_windows")
        z = np.hstack([np.tile(np.asarray(x_red, dtype=float), (u_windows.shape[0], 1)), u_windows])
        return self.net_j.forward(z)[:, 0], self.net_g.forward(z)

    def gradients_u(self, x_red: np.ndarray, u_window: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Jacobians of cost and constraints restricted to the U block."""
        z = self._stack(x_red, u_window)
        dj = self.net_j.jacobian_input(z)[0, self.q :]
        dg = self.net_g.jacobian_input(z)[:, self.q :]
        return dj, dg
