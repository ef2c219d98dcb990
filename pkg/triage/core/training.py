"""Minimal trainer for the builtin dense-softmax model.

Only meant to produce fixture models: full softmax cross-entropy with minibatch SGD,
one optional ReLU hidden layer, seeded so the same data gives the same weights.
"""

import logging

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import softmax

from triage.core.model_format import BuiltinSoftmaxModel, DenseLayer

logger = logging.getLogger(__name__)


class TrainingConfig(BaseModel):
    hidden: int = Field(default=64, ge=0, description="Hidden ReLU width; 0 trains softmax regression.")
    epochs: int = Field(default=60, ge=1)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=0.1, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    seed: int = 0


def train_softmax_model(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    config: TrainingConfig | None = None,
) -> BuiltinSoftmaxModel:
    """Fit on (n, d) features in [0, 1] and integer labels; returns a float32 model."""
    config = config or TrainingConfig()
    x = np.asarray(features, dtype=np.float64).reshape(len(features), -1)
    y = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(config.seed)
    widths = [x.shape[1]] + ([config.hidden] if config.hidden else []) + [class_count]
    # He initialisation for ReLU layers.
    weights = [
        rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out))
        for fan_in, fan_out in zip(widths, widths[1:])
    ]
    biases = [np.zeros(fan_out) for fan_out in widths[1:]]
    targets = np.eye(class_count)[y]

    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), config.batch_size):
            batch = order[start : start + config.batch_size]
            activations = [x[batch]]
            for layer, (w, b) in enumerate(zip(weights, biases)):
                z = activations[-1] @ w + b
                activations.append(np.maximum(z, 0.0) if layer < len(weights) - 1 else z)
            delta = (softmax(activations[-1], axis=1) - targets[batch]) / len(batch)
            for layer in reversed(range(len(weights))):
                grad_w = activations[layer].T @ delta + config.weight_decay * weights[layer]
                grad_b = delta.sum(axis=0)
                if layer > 0:
                    delta = (delta @ weights[layer].T) * (activations[layer] > 0)
                weights[layer] -= config.learning_rate * grad_w
                biases[layer] -= config.learning_rate * grad_b
        if (epoch + 1) % 10 == 0:
            logger.debug(f"Epoch {epoch + 1}/{config.epochs} done")

    layers = tuple(
        DenseLayer(
            weights=w.astype(np.float32),
            bias=b.astype(np.float32),
            activation="relu" if index < len(weights) - 1 else "none",
        )
        for index, (w, b) in enumerate(zip(weights, biases))
    )
    return BuiltinSoftmaxModel(layers=layers)


def accuracy(model: BuiltinSoftmaxModel, features: np.ndarray, labels: np.ndarray) -> float:
    rows = np.asarray(features, dtype=np.float64).reshape(len(features), -1)
    predicted = np.array([int(np.argmax(model.logits(row))) for row in rows])
    return float(np.mean(predicted == np.asarray(labels)))
