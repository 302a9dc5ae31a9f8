"""Round streams the harness can run policies against.

Classification datasets become indicator-reward bandits via the transform
pipeline in the data module.  The synthetic streams (nonlinear cosine reward,
linear reward, and a mushroom-like categorical task) exist for benchmark runs
that do not depend on external files.
"""

from __future__ import annotations

import numpy as np

from .data import (BanditRound, LabeledDataset, classification_rounds,
                   duplicate_half, normalize_unit, shuffle)

# fixed task directions so every repeat faces the same reward function
_TASK_SEED = 0x5EED


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def synthetic_nonlinear(n_arms: int, raw_dim: int, horizon: int, seed,
                        noise_sd: float = 0.1) -> list[BanditRound]:
    """Per-arm random unit contexts with reward cos(3 x.a) plus Gaussian noise."""
    a = _unit(np.random.default_rng(_TASK_SEED).standard_normal(raw_dim))
    rng = np.random.default_rng(seed)
    rounds = []
    for _ in range(horizon):
        raw = rng.standard_normal((n_arms, raw_dim))
        raw = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        expected = np.cos(3.0 * raw @ a)
        rewards = expected + noise_sd * rng.standard_normal(n_arms)
        contexts = np.stack([duplicate_half(x) for x in raw])
        rounds.append(BanditRound(contexts, expected, rewards))
    return rounds


def synthetic_linear(n_arms: int, raw_dim: int, horizon: int, seed,
                     noise_sd: float = 0.1) -> list[BanditRound]:
    """Per-arm random unit contexts with reward x.w plus Gaussian noise."""
    w = _unit(np.random.default_rng(_TASK_SEED + 1).standard_normal(raw_dim))
    rng = np.random.default_rng(seed)
    rounds = []
    for _ in range(horizon):
        raw = rng.standard_normal((n_arms, raw_dim))
        raw = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        expected = raw @ w
        rewards = expected + noise_sd * rng.standard_normal(n_arms)
        contexts = np.stack([duplicate_half(x) for x in raw])
        rounds.append(BanditRound(contexts, expected, rewards))
    return rounds


def mushroom_like() -> LabeledDataset:
    """Deterministic categorical stand-in for the UCI mushroom table.

    8124 rows, 22 categorical columns, 2 classes.  Two latent binary factors
    drive the table: ten columns echo each factor (with 10% flip noise) and
    the label is their XOR.  Every single column is uncorrelated with the
    label, so a linear model on the one-hot encoding stays at chance, while
    the factors dominate the context geometry and a network can learn the
    interaction.
    """
    n = 8124
    rng = np.random.default_rng(_TASK_SEED + 2)
    u = rng.integers(0, 2, size=n)
    v = rng.integers(0, 2, size=n)
    labels = (u ^ v).astype(np.int64)

    def echo(factor):
        flips = rng.random(n) < 0.1
        return np.where(flips, 1 - factor, factor)

    cols = [echo(u) for _ in range(10)] + [echo(v) for _ in range(10)]
    n_levels = [2] * 20
    for k in rng.integers(4, 9, size=2):
        n_levels.append(int(k))
        cols.append(rng.integers(0, k, size=n))

    blocks = []
    for col, k in zip(cols, n_levels):
        onehot = np.zeros((n, k))
        onehot[np.arange(n), col] = 1.0
        blocks.append(onehot)
    return LabeledDataset(np.hstack(blocks), labels, n_classes=2,
                          provenance="synthetic mushroom-like")


def dataset_rounds(dataset: LabeledDataset, seed, horizon: int | None = None,
                   duplicate: bool = True) -> list[BanditRound]:
    """Shuffle a labeled dataset with the seed and emit its bandit rounds."""
    rounds = classification_rounds(shuffle(dataset, seed), duplicate=duplicate)
    if horizon is not None:
        if horizon > len(rounds):
            raise ValueError(
                f"horizon {horizon} exceeds dataset size {len(rounds)}"
            )
        rounds = rounds[:horizon]
    return rounds
