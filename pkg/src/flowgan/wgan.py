"""WGAN-GP with two time-scale learning rates on encoded flow vectors."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .nn import Adam, Mlp, NonFiniteError, input_gradient_norm_penalty, load_networks, save_networks

logger = logging.getLogger(__name__)

GAN_FORMAT = "flowgan-gan-model"
GAN_VERSION = 1


@dataclass
class GanConfig:
    noise_dim: int = 64
    generator_hidden: tuple[int, ...] = (80, 80, 80)
    critic_hidden: tuple[int, ...] = (80, 80, 80)
    penalty: float = 10.0
    critic_lr: float = 3e-4
    generator_lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    n_critic: int = 5
    batch_size: int = 128
    epochs: float = 5.0
    iterations: int | None = None
    seed: int = 0

    def __post_init__(self):
        self.generator_hidden = tuple(int(w) for w in self.generator_hidden)
        self.critic_hidden = tuple(int(w) for w in self.critic_hidden)
        if self.critic_lr <= 0 or self.generator_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.critic_lr < self.generator_lr:
            raise ValueError("critic learning rate must be >= generator learning rate")
        if self.penalty < 0:
            raise ValueError("gradient penalty coefficient must be >= 0")
        if self.n_critic < 1 or self.batch_size < 1:
            raise ValueError("n_critic and batch_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generator_hidden"] = list(self.generator_hidden)
        d["critic_hidden"] = list(self.critic_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GanConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def generator_iterations(self, n_rows: int) -> int:
        """Generator updates needed so critic batches cover ``epochs`` passes."""
        if self.iterations is not None:
            return int(self.iterations)
        return max(1, math.ceil(self.epochs * n_rows / (self.n_critic * self.batch_size)))


@dataclass
class HistoryRow:
    iteration: int
    critic_loss: float
    penalty: float
    wasserstein: float
    generator_loss: float


@dataclass
class GanModel:
    generator: Mlp
    critic: Mlp
    config: GanConfig
    history: list[HistoryRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def output_width(self) -> int:
        return self.generator.output_width

    def save(self, directory: str | os.PathLike) -> None:
        """Write ``networks.fgnn``, ``gan.json`` and ``history.csv`` into ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_networks(d / "networks.fgnn", {"generator": self.generator, "critic": self.critic})
        info = {"format": GAN_FORMAT, "version": GAN_VERSION, "config": self.config.to_dict(),
                "metadata": self.metadata}
        (d / "gan.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
        write_history(self.history, d / "history.csv")

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "GanModel":
        d = Path(directory)
        info = json.loads((d / "gan.json").read_text())
        if info.get("format") != GAN_FORMAT or info.get("version") != GAN_VERSION:
            raise ValueError(f"{d}: not a version-{GAN_VERSION} GAN model")
        nets, _ = load_networks(d / "networks.fgnn")
        return cls(nets["generator"], nets["critic"], GanConfig.from_dict(info["config"]),
                   read_history(d / "history.csv") if (d / "history.csv").exists() else [],
                   info.get("metadata", {}))


def write_history(history: Sequence[HistoryRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "critic_loss", "penalty", "wasserstein", "generator_loss"])
        for r in history:
            w.writerow([r.iteration, repr(r.critic_loss), repr(r.penalty), repr(r.wasserstein),
                        repr(r.generator_loss)])


def read_history(path: str | os.PathLike) -> list[HistoryRow]:
    with open(path, newline="") as fh:
        return [HistoryRow(int(r["iteration"]), float(r["critic_loss"]), float(r["penalty"]),
                           float(r["wasserstein"]), float(r["generator_loss"]))
                for r in csv.DictReader(fh)]


def build_networks(width: int, config: GanConfig, output_activation: str | tuple[str, ...],
                   rng: np.random.Generator) -> tuple[Mlp, Mlp]:
    generator = Mlp.create([config.noise_dim, *config.generator_hidden, width], "relu",
                           output_activation, rng)
    critic = Mlp.create([width, *config.critic_hidden, 1], "relu", "linear", rng)
    return generator, critic


def wasserstein_estimate(critic: Mlp, real: np.ndarray, fake: np.ndarray) -> float:
    """mean D(real) - mean D(fake)."""
    real = np.atleast_2d(real)
    fake = np.atleast_2d(fake)
    if real.shape[1] != fake.shape[1]:
        raise ValueError("real and fake batches differ in width")
    if real.shape[0] == 0 or fake.shape[0] == 0:
        raise ValueError("empty batch")
    return float(critic.forward(real).mean() - critic.forward(fake).mean())


def critic_step(critic: Mlp, real: np.ndarray, fake: np.ndarray, penalty: float,
                rng: np.random.Generator):
    """Critic loss ``mean D(fake) - mean D(real) + GP`` and its parameter gradients.

    Returns ``(loss, gradient_penalty, wasserstein, grads, interpolates)``.
    """
    n = real.shape[0]
    eps = rng.random((n, 1))
    interp = eps * real + (1.0 - eps) * fake
    t_real = critic.trace(real)
    t_fake = critic.trace(fake)
    g_fake, _ = critic.backward(t_fake, np.full_like(t_fake.output, 1.0 / n))
    g_real, _ = critic.backward(t_real, np.full_like(t_real.output, -1.0 / n))
    gp, g_gp, _ = input_gradient_norm_penalty(critic, interp, penalty)
    wdist = float(t_real.output.mean() - t_fake.output.mean())
    grads = [a + b + c for a, b, c in zip(g_fake, g_real, g_gp)]
    return -wdist + gp, gp, wdist, grads, interp


def generator_gradients(generator: Mlp, critic: Mlp, z: np.ndarray):
    """Loss ``-mean D(G(z))`` and its gradients w.r.t. the generator parameters."""
    t_gen = generator.trace(z)
    t_crit = critic.trace(t_gen.output)
    n = z.shape[0]
    _, d_fake = critic.backward(t_crit, np.full_like(t_crit.output, -1.0 / n))
    grads, _ = generator.backward(t_gen, d_fake)
    return float(-t_crit.output.mean()), grads


def train(data: np.ndarray, config: GanConfig | None = None,
          output_activation: str | tuple[str, ...] = "sigmoid",
          generator: Mlp | None = None, critic: Mlp | None = None) -> GanModel:
    """Train a WGAN-GP on the rows of ``data``.

    Each iteration runs ``n_critic`` critic updates on fresh real batches
    (reshuffled every pass over the data) and one generator update. The run
    length follows ``config.generator_iterations``.
    """
    config = config or GanConfig()
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    if not np.all(np.isfinite(data)):
        raise ValueError("training data contains non-finite values")
    rng = np.random.default_rng(config.seed)
    if generator is None or critic is None:
        generator, critic = build_networks(data.shape[1], config, output_activation, rng)
    if generator.output_width != data.shape[1] or critic.input_width != data.shape[1]:
        raise ValueError("network widths do not match the encoded data width")
    opt_c = Adam(critic, config.critic_lr, config.beta1, config.beta2)
    opt_g = Adam(generator, config.generator_lr, config.beta1, config.beta2)
    n = data.shape[0]
    batch = min(config.batch_size, n)
    order = rng.permutation(n)
    cursor = 0
    iterations = config.generator_iterations(n)
    history: list[HistoryRow] = []
    logger.info("training WGAN-GP: %d rows, width %d, %d generator iterations",
                n, data.shape[1], iterations)
    for it in range(iterations):
        c_loss = c_gp = c_w = 0.0
        for _ in range(config.n_critic):
            if cursor + batch > n:
                order = rng.permutation(n)
                cursor = 0
            real = data[order[cursor:cursor + batch]]
            cursor += batch
            fake = generator.forward(rng.standard_normal((batch, config.noise_dim)))
            loss, gp, wdist, grads, _ = critic_step(critic, real, fake, config.penalty, rng)
            if not math.isfinite(loss):
                raise NonFiniteError(f"non-finite critic loss at iteration {it}")
            opt_c.step(grads)
            c_loss += loss / config.n_critic
            c_gp += gp / config.n_critic
            c_w += wdist / config.n_critic
        z = rng.standard_normal((batch, config.noise_dim))
        g_loss, g_grads = generator_gradients(generator, critic, z)
        if not math.isfinite(g_loss):
            raise NonFiniteError(f"non-finite generator loss at iteration {it}")
        opt_g.step(g_grads)
        history.append(HistoryRow(it, c_loss, c_gp, c_w, g_loss))
        if (it + 1) % 100 == 0 or it + 1 == iterations:
            logger.info("iter %d/%d critic %.4f gp %.4f W %.4f gen %.4f",
                        it + 1, iterations, c_loss, c_gp, c_w, g_loss)
    return GanModel(generator, critic, config, history)


def generate(model: GanModel, count: int, seed: int = 0, chunk: int = 8192) -> np.ndarray:
    """``count`` generated vectors from standard-normal noise; deterministic per seed."""
    rng = np.random.default_rng(seed)
    width = model.generator.output_width
    if count <= 0:
        return np.empty((0, width))
    out = np.empty((count, width))
    for start in range(0, count, chunk):
        stop = min(count, start + chunk)
        out[start:stop] = model.generator.forward(
            rng.standard_normal((stop - start, model.config.noise_dim)))
    return out
