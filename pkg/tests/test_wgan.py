import math
from collections import Counter

import numpy as np
import pytest

from flowgan import nn, wgan
from flowgan.nn import Layer, Mlp, NonFiniteError
from flowgan.wgan import GanConfig, GanModel, critic_step, generate, generator_gradients, train, \
    wasserstein_estimate

TINY = dict(noise_dim=4, generator_hidden=(8, 8), critic_hidden=(8, 8), batch_size=16)


def test_config_validation():
    GanConfig()
    with pytest.raises(ValueError):
        GanConfig(critic_lr=1e-5, generator_lr=1e-4)
    with pytest.raises(ValueError):
        GanConfig(generator_lr=0.0)
    with pytest.raises(ValueError):
        GanConfig(penalty=-1.0)
    with pytest.raises(ValueError):
        GanConfig(n_critic=0)
    c = GanConfig(generator_hidden=[24, 24, 24], critic_hidden=[24, 24, 24])
    assert GanConfig.from_dict(c.to_dict()) == c


def test_defaults():
    c = GanConfig()
    assert (c.penalty, c.n_critic, c.batch_size, c.critic_lr, c.generator_lr) == (10.0, 5, 128, 3e-4, 1e-4)
    assert (c.beta1, c.beta2, c.noise_dim, c.epochs) == (0.0, 0.9, 64, 5.0)


def test_iteration_accounting():
    c = GanConfig()
    n = 50_000
    it = c.generator_iterations(n)
    assert it == math.ceil(5 * n / (5 * 128))
    assert it * c.n_critic * c.batch_size >= c.epochs * n
    assert GanConfig(iterations=7).generator_iterations(n) == 7


def test_wasserstein_examples():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(3, 1))
    lin = Mlp([Layer(w, [0.4], "linear")])
    real, fake = rng.normal(size=(10, 3)), rng.normal(1.0, 1.0, size=(12, 3))
    assert wasserstein_estimate(lin, real, real) == 0.0
    zero = Mlp([Layer(np.zeros((3, 1)), [0.0], "linear")])
    assert wasserstein_estimate(zero, real, fake) == 0.0
    expected = float(w[:, 0] @ (real.mean(0) - fake.mean(0)))
    assert wasserstein_estimate(lin, real, fake) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        wasserstein_estimate(lin, real, np.zeros((2, 4)))


def test_generator_gradient_fd():
    rng = np.random.default_rng(1)
    gen = Mlp.create([3, 6, 4], "tanh", "sigmoid", rng)
    critic = Mlp.create([4, 5, 1], "tanh", "linear", rng)
    z = rng.normal(size=(6, 3))
    _, grads = generator_gradients(gen, critic, z)
    h = 1e-4
    for p, g in zip(gen.parameters(), grads):
        num = np.empty_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            hi = -critic(gen(z)).mean()
            p[i] = old - h
            lo = -critic(gen(z)).mean()
            p[i] = old
            num[i] = (hi - lo) / (2 * h)
        assert np.linalg.norm(g - num) <= 1e-5 * max(np.linalg.norm(num), 1e-12)
    # chain rule: the upstream into G is -dD/dx / n
    t = gen.trace(z)
    dx = critic.input_gradient(t.output)
    g2, _ = gen.backward(t, -dx / z.shape[0])
    for a, b in zip(grads, g2):
        np.testing.assert_allclose(a, b, atol=1e-14)


def test_critic_step_interpolates_and_penalty():
    rng = np.random.default_rng(2)
    critic = Mlp.create([5, 8, 1], "relu", "linear", rng)
    real, fake = rng.normal(size=(32, 5)), rng.normal(3.0, 1.0, size=(32, 5))
    loss, gp, wdist, grads, interp = critic_step(critic, real, fake, 10.0, rng)
    lo, hi = np.minimum(real, fake), np.maximum(real, fake)
    assert np.all(interp >= lo - 1e-12) and np.all(interp <= hi + 1e-12)
    assert gp >= 0 and loss == pytest.approx(-wdist + gp)
    # each row lies on the segment: same mixing weight in every column
    eps = (interp - fake) / (real - fake)
    np.testing.assert_allclose(eps, eps[:, :1].repeat(5, axis=1), atol=1e-9)


def test_update_counts(monkeypatch):
    calls = Counter()
    original = nn.Adam.step

    def counting(self, grads):
        calls[id(self.net)] += 1
        original(self, grads)

    monkeypatch.setattr(nn.Adam, "step", counting)
    data = np.random.default_rng(3).random((100, 3))
    model = train(data, GanConfig(iterations=4, n_critic=3, **TINY))
    assert calls[id(model.critic)] == 12
    assert calls[id(model.generator)] == 4


def test_history_and_determinism(tmp_path):
    data = np.random.default_rng(4).random((200, 5))
    cfg = GanConfig(iterations=20, seed=3, **TINY)
    a = train(data, cfg)
    b = train(data, cfg)
    assert len(a.history) == 20
    assert all(r.penalty >= 0 for r in a.history)
    assert all(math.isfinite(r.critic_loss) and math.isfinite(r.generator_loss) for r in a.history)
    assert a.history == b.history
    np.testing.assert_array_equal(generate(a, 50, seed=1), generate(b, 50, seed=1))
    assert not np.array_equal(generate(a, 50, seed=1), generate(a, 50, seed=2))
    assert generate(a, 0).shape == (0, 5)
    a.metadata = {"method": "N"}
    a.save(tmp_path / "m")
    c = GanModel.load(tmp_path / "m")
    assert c.history == a.history and c.config == a.config and c.metadata == a.metadata
    np.testing.assert_array_equal(generate(c, 30, seed=5), generate(a, 30, seed=5))


def test_smoke_convergence():
    point = np.array([[0.2, 0.8, 0.5]])
    data = np.repeat(point, 256, axis=0)
    cfg = GanConfig(iterations=500, seed=0, noise_dim=4, generator_hidden=(16, 16),
                    critic_hidden=(16, 16), batch_size=32)
    rng = np.random.default_rng(cfg.seed)
    g0, c0 = wgan.build_networks(3, cfg, "sigmoid", rng)
    before = np.linalg.norm(generate(GanModel(g0.copy(), c0.copy(), cfg), 500, seed=9) - point, axis=1).mean()
    model = train(data, cfg, "sigmoid")
    after = np.linalg.norm(generate(model, 500, seed=9) - point, axis=1).mean()
    assert after < before
    assert after < 0.5 * before


def test_bad_inputs():
    with pytest.raises(ValueError):
        train(np.empty((0, 3)))
    with pytest.raises(ValueError):
        train(np.array([[np.nan, 1.0]]))
    rng = np.random.default_rng(0)
    g, c = wgan.build_networks(4, GanConfig(**TINY), "sigmoid", rng)
    with pytest.raises(ValueError):
        train(np.zeros((10, 3)), GanConfig(**TINY), generator=g, critic=c)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts():
    data = np.random.default_rng(5).random((64, 3))
    with pytest.raises(NonFiniteError):
        train(data, GanConfig(iterations=50, critic_lr=1e300, generator_lr=1e300, **TINY))
