import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from conftest import draw_biases_off_kink

from expdb.learner import (
    Experience,
    ExperiencePool,
    gradient_check,
    init_model,
    load_model,
    loss_and_grads,
    pool_push,
    pool_sample,
    predict,
    save_model,
    train_batch,
)


def test_init_is_reproducible_and_bounded():
    a, b = init_model([3, 1], 7), init_model([3, 1], 7)
    assert a.n_params == 4
    assert a.flat().tolist() == b.flat().tolist()
    m = init_model([6, 8, 1], 0)
    assert all((bias == 0).all() for bias in m.biases)
    for w, (fi, fo) in zip(m.weights, [(6, 8), (8, 1)]):
        assert np.abs(w).max() <= math.sqrt(6 / (fi + fo))
    for dims in ([3], [3, 0], []):
        with pytest.raises(ValueError):
            init_model(dims, 0)


def test_predict_hand_computations():
    m = init_model([4, 5, 2], 0)
    for w in m.weights:
        w[:] = 0
    m.biases[-1][:] = [1.5, -2.0]
    assert predict(m, np.ones(4)).tolist() == [1.5, -2.0]
    lin = init_model([1, 1], 0)
    lin.weights[0][:] = 2.0
    lin.biases[0][:] = 1.0
    assert predict(lin, [3.0]).tolist() == [7.0]
    with pytest.raises(ValueError):
        predict(lin, [1.0, 2.0])


def test_batch_predict_matches_items(rng):
    m = init_model([6, 8, 3], 1)
    x = rng.normal(size=(10, 6))
    batch = predict(m, x)
    for i in range(10):
        assert np.allclose(batch[i], predict(m, x[i]), rtol=0, atol=1e-15)


def test_zero_loss_leaves_parameters(rng):
    m = init_model([6, 8, 1], 2)
    x = rng.normal(size=(5, 6))
    before = m.flat()
    loss = train_batch(m, x, predict(m, x), 0.1)
    assert loss == 0.0
    assert np.array_equal(before, m.flat())


def test_zero_learning_rate_is_noop(rng):
    m = init_model([6, 8, 1], 2)
    before = m.flat()
    train_batch(m, rng.normal(size=(5, 6)), rng.normal(size=5), 0.0)
    assert np.array_equal(before, m.flat())


def test_single_example_converges():
    m = init_model([6, 8, 1], 3)
    x = np.linspace(0, 1, 6)[None, :]
    for _ in range(10_000):
        loss = train_batch(m, x, [2.5], 0.01)
        if loss < 1e-6:
            break
    assert loss < 1e-6


def test_linear_fit_loss_decreases(rng):
    m = init_model([3, 1], 4)
    x = rng.normal(size=(50, 3))
    y = x @ np.array([0.5, -1.0, 2.0]) + 0.3
    losses = [train_batch(m, x, y, 0.01) for _ in range(300)]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_nonfinite_loss_keeps_parameters():
    m = init_model([2, 1], 0)
    before = m.flat()
    with pytest.raises(FloatingPointError):
        train_batch(m, [[1.0, 1.0]], [math.inf], 0.1)
    assert np.array_equal(before, m.flat())
    with pytest.raises(ValueError):
        train_batch(m, np.zeros((0, 2)), [], 0.1)


def test_action_loss_uses_taken_output_only(rng):
    m = init_model([4, 6, 3], 5)
    x = rng.normal(size=(2, 4))
    y = predict(m, x)
    loss, gw, gb = loss_and_grads(m, x, [y[0, 1] + 1.0, y[1, 2]], actions=[1, 2])
    assert loss == pytest.approx(0.5)
    assert gb[-1].tolist()[0] == 0.0


def test_training_is_deterministic(rng):
    x = rng.normal(size=(20, 6))
    y = rng.normal(size=20)

    def run():
        m = init_model([6, 8, 1], 9)
        for _ in range(50):
            train_batch(m, x, y, 0.05)
        return m.flat().tobytes()

    assert run() == run()


# --- gradient checks ---------------------------------------------------------


def test_gradient_check_linear_is_exact():
    m = init_model([1, 1], 0)
    assert gradient_check(m, [[0.7]], [1.3]) < 1e-9


def test_gradient_check_small_mlp(rng):
    m = init_model([6, 8, 1], 11)
    assert gradient_check(m, rng.normal(size=(4, 6)), rng.normal(size=4), h=1e-5) <= 1e-4


def test_gradient_check_with_actions(rng):
    m = init_model([5, 7, 4], 12)
    err = gradient_check(m, rng.normal(size=(6, 5)), rng.normal(size=6), h=1e-5, actions=[0, 1, 2, 3, 3, 0])
    assert err <= 1e-4


def test_gradient_error_shrinks_with_h():
    # per-parameter the loss is piecewise quadratic, so central differences are
    # exact until the step crosses a ReLU kink; park one hidden unit 5e-4 from it
    m = init_model([3, 4, 2], 13)
    x = np.array([[0.3, -1.2, 2.0]])
    y = np.array([[1.0, -1.0]])
    z = x @ m.weights[0]
    m.biases[0][:] = np.where(z[0] > 0, 0.0, 1.0 - z[0])
    m.biases[0][0] = 5e-4 - z[0, 0]
    errs = [gradient_check(m, x, y, h=h) for h in (1e-3, 1e-4, 1e-5)]
    assert errs[0] > 1e-2
    assert errs[0] > errs[1] and errs[0] > errs[2]
    assert max(errs[1:]) <= 1e-4


@settings(max_examples=20)
@given(
    dims=st.lists(st.integers(1, 6), min_size=2, max_size=4),
    seed=st.integers(0, 1000),
)
def test_gradient_check_random_architectures(dims, seed):
    rng = np.random.default_rng(seed)
    m = init_model(dims, seed)
    x = rng.normal(size=(3, dims[0]))
    draw_biases_off_kink(m, x, rng, scale=0.5)
    assert gradient_check(m, x, rng.normal(size=(3, dims[-1])), h=1e-5) <= 1e-4


# --- checkpoints and pool ---------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    m = init_model([6, 8, 1], 3)
    train_batch(m, np.ones((1, 6)), [1.0], 0.1)
    path = tmp_path / "m.txt"
    save_model(m, path)
    back = load_model(path)
    assert back.dims == m.dims
    assert back.flat().tobytes() == m.flat().tobytes()


def test_pool_fifo_and_sampling():
    pool = ExperiencePool(2)
    for e in "abc":
        pool_push(pool, e)
    assert list(pool) == ["b", "c"]
    one = ExperiencePool(5)
    pool_push(one, "x")
    assert pool_sample(one, 3, 0) == ["x", "x", "x"]
    with pytest.raises(IndexError):
        pool_sample(ExperiencePool(3), 1, 0)
    with pytest.raises(ValueError):
        ExperiencePool(0)
    assert pool_sample(pool, 10, 4) == pool_sample(pool, 10, 4)


def test_pool_sampling_is_uniform():
    pool = ExperiencePool(10)
    for i in range(10):
        pool_push(pool, i)
    counts = np.bincount(pool_sample(pool, 10_000, 1), minlength=10)
    sigma = math.sqrt(10_000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - 1000) <= 5 * sigma)


def test_experience_holds_transition():
    e = Experience(np.zeros(3), 2, 0.5, np.ones(3))
    assert e.a == 2 and e.r == 0.5
