import numpy as np
import pytest
from scipy.stats import chi2

from liverfat.autodiff import NetworkConfig, Tensor, build_network
from liverfat.preprocess import EncodingSpec, SliceImage, decode8, encode8
from liverfat.regressor import (
    AdamState,
    TrainConfig,
    adam_step,
    augment_translate,
    load_model,
    lr_schedule,
    make_cv_plan,
    predict,
    save_model,
    train,
    translate_image,
)


def toy_image(rng, h=12, w=10):
    return SliceImage(w, h, rng.integers(0, 256, (h, w), dtype=np.uint8))


def toy_dataset(rng, n=4, h=12, w=10):
    return [(toy_image(rng, h, w), float(rng.uniform(0, 20))) for _ in range(n)]


TOY_NET = "conv3s2c4,relu,gap,linear1"


# -------------------------------------------------------------------- adam

def test_adam_zero_gradient_keeps_parameters():
    p = Tensor(np.array([1.0, -2.0], dtype=np.float32))
    state = AdamState([p])
    adam_step([p], state, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_is_learning_rate_sized():
    # g = 1 from fresh state: bias-corrected ratio is 1, update ~ -lr
    p = Tensor(np.array([0.0], dtype=np.float64))
    p.grad[...] = 1.0
    state = AdamState([p])
    adam_step([p], state, lr=0.1)
    assert p.data[0] == pytest.approx(-0.1, abs=1e-6)


def test_adam_deterministic_for_identical_inputs():
    rng = np.random.default_rng(0)
    g = rng.random(5).astype(np.float32)
    ps = []
    for _ in range(2):
        p = Tensor(np.linspace(-1, 1, 5).astype(np.float32))
        state = AdamState([p])
        for _ in range(10):
            p.grad[...] = g
            adam_step([p], state, lr=0.01)
        ps.append(p.data.copy())
    np.testing.assert_array_equal(ps[0], ps[1])


# ---------------------------------------------------------------- schedule

def test_lr_schedule_paper_boundaries():
    cfg = TrainConfig(total_iterations=6000, base_lr=1e-4)
    assert lr_schedule(0, cfg) == 1e-4
    assert lr_schedule(4999, cfg) == 1e-4
    assert lr_schedule(5000, cfg) == pytest.approx(1e-5)
    assert lr_schedule(5999, cfg) == pytest.approx(1e-5)


def test_lr_schedule_single_drop():
    cfg = TrainConfig(total_iterations=3000, base_lr=2e-3)
    rates = [lr_schedule(i, cfg) for i in range(cfg.total_iterations)]
    changes = [i for i in range(1, len(rates)) if rates[i] != rates[i - 1]]
    assert changes == [cfg.total_iterations - 1000]
    assert rates[-1] == pytest.approx(cfg.base_lr / 10)


def test_train_config_validation():
    with pytest.raises(ValueError, match="window"):
        TrainConfig(total_iterations=500, lr_drop_window=1000)


# ------------------------------------------------------------ augmentation

def test_augment_zero_range_is_identity():
    rng = np.random.default_rng(1)
    img = toy_image(rng)
    out = augment_translate(img, np.random.default_rng(2), translation_range=0)
    np.testing.assert_array_equal(out.data, img.data)


def test_translate_roundtrip_restores_interior():
    rng = np.random.default_rng(3)
    img = toy_image(rng)
    fwd = translate_image(img, 2, 0)
    back = translate_image(fwd, -2, 0)
    np.testing.assert_array_equal(back.data[:, 2:-2], img.data[:, 2:-2])


def test_translate_fills_with_zero():
    img = SliceImage(4, 4, np.full((4, 4), 9, dtype=np.uint8))
    out = translate_image(img, 1, -2)
    assert np.all(out.data[:, 0] == 0)
    assert np.all(out.data[2:, :] == 0)


def test_augment_shift_distribution_uniform():
    # chi-square over the 11 x 11 shift grid at range 5
    rng = np.random.default_rng(4)
    marker = np.zeros((31, 31), dtype=np.uint8)
    marker[15, 15] = 255
    img = SliceImage(31, 31, marker)
    counts = np.zeros((11, 11))
    n = 10_000
    for _ in range(n):
        out = augment_translate(img, rng, translation_range=5)
        r, c = np.argwhere(out.data == 255)[0]
        counts[r - 10, c - 10] += 1
    expected = n / 121.0
    stat = ((counts - expected) ** 2 / expected).sum()
    assert stat < chi2.ppf(0.999, df=120)


# ------------------------------------------------------------------- train

def test_train_single_pair_overfits():
    rng = np.random.default_rng(5)
    dataset = toy_dataset(rng, n=1)
    cfg = NetworkConfig.parse(TOY_NET, 12, 10)
    tc = TrainConfig(
        total_iterations=200, base_lr=5e-3, lr_drop_window=100,
        translation_range=0, seed=7,
    )
    net, log = train(dataset, cfg, tc)
    assert log[-1].loss < log[0].loss / 100.0


def test_train_same_seed_bit_identical():
    rng = np.random.default_rng(6)
    dataset = toy_dataset(rng, n=3)
    cfg = NetworkConfig.parse(TOY_NET, 12, 10)
    tc = TrainConfig(total_iterations=30, base_lr=1e-3, lr_drop_window=10,
                     translation_range=2, seed=11)
    net1, _ = train(dataset, cfg, tc)
    net2, _ = train(dataset, cfg, tc)
    for p, q in zip(net1.params(), net2.params()):
        np.testing.assert_array_equal(p.data, q.data)


def test_train_invariant_to_dataset_order():
    rng = np.random.default_rng(7)
    dataset = toy_dataset(rng, n=5)
    cfg = NetworkConfig.parse(TOY_NET, 12, 10)
    tc = TrainConfig(total_iterations=25, base_lr=1e-3, lr_drop_window=5,
                     translation_range=1, seed=13)
    net1, _ = train(dataset, cfg, tc)
    net2, _ = train(list(reversed(dataset)), cfg, tc)
    for p, q in zip(net1.params(), net2.params()):
        np.testing.assert_array_equal(p.data, q.data)


def test_train_runs_exact_iteration_count():
    rng = np.random.default_rng(8)
    dataset = toy_dataset(rng, n=2)
    cfg = NetworkConfig.parse(TOY_NET, 12, 10)
    tc = TrainConfig(total_iterations=17, base_lr=1e-3, lr_drop_window=5,
                     translation_range=0, seed=1)
    _, log = train(dataset, cfg, tc)
    assert [r.iteration for r in log] == list(range(17))


def test_train_empty_dataset_rejected():
    cfg = NetworkConfig.parse(TOY_NET, 12, 10)
    with pytest.raises(ValueError, match="empty"):
        train([], cfg, TrainConfig(total_iterations=5, lr_drop_window=1))


# ----------------------------------------------------------------- predict

def test_predict_deterministic():
    rng = np.random.default_rng(9)
    net = build_network(NetworkConfig.parse(TOY_NET, 12, 10), seed=3)
    img = toy_image(rng)
    assert predict(net, img) == predict(net, img)


def test_predict_matches_batched_forward():
    from liverfat.autodiff import forward

    rng = np.random.default_rng(10)
    net = build_network(NetworkConfig.parse(TOY_NET, 12, 10), seed=4)
    imgs = [toy_image(rng) for _ in range(3)]
    batch = np.stack([decode8(i.data) for i in imgs])
    batched = forward(net, batch)
    singles = [predict(net, i) for i in imgs]
    np.testing.assert_allclose(singles, batched, rtol=1e-6)


# -------------------------------------------------------------------- folds

def test_cv_plan_singleton_folds():
    plan = make_cv_plan([f"s{i}" for i in range(10)], k=10, seed=1)
    assert plan.k == 10
    assert all(len(f) == 1 for f in plan.folds)


def test_cv_plan_dataset_a_sizes():
    plan = make_cv_plan([f"s{i:05d}" for i in range(4418)], k=10, seed=2)
    sizes = sorted(len(f) for f in plan.folds)
    assert set(sizes) == {441, 442}
    assert sum(sizes) == 4418


def test_cv_plan_disjoint_and_covering():
    ids = [f"s{i}" for i in range(37)]
    plan = make_cv_plan(ids, k=10, seed=3)
    flat = sorted(i for f in plan.folds for i in f)
    assert flat == sorted(ids)


def test_cv_plan_deterministic():
    ids = [f"s{i}" for i in range(25)]
    a = make_cv_plan(ids, k=5, seed=4)
    b = make_cv_plan(ids, k=5, seed=4)
    assert a.folds == b.folds


def test_cv_plan_rejects_duplicates():
    with pytest.raises(ValueError, match="duplicate"):
        make_cv_plan(["a", "a", "b"], k=2, seed=0)


# -------------------------------------------------------------- checkpoint

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    net = build_network(NetworkConfig.parse(TOY_NET, 12, 10), seed=5)
    path = tmp_path / "model.ffn"
    save_model(net, path)
    assert path.read_bytes()[:4] == b"FFN1"
    loaded = load_model(path)
    assert loaded.config == net.config
    for p, q in zip(net.params(), loaded.params()):
        np.testing.assert_array_equal(p.data, q.data)
    img = toy_image(rng)
    assert predict(net, img) == predict(loaded, img)


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "bad.ffn"
    p.write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(ValueError, match="magic"):
        load_model(p)
