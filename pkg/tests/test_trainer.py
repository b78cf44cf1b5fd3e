import math

import numpy as np
import pytest

from exprbench.errors import NonFiniteLoss, OutOfRange
from exprbench.losses import LossWeights, TripletConfig
from exprbench.metrics import TARGET_TWELVE
from exprbench.trainer import (
    Adam,
    EvalConfig,
    TrainingConfig,
    VelocityNet,
    batch_losses,
    evaluate_synthetic,
    make_batch,
    net_from_tensors,
    net_generator,
    net_to_tensors,
    one_step_generate,
    oracle_generator,
    train,
    train_step,
)
from exprbench.world import SyntheticWorldConfig, generate_world


def small_world(seed=0, **kw):
    return generate_world(SyntheticWorldConfig(seed=seed, n_identities=12, **kw))


def fresh_net(world, seed=0, hidden=16):
    rng = np.random.default_rng(seed)
    return VelocityNet(world.cfg.latent_dim, world.cfg.embed_dim, hidden, rng)


def test_velocity_net_deterministic_init():
    world = small_world()
    a = fresh_net(world, seed=3)
    b = fresh_net(world, seed=3)
    assert a.param_vector().tobytes() == b.param_vector().tobytes()
    x = np.zeros(world.cfg.latent_dim)
    e = np.zeros(world.cfg.embed_dim)
    assert np.array_equal(a.forward(x, 0.5, e), b.forward(x, 0.5, e))


def test_param_vector_round_trip():
    world = small_world()
    net = fresh_net(world)
    theta = net.param_vector()
    net.set_param_vector(theta * 2.0)
    assert np.array_equal(net.param_vector(), theta * 2.0)


def test_one_step_generate_vanishing_step():
    world = small_world()
    net = fresh_net(world)
    rng = np.random.default_rng(1)
    x_t = rng.standard_normal(world.cfg.latent_dim)
    e = world.encode_condition(world.registry.pairs[0][0], 0.5)
    t = 1.0 - 1e-12
    out = one_step_generate(net, x_t, t, e)
    assert np.max(np.abs(out - x_t)) < 1e-9
    with pytest.raises(OutOfRange):
        one_step_generate(net, x_t, 1.0, e)


def test_one_step_generate_zero_params_is_identity():
    world = small_world()
    net = fresh_net(world)
    net.set_param_vector(np.zeros(net.param_vector().size))
    x_t = np.ones(world.cfg.latent_dim)
    e = world.encode_condition(world.registry.pairs[0][0], 0.5)
    out = one_step_generate(net, x_t, 0.25, e)
    assert np.array_equal(out, x_t)


def test_batch_losses_weight_zeroing_reduces_to_fm():
    world = small_world()
    net = fresh_net(world)
    rng = np.random.default_rng(2)
    batch = make_batch(world, rng, list(range(12)))
    breakdown, _ = batch_losses(
        net, world, batch, TripletConfig(), LossWeights(lambda_sc=0.0, lambda_id=0.0), 0.3
    )
    assert breakdown["total"] == 0.5 * (breakdown["fm_a"] + breakdown["fm_b"])


def test_swap_equivariance_symmetric_mode():
    world = small_world()
    net = fresh_net(world)
    rng = np.random.default_rng(3)
    tcfg = TripletConfig()
    w = LossWeights()
    for _ in range(20):
        batch = make_batch(world, rng, list(range(12)))
        t = float(rng.random())
        a, _ = batch_losses(net, world, batch, tcfg, w, t, "symmetric", want_grads=False)
        b, _ = batch_losses(net, world, batch.swapped(), tcfg, w, t, "symmetric", want_grads=False)
        assert a["total"] == b["total"]
        assert a["sc"] == b["sc"]
        assert a["id"] == b["id"]


def test_asymmetric_mode_differs_and_is_single_branch():
    world = small_world()
    net = fresh_net(world)
    rng = np.random.default_rng(4)
    batch = make_batch(world, rng, list(range(12)))
    tcfg = TripletConfig()
    w = LossWeights()
    sym, _ = batch_losses(net, world, batch, tcfg, w, 0.4, "symmetric", want_grads=False)
    asym, _ = batch_losses(net, world, batch, tcfg, w, 0.4, "asymmetric", want_grads=False)
    assert sym["sc"] != asym["sc"]
    with pytest.raises(ValueError):
        batch_losses(net, world, batch, tcfg, w, 0.4, "both")


def test_train_step_is_deterministic_and_updates():
    world = small_world()
    tcfg = TripletConfig()
    w = LossWeights()

    def run_once():
        net = fresh_net(world, seed=9)
        opt = Adam(net.params(), lr=1e-3)
        rng = np.random.default_rng(9)
        batch = make_batch(world, rng, list(range(12)))
        train_step(net, batch, world, tcfg, w, opt, 0.3)
        return net.param_vector()

    first = run_once()
    second = run_once()
    assert first.tobytes() == second.tobytes()


def test_single_step_decreases_loss_on_most_batches():
    world = small_world()
    tcfg = TripletConfig()
    w = LossWeights()
    decreased = 0
    for seed in range(100):
        net = fresh_net(world, seed=seed)
        opt = Adam(net.params(), lr=1e-3)
        rng = np.random.default_rng(seed)
        batch = make_batch(world, rng, list(range(12)))
        t = float(rng.random())
        before, _ = batch_losses(net, world, batch, tcfg, w, t, want_grads=False)
        train_step(net, batch, world, tcfg, w, opt, t)
        after, _ = batch_losses(net, world, batch, tcfg, w, t, want_grads=False)
        if after["total"] < before["total"]:
            decreased += 1
    assert decreased >= 95


def test_train_zero_steps_returns_initial_net():
    world = small_world()
    tr = TrainingConfig(steps=0, seed=5, hidden=16)
    result = train(world, TripletConfig(), LossWeights(), tr, EvalConfig())
    assert result.curve == []
    expected = fresh_net(world, seed=5, hidden=16)
    assert result.net.param_vector().tobytes() == expected.param_vector().tobytes()
    assert result.report is not None


def test_train_is_deterministic_and_freezes_encoders():
    world = small_world()
    before_feat = world.encoders.feature_proj.tobytes()
    before_id = world.encoders.id_proj.tobytes()
    tr = TrainingConfig(steps=60, seed=1, hidden=16, log_every=30)
    a = train(world, TripletConfig(), LossWeights(), tr, EvalConfig())
    b = train(world, TripletConfig(), LossWeights(), tr, EvalConfig())
    assert a.net.param_vector().tobytes() == b.net.param_vector().tobytes()
    assert a.report == b.report
    assert [row["L_total"] for row in a.curve] == [row["L_total"] for row in b.curve]
    assert world.encoders.feature_proj.tobytes() == before_feat
    assert world.encoders.id_proj.tobytes() == before_id
    for row in a.curve:
        assert math.isfinite(row["L_total"])


def test_train_rejects_bad_mode():
    world = small_world()
    with pytest.raises(ValueError):
        train(world, TripletConfig(), LossWeights(), TrainingConfig(steps=1), EvalConfig(), mode="x")
    with pytest.raises(ValueError):
        TrainingConfig(mode="diagonal")


def test_evaluate_synthetic_oracle_generator_is_perfect():
    world = generate_world(SyntheticWorldConfig(seed=0))
    grid = np.linspace(0.0, 1.5, 7)
    eval_ids = list(range(56, 64))
    report, records = evaluate_synthetic(oracle_generator(world), world, grid, eval_ids)
    assert report.acc12 == 1.0
    assert report.mscr == 0.0
    assert report.cls12 == pytest.approx(1.0, abs=1e-9)
    # alpha=0 rows: the oracle adds nothing, so predicted intensity is 0
    zero_rows = [r for r in records if r.alpha == 0.0]
    assert zero_rows
    mean_zero = sum(r.s_e for r in zero_rows) / len(zero_rows)
    assert mean_zero <= 3.0 * world.cfg.noise_sigma


def test_evaluate_synthetic_grid_and_series_shape():
    world = generate_world(SyntheticWorldConfig(seed=1))
    grid = np.linspace(0.0, 1.5, 7)
    eval_ids = [60, 61]
    report, records = evaluate_synthetic(oracle_generator(world), world, grid, eval_ids)
    members = world.registry.members()
    assert len(records) == len(eval_ids) * len(members) * len(grid)
    assert report.cls_series == len(eval_ids) * len(members)
    with pytest.raises(ValueError):
        evaluate_synthetic(oracle_generator(world), world, [0.0, 1.0], eval_ids)


def test_net_generator_runs_and_feeds_metrics():
    world = small_world()
    net = fresh_net(world)
    grid = np.linspace(0.0, 1.5, 5)
    report, records = evaluate_synthetic(net_generator(net, world), world, grid, [10, 11])
    assert report.n_records == len(records)
    assert all(r.predicted in TARGET_TWELVE for r in records)


def test_non_finite_loss_raises():
    world = small_world()
    net = fresh_net(world)
    net.set_param_vector(np.full(net.param_vector().size, 1e200))
    rng = np.random.default_rng(6)
    batch = make_batch(world, rng, list(range(12)))
    opt = Adam(net.params(), lr=1e-3)
    with np.errstate(all="ignore"), pytest.raises(NonFiniteLoss):
        train_step(net, batch, world, TripletConfig(), LossWeights(), opt, 0.2, step_no=7)


def test_net_tensor_round_trip():
    world = small_world()
    net = fresh_net(world, seed=8)
    arrays, meta = net_to_tensors(net)
    back = net_from_tensors(arrays, meta)
    assert back.param_vector().tobytes() == net.param_vector().tobytes()
    assert back.hidden == net.hidden
