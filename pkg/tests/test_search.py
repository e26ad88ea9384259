"""Alternating weight/logit search: crops, EMA twins, REINFORCE schedule."""

import numpy as np
import pytest

from rainnas.autodiff import Adam, Tensor
from rainnas.autodiff import ops
from rainnas.network import NetworkConfig, SearchNetwork, init_theta
from rainnas.search import (SearchConfig, TwinState, contrastive_loss,
                            ema_sync, random_crop4, run_search,
                            scheduled_block, search_step_theta,
                            search_step_weights, write_search_log)


def tiny_state(seed=0, num_blocks=2, lr=1e-3):
    rng = np.random.default_rng(seed)
    cfg = NetworkConfig(in_channels=2, feature_width=4, num_blocks=num_blocks,
                        grid_h=12, grid_w=12, projector_pool=2)
    online = SearchNetwork(cfg, rng=rng)
    target = SearchNetwork(cfg, rng=rng)
    target.load_state_dict(online.state_dict())
    theta = init_theta(num_blocks, rng=rng)
    return TwinState(online=online, target=target, theta=theta,
                     optimizer=Adam(online.parameters(), lr))


def tiny_cfg(**kw):
    kw.setdefault("epochs", 4)
    kw.setdefault("num_blocks", 2)
    kw.setdefault("u", 2)
    kw.setdefault("batch_size", 4)
    kw.setdefault("crop", 8)
    kw.setdefault("feature_width", 4)
    kw.setdefault("projector_pool", 2)
    return SearchConfig(**kw)


# ----------------------------------------------------------------------
# crops
# ----------------------------------------------------------------------

def test_random_crop4_shapes_and_membership():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 2, 12, 12))
    crops = random_crop4(x, 8, rng)
    assert len(crops) == 4
    for c in crops:
        assert c.shape == (3, 2, 8, 8)
    # each crop is a contiguous window of the source sample
    c0 = crops[0][1]
    found = any(np.array_equal(c0, x[1, :, r:r + 8, s:s + 8])
                for r in range(5) for s in range(5))
    assert found


def test_random_crop4_covers_distinct_offsets():
    rng = np.random.default_rng(1)
    x = np.arange(1 * 1 * 12 * 12, dtype=np.float64).reshape(1, 1, 12, 12)
    corners = {crops[0][0, 0, 0, 0]
               for crops in (random_crop4(x, 8, rng) for _ in range(50))}
    assert len(corners) > 5


def test_random_crop4_seeded_and_errors():
    x = np.random.default_rng(2).normal(size=(2, 1, 12, 12))
    a = random_crop4(x, 8, np.random.default_rng(3))
    b = random_crop4(x, 8, np.random.default_rng(3))
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)
    with pytest.raises(ValueError, match="exceeds"):
        random_crop4(x, 13, np.random.default_rng(0))
    with pytest.raises(ValueError, match="4-d"):
        random_crop4(x[0], 8, np.random.default_rng(0))


def test_crop_equal_to_grid_is_identity():
    x = np.random.default_rng(4).normal(size=(2, 1, 12, 12))
    for c in random_crop4(x, 12, np.random.default_rng(5)):
        np.testing.assert_array_equal(c, x)


# ----------------------------------------------------------------------
# contrastive loss and EMA
# ----------------------------------------------------------------------

def test_contrastive_loss_value_and_detached_targets():
    rng = np.random.default_rng(6)
    q1 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    q2 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    k1 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    k2 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    loss = contrastive_loss(q1, q2, k1, k2)
    want = np.mean((q1.data - k1.data) ** 2) + np.mean((q2.data - k2.data) ** 2)
    assert abs(loss.item() - want) < 1e-12
    loss.backward()
    assert q1.grad is not None and q2.grad is not None
    assert k1.grad is None and k2.grad is None


def test_ema_sync_endpoints_exact():
    state = tiny_state()
    online = state.online.parameters()
    target = state.target.parameters()
    for p in online:
        p.data += 1.0
    snap = [t.data.copy() for t in target]
    ema_sync(target, online, 1.0)          # m=1: target frozen
    for t, s in zip(target, snap):
        np.testing.assert_array_equal(t.data, s)
    ema_sync(target, online, 0.0)          # m=0: full copy
    for t, o in zip(target, online):
        np.testing.assert_array_equal(t.data, o.data)


def test_ema_sync_hand_formula():
    state = tiny_state(seed=1)
    online = state.online.parameters()
    target = state.target.parameters()
    for p in online:
        p.data *= 1.7
    expected = [t.data * 0.99 + (1.0 - 0.99) * o.data
                for t, o in zip(target, online)]
    ema_sync(target, online, 0.99)
    for t, e in zip(target, expected):
        np.testing.assert_array_equal(t.data, e)


def test_ema_sync_errors():
    state = tiny_state(seed=2)
    ps = state.online.parameters()
    with pytest.raises(ValueError, match="momentum"):
        ema_sync(ps, ps, 1.5)
    with pytest.raises(ValueError, match="length"):
        ema_sync(ps[:-1], ps, 0.5)
    with pytest.raises(ValueError, match="shape"):
        ema_sync([ps[1]], [ps[0]], 0.5)


# ----------------------------------------------------------------------
# schedule
# ----------------------------------------------------------------------

def test_scheduled_block_t24_n4():
    seq = [scheduled_block(t, 24, 4) for t in range(24)]
    assert seq == [t // 6 for t in range(24)]
    assert seq == sorted(seq) and set(seq) == {0, 1, 2, 3}


def test_scheduled_block_clamps_remainder():
    # T=10, N=4: span 2, epochs 8..9 clamp to the last block
    assert [scheduled_block(t, 10, 4) for t in range(10)] == \
        [0, 0, 1, 1, 2, 2, 3, 3, 3, 3]


def test_scheduled_block_rejects_short_run():
    with pytest.raises(ValueError, match="epochs"):
        scheduled_block(0, 3, 4)


# ----------------------------------------------------------------------
# phase steps
# ----------------------------------------------------------------------

def batch_for(state, n=4, seed=0):
    rng = np.random.default_rng(seed)
    x = np.abs(rng.normal(size=(n, 2, 12, 12)))
    y = np.abs(rng.normal(size=(n, 12, 12)))
    return x, y


def test_theta_phase_leaves_weights_and_buffers_bitwise():
    state = tiny_state(seed=3)
    cfg = tiny_cfg(epochs=4, num_blocks=2, u=2)
    x, _ = batch_for(state)
    before_online = {k: v.copy() for k, v in state.online.state_dict().items()}
    before_target = {k: v.copy() for k, v in state.target.state_dict().items()}
    theta_before = state.theta.copy()
    rng = np.random.default_rng(7)
    # two steps so the baseline is armed and theta actually moves
    search_step_theta((x, None), state, cfg, t=2, rng=rng)
    search_step_theta((x * 1.3, None), state, cfg, t=2, rng=rng)
    for k, v in state.online.state_dict().items():
        np.testing.assert_array_equal(v, before_online[k], err_msg=k)
    for k, v in state.target.state_dict().items():
        np.testing.assert_array_equal(v, before_target[k], err_msg=k)
    # epoch 2 of 4 schedules block 1; row 0 must be untouched
    np.testing.assert_array_equal(state.theta[0], theta_before[0])


def test_theta_first_step_sets_baseline_and_freezes_theta():
    state = tiny_state(seed=4)
    cfg = tiny_cfg()
    x, _ = batch_for(state, seed=1)
    theta_before = state.theta.copy()
    assert state.baseline is None
    loss = search_step_theta((x, None), state, cfg, t=0, rng=np.random.default_rng(8))
    # first advantage is loss - loss = 0: logits cannot move yet
    np.testing.assert_array_equal(state.theta, theta_before)
    assert state.baseline == pytest.approx(loss)


def test_theta_moves_toward_cheaper_op():
    # make the loss depend on the op only through rigging: feed two batches
    # with different losses and check the scheduled row changed after step 2
    state = tiny_state(seed=5)
    cfg = tiny_cfg()
    x, _ = batch_for(state, seed=2)
    rng = np.random.default_rng(9)
    search_step_theta((x, None), state, cfg, t=0, rng=rng)
    before = state.theta.copy()
    search_step_theta((x * 2.0, None), state, cfg, t=0, rng=rng)
    assert not np.array_equal(state.theta[0], before[0])
    np.testing.assert_array_equal(state.theta[1], before[1])


def test_weight_phase_updates_online_and_emas_target():
    state = tiny_state(seed=6, lr=1e-2)
    cfg = tiny_cfg(momentum=0.9)
    x, _ = batch_for(state, seed=3)
    online_before = [p.data.copy() for p in state.online.parameters()]
    target_before = [p.data.copy() for p in state.target.parameters()]
    search_step_weights((x, None), state, cfg, np.random.default_rng(10))
    moved = sum(not np.array_equal(p.data, b)
                for p, b in zip(state.online.parameters(), online_before))
    assert moved > 0
    for t, b, o in zip(state.target.parameters(), target_before,
                       state.online.parameters()):
        np.testing.assert_array_equal(t.data, b * 0.9 + (1.0 - 0.9) * o.data)


def test_weight_phase_target_never_accumulates_grad():
    state = tiny_state(seed=7, lr=1e-3)
    cfg = tiny_cfg()
    rng = np.random.default_rng(11)
    for step in range(5):
        x, _ = batch_for(state, seed=20 + step)
        search_step_weights((x, None), state, cfg, rng)
        assert all(p.grad is None for p in state.target.parameters())


# ----------------------------------------------------------------------
# full loop
# ----------------------------------------------------------------------

def test_run_search_smoke_and_log_shape():
    rng = np.random.default_rng(12)
    x = np.abs(rng.normal(size=(8, 2, 12, 12)))
    cfg = tiny_cfg(epochs=4, u=2, seed=5)
    res = run_search(x, cfg)
    assert len(res.architecture) == 2
    assert all(k in ("RB", "SAB", "CAB") for k in res.architecture)
    assert res.theta.shape == (2, 3)
    assert len(res.log) == 4
    assert res.network is not None


def test_run_search_phase_split_matches_u():
    rng = np.random.default_rng(13)
    x = np.abs(rng.normal(size=(6, 2, 12, 12)))
    for epochs, u in [(6, 2), (6, 3), (5, 2), (4, 4)]:
        cfg = tiny_cfg(epochs=epochs, u=u, seed=3)
        res = run_search(x, cfg)
        w_epochs = sum(row["phase"] == "W" for row in res.log)
        theta_epochs = sum(row["phase"] == "theta" for row in res.log)
        assert theta_epochs == -(-epochs // u)          # ceil
        assert w_epochs == epochs - theta_epochs
        for row in res.log:
            if row["phase"] == "theta":
                assert row["block"] == scheduled_block(
                    row["epoch"], epochs, cfg.num_blocks) + 1
            else:
                assert row["block"] is None


def test_run_search_deterministic_under_seed():
    rng = np.random.default_rng(14)
    x = np.abs(rng.normal(size=(6, 2, 12, 12)))
    r1 = run_search(x, tiny_cfg(seed=9))
    r2 = run_search(x, tiny_cfg(seed=9))
    assert r1.architecture == r2.architecture
    np.testing.assert_array_equal(r1.theta, r2.theta)
    for a, b in zip(r1.network.parameters(), r2.network.parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_run_search_supervised_arm():
    rng = np.random.default_rng(15)
    x = np.abs(rng.normal(size=(6, 2, 12, 12)))
    y = np.abs(rng.normal(size=(6, 12, 12)))
    cfg = tiny_cfg(supervised=True, seed=4)
    with pytest.raises(ValueError, match="supervised"):
        run_search(x, cfg)
    res = run_search(x, cfg, y=y)
    assert len(res.architecture) == 2


def test_run_search_input_validation():
    cfg = tiny_cfg()
    with pytest.raises(ValueError, match="nonempty"):
        run_search(np.empty((0, 2, 12, 12)), cfg)
    with pytest.raises(ValueError, match="crop"):
        run_search(np.ones((4, 2, 6, 6)), cfg)
    state = tiny_state(num_blocks=3)
    with pytest.raises(ValueError, match="theta"):
        run_search(np.ones((4, 2, 12, 12)), cfg, state=state)


def test_search_config_validation():
    with pytest.raises(ValueError, match="epochs"):
        SearchConfig(epochs=2, num_blocks=4)
    with pytest.raises(ValueError, match="u must"):
        SearchConfig(u=1)
    with pytest.raises(ValueError, match="momentum"):
        SearchConfig(momentum=1.0)
    with pytest.raises(ValueError, match="positive"):
        SearchConfig(batch_size=0)


def test_write_search_log(tmp_path):
    log = [{"epoch": 0, "phase": "theta", "block": 1, "loss": 0.5},
           {"epoch": 1, "phase": "W", "block": None, "loss": 0.25}]
    path = tmp_path / "search.csv"
    write_search_log(path, log)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,phase,block,loss"
    assert lines[1] == "0,theta,1,0.5"
    assert lines[2] == "1,W,,0.25"
