"""Contrastive loss closed forms, gradients, and training-loop behavior."""

import math

import numpy as np
import pytest

from prefalign.content import ArrayProvider
from prefalign.errors import BatchTooSmallError
from prefalign.model import TowerConfig, TwinTowerModel
from prefalign.nn.tensor import Tensor
from prefalign.sampling import SamplingConfig
from prefalign.training import TrainConfig, all_action_contrastive_loss, assemble_batch, train

from gradcheck import max_rel_error, numeric_gradients
from synthetic import make_cluster_data


def unit(rng, *shape):
    m = rng.normal(size=shape)
    return m / np.linalg.norm(m, axis=-1, keepdims=True)


class TestLossClosedForms:
    def test_identical_embeddings_uniform_logits(self):
        # every similarity equals 1: denominator has the positive plus
        # (B-1)*N_t equal negatives, so the loss is ln(1 + (B-1)*N_t)
        b, n_h, n_t, d = 8, 3, 10, 6
        e = np.zeros(d)
        e[0] = 1.0
        user = Tensor(np.tile(e, (b, n_h, 1)))
        item = Tensor(np.tile(e, (b, n_t, 1)))
        loss = all_action_contrastive_loss(user, item, tau=0.05)
        assert abs(loss.item() - math.log(1 + (b - 1) * n_t)) < 1e-5

    def test_two_user_orthogonal_case(self):
        # u_b . i_b = 1, u_b . i_other = 0, tau=1:
        # loss = -ln(e / (e + 1)) = ln(1 + exp(-1))
        user = Tensor(np.eye(2, 4).reshape(2, 1, 4), dtype=np.float64)
        item = Tensor(np.eye(2, 4).reshape(2, 1, 4), dtype=np.float64)
        loss = all_action_contrastive_loss(user, item, tau=1.0)
        assert abs(loss.item() - math.log(1 + math.exp(-1))) < 1e-6

    def test_batch_too_small(self):
        one = Tensor(np.ones((1, 2, 4)))
        with pytest.raises(BatchTooSmallError):
            all_action_contrastive_loss(one, one, tau=1.0)


class TestLossGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        b, n_h, n_t, d = 3, 2, 2, 4
        user = unit(rng, b, n_h, d)
        item = unit(rng, b, n_t, d)
        ids = rng.integers(1, 5, size=(b, n_t))  # small id range forces collisions

        ut = Tensor(user, requires_grad=True, dtype=np.float64)
        it = Tensor(item, requires_grad=True, dtype=np.float64)
        all_action_contrastive_loss(ut, it, tau=0.5, item_ids=ids).backward()
        analytic = [ut.grad, it.grad]

        def f(arrs):
            return all_action_contrastive_loss(
                Tensor(arrs[0], dtype=np.float64), Tensor(arrs[1], dtype=np.float64),
                tau=0.5, item_ids=ids,
            ).item()

        numeric = numeric_gradients(f, [user, item])
        assert max_rel_error(analytic, numeric) < 1e-4


class TestLossProperties:
    def test_permutation_invariant_over_users(self):
        rng = np.random.default_rng(3)
        b, n_h, n_t, d = 5, 2, 3, 8
        user, item = unit(rng, b, n_h, d), unit(rng, b, n_t, d)
        ids = rng.integers(1, 100, size=(b, n_t))
        perm = rng.permutation(b)
        a = all_action_contrastive_loss(Tensor(user, dtype=np.float64), Tensor(item, dtype=np.float64), 0.1, ids)
        p = all_action_contrastive_loss(
            Tensor(user[perm], dtype=np.float64), Tensor(item[perm], dtype=np.float64), 0.1, ids[perm]
        )
        assert abs(a.item() - p.item()) < 1e-10

    def test_raising_positive_similarity_lowers_loss(self):
        # geometry keeps every other pairwise similarity fixed while the
        # positive pair's angle closes
        def build(theta):
            user = np.zeros((2, 1, 4))
            item = np.zeros((2, 1, 4))
            user[0, 0, 0] = 1.0
            user[1, 0, 1] = 1.0
            item[0, 0, 0], item[0, 0, 2] = math.cos(theta), math.sin(theta)
            item[1, 0, 3] = 1.0
            return all_action_contrastive_loss(
                Tensor(user, dtype=np.float64), Tensor(item, dtype=np.float64), tau=1.0
            ).item()

        losses = [build(t) for t in (1.2, 0.8, 0.4, 0.0)]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_same_id_negatives_masked(self):
        # a colliding cross-user negative is excluded: with both users
        # holding the same item id, each pair sees zero negatives
        rng = np.random.default_rng(4)
        e = unit(rng, 1, 1, 8)
        user = Tensor(np.concatenate([e, e]), dtype=np.float64)
        item = Tensor(np.concatenate([e, e]), dtype=np.float64)
        ids = np.array([[7], [7]])
        loss = all_action_contrastive_loss(user, item, tau=0.05, item_ids=ids)
        assert abs(loss.item()) < 1e-6  # only the positive remains

    def test_id_mask_none_keeps_negatives(self):
        rng = np.random.default_rng(4)
        e = unit(rng, 1, 1, 8)
        user = Tensor(np.concatenate([e, e]), dtype=np.float64)
        item = Tensor(np.concatenate([e, e]), dtype=np.float64)
        loss = all_action_contrastive_loss(user, item, tau=1.0)
        assert abs(loss.item() - math.log(2)) < 1e-6


class TestBatchAssembly:
    def make_sequences(self, n_users=6, hist=12, tar=8):
        data = make_cluster_data(n_users=n_users, hist_len=hist, tar_len=tar, n_items=80, n_clusters=4)
        return data.train_sequences

    def test_rectangular_selection(self):
        seqs = self.make_sequences()
        cfg = SamplingConfig(max_hist=10, max_tar=6, n_hist=4, n_tar=3)
        batch = assemble_batch(seqs, cfg, seed=0, epoch=0)
        assert batch.size == len(seqs)
        for hist, tar, hp, tp in zip(batch.hist_items, batch.tar_items,
                                     batch.hist_positions, batch.tar_positions):
            assert len(hist) <= 10 and len(tar) <= 6
            assert len(hp) == 4 and len(tp) == 3
            assert hp.max() < len(hist) and tp.max() < len(tar)
            assert len(set(hp.tolist())) == 4 and len(set(tp.tolist())) == 3

    def test_weighted_flag_changes_stage2_not_stage1(self):
        seqs = self.make_sequences(hist=30, tar=14)
        weighted = SamplingConfig(max_hist=16, max_tar=8, n_hist=5, n_tar=3, weighted=True)
        uniform = SamplingConfig(max_hist=16, max_tar=8, n_hist=5, n_tar=3, weighted=False)
        bw = assemble_batch(seqs, weighted, seed=11, epoch=0)
        bu = assemble_batch(seqs, uniform, seed=11, epoch=0)
        assert bw.hist_items == bu.hist_items
        assert bw.tar_items == bu.tar_items
        hist_differs = any(
            not np.array_equal(a, b) for a, b in zip(bw.hist_positions, bu.hist_positions)
        )
        assert hist_differs

    def test_deterministic_given_seed(self):
        seqs = self.make_sequences()
        cfg = SamplingConfig(max_hist=10, max_tar=6, n_hist=4, n_tar=3)
        b1 = assemble_batch(seqs, cfg, seed=5, epoch=2)
        b2 = assemble_batch(seqs, cfg, seed=5, epoch=2)
        assert b1.hist_items == b2.hist_items
        assert all(np.array_equal(a, b) for a, b in zip(b1.hist_positions, b2.hist_positions))


def small_setup(n_users=24, seed=0):
    data = make_cluster_data(n_users=n_users, n_items=80, n_clusters=4, seed=seed)
    cfg = TowerConfig(d_content=32, d_model=32, n_layers=1, n_heads=2, d_out=16, max_len=32)
    model = TwinTowerModel(cfg, seed=seed)
    sampling = SamplingConfig(max_hist=16, max_tar=8, n_hist=4, n_tar=3)
    train_cfg = TrainConfig(epochs=1, batch_size=8, lr=1e-3, warmup_steps=2)
    return data, model, sampling, train_cfg


class TestTrainLoop:
    def test_deterministic_checkpoints(self):
        data, _, sampling, train_cfg = small_setup()
        states = []
        for _ in range(2):
            model = TwinTowerModel(TowerConfig(d_content=32, d_model=32, n_layers=1,
                                               n_heads=2, d_out=16, max_len=32), seed=0)
            train(model, data.train_sequences, data.provider, sampling, train_cfg, seed=7)
            states.append(model.state_dict())
        for k in states[0]:
            assert np.array_equal(states[0][k], states[1][k]), k

    def test_step0_loss_near_uniform_logit_form(self):
        # tau=1 keeps initial logits near-uniform, where the closed form
        # ln(1 + (B-1) * n_tar) applies
        data, model, sampling, _ = small_setup()
        train_cfg = TrainConfig(epochs=1, batch_size=8, tau=1.0, lr=0.0, warmup_steps=0)
        log = train(model, data.train_sequences, data.provider, sampling, train_cfg, seed=0)
        expected = math.log(1 + 7 * sampling.n_tar)
        assert abs(log[0]["loss"] - expected) / expected < 0.15

    def test_loss_decreases_with_training(self):
        data, model, sampling, _ = small_setup()
        train_cfg = TrainConfig(epochs=8, batch_size=8, lr=2e-3, warmup_steps=4)
        log = train(model, data.train_sequences, data.provider, sampling, train_cfg, seed=1)
        assert log[-1]["loss"] < log[0]["loss"]

    def test_log_file_written(self, tmp_path):
        data, model, sampling, train_cfg = small_setup()
        path = tmp_path / "metrics.jsonl"
        log = train(model, data.train_sequences, data.provider, sampling, train_cfg,
                    seed=0, log_path=path)
        import json

        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(lines) == len(log) == train_cfg.epochs
        assert {"epoch", "loss", "lr", "wallclock_s"} <= set(lines[0])

    def test_missing_item_reports_context(self):
        data, model, sampling, train_cfg = small_setup(n_users=4)
        provider = ArrayProvider([1], np.zeros((1, 32), dtype=np.float32))
        from prefalign.errors import MissingItemError

        with pytest.raises(MissingItemError) as e:
            train(model, data.train_sequences, provider, sampling, train_cfg, seed=0)
        assert "user" in str(e.value) and "step" in str(e.value)

    def test_sampling_caps_above_max_len_rejected(self):
        from prefalign.errors import ConfigError

        data, model, _, train_cfg = small_setup()
        too_long = SamplingConfig(max_hist=model.config.max_len + 1, max_tar=8,
                                  n_hist=4, n_tar=3)
        with pytest.raises(ConfigError):
            train(model, data.train_sequences, data.provider, too_long, train_cfg, seed=0)

    def test_id_table_mode_trains(self):
        data, _, sampling, _ = small_setup(n_users=8)
        vocab = tuple(sorted(data.catalog.ids()))
        cfg = TowerConfig(d_content=16, d_model=32, n_layers=1, n_heads=2,
                          d_out=16, max_len=32, id_vocab=vocab)
        model = TwinTowerModel(cfg, seed=0)
        before = model.id_table.data.copy()
        train_cfg = TrainConfig(epochs=2, batch_size=8, lr=1e-2, warmup_steps=0)
        train(model, data.train_sequences, provider=None, sampling_cfg=sampling,
              train_cfg=train_cfg, seed=0)
        assert not np.array_equal(before, model.id_table.data)
