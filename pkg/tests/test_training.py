"""Tests for the per-task training context."""
from __future__ import annotations

import numpy as np
import pytest

from cpg.controller import build_backbone
from cpg.errors import LedgerError
from cpg.ledger import commit_task, init_ledger
from cpg.nn import build_network
from cpg.training import (
    Hyper,
    TaskTrainer,
    derive_seed,
    epoch_seed,
    glorot_head,
    pad_head,
)

from .conftest import HIDDEN, INPUT_DIM


def test_pad_head_zero_extends_rows():
    """Test a 2-input, 2-class head padded to 3 inputs."""
    head = np.array([1.0, 2.0, 3.0, 4.0, 0.5, -0.5], dtype=np.float32)

    padded = pad_head(head, 2, 2, 3)

    assert padded.tolist() == [1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.5, -0.5]
    assert pad_head(head, 2, 2, 2) is head


def test_glorot_head_layout():
    """Test head weights lie in the Glorot bound and biases start at zero."""
    head = glorot_head(8, 3, np.random.default_rng(0))
    assert head.shape == (8 * 3 + 3,)
    assert head.dtype == np.float32
    assert np.all(np.abs(head[:24]) <= np.sqrt(6.0 / 11))
    assert np.all(head[24:] == 0.0)


def test_seeds_are_deterministic_and_distinct():
    """Test derived seeds repeat for equal inputs and differ otherwise."""
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert epoch_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert len({epoch_seed(0, 1, counter) for counter in range(20)}) == 20


def test_trainer_rejects_committed_task(easy_tasks, hyper):
    """Test a trainer can only be built for the next task."""
    net = build_network(build_backbone(INPUT_DIM, HIDDEN), seed=0)
    ledger = commit_task(init_ledger(net.n_params), 1, [0, 1])
    with pytest.raises(LedgerError):
        TaskTrainer(net, ledger, 1, easy_tasks.tasks[0], hyper, 0)
    with pytest.raises(LedgerError):
        TaskTrainer(net, ledger, 3, easy_tasks.tasks[0], hyper, 0)


def test_trainer_learns_an_easy_task(trained_trainer):
    """Test a few epochs separate two distant blobs."""
    assert trained_trainer.evaluate() >= 0.9


def test_trainer_works_on_a_copy(easy_tasks, hyper):
    """Test training never mutates the network passed in."""
    net = build_network(build_backbone(INPUT_DIM, HIDDEN), seed=0)
    original = net.params.copy()
    trainer = TaskTrainer(net, init_ledger(net.n_params), 1, easy_tasks.tasks[0], hyper, 0)
    trainer.train_epoch()
    assert net.params.tobytes() == original.tobytes()


def test_training_is_reproducible(easy_tasks, hyper):
    """Test two trainers with equal seeds reach identical weights."""
    results = []
    for _ in range(2):
        net = build_network(build_backbone(INPUT_DIM, HIDDEN), seed=9)
        trainer = TaskTrainer(
            net, init_ledger(net.n_params), 1, easy_tasks.tasks[0], hyper, 9
        )
        trainer.train_epoch()
        trainer.train_epoch()
        results.append((trainer.net.params.tobytes(), trainer.head.tobytes()))
    assert results[0] == results[1]


def test_snapshot_and_restore(trained_trainer):
    """Test a restored trainer matches its snapshot bit for bit."""
    snapshot = trained_trainer.snapshot()
    accuracy = trained_trainer.evaluate()

    trained_trainer.prune(np.arange(10))
    trained_trainer.train_epoch()
    trained_trainer.restore(snapshot)

    assert trained_trainer.net.params.tobytes() == snapshot.params.tobytes()
    assert trained_trainer.head.tobytes() == snapshot.head.tobytes()
    assert np.all(trained_trainer.trainable)
    assert trained_trainer.evaluate() == accuracy


def test_prune_only_touches_trainable_weights(easy_tasks, hyper):
    """Test pruning zeroes trainable weights and refuses owned ones."""
    net = build_network(build_backbone(INPUT_DIM, HIDDEN), seed=0)
    ledger = commit_task(init_ledger(net.n_params), 1, [0, 1, 2])
    trainer = TaskTrainer(net, ledger, 2, easy_tasks.tasks[1], hyper, 0)

    trainer.prune(np.array([5, 6]))
    assert trainer.net.params[[5, 6]].tolist() == [0.0, 0.0]
    assert not trainer.trainable[[5, 6]].any()

    with pytest.raises(LedgerError):
        trainer.prune(np.array([1]))
    with pytest.raises(LedgerError):
        trainer.prune(np.array([5]))


def test_reset_free_leaves_owned_weights(easy_tasks, hyper):
    """Test re-initialisation only draws new values for free weights."""
    net = build_network(build_backbone(INPUT_DIM, HIDDEN), seed=0)
    ledger = commit_task(init_ledger(net.n_params), 1, np.arange(0, 40))
    trainer = TaskTrainer(net, ledger, 2, easy_tasks.tasks[1], hyper, 0)
    before = trainer.net.params.copy()

    trainer.reset_free()

    assert trainer.net.params[:40].tobytes() == before[:40].tobytes()
    assert not np.array_equal(trainer.net.params[40:], before[40:])


def test_grow_extends_trainer_state(easy_tasks):
    """Test growth widens the backbone, the head and the trainable set."""
    hyper = Hyper(growth_noise=1e-3)
    net = build_network(build_backbone(INPUT_DIM, HIDDEN), seed=0)
    ledger = commit_task(init_ledger(net.n_params), 1, np.arange(net.n_params))
    trainer = TaskTrainer(net, ledger, 2, easy_tasks.tasks[1], hyper, 0)
    old_n, old_head = net.n_params, trainer.head.copy()

    trainer.grow([2, 0, 1, 0])

    # (6*2 + 2) new in layer 0, (2*8 + 14*1 + 1) in layer 2
    assert trainer.net.n_params == old_n + 45
    assert trainer.ledger.n_params == trainer.net.n_params
    assert trainer.head_in_width == 9
    assert trainer.head.shape == (9 * 2 + 2,)
    assert np.array_equal(trainer.head[:16], old_head[:16])
    assert np.array_equal(trainer.head[-2:], old_head[-2:])
    assert np.all(np.abs(trainer.net.params[old_n:]) <= 1.001e-3)
    assert trainer.trainable.sum() == trainer.net.n_params - old_n
    assert trainer.growth_events == 1
    trainer.train_epoch()
