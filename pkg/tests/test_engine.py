from __future__ import annotations

import logging

import pytest

from oblatus.core.engine import ReplicationEngine, run_ordered


def test_inline_map_keeps_order():
    with ReplicationEngine(1) as engine:
        assert engine.map(pow, [(i, 2) for i in range(10)]) == [i * i for i in range(10)]


def test_pool_map_matches_inline():
    tasks = [(i, 3) for i in range(25)]
    with ReplicationEngine(3) as engine:
        pooled = engine.map(pow, tasks, label="cube")
    assert pooled == run_ordered(None, pow, tasks, label="cube")


def test_failure_is_logged_and_raised(caplog):
    def boom(x):
        if x == 2:
            raise RuntimeError("bad task")
        return x

    with caplog.at_level(logging.ERROR, logger="oblatus.engine"):
        with pytest.raises(RuntimeError):
            run_ordered(None, boom, [(i,) for i in range(4)], label="replica")
    assert "replica failed index=2" in caplog.text


def test_invalid_workers():
    with pytest.raises(ValueError):
        ReplicationEngine(0)
