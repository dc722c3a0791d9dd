# tests/test_utils.py

import time

import pytest

from utils.config import Config, get_config_summary, get_validation_details
from utils.errors import (
    AmbiguousSolutionError, ConfigValidationError, DataFileError, NoSolutionError, PreconditionError,
)
from utils.thread_manager import ThreadManager, run_ordered


def slow_square(value):
    # Later items finish first
    time.sleep(0.01 * (5 - value))
    return value * value


def test_run_ordered_keeps_item_order():
    assert run_ordered(slow_square, [0, 1, 2, 3, 4], max_workers=3) == [0, 1, 4, 9, 16]


def test_run_ordered_raises_first_failure():
    def fail_on_two(value):
        if value == 2:
            raise PreconditionError("two")
        return value

    with pytest.raises(PreconditionError, match='two'):
        run_ordered(fail_on_two, [0, 1, 2, 3], max_workers=2)


def test_duplicate_task_rejected():
    manager = ThreadManager(max_workers=1)
    manager.submit_task('a', slow_square, args=(4,))
    with pytest.raises(ValueError):
        manager.submit_task('a', slow_square, args=(4,))
    assert manager.wait_all() == [('a', 16)]
    assert manager.get_stats()['successful_tasks'] == 1


def test_default_settings_are_valid():
    assert get_validation_details()['is_valid']
    assert get_config_summary()['max_workers'] == Config.MAX_WORKERS


def test_bad_worker_count_is_an_error(monkeypatch):
    monkeypatch.setattr(Config, 'MAX_WORKERS', 0)
    details = get_validation_details()
    assert details['has_errors']
    assert any('MAX_WORKERS' in error for error in details['errors'])


def test_exit_codes():
    assert ConfigValidationError("bad", field='seed').exit_code == 2
    assert PreconditionError("bad").exit_code == 2
    assert NoSolutionError("none").exit_code == 3
    assert DataFileError("missing").exit_code == 4
    error = AmbiguousSolutionError("two", candidates=[1, 2])
    assert list(error.candidates) == [1, 2]
    assert isinstance(error, ArithmeticError)
