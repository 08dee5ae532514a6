import asyncio
import time

import pytest

from varlab.errors import ReplicateError
from varlab.models import ReplicateStatus
from varlab.worker import WorkerPool, run_replicates


def test_results_come_back_in_index_order():
    """Test that slow early replicates do not reorder the results"""
    def job(index):
        time.sleep(0.01 * (index % 3 == 0))
        return index * index

    assert run_replicates(job, 20, threads=4) == [i * i for i in range(20)]


@pytest.mark.parametrize("threads", [1, 3, 8])
def test_pool_size_does_not_change_results(threads):
    assert run_replicates(lambda i: 2 * i + 1, 17, threads) == [2 * i + 1 for i in range(17)]


def test_failed_replicate_raises_in_strict_mode():
    def job(index):
        if index in (4, 9):
            raise ValueError("bad draw")
        return index

    with pytest.raises(ReplicateError) as excinfo:
        run_replicates(job, 12, threads=3)
    assert excinfo.value.replicate == 4
    assert excinfo.value.error == "ValueError: bad draw"


def test_failed_replicates_are_recorded():
    def job(index):
        if index % 5 == 2:
            raise ArithmeticError("nan")
        return index

    outcomes = run_replicates(job, 12, threads=3, strict=False)
    assert [o.index for o in outcomes] == list(range(12))
    failed = [o.index for o in outcomes if o.status is ReplicateStatus.FAILED]
    assert failed == [2, 7]
    assert all(o.status is ReplicateStatus.COMPLETED for o in outcomes if o.index not in failed)
    assert outcomes[7].error == "ArithmeticError: nan"
    assert outcomes[7].result is None


def test_zero_replicates():
    assert run_replicates(lambda i: i, 0) == []


def test_pool_outcomes_and_shutdown():
    pool = WorkerPool(lambda i: -i, pool_size=2)
    outcomes = asyncio.run(pool.run(5))
    assert [o.result for o in outcomes] == [0, -1, -2, -3, -4]
    assert not pool.running
    assert pool.task_queue.empty()
