import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

from varlab.config import settings
from varlab.errors import ReplicateError
from varlab.models import ReplicateStatus

logger = logging.getLogger(__name__)


@dataclass
class ReplicateOutcome:
    index: int
    status: ReplicateStatus
    result: Any = None
    error: str | None = None


class WorkerPool:
    """Runs ``job(index)`` for every replicate index on a thread pool.

    Workers pull the next index from a shared queue, so fast workers take more
    replicates. Outcomes are keyed by index and returned in index order,
    which keeps every downstream reduction independent of the pool size.
    """

    def __init__(self, job: Callable[[int], Any], pool_size: int | None = None):
        self.job = job
        self.pool_size = max(1, pool_size or settings.THREADS)
        self.workers = []
        self.running = False
        self.task_queue: asyncio.Queue | None = None
        self.outcomes: dict[int, ReplicateOutcome] = {}
        self.executor = None

    async def start(self, n_rep: int):
        """Queue all replicates and start the workers"""
        self.task_queue = asyncio.Queue()
        for index in range(n_rep):
            self.outcomes[index] = ReplicateOutcome(index, ReplicateStatus.PENDING)
            self.task_queue.put_nowait(index)
        self.executor = ThreadPoolExecutor(max_workers=self.pool_size)
        self.running = True
        for i in range(min(self.pool_size, max(n_rep, 1))):
            self.workers.append(asyncio.create_task(self.worker(i)))

    async def stop(self):
        """Stop all workers and release the threads"""
        self.running = False
        for worker in self.workers:
            worker.cancel()
        await asyncio.gather(*self.workers, return_exceptions=True)
        if self.executor is not None:
            self.executor.shutdown(wait=True)

    async def worker(self, worker_id: int):
        logger.debug("Worker %d started", worker_id)
        while self.running:
            try:
                index = self.task_queue.get_nowait()
            except asyncio.QueueEmpty:
                break
            await self.process_replicate(index, worker_id)
        logger.debug("Worker %d finished", worker_id)

    async def process_replicate(self, index: int, worker_id: int):
        outcome = self.outcomes[index]
        outcome.status = ReplicateStatus.PROCESSING
        loop = asyncio.get_running_loop()
        try:
            outcome.result = await loop.run_in_executor(self.executor, self.job, index)
            outcome.status = ReplicateStatus.COMPLETED
        except Exception as e:
            self.handle_replicate_failure(outcome, e, worker_id)

    def handle_replicate_failure(self, outcome: ReplicateOutcome, error: Exception, worker_id: int):
        """Numeric failures are recorded, not retried: the replicate is deterministic."""
        outcome.status = ReplicateStatus.FAILED
        outcome.error = f"{type(error).__name__}: {error}"
        logger.warning("Worker %d: replicate %d failed (%s)", worker_id, outcome.index, outcome.error)

    async def run(self, n_rep: int) -> list[ReplicateOutcome]:
        await self.start(n_rep)
        try:
            await asyncio.gather(*self.workers)
        finally:
            await self.stop()
        return [self.outcomes[index] for index in range(n_rep)]


def run_replicates(job: Callable[[int], Any], n_rep: int, threads: int | None = None,
                   strict: bool = True) -> list:
    """Run ``job`` over replicate indices 0..n_rep-1.

    With ``strict`` the results are returned in index order and the first
    failure is raised as :class:`ReplicateError`. Otherwise the
    :class:`ReplicateOutcome` list is returned and failures stay recorded.
    """
    outcomes = asyncio.run(WorkerPool(job, threads).run(n_rep))
    if not strict:
        return outcomes
    for outcome in outcomes:
        if outcome.status is ReplicateStatus.FAILED:
            raise ReplicateError(outcome.index, outcome.error)
    return [outcome.result for outcome in outcomes]
