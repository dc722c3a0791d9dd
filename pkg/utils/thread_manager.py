"""
Thread management for g2kinetics

Per-power pipeline stages and correlation slices are independent, so they
are fanned out over a bounded set of worker threads. Results are always
reduced in submission order so a run is reproducible regardless of which
worker finishes first.
"""

import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from utils.logging_config import get_logger

logger = get_logger('thread_manager')


@dataclass
class StageTask:
    """One unit of work and its outcome"""
    task_id: str
    func: Callable
    args: tuple = ()
    kwargs: Dict[str, Any] = field(default_factory=dict)
    result: Any = None
    error: Optional[BaseException] = None
    elapsed_s: Optional[float] = None
    done: threading.Event = field(default_factory=threading.Event, repr=False)

    def run(self) -> None:
        start = time.perf_counter()
        try:
            self.result = self.func(*self.args, **self.kwargs)
        except Exception as e:
            self.error = e
            logger.error(f"Stage {self.task_id} failed: {e}")
        finally:
            self.elapsed_s = time.perf_counter() - start
            logger.debug(f"Stage {self.task_id} finished in {self.elapsed_s:.3f}s")
            self.done.set()


class ThreadManager:
    """Bounded pool of worker threads for independent numerical stages"""

    def __init__(self, max_workers: int = 4):
        self.max_workers = max(1, int(max_workers))
        self._tasks: Dict[str, StageTask] = {}
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(self.max_workers)
        self._running = 0
        self._closed = False

    def submit_task(self, task_id: str, func: Callable, args: tuple = (), kwargs: Optional[dict] = None) -> StageTask:
        """Start func(*args, **kwargs) on a worker thread once a slot is free"""
        with self._lock:
            if self._closed:
                raise RuntimeError(f"Cannot submit {task_id}: ThreadManager is shut down")
            if task_id in self._tasks:
                raise ValueError(f"Task {task_id} already submitted")
            task = StageTask(task_id, func, args, kwargs or {})
            self._tasks[task_id] = task

        threading.Thread(target=self._work, args=(task,), name=f"stage-{task_id}", daemon=True).start()
        return task

    def _work(self, task: StageTask) -> None:
        with self._slots:
            self._adjust_running(+1)
            try:
                task.run()
            finally:
                self._adjust_running(-1)

    def _adjust_running(self, delta: int) -> None:
        with self._lock:
            self._running += delta

    def wait_all(self, raise_errors: bool = True) -> List[Tuple[str, Any]]:
        """
        Block until every task is done; (task_id, result) pairs in submission order

        With raise_errors the first failure in submission order is re-raised,
        otherwise the exception object stands in for the result.
        """
        with self._lock:
            tasks = list(self._tasks.values())

        results = []
        for task in tasks:
            task.done.wait()
            if task.error is not None and raise_errors:
                raise task.error
            results.append((task.task_id, task.error if task.error is not None else task.result))
        return results

    def map_ordered(self, func: Callable, items: List[Any], prefix: str = "task") -> List[Any]:
        for index, item in enumerate(items):
            self.submit_task(f"{prefix}-{index}", func, args=(item,))
        return [result for _, result in self.wait_all()]

    def get_stats(self) -> Dict[str, Any]:
        with self._lock:
            tasks = list(self._tasks.values())
            running = self._running
        finished = [t for t in tasks if t.done.is_set()]
        return {
            'max_workers': self.max_workers,
            'active_threads': running,
            'completed_tasks': len(finished),
            'successful_tasks': sum(1 for t in finished if t.error is None),
            'failed_tasks': sum(1 for t in finished if t.error is not None),
            'busiest_stage_s': max((t.elapsed_s or 0.0 for t in finished), default=0.0),
            'shutdown': self._closed,
        }

    def shutdown(self, timeout: float = 5.0) -> None:
        """Refuse new work and give running stages up to timeout seconds"""
        with self._lock:
            self._closed = True
            pending = [t for t in self._tasks.values() if not t.done.is_set()]

        deadline = time.monotonic() + timeout
        for task in pending:
            task.done.wait(max(0.0, deadline - time.monotonic()))

        still_running = sum(1 for t in pending if not t.done.is_set())
        if still_running:
            logger.warning(f"ThreadManager shut down with {still_running} stages still running")


def run_ordered(func: Callable, items: List[Any], max_workers: Optional[int] = None, prefix: str = "task") -> List[Any]:
    """Map func over items concurrently and return results in item order"""
    if max_workers is None:
        from utils.config import Config
        max_workers = Config.MAX_WORKERS

    manager = ThreadManager(max_workers=max_workers)
    try:
        results = manager.map_ordered(func, items, prefix=prefix)
        logger.debug(f"{prefix}: {manager.get_stats()}")
        return results
    finally:
        manager.shutdown()
