import asyncio
import contextlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import AsyncIterator, Callable, Iterable, TypeVar

from .. import config
from .settings import ExperimentConfig, config_hash

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

OUTPUT_SUBDIRS = ("checkpoints", "plots", "logs", "data")


@dataclass
class RunContext:
    config: ExperimentConfig
    out_dir: Path
    executor: ThreadPoolExecutor
    config_hash: str
    splits: dict = field(default_factory=dict)

    @property
    def checkpoints_dir(self) -> Path:
        return self.out_dir / "checkpoints"

    @property
    def plots_dir(self) -> Path:
        return self.out_dir / "plots"

    @property
    def logs_dir(self) -> Path:
        return self.out_dir / "logs"

    @property
    def data_dir(self) -> Path:
        return self.out_dir / "data"

    async def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """Runs `fn` over `items` on the worker pool; results keep the input order."""
        loop = asyncio.get_running_loop()
        futures = [loop.run_in_executor(self.executor, fn, item) for item in items]
        return list(await asyncio.gather(*futures))


@contextlib.asynccontextmanager
async def run_lifespan(cfg: ExperimentConfig, workers: int | None = None) -> AsyncIterator[RunContext]:
    """
    Manages the output tree and worker pool for one pipeline invocation.

    The output directory and its `checkpoints/`, `plots/`, `logs/` and `data/`
    subdirectories are created on entry. The worker pool is used for rendering
    and baseline fitting; it is shut down (waiting for pending work) on exit,
    including when a stage raises.
    """
    executor = None
    out_dir = Path(cfg.out_dir)
    logger.info("Initializing run '%s' in %s...", cfg.name, out_dir)
    try:
        for sub in OUTPUT_SUBDIRS:
            (out_dir / sub).mkdir(parents=True, exist_ok=True)
        pool_size = workers or config.WORKERS
        executor = ThreadPoolExecutor(max_workers=pool_size, thread_name_prefix="specvit")
        logger.info("Worker pool started with %d workers.", pool_size)
        yield RunContext(cfg, out_dir, executor, config_hash(cfg))
    except Exception as e:
        logger.error("Run '%s' failed: %s", cfg.name, e, exc_info=True)
        raise
    finally:
        if executor:
            logger.info("Shutting down worker pool...")
            executor.shutdown(wait=True)
            logger.info("Worker pool shut down.")
        else:
            logger.info("No worker pool to shut down (was not created).")
