import logging
import multiprocessing

from chronolens.logging_tools import configure_loggers, shared_logger_data

logger = logging.getLogger("utils.environment")


class Environment:
    """
    The Environment executes the independent work items of a stage: sources of a forward sweep,
    reconstruction targets, the corner solves of a mixed difference. It either calls the function
    sequentially or distributes the items over a :class:`multiprocessing.Pool`. Results keep the order
    of the items in both cases.

    :param jobs: number of worker processes, 1 runs everything in the calling process
    """

    def __init__(self, jobs=1):
        self.jobs = max(int(jobs), 1)
        self.logging = True

    def map(self, func, items):
        """
        Applies `func` to every item.

        :param func: picklable module level function taking one item
        :param items: iterable of picklable items
        :return: list of results in the order of `items`
        """
        items = list(items)
        if self.jobs == 1 or len(items) <= 1:
            try:
                return [func(item) for item in items]
            except Exception:
                if self.logging:
                    logger.exception("Error during serial execution of %s", getattr(func, '__name__', func))
                raise
        processes = min(self.jobs, len(items))
        logger.info("Running %d items of %s on %d processes", len(items), getattr(func, '__name__', func),
                    processes)
        with multiprocessing.Pool(processes, initializer=configure_loggers,
                                  initargs=(True, shared_logger_data())) as pool:
            try:
                return pool.map(func, items)
            except Exception:
                if self.logging:
                    logger.exception("Error launching parallel run of %s", getattr(func, '__name__', func))
                raise

    def disable_logging(self):
        self.logging = False
