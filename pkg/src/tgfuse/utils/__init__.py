from .worker_pool import WorkerPool, thread_limit

__all__ = ['WorkerPool', 'thread_limit']
