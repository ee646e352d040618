"""Deterministic worker-pool helper.

Work is always split into the same fixed-size blocks, no matter how many
workers run them; workers only change scheduling, never the arithmetic, so
results are bit-identical for any worker count.  Block workers must write to
disjoint output slices.
"""

from concurrent.futures import ThreadPoolExecutor


def run_blocks(n: int, block: int, fn, workers: int = 1) -> None:
    """Call ``fn(start, stop)`` over fixed ``block``-sized spans of ``range(n)``."""
    spans = [(s, min(s + block, n)) for s in range(0, n, block)]
    if workers <= 1 or len(spans) <= 1:
        for s, e in spans:
            fn(s, e)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda span: fn(*span), spans))
