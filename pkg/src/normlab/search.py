"""Exhaustive search over the 16 inference-statistics configurations."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .nn import network_evaluate
from .norm import InferenceFlags


@dataclass
class ConfigResult:
    flags: InferenceFlags
    loss: float
    accuracy: float
    rank: int = 0


def enumerate_configs():
    """All 16 flag quadruples, counting binary from all-False to all-True."""
    return [InferenceFlags.from_index(i) for i in range(16)]


def _sort_key(result):
    # lower loss first, then higher accuracy, then the smallest flag quadruple
    return (result.loss, -result.accuracy, result.flags.as_tuple())


def rank_results(results):
    """Fresh list sorted by the selection order with ranks 1..n assigned."""
    ranked = sorted(results, key=_sort_key)
    return [
        ConfigResult(r.flags, r.loss, r.accuracy, rank)
        for rank, r in enumerate(ranked, start=1)
    ]


def evaluate_all(net, dataset, threads=1):
    """Evaluate a frozen network under every configuration; returns ranked results.

    Inference passes are read-only, so the network is shared across worker
    threads and left bit-identical.
    """
    configs = enumerate_configs()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            metrics = list(pool.map(lambda f: network_evaluate(net, dataset, flags=f), configs))
    else:
        metrics = [network_evaluate(net, dataset, flags=f) for f in configs]
    results = [
        ConfigResult(flags, loss, acc)
        for flags, (loss, acc) in zip(configs, metrics)
    ]
    return rank_results(results)


def select_best(results):
    """Winning configuration: lowest loss, then highest accuracy, then all-False-most."""
    if len(results) != 16:
        raise ValueError(f"expected 16 results, got {len(results)}")
    best = min(results, key=_sort_key)
    return ConfigResult(best.flags, best.loss, best.accuracy, 1)
