#!/usr/bin/env python3
"""Compare the compiled fused-loss kernel against the numpy fallback.

Times the raw kernel across batch/label sizes, then a full training run
through each backend. Run after an editable install:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np

import vlpl_lab
from vlpl_lab import _backend
from vlpl_lab import embedding_store as store
from vlpl_lab.dataset import AnnotationMatrix, simulate_single_positive
from vlpl_lab.losses import LossConfig, LossVariant
from vlpl_lab.probe import TrainConfig, train


def time_kernel(backend, scores, states, repeats=2000):
    impl = _backend._BACKENDS[backend]
    impl.fused_loss_grad(scores, states, 2, 0.2, 1.0, 1.0, 0.9)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        impl.fused_loss_grad(scores, states, 2, 0.2, 1.0, 1.0, 0.9)
    return (time.perf_counter() - start) / repeats


def bench_kernel():
    rng = np.random.default_rng(0)
    print("fused loss/gradient kernel (vlpl_full variant)")
    print(f"{'shape':>12} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for B, L in ((8, 20), (8, 80), (64, 20), (64, 312), (256, 80)):
        scores = np.ascontiguousarray(rng.normal(size=(B, L)))
        states = np.zeros((B, L), dtype=np.int8)
        for b in range(B):
            states[b, rng.integers(L)] = 1
            states[b] = np.where(
                (states[b] == 0) & (rng.random(L) < 0.3), 2, states[b]
            )
        times = {}
        for backend in _backend.available_backends():
            times[backend] = time_kernel(backend, scores, states)
        if "compiled" in times:
            speedup = times["python"] / times["compiled"]
            print(
                f"{B}x{L:>8} {times['python'] * 1e6:>10.1f}us {times['compiled'] * 1e6:>10.1f}us "
                f"{speedup:>8.1f}x"
            )
        else:
            print(f"{B}x{L:>8} {times['python'] * 1e6:>10.1f}us {'n/a':>12}")


def bench_training():
    spec = store.SyntheticSpec(
        n_samples=1000, n_labels=20, dim=64, avg_positives=2.5, noise_sigma=0.3, seed=0
    )
    images, _, truth = store.synthesize(spec)
    spml = simulate_single_positive(AnnotationMatrix.from_binary(truth), seed=0)
    cfg = TrainConfig(
        epochs=5, batch_size=8, lr=1e-3, seed=0,
        loss=LossConfig(variant=LossVariant.VLPL_POSITIVE_ONLY),
    )
    print("\nend-to-end training (1000 samples, 5 epochs, batch 8)")
    original = vlpl_lab.active_backend()
    try:
        for backend in _backend.available_backends():
            vlpl_lab.set_backend(backend)
            train(images.data, spml, cfg)  # warm up
            start = time.perf_counter()
            train(images.data, spml, cfg)
            print(f"{backend:>12}: {time.perf_counter() - start:.3f}s")
    finally:
        vlpl_lab.set_backend(original)


if __name__ == "__main__":
    print(f"available backends: {', '.join(vlpl_lab.available_backends())}")
    bench_kernel()
    bench_training()
