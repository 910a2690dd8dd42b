"""Acceptance criteria, each checked at its stated tolerance.

Noisy criteria follow one protocol: the new-speaker threshold is chosen by
grid search on development seeds (1000 and up) that never overlap the 20
evaluation seeds (0 to 19), and only then are the evaluation seeds scored.
"""

import time

import numpy as np
import pytest

from oracles import brute_force_der, decimal_overlap_weights, enumerate_assignment, random_intervals
from streamdiar.clustering import constrained_assign
from streamdiar.containers import FEATURES_MAGIC, write_matrix
from streamdiar.fixtures import build_fixture, overlap_ratio
from streamdiar.metrics import DerBreakdown, der, local_der_curve
from streamdiar.pipeline import PipelineConfig, build_providers, run, seeded_centroids
from streamdiar.pooling import overlap_weights, weighted_stats_pool
from streamdiar.rttm import write_rttm
from streamdiar.timebase import Annotation
from streamdiar.tuning import DevFile, bench_step, tune

DELTA_GRID = [0.03, 0.05, 0.08, 0.12, 0.2, 0.3, 0.5]
EVAL_SEEDS = range(20)
DEV_SEEDS = [1000, 1001, 1002, 1003, 1004]

# Noisy fixtures: speakers whose signatures share a common direction (pairwise
# cosine about 0.9), so that frame noise of 0.3 actually causes confusions.
NOISY = dict(noise_sigma=0.3, shared=0.9, dim=32)


def _diarize(fx, config):
    segmenter, embedder = build_providers(config, fx.reference)
    hyp, reports = run(config, segmenter, fx.features, embedder, fx.uri)
    return hyp, reports


def _tuned(base, fixtures):
    dev = [DevFile(fx.uri, fx.reference, fx.features) for fx in fixtures]
    return tune({"delta_new": DELTA_GRID}, dev, base).best


def _rates(scores, field):
    return float(np.mean([getattr(s, field) / s.total_reference for s in scores]))


def test_criterion_01_pooling(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_uniform = worst_scale = 0.0
    for _ in range(200):
        x = rng.standard_normal((int(rng.integers(2, 60)), int(rng.integers(1, 40)))) * 5
        mu, sigma = weighted_stats_pool(x, np.ones(len(x)))
        worst_uniform = max(worst_uniform,
                            np.max(np.abs(mu - x.mean(0)) / np.maximum(np.abs(x.mean(0)), 1e-300)),
                            np.max(np.abs(sigma - x.std(0, ddof=1)) / x.std(0, ddof=1)))
        w = rng.random(len(x)) + 1e-3
        mu1, s1 = weighted_stats_pool(x, w)
        mu2, s2 = weighted_stats_pool(x, w * float(10 ** rng.uniform(-6, 6)))
        worst_scale = max(worst_scale,
                          np.max(np.abs(mu2 - mu1) / np.maximum(np.abs(mu1), 1e-300)),
                          np.max(np.abs(s2 - s1) / np.maximum(s1, 1e-300)))
    mu, sigma = weighted_stats_pool(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, 3.0]))
    example = bool(np.all(mu == [2.5, 3.5]) and np.all(sigma == np.sqrt(2.0)))
    elapsed = time.perf_counter() - start
    ok = worst_uniform <= 1e-12 and worst_scale <= 1e-12 and example and elapsed < 1.0
    acceptance_report(1, "pooling", ok,
                      f"uniform rel err {worst_uniform:.1e}, rescale rel err {worst_scale:.1e}, "
                      f"worked example sigma^2=2 {'exact' if example else 'WRONG'}, {elapsed:.2f}s")


def test_criterion_02_overlap_weights(acceptance_report):
    rng = np.random.default_rng(2)
    s = rng.random((10_000, 4))
    s[rng.random(s.shape) < 0.25] = 0.0
    start = time.perf_counter()
    got = overlap_weights(s, beta=10, gamma=3).weights
    elapsed = time.perf_counter() - start
    want = np.array([decimal_overlap_weights(row, 10, 3) for row in s])
    err = float(np.max(np.abs(got - want)))
    examples = overlap_weights(np.array([[0, 0, 0, 0], [1, 0, 0, 0], [0.8, 0.8, 0, 0]], float)).weights
    ex_ok = (np.all(examples[0] == 0)
             and abs(examples[1, 0] - 0.9996) < 5e-5 and np.all(examples[1, 1:] == 0)
             and np.all(np.abs(examples[2, :2] - 0.0639) < 5e-5) and np.all(examples[2, 2:] == 0))
    ok = err <= 1e-9 and ex_ok and elapsed < 1.0
    acceptance_report(2, "overlap weights", ok,
                      f"max abs err {err:.1e} over 10^4 vectors, worked examples "
                      f"{np.round(examples[1:, 0], 4).tolist()}, {elapsed:.3f}s")


def test_criterion_03_assignment(acceptance_report):
    rng = np.random.default_rng(3)
    matrices = []
    for i in range(1000):
        D = rng.random((int(rng.integers(1, 5)), int(rng.integers(1, 7)))) * 2
        matrices.append(np.round(D * 4) / 4 if i % 3 == 0 else D)  # every third one has ties
    start = time.perf_counter()
    results = [constrained_assign(D) for D in matrices]
    elapsed = time.perf_counter() - start
    mismatches = 0
    for D, res in zip(matrices, results):
        mapping, cost = enumerate_assignment(D)
        if res.mapping != mapping or abs(res.cost() - cost) > 1e-12:
            mismatches += 1
    ok = mismatches == 0 and elapsed < 5.0
    acceptance_report(3, "constrained assignment", ok,
                      f"{mismatches} mismatches in 1000 matrices up to 4x6, {elapsed:.2f}s")


def test_criterion_04_der(acceptance_report):
    rng = np.random.default_rng(4)
    cases = []
    for _ in range(200):
        ref = random_intervals(rng, [f"r{i}" for i in range(int(rng.integers(1, 5)))])
        hyp = random_intervals(rng, [f"h{i}" for i in range(int(rng.integers(0, 5)))])
        cases.append((ref, hyp))
    start = time.perf_counter()
    worst = 0.0
    for ref, hyp in cases:
        d = der(_annotation(ref), _annotation(hyp))
        want = brute_force_der(ref, hyp)
        got = (d.false_alarm, d.missed, d.confusion, d.total_reference)
        worst = max(worst, max(abs(a - b) for a, b in zip(got, want)))
    a = _annotation({"A": [(0, 10)]})
    miss = der(a, _annotation({"X": [(0, 8)]}))
    conf = der(a, _annotation({"X": [(0, 5)], "Y": [(5, 10)]}))
    elapsed = time.perf_counter() - start
    hand = (miss.missed == 2.0 and miss.der == pytest.approx(0.2)
            and conf.confusion == 5.0 and conf.der == pytest.approx(0.5))
    ok = worst <= 1e-9 and hand and elapsed < 10.0
    acceptance_report(4, "DER", ok, f"max deviation from brute force {worst:.1e}s on 200 fixtures, "
                                    f"Miss={miss.missed} DER={miss.der:.2f}, "
                                    f"Conf={conf.confusion} DER={conf.der:.2f}, {elapsed:.2f}s")


def _annotation(intervals):
    return Annotation.from_tuples("f", [(s, e, lab) for lab, ivs in intervals.items() for s, e in ivs])


def test_criterion_05_oracle_run(acceptance_report):
    details, ok = [], True
    for seed in range(5):
        fx = build_fixture(3, 300, overlap=0.1, seed=seed)
        start = time.perf_counter()
        hyp, _ = _diarize(fx, PipelineConfig(latency=0.5))
        elapsed = time.perf_counter() - start
        d = der(fx.reference, hyp).der
        speakers = len(hyp.labels())
        ok &= speakers == 3 and d < 0.02 and elapsed < 30
        details.append(f"seed {seed}: ov {overlap_ratio(fx.reference):.2f} K={speakers} "
                       f"DER {100 * d:.2f}% {elapsed:.1f}s")
    acceptance_report(5, "oracle run", ok, "; ".join(details))


def test_criterion_06_latency_trend(acceptance_report):
    # one threshold, tuned at the long latency, serves both settings so that only latency varies
    make = lambda seed: build_fixture(4, 180, overlap=0.1, seed=seed, **NOISY)  # noqa: E731
    tuned = _tuned(PipelineConfig(latency=5.0), [make(s) for s in DEV_SEEDS])
    evaluation = [make(s) for s in EVAL_SEEDS]
    scores = {lam: [der(fx.reference, _diarize(fx, tuned.replace(latency=lam))[0]) for fx in evaluation]
              for lam in (5.0, 0.5)}
    conf_long, conf_short = _rates(scores[5.0], "confusion"), _rates(scores[0.5], "confusion")
    fa_gap = abs(_rates(scores[5.0], "false_alarm") - _rates(scores[0.5], "false_alarm"))
    miss_gap = abs(_rates(scores[5.0], "missed") - _rates(scores[0.5], "missed"))
    ok = conf_long <= conf_short and fa_gap < 0.005 and miss_gap < 0.005
    acceptance_report(6, "latency trend", ok,
                      f"confusion {100 * conf_long:.3f}% at 5s vs {100 * conf_short:.3f}% at 0.5s "
                      f"(delta_new={tuned.delta_new}); FA gap {100 * fa_gap:.3f}%, "
                      f"Miss gap {100 * miss_gap:.3f}%")


def test_criterion_07_continual_learning(acceptance_report):
    duration, bin_s = 600, 60.0
    make = lambda seed: build_fixture(4, duration, overlap=0.1, seed=seed, **NOISY)  # noqa: E731
    config = _tuned(PipelineConfig(), [make(s) for s in DEV_SEEDS[:3]])
    last = int(duration // bin_s) - 1
    first, final = [], []
    for seed in EVAL_SEEDS:
        fx = make(seed)
        curve = local_der_curve(fx.reference, _diarize(fx, config)[0], bin_s)
        first.append(curve[1][1].der)  # bin 0 is the warm-up
        final.append(curve[last][1].der)
    ok = np.mean(final) <= np.mean(first)
    acceptance_report(7, "continual learning", ok,
                      f"local DER {100 * np.mean(first):.3f}% in [60,120)s vs "
                      f"{100 * np.mean(final):.3f}% in [{last * 60},{duration})s "
                      f"(delta_new={config.delta_new})")


def test_criterion_08_realtime_budget(acceptance_report):
    fx = build_fixture(4, 60, overlap=0.1, seed=8, dim=256)
    config = PipelineConfig()
    stats = bench_step(config, fx.features, repetitions=1, reference=fx.reference,
                       centroids=seeded_centroids(16, 2 * 256, seed=8))
    # the fixture's 4 speakers join the 16 preloaded centroids
    ok = stats.p95 < 0.5
    acceptance_report(8, "real-time budget", ok,
                      f"p95 {1000 * stats.p95:.1f}ms, max {1000 * stats.max:.1f}ms over "
                      f"{stats.steps} steps (D=256, F=312, K_max=4, K up to 20)")


def test_criterion_09_determinism(acceptance_report, tmp_path):
    fx = build_fixture(3, 120, overlap=0.2, seed=9, **NOISY)
    features = tmp_path / "f.sdfe"
    write_matrix(features, FEATURES_MAGIC, fx.features, fx.grid.frame_step)
    outputs = []
    for attempt in range(2):
        config = PipelineConfig(delta_new=0.08, latency=2.0, seed=9)
        segmenter, embedder = build_providers(config, fx.reference)
        hyp, _ = run(config, segmenter, features, embedder, fx.uri)
        path = tmp_path / f"run{attempt}.rttm"
        write_rttm(hyp, path)
        outputs.append(path.read_bytes())
    ok = outputs[0] == outputs[1] and len(outputs[0]) > 0
    acceptance_report(9, "determinism", ok, f"{len(outputs[0])} bytes, identical={outputs[0] == outputs[1]}")


def test_criterion_10_overlap_aware_ablation(acceptance_report):
    make = lambda seed: build_fixture(2, 180, overlap=0.3, seed=seed, **NOISY)  # noqa: E731
    dev = [make(s) for s in DEV_SEEDS]
    evaluation = [make(s) for s in EVAL_SEEDS]
    means, deltas = {}, {}
    for mode in ("overlap_aware", "direct"):
        config = _tuned(PipelineConfig(weighting_mode=mode), dev)
        deltas[mode] = config.delta_new
        means[mode] = float(np.mean([der(fx.reference, _diarize(fx, config)[0]).der for fx in evaluation]))
    ok = means["overlap_aware"] <= means["direct"]
    acceptance_report(10, "overlap-aware ablation", ok,
                      f"mean DER {100 * means['overlap_aware']:.3f}% overlap_aware "
                      f"(delta_new={deltas['overlap_aware']}) vs {100 * means['direct']:.3f}% direct "
                      f"(delta_new={deltas['direct']}), mean overlap "
                      f"{np.mean([overlap_ratio(fx.reference) for fx in evaluation]):.2f}")
