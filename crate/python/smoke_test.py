#!/usr/bin/env python3
"""Smoke test for the telelat Python extension.

Builds nothing itself: expects `cargo build -p telelat-py` (or --release)
to have produced target/{debug,release}/libtelelat.so. Copies the cdylib
into a temp dir under the importable name and exercises the main surface.
"""

import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_telelat():
    candidates = [
        REPO / "target" / "release" / "libtelelat.so",
        REPO / "target" / "debug" / "libtelelat.so",
        REPO / "target" / "release" / "libtelelat.dylib",
        REPO / "target" / "debug" / "libtelelat.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("libtelelat not found; run `cargo build -p telelat-py` first")
    stage = Path(tempfile.mkdtemp(prefix="telelat-py-"))
    shutil.copy(built, stage / "telelat.so")
    sys.path.insert(0, str(stage))
    import telelat

    return telelat


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    tl = import_telelat()
    print(f"telelat {tl.__version__} loaded")

    # Filter recurrence.
    assert tl.lowpass([0.0, 1.0, 1.0, 1.0], 0.5) == [0.0, 0.5, 0.75, 0.875]

    # Onset detection on a step at t = 10 ms, 250 us sampling, no filtering.
    t = [i * 250_000 for i in range(2000)]
    wz = [0.2 if ti >= 10_000_000 else 0.0 for ti in t]
    zeros = [0.0] * len(t)
    events = tl.detect(t, zeros, zeros, wz, alpha=1.0)
    assert len(events) == 1 and events[0]["onset_ns"] == 10_000_000, events

    # Latency triple identity.
    m2m, g2g, e2e = tl.compute_triple(0, 318_000_000, 318_500_000, 520_500_000)
    assert (m2m, g2g, e2e) == (318_000_000, 202_000_000, 520_000_000)

    # Aggregate statistics.
    stats = tl.aggregate([1_000_000, 2_000_000, 3_000_000, 4_000_000, 5_000_000])
    approx(stats["median_ms"], 3.0, 1e-9)
    approx(stats["iqr_ms"], 2.0, 1e-9)

    # Residual attribution and derived quantities.
    rows = tl.attribute_residual(
        "m2m",
        306.0,
        [("input_device", 5.0), ("pre_processing", 10.0), ("network", 10.30), ("post_processing", 10.0)],
        "actuation",
    )
    residual = dict((name, (mean, prov)) for name, mean, prov in rows)["actuation"]
    approx(residual[0], 270.70, 1e-6)
    assert residual[1] == "residual"
    approx(tl.network_latency_from_throughput(20.8, 1376.0), 15.116, 0.001)
    approx(tl.refresh_expectation(60.0), 8.333, 0.001)
    share_m2m, share_g2g = tl.e2e_share(306.0, 193.0)
    approx(share_m2m + share_g2g, 1.0, 1e-12)
    approx(share_m2m, 0.613, 0.001)

    # Offset estimation.
    offsets = tl.estimate_offset([(1000, 4226), (2000, 5226)])
    approx(offsets["mean_us"], 3.226, 1e-9)

    # Simulation from the shipped preset, deterministic per seed.
    preset = REPO / "presets" / "5g-nsa.cfg"
    run_a = tl.simulate(str(preset), seed=42, sessions=60)
    run_b = tl.simulate(str(preset), seed=42, sessions=60)
    assert run_a["triples"] == run_b["triples"], "same seed must reproduce"
    assert run_a["sessions"] == 60 and run_a["excluded"] == 0
    assert 280 < run_a["m2m"]["median_ms"] < 340, run_a["m2m"]
    for _, m2m_ns, g2g_ns, e2e_ns in run_a["triples"]:
        assert e2e_ns == m2m_ns + g2g_ns

    # Baseline run exposes the error envelope and the offset study.
    base = tl.baseline(str(REPO / "presets" / "baseline.cfg"), seed=42, sessions=200)
    assert 0.40 < base["g2g"]["mean_ms"] < 0.55, base["g2g"]
    assert 1.0 < base["offset"]["mean_us"] < 6.0, base["offset"]

    print("smoke test passed")


if __name__ == "__main__":
    main()
