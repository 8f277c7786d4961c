#!/usr/bin/env python3
"""Smoke test for the faircanary_py extension module.

Build the module first:

    cargo build -p faircanary-python --release

then run:

    python3 python/smoke_test.py
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        ROOT / "target" / "release" / "libfaircanary_py.so",
        ROOT / "target" / "debug" / "libfaircanary_py.so",
        ROOT / "target" / "release" / "faircanary_py.so",
        ROOT / "target" / "debug" / "faircanary_py.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit(
            "faircanary_py not built; run `cargo build -p faircanary-python --release` first"
        )
    stage = Path(tempfile.mkdtemp(prefix="faircanary_py_"))
    shutil.copy2(built, stage / "faircanary_py.so")
    sys.path.insert(0, str(stage))
    import faircanary_py

    return faircanary_py


def approx(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    fc = import_module()
    checks = 0

    def ok(name, condition):
        nonlocal checks
        if not condition:
            sys.exit(f"FAIL {name}")
        checks += 1
        print(f"ok {name}")

    # per-bin QDD
    ok(
        "qdd_per_bin hand example",
        fc.qdd_per_bin([1, 2, 3, 4], [2, 3, 4, 5], 2) == [-1.0, -1.0],
    )
    ok(
        "qdd_per_bin zero on identical",
        fc.qdd_per_bin([5.0, 1.0, 3.0], [5.0, 1.0, 3.0], 3) == [0.0, 0.0, 0.0],
    )
    try:
        fc.qdd_per_bin([1.0], [1.0, 2.0], 2)
        sys.exit("FAIL qdd_per_bin should reject bins > sample size")
    except ValueError:
        ok("qdd_per_bin rejects too many bins", True)

    # Wasserstein-1 oracle agreement at full resolution
    a = [3.0, -1.0, 7.0, 2.0]
    b = [4.0, 0.0, 5.0, 2.5]
    mean_abs = sum(abs(v) for v in fc.qdd_per_bin(a, b, len(a))) / len(a)
    ok("wasserstein1 equals mean |QDD| at B=N", approx(mean_abs, fc.wasserstein1(a, b)))
    ok("wasserstein1 identity", fc.wasserstein1([0.0, 1.0], [0.0, 1.0]) == 0.0)
    ok("wasserstein1 shifted pair", approx(fc.wasserstein1([0.0, 1.0], [1.0, 2.0]), 1.0))

    # alignment and intra-group bias
    ok(
        "individual_alignment rank subtraction",
        fc.individual_alignment([1, 2, 3], [2, 3, 4]) == [-1.0, -1.0, -1.0],
    )
    ok(
        "individual_alignment nearest rank",
        fc.individual_alignment([1, 2, 3, 4], [10, 20]) == [-8.0, -16.0],
    )
    ok("intra_group_bias", fc.intra_group_bias([0.0, 10.0], [0.0, 0.0], 2) == 10.0)

    # mitigation
    ok("quantile_norm rank substitution", fc.quantile_norm([1, 2, 3], [4, 5, 6]) == [4.0, 5.0, 6.0])
    ok("quantile_norm identity", fc.quantile_norm([1, 2, 3], [1, 2, 3]) == [1.0, 2.0, 3.0])

    # threshold metrics
    ok("spd hand example", approx(fc.spd([2, 3, 4, 5], [1, 2, 3, 4], 2.5), 0.25))
    ok("di orientation", approx(fc.di([2, 3, 4, 5], [1, 2, 3, 4], 2.5), 0.5 / 0.75))
    ok("di undefined when privileged all fail", fc.di([1.0], [5.0], 2.0) is None)
    ok("four-fifths flags", fc.four_fifths_flags(0.0, 0.65544) == (False, True))

    # attribution efficiency
    passed, residual = fc.check_efficiency({"a": 1.0, "b": 2.0}, 0.0, 3.0)
    ok("check_efficiency pass", passed and residual == 0.0)
    passed, residual = fc.check_efficiency({"a": 1.0, "b": 2.0}, 0.0, 4.0)
    ok("check_efficiency fail", (not passed) and approx(residual, 1.0))

    # exact linear attribution of the salary model
    coefficients = {
        "location": 20000.0,
        "education": 20000.0,
        "relevant_experience": 5000.0,
        "experience": 100.0,
        "engineer_type": 10000.0,
    }
    baseline = {k: 0.0 for k in coefficients}
    attrs = fc.linear_attribution(
        coefficients,
        50000.0,
        baseline,
        {
            "location": 1.0,
            "education": 1.0,
            "relevant_experience": 2.0,
            "experience": 3.0,
            "engineer_type": 0.0,
        },
    )
    ok(
        "linear_attribution salary example",
        attrs
        == {
            "location": 20000.0,
            "education": 20000.0,
            "relevant_experience": 10000.0,
            "experience": 300.0,
            "engineer_type": 0.0,
        },
    )

    # streaming monitor over NDJSON lines
    monitor = fc.QddMonitor()
    day = 86_400_000
    for i, (gender, score) in enumerate(
        [("WOMAN", 95000.0), ("WOMAN", 95001.0), ("MAN", 100000.0), ("MAN", 100001.0)]
    ):
        window = monitor.ingest(
            json.dumps(
                {
                    "event_id": f"e{i}",
                    "ts_ms": day + i,
                    "score": score,
                    "groups": {"gender": gender},
                    "features": {},
                }
            )
        )
        ok(f"ingest e{i} lands in window 1", window == 1)
    report = json.loads(monitor.close_window(1))
    ok("monitor computes the window QDD", approx(report["qdd"]["per_bin_qdd"][0], -5000.0))
    bias = [a for a in report["alerts"] if a["kind"] == "bias"]
    ok("monitor raises the QDD alert", len(bias) == 1 and bias[0]["rule"] == "qdd_abs")
    ok("late events are rejected", monitor.late_rejections() == 0)
    try:
        monitor.ingest(
            json.dumps(
                {
                    "event_id": "late",
                    "ts_ms": day + 99,
                    "score": 1.0,
                    "groups": {"gender": "MAN"},
                    "features": {},
                }
            )
        )
        sys.exit("FAIL closed window accepted a late event")
    except ValueError:
        ok("closed window rejects late events", monitor.late_rejections() == 1)

    # generator + replay round trip
    with tempfile.TemporaryDirectory() as tmp:
        events_path = str(Path(tmp) / "events.ndjson")
        count = fc.simulate_scenario(events_path, seed=7, days=2, events_per_day=150)
        ok("simulate_scenario event count", count == 300)
        lines = Path(events_path).read_text().strip().splitlines()
        ok("simulate_scenario writes NDJSON", len(lines) == 300)
        first = json.loads(lines[0])
        ok(
            "events carry attributions",
            "attribution" in first and "education" in first["attribution"]["values"],
        )
        reports = json.loads(fc.replay(events_path))
        ok("replay yields one report per day", len(reports) == 2)
        ok(
            "replay reports carry QDD and QDDA",
            all(r["qdd"] is not None and r["qdda"] is not None for r in reports),
        )

    # at the default scale and seed, the bug-day explanation is dominated by
    # education and the QDD alert fires only on that day
    with tempfile.TemporaryDirectory() as tmp:
        events_path = str(Path(tmp) / "case_study.ndjson")
        count = fc.simulate_scenario(events_path, days=2)
        ok("default scenario day count", count == 40000)
        reports = json.loads(fc.replay(events_path))
        alerted = [r["window_id"] for r in reports if any(a["kind"] == "bias" for a in r["alerts"])]
        ok("only the bug day alerts", alerted == [1])
        qdda = reports[1]["qdda"]
        totals = [
            sum(abs(row[i]) for row in qdda["per_bin_per_feature"])
            for i in range(len(qdda["features"]))
        ]
        top = qdda["features"][totals.index(max(totals))]
        ok("bug-day blame lands on education", top == "education")
        ok(
            "bug-day QDD shows the education-sized salary gap",
            -5000.0 < reports[1]["qdd"]["per_bin_qdd"][0] < -3000.0,
        )

    print(f"\nsmoke test passed ({checks} checks)")


if __name__ == "__main__":
    main()
