#!/usr/bin/env python3
"""Run the acceptance suite outside pytest, one PASS/FAIL line per criterion.

Equivalent to `pytest tests/test_acceptance.py -s`; this wrapper exists so
the suite can run (and be timed) without any test framework.
"""

import sys
import time
import traceback
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import test_acceptance as acc  # noqa: E402

CRITERIA = [
    acc.test_criterion_1_lower_bound_exactness,
    acc.test_criterion_2_gaussian_lower_bound,
    acc.test_criterion_3_contaminated_gaussian_pairs,
    acc.test_criterion_4_toolkit_suite,
    acc.test_criterion_5_pseudo_expectation_validity,
    acc.test_criterion_6_certified_bound_at_degree_6,
    acc.test_criterion_7_outlier_magnitude_independence,
    acc.test_criterion_8_rate_fit,
    acc.test_criterion_9_gaussian_projection,
    acc.test_criterion_10_sparse_facts,
]


def main() -> int:
    failures = 0
    t0 = time.perf_counter()
    for crit in CRITERIA:
        try:
            crit()
        except AssertionError:
            failures += 1
        except Exception:
            failures += 1
            traceback.print_exc()
    print(f"\n{len(CRITERIA) - failures}/{len(CRITERIA)} criteria passed "
          f"in {time.perf_counter() - t0:.0f}s")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
