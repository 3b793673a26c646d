"""Acceptance criteria at full size, seed 2718.

Each experiment runs once at its defaults; every criterion prints one
PASS/FAIL line (collected again in the terminal summary).  Run only these
with ``pytest -m acceptance -s``.
"""

import pytest

from loctime.experiments import run_experiment

SEED = 2718
LINES: list[str] = []

pytestmark = pytest.mark.acceptance

_cache: dict = {}


def result(experiment):
    if experiment not in _cache:
        _cache[experiment] = run_experiment(experiment, {}, SEED, workers=1)
    return _cache[experiment]


def checks(experiment, select):
    return [c for c in result(experiment).checks if select(c.name)]


def report(number, title, items, binding=True):
    assert items, f"criterion {number}: no checks found"
    ok = all(c.passed for c in items)
    parts = "; ".join(f"{c.name}={c.value:.4g}" if c.value is not None else c.name for c in items)
    tag = "PASS" if ok else ("FAIL" if binding else "NOTE")
    line = f"{tag} criterion {number}: {title} [{parts}]" + ("" if binding else " (non-binding)")
    LINES.append(line)
    print(line)
    if binding:
        failed = [f"{c.name} value={c.value} threshold={c.threshold}" for c in items if not c.passed]
        assert ok, f"criterion {number} failed: {failed}"


def named(*names):
    return lambda n: n in names


def test_criterion_01_identities():
    report(1, "Ray-Knight identities on 10^4 walks, zero failures",
           checks("identities", named("identity failures")))


def test_criterion_02_offspring_law():
    report(2, "offspring counts vs Geometric(1/2), chi2 p > 0.001",
           checks("laws", named("offspring law")))


def test_criterion_03_branching_equivalence():
    report(3, "level counts vs Galton-Watson, N=20, k<=3",
           checks("laws", named("branching equivalence")))


def test_criterion_04_first_excursion():
    report(4, "first upward excursion laws k=1,2,5 and first-return tail",
           checks("laws", lambda n: n.startswith("first upward excursion law") or n == "first-return tail"))


def test_criterion_05_g_moments():
    report(5, "G covariances within 3 SE, k,l<=5",
           checks("sheet", named("G covariance probes")))


def test_criterion_06_product_law():
    report(6, "fixed-n centered local time vs product law, KS <= 0.02",
           checks("limits", named("fixed-n product law")))


def test_criterion_07_normal_law():
    report(7, "fixed-n normalized difference vs N(0,1), KS <= 0.02",
           checks("limits", named("fixed-n normal law")))


def test_criterion_08_marks_and_exit_times():
    report(8, "marks KS <= 0.01; exit time mean, variance, Laplace at 1/2 within 3 SE",
           checks("couple-eta", named("marks vs Exponential(1)", "exit time mean",
                                      "exit time variance", "exit time Laplace s=0.5")))


def test_criterion_09_eta_coupling_rate():
    report(9, "local-time-at-zero coupling exponent, CI upper end <= 0.35",
           checks("couple-eta", named("local-time-at-zero coupling rate")))


def test_criterion_10_sheet_coupling_rate():
    report(10, "sheet coupling exponent, CI upper end <= 0.40",
           checks("couple-sheet", named("sheet coupling rate")))


def test_criterion_11_splice():
    report(11, "spliced steps fair and independent; identity splice exact",
           checks("splice", lambda n: n.startswith("spliced steps")
                  or n in ("identity splice reproduces the walk", "identity splice has zero error")))


def test_criterion_12_tail_audits():
    # every audit is a hard check; the exact small-N counterexample is a note
    report(12, "tail bounds, no violation beyond the 99% CI",
           [c for c in result("audits").checks if c.hard])


def test_criterion_13_lil():
    report(13, "LIL ratios in [0.3, 1.3]", checks("lil", lambda n: n.startswith("LIL")), binding=False)
