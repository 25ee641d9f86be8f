"""Acceptance gate: one test and one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the report lines.
"""

from qseal import acceptance

IDS = [cid for cid, _, _ in acceptance.CHECKS]
_cache = {}


def results_for(cid):
    if cid not in _cache:
        _cache[cid] = acceptance.run_check(cid)
    return _cache[cid]


def _check(cid, index=0):
    res = results_for(cid)[index]
    print("\n" + res.line())
    assert res.passed, res.line()


class TestAcceptance:
    def test_criterion_1_passive_zero_information(self):
        _check("1")

    def test_criterion_2_direct_equals_factored(self):
        _check("2")

    def test_criterion_3_single_shot_intercept(self):
        _check("3")

    def test_criterion_4_announcement_table(self):
        _check("4")

    def test_criterion_5_shot_count_and_expansions(self):
        _check("5")

    def test_criterion_6_delivery_confidence(self):
        _check("6")

    def test_criterion_7_detection_rate(self):
        _check("7")

    def test_criterion_8a_passive_exposure(self):
        _check("8", 0)

    def test_criterion_8b_intercept_exposure(self):
        _check("8", 1)

    def test_criterion_9_monte_carlo(self):
        _check("9")

    def test_criterion_10_networked_equivalence(self):
        _check("10")


def test_every_criterion_has_a_test():
    names = [n for n in dir(TestAcceptance) if n.startswith("test_criterion_")]
    numbered = {n.split("_")[2].rstrip("ab") for n in names}
    assert numbered == set(IDS)
