"""Every acceptance criterion at its stated tolerance, one pass/fail line each."""

import pytest

from rbki import acceptance
from rbki.acceptance import CRITERIA, Settings, run_criterion


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, acceptance_log):
    res = run_criterion(number, Settings())
    line = res.line()
    print(line)
    acceptance_log.append(line)
    assert res.passed, line


def test_forced_failure_with_absurd_calibration(acceptance_log):
    res = run_criterion(2, Settings(calibration_C=1e30))
    line = "forced failure check: " + res.line()
    print(line)
    acceptance_log.append(line)
    assert not res.passed


def test_calibration_1e9_does_not_force_failure():
    # the bound at t = 1 stays far below the observed sigma_min at C = 1e9
    res = run_criterion(2, Settings(calibration_C=1e9))
    assert res.passed


def test_criteria_registry_numbering():
    assert sorted(CRITERIA) == list(range(1, 12))
    assert all(desc for desc, _ in CRITERIA.values())
    assert acceptance.run_all([7], Settings())[0].number == 7
