"""
Acceptance gate: one test per named criterion in the acceptance module.
Each criterion function returns (ok, detail); the detail string carries the
measured numbers so a failure is self-explanatory in the pytest output.
"""
import pytest

from gft_lab import acceptance


CRITERIA = dict(acceptance.CRITERIA)


@pytest.mark.parametrize("name", list(CRITERIA))
def test_criterion(name):
    ok, detail = CRITERIA[name]()
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    assert ok, line


def test_all_nine_criteria_registered():
    assert len(acceptance.CRITERIA) == 9
    names = [name for name, _ in acceptance.CRITERIA]
    assert len(set(names)) == 9


def test_run_all_rejects_unknown_name():
    with pytest.raises(ValueError):
        acceptance.run_all(["no-such-criterion"])
