"""The eleven acceptance criteria at their stated tolerances; one PASS/FAIL line each."""

import pytest

from homopolymer import acceptance


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    res = acceptance.CRITERIA[number](acceptance.DEFAULT_SEED)
    with capsys.disabled():
        print("\n" + res.line())
        for c in res.checks:
            print(f"    {c.name} = {c.value:.6g}  target {c.target}  {'ok' if c.passed else 'MISSED'}")
    assert res.passed, res.line()
