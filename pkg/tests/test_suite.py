import pytest

from finsler_mobius.suite import CHECKS, SuiteContext, run_group


@pytest.fixture(scope="module")
def results():
    ctx = SuiteContext(seed=3, samples=6, curve_length=1.5)
    return {name: run_group((name, ctx)) for name in CHECKS}


def test_every_group_reports_named_checks(results):
    names = [c.name for group in results.values() for c in group]
    assert len(names) == len(set(names))
    assert all(results[g] for g in CHECKS)


@pytest.mark.parametrize("group", list(CHECKS))
def test_group_passes(results, group):
    failed = [(c.name, c.residual, c.tol) for c in results[group] if not c.passed]
    assert not failed


def test_seed_changes_samples_not_verdicts():
    a = run_group(("core.connection", SuiteContext(seed=1, samples=4)))
    b = run_group(("core.connection", SuiteContext(seed=2, samples=4)))
    assert [c.name for c in a] == [c.name for c in b]
    assert all(c.passed for c in a + b)
