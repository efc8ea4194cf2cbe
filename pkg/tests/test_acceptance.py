"""Acceptance suite: every criterion at its stated tolerance, one line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the report lines.
"""
import json

import pytest

from levywave import acceptance


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    results = acceptance.check_suite(out=out, echo=None)
    print()
    for r in results:
        print(r.line())
    print(acceptance.render_table(results))
    return {r.number: r for r in results}, out


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(suite, number):
    results, _ = suite
    res = results[number]
    print(res.line())
    assert res.passed, res.line()


def test_probe_runtime_budget(suite):
    results, _ = suite
    assert results[6].runtime < 10.0


def test_manifest_records_asclt_calibration(suite):
    _, out = suite
    payload = json.loads((out / "acceptance.json").read_text())
    assert payload["master_seed"] == acceptance.MASTER_SEED
    asclt = next(r for r in payload["results"] if r["number"] == 11)
    assert asclt["details"]
    assert "calibration" in json.dumps(asclt["details"])
