import json

import numpy as np
import pytest

from renewal_lab.criteria import (
    ConditionRecord,
    CriterionInputs,
    check_density_srt,
    check_diff_half,
    check_ladder_criteria,
    check_levy_criteria,
    check_lowcut,
    evaluate_criteria,
    prior_cutoff,
)
from renewal_lab.engine import default_ell
from renewal_lab.errors import NotApplicable, ValidationFailure
from renewal_lab.regvar import RegVarFn, power_function

X = np.geomspace(10.0, 1e4, 13)
ONE = RegVarFn(alpha=0.0)


def test_bounded_cutoff_is_satisfied(power04):
    inputs = CriterionInputs(dist=power04, L=ONE, T=1.0, eta=0.5, x_grid=X)
    report = evaluate_criteria(inputs)
    assert report.overall == "satisfied-on-range"
    assert report.offending() == []
    names = [r.name for r in report.records]
    assert names == ["low-cut-conditions", "overflow-small-alpha"]
    payload = report.to_dict()
    json.dumps(payload)
    assert payload["overall"] == "satisfied-on-range"
    assert payload["thresholds"]["decay_ratio"] == 4


def test_intermediate_alpha_is_unconditional(power07):
    report = evaluate_criteria(CriterionInputs(dist=power07, L=ONE, T=0.0, eta=1.0, x_grid=X))
    assert [r.name for r in report.records] == ["unconditional"]
    assert report.overall == "satisfied-on-range"


def test_half_alpha_uses_k_form(power05):
    ell = default_ell(power05)
    record = check_diff_half(power05, ell, ONE, 1.0, 0.5, X)
    assert record.name == "overflow-half"
    assert record.notes["branch"] in {"O(k)", "o(k)"}
    assert np.all(record.notes["k"] > 0)
    assert record.values.shape == X.shape
    report = evaluate_criteria(CriterionInputs(dist=power05, L=ONE, T=1.0, eta=0.5, x_grid=X))
    assert [r.name for r in report.records] == ["low-cut-conditions", "overflow-half"]


def test_ladder_conditions_on_one_sided_walk(power04):
    record = check_ladder_criteria(power04, ONE, 1.0, 0.5, X)
    assert record.name == "ladder-conditions"
    assert [c.name for c in record.children] == ["low-cut-conditions", "ladder-overflow-small-alpha"]
    assert record.notes["reduction"] == "ladder heights equal the walk"


def test_ladder_conditions_need_small_product(power07, symmetric12):
    with pytest.raises(NotApplicable):
        check_ladder_criteria(power07, ONE, 1.0, 0.5, X)
    with pytest.raises(NotApplicable):
        check_ladder_criteria(symmetric12, ONE, 1.0, 0.5, X[:5])


def test_alpha_above_one_is_not_covered(symmetric12):
    with pytest.raises(NotApplicable):
        evaluate_criteria(CriterionInputs(dist=symmetric12, L=ONE, T=0.0, eta=1.0, x_grid=X))


def test_inputs_are_validated(power04):
    with pytest.raises(ValidationFailure) as info:
        CriterionInputs(dist=power04, L=ONE, T=1.0, eta=0.0, x_grid=X)
    assert info.value.field_path == "eta"
    with pytest.raises(ValidationFailure) as info:
        CriterionInputs(dist=power04, L=ONE, T=-1.0, eta=0.5, x_grid=X)
    assert info.value.field_path == "T"
    with pytest.raises(ValidationFailure) as info:
        CriterionInputs(dist=power04, L=RegVarFn(alpha=0.0, scale=0.5), T=1.0, eta=0.5, x_grid=X)
    assert info.value.field_path == "L"
    with pytest.raises(ValidationFailure) as info:
        CriterionInputs(dist=power04, L=ONE, T=1.0, eta=0.5, x_grid=[0.0, 10.0])
    assert info.value.field_path == "x_grid"


def test_cutoff_growing_faster_than_ell_is_violated(power04):
    x = np.geomspace(10.0, 500.0, 6)
    inputs = CriterionInputs(dist=power04, L=power_function(0.5), T=1.0, eta=0.5, x_grid=x, window_log2=10)
    report = evaluate_criteria(inputs)
    assert report.overall == "violated"
    assert "cutoff-vs-ell" in report.offending()
    ratio = report.records[0].find("cutoff-vs-ell")
    assert ratio.notes["exponent_gap"][0] == pytest.approx(0.1)
    assert "cutoff_exponent_flag" in report.records[1].notes


def test_lowcut_sum_matches_direct_convolution(power07):
    x = np.array([50.0, 100.0, 200.0])
    record = check_lowcut(power07, RegVarFn(alpha=0.0, scale=3.0), x, window_log2=10)
    assert record.notes["n_last"] == 2
    masses = power07.masses
    square = np.convolve(masses, masses)
    cells = x.astype(int) + 1
    expected = x / power07.right_tail(x) * (masses[cells] + square[cells])
    assert record.find("low-cut").values == pytest.approx(expected, rel=1e-6)
    uniform = record.find("low-cut-uniform")
    assert not uniform.required
    assert np.all(uniform.values >= record.find("low-cut").values - 1e-15)


def test_density_srt_parameter_ranges(power04):
    with pytest.raises(ValidationFailure) as info:
        check_density_srt(power04, 1.0, 1.0, 1.0, 10.0, 100.0)
    assert info.value.field_path == "c"
    with pytest.raises(ValidationFailure) as info:
        check_density_srt(power04, 1.0, 0.3, 0.2, 10.0, 100.0)
    assert info.value.field_path == "s"


def test_density_srt_on_power_law(power04):
    record = check_density_srt(power04, 1.0, 0.3, 0.5, 10.0, 1e4)
    assert record.find("exceedance-density").notes["rule"] == "E_T empty"
    assert record.verdict != "violated"


def test_prior_cutoff_family(power04):
    family = prior_cutoff(power04, power04.right_tail, power_function(0.5), 10.0, 1e4)
    assert family.mode == "walk"
    assert family.branch1_applies
    assert family.branch1_power_sup == pytest.approx(0.15)
    assert family.gamma_min == pytest.approx(0.9)
    assert family.eps_max == pytest.approx(1.0 / 1.9)
    assert family.admits(ONE)["log-gap"]
    assert family.admits(power_function(0.1))["log-gap"]
    assert not family.admits(power_function(0.2))["log-gap"]
    assert family.tail_check.verdict == "satisfied-on-range"
    with pytest.raises(ValidationFailure) as info:
        prior_cutoff(power04, power04.right_tail, power_function(0.1), 10.0, 1e4)
    assert info.value.field_path == "M.alpha"


def test_prior_cutoff_needs_small_alpha(power07):
    with pytest.raises(NotApplicable):
        prior_cutoff(power07, power07.right_tail, power_function(0.5), 10.0, 1e3)


def test_levy_criteria(power04):
    record = check_levy_criteria(power04, ONE, 1.0, 0.5, [0.2, 0.1], X, mu=0.1)
    assert record.verdict == "satisfied-on-range"
    bands = [c for c in record.children if c.name.startswith("band-low-cut")]
    assert [c.required for c in bands] == [True, False]
    assert record.notes["mu"] == 0.1
    with pytest.raises(ValidationFailure) as info:
        check_levy_criteria(power04, ONE, 1.0, 0.5, [0.2], X, mu=0.0)
    assert info.value.field_path == "nu"
    with pytest.raises(ValidationFailure) as info:
        check_levy_criteria(power04, ONE, 1.0, 0.5, [1.5], X)
    assert info.value.field_path == "eps_list"


def test_condition_record_tree():
    good = ConditionRecord(name="a", requirement="", verdict="satisfied-on-range")
    bad = ConditionRecord(name="b", requirement="", verdict="violated")
    optional = ConditionRecord(name="c", requirement="", verdict="violated", required=False)
    parent = ConditionRecord.combined("root", "", [good, optional])
    assert parent.verdict == "satisfied-on-range"
    parent = ConditionRecord.combined("root", "", [good, bad, optional])
    assert parent.verdict == "violated"
    assert parent.offending() == ["b"]
    assert parent.find("c") is optional
    assert parent.find("missing") is None
