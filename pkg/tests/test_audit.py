import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairshap.audit import (
    EQUALITY,
    FAVORS_PRIVILEGED,
    FAVORS_UNPRIVILEGED,
    ExplainerSettings,
    build_report,
    classify_scenario,
    compare,
    dependence_table,
    importance_summary,
    prepare_data,
    rank_by_impact,
    report_json,
    run_audit,
    summary_table,
)
from fairshap.data import DatasetConfig
from fairshap.errors import ConfigError, DataError, StageError, UndefinedGroupError
from fairshap.models import ClassifierSpec

from helpers import GERMAN_CONFIG, cell_fixture_rows, null_bias_rows, write_csv


def test_group_diff_hand_example():
    phi = np.array([[-0.2], [-0.4], [0.1], [0.3]])
    s = importance_summary(phi, [0, 0, 1, 1], ["f"])
    assert s.group_diff[0] == pytest.approx(-0.5, abs=1e-15)
    assert s.global_impact[0] == pytest.approx(0.25, abs=1e-15)


def test_zero_feature_has_zero_impact_and_diff():
    phi = np.array([[0.0, 1.0], [0.0, -2.0], [0.0, 0.5]])
    s = importance_summary(phi, [0, 1, 1])
    assert s.global_impact[0] == 0.0 and s.group_diff[0] == 0.0
    assert s.rank.tolist() == [2, 1]


def test_empty_group_keeps_global_impact():
    phi = np.array([[0.1, -0.3], [0.2, 0.1]])
    with pytest.raises(UndefinedGroupError) as info:
        importance_summary(phi, [1, 1])
    np.testing.assert_allclose(info.value.partial["global_impact"], [0.15, 0.2])
    assert info.value.partial["rank"].tolist() == [2, 1]


def test_rank_ties_broken_by_index():
    assert rank_by_impact([0.5, 1.0, 0.5, 1.0]).tolist() == [3, 1, 4, 2]


phi_matrices = st.integers(2, 12).flatmap(
    lambda n: st.tuples(
        st.lists(st.lists(st.floats(-1, 1), min_size=4, max_size=4), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
)


@given(phi_matrices, st.floats(0.01, 100))
@settings(max_examples=150, deadline=None)
def test_importance_properties(pm, c):
    phi, a = np.array(pm[0]), np.array(pm[1])
    if len(set(a.tolist())) < 2:
        return
    s = importance_summary(phi, a)
    assert sorted(s.rank.tolist()) == [1, 2, 3, 4]
    np.testing.assert_array_equal(s.group_diff, s.mean_unprivileged - s.mean_privileged)
    neg = importance_summary(-phi, a)
    np.testing.assert_allclose(neg.group_diff, -s.group_diff, atol=1e-15)
    np.testing.assert_array_equal(neg.global_impact, s.global_impact)
    np.testing.assert_array_equal(neg.rank, s.rank)
    # a common positive factor keeps the ordering; exact ties are compared after scaling
    scaled = importance_summary(phi * c, a)
    np.testing.assert_array_equal(scaled.rank, rank_by_impact(s.global_impact * c))


@pytest.mark.parametrize(
    "di,eop,label",
    [
        (1.0, 0.0, EQUALITY),
        (0.8, -0.05, FAVORS_PRIVILEGED),
        (1.0, 0.04, FAVORS_UNPRIVILEGED),
        (1.2, -0.05, FAVORS_PRIVILEGED),  # mixed signs: EOP decides
        (1.2, 0.0, FAVORS_UNPRIVILEGED),
        (0.7, 0.0, FAVORS_PRIVILEGED),
        (math.nan, 0.01, EQUALITY),
        (math.inf, 0.0, FAVORS_UNPRIVILEGED),
    ],
)
def test_scenario_rule(di, eop, label):
    call = classify_scenario(di, eop)
    assert call.label == label
    assert call.evidence["eps_di"] == 0.05 and call.evidence["eps_eop"] == 0.02


@given(
    di=st.one_of(st.floats(0, 10), st.just(math.inf), st.just(math.nan)),
    eop=st.floats(-1, 1),
)
@settings(max_examples=300, deadline=None)
def test_scenario_total_and_reproducible(di, eop):
    call = classify_scenario(di, eop)
    assert call.label in (EQUALITY, FAVORS_PRIVILEGED, FAVORS_UNPRIVILEGED)
    ev = call.evidence
    if ev["disparate_impact"] is None:  # inf and nan are not stored as numbers
        return
    again = classify_scenario(ev["disparate_impact"], ev["equal_opportunity"], ev["eps_di"], ev["eps_eop"])
    assert again == call


def test_dependence_and_summary_tables():
    phi = np.array([[0.3, -0.1], [0.1, 0.2], [-0.5, 0.0]])
    X = np.array([[7.0, 1.0], [7.0, 2.0], [7.0, 3.0]])
    dep = dependence_table(phi, X, ["c", "v"], "c", color_feature="v")
    assert dep["value"].tolist() == [7.0, 7.0, 7.0]
    assert dep["phi"].tolist() == [0.3, 0.1, -0.5]
    assert dep["color"].tolist() == [1.0, 2.0, 3.0]
    rows = summary_table(phi, X, ["c", "v"])
    ranks = {r[1]: r[0] for r in rows}
    s = importance_summary(phi, [0, 1, 1], ["c", "v"])
    assert ranks == {"c": int(s.rank[0]), "v": int(s.rank[1])}
    assert [r[0] for r in rows] == sorted(r[0] for r in rows)
    with pytest.raises(DataError, match="unknown feature"):
        dependence_table(phi, X, ["c", "v"], "z")


@pytest.fixture(scope="module")
def synthetic_config(tmp_path_factory):
    header, rows = null_bias_rows(600, seed=0)
    path = write_csv(tmp_path_factory.mktemp("syn") / "null.csv", header, rows)
    return DatasetConfig(path, "label", 1, "group", 1)


@pytest.fixture(scope="module")
def synthetic_runs(synthetic_config):
    spec = ClassifierSpec("lr")
    exp = ExplainerSettings(background_size=30)
    prepared = prepare_data(synthetic_config)
    base = run_audit(synthetic_config, spec, exp, prepared=prepared)
    rew = run_audit(synthetic_config, spec, exp, with_reweigh=True, prepared=prepared)
    return base, rew


def test_paths_differ_only_in_weights(synthetic_runs):
    base, rew = synthetic_runs
    assert base.prepared is rew.prepared
    assert base.weights is None and rew.weights is not None
    assert base.metadata == rew.metadata
    assert base.explanations[0].method == "exact"


def test_every_explanation_locally_accurate(synthetic_runs):
    for run in synthetic_runs:
        gaps = [abs(e.local_accuracy_gap()) for e in run.explanations]
        assert max(gaps) <= 1e-9
        np.testing.assert_allclose([e.fx for e in run.explanations], run.probabilities, atol=1e-15)


def test_compare_with_itself_is_zero(synthetic_runs):
    base, _ = synthetic_runs
    c = compare(base, base)
    assert all(v == 0 for v in c.deltas.values())


def test_deltas_match_embedded_reports(synthetic_runs):
    base, rew = synthetic_runs
    doc = json.loads(report_json(build_report(comparison=compare(base, rew))))
    b, r = doc["runs"]["baseline"], doc["runs"]["reweighed"]
    assert doc["deltas"]["equal_opportunity"] == r["fairness"]["equal_opportunity"] - b["fairness"]["equal_opportunity"]
    assert doc["deltas"]["sensitive_rank"] == r["importance"]["sensitive"]["rank"] - b["importance"]["sensitive"]["rank"]
    assert doc["schema"] == "fairshap.audit_report" and doc["version"] == 1
    assert set(doc["reweighing"]["cells"]) == {"a=0,y=0", "a=0,y=1", "a=1,y=0", "a=1,y=1"}
    assert doc["scenario"]["label"] in (EQUALITY, FAVORS_PRIVILEGED, FAVORS_UNPRIVILEGED)


def test_compare_rejects_mismatched_runs(synthetic_config, synthetic_runs):
    base, _ = synthetic_runs
    other = run_audit(synthetic_config, ClassifierSpec("lr", {"l2": 0.1}), ExplainerSettings(background_size=30), prepared=base.prepared)
    with pytest.raises(ConfigError):
        compare(base, other)


def test_stage_error_names_stage(tmp_path):
    header, rows = cell_fixture_rows({(0, 0): 30, (0, 1): 30, (1, 1): 30})
    cfg = DatasetConfig(write_csv(tmp_path / "c.csv", header, rows), "y", 1, "a", 1)
    with pytest.raises(StageError) as info:
        run_audit(cfg, ClassifierSpec("lr"), with_reweigh=True)
    assert info.value.stage == "reweigh" and info.value.exit_code == 5


def test_load_stage_error(tmp_path):
    cfg = DatasetConfig(str(tmp_path / "none.csv"), "y", 1, "a", 1)
    with pytest.raises(StageError) as info:
        prepare_data(cfg)
    assert info.value.stage == "load" and info.value.exit_code == 4


@pytest.mark.slow
def test_german_batch_locally_accurate():
    cfg = DatasetConfig.from_json(GERMAN_CONFIG)
    run = run_audit(cfg, ClassifierSpec("lr"))
    assert run.test.n_rows == 200 and run.test.n_features == 61
    assert {e.method for e in run.explanations} == {"sampled"}
    assert max(abs(e.local_accuracy_gap()) for e in run.explanations) <= 1e-9
    assert max(abs(e.residual) - 3 * e.std_error.sum() for e in run.explanations) <= 1e-12
