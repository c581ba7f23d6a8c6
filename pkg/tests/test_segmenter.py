import random

import pytest

from itsforge import chooser, datasets, scenario, segmenter
from itsforge.errors import SegmentationInfeasible
from itsforge.model import (
    DatasetInstance,
    ItsModel,
    ObjectKind,
    ObjectQuery,
    RuleKind,
    SegmentationRule,
    SoftwareInstallation,
    SoftwareTemplate,
    SoftwareVariant,
)
from oracles import _holds, brute_force_min_segments, random_segmentation_case


def fixture_model(employee_config="7ers", rule_config="5rules"):
    t = scenario.load_templates()
    p = scenario.scenario_params(employee_config, rule_config, templates=t)
    sel = chooser.choose_software(t, p)
    model = ItsModel(variants=sel.variants, employees=sel.employees, installations=sel.installations)
    model.dataset_instances = datasets.instantiate_datasets(
        p.data_collections, model.employees, p.provided_external_services, model.installations, model.variants
    )
    return model, p


def servers(*names):
    variants = [SoftwareVariant(SoftwareTemplate(f"cpe:/a:x:{n}", n), (), f"cpe:/a:x:{n}") for n in names]
    installs = [SoftwareInstallation(k, v.variant_id, None) for k, v in enumerate(variants)]
    return variants, installs


def by_id(regex, kind=ObjectKind.DATASET_INSTANCE):
    attr = "dataset_identifier" if kind is ObjectKind.DATASET_INSTANCE else "cpe_idn"
    return ObjectQuery(attr, regex=regex, kind=kind)


def test_zero_objects_give_empty_assignment():
    a = segmenter.segment_network(ItsModel(), [], 4)
    assert a.segment_count == 0 and a.memberships == {}


def test_single_object_single_segment():
    variants, installs = servers("a")
    a = segmenter.segment_network(ItsModel(variants=variants, installations=installs), [], 4)
    assert a.segment_count == 1
    assert a.memberships == {0: [0]}
    assert a.names == ["Servers"]


def test_relaxed_collocation_example():
    # C is a local dependency of A and B; D1 lives with A, D2 with B and C; D1 and D2 must stay apart
    variants, installs = servers("A", "B", "C")
    installs[0].depends_on = [2]
    installs[1].depends_on = [2]
    d1 = DatasetInstance(3, "D1", 1, linked_installations=[0], primary_store_installation=0)
    d2 = DatasetInstance(4, "D2", 1, linked_installations=[1, 2], primary_store_installation=1)
    model = ItsModel(variants=variants, installations=installs, dataset_instances=[d1, d2])
    rules = [
        SegmentationRule(RuleKind.COLLOCATED_LOCAL_DEPENDENCIES),
        SegmentationRule(RuleKind.REQUIRE_DISTINCT, by_id("D1"), by_id("D2")),
    ]
    a = segmenter.segment_network(model, rules, 4)
    m = {k: set(v) for k, v in a.memberships.items()}
    assert a.segment_count == 2
    assert m[0] & m[2] and m[1] & m[2]
    assert not m[3] & m[4]


def test_infeasible_names_the_conflict():
    variants, installs = servers("A", "B")
    q = by_id("cpe:/a:x:A", ObjectKind.SOFTWARE_INSTALLATION)
    rule = SegmentationRule(RuleKind.REQUIRE_DISTINCT, q, by_id("cpe:/a:x:B", ObjectKind.SOFTWARE_INSTALLATION))
    same = SegmentationRule(RuleKind.REQUIRE_SAME, q, by_id("cpe:/a:x:B", ObjectKind.SOFTWARE_INSTALLATION))
    with pytest.raises(SegmentationInfeasible) as err:
        segmenter.segment_network(ItsModel(variants=variants, installations=installs), [rule, same], 3)
    assert err.value.conflict == "rule 0 and rule 1"


def test_representatives_collapse_subgroups():
    model, _ = fixture_model("5ers")
    groups = segmenter.get_representative_objects(model)
    sizes = sorted(len(g) for g in groups.employee_groups)
    assert sizes == [2, 2, 3, 8, 85]
    banking = next(g for g in groups.employee_groups if len(g) == 85)
    rep_objs = groups.owned[banking[0]]
    assert all(groups.multiplicity(o) == 85 for o in rep_objs)


def test_fixture_five_rules_layout():
    model, p = fixture_model()
    a = segmenter.segment_network(model, p.network_policies, p.max_segments)
    assert a.segment_count == 5
    assert a.internet_facing.count(True) == 1
    assert a.names == ["DMZ", "Servers 1", "Servers 2", "Workstations 1", "Workstations 2"]


@pytest.mark.parametrize("rule_config", ["3rules", "5rules"])
def test_fixture_segment_count_is_minimal(rule_config):
    model, p = fixture_model(rule_config=rule_config)
    a = segmenter.segment_network(model, p.network_policies, p.max_segments)
    with pytest.raises(SegmentationInfeasible):
        segmenter.segment_network(model, p.network_policies, a.segment_count - 1)


def test_apply_assignment_sets_segments():
    model, p = fixture_model()
    a = segmenter.segment_network(model, p.network_policies, p.max_segments)
    segmenter.apply_assignment(model, a)
    assert [s.name for s in model.segments] == a.names
    assert all(o.segment_ids for o in model.objects())


@pytest.mark.parametrize("seed", range(40))
def test_random_cases_match_brute_force_and_are_pruned(seed):
    model, rules, n, cons = random_segmentation_case(random.Random(seed))
    want = brute_force_min_segments(n, cons, 3)
    try:
        a = segmenter.segment_network(model, rules, 3)
    except SegmentationInfeasible:
        assert want is None
        return
    assert a.segment_count == want
    assign = [frozenset(a.memberships[o]) for o in range(n)]
    facing = frozenset(s for s, f in enumerate(a.internet_facing) if f)
    assert all(_holds(c, assign, facing) for c in cons)
    # no membership or facing flag can be dropped
    for o in range(n):
        for s in assign[o]:
            if len(assign[o]) > 1:
                smaller = list(assign)
                smaller[o] = assign[o] - {s}
                assert not all(_holds(c, smaller, facing) for c in cons)
    for s in facing:
        assert not all(_holds(c, assign, facing - {s}) for c in cons)


def test_shared_dependency_does_not_expose_its_other_hosts():
    variants, installs = servers("web", "db", "os")
    installs[0].org_services = ["Web"]
    installs[2].org_services = ["Web"]  # propagated from the web server
    installs[2].dependency_only = True
    for i in installs[:2]:
        i.depends_on = [2]
    web, db, os_ = (by_id(f"cpe:/a:x:{n}", ObjectKind.SOFTWARE_INSTALLATION) for n in ("web", "db", "os"))
    rules = [SegmentationRule(RuleKind.REQUIRE_DISTINCT, web, db), SegmentationRule(RuleKind.REQUIRE_SAME, os_, db)]
    a = segmenter.segment_network(ItsModel(variants=variants, installations=installs), rules, 3)
    assert a.segment_count == 2
    assert a.internet_facing.count(True) == 1
    assert a.memberships[0][0] in [s for s, f in enumerate(a.internet_facing) if f]
