import random

import pytest

from itsforge import datasets
from itsforge.errors import NoEligibleStore
from itsforge.model import (
    DataCollection,
    Employee,
    EmployeeMode,
    PrimaryStorage,
    ServiceMode,
    SoftwareInstallation,
    SoftwareMode,
    SoftwareTemplate,
    SoftwareVariant,
)
from oracles import enumerate_instances, storable
from test_segmenter import fixture_model


def variant(name, data="Mail", db=False):
    t = SoftwareTemplate(f"cpe:/a:x:{name}", name, data_types=(data,), database=db)
    return SoftwareVariant(t, (), t.cpe_idn)


def coll(identifier="Mail", emode="AllShared", smode="AllShared", wmode="AllShared", storage="Server", erss=(), services=(), level=2):
    return DataCollection(
        identifier,
        level,
        PrimaryStorage(storage),
        EmployeeMode(emode),
        ServiceMode(smode),
        SoftwareMode(wmode),
        linked_services=tuple(services),
        linked_erss=tuple(erss),
    )


def mail_world(n_employees):
    client, server = variant("client"), variant("server", db=True)
    employees = [Employee(k, "staff", "clerk") for k in range(n_employees)]
    installs = [SoftwareInstallation(k, client.variant_id, k) for k in range(n_employees)]
    installs.append(SoftwareInstallation(n_employees, server.variant_id, None))
    return employees, installs, [client, server]


def test_per_employee_per_server_gives_one_instance_each():
    employees, installs, variants = mail_world(100)
    c = coll(emode="PerEmployee", wmode="PerServer", erss=["staff"])
    out = datasets.instantiate_datasets([c], employees, [], installs, variants)
    assert len(out) == 100
    for d in out:
        assert len(d.linked_employees) == 1
        assert d.linked_installations == sorted([d.linked_employees[0], 100])
        assert d.primary_store_installation == 100


def test_ids_continue_after_installations():
    employees, installs, variants = mail_world(3)
    out = datasets.instantiate_datasets([coll(erss=["staff"])], employees, [], installs, variants)
    assert [d.id for d in out] == [4]
    assert out[0].linked_installations == [0, 1, 2, 3]


def test_per_database_without_databases_keeps_one_instance():
    employees, installs, variants = mail_world(2)
    variants[1] = variant("server", db=False)
    out = datasets.instantiate_datasets([coll(wmode="PerDatabase", erss=["staff"])], employees, [], installs, variants)
    assert len(out) == 1


def test_no_eligible_store():
    employees, installs, variants = mail_world(2)
    with pytest.raises(NoEligibleStore):
        datasets.instantiate_datasets([coll(storage="Database", erss=["staff"], wmode="PerClient")], employees, [], installs[:2], variants)


def test_unlinked_collection_gives_nothing():
    employees, installs, variants = mail_world(2)
    out = datasets.instantiate_datasets([coll(identifier="Other")], employees, [], installs, variants)
    assert out == []


def test_fixture_instance_counts():
    model, _ = fixture_model()
    counts = {}
    for d in model.dataset_instances:
        counts[d.collection_id] = counts.get(d.collection_id, 0) + 1
    # internal data per subgroup; banking shared; mail per employee; source per developer
    assert counts == {"FinancialData:internal": 3, "FinancialData:banking": 1, "Emails": 100, "SourceCode:internet_banking": 8}


def random_world(rng):
    subgroups = ["g0", "g1", "g2"]
    employees = [Employee(k, rng.choice(subgroups), "r") for k in range(rng.randint(0, 20))]
    variants = [variant("c0"), variant("c1", db=True), variant("s0"), variant("s1", db=True), variant("other", data="Other")]
    installs = []
    for e in employees:
        for v in rng.sample(variants[:2] + variants[4:], rng.randint(0, 2)):
            installs.append(SoftwareInstallation(len(installs), v.variant_id, e.id))
    for _ in range(rng.randint(0, 3)):
        v = rng.choice(variants[2:])
        org = sorted(rng.sample(["A", "B"], rng.randint(0, 2)))
        installs.append(SoftwareInstallation(len(installs), v.variant_id, None, org_services=org))
    c = coll(
        emode=rng.choice(list(EmployeeMode)).value,
        smode=rng.choice(list(ServiceMode)).value,
        wmode=rng.choice(list(SoftwareMode)).value,
        storage=rng.choice(list(PrimaryStorage)).value,
        erss=rng.sample(subgroups, rng.randint(0, 3)),
        services=rng.sample(["A", "B"], rng.randint(0, 2)),
    )
    provided = rng.sample(["A", "B"], rng.randint(0, 2))
    return c, employees, provided, installs, variants


def oracle_for(c, employees, provided, installs, variants):
    by_v = {v.variant_id: v for v in variants}
    elig = [e for e in employees if e.subgroup_id in c.linked_erss]
    services = [s for s in c.linked_services if s in provided]
    handles = [i for i in installs if by_v[i.variant_id].template.handles_data("Mail")]
    clients = {}
    for i in handles:
        if i.owner is not None:
            clients.setdefault(i.owner, []).append((i.id, by_v[i.variant_id].template.database))
    srv = [(i.id, i.org_services, by_v[i.variant_id].template.database) for i in handles if i.owner is None]
    return enumerate_instances(c, elig, services, clients, srv)


@pytest.mark.parametrize("seed", range(60))
def test_counts_match_enumeration(seed):
    c, employees, provided, installs, variants = random_world(random.Random(seed))
    want = oracle_for(c, employees, provided, installs, variants)
    ok = storable(c, want, installs, variants)
    try:
        out = datasets.instantiate_datasets([c], employees, provided, installs, variants)
    except NoEligibleStore:
        assert not ok
        return
    assert ok
    got = sorted((tuple(d.linked_employees), tuple(d.linked_services), tuple(d.linked_installations)) for d in out)
    assert got == sorted((tuple(sorted(e)), tuple(sorted(s)), w) for e, s, w in want)
