import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairalloc.model import (
    Instance,
    Link,
    ModelError,
    Route,
    balanced_assignment,
    build_partition,
    generate_random,
    generate_with_topology,
    instance_from_dict,
    instance_to_dict,
    is_feasible,
    link_loads,
    load_instance,
    load_partition,
    save_instance,
    save_partition,
    single_domain,
    validate,
)


def test_validate_accepts_wellformed(small_instance):
    assert validate(small_instance) == []


def test_validate_names_bad_capacity():
    inst = Instance(links=(Link(0, 1.0), Link(1, 0.0)), routes=(Route(0, (0,)),))
    problems = validate(inst)
    assert any("link 1" in p and "capacity" in p for p in problems)


def test_validate_names_bad_route():
    inst = Instance(
        links=(Link(0, 1.0),),
        routes=(Route(0, ()), Route(1, (0, 0)), Route(2, (5,)), Route(3, (0,), weight=-1.0)),
    )
    problems = "\n".join(validate(inst))
    assert "route 0" in problems and "at least one link" in problems
    assert "route 1" in problems and "repeated" in problems
    assert "route 2" in problems and "unknown link" in problems
    assert "route 3" in problems and "weight" in problems


def test_validate_rejects_negative_alpha():
    inst = Instance(links=(Link(0, 1.0),), routes=(Route(0, (0,)),), alpha=-0.5)
    assert any("alpha" in p for p in validate(inst))


def test_incidence_layout(tiny_instance):
    inc = tiny_instance.incidence
    assert inc.link_starts.tolist() == [0, 2, 3]
    assert inc.copy_route.tolist() == [0, 1, 1]
    assert inc.members(0).tolist() == [0, 1]


def test_link_loads_and_feasibility(tiny_instance):
    x = np.array([1.0, 0.5])
    assert link_loads(tiny_instance, x).tolist() == [1.5, 0.5]
    assert is_feasible(tiny_instance, x)
    assert not is_feasible(tiny_instance, np.array([1.0, 1.1]))  # link 0 over
    assert not is_feasible(tiny_instance, np.array([-0.1, 0.5]))


def test_partition_structure(small_instance):
    part = build_partition(small_instance, balanced_assignment(small_instance, 3))
    assert part.n_domains == 3
    counts = [len(ls) for ls in part.links_by_domain[1:]]
    assert max(counts) - min(counts) <= 1
    # every route's domain list starts with the route-owner pseudo-domain 0
    for ds in part.domains_of_route:
        assert ds[0] == 0 and len(ds) >= 2


def test_partition_rejects_missing_link(small_instance):
    mapping = balanced_assignment(small_instance, 2)
    mapping.pop(3)
    with pytest.raises(ModelError, match="link 3"):
        build_partition(small_instance, mapping)


def test_partition_rejects_empty_domain(small_instance):
    mapping = {j: 1 for j in range(small_instance.n_links)}
    mapping[0] = 3  # domain 2 missing
    with pytest.raises(ModelError, match="domain 2"):
        build_partition(small_instance, mapping)


def test_single_domain_covers_everything(small_instance):
    part = single_domain(small_instance)
    assert part.n_domains == 1
    assert len(part.links_by_domain[1]) == small_instance.n_links
    assert len(part.routes_by_domain[1]) == small_instance.n_routes


def test_generate_is_deterministic():
    a = generate_random(seed=9, n_nodes=10, n_links=15, n_routes=20)
    b = generate_random(seed=9, n_nodes=10, n_links=15, n_routes=20)
    assert a == b
    c = generate_random(seed=10, n_nodes=10, n_links=15, n_routes=20)
    assert a != c


def test_generate_topology_is_connected_and_sized():
    inst, edges = generate_with_topology(seed=2, n_nodes=9, n_links=14, n_routes=10)
    assert len(edges) == 14 and len(set(edges)) == 14
    # union-find connectivity over the edge list
    parent = list(range(9))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for u, v in edges:
        parent[find(u)] = find(v)
    assert len({find(u) for u in range(9)}) == 1


def test_generate_routes_are_paths():
    inst, edges = generate_with_topology(seed=4, n_nodes=8, n_links=12, n_routes=25)
    for route in inst.routes:
        # consecutive links must chain through shared nodes, no link repeats
        assert len(set(route.links)) == len(route.links)
        ends = [edges[j] for j in route.links]
        if len(ends) > 1:
            for (a1, b1), (a2, b2) in zip(ends, ends[1:]):
                assert {a1, b1} & {a2, b2}


def test_generate_parameter_validation():
    with pytest.raises(ModelError):
        generate_random(seed=0, n_nodes=5, n_links=3, n_routes=1)  # below tree size
    with pytest.raises(ModelError):
        generate_random(seed=0, n_nodes=5, n_links=11, n_routes=1)  # above complete graph
    with pytest.raises(ModelError):
        generate_random(seed=0, n_nodes=5, n_links=5, n_routes=1, capacity_range=(2.0, 1.0))


def test_instance_json_roundtrip(tmp_path, small_instance):
    path = tmp_path / "inst.json"
    save_instance(small_instance, path)
    assert load_instance(path) == small_instance


def test_instance_rejects_unknown_field(tmp_path, small_instance):
    doc = instance_to_dict(small_instance)
    doc["extra"] = 1
    with pytest.raises(ModelError, match="unknown field 'extra'"):
        instance_from_dict(doc)
    doc.pop("extra")
    doc["links"][2]["color"] = "red"
    with pytest.raises(ModelError, match="unknown field 'color'"):
        instance_from_dict(doc)


def test_instance_rejects_missing_field(small_instance):
    doc = instance_to_dict(small_instance)
    doc.pop("alpha")
    with pytest.raises(ModelError, match="missing field 'alpha'"):
        instance_from_dict(doc)


def test_instance_rejects_bad_types(small_instance):
    doc = instance_to_dict(small_instance)
    doc["routes"][0]["id"] = True
    with pytest.raises(ModelError, match="expected an integer"):
        instance_from_dict(doc)


def test_partition_file_roundtrip(tmp_path, small_instance):
    mapping = balanced_assignment(small_instance, 4)
    path = tmp_path / "part.json"
    save_partition(mapping, path)
    assert load_partition(path) == mapping


def test_partition_file_rejects_duplicates(tmp_path):
    path = tmp_path / "part.json"
    path.write_text(json.dumps([{"link_id": 0, "domain": 1}, {"link_id": 0, "domain": 2}]))
    with pytest.raises(ModelError, match="assigned twice"):
        load_partition(path)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), domains=st.integers(1, 5))
def test_partition_covers_and_matches_route_links(seed, domains):
    inst = generate_random(seed=seed, n_nodes=7, n_links=10, n_routes=8)
    part = build_partition(inst, balanced_assignment(inst, min(domains, inst.n_links)))
    seen = set()
    for p in range(1, part.n_domains + 1):
        seen.update(part.links_by_domain[p])
    assert seen == set(range(inst.n_links))
    for route in inst.routes:
        expected = {0} | {part.domain_of_link[j] for j in route.links}
        assert set(part.domains_of_route[route.id]) == expected
