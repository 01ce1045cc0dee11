from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ceflow.engine import (
    Allocation,
    EngineConfig,
    NonPositiveHeadroom,
    NoNodeInScene,
    Resources,
    RoamRequest,
    allocate,
    concurrent_demand,
    evaluate,
    fcfs_admit,
    place,
    rank_nodes,
    residual_resources,
    scale_demand,
)
from ceflow.model import ClusterState, Label, PodRecord, PodState, Role, Tier, UnknownNode
from ceflow.store import TaskRecord, TaskStore

from . import oracles
from .conftest import make_node, make_task

NODE = "10.0.0.3"
LABEL = Label("edge-1", NODE)


def one_node_cluster(cpu=4000, mem=2048) -> ClusterState:
    return ClusterState.from_nodes([make_node(NODE, cpu=cpu, mem=mem)])


def add_pod(cluster, key, cpu, mem, state=PodState.RUNNING, ip=NODE):
    pod = PodRecord("bg", key, 0, ip, cpu, mem)
    if state is not PodState.PENDING:
        pod.transition(PodState.RUNNING, 0)
        if state is not PodState.RUNNING:
            pod.transition(state, 0)
    cluster.pods[pod.key] = pod
    return pod


def store_with(task, peers=(), start=0, end=100) -> TaskStore:
    s = TaskStore()
    s.put_record(TaskRecord("w", task.task_id, LABEL, start_ms=start, lifecycle_end_ms=end,
                            cpu_request=task.cpu_request, mem_request=task.mem_request))
    for i, (cpu, mem, st_ms) in enumerate(peers):
        s.put_record(TaskRecord("other", f"P{i}", LABEL, start_ms=st_ms, lifecycle_end_ms=st_ms + 1,
                                cpu_request=cpu, mem_request=mem))
    return s


# ---------------------------------------------------------------- residual


def test_residual_of_empty_cluster_is_capacity(small_cluster):
    res = residual_resources(small_cluster)
    assert res["10.0.0.1"] == Resources(1000, 2048)
    assert set(res) == set(small_cluster.nodes)


def test_residual_subtracts_running_pod():
    c = one_node_cluster()
    add_pod(c, "x", 400, 630)
    assert residual_resources(c)[NODE] == Resources(3600, 1418)


def test_residual_matches_state_sum_oracle():
    rng = random.Random(21)
    for _ in range(1000):
        c = ClusterState.from_nodes([make_node(NODE), make_node("10.0.0.4"), make_node("10.0.0.1", Tier.CLOUD, "cloud", 1000)])
        for i in range(rng.randint(0, 8)):
            state = rng.choice(list(PodState))
            if state is PodState.DELETED:
                state = PodState.SUCCEEDED
            add_pod(c, f"p{i}", rng.randint(1, 400), rng.randint(1, 200), state, rng.choice(list(c.nodes)))
        got = {ip: (r.cpu, r.mem) for ip, r in residual_resources(c).items()}
        assert got == oracles.residual(c.nodes, list(c.pods.values()))


# ---------------------------------------------------------- concurrent demand


def test_concurrent_demand_examples():
    task = make_task()
    assert concurrent_demand(task, "w", LABEL, store_with(task)) == Resources(0, 0)
    s = store_with(task, [(100, 50, 10), (200, 70, 100), (999, 999, 101)])
    assert concurrent_demand(task, "w", LABEL, s) == Resources(300, 120)


def test_concurrent_demand_oracle_1000_cases():
    rng = random.Random(22)
    labels = [LABEL, Label("edge-1", "10.0.0.4")]
    for _ in range(1000):
        s = TaskStore()
        st_ms = rng.randint(0, 50)
        me = TaskRecord("w", "T", rng.choice(labels), start_ms=st_ms, lifecycle_end_ms=st_ms + rng.randint(0, 50))
        s.put_record(me)
        for i in range(rng.randint(0, 12)):
            st_ms = rng.randint(0, 120)
            r = TaskRecord(rng.choice(["w", "v"]), f"P{i}", rng.choice(labels), alive=rng.random() < 0.3,
                           start_ms=st_ms, lifecycle_end_ms=st_ms, cpu_request=rng.randint(1, 2000),
                           mem_request=rng.randint(1, 1000))
            s.put_record(r)
        got = concurrent_demand(make_task("T"), "w", me.labels, s)
        want = oracles.competing(list(s), me.labels, (me.start_ms, me.lifecycle_end_ms), ("w", "T"))
        assert (got.cpu, got.mem) == want


# ---------------------------------------------------------------- evaluate


def test_evaluate_boundary_is_inclusive():
    c = one_node_cluster(cpu=1000, mem=1000)
    add_pod(c, "x", 300, 300)
    task = make_task(cpu_request=400, mem_request=400, mem_min=100)
    s = store_with(task, [(300, 300, 50)])
    assert evaluate(task, "w", c.node(NODE), s, c)
    s2 = store_with(task, [(301, 300, 50)])
    assert not evaluate(task, "w", c.node(NODE), s2, c)


def test_evaluate_full_node_rejects_and_unknown_node_raises():
    c = one_node_cluster(cpu=1000, mem=1000)
    add_pod(c, "x", 1000, 1000)
    task = make_task(cpu_request=1, mem_request=1, mem_min=1)
    assert not evaluate(task, "w", c.node(NODE), store_with(task), c)
    with pytest.raises(UnknownNode):
        evaluate(task, "w", make_node("9.9.9.9"), store_with(task), c)


def test_evaluate_enumeration_oracle():
    # 5 tasks on 2 nodes, every subset of peers in/out of the window
    nodes = [make_node(NODE, cpu=1000, mem=1000), make_node("10.0.0.4", cpu=1000, mem=1000)]
    requests = [(300, 200), (250, 400), (100, 100), (400, 300), (200, 250)]
    for mask in itertools.product([0, 1, 2], repeat=4):  # 0: outside, 1: same node, 2: other node
        c = ClusterState.from_nodes(nodes)
        s = TaskStore()
        me = TaskRecord("w", "T0", LABEL, start_ms=0, lifecycle_end_ms=10,
                        cpu_request=requests[0][0], mem_request=requests[0][1])
        s.put_record(me)
        for i, where in enumerate(mask, start=1):
            label = LABEL if where == 1 else Label("edge-1", "10.0.0.4")
            s.put_record(TaskRecord("w", f"T{i}", label, start_ms=5 if where else 50, lifecycle_end_ms=60,
                                    cpu_request=requests[i][0], mem_request=requests[i][1]))
        same = [requests[i] for i, where in enumerate(mask, start=1) if where == 1]
        fits = 1000 >= 300 + sum(r[0] for r in same) and 1000 >= 200 + sum(r[1] for r in same)
        task = make_task("T0", cpu_request=300, mem_request=200, mem_min=100)
        assert evaluate(task, "w", c.node(NODE), s, c) is fits
        assert evaluate(task, "w", c.node(NODE), s, c) is fits  # pure


# ------------------------------------------------------------------ scaling


def test_scale_with_no_competition_is_headroom_capped():
    assert scale_demand(Resources(500, 500), Resources(1000, 1000), Resources(700, 800), Resources(0, 0)) == Resources(300, 200)
    assert scale_demand(Resources(100, 100), Resources(1000, 1000), Resources(0, 0), Resources(0, 0)) == Resources(100, 100)


def test_scale_reproduces_199():
    got = scale_demand(Resources(400, 200), Resources(4000, 2048), Resources(0, 1650), Resources(0, 200))
    assert got.mem == 199


def test_scale_rejects_non_positive_headroom():
    with pytest.raises(NonPositiveHeadroom):
        scale_demand(Resources(1, 1), Resources(100, 100), Resources(100, 0), Resources(0, 0))


def test_scale_oracle_1000_cases():
    rng = random.Random(23)
    for _ in range(1000):
        req = Resources(rng.randint(1, 3000), rng.randint(1, 3000))
        alloc = Resources(rng.randint(1, 8000), rng.randint(1, 8000))
        used = Resources(rng.randint(0, alloc.cpu - 1), rng.randint(0, alloc.mem - 1))
        comp = Resources(rng.randint(0, 10000), rng.randint(0, 10000))
        got = scale_demand(req, alloc, used, comp)
        assert got.cpu == oracles.scaled(req.cpu, alloc.cpu, used.cpu, comp.cpu)
        assert got.mem == oracles.scaled(req.mem, alloc.mem, used.mem, comp.mem)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 10000), st.integers(0, 10000), st.integers(0, 20000))
def test_scaling_never_inflates(req, alloc, used, comp):
    if alloc - used <= 0:
        return
    cut = scale_demand(Resources(req, req), Resources(alloc, alloc), Resources(used, used), Resources(comp, comp))
    assert 1 <= cut.cpu <= req
    assert cut.cpu <= max(1, alloc - used)


# ---------------------------------------------------------------- allocate


def test_allocate_full_grant():
    c = one_node_cluster()
    task = make_task()
    got = allocate(task, "w", c.node(NODE), store_with(task), c)
    assert got == Allocation(400, 630, NODE, False, "A1A2")


def test_allocate_scaled_memory_only_below_floor_roams():
    c = one_node_cluster()
    add_pod(c, "bg", 1000, 1448)
    task = make_task()
    got = allocate(task, "w", c.node(NODE), store_with(task, [(100, 1269, 10)]), c)
    assert isinstance(got, RoamRequest)
    assert got.branch == "A1¬A2"
    assert (got.grant.cpu, got.grant.mem) == (400, 199)


def test_allocate_333_45_is_roam_request():
    c = one_node_cluster()
    add_pod(c, "bg", 3000, 1948)
    task = make_task(cpu_request=400, mem_request=433)
    got = allocate(task, "w", c.node(NODE), store_with(task, [(801, 529, 10)]), c)
    assert isinstance(got, RoamRequest) and got.branch == "¬A1¬A2"
    assert (got.grant.cpu, got.grant.mem) == (333, 45)


def test_allocate_boundary_exactly_floor_is_granted():
    c = one_node_cluster(mem=1000)
    add_pod(c, "bg", 0 + 1, 780)  # headroom 220
    task = make_task(mem_request=630, mem_min=200)
    got = allocate(task, "w", c.node(NODE), store_with(task), c, EngineConfig(beta=20))
    assert isinstance(got, Allocation) and got.mem == 220 and got.scaled


def test_allocate_scaled_cpu_only():
    c = one_node_cluster()
    add_pod(c, "bg", 3800, 0 + 1)
    task = make_task(cpu_request=400)
    got = allocate(task, "w", c.node(NODE), store_with(task), c)
    assert isinstance(got, Allocation)
    assert (got.cpu, got.mem, got.branch) == (200, 630, "¬A1A2")


def test_allocate_low_cpu_does_not_roam():
    c = one_node_cluster()
    add_pod(c, "bg", 3999, 1)
    task = make_task(cpu_request=400)
    got = allocate(task, "w", c.node(NODE), store_with(task), c, EngineConfig(cpu_min=1))
    assert isinstance(got, Allocation) and got.cpu == 1


def test_allocate_without_headroom_is_roam_without_grant():
    c = one_node_cluster()
    add_pod(c, "bg", 100, 2048)
    task = make_task()
    got = allocate(task, "w", c.node(NODE), store_with(task), c)
    assert isinstance(got, RoamRequest) and got.grant is None


def test_fcfs_admit_all_or_nothing():
    c = one_node_cluster()
    task = make_task()
    assert fcfs_admit(task, c.node(NODE), c) == Allocation(400, 630, NODE)
    add_pod(c, "bg", 0 + 1, 1500)
    assert fcfs_admit(task, c.node(NODE), c) is None


# ---------------------------------------------------------------- placement


def test_place_single_node_and_argmax(small_cluster):
    s = TaskStore()
    t = make_task("T", scene_hint="edge-2")
    s.put_record(TaskRecord("w", "T", Label("", "")))
    assert place(t, "w", small_cluster, s) == Label("edge-2", "10.0.0.5")
    add_pod(small_cluster, "bg", 10, 1948, ip="10.0.0.3")  # 100Mi left
    add_pod(small_cluster, "bg2", 10, 1848, ip="10.0.0.4")  # 200Mi left
    t1 = make_task("T1")
    s.put_record(TaskRecord("w", "T1", Label("", "")))
    assert place(t1, "w", small_cluster, s).value == "10.0.0.4"
    assert s.get("w", "T1").labels.value == "10.0.0.4"


def test_place_cloud_task_goes_to_cloud_tier(small_cluster):
    s = TaskStore()
    s.put_record(TaskRecord("w", "T", Label("", "")))
    label = place(make_task(role=Role.CLOUD_BOUND), "w", small_cluster, s)
    assert label == Label("cloud", "10.0.0.1")


def test_place_unknown_scene():
    c = one_node_cluster()
    s = TaskStore()
    s.put_record(TaskRecord("w", "T", Label("", "")))
    with pytest.raises(NoNodeInScene):
        place(make_task(scene_hint="edge-9"), "w", c, s)


def test_rank_nodes_total_order_oracle():
    rng = random.Random(24)
    ips = ["10.0.0.3", "10.0.0.4", "10.0.0.10", "10.0.0.2"]
    nodes = [make_node(ip) for ip in ips]
    for _ in range(500):
        residual = {ip: Resources(rng.choice([100, 200]), rng.choice([1, 2])) for ip in ips}
        best = rank_nodes(nodes, residual)[0].ip
        assert best == oracles.best_node([(ip, residual[ip].mem, residual[ip].cpu) for ip in ips])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 2048), min_size=2, max_size=6), st.integers(2, 50))
def test_argmax_is_scale_invariant(mems, factor):
    nodes = [make_node(f"10.0.1.{i}") for i in range(len(mems))]
    r1 = {n.ip: Resources(5, m) for n, m in zip(nodes, mems)}
    r2 = {n.ip: Resources(5, m * factor) for n, m in zip(nodes, mems)}
    assert rank_nodes(nodes, r1)[0].ip == rank_nodes(nodes, r2)[0].ip
