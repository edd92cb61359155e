import numpy as np
import pytest

from batchshop.instance import Instance, generate_instance, tiny_a
from batchshop.schedule import (
    InfeasibleScheduleError,
    Objectives,
    Schedule,
    check_feasibility,
    decode,
    dominates,
    enumerate_all_schedules,
    enumerate_pareto_oracle,
    pareto_filter,
    random_schedule,
    read_schedule,
    weakly_dominates,
    write_schedule,
)


def tiny_batched() -> Schedule:
    # stage 1: one batch {J0,J1} on M1; stage 2: J0 then J1 on M2
    return Schedule([[[[0, 1]]], [[[0], [1]]]])


def single_job_instance() -> Instance:
    return Instance(
        n_jobs=1, n_stages=1, stage_types=(0,), machine_caps=((10,),),
        job_sizes=(3,), proc_time=(((7,),),), power_load=2.0, power_idle=1.0,
    )


def test_decode_tiny_a_batched():
    res = decode(tiny_a(), tiny_batched())
    assert res.objectives == Objectives(11, 43.0)
    # machine-level decomposition: M1 load 20 idle 6, M2 load 12 idle 5
    assert res.machine_load[(0, 0)] == 20.0
    assert res.machine_busy[(0, 0)] == 5
    assert res.machine_load[(1, 0)] == 12.0
    assert res.machine_busy[(1, 0)] == 6


def test_decode_single_operation():
    inst = single_job_instance()
    res = decode(inst, Schedule([[[[0]]]]))
    assert res.objectives == Objectives(7, 14.0)


def test_decode_tiny_a_reversed_order():
    res = decode(tiny_a(), Schedule([[[[1], [0]]], [[[1], [0]]]]))
    assert res.objectives.makespan == 11
    assert res.op_start == {(1, 0): 0, (0, 0): 5, (1, 1): 5, (0, 1): 9}
    assert res.op_end == {(1, 0): 5, (0, 0): 8, (1, 1): 9, (0, 1): 11}


def test_decode_is_pure():
    inst = tiny_a()
    s = tiny_batched()
    a, b = decode(inst, s), decode(inst, s)
    assert a.objectives == b.objectives
    assert a.op_start == b.op_start


def test_structural_violations_raise():
    inst = tiny_a()
    with pytest.raises(InfeasibleScheduleError, match="assigned twice"):
        decode(inst, Schedule([[[[0, 1], [0]]], [[[0], [1]]]]))
    with pytest.raises(InfeasibleScheduleError, match="missing"):
        decode(inst, Schedule([[[[0]]], [[[0], [1]]]]))
    with pytest.raises(InfeasibleScheduleError, match="discrete"):
        decode(inst, Schedule([[[[0, 1]]], [[[0, 1]]]]))


def test_capacity_violation_reported():
    inst = tiny_a()
    data = inst.to_dict()
    data["job_sizes"] = [6, 5]  # total 11 > MC 10
    inst2 = Instance.from_dict(data)
    report = check_feasibility(inst2, tiny_batched())
    assert not report.ok
    assert report.violation == "capacity"


def test_overlap_detected_on_tampered_times():
    inst = tiny_a()
    s = Schedule([[[[0], [1]]], [[[0], [1]]]])
    res = decode(inst, s)
    res.batch_start[(0, 0, 1)] = 1  # force overlap with batch 0 (ends at 3)
    report = check_feasibility(inst, s, res)
    assert not report.ok
    assert report.violation in ("overlap", "shared-batch-timing")


def test_decode_output_always_feasible():
    report = check_feasibility(tiny_a(), tiny_batched())
    assert report.ok


def test_oracle_tiny_a():
    front = enumerate_pareto_oracle(tiny_a())
    # frozen from an independent hand enumeration of all 6 encodings
    assert front == [Objectives(11, 36.0)]
    assert any(p.makespan == 11 for p in front)


def test_oracle_single_job():
    assert enumerate_pareto_oracle(single_job_instance()) == [Objectives(7, 14.0)]


def test_oracle_two_jobs_one_discrete_machine():
    inst = Instance(
        n_jobs=2, n_stages=1, stage_types=(0,), machine_caps=((10,),),
        job_sizes=(1, 1), proc_time=(((4,),), ((6,),)), power_load=2.0, power_idle=1.0,
    )
    front = enumerate_pareto_oracle(inst)
    assert len(front) == 1  # both orders give the same objective pair
    assert front[0].makespan == 10


def test_oracle_guard():
    inst = generate_instance(5, 2, 2, 0.5, seed=0)  # 10 operations
    with pytest.raises(ValueError, match="guard"):
        enumerate_pareto_oracle(inst)


def test_random_schedules_decode_feasible():
    rng = np.random.default_rng(123)
    for seed in range(5):
        inst = generate_instance(5, 2, 3, 0.5, seed=seed)
        for _ in range(40):
            s = random_schedule(inst, rng)
            assert check_feasibility(inst, s).ok


def test_decoded_points_weakly_dominated_by_oracle():
    rng = np.random.default_rng(5)
    for seed in range(4):
        inst = generate_instance(3, 2, 2, 0.6, seed=seed)  # 6 operations
        front = enumerate_pareto_oracle(inst)
        for _ in range(25):
            obj = decode(inst, random_schedule(inst, rng)).objectives
            assert any(weakly_dominates(p, obj) for p in front)


def test_pareto_filter():
    pts = [Objectives(3, 1.0), Objectives(1, 3.0), Objectives(2, 2.0),
           Objectives(3, 3.0), Objectives(2, 2.0)]
    assert pareto_filter(pts) == [Objectives(1, 3.0), Objectives(2, 2.0), Objectives(3, 1.0)]
    assert dominates(Objectives(2, 2.0), Objectives(3, 3.0))
    assert not dominates(Objectives(2, 2.0), Objectives(2, 2.0))
    assert weakly_dominates(Objectives(2, 2.0), Objectives(2, 2.0))


def test_schedule_file_round_trip(tmp_path):
    inst = tiny_a()
    s = tiny_batched()
    path = tmp_path / "sched.json"
    write_schedule(s, path)
    back = read_schedule(path, inst)
    assert back == s


def test_enumeration_counts_tiny_a():
    # 3 batchings on the stage-1 machine x 2 orders on the stage-2 machine
    assert sum(1 for _ in enumerate_all_schedules(tiny_a())) == 6
