import numpy as np

from batchshop.initialization import (
    PLACEMENT_RULES,
    STRATEGIES,
    init_population,
    make_sequence,
    place,
)
from batchshop.instance import Instance, generate_instance, tiny_a
from batchshop.schedule import Schedule, check_feasibility, decode


def test_strategy_table():
    assert len(STRATEGIES) == 10
    assert len(set(STRATEGIES)) == 10
    assert STRATEGIES[0] == ("RANDOM", "MFBF")
    assert STRATEGIES[5] == ("KMEANS", "MFBF")


def test_sequence_single_job_identity():
    inst = Instance(n_jobs=1, n_stages=1, stage_types=(0,), machine_caps=((5,),),
                    job_sizes=(1,), proc_time=(((7,),),), power_load=1.0, power_idle=1.0)
    for rule in ("RANDOM", "KMEANS"):
        assert make_sequence(inst, rule, np.random.default_rng(0)) == [0]


def test_random_sequence_reproducible():
    inst = generate_instance(8, 2, 2, 0.5, seed=1)
    a = make_sequence(inst, "RANDOM", np.random.default_rng(42))
    b = make_sequence(inst, "RANDOM", np.random.default_rng(42))
    assert a == b
    assert sorted(a) == list(range(8))


def test_kmeans_tiny_a_cluster_order():
    # two jobs, two singleton clusters; centroid norms order J0 before J1
    inst = tiny_a()
    seq = make_sequence(inst, "KMEANS", np.random.default_rng(0))
    assert seq == [0, 1]


def test_kmeans_sequence_is_permutation():
    inst = generate_instance(12, 3, 3, 0.5, seed=2)
    seq = make_sequence(inst, "KMEANS", np.random.default_rng(7))
    assert sorted(seq) == list(range(12))


def test_mfbf_tiny_a_trace():
    inst = tiny_a()
    s = place(inst, [0, 1], "MFBF", np.random.default_rng(0))
    assert s.batches[0][0] == [[0, 1]]       # both join the stage-1 batch
    assert s.batches[1][0] == [[0], [1]]     # release-order singletons
    assert decode(inst, s).objectives.makespan == 11


def test_single_machine_mcbf_equals_mfbf():
    inst = tiny_a()
    a = place(inst, [0, 1], "MFBF", np.random.default_rng(0))
    b = place(inst, [0, 1], "MCBF", np.random.default_rng(0))
    assert a == b


def test_mrbf_reproducible():
    inst = generate_instance(6, 2, 3, 0.5, seed=3)
    a = place(inst, list(range(6)), "MRBF", np.random.default_rng(9))
    b = place(inst, list(range(6)), "MRBF", np.random.default_rng(9))
    assert a == b


def test_mpbf_selects_min_processing_time():
    inst = generate_instance(6, 2, 3, 0.0, seed=4)
    s = place(inst, list(range(6)), "MPBF", np.random.default_rng(0))
    res = decode(inst, s)
    for (i, j), m in res.op_machine.items():
        best = min(inst.pt(i, j, mm) for mm in inst.eligible_machines(i, j))
        assert inst.pt(i, j, m) == best


def test_mcbf_picks_earliest_completion_at_decision_time():
    # single stage: placement order is the sequence itself, so each operation's
    # completion must be minimal among machine candidates re-evaluated greedily
    inst = generate_instance(6, 1, 3, 0.0, seed=5)
    seq = list(range(6))
    s = place(inst, seq, "MCBF", np.random.default_rng(0))
    res = decode(inst, s)
    ready = {m: 0 for m in range(inst.machines_at(0))}
    for i in seq:
        options = {m: ready[m] + inst.pt(i, 0, m) for m in inst.eligible_machines(i, 0)}
        chosen = res.op_machine[(i, 0)]
        assert options[chosen] == min(options.values())
        ready[chosen] = options[chosen]


def test_population_round_robin_shares():
    inst = tiny_a()
    pop40 = init_population(inst, 40, seed=0)
    counts = {}
    for _, strat in pop40:
        counts[strat] = counts.get(strat, 0) + 1
    assert all(c == 4 for c in counts.values()) and len(counts) == 10

    pop10 = init_population(inst, 10, seed=0)
    assert [strat for _, strat in pop10] == list(STRATEGIES)

    pop3 = init_population(inst, 3, seed=0)
    assert [strat for _, strat in pop3] == list(STRATEGIES[:3])


def test_all_strategies_feasible_under_fuzz():
    for seed in range(25):
        inst = generate_instance(int(3 + seed % 5), 2 + seed % 2, 3, 0.5, seed=seed)
        for sched, strat in init_population(inst, 10, seed=seed):
            assert check_feasibility(inst, sched).ok, strat


def test_release_order_sorting_is_stable():
    # equal releases keep the incoming sequence order at later stages
    inst = tiny_a()
    s = place(inst, [1, 0], "MFBF", np.random.default_rng(0))
    # both jobs released at 5 after the shared batch: stage-2 order follows (1, 0)
    assert s.batches[1][0] == [[1], [0]]
