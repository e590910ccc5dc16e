import random

from flowfsm.flow_context import Activity, FlowContext, FlowContextTable

from helpers import RefContextModel


def small_table(**kw):
    args = dict(subtables=4, buckets=8, bucket_depth=1, seed=1)
    args.update(kw)
    return FlowContextTable(**args)


def test_default_context_synthesized_on_miss():
    table = small_table()
    ctx = table.lookup_context(12345)
    assert (ctx.state, ctx.r) == (0, [0, 0, 0, 0])
    assert table.occupancy == 0  # lookups never allocate


def test_write_back_roundtrip():
    table = small_table()
    table.write_back(7, 2, [7, 0, 0, 0])
    ctx = table.lookup_context(7)
    assert (ctx.state, ctx.r) == (2, [7, 0, 0, 0])


def test_default_write_back_elided():
    table = small_table()
    table.write_back(9, 0, [0, 0, 0, 0])
    assert table.occupancy == 0


def test_non_default_write_back_allocates():
    table = small_table()
    table.write_back(9, 1, [0, 0, 0, 0])
    assert table.occupancy == 1
    table.write_back(10, 0, [0, 0, 1, 0])  # non-zero register also allocates
    assert table.occupancy == 2


def test_existing_entry_updated_in_place_even_to_default():
    table = small_table()
    table.write_back(9, 1, [5, 0, 0, 0])
    table.write_back(9, 0, [0, 0, 0, 0])
    assert table.occupancy == 1
    assert table.lookup_context(9).state == 0


def test_fallback_entry_state_with_zeroed_registers():
    table = small_table()
    # wildcard on the low 8 bits of the key
    table.add_fallback(0x06 << 120, 0xFF << 120, 1, state=5)
    ctx = table.lookup_context((0x06 << 120) | 0x1234)
    assert (ctx.state, ctx.r) == (5, [0, 0, 0, 0])
    assert table.occupancy == 0
    # non-matching keys still get the default
    assert table.lookup_context(0x07 << 120).state == 0


def test_fallback_initial_registers():
    table = small_table()
    table.add_fallback(0, 0, 1, state=3, registers=[9, 8, 7, 6])
    assert table.lookup_context(42).r == [9, 8, 7, 6]


def test_exact_match_shadows_fallback():
    table = small_table()
    table.add_fallback(0, 0, 1, state=3)
    table.write_back(42, 1, [1, 0, 0, 0])
    assert table.lookup_context(42).state == 1


def test_table_full_on_adversarial_keys():
    table = FlowContextTable(subtables=4, buckets=4, bucket_depth=1, seed=3)
    # find 5 keys whose candidate buckets coincide in every subtable
    groups = {}
    for key in range(4000):
        pos = table._positions(key)
        groups.setdefault(pos, []).append(key)
        if len(groups[pos]) == 5:
            colliders = groups[pos]
            break
    else:
        raise AssertionError("no 5-way collision found in search budget")
    for key in colliders[:4]:
        assert table.write_back(key, 1, [0, 0, 0, 0])
    assert not table.write_back(colliders[4], 1, [0, 0, 0, 0])
    assert table.table_full_drops == 1
    # the store keeps serving the already-present keys
    assert table.lookup_context(colliders[0]).state == 1


def test_housekeep_touched_entry_stays():
    table = small_table()
    table.write_back(1, 1, [0, 0, 0, 0])
    table.lookup_context(1)
    assert table.housekeep() == 0
    assert table.get(1).activity == Activity.INACTIVE
    table.lookup_context(1)  # touch revives
    assert table.get(1).activity == Activity.ACTIVE
    assert table.housekeep() == 0
    assert table.occupancy == 1


def test_housekeep_idle_entry_evicted_on_second_scan():
    table = small_table()
    table.write_back(1, 1, [0, 0, 0, 0])
    assert table.housekeep() == 0  # ACTIVE -> INACTIVE
    assert table.housekeep() == 1  # INACTIVE -> gone
    assert table.occupancy == 0
    assert table.lookup_context(1).state == 0
    assert table.evictions == 1


def test_periodic_sender_never_evicted():
    table = small_table()
    table.write_back(1, 1, [0, 0, 0, 0])
    for _ in range(10):
        table.lookup_context(1)
        table.housekeep()
    assert table.occupancy == 1


def test_occupancy_never_exceeds_capacity():
    table = FlowContextTable(subtables=2, buckets=2, bucket_depth=2, seed=0)
    for key in range(100):
        table.write_back(key, 1, [0, 0, 0, 0])
    assert table.occupancy <= table.capacity == 8
    assert table.high_water <= table.capacity


def test_model_equivalence_random_operations():
    rng = random.Random(17)
    table = FlowContextTable(subtables=4, buckets=64, bucket_depth=4, seed=5)
    ref = RefContextModel()
    fallback = (0x01 << 120, 0xFF << 120, 1, 4, [1, 2, 3, 4])
    table.add_fallback(*fallback[:4], registers=fallback[4])
    ref.add_fallback(*fallback[:4], regs=fallback[4])
    keys = [rng.getrandbits(128) for _ in range(300)]
    for _ in range(3000):
        op = rng.random()
        key = rng.choice(keys)
        if op < 0.55:
            ctx = table.lookup_context(key)
            assert (ctx.state, tuple(ctx.r)) == ref.lookup(key)
        elif op < 0.9:
            state = rng.randrange(0, 3)
            regs = [rng.randrange(0, 4) for _ in range(4)]
            table.write_back(key, state, regs)
            ref.write_back(key, state, regs)
        else:
            assert table.housekeep() == ref.housekeep()
    assert table.table_full_drops == 0
    assert table.occupancy == len(ref.entries)


def test_seeds_are_reproducible():
    a = FlowContextTable(seed=123)
    b = FlowContextTable(seed=123)
    c = FlowContextTable(seed=124)
    assert a.seeds == b.seeds
    assert a.seeds != c.seeds
    key = 999
    assert a._positions(key) == b._positions(key)
