import pytest

from src.cl.data import generate_synthetic, prepare_dataset
from src.cl.errors import ConfigurationError
from src.cl.scenarios import (
    ScenarioKind, TaskStream, build_joint, build_scenario1, build_scenario2, build_scenario3, build_stream,
    eval_set, permute_classes, session_order,
)


def _classes_per_task(stream):
    return [len(task.classes_introduced) for task in stream.tasks]


def test_permute_classes_seed_zero_is_sorted():
    assert permute_classes([3, 1, 2], 0) == [1, 2, 3]
    shuffled = permute_classes(range(10), 7)
    assert sorted(shuffled) == list(range(10))
    assert shuffled == permute_classes(range(10), 7)


def test_permute_classes_empty():
    with pytest.raises(ConfigurationError):
        permute_classes([], 1)


def test_scenario1_two_drivers_per_task(ten_driver_dataset):
    stream = build_stream(ten_driver_dataset, ScenarioKind.TWO_NEW_DRIVERS, permutation_seed=3)
    assert len(stream) == 5
    assert _classes_per_task(stream) == [2, 2, 2, 2, 2]
    order = list(stream.permutation)
    for task, pair in zip(stream.tasks, [order[i:i + 2] for i in range(0, 10, 2)]):
        assert task.classes_introduced == frozenset(pair)
        assert task.labels == frozenset(pair)
        # ambas sesiones de cada conductor
        assert len(task.sessions_included) == 4


def test_scenario2_sequence(ten_driver_dataset):
    stream = build_stream(ten_driver_dataset, ScenarioKind.ONE_NEW_DRIVER, permutation_seed=0)
    assert len(stream) == 9
    assert _classes_per_task(stream) == [2] + [1] * 8
    assert stream.tasks[0].classes_introduced == frozenset({0, 1})
    assert stream.tasks[-1].classes_introduced == frozenset({9})


def test_scenario3_sessions_per_task(ten_driver_dataset):
    stream = build_stream(ten_driver_dataset, ScenarioKind.TWO_NEW_SESSIONS, permutation_seed=5)
    assert len(stream) == 10
    assert all(len(task.sessions_included) == 2 for task in stream.tasks)
    covered = [key for task in stream.tasks for key in task.sessions_included]
    assert sorted(covered) == ten_driver_dataset.keys
    assert stream.all_classes == frozenset(range(10))
    # cada tarea entrena solo con conductores ya vistos
    for t, task in enumerate(stream.tasks, start=1):
        assert task.labels <= stream.seen_classes(t)


@pytest.mark.parametrize("seed", range(20))
def test_session_order_keeps_first_session_first(ten_driver_dataset, seed):
    order = session_order(ten_driver_dataset, seed)
    position = {key: i for i, key in enumerate(order)}
    assert sorted(order) == ten_driver_dataset.keys
    for driver in ten_driver_dataset.drivers:
        assert position[(driver, 1)] < position[(driver, 2)]


def test_scenario3_explicit_order(ten_driver_dataset):
    order = [(d, s) for s in (1, 2) for d in range(10)]
    stream = build_scenario3(ten_driver_dataset, 0, order=order)
    assert _classes_per_task(stream) == [2] * 5 + [0] * 5


def test_scenario3_rejects_second_session_first(ten_driver_dataset):
    order = [(0, 2), (0, 1)] + [(d, s) for d in range(1, 10) for s in (1, 2)]
    with pytest.raises(ConfigurationError):
        build_scenario3(ten_driver_dataset, 0, order=order)


def test_eval_set_grows_and_covers_pool(ten_driver_dataset):
    pool = ten_driver_dataset.test_pool()
    stream = build_stream(ten_driver_dataset, ScenarioKind.TWO_NEW_DRIVERS, permutation_seed=2)
    previous = set()
    for t in range(1, len(stream) + 1):
        current = {id(w) for w in eval_set(stream, t, pool)}
        assert previous <= current
        assert len(current) == 3 * 2 * len(stream.seen_classes(t))
        previous = current
    final = eval_set(stream, len(stream), pool)
    assert len(final) == sum(len(w) for w in pool.values())


def test_eval_set_is_grouped_by_session(ten_driver_dataset):
    pool = ten_driver_dataset.test_pool()
    stream = build_stream(ten_driver_dataset, ScenarioKind.ONE_NEW_DRIVER, permutation_seed=1)
    windows = eval_set(stream, 2, pool)
    keys = [(w.label, w.session_id) for w in windows]
    assert keys == sorted(keys)
    for key in set(keys):
        indices = [w.index for w in windows if (w.label, w.session_id) == key]
        assert indices == sorted(indices)


def test_eval_set_out_of_range(ten_driver_dataset):
    stream = build_joint(ten_driver_dataset)
    with pytest.raises(IndexError):
        eval_set(stream, 0, ten_driver_dataset.test_pool())
    with pytest.raises(IndexError):
        eval_set(stream, 2, ten_driver_dataset.test_pool())


def test_joint_single_task(ten_driver_dataset):
    stream = build_stream(ten_driver_dataset, ScenarioKind.JOINT, permutation_seed=0)
    assert len(stream) == 1
    assert stream.tasks[0].classes_introduced == frozenset(range(10))
    assert len(stream.tasks[0].train_windows) == 8 * 20


def test_odd_driver_count_needs_partial_task():
    dataset = prepare_dataset(generate_synthetic(5, 2, 60, 3, seed=2), length=10, stride=5)
    with pytest.raises(ConfigurationError):
        build_scenario1(dataset, [0, 1, 2, 3, 4])
    stream = build_scenario1(dataset, [0, 1, 2, 3, 4], allow_partial_last_task=True)
    assert _classes_per_task(stream) == [2, 2, 1]


def test_scenario2_needs_three_drivers():
    small = prepare_dataset(generate_synthetic(2, 2, 60, 3, seed=3), length=10, stride=5)
    with pytest.raises(ConfigurationError):
        build_scenario2(small, [0, 1])


def test_order_must_be_permutation(prepared):
    with pytest.raises(ConfigurationError):
        build_scenario1(prepared, [0, 1, 2, 2])


def test_manifest_rebuilds_stream(ten_driver_dataset):
    stream = build_stream(ten_driver_dataset, ScenarioKind.TWO_NEW_SESSIONS, permutation_seed=4)
    rebuilt = TaskStream.from_manifest(stream.to_manifest(), ten_driver_dataset)
    assert rebuilt.permutation == stream.permutation
    assert [t.sessions_included for t in rebuilt.tasks] == [t.sessions_included for t in stream.tasks]
    assert [t.classes_introduced for t in rebuilt.tasks] == [t.classes_introduced for t in stream.tasks]
