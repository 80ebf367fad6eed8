import pytest
from hypothesis import given, strategies as st

from gridhelm.core import (
    EstimateEvaluation,
    Job,
    Task,
    TaskState,
    _ALLOWED,
    TERMINAL_STATES,
    derive_overall_state,
    mean_absolute_percentage_error,
    percentage_error,
    signed_mean_error,
    to_doc,
    transition,
)
from gridhelm.errors import EmptyList, IllegalTransition, ZeroActualRuntime

from conftest import make_attrs, make_task


class TestTransition:
    def test_first_running_sets_start_time(self):
        t = make_task("t1", state=TaskState.QUEUED)
        transition(t, TaskState.RUNNING, 10.0)
        assert t.start_time == 10.0
        assert t.state is TaskState.RUNNING

    def test_terminal_states_are_absorbing(self):
        t = make_task("t1", state=TaskState.COMPLETED)
        with pytest.raises(IllegalTransition):
            transition(t, TaskState.RUNNING, 0.0)

    def test_pause_resume_does_not_touch_wall_clock(self):
        t = make_task("t1", state=TaskState.QUEUED)
        transition(t, TaskState.RUNNING, 0.0)
        t.wall_clock_accumulated = 40.0
        transition(t, TaskState.PAUSED, 50.0)
        transition(t, TaskState.RUNNING, 60.0)
        assert t.wall_clock_accumulated == 40.0
        assert t.start_time == 0.0  # first-run timestamp is sticky

    def test_completion_time_set_iff_terminal(self):
        t = make_task("t1", state=TaskState.QUEUED)
        transition(t, TaskState.RUNNING, 1.0)
        assert t.completion_time is None
        transition(t, TaskState.COMPLETED, 9.0)
        assert t.completion_time == 9.0

    def test_kill_from_any_nonterminal(self):
        for state in set(TaskState) - TERMINAL_STATES:
            t = make_task("t1", state=state)
            transition(t, TaskState.KILLED, 3.0)
            assert t.state is TaskState.KILLED

    def test_moving_roundtrip(self):
        t = make_task("t1", state=TaskState.RUNNING)
        transition(t, TaskState.MOVING, 5.0)
        transition(t, TaskState.QUEUED, 6.0)
        assert t.state is TaskState.QUEUED


def legal_paths():
    """Strategy producing random legal transition sequences from PLANNED."""

    @st.composite
    def path(draw):
        state = TaskState.PLANNED
        steps = []
        for _ in range(draw(st.integers(0, 12))):
            nexts = sorted(_ALLOWED[state], key=lambda s: s.value)
            if not nexts:
                break
            state = draw(st.sampled_from(nexts))
            steps.append(state)
        return steps

    return path()


@given(legal_paths(), st.lists(st.floats(0, 10, allow_nan=False), min_size=13, max_size=13))
def test_wall_clock_never_decreases_on_legal_paths(path, increments):
    t = make_task("t1")
    now = 0.0
    last_wall = 0.0
    for i, state in enumerate(path):
        now += 1.0
        transition(t, state, now)
        if t.state is TaskState.RUNNING:
            t.wall_clock_accumulated += increments[i]  # accrual only while RUNNING
        assert t.wall_clock_accumulated >= last_wall
        last_wall = t.wall_clock_accumulated


class TestOverallState:
    def _job(self, states):
        tasks = {f"t{i}": make_task(f"t{i}", state=s) for i, s in enumerate(states)}
        return Job(job_id="j", owner="alice", tasks=tasks)

    def test_completed_iff_all_completed(self):
        assert self._job([TaskState.COMPLETED] * 3).overall_state is TaskState.COMPLETED
        assert self._job([TaskState.COMPLETED, TaskState.RUNNING]).overall_state is not TaskState.COMPLETED

    def test_failed_requires_no_running(self):
        assert self._job([TaskState.FAILED, TaskState.COMPLETED]).overall_state is TaskState.FAILED
        assert self._job([TaskState.FAILED, TaskState.RUNNING]).overall_state is TaskState.RUNNING

    def test_derivation_is_idempotent(self):
        job = self._job([TaskState.RUNNING, TaskState.QUEUED])
        assert job.overall_state is job.overall_state

    def test_cyclic_job_rejected(self):
        tasks = {t: make_task(t) for t in ("a", "b")}
        with pytest.raises(ValueError):
            Job(job_id="j", owner="alice", tasks=tasks, edges=[("a", "b"), ("b", "a")])

    def test_dag_accepted(self):
        tasks = {t: make_task(t) for t in ("a", "b", "c")}
        job = Job(job_id="j", owner="alice", tasks=tasks, edges=[("a", "b"), ("a", "c")])
        assert job.overall_state is TaskState.PLANNED


class TestPercentageError:
    def test_under_estimate(self):
        assert percentage_error(100, 90) == 10.0

    def test_identity(self):
        assert percentage_error(100, 100) == 0.0

    def test_over_estimate_negative(self):
        # 283 s estimate against the observed 369 s plugged into the formula.
        assert round(percentage_error(283, 369), 2) == -30.39

    def test_zero_actual_rejected(self):
        with pytest.raises(ZeroActualRuntime):
            percentage_error(0, 10)

    @given(st.floats(min_value=1e-6, max_value=1e9, allow_nan=False))
    def test_exact_estimate_has_zero_error(self, a):
        assert percentage_error(a, a) == 0.0


class TestAggregateErrors:
    def test_symmetric_pair_under_absolute_value(self):
        evals = [EstimateEvaluation.of(100, 90), EstimateEvaluation.of(100, 110)]
        assert mean_absolute_percentage_error(evals) == 10.0
        assert signed_mean_error(evals) == 0.0

    def test_twenty_identical_cases_fixed_point(self):
        evals = [EstimateEvaluation(100.0, 86.47, 13.53) for _ in range(20)]
        assert mean_absolute_percentage_error(evals) == pytest.approx(13.53)

    def test_all_exact(self):
        evals = [EstimateEvaluation.of(50, 50) for _ in range(5)]
        assert mean_absolute_percentage_error(evals) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyList):
            mean_absolute_percentage_error([])


def test_to_doc_uses_declared_field_names():
    doc = to_doc(make_task("t9", state=TaskState.QUEUED))
    assert doc["task_id"] == "t9"
    assert doc["state"] == "QUEUED"
    assert doc["attributes"]["queue_name"] == "default"
    assert doc["wall_clock_accumulated"] == 0.0
