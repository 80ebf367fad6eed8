import io

import pytest

from gridhelm.core import Estimate, EstimateKind, EstimateMethod, JobType
from gridhelm.errors import UnreadableSource
from gridhelm.history import (
    HistoryStore,
    TaskHistoryRecord,
    record_from_trace_row,
    template_key,
)
from gridhelm.tracegen import generate_rows, rows_to_csv

from conftest import make_attrs, runtime_estimate


def make_record(user="alice", queue="default", job_type=JobType.BATCH, nodes=1,
                status="successful", runtime=100.0, complete=1000.0, hours=1.0):
    return TaskHistoryRecord(
        attributes=make_attrs(user=user, queue_name=queue, job_type=job_type,
                              nodes=nodes, requested_cpu_hours=hours),
        actual_runtime=runtime,
        status=status,
        submit_time=complete - runtime - 10.0,
        start_time=complete - runtime,
        completion_time=complete,
    )


class TestRecordValidation:
    def test_bad_status_rejected(self):
        with pytest.raises(ValueError):
            make_record(status="exploded")

    def test_nonpositive_runtime_rejected_for_successful(self):
        with pytest.raises(ValueError):
            make_record(runtime=0.0)

    def test_failed_record_may_have_zero_runtime(self):
        rec = make_record(status="failed", runtime=0.0)
        assert rec.status == "failed"

    def test_timestamp_ordering_enforced(self):
        with pytest.raises(ValueError):
            TaskHistoryRecord(
                attributes=make_attrs(),
                actual_runtime=5.0,
                status="successful",
                submit_time=100.0,
                start_time=50.0,
                completion_time=55.0,
            )


class TestTemplates:
    def test_rank0_distinguishes_nodes(self):
        a = make_attrs(nodes=4)
        b = make_attrs(nodes=8)
        assert template_key(a, 0) != template_key(b, 0)
        assert template_key(a, 1) == template_key(b, 1)

    def test_rank3_is_global(self):
        a = make_attrs(user="alice", queue_name="short")
        b = make_attrs(user="bob", queue_name="gpu")
        assert template_key(a, 3) == template_key(b, 3) == ()

    def test_similar_tasks_excludes_failed(self):
        store = HistoryStore()
        store.add_record(make_record(runtime=10.0, complete=100.0))
        store.add_record(make_record(status="failed", runtime=0.0, complete=200.0))
        hits = store.similar_tasks(make_attrs(), 0)
        assert len(hits) == 1
        assert hits[0].actual_runtime == 10.0

    def test_similar_tasks_newest_first(self):
        store = HistoryStore()
        store.add_record(make_record(runtime=10.0, complete=100.0))
        store.add_record(make_record(runtime=20.0, complete=300.0))
        hits = store.similar_tasks(make_attrs(), 0)
        assert [h.actual_runtime for h in hits] == [20.0, 10.0]

    def test_bad_rank_rejected(self):
        store = HistoryStore()
        with pytest.raises(ValueError):
            store.similar_tasks(make_attrs(), 4)


class TestIngest:
    def test_ingest_synthetic_trace(self):
        store = HistoryStore()
        csv_text = rows_to_csv(generate_rows(30, 0.0, seed=1))
        assert store.ingest_trace(io.StringIO(csv_text)) == 30
        assert len(store.records) == 30
        assert store.last_skipped == []

    def test_reingest_same_content_is_noop(self, tmp_path):
        trace = tmp_path / "trace.csv"
        trace.write_text(rows_to_csv(generate_rows(10, 0.0, seed=2)))
        store = HistoryStore()
        assert store.ingest_trace(trace) == 10
        assert store.ingest_trace(trace) == 0
        assert len(store.records) == 10

    def test_malformed_rows_skipped_not_fatal(self):
        rows = generate_rows(3, 0.0, seed=3)
        rows[1]["nodes"] = "not-a-number"
        store = HistoryStore()
        assert store.ingest_trace(io.StringIO(rows_to_csv(rows))) == 2
        assert len(store.last_skipped) == 1
        assert store.last_skipped[0][0] == 3  # 1-based line number incl. header

    def test_missing_header_fields_rejected(self):
        store = HistoryStore()
        with pytest.raises(UnreadableSource):
            store.ingest_trace(io.StringIO("user,nodes\nalice,2\n"))

    def test_missing_file_rejected(self):
        store = HistoryStore()
        with pytest.raises(UnreadableSource):
            store.ingest_trace("/nonexistent/trace.csv")

    def test_row_parsing_maps_fields(self):
        row = generate_rows(1, 0.0, seed=4)[0]
        rec = record_from_trace_row({k: str(v) for k, v in row.items()})
        assert rec.attributes.user == row["user"]
        assert rec.attributes.queue_name == row["queue"]
        assert rec.attributes.job_type is JobType.BATCH
        assert rec.actual_runtime == pytest.approx(float(row["complete"]) - float(row["start"]))


class TestPersistence:
    def test_records_survive_restart(self, tmp_path):
        store = HistoryStore(tmp_path / "db")
        store.add_record(make_record(runtime=42.0))
        store.record_estimate("t1", runtime_estimate(99.0))

        reopened = HistoryStore(tmp_path / "db")
        assert len(reopened.records) == 1
        assert reopened.records[0].actual_runtime == 42.0
        assert reopened.lookup_estimate("t1").value == 99.0

    def test_ingest_dedupe_survives_restart(self, tmp_path):
        trace = tmp_path / "trace.csv"
        trace.write_text(rows_to_csv(generate_rows(5, 0.0, seed=5)))
        store = HistoryStore(tmp_path / "db")
        assert store.ingest_trace(trace) == 5

        reopened = HistoryStore(tmp_path / "db")
        assert reopened.ingest_trace(trace) == 0
        assert len(reopened.records) == 5

    def test_latest_estimate_wins_after_restart(self, tmp_path):
        store = HistoryStore(tmp_path / "db")
        store.record_estimate("t1", runtime_estimate(10.0))
        store.record_estimate("t1", runtime_estimate(20.0))
        assert HistoryStore(tmp_path / "db").lookup_estimate("t1").value == 20.0

    def test_lookup_unknown_returns_none(self):
        assert HistoryStore().lookup_estimate("nope") is None
