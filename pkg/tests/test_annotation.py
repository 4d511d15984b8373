"""Annotation backend: blindness, audit trail, export round-trip."""

import io

import numpy as np
import pytest
from fastapi.testclient import TestClient

from murmurlab.annotation import AnnotationStore, create_app
from murmurlab.corpus import Recording, RecordingRegistry
from murmurlab.labels import load_label_matrix, select_recordings


def _registry(n=3, seconds=2.0, fs=4000):
    recs = []
    for i in range(n):
        t = np.arange(int(seconds * fs)) / fs
        recs.append(Recording(f"rec{i}", np.sin(2 * np.pi * (80 + 10 * i) * t),
                              float(fs), source="synthetic"))
    return RecordingRegistry(recs)


@pytest.fixture
def client(tmp_path):
    store = AnnotationStore(_registry(), audit_path=tmp_path / "audit.csv")
    return TestClient(create_app(store)), store


def _post(client, rec="rec0", rater="A", pass_index=1, label="mild"):
    return client.post("/assessments", json={
        "recording_id": rec, "rater_id": rater, "pass_index": pass_index, "label": label})


class TestRecordingsEndpoint:
    def test_requires_rater_header(self, client):
        api, _ = client
        assert api.get("/recordings").status_code == 401

    def test_fresh_store_all_unlabeled(self, client):
        api, _ = client
        resp = api.get("/recordings", headers={"X-Rater-Id": "A"})
        assert resp.status_code == 200
        body = resp.json()
        assert len(body) == 3
        assert all(item["completed_passes"] == [] for item in body)
        assert all(set(item) == {"id", "duration_s", "completed_passes"} for item in body)

    def test_unknown_rater_sees_full_list(self, client):
        api, _ = client
        body = api.get("/recordings", headers={"X-Rater-Id": "nobody"}).json()
        assert [item["id"] for item in body] == ["rec0", "rec1", "rec2"]

    def test_blindness_between_raters(self, client):
        api, _ = client
        assert _post(api, rater="A").status_code == 200
        a_view = api.get("/recordings", headers={"X-Rater-Id": "A"}).json()
        b_view = api.get("/recordings", headers={"X-Rater-Id": "B"}).json()
        assert a_view[0]["completed_passes"] == [1]
        assert b_view[0]["completed_passes"] == []


class TestAudioEndpoint:
    def test_wav_bytes_and_length(self, client):
        api, store = client
        resp = api.get("/recordings/rec0/audio")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "audio/wav"
        rec = store.registry.get("rec0")
        expected = 44 + 2 * len(rec.samples)  # PCM16 mono: 44-byte header
        assert len(resp.content) == expected
        assert resp.content[:4] == b"RIFF"

    def test_repeat_requests_identical(self, client):
        api, _ = client
        a = api.get("/recordings/rec1/audio").content
        b = api.get("/recordings/rec1/audio").content
        assert a == b

    def test_unknown_id_404(self, client):
        api, _ = client
        assert api.get("/recordings/ghost/audio").status_code == 404


class TestAssessments:
    def test_last_write_wins_with_audit(self, client):
        api, store = client
        _post(api, label="mild")
        _post(api, label="moderate")
        assert len(store.audit) == 2
        effective = store.effective_assessments()
        assert len(effective) == 1
        assert effective[0].label.value == "moderate"

    def test_invalid_label_lists_valid_names(self, client):
        api, _ = client
        resp = _post(api, label="severe")
        assert resp.status_code == 422
        assert "mild" in resp.text and "bad_quality" in resp.text

    def test_invalid_pass_rejected(self, client):
        api, _ = client
        assert _post(api, pass_index=3).status_code == 422

    def test_unknown_recording_404(self, client):
        api, _ = client
        assert _post(api, rec="ghost").status_code == 404

    def test_two_raters_independent_cells(self, client):
        api, store = client
        _post(api, rater="A", label="mild")
        _post(api, rater="B", label="loud_thrilling")
        assert len(store.effective_assessments()) == 2

    def test_audit_survives_restart(self, client, tmp_path):
        api, store = client
        _post(api, label="mild")
        _post(api, label="moderate")
        reopened = AnnotationStore(_registry(), audit_path=store.audit_path)
        assert len(reopened.audit) == 2
        assert reopened.effective_assessments()[0].label.value == "moderate"


class TestExport:
    def test_empty_store_header_only(self, client):
        api, _ = client
        text = api.get("/export/label-matrix").text
        assert text.strip() == "recording_id,rater,pass,label,timestamp"

    def test_five_column_protocol(self, client):
        api, _ = client
        # two raters do two passes, one does a single pass
        for rec in ("rec0", "rec1", "rec2"):
            for rater, passes in (("A", (1, 2)), ("B", (1, 2)), ("C", (1,))):
                for p in passes:
                    _post(api, rec=rec, rater=rater, pass_index=p, label="mild")
        text = api.get("/export/label-matrix").text
        rows = text.strip().splitlines()
        assert len(rows) == 1 + 3 * 5  # header + N x 5 effective cells

    def test_export_feeds_selection(self, client, tmp_path):
        api, _ = client
        for rec in ("rec0", "rec1", "rec2"):
            for rater, passes in (("A", (1, 2)), ("B", (1, 2)), ("C", (1,))):
                for p in passes:
                    _post(api, rec=rec, rater=rater, pass_index=p, label="moderate")
        path = tmp_path / "export.csv"
        path.write_text(api.get("/export/label-matrix").text)
        matrix = load_label_matrix(path)
        out = select_recordings(matrix)
        assert len(out.kept) == 3

    def test_export_reflects_last_writes_only(self, client):
        api, _ = client
        _post(api, label="mild")
        _post(api, label="bad_quality")
        text = api.get("/export/label-matrix").text
        assert "bad_quality" in text
        assert ",mild," not in text


class TestConcurrency:
    def test_concurrent_distinct_keys_lose_nothing(self, tmp_path):
        import threading

        store = AnnotationStore(_registry(n=2), audit_path=tmp_path / "audit.csv")
        from murmurlab.corpus import AssessmentClass

        def submit(rater):
            for rec in ("rec0", "rec1"):
                for p in (1, 2):
                    store.submit(rec, rater, p, AssessmentClass.MILD)

        threads = [threading.Thread(target=submit, args=(f"R{i}",)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(store.effective_assessments()) == 8 * 2 * 2
        assert len(store.audit) == 8 * 2 * 2


class TestBlindnessProperty:
    def test_no_rater_scoped_response_leaks_other_labels(self, client, rng):
        """Randomized sessions: responses to rater B never contain any label
        value submitted by rater A."""
        api, _ = client
        labels = ("mild", "moderate", "loud_thrilling", "healthy", "bad_quality", "other")
        for _ in range(60):
            _post(api, rec=f"rec{rng.integers(0, 3)}", rater="A",
                  pass_index=int(rng.integers(1, 3)),
                  label=labels[rng.integers(0, len(labels))])
        for rec in ("rec0", "rec1", "rec2"):
            resp = api.get("/recordings", headers={"X-Rater-Id": "B"})
            for item in resp.json():
                assert set(item) == {"id", "duration_s", "completed_passes"}
                assert item["completed_passes"] == []
            audio = api.get(f"/recordings/{rec}/audio")
            assert audio.headers["content-type"] == "audio/wav"
