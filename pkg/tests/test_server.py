import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from swarmdisc.hil import HilSession, LabelStore
from swarmdisc.net import EmbeddingNetwork
from swarmdisc.render import TrajectoryImage, save_pgm
from swarmdisc.server import create_app
from swarmdisc.synthetic import synthetic_archetype_dataset
from swarmdisc.training import TrainConfig


@pytest.fixture
def service(tmp_path):
    images, labels = synthetic_archetype_dataset(8, seed=0, classes=("disk", "ring"))
    image_dir = tmp_path / "images"
    image_dir.mkdir()
    ids = []
    by_id = {}
    for i, img in enumerate(images):
        image_id = f"img{i}"
        save_pgm(TrajectoryImage(img), image_dir / f"{image_id}.pgm")
        ids.append(image_id)
        by_id[image_id] = img
    store = LabelStore(tmp_path / "labels.jsonl")
    rng = np.random.default_rng(1)
    session = HilSession(ids, rng.normal(size=(8, 5)), store, seed=0)
    net = EmbeddingNetwork.initialize(seed=0)
    cfg = TrainConfig(learning_rate=0.001, batch_size=8, triplets_per_epoch=8,
                      max_epochs=1)
    app = create_app(session, store, image_dir, net=net, images_by_id=by_id,
                     finetune_config=cfg)
    return TestClient(app), store, by_id


class TestQueriesAndLabels:
    def test_query_label_cycle(self, service):
        client, store, _ = service
        q = client.get("/api/v1/queries/next")
        assert q.status_code == 200
        body = q.json()
        assert set(body) >= {"query_id", "image_url", "classes"}
        assert body["classes"] == []

        resp = client.post("/api/v1/labels", json={"query_id": body["query_id"],
                                                   "new_class_name": "milling"})
        assert resp.status_code == 200
        label = resp.json()
        assert set(label) == {"label_id", "class_id"}

        classes = client.get("/api/v1/classes").json()["classes"]
        assert len(classes) == 1
        assert classes[0]["name"] == "milling"
        assert classes[0]["count"] == 1

    def test_existing_class_label(self, service):
        client, store, _ = service
        q1 = client.get("/api/v1/queries/next").json()
        cls = client.post("/api/v1/labels", json={"query_id": q1["query_id"],
                                                  "new_class_name": "disp"}).json()
        q2 = client.get("/api/v1/queries/next").json()
        resp = client.post("/api/v1/labels", json={"query_id": q2["query_id"],
                                                   "class_id": cls["class_id"]})
        assert resp.status_code == 200
        counts = {c["class_id"]: c["count"]
                  for c in client.get("/api/v1/classes").json()["classes"]}
        assert counts[cls["class_id"]] == 2

    def test_exhaustion_gives_204(self, service):
        client, _, _ = service
        while True:
            q = client.get("/api/v1/queries/next")
            if q.status_code == 204:
                break
            client.post("/api/v1/labels", json={"query_id": q.json()["query_id"],
                                                "new_class_name": f"c{q.json()['query_id']}"})
        assert client.get("/api/v1/queries/next").status_code == 204

    def test_duplicate_submit_idempotent(self, service):
        client, store, _ = service
        q = client.get("/api/v1/queries/next").json()
        first = client.post("/api/v1/labels", json={"query_id": q["query_id"],
                                                    "new_class_name": "x"}).json()
        again = client.post("/api/v1/labels", json={"query_id": q["query_id"],
                                                    "new_class_name": "x"}).json()
        assert first == again
        assert len(store.labels) == 1

    def test_unknown_query_404(self, service):
        client, _, _ = service
        resp = client.post("/api/v1/labels", json={"query_id": 999, "class_id": 1})
        assert resp.status_code == 404
        assert "error" in resp.json()

    def test_conflicting_resubmit_409(self, service):
        client, _, _ = service
        q = client.get("/api/v1/queries/next").json()
        client.post("/api/v1/labels", json={"query_id": q["query_id"],
                                            "new_class_name": "a"})
        resp = client.post("/api/v1/labels", json={"query_id": q["query_id"],
                                                   "new_class_name": "b"})
        assert resp.status_code == 409

    def test_missing_body_field_400(self, service):
        client, _, _ = service
        resp = client.post("/api/v1/labels", json={"class_id": 1})
        assert resp.status_code == 400


class TestImagesAndProgress:
    def test_image_served_as_lossless_png(self, service, tmp_path):
        client, _, by_id = service
        resp = client.get("/api/v1/images/img0")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        png = Image.open(io.BytesIO(resp.content))
        arr = np.asarray(png, dtype=np.float32) / 255.0
        assert png.size == (50, 50)
        assert np.array_equal(arr, by_id["img0"])

    def test_missing_image_404(self, service):
        client, _, _ = service
        assert client.get("/api/v1/images/nope").status_code == 404

    def test_progress_endpoint(self, service):
        client, _, _ = service
        p = client.get("/api/v1/progress").json()
        assert p == {"labeled": 0, "total": 8, "budget": 1}

    def test_triplet_count_endpoint(self, service):
        client, _, _ = service
        assert client.get("/api/v1/triplets/count").json() == {"count": 0}


class TestFinetuneJob:
    def test_finetune_job_lifecycle(self, service):
        client, store, _ = service
        # give the store two classes with members so triplets exist
        q1 = client.get("/api/v1/queries/next").json()
        c1 = client.post("/api/v1/labels", json={"query_id": q1["query_id"],
                                                 "new_class_name": "a"}).json()
        q2 = client.get("/api/v1/queries/next").json()
        client.post("/api/v1/labels", json={"query_id": q2["query_id"],
                                            "class_id": c1["class_id"]})
        q3 = client.get("/api/v1/queries/next").json()
        client.post("/api/v1/labels", json={"query_id": q3["query_id"],
                                            "new_class_name": "b"})
        job = client.post("/api/v1/finetune").json()
        assert "job_id" in job
        for _ in range(100):
            status = client.get(f"/api/v1/jobs/{job['job_id']}").json()
            if status["status"] != "running":
                break
            time.sleep(0.1)
        assert status["status"] == "done"
        assert status["metrics"]["triplets"] >= 0

    def test_unknown_job_404(self, service):
        client, _, _ = service
        assert client.get("/api/v1/jobs/12345").status_code == 404
