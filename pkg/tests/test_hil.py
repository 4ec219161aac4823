from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmdisc import ContractError, TrainConfig
from swarmdisc.hil import (HilSession, LabelStore, count_triplets, finetune,
                           synthesize_triplets)
from swarmdisc.net import ConvSpec, DenseSpec, EmbeddingNetwork
from swarmdisc.synthetic import synthetic_archetype_dataset


def make_store(tmp_path, name="labels.jsonl"):
    return LabelStore(tmp_path / name)


def session_with(tmp_path, n=6, seed=0):
    store = make_store(tmp_path)
    ids = [f"img{i}" for i in range(n)]
    rng = np.random.default_rng(3)
    emb = rng.normal(size=(n, 5))
    return HilSession(ids, emb, store, seed=seed), store


class TestLabelStore:
    def test_durability_across_restart(self, tmp_path):
        store = make_store(tmp_path)
        cls = store.create_class("milling", "img0")
        store.add_label("img0", cls.class_id)
        store.add_label("img1", cls.class_id)
        reborn = make_store(tmp_path)
        assert reborn.classes[cls.class_id].name == "milling"
        assert reborn.labeled_images() == {"img0": cls.class_id, "img1": cls.class_id}

    def test_latest_label_wins_history_kept(self, tmp_path):
        store = make_store(tmp_path)
        a = store.create_class("a", "img0")
        b = store.create_class("b", "img1")
        store.add_label("img0", a.class_id)
        store.add_label("img0", b.class_id)
        assert store.labeled_images()["img0"] == b.class_id
        assert len(store.labels) == 2

    def test_unknown_class_rejected(self, tmp_path):
        with pytest.raises(ContractError):
            make_store(tmp_path).add_label("img0", 42)


class TestTripletSynthesis:
    def _store_with(self, tmp_path, sizes):
        store = make_store(tmp_path)
        i = 0
        for k, size in enumerate(sizes):
            cls = store.create_class(f"c{k}", f"img{i}")
            for _ in range(size):
                store.add_label(f"img{i}", cls.class_id)
                i += 1
        return store

    def test_two_one_gives_single_triplet(self, tmp_path):
        store = self._store_with(tmp_path, [2, 1])
        triplets = list(synthesize_triplets(store))
        assert len(triplets) == count_triplets(store) == 1

    def test_three_three_gives_eighteen(self, tmp_path):
        store = self._store_with(tmp_path, [3, 3])
        assert count_triplets(store) == 18
        assert len(list(synthesize_triplets(store))) == 18

    def test_single_class_gives_none(self, tmp_path):
        store = self._store_with(tmp_path, [4])
        assert count_triplets(store) == 0
        assert list(synthesize_triplets(store)) == []

    @settings(max_examples=25, deadline=None)
    @given(sizes=st.lists(st.integers(0, 5), min_size=1, max_size=4))
    def test_stream_count_matches_closed_form(self, sizes, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("hyp")
        store = self._store_with(tmp, sizes)
        total = sum(sizes)
        expected = sum(comb(s, 2) * (total - s) for s in sizes)
        assert count_triplets(store) == expected
        assert len(list(synthesize_triplets(store))) == expected

    def test_triplet_members_classed_correctly(self, tmp_path):
        store = self._store_with(tmp_path, [3, 2, 2])
        for a, p, n in synthesize_triplets(store):
            assert store.active_label[a].class_id == store.active_label[p].class_id
            assert store.active_label[a].class_id != store.active_label[n].class_id
            assert a != p


class TestQueryPolicy:
    def test_random_fallback_without_labels(self, tmp_path):
        session, _ = session_with(tmp_path)
        q = session.next_query()
        assert q is not None and q.status == "pending"

    def test_farthest_outlier_selected(self, tmp_path):
        store = make_store(tmp_path)
        ids = ["a", "b", "c"]
        emb = np.array([[0, 0, 0, 0, 0], [0.1, 0, 0, 0, 0], [50, 0, 0, 0, 0]])
        session = HilSession(ids, emb, store, seed=1)
        cls = store.create_class("k", "a")
        store.add_label("a", cls.class_id)
        q = session.next_query()
        assert q.image_id == "c"                  # farthest from the labeled cluster

    def test_never_requeries_or_returns_labeled(self, tmp_path):
        session, store = session_with(tmp_path, n=4)
        seen = set()
        while (q := session.next_query()) is not None:
            assert q.image_id not in seen
            seen.add(q.image_id)
            session.submit_label(q.query_id, new_class_name=f"c{q.query_id}")
        assert seen == {"img0", "img1", "img2", "img3"}

    def test_exhaustion_returns_none(self, tmp_path):
        session, _ = session_with(tmp_path, n=1)
        q = session.next_query()
        session.submit_label(q.query_id, new_class_name="only")
        assert session.next_query() is None


class TestSubmitLabel:
    def test_existing_class_happy_path(self, tmp_path):
        session, store = session_with(tmp_path)
        cls = store.create_class("milling", "img0")
        q = session.next_query()
        label, got_cls = session.submit_label(q.query_id, class_id=cls.class_id)
        assert got_cls.class_id == cls.class_id
        assert store.class_counts()[cls.class_id] == 1

    def test_new_class_created_with_exemplar(self, tmp_path):
        session, store = session_with(tmp_path)
        q = session.next_query()
        label, cls = session.submit_label(q.query_id, new_class_name="nested cycle")
        assert cls.name == "nested cycle"
        assert cls.exemplar_image_id == q.image_id

    def test_idempotent_resubmission(self, tmp_path):
        session, store = session_with(tmp_path)
        q = session.next_query()
        first = session.submit_label(q.query_id, new_class_name="x")
        again = session.submit_label(q.query_id, new_class_name="x")
        assert first == again
        assert len(store.labels) == 1
        assert len(store.classes) == 1

    def test_conflicting_resubmission_rejected(self, tmp_path):
        session, store = session_with(tmp_path)
        cls = store.create_class("a", "img0")
        q = session.next_query()
        session.submit_label(q.query_id, class_id=cls.class_id)
        with pytest.raises(ContractError):
            session.submit_label(q.query_id, new_class_name="b")

    def test_unknown_query_rejected(self, tmp_path):
        session, _ = session_with(tmp_path)
        with pytest.raises(ContractError):
            session.submit_label(999, new_class_name="x")

    def test_exactly_one_choice_required(self, tmp_path):
        session, store = session_with(tmp_path)
        cls = store.create_class("a", "img0")
        q = session.next_query()
        with pytest.raises(ContractError):
            session.submit_label(q.query_id)
        with pytest.raises(ContractError):
            session.submit_label(q.query_id, class_id=cls.class_id, new_class_name="b")

    def test_progress_counts(self, tmp_path):
        session, store = session_with(tmp_path, n=6)
        assert session.progress() == {"labeled": 0, "total": 6, "budget": 1}
        q = session.next_query()
        session.submit_label(q.query_id, new_class_name="x")
        assert session.progress()["labeled"] == 1


def tiny_f32_net(seed=0):
    spec = [ConvSpec(1, 2, kernel=5, stride=2, padding=2),
            ConvSpec(2, 4, kernel=3, stride=2, padding=1),
            DenseSpec(4 * 13 * 13, 16, activation="relu"),
            DenseSpec(16, 5, activation="linear")]
    return EmbeddingNetwork.initialize(spec, seed=seed, dtype=np.float32,
                                       input_hw=(50, 50))


class TestFinetune:
    def _labeled_setup(self, tmp_path, per_class=6):
        images, labels = synthetic_archetype_dataset(per_class * 2, seed=4,
                                                     classes=("disk", "ring"))
        store = make_store(tmp_path)
        by_id = {}
        class_ids = {}
        for i, (img, lab) in enumerate(zip(images, labels)):
            image_id = f"img{i}"
            by_id[image_id] = img
            if lab not in class_ids:
                class_ids[lab] = store.create_class(lab, image_id).class_id
            store.add_label(image_id, class_ids[lab])
        return store, by_id

    def test_no_labels_is_noop(self, tmp_path):
        store = make_store(tmp_path)
        net = tiny_f32_net()
        out, metrics = finetune(net, store, {}, TrainConfig(max_epochs=1))
        assert out is net
        assert metrics["skipped"]

    def test_finetune_deterministic(self, tmp_path):
        store, by_id = self._labeled_setup(tmp_path)
        cfg = TrainConfig(learning_rate=0.005, batch_size=16, triplets_per_epoch=32,
                          max_epochs=3)
        n1, m1 = finetune(tiny_f32_net(seed=1), store, by_id, cfg, seed=2)
        n2, m2 = finetune(tiny_f32_net(seed=1), store, by_id, cfg, seed=2)
        assert m1["triplets"] == m2["triplets"] > 0
        for w1, w2 in zip(n1.weights, n2.weights):
            assert np.array_equal(w1, w2)

    def test_finetune_improves_synthetic_accuracy(self, tmp_path):
        store, by_id = self._labeled_setup(tmp_path, per_class=8)
        cfg = TrainConfig(learning_rate=0.02, batch_size=64, triplets_per_epoch=256,
                          max_epochs=8)
        net = tiny_f32_net(seed=3)
        tuned, metrics = finetune(net, store, by_id, cfg, seed=5)
        assert metrics["pre_accuracy"] is not None
        assert metrics["post_accuracy"] is not None
        if not metrics["reverted"]:
            assert metrics["post_accuracy"] >= metrics["pre_accuracy"] - 1.0
