"""Command-line entry points: simulate, filter, dataset, train, serve, evolve, report."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .behavior import hand_crafted_embed
from .controllers import (Controller, discretized_count, enumerate_discretized,
                          filter_space, heuristic_score)
from .dataset import build_dataset, load_manifest_images, read_manifest
from .discovery import Archive, EvolutionConfig, k_medoids, run_novelty_search
from .errors import ContractError
from .evaluation import (DEFAULT_SIGNATURE_CONFIG, DistinctReport, count_distinct,
                         l2_accuracy)
from .hil import DEFAULT_LABEL_BUDGET, HilSession, LabelStore, finetune
from .mappings import HandCraftedMapping, NetworkMapping, load_mapping
from .net import EmbeddingNetwork
from .render import render, save_pgm
from .sim import CapabilityModel, rollout, trajectory_to_csv
from .training import TrainConfig, pretrain

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_IO = 2


def _model_for_kind(kind: str, angle: float | None = None) -> CapabilityModel:
    if kind == "single":
        return CapabilityModel.single()
    if kind == "two":
        return CapabilityModel.two_sensor() if angle is None \
            else CapabilityModel.two_sensor(angle)
    raise ContractError(f"unknown capability kind {kind!r}")


def _parse_controller(text: str) -> Controller:
    return Controller.from_list([float(tok) for tok in text.replace(",", " ").split()])


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _train_config(cfg: dict, args) -> TrainConfig:
    fields = {}
    for name in ("learning_rate", "weight_decay", "batch_size", "triplets_per_epoch",
                 "max_epochs", "plateau_patience", "stop_loss", "margin"):
        if name in cfg:
            fields[name] = cfg[name]
        if getattr(args, name.replace("-", "_"), None) is not None:
            fields[name] = getattr(args, name.replace("-", "_"))
    return TrainConfig(**fields)


def cmd_simulate(args, cfg):
    controller = _parse_controller(args.controller)
    kind = "single" if controller.sensor_count == 1 else "two"
    model = _model_for_kind(kind, controller.sensor_angle)
    traj = rollout(controller, model, seed=args.seed, horizon=args.horizon)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "trajectory.csv"
    trajectory_to_csv(traj, csv_path)
    if args.pgm:
        save_pgm(render(traj), out / "trajectory.pgm")
    vec = hand_crafted_embed(traj)
    print(f"wrote {csv_path}")
    print("hand metrics:", " ".join(f"{x:.6f}" for x in vec.values))
    return EXIT_OK


def cmd_filter(args, cfg):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "filter.csv"
    passed = failed = 0
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["controller", "m1", "m2", "m3", "m4", "m5", "score", "passes"])
        for c in enumerate_discretized(args.kind):
            report = heuristic_score(c, boundary=args.boundary)
            passed += report.passes
            failed += not report.passes
            writer.writerow([json.dumps(c.as_list())] + [f"{m:.6f}" for m in report.metrics]
                            + [f"{report.score:.6f}", int(report.passes)])
    total = discretized_count(args.kind)
    print(f"filter: {passed} passed, {failed} failed of {total} "
          f"({100.0 * failed / total:.1f}% filtered, boundary={args.boundary})")
    return EXIT_OK


def cmd_filter_count(args, cfg):
    passed, failed = filter_space(args.kind, boundary=args.boundary)
    print(f"filter: {passed} passed, {failed} failed of {passed + failed} "
          f"({100.0 * failed / (passed + failed):.1f}% filtered, boundary={args.boundary})")
    return EXIT_OK


def cmd_dataset(args, cfg):
    model = _model_for_kind(args.kind)
    records = build_dataset(args.count, model, args.seed, args.out,
                            filter_on=args.filter == "on", horizon=args.horizon)
    print(f"dataset: {len(records)} records in {args.out}")
    return EXIT_OK


def cmd_pretrain(args, cfg):
    records = read_manifest(args.manifest)
    base = Path(args.manifest).parent
    images = load_manifest_images(records, base)
    tc = _train_config(cfg, args)
    net, loss_log = pretrain(images, tc, seed=args.seed)
    out = args.out or "pretrained.swemb"
    net.save(out, meta={"epochs": len(loss_log), "final_loss": loss_log[-1]})
    print(f"pretrain: {len(loss_log)} epochs, final loss {loss_log[-1]:.6f}, saved {out}")
    return EXIT_OK


def cmd_serve(args, cfg):
    import uvicorn

    from .server import create_app

    records = read_manifest(args.manifest)
    base = Path(args.manifest).parent
    images = load_manifest_images(records, base)
    ids = [r.id for r in records]
    if args.mapping.startswith("net:"):
        mapping = load_mapping(args.mapping)
        net = mapping.net
        embeddings = mapping.embed_images(images)
    else:
        net = EmbeddingNetwork.initialize(seed=args.seed)
        embeddings = NetworkMapping(net).embed_images(images)
    store = LabelStore(Path(args.out) / "labels.jsonl")
    session = HilSession(ids, embeddings, store, seed=args.seed, budget=args.budget)
    images_by_id = {r.id: images[i] for i, r in enumerate(records)}
    app = create_app(session, store, base / "images", net=net,
                     images_by_id=images_by_id, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_finetune(args, cfg):
    records = read_manifest(args.manifest)
    base = Path(args.manifest).parent
    images = load_manifest_images(records, base)
    images_by_id = {r.id: images[i] for i, r in enumerate(records)}
    store = LabelStore(args.labels)
    net = EmbeddingNetwork.load(args.checkpoint)
    tc = _train_config(cfg, args)
    tuned, metrics = finetune(net, store, images_by_id, tc, seed=args.seed)
    out = args.out or "finetuned.swemb"
    tuned.save(out, meta=json.loads(json.dumps(metrics, default=str)))
    print(f"finetune: {metrics} -> {out}")
    return EXIT_OK


def cmd_evolve(args, cfg):
    model = _model_for_kind(args.kind)
    mapping = load_mapping(args.mapping)
    ec = EvolutionConfig(population=args.population, generations=args.generations,
                         seed=args.seed, filter_enabled=args.filter == "on")
    out = Path(args.out or "evolve-out")
    out.mkdir(parents=True, exist_ok=True)
    archive = run_novelty_search(ec, model, mapping, image_dir=out / "images",
                                 archive_path=out / "archive.jsonl",
                                 horizon=args.horizon)
    print(f"evolve: archive of {len(archive)} behaviors in {out}")
    return EXIT_OK


def cmd_taxonomy(args, cfg):
    archive = Archive.load_jsonl(args.archive)
    taxonomy = k_medoids(archive, args.k)
    out = Path(args.out or ".")
    gallery = out / "medoids"
    gallery.mkdir(parents=True, exist_ok=True)
    medoids = []
    image_root = Path(args.archive).parent / "images"
    for idx in taxonomy.medoid_indices:
        entry = archive.entries[idx]
        medoids.append({"archive_index": idx, "generation": entry.generation,
                        "controller": entry.controller.as_list(),
                        "behavior_vector": [float(x) for x in entry.behavior],
                        "image_id": entry.image_id})
        src = image_root / f"{entry.image_id}.pgm"
        if src.exists():
            (gallery / src.name).write_bytes(src.read_bytes())
    report = {"k": taxonomy.k, "cost": taxonomy.cost, "medoids": medoids}
    (out / "taxonomy.json").write_text(json.dumps(report, indent=2))
    print(f"taxonomy: k={taxonomy.k} cost={taxonomy.cost:.4f} -> {out / 'taxonomy.json'}")
    return EXIT_OK


def cmd_eval_accuracy(args, cfg):
    records = read_manifest(args.manifest)
    labeled = [r for r in records if r.label is not None]
    if not labeled:
        raise ContractError("manifest has no labeled records")
    base = Path(args.manifest).parent
    images = load_manifest_images(labeled, base)
    if args.mapping == "hand":
        mapping = HandCraftedMapping()
        vectors = []
        for rec in labeled:
            model = _model_for_kind(rec.kind, rec.controller.sensor_angle)
            traj = rollout(rec.controller, model, seed=rec.seed, horizon=args.horizon)
            vectors.append(hand_crafted_embed(traj).values)
        vectors = np.stack(vectors)
        mapping_id = mapping.mapping_id
    else:
        mapping = load_mapping(args.mapping)
        vectors = mapping.embed_images(images)
        mapping_id = mapping.mapping_id
    report = l2_accuracy(vectors, [r.label for r in labeled], mapping_id)
    print(f"accuracy[{report.mapping_id}]: {report.correct}/{report.admissible} "
          f"= {report.percentage:.2f}%")
    return EXIT_OK


def cmd_eval_distinct(args, cfg):
    archive = Archive.load_jsonl(args.archive)
    taxonomy = k_medoids(archive, args.k)
    report = count_distinct(taxonomy, archive, label_file=args.labels,
                            classifier=DEFAULT_SIGNATURE_CONFIG)
    print(DistinctReport.table_header())
    print(report.table_row())
    print(f"distinct behaviors: {report.distinct}")
    return EXIT_OK


def cmd_embed(args, cfg):
    records = read_manifest(args.manifest)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "embeddings.csv"
    base = Path(args.manifest).parent
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "controller", "b1", "b2", "b3", "b4", "b5"])
        if args.mapping == "hand":
            for rec in records:
                model = _model_for_kind(rec.kind, rec.controller.sensor_angle)
                traj = rollout(rec.controller, model, seed=rec.seed, horizon=args.horizon)
                vec = hand_crafted_embed(traj).values
                writer.writerow([rec.id, json.dumps(rec.controller.as_list())]
                                + [f"{x:.8f}" for x in vec])
        else:
            mapping = load_mapping(args.mapping)
            images = load_manifest_images(records, base)
            vectors = mapping.embed_images(images)
            for rec, vec in zip(records, vectors):
                writer.writerow([rec.id, json.dumps(rec.controller.as_list())]
                                + [f"{x:.8f}" for x in vec])
    print(f"embed: wrote {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmdisc", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, horizon=True):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output directory")
        if horizon:
            p.add_argument("--horizon", type=int, default=1200)

    p = sub.add_parser("simulate", help="roll out one controller, export CSV")
    common(p)
    p.add_argument("--controller", required=True, help="comma-separated values")
    p.add_argument("--pgm", action="store_true", help="also write the rendered image")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("filter", help="score the discretized controller space to CSV")
    common(p, horizon=False)
    p.add_argument("--kind", default="single", choices=["single"])
    p.add_argument("--boundary", default="strict", choices=["strict", "non_strict"])
    p.add_argument("--count-only", dest="count_only", action="store_true")
    p.set_defaults(func=lambda a, c: cmd_filter_count(a, c) if a.count_only
                   else cmd_filter(a, c))

    p = sub.add_parser("dataset", help="sample, simulate and render a dataset")
    common(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--kind", default="single", choices=["single", "two"])
    p.add_argument("--filter", default="on", choices=["on", "off"])
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("pretrain", help="self-supervised training on a dataset")
    common(p, horizon=False)
    p.add_argument("--manifest", required=True)
    for name, typ in (("learning-rate", float), ("weight-decay", float),
                      ("batch-size", int), ("triplets-per-epoch", int),
                      ("max-epochs", int), ("margin", float)):
        p.add_argument(f"--{name}", type=typ, default=None, dest=name.replace("-", "_"))
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("serve", help="run the labeling service")
    common(p, horizon=False)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mapping", default="random", help="net:<ckpt> or 'random'")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--static", default=None, help="frontend asset directory")
    p.add_argument("--budget", type=float, default=DEFAULT_LABEL_BUDGET)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("finetune", help="fine-tune a checkpoint from stored labels")
    common(p, horizon=False)
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True, help="label journal path")
    p.add_argument("--checkpoint", required=True)
    for name, typ in (("learning-rate", float), ("batch-size", int),
                      ("triplets-per-epoch", int), ("max-epochs", int),
                      ("margin", float)):
        p.add_argument(f"--{name}", type=typ, default=None, dest=name.replace("-", "_"))
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evolve", help="novelty search over the controller space")
    common(p)
    p.add_argument("--kind", default="single", choices=["single", "two"])
    p.add_argument("--mapping", default="hand")
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--filter", default="on", choices=["on", "off"])
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("taxonomy", help="k-medoids over an archive")
    common(p, horizon=False)
    p.add_argument("--archive", required=True)
    p.add_argument("--k", type=int, default=12)
    p.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("eval-accuracy", help="L2 triplet accuracy of a mapping")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mapping", default="hand")
    p.set_defaults(func=cmd_eval_accuracy)

    p = sub.add_parser("eval-distinct", help="distinct behaviors in a taxonomy")
    common(p, horizon=False)
    p.add_argument("--archive", required=True)
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--labels", default=None, help="medoid label JSON file")
    p.set_defaults(func=cmd_eval_distinct)

    p = sub.add_parser("embed", help="write behavior vectors for a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mapping", default="hand")
    p.set_defaults(func=cmd_embed)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
