"""Command-line pipeline: extract -> prepare -> train -> eval, plus synth,
predict, and rerun.

Every subcommand resolves its options with precedence flags > config file
(--config, flat key=value lines) > built-in defaults, then writes a run
manifest (key=value lines with a sha256 checksum footer) recording the
resolved values and checksums of the artifacts it produced. ``ddosdet
rerun MANIFEST`` re-executes the recorded run; because all randomness is
seed-driven, reruns reproduce artifact files byte for byte.

Exit codes: 0 success, 2 input/config error, 3 protocol violation
(a held-out attack type present in a training set).
"""

import argparse
import hashlib
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import baselines, dataio, flowcap, metrics, nnet, synthgen
from .backend import ACTIVE_BACKEND
from .errors import (
    CorruptFileError,
    DdosdetError,
    HoldoutViolationError,
    InvalidConfigError,
    SchemaError,
    ShapeMismatchError,
)

MANIFEST_HEADER = "ddosdet-manifest v1"

REQUIRED = object()


class Opt:
    """One resolvable option: flag name, value type, default (REQUIRED if none)."""

    def __init__(self, name, kind, default=REQUIRED, help=""):
        self.name = name
        self.kind = kind  # int | float | str | intlist | strlist | paths
        self.default = default
        self.help = help


def _decode(kind, raw):
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "str":
        return raw
    if kind == "intlist":
        return tuple(int(p) for p in raw.split(",") if p)
    if kind == "strlist":
        return tuple(p for p in raw.split(",") if p)
    if kind == "paths":
        return tuple(p for p in raw.split(",") if p)
    raise ValueError(f"unknown option kind {kind}")


def _encode(kind, value):
    if kind in ("intlist", "strlist", "paths"):
        return ",".join(str(v) for v in value)
    return str(value)


OPTIONS = {
    "extract": [
        Opt("packets", "str", help="packet-event CSV to aggregate"),
        Opt("out", "str", help="flow CSV to write"),
        Opt("idle-timeout", "float", 120.0, help="seconds of silence that close a flow"),
        Opt("active-timeout", "float", 3600.0, help="maximum flow lifetime in seconds"),
        Opt("labels", "str", "", help="optional flow-key label sidecar to join"),
    ],
    "synth": [
        Opt("spec", "str", help="scenario spec file (key=value)"),
        Opt("out", "str", help="output directory"),
    ],
    "prepare": [
        Opt("flows", "paths", help="labeled flow CSV(s); repeatable"),
        Opt("balance", "int", 2000, help="per-attack-type sample cap (0 disables)"),
        Opt("holdout", "strlist", (), help="attack types excluded from training"),
        Opt("split", "float", dataio.TRAIN_FRACTION_DEFAULT, help="train fraction"),
        Opt("seed", "int", 0),
        Opt("out", "str", help="output directory"),
    ],
    "train": [
        Opt("train", "str", help="prepared training CSV"),
        Opt("val", "str", help="prepared validation CSV"),
        Opt("epochs", "int", 40),
        Opt("batch-size", "int", 32),
        Opt("learning-rate", "float", 0.001),
        Opt("rms-decay", "float", 0.9),
        Opt("rms-epsilon", "float", 1e-7),
        Opt("dropout", "float", 0.25),
        Opt("hidden", "intlist", (64, 64, 64)),
        Opt("seed", "int", 0),
        Opt("model-out", "str"),
        Opt("history-out", "str"),
    ],
    "eval": [
        Opt("model", "str"),
        Opt("test", "str", help="labeled flow CSV to score"),
        Opt("report-out", "str", help="text report path (CSV twin at <path>.csv)"),
        Opt("baselines", "strlist", (), help="comparators to fit: gnb,logreg"),
        Opt("train", "str", "", help="training CSV (required with --baselines)"),
    ],
    "predict": [
        Opt("model", "str"),
        Opt("flows", "str", help="flow CSV to classify"),
        Opt("out", "str", help="input columns plus pred_label,pred_prob"),
        Opt("scaler", "str", "", help="optional scaler file to apply first"),
    ],
}


def read_kv_file(path) -> dict:
    """Flat key=value file; blank lines and # comments ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise InvalidConfigError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
            key, value = stripped.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def resolve_options(subcommand, args, config: dict) -> dict:
    """Layer flag values over config-file values over defaults."""
    resolved = {}
    for opt in OPTIONS[subcommand]:
        attr = opt.name.replace("-", "_")
        flag_value = getattr(args, attr, None)
        if flag_value is not None:
            if opt.kind == "paths":
                resolved[attr] = tuple(flag_value)
            else:
                resolved[attr] = _decode(opt.kind, str(flag_value))
        elif opt.name in config:
            resolved[attr] = _decode(opt.kind, config[opt.name])
        elif opt.default is not REQUIRED:
            resolved[attr] = opt.default
        else:
            raise InvalidConfigError(f"missing required option --{opt.name}")
    return resolved


# --- manifests ----------------------------------------------------------


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def write_manifest(path, subcommand, resolved, artifacts) -> None:
    opts = OPTIONS[subcommand]
    lines = [MANIFEST_HEADER, f"subcommand={subcommand}", f"backend={ACTIVE_BACKEND}"]
    for opt in opts:
        attr = opt.name.replace("-", "_")
        lines.append(f"opt.{opt.name}={_encode(opt.kind, resolved[attr])}")
    for name, artifact_path in sorted(artifacts.items()):
        lines.append(f"artifact.{name}={artifact_path}")
        lines.append(f"checksum.{name}={_sha256_file(artifact_path)}")
    lines.append(f"created_utc={datetime.now(timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ')}")
    body = "\n".join(lines)
    footer = hashlib.sha256(body.encode("utf-8")).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(body + f"\nchecksum=sha256:{footer}\n")


def read_manifest(path):
    """Verify the checksum footer and return (subcommand, raw option strings)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MANIFEST_HEADER:
        raise CorruptFileError(f"{path}: not a ddosdet manifest")
    if not lines[-1].startswith("checksum=sha256:"):
        raise CorruptFileError(f"{path}: missing checksum footer")
    body = "\n".join(lines[:-1])
    expected = lines[-1].split("checksum=sha256:", 1)[1]
    actual = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if actual != expected:
        raise CorruptFileError(f"{path}: checksum mismatch (edited or truncated manifest)")
    fields = dict(line.split("=", 1) for line in lines[1:-1] if "=" in line)
    subcommand = fields.get("subcommand")
    if subcommand not in OPTIONS:
        raise CorruptFileError(f"{path}: unknown subcommand {subcommand!r}")
    raw_opts = {
        key[len("opt.") :]: value for key, value in fields.items() if key.startswith("opt.")
    }
    return subcommand, raw_opts


# --- runners ------------------------------------------------------------


def run_extract(cfg) -> dict:
    parse = flowcap.read_packet_csv(cfg["packets"])
    result = flowcap.process_stream(
        parse.events,
        flowcap.TimeoutConfig(cfg["idle_timeout"], cfg["active_timeout"]),
    )
    if cfg["labels"]:
        mapping = synthgen.read_labels_csv(cfg["labels"])
        for rec in result.records:
            truth = mapping.get(rec.key)
            if truth is None:
                raise SchemaError(f"no label for flow key {rec.key}")
            rec.label, rec.attack_type = truth
    flowcap.write_flow_csv(result.records, cfg["out"])
    rejected = len(parse.rejected) + len(result.rejected)
    for line_no, reason in (parse.rejected + result.rejected)[:20]:
        print(f"rejected event at {line_no}: {reason}", file=sys.stderr)
    print(f"flows: {len(result.records)}")
    print(f"rejected events: {rejected}")
    return {"flows": cfg["out"]}


def _scenario_from_file(path) -> tuple:
    raw = read_kv_file(path)
    counts = {
        "BenignWeb": int(raw.pop("benign_web", 0)),
        "SynFlood": int(raw.pop("syn_flood", 0)),
        "UdpFlood": int(raw.pop("udp_flood", 0)),
        "ReflectionBurst": int(raw.pop("reflection_burst", 0)),
    }
    spec = synthgen.ScenarioSpec(
        counts=counts,
        separability=float(raw.pop("separability", 1.0)),
        seed=int(raw.pop("seed", 0)),
    )
    emit = raw.pop("emit", "flows")
    if emit not in ("flows", "packets", "both"):
        raise InvalidConfigError(f"emit must be flows|packets|both, got {emit!r}")
    if raw:
        raise InvalidConfigError(f"unknown scenario keys: {sorted(raw)}")
    return spec, emit


def run_synth(cfg) -> dict:
    spec, emit = _scenario_from_file(cfg["spec"])
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    if emit in ("flows", "both"):
        ds = synthgen.generate_flows(spec)
        flows_path = out_dir / "flows.csv"
        dataio.write_dataset_csv(ds, flows_path)
        artifacts["flows"] = str(flows_path)
        print(f"flows: {len(ds)}")
        for tag, count in sorted(ds.type_counts().items()):
            print(f"  {tag}: {count}")
    if emit in ("packets", "both"):
        trace = synthgen.generate_packet_trace(spec)
        packets_path = out_dir / "packets.csv"
        labels_path = out_dir / "flow_labels.csv"
        flowcap.write_packet_csv(trace.events, packets_path)
        synthgen.write_labels_csv(trace.labels, labels_path)
        artifacts["packets"] = str(packets_path)
        artifacts["flow_labels"] = str(labels_path)
        print(f"packets: {len(trace.events)} across {len(trace.labels)} flows")
    return artifacts


def run_prepare(cfg) -> dict:
    loaded = []
    rejected = 0
    for path in cfg["flows"]:
        ds, rej = dataio.load_flow_csv(path)
        loaded.append(ds)
        rejected += len(rej)
    ds = dataio.concat_datasets(loaded)
    if cfg["balance"] > 0:
        ds = dataio.balance_by_type(ds, cfg["balance"], cfg["seed"])
    train_ds, val_ds = dataio.split(ds, cfg["split"], cfg["seed"] + 1)
    if cfg["holdout"]:
        train_ds = dataio.holdout_filter(train_ds, cfg["holdout"])
    dataio.assert_holdout(train_ds, cfg["holdout"])
    scaler = dataio.fit_scaler(train_ds)
    train_scaled = dataio.apply_scaler(scaler, train_ds)
    val_scaled = dataio.apply_scaler(scaler, val_ds)

    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    train_path = out_dir / "train.csv"
    val_path = out_dir / "val.csv"
    scaler_path = out_dir / "scaler.txt"
    dataio.write_dataset_csv(train_scaled, train_path)
    dataio.write_dataset_csv(val_scaled, val_path)
    dataio.save_scaler(scaler, scaler_path)
    print(f"rejected rows: {rejected}")
    print(f"train: {len(train_scaled)}  val: {len(val_scaled)}")
    for tag, count in sorted(train_scaled.type_counts().items()):
        print(f"  train {tag}: {count}")
    for tag, count in sorted(val_scaled.type_counts().items()):
        print(f"  val {tag}: {count}")
    return {
        "train_csv": str(train_path),
        "val_csv": str(val_path),
        "scaler": str(scaler_path),
    }


def run_train(cfg) -> dict:
    train_ds, _ = dataio.load_flow_csv(cfg["train"])
    val_ds, _ = dataio.load_flow_csv(cfg["val"])
    if train_ds.schema != val_ds.schema:
        raise SchemaError("train and val CSVs have different schemas")
    net_cfg = nnet.NetworkConfig(
        input_dim=len(train_ds.schema),
        hidden_dims=tuple(cfg["hidden"]),
        dropout_rate=cfg["dropout"],
        seed=cfg["seed"],
    )
    net = nnet.build_network(net_cfg)
    print(f"parameters: {nnet.parameter_count(net)}")
    train_cfg = nnet.TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        rms_decay=cfg["rms_decay"],
        rms_epsilon=cfg["rms_epsilon"],
        seed=cfg["seed"],
    )
    net, history = nnet.train(
        net,
        train_ds.features,
        dataio.encode_labels(train_ds),
        val_ds.features,
        dataio.encode_labels(val_ds),
        train_cfg,
    )
    nnet.save_model(net, cfg["model_out"])
    metrics.export_curves(history, cfg["history_out"])
    last = history.records[-1]
    print(
        f"epoch {last.epoch}: train_loss={last.train_loss:.6f} train_acc={last.train_acc:.4f} "
        f"val_loss={last.val_loss:.6f} val_acc={last.val_acc:.4f}"
    )
    return {"model": cfg["model_out"], "history": cfg["history_out"]}


def run_eval(cfg) -> dict:
    net = nnet.load_model(cfg["model"])
    test_ds, _ = dataio.load_flow_csv(cfg["test"])
    if len(test_ds.schema) != net.config.input_dim:
        raise ShapeMismatchError(
            f"test width {len(test_ds.schema)} != model input_dim {net.config.input_dim}"
        )
    preds, _ = nnet.predict_batch(net, test_ds.features)
    cm = metrics.confusion(preds, test_ds.labels)
    reports = [
        metrics.summarize(cm, preds=preds, truth_types=test_ds.attack_types, model="DDoSDet")
    ]
    if cfg["baselines"]:
        unknown = set(cfg["baselines"]) - {"gnb", "logreg"}
        if unknown:
            raise InvalidConfigError(f"unknown baselines: {sorted(unknown)}")
        if not cfg["train"]:
            raise InvalidConfigError("--baselines needs --train to fit the comparators on")
        fit_ds, _ = dataio.load_flow_csv(cfg["train"])
        if "gnb" in cfg["baselines"]:
            model = baselines.gnb_fit(fit_ds)
            preds_b = baselines.gnb_predict_batch(model, test_ds.features)
            cm_b = metrics.confusion(preds_b, test_ds.labels)
            reports.append(
                metrics.summarize(cm_b, preds=preds_b, truth_types=test_ds.attack_types, model="NB")
            )
        if "logreg" in cfg["baselines"]:
            model = baselines.logreg_fit(fit_ds)
            preds_b = baselines.logreg_predict_batch(model, test_ds.features)
            cm_b = metrics.confusion(preds_b, test_ds.labels)
            reports.append(
                metrics.summarize(cm_b, preds=preds_b, truth_types=test_ds.attack_types, model="LR")
            )
    table = metrics.report_table(reports)
    report_path = cfg["report_out"]
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(table)
    csv_path = report_path + ".csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(metrics.report_csv(reports))
    print(table, end="")
    return {"report": report_path, "report_csv": csv_path}


def run_predict(cfg) -> dict:
    net = nnet.load_model(cfg["model"])
    matrix, schema, raw_rows = dataio.read_feature_matrix(cfg["flows"])
    if cfg["scaler"]:
        scaler = dataio.load_scaler(cfg["scaler"])
        matrix = dataio.scale_matrix(scaler, matrix, schema)
    if matrix.shape[1] != net.config.input_dim:
        raise ShapeMismatchError(
            f"flow width {matrix.shape[1]} != model input_dim {net.config.input_dim}"
        )
    labels, probs = nnet.predict_batch(net, matrix)
    label_names = {0: "Benign", 1: "Attack"}
    with open(cfg["out"], "w", newline="", encoding="utf-8") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow(raw_rows[0] + ["pred_label", "pred_prob"])
        for row, label, prob in zip(raw_rows[1:], labels, probs):
            writer.writerow(row + [label_names[int(label)], repr(float(prob))])
    n_attack = int(np.sum(labels == 1))
    print(f"classified {len(labels)} flows: {n_attack} attack, {len(labels) - n_attack} benign")
    return {"predictions": cfg["out"]}


RUNNERS = {
    "extract": run_extract,
    "synth": run_synth,
    "prepare": run_prepare,
    "train": run_train,
    "eval": run_eval,
    "predict": run_predict,
}


def _manifest_path(subcommand, cfg) -> str:
    if subcommand in ("synth", "prepare"):
        return str(Path(cfg["out"]) / f"{subcommand}.manifest")
    primary = {
        "extract": "out",
        "train": "model_out",
        "eval": "report_out",
        "predict": "out",
    }[subcommand]
    return cfg[primary] + ".manifest"


def _execute(subcommand, cfg, print_config=False) -> int:
    if print_config:
        for opt in OPTIONS[subcommand]:
            attr = opt.name.replace("-", "_")
            print(f"{opt.name}={_encode(opt.kind, cfg[attr])}")
    artifacts = RUNNERS[subcommand](cfg)
    manifest = _manifest_path(subcommand, cfg)
    write_manifest(manifest, subcommand, cfg, artifacts)
    print(f"manifest: {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddosdet",
        description="Flow-based DDoS detection pipeline",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name)
        for opt in opts:
            flag = "--" + opt.name
            if opt.kind == "paths":
                p.add_argument(flag, action="append", default=None, help=opt.help)
            else:
                p.add_argument(flag, default=None, help=opt.help)
        p.add_argument("--config", default=None, help="key=value defaults file")
        p.add_argument("--print-config", action="store_true", help="dump resolved options")
    rerun = sub.add_parser("rerun")
    rerun.add_argument("manifest", help="manifest of the run to reproduce")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.subcommand == "rerun":
            subcommand, raw_opts = read_manifest(args.manifest)
            cfg = {}
            for opt in OPTIONS[subcommand]:
                attr = opt.name.replace("-", "_")
                if opt.name in raw_opts:
                    cfg[attr] = _decode(opt.kind, raw_opts[opt.name])
                elif opt.default is not REQUIRED:
                    cfg[attr] = opt.default
                else:
                    raise CorruptFileError(f"manifest missing required option {opt.name}")
            return _execute(subcommand, cfg)
        config = read_kv_file(args.config) if args.config else {}
        cfg = resolve_options(args.subcommand, args, config)
        return _execute(args.subcommand, cfg, print_config=args.print_config)
    except HoldoutViolationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DdosdetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main_entry():
    raise SystemExit(main())
