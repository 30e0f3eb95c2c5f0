"""Batch command surface wiring the pipeline stages together.

    ingest -> segment -> train-gan -> gen-pool -> eval-gan
                                   -> train-clf / predict-cv -> report

Each command reads the artifacts of earlier stages from the output
directory and writes its own there; inputs are never modified. CSV
artifacts are byte-identical across reruns with the same inputs and
seed. `demo` fabricates a small recording and runs every stage on it
at desk scale.

Exit codes: 0 success, 2 configuration fault, 3 missing or malformed
data, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from .annotations import SeizureAnnotations, annotate_periods, parse_chb_summary
from .checkpoint import read_checkpoint, write_checkpoint
from .config import KEYS, RunConfig, desk_profile, load_run_config
from .edf import parse_edf
from .errors import (ConfigError, DataError, MissingGradient, ShapeError,
                     TrainingDiverged)
from .evaluation import Embedder, scorecard
from .models import ModelSpec
from .prediction import (ClassifierSpec, build_classifier, compare_conditions,
                         da_mix, roc_svg, train_classifier)
from .sampleset import (SampleSet, concat_sets, load_sampleset,
                        parse_manifest, save_sampleset, write_manifest)
from .surrogate import DEMO_FILE, make_demo_recording
from .synthesis import generate_pool, load_bank, save_bank, upsample_to_original
from .training import train_all_channels
from .windows import normalize_amplitude, resample, segment_windows

_FMT = "%.10g"


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _fmt(x) -> str:
    return _FMT % float(x)


def _write_text(path: str, text: str) -> str:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _write_csv(path: str, header: str, rows) -> str:
    lines = [header] + [",".join(cells) for cells in rows]
    return _write_text(path, "\n".join(lines) + "\n")


def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.out_dir, name)


def _require(path: str, hint: str) -> str:
    if not os.path.exists(path):
        raise DataError(f"missing {path}; {hint}")
    return path


# -- manifest ----------------------------------------------------------


def _load_manifest(cfg: RunConfig):
    """Resolve the manifest into (entries, record paths, annotations)."""
    path = _require(cfg.manifest, "point data.manifest at a dataset manifest")
    with open(path) as fh:
        entries = parse_manifest(fh.read())
    base = os.path.dirname(os.path.abspath(path))
    records = [os.path.join(base, p) for p in entries["records"]]
    if not records:
        raise DataError(f"{path}: manifest lists no records")
    annotations: dict = {}
    if "summary" in entries:
        summary_path = os.path.join(base, entries["summary"])
        _require(summary_path, "manifest names a summary file that is absent")
        with open(summary_path) as fh:
            annotations = parse_chb_summary(fh.read(),
                                            gap_seconds=cfg.leading_gap_seconds)
    return entries, records, annotations


def _read_record(path: str, cfg: RunConfig):
    with open(_require(path, "manifest record path does not exist"), "rb") as fh:
        record = parse_edf(fh.read())
    if record.rate != cfg.record_rate:
        raise DataError(f"{os.path.basename(path)}: rate {record.rate} Hz does "
                        f"not match data.record_rate {cfg.record_rate} Hz")
    return record


def _record_annotations(name: str, annotations: dict) -> SeizureAnnotations:
    ann = annotations.get(name)
    if ann is None or not ann.seizures:
        _warn(f"{name}: no seizure annotations; its preictal set is empty")
        return SeizureAnnotations([], [])
    return ann


# -- commands ----------------------------------------------------------


def cmd_ingest(cfg: RunConfig) -> list:
    """Validate the manifest's recordings and inventory them."""
    _, records, annotations = _load_manifest(cfg)
    rows, channels_seen = [], None
    for path in records:
        name = os.path.basename(path)
        record = _read_record(path, cfg)
        if channels_seen is None:
            channels_seen = record.channels
        elif record.channels != channels_seen:
            raise DataError(f"{name}: channels {record.channels} differ from "
                            f"{channels_seen}; records must share a montage")
        ann = annotations.get(name, SeizureAnnotations([], []))
        rows.append((name, _fmt(record.rate), str(len(record.channels)),
                     _fmt(record.duration), str(len(ann.seizures)),
                     str(len(ann.leading_indices))))
    return [_write_csv(_out(cfg, "records.csv"),
                       "file,rate,channels,duration_s,seizures,leading", rows)]


def _reindex_seizures(windows: SampleSet, offset: int) -> SampleSet:
    return replace(windows,
                   seizure=tuple(s + offset if s >= 0 else -1
                                 for s in windows.seizure),
                   leading=tuple(i + offset for i in windows.leading))


def cmd_segment(cfg: RunConfig) -> list:
    """Harvest labelled windows from every recording in the manifest."""
    _, records, annotations = _load_manifest(cfg)
    parts, rows, seizure_base = [], [], 0
    for path in records:
        name = os.path.basename(path)
        record = _read_record(path, cfg)
        ann = _record_annotations(name, annotations)
        periods = annotate_periods(record.duration, ann, cfg.period_config())
        wins = _reindex_seizures(
            segment_windows(record, periods, cfg.window_seconds), seizure_base)
        seizure_base += len(ann.seizures)
        parts.append(wins)
        rows.append((name, str(wins.count("preictal")),
                     str(wins.count("interictal")), str(len(ann.seizures)),
                     str(len(wins.leading))))
    combined = concat_sets(parts)
    if combined.count("preictal") == 0:
        _warn("no preictal windows were harvested from any record")
    pre = combined.select([l == "preictal" for l in combined.labels])
    inter = combined.select([l == "interictal" for l in combined.labels])
    pre_path, inter_path = _out(cfg, "preictal.pfg"), _out(cfg, "interictal.pfg")
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_sampleset(pre, pre_path)
    save_sampleset(inter, inter_path)
    seg = _write_csv(_out(cfg, "segments.csv"),
                     "file,preictal,interictal,seizures,leading", rows)
    return [pre_path, inter_path, seg]


def _load_windows(cfg: RunConfig, name: str, stage: str) -> SampleSet:
    return load_sampleset(_require(_out(cfg, name), f"run `{stage}` first"))


def _to_model_grid(s: SampleSet, cfg: RunConfig) -> SampleSet:
    """Windows onto the modelling grid: resample then rescale to [-1, 1]."""
    w = s.windows
    if cfg.train_rate != s.rate:
        w = resample(w, s.rate, cfg.train_rate)
    return replace(s, windows=normalize_amplitude(w), rate=cfg.train_rate)


def _to_classifier_grid(s: SampleSet, cfg: RunConfig) -> SampleSet:
    rate = cfg.effective_cv_rate()
    w = s.windows
    if rate != s.rate:
        w = resample(w, s.rate, rate)
    return replace(s, windows=normalize_amplitude(w), rate=rate)


def cmd_train_gan(cfg: RunConfig, gen_spec: ModelSpec | None = None,
                  disc_spec: ModelSpec | None = None) -> list:
    """Adversarially train one generator per channel on preictal windows."""
    pre = _load_windows(cfg, "preictal.pfg", "segment")
    if pre.n == 0:
        raise DataError("the preictal set is empty; nothing to train on")
    ds = _to_model_grid(pre, cfg)
    bank, traces = train_all_channels(ds, cfg.train_config(),
                                      gen_spec=gen_spec, disc_spec=disc_spec,
                                      workers=cfg.effective_workers())
    bank_dir = _out(cfg, "bank")
    save_bank(bank, bank_dir)
    rows = []
    for k, trace in enumerate(traces):
        for e, d_l, g_l, wd in zip(trace.epochs, trace.d_loss, trace.g_loss,
                                   trace.wd):
            rows.append((str(k), str(e), _fmt(d_l), _fmt(g_l),
                         "" if wd is None else _fmt(wd)))
    trace_path = _write_csv(_out(cfg, "train_trace.csv"),
                            "channel,epoch,d_loss,g_loss,wd", rows)
    return [bank_dir, trace_path]


def cmd_gen_pool(cfg: RunConfig) -> list:
    """Draw a synthetic preictal pool and restore it to the record rate."""
    bank = load_bank(_require(_out(cfg, "bank"), "run `train-gan` first"))
    n = cfg.pool_size
    if n == 0:
        pre = _load_windows(cfg, "preictal.pfg", "segment")
        if pre.n == 0:
            raise DataError("cannot size the pool from an empty preictal set")
        n = max(1, max(cfg.cv_ratios)) * pre.n
    pool = generate_pool(bank, n, cfg.seed, rate=cfg.train_rate)
    if cfg.record_rate != cfg.train_rate:
        restored = upsample_to_original(pool.windows, cfg.window_seconds,
                                        cfg.record_rate)
        pool = replace(pool, windows=restored, rate=cfg.record_rate)
    path = _out(cfg, "pool.pfg")
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_sampleset(pool, path)
    return [path]


def _flatten_channels(s: SampleSet) -> SampleSet:
    """Each channel row becomes its own single-channel sample."""
    n, c, length = s.windows.shape
    rep = lambda seq: tuple(v for v in seq for _ in range(c))
    return SampleSet(windows=s.windows.reshape(n * c, 1, length),
                     labels=rep(s.labels), provenance=rep(s.provenance),
                     seizure=rep(s.seizure), rate=s.rate)


def cmd_eval_gan(cfg: RunConfig, embed_spec: ModelSpec | None = None) -> list:
    """Score the trained bank against real and noise controls."""
    bank = load_bank(_require(_out(cfg, "bank"), "run `train-gan` first"))
    pre = _to_model_grid(_load_windows(cfg, "preictal.pfg", "segment"), cfg)
    inter = _to_model_grid(_load_windows(cfg, "interictal.pfg", "segment"), cfg)
    if pre.n == 0 or inter.n == 0:
        raise DataError("eval-gan needs both preictal and interictal windows "
                        "to train the embedding network")
    pre_flat, inter_flat = _flatten_channels(pre), _flatten_channels(inter)
    embedder = Embedder(out_length=cfg.train_length(), seed=cfg.seed,
                        spec=embed_spec)
    embedder.train(pre_flat, inter_flat, epochs=cfg.eval_embed_epochs,
                   seed=cfg.seed)
    model_pool = _flatten_channels(
        generate_pool(bank, max(4, cfg.eval_pairs), cfg.seed,
                      rate=cfg.train_rate))
    name = f"{cfg.train_family}-{cfg.train_mode}"
    card = scorecard([(name, model_pool)], pre_flat, embedder, seed=cfg.seed,
                     pairs=cfg.eval_pairs)
    return [_write_text(_out(cfg, "scorecard.csv"), card.to_csv())]


def _classifier_sets(cfg: RunConfig, need_pool: bool):
    pre = _to_classifier_grid(_load_windows(cfg, "preictal.pfg", "segment"), cfg)
    inter = _to_classifier_grid(
        _load_windows(cfg, "interictal.pfg", "segment"), cfg)
    pool = None
    if need_pool:
        pool = _to_classifier_grid(
            _load_windows(cfg, "pool.pfg", "gen-pool"), cfg)
    return pre, inter, pool


def _classifier_spec(cfg: RunConfig, dataset: SampleSet,
                     spec: ClassifierSpec | None) -> ClassifierSpec:
    if spec is not None:
        return spec
    _, c, length = dataset.windows.shape
    return ClassifierSpec(channels=c, length=length)


def cmd_train_clf(cfg: RunConfig, clf_spec: ClassifierSpec | None = None) -> list:
    """Train one prediction network on the whole harvested dataset.

    Preictal windows are augmented at the first configured ratio; the
    interictal side is subsampled to the augmented count so training
    stays balanced.
    """
    ratio = cfg.cv_ratios[0]
    pre, inter, pool = _classifier_sets(cfg, need_pool=ratio > 0)
    if pre.n == 0:
        raise DataError("the preictal set is empty; nothing to train on")
    mixed = da_mix(pre, pool, ratio,
                   seed=np.random.SeedSequence((cfg.seed & 0xFFFFFFFF, 424242)))
    if inter.n < mixed.n:
        raise DataError(f"need {mixed.n} interictal windows to balance "
                        f"training, found {inter.n}")
    rng = np.random.default_rng(
        np.random.SeedSequence((cfg.seed & 0xFFFFFFFF, 515151)))
    keep = np.sort(rng.choice(inter.n, size=mixed.n, replace=False))
    train = concat_sets([mixed, inter.select(keep)])
    spec = _classifier_spec(cfg, train, clf_spec)
    model = build_classifier(spec, np.random.default_rng(cfg.seed))
    losses = train_classifier(model, train, lr=cfg.cv_lr, batch=cfg.cv_batch,
                              epochs=cfg.cv_epochs, seed=cfg.seed)
    clf_path = _out(cfg, "classifier.pfg")
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_checkpoint([(name, t.data) for name, t in model.params.items()],
                     clf_path)
    meta = {"spec": asdict(spec), "threshold": cfg.cv_threshold,
            "rate": cfg.effective_cv_rate(), "ratio": ratio}
    meta_path = _write_text(_out(cfg, "classifier.meta.json"),
                            json.dumps(meta, sort_keys=True) + "\n")
    loss_path = _write_csv(_out(cfg, "clf_loss.csv"), "epoch,loss",
                           [(str(e), _fmt(l)) for e, l in enumerate(losses)])
    return [clf_path, meta_path, loss_path]


def load_classifier(path: str):
    """Rebuild a trained classifier written by train-clf."""
    meta_path = path.replace(".pfg", ".meta.json")
    with open(_require(meta_path, "classifier sidecar is missing")) as fh:
        meta = json.load(fh)
    raw = meta["spec"]
    for key in ("conv1d_widths", "conv2d_widths"):
        raw[key] = tuple(raw[key])
    spec = ClassifierSpec(**raw)
    model = build_classifier(spec, np.random.default_rng(0))
    model.params.load_values(dict(read_checkpoint(path)))
    return model, meta


def cmd_predict_cv(cfg: RunConfig, clf_spec: ClassifierSpec | None = None) -> list:
    """Leave-one-seizure-out study across the configured DA ratios."""
    need_pool = any(r > 0 for r in cfg.cv_ratios)
    pre, inter, pool = _classifier_sets(cfg, need_pool)
    dataset = concat_sets([pre, inter])
    table = compare_conditions(dataset, pool, ratios=cfg.cv_ratios,
                               cfg=cfg.cv_config(
                                   spec=_classifier_spec(cfg, dataset, clf_spec)),
                               workers=cfg.effective_workers())
    paths = [_write_text(_out(cfg, "cv_results.csv"), table.to_csv()),
             _write_text(_out(cfg, "cv_summary.csv"), table.summary_csv())]
    for rep in table.reports:
        labeled = [(f"fold {k} run {r}", pts) for k, r, pts in rep.curves]
        svg = roc_svg(labeled, title=f"DA ratio {rep.condition}")
        paths.append(_write_text(_out(cfg, f"roc_r{rep.condition}.svg"), svg))
    return paths


def _md_table(csv_text: str) -> str:
    lines = csv_text.strip().split("\n")
    cells = [line.split(",") for line in lines]
    out = ["| " + " | ".join(cells[0]) + " |",
           "|" + "---|" * len(cells[0])]
    out += ["| " + " | ".join(row) + " |" for row in cells[1:]]
    return "\n".join(out)


def cmd_report(cfg: RunConfig) -> list:
    """Summarize the emitted artifacts as one Markdown page."""
    sections = []
    for title, name in (("Recordings", "records.csv"),
                        ("Harvest", "segments.csv"),
                        ("Synthesis scorecard", "scorecard.csv"),
                        ("Prediction summary", "cv_summary.csv")):
        path = _out(cfg, name)
        if os.path.exists(path):
            with open(path) as fh:
                sections.append((title, _md_table(fh.read())))
    present = {t for t, _ in sections}
    if not present & {"Synthesis scorecard", "Prediction summary"}:
        raise DataError("nothing to report yet; run `eval-gan` or "
                        "`predict-cv` first")
    body = ["# Pipeline report", ""]
    for title, table in sections:
        body += [f"## {title}", "", table, ""]
        if title == "Synthesis scorecard":
            body += ["Lower is better on every metric; `real` is the "
                     "split-half floor and `noise` the unstructured ceiling.",
                     ""]
    body += ["## Configuration", "", "```"]
    for key, (field_name, _) in KEYS.items():
        value = getattr(cfg, field_name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        body.append(f"{key} = {value}")
    body += ["```", ""]
    return [_write_text(_out(cfg, "report.md"), "\n".join(body))]


# -- demo ---------------------------------------------------------------

_DEMO_GEN = ModelSpec(family="cnn", role="generator", mode="wgan",
                      latent=16, out_length=500, base_depth=16,
                      block_widths=(8, 8))
_DEMO_DISC = ModelSpec(family="cnn", role="discriminator", mode="wgan",
                       out_length=500, disc_widths=(4, 8), embed_size=8)
_DEMO_EMBED = ModelSpec(family="cnn", role="discriminator", mode="gan",
                        out_length=500, disc_widths=(3, 4), embed_size=8)
_DEMO_CLF = ClassifierSpec(channels=2, length=256, conv1d_widths=(4, 4, 4),
                           conv2d_widths=(2, 2), fc_width=8)


def cmd_demo(cfg: RunConfig) -> list:
    """Fabricate a recording, then run every stage on it at desk scale."""
    out = cfg.out_dir
    data_dir = os.path.join(out, "demo-data")
    edf, summary = make_demo_recording(seed=cfg.seed)
    os.makedirs(data_dir, exist_ok=True)
    edf_path = os.path.join(data_dir, DEMO_FILE)
    with open(edf_path, "wb") as fh:
        fh.write(edf)
    _write_text(os.path.join(data_dir, "summary.txt"), summary)
    manifest = _write_text(
        os.path.join(data_dir, "manifest.txt"),
        write_manifest({"subject": "demo", "summary": "summary.txt"},
                       [DEMO_FILE]))

    demo_cfg = desk_profile(seed=cfg.seed, out_dir=out, workers=cfg.workers,
                            manifest=manifest)
    paths = [edf_path, manifest]
    stages = (("ingest", lambda: cmd_ingest(demo_cfg)),
              ("segment", lambda: cmd_segment(demo_cfg)),
              ("train-gan", lambda: cmd_train_gan(demo_cfg, _DEMO_GEN,
                                                  _DEMO_DISC)),
              ("gen-pool", lambda: cmd_gen_pool(demo_cfg)),
              ("eval-gan", lambda: cmd_eval_gan(demo_cfg, _DEMO_EMBED)),
              ("predict-cv", lambda: cmd_predict_cv(demo_cfg, _DEMO_CLF)),
              ("report", lambda: cmd_report(demo_cfg)))
    for name, run in stages:
        print(f"demo: {name}")
        paths.extend(run())
    return paths


COMMANDS = {
    "ingest": cmd_ingest,
    "segment": cmd_segment,
    "train-gan": cmd_train_gan,
    "gen-pool": cmd_gen_pool,
    "eval-gan": cmd_eval_gan,
    "train-clf": cmd_train_clf,
    "predict-cv": cmd_predict_cv,
    "report": cmd_report,
    "demo": cmd_demo,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="preictalsynth",
        description="Synthesize multichannel preictal windows and measure "
                    "their effect on seizure prediction.",
        epilog="Config keys (file `key = value` lines; environment "
               "overrides by upper-cased key with dots as underscores): "
               + ", ".join(KEYS))
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", default=None, metavar="FILE",
                   help="flat dotted-key configuration file")
    p.add_argument("--seed", type=int, default=None,
                   help="override run.seed")
    p.add_argument("--workers", type=int, default=None,
                   help="override run.workers (0 = all cores)")
    p.add_argument("--out", default=None, metavar="DIR",
                   help="override run.out_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {name: value for name, value in
                 (("seed", args.seed), ("workers", args.workers),
                  ("out_dir", args.out)) if value is not None}
    try:
        cfg = load_run_config(args.config, overrides=overrides)
        for path in COMMANDS[args.command](cfg):
            print(f"wrote {path}")
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ShapeError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except (TrainingDiverged, MissingGradient, ValueError) as e:
        print(f"numeric divergence: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
