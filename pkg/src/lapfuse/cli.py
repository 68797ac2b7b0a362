"""End-to-end pipelines: train, evaluate, ood, sequence, fuse.

Configuration is a versioned JSON document (see README for the schema).
Every randomized stage derives its own seed from the master seed through
:func:`lapfuse.seeding.derive_seed` with a stage label, so reruns with the
same master seed reproduce every file byte for byte (timestamps live only
in the manifest).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
error.
"""

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .aggregate import aggregate, state_from_blocks
from .calibrate import fit_covariance_scale
from .data import (
    InputSequence,
    LabeledSet,
    build_sequence,
    corrupt_element,
    load_idx,
    make_blobs,
    make_glyphs,
)
from .delta import logit_gaussians_batch
from .errors import ConfigError, DataError, NumericalError
from .fusion import (
    FusedGaussian,
    ella_pmf,
    fuse_information,
    inverse_trace_weights,
    log_linear_pool,
    mc_pmf,
    product_fusion,
    uniform_weights,
)
from .laplace import LaplacePosterior, load_posterior, posterior, save_posterior
from .metrics import (
    apply_temperature,
    detection,
    entropy_rows,
    evaluate_predictions,
    fit_temperature,
    report_kv_text,
)
from .network import TrainConfig, load_checkpoint, save_checkpoint, softmax, train_map
from .plots import histogram_pair, line_chart, reliability_diagram
from .seeding import derive_seed, make_rng

ALL_METHODS = ("temp_scaling", "deep_ensemble", "lla", "lla_fusion", "ella")
CONFIG_VERSION = 1


@dataclass
class RunConfig:
    """Validated run configuration (JSON round-trippable)."""

    dataset: dict
    hidden: list = field(default_factory=lambda: [64, 32])
    train: dict = field(
        default_factory=lambda: {
            "epochs": 3,
            "batch_size": 128,
            "step_size": 1e-3,
            "prior_variance": 1.0,
        }
    )
    ensemble_size: int = 10
    sequence_length: int = 1
    methods: list = field(default_factory=lambda: list(ALL_METHODS))
    num_samples: int = 1000
    master_seed: int = 0
    val_fraction: float = 0.2
    t_theta: object = "fit"  # "fit" or a number >= 1
    ella_weights: str = "uniform"
    cross_rho: float | None = None
    num_bins: int = 10
    temperature_grid: dict = field(
        default_factory=lambda: {"lo": 0.05, "hi": 20.0, "points": 100}
    )
    ood_dataset: dict | None = None
    out_dir: str | None = None
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if not isinstance(self.dataset, dict) or "kind" not in self.dataset:
            raise ConfigError("dataset spec must be a dict with a 'kind'")
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be >= 1")
        if self.sequence_length < 1:
            raise ConfigError("sequence_length must be >= 1")
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigError("val_fraction must lie in [0, 1)")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {ALL_METHODS}")
        if self.t_theta != "fit":
            try:
                t_val = float(self.t_theta)
            except (TypeError, ValueError):
                raise ConfigError("t_theta must be 'fit' or a number >= 1") from None
            if t_val < 1.0:
                raise ConfigError("t_theta must be >= 1")
            self.t_theta = t_val
        if self.ella_weights not in ("uniform", "inverse_trace"):
            raise ConfigError("ella_weights must be 'uniform' or 'inverse_trace'")
        if self.cross_rho is not None and not (0.0 <= self.cross_rho < 1.0):
            raise ConfigError("cross_rho must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "dataset" not in raw:
            raise ConfigError("config needs a 'dataset' section")
        return cls(**raw)


def load_config(path) -> RunConfig:
    try:
        with open(str(path)) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# Dataset resolution
# ---------------------------------------------------------------------------


def _limit(dataset: LabeledSet, count) -> LabeledSet:
    if count is None or count >= len(dataset):
        return dataset
    return dataset.subset(np.arange(int(count)))


def resolve_dataset(spec: dict, master_seed: int, role: str) -> tuple[LabeledSet, LabeledSet]:
    """Produce (train, test) sets for a dataset spec.

    Kinds: "idx" (train/test IDX file pairs, optional train_limit and
    test_limit), "blobs" (Gaussian clouds; optional mean_shift offsets all
    inputs along the normalized all-ones direction), "glyphs" (synthetic
    28x28 stroke images, families "digits" and "shapes").
    """
    kind = spec.get("kind")
    if kind == "idx":
        needed = ["train_images", "train_labels", "test_images", "test_labels"]
        missing = [k for k in needed if k not in spec]
        if missing:
            raise ConfigError(f"idx dataset spec missing {missing}")
        classes = int(spec.get("num_classes", 10))
        train = load_idx(spec["train_images"], spec["train_labels"], classes)
        test = load_idx(spec["test_images"], spec["test_labels"], classes)
        return _limit(train, spec.get("train_limit")), _limit(test, spec.get("test_limit"))
    if kind == "blobs":
        classes = int(spec.get("num_classes", 3))
        dim = int(spec.get("dim", 2))
        sep = float(spec.get("separation", 6.0))
        per_train = int(spec.get("per_class", 200))
        per_test = int(spec.get("per_class_test", per_train))
        train = make_blobs(classes, per_train, dim, sep, derive_seed(master_seed, f"{role}.train"))
        test = make_blobs(classes, per_test, dim, sep, derive_seed(master_seed, f"{role}.test"))
        shift = float(spec.get("mean_shift", 0.0))
        if shift:
            offset = shift * np.ones(dim) / np.sqrt(dim)
            train = LabeledSet(train.inputs + offset, train.labels, classes)
            test = LabeledSet(test.inputs + offset, test.labels, classes)
        return train, test
    if kind == "glyphs":
        classes = int(spec.get("num_classes", 10))
        family = spec.get("family", "digits")
        size = int(spec.get("image_size", 28))
        ambiguity = float(spec.get("ambiguity", 0.12))
        train = make_glyphs(
            int(spec.get("count", 10000)),
            derive_seed(master_seed, f"{role}.train"),
            classes,
            size,
            family,
            ambiguity,
        )
        test = make_glyphs(
            int(spec.get("test_count", 10000)),
            derive_seed(master_seed, f"{role}.test"),
            classes,
            size,
            family,
            ambiguity,
        )
        return train, test
    raise ConfigError(f"unknown dataset kind {kind!r}")


def split_validation(train: LabeledSet, fraction: float, seed: int):
    """Seeded permutation split into (fit, val); val is None when fraction=0."""
    if fraction <= 0.0:
        return train, None
    n_val = int(round(fraction * len(train)))
    n_val = min(max(n_val, 1), len(train) - 1)
    perm = make_rng(seed).permutation(len(train))
    return train.subset(perm[n_val:]), train.subset(perm[:n_val])


# ---------------------------------------------------------------------------
# Artifact files
# ---------------------------------------------------------------------------


def _member_paths(out_dir: Path, idx: int) -> tuple[Path, Path]:
    return out_dir / f"member_{idx:02d}.ckpt", out_dir / f"member_{idx:02d}.post"


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_members(out_dir: Path) -> list[LaplacePosterior]:
    manifest_path = out_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(
            f"no manifest at {manifest_path}; run the train command into this directory first"
        )
    manifest = json.loads(manifest_path.read_text())
    members = []
    for entry in manifest["members"]:
        ckpt, post_path = Path(entry["checkpoint"]), Path(entry["posterior"])
        if not ckpt.exists() or not post_path.exists():
            raise DataError(f"missing artifact for member {entry['index']}: {ckpt} / {post_path}")
        model, _ = load_checkpoint(ckpt)
        members.append(load_posterior(post_path, model))
    return members


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train(config: RunConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    train_all, _ = resolve_dataset(config.dataset, config.master_seed, "data")
    fit_set, val_set = split_validation(
        train_all, config.val_fraction, derive_seed(config.master_seed, "val_split")
    )
    arch = [train_all.dim] + [int(h) for h in config.hidden] + [train_all.num_classes]

    members = []
    for c in range(config.ensemble_size):
        seed = derive_seed(config.master_seed, "train", c)
        cfg = TrainConfig(
            epochs=int(config.train.get("epochs", 3)),
            batch_size=int(config.train.get("batch_size", 128)),
            step_size=float(config.train.get("step_size", 1e-3)),
            prior_variance=float(config.train.get("prior_variance", 1.0)),
            seed=seed,
        )
        result = train_map(fit_set, arch, cfg)
        post = posterior(result.model, fit_set, cfg.prior_variance, 1.0)
        if config.t_theta == "fit":
            if val_set is None:
                raise ConfigError("t_theta='fit' requires val_fraction > 0")
            scale = fit_covariance_scale(
                post,
                val_set.inputs,
                val_set.labels,
                seed=derive_seed(config.master_seed, "t_theta", c),
                num_bins=config.num_bins,
            )
        else:
            scale = float(config.t_theta)
        if scale > 1.0:
            post = post.scaled(scale)

        ckpt_path, post_path = _member_paths(out_dir, c)
        save_checkpoint(result.model, ckpt_path, seed)
        save_posterior(post, post_path)
        members.append(
            {
                "index": c,
                "seed": seed,
                "final_loss": result.final_loss,
                "final_accuracy": result.final_accuracy,
                "t_theta": scale,
                "checkpoint": str(ckpt_path),
                "posterior": str(post_path),
            }
        )
        print(
            f"member {c}: loss {result.final_loss:.4f}, "
            f"train acc {result.final_accuracy:.4f}, t_theta {scale:.3f}"
        )

    manifest = {
        "config": config.to_dict(),
        "members": members,
        "created_unix": time.time(),
    }
    _write_json(out_dir / "manifest.json", manifest)
    return manifest


GAUSSIAN_METHODS = ("lla", "lla_fusion", "ella")


def _gaussian_stats(members, inputs, cache: dict, key: str):
    """Per-member (means, covs) over a fixed input set, computed once."""
    if key not in cache:
        cache[key] = [logit_gaussians_batch(post, inputs) for post in members]
    return cache[key]


def _method_pmfs(
    method: str,
    members: list[LaplacePosterior],
    test: LabeledSet,
    config: RunConfig,
    val_set: LabeledSet | None,
    extras: dict,
    stats_cache: dict | None = None,
    cache_key: str = "test",
) -> tuple[np.ndarray, list[dict]]:
    """Predicted PMFs for one method plus per-item dump records."""
    n, m = len(test), test.num_classes
    count = config.num_samples
    records: list[dict] = []

    if method == "temp_scaling":
        if val_set is None:
            raise ConfigError("temperature scaling requires val_fraction > 0")
        grid_spec = config.temperature_grid
        grid = np.geomspace(
            float(grid_spec["lo"]), float(grid_spec["hi"]), int(grid_spec["points"])
        )
        temp = fit_temperature(
            members[0].model.logits(val_set.inputs), val_set.labels, grid
        )
        extras["temperature"] = temp
        preds = apply_temperature(members[0].model.logits(test.inputs), temp)
        for i in range(n):
            records.append({"dims": [1, 1, m], "pmf": preds[i].tolist()})
        return preds, records

    if method == "deep_ensemble":
        preds = np.zeros((n, m))
        for post in members:
            preds += softmax(post.model.logits(test.inputs))
        preds /= len(members)
        for i in range(n):
            records.append({"dims": [len(members), 1, m], "pmf": preds[i].tolist()})
        return preds, records

    # Gaussian-based methods share the per-member logit Gaussians.
    if stats_cache is None:
        stats_cache = {}
    member_stats = _gaussian_stats(members, test.inputs, stats_cache, cache_key)

    preds = np.empty((n, m))
    if method == "lla":
        means, covs = member_stats[0]
        for i in range(n):
            seed = derive_seed(config.master_seed, "eval.lla", i)
            est = mc_pmf(FusedGaussian(means[i], covs[i]), count, seed)
            preds[i] = est.pmf
            records.append(
                {
                    "dims": [1, 1, m],
                    "pmf": est.pmf.tolist(),
                    "mean": means[i].tolist(),
                    "seed": seed,
                    "num_samples": count,
                }
            )
        return preds, records

    if method not in ("lla_fusion", "ella"):
        raise ConfigError(f"unknown method {method!r}")

    for i in range(n):
        state = state_from_blocks(
            [means[i] for means, _ in member_stats],
            [covs[i] for _, covs in member_stats],
            seq_length=1,
            cross_rho=config.cross_rho,
        )
        seed = derive_seed(config.master_seed, f"eval.{method}", i)
        if method == "lla_fusion":
            fused = fuse_information(state)
            est = mc_pmf(fused, count, seed)
            record = {
                "dims": [len(members), 1, m],
                "pmf": est.pmf.tolist(),
                "mean": fused.mean.tolist(),
                "seed": seed,
                "num_samples": count,
            }
        else:
            if config.ella_weights == "inverse_trace":
                weights = inverse_trace_weights(state)
            else:
                weights = uniform_weights(len(members), 1)
            est = ella_pmf(state, weights, count, seed)
            record = {
                "dims": [len(members), 1, m],
                "pmf": est.pmf.tolist(),
                "seed": seed,
                "num_samples": count,
            }
        preds[i] = est.pmf
        records.append(record)
    return preds, records


def cmd_evaluate(config: RunConfig, out_dir: Path, methods=None) -> dict:
    members = _load_members(out_dir)
    train_all, test = resolve_dataset(config.dataset, config.master_seed, "data")
    _, val_set = split_validation(
        train_all, config.val_fraction, derive_seed(config.master_seed, "val_split")
    )
    methods = list(methods or config.methods)

    summary_rows = []
    extras_all: dict = {}
    stats_cache: dict = {}
    for method in methods:
        extras: dict = {}
        preds, records = _method_pmfs(
            method, members, test, config, val_set, extras, stats_cache, "test"
        )
        report = evaluate_predictions(
            preds, test.labels, method, _dataset_tag(config.dataset), config.num_bins
        )
        dump_path = out_dir / f"predictions_{method}.jsonl"
        with open(dump_path, "w") as fh:
            for i, rec in enumerate(records):
                rec = {"item": i, "label": int(test.labels[i]), "method": method, **rec}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        (out_dir / f"report_{method}.txt").write_text(report_kv_text(report))
        _write_csv(
            out_dir / f"bins_{method}.csv",
            ["bin", "count", "accuracy", "confidence"],
            [(j, b.count, b.accuracy, b.confidence) for j, b in enumerate(report.bins)],
        )
        reliability_diagram(out_dir / f"reliability_{method}.svg", report.bins, method)
        row = report.as_dict()
        row.update(extras)
        extras_all[method] = extras
        summary_rows.append(row)
        print(
            f"{method}: acc {report.accuracy:.4f}, nll {report.mean_nll:.4f}, "
            f"brier {report.brier:.4f}, ece {100 * report.ece:.2f}%"
        )

    header = [
        "method",
        "accuracy",
        "mean_nll",
        "total_log_likelihood",
        "brier",
        "ece",
        "ece_uniform_bins",
        "mean_entropy",
    ]
    _write_csv(
        out_dir / "reports.csv",
        header,
        [[row[k] for k in header] for row in summary_rows],
    )
    _write_json(out_dir / "evaluation.json", {"methods": methods, "extras": extras_all})
    return {"reports": summary_rows}


def _dataset_tag(spec: dict) -> str:
    kind = spec.get("kind", "?")
    if kind == "glyphs":
        return f"glyphs-{spec.get('family', 'digits')}"
    return kind


def cmd_ood(config: RunConfig, out_dir: Path, methods=None) -> dict:
    if config.ood_dataset is None:
        raise ConfigError("ood command needs an 'ood_dataset' section in the config")
    members = _load_members(out_dir)
    train_all, test_in = resolve_dataset(config.dataset, config.master_seed, "data")
    _, test_out = resolve_dataset(config.ood_dataset, config.master_seed, "ood")
    if test_in.dim != test_out.dim:
        raise DataError(
            f"in/out input dimensions differ: {test_in.dim} vs {test_out.dim}"
        )
    _, val_set = split_validation(
        train_all, config.val_fraction, derive_seed(config.master_seed, "val_split")
    )
    methods = list(methods or config.methods)

    rows = []
    stats_cache: dict = {}
    for method in methods:
        extras: dict = {}
        preds_in, _ = _method_pmfs(
            method, members, test_in, config, val_set, extras, stats_cache, "in"
        )
        preds_out, _ = _method_pmfs(
            method, members, test_out, config, val_set, extras, stats_cache, "out"
        )
        ent_in, ent_out = entropy_rows(preds_in), entropy_rows(preds_out)
        report = detection(ent_in, ent_out)
        (out_dir / f"detection_{method}.txt").write_text(report_kv_text(report))
        _write_csv(
            out_dir / f"roc_{method}.csv",
            ["p_fa", "p_d"],
            [(float(a), float(b)) for a, b in report.roc_points],
        )
        _write_csv(
            out_dir / f"pr_{method}.csv",
            ["recall", "precision"],
            [(float(a), float(b)) for a, b in report.pr_points],
        )
        hist_edges = np.linspace(
            0.0, float(max(ent_in.max(), ent_out.max())) + 1e-9, 41
        )
        hist_in, _ = np.histogram(ent_in, bins=hist_edges)
        hist_out, _ = np.histogram(ent_out, bins=hist_edges)
        _write_csv(
            out_dir / f"entropy_hist_{method}.csv",
            ["bin_left", "bin_right", "count_in", "count_out"],
            [
                (float(hist_edges[j]), float(hist_edges[j + 1]), int(hist_in[j]), int(hist_out[j]))
                for j in range(len(hist_in))
            ],
        )
        histogram_pair(
            out_dir / f"entropy_hist_{method}.svg",
            ent_in,
            ent_out,
            ("in-distribution", "out-of-distribution"),
            "predicted entropy",
            title=method,
        )
        rows.append({"method": method, **report.as_dict()})
        print(f"{method}: auroc {report.auroc:.4f}, aupr {report.aupr:.4f}")

    header = ["method", "auroc", "aupr", "score_gap_total", "score_gap_mean"]
    _write_csv(out_dir / "detection_summary.csv", header, [[r[k] for k in header] for r in rows])
    return {"detection": rows}


def cmd_sequence(
    config: RunConfig,
    out_dir: Path,
    class_id: int,
    length: int | None = None,
    corruption: tuple[str, float] | None = None,
    corrupt_frame: int | None = None,
    method: str = "lla_fusion",
) -> dict:
    if method not in ("lla_fusion", "ella"):
        raise ConfigError("sequence fusion method must be 'lla_fusion' or 'ella'")
    members = _load_members(out_dir)
    _, test = resolve_dataset(config.dataset, config.master_seed, "data")
    length = length or config.sequence_length
    seq_seed = derive_seed(config.master_seed, "sequence")
    if corrupt_frame is None:
        seq = build_sequence(test, class_id, length, corruption, seq_seed)
    else:
        seq = build_sequence(test, class_id, length, None, seq_seed)
        if corruption is None:
            raise ConfigError("corrupt_frame requires a corruption spec")
        seq = corrupt_element(
            seq, corrupt_frame, corruption, derive_seed(config.master_seed, "sequence.frame")
        )

    m = test.num_classes
    trace_rows = []
    fused_trace = []
    frame_trace = []
    for l in range(1, length + 1):
        prefix = InputSequence(seq.inputs[:l], seq.true_class, seq.provenance[:l])
        state = aggregate(members, prefix, config.cross_rho)
        seed = derive_seed(config.master_seed, f"sequence.{method}", l)
        if method == "lla_fusion":
            cum = mc_pmf(fuse_information(state), config.num_samples, seed).pmf
        else:
            weights = (
                inverse_trace_weights(state)
                if config.ella_weights == "inverse_trace"
                else uniform_weights(len(members), l)
            )
            cum = ella_pmf(state, weights, config.num_samples, seed).pmf

        frame = InputSequence(seq.inputs[l - 1 : l], seq.true_class, seq.provenance[l - 1 : l])
        frame_state = aggregate(members, frame, config.cross_rho)
        frame_seed = derive_seed(config.master_seed, "sequence.frame_pmf", l)
        frame_pmf = mc_pmf(fuse_information(frame_state), config.num_samples, frame_seed).pmf

        fused_trace.append(float(cum[seq.true_class]))
        frame_trace.append(float(frame_pmf[seq.true_class]))
        tag = seq.provenance[l - 1]
        trace_rows.append(
            [
                l,
                tag.kind if tag.magnitude is None else f"{tag.kind}({tag.magnitude})",
                int(np.argmax(frame_pmf)),
                int(np.argmax(cum)),
                *[float(v) for v in frame_pmf],
                *[float(v) for v in cum],
            ]
        )

    header = (
        ["step", "provenance", "frame_argmax", "fused_argmax"]
        + [f"frame_p{c}" for c in range(m)]
        + [f"fused_p{c}" for c in range(m)]
    )
    _write_csv(out_dir / "sequence_trace.csv", header, trace_rows)
    steps = list(range(1, length + 1))
    line_chart(
        out_dir / "sequence_trace.svg",
        {
            "cumulative fused": (steps, fused_trace),
            "single frame": (steps, frame_trace),
        },
        "sequence position",
        f"p(class {seq.true_class})",
        f"sequential fusion ({method})",
    )
    final_argmax = trace_rows[-1][3]
    print(
        f"sequence of {length} class-{seq.true_class} inputs: "
        f"final fused argmax {final_argmax}"
    )
    return {"true_class": seq.true_class, "rows": trace_rows}


def cmd_fuse(dump_paths: list, rule: str, weights=None, output=None) -> list:
    """Ad-hoc fusion of aligned prediction dumps."""
    if rule not in ("product", "log_linear"):
        raise ConfigError("fusion rule must be 'product' or 'log_linear'")
    dumps = []
    for p in dump_paths:
        path = Path(p)
        if not path.exists():
            raise DataError(f"prediction dump not found: {path}")
        with open(path) as fh:
            dumps.append([json.loads(line) for line in fh if line.strip()])
    lengths = {len(d) for d in dumps}
    if len(lengths) != 1:
        raise DataError(f"dumps disagree on item counts: {sorted(lengths)}")
    if weights is not None:
        weights = np.asarray([float(w) for w in weights])

    fused_records = []
    for i in range(lengths.pop()):
        pmfs = [np.asarray(d[i]["pmf"]) for d in dumps]
        if rule == "product":
            fused = product_fusion(pmfs)
        else:
            w = weights if weights is not None else np.full(len(pmfs), 1.0 / len(pmfs))
            fused = log_linear_pool(pmfs, w)
        rec = {"item": i, "method": f"fuse_{rule}", "pmf": fused.tolist()}
        if "label" in dumps[0][i]:
            rec["label"] = dumps[0][i]["label"]
        fused_records.append(rec)

    if output is not None:
        with open(str(output), "w") as fh:
            for rec in fused_records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return fused_records


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _parse_corruption(raw: str | None) -> tuple[str, float] | None:
    if raw is None:
        return None
    kind, _, mag = raw.partition(":")
    if kind not in ("noise", "erase") or not mag:
        raise ConfigError("corruption must look like 'noise:0.5' or 'erase:0.6'")
    return kind, float(mag)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lapfuse",
        description="Train softmax classifiers, quantify their uncertainty, fuse predictions.",
    )
    parser.add_argument("--config", help="path to the JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the config master seed")
    parser.add_argument("--out", help="output directory (default from config)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", help="train the ensemble and build posteriors")
    ev = sub.add_parser("evaluate", help="run methods over the test set")
    ev.add_argument("--methods", nargs="+", choices=ALL_METHODS)
    ood = sub.add_parser("ood", help="out-of-distribution detection report")
    ood.add_argument("--methods", nargs="+", choices=ALL_METHODS)
    seq = sub.add_parser("sequence", help="cumulative fusion over an input sequence")
    seq.add_argument("--class-id", type=int, default=0)
    seq.add_argument("--length", type=int)
    seq.add_argument("--corrupt", help="corruption spec, e.g. noise:0.5 or erase:0.6")
    seq.add_argument("--corrupt-frame", type=int, help="corrupt only this frame (0-based)")
    seq.add_argument("--method", choices=("lla_fusion", "ella"), default="lla_fusion")
    fuse = sub.add_parser("fuse", help="fuse prediction dumps")
    fuse.add_argument("dumps", nargs="+")
    fuse.add_argument("--rule", choices=("product", "log_linear"), default="product")
    fuse.add_argument("--weights", nargs="+", type=float)
    fuse.add_argument("--output", required=True)
    return parser


def _run(args) -> int:
    if args.command == "fuse":
        cmd_fuse(args.dumps, args.rule, args.weights, args.output)
        return 0
    if not args.config:
        raise ConfigError(f"the {args.command} command needs --config")
    config = load_config(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    out_dir = Path(args.out or config.out_dir or "runs/default")
    if args.command == "train":
        cmd_train(config, out_dir)
    elif args.command == "evaluate":
        cmd_evaluate(config, out_dir, args.methods)
    elif args.command == "ood":
        cmd_ood(config, out_dir, args.methods)
    elif args.command == "sequence":
        cmd_sequence(
            config,
            out_dir,
            class_id=args.class_id,
            length=args.length,
            corruption=_parse_corruption(args.corrupt),
            corrupt_frame=args.corrupt_frame,
            method=args.method,
        )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
