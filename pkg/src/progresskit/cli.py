"""Command-line pipeline: build -> prompt -> eval -> score -> rewards -> analyze,
plus the review service for the human filtering stage.

Configuration is a single human-editable JSON file with ``sampler``,
``endpoint``, and ``rewards`` sections; command-line flags win over file
values. Every subcommand is deterministic given identical inputs and seeds.
"""

from __future__ import annotations

import csv
import json
import logging
import random
import sys
from collections import defaultdict
from pathlib import Path
from typing import Any

import click

from . import analysis as ana
from .client import (
    ConfigInvalid,
    EndpointConfig,
    RawResponse,
    read_responses,
    run_batch,
    write_responses,
)
from .metrics import aggregate, score_sample
from .mock_endpoint import MockChatEndpoint
from .model import (
    EvalInstance,
    Modality,
    read_candidates,
    read_instances,
    read_jsonl,
    read_trajectories,
    write_candidates,
    write_instances,
    write_jsonl,
)
from .parsing import SCHEMA_DIRECT, SCHEMA_FULL, parse_response
from .prompts import TemplateStore, render_for_template
from .review import ReviewServer, load_decisions
from .rewards import RewardConfig, reward_breakdown
from .sampler import (
    SamplerConfig,
    TextRewrite,
    hash64,
    kept_candidate_to_instance,
    make_unanswerable_text,
    make_unanswerable_vision,
    validate_trajectory,
)

log = logging.getLogger(__name__)


def _fail(code: str, detail: Any = None, exit_code: int = 2) -> None:
    """Machine-readable error on stderr, nonzero exit."""
    report = {"error": code}
    if detail is not None:
        report["detail"] = detail
    print(json.dumps(report, ensure_ascii=False), file=sys.stderr)
    sys.exit(exit_code)


def _load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _sampler_config(config: dict[str, Any], seed: int | None) -> SamplerConfig:
    section = dict(config.get("sampler", {}))
    if seed is not None:
        section["rng_seed"] = seed
    known = {f for f in SamplerConfig.__dataclass_fields__}
    return SamplerConfig(**{k: v for k, v in section.items() if k in known})


def _endpoint_config(config: dict[str, Any], **overrides: Any) -> EndpointConfig:
    section = dict(config.get("endpoint", {}))
    section.update({k: v for k, v in overrides.items() if v is not None})
    known = {f for f in EndpointConfig.__dataclass_fields__}
    return EndpointConfig(**{k: v for k, v in section.items() if k in known})


def _reward_config(config: dict[str, Any]) -> RewardConfig:
    section = config.get("rewards", {})
    known = {f for f in RewardConfig.__dataclass_fields__}
    return RewardConfig(**{k: v for k, v in section.items() if k in known})


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Task-progress benchmark construction, evaluation, scoring, and analysis."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.argument("trajectories", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.option("--seed", type=int, default=None, help="Override the configured RNG seed.")
@click.option("--rewrites", type=click.Path(exists=True), default=None,
              help="JSONL of externally generated text-demo rewrites (per trajectory).")
@click.option("--edits", type=click.Path(exists=True), default=None,
              help="JSONL of externally edited observation images (per instance).")
def build(trajectories: str, config_path: str | None, out_dir: str, seed: int | None,
          rewrites: str | None, edits: str | None) -> None:
    """Construct instances.jsonl and pending_review.jsonl from annotated trajectories."""
    config = _load_config(config_path)
    cfg = _sampler_config(config, seed)
    modalities = [Modality(m) for m in config.get("modalities", ["vision", "text"])]

    trajs = read_trajectories(trajectories)
    if not trajs:
        _fail("EmptyDataset", f"no trajectories in {trajectories}")
    violations = {t.id: v for t in trajs if (v := validate_trajectory(t))}
    if violations:
        _fail("ValidationFailed", violations)

    from .sampler import build_instances as sample_instances

    instances: list[EvalInstance] = []
    for t in trajs:
        mods = [m for m in modalities
                if m is Modality.VISION or all(s.text for s in t.steps)]
        instances.extend(sample_instances(t, cfg, mods))

    rewrites_by_traj: dict[str, TextRewrite] = {}
    if rewrites:
        for row in read_jsonl(rewrites):
            rewrites_by_traj[row["trajectory_id"]] = TextRewrite(
                goal=row["goal"], steps=tuple(row["steps"])
            )
    edits_by_instance = {row["instance_id"]: row for row in read_jsonl(edits)} if edits else {}

    # Negative volume is allocated per setting group so answerable and
    # unanswerable metrics keep balanced support.
    groups: dict[str, list[EvalInstance]] = defaultdict(list)
    for inst in instances:
        groups[inst.setting_key()].append(inst)
    neg_rng = random.Random(cfg.rng_seed ^ hash64("negatives"))
    negatives: list[EvalInstance] = []
    pending = []
    for key in sorted(groups):
        group = groups[key]
        quota = round(cfg.unanswerable_fraction * len(group))
        if quota == 0:
            continue
        if key.startswith("text:"):
            eligible = [i for i in group if i.trajectory_id in rewrites_by_traj]
            for inst in neg_rng.sample(eligible, min(quota, len(eligible))):
                negatives.append(make_unanswerable_text(inst, rewrites_by_traj[inst.trajectory_id]))
            source = "rewrites"
        else:
            eligible = [i for i in group if i.instance_id in edits_by_instance]
            for inst in neg_rng.sample(eligible, min(quota, len(eligible))):
                edit = edits_by_instance[inst.instance_id]
                pending.append(
                    make_unanswerable_vision(
                        inst, edit["edited_frame_ref"], edit["strategy"], edit["edit_prompt"]
                    )
                )
            source = "edits"
        if len(eligible) < quota:
            click.echo(
                f"warning: {key}: wanted {quota} unanswerable variants but only "
                f"{len(eligible)} instances have {source} available",
                err=True,
            )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_instances = instances + negatives
    write_instances(out / "instances.jsonl", all_instances)
    write_candidates(out / "pending_review.jsonl", pending)

    counts: dict[str, int] = defaultdict(int)
    for inst in all_instances:
        counts[inst.setting_key()] += 1
    for key in sorted(counts):
        click.echo(f"{key}: {counts[key]}")
    click.echo(
        f"wrote {len(all_instances)} instances, {len(pending)} review-pending candidates "
        f"to {out}"
    )


@main.command("prompt")
@click.argument("instances", type=click.Path(exists=True, dir_okay=False))
@click.option("--template", default="auto", show_default=True,
              type=click.Choice(["auto", "vision_infer", "text_infer", "direct"]))
@click.option("--template-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Override the packaged prompt templates.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="prompts.jsonl",
              show_default=True)
def prompt_cmd(instances: str, template: str, template_dir: str | None, out_path: str) -> None:
    """Render prompt bundles for inspection or external runners."""
    store = TemplateStore(template_dir)
    insts = read_instances(instances)
    bundles = [render_for_template(inst, template, store) for inst in insts]
    write_jsonl(out_path, (b.to_dict() for b in bundles))
    click.echo(f"wrote {len(bundles)} prompt bundles to {out_path}")


@main.command("eval")
@click.argument("instances", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--template", default="auto", show_default=True,
              type=click.Choice(["auto", "vision_infer", "text_infer", "direct"]))
@click.option("--template-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="responses.jsonl",
              show_default=True)
@click.option("--mock", is_flag=True, help="Run against a bundled local mock endpoint.")
def eval_cmd(instances: str, config_path: str | None, template: str,
             template_dir: str | None, out_path: str, mock: bool) -> None:
    """Collect raw model responses for every instance (resumable via checkpoint)."""
    config = _load_config(config_path)
    store = TemplateStore(template_dir)
    insts = read_instances(instances)
    bundles = [render_for_template(inst, template, store) for inst in insts]

    out = Path(out_path)
    checkpoint = out.with_name(out.stem + ".partial" + out.suffix)

    endpoint: MockChatEndpoint | None = None
    try:
        if mock:
            endpoint = MockChatEndpoint()
            endpoint.start()
            cfg = _endpoint_config(
                config, base_url=endpoint.url,
                model_name=config.get("endpoint", {}).get("model_name", "mock-model"),
                retry_base_delay=0.01,
            )
        else:
            try:
                cfg = _endpoint_config(config)
            except (TypeError, ConfigInvalid) as exc:
                _fail("ConfigInvalid", str(exc))
        responses = run_batch(bundles, cfg, checkpoint_path=checkpoint)
    finally:
        if endpoint is not None:
            endpoint.stop()

    write_responses(out, responses)
    n_errors = sum(1 for r in responses if r.error is not None)
    click.echo(f"wrote {len(responses)} responses to {out} ({n_errors} terminal errors)")


def _parse_scored_samples(
    insts: dict[str, EvalInstance],
    responses: list[RawResponse],
    reward_cfg: RewardConfig,
) -> tuple[list, list[str], int]:
    samples = []
    orphans: list[str] = []
    n_unanswered = 0
    for r in responses:
        inst = insts.get(r.instance_id)
        if inst is None:
            orphans.append(r.instance_id)
            continue
        if r.response_text is None:
            n_unanswered += 1
            continue
        schema = SCHEMA_DIRECT if r.template_id == "direct" else SCHEMA_FULL
        predicted = parse_response(r.response_text, schema, n_steps=inst.n_steps)
        samples.append(score_sample(inst, predicted, reward_cfg))
    return samples, orphans, n_unanswered


@main.command()
@click.argument("instances", type=click.Path(exists=True, dir_okay=False))
@click.argument("responses", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
def score(instances: str, responses: str, config_path: str | None, out_dir: str) -> None:
    """Join responses with ground truth; write scored samples and the metrics report."""
    config = _load_config(config_path)
    reward_cfg = _reward_config(config)
    insts = {i.instance_id: i for i in read_instances(instances)}
    resp = read_responses(responses)
    samples, orphans, n_unanswered = _parse_scored_samples(insts, resp, reward_cfg)
    for orphan in orphans:
        click.echo(f"OrphanResponse: {orphan} (skipped)", err=True)
    if n_unanswered:
        click.echo(f"warning: {n_unanswered} responses carry terminal errors", err=True)

    report = aggregate(samples)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "scored_samples.jsonl", (s.to_dict() for s in samples))
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, ensure_ascii=False)
        f.write("\n")
    _write_report_csv(out / "report.csv", report)
    click.echo(f"scored {len(samples)} samples; report in {out}")


def _fmt_cell(v: float | None) -> str:
    return "" if v is None else f"{v:.4f}"


def _write_report_csv(path: Path, report) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["setting", "nse", "prc", "afrr", "uda", "n_samples", "n_nse",
             "n_trajectories", "n_nan_trajectories", "n_excluded_trajectories"]
        )
        rows = list(sorted(report.per_setting.items())) + [
            ("micro", report.micro),
            ("macro", report.macro),
        ]
        for name, sm in rows:
            d = sm.to_dict()
            writer.writerow(
                [name, _fmt_cell(d["nse_mean"]), _fmt_cell(d["prc_mean"]),
                 _fmt_cell(d["afrr"]), _fmt_cell(d["uda"]), d["n_samples"], d["n_nse"],
                 d["n_trajectories"], d["n_nan_trajectories"], d["n_excluded_trajectories"]]
            )


@main.command()
@click.argument("pairs", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="rewards.jsonl",
              show_default=True)
def rewards(pairs: str, config_path: str | None, out_path: str) -> None:
    """Compute reward components for (raw response, ground truth) pairs.

    Input rows need response_text, gt_ref, gt_score (numbers or "n/a"), and
    n_steps; the output adds per-sample component columns for an RL trainer.
    """
    from .model import ABSTAIN

    config = _load_config(config_path)
    cfg = _reward_config(config)
    rows_out = []
    for row in read_jsonl(pairs):
        gt_ref = ABSTAIN if row["gt_ref"] == "n/a" else int(row["gt_ref"])
        gt_score = ABSTAIN if row["gt_score"] == "n/a" else float(row["gt_score"])
        n_steps = int(row["n_steps"])
        predicted = parse_response(
            row["response_text"], row.get("schema", SCHEMA_FULL), n_steps=n_steps
        )
        (r_format, r_ref, r_score), total = reward_breakdown(
            predicted, gt_ref, gt_score, n_steps, cfg
        )
        rows_out.append(
            {
                **{k: row[k] for k in row if k != "response_text"},
                "r_format": r_format,
                "r_ref": r_ref,
                "r_score": r_score,
                "r_total": total,
                "format_ok": predicted.format_ok,
                "format_violations": list(predicted.format_violations),
            }
        )
    write_jsonl(out_path, rows_out)
    click.echo(f"wrote {len(rows_out)} reward rows to {out_path}")


@main.command()
@click.argument("instances", type=click.Path(exists=True, dir_okay=False))
@click.argument("responses", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="analysis",
              show_default=True)
@click.option("--bins", type=int, default=10, show_default=True)
def analyze(instances: str, responses: str, out_dir: str, bins: int) -> None:
    """Emit score-distribution, error-distribution, and coupling diagnostics."""
    insts = {i.instance_id: i for i in read_instances(instances)}
    resp = read_responses(responses)
    samples, _, _ = _parse_scored_samples(insts, resp, RewardConfig())

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []

    def hist_entry(subset) -> dict[str, Any]:
        h = ana.score_histogram(subset, bins)
        entry = h.to_dict()
        try:
            entry["pattern"] = ana.classify_distribution(h)
        except ana.InsufficientSamples as exc:
            entry["pattern"] = None
            warnings.append(str(exc))
        return entry

    by_setting: dict[str, list] = defaultdict(list)
    for s in samples:
        by_setting[s.setting_key()].append(s)

    histograms = {
        "overall": hist_entry(samples),
        "per_setting": {k: hist_entry(v) for k, v in sorted(by_setting.items())},
        "warnings": warnings,
    }
    with open(out / "histograms.json", "w", encoding="utf-8") as f:
        json.dump(histograms, f, indent=2)
        f.write("\n")

    errors: dict[str, Any] = {"per_setting": {}}
    try:
        errors["overall"] = ana.error_summary(samples).to_dict()
    except ana.EmptyInput:
        errors["overall"] = None
    for k, v in sorted(by_setting.items()):
        try:
            errors["per_setting"][k] = ana.error_summary(v).to_dict()
        except ana.EmptyInput:
            errors["per_setting"][k] = None
    with open(out / "errors.json", "w", encoding="utf-8") as f:
        json.dump(errors, f, indent=2)
        f.write("\n")

    entries = ana.build_coupling_entries(samples, insts)
    coupling = ana.coupling_matrix(entries).to_dict()
    by_traj: dict[str, list] = defaultdict(list)
    for s in samples:
        by_traj[s.trajectory_id].append(s)
    coupling["per_trajectory"] = {
        tid: ana.coupling_matrix(ana.build_coupling_entries(group, insts)).to_dict()
        for tid, group in sorted(by_traj.items())
    }
    with open(out / "coupling.json", "w", encoding="utf-8") as f:
        json.dump(coupling, f, indent=2)
        f.write("\n")

    _write_analysis_csvs(out, histograms, errors, coupling)
    click.echo(f"analysis written to {out}")


def _write_analysis_csvs(out: Path, histograms: dict, errors: dict, coupling: dict) -> None:
    with open(out / "histograms.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["setting", "bin_lo", "bin_hi", "count"])
        entries = [("overall", histograms["overall"])] + sorted(
            histograms["per_setting"].items()
        )
        for name, entry in entries:
            for lo, hi, count in zip(entry["edges"], entry["edges"][1:], entry["counts"]):
                writer.writerow([name, lo, hi, count])
    with open(out / "errors.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["setting", "mean", "median", "p90", "p99", "max"])
        entries = [("overall", errors["overall"])] + sorted(errors["per_setting"].items())
        for name, entry in entries:
            if entry is None:
                continue
            writer.writerow(
                [name, entry["mean"], entry["median"], entry["p90"], entry["p99"], entry["max"]]
            )
    with open(out / "coupling.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        for row in coupling["matrix"]:
            writer.writerow(row)


@main.command("review-serve")
@click.argument("pending", type=click.Path(exists=True, dir_okay=False))
@click.option("--decisions", "decisions_path", type=click.Path(dir_okay=False),
              default="decisions.jsonl", show_default=True)
@click.option("--bind", default="127.0.0.1:8765", show_default=True,
              help="host:port to listen on (port 0 picks a free port).")
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Static directory with the review UI (index.html).")
def review_serve(pending: str, decisions_path: str, bind: str, ui_dir: str | None) -> None:
    """Serve the human review API (and UI) for pending candidates."""
    host, _, port_str = bind.rpartition(":")
    try:
        server = ReviewServer(
            pending, decisions_path, host=host or "127.0.0.1", port=int(port_str), ui_dir=ui_dir
        )
    except OSError as exc:
        _fail("BindFailed", str(exc))
    click.echo(f"review server listening on {server.url}")
    sys.stdout.flush()
    try:
        server.serve()
    except KeyboardInterrupt:
        click.echo("shutting down")


@main.command("apply-review")
@click.argument("pending", type=click.Path(exists=True, dir_okay=False))
@click.argument("decisions", type=click.Path(exists=True, dir_okay=False))
@click.argument("instances", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Output instance file [default: <instances>.reviewed.jsonl]")
def apply_review(pending: str, decisions: str, instances: str, out_path: str | None) -> None:
    """Merge kept candidates into the benchmark as unanswerable vision instances."""
    candidates = read_candidates(pending)
    verdicts = load_decisions(decisions)
    insts = read_instances(instances)
    by_id = {i.instance_id: i for i in insts}
    added = []
    for c in candidates:
        if verdicts.get(c.candidate_id) != "keep":
            continue
        source = by_id.get(c.source_instance_id)
        if source is None:
            click.echo(f"warning: source instance missing for {c.candidate_id}", err=True)
            continue
        added.append(kept_candidate_to_instance(c, source))
    out = Path(out_path) if out_path else Path(instances).with_suffix(".reviewed.jsonl")
    write_instances(out, insts + added)
    click.echo(f"kept {len(added)} of {len(candidates)} candidates; wrote {out}")


if __name__ == "__main__":
    main()
