use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use tableforge::bbox_complete::complete_dataset;
use tableforge::dataset::{combine, stats, write_jsonl, DatasetStats, Format, SizeBounds, SplitRatios, TableRecord};
use tableforge::geometry::{BoxClass, CellBox};
use tableforge::losses::selftest;
use tableforge::map::{voc_map, Detection};
use tableforge::postproc::{postprocess, PdfCell, PostprocConfig, Prediction};
use tableforge::structure::{parse_html, TagSequence};
use tableforge::synth::{build_pool, gen_dataset, write_dataset, DatasetSpec, Flavor};
use tableforge::teds::{summarize, teds_with, EditCostModel, TableTree};

use crate::io::{create, emit, load_records, read_objects, require_file, string_field, usage, write_json_file};
use crate::{Command, RunConfig, DEFAULT_SEED};

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<u8> {
    match cmd {
        Command::Teds(a) => teds_cmd(a, cfg),
        Command::EvalDetection(a) => eval_detection(a, cfg),
        Command::Stats(a) => stats_cmd(a, cfg),
        Command::Convert(a) => convert(a, cfg),
        Command::Combine(a) => combine_cmd(a, cfg),
        Command::CompleteBboxes(a) => complete(a, cfg),
        Command::Postprocess(a) => postprocess_cmd(a, cfg),
        Command::Synth(a) => synth(a, cfg),
        Command::BuildPool(a) => pool(a, cfg),
        Command::Losses(a) => losses(a, cfg),
    }
}

fn parse_format(s: &str) -> Result<Format> {
    s.parse().map_err(|e: tableforge::dataset::DatasetError| crate::io::UsageError(e.to_string()).into())
}

// ---------------------------------------------------------------- teds

#[derive(Debug, Args)]
pub struct TedsArgs {
    /// Ground truth: canonical records, or objects with "id" and "html".
    #[arg(long)]
    pub gt: PathBuf,
    /// Predictions in either of the ground-truth layouts, matched by id.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ignore cell text.
    #[arg(long)]
    pub structure_only: bool,
    /// NFKC-normalise cell text before comparing.
    #[arg(long)]
    pub normalize_unicode: bool,
    /// Write per-table scores as JSONL.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

fn load_trees(path: &Path) -> Result<Vec<(String, TableTree)>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, v) in read_objects(path)? {
        let id = string_field(&v, "id", path, line)?;
        let tree = match v.get("html") {
            Some(Value::String(html)) => {
                TableTree::from_html(html).map_err(|e| anyhow!("{}:{line}: {e}", path.display()))?
            }
            _ => {
                let rec = TableRecord::from_json_line(&v.to_string())
                    .map_err(|e| anyhow!("{}:{line}: {e}", path.display()))?;
                TableTree::from_tags(rec.tags(), Some(&rec.cell_text()))
            }
        };
        if !seen.insert(id.clone()) {
            bail!("{}:{line}: duplicate id {id:?}", path.display());
        }
        out.push((id, tree));
    }
    Ok(out)
}

fn teds_cmd(a: TedsArgs, cfg: &RunConfig) -> Result<u8> {
    let gt = load_trees(&a.gt)?;
    let pred: HashMap<String, TableTree> = load_trees(&a.pred)?.into_iter().collect();
    let cost = EditCostModel {
        structure_only: a.structure_only,
        normalize_unicode: a.normalize_unicode,
        ..EditCostModel::default()
    };
    let gt_ids: HashSet<&str> = gt.iter().map(|(id, _)| id.as_str()).collect();
    let unmatched = pred.keys().filter(|k| !gt_ids.contains(k.as_str())).count();
    if unmatched > 0 {
        eprintln!("{unmatched} prediction(s) have no ground truth and are ignored");
    }
    let scored: Vec<(String, tableforge::Complexity, Option<f64>)> = gt
        .par_iter()
        .map(|(id, g)| {
            let s = pred.get(id).map(|p| teds_with(g, p, &cost)).transpose()?;
            Ok((id.clone(), g.complexity(), s))
        })
        .collect::<Result<_, tableforge::teds::TedsError>>()?;
    let missing = scored.iter().filter(|s| s.2.is_none()).count();
    if let Some(path) = &a.scores {
        let mut w = create(path)?;
        for (id, c, s) in &scored {
            writeln!(w, "{}", json!({"id": id, "complexity": c, "teds": s.unwrap_or(0.0), "missing": s.is_none()}))?;
        }
        w.flush()?;
    }
    let pairs: Vec<_> = scored.iter().map(|(_, c, s)| (*c, s.unwrap_or(0.0))).collect();
    let summary = summarize(&pairs);
    let mut v = serde_json::to_value(&summary)?;
    v["missing"] = json!(missing);
    emit(&v, cfg)?;
    Ok(0)
}

// ---------------------------------------------------------------- eval-detection

#[derive(Debug, Args)]
pub struct EvalDetectionArgs {
    /// Objects {"id", "detections": [{"bbox": [x0,y0,x1,y1], "score", "class"?}]}.
    #[arg(long)]
    pub pred: PathBuf,
    /// Canonical records; cells with boxes of class content are the targets.
    #[arg(long)]
    pub gt: PathBuf,
    /// IoU needed for a true positive.
    #[arg(long, default_value_t = tableforge::map::DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
}

fn parse_box(v: &Value, klass: BoxClass) -> Result<CellBox> {
    let arr: [f64; 4] = serde_json::from_value(v.clone()).context("bbox must be [x0, y0, x1, y1]")?;
    Ok(CellBox::from_array(arr, klass)?)
}

fn parse_class(v: Option<&Value>) -> Result<BoxClass> {
    match v.and_then(Value::as_str) {
        None | Some("content") => Ok(BoxClass::Content),
        Some("empty") => Ok(BoxClass::Empty),
        Some(other) => bail!("unknown class {other:?}"),
    }
}

fn eval_detection(a: EvalDetectionArgs, cfg: &RunConfig) -> Result<u8> {
    if !(a.iou > 0.0 && a.iou <= 1.0) {
        return usage(format!("--iou must be in (0, 1], got {}", a.iou));
    }
    let gt = load_records(&a.gt, Format::CanonicalJsonl, cfg)?;
    if !gt.failures.is_empty() {
        bail!("{} invalid ground-truth record(s)", gt.failures.len());
    }
    let index: HashMap<&str, usize> = gt.records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut dets: Vec<Vec<Detection>> = vec![Vec::new(); gt.records.len()];
    let mut n_dets = 0;
    for (line, v) in read_objects(&a.pred)? {
        let id = string_field(&v, "id", &a.pred, line)?;
        let Some(&img) = index.get(id.as_str()) else {
            eprintln!("{}:{line}: no ground truth for {id:?}, ignored", a.pred.display());
            continue;
        };
        let list = v
            .get("detections")
            .and_then(Value::as_array)
            .ok_or_else(|| anyhow!("{}:{line}: missing \"detections\"", a.pred.display()))?;
        for d in list {
            let parsed = (|| -> Result<Detection> {
                let klass = parse_class(d.get("class"))?;
                let bbox = parse_box(d.get("bbox").ok_or_else(|| anyhow!("missing bbox"))?, klass)?;
                let score = d
                    .get("score")
                    .and_then(Value::as_f64)
                    .filter(|s| s.is_finite())
                    .ok_or_else(|| anyhow!("missing or non-finite score"))?;
                Ok(Detection { bbox, score, klass })
            })()
            .with_context(|| format!("{}:{line}", a.pred.display()))?;
            dets[img].push(parsed);
            n_dets += 1;
        }
    }
    let gts: Vec<Vec<CellBox>> = gt.records.iter().map(|r| r.cells().iter().filter_map(|c| c.bbox).collect()).collect();
    let n_gt: usize = gts.iter().flatten().filter(|b| b.klass == BoxClass::Content).count();
    let map = voc_map(&dets, &gts, a.iou);
    emit(&json!({"map": map, "n_images": gt.records.len(), "n_gt": n_gt, "n_detections": n_dets, "iou": a.iou}), cfg)?;
    Ok(0)
}

// ---------------------------------------------------------------- stats / convert / combine

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// canonical-jsonl or pubtabnet-jsonl.
    #[arg(long, default_value = "canonical-jsonl")]
    pub format: String,
}

#[derive(Serialize)]
struct StatsOut {
    #[serde(flatten)]
    stats: DatasetStats,
    rejected: usize,
}

fn stats_cmd(a: StatsArgs, cfg: &RunConfig) -> Result<u8> {
    let got = load_records(&a.input, parse_format(&a.format)?, cfg)?;
    emit(&StatsOut { stats: stats(&got.records), rejected: got.failures.len() }, cfg)?;
    Ok(0)
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Input format: pubtabnet-jsonl or canonical-jsonl.
    #[arg(long, default_value = "pubtabnet-jsonl")]
    pub from: String,
    /// Canonical JSONL output.
    #[arg(long)]
    pub out: PathBuf,
    /// Exit 0 even when some input records are rejected.
    #[arg(long)]
    pub skip_invalid: bool,
}

fn convert(a: ConvertArgs, cfg: &RunConfig) -> Result<u8> {
    let got = load_records(&a.input, parse_format(&a.from)?, cfg)?;
    let mut w = create(&a.out)?;
    write_jsonl(&got.records, &mut w)?;
    w.flush()?;
    emit(&json!({"records": got.records.len(), "rejected": got.failures.len(), "failures": got.failures}), cfg)?;
    Ok(if got.failures.is_empty() || a.skip_invalid { 0 } else { 1 })
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    /// Canonical JSONL inputs, in order.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Source name per input (default: file stem).
    #[arg(long, num_args = 1..)]
    pub source: Vec<String>,
    /// Reassign splits by id hash with these train,test,val ratios.
    #[arg(long)]
    pub resplit: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn combine_cmd(a: CombineArgs, cfg: &RunConfig) -> Result<u8> {
    if !a.source.is_empty() && a.source.len() != a.inputs.len() {
        return usage(format!("{} --source names for {} inputs", a.source.len(), a.inputs.len()));
    }
    let resplit = match &a.resplit {
        Some(s) => Some(s.parse::<SplitRatios>().map_err(|e| crate::io::UsageError(format!("--resplit: {e}")))?),
        None => None,
    };
    let mut streams = Vec::new();
    for (i, path) in a.inputs.iter().enumerate() {
        let got = load_records(path, Format::CanonicalJsonl, cfg)?;
        if !got.failures.is_empty() {
            bail!("{}: {} invalid record(s)", path.display(), got.failures.len());
        }
        let name = a.source.get(i).cloned().unwrap_or_else(|| {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("input{i}"))
        });
        streams.push((name, got.records));
    }
    let (records, report) = combine(streams, resplit);
    let mut w = create(&a.out)?;
    write_jsonl(&records, &mut w)?;
    w.flush()?;
    emit(&report, cfg)?;
    Ok(0)
}

// ---------------------------------------------------------------- complete-bboxes

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Completion report (JSON).
    #[arg(long)]
    pub report: PathBuf,
    /// canonical-jsonl or pubtabnet-jsonl.
    #[arg(long, default_value = "canonical-jsonl")]
    pub format: String,
    /// Keep tables of every size.
    #[arg(long)]
    pub no_size_filter: bool,
    /// Largest row count kept by the size filter.
    #[arg(long, default_value_t = 20)]
    pub max_rows: usize,
    /// Largest column count kept by the size filter.
    #[arg(long, default_value_t = 10)]
    pub max_cols: usize,
}

fn complete(a: CompleteArgs, cfg: &RunConfig) -> Result<u8> {
    if a.max_rows == 0 || a.max_cols == 0 {
        return usage("--max-rows and --max-cols must be positive");
    }
    let got = load_records(&a.input, parse_format(&a.format)?, cfg)?;
    let bounds = (!a.no_size_filter).then_some(SizeBounds { min: (1, 1), max: (a.max_rows, a.max_cols) });
    let (records, report) = complete_dataset(got.records, bounds);
    let mut w = create(&a.out)?;
    write_jsonl(&records, &mut w)?;
    w.flush()?;
    write_json_file(&a.report, &report)?;
    if cfg.verbose > 0 {
        for d in &report.dropped {
            eprintln!("dropped {}: {}", d.id, d.reason);
        }
    }
    emit(
        &json!({"input": report.input, "output": report.output, "dropped": report.dropped.len(), "rejected": got.failures.len()}),
        cfg,
    )?;
    Ok(0)
}

// ---------------------------------------------------------------- postprocess

#[derive(Debug, Args)]
pub struct PostprocessArgs {
    /// Objects {"id", "structure": {"tokens": [...]} or "html", "bboxes": [[x0,y0,x1,y1], ...]}.
    #[arg(long)]
    pub pred: PathBuf,
    /// Objects {"id", "cells": [{"bbox": [x0,y0,x1,y1], "text"}]}.
    #[arg(long)]
    pub pdfcells: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum IoU between a predicted box and a PDF cell to match.
    #[arg(long, default_value_t = tableforge::postproc::DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
    /// Cap on correction rounds.
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Directory for one audit log per table.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

fn parse_prediction(v: &Value) -> Result<Prediction> {
    let tags = match (v.get("structure"), v.get("html")) {
        (Some(s), _) => {
            let tokens: Vec<String> = serde_json::from_value(s.get("tokens").cloned().unwrap_or(Value::Null))
                .context("structure.tokens must be a list of strings")?;
            TagSequence::from_strings(&tokens)?
        }
        (None, Some(Value::String(html))) => parse_html(html)?,
        _ => bail!("missing \"structure\" or \"html\""),
    };
    let boxes = v.get("bboxes").and_then(Value::as_array).ok_or_else(|| anyhow!("missing \"bboxes\""))?;
    let boxes = boxes.iter().map(|b| parse_box(b, BoxClass::Content)).collect::<Result<Vec<_>>>()?;
    Ok(Prediction::new(&tags, boxes)?)
}

fn parse_pdf_cells(v: &Value) -> Result<Vec<PdfCell>> {
    let cells = v.get("cells").and_then(Value::as_array).ok_or_else(|| anyhow!("missing \"cells\""))?;
    cells
        .iter()
        .map(|c| {
            let bbox = parse_box(c.get("bbox").ok_or_else(|| anyhow!("cell without bbox"))?, BoxClass::Content)?;
            let text = c.get("text").and_then(Value::as_str).unwrap_or_default();
            Ok(PdfCell::new(bbox, text))
        })
        .collect()
}

fn audit_name(id: &str) -> String {
    id.chars().map(|c| if c.is_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn postprocess_cmd(a: PostprocessArgs, cfg: &RunConfig) -> Result<u8> {
    if !(a.iou_threshold > 0.0 && a.iou_threshold <= 1.0) {
        return usage(format!("--iou-threshold must be in (0, 1], got {}", a.iou_threshold));
    }
    if a.max_rounds == Some(0) {
        return usage("--max-rounds must be at least 1");
    }
    require_file(&a.pred)?;
    require_file(&a.pdfcells)?;
    let mut preds = Vec::new();
    for (line, v) in read_objects(&a.pred)? {
        let id = string_field(&v, "id", &a.pred, line)?;
        let p = parse_prediction(&v).with_context(|| format!("{}:{line}", a.pred.display()))?;
        preds.push((id, p));
    }
    let mut pdf: HashMap<String, Vec<PdfCell>> = HashMap::new();
    for (line, v) in read_objects(&a.pdfcells)? {
        let id = string_field(&v, "id", &a.pdfcells, line)?;
        let cells = parse_pdf_cells(&v).with_context(|| format!("{}:{line}", a.pdfcells.display()))?;
        if pdf.insert(id.clone(), cells).is_some() {
            bail!("{}:{line}: duplicate id {id:?}", a.pdfcells.display());
        }
    }
    let pcfg = PostprocConfig { iou_threshold: a.iou_threshold, max_rounds: a.max_rounds };
    let results: Vec<Result<(Value, Value), String>> = preds
        .par_iter()
        .map(|(id, p)| {
            let cells = pdf.get(id).ok_or_else(|| "no PDF cells for this id".to_string())?;
            let m = postprocess(p, cells, &pcfg).map_err(|e| e.to_string())?;
            let tags = m.tags().map_err(|e| e.to_string())?;
            let html = m.to_html(cells).map_err(|e| e.to_string())?;
            let text = m.cell_text(cells);
            let out_cells: Vec<Value> = (0..m.grid.cells().len())
                .map(|i| json!({"bbox": m.boxes[i].to_array(), "text": text[i], "pdf_cells": m.content[i], "origin": m.origin[i]}))
                .collect();
            let dropped: Vec<Value> =
                m.dropped.iter().map(|d| json!({"pdf": d.pdf, "column": d.column, "text": cells[d.pdf].text})).collect();
            let rec = json!({
                "id": id,
                "html": html,
                "structure": {"tokens": tags.to_strings()},
                "cells": out_cells,
                "dropped_pdf_cells": dropped,
                "rounds": m.rounds,
            });
            Ok((rec, json!({"id": id, "audit": m.audit})))
        })
        .collect();
    if let Some(dir) = &a.audit {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = create(&a.out)?;
    let mut failed = Vec::new();
    let mut written = 0;
    for ((id, _), r) in preds.iter().zip(results) {
        match r {
            Ok((rec, audit)) => {
                writeln!(w, "{rec}")?;
                written += 1;
                if let Some(dir) = &a.audit {
                    write_json_file(&dir.join(format!("{}.json", audit_name(id))), &audit)?;
                }
            }
            Err(reason) => {
                if cfg.verbose > 0 {
                    eprintln!("{id}: {reason}");
                }
                failed.push(json!({"id": id, "reason": reason}));
            }
        }
    }
    w.flush()?;
    let unused = pdf.keys().filter(|k| !preds.iter().any(|(id, _)| id == *k)).count();
    emit(
        &json!({"records": preds.len(), "written": written, "failed": failed, "pdf_without_prediction": unused}),
        cfg,
    )?;
    Ok(0)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset spec JSON. Either a full spec, or {"flavor": name, "size": n, ...}
    /// where the remaining keys override the flavor preset.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

fn load_spec(path: &Path) -> Result<DatasetSpec> {
    require_file(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))?;
    let obj = v.as_object_mut().ok_or_else(|| anyhow!("{}: expected a JSON object", path.display()))?;
    let spec_value = match obj.remove("flavor") {
        Some(Value::String(name)) => {
            let flavor: Flavor = name.parse().map_err(|e| anyhow!("{}: {e}", path.display()))?;
            let size = match obj.get("size") {
                Some(s) => s.as_u64().ok_or_else(|| anyhow!("size must be a non-negative integer"))? as usize,
                None => 1000,
            };
            let mut base = serde_json::to_value(DatasetSpec::flavor(flavor, size))?;
            let base_obj = base.as_object_mut().expect("spec serialises to an object");
            for (k, x) in obj.iter() {
                if !base_obj.contains_key(k) {
                    bail!("{}: unknown spec key {k:?}", path.display());
                }
                base_obj.insert(k.clone(), x.clone());
            }
            base
        }
        Some(_) => bail!("{}: flavor must be a string", path.display()),
        None => v,
    };
    let spec: DatasetSpec =
        serde_json::from_value(spec_value).with_context(|| format!("{}: invalid spec", path.display()))?;
    Ok(spec)
}

fn synth(a: SynthArgs, cfg: &RunConfig) -> Result<u8> {
    let spec = load_spec(&a.spec)?;
    let (generated, manifest) = gen_dataset(&spec, a.seed)?;
    write_dataset(&a.out, &generated, &manifest).with_context(|| format!("writing {}", a.out.display()))?;
    emit(
        &json!({
            "out": a.out,
            "seed": a.seed,
            "generated": manifest.generated,
            "counts": manifest.counts,
            "requested_coverage_mean": manifest.requested_coverage_mean,
            "achieved_coverage_mean": manifest.achieved_coverage_mean,
            "failures": manifest.failures,
        }),
        cfg,
    )?;
    Ok(if manifest.failures.is_empty() { 0 } else { 1 })
}

// ---------------------------------------------------------------- build-pool

#[derive(Debug, Args)]
pub struct BuildPoolArgs {
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// canonical-jsonl or pubtabnet-jsonl.
    #[arg(long, default_value = "canonical-jsonl")]
    pub format: String,
    /// Number of terms to keep.
    #[arg(long, default_value_t = 200)]
    pub top_k: usize,
    /// Write the pool as a JSON array instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn pool(a: BuildPoolArgs, cfg: &RunConfig) -> Result<u8> {
    let format = parse_format(&a.format)?;
    let mut records = Vec::new();
    for path in &a.inputs {
        records.extend(load_records(path, format, cfg)?.records);
    }
    let terms = build_pool(&records, a.top_k);
    match &a.out {
        Some(path) => {
            write_json_file(path, &terms)?;
            emit(&json!({"records": records.len(), "terms": terms.len(), "out": path}), cfg)?;
        }
        None => emit(&terms, cfg)?,
    }
    Ok(0)
}

// ---------------------------------------------------------------- losses

#[derive(Debug, Args)]
pub struct LossesArgs {
    /// Check analytic gradients against central finite differences.
    #[arg(long)]
    pub selftest: bool,
    /// Random inputs per loss.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

fn losses(a: LossesArgs, cfg: &RunConfig) -> Result<u8> {
    if !a.selftest {
        return usage("nothing to do: pass --selftest");
    }
    if a.samples == 0 {
        return usage("--samples must be positive");
    }
    let report = selftest(a.samples, a.seed);
    emit(&report, cfg)?;
    Ok(if report.passed { 0 } else { 1 })
}
