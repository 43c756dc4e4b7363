use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bandgauge::classifier::{evaluate, save_params, toy_separable_set, train_split, Trained};
use bandgauge::datagen::{load_manifest_samples, make_dataset};
use bandgauge::eval::{classification_report, correlation_report, curve_csv};
use bandgauge::freq::{pws_lfm, sobel_hfm};
use bandgauge::imgcore::to_luma;
use bandgauge::rng::substream;
use bandgauge::subjective::{mos_csv, mos_table, read_ratings};
use bandgauge::{load_image, save_image, score_image};
use log::{error, info};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, DEFAULT_TRAIN_PATCH};

/// 0 on success, 1 for input errors, 2 for numerical failures.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<bandgauge::Error>())
        .any(bandgauge::Error::is_numerical);
    if numerical {
        2
    } else {
        1
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

/// Expands directories into their image files, sorted by name.
fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("listing {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    path: &'a str,
    q: f64,
    banded_patch_count: usize,
    patch_count: usize,
}

pub fn score(cfg: &RunConfig, images: &[PathBuf]) -> Result<u8> {
    let (classifier, score_cfg) = cfg.classifier()?;
    let images = collect_images(images)?;
    if images.is_empty() {
        bail!("no images to score");
    }
    let results: Vec<Result<bandgauge::QualityScore>> = images
        .par_iter()
        .map(|p| {
            let img = load_image(p)?;
            Ok(score_image(&img, &score_cfg, &classifier)?.score)
        })
        .collect();

    let mut out = csv::Writer::from_writer(Vec::new());
    let mut status = 0;
    for (path, result) in images.iter().zip(results) {
        match result {
            Ok(s) => out.serialize(ScoreRow {
                path: &path.to_string_lossy(),
                q: s.q,
                banded_patch_count: s.banded_patches,
                patch_count: s.patch_count,
            })?,
            Err(e) => {
                error!("{}: {e:#}", path.display());
                status = status.max(exit_code(&e));
            }
        }
    }
    let bytes = out.into_inner().map_err(|e| anyhow!("{e}"))?;
    write_or_print(cfg.output.as_deref(), std::str::from_utf8(&bytes)?)?;
    Ok(status)
}

pub fn detect(cfg: &RunConfig, image: &Path, raw: Option<&Path>, dump_maps: Option<&Path>) -> Result<u8> {
    let (classifier, score_cfg) = cfg.classifier()?;
    let img = load_image(image)?;
    let scored = score_image(&img, &score_cfg, &classifier)?;
    let out = match &cfg.output {
        Some(p) => p.clone(),
        None => {
            let stem = image.file_stem().unwrap_or_default().to_string_lossy();
            PathBuf::from(format!("{stem}_map.png"))
        }
    };
    save_image(&scored.map.to_image(), &out)?;
    if let Some(raw) = raw {
        scored.map.write_raw(raw)?;
    }
    if let Some(dir) = dump_maps {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let luma = to_luma(&img);
        save_image(&sobel_hfm(&luma)?.to_image(), dir.join("hfm.pgm"))?;
        save_image(&pws_lfm(&luma, &score_cfg.freq.pws)?.to_image(), dir.join("lfm.pgm"))?;
    }
    info!("{}: Q = {}, map written to {}", image.display(), scored.score.q, out.display());
    println!("{}", scored.score.q);
    Ok(0)
}

pub fn gen(cfg: &RunConfig, n_images: Option<usize>, image_size: Option<usize>, chroma: bool) -> Result<u8> {
    let mut dc = cfg.dataset_config();
    if let Some(n) = n_images {
        dc.n_images = n;
    }
    if let Some(s) = image_size {
        dc.image_size = s;
    }
    dc.options.chroma |= chroma;
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("dataset"));
    let data = make_dataset(&dc)?;
    let manifest = data.write(&dir)?;
    println!(
        "{} images, {} patches ({:.1}% banded) -> {}",
        data.images.len(),
        data.manifest.len(),
        100.0 * data.banded_fraction(),
        manifest.display()
    );
    Ok(0)
}

fn report_path(model: &Path) -> PathBuf {
    model.with_extension("train.csv")
}

pub fn train(cfg: &RunConfig, manifest: Option<&Path>, toy: Option<usize>) -> Result<u8> {
    let tc = cfg.train_config();
    let (trained, test): (Trained, Option<(f64, f64)>) = match (manifest, toy) {
        (Some(path), None) => {
            let [train_set, val_set, test_set] = load_manifest_samples(path, &cfg.freq.pws)?;
            let trained = train_split(&train_set, &val_set, &tc)?;
            let test = (!test_set.is_empty()).then(|| evaluate(&trained.params, &test_set));
            (trained, test)
        }
        (None, Some(n)) => {
            let patch = cfg.patch_size.unwrap_or(DEFAULT_TRAIN_PATCH);
            let train_set = toy_separable_set(n, patch, &mut substream(cfg.seed, "toy/train"));
            let val_set = toy_separable_set(n.div_ceil(5), patch, &mut substream(cfg.seed, "toy/val"));
            (train_split(&train_set, &val_set, &tc)?, None)
        }
        _ => bail!("give exactly one of --manifest or --toy"),
    };
    let model = cfg.output.clone().unwrap_or_else(|| PathBuf::from("model.bgdn"));
    save_params(&trained.params, &model)?;
    let report = report_path(&model);
    trained.report.write_csv(&report)?;
    let last = trained.report.epochs.last().expect("at least one epoch");
    let best = trained.report.best();
    println!("final val_acc {:.4}; best epoch {} val_acc {:.4}", last.val_acc, best.epoch, best.val_acc);
    if let Some((loss, acc)) = test {
        println!("test loss {loss:.4} acc {acc:.4}");
    }
    println!("model -> {}, report -> {}", model.display(), report.display());
    Ok(0)
}

enum Target {
    Mos(Vec<f64>),
    Labels(Vec<bool>),
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "banded" => Some(true),
        "0" | "false" | "non_banded" => Some(false),
        _ => None,
    }
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| names.contains(&h.trim()))
}

const PREDICTION_COLUMNS: [&str; 3] = ["predicted", "q", "score"];

/// Reads a paired CSV with a prediction column and either `mos` or `label`.
fn read_pairs(path: &Path) -> Result<(Vec<f64>, Target)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let pred = column(&headers, &PREDICTION_COLUMNS)
        .ok_or_else(|| anyhow!("{}: needs a predicted, q or score column", path.display()))?;
    let (mos, label) = (column(&headers, &["mos"]), column(&headers, &["label"]));
    if mos.is_none() && label.is_none() {
        bail!("{}: needs a mos or label column", path.display());
    }
    let (mut x, mut y, mut l) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let num = |c: usize| -> Result<f64> {
            row[c]
                .trim()
                .parse()
                .map_err(|_| anyhow!("{}:{line}: `{}` is not a number", path.display(), &row[c]))
        };
        x.push(num(pred)?);
        match (mos, label) {
            (Some(m), _) => y.push(num(m)?),
            (None, Some(c)) => l.push(
                parse_label(&row[c]).ok_or_else(|| anyhow!("{}:{line}: bad label `{}`", path.display(), &row[c]))?,
            ),
            (None, None) => unreachable!(),
        }
    }
    Ok((x, if mos.is_some() { Target::Mos(y) } else { Target::Labels(l) }))
}

/// Joins `score` output with `mos` output on the image path, its file name
/// or its stem.
fn join_scores(scores: &Path, mos: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut table = HashMap::new();
    let mut reader = csv::Reader::from_path(mos).with_context(|| format!("reading {}", mos.display()))?;
    let headers = reader.headers()?.clone();
    let (id, m) = column(&headers, &["image_id"])
        .zip(column(&headers, &["mos"]))
        .ok_or_else(|| anyhow!("{}: needs image_id and mos columns", mos.display()))?;
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let v: f64 = row[m].parse().map_err(|_| anyhow!("{}:{}: bad mos `{}`", mos.display(), i + 2, &row[m]))?;
        table.insert(row[id].to_string(), v);
    }
    let mut reader = csv::Reader::from_path(scores).with_context(|| format!("reading {}", scores.display()))?;
    let headers = reader.headers()?.clone();
    let (p, q) = column(&headers, &["path"])
        .zip(column(&headers, &PREDICTION_COLUMNS))
        .ok_or_else(|| anyhow!("{}: needs path and q columns", scores.display()))?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let path = Path::new(&row[p]);
        let keys = [
            Some(row[p].to_string()),
            path.file_name().map(|s| s.to_string_lossy().into_owned()),
            path.file_stem().map(|s| s.to_string_lossy().into_owned()),
        ];
        let Some(v) = keys.iter().flatten().find_map(|k| table.get(k)) else {
            bail!("{}:{}: no MOS for {}", scores.display(), i + 2, &row[p]);
        };
        x.push(row[q].parse().map_err(|_| anyhow!("{}:{}: bad score `{}`", scores.display(), i + 2, &row[q]))?);
        y.push(*v);
    }
    Ok((x, y))
}

pub fn eval(cfg: &RunConfig, pairs: Option<&Path>, scores: Option<&Path>, mos: Option<&Path>) -> Result<u8> {
    let (x, target) = match (pairs, scores, mos) {
        (Some(p), None, None) => read_pairs(p)?,
        (None, Some(s), Some(m)) => {
            let (x, y) = join_scores(s, m)?;
            (x, Target::Mos(y))
        }
        _ => bail!("give either a paired CSV or both --scores and --mos"),
    };
    let dir = cfg.output.as_deref();
    if let Some(d) = dir {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let report = match target {
        Target::Mos(y) => correlation_report(&x, &y)?,
        Target::Labels(l) => {
            let (report, curves) = classification_report(&x, &l)?;
            if let Some(d) = dir {
                std::fs::write(d.join("roc.csv"), curve_csv(&curves.roc, ("fpr", "tpr")))?;
                std::fs::write(d.join("pr.csv"), curve_csv(&curves.pr, ("recall", "precision")))?;
            }
            report
        }
    };
    if let Some(d) = dir {
        std::fs::write(d.join("report.csv"), report.to_csv())?;
    }
    print!("{}", report.to_table());
    Ok(0)
}

pub fn mos(cfg: &RunConfig, ratings: &Path) -> Result<u8> {
    let sets = read_ratings(ratings)?;
    let rows = mos_table(&sets, &cfg.outlier)?;
    write_or_print(cfg.output.as_deref(), &mos_csv(&rows))?;
    Ok(0)
}
