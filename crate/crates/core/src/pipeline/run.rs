use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{select_seed_frames, RunConfig};
use crate::error::{Error, Result};
use crate::keyframes::dedup;
use crate::memory::propagate;
use crate::metrics::{aggregate, emit_report, score_image, ApMode, MetricReport, MetricValues};
use crate::raster::{load_frame, load_mask, save_mask, Frame, MaskMap};
use crate::segmenter::{init_weights, load_weights, segment, SegmenterConfig, SegmenterWeights};

/// Fixed stage names, in the order they run.
pub const STAGES: [&str; 3] = ["dedup", "seed_segmentation", "propagation"];

/// Wall-clock timings of one run, in milliseconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimingReport {
    pub dedup_ms: f64,
    pub seed_ms: f64,
    pub propagation_ms: f64,
    pub frame_ms: Vec<f64>,
    pub seeds: usize,
}

impl TimingReport {
    pub fn frames(&self) -> usize {
        self.frame_ms.len()
    }

    pub fn stage_ms(&self) -> [(&'static str, f64); 3] {
        [
            (STAGES[0], self.dedup_ms),
            (STAGES[1], self.seed_ms),
            (STAGES[2], self.propagation_ms),
        ]
    }

    /// Seed-segmentation time per seeded frame.
    pub fn seed_ms_per_frame(&self) -> f64 {
        self.seed_ms / self.seeds.max(1) as f64
    }

    /// Propagation time per frame, over every frame of the sequence.
    pub fn propagation_ms_per_frame(&self) -> f64 {
        self.propagation_ms / self.frames().max(1) as f64
    }

    pub fn total_ms(&self) -> f64 {
        self.dedup_ms + self.seed_ms + self.propagation_ms
    }

    /// `record,key,value` rows: the three stages, the frame and seed
    /// counts, then one row per frame.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("record,key,value\n");
        for (name, ms) in self.stage_ms() {
            let _ = writeln!(out, "stage,{name},{ms:.3}");
        }
        let _ = writeln!(out, "count,frames,{}", self.frames());
        let _ = writeln!(out, "count,seeds,{}", self.seeds);
        for (i, ms) in self.frame_ms.iter().enumerate() {
            let _ = writeln!(out, "frame,{i},{ms:.3}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::MalformedHeader(format!("timing row {line:?}"));
        let mut lines = text.lines();
        if lines.next() != Some("record,key,value") {
            return Err(Error::MalformedHeader("timing header".into()));
        }
        let mut report = TimingReport::default();
        let mut seen = BTreeSet::new();
        for line in lines {
            let mut cols = line.split(',');
            let (Some(record), Some(key), Some(value), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(bad(line));
            };
            let v: f64 = value.parse().map_err(|_| bad(line))?;
            match (record, key) {
                ("stage", "dedup") => report.dedup_ms = v,
                ("stage", "seed_segmentation") => report.seed_ms = v,
                ("stage", "propagation") => report.propagation_ms = v,
                ("count", "seeds") => report.seeds = v as usize,
                ("count", "frames") => {}
                ("frame", i) if i.parse() == Ok(report.frame_ms.len()) => report.frame_ms.push(v),
                _ => return Err(bad(line)),
            }
            if record == "stage" {
                seen.insert(key.to_string());
            }
        }
        if seen.len() != STAGES.len() {
            return Err(Error::MalformedHeader(
                "timing report is missing a stage".into(),
            ));
        }
        Ok(report)
    }
}

/// Output of [`run_segment`] and [`segment_frames`].
#[derive(Debug, Clone)]
pub struct SegmentRun {
    /// Input frame file stems, in processing order; empty for in-memory
    /// frames.
    pub names: Vec<String>,
    pub masks: Vec<MaskMap>,
    pub keyframes: Vec<usize>,
    pub seeds: Vec<usize>,
    pub timing: TimingReport,
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Frame directory of a scene: `<scene>/frames` if present, else the scene
/// directory itself.
pub fn frames_dir(scene: &Path) -> PathBuf {
    let nested = scene.join("frames");
    if nested.is_dir() {
        nested
    } else {
        scene.to_path_buf()
    }
}

/// Loads a scene's `.ppm` frames sorted by file name.
pub fn load_scene(scene: &Path) -> Result<(Vec<String>, Vec<Frame>)> {
    let paths = files_with_ext(&frames_dir(scene), "ppm")?;
    if paths.is_empty() {
        return Err(Error::Empty("scene has no .ppm frames"));
    }
    let frames = paths.iter().map(load_frame).collect::<Result<Vec<_>>>()?;
    Ok((paths.iter().map(|p| stem(p)).collect(), frames))
}

/// Weights named by the config, or seeded fresh ones.
pub fn load_run_weights(config: &RunConfig) -> Result<SegmenterWeights<f64>> {
    match &config.weights {
        Some(path) => {
            let w = load_weights(path)?;
            if w.config.patch_size != config.patch_size {
                return Err(Error::ConfigMismatch(format!(
                    "weights use patch size {}, run asks for {}",
                    w.config.patch_size, config.patch_size
                )));
            }
            Ok(w)
        }
        None => init_weights(SegmenterConfig {
            patch_size: config.patch_size,
            seed: config.seed,
            ..SegmenterConfig::default()
        }),
    }
}

/// Segments and propagates in-memory frames.
pub fn segment_frames(
    frames: &[Frame],
    weights: &SegmenterWeights<f64>,
    config: &RunConfig,
) -> Result<SegmentRun> {
    config.validate()?;
    let start = Instant::now();
    let keyframes = dedup(frames, config.hamming_threshold)?;
    let dedup_ms = start.elapsed().as_secs_f64() * 1e3;
    let seeds = select_seed_frames(&keyframes, config.k)?;

    let start = Instant::now();
    let mut seed_masks = BTreeMap::new();
    for &i in &seeds {
        let (_, mask) = segment(&frames[i], weights)?;
        seed_masks.insert(i, mask);
    }
    let seed_ms = start.elapsed().as_secs_f64() * 1e3;

    let start = Instant::now();
    let prop = propagate(frames, &seed_masks, weights, config.memory)?;
    let propagation_ms = start.elapsed().as_secs_f64() * 1e3;

    let timing = TimingReport {
        dedup_ms,
        seed_ms,
        propagation_ms,
        frame_ms: prop.frame_ms,
        seeds: seeds.len(),
    };
    Ok(SegmentRun {
        names: Vec::new(),
        masks: prop.masks,
        keyframes: keyframes.kept,
        seeds,
        timing,
    })
}

/// Full run: load, dedup, seed, propagate, then write `masks/<name>.pgm`
/// for every frame and `timing.csv` under the output directory.
pub fn run_segment(config: &RunConfig) -> Result<SegmentRun> {
    config.validate()?;
    let weights = load_run_weights(config)?;
    let (names, frames) = load_scene(&config.scene)?;
    let mut run = segment_frames(&frames, &weights, config)?;
    run.names = names;

    let mask_dir = config.output.join("masks");
    fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;
    for (name, mask) in run.names.iter().zip(&run.masks) {
        save_mask(mask, mask_dir.join(format!("{name}.pgm")))?;
    }
    let timing_path = config.output.join("timing.csv");
    fs::write(&timing_path, run.timing.to_csv()).map_err(|e| Error::io(&timing_path, e))?;
    Ok(run)
}

fn collect_masks(root: &Path, rel: &Path, out: &mut BTreeSet<PathBuf>) -> Result<()> {
    let dir = root.join(rel);
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let path = entry.path();
        let name = rel.join(entry.file_name());
        if path.is_dir() {
            collect_masks(root, &name, out)?;
        } else if path.extension().is_some_and(|x| x == "pgm") {
            out.insert(name);
        }
    }
    Ok(())
}

fn scene_id(rel: &Path, root: &Path) -> String {
    let mut parent = rel.parent().map(Path::to_path_buf).unwrap_or_default();
    if parent.file_name().is_some_and(|n| n == "masks") {
        parent.pop();
    }
    if parent.as_os_str().is_empty() {
        root.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| ".".into())
    } else {
        parent.to_string_lossy().into_owned()
    }
}

/// Scores every `.pgm` under `pred` against the file with the same
/// relative path under `gt`. Masks are grouped into scenes by directory
/// (`<scene>/masks/*.pgm` or `<scene>/*.pgm`); a flat directory is a single
/// scene. The class set is every label seen in either tree.
pub fn evaluate_dirs(pred: &Path, gt: &Path, mode: ApMode) -> Result<MetricReport> {
    let mut p = BTreeSet::new();
    let mut g = BTreeSet::new();
    collect_masks(pred, Path::new(""), &mut p)?;
    collect_masks(gt, Path::new(""), &mut g)?;
    if p.is_empty() && g.is_empty() {
        return Err(Error::Empty("no masks to evaluate"));
    }
    let unpaired: Vec<String> = p
        .symmetric_difference(&g)
        .map(|r| r.to_string_lossy().into_owned())
        .collect();
    if !unpaired.is_empty() {
        return Err(Error::Unpaired(unpaired));
    }
    let mut pairs = Vec::with_capacity(p.len());
    let mut max_class = 0;
    for rel in &p {
        let pm = load_mask(pred.join(rel))?;
        let gm = load_mask(gt.join(rel))?;
        max_class = max_class.max(pm.max_class()).max(gm.max_class());
        pairs.push((rel, pm, gm));
    }
    let classes: Vec<u16> = (0..=max_class).collect();
    let mut scenes: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for (rel, pm, gm) in pairs {
        let id = rel.with_extension("").to_string_lossy().into_owned();
        let score = score_image::<f64>(id, &pm, None, &gm, &classes, mode)?;
        scenes.entry(scene_id(rel, pred)).or_default().push(score);
    }
    aggregate(scenes.into_iter().collect(), classes)
}

/// [`evaluate_dirs`] plus writing the CSV report to `out`.
pub fn run_eval(pred: &Path, gt: &Path, out: &Path, mode: ApMode) -> Result<MetricReport> {
    let report = evaluate_dirs(pred, gt, mode)?;
    emit_report(&report, out)?;
    Ok(report)
}

/// One row of the seed-count ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub k: usize,
    pub values: MetricValues,
    /// Wall time of the segmentation run (dedup, seeding, propagation).
    pub wall_ms: f64,
}

pub const ABLATION_KS: [usize; 4] = [1, 3, 6, 9];

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
    let mut out = String::from("k,map,recall,miou,macc,wall_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            r.k,
            cell(r.values.map),
            cell(r.values.recall),
            cell(r.values.miou),
            cell(r.values.macc),
            r.wall_ms
        );
    }
    out
}

/// Runs the scene once per seed count, each into `<output>/k<K>/`, scores
/// it against the ground truth and writes `<output>/ablation.csv`.
pub fn run_ablation(config: &RunConfig, ks: &[usize]) -> Result<Vec<AblationRow>> {
    if ks.is_empty() {
        return Err(Error::Empty("no seed counts to run"));
    }
    let gt = config.gt_dir();
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let run_config = RunConfig {
            k,
            output: config.output.join(format!("k{k}")),
            ..config.clone()
        };
        let run = run_segment(&run_config)?;
        let report = run_eval(
            &run_config.output.join("masks"),
            &gt,
            &run_config.output.join("report.csv"),
            ApMode::Ranked,
        )?;
        rows.push(AblationRow {
            k,
            values: report.overall,
            wall_ms: run.timing.total_ms(),
        });
    }
    let path = config.output.join("ablation.csv");
    fs::write(&path, ablation_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_csv_round_trip() {
        let t = TimingReport {
            dedup_ms: 1.5,
            seed_ms: 20.25,
            propagation_ms: 100.0,
            frame_ms: vec![0.5, 2.0, 3.125],
            seeds: 1,
        };
        let text = t.to_csv();
        assert!(text.starts_with("record,key,value\nstage,dedup,1.500\nstage,seed_segmentation,20.250\nstage,propagation,100.000\n"));
        assert_eq!(TimingReport::from_csv(&text).unwrap(), t);
        assert!(TimingReport::from_csv("record,key,value\nstage,dedup,1\n").is_err());
        assert!((t.propagation_ms_per_frame() - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.seed_ms_per_frame(), 20.25);
    }

    #[test]
    fn scene_ids() {
        let root = Path::new("/tmp/preds");
        assert_eq!(scene_id(Path::new("a/masks/0001.pgm"), root), "a");
        assert_eq!(scene_id(Path::new("b/0001.pgm"), root), "b");
        assert_eq!(scene_id(Path::new("0001.pgm"), root), "preds");
    }
}
