use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::keyframes::{KeyframeSelection, DEFAULT_HAMMING_THRESHOLD};
use crate::memory::MemoryParams;

/// Parameters of one segmentation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub output: PathBuf,
    /// Weight file; freshly initialised weights are used when absent.
    pub weights: Option<PathBuf>,
    /// Ground-truth masks for evaluation; `<scene>/gt` when absent.
    pub gt: Option<PathBuf>,
    /// Number of seed frames.
    pub k: usize,
    pub hamming_threshold: u32,
    pub patch_size: usize,
    pub memory: MemoryParams,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: PathBuf::new(),
            output: PathBuf::new(),
            weights: None,
            gt: None,
            k: 1,
            hamming_threshold: DEFAULT_HAMMING_THRESHOLD,
            patch_size: 8,
            memory: MemoryParams::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.hamming_threshold > 64 {
            return Err(Error::InvalidConfig(format!(
                "hamming_threshold {} outside 0..=64",
                self.hamming_threshold
            )));
        }
        if self.patch_size == 0 {
            return Err(Error::InvalidConfig("patch_size must be positive".into()));
        }
        self.memory.validate()
    }

    pub fn gt_dir(&self) -> PathBuf {
        self.gt.clone().unwrap_or_else(|| self.scene.join("gt"))
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<N: std::str::FromStr>(key: &str, value: &str) -> Result<N> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("cannot parse {key} = {value:?}")))
        }
        match key {
            "scene" => self.scene = value.into(),
            "output" => self.output = value.into(),
            "weights" => self.weights = Some(value.into()),
            "gt" => self.gt = Some(value.into()),
            "k" => self.k = num(key, value)?,
            "hamming_threshold" => self.hamming_threshold = num(key, value)?,
            "patch_size" => self.patch_size = num(key, value)?,
            "stm_cap" => self.memory.stm_cap = num(key, value)?,
            "ltm_stride" => self.memory.ltm_stride = num(key, value)?,
            "ltm_cap" => self.memory.ltm_cap = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment. Keys not given keep
/// their defaults.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
        config.set(key.trim(), value.trim())?;
    }
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

/// `k` frame indices spread evenly over the kept keyframes, first and last
/// included. Fewer come back when there are fewer keyframes than `k`.
pub fn select_seed_frames(keyframes: &KeyframeSelection, k: usize) -> Result<Vec<usize>> {
    let kept = &keyframes.kept;
    if kept.is_empty() {
        return Err(Error::Empty("no keyframes"));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k == 1 {
        return Ok(vec![kept[0]]);
    }
    let m = kept.len() - 1;
    let mut out: Vec<usize> = (0..k)
        .map(|j| {
            let pos = (j as f64 * m as f64 / (k - 1) as f64).round() as usize;
            kept[pos]
        })
        .collect();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kept(v: Vec<usize>) -> KeyframeSelection {
        KeyframeSelection {
            kept: v,
            threshold: 12,
        }
    }

    #[test]
    fn empty_config_is_default() {
        let c = parse_config_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.k, c.hamming_threshold, c.patch_size), (1, 12, 8));
    }

    #[test]
    fn parses_values_and_comments() {
        let c = parse_config_str(
            "# run\nhamming_threshold = 12\n k=3 # seeds\nstm_cap = 7\nweights = w.bin\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(c.hamming_threshold, 12);
        assert_eq!(c.k, 3);
        assert_eq!(c.memory.stm_cap, 7);
        assert_eq!(c.weights, Some(PathBuf::from("w.bin")));
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_config_str("k = 0"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_config_str("colour = red"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_config_str("k = three"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_config_str("hamming_threshold = 65"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_config_str("just words"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(parse_config_str("hamming_threshold = 64").is_ok());
    }

    #[test]
    fn seed_selection() {
        assert_eq!(
            select_seed_frames(&kept(vec![4, 9, 20]), 1).unwrap(),
            vec![4]
        );
        let eleven = kept((0..=10).collect());
        assert_eq!(select_seed_frames(&eleven, 3).unwrap(), vec![0, 5, 10]);
        let four = kept(vec![0, 3, 8, 13]);
        let s = select_seed_frames(&four, 9).unwrap();
        assert_eq!(s, vec![0, 3, 8, 13]);
        assert!(select_seed_frames(&kept(vec![]), 1).is_err());
    }

    #[test]
    fn seed_selection_is_sorted_unique_subset() {
        for m in 1..30 {
            let ks = kept((0..m).map(|i| i * 3 + 1).collect());
            for k in 1..12 {
                let s = select_seed_frames(&ks, k).unwrap();
                assert!(s.windows(2).all(|w| w[0] < w[1]));
                assert!(s.iter().all(|i| ks.kept.contains(i)));
                assert_eq!(s.len(), k.min(m));
            }
        }
    }
}
