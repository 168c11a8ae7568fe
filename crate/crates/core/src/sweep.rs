//! Dilation and threshold sweeps over an image corpus.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{super_resolve, Model, RunConfig, RunMode};
use crate::netpbm::load_image;
use crate::tensor::{psnr, Tensor};

pub const DILATION_SWEEP: [usize; 6] = [1, 3, 5, 7, 9, 11];
pub const SIGMA_SWEEP: [f64; 5] = [0.0, 0.3, 0.5, 0.7, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Dilation,
    Sigma,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dilate" | "dilation" => Ok(Sweep::Dilation),
            "sigma" => Ok(Sweep::Sigma),
            _ => Err(Error::invalid(format!("unknown sweep '{s}' (dilate|sigma)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub image: String,
    pub setting: String,
    /// Dilated mask coverage for pixel bodies, kept-window share for
    /// attention bodies.
    pub coverage: f64,
    pub fraction: f64,
    pub psnr_vs_dense: f64,
    pub ms: f64,
}

/// `*.ppm` and `*.pgm` files of `dir`, sorted by file name.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, load_image(&p)?))
        })
        .collect()
}

fn settings(sweep: Sweep, base: &RunConfig) -> Vec<(String, RunConfig)> {
    match sweep {
        Sweep::Dilation => DILATION_SWEEP
            .iter()
            .map(|&k| (format!("dilate={k}"), RunConfig { dilation_k: k, ..*base }))
            .collect(),
        Sweep::Sigma => SIGMA_SWEEP
            .iter()
            .map(|&s| (format!("sigma={s:.1}"), RunConfig { sigma: s, ..*base }))
            .collect(),
    }
}

fn sweep_image(name: &str, lr: &Tensor, model: &Model, sweep: Sweep, base: &RunConfig) -> Result<Vec<SweepRow>> {
    let dense = super_resolve(
        lr,
        model,
        &RunConfig {
            mode: RunMode::Dense,
            ..*base
        },
    )?;
    settings(sweep, base)
        .into_iter()
        .map(|(setting, cfg)| {
            let cfg = RunConfig {
                mode: RunMode::Accelerated,
                ..cfg
            };
            let start = Instant::now();
            let out = super_resolve(lr, model, &cfg)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let coverage = match &out.windows {
                Some(d) => d.coverage(),
                None => out.mask.mask.coverage(),
            };
            Ok(SweepRow {
                image: name.to_string(),
                setting,
                coverage,
                fraction: out.report.fraction(),
                psnr_vs_dense: psnr(&out.sr, &dense.sr, 1.0)?,
                ms,
            })
        })
        .collect()
}

/// Runs every setting of `sweep` on every image. Images are processed in
/// parallel on up to `threads` workers (rayon's default when `None`); rows
/// come back in image order, then setting order.
pub fn bench_sweep(
    model: &Model,
    corpus: &[(String, Tensor)],
    sweep: Sweep,
    base: &RunConfig,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    base.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let per_image: Vec<Result<Vec<SweepRow>>> = pool.install(|| {
        corpus
            .par_iter()
            .map(|(name, lr)| sweep_image(name, lr, model, sweep, base))
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_image {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("image,setting,coverage,fraction,psnr_vs_dense,ms\n");
    for r in rows {
        let psnr = if r.psnr_vs_dense.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.4}", r.psnr_vs_dense)
        };
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{:.3}",
            r.image, r.setting, r.coverage, r.fraction, psnr, r.ms
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parse() {
        assert_eq!("dilate".parse::<Sweep>().unwrap(), Sweep::Dilation);
        assert_eq!("sigma".parse::<Sweep>().unwrap(), Sweep::Sigma);
        assert!("k".parse::<Sweep>().is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = [SweepRow {
            image: "a.ppm".into(),
            setting: "sigma=0.0".into(),
            coverage: 1.0,
            fraction: 1.0,
            psnr_vs_dense: f64::INFINITY,
            ms: 1.25,
        }];
        assert_eq!(
            rows_to_csv(&rows),
            "image,setting,coverage,fraction,psnr_vs_dense,ms\na.ppm,sigma=0.0,1.000000,1.000000,inf,1.250\n"
        );
    }

    #[test]
    fn setting_labels() {
        let base = RunConfig {
            dilation_k: 5,
            sigma: 0.5,
            strategy: Default::default(),
            mode: RunMode::Accelerated,
        };
        let s: Vec<_> = settings(Sweep::Sigma, &base).into_iter().map(|(s, _)| s).collect();
        assert_eq!(s, ["sigma=0.0", "sigma=0.3", "sigma=0.5", "sigma=0.7", "sigma=1.0"]);
        let d = settings(Sweep::Dilation, &base);
        assert_eq!(d[0].0, "dilate=1");
        assert_eq!(d[5].1.dilation_k, 11);
    }
}
