//! End-to-end experiment: simulate, degrade, super-resolve, evaluate.

use std::fs;
use std::path::PathBuf;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forward::{degrade_dataset, NoiseCalibration};
use crate::interp::upsample_dataset;
use crate::io::{calibration_text, save_dataset, solve_reports_csv, write_atomic};
use crate::metrics::{evaluate_methods, EvalReport, Metric};
use crate::solver::{superresolve_dataset, ChannelReport};
use crate::volume::{Channel, VelocityDataset};

/// In-memory products of one experiment.
pub struct Experiment {
    pub truth: VelocityDataset,
    pub lr: VelocityDataset,
    pub calibration: NoiseCalibration,
    pub sr: VelocityDataset,
    pub baseline: VelocityDataset,
    pub solve_reports: Vec<ChannelReport>,
    pub report: EvalReport,
}

impl Experiment {
    /// True when FSR beats the baseline on every frame: higher PSNR on each channel and lower MRE.
    pub fn fsr_dominates(&self) -> bool {
        let frames = self.truth.frames().len();
        (0..frames).all(|f| {
            let psnr_ok = Channel::ALL.iter().all(|&c| {
                match (
                    self.report.get(f, Some(c), "fsr", Metric::PsnrDb),
                    self.report.get(f, Some(c), "baseline", Metric::PsnrDb),
                ) {
                    (Some(a), Some(b)) => a > b,
                    _ => false,
                }
            });
            let mre_ok = match (
                self.report.get(f, None, "fsr", Metric::MrePercent),
                self.report.get(f, None, "baseline", Metric::MrePercent),
            ) {
                (Some(a), Some(b)) => a < b,
                _ => false,
            };
            psnr_ok && mre_ok
        })
    }
}

pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment> {
    cfg.validate()?;
    let truth = cfg.build_phantom()?;
    let d = cfg.decimation()?;
    let (lr, calibration) = degrade_dataset(&truth, &cfg.degradation()?)?;
    let (sr, solve_reports) = superresolve_dataset(&lr, &cfg.solver()?, *truth.grid())?;
    let baseline = upsample_dataset(&lr, d, cfg.baseline)?;
    let report = evaluate_methods(&truth, &[("fsr", &sr), ("baseline", &baseline)], &cfg.eval())?;
    Ok(Experiment { truth, lr, calibration, sr, baseline, solve_reports, report })
}

/// Paths written by [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineFiles {
    pub truth: PathBuf,
    pub lr: PathBuf,
    pub calibration: PathBuf,
    pub sr: PathBuf,
    pub baseline: PathBuf,
    pub solve_report: PathBuf,
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub effective_config: PathBuf,
}

impl PipelineFiles {
    pub fn in_dir(dir: &std::path::Path) -> Self {
        PipelineFiles {
            truth: dir.join("truth.flw"),
            lr: dir.join("lr.flw"),
            calibration: dir.join("lr.flw.cal"),
            sr: dir.join("sr_fsr.flw"),
            baseline: dir.join("sr_baseline.flw"),
            solve_report: dir.join("solve_report.csv"),
            metrics: dir.join("metrics.csv"),
            summary: dir.join("summary.txt"),
            effective_config: dir.join("effective.cfg"),
        }
    }
}

/// Runs [`run_experiment`] and writes every artifact into `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(Experiment, PipelineFiles)> {
    let exp = run_experiment(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let files = PipelineFiles::in_dir(&cfg.out_dir);
    write_atomic(&files.effective_config, cfg.to_text().as_bytes())?;
    save_dataset(&files.truth, &exp.truth)?;
    save_dataset(&files.lr, &exp.lr)?;
    write_atomic(&files.calibration, calibration_text(&exp.calibration).as_bytes())?;
    save_dataset(&files.sr, &exp.sr)?;
    save_dataset(&files.baseline, &exp.baseline)?;
    write_atomic(&files.solve_report, solve_reports_csv(&exp.solve_reports).as_bytes())?;
    write_atomic(&files.metrics, exp.report.to_csv_string().as_bytes())?;
    let summary = format!(
        "noise: sigma={} achieved_psnr_db={}\n{}",
        exp.calibration.sigma,
        exp.calibration.achieved_psnr_db,
        exp.report.summary_table()
    );
    write_atomic(&files.summary, summary.as_bytes())?;
    Ok((exp, files))
}
