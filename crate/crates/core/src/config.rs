//! Experiment configuration as flat `key = value` text.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::forward::{DegradationConfig, KernelChoice};
use crate::interp::InterpMethod;
use crate::metrics::{EvalConfig, MreNormalization, DEFAULT_MASK_THRESHOLD};
use crate::phantom::{helix_phantom, poiseuille_phantom, pulsatile_waveform, Axis, HelixParams, PoiseuilleParams};
use crate::solver::{PriorMode, SolverConfig, DEFAULT_TAU};
use crate::volume::{Decimation, Grid3, VelocityDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Poiseuille,
    Helix,
}

impl FromStr for PhantomKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poiseuille" => Ok(PhantomKind::Poiseuille),
            "helix" => Ok(PhantomKind::Helix),
            o => Err(Error::config(format!("unknown phantom '{o}'"))),
        }
    }
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::Poiseuille => "poiseuille",
            PhantomKind::Helix => "helix",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Ideal,
    Gaussian,
}

impl FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(KernelKind::Ideal),
            "gaussian" => Ok(KernelKind::Gaussian),
            o => Err(Error::config(format!("unknown kernel '{o}'"))),
        }
    }
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Ideal => "ideal",
            KernelKind::Gaussian => "gaussian",
        }
    }

    /// Resolves to a concrete kernel; a Gaussian without explicit FWHM uses the decimation rates.
    pub fn choice(self, d: Decimation, fwhm: Option<[f64; 3]>) -> KernelChoice {
        match (self, fwhm) {
            (KernelKind::Ideal, _) => KernelChoice::Ideal,
            (KernelKind::Gaussian, Some(fwhm)) => KernelChoice::Gaussian { fwhm },
            (KernelKind::Gaussian, None) => KernelChoice::gaussian_matched(d),
        }
    }
}

pub fn parse_mre(s: &str) -> Result<MreNormalization> {
    match s {
        "peak" => Ok(MreNormalization::PeakSpeed),
        "per-voxel" => Ok(MreNormalization::PerVoxel),
        o => Err(Error::config(format!("unknown MRE normalization '{o}'"))),
    }
}

pub fn mre_name(n: MreNormalization) -> &'static str {
    match n {
        MreNormalization::PeakSpeed => "peak",
        MreNormalization::PerVoxel => "per-voxel",
    }
}

/// Parses `a,b,c`.
pub fn parse_triple<T: FromStr>(s: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::config(format!("expected three comma-separated values, got '{s}'")));
    }
    let p = |x: &str| x.parse::<T>().map_err(|_| Error::config(format!("bad value '{x}' in '{s}'")));
    Ok([p(parts[0])?, p(parts[1])?, p(parts[2])?])
}

fn fmt_triple<T: std::fmt::Display>(t: &[T; 3]) -> String {
    format!("{},{},{}", t[0], t[1], t[2])
}

/// Everything needed to reproduce one simulate/degrade/super-resolve/evaluate run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub phantom: PhantomKind,
    pub dims: [usize; 3],
    pub frames: usize,
    pub venc: f64,
    pub vmax: f64,
    /// Tube radius in HR voxels; `None` means 30% of the smaller of the x/y dimensions.
    pub radius: Option<f64>,
    pub factor: [usize; 3],
    pub kernel: KernelKind,
    pub fwhm: Option<[f64; 3]>,
    pub noise_psnr: Option<f64>,
    pub seed: u64,
    pub tau: f64,
    pub prior: PriorMode,
    pub baseline: InterpMethod,
    pub mask_threshold: f64,
    pub mre: MreNormalization,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            phantom: PhantomKind::Poiseuille,
            dims: [64, 64, 64],
            frames: 5,
            venc: 150.0,
            vmax: 100.0,
            radius: None,
            factor: [4, 4, 4],
            kernel: KernelKind::Ideal,
            fwhm: None,
            noise_psnr: Some(15.0),
            seed: 0,
            tau: DEFAULT_TAU,
            prior: PriorMode::Trilinear,
            baseline: InterpMethod::Trilinear,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            mre: MreNormalization::PeakSpeed,
            out_dir: PathBuf::from("flowsr-out"),
        }
    }
}

impl RunConfig {
    pub fn hr_grid(&self) -> Result<Grid3> {
        Grid3::cube(self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn decimation(&self) -> Result<Decimation> {
        Decimation::new(self.factor[0], self.factor[1], self.factor[2])
    }

    pub fn kernel_choice(&self) -> Result<KernelChoice> {
        Ok(self.kernel.choice(self.decimation()?, self.fwhm))
    }

    pub fn degradation(&self) -> Result<DegradationConfig> {
        Ok(DegradationConfig {
            d: self.decimation()?,
            kernel: self.kernel_choice()?,
            noise_psnr_db: self.noise_psnr,
            rng_seed: self.seed,
        })
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        SolverConfig::new(self.tau, self.kernel_choice()?, self.decimation()?, self.prior)
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig { threshold_fraction: self.mask_threshold, external_mask: None, normalization: self.mre }
    }

    pub fn radius_voxels(&self) -> f64 {
        // both phantoms run along z
        self.radius.unwrap_or(0.3 * self.dims[0].min(self.dims[1]) as f64)
    }

    /// Builds the HR ground truth described by this config.
    pub fn build_phantom(&self) -> Result<VelocityDataset> {
        let grid = self.hr_grid()?;
        let radius = self.radius_voxels();
        let wave = pulsatile_waveform(self.vmax, self.frames);
        match self.phantom {
            PhantomKind::Poiseuille => poiseuille_phantom(
                grid,
                &PoiseuilleParams {
                    radius_voxels: radius,
                    axis: Axis::Z,
                    v_max: wave,
                    venc: self.venc,
                    magnitude_in: 1.0,
                    magnitude_out: 0.0,
                    frame_interval: 0.05,
                },
            ),
            PhantomKind::Helix => helix_phantom(
                grid,
                &HelixParams {
                    radius_voxels: radius,
                    omega: 0.3 * self.vmax / radius,
                    v_axial: wave,
                    venc: self.venc,
                    magnitude_in: 1.0,
                    magnitude_out: 0.0,
                    frame_interval: 0.05,
                },
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.hr_grid()?;
        self.decimation()?.check_divides(&grid)?;
        if self.frames == 0 {
            return Err(Error::config("frames must be >= 1"));
        }
        if !(self.venc > 0.0 && self.venc.is_finite()) {
            return Err(Error::config(format!("venc must be > 0, got {}", self.venc)));
        }
        if !(self.vmax.is_finite() && self.vmax.abs() < self.venc) {
            return Err(Error::config(format!("vmax {} must satisfy |vmax| < venc {}", self.vmax, self.venc)));
        }
        if let Some(p) = self.noise_psnr {
            if !p.is_finite() {
                return Err(Error::config("noise_psnr must be finite or 'none'"));
            }
        }
        if let Some(f) = self.fwhm {
            if f.iter().any(|w| !(*w > 0.0)) {
                return Err(Error::config("fwhm must be positive"));
            }
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(Error::config("mask_threshold must be in (0, 1)"));
        }
        self.solver()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |o: Option<String>| o.unwrap_or_else(|| "none".into());
        let _ = writeln!(s, "phantom = {}", self.phantom.name());
        let _ = writeln!(s, "dims = {}", fmt_triple(&self.dims));
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "venc = {}", self.venc);
        let _ = writeln!(s, "vmax = {}", self.vmax);
        let _ = writeln!(s, "radius = {}", opt(self.radius.map(|r| r.to_string())));
        let _ = writeln!(s, "factor = {}", fmt_triple(&self.factor));
        let _ = writeln!(s, "kernel = {}", self.kernel.name());
        let _ = writeln!(s, "fwhm = {}", opt(self.fwhm.map(|f| fmt_triple(&f))));
        let _ = writeln!(s, "noise_psnr = {}", opt(self.noise_psnr.map(|p| p.to_string())));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "prior = {}", self.prior.name());
        let _ = writeln!(s, "baseline = {}", self.baseline.name());
        let _ = writeln!(s, "mask_threshold = {}", self.mask_threshold);
        let _ = writeln!(s, "mre = {}", mre_name(self.mre));
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        s
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::config(format!("bad number '{v}' for {key}")));
        let int = |v: &str| v.parse::<u64>().map_err(|_| Error::config(format!("bad integer '{v}' for {key}")));
        let none = value == "none";
        match key {
            "phantom" => self.phantom = value.parse()?,
            "dims" => self.dims = parse_triple(value)?,
            "frames" => self.frames = int(value)? as usize,
            "venc" => self.venc = num(value)?,
            "vmax" => self.vmax = num(value)?,
            "radius" => self.radius = if none { None } else { Some(num(value)?) },
            "factor" => self.factor = parse_triple(value)?,
            "kernel" => self.kernel = value.parse()?,
            "fwhm" => self.fwhm = if none { None } else { Some(parse_triple(value)?) },
            "noise_psnr" => self.noise_psnr = if none { None } else { Some(num(value)?) },
            "seed" => self.seed = int(value)?,
            "tau" => self.tau = num(value)?,
            "prior" => self.prior = value.parse().map_err(|e: Error| Error::config(e.to_string()))?,
            "baseline" => self.baseline = value.parse().map_err(|e: Error| Error::config(e.to_string()))?,
            "mask_threshold" => self.mask_threshold = num(value)?,
            "mre" => self.mre = parse_mre(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.fwhm = Some([1.5, 2.0, 2.5]);
        cfg.noise_psnr = None;
        cfg.tau = 0.125;
        cfg.prior = PriorMode::ZeroFill;
        cfg.mre = MreNormalization::PerVoxel;
        cfg.radius = Some(7.5);
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::from_text(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn comments_and_errors() {
        let cfg = RunConfig::from_text("# experiment\n\ntau = 0.5 # weak\nfactor=2,2,1\n").unwrap();
        assert_eq!(cfg.tau, 0.5);
        assert_eq!(cfg.factor, [2, 2, 1]);
        assert!(RunConfig::from_text("bogus = 1").is_err());
        assert!(RunConfig::from_text("tau").is_err());
        assert!(RunConfig::from_text("dims = 1,2").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.factor = [3, 4, 4];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.vmax = 150.0;
        assert!(cfg.validate().is_err());
    }
}
