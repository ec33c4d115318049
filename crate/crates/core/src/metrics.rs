//! PSNR and mean relative velocity error inside flow masks.

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::volume::{Channel, Grid3, ScalarVolume, VelocityDataset, VelocityFrame};

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMask {
    grid: Grid3,
    voxels: Vec<bool>,
}

impl FlowMask {
    pub fn new(grid: Grid3, voxels: Vec<bool>) -> Result<Self> {
        if voxels.len() != grid.len() {
            return Err(Error::mismatch(format!("mask has {} voxels, grid needs {}", voxels.len(), grid.len())));
        }
        if !voxels.iter().any(|v| *v) {
            return Err(Error::EmptyMask);
        }
        Ok(FlowMask { grid, voxels })
    }

    /// Voxels where `vol > 0`.
    pub fn from_positive(vol: &ScalarVolume) -> Result<Self> {
        Self::new(*vol.grid(), vol.data().iter().map(|v| *v > 0.0).collect())
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn voxels(&self) -> &[bool] {
        &self.voxels
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|v| **v).count()
    }

    fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.voxels.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i)
    }
}

/// Voxels with `magnitude >= threshold_fraction * max(magnitude)`.
pub fn make_mask(magnitude: &ScalarVolume, threshold_fraction: f64) -> Result<FlowMask> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::param(format!("mask threshold must be in (0, 1), got {threshold_fraction}")));
    }
    let peak = magnitude.max();
    if !(peak > 0.0) {
        return Err(Error::EmptyMask);
    }
    let cut = threshold_fraction * peak;
    FlowMask::new(*magnitude.grid(), magnitude.data().iter().map(|a| *a >= cut).collect())
}

/// `10 log10(peak^2 / MSE)` over masked voxels. `peak` defaults to `max |ref|`
/// over the mask. Identical inputs give `+inf`.
pub fn psnr(est: &ScalarVolume, reference: &ScalarVolume, mask: &FlowMask, peak: Option<f64>) -> Result<f64> {
    est.grid().ensure_same(reference.grid(), "psnr inputs")?;
    mask.grid().ensure_same(reference.grid(), "psnr mask")?;
    let (e, r) = (est.data(), reference.data());
    let peak = match peak {
        Some(p) => p,
        None => mask.indices().map(|i| r[i].abs()).fold(0.0, f64::max),
    };
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Metric(format!("PSNR peak must be positive, got {peak}")));
    }
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = mask.indices().map(|i| (e[i] - r[i]).powi(2)).sum::<f64>() / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Denominator used by [`mean_relative_error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MreNormalization {
    /// Divide every voxel error by the peak reference speed over the mask.
    PeakSpeed,
    /// Divide each voxel error by that voxel's reference speed; zero-speed voxels are skipped.
    PerVoxel,
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Peak reference speed `max ||v_ref||` over the mask.
pub fn peak_speed(reference: &VelocityFrame, mask: &FlowMask) -> f64 {
    mask.indices().map(|i| norm3(reference.vector_at(i))).fold(0.0, f64::max)
}

/// Mean relative velocity error in percent.
pub fn mean_relative_error(
    est: &VelocityFrame,
    reference: &VelocityFrame,
    mask: &FlowMask,
    normalization: MreNormalization,
) -> Result<f64> {
    est.grid().ensure_same(reference.grid(), "mre inputs")?;
    mask.grid().ensure_same(reference.grid(), "mre mask")?;
    match normalization {
        MreNormalization::PeakSpeed => {
            let vpeak = peak_speed(reference, mask);
            if vpeak == 0.0 {
                return Err(Error::Metric("peak reference speed over the mask is zero".into()));
            }
            let sum: f64 = mask.indices().map(|i| norm3(sub3(est.vector_at(i), reference.vector_at(i)))).sum();
            Ok(100.0 * sum / (mask.count() as f64 * vpeak))
        }
        MreNormalization::PerVoxel => {
            let mut sum = 0.0;
            let mut n = 0usize;
            for i in mask.indices() {
                let r = reference.vector_at(i);
                let speed = norm3(r);
                if speed > 0.0 {
                    sum += norm3(sub3(est.vector_at(i), r)) / speed;
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::Metric("no masked voxel has nonzero reference speed".into()));
            }
            Ok(100.0 * sum / n as f64)
        }
    }
}

/// Mask source and metric options for [`evaluate`].
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub threshold_fraction: f64,
    /// Replaces the magnitude-threshold mask on every frame.
    pub external_mask: Option<FlowMask>,
    pub normalization: MreNormalization,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { threshold_fraction: DEFAULT_MASK_THRESHOLD, external_mask: None, normalization: MreNormalization::PeakSpeed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    PsnrDb,
    MrePercent,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::PsnrDb => "psnr_db",
            Metric::MrePercent => "mre_percent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub frame: usize,
    /// `None` for whole-vector metrics (MRE), written as `uvw`.
    pub channel: Option<Channel>,
    pub method: String,
    pub metric: Metric,
    pub value: f64,
}

impl MetricRecord {
    pub fn channel_name(&self) -> &'static str {
        self.channel.map_or("uvw", Channel::name)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub records: Vec<MetricRecord>,
}

pub const CSV_HEADER: &str = "frame,channel,method,metric,value";

impl EvalReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{},{}", r.frame, r.channel_name(), r.method, r.metric.name(), r.value)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    pub fn get(&self, frame: usize, channel: Option<Channel>, method: &str, metric: Metric) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.frame == frame && r.channel == channel && r.method == method && r.metric == metric)
            .map(|r| r.value)
    }

    /// Mean over frames keyed by (method, channel name, metric).
    pub fn summary(&self) -> BTreeMap<(String, &'static str, Metric), f64> {
        let mut acc: BTreeMap<(String, &'static str, Metric), (f64, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = acc.entry((r.method.clone(), r.channel_name(), r.metric)).or_insert((0.0, 0));
            e.0 += r.value;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    /// Plain-text table of [`EvalReport::summary`].
    pub fn summary_table(&self) -> String {
        let mut out = format!("{:<12} {:<8} {:<12} {:>12}\n", "method", "channel", "metric", "mean");
        for ((method, ch, metric), v) in self.summary() {
            out.push_str(&format!("{:<12} {:<8} {:<12} {:>12.4}\n", method, ch, metric.name(), v));
        }
        out
    }
}

fn frame_mask(reference: &VelocityFrame, cfg: &EvalConfig) -> Result<FlowMask> {
    match &cfg.external_mask {
        Some(m) => {
            m.grid().ensure_same(reference.grid(), "external mask")?;
            Ok(m.clone())
        }
        None => make_mask(reference.magnitude(), cfg.threshold_fraction),
    }
}

/// Per-frame, per-channel PSNR and per-frame MRE for each named method.
///
/// The PSNR peak of a channel is `max |ref|` over the mask; a channel whose
/// reference is zero over the mask uses the peak reference speed instead.
pub fn evaluate_methods(
    reference: &VelocityDataset,
    methods: &[(&str, &VelocityDataset)],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    for (name, ds) in methods {
        if ds.frames().len() != reference.frames().len() {
            return Err(Error::mismatch(format!(
                "method {name} has {} frames, reference has {}",
                ds.frames().len(),
                reference.frames().len()
            )));
        }
        ds.grid().ensure_same(reference.grid(), &format!("method {name} grid"))?;
    }
    let mut records = Vec::new();
    for (f, rf) in reference.frames().iter().enumerate() {
        let mask = frame_mask(rf, cfg)?;
        let vpeak = peak_speed(rf, &mask);
        for (name, ds) in methods {
            let ef = &ds.frames()[f];
            for c in Channel::ALL {
                let refc = rf.velocity(c);
                let chan_peak = mask.indices().map(|i| refc.data()[i].abs()).fold(0.0, f64::max);
                let peak = if chan_peak > 0.0 { chan_peak } else { vpeak };
                let value = psnr(ef.velocity(c), refc, &mask, Some(peak))?;
                records.push(MetricRecord { frame: f, channel: Some(c), method: name.to_string(), metric: Metric::PsnrDb, value });
            }
            let value = mean_relative_error(ef, rf, &mask, cfg.normalization)?;
            records.push(MetricRecord { frame: f, channel: None, method: name.to_string(), metric: Metric::MrePercent, value });
        }
    }
    Ok(EvalReport { records })
}

/// Evaluates an FSR result and a baseline against the reference.
pub fn evaluate(
    sr: &VelocityDataset,
    reference: &VelocityDataset,
    baseline: &VelocityDataset,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    evaluate_methods(reference, &[("fsr", sr), ("baseline", baseline)], cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::AcquisitionParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid3 {
        Grid3::cube(4, 3, 2).unwrap()
    }

    fn random_scalar(seed: u64) -> ScalarVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarVolume::new(grid(), (0..grid().len()).map(|_| rng.random_range(-50.0..50.0)).collect()).unwrap()
    }

    fn random_frame(seed: u64) -> VelocityFrame {
        let mag = ScalarVolume::from_fn(grid(), |i, _, _| i as f64).unwrap();
        VelocityFrame::new(mag, random_scalar(seed), random_scalar(seed + 1), random_scalar(seed + 2)).unwrap()
    }

    #[test]
    fn mask_examples() {
        let mag = ScalarVolume::new(Grid3::cube(4, 1, 1).unwrap(), vec![0.0, 1e-9, 0.5, 1.0]).unwrap();
        let m = make_mask(&mag, 1e-12).unwrap();
        assert_eq!(m.voxels(), &[false, true, true, true]);
        let uniform = ScalarVolume::filled(grid(), 3.0).unwrap();
        assert_eq!(make_mask(&uniform, 0.99).unwrap().count(), grid().len());
        assert!(matches!(make_mask(&ScalarVolume::filled(grid(), 0.0).unwrap(), 0.1), Err(Error::EmptyMask)));
        assert!(make_mask(&uniform, 1.0).is_err());
    }

    #[test]
    fn psnr_examples() {
        let r = random_scalar(1);
        let mask = FlowMask::new(grid(), (0..grid().len()).map(|i| i % 2 == 0).collect()).unwrap();
        assert_eq!(psnr(&r, &r, &mask, None).unwrap(), f64::INFINITY);
        let c = 2.5;
        let shifted = ScalarVolume::new(grid(), r.data().iter().map(|x| x + c).collect()).unwrap();
        let p = 40.0;
        let got = psnr(&shifted, &r, &mask, Some(p)).unwrap();
        assert!((got - 10.0 * (p * p / (c * c)).log10()).abs() < 1e-12);
    }

    #[test]
    fn psnr_matches_scalar_loop() {
        let (e, r) = (random_scalar(3), random_scalar(4));
        let mask = FlowMask::new(grid(), (0..grid().len()).map(|i| i % 3 != 1).collect()).unwrap();
        let mut peak = 0.0f64;
        let mut sse = 0.0;
        let mut n = 0.0;
        for i in 0..grid().len() {
            if i % 3 != 1 {
                peak = peak.max(r.data()[i].abs());
                sse += (e.data()[i] - r.data()[i]) * (e.data()[i] - r.data()[i]);
                n += 1.0;
            }
        }
        let want = 10.0 * (peak * peak / (sse / n)).log10();
        assert_eq!(psnr(&e, &r, &mask, None).unwrap(), want);
    }

    #[test]
    fn mre_examples() {
        let r = random_frame(10);
        let all = FlowMask::new(grid(), vec![true; grid().len()]).unwrap();
        assert_eq!(mean_relative_error(&r, &r, &all, MreNormalization::PeakSpeed).unwrap(), 0.0);

        let peak_idx = (0..grid().len()).max_by(|&a, &b| norm3(r.vector_at(a)).total_cmp(&norm3(r.vector_at(b)))).unwrap();
        let mut one = vec![false; grid().len()];
        one[peak_idx] = true;
        let single = FlowMask::new(grid(), one).unwrap();
        let scale = |v: &ScalarVolume| ScalarVolume::new(grid(), v.data().iter().map(|x| 0.9 * x).collect()).unwrap();
        let est = VelocityFrame::new(r.magnitude().clone(), scale(r.u()), scale(r.v()), scale(r.w())).unwrap();
        let got = mean_relative_error(&est, &r, &single, MreNormalization::PeakSpeed).unwrap();
        assert!((got - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mre_matches_scalar_loop() {
        let (e, r) = (random_frame(20), random_frame(30));
        let sel: Vec<bool> = (0..grid().len()).map(|i| i % 4 != 0).collect();
        let mask = FlowMask::new(grid(), sel.clone()).unwrap();
        let mut vpeak = 0.0f64;
        for i in 0..grid().len() {
            if sel[i] {
                let s = (r.u().data()[i].powi(2) + r.v().data()[i].powi(2) + r.w().data()[i].powi(2)).sqrt();
                vpeak = vpeak.max(s);
            }
        }
        let mut sum = 0.0;
        let mut n = 0.0;
        for i in 0..grid().len() {
            if sel[i] {
                let du = e.u().data()[i] - r.u().data()[i];
                let dv = e.v().data()[i] - r.v().data()[i];
                let dw = e.w().data()[i] - r.w().data()[i];
                sum += (du * du + dv * dv + dw * dw).sqrt() / vpeak;
                n += 1.0;
            }
        }
        let want = 100.0 * sum / n;
        let got = mean_relative_error(&e, &r, &mask, MreNormalization::PeakSpeed).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn mre_zero_peak_is_an_error() {
        let zero = ScalarVolume::filled(grid(), 0.0).unwrap();
        let mag = ScalarVolume::filled(grid(), 1.0).unwrap();
        let f = VelocityFrame::new(mag, zero.clone(), zero.clone(), zero).unwrap();
        let all = FlowMask::new(grid(), vec![true; grid().len()]).unwrap();
        assert!(matches!(mean_relative_error(&f, &f, &all, MreNormalization::PeakSpeed), Err(Error::Metric(_))));
        assert!(mean_relative_error(&f, &f, &all, MreNormalization::PerVoxel).is_err());
    }

    #[test]
    fn metrics_are_mask_local() {
        let (e, r) = (random_frame(1), random_frame(2));
        let sel: Vec<bool> = (0..grid().len()).map(|i| i < 10).collect();
        let mask = FlowMask::new(grid(), sel).unwrap();
        let bump = |v: &ScalarVolume| {
            ScalarVolume::new(grid(), v.data().iter().enumerate().map(|(i, x)| if i >= 10 { x + 1e3 } else { *x }).collect()).unwrap()
        };
        let e2 = VelocityFrame::new(e.magnitude().clone(), bump(e.u()), bump(e.v()), bump(e.w())).unwrap();
        let a = mean_relative_error(&e, &r, &mask, MreNormalization::PeakSpeed).unwrap();
        let b = mean_relative_error(&e2, &r, &mask, MreNormalization::PeakSpeed).unwrap();
        assert_eq!(a, b);
        assert_eq!(psnr(e.u(), r.u(), &mask, None).unwrap(), psnr(e2.u(), r.u(), &mask, None).unwrap());
    }

    #[test]
    fn mre_is_rotation_invariant() {
        let (e, r) = (random_frame(5), random_frame(6));
        let all = FlowMask::new(grid(), vec![true; grid().len()]).unwrap();
        let (ca, sa) = (0.3f64.cos(), 0.3f64.sin());
        let rot = |f: &VelocityFrame| {
            let u: Vec<f64> = (0..grid().len()).map(|i| ca * f.u().data()[i] - sa * f.v().data()[i]).collect();
            let v: Vec<f64> = (0..grid().len()).map(|i| sa * f.u().data()[i] + ca * f.v().data()[i]).collect();
            VelocityFrame::new(
                f.magnitude().clone(),
                ScalarVolume::new(grid(), u).unwrap(),
                ScalarVolume::new(grid(), v).unwrap(),
                f.w().clone(),
            )
            .unwrap()
        };
        let a = mean_relative_error(&e, &r, &all, MreNormalization::PeakSpeed).unwrap();
        let b = mean_relative_error(&rot(&e), &rot(&r), &all, MreNormalization::PeakSpeed).unwrap();
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn evaluate_shape_and_identity() {
        let params = AcquisitionParams::new(100.0, 3, 0.05).unwrap();
        let truth = VelocityDataset::new(params, (0..3).map(|f| random_frame(f * 10)).collect()).unwrap();
        let other = VelocityDataset::new(params, (0..3).map(|f| random_frame(f * 10 + 100)).collect()).unwrap();
        let rep = evaluate(&truth, &truth, &other, &EvalConfig::default()).unwrap();
        assert_eq!(rep.records.len(), 3 * 3 * 2 + 3 * 2);
        for f in 0..3 {
            for c in Channel::ALL {
                assert_eq!(rep.get(f, Some(c), "fsr", Metric::PsnrDb), Some(f64::INFINITY));
            }
            assert_eq!(rep.get(f, None, "fsr", Metric::MrePercent), Some(0.0));
            assert!(rep.get(f, None, "baseline", Metric::MrePercent).unwrap() > 0.0);
        }
        let csv = rep.to_csv_string();
        assert!(csv.starts_with("frame,channel,method,metric,value\n"));
        assert_eq!(csv.lines().count(), 1 + rep.records.len());
        assert!(csv.contains("0,u,fsr,psnr_db,inf\n"));
        assert!(csv.contains("2,uvw,fsr,mre_percent,0\n"));

        let short = VelocityDataset::new(AcquisitionParams::new(100.0, 1, 0.05).unwrap(), vec![random_frame(0)]).unwrap();
        assert!(evaluate(&short, &truth, &other, &EvalConfig::default()).is_err());
    }
}
