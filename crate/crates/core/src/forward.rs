//! Acquisition degradation `y = S H x + n` and the simulated-data protocol.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{crop_kspace, gaussian_spectrum, ideal_lowpass_spectrum, FourierEngine, KernelSpectrum};
use crate::volume::{
    extract_velocity, synthesize_complex, Channel, ComplexVolume, Decimation, Grid3, ScalarVolume,
    VelocityDataset, VelocityFrame,
};

/// Blur kernel `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    /// k-space box truncation matching the decimation.
    Ideal,
    /// Separable Gaussian; spatial FWHM in HR voxels per axis.
    Gaussian { fwhm: [f64; 3] },
    /// `H = I`.
    Identity,
}

impl KernelChoice {
    pub fn spectrum(&self, hr: &Grid3, d: Decimation) -> Result<KernelSpectrum> {
        match *self {
            KernelChoice::Ideal => ideal_lowpass_spectrum(hr, d),
            KernelChoice::Gaussian { fwhm } => {
                d.check_divides(hr)?;
                gaussian_spectrum(hr, fwhm)
            }
            KernelChoice::Identity => {
                d.check_divides(hr)?;
                Ok(KernelSpectrum::identity(*hr))
            }
        }
    }

    /// Gaussian with FWHM equal to the decimation rate on each axis.
    pub fn gaussian_matched(d: Decimation) -> KernelChoice {
        let [a, b, c] = d.rates();
        KernelChoice::Gaussian { fwhm: [a as f64, b as f64, c as f64] }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelChoice::Ideal => "ideal",
            KernelChoice::Gaussian { .. } => "gaussian",
            KernelChoice::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationConfig {
    pub d: Decimation,
    pub kernel: KernelChoice,
    /// Target PSNR of the noisy LR image in dB; `None` for noiseless.
    pub noise_psnr_db: Option<f64>,
    pub rng_seed: u64,
}

impl DegradationConfig {
    pub fn noiseless(d: Decimation, kernel: KernelChoice) -> Self {
        DegradationConfig { d, kernel, noise_psnr_db: None, rng_seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.noise_psnr_db {
            if !p.is_finite() {
                return Err(Error::param(format!("noise PSNR must be finite, got {p}")));
            }
        }
        Ok(())
    }
}

/// `S H` and its adjoint on a fixed HR grid, evaluated spectrally.
///
/// `S` keeps voxel 0 of every `d`-block per axis.
pub struct DegradationOperator {
    hr: Grid3,
    lr: Grid3,
    d: Decimation,
    spectrum: KernelSpectrum,
}

impl DegradationOperator {
    pub fn new(hr: Grid3, spectrum: KernelSpectrum, d: Decimation) -> Result<Self> {
        hr.ensure_same(spectrum.grid(), "kernel spectrum")?;
        let lr = hr.decimated(d)?;
        Ok(DegradationOperator { hr, lr, d, spectrum })
    }

    pub fn from_config(hr: Grid3, cfg: &DegradationConfig) -> Result<Self> {
        Self::new(hr, cfg.kernel.spectrum(&hr, cfg.d)?, cfg.d)
    }

    pub fn hr_grid(&self) -> &Grid3 {
        &self.hr
    }

    pub fn lr_grid(&self) -> &Grid3 {
        &self.lr
    }

    pub fn spectrum(&self) -> &KernelSpectrum {
        &self.spectrum
    }

    pub fn apply(&self, engine: &mut FourierEngine, x: &ComplexVolume) -> Result<ComplexVolume> {
        self.hr.ensure_same(x.grid(), "apply_SH input")?;
        let mut buf = x.data().to_vec();
        engine.transform_in_place(&self.hr, &mut buf, rustfft::FftDirection::Forward);
        self.spectrum.multiply(&mut buf, false);
        engine.transform_in_place(&self.hr, &mut buf, rustfft::FftDirection::Inverse);
        let [dr, dc, ds] = self.d.rates();
        let mut out = Vec::with_capacity(self.lr.len());
        for k in 0..self.lr.s() {
            for j in 0..self.lr.n() {
                for i in 0..self.lr.m() {
                    out.push(buf[self.hr.index(i * dr, j * dc, k * ds)]);
                }
            }
        }
        Ok(ComplexVolume::from_raw(self.lr, out))
    }

    pub fn adjoint(&self, engine: &mut FourierEngine, y: &ComplexVolume) -> Result<ComplexVolume> {
        self.lr.ensure_same(y.grid(), "apply_SH_adjoint input")?;
        let mut buf = vec![Complex64::default(); self.hr.len()];
        let [dr, dc, ds] = self.d.rates();
        let src = y.data();
        for k in 0..self.lr.s() {
            for j in 0..self.lr.n() {
                for i in 0..self.lr.m() {
                    buf[self.hr.index(i * dr, j * dc, k * ds)] = src[self.lr.index(i, j, k)];
                }
            }
        }
        engine.transform_in_place(&self.hr, &mut buf, rustfft::FftDirection::Forward);
        self.spectrum.multiply(&mut buf, true);
        engine.transform_in_place(&self.hr, &mut buf, rustfft::FftDirection::Inverse);
        Ok(ComplexVolume::from_raw(self.hr, buf))
    }
}

/// Noiseless degradation `S H x`.
pub fn apply_sh(x: &ComplexVolume, cfg: &DegradationConfig) -> Result<ComplexVolume> {
    DegradationOperator::from_config(*x.grid(), cfg)?.apply(&mut FourierEngine::new(), x)
}

/// Adjoint `H^H S^H y`; `hr` is the grid `y` was decimated from.
pub fn apply_sh_adjoint(y: &ComplexVolume, hr: &Grid3, cfg: &DegradationConfig) -> Result<ComplexVolume> {
    DegradationOperator::from_config(*hr, cfg)?.adjoint(&mut FourierEngine::new(), y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    /// Std-dev per real/imaginary component of the complex k-space noise.
    pub sigma: f64,
    /// Reference peak: max clean LR magnitude.
    pub peak: f64,
    pub target_psnr_db: Option<f64>,
    /// PSNR measured on the realized noise (complex LR image, peak above).
    pub achieved_psnr_db: f64,
}

/// Noise level that gives `target_psnr_db` on the complex LR image.
///
/// `sigma = peak * 10^(-target/20) / sqrt(2)`, peak = max clean LR magnitude.
/// `achieved_psnr_db` is filled in by whoever draws the realization; here it
/// holds the expected value.
pub fn calibrate_noise(clean_lr_magnitude: &ScalarVolume, target_psnr_db: f64) -> Result<NoiseCalibration> {
    if !target_psnr_db.is_finite() {
        return Err(Error::Calibration(format!("target PSNR must be finite, got {target_psnr_db}")));
    }
    let peak = clean_lr_magnitude.data().iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if peak == 0.0 {
        return Err(Error::Calibration("clean LR magnitude is zero everywhere".into()));
    }
    let sigma = peak * 10f64.powf(-target_psnr_db / 20.0) / std::f64::consts::SQRT_2;
    Ok(NoiseCalibration { sigma, peak, target_psnr_db: Some(target_psnr_db), achieved_psnr_db: target_psnr_db })
}

/// RNG stream for one (frame, channel) pair. Seed selects the key, the pair selects the stream.
pub fn noise_rng(seed: u64, frame: usize, channel: Channel) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((frame as u64) << 2) | channel.index() as u64);
    rng
}

/// Complex white Gaussian noise with `sigma` per component on every bin of `grid`.
pub fn kspace_noise(grid: &Grid3, sigma: f64, rng: &mut ChaCha20Rng) -> Vec<Complex64> {
    (0..grid.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(sigma * re, sigma * im)
        })
        .collect()
}

/// Simulates a low-resolution noisy acquisition from an HR ground-truth dataset.
///
/// Per frame and channel: synthesize the complex signal, go to k-space, add
/// calibrated noise on the full HR k-space, crop the retained box, come back
/// and split into magnitude and velocity. The LR magnitude is taken from the
/// u channel. Under the unitary DFT the cropped pipeline equals `sqrt(d) S H`
/// with the ideal kernel; for other kernels `H` is applied before cropping.
pub fn degrade_dataset(hr: &VelocityDataset, cfg: &DegradationConfig) -> Result<(VelocityDataset, NoiseCalibration)> {
    cfg.validate()?;
    let hr_grid = *hr.grid();
    let lr_grid = hr_grid.decimated(cfg.d)?;
    let spectrum = match cfg.kernel {
        KernelChoice::Ideal => None,
        k => Some(k.spectrum(&hr_grid, cfg.d)?),
    };
    let venc = hr.venc();

    let tasks: Vec<(usize, Channel)> =
        (0..hr.frames().len()).flat_map(|f| Channel::ALL.into_iter().map(move |c| (f, c))).collect();

    // Clean LR spectra for every (frame, channel).
    let clean: Vec<ComplexVolume> = tasks
        .par_iter()
        .map_init(FourierEngine::new, |engine, &(f, c)| {
            let frame = &hr.frames()[f];
            let x = synthesize_complex(frame.magnitude(), frame.velocity(c), venc).map_err(|e| e.in_channel(f, c.name()))?;
            let mut spec = engine.forward(&x).into_data();
            if let Some(s) = &spectrum {
                s.multiply(&mut spec, false);
            }
            crop_kspace(&ComplexVolume::from_raw(hr_grid, spec), &lr_grid)
        })
        .collect::<Result<_>>()?;

    let calibration = match cfg.noise_psnr_db {
        None => NoiseCalibration { sigma: 0.0, peak: 0.0, target_psnr_db: None, achieved_psnr_db: f64::INFINITY },
        Some(target) => {
            let mut engine = FourierEngine::new();
            let mut peak = 0.0f64;
            for (t, &(_, c)) in tasks.iter().enumerate() {
                if c == Channel::U {
                    let img = engine.inverse(&clean[t]);
                    peak = img.data().iter().fold(peak, |m, z| m.max(z.norm()));
                }
            }
            let peak_vol = ScalarVolume::filled(Grid3::cube(1, 1, 1)?, peak)?;
            calibrate_noise(&peak_vol, target)?
        }
    };

    let noisy: Vec<(ComplexVolume, f64)> = tasks
        .par_iter()
        .zip(clean.par_iter())
        .map_init(FourierEngine::new, |engine, (&(f, c), spec)| {
            let mut noise_energy = 0.0;
            let lr_spec = if calibration.sigma > 0.0 {
                let mut rng = noise_rng(cfg.rng_seed, f, c);
                let noise = ComplexVolume::from_raw(hr_grid, kspace_noise(&hr_grid, calibration.sigma, &mut rng));
                let cropped = crop_kspace(&noise, &lr_grid)?;
                noise_energy = cropped.energy();
                spec.axpy(Complex64::new(1.0, 0.0), &cropped)?
            } else {
                spec.clone()
            };
            Ok((engine.inverse(&lr_spec), noise_energy))
        })
        .collect::<Result<_>>()?;

    let mut calibration = calibration;
    if calibration.sigma > 0.0 {
        let total: f64 = noisy.iter().map(|(_, e)| e).sum();
        let mse = total / (noisy.len() * lr_grid.len()) as f64;
        calibration.achieved_psnr_db = 10.0 * (calibration.peak * calibration.peak / mse).log10();
    }

    let mut frames = Vec::with_capacity(hr.frames().len());
    for f in 0..hr.frames().len() {
        let mut mag = None;
        let mut vels = Vec::with_capacity(3);
        for c in Channel::ALL {
            let (m, v) = extract_velocity(&noisy[f * 3 + c.index()].0, venc)?;
            if c == Channel::U {
                mag = Some(m);
            }
            vels.push(v);
        }
        let mut it = vels.into_iter();
        let (u, v, w) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        frames.push(VelocityFrame::new(mag.unwrap(), u, v, w)?);
    }
    let lr = VelocityDataset::new(*hr.params(), frames)?;
    Ok((lr, calibration))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{forward_fft, inverse_fft};
    use crate::volume::AcquisitionParams;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn random_volume(grid: Grid3, seed: u64) -> ComplexVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexVolume::new(grid, data).unwrap()
    }

    fn rel(a: &ComplexVolume, b: &ComplexVolume) -> f64 {
        a.distance(b).unwrap() / b.norm()
    }

    #[test]
    fn identity_degradation() {
        let grid = Grid3::cube(5, 4, 3).unwrap();
        let x = random_volume(grid, 4);
        let cfg = DegradationConfig::noiseless(Decimation::IDENTITY, KernelChoice::Identity);
        assert!(rel(&apply_sh(&x, &cfg).unwrap(), &x) < 1e-14);
        assert!(rel(&apply_sh_adjoint(&x, &grid, &cfg).unwrap(), &x) < 1e-14);
    }

    #[test]
    fn crop_pipeline_is_sqrt_d_times_sh() {
        let hr = Grid3::cube(8, 4, 4).unwrap();
        let d = Decimation::new(2, 2, 1).unwrap();
        let lr = hr.decimated(d).unwrap();
        let cfg = DegradationConfig::noiseless(d, KernelChoice::Ideal);
        for seed in 0..5 {
            let x = random_volume(hr, seed);
            let fast = apply_sh(&x, &cfg).unwrap();
            let crop = inverse_fft(&crop_kspace(&forward_fft(&x), &lr).unwrap());
            let scaled = fast.scaled(Complex64::new((d.total() as f64).sqrt(), 0.0));
            assert!(rel(&crop, &scaled) < 1e-10);
        }
    }

    #[test]
    fn linear_and_adjoint_zero() {
        let hr = Grid3::cube(6, 4, 2).unwrap();
        let d = Decimation::new(3, 2, 1).unwrap();
        let cfg = DegradationConfig::noiseless(d, KernelChoice::gaussian_matched(d));
        let x = random_volume(hr, 1);
        let y = random_volume(hr, 2);
        let (a, b) = (Complex64::new(1.5, -0.3), Complex64::new(0.2, 2.0));
        let lhs = apply_sh(&x.scaled(a).axpy(b, &y).unwrap(), &cfg).unwrap();
        let rhs = apply_sh(&x, &cfg).unwrap().scaled(a).axpy(b, &apply_sh(&y, &cfg).unwrap()).unwrap();
        assert!(rel(&lhs, &rhs) < 1e-13);
        let z = apply_sh_adjoint(&ComplexVolume::zeros(hr.decimated(d).unwrap()), &hr, &cfg).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn divisibility_checked() {
        let x = random_volume(Grid3::cube(5, 4, 4).unwrap(), 0);
        let cfg = DegradationConfig::noiseless(Decimation::new(2, 2, 2).unwrap(), KernelChoice::Ideal);
        assert!(matches!(apply_sh(&x, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn calibration_formula() {
        let g = Grid3::cube(2, 1, 1).unwrap();
        let mag = ScalarVolume::new(g, vec![0.5, 1.0]).unwrap();
        let cal = calibrate_noise(&mag, 15.0).unwrap();
        let expect = 10f64.powf(-0.75) / 2f64.sqrt();
        assert!((cal.sigma - expect).abs() < 1e-15);
        assert!((cal.sigma - 0.1257).abs() < 1e-4);

        let doubled = ScalarVolume::new(g, vec![1.0, 2.0]).unwrap();
        assert!((calibrate_noise(&doubled, 15.0).unwrap().sigma - 2.0 * expect).abs() < 1e-15);
        assert!(calibrate_noise(&mag, 300.0).unwrap().sigma < 1e-15);
        assert!(calibrate_noise(&ScalarVolume::filled(g, 0.0).unwrap(), 15.0).is_err());
        assert!(calibrate_noise(&mag, f64::INFINITY).is_err());
    }

    #[test]
    fn noise_statistics() {
        let grid = Grid3::cube(32, 32, 32).unwrap();
        let sigma = 0.37;
        let mut rng = noise_rng(99, 0, Channel::V);
        let n = kspace_noise(&grid, sigma, &mut rng);
        let len = n.len() as f64;
        let mean: Complex64 = n.iter().sum::<Complex64>() / len;
        assert!(mean.norm() < 5.0 * sigma / len.sqrt());
        let var_re = n.iter().map(|z| (z.re - mean.re).powi(2)).sum::<f64>() / len;
        let var_im = n.iter().map(|z| (z.im - mean.im).powi(2)).sum::<f64>() / len;
        for v in [var_re, var_im] {
            assert!((v / (sigma * sigma) - 1.0).abs() < 0.05, "variance ratio {}", v / (sigma * sigma));
        }
    }

    #[test]
    fn rng_streams_are_distinct() {
        let grid = Grid3::cube(4, 1, 1).unwrap();
        let a = kspace_noise(&grid, 1.0, &mut noise_rng(1, 1, Channel::U));
        let b = kspace_noise(&grid, 1.0, &mut noise_rng(1, 0, Channel::V));
        let c = kspace_noise(&grid, 1.0, &mut noise_rng(1, 1, Channel::U));
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    fn small_dataset(grid: Grid3, frames: usize) -> VelocityDataset {
        let venc = 100.0;
        let params = AcquisitionParams::new(venc, frames, 0.04).unwrap();
        let fr = (0..frames)
            .map(|f| {
                let mag = ScalarVolume::from_fn(grid, |i, j, _| 1.0 + 0.1 * (i + j) as f64).unwrap();
                let u = ScalarVolume::from_fn(grid, |i, _, k| 10.0 * (i as f64 * 0.3 + k as f64 * 0.1 + f as f64).sin()).unwrap();
                let v = ScalarVolume::from_fn(grid, |_, j, _| 5.0 * j as f64 - 10.0).unwrap();
                let w = ScalarVolume::filled(grid, -20.0).unwrap();
                VelocityFrame::new(mag, u, v, w).unwrap()
            })
            .collect();
        VelocityDataset::new(params, fr).unwrap()
    }

    #[test]
    fn degrade_identity_is_lossless() {
        let hr = small_dataset(Grid3::cube(6, 4, 4).unwrap(), 2);
        let cfg = DegradationConfig::noiseless(Decimation::IDENTITY, KernelChoice::Ideal);
        let (lr, cal) = degrade_dataset(&hr, &cfg).unwrap();
        assert_eq!(cal.sigma, 0.0);
        for (a, b) in lr.frames().iter().zip(hr.frames()) {
            for (x, y) in a.magnitude().data().iter().zip(b.magnitude().data()) {
                assert!((x - y).abs() < 1e-10);
            }
            for c in Channel::ALL {
                for (x, y) in a.velocity(c).data().iter().zip(b.velocity(c).data()) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn degrade_is_seeded_and_calibrated() {
        let hr = small_dataset(Grid3::cube(16, 16, 8).unwrap(), 2);
        let cfg = DegradationConfig {
            d: Decimation::new(2, 2, 2).unwrap(),
            kernel: KernelChoice::Ideal,
            noise_psnr_db: Some(15.0),
            rng_seed: 7,
        };
        let (a, cal_a) = degrade_dataset(&hr, &cfg).unwrap();
        let (b, cal_b) = degrade_dataset(&hr, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(cal_a, cal_b);
        assert!((cal_a.achieved_psnr_db - 15.0).abs() < 0.5);
        let (c, _) = degrade_dataset(&hr, &DegradationConfig { rng_seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }
}
