//! Unitary 3D DFT, kernel spectra and k-space index bookkeeping.
//!
//! All spectra use DC-first (unshifted) ordering. Along an axis of HR length
//! `H` reduced to LR length `L`, the retained low-frequency bins are
//! `[0, ceil(L/2) - 1]` and `[H - floor(L/2), H - 1]`; LR bin `q` maps to HR
//! bin `q` when `q < ceil(L/2)` and to `q + H - L` otherwise.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::volume::{ComplexVolume, Decimation, Grid3};

/// 3D FFT with a unitary `1/sqrt(N)` scale in both directions.
///
/// Plans are cached per axis length. An engine is meant to be owned by one
/// worker; create one per thread.
pub struct FourierEngine {
    planner: FftPlanner<f64>,
}

impl Default for FourierEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl FourierEngine {
    pub fn new() -> Self {
        FourierEngine { planner: FftPlanner::new() }
    }

    pub fn forward(&mut self, x: &ComplexVolume) -> ComplexVolume {
        let mut data = x.data().to_vec();
        self.transform_in_place(x.grid(), &mut data, FftDirection::Forward);
        ComplexVolume::from_raw(*x.grid(), data)
    }

    pub fn inverse(&mut self, x: &ComplexVolume) -> ComplexVolume {
        let mut data = x.data().to_vec();
        self.transform_in_place(x.grid(), &mut data, FftDirection::Inverse);
        ComplexVolume::from_raw(*x.grid(), data)
    }

    pub(crate) fn transform_in_place(&mut self, grid: &Grid3, data: &mut [Complex64], dir: FftDirection) {
        let [m, n, s] = grid.dims();
        debug_assert_eq!(data.len(), m * n * s);
        let plan = |planner: &mut FftPlanner<f64>, len| -> Arc<dyn Fft<f64>> { planner.plan_fft(len, dir) };

        if m > 1 {
            let fft = plan(&mut self.planner, m);
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(data, &mut scratch);
        }

        if n > 1 {
            let fft = plan(&mut self.planner, n);
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            let mut slab = vec![Complex64::default(); m * n];
            for k in 0..s {
                let base = m * n * k;
                for j in 0..n {
                    for i in 0..m {
                        slab[j + n * i] = data[base + i + m * j];
                    }
                }
                fft.process_with_scratch(&mut slab, &mut scratch);
                for j in 0..n {
                    for i in 0..m {
                        data[base + i + m * j] = slab[j + n * i];
                    }
                }
            }
        }

        if s > 1 {
            let fft = plan(&mut self.planner, s);
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            let mut plane = vec![Complex64::default(); m * s];
            for j in 0..n {
                for k in 0..s {
                    let base = m * (j + n * k);
                    for i in 0..m {
                        plane[k + s * i] = data[base + i];
                    }
                }
                fft.process_with_scratch(&mut plane, &mut scratch);
                for k in 0..s {
                    let base = m * (j + n * k);
                    for i in 0..m {
                        data[base + i] = plane[k + s * i];
                    }
                }
            }
        }

        let scale = 1.0 / (data.len() as f64).sqrt();
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

/// Unitary forward 3D DFT using a throwaway engine.
pub fn forward_fft(x: &ComplexVolume) -> ComplexVolume {
    FourierEngine::new().forward(x)
}

/// Unitary inverse 3D DFT using a throwaway engine.
pub fn inverse_fft(x: &ComplexVolume) -> ComplexVolume {
    FourierEngine::new().inverse(x)
}

/// HR bin for every LR bin along one axis.
pub fn retained_bins(hr_len: usize, lr_len: usize) -> Vec<usize> {
    let pos = lr_len.div_ceil(2);
    (0..lr_len).map(|q| if q < pos { q } else { q + hr_len - lr_len }).collect()
}

/// Signed frequency index of DFT bin `k` on an axis of length `len`.
pub fn signed_frequency(k: usize, len: usize) -> i64 {
    if k <= (len - 1) / 2 {
        k as i64
    } else {
        k as i64 - len as i64
    }
}

/// Frequency response of the blur operator `H`, DC-first.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpectrum {
    grid: Grid3,
    values: Vec<Complex64>,
}

impl KernelSpectrum {
    pub fn new(grid: Grid3, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::mismatch(format!(
                "kernel spectrum has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::param("kernel spectrum contains non-finite values"));
        }
        Ok(KernelSpectrum { grid, values })
    }

    /// All-ones spectrum (`H = I`).
    pub fn identity(grid: Grid3) -> Self {
        KernelSpectrum { grid, values: vec![Complex64::new(1.0, 0.0); grid.len()] }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Applies `H` (or `H^H` when `adjoint`) to a spectrum in place.
    pub(crate) fn multiply(&self, spectrum: &mut [Complex64], adjoint: bool) {
        for (x, l) in spectrum.iter_mut().zip(&self.values) {
            *x *= if adjoint { l.conj() } else { *l };
        }
    }
}

/// Ideal low-pass response: 1 on the retained box of the decimated grid, 0 elsewhere.
pub fn ideal_lowpass_spectrum(hr: &Grid3, d: Decimation) -> Result<KernelSpectrum> {
    let lr = hr.decimated(d)?;
    let mut keep = [vec![false; hr.m()], vec![false; hr.n()], vec![false; hr.s()]];
    for axis in 0..3 {
        for b in retained_bins(hr.dims()[axis], lr.dims()[axis]) {
            keep[axis][b] = true;
        }
    }
    let mut values = Vec::with_capacity(hr.len());
    for k in 0..hr.s() {
        for j in 0..hr.n() {
            for i in 0..hr.m() {
                let on = keep[0][i] && keep[1][j] && keep[2][k];
                values.push(Complex64::new(if on { 1.0 } else { 0.0 }, 0.0));
            }
        }
    }
    Ok(KernelSpectrum { grid: *hr, values })
}

/// Separable Gaussian response with the given spatial FWHM (in HR voxels) per axis.
///
/// `exp(-2 pi^2 sigma^2 f^2)` with `sigma = fwhm / (2 sqrt(2 ln 2))` and `f`
/// the signed frequency in cycles per voxel.
pub fn gaussian_spectrum(hr: &Grid3, fwhm_voxels: [f64; 3]) -> Result<KernelSpectrum> {
    if fwhm_voxels.iter().any(|w| !(*w > 0.0) || w.is_nan()) {
        return Err(Error::param(format!("gaussian fwhm must be positive, got {fwhm_voxels:?}")));
    }
    let fwhm_to_sigma = 1.0 / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let axis_response = |len: usize, fwhm: f64| -> Vec<f64> {
        let sigma = fwhm * fwhm_to_sigma;
        (0..len)
            .map(|k| {
                let f = signed_frequency(k, len) as f64 / len as f64;
                // Nyquist bin of an even axis: use |f| = 1/2 so k and -k agree.
                let f = if len.is_multiple_of(2) && k == len / 2 { 0.5 } else { f };
                (-2.0 * std::f64::consts::PI.powi(2) * sigma * sigma * f * f).exp()
            })
            .collect()
    };
    let rx = axis_response(hr.m(), fwhm_voxels[0]);
    let ry = axis_response(hr.n(), fwhm_voxels[1]);
    let rz = axis_response(hr.s(), fwhm_voxels[2]);
    let mut values = Vec::with_capacity(hr.len());
    for k in 0..hr.s() {
        for j in 0..hr.n() {
            for i in 0..hr.m() {
                values.push(Complex64::new(rx[i] * ry[j] * rz[k], 0.0));
            }
        }
    }
    Ok(KernelSpectrum { grid: *hr, values })
}

/// HR spectrum re-indexed into the `d` aliased sub-blocks that overlap after decimation.
///
/// Block `b = (br, bc, bs)` at LR frequency `(p, q, r)` holds the HR bin
/// `(p + br*m_l, q + bc*n_l, r + bs*s_l)`. Blocks are numbered
/// `br + d_r * (bc + d_c * bs)`.
#[derive(Debug, Clone)]
pub struct FoldedSpectrum {
    lr_grid: Grid3,
    hr_grid: Grid3,
    d: Decimation,
    blocks: Vec<Vec<Complex64>>,
    gram: Vec<f64>,
    // hr_index[kappa * d + b] = HR linear index of block b at LR index kappa.
    hr_index: Vec<usize>,
}

impl FoldedSpectrum {
    pub fn lr_grid(&self) -> &Grid3 {
        &self.lr_grid
    }

    pub fn hr_grid(&self) -> &Grid3 {
        &self.hr_grid
    }

    pub fn decimation(&self) -> Decimation {
        self.d
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, b: usize) -> &[Complex64] {
        &self.blocks[b]
    }

    /// `sum_b |block_b|^2` per LR frequency (the diagonal of the folded Gram matrix).
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    /// HR linear indices of the `d` aliases of LR bin `kappa`, in block order.
    pub fn aliases(&self, kappa: usize) -> &[usize] {
        let d = self.blocks.len();
        &self.hr_index[kappa * d..(kappa + 1) * d]
    }

    /// Folds an HR-sized array with this spectrum's aliasing pattern.
    pub fn fold_values(&self, values: &[Complex64]) -> Vec<Vec<Complex64>> {
        let d = self.blocks.len();
        let nl = self.lr_grid.len();
        let mut out = vec![vec![Complex64::default(); nl]; d];
        for kappa in 0..nl {
            for (b, &h) in self.aliases(kappa).iter().enumerate() {
                out[b][kappa] = values[h];
            }
        }
        out
    }
}

pub fn fold_spectrum(spec: &KernelSpectrum, d: Decimation) -> Result<FoldedSpectrum> {
    let hr = *spec.grid();
    let lr = hr.decimated(d)?;
    let [dr, dc, ds] = d.rates();
    let [ml, nl, sl] = lr.dims();
    let dt = d.total();
    let n_lr = lr.len();

    let mut hr_index = vec![0usize; n_lr * dt];
    for r in 0..sl {
        for q in 0..nl {
            for p in 0..ml {
                let kappa = lr.index(p, q, r);
                for bs in 0..ds {
                    for bc in 0..dc {
                        for br in 0..dr {
                            let b = br + dr * (bc + dc * bs);
                            hr_index[kappa * dt + b] = hr.index(p + br * ml, q + bc * nl, r + bs * sl);
                        }
                    }
                }
            }
        }
    }

    let mut blocks = vec![vec![Complex64::default(); n_lr]; dt];
    let mut gram = vec![0.0; n_lr];
    for kappa in 0..n_lr {
        for b in 0..dt {
            let v = spec.values[hr_index[kappa * dt + b]];
            blocks[b][kappa] = v;
            gram[kappa] += v.norm_sqr();
        }
    }
    Ok(FoldedSpectrum { lr_grid: lr, hr_grid: hr, d, blocks, gram, hr_index })
}

fn check_box(hr: &Grid3, lr: &Grid3) -> Result<()> {
    let (h, l) = (hr.dims(), lr.dims());
    if (0..3).any(|a| l[a] > h[a]) {
        return Err(Error::param(format!("LR grid {l:?} larger than HR grid {h:?}")));
    }
    Ok(())
}

/// Copies the retained low-frequency box of an HR spectrum into an LR spectrum.
pub fn crop_kspace(x: &ComplexVolume, lr: &Grid3) -> Result<ComplexVolume> {
    let hr = *x.grid();
    check_box(&hr, lr)?;
    let bx = retained_bins(hr.m(), lr.m());
    let by = retained_bins(hr.n(), lr.n());
    let bz = retained_bins(hr.s(), lr.s());
    let src = x.data();
    let mut data = Vec::with_capacity(lr.len());
    for &k in &bz {
        for &j in &by {
            for &i in &bx {
                data.push(src[hr.index(i, j, k)]);
            }
        }
    }
    Ok(ComplexVolume::from_raw(*lr, data))
}

/// Places an LR spectrum into the retained box of a zero HR spectrum (adjoint of [`crop_kspace`]).
pub fn zero_pad_kspace(x: &ComplexVolume, hr: &Grid3) -> Result<ComplexVolume> {
    let lr = *x.grid();
    check_box(hr, &lr)?;
    let bx = retained_bins(hr.m(), lr.m());
    let by = retained_bins(hr.n(), lr.n());
    let bz = retained_bins(hr.s(), lr.s());
    let mut data = vec![Complex64::default(); hr.len()];
    let src = x.data();
    let mut idx = 0;
    for &k in &bz {
        for &j in &by {
            for &i in &bx {
                data[hr.index(i, j, k)] = src[idx];
                idx += 1;
            }
        }
    }
    Ok(ComplexVolume::from_raw(*hr, data))
}
