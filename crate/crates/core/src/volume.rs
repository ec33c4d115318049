//! Volumetric types and the velocity/phase/complex conversions.
//!
//! Voxels are stored lexicographically with x fastest, then y, then z:
//! `index = i + m * (j + n * k)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A 3D lattice: `m` rows (x), `n` columns (y), `s` slices (z), plus the
/// physical voxel spacing in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    m: usize,
    n: usize,
    s: usize,
    spacing: [f64; 3],
}

impl Grid3 {
    pub fn new(m: usize, n: usize, s: usize, spacing: [f64; 3]) -> Result<Self> {
        if m == 0 || n == 0 || s == 0 {
            return Err(Error::param(format!("grid dims must be >= 1, got {m}x{n}x{s}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::param(format!("grid spacing must be positive, got {spacing:?}")));
        }
        Ok(Grid3 { m, n, s, spacing })
    }

    /// Unit-spacing grid.
    pub fn cube(m: usize, n: usize, s: usize) -> Result<Self> {
        Self::new(m, n, s, [1.0; 3])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.m, self.n, self.s]
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.m * self.n * self.s
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.m * (j + self.n * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.m;
        let j = (idx / self.m) % self.n;
        let k = idx / (self.m * self.n);
        (i, j, k)
    }

    pub fn same_shape(&self, other: &Grid3) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn ensure_same(&self, other: &Grid3, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::mismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    /// The low-resolution grid obtained by decimating each axis by `d`.
    pub fn decimated(&self, d: Decimation) -> Result<Grid3> {
        d.check_divides(self)?;
        let [dr, dc, ds] = d.rates();
        Grid3::new(
            self.m / dr,
            self.n / dc,
            self.s / ds,
            [self.spacing[0] * dr as f64, self.spacing[1] * dc as f64, self.spacing[2] * ds as f64],
        )
    }

    /// The high-resolution grid obtained by refining each axis by `d`.
    pub fn refined(&self, d: Decimation) -> Result<Grid3> {
        let [dr, dc, ds] = d.rates();
        Grid3::new(
            self.m * dr,
            self.n * dc,
            self.s * ds,
            [self.spacing[0] / dr as f64, self.spacing[1] / dc as f64, self.spacing[2] / ds as f64],
        )
    }
}

/// Integer decimation rates `(d_r, d_c, d_s)` along x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decimation([usize; 3]);

impl Decimation {
    pub const IDENTITY: Decimation = Decimation([1, 1, 1]);

    pub fn new(dr: usize, dc: usize, ds: usize) -> Result<Self> {
        if dr == 0 || dc == 0 || ds == 0 {
            return Err(Error::param(format!("decimation rates must be >= 1, got ({dr},{dc},{ds})")));
        }
        Ok(Decimation([dr, dc, ds]))
    }

    pub fn uniform(d: usize) -> Result<Self> {
        Self::new(d, d, d)
    }

    pub fn rates(&self) -> [usize; 3] {
        self.0
    }

    /// Total rate `d = d_r * d_c * d_s`.
    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn check_divides(&self, hr: &Grid3) -> Result<()> {
        let dims = hr.dims();
        for axis in 0..3 {
            if !dims[axis].is_multiple_of(self.0[axis]) {
                return Err(Error::config(format!(
                    "decimation rate {} does not divide HR dimension {} on axis {axis}",
                    self.0[axis], dims[axis]
                )));
            }
        }
        Ok(())
    }
}

fn check_finite<'a>(mut it: impl Iterator<Item = &'a f64>, what: &str) -> Result<()> {
    if it.any(|x| !x.is_finite()) {
        return Err(Error::param(format!("{what} contains non-finite samples")));
    }
    Ok(())
}

/// One real sample per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    grid: Grid3,
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(grid: Grid3, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::mismatch(format!(
                "scalar volume has {} samples, grid needs {}",
                data.len(),
                grid.len()
            )));
        }
        check_finite(data.iter(), "scalar volume")?;
        Ok(ScalarVolume { grid, data })
    }

    pub fn filled(grid: Grid3, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn from_fn(grid: Grid3, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.s() {
            for j in 0..grid.n() {
                for i in 0..grid.m() {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(grid, data)
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.index(i, j, k)]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Replaces the grid metadata (spacing) keeping the samples; the shape must match.
    pub fn with_grid(self, grid: Grid3) -> Result<Self> {
        self.grid.ensure_same(&grid, "with_grid")?;
        Ok(ScalarVolume { grid, data: self.data })
    }
}

/// One complex sample per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVolume {
    grid: Grid3,
    data: Vec<Complex64>,
}

impl ComplexVolume {
    pub fn new(grid: Grid3, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::mismatch(format!(
                "complex volume has {} samples, grid needs {}",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::param("complex volume contains non-finite samples"));
        }
        Ok(ComplexVolume { grid, data })
    }

    pub fn zeros(grid: Grid3) -> Self {
        ComplexVolume { grid, data: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid3, mut f: impl FnMut(usize, usize, usize) -> Complex64) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.s() {
            for j in 0..grid.n() {
                for i in 0..grid.m() {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(grid, data)
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.data[self.grid.index(i, j, k)]
    }

    /// Squared l2 norm.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.energy().sqrt()
    }

    /// Inner product `<self, other> = sum conj(self) * other`.
    pub fn inner(&self, other: &ComplexVolume) -> Result<Complex64> {
        self.grid.ensure_same(&other.grid, "inner product")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn scaled(&self, factor: Complex64) -> ComplexVolume {
        ComplexVolume { grid: self.grid, data: self.data.iter().map(|z| z * factor).collect() }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: Complex64, other: &ComplexVolume) -> Result<ComplexVolume> {
        self.grid.ensure_same(&other.grid, "axpy")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect();
        Ok(ComplexVolume { grid: self.grid, data })
    }

    /// `||self - other||_2`.
    pub fn distance(&self, other: &ComplexVolume) -> Result<f64> {
        self.grid.ensure_same(&other.grid, "distance")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
    }

    pub fn real_part(&self) -> ScalarVolume {
        ScalarVolume { grid: self.grid, data: self.data.iter().map(|z| z.re).collect() }
    }

    pub fn imag_part(&self) -> ScalarVolume {
        ScalarVolume { grid: self.grid, data: self.data.iter().map(|z| z.im).collect() }
    }

    pub fn from_parts(re: &ScalarVolume, im: &ScalarVolume) -> Result<ComplexVolume> {
        re.grid.ensure_same(&im.grid, "from_parts")?;
        let data = re.data.iter().zip(&im.data).map(|(&a, &b)| Complex64::new(a, b)).collect();
        Ok(ComplexVolume { grid: re.grid, data })
    }

    pub fn with_grid(self, grid: Grid3) -> Result<Self> {
        self.grid.ensure_same(&grid, "with_grid")?;
        Ok(ComplexVolume { grid, data: self.data })
    }

    // Bypasses the finiteness scan for buffers produced by internal arithmetic.
    pub(crate) fn from_raw(grid: Grid3, data: Vec<Complex64>) -> ComplexVolume {
        debug_assert_eq!(grid.len(), data.len());
        ComplexVolume { grid, data }
    }
}

/// Scan parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionParams {
    venc: f64,
    frame_count: usize,
    frame_interval: f64,
}

impl AcquisitionParams {
    pub fn new(venc: f64, frame_count: usize, frame_interval: f64) -> Result<Self> {
        check_venc(venc)?;
        if frame_count == 0 {
            return Err(Error::param("frame_count must be >= 1"));
        }
        Ok(AcquisitionParams { venc, frame_count, frame_interval })
    }

    /// Maximum encodable speed in cm/s.
    pub fn venc(&self) -> f64 {
        self.venc
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    /// Seconds between frames. Metadata only; not persisted in volume files.
    pub fn frame_interval(&self) -> f64 {
        self.frame_interval
    }
}

/// Velocity encoding direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    U,
    V,
    W,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::U, Channel::V, Channel::W];

    pub fn name(self) -> &'static str {
        match self {
            Channel::U => "u",
            Channel::V => "v",
            Channel::W => "w",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Channel::U => 0,
            Channel::V => 1,
            Channel::W => 2,
        }
    }
}

/// Magnitude and three velocity components for one cardiac phase.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFrame {
    magnitude: ScalarVolume,
    velocity: [ScalarVolume; 3],
}

impl VelocityFrame {
    pub fn new(magnitude: ScalarVolume, u: ScalarVolume, v: ScalarVolume, w: ScalarVolume) -> Result<Self> {
        let g = *magnitude.grid();
        for (vol, name) in [(&u, "u"), (&v, "v"), (&w, "w")] {
            if vol.grid() != &g {
                return Err(Error::mismatch(format!(
                    "frame channel {name} grid {:?} differs from magnitude grid {:?}",
                    vol.grid().dims(),
                    g.dims()
                )));
            }
        }
        Ok(VelocityFrame { magnitude, velocity: [u, v, w] })
    }

    pub fn grid(&self) -> &Grid3 {
        self.magnitude.grid()
    }

    pub fn magnitude(&self) -> &ScalarVolume {
        &self.magnitude
    }

    pub fn velocity(&self, c: Channel) -> &ScalarVolume {
        &self.velocity[c.index()]
    }

    pub fn u(&self) -> &ScalarVolume {
        &self.velocity[0]
    }

    pub fn v(&self) -> &ScalarVolume {
        &self.velocity[1]
    }

    pub fn w(&self) -> &ScalarVolume {
        &self.velocity[2]
    }

    /// Velocity 3-vector at a linear voxel index.
    pub fn vector_at(&self, idx: usize) -> [f64; 3] {
        [self.velocity[0].data[idx], self.velocity[1].data[idx], self.velocity[2].data[idx]]
    }
}

/// A time series of velocity frames on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityDataset {
    params: AcquisitionParams,
    frames: Vec<VelocityFrame>,
}

impl VelocityDataset {
    pub fn new(params: AcquisitionParams, frames: Vec<VelocityFrame>) -> Result<Self> {
        if frames.len() != params.frame_count() {
            return Err(Error::mismatch(format!(
                "dataset has {} frames, params declare {}",
                frames.len(),
                params.frame_count()
            )));
        }
        let g = *frames[0].grid();
        if frames.iter().any(|f| f.grid() != &g) {
            return Err(Error::mismatch("frames do not share one grid"));
        }
        Ok(VelocityDataset { params, frames })
    }

    pub fn params(&self) -> &AcquisitionParams {
        &self.params
    }

    pub fn venc(&self) -> f64 {
        self.params.venc()
    }

    pub fn frames(&self) -> &[VelocityFrame] {
        &self.frames
    }

    pub fn grid(&self) -> &Grid3 {
        self.frames[0].grid()
    }
}

fn check_venc(venc: f64) -> Result<()> {
    if venc > 0.0 && venc.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("venc must be positive and finite, got {venc}")))
    }
}

/// Per-voxel phase `pi * v / venc` in radians.
pub fn velocity_to_phase(vel: &ScalarVolume, venc: f64) -> Result<ScalarVolume> {
    check_venc(venc)?;
    let scale = PI / venc;
    Ok(ScalarVolume { grid: vel.grid, data: vel.data.iter().map(|v| v * scale).collect() })
}

/// Per-voxel velocity `venc * phase / pi` in cm/s.
pub fn phase_to_velocity(phase: &ScalarVolume, venc: f64) -> Result<ScalarVolume> {
    check_venc(venc)?;
    let scale = venc / PI;
    Ok(ScalarVolume { grid: phase.grid, data: phase.data.iter().map(|p| p * scale).collect() })
}

/// Builds `A * exp(i * pi * v / venc)`. Rejects any voxel with `|v| >= venc`.
pub fn synthesize_complex(magnitude: &ScalarVolume, vel: &ScalarVolume, venc: f64) -> Result<ComplexVolume> {
    synthesize_inner(magnitude, vel, venc, false)
}

// `allow_boundary` admits |v| == venc, which `extract_velocity` can emit for arg = pi.
pub(crate) fn synthesize_inner(
    magnitude: &ScalarVolume,
    vel: &ScalarVolume,
    venc: f64,
    allow_boundary: bool,
) -> Result<ComplexVolume> {
    check_venc(venc)?;
    magnitude.grid.ensure_same(&vel.grid, "synthesize_complex")?;
    if let Some(a) = magnitude.data.iter().find(|a| **a < 0.0) {
        return Err(Error::param(format!("negative magnitude {a}")));
    }
    let aliased = vel
        .data
        .iter()
        .filter(|v| if allow_boundary { v.abs() > venc } else { v.abs() >= venc })
        .count();
    if aliased > 0 {
        return Err(Error::Aliasing { count: aliased, venc });
    }
    let scale = PI / venc;
    let data = magnitude
        .data
        .iter()
        .zip(&vel.data)
        .map(|(&a, &v)| Complex64::from_polar(a, v * scale))
        .collect();
    Ok(ComplexVolume { grid: magnitude.grid, data })
}

/// Splits a complex signal into magnitude and velocity `venc * arg / pi`.
/// `arg(0)` is taken as 0.
pub fn extract_velocity(signal: &ComplexVolume, venc: f64) -> Result<(ScalarVolume, ScalarVolume)> {
    check_venc(venc)?;
    let scale = venc / PI;
    let mut mag = Vec::with_capacity(signal.data.len());
    let mut vel = Vec::with_capacity(signal.data.len());
    for z in &signal.data {
        mag.push(z.norm());
        // atan2(-0.0, x<0) would give -pi; normalise so arg lies in (-pi, pi].
        let arg = if z.re == 0.0 && z.im == 0.0 {
            0.0
        } else if z.im == 0.0 && z.re < 0.0 {
            PI
        } else {
            z.im.atan2(z.re)
        };
        vel.push(arg * scale);
    }
    Ok((
        ScalarVolume { grid: signal.grid, data: mag },
        ScalarVolume { grid: signal.grid, data: vel },
    ))
}
