//! Analytic ground-truth flow fields.

use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{AcquisitionParams, Grid3, ScalarVolume, VelocityDataset, VelocityFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Straight tube with a parabolic axial profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PoiseuilleParams {
    pub radius_voxels: f64,
    pub axis: Axis,
    /// Centreline speed per frame, cm/s.
    pub v_max: Vec<f64>,
    pub venc: f64,
    pub magnitude_in: f64,
    pub magnitude_out: f64,
    pub frame_interval: f64,
}

/// Rotating flow in a tube along z: `v = (-omega y, omega x, v_z(r))`.
#[derive(Debug, Clone, PartialEq)]
pub struct HelixParams {
    pub radius_voxels: f64,
    /// Angular rate in cm/s per voxel of radius.
    pub omega: f64,
    /// Centreline axial speed per frame, cm/s; the axial profile is parabolic.
    pub v_axial: Vec<f64>,
    pub venc: f64,
    pub magnitude_in: f64,
    pub magnitude_out: f64,
    pub frame_interval: f64,
}

/// A smooth positive cardiac-like waveform: `peak * (0.55 + 0.45 sin(pi t))` over `frames` samples.
pub fn pulsatile_waveform(peak: f64, frames: usize) -> Vec<f64> {
    (0..frames)
        .map(|f| {
            let t = (f as f64 + 1.0) / (frames as f64 + 1.0);
            peak * (0.55 + 0.45 * (std::f64::consts::PI * t).sin())
        })
        .collect()
}

fn center(len: usize) -> f64 {
    (len as f64 - 1.0) / 2.0
}

fn check_common(grid: &Grid3, radius: f64, cross: [usize; 2], frames: usize, mag_in: f64, mag_out: f64) -> Result<()> {
    let dims = grid.dims();
    let room = cross.iter().map(|&a| dims[a] as f64 / 2.0).fold(f64::INFINITY, f64::min);
    if !(radius > 0.0 && radius <= room) {
        return Err(Error::param(format!("tube radius {radius} does not fit the cross-section (max {room})")));
    }
    if frames == 0 {
        return Err(Error::param("phantom needs at least one frame"));
    }
    if !(mag_in >= 0.0 && mag_out >= 0.0) {
        return Err(Error::param("phantom magnitudes must be non-negative"));
    }
    Ok(())
}

pub fn poiseuille_phantom(grid: Grid3, p: &PoiseuilleParams) -> Result<VelocityDataset> {
    let ax = p.axis.index();
    let cross = [(ax + 1) % 3, (ax + 2) % 3];
    check_common(&grid, p.radius_voxels, cross, p.v_max.len(), p.magnitude_in, p.magnitude_out)?;
    let peak = p.v_max.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak >= p.venc {
        return Err(Error::Aliasing { count: 1, venc: p.venc });
    }
    let params = AcquisitionParams::new(p.venc, p.v_max.len(), p.frame_interval)?;
    let dims = grid.dims();
    let c = [center(dims[0]), center(dims[1]), center(dims[2])];
    let r2 = p.radius_voxels * p.radius_voxels;
    let rho2 = |i: usize, j: usize, k: usize| {
        let pos = [i as f64, j as f64, k as f64];
        cross.iter().map(|&a| (pos[a] - c[a]).powi(2)).sum::<f64>()
    };
    let magnitude = ScalarVolume::from_fn(grid, |i, j, k| if rho2(i, j, k) <= r2 { p.magnitude_in } else { p.magnitude_out })?;
    let profile = ScalarVolume::from_fn(grid, |i, j, k| (1.0 - rho2(i, j, k) / r2).max(0.0))?;
    let zero = ScalarVolume::filled(grid, 0.0)?;
    let frames = p
        .v_max
        .iter()
        .map(|&vm| {
            let axial = ScalarVolume::new(grid, profile.data().iter().map(|s| vm * s).collect())?;
            let mut comps = [zero.clone(), zero.clone(), zero.clone()];
            comps[ax] = axial;
            let [u, v, w] = comps;
            VelocityFrame::new(magnitude.clone(), u, v, w)
        })
        .collect::<Result<Vec<_>>>()?;
    VelocityDataset::new(params, frames)
}

pub fn helix_phantom(grid: Grid3, p: &HelixParams) -> Result<VelocityDataset> {
    check_common(&grid, p.radius_voxels, [0, 1], p.v_axial.len(), p.magnitude_in, p.magnitude_out)?;
    let params = AcquisitionParams::new(p.venc, p.v_axial.len(), p.frame_interval)?;
    let (cx, cy) = (center(grid.m()), center(grid.n()));
    let r2 = p.radius_voxels * p.radius_voxels;
    let inside = |i: usize, j: usize| (i as f64 - cx).powi(2) + (j as f64 - cy).powi(2) <= r2;
    let magnitude = ScalarVolume::from_fn(grid, |i, j, _| if inside(i, j) { p.magnitude_in } else { p.magnitude_out })?;
    let u = ScalarVolume::from_fn(grid, |i, j, _| if inside(i, j) { -p.omega * (j as f64 - cy) } else { 0.0 })?;
    let v = ScalarVolume::from_fn(grid, |i, j, _| if inside(i, j) { p.omega * (i as f64 - cx) } else { 0.0 })?;
    let profile = ScalarVolume::from_fn(grid, |i, j, _| {
        let rho2 = (i as f64 - cx).powi(2) + (j as f64 - cy).powi(2);
        if rho2 <= r2 {
            1.0 - rho2 / r2
        } else {
            0.0
        }
    })?;

    let mut frames = Vec::with_capacity(p.v_axial.len());
    for &va in &p.v_axial {
        let w = ScalarVolume::new(grid, profile.data().iter().map(|s| va * s).collect())?;
        let over = (0..grid.len())
            .filter(|&i| {
                let s2 = u.data()[i].powi(2) + v.data()[i].powi(2) + w.data()[i].powi(2);
                s2.sqrt() >= p.venc
            })
            .count();
        if over > 0 {
            return Err(Error::Aliasing { count: over, venc: p.venc });
        }
        frames.push(VelocityFrame::new(magnitude.clone(), u.clone(), v.clone(), w)?);
    }
    VelocityDataset::new(params, frames)
}

/// Reads an externally produced dataset in the FLW4 volume format.
pub fn load_external(path: impl AsRef<Path>) -> Result<VelocityDataset> {
    crate::io::load_dataset(path)
}
