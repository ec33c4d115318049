//! Trilinear and tricubic upsampling on the decimation lattice.
//!
//! LR voxel `p` sits on HR voxel `p * d` (the voxel kept by `S`); HR voxels
//! past the last LR sample are clamped to the edge.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::volume::{ComplexVolume, Decimation, ScalarVolume, VelocityDataset, VelocityFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpMethod {
    Trilinear,
    /// Catmull-Rom (Keys, a = -0.5) tensor-product cubic.
    Tricubic,
}

impl InterpMethod {
    pub fn name(self) -> &'static str {
        match self {
            InterpMethod::Trilinear => "trilinear",
            InterpMethod::Tricubic => "tricubic",
        }
    }
}

impl FromStr for InterpMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trilinear" => Ok(InterpMethod::Trilinear),
            "tricubic" => Ok(InterpMethod::Tricubic),
            other => Err(Error::param(format!("unknown interpolation method '{other}'"))),
        }
    }
}

fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

// Taps (LR index, weight) for every HR position along one axis.
fn axis_taps(lr_len: usize, d: usize, method: InterpMethod) -> Vec<Vec<(usize, f64)>> {
    let last = lr_len as isize - 1;
    let clamp = |i: isize| i.clamp(0, last) as usize;
    (0..lr_len * d)
        .map(|h| {
            let i0 = (h / d) as isize;
            let t = (h % d) as f64 / d as f64;
            if t == 0.0 {
                return vec![(i0 as usize, 1.0)];
            }
            match method {
                InterpMethod::Trilinear => vec![(clamp(i0), 1.0 - t), (clamp(i0 + 1), t)],
                InterpMethod::Tricubic => {
                    let w = cubic_weights(t);
                    (0..4).map(|o| (clamp(i0 - 1 + o as isize), w[o])).collect()
                }
            }
        })
        .collect()
}

// Separable resampling of a raw x-fastest buffer.
fn upsample_raw(src: &[f64], dims: [usize; 3], d: [usize; 3], method: InterpMethod) -> Vec<f64> {
    let mut cur = src.to_vec();
    let mut cur_dims = dims;
    for axis in 0..3 {
        if d[axis] == 1 {
            continue;
        }
        let taps = axis_taps(cur_dims[axis], d[axis], method);
        let mut out_dims = cur_dims;
        out_dims[axis] *= d[axis];
        let [om, on, os] = out_dims;
        let [cm, cn, _] = cur_dims;
        let mut out = vec![0.0; om * on * os];
        for k in 0..os {
            for j in 0..on {
                for i in 0..om {
                    let pos = [i, j, k];
                    let mut acc = 0.0;
                    for &(t, w) in &taps[pos[axis]] {
                        let mut p = pos;
                        p[axis] = t;
                        acc += w * cur[p[0] + cm * (p[1] + cn * p[2])];
                    }
                    out[i + om * (j + on * k)] = acc;
                }
            }
        }
        cur = out;
        cur_dims = out_dims;
    }
    cur
}

pub fn upsample_velocity(vel: &ScalarVolume, d: Decimation, method: InterpMethod) -> Result<ScalarVolume> {
    let hr = vel.grid().refined(d)?;
    ScalarVolume::new(hr, upsample_raw(vel.data(), vel.grid().dims(), d.rates(), method))
}

/// Interpolates real and imaginary parts separately.
pub fn upsample_complex(x: &ComplexVolume, d: Decimation, method: InterpMethod) -> Result<ComplexVolume> {
    let re = upsample_velocity(&x.real_part(), d, method)?;
    let im = upsample_velocity(&x.imag_part(), d, method)?;
    ComplexVolume::from_parts(&re, &im)
}

/// Upsamples magnitude and the three velocity channels of every frame.
pub fn upsample_dataset(lr: &VelocityDataset, d: Decimation, method: InterpMethod) -> Result<VelocityDataset> {
    use rayon::prelude::*;
    let frames = lr
        .frames()
        .par_iter()
        .map(|f| {
            VelocityFrame::new(
                upsample_velocity(f.magnitude(), d, method)?,
                upsample_velocity(f.u(), d, method)?,
                upsample_velocity(f.v(), d, method)?,
                upsample_velocity(f.w(), d, method)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    VelocityDataset::new(*lr.params(), frames)
}
