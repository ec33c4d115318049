//! The FLW4 volume format and small text sidecars.
//!
//! Layout, little-endian throughout:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 4  | magic `FLW4` |
//! | 4  | 2  | version (u16, = 1) |
//! | 6  | 12 | dims m, n, s (u32 each) |
//! | 18 | 4  | frame count (u32) |
//! | 22 | 8  | venc, cm/s (f64) |
//! | 30 | 24 | spacing x, y, z, mm (f64 each) |
//! | 54 | 2  | channel layout code (u16, 1 = magnitude, u, v, w) |
//! | 56 | .. | f32 samples: for each frame, magnitude then u, v, w; each x-fastest |

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::forward::NoiseCalibration;
use crate::solver::ChannelReport;
use crate::volume::{AcquisitionParams, Grid3, ScalarVolume, VelocityDataset, VelocityFrame};

pub const MAGIC: &[u8; 4] = b"FLW4";
pub const VERSION: u16 = 1;
pub const LAYOUT_MAG_UVW: u16 = 1;
pub const HEADER_LEN: usize = 56;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeFileHeader {
    pub version: u16,
    pub dims: [u32; 3],
    pub frame_count: u32,
    pub venc: f64,
    pub spacing: [f64; 3],
    pub layout: u16,
}

impl VolumeFileHeader {
    pub fn payload_len(&self) -> u64 {
        let n: u64 = self.dims.iter().map(|&d| d as u64).product();
        self.frame_count as u64 * 4 * n * 4
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        for (a, d) in self.dims.iter().enumerate() {
            b[6 + 4 * a..10 + 4 * a].copy_from_slice(&d.to_le_bytes());
        }
        b[18..22].copy_from_slice(&self.frame_count.to_le_bytes());
        b[22..30].copy_from_slice(&self.venc.to_le_bytes());
        for (a, h) in self.spacing.iter().enumerate() {
            b[30 + 8 * a..38 + 8 * a].copy_from_slice(&h.to_le_bytes());
        }
        b[54..56].copy_from_slice(&self.layout.to_le_bytes());
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let perr = |offset: usize, message: String| Error::Parse { offset: offset as u64, message };
        if bytes.len() < HEADER_LEN {
            return Err(perr(bytes.len(), format!("truncated header: need {HEADER_LEN} bytes, have {}", bytes.len())));
        }
        if &bytes[0..4] != MAGIC {
            return Err(perr(0, format!("bad magic {:?}, expected \"FLW4\"", String::from_utf8_lossy(&bytes[0..4]))));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

        let version = u16_at(4);
        if version != VERSION {
            return Err(perr(4, format!("unsupported version {version}, expected {VERSION}")));
        }
        let dims = [u32_at(6), u32_at(10), u32_at(14)];
        for (a, d) in dims.iter().enumerate() {
            if *d == 0 {
                return Err(perr(6 + 4 * a, "dimension must be >= 1".into()));
            }
        }
        let frame_count = u32_at(18);
        if frame_count == 0 {
            return Err(perr(18, "frame count must be >= 1".into()));
        }
        let venc = f64_at(22);
        if !(venc > 0.0 && venc.is_finite()) {
            return Err(perr(22, format!("venc must be positive and finite, got {venc}")));
        }
        let spacing = [f64_at(30), f64_at(38), f64_at(46)];
        for (a, h) in spacing.iter().enumerate() {
            if !(*h > 0.0 && h.is_finite()) {
                return Err(perr(30 + 8 * a, format!("spacing must be positive and finite, got {h}")));
            }
        }
        let layout = u16_at(54);
        if layout != LAYOUT_MAG_UVW {
            return Err(perr(54, format!("unknown channel layout code {layout}")));
        }
        Ok(VolumeFileHeader { version, dims, frame_count, venc, spacing, layout })
    }
}

fn to_f32(x: f64) -> Result<f32> {
    let v = x as f32;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::param(format!("sample {x} is not representable as f32")))
    }
}

pub fn encode_dataset(ds: &VelocityDataset) -> Result<Vec<u8>> {
    let g = ds.grid();
    let dim = |d: usize| u32::try_from(d).map_err(|_| Error::param(format!("dimension {d} exceeds u32")));
    let header = VolumeFileHeader {
        version: VERSION,
        dims: [dim(g.m())?, dim(g.n())?, dim(g.s())?],
        frame_count: dim(ds.frames().len())?,
        venc: ds.venc(),
        spacing: g.spacing(),
        layout: LAYOUT_MAG_UVW,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len() as usize);
    out.extend_from_slice(&header.to_bytes());
    for f in ds.frames() {
        for vol in [f.magnitude(), f.u(), f.v(), f.w()] {
            for &x in vol.data() {
                out.extend_from_slice(&to_f32(x)?.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<VelocityDataset> {
    let header = VolumeFileHeader::parse(bytes)?;
    let expected = HEADER_LEN as u64 + header.payload_len();
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Parse {
            offset: actual,
            message: format!("truncated payload: expected {expected} bytes in total, file ends at {actual}"),
        });
    }
    if actual > expected {
        return Err(Error::Parse { offset: expected, message: format!("{} trailing bytes after payload", actual - expected) });
    }
    let [m, n, s] = header.dims.map(|d| d as usize);
    let grid = Grid3::new(m, n, s, header.spacing)?;
    let params = AcquisitionParams::new(header.venc, header.frame_count as usize, 0.0)?;
    let nvox = grid.len();
    let mut offset = HEADER_LEN;
    let mut read_volume = || -> Result<ScalarVolume> {
        let mut data = Vec::with_capacity(nvox);
        for _ in 0..nvox {
            let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Parse { offset: offset as u64, message: format!("non-finite sample {v}") });
            }
            data.push(v as f64);
            offset += 4;
        }
        ScalarVolume::new(grid, data)
    };
    let mut frames = Vec::with_capacity(params.frame_count());
    for _ in 0..params.frame_count() {
        let mag = read_volume()?;
        let u = read_volume()?;
        let v = read_volume()?;
        let w = read_volume()?;
        frames.push(VelocityFrame::new(mag, u, v, w)?);
    }
    VelocityDataset::new(params, frames)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp-{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes via a temporary sibling file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp = temp_path(path);
    let res = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &VelocityDataset) -> Result<()> {
    write_atomic(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<VelocityDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

/// `key=value` sidecar for a noise calibration.
pub fn calibration_text(cal: &NoiseCalibration) -> String {
    let target = cal.target_psnr_db.map_or_else(|| "none".to_string(), |t| t.to_string());
    format!(
        "sigma={}\npeak={}\ntarget_psnr_db={}\nachieved_psnr_db={}\n",
        cal.sigma, cal.peak, target, cal.achieved_psnr_db
    )
}

pub fn parse_calibration(text: &str) -> Result<NoiseCalibration> {
    let mut sigma = None;
    let mut peak = None;
    let mut target = None;
    let mut achieved = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::config(format!("bad calibration line '{line}'")))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| Error::config(format!("bad number '{v}' for {k}")));
        match k.trim() {
            "sigma" => sigma = Some(num(v)?),
            "peak" => peak = Some(num(v)?),
            "target_psnr_db" => target = Some(if v.trim() == "none" { None } else { Some(num(v)?) }),
            "achieved_psnr_db" => achieved = Some(num(v)?),
            other => return Err(Error::config(format!("unknown calibration key '{other}'"))),
        }
    }
    let missing = |k: &str| Error::config(format!("calibration is missing '{k}'"));
    Ok(NoiseCalibration {
        sigma: sigma.ok_or_else(|| missing("sigma"))?,
        peak: peak.ok_or_else(|| missing("peak"))?,
        target_psnr_db: target.ok_or_else(|| missing("target_psnr_db"))?,
        achieved_psnr_db: achieved.ok_or_else(|| missing("achieved_psnr_db"))?,
    })
}

pub const SOLVE_CSV_HEADER: &str = "frame,channel,residual,prior_distance,objective,wall_time_s";

pub fn solve_reports_csv(reports: &[ChannelReport]) -> String {
    let mut out = format!("{SOLVE_CSV_HEADER}\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.frame,
            r.channel.name(),
            r.report.residual,
            r.report.prior_distance,
            r.report.objective,
            r.report.wall_time_s
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset() -> VelocityDataset {
        let grid = Grid3::new(3, 2, 2, [1.5, 1.5, 2.0]).unwrap();
        let params = AcquisitionParams::new(120.0, 2, 0.0).unwrap();
        let frames = (0..2)
            .map(|f| {
                let s = |o: f64| ScalarVolume::from_fn(grid, |i, j, k| o + (i + 3 * j + 6 * k) as f64 * 0.37 + f as f64).unwrap();
                VelocityFrame::new(s(1.0), s(-5.0), s(2.0), s(0.1)).unwrap()
            })
            .collect();
        VelocityDataset::new(params, frames).unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_dataset(&dataset()).unwrap();
        assert_eq!(&bytes[0..4], b"FLW4");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[18..22].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[22..30].try_into().unwrap()), 120.0);
        assert_eq!(f64::from_le_bytes(bytes[46..54].try_into().unwrap()), 2.0);
        assert_eq!(u16::from_le_bytes([bytes[54], bytes[55]]), 1);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 4 * 12 * 4);
        // first payload sample: frame 0 magnitude at voxel 0
        assert_eq!(f32::from_le_bytes(bytes[56..60].try_into().unwrap()), 1.0);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let bytes = encode_dataset(&dataset()).unwrap();
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(encode_dataset(&back).unwrap(), bytes);
        assert_eq!(back.venc(), 120.0);
        assert_eq!(back.grid().spacing(), [1.5, 1.5, 2.0]);
    }

    #[test]
    fn truncation_names_offset() {
        let bytes = encode_dataset(&dataset()).unwrap();
        match decode_dataset(&bytes[..100]) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 100),
            other => panic!("{other:?}"),
        }
        match decode_dataset(&bytes[..20]) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 20);
                assert!(message.contains("truncated header"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn calibration_round_trip() {
        let cal = NoiseCalibration { sigma: 0.125, peak: 2.0, target_psnr_db: Some(15.0), achieved_psnr_db: 14.98 };
        assert_eq!(parse_calibration(&calibration_text(&cal)).unwrap(), cal);
        let none = NoiseCalibration { sigma: 0.0, peak: 0.0, target_psnr_db: None, achieved_psnr_db: f64::INFINITY };
        assert_eq!(parse_calibration(&calibration_text(&none)).unwrap(), none);
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.flw");
        save_dataset(&p, &dataset()).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("a.flw")]);
        assert_eq!(load_dataset(&p).unwrap(), decode_dataset(&fs::read(&p).unwrap()).unwrap());
    }
}
