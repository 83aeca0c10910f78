//! On-disk dataset layout, trajectory and diagnostics files.
//!
//! ```text
//! intrinsics.txt        fx fy cx cy width height
//! gyro.csv, accel.csv   t_ns,gx,gy,gz,ax,ay,az
//! frames.csv            t_ns,filename   (files under frames/, 8-bit PGM)
//! groundtruth.csv       t_ns,x,y,z
//! oracle_foc.csv        t_ns,fx,fy,fz   (simulated datasets only)
//! oracle_warp.csv       t_ns,w1,...,w6  (simulated datasets only)
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{input, Error, Result};
use crate::flow::AffineWarp;
use crate::image::GrayFrame;
use crate::model::{CameraIntrinsics, FocSample, ImuSample, StampedVec3, Timestamp, Trajectory, TrajectoryKind, Vec2, Vec3};
use crate::pipeline::{FrameSource, TickDiagnostic};
use crate::sim::SimulatedSequence;

pub const INTRINSICS: &str = "intrinsics.txt";
pub const GYRO: &str = "gyro.csv";
pub const ACCEL: &str = "accel.csv";
pub const FRAMES_INDEX: &str = "frames.csv";
pub const FRAMES_DIR: &str = "frames";
pub const GROUND_TRUTH: &str = "groundtruth.csv";
pub const ORACLE_FOC: &str = "oracle_foc.csv";
pub const ORACLE_WARP: &str = "oracle_warp.csv";

const IMU_HEADER: [&str; 7] = ["t_ns", "gx", "gy", "gz", "ax", "ay", "az"];
const TRAJ_HEADER: [&str; 4] = ["t_ns", "x", "y", "z"];
const FOC_HEADER: [&str; 4] = ["t_ns", "fx", "fy", "fz"];
const WARP_HEADER: [&str; 7] = ["t_ns", "w1", "w2", "w3", "w4", "w5", "w6"];

/// Writes via a temporary file in the target directory and renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_bytes<const N: usize>(header: [&str; N], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Reads a CSV with exactly the expected header.
fn read_rows<const N: usize>(path: &Path, header: [&str; N]) -> Result<Vec<(Timestamp, [f64; N])>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let got: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if got != header {
        return input(format!(
            "{}: expected header {}, found {}",
            path.display(),
            header.join(","),
            got.join(",")
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != N {
            return input(format!("{}: row {} has {} fields, expected {N}", path.display(), i + 2, rec.len()));
        }
        let t: u64 = rec[0]
            .parse()
            .map_err(|_| Error::Input(format!("{}: row {}: bad timestamp '{}'", path.display(), i + 2, &rec[0])))?;
        let mut vals = [0.0; N];
        for (j, slot) in vals.iter_mut().enumerate().skip(1) {
            *slot = rec[j].parse::<f64>().map_err(|_| {
                Error::Input(format!("{}: row {}: bad number '{}'", path.display(), i + 2, &rec[j]))
            })?;
            if !slot.is_finite() {
                return input(format!("{}: row {}: non-finite value", path.display(), i + 2));
            }
        }
        out.push((Timestamp::from_nanos(t), vals));
    }
    Ok(out)
}

pub fn write_intrinsics(path: &Path, k: &CameraIntrinsics) -> Result<()> {
    let text = format!("{} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height);
    write_atomic(path, text.as_bytes())
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 6 {
        return input(format!("{}: expected 'fx fy cx cy width height'", path.display()));
    }
    let f = |i: usize| -> Result<f64> {
        parts[i]
            .parse()
            .map_err(|_| Error::Input(format!("{}: bad number '{}'", path.display(), parts[i])))
    };
    let u = |i: usize| -> Result<u32> {
        parts[i]
            .parse()
            .map_err(|_| Error::Input(format!("{}: bad image size '{}'", path.display(), parts[i])))
    };
    CameraIntrinsics::new(f(0)?, f(1)?, f(2)?, f(3)?, u(4)?, u(5)?)
}

pub fn write_imu(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let rows = samples.iter().map(|s| {
        let mut r = vec![s.t.nanos().to_string()];
        r.extend(s.gyro.iter().chain(s.accel.iter()).map(|v| fmt(*v)));
        r
    });
    write_atomic(path, &csv_bytes(IMU_HEADER, rows)?)
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuSample>> {
    let rows = read_rows(path, IMU_HEADER)?;
    if rows.is_empty() {
        return input(format!("{} has no samples", path.display()));
    }
    Ok(rows
        .into_iter()
        .map(|(t, v)| ImuSample {
            t,
            gyro: Vec3::new(v[1], v[2], v[3]),
            accel: Vec3::new(v[4], v[5], v[6]),
        })
        .collect())
}

pub fn write_trajectory(path: &Path, points: &[StampedVec3]) -> Result<()> {
    let rows = points.iter().map(|p| {
        let mut r = vec![p.t.nanos().to_string()];
        r.extend(p.v.iter().map(|v| fmt(*v)));
        r
    });
    write_atomic(path, &csv_bytes(TRAJ_HEADER, rows)?)
}

pub fn read_trajectory(path: &Path, kind: TrajectoryKind) -> Result<Trajectory> {
    let points = read_rows(path, TRAJ_HEADER)?
        .into_iter()
        .map(|(t, v)| StampedVec3::new(t, Vec3::new(v[1], v[2], v[3])))
        .collect();
    Trajectory::new(kind, points)
}

pub fn write_foc(path: &Path, samples: &[FocSample]) -> Result<()> {
    let rows = samples.iter().map(|s| {
        let mut r = vec![s.t.nanos().to_string()];
        r.extend(s.foc.iter().map(|v| fmt(*v)));
        r
    });
    write_atomic(path, &csv_bytes(FOC_HEADER, rows)?)
}

pub fn read_foc(path: &Path) -> Result<Vec<(Timestamp, Vec3)>> {
    Ok(read_rows(path, FOC_HEADER)?
        .into_iter()
        .map(|(t, v)| (t, Vec3::new(v[1], v[2], v[3])))
        .collect())
}

pub fn write_warps(path: &Path, warps: &[AffineWarp]) -> Result<()> {
    let rows = warps.iter().map(|w| {
        let mut r = vec![w.t.nanos().to_string()];
        r.extend(w.w.iter().map(|v| fmt(*v)));
        r
    });
    write_atomic(path, &csv_bytes(WARP_HEADER, rows)?)
}

pub fn read_warps(path: &Path) -> Result<Vec<AffineWarp>> {
    Ok(read_rows(path, WARP_HEADER)?
        .into_iter()
        .map(|(t, v)| AffineWarp {
            w: [v[1], v[2], v[3], v[4], v[5], v[6]],
            t,
        })
        .collect())
}

/// Oracle `F` paired with the fixation point `W·c` from the oracle warps.
pub fn read_oracle_foc(dir: &Path, center: Vec2) -> Result<Vec<FocSample>> {
    let foc = read_foc(&dir.join(ORACLE_FOC))?;
    let warps = read_warps(&dir.join(ORACLE_WARP))?;
    if foc.len() != warps.len() || foc.iter().zip(&warps).any(|(f, w)| f.0 != w.t) {
        return input("oracle F and warp files are not on the same timestamps");
    }
    Ok(foc
        .into_iter()
        .zip(&warps)
        .map(|((t, f), w)| FocSample {
            t,
            foc: f,
            point: w.apply(center),
        })
        .collect())
}

pub fn encode_pgm(frame: &GrayFrame) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&frame.to_u8(), frame.width(), frame.height(), ExtendedColorType::L8)?;
    Ok(buf)
}

pub fn read_pgm(path: &Path) -> Result<GrayFrame> {
    let img = image::open(path)
        .map_err(|e| Error::Input(format!("cannot read frame {}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = img.dimensions();
    GrayFrame::from_u8(w, h, img.as_raw())
}

pub fn write_diagnostics(path: &Path, ticks: &[TickDiagnostic]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t_ns".to_string()];
    for axis in ["x", "y", "z"] {
        for f in ["det_q", "posed", "valid", "gated", "accel_power", "z0", "g"] {
            header.push(format!("{f}_{axis}"));
        }
    }
    header.extend(["fz", "mode", "z", "zdot"].map(String::from));
    w.write_record(&header)?;
    for d in ticks {
        let mut r = vec![d.t.nanos().to_string()];
        for i in 0..3 {
            r.push(fmt(d.det_q[i]));
            r.push(u8::from(d.posed[i]).to_string());
            r.push(u8::from(d.valid[i]).to_string());
            r.push(u8::from(d.gated[i]).to_string());
            r.push(fmt(d.accel_power[i]));
            r.push(fmt(d.z0[i]));
            r.push(fmt(d.g[i]));
        }
        r.push(fmt(d.fz));
        match d.state {
            Some(s) => r.extend([s.mode.label().to_string(), fmt(s.z), fmt(s.zdot)]),
            None => r.extend(["uninitialized".to_string(), String::new(), String::new()]),
        }
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn write_errors(path: &Path, errors_cm: &[(Timestamp, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_ns", "error_cm"])?;
    for (t, e) in errors_cm {
        w.write_record([t.nanos().to_string(), fmt(*e)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Frames on disk, decoded on demand.
#[derive(Clone, Debug)]
pub struct DiskFrames {
    dir: PathBuf,
    entries: Vec<(Timestamp, String)>,
    intrinsics: CameraIntrinsics,
}

impl DiskFrames {
    pub fn open(dataset: &Path, intrinsics: CameraIntrinsics) -> Result<Self> {
        let index = dataset.join(FRAMES_INDEX);
        let text = fs::read_to_string(&index)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", index.display())))?;
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header != ["t_ns", "filename"] {
            return input(format!("{}: expected header t_ns,filename", index.display()));
        }
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let t: u64 = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Input(format!("{}: bad timestamp", index.display())))?;
            let name = rec
                .get(1)
                .ok_or_else(|| Error::Input(format!("{}: missing filename", index.display())))?;
            if let Some((prev, _)) = entries.last() {
                if Timestamp::from_nanos(t) <= *prev {
                    return input(format!("{}: frame timestamps must increase", index.display()));
                }
            }
            entries.push((Timestamp::from_nanos(t), name.to_string()));
        }
        if entries.is_empty() {
            return input(format!("{} lists no frames", index.display()));
        }
        Ok(DiskFrames {
            dir: dataset.join(FRAMES_DIR),
            entries,
            intrinsics,
        })
    }
}

impl FrameSource for DiskFrames {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn time(&self, k: usize) -> Timestamp {
        self.entries[k].0
    }

    fn frame(&self, k: usize) -> Result<GrayFrame> {
        let f = read_pgm(&self.dir.join(&self.entries[k].1))?;
        if f.width() != self.intrinsics.width || f.height() != self.intrinsics.height {
            return input(format!(
                "frame {} is {}x{}, intrinsics say {}x{}",
                self.entries[k].1,
                f.width(),
                f.height(),
                self.intrinsics.width,
                self.intrinsics.height
            ));
        }
        Ok(f)
    }
}

/// Everything `estimate` needs from a dataset directory.
#[derive(Debug)]
pub struct Dataset {
    pub intrinsics: CameraIntrinsics,
    pub gyro: Vec<ImuSample>,
    pub accel: Vec<ImuSample>,
    pub frames: DiskFrames,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Dataset> {
        if !dir.is_dir() {
            return input(format!("dataset directory {} does not exist", dir.display()));
        }
        let intrinsics = read_intrinsics(&dir.join(INTRINSICS))?;
        Ok(Dataset {
            intrinsics,
            gyro: read_imu(&dir.join(GYRO))?,
            accel: read_imu(&dir.join(ACCEL))?,
            frames: DiskFrames::open(dir, intrinsics)?,
        })
    }
}

/// Writes a simulated recording in the dataset layout, oracle files included.
pub fn write_simulated(dir: &Path, seq: &SimulatedSequence) -> Result<()> {
    fs::create_dir_all(dir.join(FRAMES_DIR))?;
    write_intrinsics(&dir.join(INTRINSICS), &seq.intrinsics)?;
    write_imu(&dir.join(GYRO), &seq.gyro)?;
    write_imu(&dir.join(ACCEL), &seq.accel)?;
    write_trajectory(&dir.join(GROUND_TRUTH), seq.oracle.truth.points())?;
    write_foc(&dir.join(ORACLE_FOC), &seq.oracle.foc)?;
    write_warps(&dir.join(ORACLE_WARP), &seq.oracle.warps)?;
    let mut index = csv::Writer::from_writer(Vec::new());
    index.write_record(["t_ns", "filename"])?;
    for k in 0..seq.frame_count() {
        let name = format!("{k:06}.pgm");
        write_atomic(&dir.join(FRAMES_DIR).join(&name), &encode_pgm(&seq.frame(k))?)?;
        index.write_record([seq.frame_times[k].nanos().to_string(), name])?;
    }
    let bytes = index.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&dir.join(FRAMES_INDEX), &bytes)
}
