//! Dataset and result files.
//!
//! JSON documents are written pretty-printed, JSON-lines files one compact
//! record per line. Floats use shortest round-trip formatting, so writing the
//! same values twice gives identical bytes. All readers reject unknown keys.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::anchors::{Anchor, Correspondence, ElevationGrid, FrameCorrespondences, OrthoMeta};
use crate::camera::IntrinsicsBounds;
use crate::error::{Error, Result};
use crate::eval::VlFrame;
use crate::graph::InsPoseMeasurement;
use crate::{Intrinsics, Pixel, Pose, Rotation};

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn finite<const N: usize>(v: &[f64; N], what: &str) -> std::result::Result<(), String> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(format!("{what} has a non-finite component"))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Parses a JSON-lines file, skipping blank lines. Errors carry the line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| format_err(path, format!("line {}: {e}", i + 1)))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| format_err(path, e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// `{"q": [w, x, y, z], "p": [x, y, z]}`, written with `w >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub q: [f64; 4],
    pub p: [f64; 3],
}

impl From<&Pose> for PoseJson {
    fn from(pose: &Pose) -> Self {
        let t = pose.translation;
        Self {
            q: pose.rotation.wxyz(),
            p: [t.x, t.y, t.z],
        }
    }
}

impl PoseJson {
    pub fn to_pose(&self) -> std::result::Result<Pose, String> {
        finite(&self.q, "quaternion")?;
        finite(&self.p, "position")?;
        let n = self.q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(format!("quaternion norm {n} is not 1"));
        }
        let [w, x, y, z] = self.q;
        Ok(Pose::new(Rotation::from_quaternion(w, x, y, z), Vector3::from(self.p)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// `[k1, k2, p1, p2]`
    pub dist: [f64; 4],
    pub width: u32,
    pub height: u32,
}

impl From<&Intrinsics> for IntrinsicsJson {
    fn from(k: &Intrinsics) -> Self {
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            dist: [k.k1, k.k2, k.p1, k.p2],
            width: k.width,
            height: k.height,
        }
    }
}

impl IntrinsicsJson {
    pub fn to_intrinsics(&self) -> std::result::Result<Intrinsics, String> {
        let mut k = Intrinsics::pinhole(self.fx, self.fy, self.cx, self.cy, self.width, self.height);
        [k.k1, k.k2, k.p1, k.p2] = self.dist;
        k.validate(&IntrinsicsBounds::default()).map_err(|e| e.to_string())?;
        Ok(k)
    }
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    read_json::<IntrinsicsJson>(path)?
        .to_intrinsics()
        .map_err(|m| format_err(path, m))
}

pub fn write_intrinsics(path: &Path, k: &Intrinsics) -> Result<()> {
    write_json(path, &IntrinsicsJson::from(k))
}

pub fn read_pose(path: &Path) -> Result<Pose> {
    read_json::<PoseJson>(path)?.to_pose().map_err(|m| format_err(path, m))
}

pub fn write_pose(path: &Path, pose: &Pose) -> Result<()> {
    write_json(path, &PoseJson::from(pose))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FramePoseJson {
    t: u32,
    q: [f64; 4],
    p: [f64; 3],
}

/// One `{"t", "q", "p"}` record per line, in frame order.
pub fn write_poses<'a>(path: &Path, poses: impl IntoIterator<Item = (u32, &'a Pose)>) -> Result<()> {
    write_jsonl(
        path,
        poses.into_iter().map(|(t, pose)| {
            let j = PoseJson::from(pose);
            FramePoseJson { t, q: j.q, p: j.p }
        }),
    )
}

pub fn read_poses(path: &Path) -> Result<BTreeMap<u32, Pose>> {
    let mut out = BTreeMap::new();
    for (line, r) in read_jsonl::<FramePoseJson>(path)? {
        let pose = PoseJson { q: r.q, p: r.p }
            .to_pose()
            .map_err(|m| format_err(path, format!("line {line}: {m}")))?;
        if out.insert(r.t, pose).is_some() {
            return Err(format_err(path, format!("line {line}: duplicate frame {}", r.t)));
        }
    }
    Ok(out)
}

/// First line of a sequence file. The world frame is a local east-north-up
/// frame; `enu_origin` records where its origin lies in the map projection
/// the dataset came from and is not used in computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceHeader {
    pub format: String,
    pub version: u32,
    pub enu_origin: [f64; 3],
    pub frames: usize,
}

pub const SEQUENCE_FORMAT: &str = "geocalib-sequence";
pub const SEQUENCE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrJson {
    lm: u64,
    /// Aerial image pixel.
    u: [f64; 2],
    /// Orthophoto pixel.
    v: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameJson {
    t: u32,
    ins: PoseJson,
    /// Radians.
    sigma_rot: f64,
    /// Meters.
    sigma_pos: f64,
    #[serde(default)]
    corrs: Vec<CorrJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: SequenceHeader,
}

/// INS measurements and aerial-to-orthophoto correspondences per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub header: SequenceHeader,
    pub ins: Vec<InsPoseMeasurement>,
    pub correspondences: Vec<FrameCorrespondences>,
}

pub fn read_sequence(path: &Path) -> Result<Sequence> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let header = match lines.next() {
        Some((_, l)) => {
            serde_json::from_str::<HeaderLine>(&l?)
                .map_err(|e| format_err(path, format!("line 1: expected header record: {e}")))?
                .header
        }
        None => return Err(format_err(path, "empty sequence file")),
    };
    if header.format != SEQUENCE_FORMAT || header.version != SEQUENCE_VERSION {
        return Err(format_err(
            path,
            format!("unsupported format {} version {}", header.format, header.version),
        ));
    }
    let mut ins = Vec::new();
    let mut correspondences = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in lines {
        let n = i + 1;
        let rec: FrameJson = serde_json::from_str(&line?).map_err(|e| format_err(path, format!("line {n}: {e}")))?;
        let at = |m: String| format_err(path, format!("line {n}: {m}"));
        if !seen.insert(rec.t) {
            return Err(at(format!("duplicate frame {}", rec.t)));
        }
        let pose = rec.ins.to_pose().map_err(at)?;
        if !(rec.sigma_rot > 0.0 && rec.sigma_pos > 0.0 && rec.sigma_rot.is_finite() && rec.sigma_pos.is_finite()) {
            return Err(at("INS sigmas must be positive".into()));
        }
        let mut corrs = Vec::with_capacity(rec.corrs.len());
        for c in &rec.corrs {
            finite(&c.u, "u").and(finite(&c.v, "v")).map_err(at)?;
            corrs.push(Correspondence {
                frame: rec.t,
                landmark: c.lm,
                uav: Pixel::new(c.u[0], c.u[1]),
                sat: Pixel::new(c.v[0], c.v[1]),
            });
        }
        ins.push(InsPoseMeasurement {
            frame: rec.t,
            pose,
            sigma_rot: rec.sigma_rot,
            sigma_pos: rec.sigma_pos,
        });
        correspondences.push(FrameCorrespondences { frame: rec.t, corrs });
    }
    if ins.len() != header.frames {
        return Err(format_err(
            path,
            format!("header announces {} frames, file has {}", header.frames, ins.len()),
        ));
    }
    Ok(Sequence {
        header,
        ins,
        correspondences,
    })
}

pub fn write_sequence(path: &Path, seq: &Sequence) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let json_err = |e: serde_json::Error| format_err(path, e.to_string());
    serde_json::to_writer(
        &mut w,
        &HeaderLine {
            header: seq.header.clone(),
        },
    )
    .map_err(json_err)?;
    w.write_all(b"\n")?;
    let corrs: BTreeMap<u32, &FrameCorrespondences> = seq.correspondences.iter().map(|f| (f.frame, f)).collect();
    for m in &seq.ins {
        let rec = FrameJson {
            t: m.frame,
            ins: PoseJson::from(&m.pose),
            sigma_rot: m.sigma_rot,
            sigma_pos: m.sigma_pos,
            corrs: corrs
                .get(&m.frame)
                .map(|f| {
                    f.corrs
                        .iter()
                        .map(|c| CorrJson {
                            lm: c.landmark,
                            u: [c.uav.u, c.uav.v],
                            v: [c.sat.u, c.sat.v],
                        })
                        .collect()
                })
                .unwrap_or_default(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(json_err)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// DEM header. Heights are either inline (row-major) or in an adjacent
/// little-endian `f32` file named by `blob`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemJson {
    origin: [f64; 2],
    cell_size: f64,
    rows: usize,
    cols: usize,
    sigma_z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blob: Option<String>,
}

pub fn read_dem(path: &Path) -> Result<ElevationGrid> {
    let h: DemJson = read_json(path)?;
    let heights = match (h.heights, h.blob) {
        (Some(v), None) => v,
        (None, Some(name)) => {
            let blob_path = path.parent().unwrap_or(Path::new(".")).join(&name);
            let bytes = fs::read(&blob_path)?;
            if bytes.len() != 4 * h.rows * h.cols {
                return Err(format_err(
                    &blob_path,
                    format!("expected {} bytes for {}x{} f32 heights, got {}", 4 * h.rows * h.cols, h.rows, h.cols, bytes.len()),
                ));
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        }
        _ => return Err(format_err(path, "exactly one of `heights` and `blob` is required")),
    };
    ElevationGrid::new(h.origin, h.cell_size, h.rows, h.cols, heights, h.sigma_z).map_err(|e| format_err(path, e.to_string()))
}

/// Writes the header to `path` and the heights as `f32` to `<stem>.bin`
/// beside it. Heights are rounded to `f32`.
pub fn write_dem(path: &Path, dem: &ElevationGrid) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| format_err(path, "DEM path needs a file name"))?;
    let blob = format!("{stem}.bin");
    let bytes: Vec<u8> = dem.heights.iter().flat_map(|&h| (h as f32).to_le_bytes()).collect();
    fs::write(path.with_file_name(&blob), bytes)?;
    write_json(
        path,
        &DemJson {
            origin: dem.origin,
            cell_size: dem.cell_size,
            rows: dem.rows,
            cols: dem.cols,
            sigma_z: dem.sigma_z,
            heights: None,
            blob: Some(blob),
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrthoJson {
    origin: [f64; 2],
    /// Pixels per meter.
    resolution: f64,
    width: u32,
    height: u32,
}

pub fn read_ortho(path: &Path) -> Result<OrthoMeta> {
    let o: OrthoJson = read_json(path)?;
    OrthoMeta::new(o.origin, o.resolution, o.width, o.height).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_ortho(path: &Path, o: &OrthoMeta) -> Result<()> {
    write_json(
        path,
        &OrthoJson {
            origin: o.origin,
            resolution: o.resolution,
            width: o.width,
            height: o.height,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObsJson {
    t: u32,
    u: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorJson {
    id: u64,
    #[serde(rename = "X")]
    x: [f64; 3],
    sigma: [f64; 3],
    obs: Vec<ObsJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorsJson {
    anchors: Vec<AnchorJson>,
}

pub fn read_anchors(path: &Path) -> Result<Vec<Anchor>> {
    let doc: AnchorsJson = read_json(path)?;
    doc.anchors
        .into_iter()
        .map(|a| {
            let err = |m: &str| format_err(path, format!("anchor {}: {m}", a.id));
            finite(&a.x, "X").map_err(|m| err(&m))?;
            if !a.sigma.iter().all(|s| *s > 0.0 && s.is_finite()) {
                return Err(err("sigma must be positive"));
            }
            if a.obs.is_empty() {
                return Err(err("no observations"));
            }
            let mut observations: Vec<(u32, Pixel)> = a.obs.iter().map(|o| (o.t, Pixel::new(o.u[0], o.u[1]))).collect();
            observations.sort_by_key(|o| o.0);
            if observations.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(err("frame observed twice"));
            }
            Ok(Anchor {
                id: a.id,
                world_prior: Vector3::from(a.x),
                sigma: Vector3::from(a.sigma),
                observations,
            })
        })
        .collect()
}

pub fn write_anchors(path: &Path, anchors: &[Anchor]) -> Result<()> {
    let doc = AnchorsJson {
        anchors: anchors
            .iter()
            .map(|a| AnchorJson {
                id: a.id,
                x: a.world_prior.into(),
                sigma: a.sigma.into(),
                obs: a.observations.iter().map(|(t, px)| ObsJson { t: *t, u: [px.u, px.v] }).collect(),
            })
            .collect(),
    };
    write_json(path, &doc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchJson {
    #[serde(rename = "X")]
    x: [f64; 3],
    u: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VlFrameJson {
    t: u32,
    matches: Vec<MatchJson>,
}

pub fn read_vl_matches(path: &Path) -> Result<Vec<VlFrame>> {
    read_jsonl::<VlFrameJson>(path)?
        .into_iter()
        .map(|(line, f)| {
            let mut matches = Vec::with_capacity(f.matches.len());
            for m in &f.matches {
                finite(&m.x, "X")
                    .and(finite(&m.u, "u"))
                    .map_err(|e| format_err(path, format!("line {line}: {e}")))?;
                matches.push((Vector3::from(m.x), Pixel::new(m.u[0], m.u[1])));
            }
            Ok(VlFrame { frame: f.t, matches })
        })
        .collect()
}

pub fn write_vl_matches(path: &Path, frames: &[VlFrame]) -> Result<()> {
    write_jsonl(
        path,
        frames.iter().map(|f| VlFrameJson {
            t: f.frame,
            matches: f
                .matches
                .iter()
                .map(|(x, px)| MatchJson {
                    x: (*x).into(),
                    u: [px.u, px.v],
                })
                .collect(),
        }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkJson {
    id: u64,
    #[serde(rename = "X")]
    x: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthJson {
    intrinsics: IntrinsicsJson,
    extrinsic: PoseJson,
    poses: Vec<FramePoseJson>,
    landmarks: Vec<LandmarkJson>,
}

/// Ground truth of a simulated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub intrinsics: Intrinsics,
    pub extrinsic: Pose,
    /// True INS (body-to-world) poses.
    pub ins_poses: BTreeMap<u32, Pose>,
    /// True world position of every track id.
    pub landmarks: BTreeMap<u64, Vector3<f64>>,
}

pub fn read_truth(path: &Path) -> Result<Truth> {
    let t: TruthJson = read_json(path)?;
    let err = |m: String| format_err(path, m);
    let mut ins_poses = BTreeMap::new();
    for p in &t.poses {
        ins_poses.insert(p.t, PoseJson { q: p.q, p: p.p }.to_pose().map_err(err)?);
    }
    Ok(Truth {
        intrinsics: t.intrinsics.to_intrinsics().map_err(err)?,
        extrinsic: t.extrinsic.to_pose().map_err(err)?,
        ins_poses,
        landmarks: t.landmarks.iter().map(|l| (l.id, Vector3::from(l.x))).collect(),
    })
}

pub fn write_truth(path: &Path, truth: &Truth) -> Result<()> {
    let doc = TruthJson {
        intrinsics: (&truth.intrinsics).into(),
        extrinsic: (&truth.extrinsic).into(),
        poses: truth
            .ins_poses
            .iter()
            .map(|(&t, pose)| {
                let j = PoseJson::from(pose);
                FramePoseJson { t, q: j.q, p: j.p }
            })
            .collect(),
        landmarks: truth
            .landmarks
            .iter()
            .map(|(&id, x)| LandmarkJson { id, x: (*x).into() })
            .collect(),
    };
    write_json(path, &doc)
}
