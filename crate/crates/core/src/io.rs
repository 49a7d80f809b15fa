//! Line-delimited JSON files: calibration, detections, tracks, ground truth
//! and the synthetic corruption sidecar. Every file opens with a header record
//! naming the format and its version; each following line is one record.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraCalibration, CameraId, Point3};
use crate::linalg::{Matrix3, Vector3};
use crate::pose::{Joint2D, Joint3D, JointFlag, JointSchema, Pose2D, Skeleton3D};
use crate::tracker::{CameraView, FrameBundle, FrameOutput, TrackId, TrackOutput};

pub const FORMAT_VERSION: u32 = 1;
pub const CALIBRATION_FORMAT: &str = "parttrack-calibration";
pub const DETECTIONS_FORMAT: &str = "parttrack-detections";
pub const TRACKS_FORMAT: &str = "parttrack-tracks";
pub const GROUND_TRUTH_FORMAT: &str = "parttrack-ground-truth";
pub const SIDECAR_FORMAT: &str = "parttrack-corruption";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: invalid record: {message}")]
    Validation { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: frame {found} follows frame {previous}")]
    NonMonotonicFrames { path: PathBuf, line: usize, previous: u64, found: u64 },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}

/// First record of every file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
}

impl Header {
    pub fn new(format: &str, schema: Option<&str>) -> Self {
        Self { format: format.to_string(), format_version: FORMAT_VERSION, schema: schema.map(str::to_string) }
    }
}

/// Line reader that tracks line numbers and decodes one JSON record per line.
struct Records {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl Records {
    fn open(path: &Path) -> Result<Self, IoError> {
        let file = File::open(path).map_err(|e| IoError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), lines: BufReader::new(file).lines(), line: 0 })
    }

    fn next_record<R: DeserializeOwned>(&mut self) -> Option<Result<R, IoError>> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(IoError::io(&self.path, e))),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&text).map_err(|e| self.parse_error(e.to_string())));
        }
    }

    fn header(&mut self, format: &str) -> Result<Header, IoError> {
        let header: Header = match self.next_record() {
            Some(h) => h?,
            None => return Err(self.parse_error("missing header record".into())),
        };
        if header.format != format {
            return Err(self.parse_error(format!("expected format {format}, found {}", header.format)));
        }
        if header.format_version != FORMAT_VERSION {
            return Err(self.parse_error(format!("unsupported format_version {}", header.format_version)));
        }
        Ok(header)
    }

    fn schema(&self, header: &Header) -> Result<JointSchema, IoError> {
        let name = header.schema.as_deref().unwrap_or("campus14");
        JointSchema::by_name(name).ok_or_else(|| self.parse_error(format!("unknown joint schema {name}")))
    }

    fn parse_error(&self, message: String) -> IoError {
        IoError::Parse { path: self.path.clone(), line: self.line, message }
    }

    fn invalid(&self, message: impl Into<String>) -> IoError {
        IoError::Validation { path: self.path.clone(), line: self.line, message: message.into() }
    }
}

/// Record writer that flushes after every record.
pub struct RecordWriter<W: Write> {
    out: W,
    path: PathBuf,
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &Header) -> Result<Self, IoError> {
        let file = File::create(path).map_err(|e| IoError::io(path, e))?;
        Self::new(BufWriter::new(file), path, header)
    }
}

impl<W: Write> RecordWriter<W> {
    pub fn new(out: W, path: &Path, header: &Header) -> Result<Self, IoError> {
        let mut w = Self { out, path: path.to_path_buf() };
        w.write(header)?;
        Ok(w)
    }

    pub fn write<R: Serialize>(&mut self, record: &R) -> Result<(), IoError> {
        let io = |e: std::io::Error| IoError::io(&self.path, e);
        serde_json::to_writer(&mut self.out, record).map_err(|e| io(e.into()))?;
        self.out.write_all(b"\n").map_err(io)?;
        self.out.flush().map_err(io)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

// ---- calibration ----

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CalibrationRecord {
    id: u32,
    #[serde(rename = "K")]
    k: [f64; 9],
    #[serde(rename = "R")]
    r: [f64; 9],
    o: [f64; 3],
    width: u32,
    height: u32,
    fps: f64,
}

fn flatten(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = m[(i, j)];
        }
    }
    out
}

pub fn load_calibration(path: &Path) -> Result<Vec<CameraCalibration<f64>>, IoError> {
    let mut records = Records::open(path)?;
    records.header(CALIBRATION_FORMAT)?;
    let mut cams: Vec<CameraCalibration<f64>> = Vec::new();
    while let Some(rec) = records.next_record::<CalibrationRecord>() {
        let rec = rec?;
        if cams.iter().any(|c| c.id() == CameraId(rec.id)) {
            return Err(records.invalid(format!("duplicate camera id {}", rec.id)));
        }
        let cam = CameraCalibration::new(
            CameraId(rec.id),
            Matrix3::from_row_slice(&rec.k),
            Matrix3::from_row_slice(&rec.r),
            Vector3::from_array(rec.o),
            (rec.width, rec.height),
            rec.fps,
        )
        .map_err(|e| records.invalid(e.to_string()))?;
        cams.push(cam);
    }
    if cams.is_empty() {
        return Err(records.invalid("no cameras"));
    }
    Ok(cams)
}

pub fn write_calibration(path: &Path, cameras: &[CameraCalibration<f64>]) -> Result<(), IoError> {
    let mut w = RecordWriter::create(path, &Header::new(CALIBRATION_FORMAT, None))?;
    for cam in cameras {
        let (width, height) = cam.image_size();
        w.write(&CalibrationRecord {
            id: cam.id().0,
            k: flatten(cam.intrinsics()),
            r: flatten(cam.rotation()),
            o: cam.center().to_array(),
            width,
            height,
            fps: cam.fps(),
        })?;
    }
    Ok(())
}

// ---- detections ----

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectionRecord {
    frame: u64,
    camera: u32,
    time_s: f64,
    poses: Vec<Vec<[f64; 3]>>,
}

/// Streaming reader of detection bundles: consecutive records with the same
/// frame index form one bundle.
pub struct DetectionReader {
    records: Records,
    schema: JointSchema,
    confidence_floor: f64,
    pending: Option<DetectionRecord>,
    previous: Option<u64>,
    done: bool,
}

impl DetectionReader {
    pub fn open(path: &Path, confidence_floor: f64) -> Result<Self, IoError> {
        let mut records = Records::open(path)?;
        let header = records.header(DETECTIONS_FORMAT)?;
        let schema = records.schema(&header)?;
        Ok(Self { records, schema, confidence_floor, pending: None, previous: None, done: false })
    }

    pub fn schema(&self) -> &JointSchema {
        &self.schema
    }

    fn view(&self, rec: DetectionRecord) -> Result<CameraView<f64>, IoError> {
        let camera = CameraId(rec.camera);
        let n = self.schema.joint_count();
        let poses = rec
            .poses
            .into_iter()
            .map(|joints| {
                if joints.len() != n {
                    return Err(self.records.invalid(format!("pose has {} joints, schema has {n}", joints.len())));
                }
                let joints =
                    joints.iter().map(|[u, v, c]| Joint2D::with_floor(*u, *v, *c, self.confidence_floor)).collect();
                Ok(Pose2D { camera, timestamp: rec.time_s, joints })
            })
            .collect::<Result<_, _>>()?;
        Ok(CameraView { camera, poses })
    }

    fn next_bundle(&mut self) -> Option<Result<FrameBundle<f64>, IoError>> {
        let first = match self.pending.take() {
            Some(r) => r,
            None => match self.records.next_record::<DetectionRecord>()? {
                Ok(r) => r,
                Err(e) => return Some(Err(e)),
            },
        };
        if let Some(previous) = self.previous {
            if first.frame <= previous {
                return Some(Err(IoError::NonMonotonicFrames {
                    path: self.records.path.clone(),
                    line: self.records.line,
                    previous,
                    found: first.frame,
                }));
            }
        }
        let (frame, time) = (first.frame, first.time_s);
        let mut views = Vec::new();
        let mut next = Some(first);
        while let Some(rec) = next {
            if rec.frame != frame {
                self.pending = Some(rec);
                break;
            }
            match self.view(rec) {
                Ok(v) => views.push(v),
                Err(e) => return Some(Err(e)),
            }
            next = match self.records.next_record::<DetectionRecord>() {
                Some(Ok(r)) => Some(r),
                Some(Err(e)) => return Some(Err(e)),
                None => None,
            };
        }
        self.previous = Some(frame);
        Some(Ok(FrameBundle { frame, time, views }))
    }
}

impl Iterator for DetectionReader {
    type Item = Result<FrameBundle<f64>, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_bundle();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

pub fn load_detections(path: &Path, confidence_floor: f64) -> Result<Vec<FrameBundle<f64>>, IoError> {
    DetectionReader::open(path, confidence_floor)?.collect()
}

pub struct DetectionWriter<W: Write> {
    inner: RecordWriter<W>,
}

impl DetectionWriter<BufWriter<File>> {
    pub fn create(path: &Path, schema: &JointSchema) -> Result<Self, IoError> {
        Ok(Self { inner: RecordWriter::create(path, &Header::new(DETECTIONS_FORMAT, Some(schema.name())))? })
    }
}

impl<W: Write> DetectionWriter<W> {
    /// One record per camera view; views with no poses are still written so
    /// the frame exists for every camera.
    pub fn write_bundle(&mut self, bundle: &FrameBundle<f64>) -> Result<(), IoError> {
        for view in &bundle.views {
            let time_s = view.poses.first().map_or(bundle.time, |p| p.timestamp);
            self.inner.write(&DetectionRecord {
                frame: bundle.frame,
                camera: view.camera.0,
                time_s,
                poses: view
                    .poses
                    .iter()
                    .map(|p| p.joints.iter().map(|j| [j.position.x, j.position.y, j.confidence]).collect())
                    .collect(),
            })?;
        }
        Ok(())
    }
}

// ---- tracks ----

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrackRecord {
    id: u64,
    joints: Vec<(f64, f64, f64, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrackFrameRecord {
    frame: u64,
    time_s: f64,
    tracks: Vec<TrackRecord>,
}

/// Streaming tracks writer; each frame is flushed as soon as it is written.
pub struct TrackWriter<W: Write> {
    inner: RecordWriter<W>,
}

impl TrackWriter<BufWriter<File>> {
    pub fn create(path: &Path, schema: &JointSchema) -> Result<Self, IoError> {
        Ok(Self { inner: RecordWriter::create(path, &Header::new(TRACKS_FORMAT, Some(schema.name())))? })
    }
}

impl<W: Write> TrackWriter<W> {
    pub fn new(out: W, schema: &JointSchema) -> Result<Self, IoError> {
        Ok(Self {
            inner: RecordWriter::new(out, Path::new("<stream>"), &Header::new(TRACKS_FORMAT, Some(schema.name())))?,
        })
    }

    pub fn write_frame(&mut self, frame: &FrameOutput<f64>) -> Result<(), IoError> {
        self.inner.write(&TrackFrameRecord {
            frame: frame.frame,
            time_s: frame.time,
            tracks: frame
                .tracks
                .iter()
                .map(|t| TrackRecord {
                    id: t.id.0,
                    joints: t
                        .skeleton
                        .joints
                        .iter()
                        .map(|j| (j.position.x, j.position.y, j.position.z, j.flag.code().to_string()))
                        .collect(),
                })
                .collect(),
        })
    }

    pub fn into_inner(self) -> W {
        self.inner.into_inner()
    }
}

pub fn write_tracks<'a>(
    path: &Path,
    schema: &JointSchema,
    frames: impl IntoIterator<Item = &'a FrameOutput<f64>>,
) -> Result<(), IoError> {
    let mut w = TrackWriter::create(path, schema)?;
    for f in frames {
        w.write_frame(f)?;
    }
    Ok(())
}

pub fn load_tracks(path: &Path) -> Result<(JointSchema, Vec<FrameOutput<f64>>), IoError> {
    let mut records = Records::open(path)?;
    let header = records.header(TRACKS_FORMAT)?;
    let schema = records.schema(&header)?;
    let mut frames: Vec<FrameOutput<f64>> = Vec::new();
    while let Some(rec) = records.next_record::<TrackFrameRecord>() {
        let rec = rec?;
        if let Some(prev) = frames.last() {
            if rec.frame <= prev.frame {
                return Err(IoError::NonMonotonicFrames {
                    path: records.path.clone(),
                    line: records.line,
                    previous: prev.frame,
                    found: rec.frame,
                });
            }
        }
        let mut tracks = Vec::with_capacity(rec.tracks.len());
        for t in rec.tracks {
            if t.joints.len() != schema.joint_count() {
                return Err(records.invalid(format!("track {} has {} joints", t.id, t.joints.len())));
            }
            let joints = t
                .joints
                .iter()
                .map(|(x, y, z, code)| {
                    let flag =
                        JointFlag::from_code(code).ok_or_else(|| records.invalid(format!("unknown flag {code:?}")))?;
                    Ok(Joint3D { position: Point3::new(*x, *y, *z), flag })
                })
                .collect::<Result<_, IoError>>()?;
            tracks.push(TrackOutput { id: TrackId(t.id), skeleton: Skeleton3D { timestamp: rec.time_s, joints } });
        }
        frames.push(FrameOutput { frame: rec.frame, time: rec.time_s, tracks });
    }
    Ok((schema, frames))
}

// ---- ground truth ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtActor {
    pub id: u32,
    pub joints: Vec<Point3<f64>>,
    /// Whether this actor is scored in this frame.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub evaluate: bool,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtFrame {
    pub frame: u64,
    pub actors: Vec<GtActor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub schema: JointSchema,
    pub frames: Vec<GtFrame>,
}

#[derive(Serialize, Deserialize)]
struct GtActorRecord {
    id: u32,
    joints: Vec<[f64; 3]>,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    evaluate: bool,
}

#[derive(Serialize, Deserialize)]
struct GtFrameRecord {
    frame: u64,
    actors: Vec<GtActorRecord>,
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<(), IoError> {
    let mut w = RecordWriter::create(path, &Header::new(GROUND_TRUTH_FORMAT, Some(gt.schema.name())))?;
    for f in &gt.frames {
        w.write(&GtFrameRecord {
            frame: f.frame,
            actors: f
                .actors
                .iter()
                .map(|a| GtActorRecord {
                    id: a.id,
                    joints: a.joints.iter().map(|p| p.to_array()).collect(),
                    evaluate: a.evaluate,
                })
                .collect(),
        })?;
    }
    Ok(())
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, IoError> {
    let mut records = Records::open(path)?;
    let header = records.header(GROUND_TRUTH_FORMAT)?;
    let schema = records.schema(&header)?;
    let mut frames: Vec<GtFrame> = Vec::new();
    while let Some(rec) = records.next_record::<GtFrameRecord>() {
        let rec = rec?;
        if let Some(prev) = frames.last() {
            if rec.frame <= prev.frame {
                return Err(IoError::NonMonotonicFrames {
                    path: records.path.clone(),
                    line: records.line,
                    previous: prev.frame,
                    found: rec.frame,
                });
            }
        }
        let mut actors = Vec::with_capacity(rec.actors.len());
        for a in rec.actors {
            if a.joints.len() != schema.joint_count() {
                return Err(records.invalid(format!("actor {} has {} joints", a.id, a.joints.len())));
            }
            actors.push(GtActor {
                id: a.id,
                joints: a.joints.iter().map(|p| Vector3::from_array(*p)).collect(),
                evaluate: a.evaluate,
            });
        }
        frames.push(GtFrame { frame: rec.frame, actors });
    }
    Ok(GroundTruth { schema, frames })
}

// ---- corruption sidecar ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionClass {
    /// Exact projection.
    Clean,
    /// Gaussian pixel noise only.
    Noisy,
    Outlier,
    Occluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub frame: u64,
    pub camera: u32,
    /// Index of the pose within its camera record.
    pub pose: usize,
    pub joint: usize,
    pub class: CorruptionClass,
    pub actor: u32,
}

pub fn write_sidecar(path: &Path, records: &[CorruptionRecord]) -> Result<(), IoError> {
    let mut w = RecordWriter::create(path, &Header::new(SIDECAR_FORMAT, None))?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

pub fn load_sidecar(path: &Path) -> Result<Vec<CorruptionRecord>, IoError> {
    let mut records = Records::open(path)?;
    records.header(SIDECAR_FORMAT)?;
    let mut out = Vec::new();
    while let Some(r) = records.next_record() {
        out.push(r?);
    }
    Ok(out)
}
