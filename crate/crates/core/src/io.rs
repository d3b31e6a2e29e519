//! File formats: detection JSON Lines, PGM saliency frames and manifests,
//! descriptor files and the on-disk dataset layout.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{GraymapHeader, PnmEncoder, PnmHeader, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::halluc::{BackboneFeatures, SyntheticVideo, TEMPORAL_LEN};
use crate::moments::MultiMomentDescriptor;
use crate::odf::{DetectionRecord, OdfConfig, Validation};
use crate::sdf::SaliencyFrame;

pub const FEATURES_FILE: &str = "features.bin";
pub const TARGETS_FILE: &str = "targets.bin";
pub const LABELS_FILE: &str = "labels.txt";
pub const META_FILE: &str = "dataset.toml";

const FEATURES_MAGIC: &[u8; 4] = b"FEA1";
const TARGETS_MAGIC: &[u8; 4] = b"TGT1";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDetection {
    video: String,
    detector: String,
    frame: usize,
    tau: Option<usize>,
    class: u32,
    conf: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    inet: Option<Vec<f64>>,
    inet_sparse: Option<Vec<(usize, f64)>>,
}

#[derive(Debug, Serialize)]
struct JsonDetectionOut<'a> {
    video: &'a str,
    detector: &'a str,
    frame: usize,
    tau: usize,
    class: u32,
    conf: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    inet: &'a [f64],
}

/// All records of one `(video, detector)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoDetections {
    pub tau: usize,
    pub records: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct DetectionSet {
    /// Keyed by `(video, detector)`.
    pub groups: BTreeMap<(String, String), VideoDetections>,
    /// Lines dropped in lenient mode, with the reason.
    pub skipped: Vec<(usize, String)>,
    pub lines_read: usize,
}

impl DetectionSet {
    pub fn record_count(&self) -> usize {
        self.groups.values().map(|g| g.records.len()).sum()
    }
}

/// One JSON Lines object for `rec`, dense ImageNet scores.
pub fn detection_json(video: &str, detector: &str, tau: usize, rec: &DetectionRecord) -> String {
    let out = JsonDetectionOut {
        video,
        detector,
        frame: rec.frame_index,
        tau,
        class: rec.class_label,
        conf: rec.confidence,
        bbox: rec.bbox,
        inet: &rec.imagenet_scores,
    };
    serde_json::to_string(&out).expect("detection serializes")
}

fn parse_detection(
    line: &str,
    cfg: &OdfConfig,
) -> std::result::Result<(String, String, Option<usize>, DetectionRecord), String> {
    let raw: JsonDetection = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let scores = match (raw.inet, raw.inet_sparse) {
        (Some(_), Some(_)) => return Err("both `inet` and `inet_sparse` given".into()),
        (None, None) => return Err("missing `inet` or `inet_sparse`".into()),
        (Some(v), None) => v,
        (None, Some(pairs)) => {
            let mut v = vec![0.0; cfg.imagenet_size];
            for (idx, val) in pairs {
                let slot = v
                    .get_mut(idx)
                    .ok_or_else(|| format!("inet_sparse index {idx} >= {}", cfg.imagenet_size))?;
                *slot = val;
            }
            v
        }
    };
    let rec = DetectionRecord {
        frame_index: raw.frame,
        class_label: raw.class,
        confidence: raw.conf,
        bbox: raw.bbox,
        imagenet_scores: scores,
    };
    let rec = rec.validated(cfg).map_err(|e| e.to_string())?;
    Ok((raw.video, raw.detector, raw.tau, rec))
}

/// `video tau` per line; `#` starts a comment.
pub fn read_tau_manifest(path: &Path) -> Result<BTreeMap<String, usize>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = strip_comment(line);
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let mut parts = line.split_whitespace();
        let (Some(video), Some(tau), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `video tau`".into()));
        };
        let tau: usize = tau.parse().map_err(|_| err(format!("bad tau `{tau}`")))?;
        if tau == 0 {
            return Err(err("tau must be at least 1".into()));
        }
        if out.insert(video.to_string(), tau).is_some() {
            return Err(err(format!("video `{video}` listed twice")));
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Reads detection JSON Lines. Strict mode fails on the first bad line;
/// lenient mode repairs what it can and skips the rest.
pub fn read_detections(
    path: &Path,
    tau_source: Option<&BTreeMap<String, usize>>,
    cfg: &OdfConfig,
) -> Result<DetectionSet> {
    let reader = BufReader::new(File::open(path)?);
    let mut set = DetectionSet::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        set.lines_read += 1;
        let outcome = parse_detection(&line, cfg).and_then(|(video, detector, tau, rec)| {
            let tau = match tau_source.and_then(|m| m.get(&video)) {
                Some(t) => *t,
                None => tau.ok_or_else(|| format!("no tau for video `{video}`"))?,
            };
            if rec.frame_index == 0 || rec.frame_index > tau {
                return Err(format!("frame {} outside 1..={tau}", rec.frame_index));
            }
            Ok((video, detector, tau, rec))
        });
        let (video, detector, tau, rec) = match outcome {
            Ok(v) => v,
            Err(msg) => match cfg.validation {
                Validation::Strict => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg,
                    })
                }
                Validation::Lenient => {
                    set.skipped.push((lineno, msg));
                    continue;
                }
            },
        };
        let group = set
            .groups
            .entry((video, detector))
            .or_insert_with(|| VideoDetections {
                tau,
                records: Vec::new(),
            });
        if group.tau != tau {
            let msg = format!("tau {tau} disagrees with earlier tau {}", group.tau);
            match cfg.validation {
                Validation::Strict => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg,
                    })
                }
                Validation::Lenient => {
                    set.skipped.push((lineno, msg));
                    continue;
                }
            }
        }
        group.records.push(rec);
    }
    Ok(set)
}

/// Binary PGM (P5) with values rescaled to `[0, 1]`.
pub fn read_pgm(path: &Path) -> Result<SaliencyFrame> {
    let bad = |msg: String| Error::Format {
        format: "PGM",
        msg: format!("{}: {msg}", path.display()),
    };
    let mut magic = [0u8; 2];
    File::open(path)?
        .read_exact(&mut magic)
        .map_err(|e| bad(e.to_string()))?;
    if &magic != b"P5" {
        return Err(bad("not a binary graymap (P5)".into()));
    }
    let reader = ImageReader::with_format(BufReader::new(File::open(path)?), ImageFormat::Pnm);
    let img = reader.decode().map_err(|e| bad(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => return Err(bad(format!("unexpected pixel layout {:?}", other.color()))),
    };
    SaliencyFrame::new(w, h, values).map_err(|e| bad(e.to_string()))
}

/// Writes `frame` as P5 with the given maxval (255 or 65535).
pub fn write_pgm(path: &Path, frame: &SaliencyFrame, maxval: u16) -> Result<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let file = BufWriter::new(File::create(path)?);
    let header = GraymapHeader {
        encoding: SampleEncoding::Binary,
        height: h,
        width: w,
        maxwhite: maxval as u32,
    };
    let mut enc = PnmEncoder::new(file).with_header(PnmHeader::from(header));
    let res = match maxval {
        255 => {
            let px: Vec<u8> = frame
                .values()
                .iter()
                .map(|v| (v * 255.0).round() as u8)
                .collect();
            enc.encode(px.as_slice(), w, h, ExtendedColorType::L8)
        }
        65535 => {
            let px: Vec<u16> = frame
                .values()
                .iter()
                .map(|v| (v * 65535.0).round() as u16)
                .collect();
            enc.encode(px.as_slice(), w, h, ExtendedColorType::L16)
        }
        m => {
            return Err(Error::Argument(format!(
                "maxval {m} unsupported, use 255 or 65535"
            )))
        }
    };
    res.map_err(|e| Error::Format {
        format: "PGM",
        msg: format!("{}: {e}", path.display()),
    })
}

/// Ordered frames of one `(video, source)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyEntry {
    pub video: String,
    pub source: String,
    pub frames: Vec<PathBuf>,
}

/// Manifest lines are `video source path`, in frame order. Relative paths
/// resolve against the manifest's directory.
pub fn read_saliency_manifest(path: &Path) -> Result<Vec<SaliencyEntry>> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut order: Vec<(String, String)> = Vec::new();
    let mut frames: BTreeMap<(String, String), Vec<PathBuf>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = strip_comment(line);
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(video), Some(source), Some(file), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "expected `video source path`".into(),
            });
        };
        let key = (video.to_string(), source.to_string());
        let p = Path::new(file);
        let p = if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        };
        frames
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(p);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let f = frames.remove(&key).unwrap_or_default();
            SaliencyEntry {
                video: key.0,
                source: key.1,
                frames: f,
            }
        })
        .collect())
}

/// Descriptor file name for a `(video, source)` pair.
pub fn descriptor_path(dir: &Path, video: &str, source: &str) -> PathBuf {
    dir.join(format!("{video}__{source}.mmd"))
}

pub fn write_descriptor(path: &Path, desc: &MultiMomentDescriptor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    desc.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_descriptor(path: &Path) -> Result<MultiMomentDescriptor> {
    MultiMomentDescriptor::read_from(BufReader::new(File::open(path)?))
}

/// Dataset metadata, written next to the binary blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub videos: usize,
    pub classes: usize,
    pub backbone_dim: usize,
    pub temporal_len: usize,
    /// Target length per stream.
    pub targets: BTreeMap<String, usize>,
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Argument(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4], format: &'static str) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format {
            format,
            msg: "bad magic".into(),
        });
    }
    Ok(())
}

/// Writes features, targets, labels and metadata as separate files so that
/// evaluation can run without the targets.
pub fn write_dataset(dir: &Path, videos: &[SyntheticVideo]) -> Result<DatasetMeta> {
    let first = videos
        .first()
        .ok_or_else(|| Error::Empty("dataset has no videos".into()))?;
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        videos: videos.len(),
        classes: crate::halluc::class_count(videos),
        backbone_dim: first.features.dim(),
        temporal_len: TEMPORAL_LEN,
        targets: first
            .ground_truth
            .iter()
            .map(|(k, v)| (k.clone(), v.len()))
            .collect(),
    };

    let mut f = BufWriter::new(File::create(dir.join(FEATURES_FILE))?);
    f.write_all(FEATURES_MAGIC)?;
    write_u32(&mut f, meta.videos)?;
    write_u32(&mut f, meta.backbone_dim)?;
    write_u32(&mut f, meta.temporal_len)?;
    for v in videos {
        check_len("backbone dim", meta.backbone_dim, v.features.dim())?;
        write_f64s(&mut f, v.features.data())?;
    }
    f.flush()?;

    let mut t = BufWriter::new(File::create(dir.join(TARGETS_FILE))?);
    t.write_all(TARGETS_MAGIC)?;
    write_u32(&mut t, meta.videos)?;
    write_u32(&mut t, meta.targets.len())?;
    for (name, len) in &meta.targets {
        write_u32(&mut t, name.len())?;
        t.write_all(name.as_bytes())?;
        write_u32(&mut t, *len)?;
    }
    for v in videos {
        for (name, len) in &meta.targets {
            let g = v
                .ground_truth
                .get(name)
                .ok_or_else(|| Error::Missing(format!("target `{name}`")))?;
            check_len("target length", *len, g.len())?;
            write_f64s(&mut t, g)?;
        }
    }
    t.flush()?;

    let labels: String = videos.iter().map(|v| format!("{}\n", v.label)).collect();
    fs::write(dir.join(LABELS_FILE), labels)?;
    let meta_text = toml::to_string(&meta).map_err(|e| Error::Format {
        format: "TOML",
        msg: e.to_string(),
    })?;
    fs::write(dir.join(META_FILE), meta_text)?;
    Ok(meta)
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path)?;
    toml::from_str(&text).map_err(|e| Error::Format {
        format: "TOML",
        msg: format!("{}: {e}", path.display()),
    })
}

/// Backbone features only.
pub fn read_features(dir: &Path) -> Result<Vec<BackboneFeatures>> {
    let mut r = BufReader::new(File::open(dir.join(FEATURES_FILE))?);
    read_magic(&mut r, FEATURES_MAGIC, "features")?;
    let n = read_u32(&mut r)?;
    let dim = read_u32(&mut r)?;
    let cols = read_u32(&mut r)?;
    check_len("temporal length", TEMPORAL_LEN, cols)?;
    (0..n)
        .map(|_| BackboneFeatures::new(dim, read_f64s(&mut r, dim * cols)?))
        .collect()
}

pub fn read_labels(dir: &Path) -> Result<Vec<usize>> {
    let path = dir.join(LABELS_FILE);
    let text = fs::read_to_string(&path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                path: path.clone(),
                line: i + 1,
                msg: format!("bad label `{l}`"),
            })
        })
        .collect()
}

pub fn read_targets(dir: &Path) -> Result<Vec<BTreeMap<String, Vec<f64>>>> {
    let mut r = BufReader::new(File::open(dir.join(TARGETS_FILE))?);
    read_magic(&mut r, TARGETS_MAGIC, "targets")?;
    let n = read_u32(&mut r)?;
    let s = read_u32(&mut r)?;
    let mut streams = Vec::with_capacity(s);
    for _ in 0..s {
        let len = read_u32(&mut r)?;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format {
            format: "targets",
            msg: e.to_string(),
        })?;
        streams.push((name, read_u32(&mut r)?));
    }
    (0..n)
        .map(|_| {
            streams
                .iter()
                .map(|(name, len)| Ok((name.clone(), read_f64s(&mut r, *len)?)))
                .collect()
        })
        .collect()
}

/// Features, targets and labels joined for training.
pub fn read_dataset(dir: &Path) -> Result<Vec<SyntheticVideo>> {
    let features = read_features(dir)?;
    let targets = read_targets(dir)?;
    let labels = read_labels(dir)?;
    check_len("targets", features.len(), targets.len())?;
    check_len("labels", features.len(), labels.len())?;
    Ok(features
        .into_iter()
        .zip(targets)
        .zip(labels)
        .map(|((features, ground_truth), label)| SyntheticVideo {
            features,
            ground_truth,
            label,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odf::IMAGENET_CLASSES;

    fn rec(frame: usize) -> DetectionRecord {
        DetectionRecord {
            frame_index: frame,
            class_label: 3,
            confidence: 0.5,
            bbox: [0.1, 0.2, 0.3, 0.4],
            imagenet_scores: vec![1.0 / IMAGENET_CLASSES as f64; IMAGENET_CLASSES],
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let lines: Vec<String> = (1..=3)
            .map(|f| detection_json("v", "coco", 5, &rec(f)))
            .collect();
        fs::write(&p, lines.join("\n")).unwrap();
        let set = read_detections(&p, None, &OdfConfig::default()).unwrap();
        assert_eq!(set.record_count(), 3);
        let g = &set.groups[&("v".to_string(), "coco".to_string())];
        assert_eq!(g.tau, 5);
        assert_eq!(g.records[1], rec(2));
    }

    #[test]
    fn sparse_scores() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(
            &p,
            r#"{"video":"a","detector":"x","frame":1,"tau":2,"class":1,"conf":0.9,"box":[0,0,1,1],"inet_sparse":[[0,0.25],[1000,0.75]]}"#,
        )
        .unwrap();
        let set = read_detections(&p, None, &OdfConfig::default()).unwrap();
        let r = &set.groups.values().next().unwrap().records[0];
        assert_eq!(r.imagenet_scores[0], 0.25);
        assert_eq!(r.imagenet_scores[1000], 0.75);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let good = detection_json("v", "coco", 5, &rec(1));
        fs::write(&p, format!("{good}\n\n{{not json\n")).unwrap();
        match read_detections(&p, None, &OdfConfig::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let lenient = OdfConfig {
            validation: Validation::Lenient,
            ..OdfConfig::default()
        };
        let set = read_detections(&p, None, &lenient).unwrap();
        assert_eq!(set.record_count(), 1);
        assert_eq!(set.skipped.len(), 1);
        assert_eq!(set.skipped[0].0, 3);
    }

    #[test]
    fn frame_beyond_tau_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, detection_json("v", "coco", 2, &rec(3))).unwrap();
        assert!(matches!(
            read_detections(&p, None, &OdfConfig::default()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn tau_manifest_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let m = dir.path().join("tau.txt");
        fs::write(&p, detection_json("v", "coco", 2, &rec(3))).unwrap();
        fs::write(&m, "# video tau\nv 9\n").unwrap();
        let taus = read_tau_manifest(&m).unwrap();
        let set = read_detections(&p, Some(&taus), &OdfConfig::default()).unwrap();
        assert_eq!(set.groups.values().next().unwrap().tau, 9);
        fs::write(&m, "v\n").unwrap();
        assert!(matches!(
            read_tau_manifest(&m),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn pgm_round_trip_both_depths() {
        let dir = tempfile::tempdir().unwrap();
        let frame = SaliencyFrame::from_fn(5, 3, |r, c| (r * 5 + c) as f64 / 14.0).unwrap();
        for maxval in [255u16, 65535] {
            let p = dir.path().join(format!("f{maxval}.pgm"));
            write_pgm(&p, &frame, maxval).unwrap();
            let back = read_pgm(&p).unwrap();
            assert_eq!((back.width(), back.height()), (5, 3));
            let tol = 0.5 / maxval as f64 + 1e-12;
            for (a, b) in back.values().iter().zip(frame.values()) {
                assert!((a - b).abs() <= tol);
            }
        }
    }

    #[test]
    fn corrupt_pgm_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pgm");
        fs::write(&p, b"P5\n4 4\n255\n\x00\x01").unwrap();
        let err = read_pgm(&p).unwrap_err().to_string();
        assert!(err.contains("bad.pgm"), "{err}");
        fs::write(&p, b"P2\n2 2\n255\n0 0 0 0\n").unwrap();
        assert!(read_pgm(&p).is_err());
    }

    #[test]
    fn manifest_groups_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.txt");
        fs::write(&m, "v1 mnl a.pgm\nv1 aclnet b.pgm\nv1 mnl c.pgm\n").unwrap();
        let entries = read_saliency_manifest(&m).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].source, "mnl");
        assert_eq!(
            entries[0].frames,
            vec![dir.path().join("a.pgm"), dir.path().join("c.pgm")]
        );
        fs::write(&m, "v1 mnl\n").unwrap();
        assert!(matches!(
            read_saliency_manifest(&m),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = crate::halluc::tests::small_cfg(&["det1", "sal1"]);
        let videos: Vec<SyntheticVideo> = (0..4)
            .map(|i| crate::halluc::tests::random_video(i, &cfg, 3))
            .collect();
        let meta = write_dataset(dir.path(), &videos).unwrap();
        assert_eq!(read_meta(dir.path()).unwrap(), meta);
        assert_eq!(read_dataset(dir.path()).unwrap(), videos);
    }
}
