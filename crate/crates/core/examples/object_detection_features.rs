//! Encodes a handful of detections into an ODF descriptor, with and without
//! the RBF embedding.

use momhal::odf::{self, DetectionRecord, JointLabel, OdfConfig};

fn main() -> momhal::Result<()> {
    let person = JointLabel::coco(1)?.get();
    let ride = JointLabel::ava(14)?.get();
    let mut scores = vec![0.0; odf::IMAGENET_CLASSES];
    scores[444] = 0.7;
    scores[671] = 0.3;
    let det = |frame, label, conf, bbox| DetectionRecord {
        frame_index: frame,
        class_label: label,
        confidence: conf,
        bbox,
        imagenet_scores: scores.clone(),
    };
    let records = vec![
        det(1, person, 0.95, [0.10, 0.20, 0.40, 0.90]),
        det(1, ride, 0.60, [0.05, 0.50, 0.60, 0.95]),
        det(4, person, 0.90, [0.20, 0.20, 0.50, 0.90]),
        det(8, person, 0.85, [0.35, 0.25, 0.65, 0.90]),
    ];

    for use_rbf in [true, false] {
        let cfg = OdfConfig {
            use_rbf_embedding: use_rbf,
            ..OdfConfig::default()
        };
        let v = odf::encode_box(&records[0], 8, &cfg)?;
        let desc = odf::odf_descriptor(&records, 8, &cfg)?;
        println!(
            "rbf={use_rbf:<5} box vector {} dims, descriptor {} dims, leading spectrum {:.3}",
            v.len(),
            desc.flat_len(),
            desc.eig_spectrum[0]
        );
    }
    Ok(())
}
