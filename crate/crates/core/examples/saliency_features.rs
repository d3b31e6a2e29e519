//! SDF frame vectors and the video descriptor for a drifting blob.

use momhal::sdf::{self, SaliencyFrame, SdfConfig};

fn blob(cx: f64, cy: f64) -> momhal::Result<SaliencyFrame> {
    SaliencyFrame::from_fn(32, 24, |r, c| {
        let x = c as f64 / 31.0 - cx;
        let y = r as f64 / 23.0 - cy;
        (-(x * x / 0.02 + y * y / 0.01)).exp()
    })
}

fn main() -> momhal::Result<()> {
    let cfg = SdfConfig::default();
    let frames = (0..5)
        .map(|j| blob(0.3 + 0.1 * j as f64, 0.5))
        .collect::<momhal::Result<Vec<_>>>()?;

    let v = sdf::encode_frame(&frames[0], &cfg)?;
    let (grad, gist) = v.split_at(cfg.gradient_dim());
    println!(
        "frame vector: {} gradient + {} luminance = {}",
        grad.len(),
        gist.len(),
        v.len()
    );
    println!(
        "gradient block L2 = {:.3}, luminance L1 = {:.3}",
        grad.iter().map(|x| x * x).sum::<f64>().sqrt(),
        gist.iter().sum::<f64>()
    );

    let desc = sdf::sdf_descriptor(&frames, &cfg)?;
    println!(
        "video descriptor: {} dims over {} frames",
        desc.flat_len(),
        frames.len()
    );

    let flat = SaliencyFrame::from_fn(16, 16, |_, _| 0.5)?;
    let fv = sdf::encode_frame(&flat, &cfg)?;
    println!(
        "constant frame gradient block is zero: {}",
        fv[..cfg.gradient_dim()].iter().all(|x| *x == 0.0)
    );
    Ok(())
}
