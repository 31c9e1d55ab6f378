//! Unwraps an image and writes wrapped and unwrapped 16-bit PGMs for viewing.
//!
//!     cargo run --release --example export_pgm [out_dir]

use sqd_unwrap::cli::export_pgm;
use sqd_unwrap::datagen::{generate_sample, GenConfig};
use sqd_unwrap::phase::{wrap, PhaseImage};
use sqd_unwrap::qgpu::qgpu_unwrap;

fn main() -> sqd_unwrap::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(std::env::temp_dir);
    let cfg = GenConfig::default();
    let s = generate_sample(&cfg, 4)?;
    let n = cfg.image_size;
    let wrapped = wrap(&PhaseImage::from_f32(n, n, &s.truth)?);
    let unwrapped = qgpu_unwrap(&wrapped)?;
    for (name, img) in [("wrapped.pgm", wrapped.as_phase()), ("unwrapped.pgm", unwrapped)] {
        let path = out.join(name);
        let side = export_pgm(&img, &path)?;
        println!("{}: values [{:.2}, {:.2}] mapped to 0..{}", path.display(), side.min, side.max, side.maxval);
    }
    Ok(())
}
