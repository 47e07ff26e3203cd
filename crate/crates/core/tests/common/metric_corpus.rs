use std::path::PathBuf;

use sdn::dataset::load_ppm;
use sdn::tensor::Tensor;

/// Values produced by `scripts/metric_reference.py` on the files in
/// `tests/data/metric_pairs`: (pair name, SSIM, FSIM).
pub const REFERENCE: [(&str, f64, f64); 10] = [
    ("disc_vs_blur", 8.643970901795e-01, 9.468955223613e-01),
    ("disc_vs_shifted", 5.844771876493e-01, 8.315551716939e-01),
    ("flat_vs_disc", 4.972226053882e-01, 6.817526706129e-01),
    ("flat_vs_flat", 9.928497394968e-01, 9.991396896595e-01),
    ("independent_uniform", -2.279764118266e-02, 7.767198541052e-01),
    ("noise_sigma01", 9.483762098871e-01, 9.623899698745e-01),
    ("odd_size_noise", 9.852236964145e-01, 9.888461883814e-01),
    ("ramp_vs_flipped", 1.809110934166e-01, 9.391527928440e-01),
    ("stripes_vs_contrast", 8.001185705661e-01, 8.316630781068e-01),
    ("tall_disc_vs_darker", 9.664540519216e-01, 9.967477175364e-01),
];

pub fn load_pair(name: &str) -> (Tensor, Tensor) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/metric_pairs");
    let a = load_ppm(dir.join(format!("{name}_a.ppm"))).expect("pair a");
    let b = load_ppm(dir.join(format!("{name}_b.ppm"))).expect("pair b");
    (a, b)
}
