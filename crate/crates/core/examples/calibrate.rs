//! Regenerates tests/fixtures/calibration.json.
//!
//!     cargo run --release -p rbmo-core --example calibrate [scale=8]

use std::time::Instant;

fn main() {
    let scale = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let t = Instant::now();
    let cal = rbmo_core::sweeps::calibrate(scale, 1.2).expect("calibration sweeps");
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/calibration.json");
    std::fs::create_dir_all(std::path::Path::new(path).parent().unwrap()).unwrap();
    std::fs::write(path, serde_json::to_string_pretty(&cal).unwrap() + "\n").unwrap();
    eprintln!("wrote {path} in {:.1?}", t.elapsed());
}
