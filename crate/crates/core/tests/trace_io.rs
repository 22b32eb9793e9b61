use std::fs;

use delay_adaptive::experiment::{parse_config, run_scenario};
use delay_adaptive::sim::{read_meta, read_rows};
use tempfile::TempDir;

fn noisy(seed: u64) -> String {
    format!(
        "[plant]\ntheta = 0.5\n[controller]\neps = 0.1\nc = 1\nr = 1\nsigma = 0.05\n\
         [run]\nh = 0.01\nt_final = 4\nseed = {seed}\n\
         [disturbance]\nkind = \"uniform_noise\"\namplitude = 0.3\n"
    )
}

fn csv_bytes(text: &str) -> Vec<u8> {
    let out = run_scenario(&parse_config(text).unwrap()).unwrap();
    let mut buf = Vec::new();
    out.trace.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn csv_and_meta_round_trip_through_files() {
    let dir = TempDir::new().unwrap();
    let out = run_scenario(&parse_config(&noisy(4)).unwrap()).unwrap();
    out.write(dir.path(), &Default::default()).unwrap();
    let rows = read_rows(fs::File::open(dir.path().join("trace.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), out.trace.rows.len());
    for (a, b) in rows.iter().zip(&out.trace.rows) {
        for (p, q) in [
            (a.t, b.t),
            (a.x, b.x),
            (a.u, b.u),
            (a.p, b.p),
            (a.theta_hat, b.theta_hat),
            (a.d, b.d),
        ] {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }
    let meta = read_meta(fs::File::open(dir.path().join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta, out.trace.meta);
}

#[test]
fn seeded_runs_are_byte_identical() {
    assert_eq!(csv_bytes(&noisy(11)), csv_bytes(&noisy(11)));
    assert_ne!(csv_bytes(&noisy(11)), csv_bytes(&noisy(12)));
}
