//! Kept in its own binary so no other test competes for the CPU while timing.

use std::collections::HashMap;
use std::fs;
use std::process::Command;

fn medians(out: &std::path::Path) -> HashMap<(String, String), f64> {
    let o = Command::new(env!("CARGO_BIN_EXE_volterra"))
        .args([
            "benchmark",
            "--N",
            "600,1200",
            "--memory",
            "20",
            "--repetitions",
            "7",
            "--variants",
            "dc-ob-w/dense",
        ])
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read_to_string(out.join("timings.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            ((f[0].to_string(), f[1].to_string()), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn repeated_benchmark_medians_agree_within_20_percent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = medians(a.path());
    let second = medians(b.path());
    assert_eq!(first.len(), 2);
    for (key, m1) in &first {
        let m2 = second[key];
        let rel = (m1 - m2).abs() / (0.5 * (m1 + m2));
        assert!(rel < 0.2, "{key:?}: {m1} vs {m2} ({rel:.3})");
    }
}
