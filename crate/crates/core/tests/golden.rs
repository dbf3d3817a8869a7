use std::path::PathBuf;

use amp_retrain::bayesmix::{emit_targets, BayesMixConfig, BimodalFit, LogitRecord};
use amp_retrain::io::targets_table;

fn records() -> Vec<LogitRecord> {
    (0..20)
        .map(|i| LogitRecord {
            id: Some(format!("s{i:02}")),
            z: -3.0 + 0.3 * i as f64,
            yhat: if i % 3 == 0 { -1.0 } else { 1.0 },
        })
        .collect()
}

fn fit() -> BimodalFit {
    BimodalFit {
        mu_plus: 1.8,
        mu_minus: -1.4,
        sigma_plus: 0.9,
        sigma_minus: 1.2,
        pi_plus: 0.55,
        ..BimodalFit::symmetric(1.0, 1.0)
    }
}

/// 2/(1 + (p/(1−p))^ŷ · exp((z−μ₊)²/(2σ₊²) − (z−μ₋)²/(2σ₋²)) · π₋/π₊) − 1
fn ratio_form(z: f64, yhat: f64, f: &BimodalFit, p: f64) -> f64 {
    let e = (z - f.mu_plus).powi(2) / (2.0 * f.sigma_plus.powi(2))
        - (z - f.mu_minus).powi(2) / (2.0 * f.sigma_minus.powi(2));
    2.0 / (1.0 + (p / (1.0 - p)).powf(yhat) * e.exp() * (1.0 - f.pi_plus) / f.pi_plus) - 1.0
}

#[test]
fn targets_match_golden_file() {
    let cfg = BayesMixConfig::new(0.45);
    let recs = records();
    let targets = emit_targets(&recs, &fit(), &cfg).unwrap();
    for k in [0, 7, 19] {
        let want = ratio_form(recs[k].z, recs[k].yhat, &fit(), 0.45);
        assert!(
            (targets[k].1 - want).abs() < 1e-12,
            "record {k}: {} vs {want}",
            targets[k].1
        );
    }
    let rendered = targets_table(&targets, &serde_json::to_string(&cfg).unwrap()).render();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_targets.tsv");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &rendered).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(rendered, golden);
}
