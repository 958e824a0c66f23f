use std::path::PathBuf;

use gsf_core::io::{read_json, FitReport};
use gsf_core::{decompose, fit_model, FFunction, ModelFamily, ModelSpec, TableDocument};

fn doc() -> TableDocument {
    read_json(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/anes.json")).unwrap()
}

#[test]
fn fixture_counts() {
    let d = doc();
    assert_eq!((d.r, d.t), (3, 3));
    assert_eq!(d.counts.iter().sum::<u64>(), 1127);
    assert_eq!(&d.counts[..9], &[240, 32, 8, 11, 23, 5, 0, 2, 4]);
    assert_eq!(d.counts[26], 323);
    assert_eq!(d.labels.unwrap().categories, ["Republican", "Neither", "Democratic"]);
}

#[test]
fn me2_reaches_the_boundary_optimum() {
    // An independent convex solver puts the ME₂ optimum at G² = 31.545 with
    // two fitted cells at zero.
    let fit = fit_model(&doc().to_table().unwrap(), &ModelSpec::new(ModelFamily::Me2, None).unwrap()).unwrap();
    assert!((fit.g2 - 31.545).abs() < 1e-3, "{}", fit.g2);
    assert_eq!(fit.df, 6);
    assert!(fit.mhat.iter().filter(|m| **m < 1e-3).count() >= 2);
}

#[test]
fn partition_reports_all_rows() {
    let r = decompose(&doc().to_table().unwrap(), FFunction::Pearson).unwrap();
    let models: Vec<&str> = r.partition.iter().map(|row| row.model.as_str()).collect();
    assert_eq!(models, ["S", "PGS", "ME2", "ME", "VE", "CE"]);
    let dfs: Vec<usize> = r.partition.iter().map(|row| row.df).collect();
    assert_eq!(dfs, [17, 11, 6, 2, 2, 2]);
    assert!((r.g2_gap - (45.2558 - 13.7107 - 31.5450)).abs() < 1e-3);
    assert!(r.w_gs.is_finite() && r.w_me2.is_finite() && r.w_s.is_finite());
    // Pearson's link is finite at zero and no orbit is empty, so the
    // observed proportions are used as they are.
    assert!(!r.smoothed);
}

#[test]
fn fit_report_survives_json() {
    let table = doc().to_table().unwrap();
    for spec in [
        ModelSpec::symmetry(),
        ModelSpec::new(ModelFamily::Gs, Some(FFunction::Hellinger)).unwrap(),
        ModelSpec::new(ModelFamily::Ve, None).unwrap(),
    ] {
        let fit = fit_model(&table, &spec).unwrap();
        let text = serde_json::to_string_pretty(&FitReport::from_fit(&fit)).unwrap();
        let back: FitReport = serde_json::from_str(&text).unwrap();
        assert!((back.rescore().unwrap() - fit.g2).abs() < 1e-12);
    }
}
