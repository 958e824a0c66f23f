//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p gsf-core --test acceptance`. Pass `-- --strict`
//! to turn any FAIL into a non-zero exit status, and criterion numbers
//! (`-- 5 6`) to run only those.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use gsf_core::design::AsymmetryFamily;
use gsf_core::io::{read_json, TableDocument};
use gsf_core::mle::{
    degrees_of_freedom, fit_hlp, fit_symmetry, pair_discrepancy, symmetry_constraint, Fitter,
};
use gsf_core::simulate::{discretize, mvn_sample};
use gsf_core::table::symmetric_average;
use gsf_core::wald::{self, f_jacobian, gs_constraint, link_vector, orbit_averaging_matrix, sigma};
use gsf_core::{
    design_matrix, fit_model, iproject_detailed, potential_params, power_study, Cell, CountTable,
    FFunction, ModelFamily, ModelSpec, Orbits, PowerReport, ProbTable, ProjectionSpec, SimConfig,
    TableShape,
};

const KL: FFunction = FFunction::KullbackLeibler;
const PEARSON: FFunction = FFunction::Pearson;
const HELLINGER: FFunction = FFunction::Hellinger;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(problems: Vec<String>, summary: String) -> Self {
        if problems.is_empty() {
            Outcome { pass: true, detail: summary }
        } else {
            Outcome { pass: false, detail: format!("{summary}; {}", problems.join("; ")) }
        }
    }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn anes() -> CountTable {
    let doc: TableDocument = read_json(&data("anes.json")).expect("anes fixture");
    doc.to_table().expect("anes table")
}

fn round_sig3(x: f64) -> f64 {
    let digits = 2 - x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits);
    (x * scale).round() / scale
}

fn rounded_pvalue(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

fn random_interior(shape: &TableShape, rng: &mut ChaCha8Rng) -> ProbTable {
    let w = (0..shape.n_cells()).map(|_| rng.random_range(0.2..2.0)).collect();
    ProbTable::from_weights(shape.clone(), w).unwrap()
}

fn random_symmetric(shape: &TableShape, rng: &mut ChaCha8Rng) -> ProbTable {
    symmetric_average(&random_interior(shape, rng))
}

fn random_counts(shape: &TableShape, n: u64, rng: &mut ChaCha8Rng) -> CountTable {
    let p = random_interior(shape, rng);
    let mut counts = vec![0u64; shape.n_cells()];
    let cdf: Vec<f64> = p
        .probs()
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    for _ in 0..n {
        let u: f64 = rng.random();
        let i = cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1);
        counts[i] += 1;
    }
    CountTable::new(shape.clone(), counts).unwrap()
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

// 1. Ten G² values, df and p-values on the ANES table.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let table = anes();
    let cases: [(ModelFamily, Option<FFunction>, f64, usize, &str); 10] = [
        (ModelFamily::S, None, 45.3, 17, "<0.001"),
        (ModelFamily::Me2, None, 31.6, 6, "<0.001"),
        (ModelFamily::Me, None, 3.34, 2, "0.188"),
        (ModelFamily::Ve, None, 9.89, 2, "0.007"),
        (ModelFamily::Ce, None, 17.4, 2, "<0.001"),
        (ModelFamily::Gs, Some(KL), 15.5, 11, "0.162"),
        (ModelFamily::Gs, Some(PEARSON), 13.7, 11, "0.249"),
        (ModelFamily::Gs, Some(HELLINGER), 16.0, 11, "0.143"),
        (ModelFamily::Els, Some(KL), 33.0, 13, "0.002"),
        (ModelFamily::Ls, Some(KL), 41.5, 15, "<0.001"),
    ];
    let mut problems = Vec::new();
    let mut shown = Vec::new();
    for (family, ff, g2, df, p) in cases {
        let spec = ModelSpec::new(family, ff).unwrap();
        match fit_model(&table, &spec) {
            Ok(fit) => {
                shown.push(format!("{}={:.3}", spec.label(), fit.g2));
                if round_sig3(fit.g2) != g2 {
                    problems.push(format!("{} G² {:.4} rounds to {} not {g2}", spec.label(), fit.g2, round_sig3(fit.g2)));
                }
                if fit.df != df {
                    problems.push(format!("{} df {} not {df}", spec.label(), fit.df));
                }
                if rounded_pvalue(fit.pvalue) != p {
                    problems.push(format!("{} p {} not {p}", spec.label(), rounded_pvalue(fit.pvalue)));
                }
            }
            Err(e) => problems.push(format!("{} failed: {e}", spec.label())),
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(10) {
        problems.push(format!("runtime {elapsed:.1?} exceeds 10 s"));
    }
    Outcome::new(problems, format!("{} in {elapsed:.2?}", shown.join(" ")))
}

const EXPECTED_THETA: [(&str, f64, f64, f64); 24] = [
    ("(1,1,3)", 0.0161, -1.3085, 3.7307),
    ("(3,1,1)", 0.0057, -1.7262, 4.5959),
    ("(1,3,1)", 0.0019, -2.0173, 5.6129),
    ("(1,1,2)", 0.0249, -1.1937, 3.3065),
    ("(2,1,1)", 0.0139, -1.4227, 3.7881),
    ("(1,2,1)", 0.0078, -1.5785, 4.3284),
    ("(3,3,1)", 0.0011, -2.1269, 6.2432),
    ("(1,3,3)", 0.0008, -2.2469, 6.4613),
    ("(3,1,3)", 0.0004, -2.4150, 7.1410),
    ("(3,3,2)", 0.0003, -2.4713, 7.5158),
    ("(2,3,3)", 0.0002, -2.5515, 7.6739),
    ("(3,2,3)", 0.0002, -2.6458, 8.0455),
    ("(1,2,3)", 0.0033, -0.9040, 7.3211),
    ("(2,1,3)", 0.0024, -0.9409, 7.7568),
    ("(3,2,1)", 0.0022, -0.9785, 7.7786),
    ("(3,1,2)", 0.0015, -1.0353, 8.2992),
    ("(2,3,1)", 0.0014, -1.0461, 8.4529),
    ("(1,3,2)", 0.0013, -1.0661, 8.5378),
    ("(2,1,2)", 0.0058, -1.6523, 4.6365),
    ("(1,2,2)", 0.0051, -1.6933, 4.7526),
    ("(2,2,1)", 0.0039, -1.7878, 4.9634),
    ("(2,2,3)", 0.0007, -2.2471, 6.6602),
    ("(3,2,2)", 0.0006, -2.3013, 6.7729),
    ("(2,3,2)", 0.0006, -2.3219, 6.8255),
];

// 2. Plug-in potential parameters for GS, PGS and HGS.
fn criterion_2() -> Outcome {
    let table = anes();
    let mut problems = Vec::new();
    let mut worst = 0.0f64;
    for (k, ff) in [KL, PEARSON, HELLINGER].into_iter().enumerate() {
        let fit = match fit_model(&table, &ModelSpec::asymmetry(AsymmetryFamily::Gs, ff)) {
            Ok(f) => f,
            Err(e) => {
                problems.push(format!("{ff} fit failed: {e}"));
                continue;
            }
        };
        let theta = match potential_params(&fit) {
            Ok(t) => t,
            Err(e) => {
                problems.push(format!("{ff} potentials failed: {e}"));
                continue;
            }
        };
        for (cell, gs, pgs, hgs) in EXPECTED_THETA {
            let expected = [gs, pgs, hgs][k];
            let got = theta.iter().find(|p| p.cell == cell).map(|p| p.theta).unwrap_or(f64::NAN);
            let err = (got - expected).abs();
            worst = worst.max(err);
            if !(err <= 5e-4) {
                problems.push(format!("{ff} θ{cell} = {got:.5}, expected {expected}"));
            }
        }
    }
    Outcome::new(
        problems,
        format!("24 expected cells x 3 models, max abs error {worst:.2e}"),
    )
}

// 3. Within-orbit discrepancies for the (1,1,3)/(1,3,1) pair.
fn criterion_3() -> Outcome {
    let table = anes();
    let a = Cell::new(vec![1, 1, 3]);
    let b = Cell::new(vec![1, 3, 1]);
    let mut problems = Vec::new();
    let mut shown = Vec::new();
    for (ff, expected) in [(KL, 8.27), (PEARSON, 0.71), (HELLINGER, -1.88)] {
        let got = fit_model(&table, &ModelSpec::asymmetry(AsymmetryFamily::Gs, ff))
            .and_then(|fit| pair_discrepancy(&fit, &a, &b))
            .map(|d| match ff {
                FFunction::KullbackLeibler => d.ratio,
                FFunction::Pearson => d.difference,
                _ => d.inverse_root_difference,
            });
        match got {
            Ok(v) => {
                shown.push(format!("{ff}={v:.4}"));
                if (v - expected).abs() > 0.005 {
                    problems.push(format!("{ff} measure {v:.4}, expected {expected}"));
                }
            }
            Err(e) => problems.push(format!("{ff}: {e}")),
        }
    }
    Outcome::new(problems, shown.join(" "))
}

/// Reference rejection rates in model order S, LS, ELS, GS, PLS, PELS, PGS, HLS, HELS,
/// HGS; `1.0` marks a rate reported as "1".
const EXPECTED_RATES: [[f64; 10]; 8] = [
    [0.0479, 0.0482, 0.0473, 0.0495, 0.0482, 0.0476, 0.0492, 0.0483, 0.0475, 0.0492],
    [1.0, 1.0, 0.0549, 0.0504, 1.0, 0.0558, 0.0522, 1.0, 0.0555, 0.0506],
    [1.0, 1.0, 1.0, 0.1186, 1.0, 1.0, 0.1488, 1.0, 1.0, 0.1247],
    [1.0, 1.0, 1.0, 0.1432, 1.0, 1.0, 0.1564, 1.0, 1.0, 0.1471],
    [1.0, 0.0786, 0.0799, 0.0796, 0.093, 0.0932, 0.0792, 0.0804, 0.0803, 0.0791],
    [1.0, 1.0, 0.0804, 0.0746, 1.0, 0.1297, 0.1011, 1.0, 0.0798, 0.0769],
    [1.0, 1.0, 1.0, 0.1751, 1.0, 1.0, 0.4338, 1.0, 1.0, 0.1784],
    [1.0, 1.0, 1.0, 0.2068, 1.0, 1.0, 0.3567, 1.0, 1.0, 0.2054],
];

fn in_band_99(rate: f64, p0: f64, n: usize) -> bool {
    (rate - p0).abs() <= 2.5758 * (p0 * (1.0 - p0) / n as f64).sqrt()
}

// 4. Desk-scale power study.
fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut reports: Vec<PowerReport> = Vec::new();
    for row in 1..=8 {
        let config: SimConfig = read_json(&data(&format!("scenario{row}.json"))).expect("scenario");
        match power_study(&config) {
            Ok(r) => reports.push(r),
            Err(e) => {
                problems.push(format!("row {row} failed: {e}"));
                return Outcome::new(problems, String::new());
            }
        }
    }
    println!("    power study at desk scale (ours / expected):");
    for (k, r) in reports.iter().enumerate() {
        let cells: Vec<String> = r
            .rows
            .iter()
            .zip(EXPECTED_RATES[k])
            .map(|(row, p)| format!("{} {:.3}/{}", row.model, row.rate, p))
            .collect();
        println!("      row {}: {}", k + 1, cells.join(" "));
    }

    let rate = |row: usize, col: usize| reports[row].rows[col].rate;
    let valid = |row: usize, col: usize| reports[row].rows[col].valid;
    for (col, label) in [(0, "S"), (3, "GS"), (6, "PGS"), (9, "HGS")] {
        if !in_band_99(rate(0, col), EXPECTED_RATES[0][col], valid(0, col)) {
            problems.push(format!("row 1 {label} rate {:.4} outside 99% band of {}", rate(0, col), EXPECTED_RATES[0][col]));
        }
    }
    for (col, label) in [(3, "GS"), (6, "PGS")] {
        if (rate(2, col) - EXPECTED_RATES[2][col]).abs() > 0.03 {
            problems.push(format!("row 3 {label} rate {:.4} not within 0.03 of {}", rate(2, col), EXPECTED_RATES[2][col]));
        }
    }
    let mut saturated = 0;
    for (row, expected) in EXPECTED_RATES.iter().enumerate() {
        for (col, p) in expected.iter().enumerate() {
            if *p == 1.0 {
                saturated += 1;
                if rate(row, col) < 0.99 {
                    problems.push(format!("row {} {} rate {:.4} < 0.99", row + 1, reports[row].rows[col].model, rate(row, col)));
                }
            }
        }
    }
    let failures: usize = reports.iter().flat_map(|r| r.rows.iter().map(|x| x.failures)).sum();
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(30 * 60) {
        problems.push(format!("runtime {elapsed:.0?} exceeds 30 min"));
    }
    Outcome::new(
        problems,
        format!(
            "8 scenarios x 1000 reps, S row 1 {:.4}, GS row 3 {:.4}, PGS row 3 {:.4}, {saturated} saturated cells, {failures} failed fits, {elapsed:.0?}",
            rate(0, 0),
            rate(2, 3),
            rate(2, 6)
        ),
    )
}

const PROJECTION_FFS: [FFunction; 6] = [
    KL,
    PEARSON,
    HELLINGER,
    FFunction::Power(-0.5),
    FFunction::Power(0.5),
    FFunction::Power(1.0),
];

/// Closed-form Pearson projection: minimise `Σ (π - q)² / 2q` subject to
/// matching orbit sums and `Mπ`, without a sign constraint on `π`.
fn pearson_oracle(target: &ProbTable) -> DVector<f64> {
    let shape = target.shape();
    let orbits = Orbits::new(shape);
    let m = gsf_core::design::moment_matrix(shape);
    let n = shape.n_cells();
    let mut a = DMatrix::zeros(orbits.len() + m.nrows(), n);
    for (o, members) in orbits.iter().enumerate() {
        for &i in members {
            a[(o, i)] = 1.0;
        }
    }
    a.view_mut((orbits.len(), 0), (m.nrows(), n)).copy_from(&m);
    let t = DVector::from_row_slice(target.probs());
    let q = DVector::from_vec(orbits.symmetrize(target.probs()));
    let qd = DMatrix::from_diagonal(&q);
    let nu = gsf_core::linalg::pinv(&(&a * &qd * a.transpose())) * (&a * (&t - &q));
    &q + qd * a.transpose() * nu
}

// 5. Projection constraint matching, GS linear form, and HLP vs closed-form S.
fn criterion_5() -> Outcome {
    let shape = TableShape::equally_spaced(3, 3).unwrap();
    let orbits = Orbits::new(&shape);
    let ds = design_matrix(&shape, AsymmetryFamily::Gs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut problems = Vec::new();
    let (mut worst_match, mut worst_form, mut worst_oracle) = (0.0f64, 0.0f64, 0.0f64);
    let mut redrawn = 0;
    let mut accepted = 0;
    while accepted < 20 {
        let target = random_interior(&shape, &mut rng);
        let oracle = pearson_oracle(&target);
        if oracle.iter().any(|v| *v <= 0.0) {
            // The Pearson projection lies on the boundary; no interior
            // solution exists, and the solver must say so.
            redrawn += 1;
            let spec = ProjectionSpec::new(target.clone(), PEARSON).unwrap();
            if iproject_detailed(&spec).is_ok() {
                problems.push("projection returned a table where none is interior".into());
            }
            continue;
        }
        let trial = accepted;
        accepted += 1;
        for ff in PROJECTION_FFS {
            let spec = ProjectionSpec::new(target.clone(), ff).unwrap();
            let proj = match iproject_detailed(&spec) {
                Ok(p) => p,
                Err(e) => {
                    problems.push(format!("table {trial} {ff}: {e}"));
                    continue;
                }
            };
            let sums_p = orbits.sums(proj.pi.probs());
            let sums_t = orbits.sums(target.probs());
            let orbit_err = sums_p.iter().zip(&sums_t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let moment_err = (&ds.m * (DVector::from_row_slice(proj.pi.probs()) - DVector::from_row_slice(target.probs()))).amax();
            let link = DVector::from_vec(link_vector(&proj.pi, &ff).unwrap());
            let form = (ds.u.transpose() * link).amax();
            worst_match = worst_match.max(orbit_err.max(moment_err));
            worst_form = worst_form.max(form);
            if orbit_err.max(moment_err) >= 1e-9 || form >= 1e-8 {
                problems.push(format!("table {trial} {ff}: match {:.1e}, form {form:.1e}", orbit_err.max(moment_err)));
            }
            if ff == PEARSON {
                let d = (DVector::from_row_slice(proj.pi.probs()) - &oracle).amax();
                worst_oracle = worst_oracle.max(d);
                // The oracle goes through normal equations, so it is the
                // less accurate side of this comparison.
                if d >= 1e-8 {
                    problems.push(format!("table {trial}: Pearson projection differs from the closed form by {d:.1e}"));
                }
            }
        }
    }
    let mut worst_s = 0.0f64;
    let constraint = symmetry_constraint(&shape);
    for trial in 0..50 {
        let counts = random_counts(&shape, 400, &mut rng);
        let closed = fit_symmetry(&counts).unwrap();
        match fit_hlp(&counts, &constraint) {
            Ok(fit) => {
                let d = (fit.g2 - closed.g2).abs();
                worst_s = worst_s.max(d);
                if d >= 1e-6 {
                    problems.push(format!("S table {trial}: |ΔG²| = {d:.2e}"));
                }
            }
            Err(e) => problems.push(format!("S table {trial}: {e}")),
        }
    }
    Outcome::new(
        problems,
        format!(
            "20 tables x 6 f: max constraint error {worst_match:.1e}, max ‖Uᵀ F‖ {worst_form:.1e}, Pearson vs closed form {worst_oracle:.1e} ({redrawn} boundary tables redrawn); 50 S fits: max |ΔG²| {worst_s:.1e}"
        ),
    )
}

// 6. Wald orthogonality identities.
fn criterion_6() -> Outcome {
    let shape = TableShape::equally_spaced(3, 3).unwrap();
    let ds = design_matrix(&shape, AsymmetryFamily::Gs).unwrap();
    let j = orbit_averaging_matrix(&shape);
    let eye = DMatrix::<f64>::identity(27, 27);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut problems = Vec::new();
    let (mut w_pi, mut w_orth, mut w_diag, mut w_fd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let ffs = [KL, PEARSON, HELLINGER, FFunction::Power(0.5)];
    for trial in 0..50 {
        let ff = ffs[trial % ffs.len()];
        let p = random_interior(&shape, &mut rng);
        let (_, h1) = gs_constraint(&ds, &p, &ff).unwrap();
        w_pi = w_pi.max((&h1 * DVector::from_row_slice(p.probs())).amax());

        let s = random_symmetric(&shape, &mut rng);
        let (_, h1s) = gs_constraint(&ds, &s, &ff).unwrap();
        w_orth = w_orth.max((&h1s * sigma(&s) * ds.m.transpose()).amax());
        let lhs = &h1s * DMatrix::from_diagonal(&DVector::from_row_slice(s.probs()));
        let rhs = ds.u.transpose() * (&eye - &j) * ff.curvature();
        w_diag = w_diag.max((lhs - rhs).amax());

        let jac = f_jacobian(&p, &ff).unwrap();
        let base = p.probs().to_vec();
        for col in 0..27 {
            let h = 1e-6 * base[col];
            let mut up = base.clone();
            let mut down = base.clone();
            up[col] += h;
            down[col] -= h;
            let fu = link_vector(&ProbTable::from_weights(shape.clone(), up).unwrap(), &ff).unwrap();
            let fd = link_vector(&ProbTable::from_weights(shape.clone(), down).unwrap(), &ff).unwrap();
            // The link is homogeneous of degree zero, so renormalising the
            // perturbed tables does not change it.
            for row in 0..27 {
                let numeric = (fu[row] - fd[row]) / (2.0 * h);
                let scale = 1.0 + jac[(row, col)].abs();
                w_fd = w_fd.max((numeric - jac[(row, col)]).abs() / scale);
            }
        }
    }
    let mut problems_push = |name: &str, v: f64, tol: f64| {
        if v >= tol {
            problems.push(format!("{name} {v:.2e} >= {tol:.0e}"));
        }
    };
    problems_push("H1 pi", w_pi, 1e-10);
    problems_push("H1 Sigma H2'", w_orth, 1e-10);
    problems_push("H1 diag(pi) - cU'(I-J)", w_diag, 1e-10);
    problems_push("finite differences", w_fd, 1e-6);
    Outcome::new(
        problems,
        format!("50 tables: |H₁π| {w_pi:.1e}, |H₁ΣH₂ᵀ| {w_orth:.1e}, diag identity {w_diag:.1e}, Jacobian vs FD {w_fd:.1e}"),
    )
}

fn df_formula(family: ModelFamily, r: usize, t: usize) -> i64 {
    let n = r.pow(t as u32) as i64;
    let l = binomial(r + t - 1, t) as i64;
    let t = t as i64;
    match family {
        ModelFamily::S => n - l,
        ModelFamily::Gs => n - l - (t * t + 3 * t - 6) / 2,
        ModelFamily::Els => n - l - 2 * t + 2,
        ModelFamily::Ls => n - l - t + 1,
        ModelFamily::Me2 => (t * t + 3 * t - 6) / 2,
        ModelFamily::Me | ModelFamily::Ve => t - 1,
        ModelFamily::Ce => (t * t - t - 2) / 2,
    }
}

// 7. df formulas, G² nestedness and Wald basis invariance.
fn criterion_7() -> Outcome {
    let mut problems = Vec::new();
    let mut checked = 0;
    for r in 2..=4 {
        for t in 2..=4 {
            let shape = TableShape::equally_spaced(r, t).unwrap();
            for family in ModelFamily::ALL {
                let expect = df_formula(family, r, t);
                checked += 1;
                match degrees_of_freedom(family, &shape) {
                    Ok(df) if expect > 0 && df as i64 == expect => {}
                    Err(_) if expect <= 0 => {}
                    other => problems.push(format!("df {} r={r} T={t}: {:?}, formula {expect}", family.name(), other.ok())),
                }
            }
        }
    }

    let shape = TableShape::equally_spaced(3, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = |f: ModelFamily, ff: Option<FFunction>| ModelSpec::new(f, ff).unwrap();
    let mut chain = vec![
        (spec(ModelFamily::S, None), spec(ModelFamily::Me2, None)),
        (spec(ModelFamily::Me2, None), spec(ModelFamily::Me, None)),
        (spec(ModelFamily::Me2, None), spec(ModelFamily::Ve, None)),
        (spec(ModelFamily::Me2, None), spec(ModelFamily::Ce, None)),
    ];
    for ff in [KL, PEARSON, HELLINGER] {
        chain.push((spec(ModelFamily::S, None), spec(ModelFamily::Ls, Some(ff))));
        chain.push((spec(ModelFamily::Ls, Some(ff)), spec(ModelFamily::Els, Some(ff))));
        chain.push((spec(ModelFamily::Els, Some(ff)), spec(ModelFamily::Gs, Some(ff))));
    }
    let mut models: Vec<ModelSpec> = Vec::new();
    for (a, b) in &chain {
        for m in [a, b] {
            if !models.contains(m) {
                models.push(*m);
            }
        }
    }
    let fitters: Vec<Fitter> = models.iter().map(|m| Fitter::new(&shape, *m).unwrap()).collect();
    let mut fit_failures = 0;
    let mut worst_violation = 0.0f64;
    for _ in 0..100 {
        let counts = random_counts(&shape, 1000, &mut rng);
        let g2: Vec<Option<f64>> = fitters.iter().map(|f| f.fit(&counts).ok().map(|x| x.g2)).collect();
        for (a, b) in &chain {
            let ia = models.iter().position(|m| m == a).unwrap();
            let ib = models.iter().position(|m| m == b).unwrap();
            match (g2[ia], g2[ib]) {
                (Some(big), Some(small)) => worst_violation = worst_violation.max(small - big),
                _ => fit_failures += 1,
            }
        }
    }
    if worst_violation > 1e-6 {
        problems.push(format!("nestedness violated by {worst_violation:.2e}"));
    }
    if fit_failures > 0 {
        problems.push(format!("{fit_failures} fits failed in the nestedness check"));
    }

    let ds = design_matrix(&shape, AsymmetryFamily::Gs).unwrap();
    let mut worst_basis = 0.0f64;
    for trial in 0..20 {
        let p = random_interior(&shape, &mut rng);
        let ff = PROJECTION_FFS[trial % PROJECTION_FFS.len()];
        let (h, jac) = gs_constraint(&ds, &p, &ff).unwrap();
        let k = h.len();
        let a = DMatrix::from_fn(k, k, |i, j| if i == j { 1.5 } else { 0.0 } + rng.random_range(-0.2..0.2));
        let w0 = wald::wald_statistic(&h, &jac, &p, 1000.0).unwrap();
        let w1 = wald::wald_statistic(&(&a * &h), &(&a * &jac), &p, 1000.0).unwrap();
        worst_basis = worst_basis.max((w0 - w1).abs() / w0.max(1.0));
    }
    if worst_basis >= 1e-8 {
        problems.push(format!("Wald basis change moved W by {worst_basis:.2e}"));
    }
    Outcome::new(
        problems,
        format!(
            "{checked} df cases; {} nested pairs x 100 tables, worst violation {worst_violation:.1e}; basis invariance {worst_basis:.1e}",
            chain.len()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// 8. Asymptotic G² partition under symmetry.
fn criterion_8() -> Outcome {
    let mut config: SimConfig = read_json(&data("scenario1.json")).expect("scenario");
    config.n_obs = 100_000;
    config.seed = 8;
    let shape = config.shape().unwrap();
    let cuts = config.effective_cutpoints();
    let s = Fitter::new(&shape, ModelSpec::symmetry()).unwrap();
    let gs = Fitter::new(&shape, ModelSpec::asymmetry(AsymmetryFamily::Gs, KL)).unwrap();
    let me2 = Fitter::new(&shape, ModelSpec::new(ModelFamily::Me2, None).unwrap()).unwrap();
    let ds = design_matrix(&shape, AsymmetryFamily::Gs).unwrap();
    let gaps: Vec<Option<(f64, f64)>> = (0..200u64)
        .into_par_iter()
        .map(|rep| {
            let table = discretize(&mvn_sample(&config, rep).ok()?, &cuts).ok()?;
            let g_s = s.fit(&table).ok()?.g2;
            let g_gs = gs.fit(&table).ok()?.g2;
            let g_me2 = me2.fit(&table).ok()?.g2;
            let (p, _) = wald::evaluation_point(&table, &KL).ok()?;
            let (w1, w2, w3) = wald::wald_triplet(&ds, &p, &KL, table.n() as f64).ok()?;
            Some(((g_s - g_gs - g_me2).abs() / g_s, (w3.w - w1.w - w2.w).abs() / w3.w))
        })
        .collect();
    let failures = gaps.iter().filter(|g| g.is_none()).count();
    let ok: Vec<(f64, f64)> = gaps.into_iter().flatten().collect();
    let g2_gap = median(ok.iter().map(|g| g.0).collect());
    let w_gap = median(ok.iter().map(|g| g.1).collect());
    let mut problems = Vec::new();
    if !(g2_gap < 0.05) {
        problems.push(format!("median G² gap {g2_gap:.4} >= 0.05"));
    }
    if failures > 0 {
        problems.push(format!("{failures} replicates failed"));
    }
    Outcome::new(
        problems,
        format!("200 reps at n = 1e5: median relative G² gap {g2_gap:.4} (Wald gap {w_gap:.4})"),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let strict = args.iter().any(|a| a == "--strict");
    let selected: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("ANES G², df and p-values", criterion_1),
        ("ANES potential parameters", criterion_2),
        ("within-orbit discrepancy measures", criterion_3),
        ("power study at desk scale", criterion_4),
        ("projection and HLP oracles", criterion_5),
        ("Wald orthogonality identities", criterion_6),
        ("structural invariants", criterion_7),
        ("asymptotic G² partition", criterion_8),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !selected.is_empty() && !selected.contains(&(k + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let out = run();
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} criterion {} ({name}): {} [{:.1?}]",
            if out.pass { "PASS" } else { "FAIL" },
            k + 1,
            out.detail,
            start.elapsed()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
