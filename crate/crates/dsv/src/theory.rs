//! Numerical certificates for the bounds relating the surrogate losses to
//! their labeled counterparts.
//!
//! Nothing here is assumed: σ and ε are measured from data, each bound is
//! evaluated on concrete instances, and counterexamples are reported rather
//! than filtered out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DsvError, Result};
use crate::geometry::{check_dims, euclid, population_std, projected_norm, set_distance, EmbeddingSet};
use crate::loss::{discordance, l_dis_hat, l_sep_hat, separability};

pub const IDENTITY_TOL: f64 = 1e-9;
pub const BOUND_SLACK: f64 = 1e-9;

/// Train-set spread and the excess distance of test normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionStats {
    pub sigma: f64,
    pub epsilon: f64,
    pub satisfied: bool,
}

pub fn assumption_stats(trn: &EmbeddingSet, test_n: &EmbeddingSet) -> Result<AssumptionStats> {
    let sigma = set_distance(trn, trn)?;
    let epsilon = set_distance(trn, test_n)? - sigma;
    Ok(AssumptionStats {
        sigma,
        epsilon,
        satisfied: epsilon < sigma,
    })
}

/// Splits a test set by binary labels into (normals, anomalies).
pub fn split_by_labels(test: &EmbeddingSet, labels: &[bool]) -> Result<(Option<EmbeddingSet>, Option<EmbeddingSet>)> {
    if labels.len() != test.len() {
        return Err(DsvError::Precondition(format!(
            "{} labels for {} test vectors",
            labels.len(),
            test.len()
        )));
    }
    let normals = test.filter_rows(|i| !labels[i]).ok();
    let anomalies = test.filter_rows(|i| labels[i]).ok();
    Ok((normals, anomalies))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaOneReport {
    pub c: [f64; 4],
    pub h_d: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub base: f64,
    pub lower: f64,
    pub upper: f64,
    pub value: f64,
    pub holds: bool,
}

impl LemmaOneReport {
    /// Amount by which the value escapes the sandwich; zero when inside.
    pub fn violation(&self) -> f64 {
        (self.lower - self.value).max(self.value - self.upper).max(0.0)
    }

    /// `c2·h_d + c2 + c3`, the linear prediction in the well-separated regime.
    pub fn linear_prediction(&self) -> f64 {
        self.lower
    }
}

/// Size-weighted constants for the four (train|aug) × (normal|anomaly)
/// blocks of `d(trn ∪ aug, test)`.
pub fn size_constants(n_trn: usize, n_aug: usize, n_test_n: usize, n_test_a: usize) -> [f64; 4] {
    let raw = [
        (n_trn * n_test_n) as f64,
        (n_trn * n_test_a) as f64,
        (n_aug * n_test_n) as f64,
        (n_aug * n_test_a) as f64,
    ];
    let total: f64 = raw.iter().sum();
    raw.map(|c| c / total)
}

pub fn lemma1_bounds(
    trn: &EmbeddingSet,
    aug: &EmbeddingSet,
    test: &EmbeddingSet,
    labels: &[bool],
) -> Result<LemmaOneReport> {
    if trn.len() != aug.len() {
        return Err(DsvError::Precondition(format!(
            "train and augmented sets must have equal size ({} vs {})",
            trn.len(),
            aug.len()
        )));
    }
    let (normals, anomalies) = split_by_labels(test, labels)?;
    let test_n = normals.ok_or_else(|| DsvError::Precondition("no test normals".into()))?;
    let test_a = anomalies.ok_or_else(|| DsvError::Precondition("no test anomalies".into()))?;

    let c = size_constants(trn.len(), aug.len(), test_n.len(), test_a.len());
    let stats = assumption_stats(trn, &test_n)?;
    let base = set_distance(trn, aug)?;
    let h_d = discordance(trn, aug, &test_a)?;
    let value = l_dis_hat(trn, aug, test)?;
    let lower = c[1] * h_d + c[1] + c[2];
    let upper = lower + (c[0] + c[2]) * (stats.sigma + stats.epsilon) / base;
    Ok(LemmaOneReport {
        c,
        h_d,
        sigma: stats.sigma,
        epsilon: stats.epsilon,
        base,
        lower,
        upper,
        value,
        holds: lower - BOUND_SLACK <= value && value <= upper + BOUND_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaTwoReport {
    pub gamma: f64,
    pub h_s: f64,
    pub sigma_bar: f64,
    pub lhs: f64,
    /// `√(γ(1−γ))·h_s + √γ·σ̄/‖z_aug − z_trn‖`, the printed closed form.
    pub rhs: f64,
    /// `√(γ(1−γ)·h_s² + γ·σ̄²/‖z_aug − z_trn‖²)`, the variance decomposition
    /// of the same quantity.
    pub rhs_exact: f64,
    pub holds: bool,
    pub holds_exact: bool,
}

/// Compares the separability surrogate with its closed forms for a single
/// train and augmented point, where every test normal equals the train point.
pub fn lemma2_identity(z_trn: &[f64], z_aug: &[f64], test: &EmbeddingSet, labels: &[bool]) -> Result<LemmaTwoReport> {
    check_dims(z_trn.len(), z_aug.len())?;
    check_dims(z_trn.len(), test.dim())?;
    if labels.len() != test.len() {
        return Err(DsvError::Precondition(format!(
            "{} labels for {} test vectors",
            labels.len(),
            test.len()
        )));
    }
    let base = euclid(z_trn, z_aug);
    if base == 0.0 {
        return Err(DsvError::Precondition("augmented point equals the train point".into()));
    }
    for (i, (row, &anomalous)) in test.rows().zip(labels).enumerate() {
        if !anomalous && row != z_trn {
            return Err(DsvError::Precondition(format!(
                "test normal {i} does not coincide with the train point"
            )));
        }
    }
    let trn = EmbeddingSet::from_rows(vec![z_trn.to_vec()])?;
    let aug = EmbeddingSet::from_rows(vec![z_aug.to_vec()])?;
    let lhs = l_sep_hat(&trn, &aug, test)?;

    let n_a = labels.iter().filter(|&&a| a).count();
    let gamma = n_a as f64 / test.len() as f64;
    let (h_s, sigma_bar) = if n_a == 0 {
        (0.0, 0.0)
    } else {
        let test_a = test.filter_rows(|i| labels[i])?;
        let proj: Vec<f64> = test_a
            .rows()
            .map(|c| projected_norm(z_trn, z_aug, c))
            .collect::<Result<_>>()?;
        (separability(&trn, &aug, &test_a)?, population_std(&proj)?)
    };
    let rhs = (gamma * (1.0 - gamma)).sqrt() * h_s + gamma.sqrt() * sigma_bar / base;
    let rhs_exact = (gamma * (1.0 - gamma) * h_s * h_s + gamma * sigma_bar * sigma_bar / (base * base)).sqrt();
    Ok(LemmaTwoReport {
        gamma,
        h_s,
        sigma_bar,
        lhs,
        rhs,
        rhs_exact,
        holds: (lhs - rhs).abs() < IDENTITY_TOL,
        holds_exact: (lhs - rhs_exact).abs() < IDENTITY_TOL,
    })
}

// ---------------------------------------------------------------------------
// Instance generators

/// A labeled instance: train, augmented and test sets plus test labels.
#[derive(Debug, Clone)]
pub struct Instance {
    pub trn: EmbeddingSet,
    pub aug: EmbeddingSet,
    pub test: EmbeddingSet,
    pub labels: Vec<bool>,
}

fn gaussian_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize, center: &[f64], spread: f64) -> EmbeddingSet {
    let data: Vec<f64> = (0..n * dim)
        .map(|k| center[k % dim] + spread * rng.sample::<f64, _>(StandardNormal))
        .collect();
    EmbeddingSet::from_flat(data, dim).expect("finite gaussian draws")
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random instance with `|trn| = |aug|`: train and test normals from nearby
/// Gaussians, augmented points displaced along a random direction, and
/// anomalies scattered around a random point on or off the train-to-aug axis.
pub fn random_lemma1_instance(rng: &mut ChaCha8Rng) -> Instance {
    let dim = rng.random_range(2..=16);
    let n = rng.random_range(1..=32);
    let n_test_n = rng.random_range(1..=32);
    let n_test_a = rng.random_range(1..=32);
    let spread = rng.random_range(0.1..2.0);
    let u = random_direction(rng, dim);
    let w = random_direction(rng, dim);
    let shift = rng.random_range(0.5..20.0);
    let zero = vec![0.0; dim];
    let trn = gaussian_cloud(rng, n, dim, &zero, spread);
    let aug_center: Vec<f64> = u.iter().map(|x| x * shift).collect();
    let aug_spread = spread * rng.random_range(0.2..2.0);
    let aug = gaussian_cloud(rng, n, dim, &aug_center, aug_spread);
    let eps_center: Vec<f64> = w.iter().map(|x| x * spread * rng.random_range(0.0..0.5)).collect();
    let test_n = gaussian_cloud(rng, n_test_n, dim, &eps_center, spread);
    let t = rng.random_range(-0.5..1.5);
    let off = rng.random_range(0.0..5.0);
    let a_center: Vec<f64> = (0..dim).map(|k| u[k] * shift * t + w[k] * off).collect();
    let test_a = gaussian_cloud(rng, n_test_a, dim, &a_center, spread);
    let mut labels = vec![false; n_test_n];
    labels.extend(std::iter::repeat_n(true, n_test_a));
    Instance {
        trn,
        aug,
        test: test_n.concat(&test_a).expect("same dim"),
        labels,
    }
}

/// Instance satisfying the single-point hypotheses: one train point, one
/// augmented point, test normals equal to the train point. When
/// `spread_anomalies` is false all anomalies coincide, so `σ̄ = 0`.
pub fn random_lemma2_instance(rng: &mut ChaCha8Rng, spread_anomalies: bool) -> (Vec<f64>, Vec<f64>, EmbeddingSet, Vec<bool>) {
    let dim = rng.random_range(2..=16);
    let z_trn: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    let u = random_direction(rng, dim);
    let shift = rng.random_range(0.5..10.0);
    let z_aug: Vec<f64> = z_trn.iter().zip(&u).map(|(t, d)| t + d * shift).collect();
    let n_n = rng.random_range(1..=20);
    let n_a = rng.random_range(1..=20);
    let along = rng.random_range(0.0..1.2);
    let a_center: Vec<f64> = z_trn.iter().zip(&u).map(|(t, d)| t + d * shift * along).collect();
    let mut rows: Vec<Vec<f64>> = vec![z_trn.clone(); n_n];
    let spread = if spread_anomalies { rng.random_range(0.1..2.0) } else { 0.0 };
    let anomalies = gaussian_cloud(rng, n_a, dim, &a_center, spread);
    rows.extend(anomalies.to_rows());
    let mut labels = vec![false; n_n];
    labels.extend(std::iter::repeat_n(true, n_a));
    // interleave deterministically so label order is not trivially sorted
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let test = EmbeddingSet::from_rows(order.iter().map(|&i| rows[i].clone()).collect()).expect("finite");
    let labels = order.iter().map(|&i| labels[i]).collect();
    (z_trn, z_aug, test, labels)
}

/// Relative gap `(value − linear)/value` along a family that moves the
/// augmented set and the anomalies away from the train set by each factor,
/// keeping σ and ε fixed.
pub fn corollary_gaps(seed: u64, scales: &[f64]) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 8;
    let u = random_direction(&mut rng, dim);
    let zero = vec![0.0; dim];
    let trn = gaussian_cloud(&mut rng, 16, dim, &zero, 1.0);
    let aug_noise = gaussian_cloud(&mut rng, 16, dim, &zero, 1.0);
    let test_n = gaussian_cloud(&mut rng, 12, dim, &zero, 1.0);
    let a_noise = gaussian_cloud(&mut rng, 12, dim, &zero, 1.0);
    scales
        .iter()
        .map(|&s| {
            let aug = aug_noise.map_rows(|x, y| {
                for k in 0..dim {
                    y[k] = x[k] + s * u[k];
                }
            });
            let test_a = a_noise.map_rows(|x, y| {
                for k in 0..dim {
                    y[k] = x[k] + 0.5 * s * u[k];
                }
            });
            let test = test_n.concat(&test_a)?;
            let mut labels = vec![false; test_n.len()];
            labels.extend(std::iter::repeat_n(true, test_a.len()));
            let r = lemma1_bounds(&trn, &aug, &test, &labels)?;
            Ok((r.value - r.linear_prediction()) / r.value)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Certification report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub family: String,
    pub statement: String,
    /// Families that are informational only do not affect the verdict.
    pub certified: bool,
    pub parameters: String,
    pub instances: usize,
    pub passed: usize,
    pub failed: usize,
    pub max_violation: f64,
    /// First failing instances, verbatim.
    pub counterexamples: Vec<String>,
}

impl FamilyRecord {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub instances: usize,
    pub families: Vec<FamilyRecord>,
    pub all_certified_pass: bool,
}

const MAX_COUNTEREXAMPLES: usize = 5;

fn tally(
    family: &str,
    statement: &str,
    certified: bool,
    parameters: String,
    outcomes: Vec<Result<(bool, f64, String)>>,
) -> FamilyRecord {
    let mut rec = FamilyRecord {
        family: family.into(),
        statement: statement.into(),
        certified,
        parameters,
        instances: outcomes.len(),
        passed: 0,
        failed: 0,
        max_violation: 0.0,
        counterexamples: Vec::new(),
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok((true, v, _)) => {
                rec.passed += 1;
                rec.max_violation = rec.max_violation.max(v);
            }
            Ok((false, v, what)) => {
                rec.failed += 1;
                rec.max_violation = rec.max_violation.max(v);
                if rec.counterexamples.len() < MAX_COUNTEREXAMPLES {
                    rec.counterexamples.push(format!("instance {i}: {what}"));
                }
            }
            Err(e) => {
                rec.failed += 1;
                if rec.counterexamples.len() < MAX_COUNTEREXAMPLES {
                    rec.counterexamples.push(format!("instance {i}: error: {e}"));
                }
            }
        }
    }
    rec
}

fn instance_rng(seed: u64, family: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(family << 32 | i as u64);
    rng
}

pub const COROLLARY_SCALES: [f64; 3] = [10.0, 100.0, 1000.0];

/// Runs every certificate family with `instances` random instances each.
pub fn verify(instances: usize, seed: u64) -> VerifyReport {
    let lemma1: Vec<_> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst = random_lemma1_instance(&mut instance_rng(seed, 1, i));
            lemma1_bounds(&inst.trn, &inst.aug, &inst.test, &inst.labels).map(|r| {
                (
                    r.holds,
                    r.violation(),
                    format!("lower {:.17e} value {:.17e} upper {:.17e}", r.lower, r.value, r.upper),
                )
            })
        })
        .collect();

    let corollary = match corollary_gaps(seed, &COROLLARY_SCALES) {
        Ok(gaps) => {
            let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
            let last = *gaps.last().expect("non-empty scales");
            vec![Ok((monotone && last < 0.01, last, format!("relative gaps {gaps:?}")))]
        }
        Err(e) => vec![Err(e)],
    };

    let lemma2 = |family: u64, spread: bool, check: fn(&LemmaTwoReport) -> (bool, f64)| -> Vec<_> {
        (0..instances)
            .into_par_iter()
            .map(|i| {
                let (t, a, test, labels) = random_lemma2_instance(&mut instance_rng(seed, family, i), spread);
                lemma2_identity(&t, &a, &test, &labels).map(|r| {
                    let (ok, v) = check(&r);
                    (
                        ok,
                        v,
                        format!(
                            "gamma {} h_s {:.17e} sigma_bar {:.17e} lhs {:.17e} rhs {:.17e} rhs_exact {:.17e}",
                            r.gamma, r.h_s, r.sigma_bar, r.lhs, r.rhs, r.rhs_exact
                        ),
                    )
                })
            })
            .collect()
    };
    let exact = lemma2(2, true, |r| (r.holds_exact, (r.lhs - r.rhs_exact).abs()));
    let upper = lemma2(3, true, |r| {
        (r.h_s < 0.0 || r.lhs <= r.rhs + IDENTITY_TOL, (r.lhs - r.rhs).max(0.0))
    });
    let degenerate = lemma2(4, false, |r| (r.holds, (r.lhs - r.rhs).abs()));
    let printed = lemma2(5, true, |r| (r.holds, (r.lhs - r.rhs).abs()));

    let worked = {
        let test = EmbeddingSet::from_rows(vec![vec![0.0, 0.0], vec![2.0, 0.0]]).expect("literal");
        vec![lemma2_identity(&[0.0, 0.0], &[2.0, 0.0], &test, &[false, true]).map(|r| {
            (
                r.lhs == 0.5 && r.rhs == 0.5 && r.rhs_exact == 0.5,
                (r.lhs - 0.5).abs().max((r.rhs - 0.5).abs()),
                format!("lhs {} rhs {}", r.lhs, r.rhs),
            )
        })]
    };

    let families = vec![
        tally(
            "lemma1_sandwich",
            "lower <= l_dis_hat <= upper for |trn| = |aug|",
            true,
            format!("sizes 1..=32, dims 2..=16, slack {BOUND_SLACK:e}"),
            lemma1,
        ),
        tally(
            "corollary1_scaling",
            "relative gap to c2*h_d + c2 + c3 shrinks monotonically and ends below 1%",
            true,
            format!("scales {COROLLARY_SCALES:?}, sigma and epsilon fixed"),
            corollary,
        ),
        tally(
            "lemma2_variance_identity",
            "l_sep_hat = sqrt(g(1-g) h_s^2 + g sigma_bar^2 / |z_aug - z_trn|^2)",
            true,
            format!("single train/aug point, normals at the train point, tol {IDENTITY_TOL:e}"),
            exact,
        ),
        tally(
            "lemma2_closed_form_upper_bound",
            "l_sep_hat <= sqrt(g(1-g)) h_s + sqrt(g) sigma_bar / |z_aug - z_trn| when h_s >= 0",
            true,
            format!("single train/aug point, tol {IDENTITY_TOL:e}"),
            upper,
        ),
        tally(
            "lemma2_closed_form_coincident_anomalies",
            "closed form is exact when all anomalies coincide (sigma_bar = 0)",
            true,
            format!("single train/aug point, tol {IDENTITY_TOL:e}"),
            degenerate,
        ),
        tally(
            "lemma2_worked_example",
            "z_trn=(0,0), z_aug=(2,0), test={(0,0) normal,(2,0) anomaly} gives 0.5 on both sides",
            true,
            "gamma 0.5, h_s 1, sigma_bar 0".into(),
            worked,
        ),
        tally(
            "lemma2_closed_form_equality",
            "closed form equals l_sep_hat on general instances (informational; fails when sigma_bar > 0 and 0 < g < 1)",
            false,
            format!("single train/aug point, tol {IDENTITY_TOL:e}"),
            printed,
        ),
    ];
    let all_certified_pass = families.iter().filter(|f| f.certified).all(FamilyRecord::ok);
    VerifyReport {
        seed,
        instances,
        families,
        all_certified_pass,
    }
}
